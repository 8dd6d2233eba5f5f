//! Pixel classification of a slice and mask post-processing.

use rayon::prelude::*;

use crate::features::{schema_hash, FeatureExtractor, FeatureSet, NeighborhoodSpec};
use crate::image::FatImage;

use super::{ClassTag, ClassifierError, Forest};

/// Boolean segmentation grid aligned to a fat image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub class: ClassTag,
}

impl ClassMask {
    pub fn new(width: usize, height: usize, class: ClassTag) -> Self {
        Self { width, height, bits: vec![false; width * height], class }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Pericardium priority rule: a pixel already classified epicardial or
/// mediastinal keeps its color; a pericardium-only pixel is assigned to
/// both fat classes (painted yellow).
pub fn merge_priority(epi: bool, med: bool, peri: bool) -> (bool, bool) {
    if epi || med {
        (epi, med)
    } else {
        (peri, peri)
    }
}

/// Per-class vote fractions for every pixel (0 on background).
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePlanes {
    pub epicardial: Vec<f64>,
    pub mediastinal: Vec<f64>,
    pub pericardium: Vec<f64>,
}

/// The merged two-mask outcome of classifying one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub epicardial: ClassMask,
    pub mediastinal: ClassMask,
    pub scores: ScorePlanes,
}

/// The three one-vs-rest forests, checked to share one feature schema.
#[derive(Debug, Clone)]
pub struct ForestTrio {
    pub epicardial: Forest,
    pub mediastinal: Forest,
    pub pericardium: Forest,
}

impl ForestTrio {
    pub fn new(
        epicardial: Forest,
        mediastinal: Forest,
        pericardium: Forest,
    ) -> Result<Self, ClassifierError> {
        let trio = Self { epicardial, mediastinal, pericardium };
        let reference = &trio.epicardial.schema_hash;
        for forest in [&trio.mediastinal, &trio.pericardium] {
            if &forest.schema_hash != reference {
                return Err(ClassifierError::SchemaMismatch {
                    model: forest.schema_hash.clone(),
                    extractor: reference.clone(),
                });
            }
        }
        Ok(trio)
    }

    /// Rejects forests trained on a different feature layout.
    pub fn check_schema(&self, feature_names: &[String]) -> Result<(), ClassifierError> {
        let extractor = schema_hash(feature_names);
        if self.epicardial.schema_hash != extractor {
            return Err(ClassifierError::SchemaMismatch {
                model: self.epicardial.schema_hash.clone(),
                extractor,
            });
        }
        Ok(())
    }
}

/// Classifies every fat pixel of a slice: the two fat forests vote, then
/// the pericardium forest, and the three outcomes merge under the priority
/// rule. Background pixels are untouched.
pub fn segment_slice(
    img: &FatImage,
    z: usize,
    forests: &ForestTrio,
    spec: NeighborhoodSpec,
    set: FeatureSet,
) -> Result<SegmentationResult, ClassifierError> {
    let names: Vec<String> = set.names().iter().map(|s| s.to_string()).collect();
    forests.check_schema(&names)?;

    let (w, h) = (img.width, img.height);
    let mut result = SegmentationResult {
        epicardial: ClassMask::new(w, h, ClassTag::Epicardial),
        mediastinal: ClassMask::new(w, h, ClassTag::Mediastinal),
        scores: ScorePlanes {
            epicardial: vec![0.0; w * h],
            mediastinal: vec![0.0; w * h],
            pericardium: vec![0.0; w * h],
        },
    };
    if !img.gray.iter().any(|&g| g != 0) {
        return Ok(result);
    }

    let extractor = FeatureExtractor::new(img, z, spec, set)
        .expect("slice has fat pixels, COG is defined");
    let rows: Vec<Vec<(usize, bool, bool, [f64; 3])>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::new();
            for x in 0..w {
                if !img.is_fat(x, y) {
                    continue;
                }
                let features = extractor.row(x, y).expect("fat pixel");
                let scores = [
                    forests.epicardial.score(&features),
                    forests.mediastinal.score(&features),
                    forests.pericardium.score(&features),
                ];
                let (epi, med) =
                    merge_priority(scores[0] >= 0.5, scores[1] >= 0.5, scores[2] >= 0.5);
                row.push((x, epi, med, scores));
            }
            row
        })
        .collect();

    for (y, row) in rows.into_iter().enumerate() {
        for (x, epi, med, scores) in row {
            result.epicardial.set(x, y, epi);
            result.mediastinal.set(x, y, med);
            let idx = y * w + x;
            result.scores.epicardial[idx] = scores[0];
            result.scores.mediastinal[idx] = scores[1];
            result.scores.pericardium[idx] = scores[2];
        }
    }
    Ok(result)
}

/// Morphological dilation with a 3x3 square element, restricted to fat
/// pixels of the companion image so gaps close without leaking into
/// background.
pub fn dilate(mask: &ClassMask, fat: &FatImage, iterations: usize) -> ClassMask {
    assert_eq!(
        (mask.width, mask.height),
        (fat.width, fat.height),
        "mask and image must align"
    );
    let mut current = mask.clone();
    for _ in 0..iterations {
        let mut next = current.clone();
        for y in 0..mask.height {
            for x in 0..mask.width {
                if current.get(x, y) || !fat.is_fat(x, y) {
                    continue;
                }
                let y0 = y.saturating_sub(1);
                let x0 = x.saturating_sub(1);
                let y1 = (y + 1).min(mask.height - 1);
                let x1 = (x + 1).min(mask.width - 1);
                'scan: for ny in y0..=y1 {
                    for nx in x0..=x1 {
                        if current.get(nx, ny) {
                            next.set(x, y, true);
                            break 'scan;
                        }
                    }
                }
            }
        }
        current = next;
    }
    current
}
