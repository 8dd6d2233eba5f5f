//! Labeled datasets: ground-truth masks, row assembly and CSV persistence.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::image::ScanVolume;
use crate::pnm;

use super::{FeatureError, FeatureExtractor, FeatureSet, NeighborhoodSpec};

pub const LABEL_NAMES: [&str; 3] = ["epicardial", "mediastinal", "pericardium"];

/// Ground-truth class of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Label {
    #[default]
    None,
    Epicardial,
    Mediastinal,
    Pericardium,
}

impl Label {
    pub fn booleans(self) -> [bool; 3] {
        match self {
            Label::None => [false, false, false],
            Label::Epicardial => [true, false, false],
            Label::Mediastinal => [false, true, false],
            Label::Pericardium => [false, false, true],
        }
    }
}

/// Per-pixel labels aligned to a fat image. Persisted as P6 with the exact
/// colors red (epicardial), green (mediastinal), blue (pericardium) on black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<Label>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, labels: vec![Label::None; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: Label) {
        self.labels[y * self.width + x] = label;
    }

    pub fn read_ppm(path: &Path) -> Result<Self, FeatureError> {
        let (w, h, rgb) = pnm::read_ppm8(path)?;
        let mut labels = Vec::with_capacity(w * h);
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            let label = match (px[0], px[1], px[2]) {
                (0, 0, 0) => Label::None,
                (255, 0, 0) => Label::Epicardial,
                (0, 255, 0) => Label::Mediastinal,
                (0, 0, 255) => Label::Pericardium,
                (r, g, b) => {
                    return Err(FeatureError::InvalidMaskColor(
                        path.display().to_string(),
                        i % w,
                        i / w,
                        r,
                        g,
                        b,
                    ))
                }
            };
            labels.push(label);
        }
        Ok(Self { width: w, height: h, labels })
    }

    pub fn write_ppm(&self, path: &Path) -> Result<(), FeatureError> {
        let mut rgb = Vec::with_capacity(self.labels.len() * 3);
        for label in &self.labels {
            let px: [u8; 3] = match label {
                Label::None => [0, 0, 0],
                Label::Epicardial => [255, 0, 0],
                Label::Mediastinal => [0, 255, 0],
                Label::Pericardium => [0, 0, 255],
            };
            rgb.extend_from_slice(&px);
        }
        Ok(pnm::write_ppm8(path, self.width, self.height, &rgb)?)
    }
}

/// One dataset row: a feature vector plus the three class booleans.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSample {
    pub features: Vec<f64>,
    pub labels: [bool; 3],
}

/// A rectangular labeled dataset with named feature columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub samples: Vec<PixelSample>,
    /// `patient/slice` identifiers of contributing slices; not persisted in CSV.
    pub provenance: Vec<String>,
}

impl Dataset {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Extracts one row per fat pixel of every slice, labeled from the masks, in
/// deterministic (z, y, x) order.
pub fn build_dataset(
    scan: &ScanVolume,
    masks: &[LabelMask],
    spec: NeighborhoodSpec,
    set: FeatureSet,
) -> Result<Dataset, FeatureError> {
    if masks.len() != scan.slices.len() {
        return Err(FeatureError::MaskCountMismatch(masks.len(), scan.slices.len()));
    }
    for (index, (slice, mask)) in scan.slices.iter().zip(masks).enumerate() {
        if mask.width != slice.width || mask.height != slice.height {
            return Err(FeatureError::MaskDimensionMismatch {
                index,
                mw: mask.width,
                mh: mask.height,
                sw: slice.width,
                sh: slice.height,
            });
        }
    }

    let per_slice: Vec<Result<Vec<PixelSample>, FeatureError>> = scan
        .slices
        .par_iter()
        .zip(masks.par_iter())
        .enumerate()
        .map(|(z, (slice, mask))| {
            let mut rows = Vec::new();
            if !slice.gray.iter().any(|&g| g != 0) {
                // a slice with no fat contributes no rows, but a stray label
                // on it is still a ground-truth defect
                for y in 0..slice.height {
                    for x in 0..slice.width {
                        if mask.get(x, y) != Label::None {
                            return Err(FeatureError::LabelOnBackground { z, x, y });
                        }
                    }
                }
                return Ok(rows);
            }
            let extractor = FeatureExtractor::new(slice, z, spec, set)?;
            for y in 0..slice.height {
                for x in 0..slice.width {
                    if slice.is_fat(x, y) {
                        rows.push(PixelSample {
                            features: extractor.row(x, y)?,
                            labels: mask.get(x, y).booleans(),
                        });
                    } else if mask.get(x, y) != Label::None {
                        return Err(FeatureError::LabelOnBackground { z, x, y });
                    }
                }
            }
            Ok(rows)
        })
        .collect();

    let mut dataset = Dataset {
        feature_names: set.names().iter().map(|s| s.to_string()).collect(),
        samples: Vec::new(),
        provenance: (0..scan.slices.len())
            .map(|z| format!("{}/{}", scan.patient_id, z))
            .collect(),
    };
    for rows in per_slice {
        dataset.samples.extend(rows?);
    }
    Ok(dataset)
}

/// Formats a value with 9 significant digits; integral values print plain so
/// coordinates and grays stay readable. Rounding happens before the integer
/// check so the format is stable under export -> import -> export.
fn format_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    let rounded = format!("{v:.8e}");
    let reparsed: f64 = rounded.parse().expect("formatted float");
    if reparsed == reparsed.trunc() && reparsed.abs() < 1e15 {
        format!("{}", reparsed as i64)
    } else {
        rounded
    }
}

/// Writes the dataset as CSV: feature names plus the three label columns,
/// values at 9 significant digits, labels as 1/0.
pub fn export_csv(dataset: &Dataset, path: &Path) -> Result<(), FeatureError> {
    let io_err = |source| FeatureError::Io { path: path.display().to_string(), source };
    let mut buf = Vec::new();
    let header: Vec<&str> = dataset
        .feature_names
        .iter()
        .map(|s| s.as_str())
        .chain(LABEL_NAMES)
        .collect();
    writeln!(buf, "{}", header.join(",")).map_err(io_err)?;
    for sample in &dataset.samples {
        let mut fields: Vec<String> = sample.features.iter().map(|&v| format_value(v)).collect();
        fields.extend(sample.labels.iter().map(|&b| if b { "1".into() } else { "0".into() }));
        writeln!(buf, "{}", fields.join(",")).map_err(io_err)?;
    }
    crate::pnm::write_atomic(path, &buf)?;
    Ok(())
}

pub fn import_csv(path: &Path) -> Result<Dataset, FeatureError> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path)
        .map_err(|source| FeatureError::Io { path: name.clone(), source })?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| FeatureError::MalformedCsv {
        path: name.clone(),
        line: 1,
        reason: "empty file".into(),
    })?;
    let header = header.map_err(|source| FeatureError::Io { path: name.clone(), source })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < LABEL_NAMES.len() + 1
        || columns[columns.len() - 3..] != LABEL_NAMES
    {
        return Err(FeatureError::MalformedCsv {
            path: name,
            line: 1,
            reason: "header must end with the three label columns".into(),
        });
    }
    let n_features = columns.len() - 3;
    let feature_names: Vec<String> =
        columns[..n_features].iter().map(|s| s.to_string()).collect();

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|source| FeatureError::Io { path: name.clone(), source })?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_features + 3 {
            return Err(FeatureError::ColumnCountMismatch {
                path: name,
                line: idx + 1,
                expected: n_features + 3,
                found: fields.len(),
            });
        }
        let mut features = Vec::with_capacity(n_features);
        for field in &fields[..n_features] {
            let v: f64 = field.parse().map_err(|_| FeatureError::MalformedCsv {
                path: name.clone(),
                line: idx + 1,
                reason: format!("bad number {field:?}"),
            })?;
            features.push(v);
        }
        let mut labels = [false; 3];
        for (slot, field) in labels.iter_mut().zip(&fields[n_features..]) {
            *slot = match *field {
                "1" => true,
                "0" => false,
                other => {
                    return Err(FeatureError::MalformedCsv {
                        path: name,
                        line: idx + 1,
                        reason: format!("bad label {other:?}"),
                    })
                }
            };
        }
        samples.push(PixelSample { features, labels });
    }
    Ok(Dataset { feature_names, samples, provenance: Vec::new() })
}

/// Min-max rescaling of every feature column to [0, 1]; a separate explicit
/// pass, never applied at extraction time. Returns the per-column (min, max)
/// so the same transform can be replayed on unseen vectors. Constant columns
/// are left untouched.
pub fn normalize_min_max(dataset: &Dataset) -> (Dataset, Vec<(f64, f64)>) {
    let k = dataset.n_features();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); k];
    for sample in &dataset.samples {
        for (range, &v) in ranges.iter_mut().zip(&sample.features) {
            range.0 = range.0.min(v);
            range.1 = range.1.max(v);
        }
    }
    if dataset.samples.is_empty() {
        ranges = vec![(0.0, 0.0); k];
    }
    let mut out = dataset.clone();
    for sample in &mut out.samples {
        apply_normalization(&mut sample.features, &ranges);
    }
    (out, ranges)
}

/// Replays a stored min-max transform on one feature row.
pub fn apply_normalization(features: &mut [f64], ranges: &[(f64, f64)]) {
    for (v, &(lo, hi)) in features.iter_mut().zip(ranges) {
        if hi > lo {
            *v = (*v - lo) / (hi - lo);
        }
    }
}
