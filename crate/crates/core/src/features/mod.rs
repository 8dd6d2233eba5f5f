//! Per-pixel feature extraction from registered fat images.
//!
//! Fat pixels get a vector of primary (gray, position), secondary (center of
//! gravity offsets, window mean, CSV) and tertiary (co-occurrence moments,
//! run-length statistics) features. The default 15-entry vector keeps the
//! empirically most valuable set; the full 31-entry set adds the geometric
//! moments, the (1,0) co-occurrence offset and the run-length features.

mod dataset;
mod glcm;
mod rlm;
mod window;

pub use dataset::{
    apply_normalization, build_dataset, export_csv, import_csv, normalize_min_max, Dataset, Label,
    LabelMask, PixelSample, LABEL_NAMES,
};
pub use glcm::{glcm, glcm_moment, moments_direct, GlcmCounts};
pub use rlm::{gray_level_nonuniformity, rlm, run_percentage, RlmDirection, RunLengthCounts};
pub use window::{
    center_of_gravity, csv, csv_weights, geometric_moment, neighborhood_mean, window_at, GrayGrid,
};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::image::FatImage;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("undefined center of gravity: image has no fat pixel")]
    UndefinedCenterOfGravity,
    #[error("empty run set")]
    EmptyRunSet,
    #[error("zero window area")]
    ZeroArea,
    #[error("({0}, {1}) is not a fat pixel")]
    NotFatPixel(usize, usize),
    #[error("window side must be odd and >= 3, got {0}")]
    InvalidWindowSide(usize),
    #[error("beta must be > 1, got {0}")]
    InvalidBeta(f64),
    #[error("mask {index} is {mw}x{mh} but its slice is {sw}x{sh}")]
    MaskDimensionMismatch { index: usize, mw: usize, mh: usize, sw: usize, sh: usize },
    #[error("{0} masks for {1} slices")]
    MaskCountMismatch(usize, usize),
    #[error("slice {z}: label on background pixel ({x}, {y})")]
    LabelOnBackground { z: usize, x: usize, y: usize },
    #[error("mask {0}: pixel ({1}, {2}) has color ({3}, {4}, {5}); expected red, green, blue or black")]
    InvalidMaskColor(String, usize, usize, u8, u8, u8),
    #[error("{path} line {line}: {reason}")]
    MalformedCsv { path: String, line: usize, reason: String },
    #[error("{path} line {line}: {found} columns against a {expected}-column header")]
    ColumnCountMismatch { path: String, line: usize, expected: usize, found: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Pnm(#[from] crate::pnm::PnmError),
}

/// Square Chebyshev neighborhood used by every windowed feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodSpec {
    /// Window side in pixels, odd (side = 2q + 1).
    pub side: usize,
    /// CSV weight constant.
    pub beta: f64,
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        Self { side: 25, beta: 1e7 }
    }
}

impl NeighborhoodSpec {
    pub fn new(side: usize, beta: f64) -> Result<Self, FeatureError> {
        if side % 2 == 0 || side < 3 {
            return Err(FeatureError::InvalidWindowSide(side));
        }
        if beta <= 1.0 {
            return Err(FeatureError::InvalidBeta(beta));
        }
        Ok(Self { side, beta })
    }
}

/// Which feature columns the extractor emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSet {
    /// The empirically selected 15 features.
    #[default]
    Selected,
    /// The initially proposed 31-feature set.
    Full,
}

pub const SELECTED_FEATURE_NAMES: [&str; 15] = [
    "gray", "x", "y", "z", "x_cog", "y_cog", "mean", "csv", "glcm_01_m1", "glcm_01_m2",
    "glcm_01_m3", "glcm_01_m4", "glcm_11_m2", "glcm_11_m3", "glcm_11_m4",
];

pub const FULL_FEATURE_NAMES: [&str; 31] = [
    "gray", "x", "y", "z", "x_cog", "y_cog", "mean", "csv", "gm_01", "gm_10", "gm_11",
    "glcm_01_m1", "glcm_01_m2", "glcm_01_m3", "glcm_01_m4", "glcm_10_m1", "glcm_10_m2",
    "glcm_10_m3", "glcm_10_m4", "glcm_11_m1", "glcm_11_m2", "glcm_11_m3", "glcm_11_m4",
    "rp_0", "rp_45", "rp_90", "rp_135", "gln_0", "gln_45", "gln_90", "gln_135",
];

impl FeatureSet {
    pub fn names(&self) -> &'static [&'static str] {
        match self {
            FeatureSet::Selected => &SELECTED_FEATURE_NAMES,
            FeatureSet::Full => &FULL_FEATURE_NAMES,
        }
    }

    pub fn len(&self) -> usize {
        self.names().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Hash of an ordered feature-name list; persisted with trained models so a
/// model is never applied to a differently laid out vector.
pub fn schema_hash(names: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(names.join(",").as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// The selected per-pixel feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub gray: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub x_cog: f64,
    pub y_cog: f64,
    pub mean: f64,
    pub csv: f64,
    /// Co-occurrence moments at offset (0,1), degrees 1..=4.
    pub glcm_01_m: [f64; 4],
    /// Co-occurrence moments at offset (1,1), degrees 2..=4.
    pub glcm_11_m: [f64; 3],
}

impl FeatureVector {
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(15);
        row.extend([self.gray, self.x, self.y, self.z, self.x_cog, self.y_cog, self.mean, self.csv]);
        row.extend(self.glcm_01_m);
        row.extend(self.glcm_11_m);
        row
    }

    pub fn from_row(row: &[f64]) -> Self {
        assert_eq!(row.len(), 15, "selected feature vector has 15 entries");
        Self {
            gray: row[0],
            x: row[1],
            y: row[2],
            z: row[3],
            x_cog: row[4],
            y_cog: row[5],
            mean: row[6],
            csv: row[7],
            glcm_01_m: [row[8], row[9], row[10], row[11]],
            glcm_11_m: [row[12], row[13], row[14]],
        }
    }
}

/// Extracts feature rows for one slice; the center of gravity is computed
/// once at construction and shared by every pixel.
pub struct FeatureExtractor<'a> {
    img: &'a FatImage,
    z: usize,
    spec: NeighborhoodSpec,
    set: FeatureSet,
    cog: (f64, f64),
    weights: Vec<f64>,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        img: &'a FatImage,
        z: usize,
        spec: NeighborhoodSpec,
        set: FeatureSet,
    ) -> Result<Self, FeatureError> {
        let cog = center_of_gravity(img)?;
        let weights = csv_weights(spec.side / 2, spec.beta);
        Ok(Self { img, z, spec, set, cog, weights })
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.set.names().iter().map(|s| s.to_string()).collect()
    }

    /// The feature row for a fat pixel, laid out per the active feature set.
    pub fn row(&self, px: usize, py: usize) -> Result<Vec<f64>, FeatureError> {
        if !self.img.is_fat(px, py) {
            return Err(FeatureError::NotFatPixel(px, py));
        }
        let grid = window_at(self.img, px, py, self.spec.side);
        let mut row = Vec::with_capacity(self.set.len());
        row.extend([
            self.img.get(px, py) as f64,
            px as f64,
            py as f64,
            self.z as f64,
            px as f64 - self.cog.0,
            py as f64 - self.cog.1,
            neighborhood_mean(&grid),
            window::csv_with_weights(&grid, &self.weights),
        ]);
        let m01 = moments_direct(&grid, 0, 1);
        let m11 = moments_direct(&grid, 1, 1);
        match self.set {
            FeatureSet::Selected => {
                row.extend(m01);
                row.extend(&m11[1..]);
            }
            FeatureSet::Full => {
                row.extend([
                    geometric_moment(&grid, 0, 1),
                    geometric_moment(&grid, 1, 0),
                    geometric_moment(&grid, 1, 1),
                ]);
                row.extend(m01);
                row.extend(moments_direct(&grid, 1, 0));
                row.extend(m11);
                let area = self.spec.side * self.spec.side;
                let runs: Vec<RunLengthCounts> =
                    RlmDirection::ALL.iter().map(|&t| rlm(&grid, t)).collect();
                for r in &runs {
                    row.push(run_percentage(r, area)?);
                }
                for r in &runs {
                    row.push(gray_level_nonuniformity(r)?);
                }
            }
        }
        Ok(row)
    }

    /// The named 15-feature vector; requires the selected feature set.
    pub fn vector(&self, px: usize, py: usize) -> Result<FeatureVector, FeatureError> {
        assert_eq!(self.set, FeatureSet::Selected, "named vector is the selected set");
        Ok(FeatureVector::from_row(&self.row(px, py)?))
    }
}

/// One-off extraction of the selected feature vector for a single pixel.
pub fn extract_features(
    img: &FatImage,
    z: usize,
    px: usize,
    py: usize,
    spec: NeighborhoodSpec,
) -> Result<FeatureVector, FeatureError> {
    FeatureExtractor::new(img, z, spec, FeatureSet::Selected)?.vector(px, py)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::translate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured_image(seed: u64) -> FatImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gray: Vec<u8> = (0..64 * 64).map(|_| rng.gen_range(1..=171)).collect();
        FatImage::new(64, 64, gray, 0.35)
    }

    #[test]
    fn vector_has_fifteen_entries_in_schema_order() {
        let img = textured_image(1);
        let spec = NeighborhoodSpec::default();
        let fv = extract_features(&img, 3, 30, 31, spec).unwrap();
        let row = fv.to_row();
        assert_eq!(row.len(), SELECTED_FEATURE_NAMES.len());
        assert_eq!(row[0], img.get(30, 31) as f64);
        assert_eq!(row[1], 30.0);
        assert_eq!(row[2], 31.0);
        assert_eq!(row[3], 3.0);
    }

    #[test]
    fn full_row_has_thirty_one_entries() {
        let img = textured_image(2);
        let spec = NeighborhoodSpec::new(7, 1e7).unwrap();
        let ex = FeatureExtractor::new(&img, 0, spec, FeatureSet::Full).unwrap();
        assert_eq!(ex.row(20, 20).unwrap().len(), FULL_FEATURE_NAMES.len());
    }

    #[test]
    fn background_pixel_is_rejected() {
        let mut img = textured_image(3);
        img.set(10, 10, 0);
        let err = extract_features(&img, 0, 10, 10, NeighborhoodSpec::default());
        assert!(matches!(err, Err(FeatureError::NotFatPixel(10, 10))));
    }

    #[test]
    fn pixel_at_cog_has_zero_offsets() {
        // uniform image: COG is the geometric center
        let img = FatImage::filled(25, 25, 90, 0.35);
        let fv = extract_features(&img, 0, 12, 12, NeighborhoodSpec::default()).unwrap();
        assert!(fv.x_cog.abs() < 1e-9);
        assert!(fv.y_cog.abs() < 1e-9);
    }

    #[test]
    fn corner_window_counts_out_of_bounds_as_black() {
        let img = FatImage::filled(40, 40, 100, 0.35);
        let spec = NeighborhoodSpec::new(25, 1e7).unwrap();
        let ex = FeatureExtractor::new(&img, 0, spec, FeatureSet::Selected).unwrap();
        let corner = ex.vector(0, 0).unwrap();
        let interior = ex.vector(20, 20).unwrap();
        // at the corner only 13x13 of the 25x25 window is inside
        let expected_mean = 100.0 * (13.0 * 13.0) / 625.0;
        assert!((corner.mean - expected_mean).abs() < 1e-9);
        assert!((interior.mean - 100.0).abs() < 1e-9);
        assert!(corner.csv < interior.csv);
    }

    #[test]
    fn extractor_moments_match_matrix_route() {
        let img = textured_image(4);
        let spec = NeighborhoodSpec::new(9, 1e7).unwrap();
        let ex = FeatureExtractor::new(&img, 0, spec, FeatureSet::Selected).unwrap();
        let fv = ex.vector(30, 30).unwrap();
        let grid = window_at(&img, 30, 30, 9);
        for (i, degree) in (1..=4).enumerate() {
            let reference = glcm_moment(&grid, 0, 1, degree);
            assert!((fv.glcm_01_m[i] - reference).abs() < 1e-9 * reference.abs().max(1.0));
        }
        for (i, degree) in (2..=4).enumerate() {
            let reference = glcm_moment(&grid, 1, 1, degree);
            assert!((fv.glcm_11_m[i] - reference).abs() < 1e-9 * reference.abs().max(1.0));
        }
    }

    #[test]
    fn translation_moves_only_coordinates() {
        // content confined to the interior so the shift drops nothing
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut img = FatImage::filled(64, 64, 0, 0.35);
        for y in 20..44 {
            for x in 20..44 {
                img.set(x, y, rng.gen_range(1..=171));
            }
        }
        let spec = NeighborhoodSpec::new(7, 1e7).unwrap();
        let (dx, dy) = (4i64, -3i64);
        let shifted = translate(&img, dx, dy);
        let a = FeatureExtractor::new(&img, 2, spec, FeatureSet::Selected).unwrap();
        let b = FeatureExtractor::new(&shifted, 2, spec, FeatureSet::Selected).unwrap();
        // stay away from the border so no window or image content clips
        let (px, py) = (30usize, 30usize);
        let fa = a.vector(px, py).unwrap();
        let fb = b
            .vector((px as i64 + dx) as usize, (py as i64 + dy) as usize)
            .unwrap();
        assert_eq!(fb.x - fa.x, dx as f64);
        assert_eq!(fb.y - fa.y, dy as f64);
        // translation shifts the COG along with the pixel, windows are equal
        let close = |u: f64, v: f64, what: &str| {
            assert!((u - v).abs() < 1e-6 * v.abs().max(1.0), "{what}: {u} vs {v}");
        };
        close(fb.x_cog, fa.x_cog, "x_cog");
        close(fb.y_cog, fa.y_cog, "y_cog");
        close(fb.mean, fa.mean, "mean");
        close(fb.csv, fa.csv, "csv");
        for i in 0..4 {
            close(fb.glcm_01_m[i], fa.glcm_01_m[i], "glcm_01");
        }
    }

    #[test]
    fn schema_hash_distinguishes_sets() {
        let sel: Vec<String> = FeatureSet::Selected.names().iter().map(|s| s.to_string()).collect();
        let full: Vec<String> = FeatureSet::Full.names().iter().map(|s| s.to_string()).collect();
        assert_ne!(schema_hash(&sel), schema_hash(&full));
        assert_eq!(schema_hash(&sel).len(), 64);
    }

    #[test]
    fn spec_validation() {
        assert!(NeighborhoodSpec::new(24, 1e7).is_err());
        assert!(NeighborhoodSpec::new(1, 1e7).is_err());
        assert!(NeighborhoodSpec::new(25, 0.5).is_err());
        assert!(NeighborhoodSpec::new(25, 1e7).is_ok());
    }
}
