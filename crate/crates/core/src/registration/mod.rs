//! Atlas-driven registration of the retrosternal area.
//!
//! A small averaged template is slid over a fixed slice, a similarity
//! measure is minimized over every placement, and a heuristic walk over the
//! fat pixels below the candidate position confirms that the match really
//! sits on the retrosternal area. The scan is then translated so the
//! landmark lands on a standard position.

mod confirm;
mod search;
pub mod similarity;

pub use confirm::{confirm_landmark, walk_point, WalkSide};
pub use search::{
    candidate_slices, default_anchor, find_landmark, register_scan, register_scan_on,
    select_registration_slice,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::FatImage;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("empty crop list")]
    EmptyCropList,
    #[error("crop {0} is {1}x{2}, expected {3}x{4}")]
    CropDimensionMismatch(usize, usize, usize, usize, usize),
    #[error("atlas ({0}x{1}) must be strictly smaller than the fixed image ({2}x{3})")]
    AtlasTooLarge(usize, usize, usize, usize),
    #[error("placement ({0}, {1}) puts the atlas outside the fixed image")]
    PlacementOutOfBounds(usize, usize),
    #[error("undefined correlation: window has zero variance")]
    ZeroVariance,
    #[error("no confirmed placement")]
    NoConfirmedPlacement,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

/// Averaged, thresholded retrosternal template.
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    pub image: FatImage,
    /// Normalized gray level below which crop pixels were zeroed.
    pub threshold: f64,
    /// Number of aggregated crops.
    pub source_count: usize,
}

/// Similarity measure used by the landmark search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Md,
    Cc,
    Mi,
    Wmi,
    Hmd,
}

impl Measure {
    /// Measures where larger is better get negated internally so the search
    /// uniformly minimizes.
    pub fn maximizes(self) -> bool {
        matches!(self, Measure::Cc | Measure::Mi | Measure::Wmi)
    }
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" => Ok(Measure::Md),
            "cc" => Ok(Measure::Cc),
            "mi" => Ok(Measure::Mi),
            "wmi" => Ok(Measure::Wmi),
            "hmd" => Ok(Measure::Hmd),
            other => Err(format!("unknown measure {other:?} (expected md, cc, mi, wmi or hmd)")),
        }
    }
}

/// Measure plus its free parameters: `g` is the difference exponent for
/// MD/HMD and the logarithm base for MI/WMI; `t` is the HMD bright/dark
/// threshold on normalized grays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub measure: Measure,
    pub g: f64,
    pub t: f64,
}

impl SimilarityParams {
    /// Defaults per measure: exponent 1 for MD/HMD, log base 256 for MI/WMI
    /// (so a full uniform 8-bit histogram has entropy exactly 1).
    pub fn for_measure(measure: Measure) -> Self {
        let g = match measure {
            Measure::Md | Measure::Hmd => 1.0,
            Measure::Mi | Measure::Wmi => 256.0,
            Measure::Cc => 1.0, // unused
        };
        Self { measure, g, t: 0.2 }
    }

    pub fn validate(&self) -> Result<(), RegistrationError> {
        if self.g <= 0.0 {
            return Err(RegistrationError::InvalidParams(format!("g must be positive, got {}", self.g)));
        }
        if matches!(self.measure, Measure::Mi | Measure::Wmi) && self.g <= 1.0 {
            return Err(RegistrationError::InvalidParams(format!(
                "log base g must be > 1 for MI/WMI, got {}",
                self.g
            )));
        }
        if !(0.0..1.0).contains(&self.t) || self.t <= 0.0 {
            return Err(RegistrationError::InvalidParams(format!("t must be in (0, 1), got {}", self.t)));
        }
        Ok(())
    }
}

/// Parameters of the confirmation walk (Algorithm 1 of the method).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationParams {
    /// Iteration budget c: how many times each point attempts a move.
    pub iterations: usize,
    /// Maximum skip u: the largest move, in pixels, that one step may take
    /// over background.
    pub max_skip: usize,
    /// Minimum final horizontal separation and walked distance, in pixels.
    pub x_min: f64,
    /// Maximum final horizontal separation, in pixels.
    pub x_max: f64,
    /// Size of the search area A centered at the placement center.
    pub area_w: usize,
    pub area_h: usize,
}

impl ConfirmationParams {
    /// The empirically chosen parameters, scaled from the fixed-image size:
    /// c = 0.6W, u = 0.003(W + H), x_min = 0.2W, x_max = 0.55W,
    /// A = (0.13W, 0.04H).
    pub fn for_image(width: usize, height: usize) -> Self {
        let w = width as f64;
        let h = height as f64;
        Self {
            iterations: ((0.6 * w) as usize).max(1),
            max_skip: ((0.003 * (w + h)) as usize).max(1),
            x_min: 0.2 * w,
            x_max: 0.55 * w,
            area_w: ((0.13 * w) as usize).max(1),
            area_h: ((0.04 * h) as usize).max(1),
        }
    }

    pub fn validate(&self) -> Result<(), RegistrationError> {
        if !(self.x_min > 0.0 && self.x_min < self.x_max) {
            return Err(RegistrationError::InvalidParams(format!(
                "need 0 < x_min < x_max, got {} and {}",
                self.x_min, self.x_max
            )));
        }
        if self.iterations == 0 || self.max_skip == 0 || self.area_w == 0 || self.area_h == 0 {
            return Err(RegistrationError::InvalidParams(
                "iterations, max_skip and area must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Rectangle a placed atlas covers in the fixed image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Placement {
    pub fn center(&self) -> (i64, i64) {
        (self.x as i64 + self.width as i64 / 2, self.y as i64 + self.height as i64 / 2)
    }
}

/// Outcome of the landmark search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkResult {
    /// Top-left placement of the atlas in the fixed image.
    pub x: usize,
    pub y: usize,
    /// Similarity value at the placement, in the measure's natural sign.
    pub score: f64,
    pub confirmed: bool,
    /// Slice the landmark was found on; 0 until a scan-level search sets it.
    pub slice_index: usize,
}

/// Averages manually aligned retrosternal crops into the atlas. Each crop is
/// first thresholded: normalized values below `t` are zeroed, values at or
/// above are kept; the per-pixel arithmetic mean is then rounded to 8 bits.
pub fn build_atlas(crops: &[FatImage], t: f64) -> Result<Atlas, RegistrationError> {
    if crops.is_empty() {
        return Err(RegistrationError::EmptyCropList);
    }
    if !(0.0..1.0).contains(&t) || t <= 0.0 {
        return Err(RegistrationError::InvalidParams(format!("threshold must be in (0, 1), got {t}")));
    }
    let (w, h) = (crops[0].width, crops[0].height);
    for (i, crop) in crops.iter().enumerate() {
        if crop.width != w || crop.height != h {
            return Err(RegistrationError::CropDimensionMismatch(i, crop.width, crop.height, w, h));
        }
    }
    let cutoff = t * 255.0;
    let mut sums = vec![0.0f64; w * h];
    for crop in crops {
        for (sum, &v) in sums.iter_mut().zip(&crop.gray) {
            if v as f64 >= cutoff {
                *sum += v as f64;
            }
        }
    }
    let n = crops.len() as f64;
    let gray = sums.iter().map(|s| (s / n).round().clamp(0.0, 255.0) as u8).collect();
    Ok(Atlas {
        image: FatImage::new(w, h, gray, crops[0].pixel_spacing),
        threshold: t,
        source_count: crops.len(),
    })
}
