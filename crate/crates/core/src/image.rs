//! CT slice representations: HU grids, fat-range windowed images and scans.
//!
//! Gray 0 is the background sentinel everywhere downstream: a pixel is fat
//! if and only if its windowed gray is nonzero.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pnm::{self, PnmError};

/// Default fat attenuation range in Hounsfield Units.
pub const FAT_HU_LO: i32 = -200;
pub const FAT_HU_HI: i32 = -30;
/// Common pixel spacing every scan is rescaled to, in mm/pixel.
pub const STANDARD_SPACING_MM: f64 = 0.35;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error(transparent)]
    Pnm(#[from] PnmError),
    #[error("HU interval [{lo}, {hi}] is invalid: lo must be < hi and hi - lo <= 254")]
    InvalidWindow { lo: i32, hi: i32 },
    #[error("rescale produces a zero-sized image ({0}x{1})")]
    ZeroRescale(usize, usize),
    #[error("pixel spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("manifest {0}: {1}")]
    InvalidManifest(String, String),
    #[error("manifest {path}: cannot read: {source}")]
    ManifestIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {0}: missing slice file {1}")]
    MissingSlice(String, String),
    #[error("slice {0} is {1}x{2} but the scan is {3}x{4}")]
    InconsistentDimensions(String, usize, usize, usize, usize),
    #[error("empty scan")]
    EmptyScan,
}

/// A raw CT slice in signed Hounsfield Units, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HuSlice {
    pub width: usize,
    pub height: usize,
    pub values: Vec<i32>,
    pub pixel_spacing: f64,
}

impl HuSlice {
    pub fn new(width: usize, height: usize, values: Vec<i32>, pixel_spacing: f64) -> Self {
        assert!(width > 0 && height > 0, "empty slice");
        assert_eq!(values.len(), width * height, "pixel count mismatch");
        assert!(pixel_spacing > 0.0, "pixel spacing must be positive");
        Self { width, height, values, pixel_spacing }
    }
}

/// An 8-bit fat-range image. Gray 0 means background; after windowing with
/// the default range the nonzero grays lie in [1, 171].
#[derive(Debug, Clone, PartialEq)]
pub struct FatImage {
    pub width: usize,
    pub height: usize,
    pub gray: Vec<u8>,
    pub pixel_spacing: f64,
}

impl FatImage {
    pub fn new(width: usize, height: usize, gray: Vec<u8>, pixel_spacing: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        assert_eq!(gray.len(), width * height, "pixel count mismatch");
        assert!(pixel_spacing > 0.0, "pixel spacing must be positive");
        Self { width, height, gray, pixel_spacing }
    }

    pub fn filled(width: usize, height: usize, gray: u8, pixel_spacing: f64) -> Self {
        Self::new(width, height, vec![gray; width * height], pixel_spacing)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.gray[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.gray[y * self.width + x] = v;
    }

    /// True when the pixel is fat (nonzero gray).
    #[inline]
    pub fn is_fat(&self, x: usize, y: usize) -> bool {
        self.get(x, y) != 0
    }
}

/// An ordered craniocaudal stack of fat images sharing geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanVolume {
    pub slices: Vec<FatImage>,
    pub slice_spacing: f64,
    pub patient_id: String,
}

impl ScanVolume {
    pub fn new(slices: Vec<FatImage>, slice_spacing: f64, patient_id: String) -> Result<Self, ImageError> {
        if slices.is_empty() {
            return Err(ImageError::EmptyScan);
        }
        if slice_spacing <= 0.0 {
            return Err(ImageError::InvalidSpacing(slice_spacing));
        }
        let (w, h) = (slices[0].width, slices[0].height);
        for (i, s) in slices.iter().enumerate() {
            if s.width != w || s.height != h {
                return Err(ImageError::InconsistentDimensions(
                    format!("index {i}"),
                    s.width,
                    s.height,
                    w,
                    h,
                ));
            }
        }
        Ok(Self { slices, slice_spacing, patient_id })
    }

    pub fn width(&self) -> usize {
        self.slices[0].width
    }

    pub fn height(&self) -> usize {
        self.slices[0].height
    }

    pub fn pixel_spacing(&self) -> f64 {
        self.slices[0].pixel_spacing
    }
}

/// Pixel storage declared by a scan manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScanFormat {
    /// 16-bit PGM of raw stored values; HU = stored * slope + intercept.
    /// Loading windows to the fat range and rescales to the standard spacing.
    #[default]
    Hu16,
    /// 8-bit PGM already fat-windowed and rescaled; loaded verbatim.
    Fat8,
}

/// JSON sidecar describing a scan on disk. Slice paths are relative to the
/// manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanManifest {
    pub pixel_spacing_mm: f64,
    pub slice_spacing_mm: f64,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    pub slices: Vec<String>,
    pub patient_id: String,
    #[serde(default)]
    pub format: ScanFormat,
}

impl ScanManifest {
    pub fn validate(&self, path: &Path) -> Result<(), ImageError> {
        let name = path.display().to_string();
        if self.rescale_slope == 0.0 {
            return Err(ImageError::InvalidManifest(name, "rescale_slope must be nonzero".into()));
        }
        if self.slices.is_empty() {
            return Err(ImageError::InvalidManifest(name, "empty scan".into()));
        }
        if self.pixel_spacing_mm <= 0.0 || self.slice_spacing_mm <= 0.0 {
            return Err(ImageError::InvalidManifest(name, "spacings must be positive".into()));
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ImageError> {
        let text = std::fs::read_to_string(path).map_err(|source| ImageError::ManifestIo {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: ScanManifest = serde_json::from_str(&text).map_err(|e| {
            ImageError::InvalidManifest(path.display().to_string(), e.to_string())
        })?;
        manifest.validate(path)?;
        Ok(manifest)
    }
}

/// Windows a HU slice into the fat range.
///
/// Pixels with HU in `[lo, hi]` map to `hu - lo + 1`, everything else to the
/// background gray 0, so HU differences inside the range are preserved
/// exactly and 0 never collides with an in-range value.
pub fn window_fat(slice: &HuSlice, lo: i32, hi: i32) -> Result<FatImage, ImageError> {
    if lo >= hi || hi - lo > 254 {
        return Err(ImageError::InvalidWindow { lo, hi });
    }
    let gray = slice
        .values
        .iter()
        .map(|&hu| if hu >= lo && hu <= hi { (hu - lo + 1) as u8 } else { 0 })
        .collect();
    Ok(FatImage::new(slice.width, slice.height, gray, slice.pixel_spacing))
}

/// Catmull-Rom cubic kernel (bicubic with a = -0.5).
#[inline]
fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Resamples to the target pixel spacing by bicubic interpolation.
///
/// New dimensions are `round(old * old_spacing / target)`; sample taps are
/// clamped at the image border and results are clamped to [0, 255].
pub fn rescale_to_spacing(img: &FatImage, target: f64) -> Result<FatImage, ImageError> {
    if target <= 0.0 {
        return Err(ImageError::InvalidSpacing(target));
    }
    let ratio = img.pixel_spacing / target;
    let out_w = (img.width as f64 * ratio).round() as usize;
    let out_h = (img.height as f64 * ratio).round() as usize;
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::ZeroRescale(out_w, out_h));
    }
    if out_w == img.width && out_h == img.height && img.pixel_spacing == target {
        return Ok(img.clone());
    }

    let sx_ratio = img.width as f64 / out_w as f64;
    let sy_ratio = img.height as f64 / out_h as f64;
    let mut gray = vec![0u8; out_w * out_h];
    for oy in 0..out_h {
        let sy = (oy as f64 + 0.5) * sy_ratio - 0.5;
        let y0 = sy.floor();
        let wy: Vec<f64> = (-1..=2).map(|k| cubic_weight(sy - (y0 + k as f64))).collect();
        for ox in 0..out_w {
            let sx = (ox as f64 + 0.5) * sx_ratio - 0.5;
            let x0 = sx.floor();
            let mut acc = 0.0;
            for (ky, wy) in wy.iter().enumerate() {
                let yy = (y0 as i64 + ky as i64 - 1).clamp(0, img.height as i64 - 1) as usize;
                let row = &img.gray[yy * img.width..(yy + 1) * img.width];
                for kx in 0..4 {
                    let wx = cubic_weight(sx - (x0 + kx as f64 - 1.0));
                    let xx = (x0 as i64 + kx - 1).clamp(0, img.width as i64 - 1) as usize;
                    acc += wy * wx * row[xx] as f64;
                }
            }
            gray[oy * out_w + ox] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(FatImage::new(out_w, out_h, gray, target))
}

/// Shifts the image by an integer offset; pixels shifted in are background.
pub fn translate(img: &FatImage, dx: i64, dy: i64) -> FatImage {
    let mut out = FatImage::filled(img.width, img.height, 0, img.pixel_spacing);
    for y in 0..img.height {
        let sy = y as i64 - dy;
        if sy < 0 || sy >= img.height as i64 {
            continue;
        }
        for x in 0..img.width {
            let sx = x as i64 - dx;
            if sx >= 0 && sx < img.width as i64 {
                out.set(x, y, img.get(sx as usize, sy as usize));
            }
        }
    }
    out
}

/// Reads an 8-bit fat image from a P5 file.
pub fn read_pgm(path: &Path, pixel_spacing: f64) -> Result<FatImage, ImageError> {
    let (w, h, gray) = pnm::read_pgm8(path)?;
    if pixel_spacing <= 0.0 {
        return Err(ImageError::InvalidSpacing(pixel_spacing));
    }
    Ok(FatImage::new(w, h, gray, pixel_spacing))
}

pub fn write_pgm(img: &FatImage, path: &Path) -> Result<(), ImageError> {
    Ok(pnm::write_pgm8(path, img.width, img.height, &img.gray)?)
}

/// Reads a 16-bit stored slice and applies the manifest's affine transform
/// `hu = stored * slope + intercept`.
pub fn read_hu_pgm(path: &Path, manifest: &ScanManifest) -> Result<HuSlice, ImageError> {
    let (w, h, stored) = pnm::read_pgm16(path)?;
    let values = stored
        .iter()
        .map(|&s| (s as f64 * manifest.rescale_slope + manifest.rescale_intercept).round() as i32)
        .collect();
    Ok(HuSlice::new(w, h, values, manifest.pixel_spacing_mm))
}

/// Loads a scan through its manifest: HU slices are fat-windowed and
/// rescaled to the standard spacing, `fat8` slices are loaded verbatim.
pub fn load_scan(manifest_path: &Path) -> Result<ScanVolume, ImageError> {
    let manifest = ScanManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut slices = Vec::with_capacity(manifest.slices.len());
    for rel in &manifest.slices {
        let path = base.join(rel);
        if !path.is_file() {
            return Err(ImageError::MissingSlice(
                manifest_path.display().to_string(),
                rel.clone(),
            ));
        }
        let slice = match manifest.format {
            ScanFormat::Hu16 => {
                let hu = read_hu_pgm(&path, &manifest)?;
                let windowed = window_fat(&hu, FAT_HU_LO, FAT_HU_HI)?;
                rescale_to_spacing(&windowed, STANDARD_SPACING_MM)?
            }
            ScanFormat::Fat8 => read_pgm(&path, manifest.pixel_spacing_mm)?,
        };
        slices.push(slice);
    }
    ScanVolume::new(slices, manifest.slice_spacing_mm, manifest.patient_id.clone())
}
