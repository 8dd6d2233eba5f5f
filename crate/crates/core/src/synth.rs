//! Deterministic phantom generators for tests and the `synth` subcommand.
//!
//! Everything here is seeded; the same arguments always produce the same
//! pixels, which is what makes the end-to-end byte-identity checks possible.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{ClassMask, ClassTag};
use crate::features::{Dataset, Label, LabelMask, PixelSample};
use crate::image::{FatImage, ImageError, ScanFormat, ScanManifest, ScanVolume, FAT_HU_LO};
use crate::pnm;
use crate::registration::{build_atlas, Atlas};

/// A 24x16 retrosternal-like template: a bright arortic arc over a faint
/// speckled base, all values inside the fat-windowed range.
pub fn atlas_pattern(seed: u64) -> Atlas {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (24usize, 16usize);
    let mut gray = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            // arch: bright along a parabola through the upper half
            let arch = (x as f64 - w as f64 / 2.0).powi(2) / w as f64;
            gray[y * w + x] = if (y as f64) < 4.0 + arch {
                rng.gen_range(150..=171)
            } else if rng.gen_bool(0.5) {
                rng.gen_range(1..=40)
            } else {
                0
            };
        }
    }
    build_atlas(&[FatImage::new(w, h, gray, 0.35)], 0.2).expect("static crop")
}

/// Pastes a template verbatim (zeros included).
pub fn plant(scene: &mut FatImage, template: &FatImage, x0: usize, y0: usize) {
    assert!(x0 + template.width <= scene.width && y0 + template.height <= scene.height);
    for i in 0..template.height {
        for j in 0..template.width {
            scene.set(x0 + j, y0 + i, template.get(j, i));
        }
    }
}

/// A black scene with the template planted at (x0, y0) and salt noise (gray
/// 171) sprinkled over the given fraction of the pixels outside the
/// template box.
pub fn planted_scene(
    width: usize,
    height: usize,
    template: &FatImage,
    x0: usize,
    y0: usize,
    salt_fraction: f64,
    seed: u64,
) -> FatImage {
    let mut scene = FatImage::filled(width, height, 0, 0.35);
    plant(&mut scene, template, x0, y0);
    if salt_fraction > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for y in 0..height {
            for x in 0..width {
                let inside = x >= x0 && x < x0 + template.width && y >= y0 && y < y0 + template.height;
                if !inside && rng.gen_bool(salt_fraction) {
                    scene.set(x, y, 171);
                }
            }
        }
    }
    scene
}

/// Paints a flat fat band: `half_width` to each side of the center column,
/// from `center.1 + top_offset` down for `depth` rows.
pub fn add_band(img: &mut FatImage, center: (i64, i64), half_width: i64, top_offset: i64, depth: i64) {
    for y in center.1 + top_offset..center.1 + top_offset + depth {
        for x in center.0 - half_width..=center.0 + half_width {
            if x >= 0 && x < img.width as i64 && y >= 0 && y < img.height as i64 {
                img.set(x as usize, y as usize, 60);
            }
        }
    }
}

/// Geometry of the two-texture ring phantom: a smooth inner ring labeled
/// epicardial and a striped outer ring labeled mediastinal, separated by
/// background.
#[derive(Debug, Clone, Copy)]
pub struct RingScanConfig {
    pub width: usize,
    pub height: usize,
    pub slices: usize,
    pub center: (f64, f64),
    /// Per-scan uniform jitter of the ring center, in pixels.
    pub jitter: f64,
    /// Inner ring radii [min, max).
    pub inner: (f64, f64),
    /// Outer ring radii [min, max).
    pub outer: (f64, f64),
    pub pixel_spacing: f64,
    pub slice_spacing: f64,
}

impl Default for RingScanConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 96,
            slices: 20,
            center: (48.0, 48.0),
            jitter: 2.0,
            inner: (9.0, 14.0),
            outer: (18.0, 23.0),
            pixel_spacing: 0.35,
            slice_spacing: 3.0,
        }
    }
}

fn clamp_gray(v: i32) -> u8 {
    v.clamp(1, 171) as u8
}

/// Smooth low-contrast texture for the inner (epicardial) ring. Ring grays
/// stay well below the template arc so the landmark search is never drawn
/// to the rings.
fn epicardial_texture(x: usize, y: usize, noise: i32) -> u8 {
    clamp_gray(75 + ((x + y) & 3) as i32 + noise)
}

/// Striped high-contrast texture for the outer (mediastinal) ring.
fn mediastinal_texture(x: usize, _y: usize, noise: i32) -> u8 {
    clamp_gray(if x % 2 == 0 { 56 } else { 100 } + noise)
}

/// Generates one ring phantom scan with matching ground-truth masks.
pub fn ring_scan(config: &RingScanConfig, patient_id: &str, seed: u64) -> (ScanVolume, Vec<LabelMask>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = config.center.0 + rng.gen_range(-config.jitter..=config.jitter);
    let cy = config.center.1 + rng.gen_range(-config.jitter..=config.jitter);
    let mut slices = Vec::with_capacity(config.slices);
    let mut masks = Vec::with_capacity(config.slices);
    for _ in 0..config.slices {
        let mut img = FatImage::filled(config.width, config.height, 0, config.pixel_spacing);
        let mut mask = LabelMask::new(config.width, config.height);
        for y in 0..config.height {
            for x in 0..config.width {
                let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let noise = rng.gen_range(-2..=2);
                if r >= config.inner.0 && r < config.inner.1 {
                    img.set(x, y, epicardial_texture(x, y, noise));
                    mask.set(x, y, Label::Epicardial);
                } else if r >= config.outer.0 && r < config.outer.1 {
                    img.set(x, y, mediastinal_texture(x, y, noise));
                    mask.set(x, y, Label::Mediastinal);
                }
            }
        }
        slices.push(img);
        masks.push(mask);
    }
    let scan = ScanVolume::new(slices, config.slice_spacing, patient_id.to_string())
        .expect("ring scans are non-empty");
    (scan, masks)
}

/// Rings plus a planted retrosternal template with a confirmable fat band
/// under it, on a 128x128 grid so the landmark search and confirmation run
/// with their scaled parameters.
fn composed_scan(
    patient_id: &str,
    seed: u64,
    atlas: &Atlas,
    ring_center: (f64, f64),
    template_pos: (usize, usize),
    band_center: (i64, i64),
    slices: usize,
) -> (ScanVolume, Vec<LabelMask>) {
    let config = RingScanConfig {
        width: 128,
        height: 128,
        slices,
        center: ring_center,
        jitter: 1.0,
        ..RingScanConfig::default()
    };
    let (mut scan, masks) = ring_scan(&config, patient_id, seed);
    for slice in &mut scan.slices {
        plant(slice, &atlas.image, template_pos.0, template_pos.1);
        // the band overlaps the confirmation area and spans about half the
        // image width
        add_band(slice, band_center, 30, 1, 17);
    }
    (scan, masks)
}

/// The end-to-end phantom scan before registration: the landmark center
/// sits at (64, 28), ten rows above the default anchor.
pub fn pipeline_scan(patient_id: &str, seed: u64) -> (ScanVolume, Vec<LabelMask>, Atlas) {
    let atlas = atlas_pattern(seed ^ 0xa71a5);
    let (scan, masks) = composed_scan(patient_id, seed, &atlas, (64.0, 84.0), (52, 20), (64, 28), 20);
    (scan, masks, atlas)
}

/// A training companion to [`pipeline_scan`], laid out where the scan
/// content lands after registration to the default anchor.
pub fn pipeline_training_scan(
    patient_id: &str,
    seed: u64,
    atlas: &Atlas,
    slices: usize,
) -> (ScanVolume, Vec<LabelMask>) {
    composed_scan(patient_id, seed, atlas, (64.0, 94.0), (52, 30), (64, 38), slices)
}

/// Writes everything the `pipeline` command needs: the unregistered scan,
/// the atlas, three forests trained on registered-geometry phantoms, and a
/// ready-to-run config.
pub fn write_pipeline_fixture(out: &Path, seed: u64) -> Result<PathBuf, crate::pipeline::PipelineError> {
    use crate::classifier::{save_model, ClassTag, ForestConfig};
    use crate::features::{build_dataset, FeatureSet, NeighborhoodSpec};
    use crate::pipeline::{save_atlas, PipelineConfig, RegisterOptions, SegmentOptions};

    let (scan, _, atlas) = pipeline_scan("pipeline-phantom", seed);
    let manifest = write_scan_hu16(&scan, &out.join("scan"))?;
    let atlas_path = out.join("atlas.pgm");
    save_atlas(&atlas, &atlas_path)?;

    // training data at the post-registration geometry
    let mut dataset = crate::features::Dataset::default();
    for i in 0..2u64 {
        let (tscan, tmasks) =
            pipeline_training_scan(&format!("train{i}"), seed + 100 + i, &atlas, 8);
        let part = build_dataset(
            &tscan,
            &tmasks,
            NeighborhoodSpec::default(),
            FeatureSet::Selected,
        )?;
        dataset.feature_names = part.feature_names;
        dataset.samples.extend(part.samples);
        dataset.provenance.extend(part.provenance);
    }
    let models_dir = out.join("models");
    std::fs::create_dir_all(&models_dir).map_err(|source| crate::pipeline::PipelineError::Io {
        path: models_dir.display().to_string(),
        source,
    })?;
    let config = ForestConfig { n_trees: 5, seed: seed + 500, ..ForestConfig::default() };
    for class in ClassTag::ALL {
        let forest = crate::classifier::train_forest(&dataset, class, &config)?;
        save_model(&forest, &models_dir.join(format!("{}.json", class.as_str())))?;
    }

    let config = PipelineConfig {
        manifest,
        atlas: atlas_path,
        models_dir,
        out_dir: out.join("run"),
        register: RegisterOptions::default(),
        segment: SegmentOptions::default(),
    };
    let config_path = out.join("config.json");
    let json = serde_json::to_string_pretty(&config).expect("config serializes");
    pnm::write_atomic(&config_path, json.as_bytes())?;
    Ok(config_path)
}

/// Writes a scan as 16-bit HU slices plus a manifest, reversing the fat
/// windowing (gray g maps back to HU lo + g - 1, background to soft-tissue
/// HU) with the standard slope/intercept.
pub fn write_scan_hu16(scan: &ScanVolume, dir: &Path) -> Result<PathBuf, ImageError> {
    std::fs::create_dir_all(dir).map_err(|source| ImageError::ManifestIo {
        path: dir.display().to_string(),
        source,
    })?;
    let mut names = Vec::with_capacity(scan.slices.len());
    for (z, slice) in scan.slices.iter().enumerate() {
        let name = format!("slice_{z:04}.pgm");
        let stored: Vec<u16> = slice
            .gray
            .iter()
            .map(|&g| {
                let hu = if g == 0 { 50 } else { FAT_HU_LO + g as i32 - 1 };
                (hu + 1024) as u16
            })
            .collect();
        pnm::write_pgm16(&dir.join(&name), slice.width, slice.height, &stored)?;
        names.push(name);
    }
    let manifest = ScanManifest {
        pixel_spacing_mm: scan.pixel_spacing(),
        slice_spacing_mm: scan.slice_spacing,
        rescale_slope: 1.0,
        rescale_intercept: -1024.0,
        slices: names,
        patient_id: scan.patient_id.clone(),
        format: ScanFormat::Hu16,
    };
    let path = dir.join("scan.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    pnm::write_atomic(&path, json.as_bytes())?;
    Ok(path)
}

/// Writes ground-truth masks as mask_%04d.ppm files.
pub fn write_masks(masks: &[LabelMask], dir: &Path) -> Result<(), crate::features::FeatureError> {
    std::fs::create_dir_all(dir).map_err(|source| crate::features::FeatureError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for (z, mask) in masks.iter().enumerate() {
        mask.write_ppm(&dir.join(format!("mask_{z:04}.ppm")))?;
    }
    Ok(())
}

/// Two Gaussian blobs `separation` apart (in units of their unit sigma),
/// balanced labels, for classifier benchmarks.
pub fn gaussian_blobs(n: usize, separation: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let shift = if positive { separation } else { 0.0 };
            let x: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) + shift;
            let y: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
            PixelSample { features: vec![x, y], labels: [positive, false, false] }
        })
        .collect();
    Dataset {
        feature_names: vec!["f0".into(), "f1".into()],
        samples,
        provenance: Vec::new(),
    }
}

/// Per-slice masks with exactly `disc_pixels` set pixels: a constant-area
/// cylinder whose volume is analytic.
pub fn cylinder_masks(
    n_slices: usize,
    width: usize,
    height: usize,
    disc_pixels: usize,
) -> Vec<ClassMask> {
    assert!(disc_pixels <= width * height);
    let mut mask = ClassMask::new(width, height, ClassTag::Epicardial);
    for i in 0..disc_pixels {
        mask.bits[i] = true;
    }
    vec![mask; n_slices]
}
