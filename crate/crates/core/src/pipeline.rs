//! Stage orchestration behind the CLI: every subcommand is a function here,
//! writing plain-file artifacts so any stage can be rerun in isolation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    dilate, evaluate, load_model, save_model, segment_slice, train_forest, ClassMask,
    ClassifierError, ClassTag, EvalMode, EvalReport, Forest, ForestConfig, ForestTrio,
    SegmentationResult,
};
use crate::features::{
    build_dataset, export_csv, import_csv, normalize_min_max, FeatureError, FeatureSet, LabelMask,
    NeighborhoodSpec,
};
use crate::image::{load_scan, read_pgm, write_pgm, FatImage, ImageError, ScanFormat, ScanManifest, ScanVolume};
use crate::pnm::{self, PnmError};
use crate::quantify::{confusion, confusion_all_pixels, ClassReport, QuantifyError, VolumeReport};
use crate::registration::{
    build_atlas, register_scan_on, Atlas, ConfirmationParams, LandmarkResult, Measure,
    RegistrationError, SimilarityParams,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Pnm(#[from] PnmError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Quantify(#[from] QuantifyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    InvalidInput(String),
}

impl PipelineError {
    /// Machine-parsable error code for the single-line CLI report.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Registration(RegistrationError::NoConfirmedPlacement) => {
                "NO_CONFIRMED_PLACEMENT"
            }
            PipelineError::Classifier(ClassifierError::SchemaMismatch { .. }) => "SCHEMA_MISMATCH",
            PipelineError::InvalidInput(_) => "USAGE",
            _ => "DATA",
        }
    }

    /// CLI exit status: 1 usage, 2 data error, 3 no confirmed placement.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "USAGE" => 1,
            "NO_CONFIRMED_PLACEMENT" => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Sorted listing of directory entries with the given extension.
fn sorted_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |e| e == extension))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::InvalidInput(format!(
            "{}: no .{extension} files",
            dir.display()
        )));
    }
    Ok(files)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| PipelineError::InvalidInput(format!("{}: {e}", path.display())))?;
    pnm::write_atomic(path, json.as_bytes())?;
    Ok(())
}

/// Effective parameters of a run, written next to the artifacts. Contains
/// no timestamps so reruns stay byte-identical.
#[derive(Debug, Serialize)]
struct RunLog<'a, T: Serialize> {
    command: &'a str,
    parameters: T,
}

fn write_run_log<T: Serialize>(dir: &Path, command: &str, parameters: T) -> Result<(), PipelineError> {
    write_json(&dir.join("run_log.json"), &RunLog { command, parameters })
}

// ---------------------------------------------------------------------------
// Atlas persistence

#[derive(Debug, Serialize, Deserialize)]
struct AtlasSidecar {
    threshold: f64,
    source_count: usize,
    pixel_spacing_mm: f64,
}

pub fn save_atlas(atlas: &Atlas, path: &Path) -> Result<(), PipelineError> {
    write_pgm(&atlas.image, path)?;
    let sidecar = AtlasSidecar {
        threshold: atlas.threshold,
        source_count: atlas.source_count,
        pixel_spacing_mm: atlas.image.pixel_spacing,
    };
    write_json(&path.with_extension("json"), &sidecar)
}

pub fn load_atlas(path: &Path) -> Result<Atlas, PipelineError> {
    let sidecar_path = path.with_extension("json");
    let text = fs::read_to_string(&sidecar_path).map_err(io_err(&sidecar_path))?;
    let sidecar: AtlasSidecar = serde_json::from_str(&text)
        .map_err(|e| PipelineError::InvalidInput(format!("{}: {e}", sidecar_path.display())))?;
    let image = read_pgm(path, sidecar.pixel_spacing_mm)?;
    Ok(Atlas { image, threshold: sidecar.threshold, source_count: sidecar.source_count })
}

// ---------------------------------------------------------------------------
// Segmentation masks and overlays on disk

/// Writes the merged two-class masks as a colored P6: red epicardial-only,
/// green mediastinal-only, yellow both, black elsewhere.
pub fn write_seg_mask(epi: &ClassMask, med: &ClassMask, path: &Path) -> Result<(), PipelineError> {
    let mut rgb = Vec::with_capacity(epi.bits.len() * 3);
    for (&e, &m) in epi.bits.iter().zip(&med.bits) {
        rgb.extend_from_slice(match (e, m) {
            (true, true) => &[255, 255, 0],
            (true, false) => &[255, 0, 0],
            (false, true) => &[0, 255, 0],
            (false, false) => &[0, 0, 0],
        });
    }
    Ok(pnm::write_ppm8(path, epi.width, epi.height, &rgb)?)
}

/// Reads a colored segmentation mask back into the two class masks.
pub fn read_seg_mask(path: &Path) -> Result<(ClassMask, ClassMask), PipelineError> {
    let (w, h, rgb) = pnm::read_ppm8(path)?;
    let mut epi = ClassMask::new(w, h, ClassTag::Epicardial);
    let mut med = ClassMask::new(w, h, ClassTag::Mediastinal);
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        match (px[0], px[1], px[2]) {
            (0, 0, 0) => {}
            (255, 0, 0) => epi.bits[i] = true,
            (0, 255, 0) => med.bits[i] = true,
            (255, 255, 0) => {
                epi.bits[i] = true;
                med.bits[i] = true;
            }
            (r, g, b) => {
                return Err(PipelineError::InvalidInput(format!(
                    "{}: pixel {i} has color ({r}, {g}, {b}); expected black, red, green or yellow",
                    path.display()
                )))
            }
        }
    }
    Ok((epi, med))
}

/// Writes the presentation overlay: class colors over the slice's grays.
pub fn write_overlay(
    img: &FatImage,
    seg: &SegmentationResult,
    path: &Path,
) -> Result<(), PipelineError> {
    let mut rgb = Vec::with_capacity(img.gray.len() * 3);
    for i in 0..img.gray.len() {
        let px: [u8; 3] = match (seg.epicardial.bits[i], seg.mediastinal.bits[i]) {
            (true, true) => [255, 255, 0],
            (true, false) => [255, 0, 0],
            (false, true) => [0, 255, 0],
            (false, false) => {
                let g = img.gray[i];
                [g, g, g]
            }
        };
        rgb.extend_from_slice(&px);
    }
    Ok(pnm::write_ppm8(path, img.width, img.height, &rgb)?)
}

/// Per-pixel vote scores for the fat pixels of one slice, as CSV.
fn write_scores(img: &FatImage, seg: &SegmentationResult, path: &Path) -> Result<(), PipelineError> {
    let mut buf = String::from("x,y,epicardial,mediastinal,pericardium\n");
    for y in 0..img.height {
        for x in 0..img.width {
            if !img.is_fat(x, y) {
                continue;
            }
            let i = y * img.width + x;
            buf.push_str(&format!(
                "{x},{y},{:.6},{:.6},{:.6}\n",
                seg.scores.epicardial[i], seg.scores.mediastinal[i], seg.scores.pericardium[i]
            ));
        }
    }
    pnm::write_atomic(path, buf.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Stage commands

#[derive(Debug, Serialize)]
struct BuildAtlasLog {
    crops: Vec<String>,
    threshold: f64,
    out: String,
}

/// `build-atlas`: averages every .pgm crop in the directory.
pub fn cmd_build_atlas(crops_dir: &Path, threshold: f64, out: &Path) -> Result<Atlas, PipelineError> {
    let crop_paths = sorted_files(crops_dir, "pgm")?;
    let crops = crop_paths
        .iter()
        .map(|p| read_pgm(p, crate::image::STANDARD_SPACING_MM))
        .collect::<Result<Vec<_>, _>>()?;
    let atlas = build_atlas(&crops, threshold)?;
    save_atlas(&atlas, out)?;
    if let Some(dir) = out.parent() {
        write_run_log(
            dir,
            "build-atlas",
            BuildAtlasLog {
                crops: crop_paths.iter().map(|p| p.display().to_string()).collect(),
                threshold,
                out: out.display().to_string(),
            },
        )?;
    }
    Ok(atlas)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterOptions {
    pub measure: Measure,
    /// Exponent (MD/HMD) or log base (MI/WMI); the measure default if unset.
    pub g: Option<f64>,
    pub hmd_threshold: f64,
    pub anchor_x: Option<i64>,
    pub anchor_y: Option<i64>,
    /// Search only this slice index instead of the retry ladder.
    pub reg_slice: Option<usize>,
    /// Skip the confirmation heuristic.
    pub no_confirm: bool,
    /// Explicit confirmation parameters; derived from the image size if unset.
    pub confirmation: Option<ConfirmationParams>,
}

impl Default for RegisterOptions {
    fn default() -> Self {
        Self {
            measure: Measure::Hmd,
            g: None,
            hmd_threshold: 0.2,
            anchor_x: None,
            anchor_y: None,
            reg_slice: None,
            no_confirm: false,
            confirmation: None,
        }
    }
}

impl RegisterOptions {
    fn similarity(&self) -> SimilarityParams {
        let mut params = SimilarityParams::for_measure(self.measure);
        if let Some(g) = self.g {
            params.g = g;
        }
        params.t = self.hmd_threshold;
        params
    }
}

/// `register`: loads the scan, finds the landmark, translates every slice
/// and writes the registered scan with its landmark record.
pub fn cmd_register(
    manifest_path: &Path,
    atlas_path: &Path,
    out_dir: &Path,
    options: &RegisterOptions,
) -> Result<LandmarkResult, PipelineError> {
    let scan = load_scan(manifest_path)?;
    let atlas = load_atlas(atlas_path)?;
    let (registered, landmark) = register_with_options(&scan, &atlas, options)?;
    ensure_dir(out_dir)?;
    let manifest = write_scan_fat8(&registered, out_dir)?;
    write_json(&out_dir.join("landmark.json"), &landmark)?;
    write_run_log(out_dir, "register", options)?;
    let _ = manifest;
    Ok(landmark)
}

/// The registration call shared by `register` and `pipeline`.
pub fn register_with_options(
    scan: &ScanVolume,
    atlas: &Atlas,
    options: &RegisterOptions,
) -> Result<(ScanVolume, LandmarkResult), PipelineError> {
    let sim = options.similarity();
    let derived = ConfirmationParams::for_image(scan.width(), scan.height());
    let conf = options.confirmation.unwrap_or(derived);
    let conf_ref = (!options.no_confirm).then_some(&conf);
    let anchor = match (options.anchor_x, options.anchor_y) {
        (Some(x), Some(y)) => Some((x, y)),
        (None, None) => None,
        _ => {
            return Err(PipelineError::InvalidInput(
                "anchor-x and anchor-y must be given together".into(),
            ))
        }
    };
    let candidates = match options.reg_slice {
        Some(index) if index < scan.slices.len() => vec![index],
        Some(index) => {
            return Err(PipelineError::InvalidInput(format!(
                "reg-slice {index} out of range for a {}-slice scan",
                scan.slices.len()
            )))
        }
        None => crate::registration::candidate_slices(scan),
    };
    Ok(register_scan_on(scan, atlas, &sim, conf_ref, anchor, &candidates)?)
}

/// Writes a scan as 8-bit fat slices plus a fat8 manifest.
pub fn write_scan_fat8(scan: &ScanVolume, dir: &Path) -> Result<PathBuf, PipelineError> {
    ensure_dir(dir)?;
    let mut names = Vec::with_capacity(scan.slices.len());
    for (z, slice) in scan.slices.iter().enumerate() {
        let name = format!("slice_{z:04}.pgm");
        write_pgm(slice, &dir.join(&name))?;
        names.push(name);
    }
    let manifest = ScanManifest {
        pixel_spacing_mm: scan.pixel_spacing(),
        slice_spacing_mm: scan.slice_spacing,
        rescale_slope: 1.0,
        rescale_intercept: 0.0,
        slices: names,
        patient_id: scan.patient_id.clone(),
        format: ScanFormat::Fat8,
    };
    let path = dir.join("scan.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub window_side: usize,
    pub beta: f64,
    pub full_features: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { window_side: 25, beta: 1e7, full_features: false }
    }
}

impl ExtractOptions {
    pub fn spec(&self) -> Result<NeighborhoodSpec, PipelineError> {
        Ok(NeighborhoodSpec::new(self.window_side, self.beta)?)
    }

    pub fn set(&self) -> FeatureSet {
        if self.full_features {
            FeatureSet::Full
        } else {
            FeatureSet::Selected
        }
    }
}

/// Reads every mask_*.ppm of a ground-truth directory.
pub fn load_masks(dir: &Path) -> Result<Vec<LabelMask>, PipelineError> {
    sorted_files(dir, "ppm")?
        .iter()
        .map(|p| Ok(LabelMask::read_ppm(p)?))
        .collect()
}

/// `extract`: featurizes every fat pixel; labels come from the mask
/// directory when given, otherwise all-false (prediction-time dataset).
pub fn cmd_extract(
    manifest_path: &Path,
    masks_dir: Option<&Path>,
    out_csv: &Path,
    options: &ExtractOptions,
) -> Result<usize, PipelineError> {
    let scan = load_scan(manifest_path)?;
    let masks = match masks_dir {
        Some(dir) => load_masks(dir)?,
        None => scan
            .slices
            .iter()
            .map(|s| LabelMask::new(s.width, s.height))
            .collect(),
    };
    let dataset = build_dataset(&scan, &masks, options.spec()?, options.set())?;
    export_csv(&dataset, out_csv)?;
    if let Some(dir) = out_csv.parent() {
        write_run_log(dir, "extract", options)?;
    }
    Ok(dataset.len())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainOptions {
    pub forest: ForestConfig,
    pub normalize: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { forest: ForestConfig::default(), normalize: false }
    }
}

/// `train`: fits one one-vs-rest forest from a dataset CSV.
pub fn cmd_train(
    dataset_csv: &Path,
    class: ClassTag,
    out_model: &Path,
    options: &TrainOptions,
) -> Result<Forest, PipelineError> {
    let dataset = import_csv(dataset_csv)?;
    let forest = train_forest_with_options(&dataset, class, options)?;
    save_model(&forest, out_model)?;
    if let Some(dir) = out_model.parent() {
        write_run_log(dir, "train", options)?;
    }
    Ok(forest)
}

pub fn train_forest_with_options(
    dataset: &crate::features::Dataset,
    class: ClassTag,
    options: &TrainOptions,
) -> Result<Forest, PipelineError> {
    let forest = if options.normalize {
        let (normalized, ranges) = normalize_min_max(dataset);
        let mut forest = train_forest(&normalized, class, &options.forest)?;
        forest.normalization = Some(ranges);
        forest
    } else {
        train_forest(dataset, class, &options.forest)?
    };
    Ok(forest)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SegmentOptions {
    pub extract: ExtractOptions,
    pub dilate_iters: usize,
    pub write_scores: bool,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { extract: ExtractOptions::default(), dilate_iters: 1, write_scores: true }
    }
}

/// Loads the three per-class models from a directory.
pub fn load_model_trio(models_dir: &Path) -> Result<ForestTrio, PipelineError> {
    let load = |class: ClassTag| -> Result<Forest, PipelineError> {
        let path = models_dir.join(format!("{}.json", class.as_str()));
        Ok(load_model(&path)?)
    };
    Ok(ForestTrio::new(
        load(ClassTag::Epicardial)?,
        load(ClassTag::Mediastinal)?,
        load(ClassTag::Pericardium)?,
    )?)
}

/// `segment`: classifies every slice of a scan, dilates per class, writes
/// colored masks, overlays and vote scores.
pub fn cmd_segment(
    manifest_path: &Path,
    models_dir: &Path,
    out_dir: &Path,
    options: &SegmentOptions,
) -> Result<(), PipelineError> {
    let scan = load_scan(manifest_path)?;
    let trio = load_model_trio(models_dir)?;
    segment_scan_to_dir(&scan, &trio, out_dir, options)?;
    write_run_log(out_dir, "segment", options)?;
    Ok(())
}

/// The segmentation loop shared by `segment` and `pipeline`.
pub fn segment_scan_to_dir(
    scan: &ScanVolume,
    trio: &ForestTrio,
    out_dir: &Path,
    options: &SegmentOptions,
) -> Result<(), PipelineError> {
    ensure_dir(out_dir)?;
    let spec = options.extract.spec()?;
    let set = options.extract.set();
    for (z, slice) in scan.slices.iter().enumerate() {
        let mut seg = segment_slice(slice, z, trio, spec, set)?;
        if options.dilate_iters > 0 {
            seg.epicardial = dilate(&seg.epicardial, slice, options.dilate_iters);
            seg.mediastinal = dilate(&seg.mediastinal, slice, options.dilate_iters);
        }
        write_seg_mask(&seg.epicardial, &seg.mediastinal, &out_dir.join(format!("seg_{z:04}.ppm")))?;
        write_overlay(slice, &seg, &out_dir.join(format!("overlay_{z:04}.ppm")))?;
        if options.write_scores {
            write_scores(slice, &seg, &out_dir.join(format!("scores_{z:04}.csv")))?;
        }
    }
    Ok(())
}

/// `quantify`: reads colored masks and turns them into areas and volumes.
pub fn cmd_quantify(
    masks_dir: &Path,
    manifest_path: &Path,
    out_json: &Path,
) -> Result<VolumeReport, PipelineError> {
    let manifest = ScanManifest::read(manifest_path)?;
    let mut epi_masks = Vec::new();
    let mut med_masks = Vec::new();
    for path in seg_mask_files(masks_dir)? {
        let (epi, med) = read_seg_mask(&path)?;
        epi_masks.push(epi);
        med_masks.push(med);
    }
    // HU scans are rescaled to the standard spacing on load, so areas use it
    let pixel_spacing = match manifest.format {
        ScanFormat::Hu16 => crate::image::STANDARD_SPACING_MM,
        ScanFormat::Fat8 => manifest.pixel_spacing_mm,
    };
    let report =
        VolumeReport::from_masks(&epi_masks, &med_masks, pixel_spacing, manifest.slice_spacing_mm)?;
    write_json(out_json, &report)?;
    Ok(report)
}

fn seg_mask_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let files: Vec<PathBuf> = sorted_files(dir, "ppm")?
        .into_iter()
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map_or(false, |n| n.starts_with("seg_"))
        })
        .collect();
    if files.is_empty() {
        return Err(PipelineError::InvalidInput(format!(
            "{}: no seg_*.ppm masks",
            dir.display()
        )));
    }
    Ok(files)
}

/// Per-class metrics of a mask-level evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskEvaluation {
    pub epicardial: ClassReport,
    pub mediastinal: ClassReport,
    pub mean: ClassReport,
    pub epicardial_dice: f64,
    pub mediastinal_dice: f64,
    /// Domain of the confusion counts: fat pixels of the scan, or every
    /// pixel when no scan manifest was given.
    pub fat_domain: bool,
}

/// `evaluate` (mask mode): compares predicted colored masks against
/// ground-truth label masks. With a manifest the confusion counts run over
/// fat pixels only; without one, over every pixel.
pub fn cmd_evaluate_masks(
    pred_dir: &Path,
    truth_dir: &Path,
    manifest_path: Option<&Path>,
    out_json: &Path,
) -> Result<MaskEvaluation, PipelineError> {
    let pred_files = seg_mask_files(pred_dir)?;
    let truth_files = sorted_files(truth_dir, "ppm")?;
    if pred_files.len() != truth_files.len() {
        return Err(PipelineError::InvalidInput(format!(
            "{} predictions against {} truth masks",
            pred_files.len(),
            truth_files.len()
        )));
    }
    let scan = manifest_path.map(load_scan).transpose()?;
    if let Some(scan) = &scan {
        if scan.slices.len() != pred_files.len() {
            return Err(PipelineError::InvalidInput(format!(
                "{} predictions against a {}-slice scan",
                pred_files.len(),
                scan.slices.len()
            )));
        }
    }

    let mut pooled_epi = crate::quantify::ConfusionMatrix::default();
    let mut pooled_med = crate::quantify::ConfusionMatrix::default();
    let mut dice_epi_masks: (Vec<ClassMask>, Vec<ClassMask>) = (Vec::new(), Vec::new());
    let mut dice_med_masks: (Vec<ClassMask>, Vec<ClassMask>) = (Vec::new(), Vec::new());
    for (index, (pred_path, truth_path)) in pred_files.iter().zip(&truth_files).enumerate() {
        let (pred_epi, pred_med) = read_seg_mask(pred_path)?;
        let truth = LabelMask::read_ppm(truth_path)?;
        let truth_epi = label_to_mask(&truth, ClassTag::Epicardial);
        let truth_med = label_to_mask(&truth, ClassTag::Mediastinal);
        match &scan {
            Some(scan) => {
                let slice = &scan.slices[index];
                pooled_epi.add(&confusion(&pred_epi, &truth_epi, slice)?);
                pooled_med.add(&confusion(&pred_med, &truth_med, slice)?);
            }
            None => {
                pooled_epi.add(&confusion_all_pixels(&pred_epi, &truth_epi)?);
                pooled_med.add(&confusion_all_pixels(&pred_med, &truth_med)?);
            }
        }
        dice_epi_masks.0.push(pred_epi);
        dice_epi_masks.1.push(truth_epi);
        dice_med_masks.0.push(pred_med);
        dice_med_masks.1.push(truth_med);
    }

    let epicardial = ClassReport::from_confusion(&pooled_epi)?;
    let mediastinal = ClassReport::from_confusion(&pooled_med)?;
    let evaluation = MaskEvaluation {
        mean: crate::quantify::mean_class_report(&[epicardial, mediastinal])?,
        epicardial,
        mediastinal,
        epicardial_dice: pooled_dice(&dice_epi_masks.0, &dice_epi_masks.1),
        mediastinal_dice: pooled_dice(&dice_med_masks.0, &dice_med_masks.1),
        fat_domain: scan.is_some(),
    };
    write_json(out_json, &evaluation)?;
    Ok(evaluation)
}

fn label_to_mask(labels: &LabelMask, class: ClassTag) -> ClassMask {
    let target = match class {
        ClassTag::Epicardial => crate::features::Label::Epicardial,
        ClassTag::Mediastinal => crate::features::Label::Mediastinal,
        ClassTag::Pericardium => crate::features::Label::Pericardium,
    };
    let mut mask = ClassMask::new(labels.width, labels.height, class);
    for (bit, &label) in mask.bits.iter_mut().zip(&labels.labels) {
        *bit = label == target;
    }
    mask
}

/// Dice of the stacked masks (per-class, pooled over slices).
pub fn pooled_dice(pred: &[ClassMask], truth: &[ClassMask]) -> f64 {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (p, t) in pred.iter().zip(truth) {
        for (&pb, &tb) in p.bits.iter().zip(&t.bits) {
            match (pb, tb) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
    }
}

/// `evaluate` (dataset mode): the split66 / kfold10 harness on a CSV.
pub fn cmd_evaluate_dataset(
    dataset_csv: &Path,
    class: ClassTag,
    mode: EvalMode,
    options: &TrainOptions,
    out_json: &Path,
) -> Result<EvalReport, PipelineError> {
    let dataset = import_csv(dataset_csv)?;
    let dataset = if options.normalize {
        normalize_min_max(&dataset).0
    } else {
        dataset
    };
    let report = evaluate(&dataset, class, &options.forest, mode)?;
    write_json(out_json, &report)?;
    Ok(report)
}

/// An aligned text table of per-class metrics, percentages like the
/// published layout.
pub fn format_metrics_table(rows: &[(String, ClassReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14}{:>10}{:>10}{:>10}{:>10}{:>10}{:>8}\n",
        "Class", "Acc %", "TP %", "TN %", "FP %", "FN %", "Kappa"
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<14}{:>10.1}{:>10.1}{:>10.1}{:>10.1}{:>10.1}{:>8.3}\n",
            name,
            r.accuracy * 100.0,
            r.tp_rate * 100.0,
            r.tn_rate * 100.0,
            r.fp_rate * 100.0,
            r.fn_rate * 100.0,
            r.kappa
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// The chained pipeline

/// Configuration of a full register -> segment -> quantify run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub atlas: PathBuf,
    pub models_dir: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub register: RegisterOptions,
    #[serde(default)]
    pub segment: SegmentOptions,
}

impl PipelineConfig {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::InvalidInput(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Serialize)]
pub struct PipelineSummary {
    pub landmark: LandmarkResult,
    pub volumes: VolumeReport,
}

/// `pipeline`: register the scan, segment it with pre-trained models and
/// quantify the volumes, leaving every stage artifact under `out_dir`.
pub fn cmd_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, PipelineError> {
    ensure_dir(&config.out_dir)?;
    let scan = load_scan(&config.manifest)?;
    let atlas = load_atlas(&config.atlas)?;
    let (registered, landmark) = register_with_options(&scan, &atlas, &config.register)?;

    let reg_dir = config.out_dir.join("registered");
    let reg_manifest = write_scan_fat8(&registered, &reg_dir)?;
    write_json(&reg_dir.join("landmark.json"), &landmark)?;

    let trio = load_model_trio(&config.models_dir)?;
    let seg_dir = config.out_dir.join("seg");
    segment_scan_to_dir(&registered, &trio, &seg_dir, &config.segment)?;

    let volumes = cmd_quantify(&seg_dir, &reg_manifest, &config.out_dir.join("volumes.json"))?;
    write_run_log(&config.out_dir, "pipeline", config)?;
    Ok(PipelineSummary { landmark, volumes })
}
