//! Command-line driver for the cardiac fat segmentation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fatseg::classifier::{ClassTag, EvalMode, ForestConfig};
use fatseg::pipeline::{
    cmd_build_atlas, cmd_evaluate_dataset, cmd_evaluate_masks, cmd_extract, cmd_pipeline,
    cmd_quantify, cmd_register, cmd_segment, cmd_train, format_metrics_table, save_atlas,
    ExtractOptions, PipelineConfig, PipelineError, RegisterOptions, SegmentOptions, TrainOptions,
};
use fatseg::registration::Measure;
use fatseg::synth;

#[derive(Parser)]
#[command(
    name = "fatseg",
    version,
    about = "Automatic epicardial/mediastinal fat segmentation and volume quantification for cardiac CT"
)]
struct Cli {
    /// Cap on worker threads (default: FATSEG_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average aligned retrosternal crops into an atlas (PGM + JSON sidecar).
    BuildAtlas {
        /// Directory of aligned .pgm crops.
        #[arg(long)]
        crops: PathBuf,
        /// Output atlas image path (.pgm).
        #[arg(long)]
        out: PathBuf,
        /// Normalized gray level below which crop pixels are zeroed.
        #[arg(long, default_value_t = 0.2)]
        threshold: f64,
    },
    /// Find the retrosternal landmark and translate the scan to the
    /// standard position.
    Register {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        atlas: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Similarity measure: md, cc, mi, wmi or hmd.
        #[arg(long, default_value = "hmd")]
        measure: String,
        /// Difference exponent (MD/HMD) or log base (MI/WMI).
        #[arg(long)]
        g: Option<f64>,
        /// HMD bright/dark threshold on normalized grays.
        #[arg(long, default_value_t = 0.2)]
        hmd_threshold: f64,
        #[arg(long)]
        anchor_x: Option<i64>,
        #[arg(long)]
        anchor_y: Option<i64>,
        /// Search only this slice instead of the retry ladder.
        #[arg(long)]
        reg_slice: Option<usize>,
        /// Skip the confirmation heuristic.
        #[arg(long)]
        no_confirm: bool,
    },
    /// Extract per-pixel feature vectors into a CSV dataset.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Ground-truth mask directory (mask_*.ppm); omit for an unlabeled
        /// dataset.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Train a one-vs-rest forest on a dataset CSV.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Class to train: epicardial, mediastinal or pericardium.
        #[arg(long)]
        class: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Classify every slice of a scan with pre-trained models.
    Segment {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding epicardial.json, mediastinal.json and
        /// pericardium.json.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Per-class dilation passes over fat pixels.
        #[arg(long, default_value_t = 1)]
        dilate_iters: usize,
        /// Skip writing per-pixel vote score CSVs.
        #[arg(long)]
        no_scores: bool,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Turn segmentation masks into fat areas and volumes.
    Quantify {
        /// Directory of seg_*.ppm masks.
        #[arg(long)]
        masks: PathBuf,
        /// Scan manifest providing the pixel and slice spacing.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predictions against ground truth (mask directories), or run
    /// the split66/kfold10 harness on a dataset CSV.
    Evaluate {
        /// Predicted seg_*.ppm directory (mask mode).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Ground-truth mask_*.ppm directory (mask mode).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Scan manifest; restricts mask-mode counts to fat pixels.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Dataset CSV (dataset mode).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Class for dataset mode.
        #[arg(long)]
        class: Option<String>,
        /// Test mode: split66 or kfold10.
        #[arg(long, default_value = "split66")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Run register -> segment -> quantify from a JSON config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate deterministic phantom fixtures.
    Synth {
        #[command(subcommand)]
        what: SynthCommand,
    },
}

#[derive(Args)]
struct FeatureArgs {
    /// Neighborhood window side (odd).
    #[arg(long, default_value_t = 25)]
    window_side: usize,
    /// CSV weight constant.
    #[arg(long, default_value_t = 1e7)]
    beta: f64,
    /// Extract the full 31-feature set instead of the selected 15.
    #[arg(long)]
    full_features: bool,
}

impl FeatureArgs {
    fn options(&self) -> ExtractOptions {
        ExtractOptions {
            window_side: self.window_side,
            beta: self.beta,
            full_features: self.full_features,
        }
    }
}

#[derive(Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 10)]
    trees: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Features drawn per node (default: floor(log2(k) + 1)).
    #[arg(long)]
    feature_subset: Option<usize>,
    /// Train every tree on the full dataset instead of bootstrap resamples.
    #[arg(long)]
    no_bootstrap: bool,
    /// Min-max normalize features before training; the transform is stored
    /// in the model and replayed at prediction time.
    #[arg(long)]
    normalize: bool,
}

impl ForestArgs {
    fn options(&self) -> TrainOptions {
        TrainOptions {
            forest: ForestConfig {
                n_trees: self.trees,
                feature_subset: self.feature_subset,
                seed: self.seed,
                min_leaf: self.min_leaf,
                bootstrap: !self.no_bootstrap,
            },
            normalize: self.normalize,
        }
    }
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Two-texture ring scans with ground-truth masks (HU16 storage).
    Rings {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scans: usize,
        #[arg(long, default_value_t = 20)]
        slices: usize,
        #[arg(long, default_value_t = 96)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Planted-atlas registration scenes with a truth table of offsets.
    RegScenes {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Fraction of salt noise outside the planted template.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// A constant-area cylinder: slices, masks and manifest for quantify.
    Cylinder {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        slices: usize,
        #[arg(long, default_value_t = 797)]
        pixels: usize,
        #[arg(long, default_value_t = 48)]
        size: usize,
    },
    /// Everything `pipeline` needs: scan, atlas, trained models and config.
    PipelineFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_class(s: &str) -> Result<ClassTag, PipelineError> {
    s.parse().map_err(PipelineError::InvalidInput)
}

fn parse_measure(s: &str) -> Result<Measure, PipelineError> {
    s.parse().map_err(PipelineError::InvalidInput)
}

fn parse_mode(s: &str) -> Result<EvalMode, PipelineError> {
    match s.to_ascii_lowercase().as_str() {
        "split66" => Ok(EvalMode::Split66),
        "kfold10" => Ok(EvalMode::KFold10),
        other => Err(PipelineError::InvalidInput(format!(
            "unknown mode {other:?} (expected split66 or kfold10)"
        ))),
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::BuildAtlas { crops, out, threshold } => {
            let atlas = cmd_build_atlas(&crops, threshold, &out)?;
            println!(
                "atlas {}x{} from {} crops -> {}",
                atlas.image.width,
                atlas.image.height,
                atlas.source_count,
                out.display()
            );
        }
        Command::Register {
            manifest,
            atlas,
            out_dir,
            measure,
            g,
            hmd_threshold,
            anchor_x,
            anchor_y,
            reg_slice,
            no_confirm,
        } => {
            let options = RegisterOptions {
                measure: parse_measure(&measure)?,
                g,
                hmd_threshold,
                anchor_x,
                anchor_y,
                reg_slice,
                no_confirm,
                confirmation: None,
            };
            let landmark = cmd_register(&manifest, &atlas, &out_dir, &options)?;
            println!(
                "landmark at ({}, {}) on slice {} score {:.6} confirmed {} -> {}",
                landmark.x,
                landmark.y,
                landmark.slice_index,
                landmark.score,
                landmark.confirmed,
                out_dir.display()
            );
        }
        Command::Extract { manifest, masks, out, features } => {
            let rows = cmd_extract(&manifest, masks.as_deref(), &out, &features.options())?;
            println!("{rows} feature rows -> {}", out.display());
        }
        Command::Train { dataset, class, out, forest } => {
            let class = parse_class(&class)?;
            let model = cmd_train(&dataset, class, &out, &forest.options())?;
            println!(
                "{} forest: {} trees, {} features -> {}",
                class.as_str(),
                model.trees.len(),
                model.feature_names.len(),
                out.display()
            );
        }
        Command::Segment { manifest, models, out_dir, dilate_iters, no_scores, features } => {
            let options = SegmentOptions {
                extract: features.options(),
                dilate_iters,
                write_scores: !no_scores,
            };
            cmd_segment(&manifest, &models, &out_dir, &options)?;
            println!("segmentation -> {}", out_dir.display());
        }
        Command::Quantify { masks, manifest, out } => {
            let report = cmd_quantify(&masks, &manifest, &out)?;
            println!(
                "epicardial {:.4} ml, mediastinal {:.4} ml -> {}",
                report.epicardial_ml,
                report.mediastinal_ml,
                out.display()
            );
        }
        Command::Evaluate { pred, truth, manifest, dataset, class, mode, out, forest } => {
            match (dataset, pred, truth) {
                (Some(dataset), None, None) => {
                    let class = parse_class(class.as_deref().ok_or_else(|| {
                        PipelineError::InvalidInput("dataset mode needs --class".into())
                    })?)?;
                    let mode = parse_mode(&mode)?;
                    let report =
                        cmd_evaluate_dataset(&dataset, class, mode, &forest.options(), &out)?;
                    print!(
                        "{}",
                        format_metrics_table(&[(class.as_str().to_string(), report.mean)])
                    );
                }
                (None, Some(pred), Some(truth)) => {
                    let report = cmd_evaluate_masks(&pred, &truth, manifest.as_deref(), &out)?;
                    print!(
                        "{}",
                        format_metrics_table(&[
                            ("epicardial".to_string(), report.epicardial),
                            ("mediastinal".to_string(), report.mediastinal),
                            ("mean".to_string(), report.mean),
                        ])
                    );
                    println!(
                        "dice: epicardial {:.4}, mediastinal {:.4}",
                        report.epicardial_dice, report.mediastinal_dice
                    );
                }
                _ => {
                    return Err(PipelineError::InvalidInput(
                        "evaluate needs either --dataset or both --pred and --truth".into(),
                    ))
                }
            }
        }
        Command::Pipeline { config } => {
            let config = PipelineConfig::read(&config)?;
            let summary = cmd_pipeline(&config)?;
            println!(
                "landmark slice {} at ({}, {}); epicardial {:.4} ml, mediastinal {:.4} ml -> {}",
                summary.landmark.slice_index,
                summary.landmark.x,
                summary.landmark.y,
                summary.volumes.epicardial_ml,
                summary.volumes.mediastinal_ml,
                config.out_dir.display()
            );
        }
        Command::Synth { what } => run_synth(what)?,
    }
    Ok(())
}

fn run_synth(what: SynthCommand) -> Result<(), PipelineError> {
    match what {
        SynthCommand::Rings { out, scans, slices, size, seed } => {
            let config = synth::RingScanConfig {
                width: size,
                height: size,
                slices,
                center: (size as f64 / 2.0, size as f64 / 2.0),
                ..synth::RingScanConfig::default()
            };
            for i in 0..scans {
                let (scan, masks) =
                    synth::ring_scan(&config, &format!("phantom{i:02}"), seed + i as u64);
                synth::write_scan_hu16(&scan, &out.join(format!("scan_{i:02}")))?;
                synth::write_masks(&masks, &out.join(format!("masks_{i:02}")))?;
            }
            println!("{scans} ring scans -> {}", out.display());
        }
        SynthCommand::RegScenes { out, count, noise, seed } => {
            std::fs::create_dir_all(&out).map_err(|source| PipelineError::Io {
                path: out.display().to_string(),
                source,
            })?;
            let atlas = synth::atlas_pattern(seed);
            save_atlas(&atlas, &out.join("atlas.pgm"))?;
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5ce9e5);
            let mut truth = Vec::new();
            for i in 0..count {
                let x0 = rng.gen_range(0..512 - atlas.image.width);
                let y0 = rng.gen_range(0..512 - atlas.image.height);
                let scene =
                    synth::planted_scene(512, 512, &atlas.image, x0, y0, noise, seed + i as u64);
                fatseg::image::write_pgm(&scene, &out.join(format!("scene_{i:02}.pgm")))?;
                truth.push(serde_json::json!({ "scene": i, "x": x0, "y": y0 }));
            }
            let json = serde_json::to_string_pretty(&truth).expect("truth serializes");
            fatseg::pnm::write_atomic(&out.join("truth.json"), json.as_bytes())?;
            println!("{count} scenes -> {}", out.display());
        }
        SynthCommand::Cylinder { out, slices, pixels, size } => {
            let masks = synth::cylinder_masks(slices, size, size, pixels);
            let seg_dir = out.join("seg");
            std::fs::create_dir_all(&seg_dir).map_err(|source| PipelineError::Io {
                path: seg_dir.display().to_string(),
                source,
            })?;
            let mut slice_images = Vec::new();
            for (z, mask) in masks.iter().enumerate() {
                let empty = fatseg::classifier::ClassMask::new(size, size, ClassTag::Mediastinal);
                fatseg::pipeline::write_seg_mask(
                    mask,
                    &empty,
                    &seg_dir.join(format!("seg_{z:04}.ppm")),
                )?;
                let gray: Vec<u8> = mask.bits.iter().map(|&b| if b { 100 } else { 0 }).collect();
                slice_images.push(fatseg::image::FatImage::new(size, size, gray, 0.35));
            }
            let scan = fatseg::image::ScanVolume::new(slice_images, 3.0, "cylinder".into())
                .expect("non-empty");
            fatseg::pipeline::write_scan_fat8(&scan, &out)?;
            println!("cylinder fixture -> {}", out.display());
        }
        SynthCommand::PipelineFixture { out, seed } => {
            synth::write_pipeline_fixture(&out, seed)?;
            println!("pipeline fixture -> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap already formats help/version output
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let threads = cli.threads.or_else(|| {
        std::env::var("FATSEG_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}: {err}", err.code());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
