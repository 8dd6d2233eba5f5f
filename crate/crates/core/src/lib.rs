//! Fully automatic segmentation and volume quantification of epicardial and
//! mediastinal fat on cardiac CT.
//!
//! The pipeline works on fat-range windowed slices: an atlas of the
//! retrosternal area is matched against a reference slice to translate the
//! whole scan to a standard position, every fat pixel is then described by a
//! texture feature vector and classified by per-class random forests, and the
//! resulting masks are reduced to areas and volumes.
//!
//! Modules follow the stages:
//!
//! - [`image`]: HU windowing, rescaling and scan loading
//! - [`pnm`]: binary PGM/PPM readers and writers
//! - [`registration`]: atlas construction, similarity measures and landmark search
//! - [`features`]: per-pixel texture features and dataset assembly
//! - [`classifier`]: bagged decision trees, segmentation and evaluation harness
//! - [`quantify`]: areas, volumes and agreement metrics
//! - [`synth`]: deterministic phantom generators used by tests and the CLI
//! - [`pipeline`]: CLI-facing stage orchestration

pub mod classifier;
pub mod features;
pub mod image;
pub mod pipeline;
pub mod pnm;
pub mod quantify;
pub mod registration;
pub mod synth;
