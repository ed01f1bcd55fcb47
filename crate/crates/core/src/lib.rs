//! Detection of pathological lung auscultations from multi-channel recordings.
//!
//! The crate covers the whole pipeline:
//!
//! ```text
//! WAV corpus -> windowing -> acoustic features -> dataset variant
//!            -> random forest / fair-cut forest -> repeated stratified CV
//!            -> decision fusion -> metric report
//! ```
//!
//! * [`corpus`] loads and validates 16-bit mono recordings plus their manifest
//!   and splits them into 50%-overlapping windows.
//! * [`features`] computes a named, registry-ordered acoustic feature vector
//!   per analysis unit (F0, formants, loudness, HNR, DFA, energy, RMS, MFCC).
//! * [`dataset`] assembles the `raw`, `cms`, `wms`, `c2`, `c3` and `c6`
//!   dataset variants and attaches meta columns.
//! * [`forest`] holds the supervised random forest (with always-split
//!   variables and out-of-bag tuning) and the unsupervised fair-cut forest.
//! * [`eval`] plans subject-grouped stratified folds, runs cross-validation
//!   and computes AUC ROC / AUC PRC and threshold metrics.
//! * [`fusion`] averages scores over patient, side, level or channel groups.
//! * [`synth`] generates a labelled synthetic corpus in the same on-disk format.
//! * [`pipeline`] wires everything together from a flat `key = value` config.

#![warn(clippy::all)]
// `!(x > t)` is the idiom used to reject NaN along with small values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod forest;
pub mod fusion;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod synth;

pub use corpus::{CorpusIndex, Diagnosis, Level, Recording, Sex, Side, SubjectMeta, WindowedRecording, Windowing};
pub use dataset::{Dataset, Variant};
pub use eval::{FoldPlan, MetricReport, RunResult};
pub use features::{FeatureRegistry, FeatureTable, FeatureVector};
pub use forest::{FcfConfig, RfConfig, TrainedModel};
pub use fusion::FusionScope;
pub use pipeline::{PipelineConfig, PipelineError};
