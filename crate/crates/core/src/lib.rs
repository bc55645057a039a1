//! Prototype-library survival prediction.
//!
//! Fused multimodal features are summarized per survival class by typical
//! and wandering prototypes. Queries are matched against every class and the
//! fused similarities become per-time-bin hazard logits, so each prediction
//! comes with the prototypes and training samples behind it.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod library;
pub mod losses;
pub mod matching;
pub mod scalar;
pub mod similarity;
pub mod trainer;
pub mod types;

pub use config::{validate_config, EngineConfig, NormalizationPolicy, UpdateStrategy};
pub use data::{bin_times, generate_synthetic, load_dataset, read_dataset, write_dataset, BinEdges, Dataset, Modality, SynthSpec};
pub use error::{Error, Result, Violation};
pub use eval::{c_index, km_curve, logrank_test, median_risk_split, CohortSample, KmCurve, LogRank};
pub use library::{basic_update, ema_update, init_library, update_library, ClassFeatureSet, Feature, PrototypeLibrary, UpdateReport};
pub use losses::{center_loss, contrastive_loss, nll_surv_loss, total_loss, LossBreakdown};
pub use matching::{mpmatch, predict, risk_score, ExplanationTrace, HazardPrediction, TraceRecord};
pub use scalar::Scalar;
pub use similarity::{dissimilarity, l2_normalize, pmdsim};
pub use trainer::{ablation_run, initial_state, resume, train, AblationVariant, FusionEncoder, RunConfig, TrainConfig, TrainState};
pub use types::{FeatureRecord, PrototypeEntry, PrototypeKind, Source, SourceList};

pub type Library64 = PrototypeLibrary<f64>;
pub type Library32 = PrototypeLibrary<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Encoder64 = FusionEncoder<f64>;
pub type Prediction64 = HazardPrediction<f64>;
pub type Trace64 = ExplanationTrace<f64>;
pub type TrainState64 = TrainState<f64>;
