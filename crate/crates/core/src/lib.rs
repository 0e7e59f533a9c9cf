//! Noisy multi-label learning: synthetic frame data with extrapolated group
//! labels, loss-based active label cleaning, and ensemble teacher/student
//! self-training with label smoothing and class-weighted sampling.

pub mod active;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod labels;
pub mod learner;
pub mod loss;
pub mod manifest;
pub mod metrics;
pub mod sampling;
pub mod selftrain;
pub mod split;
pub mod train;
pub mod util;

pub use active::{
    correction_stats, run_al_iteration, run_al_loop, score_samples, select_topk, ALConfig, ALState, AnnotationItem,
    AnnotationRecord, CleanSet, EpistemicScore, NoisyOracle, Oracle, OracleResponse, ScriptedOracle,
};
pub use config::{OracleKind, RunConfig};
pub use data::{generate_synthetic, Dataset, NoiseSpec, Provenance, Sample};
pub use experiments::{run_benchmark, run_ladder, trend_test, BenchmarkConfig, LadderReport};
pub use ensemble::{top3_decision, Ensemble};
pub use error::{Error, Result};
pub use labels::{standardize_label, LabelSet, ToolCatalog, ToolLabel};
pub use learner::{Learner, LearnerConfig, Mlp};
pub use loss::{bce_loss, hard_targets, smooth_targets, TargetVector};
pub use manifest::{dataset_hash, load_manifest, manifest_config_tag, save_manifest, save_manifest_tagged};
pub use metrics::{compare_stages, evaluate, EvaluationReport, StageComparison};
pub use sampling::{compute_class_weights, WeightedLoader};
pub use selftrain::{pseudo_label, train_student, train_teacher, PseudoTargetMode, StageConfig};
pub use split::{group_aware_split, DataSplit};
pub use train::{train, Example, TrainSchedule};
