//! Commute-distance regularizers and timescale-consistency metrics for
//! sequence classification under label inconsistency.

pub mod checks;
pub mod error;
pub mod exec;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod rank;
pub mod seed;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Exec;
pub use graph::{EmotionGraph, GraphPreset, KernelPreset, LaplacianKernel, LossKernel};
pub use losses::TrajectoryPrediction;
pub use metrics::{ConsistencyReport, LabelSequence};
pub use pipeline::{ExperimentResult, ExperimentSpec};
pub use rank::{MetricTable, RankTable};
pub use synth::{Trial, TrialConfig};
pub use trainer::{SoftmaxClassifier, TrainConfig};
