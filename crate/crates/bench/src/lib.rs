//! Benchmark harness for trajectory-influence scoring: system generators,
//! deterministic simulation, ground-truth retraining sweeps, evaluation
//! metrics, and parameter ablations.

pub mod ablation;
pub mod evaluate;
pub mod experiment;
pub mod groundtruth;
pub mod metrics;
pub mod simulate;
pub mod systems;

pub use ablation::{ablation_sweep, run_cell, AblationCell, AblationRow, CellOutput};
pub use evaluate::{evaluate, EvalRow, Method, Target};
pub use experiment::{make_dataset, ExperimentConfig, GeneratedData, PlantCostOptions};
pub use groundtruth::{loto_ground_truth, plant_cost, GroundTruth, TruthRecord};
pub use metrics::{compute_metrics, EvalMetrics};
pub use simulate::{simulate, stream_rng, ExcitationSpec};
pub use systems::{make_system, Family, LinearSystem, SystemModel, TwoLinkArm};
