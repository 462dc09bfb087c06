//! Cross-domain evaluation, ablation orchestration, projection export, the
//! mean/variance independence verifier, and artifact/report plumbing.

pub mod benchmark;
pub mod config;
pub mod eval;
pub mod gradsuite;
pub mod projection;
pub mod report;
pub mod verify;

pub use benchmark::{shortcut_benchmark, BenchmarkConfig, BenchmarkReport};
pub use eval::{evaluate_task, run_experiment, run_task, CellResult, EvalReport, ExperimentSpec};
pub use projection::{project_features, Branch, ProjectionExport};
pub use verify::{helmert, verify_independence, HelmertMatrix, IndependenceReport};
