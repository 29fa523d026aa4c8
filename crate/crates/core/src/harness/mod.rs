//! Instance generation, serialized documents and batch experiments.

pub mod docs;
pub mod experiments;
pub mod generate;

pub use docs::MartingaleDoc;
pub use experiments::{run_experiment, BatchSpec, ExperimentConfig, ExperimentName, ExperimentReport};
pub use generate::{generate, generate_companion, InstanceSpec, TreeKind, ValueDistribution};
