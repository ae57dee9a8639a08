//! Experiment orchestration: run configs, retrieval and safety runs, index
//! files and the planted-gap study.

pub mod config;
pub mod gap;
pub mod pipeline;
pub mod safety;
pub mod store;

pub use config::{MethodSpec, OutputSpec, RetrieverSpec, RunConfig, SafetySpec, SEED_ENV};
pub use pipeline::{run_retrieval, write_retrieval_outputs, Engine, QueryInput, RetrievalInputs};
pub use safety::{run_safety, run_safety_config, write_safety_outputs, ClientSpec, SafetyReport};
pub use store::{IndexKind, SparseIndex, StoredIndex};
