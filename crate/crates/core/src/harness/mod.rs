//! Configuration, persistence, CSV traces, reports and the end-to-end
//! experiment protocol.

pub mod config;
pub mod manifest;
pub mod persist;
pub mod protocol;
pub mod report;
pub mod tables;

pub use config::{ExperimentConfig, Mode};
pub use manifest::{RunManifest, MANIFEST_FILE};
pub use persist::{load_dataset, load_model, save_dataset, save_model, ModelFile};
pub use protocol::{evaluate, reproduce_paper_protocol, RunOutput};
pub use report::{summarize_files, ReportOptions};
pub use tables::{read_table, Table, TraceKind};
