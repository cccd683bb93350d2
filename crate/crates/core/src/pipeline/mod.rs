//! End-to-end plumbing: configuration, dataset assembly, the joint training
//! loop, evaluation, and inference.

pub mod config;
pub mod data;
pub mod eval;
pub mod net;
pub mod train;

pub use config::RunConfig;
pub use data::{load_dataset, read_samples, synth_dataset, write_samples, Dataset, DatasetManifest, SceneEntry};
pub use eval::{aggregate, evaluate, infer_on_entry, predictions, write_predictions, InferResult, SamplePrediction};
pub use net::{config_sidecar, vocab_sidecar, Segmenter};
pub use train::{train, write_loss_log, StepLog};
