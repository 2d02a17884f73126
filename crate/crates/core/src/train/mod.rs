//! Optimization loops, checkpoints and the sampling pipeline.

pub mod checkpoint;
pub mod loops;
pub mod optim;
pub mod sample;

pub use checkpoint::{load_checkpoint, load_component, save_checkpoint};
pub use loops::{encode_dataset, train_denoiser, train_vae, ClipSet, FrozenCheck, LogRecord, TrainRun};
pub use optim::{optimizer_step, TrainConfig};
pub use sample::{sample_video, Pipeline, DEFAULT_SAMPLE_STEPS};
