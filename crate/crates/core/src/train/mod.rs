//! Training orchestration, checkpoints and synthetic corpora.

pub mod checkpoint;
pub mod config;
pub mod synth;
pub mod trainer;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use config::RunConfig;
pub use synth::{SlotMark, SynthSpec, SyntheticCorpus, SyntheticDocument};
pub use trainer::{corpus_loss, train, train_epoch, EpochLog, TrainOptions, TrainOutcome};
