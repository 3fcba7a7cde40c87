//! Loss, optimizer, initialisation, the epoch loop and checkpoints.

mod checkpoint;
mod init;
mod loss;
mod sgd;
mod trainer;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use init::{derive_seed, he_init, init_network};
pub use loss::{cross_entropy_loss, one_hot, LOG_CLAMP};
pub use sgd::{sgd_step, OptimizerState};
pub use trainer::{evaluate, stack_batch, train, EpochRecord, TrainOutcome, TrainingConfig, LOG_HEADER};
