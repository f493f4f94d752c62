//! Mini-batch Adam training with early stopping on the mean training loss.

mod adam;
mod batches;
mod early_stop;
mod train;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use batches::{batch_indices, epoch_permutation};
pub use early_stop::{EarlyStopping, Verdict};
pub use train::{fit, train, EpochRecord, History, TrainConfig, TrainOutcome};
