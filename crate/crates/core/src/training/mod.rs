//! Label selection, train/validation splits, Adam, and the full-batch
//! training loop.

mod adam;
mod labels;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use labels::{select_labels, split_train_val, train_count, LabelSplit};
pub use train::{
    argmax_rows, predict, train, train_from, IterationRecord, Selection, TrainConfig, TrainGraph,
    TrainHistory, HISTORY_HEADER,
};
