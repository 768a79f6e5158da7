//! Training objective, minibatch Adam loop and hyper-parameter grid search.

mod config;
mod grid;
mod history;
mod loss;
mod train;

pub use config::TrainConfig;
pub use grid::{grid_search, CellOutcome, CellResult, CellScores, Grid, GridSearch};
pub use history::{EpochRecord, TrainHistory};
pub use loss::{loss, loss_and_grads, LossTerms};
pub use train::{train, train_from};
