//! Reusable network blocks: LSTM cell, MLP, weight init, checkpoints.

pub mod checkpoint;
pub mod init;
pub mod lstm;
pub mod mlp;

pub use checkpoint::ModelCheckpoint;
pub use lstm::{lstm_cell, LstmCellParams, LstmCellVars};
pub use mlp::{mlp_forward, Activation, MlpLayer, MlpParams, MlpVars};
