//! Minimal dense numerics for recurrent models: an LSTM cell with manual
//! backward pass, softmax cross-entropy, Adam and a finite-difference checker.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;
mod lstm;
mod tensor;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{softmax, softmax_cross_entropy};
pub use lstm::{lstm_step, lstm_step_backward, LstmCache, LstmGrads, LstmWeights};
pub use tensor::{ModelParams, Tensor};

pub(crate) use tensor::{mat_vec_acc, outer_acc, vec_mat_acc};
