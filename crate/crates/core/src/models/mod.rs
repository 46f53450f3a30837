//! The baseline recurrent generator and the traffic-attention variant, with
//! teacher-forced training and multinomial sampling.

mod generate;
mod network;
mod train;
mod vocab;

use std::io::{Read, Write};

pub use generate::{generate, Decoder, GenerationResult};
pub use network::{
    attention_init_state, attention_step, encode_traffic, Model, ModelConfig, ModelKind,
    TrafficFeatures,
};
pub use train::{mean_step_loss, train, Example, TrainConfig, TrainReport};
pub use vocab::{Vocab, END_INDEX, START_INDEX};

use crate::cellspace::Token;
use crate::corpus::TrafficStateTensor;
use crate::error::{Error, Result};
use crate::nncore::{read_checkpoint, write_checkpoint};

/// Per-step next-token distributions and attention rows for a teacher-forced input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub probabilities: Vec<Vec<f64>>,
    pub attention: Vec<Vec<f64>>,
}

pub fn rnn_forward(x: &[Token], model: &Model) -> Result<ForwardOutput> {
    if model.kind() != ModelKind::Rnn {
        return Err(Error::Config("rnn_forward needs a baseline model".into()));
    }
    forward(x, None, model)
}

pub fn arnn_forward(x: &[Token], traffic: &TrafficStateTensor, model: &Model) -> Result<ForwardOutput> {
    if model.kind() != ModelKind::Arnn {
        return Err(Error::Config("arnn_forward needs an attention model".into()));
    }
    forward(x, Some(traffic), model)
}

fn forward(x: &[Token], traffic: Option<&TrafficStateTensor>, model: &Model) -> Result<ForwardOutput> {
    let idx = model.vocab().indices(x)?;
    let (probabilities, attention) = model.forward_indices(&idx, traffic)?;
    Ok(ForwardOutput {
        probabilities,
        attention,
    })
}

/// Default sampling budget for a reference of `ref_len` tokens.
pub fn default_max_len(ref_len: usize) -> usize {
    (4 * ref_len).min(100)
}

/// Writes parameters with the model configuration and `training` metadata.
pub fn write_model<W: Write>(w: W, model: &Model, training: serde_json::Value) -> Result<()> {
    let meta = serde_json::json!({ "model": model.config(), "training": training });
    write_checkpoint(w, model.params(), &meta)
}

pub fn read_model<R: Read>(r: R) -> Result<(Model, serde_json::Value)> {
    let (params, mut meta) = read_checkpoint(r)?;
    let config: ModelConfig = serde_json::from_value(meta["model"].take())
        .map_err(|e| Error::Format(format!("checkpoint model metadata: {e}")))?;
    Ok((Model::from_params(config, params)?, meta["training"].take()))
}
