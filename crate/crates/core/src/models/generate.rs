use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{Model, Prepared, View};
use super::vocab::{END_INDEX, START_INDEX};
use crate::cellspace::{CellId, Token};
use crate::corpus::TrafficStateTensor;
use crate::error::{Error, Result};
use crate::nncore::softmax;

/// Output of one sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    /// Prefix followed by sampled tokens; ends with `#end` when `terminated`.
    pub tokens: Vec<Token>,
    /// Next-token distribution after each consumed token.
    pub probabilities: Vec<Vec<f64>>,
    /// Attention row for each consumed token (attention model only).
    pub attention: Vec<Vec<f64>>,
    pub terminated: bool,
}

impl GenerationResult {
    /// Real cells in order, virtual tokens dropped.
    pub fn cells(&self) -> Vec<CellId> {
        self.tokens.iter().filter_map(|t| t.cell()).collect()
    }
}

/// A model bound to one trip's traffic, ready to sample continuations.
pub struct Decoder<'m> {
    model: &'m Model,
    view: View<'m>,
    prep: Option<Prepared>,
}

impl<'m> Decoder<'m> {
    pub fn new(model: &'m Model, traffic: Option<&TrafficStateTensor>) -> Result<Self> {
        Ok(Self {
            model,
            view: model.view()?,
            prep: model.prepare(traffic)?,
        })
    }

    /// Feeds `prefix`, then samples until `#end` or until `max_len` tokens.
    /// `#start` is never sampled.
    pub fn sample<R: Rng>(&self, prefix: &[Token], rng: &mut R, max_len: usize) -> Result<GenerationResult> {
        if prefix.first() != Some(&Token::Start) {
            return Err(Error::InvalidPrefix("must begin with #start".into()));
        }
        if prefix.contains(&Token::End) {
            return Err(Error::InvalidPrefix("contains #end".into()));
        }
        if max_len <= prefix.len() {
            return Err(Error::InvalidPrefix(format!(
                "max_len {max_len} does not exceed prefix length {}",
                prefix.len()
            )));
        }
        let vocab = self.model.vocab();
        let (mut h, mut c) = self.view.initial(self.prep.as_ref());
        let mut out = GenerationResult {
            tokens: prefix.to_vec(),
            probabilities: Vec::new(),
            attention: Vec::new(),
            terminated: false,
        };
        let mut next = vocab.index(prefix[0])?;
        let mut consumed = 0;
        loop {
            let tr = self.view.step(self.prep.as_ref(), &h, &c, next)?;
            let probs = softmax(&tr.logits);
            if let Some(a) = tr.alpha() {
                out.attention.push(a.to_vec());
            }
            h = tr.h().to_vec();
            c = tr.c().to_vec();
            consumed += 1;
            if consumed < prefix.len() {
                next = vocab.index(prefix[consumed])?;
                out.probabilities.push(probs);
                continue;
            }
            let mut weights = probs.clone();
            weights[START_INDEX] = 0.0;
            out.probabilities.push(probs);
            let dist = WeightedIndex::new(&weights)
                .map_err(|e| Error::Diverged(format!("sampling distribution: {e}")))?;
            next = dist.sample(rng);
            out.tokens.push(vocab.token(next)?);
            if next == END_INDEX {
                out.terminated = true;
                break;
            }
            if out.tokens.len() >= max_len {
                break;
            }
        }
        Ok(out)
    }
}

/// Seeded multinomial continuation of `prefix`.
pub fn generate(
    model: &Model,
    prefix: &[Token],
    traffic: Option<&TrafficStateTensor>,
    seed: u64,
    max_len: usize,
) -> Result<GenerationResult> {
    Decoder::new(model, traffic)?.sample(prefix, &mut ChaCha8Rng::seed_from_u64(seed), max_len)
}
