use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::Model;
use super::vocab::Vocab;
use crate::cellspace::{split_xy, CellSequence};
use crate::corpus::TrafficStateTensor;
use crate::error::{Error, Result};
use crate::nncore::{adam_update, AdamConfig, AdamState};

/// One teacher-forcing pair in vocabulary indices, with the trip's traffic
/// window when the model uses it.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub traffic: Option<TrafficStateTensor>,
}

impl Example {
    pub fn new(seq: &CellSequence, vocab: &Vocab, traffic: Option<TrafficStateTensor>) -> Result<Self> {
        let s = split_xy(seq)?;
        Ok(Self {
            x: vocab.indices(&s.x)?,
            y: vocab.indices(&s.y)?,
            traffic,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Sequences per Adam step.
    pub batch_size: usize,
    /// Global gradient-norm cap; `None` trains without clipping.
    pub clip_norm: Option<f64>,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 10,
            batch_size: 1,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-step cross-entropy observed during each epoch.
    pub epoch_losses: Vec<f64>,
    pub clipped_updates: usize,
}

/// Adam training with teacher forcing. Each epoch visits every example once
/// in a seeded random order. `on_epoch` sees the epoch index and its mean
/// per-step loss.
pub fn train(
    model: &mut Model,
    data: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(cfg.lr > 0.0) || cfg.batch_size == 0 {
        return Err(Error::Config(format!("invalid training settings {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(model.params(), AdamConfig::default());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        clipped_updates: 0,
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let m = &*model;
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &data[i];
                    m.loss_and_grad(&ex.x, &ex.y, ex.traffic.as_ref())
                })
                .collect();
            let mut grads = None;
            for (r, &i) in results.into_iter().zip(batch) {
                let (loss, g) = r.map_err(|e| match e {
                    Error::Diverged(msg) => {
                        Error::Diverged(format!("epoch {epoch}, batch {b}: {msg}"))
                    }
                    other => other,
                })?;
                total += loss;
                steps += data[i].y.len();
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.add_assign(&g)?,
                }
            }
            let mut grads = grads.expect("batch is non-empty");
            if let Some(max) = cfg.clip_norm {
                if grads.clip_global_norm(max) > max {
                    report.clipped_updates += 1;
                }
            }
            adam_update(model.params_mut(), &grads, &mut state, cfg.lr).map_err(|e| match e {
                Error::Diverged(msg) => Error::Diverged(format!("epoch {epoch}, batch {b}: {msg}")),
                other => other,
            })?;
        }
        let mean = total / steps as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged(format!("epoch {epoch}: loss {mean}")));
        }
        log::debug!("epoch {epoch}: mean step loss {mean:.5}");
        on_epoch(epoch, mean);
        report.epoch_losses.push(mean);
    }
    if report.clipped_updates > 0 {
        log::info!("gradient clipping was active on {} updates", report.clipped_updates);
    }
    Ok(report)
}

/// Mean per-step cross-entropy of `model` over `data` without updating it.
pub fn mean_step_loss(model: &Model, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let parts: Vec<(f64, usize)> = data
        .par_iter()
        .map(|ex| {
            let (probs, _) = model.forward_indices(&ex.x, ex.traffic.as_ref())?;
            let loss: f64 = probs.iter().zip(&ex.y).map(|(p, &y)| -p[y].ln()).sum();
            Ok((loss, ex.y.len()))
        })
        .collect::<Result<_>>()?;
    let (loss, n) = parts
        .iter()
        .fold((0.0, 0), |(l, n), (a, b)| (l + a, n + b));
    Ok(loss / n as f64)
}
