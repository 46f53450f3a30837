//! Bayesian optimization of training hyperparameters with a Gaussian-process
//! surrogate and expected improvement.

mod gp;

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gp::{
    ei_closed_form, expected_improvement, gp_fit, gp_fit_fixed, gp_fit_with, Gp, GpHyper,
};

use crate::error::{Error, Result};
use crate::models::{mean_step_loss, train, Example, Model, ModelConfig, ModelKind, TrainConfig};

/// Quasi-random trials before the surrogate takes over.
pub const INITIAL_TRIALS: usize = 3;
/// Random candidates scored by expected improvement per proposal.
pub const CANDIDATE_POOL: usize = 512;
/// Training epochs per trial.
pub const TRIAL_EPOCHS: usize = 10;

const HALTON_BASES: [u32; 6] = [2, 3, 5, 7, 11, 13];

fn halton(index: u32, base: u32) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, index);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Point in the unit cube.
    pub x: Vec<f64>,
    pub objective: Option<f64>,
    pub status: TrialStatus,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub history: Vec<TrialRecord>,
    pub best: usize,
}

impl SearchResult {
    pub fn best_trial(&self) -> &TrialRecord {
        &self.history[self.best]
    }
}

/// Minimizes `f` over `[0,1]^dim`. The first trials follow a randomly shifted
/// Halton sequence; later ones maximize expected improvement over a seeded
/// pool of uniform candidates. Trials returning an error or a non-finite
/// value are recorded as failed and ignored by the surrogate.
pub fn minimize<F>(dim: usize, budget: usize, seed: u64, mut f: F) -> Result<SearchResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if budget < INITIAL_TRIALS {
        return Err(Error::Config(format!("search budget must be at least {INITIAL_TRIALS}")));
    }
    if dim == 0 || dim > HALTON_BASES.len() {
        return Err(Error::Config(format!("unsupported search dimension {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
    let mut history: Vec<TrialRecord> = Vec::with_capacity(budget);

    for t in 0..budget {
        let completed: Vec<&TrialRecord> = history
            .iter()
            .filter(|r| r.status == TrialStatus::Completed)
            .collect();
        let x: Vec<f64> = if t < INITIAL_TRIALS || completed.is_empty() {
            (0..dim)
                .map(|d| (halton(t as u32 + 1, HALTON_BASES[d]) + shift[d]).fract())
                .collect()
        } else {
            let xs: Vec<Vec<f64>> = completed.iter().map(|r| r.x.clone()).collect();
            let ys: Vec<f64> = completed.iter().map(|r| r.objective.unwrap()).collect();
            let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let gp = gp_fit(&xs, &ys)?;
            let mut top: Option<(f64, Vec<f64>)> = None;
            for _ in 0..CANDIDATE_POOL {
                let c: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
                let ei = expected_improvement(&gp, &c, best);
                if top.as_ref().is_none_or(|(b, _)| ei > *b) {
                    top = Some((ei, c));
                }
            }
            top.expect("pool is non-empty").1
        };
        let started = Instant::now();
        let outcome = f(&x);
        let wall_seconds = started.elapsed().as_secs_f64();
        let record = match outcome {
            Ok(v) if v.is_finite() => TrialRecord {
                x,
                objective: Some(v),
                status: TrialStatus::Completed,
                wall_seconds,
            },
            other => {
                if let Err(e) = other {
                    log::warn!("trial {t} failed: {e}");
                } else {
                    log::warn!("trial {t} returned a non-finite objective");
                }
                TrialRecord {
                    x,
                    objective: None,
                    status: TrialStatus::Failed,
                    wall_seconds,
                }
            }
        };
        history.push(record);
    }
    let best = history
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.objective.map(|o| (i, o)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or(Error::AllTrialsFailed)?;
    Ok(SearchResult { history, best })
}

/// Ranges searched for the three training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Searched on a log scale.
    pub learning_rate: (f64, f64),
    pub d_e: (usize, usize),
    pub d_h: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: (1e-5, 1e-2),
            d_e: (4, 128),
            d_h: (4, 128),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub learning_rate: f64,
    pub d_e: usize,
    pub d_h: usize,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.learning_rate;
        if !(a > 0.0 && a <= b) || self.d_e.0 < 1 || self.d_e.0 > self.d_e.1 || self.d_h.0 < 1 || self.d_h.0 > self.d_h.1 {
            return Err(Error::Config(format!("invalid search space {self:?}")));
        }
        Ok(())
    }

    /// Maps a unit-cube point to a configuration, rounding the dimensions.
    pub fn decode(&self, u: &[f64]) -> HyperPoint {
        let (a, b) = self.learning_rate;
        let lerp = |(lo, hi): (usize, usize), t: f64| {
            (lo as f64 + t.clamp(0.0, 1.0) * (hi - lo) as f64).round() as usize
        };
        HyperPoint {
            learning_rate: (a.ln() + u[0].clamp(0.0, 1.0) * (b.ln() - a.ln())).exp(),
            d_e: lerp(self.d_e, u[1]),
            d_h: lerp(self.d_h, u[2]),
        }
    }
}

/// Reference optimum for each model kind from the original study.
pub fn published_preset(kind: ModelKind) -> HyperPoint {
    match kind {
        ModelKind::Rnn => HyperPoint {
            learning_rate: 6.216234e-05,
            d_e: 413,
            d_h: 854,
        },
        ModelKind::Arnn => HyperPoint {
            learning_rate: 5.842804e-04,
            d_e: 659,
            d_h: 574,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSearch {
    pub space: SearchSpace,
    pub kind: ModelKind,
    pub seed: u64,
    pub result: SearchResult,
}

impl ModelSearch {
    pub fn best_point(&self) -> HyperPoint {
        self.space.decode(&self.result.best_trial().x)
    }
}

/// Trains one model per trial for `epochs` epochs and scores it by mean
/// per-step cross-entropy on `validation`.
pub fn search(
    space: SearchSpace,
    kind: ModelKind,
    n_cells: usize,
    train_data: &[Example],
    validation: &[Example],
    budget: usize,
    epochs: usize,
    seed: u64,
) -> Result<ModelSearch> {
    space.validate()?;
    if train_data.is_empty() || validation.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut trial = 0u64;
    let result = minimize(3, budget, seed, |u| {
        let p = space.decode(u);
        trial += 1;
        let trial_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(trial);
        let mut model = Model::new(ModelConfig::new(kind, n_cells, p.d_e, p.d_h), trial_seed)?;
        let cfg = TrainConfig {
            lr: p.learning_rate,
            epochs,
            seed: trial_seed,
            ..TrainConfig::default()
        };
        train(&mut model, train_data, &cfg, |_, _| {})?;
        let v = mean_step_loss(&model, validation)?;
        log::info!(
            "trial {trial}: lr={:.3e} d_e={} d_h={} -> {v:.5}",
            p.learning_rate,
            p.d_e,
            p.d_h
        );
        Ok(v)
    })?;
    Ok(ModelSearch {
        space,
        kind,
        seed,
        result,
    })
}

/// One row per trial, preceded by comment lines recording the search space.
pub fn write_history<W: Write>(mut w: W, s: &ModelSearch) -> Result<()> {
    let sp = &s.space;
    writeln!(
        w,
        "# model={} seed={} learning_rate=[{:e},{:e}] log d_e=[{},{}] d_h=[{},{}]",
        s.kind, s.seed, sp.learning_rate.0, sp.learning_rate.1, sp.d_e.0, sp.d_e.1, sp.d_h.0, sp.d_h.1
    )?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "trial", "learning_rate", "d_e", "d_h", "u_lr", "u_d_e", "u_d_h", "objective", "status",
        "wall_seconds", "incumbent",
    ])?;
    for (i, r) in s.result.history.iter().enumerate() {
        let p = sp.decode(&r.x);
        out.write_record([
            (i + 1).to_string(),
            format!("{:e}", p.learning_rate),
            p.d_e.to_string(),
            p.d_h.to_string(),
            r.x[0].to_string(),
            r.x[1].to_string(),
            r.x[2].to_string(),
            r.objective.map_or(String::new(), |v| v.to_string()),
            match r.status {
                TrialStatus::Completed => "completed".into(),
                TrialStatus::Failed => "failed".into(),
            },
            format!("{:.3}", r.wall_seconds),
            (i == s.result.best).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellspace::{CellId, CellSequence};

    #[test]
    fn budget_three_is_quasi_random() {
        let mut seen = Vec::new();
        let r = minimize(2, 3, 5, |x| {
            seen.push(x.to_vec());
            Ok(x[0] + x[1])
        })
        .unwrap();
        assert_eq!(r.history.len(), 3);
        let best = r.history.iter().map(|t| t.objective.unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_trial().objective, Some(best));
        // Shifted Halton points are distinct and inside the cube.
        assert!(seen.iter().all(|p| p.iter().all(|v| (0.0..1.0).contains(v))));
        assert_ne!(seen[0], seen[1]);
    }

    #[test]
    fn deterministic_under_seed() {
        let f = |x: &[f64]| Ok((x[0] - 0.7).powi(2));
        let a = minimize(1, 8, 11, f).unwrap();
        let b = minimize(1, 8, 11, f).unwrap();
        assert_eq!(
            a.history.iter().map(|t| t.x.clone()).collect::<Vec<_>>(),
            b.history.iter().map(|t| t.x.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn finds_quadratic_minimum() {
        let r = minimize(1, 20, 1, |x| Ok((x[0] - 0.3).powi(2))).unwrap();
        assert!((r.best_trial().x[0] - 0.3).abs() <= 0.05);
        assert!(r.history.iter().all(|t| t.x.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn failures_are_recorded() {
        let r = minimize(1, 5, 0, |x| {
            if x[0] < 0.5 {
                Err(Error::Diverged("boom".into()))
            } else {
                Ok(x[0])
            }
        });
        match r {
            Ok(r) => assert!(r.best_trial().status == TrialStatus::Completed),
            Err(e) => assert!(matches!(e, Error::AllTrialsFailed)),
        }
        assert!(matches!(
            minimize(1, 4, 0, |_| Err(Error::Diverged("x".into()))),
            Err(Error::AllTrialsFailed)
        ));
        assert!(minimize(1, 2, 0, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn decode_respects_bounds() {
        let s = SearchSpace::default();
        let lo = s.decode(&[0.0, 0.0, 0.0]);
        let hi = s.decode(&[1.0, 1.0, 1.0]);
        assert!((lo.learning_rate - 1e-5).abs() < 1e-18);
        assert!((hi.learning_rate - 1e-2).abs() < 1e-15);
        assert_eq!((lo.d_e, lo.d_h, hi.d_e, hi.d_h), (4, 4, 128, 128));
    }

    #[test]
    fn presets() {
        assert_eq!(published_preset(ModelKind::Rnn).d_h, 854);
        assert_eq!(published_preset(ModelKind::Arnn).d_e, 659);
    }

    #[test]
    fn model_search_runs() {
        let vocab = crate::models::Vocab::new(3);
        let ex = |c: &[u32]| {
            Example::new(&CellSequence::from_cells(c.iter().map(|&i| CellId(i))), &vocab, None).unwrap()
        };
        let data = vec![ex(&[1, 2, 3]), ex(&[3, 2, 1]), ex(&[1, 3])];
        let space = SearchSpace {
            learning_rate: (1e-3, 1e-1),
            d_e: (2, 4),
            d_h: (2, 4),
        };
        let s = search(space, ModelKind::Rnn, 3, &data, &data[..1], 4, 2, 3).unwrap();
        assert_eq!(s.result.history.len(), 4);
        let mut out = Vec::new();
        write_history(&mut out, &s).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# model=rnn"));
        assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 1);
    }
}
