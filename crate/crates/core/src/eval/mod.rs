//! Prefix-conditioned evaluation: split each test trip after `g` cells, sample
//! `k` continuations, score them against the true continuation, and summarize
//! by sequence length.

mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{
    aggregate_by_length, improvement_rate, read_scores, write_aggregates, write_improvement,
    write_scores, ImprovementReport, LengthAggregate, RateRow, RatioRow, Summary, SCORE_HEADER,
};

use crate::cellspace::{CellId, CellSequence, Token};
use crate::corpus::{TrafficStateTensor, TripSequence};
use crate::error::{Error, Result};
use crate::metrics::ScoreVector;
use crate::models::{default_max_len, Decoder, Model};

/// Human-readable statement of [`candidate_seed`], stored with outputs.
pub const SEED_MIXING: &str =
    "splitmix64(splitmix64(splitmix64(master ^ fnv1a64(trip_id)) ^ g) ^ candidate_index)";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTask {
    pub trip_id: String,
    pub start_time: f64,
    pub reference: CellSequence,
    pub g: usize,
}

impl EvalTask {
    pub fn new(trip: &TripSequence, g: usize) -> Result<Self> {
        let m = trip.sequence.m();
        if g == 0 || g >= m {
            return Err(Error::InvalidTask(format!(
                "{}: g={g} outside 1..{m}",
                trip.trip_id
            )));
        }
        Ok(Self {
            trip_id: trip.trip_id.clone(),
            start_time: trip.start_time,
            reference: trip.sequence.clone(),
            g,
        })
    }

    pub fn m(&self) -> usize {
        self.reference.m()
    }

    /// `#start` followed by the first `g` cells.
    pub fn prefix(&self) -> Vec<Token> {
        self.reference.tokens()[..=self.g].to_vec()
    }

    /// Cells `g+1..=m` of the reference.
    pub fn continuation(&self) -> Vec<CellId> {
        self.reference.cells()[self.g..].to_vec()
    }
}

/// Which prefix lengths to evaluate for each sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GPolicy {
    /// Every `g` in `1..m`.
    #[default]
    All,
    /// Only these values, where valid for the sequence.
    Fixed(Vec<usize>),
}

/// One task per valid `(sequence, g)`. Returns the tasks and the number of
/// sequences skipped for having fewer than two cells.
pub fn make_tasks(trips: &[TripSequence], policy: &GPolicy) -> (Vec<EvalTask>, usize) {
    let mut tasks = Vec::new();
    let mut skipped = 0;
    for t in trips {
        let m = t.sequence.m();
        if m < 2 {
            skipped += 1;
            continue;
        }
        let gs: Vec<usize> = match policy {
            GPolicy::All => (1..m).collect(),
            GPolicy::Fixed(v) => v.iter().copied().filter(|&g| g >= 1 && g < m).collect(),
        };
        for g in gs {
            tasks.push(EvalTask::new(t, g).expect("g checked against m"));
        }
    }
    (tasks, skipped)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of one candidate stream; see [`SEED_MIXING`].
pub fn candidate_seed(master: u64, trip_id: &str, g: usize, index: usize) -> u64 {
    let h = splitmix64(master ^ fnv1a64(trip_id));
    let h = splitmix64(h ^ g as u64);
    splitmix64(h ^ index as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Candidates per task.
    pub k: usize,
    pub master_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 100,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub trip_id: String,
    pub g: usize,
    pub m: usize,
    pub mean: ScoreVector,
    /// Per-candidate scores in candidate-index order.
    pub raw: Vec<ScoreVector>,
    /// Candidates that hit the length cap before `#end`.
    pub unterminated: usize,
}

/// Samples `k` continuations of the task prefix and scores each against the
/// reference continuation.
pub fn run_task(
    task: &EvalTask,
    model: &Model,
    traffic: Option<&TrafficStateTensor>,
    cfg: &EvalConfig,
) -> Result<ScoreRecord> {
    if cfg.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let decoder = Decoder::new(model, traffic)?;
    let prefix = task.prefix();
    let reference = task.continuation();
    let max_len = default_max_len(task.reference.tokens().len()).max(prefix.len() + 2);
    let mut raw = Vec::with_capacity(cfg.k);
    let mut unterminated = 0;
    for i in 0..cfg.k {
        let mut rng = ChaCha8Rng::seed_from_u64(candidate_seed(cfg.master_seed, &task.trip_id, task.g, i));
        let out = decoder.sample(&prefix, &mut rng, max_len)?;
        if !out.terminated {
            unterminated += 1;
        }
        let cand: Vec<CellId> = out.tokens[prefix.len()..].iter().filter_map(|t| t.cell()).collect();
        raw.push(ScoreVector::score(&cand, &reference));
    }
    Ok(ScoreRecord {
        trip_id: task.trip_id.clone(),
        g: task.g,
        m: task.m(),
        mean: ScoreVector::mean(&raw),
        raw,
        unterminated,
    })
}

/// Runs every task in parallel; records come back in task order.
pub fn run_tasks<F>(tasks: &[EvalTask], model: &Model, traffic: F, cfg: &EvalConfig) -> Result<Vec<ScoreRecord>>
where
    F: Fn(&EvalTask) -> Result<Option<TrafficStateTensor>> + Sync,
{
    let records: Vec<ScoreRecord> = tasks
        .par_iter()
        .map(|t| {
            let tr = traffic(t)?;
            run_task(t, model, tr.as_ref(), cfg)
        })
        .collect::<Result<_>>()?;
    let capped: usize = records.iter().map(|r| r.unterminated).sum();
    if capped > 0 {
        log::info!("{capped} candidates reached the length cap without #end");
    }
    Ok(records)
}
