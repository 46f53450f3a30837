//! Pipeline stages as plain functions over in-memory data. The subcommands
//! wrap these with file handling; tests call them directly.

use std::collections::HashSet;

use crate::cellspace::{cluster_points, discretize_trajectory, CellId, CellMap, RawTrajectory};
use crate::corpus::{
    compute_accumulation, compute_accumulation_over, split_dataset, traffic_window,
    AccumulationSeries, Dataset, NormalizedSeries, TrafficStateTensor, TripSequence,
};
use crate::error::{Error, Result};
use crate::models::{Example, ModelKind, Vocab};

/// Splits raw trips, clusters the training points into cells and
/// discretizes every trip against that map.
pub fn discretize_trips(
    trips: Vec<RawTrajectory>,
    radius: f64,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(CellMap, Dataset)> {
    let raw = split_dataset(trips, fractions, seed)?;
    let points: Vec<_> = raw.train.iter().flat_map(|t| t.points().iter().map(|p| p.xy())).collect();
    let map = cluster_points(&points, radius)?;
    let seq = |v: &[RawTrajectory]| -> Result<Vec<TripSequence>> {
        v.iter()
            .map(|t| {
                Ok(TripSequence {
                    trip_id: t.trip_id.clone(),
                    start_time: t.start_time(),
                    sequence: discretize_trajectory(t, &map)?,
                })
            })
            .collect()
    };
    let data = Dataset {
        train: seq(&raw.train)?,
        validation: seq(&raw.validation)?,
        test: seq(&raw.test)?,
    };
    Ok((map, data))
}

/// Accumulation over every trip plus background traffic. Historical maxima
/// only see training trips and background, over the same minutes.
pub fn accumulate(
    trips: &[RawTrajectory],
    background: &[RawTrajectory],
    train_ids: &HashSet<&str>,
    map: &CellMap,
) -> Result<AccumulationSeries> {
    let all: Vec<RawTrajectory> = trips.iter().chain(background).cloned().collect();
    let series = compute_accumulation(&all, map)?;
    let seen: Vec<RawTrajectory> = trips
        .iter()
        .filter(|t| train_ids.contains(t.trip_id.as_str()))
        .chain(background)
        .cloned()
        .collect();
    if seen.is_empty() {
        return Err(Error::EmptyInput);
    }
    let reference = compute_accumulation_over(&seen, map, series.first_minute(), series.last_minute())?;
    let maxima = reference.maxima().to_vec();
    series.with_maxima(&maxima)
}

/// Traffic windows over every cell of the map, in cell order.
#[derive(Debug, Clone)]
pub struct TrafficLookup {
    series: NormalizedSeries,
    cells: Vec<CellId>,
}

impl TrafficLookup {
    pub fn new(series: &AccumulationSeries) -> Self {
        Self {
            series: series.normalize(),
            cells: (1..=series.n_cells() as u32).map(CellId).collect(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn window(&self, trip_start: f64) -> Result<TrafficStateTensor> {
        traffic_window(&self.series, trip_start, &self.cells)
    }
}

/// Training examples, with traffic windows only for the attention model.
/// Trips without enough traffic history are dropped; the count is returned.
pub fn build_examples(
    trips: &[TripSequence],
    vocab: &Vocab,
    kind: ModelKind,
    traffic: Option<&TrafficLookup>,
) -> Result<(Vec<Example>, usize)> {
    let mut out = Vec::with_capacity(trips.len());
    let mut dropped = 0;
    for t in trips {
        let window = match (kind, traffic) {
            (ModelKind::Rnn, _) => None,
            (ModelKind::Arnn, None) => {
                return Err(Error::Config("the attention model needs traffic data".into()))
            }
            (ModelKind::Arnn, Some(l)) => match l.window(t.start_time) {
                Ok(w) => Some(w),
                Err(Error::InsufficientHistory { .. } | Error::WindowBeyondSeries { .. }) => {
                    dropped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            },
        };
        out.push(Example::new(&t.sequence, vocab, window)?);
    }
    Ok((out, dropped))
}
