use std::collections::HashSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cellspace::{CellSequence, PointRow, RawTrajectory, TrajPoint};
use crate::error::{Error, Result};

/// A device that stays silent for longer than this has ended its trip.
pub const TRIP_GAP_SECONDS: f64 = 3600.0;

/// Groups rows by `trip_id` (treated as a device id) and cuts each device's
/// stream wherever consecutive points are more than an hour apart.
///
/// When a device yields several trips they are named `<id>.1`, `<id>.2`, ...
pub fn load_and_terminate(rows: &[PointRow]) -> Result<Vec<RawTrajectory>> {
    let mut out = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut i = 0;
    while i < rows.len() {
        let id = rows[i].trip_id.as_str();
        if !seen.insert(id) {
            return Err(Error::Unsorted {
                row: i + 1,
                message: format!("trip {id} is not contiguous"),
            });
        }
        let mut j = i;
        let mut pieces: Vec<Vec<TrajPoint>> = vec![Vec::new()];
        while j < rows.len() && rows[j].trip_id == id {
            let r = &rows[j];
            if let Some(prev) = pieces.last().and_then(|p| p.last()) {
                if r.t < prev.t {
                    return Err(Error::Unsorted {
                        row: j + 1,
                        message: format!("time decreases within trip {id}"),
                    });
                }
                if r.t - prev.t > TRIP_GAP_SECONDS {
                    pieces.push(Vec::new());
                }
            }
            pieces.last_mut().unwrap().push(TrajPoint {
                x: r.x,
                y: r.y,
                t: r.t,
            });
            j += 1;
        }
        let n = pieces.len();
        for (k, pts) in pieces.into_iter().enumerate() {
            let name = if n == 1 {
                id.to_string()
            } else {
                format!("{id}.{}", k + 1)
            };
            out.push(RawTrajectory::new(name, pts)?);
        }
        i = j;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// A discretized trip with the information the models need.
#[derive(Debug, Clone, PartialEq)]
pub struct TripSequence {
    pub trip_id: String,
    pub start_time: f64,
    pub sequence: CellSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Default for Splits<T> {
    fn default() -> Self {
        Self {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        }
    }
}

impl<T> Splits<T> {
    pub fn get(&self, split: Split) -> &[T] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub type Dataset = Splits<TripSequence>;

/// Seeded random assignment into disjoint splits of `floor(fraction * n)`
/// items each. Items left over when fractions sum below one are dropped.
pub fn split_dataset<T>(items: Vec<T>, fractions: [f64; 3], seed: u64) -> Result<Splits<T>> {
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || sum > 1.0 + 1e-9 {
        return Err(Error::InvalidFractions(fractions));
    }
    let n = items.len();
    let sizes = fractions.map(|f| ((f * n as f64) + 1e-9).floor() as usize);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut label = vec![None; n];
    let mut cursor = 0;
    for (s, &size) in [Split::Train, Split::Validation, Split::Test].iter().zip(&sizes) {
        for &idx in &order[cursor..cursor + size] {
            label[idx] = Some(*s);
        }
        cursor += size;
    }
    let mut out = Splits {
        train: Vec::with_capacity(sizes[0]),
        validation: Vec::with_capacity(sizes[1]),
        test: Vec::with_capacity(sizes[2]),
    };
    // Items keep their input order inside each split.
    for (item, l) in items.into_iter().zip(label) {
        match l {
            Some(Split::Train) => out.train.push(item),
            Some(Split::Validation) => out.validation.push(item),
            Some(Split::Test) => out.test.push(item),
            None => {}
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SequenceRow {
    trip_id: String,
    split: Split,
    start_time: f64,
    tokens: String,
}

pub fn write_sequences<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for split in [Split::Train, Split::Validation, Split::Test] {
        for s in data.get(split) {
            w.serialize(SequenceRow {
                trip_id: s.trip_id.clone(),
                split,
                start_time: s.start_time,
                tokens: s.sequence.to_string(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sequences<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut data = Dataset::default();
    for (i, rec) in rdr.deserialize::<SequenceRow>().enumerate() {
        let bad = |m: String| Error::MalformedRow { row: i + 2, message: m };
        let row = rec.map_err(|e| bad(e.to_string()))?;
        let sequence: CellSequence = row.tokens.parse().map_err(|e: Error| bad(e.to_string()))?;
        let ts = TripSequence {
            trip_id: row.trip_id,
            start_time: row.start_time,
            sequence,
        };
        match row.split {
            Split::Train => data.train.push(ts),
            Split::Validation => data.validation.push(ts),
            Split::Test => data.test.push(ts),
        }
    }
    Ok(data)
}
