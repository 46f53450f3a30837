use std::io::{BufRead, BufReader, Read, Write};

use crate::cellspace::{assign_cell, CellId, CellMap, RawTrajectory};
use crate::error::{Error, Result};

/// Minutes of history fed to the attention model.
pub const WINDOW_MINUTES: usize = 10;

const ACCUMULATION_VERSION: &str = "accumulation-v1";

/// Epoch-aligned minute containing `t`.
pub fn minute_of(t: f64) -> i64 {
    (t / 60.0).floor() as i64
}

/// Vehicle counts per (minute, cell) plus each cell's historical maximum.
///
/// Counts are sampled at minute boundaries `60 * k`. A vehicle is present in
/// the cell of its most recent detection while its trip interval covers the
/// boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulationSeries {
    n_cells: usize,
    first_minute: i64,
    n_minutes: usize,
    counts: Vec<u32>,
    max: Vec<u32>,
}

impl AccumulationSeries {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn first_minute(&self) -> i64 {
        self.first_minute
    }

    pub fn last_minute(&self) -> i64 {
        self.first_minute + self.n_minutes as i64 - 1
    }

    pub fn n_minutes(&self) -> usize {
        self.n_minutes
    }

    pub fn maxima(&self) -> &[u32] {
        &self.max
    }

    /// Raw count for `cell` at `minute`; zero outside the covered range.
    pub fn count(&self, minute: i64, cell: CellId) -> u32 {
        let off = minute - self.first_minute;
        if off < 0 || off as usize >= self.n_minutes || cell.0 == 0 || cell.index() >= self.n_cells {
            return 0;
        }
        self.counts[off as usize * self.n_cells + cell.index()]
    }

    pub fn minute_counts(&self, minute: i64) -> Option<&[u32]> {
        let off = minute - self.first_minute;
        if off < 0 || off as usize >= self.n_minutes {
            return None;
        }
        let s = off as usize * self.n_cells;
        Some(&self.counts[s..s + self.n_cells])
    }

    /// Replaces the per-cell maxima, e.g. with those of the training period.
    pub fn with_maxima(mut self, maxima: &[u32]) -> Result<Self> {
        if maxima.len() != self.n_cells {
            return Err(Error::Shape(format!(
                "{} maxima for {} cells",
                maxima.len(),
                self.n_cells
            )));
        }
        self.max = maxima.to_vec();
        Ok(self)
    }

    /// Divides every count by its cell's historical max. Cells that were never
    /// occupied stay at zero; counts above the max are clamped to one and
    /// tallied in [`NormalizedSeries::clamped`].
    pub fn normalize(&self) -> NormalizedSeries {
        let mut clamped = 0;
        let mut values = Vec::with_capacity(self.counts.len());
        for row in self.counts.chunks(self.n_cells.max(1)) {
            for (&c, &m) in row.iter().zip(&self.max) {
                values.push(if m == 0 {
                    if c > 0 {
                        clamped += 1;
                    }
                    0.0
                } else if c > m {
                    clamped += 1;
                    1.0
                } else {
                    c as f64 / m as f64
                });
            }
        }
        if clamped > 0 {
            log::info!("normalization clamped {clamped} entries above the historical maximum");
        }
        NormalizedSeries {
            n_cells: self.n_cells,
            first_minute: self.first_minute,
            n_minutes: self.n_minutes,
            values,
            clamped,
        }
    }
}

/// Accumulation scaled into [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    n_cells: usize,
    first_minute: i64,
    n_minutes: usize,
    values: Vec<f64>,
    /// Entries that exceeded their historical max (or had none) and were clamped.
    pub clamped: usize,
}

impl NormalizedSeries {
    pub fn value(&self, minute: i64, cell: CellId) -> f64 {
        let off = minute - self.first_minute;
        if off < 0 || off as usize >= self.n_minutes || cell.0 == 0 || cell.index() >= self.n_cells {
            return 0.0;
        }
        self.values[off as usize * self.n_cells + cell.index()]
    }

    pub fn first_minute(&self) -> i64 {
        self.first_minute
    }

    pub fn last_minute(&self) -> i64 {
        self.first_minute + self.n_minutes as i64 - 1
    }
}

/// Counts over the minute range spanned by the trips themselves.
pub fn compute_accumulation(trips: &[RawTrajectory], map: &CellMap) -> Result<AccumulationSeries> {
    if trips.is_empty() {
        return Err(Error::EmptyInput);
    }
    let first = trips
        .iter()
        .map(|t| (t.start_time() / 60.0).ceil() as i64)
        .min()
        .unwrap();
    let last = trips.iter().map(|t| minute_of(t.end_time())).max().unwrap();
    compute_accumulation_over(trips, map, first, last.max(first))
}

/// Counts over the inclusive minute range `[first_minute, last_minute]`.
pub fn compute_accumulation_over(
    trips: &[RawTrajectory],
    map: &CellMap,
    first_minute: i64,
    last_minute: i64,
) -> Result<AccumulationSeries> {
    if last_minute < first_minute {
        return Err(Error::Config(format!(
            "empty minute range {first_minute}..={last_minute}"
        )));
    }
    let n_cells = map.len();
    let n_minutes = (last_minute - first_minute + 1) as usize;
    let mut counts = vec![0u32; n_minutes * n_cells];

    for trip in trips {
        let pts = trip.points();
        let cells = pts
            .iter()
            .map(|p| assign_cell(p.xy(), map))
            .collect::<Result<Vec<_>>>()?;
        let k0 = ((trip.start_time() / 60.0).ceil() as i64).max(first_minute);
        let k1 = minute_of(trip.end_time()).min(last_minute);
        let mut latest = 0;
        for k in k0..=k1 {
            let boundary = (k * 60) as f64;
            while latest + 1 < pts.len() && pts[latest + 1].t <= boundary {
                latest += 1;
            }
            let row = (k - first_minute) as usize;
            counts[row * n_cells + cells[latest].index()] += 1;
        }
    }

    let mut max = vec![0u32; n_cells];
    for row in counts.chunks(n_cells) {
        for (m, &c) in max.iter_mut().zip(row) {
            *m = (*m).max(c);
        }
    }
    Ok(AccumulationSeries {
        n_cells,
        first_minute,
        n_minutes,
        counts,
        max,
    })
}

/// Normalized accumulation of the active cells over the ten minutes before a trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficStateTensor {
    n_cells: usize,
    values: Vec<f64>,
}

impl TrafficStateTensor {
    /// `values` is row-major `[n_cells, WINDOW_MINUTES]`.
    pub fn new(n_cells: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_cells * WINDOW_MINUTES {
            return Err(Error::Shape(format!(
                "traffic tensor needs {} values, got {}",
                n_cells * WINDOW_MINUTES,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite traffic value".into()));
        }
        Ok(Self { n_cells, values })
    }

    pub fn zeros(n_cells: usize) -> Self {
        Self {
            n_cells,
            values: vec![0.0; n_cells * WINDOW_MINUTES],
        }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.n_cells, WINDOW_MINUTES]
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.values[cell * WINDOW_MINUTES..(cell + 1) * WINDOW_MINUTES]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reorders cells: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let values = perm.iter().flat_map(|&p| self.row(p).iter().copied()).collect();
        Self {
            n_cells: self.n_cells,
            values,
        }
    }
}

/// Looks up minutes `start-10 .. start-1` for each of `cells`, in that order.
pub fn traffic_window(
    series: &NormalizedSeries,
    trip_start: f64,
    cells: &[CellId],
) -> Result<TrafficStateTensor> {
    let start = minute_of(trip_start);
    let window_start = start - WINDOW_MINUTES as i64;
    if window_start < series.first_minute() {
        return Err(Error::InsufficientHistory {
            window_start,
            series_start: series.first_minute(),
        });
    }
    if start - 1 > series.last_minute() {
        return Err(Error::WindowBeyondSeries {
            window_end: start - 1,
            series_end: series.last_minute(),
        });
    }
    let mut values = Vec::with_capacity(cells.len() * WINDOW_MINUTES);
    for &c in cells {
        for minute in window_start..start {
            values.push(series.value(minute, c));
        }
    }
    TrafficStateTensor::new(cells.len(), values)
}

/// Header, a `max,...` row with historical maxima, then one row per minute:
/// `minute,count_1,...,count_N`.
pub fn write_accumulation<W: Write>(mut w: W, series: &AccumulationSeries) -> Result<()> {
    writeln!(
        w,
        "# {} cells={} first_minute={} minutes={}",
        ACCUMULATION_VERSION, series.n_cells, series.first_minute, series.n_minutes
    )?;
    let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
    writeln!(w, "max,{}", join(&series.max))?;
    for (i, row) in series.counts.chunks(series.n_cells.max(1)).enumerate() {
        writeln!(w, "{},{}", series.first_minute + i as i64, join(row))?;
    }
    Ok(())
}

pub fn read_accumulation<R: Read>(reader: R) -> Result<AccumulationSeries> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty accumulation file".into()))??;
    let mut fields = header.trim_start_matches('#').split_whitespace();
    if fields.next() != Some(ACCUMULATION_VERSION) {
        return Err(Error::Format(format!("unsupported accumulation header: {header}")));
    }
    let (mut n_cells, mut first, mut n_minutes) = (None, None, None);
    for f in fields {
        match f.split_once('=') {
            Some(("cells", v)) => n_cells = v.parse::<usize>().ok(),
            Some(("first_minute", v)) => first = v.parse::<i64>().ok(),
            Some(("minutes", v)) => n_minutes = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    let missing = || Error::Format("accumulation header incomplete".into());
    let n_cells = n_cells.ok_or_else(missing)?;
    let first_minute = first.ok_or_else(missing)?;
    let n_minutes = n_minutes.ok_or_else(missing)?;

    let parse_row = |row: usize, line: &str| -> Result<(String, Vec<u32>)> {
        let mut parts = line.split(',');
        let key = parts.next().unwrap_or_default().trim().to_string();
        let vals = parts
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedRow {
                row,
                message: e.to_string(),
            })?;
        if vals.len() != n_cells {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected {n_cells} counts, got {}", vals.len()),
            });
        }
        Ok((key, vals))
    };

    let max_line = lines.next().ok_or_else(missing)??;
    let (key, max) = parse_row(2, &max_line)?;
    if key != "max" {
        return Err(Error::Format("second line must hold maxima".into()));
    }
    let mut counts = Vec::with_capacity(n_cells * n_minutes);
    let mut seen = 0usize;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (key, vals) = parse_row(i + 3, &line)?;
        let expected = first_minute + seen as i64;
        if key.parse::<i64>().ok() != Some(expected) {
            return Err(Error::MalformedRow {
                row: i + 3,
                message: format!("expected minute {expected}"),
            });
        }
        counts.extend(vals);
        seen += 1;
    }
    if seen != n_minutes {
        return Err(Error::Format(format!("expected {n_minutes} minutes, found {seen}")));
    }
    Ok(AccumulationSeries {
        n_cells,
        first_minute,
        n_minutes,
        counts,
        max,
    })
}
