use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;

use super::ScoreRecord;
use crate::error::{Error, Result};
use crate::metrics::ScoreVector;

pub const SCORE_HEADER: [&str; 8] = ["trip_id", "g", "m", "bleu1", "bleu2", "bleu3", "bleu4", "meteor"];

/// Writes one row per record with the mean scores.
pub fn write_scores<W: Write>(w: W, records: &[ScoreRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SCORE_HEADER)?;
    for r in records {
        let mut row = vec![r.trip_id.clone(), r.g.to_string(), r.m.to_string()];
        row.extend(r.mean.to_array().iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a score file; per-candidate raws are not stored there, so each
/// record's `raw` holds only its mean.
pub fn read_scores<R: Read>(r: R) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SCORE_HEADER {
        return Err(Error::Format(format!("unexpected score header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| Error::MalformedRow { row: i + 2, message: m };
        let num = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(e.to_string()));
        let int = |k: usize| rec[k].parse::<usize>().map_err(|e| bad(e.to_string()));
        let mean = ScoreVector::from_array([num(3)?, num(4)?, num(5)?, num(6)?, num(7)?]);
        out.push(ScoreRecord {
            trip_id: rec[0].to_string(),
            g: int(1)?,
            m: int(2)?,
            mean,
            raw: vec![mean],
            unterminated: 0,
        });
    }
    Ok(out)
}

/// Distribution summary of one score; quartiles use linear interpolation
/// between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        }
    }
}

/// Statistics of records sharing `m`, either for one `g` or over all `g`
/// (`g == None`).
#[derive(Debug, Clone, PartialEq)]
pub struct LengthAggregate {
    pub m: usize,
    pub g: Option<usize>,
    pub count: usize,
    pub scores: [Summary; 5],
}

fn summarize(m: usize, g: Option<usize>, recs: &[&ScoreRecord]) -> LengthAggregate {
    let scores = std::array::from_fn(|k| {
        let v: Vec<f64> = recs.iter().map(|r| r.mean.to_array()[k]).collect();
        Summary::of(&v)
    });
    LengthAggregate {
        m,
        g,
        count: recs.len(),
        scores,
    }
}

/// Per-`(m, g)` groups followed, for each `m`, by the marginal over `g`.
pub fn aggregate_by_length(records: &[ScoreRecord]) -> Vec<LengthAggregate> {
    let mut by_m: BTreeMap<usize, BTreeMap<usize, Vec<&ScoreRecord>>> = BTreeMap::new();
    for r in records {
        by_m.entry(r.m).or_default().entry(r.g).or_default().push(r);
    }
    let mut out = Vec::new();
    for (m, by_g) in by_m {
        let mut all = Vec::new();
        for (g, recs) in by_g {
            out.push(summarize(m, Some(g), &recs));
            all.extend(recs);
        }
        out.push(summarize(m, None, &all));
    }
    out
}

pub fn write_aggregates<W: Write>(w: W, aggs: &[LengthAggregate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["m".to_string(), "g".to_string(), "count".to_string()];
    for name in ScoreVector::NAMES {
        for stat in ["mean", "min", "q1", "median", "q3", "max"] {
            header.push(format!("{name}_{stat}"));
        }
    }
    out.write_record(&header)?;
    for a in aggs {
        let mut row = vec![
            a.m.to_string(),
            a.g.map_or("all".to_string(), |g| g.to_string()),
            a.count.to_string(),
        ];
        for s in &a.scores {
            row.extend([s.mean, s.min, s.q1, s.median, s.q3, s.max].map(|v| v.to_string()));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Ratio of mean ARNN score to mean RNN score for one `(g, m)` group. `None`
/// where the RNN mean is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub g: usize,
    pub m: usize,
    pub count: usize,
    pub ratios: [Option<f64>; 5],
}

/// Average, min and max of the defined `(g, m)` ratios for one `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub m: usize,
    pub mean: [f64; 5],
    pub min: [f64; 5],
    pub max: [f64; 5],
    pub groups: [usize; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementReport {
    pub per_group: Vec<RatioRow>,
    pub per_m: Vec<RateRow>,
    /// Ratios left undefined by a zero RNN score.
    pub excluded: usize,
}

/// Compares two record sets over the same `(trip_id, g)` keys.
pub fn improvement_rate(arnn: &[ScoreRecord], rnn: &[ScoreRecord]) -> Result<ImprovementReport> {
    let key = |r: &ScoreRecord| (r.trip_id.clone(), r.g);
    let a: BTreeMap<_, &ScoreRecord> = arnn.iter().map(|r| (key(r), r)).collect();
    let b: BTreeMap<_, &ScoreRecord> = rnn.iter().map(|r| (key(r), r)).collect();
    if a.len() != arnn.len() || b.len() != rnn.len() {
        return Err(Error::MismatchedRecords("duplicate (trip_id, g) keys".into()));
    }
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::MismatchedRecords("record keys differ".into()));
    }
    let mut groups: BTreeMap<(usize, usize), (Vec<[f64; 5]>, Vec<[f64; 5]>)> = BTreeMap::new();
    for (k, ra) in &a {
        let rb = b[k];
        if ra.m != rb.m {
            return Err(Error::MismatchedRecords(format!("{}: m differs", k.0)));
        }
        let e = groups.entry((ra.m, ra.g)).or_default();
        e.0.push(ra.mean.to_array());
        e.1.push(rb.mean.to_array());
    }
    let mean = |v: &[[f64; 5]]| -> [f64; 5] {
        let mut s = [0.0; 5];
        for x in v {
            s.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        }
        s.map(|x| x / v.len() as f64)
    };
    let mut per_group = Vec::new();
    let mut excluded = 0;
    for (&(m, g), (va, vb)) in &groups {
        let (ma, mb) = (mean(va), mean(vb));
        let ratios = std::array::from_fn(|k| {
            if mb[k] == 0.0 {
                excluded += 1;
                None
            } else {
                Some(ma[k] / mb[k])
            }
        });
        per_group.push(RatioRow {
            g,
            m,
            count: va.len(),
            ratios,
        });
    }
    let mut per_m = Vec::new();
    let mut by_m: BTreeMap<usize, Vec<&RatioRow>> = BTreeMap::new();
    for r in &per_group {
        by_m.entry(r.m).or_default().push(r);
    }
    for (m, rows) in by_m {
        let mut row = RateRow {
            m,
            mean: [f64::NAN; 5],
            min: [f64::NAN; 5],
            max: [f64::NAN; 5],
            groups: [0; 5],
        };
        for k in 0..5 {
            let v: Vec<f64> = rows.iter().filter_map(|r| r.ratios[k]).collect();
            if v.is_empty() {
                continue;
            }
            row.mean[k] = v.iter().sum::<f64>() / v.len() as f64;
            row.min[k] = v.iter().copied().fold(f64::INFINITY, f64::min);
            row.max[k] = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.groups[k] = v.len();
        }
        per_m.push(row);
    }
    Ok(ImprovementReport {
        per_group,
        per_m,
        excluded,
    })
}

/// Writes the per-`(g, m)` ratios and then the per-`m` summary as two CSV
/// blocks separated by a blank line.
pub fn write_improvement<W: Write>(mut w: W, rep: &ImprovementReport) -> Result<()> {
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    {
        let mut out = csv::Writer::from_writer(&mut w);
        let mut header = vec!["m", "g", "count"];
        header.extend(ScoreVector::NAMES);
        out.write_record(&header)?;
        for r in &rep.per_group {
            let mut row = vec![r.m.to_string(), r.g.to_string(), r.count.to_string()];
            row.extend(r.ratios.iter().map(|&x| fmt(x)));
            out.write_record(&row)?;
        }
        out.flush()?;
    }
    writeln!(w)?;
    let mut out = csv::Writer::from_writer(&mut w);
    let mut header = vec!["m".to_string()];
    for name in ScoreVector::NAMES {
        for stat in ["mean", "min", "max"] {
            header.push(format!("{name}_{stat}"));
        }
    }
    out.write_record(&header)?;
    for r in &rep.per_m {
        let mut row = vec![r.m.to_string()];
        for k in 0..5 {
            let d = r.groups[k] > 0;
            row.extend([r.mean[k], r.min[k], r.max[k]].map(|x| fmt(d.then_some(x))));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
