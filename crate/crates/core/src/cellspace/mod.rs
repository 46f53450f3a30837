//! Spatial discretization: raw (x, y, t) traces become sequences of cell ids.
//!
//! Cells come from a single greedy clustering pass over the training points,
//! and every later lookup is a nearest-centroid query, which is exactly the
//! Voronoi partition induced by the centroids.

mod io;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_cellmap, read_point_rows, write_cellmap, write_point_rows, PointRow};

/// 1-based index of a cell in a [`CellMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId(pub u32);

impl CellId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One element of a cell sequence, including the two virtual trip markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Start,
    End,
    Cell(CellId),
}

impl Token {
    pub fn cell(self) -> Option<CellId> {
        match self {
            Token::Cell(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_virtual(self) -> bool {
        !matches!(self, Token::Cell(_))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Start => f.write_str("#start"),
            Token::End => f.write_str("#end"),
            Token::Cell(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "#start" => Ok(Token::Start),
            "#end" => Ok(Token::End),
            _ => match s.parse::<u32>() {
                Ok(v) if v >= 1 => Ok(Token::Cell(CellId(v))),
                _ => Err(Error::UnknownToken(s.to_string())),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn check(self) -> Result<Self> {
        if self.x.is_finite() && self.y.is_finite() {
            Ok(self)
        } else {
            Err(Error::InvalidPoint { x: self.x, y: self.y })
        }
    }

    fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// A timestamped position in planar meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint {
    pub x: f64,
    pub y: f64,
    /// Seconds since epoch.
    pub t: f64,
}

impl TrajPoint {
    pub fn xy(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// An ordered trace of one trip.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub trip_id: String,
    points: Vec<TrajPoint>,
}

impl RawTrajectory {
    /// Validates that the trace is non-empty, finite and time-ordered.
    pub fn new(trip_id: impl Into<String>, points: Vec<TrajPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        for (i, p) in points.iter().enumerate() {
            Point::new(p.x, p.y).check()?;
            if !p.t.is_finite() {
                return Err(Error::InvalidPoint { x: p.x, y: p.y });
            }
            if i > 0 && p.t < points[i - 1].t {
                return Err(Error::Unsorted {
                    row: i,
                    message: format!("time decreases from {} to {}", points[i - 1].t, p.t),
                });
            }
        }
        Ok(Self {
            trip_id: trip_id.into(),
            points,
        })
    }

    pub fn points(&self) -> &[TrajPoint] {
        &self.points
    }

    pub fn start_time(&self) -> f64 {
        self.points[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub const CELLMAP_VERSION: &str = "cellmap-v1";

/// Learned spatial discretization. Cell `k` (1-based) has centroid `centroids[k-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMap {
    centroids: Vec<Point>,
    radius: f64,
}

impl CellMap {
    pub fn new(centroids: Vec<Point>, radius: f64) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::NoPoints);
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidRadius(radius));
        }
        for c in &centroids {
            c.check()?;
        }
        Ok(Self { centroids, radius })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn centroids(&self) -> &[Point] {
        &self.centroids
    }

    pub fn centroid(&self, id: CellId) -> Option<Point> {
        if id.0 == 0 {
            return None;
        }
        self.centroids.get(id.index()).copied()
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = CellId> {
        (1..=self.centroids.len() as u32).map(CellId)
    }
}

/// Running sum of a cluster's members; the centroid is always the exact mean.
struct Cluster {
    sx: f64,
    sy: f64,
    n: usize,
}

impl Cluster {
    fn centroid(&self) -> Point {
        Point::new(self.sx / self.n as f64, self.sy / self.n as f64)
    }
}

/// Buckets centroids on a square grid of side `radius` so that every centroid
/// within `radius` of a query lies in the 3x3 block around the query's bucket.
struct Buckets {
    side: f64,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl Buckets {
    fn key(&self, p: Point) -> (i64, i64) {
        ((p.x / self.side).floor() as i64, (p.y / self.side).floor() as i64)
    }

    fn insert(&mut self, p: Point, idx: usize) {
        let k = self.key(p);
        self.map.entry(k).or_default().push(idx);
    }

    fn relocate(&mut self, from: Point, to: Point, idx: usize) {
        let (a, b) = (self.key(from), self.key(to));
        if a == b {
            return;
        }
        if let Some(v) = self.map.get_mut(&a) {
            v.retain(|&i| i != idx);
        }
        self.map.entry(b).or_default().push(idx);
    }

    fn near(&self, p: Point) -> impl Iterator<Item = usize> + '_ {
        let (kx, ky) = self.key(p);
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                self.map
                    .get(&(kx + dx, ky + dy))
                    .into_iter()
                    .flat_map(|v| v.iter().copied())
            })
        })
    }
}

/// Single-pass greedy clustering: each point joins the nearest existing
/// cluster whose current centroid is within `radius`, otherwise it opens a
/// new cluster. Centroids are exact member means; cell ids follow the order
/// in which clusters were opened.
pub fn cluster_points(points: &[Point], radius: f64) -> Result<CellMap> {
    if points.is_empty() {
        return Err(Error::NoPoints);
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidRadius(radius));
    }
    let r2 = radius * radius;
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut buckets = Buckets {
        side: radius,
        map: HashMap::new(),
    };

    for &p in points {
        let p = p.check()?;
        let mut best: Option<(f64, usize)> = None;
        for idx in buckets.near(p) {
            let d = clusters[idx].centroid().dist2(p);
            if d > r2 {
                continue;
            }
            best = match best {
                Some((bd, bi)) if bd < d || (bd == d && bi < idx) => Some((bd, bi)),
                _ => Some((d, idx)),
            };
        }
        match best {
            Some((_, idx)) => {
                let before = clusters[idx].centroid();
                let c = &mut clusters[idx];
                c.sx += p.x;
                c.sy += p.y;
                c.n += 1;
                let after = c.centroid();
                buckets.relocate(before, after, idx);
            }
            None => {
                clusters.push(Cluster {
                    sx: p.x,
                    sy: p.y,
                    n: 1,
                });
                buckets.insert(p, clusters.len() - 1);
            }
        }
    }
    CellMap::new(clusters.iter().map(Cluster::centroid).collect(), radius)
}

/// Nearest-centroid lookup; ties resolve to the lowest cell id.
pub fn assign_cell(point: Point, map: &CellMap) -> Result<CellId> {
    let point = point.check()?;
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in map.centroids.iter().enumerate() {
        let d = c.dist2(point);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(CellId(best as u32 + 1))
}

/// A trip as visited cells wrapped in `#start` / `#end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellSequence {
    tokens: Vec<Token>,
}

impl CellSequence {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        let n = tokens.len();
        if n < 2 || tokens[0] != Token::Start || tokens[n - 1] != Token::End {
            return Err(Error::InvalidSequence(
                "must begin with #start and end with #end".into(),
            ));
        }
        let interior = &tokens[1..n - 1];
        if interior.iter().any(|t| t.is_virtual()) {
            return Err(Error::InvalidSequence("interior virtual token".into()));
        }
        if interior.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSequence("consecutive duplicate cell".into()));
        }
        Ok(Self { tokens })
    }

    /// Wraps cells, collapsing consecutive repeats.
    pub fn from_cells(cells: impl IntoIterator<Item = CellId>) -> Self {
        let mut tokens = vec![Token::Start];
        for c in cells {
            if tokens.last() != Some(&Token::Cell(c)) {
                tokens.push(Token::Cell(c));
            }
        }
        tokens.push(Token::End);
        Self { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Number of interior (real) cells.
    pub fn m(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn cells(&self) -> Vec<CellId> {
        self.tokens[1..self.tokens.len() - 1]
            .iter()
            .filter_map(|t| t.cell())
            .collect()
    }
}

impl fmt::Display for CellSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for CellSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens = s
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<Token>>>()?;
        CellSequence::new(tokens)
    }
}

/// Maps every point to its cell, collapses repeats and adds the trip markers.
pub fn discretize_trajectory(tr: &RawTrajectory, map: &CellMap) -> Result<CellSequence> {
    if tr.points.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let cells = tr
        .points
        .iter()
        .map(|p| assign_cell(p.xy(), map))
        .collect::<Result<Vec<_>>>()?;
    Ok(CellSequence::from_cells(cells))
}

/// Teacher-forcing pair: `y` is `x` shifted left by one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XYSample {
    pub x: Vec<Token>,
    pub y: Vec<Token>,
}

pub fn split_xy(seq: &CellSequence) -> Result<XYSample> {
    if seq.m() == 0 {
        return Err(Error::EmptyJourney);
    }
    let n = seq.tokens.len();
    Ok(XYSample {
        x: seq.tokens[..n - 1].to_vec(),
        y: seq.tokens[1..].to_vec(),
    })
}
