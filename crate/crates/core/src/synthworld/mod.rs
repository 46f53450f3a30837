//! A synthetic two-corridor road network whose drivers avoid whichever
//! corridor is congested when they depart.
//!
//! Nodes sit on a `rows x cols` grid. Trips start on the west column, end on
//! the east column, and run either along the north row or the south row, so
//! the two routes part ways at the very first step. Origins and destinations
//! lie strictly between the corridor rows, or on the north row when the grid
//! has only two rows. Each corridor has a
//! bottleneck of a different length; in every schedule block background
//! vehicles pile up in one of them.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cellspace::{CellMap, Point, PointRow, RawTrajectory, TrajPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corridor {
    North,
    South,
}

impl Corridor {
    pub fn other(self) -> Self {
        match self {
            Corridor::North => Corridor::South,
            Corridor::South => Corridor::North,
        }
    }
}

/// Generator settings. Speeds are in m/s, times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub block_minutes: u32,
    pub blocks: usize,
    /// Bottleneck lengths in nodes, starting one node east of the west column.
    pub north_bottleneck: usize,
    pub south_bottleneck: usize,
    /// Probability of taking the congested corridor anyway.
    pub epsilon: f64,
    pub free_speed: f64,
    pub congested_speed: f64,
    /// Relative spread of per-edge free-flow speed.
    pub speed_jitter: f64,
    pub ping_interval: f64,
    pub gps_noise: f64,
    /// Background vehicles parked in each loaded bottleneck node.
    pub background_load: (u32, u32),
    /// Background vehicles in each unloaded bottleneck node.
    pub background_idle: (u32, u32),
    /// No trip departs earlier than this, so every trip has a full traffic history.
    pub warmup_minutes: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            rows: 7,
            cols: 8,
            spacing: 300.0,
            block_minutes: 60,
            blocks: 48,
            north_bottleneck: 2,
            south_bottleneck: 5,
            epsilon: 0.1,
            free_speed: 12.0,
            congested_speed: 3.0,
            speed_jitter: 0.1,
            ping_interval: 30.0,
            gps_noise: 5.0,
            background_load: (6, 10),
            background_idle: (0, 1),
            warmup_minutes: 15,
        }
    }
}

impl WorldConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("world: {m}")));
        if self.rows < 2 || self.cols < 2 {
            return bad("grid needs at least 2 rows and 2 columns");
        }
        if !(self.spacing > 0.0) {
            return bad("spacing must be positive");
        }
        if self.blocks == 0 || self.block_minutes == 0 {
            return bad("schedule must have at least one block");
        }
        let room = self.cols.saturating_sub(1);
        if self.north_bottleneck == 0 || self.south_bottleneck == 0 || self.north_bottleneck > room || self.south_bottleneck > room {
            return bad("bottlenecks must fit east of the west column");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.free_speed > 0.0 && self.congested_speed > 0.0 && self.ping_interval > 0.0) {
            return bad("speeds and ping interval must be positive");
        }
        if self.warmup_minutes as usize >= self.blocks * self.block_minutes as usize {
            return bad("warm-up leaves no departure window");
        }
        Ok(())
    }
}

/// A grid node, `(row, col)` with row 0 the north edge.
pub type Node = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    /// Loaded corridor per block.
    pub schedule: Vec<Corridor>,
    pub seed: u64,
}

/// Default world of the given size.
pub fn generate_world(rows: usize, cols: usize, spacing: f64, seed: u64) -> Result<World> {
    let mut config = WorldConfig {
        rows,
        cols,
        spacing,
        ..WorldConfig::default()
    };
    let room = cols.saturating_sub(1).max(1);
    config.north_bottleneck = config.north_bottleneck.min(room);
    config.south_bottleneck = config.south_bottleneck.min(room);
    generate_world_with(config, seed)
}

/// Each block loads one corridor, drawn independently and uniformly.
pub fn generate_world_with(config: WorldConfig, seed: u64) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = (0..config.blocks)
        .map(|_| if rng.gen_bool(0.5) { Corridor::North } else { Corridor::South })
        .collect();
    Ok(World {
        config,
        schedule,
        seed,
    })
}

/// One simulated trip with its ground-truth route.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrip {
    pub trajectory: RawTrajectory,
    pub corridor: Corridor,
    pub nodes: Vec<Node>,
}

impl World {
    pub fn horizon_seconds(&self) -> f64 {
        self.schedule.len() as f64 * self.config.block_minutes as f64 * 60.0
    }

    pub fn node_point(&self, (r, c): Node) -> Point {
        Point::new(c as f64 * self.config.spacing, r as f64 * self.config.spacing)
    }

    /// Loaded corridor at time `t`; times past the horizon use the last block.
    pub fn loaded_at(&self, t: f64) -> Corridor {
        let b = (t / (self.config.block_minutes as f64 * 60.0)).floor().max(0.0) as usize;
        self.schedule[b.min(self.schedule.len() - 1)]
    }

    pub fn corridor_row(&self, c: Corridor) -> usize {
        match c {
            Corridor::North => 0,
            Corridor::South => self.config.rows - 1,
        }
    }

    /// Rows on which trips may start and end.
    pub fn od_rows(&self) -> std::ops::Range<usize> {
        if self.config.rows >= 3 {
            1..self.config.rows - 1
        } else {
            0..1
        }
    }

    pub fn bottleneck(&self, c: Corridor) -> Vec<Node> {
        let len = match c {
            Corridor::North => self.config.north_bottleneck,
            Corridor::South => self.config.south_bottleneck,
        };
        let r = self.corridor_row(c);
        (1..=len).map(|col| (r, col)).collect()
    }

    /// West column to `corridor` row, east along it, then to the destination row.
    pub fn route(&self, origin_row: usize, dest_row: usize, corridor: Corridor) -> Vec<Node> {
        let r = self.corridor_row(corridor);
        let last = self.config.cols - 1;
        let mut nodes = Vec::new();
        let toward = |from: usize, to: usize| -> Vec<usize> {
            if from <= to {
                (from..=to).collect()
            } else {
                (to..=from).rev().collect()
            }
        };
        nodes.extend(toward(origin_row, r).into_iter().map(|row| (row, 0)));
        nodes.extend((1..=last).map(|col| (r, col)));
        nodes.extend(toward(r, dest_row).into_iter().skip(1).map(|row| (row, last)));
        nodes
    }

    /// Every node any route can visit, in row-major order.
    pub fn route_nodes(&self) -> Vec<Node> {
        let (rows, cols) = (self.config.rows, self.config.cols);
        let mut v = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if r == 0 || r == rows - 1 || c == 0 || c == cols - 1 {
                    v.push((r, c));
                }
            }
        }
        v
    }

    /// Cell map with one centroid per grid node.
    pub fn grid_map(&self) -> Result<CellMap> {
        let mut pts = Vec::new();
        for r in 0..self.config.rows {
            for c in 0..self.config.cols {
                pts.push(self.node_point((r, c)));
            }
        }
        CellMap::new(pts, self.config.spacing / 2.0)
    }

    /// The same world with every block's loaded corridor swapped.
    pub fn flipped(&self) -> Self {
        let mut w = self.clone();
        w.schedule.iter_mut().for_each(|c| *c = c.other());
        w
    }

    /// Route the driver takes: away from the loaded corridor unless the
    /// `epsilon` coin says otherwise.
    pub fn choose_route<R: Rng>(&self, depart: f64, rng: &mut R) -> Corridor {
        let avoid = self.loaded_at(depart).other();
        if rng.gen_bool(self.config.epsilon) {
            avoid.other()
        } else {
            avoid
        }
    }

    fn trip<R: Rng>(&self, id: String, rng: &mut R) -> Result<SimTrip> {
        let cfg = &self.config;
        let earliest = cfg.warmup_minutes as f64 * 60.0;
        let depart = rng.gen_range(earliest..self.horizon_seconds());
        let od = self.od_rows();
        let origin_row = rng.gen_range(od.clone());
        let dest_row = rng.gen_range(od);
        let corridor = self.choose_route(depart, rng);
        let nodes = self.route(origin_row, dest_row, corridor);
        let noise = Normal::new(0.0, cfg.gps_noise.max(1e-12)).expect("positive std");
        let ping = |p: Point, t: f64, rng: &mut R| TrajPoint {
            x: p.x + if cfg.gps_noise > 0.0 { noise.sample(rng) } else { 0.0 },
            y: p.y + if cfg.gps_noise > 0.0 { noise.sample(rng) } else { 0.0 },
            t,
        };
        let mut points = Vec::new();
        let mut t = depart;
        for (i, &node) in nodes.iter().enumerate() {
            let here = self.node_point(node);
            points.push(ping(here, t, rng));
            let Some(&next) = nodes.get(i + 1) else { break };
            let jam = self.bottleneck(self.loaded_at(t)).contains(&next);
            let speed = if jam {
                cfg.congested_speed
            } else {
                cfg.free_speed * (1.0 + cfg.speed_jitter * rng.gen_range(-1.0..1.0))
            };
            let arrive = t + cfg.spacing / speed;
            // Queued vehicles keep reporting from where they stand.
            let mut tp = t + cfg.ping_interval;
            while tp < arrive - 1e-6 {
                points.push(ping(here, tp, rng));
                tp += cfg.ping_interval;
            }
            t = arrive;
        }
        Ok(SimTrip {
            trajectory: RawTrajectory::new(id, points)?,
            corridor,
            nodes,
        })
    }
}

/// Trips with uniform departure times after the warm-up and uniform origin
/// and destination rows. Each trip uses its own derived seed.
pub fn simulate_trips_detailed(world: &World, n_trips: usize, seed: u64) -> Result<Vec<SimTrip>> {
    if n_trips == 0 {
        return Err(Error::Config("n_trips must be at least 1".into()));
    }
    let width = n_trips.to_string().len();
    (0..n_trips)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            world.trip(format!("trip-{i:0width$}"), &mut rng)
        })
        .collect()
}

pub fn simulate_trips(world: &World, n_trips: usize, seed: u64) -> Result<Vec<RawTrajectory>> {
    Ok(simulate_trips_detailed(world, n_trips, seed)?
        .into_iter()
        .map(|s| s.trajectory)
        .collect())
}

/// Vehicles parked in bottleneck nodes for a whole block: many in the loaded
/// corridor, few in the other. They report once per minute.
pub fn simulate_background(world: &World, seed: u64) -> Result<Vec<RawTrajectory>> {
    let cfg = &world.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let block = cfg.block_minutes as f64 * 60.0;
    let mut out = Vec::new();
    for (b, &loaded) in world.schedule.iter().enumerate() {
        for corridor in [Corridor::North, Corridor::South] {
            let (lo, hi) = if corridor == loaded {
                cfg.background_load
            } else {
                cfg.background_idle
            };
            for node in world.bottleneck(corridor) {
                let count = rng.gen_range(lo..=hi.max(lo));
                for k in 0..count {
                    let p = world.node_point(node);
                    let t0 = b as f64 * block;
                    let points: Vec<TrajPoint> = (0..=cfg.block_minutes)
                        .map(|m| TrajPoint {
                            x: p.x + rng.gen_range(-1.0..1.0) * cfg.gps_noise,
                            y: p.y + rng.gen_range(-1.0..1.0) * cfg.gps_noise,
                            t: t0 + m as f64 * 60.0 - if m == cfg.block_minutes { 1.0 } else { 0.0 },
                        })
                        .collect();
                    out.push(RawTrajectory::new(
                        format!("bg-{b}-{}-{}-{k}", node.0, node.1),
                        points,
                    )?);
                }
            }
        }
    }
    Ok(out)
}

/// Flattens trajectories into point rows for the trajectory file format.
pub fn to_point_rows(trips: &[RawTrajectory]) -> Vec<PointRow> {
    trips
        .iter()
        .flat_map(|tr| {
            tr.points().iter().map(move |p| PointRow {
                trip_id: tr.trip_id.clone(),
                t: p.t,
                x: p.x,
                y: p.y,
            })
        })
        .collect()
}

pub fn write_world<W: Write>(w: W, world: &World) -> Result<()> {
    serde_json::to_writer_pretty(w, world)?;
    Ok(())
}

pub fn read_world<R: Read>(r: R) -> Result<World> {
    let w: World = serde_json::from_reader(r)?;
    w.config.validate()?;
    if w.schedule.len() != w.config.blocks {
        return Err(Error::Format("schedule length differs from block count".into()));
    }
    Ok(w)
}
