//! The `celltraj` command line: one subcommand per pipeline stage.
//!
//! Every subcommand reads its settings from flags, optionally overridden by
//! the matching `[section]` of a TOML file given with `--config`, and writes a
//! `manifest.json` next to its outputs holding the effective settings, their
//! hash and every seed used.

pub mod stages;

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cellspace::{read_cellmap, read_point_rows, write_cellmap, write_point_rows, CellMap, Token};
use crate::corpus::{
    load_and_terminate, read_accumulation, read_sequences, write_accumulation, write_sequences,
    Dataset, Split,
};
use crate::eval::{
    aggregate_by_length, fnv1a64, improvement_rate, make_tasks, read_scores, run_tasks, splitmix64,
    write_aggregates, write_improvement, write_scores, EvalConfig, GPolicy, SEED_MIXING,
};
use crate::hypersearch::{published_preset, search, write_history, SearchSpace, TRIAL_EPOCHS};
use crate::models::{
    default_max_len, generate, read_model, train, write_model, Model, ModelConfig, ModelKind,
    TrainConfig,
};
use crate::synthworld::{
    generate_world_with, simulate_background, simulate_trips, to_point_rows, write_world,
    WorldConfig,
};
use stages::{accumulate, build_examples, discretize_trips, TrafficLookup};

pub const MANIFEST: &str = "manifest.json";
pub const TRIPS_FILE: &str = "trips.csv";
pub const BACKGROUND_FILE: &str = "background.csv";
pub const WORLD_FILE: &str = "world.json";
pub const CELLMAP_FILE: &str = "cellmap.csv";
pub const SEQUENCES_FILE: &str = "sequences.csv";
pub const ACCUMULATION_FILE: &str = "accumulation.csv";
pub const MODEL_FILE: &str = "model.ckpt";
pub const LOSSES_FILE: &str = "losses.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const AGGREGATES_FILE: &str = "aggregates.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const BEST_FILE: &str = "best.json";
pub const IMPROVEMENT_FILE: &str = "improvement.csv";

#[derive(Debug, Parser)]
#[command(name = "celltraj", version, about = "Cell-sequence trajectory models conditioned on network traffic")]
struct Cli {
    /// TOML file whose `[<subcommand>]` table overrides the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the two-corridor world and write raw trajectories.
    Synth(SynthArgs),
    /// Cluster training points into cells and discretize every trip.
    Discretize(DiscretizeArgs),
    /// Per-minute vehicle accumulation per cell.
    Accumulate(AccumulateArgs),
    /// Train a baseline or attention model.
    Train(TrainArgs),
    /// Sample continuations of a prefix.
    Generate(GenerateArgs),
    /// Score sampled continuations of held-out trips.
    Evaluate(EvaluateArgs),
    /// Gaussian-process search over learning rate and layer sizes.
    Hypersearch(HypersearchArgs),
    /// Compare attention and baseline score files.
    Report(ReportArgs),
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Discretize(_) => "discretize",
            Command::Accumulate(_) => "accumulate",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Evaluate(_) => "evaluate",
            Command::Hypersearch(_) => "hypersearch",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    /// Grid spacing in meters.
    #[arg(long, default_value_t = 300.0)]
    spacing: f64,
    #[arg(long, default_value_t = 6000)]
    trips: usize,
    /// Probability of taking the congested corridor.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 60)]
    block_minutes: u32,
    #[arg(long, default_value_t = 48)]
    blocks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscretizeArgs {
    /// Trajectory file with `trip_id,t,x,y` rows.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Clustering radius in meters.
    #[arg(long)]
    radius: Option<f64>,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.1,0.1")]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AccumulateArgs {
    /// Trajectory file that was discretized.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Extra vehicles that count toward traffic but are never modelled.
    #[arg(long)]
    background: Option<PathBuf>,
    /// Output directory of `discretize`.
    #[arg(long)]
    cells: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainArgs {
    #[arg(long, default_value = "arnn")]
    model: ModelKind,
    /// Output directory of `discretize`.
    #[arg(long)]
    cells: Option<PathBuf>,
    /// Accumulation file; required by the attention model.
    #[arg(long)]
    traffic: Option<PathBuf>,
    /// Use the published optimum for this model kind instead of the size and rate flags.
    #[arg(long)]
    published_preset: bool,
    #[arg(long, default_value_t = 16)]
    d_e: usize,
    #[arg(long, default_value_t = 32)]
    d_h: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Space-separated tokens beginning with `#start`.
    #[arg(long, default_value = "#start")]
    prefix: String,
    #[arg(long)]
    traffic: Option<PathBuf>,
    /// Departure time in seconds, for the traffic window.
    #[arg(long)]
    start_time: Option<f64>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory of `discretize`.
    #[arg(long)]
    cells: Option<PathBuf>,
    #[arg(long)]
    traffic: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Candidates per prefix.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// `all` or a comma-separated list of prefix lengths.
    #[arg(long, default_value = "all")]
    g: String,
    /// Evaluate at most this many trips of the split.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HypersearchArgs {
    #[arg(long, default_value = "arnn")]
    model: ModelKind,
    #[arg(long)]
    cells: Option<PathBuf>,
    #[arg(long)]
    traffic: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    budget: usize,
    #[arg(long, default_value_t = TRIAL_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr_min: f64,
    #[arg(long, default_value_t = 1e-2)]
    lr_max: f64,
    #[arg(long, default_value_t = 4)]
    dim_min: usize,
    #[arg(long, default_value_t = 128)]
    dim_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportArgs {
    /// Score file of the attention model.
    #[arg(long)]
    arnn: Option<PathBuf>,
    /// Score file of the baseline.
    #[arg(long)]
    rnn: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Seed for one named use of a command's master seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a64(label))
}

/// Parses `args` (program name first), runs the stage and returns the exit
/// status: 0 on success, 1 when the stage fails, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let overrides = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let table: toml::Table = text.parse().with_context(|| format!("parsing {}", p.display()))?;
            table.get(cli.command.section()).cloned()
        }
        None => None,
    };
    let ov = overrides.as_ref();
    match cli.command {
        Command::Synth(a) => run_synth(merge(a, ov)?),
        Command::Discretize(a) => run_discretize(merge(a, ov)?),
        Command::Accumulate(a) => run_accumulate(merge(a, ov)?),
        Command::Train(a) => run_train(merge(a, ov)?),
        Command::Generate(a) => run_generate(merge(a, ov)?),
        Command::Evaluate(a) => run_evaluate(merge(a, ov)?),
        Command::Hypersearch(a) => run_hypersearch(merge(a, ov)?),
        Command::Report(a) => run_report(merge(a, ov)?),
    }
}

/// Overlays the keys of a config table on parsed flags.
fn merge<T: Serialize + DeserializeOwned>(args: T, table: Option<&toml::Value>) -> anyhow::Result<T> {
    let Some(table) = table else { return Ok(args) };
    let mut base = serde_json::to_value(&args)?;
    let over = serde_json::to_value(table)?;
    let (Value::Object(b), Value::Object(o)) = (&mut base, over) else {
        bail!("config section must be a table");
    };
    for (k, v) in o {
        b.insert(k, v);
    }
    serde_json::from_value(base).context("config file")
}

fn require<'a, T>(v: &'a Option<T>, flag: &str) -> anyhow::Result<&'a T> {
    v.as_ref().with_context(|| format!("missing --{flag} (flag or config key)"))
}

fn existing(p: &Path) -> anyhow::Result<&Path> {
    if !p.exists() {
        bail!("{} does not exist", p.display());
    }
    Ok(p)
}

fn open(p: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(existing(p)?).with_context(|| format!("opening {}", p.display()))?,
    ))
}

fn create(p: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(p).with_context(|| format!("creating {}", p.display()))?,
    ))
}

fn out_dir(out: &Option<PathBuf>) -> anyhow::Result<PathBuf> {
    let dir = require(out, "out")?.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn sha256_file(p: &Path) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    std::io::copy(&mut open(p)?, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

/// Writes the manifest describing one stage run.
fn write_manifest<A: Serialize>(
    dir: &Path,
    command: &str,
    args: &A,
    seeds: Value,
    inputs: &[(&str, &Path)],
    outputs: &[&str],
    extra: Value,
) -> anyhow::Result<()> {
    let config = serde_json::to_value(args)?;
    let hash = hex::encode(Sha256::digest(serde_json::to_vec(&config)?));
    let mut ins = serde_json::Map::new();
    for (name, p) in inputs {
        ins.insert(
            name.to_string(),
            json!({ "path": p.display().to_string(), "sha256": sha256_file(p)? }),
        );
    }
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "config_sha256": hash,
        "seeds": seeds,
        "inputs": ins,
        "outputs": outputs,
        "details": extra,
    });
    let mut w = create(&dir.join(MANIFEST))?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run_synth(a: SynthArgs) -> anyhow::Result<()> {
    let dir = out_dir(&a.out)?;
    let config = WorldConfig {
        rows: a.rows,
        cols: a.cols,
        spacing: a.spacing,
        epsilon: a.epsilon,
        block_minutes: a.block_minutes,
        blocks: a.blocks,
        gps_noise: WorldConfig::default().gps_noise * a.spacing / 300.0,
        ..WorldConfig::default()
    };
    let seeds = json!({
        "master": a.seed,
        "world": derive_seed(a.seed, "world"),
        "trips": derive_seed(a.seed, "trips"),
        "background": derive_seed(a.seed, "background"),
    });
    let world = generate_world_with(config, derive_seed(a.seed, "world"))?;
    let trips = simulate_trips(&world, a.trips, derive_seed(a.seed, "trips"))?;
    let background = simulate_background(&world, derive_seed(a.seed, "background"))?;
    let mut w = create(&dir.join(TRIPS_FILE))?;
    write_point_rows(&mut w, &to_point_rows(&trips))?;
    w.flush()?;
    let mut w = create(&dir.join(BACKGROUND_FILE))?;
    write_point_rows(&mut w, &to_point_rows(&background))?;
    w.flush()?;
    let mut w = create(&dir.join(WORLD_FILE))?;
    write_world(&mut w, &world)?;
    w.flush()?;
    log::info!("{} trips, {} background vehicles", trips.len(), background.len());
    write_manifest(
        &dir,
        "synth",
        &a,
        seeds,
        &[],
        &[TRIPS_FILE, BACKGROUND_FILE, WORLD_FILE],
        json!({ "world": world.config }),
    )
}

fn run_discretize(a: DiscretizeArgs) -> anyhow::Result<()> {
    let input = require(&a.input, "in")?.clone();
    let radius = *require(&a.radius, "radius")?;
    let fractions: [f64; 3] = a
        .fractions
        .clone()
        .try_into()
        .map_err(|_| anyhow::anyhow!("--fractions needs three values"))?;
    let rows = read_point_rows(open(&input)?)?;
    let dir = out_dir(&a.out)?;
    let trips = load_and_terminate(&rows)?;
    let split_seed = derive_seed(a.seed, "split");
    let (map, data) = discretize_trips(trips, radius, fractions, split_seed)?;
    let mut w = create(&dir.join(CELLMAP_FILE))?;
    write_cellmap(&mut w, &map)?;
    w.flush()?;
    let mut w = create(&dir.join(SEQUENCES_FILE))?;
    write_sequences(&mut w, &data)?;
    w.flush()?;
    log::info!(
        "{} cells; {} / {} / {} sequences",
        map.len(),
        data.train.len(),
        data.validation.len(),
        data.test.len()
    );
    write_manifest(
        &dir,
        "discretize",
        &a,
        json!({ "master": a.seed, "split": split_seed }),
        &[("trips", &input)],
        &[CELLMAP_FILE, SEQUENCES_FILE],
        json!({ "cells": map.len(), "train": data.train.len(), "validation": data.validation.len(), "test": data.test.len() }),
    )
}

fn load_cells(dir: &Path) -> anyhow::Result<(CellMap, Dataset)> {
    let map = read_cellmap(open(&dir.join(CELLMAP_FILE))?)?;
    let data = read_sequences(open(&dir.join(SEQUENCES_FILE))?)?;
    Ok((map, data))
}

fn run_accumulate(a: AccumulateArgs) -> anyhow::Result<()> {
    let input = require(&a.input, "in")?.clone();
    let cells = require(&a.cells, "cells")?.clone();
    let (map, data) = load_cells(&cells)?;
    let trips = load_and_terminate(&read_point_rows(open(&input)?)?)?;
    let background = match &a.background {
        Some(p) => load_and_terminate(&read_point_rows(open(p)?)?)?,
        None => Vec::new(),
    };
    let dir = out_dir(&a.out)?;
    let train_ids: HashSet<&str> = data.train.iter().map(|t| t.trip_id.as_str()).collect();
    let series = accumulate(&trips, &background, &train_ids, &map)?;
    let mut w = create(&dir.join(ACCUMULATION_FILE))?;
    write_accumulation(&mut w, &series)?;
    w.flush()?;
    let cm = cells.join(CELLMAP_FILE);
    let seqs = cells.join(SEQUENCES_FILE);
    let mut inputs: Vec<(&str, &Path)> = vec![("trips", &input), ("cellmap", &cm), ("sequences", &seqs)];
    if let Some(p) = &a.background {
        inputs.push(("background", p));
    }
    write_manifest(
        &dir,
        "accumulate",
        &a,
        json!({}),
        &inputs,
        &[ACCUMULATION_FILE],
        json!({
            "first_minute": series.first_minute(),
            "minutes": series.n_minutes(),
            "maxima_from": "training trips and background vehicles",
        }),
    )
}

fn traffic_lookup(p: &Option<PathBuf>, kind: ModelKind, n_cells: usize) -> anyhow::Result<Option<TrafficLookup>> {
    match (kind, p) {
        (ModelKind::Rnn, _) => Ok(None),
        (ModelKind::Arnn, None) => bail!("the attention model needs --traffic"),
        (ModelKind::Arnn, Some(p)) => {
            let series = read_accumulation(open(p)?)?;
            if series.n_cells() != n_cells {
                bail!("traffic file has {} cells, the cell map {}", series.n_cells(), n_cells);
            }
            Ok(Some(TrafficLookup::new(&series)))
        }
    }
}

fn run_train(a: TrainArgs) -> anyhow::Result<()> {
    let cells = require(&a.cells, "cells")?.clone();
    let (map, data) = load_cells(&cells)?;
    let lookup = traffic_lookup(&a.traffic, a.model, map.len())?;
    let dir = out_dir(&a.out)?;
    let (lr, d_e, d_h) = if a.published_preset {
        let p = published_preset(a.model);
        (p.learning_rate, p.d_e, p.d_h)
    } else {
        (a.lr, a.d_e, a.d_h)
    };
    let config = ModelConfig::new(a.model, map.len(), d_e, d_h);
    let (examples, dropped) = build_examples(&data.train, &config.vocab(), a.model, lookup.as_ref())?;
    if dropped > 0 {
        log::warn!("{dropped} training trips lack a full traffic window and were skipped");
    }
    let init_seed = derive_seed(a.seed, "init");
    let shuffle_seed = derive_seed(a.seed, "shuffle");
    let mut model = Model::new(config, init_seed)?;
    let cfg = TrainConfig {
        lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        clip_norm: (a.clip > 0.0).then_some(a.clip),
        seed: shuffle_seed,
    };
    let report = train(&mut model, &examples, &cfg, |e, l| log::info!("epoch {}: loss {l:.5}", e + 1))?;
    let mut w = create(&dir.join(MODEL_FILE))?;
    write_model(&mut w, &model, json!({ "train": cfg, "examples": examples.len() }))?;
    w.flush()?;
    let mut w = create(&dir.join(LOSSES_FILE))?;
    writeln!(w, "epoch,loss")?;
    for (e, l) in report.epoch_losses.iter().enumerate() {
        writeln!(w, "{},{l}", e + 1)?;
    }
    w.flush()?;
    let mut inputs = vec![("sequences", cells.join(SEQUENCES_FILE))];
    if let Some(p) = &a.traffic {
        inputs.push(("traffic", p.clone()));
    }
    let inputs: Vec<(&str, &Path)> = inputs.iter().map(|(n, p)| (*n, p.as_path())).collect();
    write_manifest(
        &dir,
        "train",
        &a,
        json!({ "master": a.seed, "init": init_seed, "shuffle": shuffle_seed }),
        &inputs,
        &[MODEL_FILE, LOSSES_FILE],
        json!({
            "model": model.config(),
            "traffic_encoding": "one d_f feature per cell from its 10-minute window",
            "learning_rate": lr,
            "examples": examples.len(),
            "skipped": dropped,
            "clipped_updates": report.clipped_updates,
        }),
    )
}

fn load_model(p: &Option<PathBuf>) -> anyhow::Result<Model> {
    let path = require(p, "model")?;
    Ok(read_model(open(path)?)?.0)
}

fn run_generate(a: GenerateArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let prefix = a
        .prefix
        .split_whitespace()
        .map(str::parse::<Token>)
        .collect::<crate::Result<Vec<_>>>()?;
    let traffic = match traffic_lookup(&a.traffic, model.kind(), model.config().n_cells)? {
        Some(l) => Some(l.window(*require(&a.start_time, "start-time")?)?),
        None => None,
    };
    let max_len = a.max_len.unwrap_or(default_max_len(25).max(prefix.len() + 2));
    let mut lines = Vec::with_capacity(a.k);
    for i in 0..a.k {
        let seed = splitmix64(a.seed ^ i as u64);
        let out = generate(&model, &prefix, traffic.as_ref(), seed, max_len)?;
        let text: Vec<String> = out.tokens.iter().map(Token::to_string).collect();
        lines.push(text.join(" "));
    }
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            for l in &lines {
                writeln!(w, "{l}")?;
            }
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            for l in &lines {
                writeln!(w, "{l}")?;
            }
        }
    }
    Ok(())
}

fn parse_split(s: &str) -> anyhow::Result<Split> {
    Ok(match s {
        "train" => Split::Train,
        "validation" => Split::Validation,
        "test" => Split::Test,
        _ => bail!("unknown split {s:?}; expected train, validation or test"),
    })
}

fn parse_g(s: &str) -> anyhow::Result<GPolicy> {
    if s.trim() == "all" {
        return Ok(GPolicy::All);
    }
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("--g expects `all` or a list of integers, got {s:?}"))?;
    Ok(GPolicy::Fixed(v))
}

fn run_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let model_path = require(&a.model, "model")?.clone();
    let cells = require(&a.cells, "cells")?.clone();
    let model = load_model(&a.model)?;
    let (map, data) = load_cells(&cells)?;
    if map.len() != model.config().n_cells {
        bail!("model has {} cells, the cell map {}", model.config().n_cells, map.len());
    }
    let lookup = traffic_lookup(&a.traffic, model.kind(), map.len())?;
    let split = parse_split(&a.split)?;
    let policy = parse_g(&a.g)?;
    let dir = out_dir(&a.out)?;
    let mut trips: Vec<_> = data.get(split).to_vec();
    let mut no_history = 0;
    if let Some(l) = &lookup {
        trips.retain(|t| {
            let ok = l.window(t.start_time).is_ok();
            no_history += usize::from(!ok);
            ok
        });
    }
    if let Some(n) = a.limit {
        trips.truncate(n);
    }
    let (tasks, short) = make_tasks(&trips, &policy);
    let cfg = EvalConfig {
        k: a.k,
        master_seed: a.seed,
    };
    let records = run_tasks(
        &tasks,
        &model,
        |t| lookup.as_ref().map(|l| l.window(t.start_time)).transpose(),
        &cfg,
    )?;
    let mut w = create(&dir.join(SCORES_FILE))?;
    write_scores(&mut w, &records)?;
    w.flush()?;
    let mut w = create(&dir.join(AGGREGATES_FILE))?;
    write_aggregates(&mut w, &aggregate_by_length(&records))?;
    w.flush()?;
    let mut inputs = vec![("model", model_path), ("sequences", cells.join(SEQUENCES_FILE))];
    if let Some(p) = &a.traffic {
        inputs.push(("traffic", p.clone()));
    }
    let inputs: Vec<(&str, &Path)> = inputs.iter().map(|(n, p)| (*n, p.as_path())).collect();
    write_manifest(
        &dir,
        "evaluate",
        &a,
        json!({ "master": a.seed, "candidate_seed": SEED_MIXING }),
        &inputs,
        &[SCORES_FILE, AGGREGATES_FILE],
        json!({
            "tasks": tasks.len(),
            "trips": trips.len(),
            "skipped_short": short,
            "skipped_no_history": no_history,
            "unterminated": records.iter().map(|r| r.unterminated).sum::<usize>(),
        }),
    )
}

fn run_hypersearch(a: HypersearchArgs) -> anyhow::Result<()> {
    let cells = require(&a.cells, "cells")?.clone();
    let (map, data) = load_cells(&cells)?;
    let lookup = traffic_lookup(&a.traffic, a.model, map.len())?;
    let dir = out_dir(&a.out)?;
    let vocab = crate::models::Vocab::new(map.len());
    let (tr, _) = build_examples(&data.train, &vocab, a.model, lookup.as_ref())?;
    let (va, _) = build_examples(&data.validation, &vocab, a.model, lookup.as_ref())?;
    let space = SearchSpace {
        learning_rate: (a.lr_min, a.lr_max),
        d_e: (a.dim_min, a.dim_max),
        d_h: (a.dim_min, a.dim_max),
    };
    let seed = derive_seed(a.seed, "search");
    let result = search(space, a.model, map.len(), &tr, &va, a.budget, a.epochs, seed)?;
    let mut w = create(&dir.join(HISTORY_FILE))?;
    write_history(&mut w, &result)?;
    w.flush()?;
    let best = result.best_point();
    let mut w = create(&dir.join(BEST_FILE))?;
    serde_json::to_writer_pretty(&mut w, &json!({ "model": a.model, "best": best, "objective": result.result.best_trial().objective }))?;
    writeln!(w)?;
    w.flush()?;
    let seqs = cells.join(SEQUENCES_FILE);
    let mut inputs: Vec<(&str, &Path)> = vec![("sequences", &seqs)];
    if let Some(p) = &a.traffic {
        inputs.push(("traffic", p));
    }
    write_manifest(
        &dir,
        "hypersearch",
        &a,
        json!({ "master": a.seed, "search": seed }),
        &inputs,
        &[HISTORY_FILE, BEST_FILE],
        json!({ "space": space }),
    )
}

fn run_report(a: ReportArgs) -> anyhow::Result<()> {
    let arnn_path = require(&a.arnn, "arnn")?.clone();
    let rnn_path = require(&a.rnn, "rnn")?.clone();
    let arnn = read_scores(open(&arnn_path)?)?;
    let rnn = read_scores(open(&rnn_path)?)?;
    let dir = out_dir(&a.out)?;
    let rep = improvement_rate(&arnn, &rnn)?;
    let mut w = create(&dir.join(IMPROVEMENT_FILE))?;
    write_improvement(&mut w, &rep)?;
    w.flush()?;
    write_manifest(
        &dir,
        "report",
        &a,
        json!({}),
        &[("arnn", &arnn_path), ("rnn", &rnn_path)],
        &[IMPROVEMENT_FILE],
        json!({ "excluded_groups": rep.excluded }),
    )
}
