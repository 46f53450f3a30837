//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use celltraj::cellspace::{cluster_points, discretize_trajectory, split_xy, CellId, CellSequence, Token};
use celltraj::cli::stages::{accumulate, build_examples, discretize_trips, TrafficLookup};
use celltraj::corpus::TrafficStateTensor;
use celltraj::eval::{improvement_rate, make_tasks, run_tasks, EvalConfig, GPolicy, ScoreRecord};
use celltraj::hypersearch::minimize;
use celltraj::metrics::{bleu_n, meteor, meteor_align, modified_precision};
use celltraj::models::{
    mean_step_loss, train, Decoder, Example, Model, ModelConfig, ModelKind, TrainConfig,
};
use celltraj::nncore::grad_check;
use celltraj::synthworld::{generate_world, simulate_background, simulate_trips};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- metrics

fn ngram_counts(s: &[u8], n: usize) -> Vec<(Vec<u8>, usize)> {
    let mut out: Vec<(Vec<u8>, usize)> = Vec::new();
    for w in s.windows(n) {
        match out.iter_mut().find(|(g, _)| g == w) {
            Some((_, c)) => *c += 1,
            None => out.push((w.to_vec(), 1)),
        }
    }
    out
}

fn oracle_precision(c: &[u8], r: &[u8], n: usize) -> f64 {
    if c.len() < n {
        return 0.0;
    }
    let rc = ngram_counts(r, n);
    let clipped: usize = ngram_counts(c, n)
        .iter()
        .map(|(g, k)| {
            let in_ref = rc.iter().find(|(h, _)| h == g).map_or(0, |(_, m)| *m);
            (*k).min(in_ref)
        })
        .sum();
    clipped as f64 / (c.len() - n + 1) as f64
}

fn oracle_bleu(c: &[u8], r: &[u8], n: usize) -> f64 {
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let p: Vec<f64> = (1..=n).map(|i| oracle_precision(c, r, i)).collect();
    if p.contains(&0.0) {
        return 0.0;
    }
    let bp = (c.len() as f64 / r.len() as f64).min(1.0);
    bp * p.iter().product::<f64>().powf(1.0 / n as f64)
}

/// Every partial injective matching of equal tokens.
fn matchings(c: &[u8], r: &[u8]) -> Vec<Vec<(usize, usize)>> {
    let mut out = vec![Vec::new()];
    for (i, ci) in c.iter().enumerate() {
        let mut next = Vec::new();
        for m in &out {
            next.push(m.clone());
            for (j, rj) in r.iter().enumerate() {
                if rj == ci && !m.iter().any(|&(_, b)| b == j) {
                    let mut mm = m.clone();
                    mm.push((i, j));
                    next.push(mm);
                }
            }
        }
        out = next;
    }
    out
}

fn oracle_meteor(c: &[u8], r: &[u8]) -> (usize, usize, f64) {
    let crosses = |m: &[(usize, usize)]| {
        let mut k = 0;
        for x in m {
            for y in m {
                if x.0 < y.0 && x.1 > y.1 {
                    k += 1;
                }
            }
        }
        k
    };
    let leftmost = |m: &[(usize, usize)]| -> Vec<(u8, usize)> {
        (0..c.len())
            .map(|i| m.iter().find(|p| p.0 == i).map_or((1, 0), |p| (0, p.1)))
            .collect()
    };
    let best = matchings(c, r)
        .into_iter()
        .min_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then(crosses(a).cmp(&crosses(b)))
                .then(leftmost(a).cmp(&leftmost(b)))
        })
        .unwrap();
    let u = best.len();
    if u == 0 {
        return (0, 0, 0.0);
    }
    // runs of consecutive candidate positions whose reference positions are neighbours
    let mut chunks = 1;
    for w in best.windows(2) {
        if !(w[1].0 == w[0].0 + 1 && w[1].1.abs_diff(w[0].1) == 1) {
            chunks += 1;
        }
    }
    let p = u as f64 / c.len() as f64;
    let rr = u as f64 / r.len() as f64;
    let f = 10.0 * p * rr / (rr + 9.0 * p);
    let pen = 0.5 * (chunks as f64 / u as f64).powi(3);
    (u, chunks, f * (1.0 - pen))
}

fn metric_oracles() -> Outcome {
    let ex = |s: &str| s.bytes().collect::<Vec<u8>>();
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    let mut worked = vec![
        close(modified_precision(&ex("abc"), &ex("abc"), 1), 1.0, 0.0),
        close(modified_precision(&ex("aaa"), &ex("ab"), 1), 1.0 / 3.0, 1e-15),
        close(modified_precision(&ex("abc"), &ex("abd"), 2), 0.5, 0.0),
        close(bleu_n(&ex("abcd"), &ex("abcd"), 1), 1.0, 0.0),
        close(bleu_n(&ex("ab"), &ex("abcd"), 1), 0.5, 0.0),
        close(bleu_n(&ex("abc"), &ex("abd"), 2), (2.0f64 / 3.0 * 0.5).sqrt(), 1e-15),
        close(bleu_n(&ex("abc"), &ex("abd"), 2), 0.5774, 1e-4),
        close(meteor(&ex("abcd"), &ex("abcd")), 1.0 - 0.0078125, 1e-15),
        close(meteor(&ex("abcd"), &ex("abcd")), 0.9922, 1e-4),
        close(meteor(&ex("ab"), &ex("cd")), 0.0, 0.0),
        close(meteor(&ex("acb"), &ex("abc")), 1.0 - 0.5 * (2.0f64 / 3.0).powi(3), 1e-15),
        close(meteor(&ex("acb"), &ex("abc")), 0.8519, 1e-4),
    ];
    let a = meteor_align(&ex("abc"), &ex("abc"));
    worked.push(a.mappings == vec![(0, 0), (1, 1), (2, 2)] && a.crossings == 0 && a.chunks == 1);
    let a = meteor_align(&ex("ba"), &ex("ab"));
    worked.push(a.mappings.len() == 2 && a.crossings == 1);
    worked.push(meteor_align(&ex("ab"), &ex("cd")).mappings.is_empty());
    let worked_ok = worked.iter().all(|&b| b);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = 10_000;
    let (mut bleu_bad, mut meteor_bad, mut worst) = (0, 0, 0.0f64);
    for case in 0..cases {
        let alphabet = rng.gen_range(1..=5u8);
        let max_len = if case % 2 == 0 { 6 } else { 10 };
        let c: Vec<u8> = (0..rng.gen_range(0..=max_len)).map(|_| rng.gen_range(0..alphabet)).collect();
        let r: Vec<u8> = (0..rng.gen_range(0..=max_len)).map(|_| rng.gen_range(0..alphabet)).collect();
        for n in 1..=4 {
            let d = (bleu_n(&c, &r, n) - oracle_bleu(&c, &r, n)).abs();
            worst = worst.max(d);
            if d > 1e-12 {
                bleu_bad += 1;
            }
        }
        // exhaustive alignment enumeration stays tractable up to length 6
        let (c, r) = (&c[..c.len().min(6)], &r[..r.len().min(6)]);
        let (u, chunks, m) = oracle_meteor(c, r);
        let a = meteor_align(c, r);
        let d = (meteor(c, r) - m).abs();
        worst = worst.max(d);
        if d > 1e-12 || a.mappings.len() != u || (u > 0 && a.chunks != chunks) {
            meteor_bad += 1;
        }
    }
    outcome(
        worked_ok && bleu_bad == 0 && meteor_bad == 0,
        format!(
            "{cases} random cases (METEOR truncated to length 6), {bleu_bad} BLEU and {meteor_bad} METEOR mismatches, max |diff| {worst:.1e}; worked examples {}",
            if worked_ok { "exact" } else { "WRONG" }
        ),
    )
}

// ---------------------------------------------------------------- gradients

fn gradient_instance(kind: ModelKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=8);
    let mut cfg = ModelConfig::new(kind, n, rng.gen_range(1..=8), rng.gen_range(1..=8));
    cfg.d_f = rng.gen_range(1..=8);
    cfg.d_a = rng.gen_range(1..=8);
    let mut model = Model::new(cfg, seed).unwrap();
    for (_, t) in model.params_mut().iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.8..0.8));
    }
    let cells: Vec<CellId> = (0..rng.gen_range(1..=6)).map(|_| CellId(rng.gen_range(1..=n as u32))).collect();
    let traffic = (kind == ModelKind::Arnn).then(|| {
        TrafficStateTensor::new(n, (0..n * 10).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    });
    let ex = Example::new(&CellSequence::from_cells(cells), &model.vocab(), traffic).unwrap();
    grad_check(
        |p| {
            let m = Model::from_params(cfg, p.clone())?;
            m.loss_and_grad(&ex.x, &ex.y, ex.traffic.as_ref())
        },
        model.params(),
        1e-5,
    )
    .unwrap()
    .max_rel_error
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let per_kind = 25;
    let mut worst = [0.0f64; 2];
    let mut bad = 0;
    for (k, kind) in [ModelKind::Rnn, ModelKind::Arnn].into_iter().enumerate() {
        for i in 0..per_kind {
            let e = gradient_instance(kind, 1000 * k as u64 + i);
            worst[k] = worst[k].max(e);
            if e >= 1e-4 {
                bad += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        bad == 0 && secs < 60.0,
        format!(
            "{per_kind} RNN + {per_kind} ARNN instances, max relative error {:.1e} / {:.1e}, {secs:.1}s",
            worst[0], worst[1]
        ),
    )
}

// ---------------------------------------------------------------- normalization

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut rows, mut bad) = (0usize, 0usize);
    let generations = 1000;
    for i in 0..generations {
        let kind = if i % 2 == 0 { ModelKind::Rnn } else { ModelKind::Arnn };
        let n = rng.gen_range(1..=12);
        let mut model = Model::new(ModelConfig::new(kind, n, rng.gen_range(1..=8), rng.gen_range(1..=8)), i).unwrap();
        let scale = rng.gen_range(0.1..6.0);
        for (_, t) in model.params_mut().iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale));
        }
        let traffic = (kind == ModelKind::Arnn).then(|| {
            TrafficStateTensor::new(n, (0..n * 10).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
        });
        let mut prefix = vec![Token::Start];
        for _ in 0..rng.gen_range(0..4) {
            prefix.push(Token::Cell(CellId(rng.gen_range(1..=n as u32))));
        }
        let dec = Decoder::new(&model, traffic.as_ref()).unwrap();
        let out = dec.sample(&prefix, &mut rng, prefix.len() + 30).unwrap();
        for r in out.probabilities.iter().chain(&out.attention) {
            rows += 1;
            if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 || r.iter().any(|&p| !(p >= 0.0)) {
                bad += 1;
            }
        }
    }
    outcome(
        bad == 0,
        format!("{generations} generations, {rows} probability and attention rows, {bad} off by more than 1e-9"),
    )
}

// ---------------------------------------------------------------- memorization

fn memorization() -> Outcome {
    let t = Instant::now();
    let n = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut corpus = Vec::new();
    while corpus.len() < 10 {
        let len = rng.gen_range(3..=6);
        let mut cells = vec![CellId(rng.gen_range(1..=n as u32))];
        while cells.len() < len {
            let c = CellId(rng.gen_range(1..=n as u32));
            if Some(&c) != cells.last() {
                cells.push(c);
            }
        }
        let seq = CellSequence::from_cells(cells);
        // one distinct traffic picture per trip, as in real data
        let traffic = TrafficStateTensor::new(n, (0..n * 10).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        corpus.push((seq, traffic));
    }
    let mut model = Model::new(ModelConfig::new(ModelKind::Arnn, n, 16, 32), 8).unwrap();
    let data: Vec<Example> = corpus
        .iter()
        .map(|(s, tr)| Example::new(s, &model.vocab(), Some(tr.clone())).unwrap())
        .collect();
    let cfg = TrainConfig {
        lr: 0.01,
        epochs: 500,
        batch_size: 1,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut first_below = None;
    train(&mut model, &data, &cfg, |e, l| {
        if l < 0.05 && first_below.is_none() {
            first_below = Some(e + 1);
        }
    })
    .unwrap();
    let ce = mean_step_loss(&model, &data).unwrap();

    let mut worst = 1.0f64;
    for (i, (seq, tr)) in corpus.iter().enumerate() {
        let dec = Decoder::new(&model, Some(tr)).unwrap();
        let mut srng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let prefix = &seq.tokens()[..2];
        let hits = (0..1000)
            .filter(|_| dec.sample(prefix, &mut srng, seq.tokens().len() + 10).unwrap().tokens == seq.tokens())
            .count();
        worst = worst.min(hits as f64 / 1000.0);
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        ce < 0.05 && worst > 0.95 && secs < 120.0,
        format!(
            "final per-step CE {ce:.4} (first epoch below 0.05: {}), worst reproduction rate {worst:.3}, {secs:.1}s",
            first_below.map_or("none".to_string(), |e| e.to_string())
        ),
    )
}

// ---------------------------------------------------------------- mechanism

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn mechanism() -> Outcome {
    let t = Instant::now();
    let world = generate_world(7, 8, 300.0, 11).unwrap();
    assert_eq!(world.config.epsilon, 0.1);
    let trips = simulate_trips(&world, 7000, 12).unwrap();
    let background = simulate_background(&world, 13).unwrap();
    let (map, data) = discretize_trips(trips.clone(), 150.0, [0.75, 0.05, 0.2], 14).unwrap();
    let ids: HashSet<&str> = data.train.iter().map(|t| t.trip_id.as_str()).collect();
    let lookup = TrafficLookup::new(&accumulate(&trips, &background, &ids, &map).unwrap());
    let test: Vec<_> = data.test.iter().take(400).cloned().collect();
    let (tasks, _) = make_tasks(&test, &GPolicy::All);

    let mut scores: Vec<Vec<ScoreRecord>> = Vec::new();
    for kind in [ModelKind::Rnn, ModelKind::Arnn] {
        let mut model = Model::new(ModelConfig::new(kind, map.len(), 16, 32), 5).unwrap();
        let (examples, _) = build_examples(&data.train, &model.vocab(), kind, Some(&lookup)).unwrap();
        let cfg = TrainConfig {
            lr: 0.01,
            epochs: 8,
            batch_size: 16,
            seed: 6,
            ..TrainConfig::default()
        };
        train(&mut model, &examples, &cfg, |_, _| {}).unwrap();
        let traffic = |task: &celltraj::eval::EvalTask| match kind {
            ModelKind::Rnn => Ok(None),
            ModelKind::Arnn => lookup.window(task.start_time).map(Some),
        };
        scores.push(run_tasks(&tasks, &model, traffic, &EvalConfig { k: 20, master_seed: 1 }).unwrap());
    }
    let g1 = |r: &[ScoreRecord]| mean(r.iter().filter(|s| s.g == 1).map(|s| s.mean.meteor));
    let (rnn_g1, arnn_g1) = (g1(&scores[0]), g1(&scores[1]));
    let gain = arnn_g1 / rnn_g1 - 1.0;
    let rep = improvement_rate(&scores[1], &scores[0]).unwrap();
    let rates: Vec<(usize, f64)> = rep.per_m.iter().map(|r| (r.m, r.mean[4])).collect();
    let half = rates.len().div_ceil(2);
    let small = mean(rates[..half].iter().map(|r| r.1));
    let (largest_m, largest) = *rates.last().unwrap();
    let secs = t.elapsed().as_secs_f64();
    let curve: Vec<String> = rates.iter().map(|(m, r)| format!("{m}:{r:.3}")).collect();
    outcome(
        gain >= 0.05 && small >= 1.0 && (0.95..=1.10).contains(&largest) && secs < 1800.0,
        format!(
            "{} training trips; g=1 METEOR ARNN {arnn_g1:.4} vs RNN {rnn_g1:.4} ({:+.1}%); small-m mean rate {small:.3}; rate at m={largest_m} {largest:.3}; curve [{}]; {secs:.0}s",
            data.train.len(),
            100.0 * gain,
            curve.join(" ")
        ),
    )
}

// ---------------------------------------------------------------- pipeline identity

fn pipeline_identity() -> Outcome {
    let world = generate_world(6, 9, 250.0, 21).unwrap();
    let trips = simulate_trips(&world, 1000, 22).unwrap();
    let points: Vec<_> = trips.iter().flat_map(|t| t.points().iter().map(|p| p.xy())).collect();
    let map = cluster_points(&points, 125.0).unwrap();
    let mut violations = 0;
    for tr in &trips {
        let seq = discretize_trajectory(tr, &map).unwrap();
        let s = split_xy(&seq).unwrap();
        let shifted = s.x.len() == s.y.len() && (0..s.x.len() - 1).all(|i| s.y[i] == s.x[i + 1]);
        if !shifted || seq.m() > tr.len() {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{} trajectories over {} cells, {violations} violations", trips.len(), map.len()),
    )
}

// ---------------------------------------------------------------- GP search

fn gp_search() -> Outcome {
    let mut hits = 0;
    let mut found = Vec::new();
    for seed in 0..10 {
        let r = minimize(1, 20, seed, |x| Ok((x[0] - 0.3).powi(2))).unwrap();
        let x = r.best_trial().x[0];
        found.push(format!("{x:.3}"));
        if (x - 0.3).abs() <= 0.05 {
            hits += 1;
        }
    }
    outcome(hits >= 9, format!("{hits}/10 seeds within 0.05 of 0.3; incumbents [{}]", found.join(" ")))
}

// ---------------------------------------------------------------- reproducibility

fn cli(args: &[&str]) -> i32 {
    celltraj::cli::run(std::iter::once("celltraj").chain(args.iter().copied()))
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_str().unwrap().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["synth", "--trips", "300", "--blocks", "6", "--seed", "4", "--out", &p("w")],
        vec!["discretize", "--in", &p("w/trips.csv"), "--radius", "150", "--seed", "4", "--out", &p("c")],
        vec!["accumulate", "--in", &p("w/trips.csv"), "--background", &p("w/background.csv"), "--cells", &p("c"), "--out", &p("a")],
        vec!["train", "--model", "arnn", "--cells", &p("c"), "--traffic", &p("a/accumulation.csv"), "--epochs", "2", "--seed", "4", "--out", &p("m")],
        vec!["evaluate", "--model", &p("m/model.ckpt"), "--cells", &p("c"), "--traffic", &p("a/accumulation.csv"), "--k", "10", "--seed", "99", "--out", &p("e1")],
        vec!["evaluate", "--model", &p("m/model.ckpt"), "--cells", &p("c"), "--traffic", &p("a/accumulation.csv"), "--k", "10", "--seed", "99", "--out", &p("e2")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(|s| s.to_string()).collect())
    .collect();
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        if cli(&args) != 0 {
            return outcome(false, format!("`{}` failed", s[0]));
        }
    }
    let read = |dir: &str| std::fs::read(Path::new(&p(dir)).join("scores.csv")).unwrap();
    let (a, b) = (read("e1"), read("e2"));
    outcome(
        a == b && !a.is_empty(),
        format!("two evaluate runs, seed 99: score files {} ({} bytes)", if a == b { "identical" } else { "DIFFER" }, a.len()),
    )
}

fn main() {
    // `cargo test -- --list` and similar probes must not run the suite.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("metric oracles", metric_oracles),
        ("gradient correctness", gradients),
        ("normalization", normalization),
        ("memorization", memorization),
        ("mechanism differential", mechanism),
        ("pipeline identity", pipeline_identity),
        ("GP search sanity", gp_search),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    let total = Instant::now();
    for (name, f) in criteria {
        let t = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.1?}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
    }
    println!("acceptance: {}/{} criteria passed in {:.0?}", 8 - failed, 8, total.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
