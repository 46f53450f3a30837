use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use celltraj::cli::run;

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("celltraj").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

struct Pipeline {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Pipeline {
    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

/// synth -> discretize -> accumulate -> train (2 epochs) -> evaluate (k=5)
fn smoke() -> Pipeline {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let pl = Pipeline { _tmp: tmp, root };
    let (w, c, a, m, e) = (pl.p("w"), pl.p("c"), pl.p("a"), pl.p("m"), pl.p("e"));
    let trips = w.join("trips.csv");
    let acc = a.join("accumulation.csv");
    let ckpt = m.join("model.ckpt");
    assert_eq!(cli(&["synth", "--trips", "500", "--blocks", "8", "--seed", "1", "--out", s(&w)]), 0);
    assert_eq!(cli(&["discretize", "--in", s(&trips), "--radius", "150", "--out", s(&c)]), 0);
    assert_eq!(
        cli(&["accumulate", "--in", s(&trips), "--background", s(&w.join("background.csv")), "--cells", s(&c), "--out", s(&a)]),
        0
    );
    assert_eq!(
        cli(&["train", "--model", "arnn", "--cells", s(&c), "--traffic", s(&acc), "--epochs", "2", "--out", s(&m)]),
        0
    );
    assert_eq!(
        cli(&["evaluate", "--model", s(&ckpt), "--cells", s(&c), "--traffic", s(&acc), "--k", "5", "--out", s(&e)]),
        0
    );
    pl
}

#[test]
fn smoke_pipeline_under_five_minutes() {
    let t = Instant::now();
    let pl = smoke();
    assert!(t.elapsed() < Duration::from_secs(300));
    for (dir, files) in [
        ("w", &["trips.csv", "background.csv", "world.json"][..]),
        ("c", &["cellmap.csv", "sequences.csv"]),
        ("a", &["accumulation.csv"]),
        ("m", &["model.ckpt", "losses.csv"]),
        ("e", &["scores.csv", "aggregates.csv"]),
    ] {
        for f in files {
            assert!(pl.p(dir).join(f).exists(), "{dir}/{f}");
        }
        let man = manifest(&pl.p(dir));
        assert_eq!(man["config_sha256"].as_str().unwrap().len(), 64);
        assert!(man["seeds"].is_object());
    }
    let scores = fs::read_to_string(pl.p("e/scores.csv")).unwrap();
    assert!(scores.starts_with("trip_id,g,m,bleu1,bleu2,bleu3,bleu4,meteor\n"));
    assert!(scores.lines().count() > 1);
    assert_eq!(manifest(&pl.p("m"))["seeds"]["master"], 0);
    assert_eq!(fs::read_to_string(pl.p("m/losses.csv")).unwrap().lines().count(), 3);
}

#[test]
fn later_stages_from_smoke_outputs() {
    let pl = smoke();
    let (c, acc) = (pl.p("c"), pl.p("a/accumulation.csv"));
    assert_eq!(cli(&["train", "--model", "rnn", "--cells", s(&c), "--epochs", "2", "--out", s(&pl.p("r"))]), 0);
    assert_eq!(
        cli(&["evaluate", "--model", s(&pl.p("r/model.ckpt")), "--cells", s(&c), "--k", "5", "--out", s(&pl.p("re"))]),
        0
    );
    assert_eq!(
        cli(&["report", "--arnn", s(&pl.p("e/scores.csv")), "--rnn", s(&pl.p("re/scores.csv")), "--out", s(&pl.p("rep"))]),
        0
    );
    let rep = fs::read_to_string(pl.p("rep/improvement.csv")).unwrap();
    assert!(rep.starts_with("m,g,count,bleu1"));

    let gen = pl.p("gen.txt");
    assert_eq!(
        cli(&["generate", "--model", s(&pl.p("m/model.ckpt")), "--traffic", s(&acc), "--start-time", "3600", "--k", "4", "--out", s(&gen)]),
        0
    );
    let lines: Vec<String> = fs::read_to_string(&gen).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.starts_with("#start")));

    assert_eq!(
        cli(&["hypersearch", "--model", "rnn", "--cells", s(&c), "--budget", "4", "--epochs", "1", "--dim-max", "8", "--out", s(&pl.p("h"))]),
        0
    );
    let hist = fs::read_to_string(pl.p("h/history.csv")).unwrap();
    assert!(hist.starts_with("# model=rnn"));
    assert_eq!(hist.lines().count(), 2 + 4);
    assert!(pl.p("h/best.json").exists());
}

#[test]
fn stage_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(cli(&["synth", "--trips", "50", "--blocks", "2", "--seed", "9", "--out", s(d)]), 0);
        assert_eq!(
            cli(&["discretize", "--in", s(&d.join("trips.csv")), "--radius", "150", "--out", s(&d.join("c"))]),
            0
        );
    }
    for f in ["trips.csv", "background.csv", "world.json", "c/cellmap.csv", "c/sequences.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let seeds = &manifest(&a)["seeds"];
    assert_eq!(seeds["master"], 9);
    assert_ne!(seeds["world"], seeds["trips"]);
}

#[test]
fn config_file_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "[synth]\ntrips = 20\nblocks = 2\nseed = 3\n").unwrap();
    let out = tmp.path().join("w");
    assert_eq!(cli(&["synth", "--config", s(&cfg), "--trips", "400", "--out", s(&out)]), 0);
    let man = manifest(&out);
    assert_eq!(man["config"]["trips"], 20);
    assert_eq!(man["seeds"]["master"], 3);
    let ids: std::collections::HashSet<String> = fs::read_to_string(out.join("trips.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(ids.len(), 20);

    fs::write(&cfg, "[synth]\nno_such_key = 1\n").unwrap();
    assert_eq!(cli(&["synth", "--config", s(&cfg), "--out", s(&out)]), 1);
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&[]), 2);
    assert_eq!(cli(&["synth", "--trips", "many"]), 2);
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.csv");
    assert_eq!(cli(&["discretize", "--in", s(&missing), "--radius", "100", "--out", s(tmp.path())]), 1);
    assert_eq!(cli(&["discretize", "--in", s(&missing), "--out", s(tmp.path())]), 1);
    assert_eq!(cli(&["synth", "--rows", "1", "--out", s(tmp.path())]), 1);
    assert_eq!(cli(&["--help"]), 0);
}
