use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use triprec::eval::{evaluate, make_folds, EvalConfig, Solver};
use triprec::exact::{read_lp, write_lp};
use triprec::synth::{structured_checkins, structured_corpus, write_checkins_csv, write_pois_csv, StructuredParams};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triprec"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Ingests and trains on the tiny fixture; returns (corpus, model) paths.
fn tiny(dir: &Path) -> (String, String) {
    let c = dir.join("tiny.json").display().to_string();
    let m = dir.join("tiny.model").display().to_string();
    let checkins = data("tiny/checkins.csv").display().to_string();
    let pois = data("tiny/pois.csv").display().to_string();
    ok(dir, &["ingest", "--checkins", &checkins, "--pois", &pois, "--out", &c]);
    ok(dir, &["train", "--corpus", &c, "--out", &m, "--epochs", "20"]);
    (c, m)
}

#[test]
fn ingest_reports_hand_counted_statistics() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("c.json");
    let stdout = ok(
        t.path(),
        &[
            "ingest",
            "--checkins",
            data("tiny/checkins.csv").to_str().unwrap(),
            "--pois",
            data("tiny/pois.csv").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
    );
    let row = stdout.lines().nth(1).unwrap();
    assert_eq!(row, "2\t9\t4\t2.25");
    let manifest = fs::read_to_string(t.path().join("c.json.manifest")).unwrap();
    assert!(manifest.starts_with("artifact_version=1\ncommand=ingest\nseed=42\n"));
    assert!(manifest.contains("config.trip_window=28800"));
}

#[test]
fn bad_inputs_exit_with_input_error() {
    let t = TempDir::new().unwrap();
    let pois = data("tiny/pois.csv").display().to_string();
    let empty = t.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = run(t.path(), &["ingest", "--checkins", empty.to_str().unwrap(), "--pois", &pois, "--out", "c.json"]);
    assert_eq!(code(&out), 2);

    let bad = t.path().join("bad.csv");
    fs::write(&bad, "user_id,poi_id,timestamp\nu1,a,10\nu1,b,later\n").unwrap();
    let out = run(t.path(), &["ingest", "--checkins", bad.to_str().unwrap(), "--pois", &pois, "--out", "c.json"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3:"), "{err}");

    let out = run(t.path(), &["train", "--corpus", "missing.json", "--out", "m.txt"]);
    assert_eq!(code(&out), 2);
    let out = run(t.path(), &["--set", "no_such_key=1", "synth", "--out-dir", "d"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn training_is_byte_reproducible() {
    let t = TempDir::new().unwrap();
    let (c, m) = tiny(t.path());
    let again = t.path().join("again.model").display().to_string();
    ok(t.path(), &["train", "--corpus", &c, "--out", &again, "--epochs", "20"]);
    assert_eq!(fs::read(&m).unwrap(), fs::read(&again).unwrap());
    let other = t.path().join("other.model").display().to_string();
    ok(t.path(), &["--seed", "7", "train", "--corpus", &c, "--out", &other, "--epochs", "20"]);
    assert_ne!(fs::read(&m).unwrap(), fs::read(&other).unwrap());
}

fn ctq(stdout: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with("ctq_score")).unwrap();
    line.split('\t').nth(1).unwrap().parse().unwrap()
}

#[test]
fn recommend_solvers_agree_on_small_graphs() {
    let t = TempDir::new().unwrap();
    let (c, m) = tiny(t.path());
    let q = ["--model", &m, "--corpus", &c, "--user", "u1", "--start", "a", "--end", "d", "--budget", "20000"];
    let exact = ok(t.path(), &[&["recommend", "--solver", "exact"], &q[..]].concat());
    let alns = ok(t.path(), &[&["recommend", "--solver", "alns"], &q[..]].concat());
    assert!((ctq(&exact) - ctq(&alns)).abs() <= 1e-9);
    let again = ok(t.path(), &[&["recommend", "--solver", "alns"], &q[..]].concat());
    assert_eq!(alns, again);
    assert!(t.path().join("triprec-recommend.manifest").exists());
    let first = exact.lines().nth(1).unwrap();
    assert!(first.starts_with("0\ta\t"), "{first}");
}

#[test]
fn recommend_exit_codes() {
    let t = TempDir::new().unwrap();
    let (c, m) = tiny(t.path());
    let base = ["recommend", "--model", &m, "--corpus", &c, "--start", "a", "--end", "d"];
    let out = run(t.path(), &[&base[..], &["--user", "u1", "--budget", "10"]].concat());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no feasible trip"));
    let out = run(t.path(), &[&base[..], &["--user", "ghost", "--budget", "20000"]].concat());
    assert_eq!(code(&out), 2);
}

#[test]
fn exported_lp_round_trips() {
    let t = TempDir::new().unwrap();
    let (c, m) = tiny(t.path());
    let lp = t.path().join("q.lp");
    // Too short for any detour, so only the endpoints remain.
    let stdout = ok(
        t.path(),
        &[
            "export-lp", "--model", &m, "--corpus", &c, "--user", "u1", "--start", "a", "--end", "d", "--budget",
            "2000", "--out", lp.to_str().unwrap(), "--graph", "g.txt",
        ],
    );
    assert!(stdout.starts_with("2 vertices"), "{stdout}");
    let text = fs::read(&lp).unwrap();
    let model = read_lp(text.as_slice()).unwrap();
    let mut again = Vec::new();
    write_lp(&model, &mut again).unwrap();
    assert_eq!(text, again);
    assert!(t.path().join("q.lp.manifest").exists());
}

#[test]
fn config_file_and_flags_layer() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("run.conf"), "# test settings\nseed = 5\nepochs = 3\nruns = 2\n").unwrap();
    ok(t.path(), &["--config", "run.conf", "--set", "runs=4", "--seed", "9", "synth", "--out-dir", "d"]);
    let manifest = fs::read_to_string(t.path().join("d/synth.manifest")).unwrap();
    assert!(manifest.contains("\nseed=9\n"));
    assert!(manifest.contains("config.epochs=3\n"));
    assert!(manifest.contains("config.runs=4\n"));
    assert!(manifest.contains("config.seed=9\n"));
}

#[test]
fn shipped_fixture_matches_its_generator() {
    let (pois, records) = structured_checkins(&StructuredParams::default(), 42).unwrap();
    let mut c = Vec::new();
    write_checkins_csv(&records, &mut c).unwrap();
    let mut p = Vec::new();
    write_pois_csv(&pois, &mut p).unwrap();
    assert_eq!(fs::read(data("structured/checkins.csv")).unwrap(), c);
    assert_eq!(fs::read(data("structured/pois.csv")).unwrap(), p);
    let t = TempDir::new().unwrap();
    ok(t.path(), &["synth", "--out-dir", "gen"]);
    assert_eq!(fs::read(t.path().join("gen/checkins.csv")).unwrap(), c);
}

/// Summary rows without the timing column.
fn summary_metrics(text: &str) -> Vec<String> {
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            f[..f.len() - 1].join(" ")
        })
        .collect()
}

#[test]
fn evaluate_matches_library_run() {
    let t = TempDir::new().unwrap();
    let corpus = t.path().join("s.json").display().to_string();
    ok(
        t.path(),
        &[
            "ingest",
            "--checkins",
            data("structured/checkins.csv").to_str().unwrap(),
            "--pois",
            data("structured/pois.csv").to_str().unwrap(),
            "--out",
            &corpus,
        ],
    );
    let solvers = "random,pop,alns,alns-pop-pref,alns-pop-only";
    ok(t.path(), &["evaluate", "--corpus", &corpus, "--out", "r.csv", "--solvers", solvers]);
    let cli = fs::read_to_string(t.path().join("r.csv.summary")).unwrap();

    let lib_corpus = structured_corpus(&StructuredParams::default(), 42).unwrap();
    let tc = lib_corpus.time_model(true).unwrap();
    let folds = make_folds(&lib_corpus, &tc).unwrap();
    let cfg = EvalConfig {
        solvers: vec![Solver::Random, Solver::Pop, Solver::Alns, Solver::AlnsPopPref, Solver::AlnsPopOnly],
        ..Default::default()
    };
    let report = evaluate(&lib_corpus, &folds, &cfg).unwrap();
    let mut lib = Vec::new();
    report.write_summary(&mut lib).unwrap();
    assert_eq!(summary_metrics(&cli), summary_metrics(&String::from_utf8(lib).unwrap()));
    let rows = fs::read_to_string(t.path().join("r.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 5 * folds.len());
}
