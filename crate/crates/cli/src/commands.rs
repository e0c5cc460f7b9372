use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use triprec::alns::{run_alns, write_trace};
use triprec::checkin::{
    impacted_user_ratio, independent_pair_ratio, ingest_checkins, read_distance_matrix, read_pois, Corpus,
    OnRowError, PairTestParams, TimeCostModel,
};
use triprec::config::{RunManifest, Settings};
use triprec::embedding::{read_model, train_with_vocab, write_model, EmbeddingModel};
use triprec::eval::{evaluate as run_evaluation, make_folds};
use triprec::exact::{build_ilp, solve_exact, write_lp};
use triprec::graph::{build_graph, PoiGraph};
use triprec::scoring::{Query, ScoreContext};
use triprec::synth::{structured_checkins, write_checkins_csv, write_pois_csv, StructuredParams};

use crate::{CliError, CliResult, GlobalArgs};

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::in_file(path)(e.into()))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::in_file(path)(e.into()))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult {
    w.flush().map_err(|e| CliError::in_file(path)(e.into()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn save_manifest(global: &GlobalArgs, manifest: RunManifest, default: PathBuf) -> CliResult {
    let path = global.manifest_path(default);
    manifest.save(&path).map_err(CliError::in_file(&path))
}

fn load_corpus(path: &Path) -> CliResult<Corpus> {
    Corpus::load(path).map_err(CliError::in_file(path))
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Check-in table: user_id,poi_id,timestamp.
    #[arg(long)]
    checkins: PathBuf,
    /// POI table: poi_id,lat,lon[,category].
    #[arg(long)]
    pois: PathBuf,
    /// Optional distance matrix in kilometres.
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Output corpus file.
    #[arg(long)]
    out: PathBuf,
    /// Skip malformed check-in rows instead of failing.
    #[arg(long)]
    skip_bad_rows: bool,
}

pub fn ingest(global: &GlobalArgs, a: &IngestArgs) -> CliResult {
    let settings = global.settings()?;
    let pois = read_pois(open(&a.pois)?).map_err(CliError::in_file(&a.pois))?;
    let mode = if a.skip_bad_rows { OnRowError::Skip } else { OnRowError::FailFast };
    let report = ingest_checkins(open(&a.checkins)?, mode).map_err(CliError::in_file(&a.checkins))?;
    for row in &report.skipped {
        eprintln!("warning: {}:{}: skipped: {}", a.checkins.display(), row.line, row.message);
    }
    if report.records.is_empty() {
        return Err(CliError::in_file(&a.checkins)(triprec::Error::Invalid("no check-ins".into())));
    }
    let matrix = match &a.distances {
        Some(p) => Some(read_distance_matrix(open(p)?).map_err(CliError::in_file(p))?),
        None => None,
    };
    let mut corpus = Corpus::from_checkins(
        &report.records,
        pois,
        matrix,
        settings.parse("trip_window")?,
        settings.trip_rule()?,
    )?;
    corpus.walking_speed = settings.parse("walking_speed")?;
    corpus.save(&a.out).map_err(CliError::in_file(&a.out))?;
    let s = &corpus.stats;
    println!("users\tpoi_visits\ttrips\tpois_per_trip");
    println!("{}\t{}\t{}\t{:.2}", s.users, s.poi_visits, s.trips, s.pois_per_trip);
    let mut m = RunManifest::new("ingest", &settings)?
        .input("checkins", &a.checkins)
        .input("pois", &a.pois)
        .output("corpus", &a.out);
    if let Some(p) = &a.distances {
        m = m.input("distances", p);
    }
    save_manifest(global, m, with_suffix(&a.out, ".manifest"))
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Random samples per statistic.
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Fraction of trips drawn per sample for the pair test.
    #[arg(long, default_value_t = 0.5)]
    sample_fraction: f64,
    /// Significance level of the pair test.
    #[arg(long, default_value_t = 0.05)]
    significance: f64,
    /// Also write the statistics to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn analyze(global: &GlobalArgs, a: &AnalyzeArgs) -> CliResult {
    let settings = global.settings()?;
    let seed = settings.seed()?;
    let corpus = load_corpus(&a.corpus)?;
    let params = PairTestParams {
        sample_fraction: a.sample_fraction,
        runs: a.runs,
        significance: a.significance,
        seed,
    };
    let pairs = independent_pair_ratio(&corpus.trips, params)?;
    let impacted = impacted_user_ratio(&corpus.trips, a.runs, seed)?;
    let text = format!("independent_pair_ratio={pairs:.6}\nimpacted_user_ratio={impacted:.6}\n");
    print!("{text}");
    let mut m = RunManifest::new("analyze", &settings)?.input("corpus", &a.corpus);
    let default = match &a.out {
        Some(out) => {
            let mut w = create(out)?;
            w.write_all(text.as_bytes()).map_err(|e| CliError::in_file(out)(e.into()))?;
            finish(w, out)?;
            m = m.output("statistics", out);
            with_suffix(out, ".manifest")
        }
        None => PathBuf::from("triprec-analyze.manifest"),
    };
    save_manifest(global, m, default)
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Which parameters to learn: full, pop-pref, or pop-only.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Regularize the sampled negative toward zero.
    #[arg(long)]
    corrected_reg: bool,
}

pub fn train(global: &GlobalArgs, a: &TrainArgs) -> CliResult {
    let mut settings = global.settings()?;
    if let Some(mode) = &a.mode {
        settings.set("train_mode", mode)?;
    }
    if let Some(e) = a.epochs {
        settings.set("epochs", e)?;
    }
    if a.corrected_reg {
        settings.set("reg_mode", "corrected")?;
    }
    let cfg = settings.train_config()?;
    let corpus = load_corpus(&a.corpus)?;
    let model = train_with_vocab(&corpus.trips, corpus.poi_ids(), corpus.user_ids(), &cfg)?;
    let zpair = model.log_pair_partition().exp();
    let mut w = create(&a.out)?;
    write_model(&mut w, &model, Some(zpair))?;
    finish(w, &a.out)?;
    println!("trained {} POIs, {} users, dim {}", model.num_pois(), model.num_users(), model.dim());
    let m = RunManifest::new("train", &settings)?.input("corpus", &a.corpus).output("model", &a.out);
    save_manifest(global, m, with_suffix(&a.out, ".manifest"))
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    user: String,
    #[arg(long)]
    start: String,
    #[arg(long)]
    end: String,
    /// Time budget in seconds.
    #[arg(long)]
    budget: f64,
    /// Add popularity to the closeness score.
    #[arg(long)]
    bias_in_closeness: bool,
}

struct Loaded {
    model: EmbeddingModel,
    log_zpair: f64,
    tc: TimeCostModel,
    query: Query,
}

impl QueryArgs {
    fn load(&self, settings: &mut Settings) -> CliResult<Loaded> {
        if self.bias_in_closeness {
            settings.set("bias_in_closeness", true)?;
        }
        let file = read_model(open(&self.model)?).map_err(CliError::in_file(&self.model))?;
        let log_zpair = match file.zpair {
            Some(z) => z.ln(),
            None => file.model.log_pair_partition(),
        };
        let corpus = load_corpus(&self.corpus)?;
        let tc = corpus.time_model(true)?;
        let query = Query::new(self.user.as_str(), self.start.as_str(), self.end.as_str(), self.budget)?;
        Ok(Loaded { model: file.model, log_zpair, tc, query })
    }
}

impl Loaded {
    fn graph(&self, settings: &Settings) -> CliResult<(ScoreContext<'_>, PoiGraph)> {
        let ctx =
            ScoreContext::with_log_pair_partition(&self.model, &self.query, settings.score_options()?, self.log_zpair)?;
        let g = build_graph(&ctx, &self.tc, None)?;
        Ok((ctx, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    Exact,
    Alns,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, value_enum, default_value_t = SolverChoice::Alns)]
    solver: SolverChoice,
    /// Write the per-iteration ALNS trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

pub fn recommend(global: &GlobalArgs, a: &RecommendArgs) -> CliResult {
    let mut settings = global.settings()?;
    let loaded = a.query.load(&mut settings)?;
    let (ctx, g) = loaded.graph(&settings)?;
    if !g.feasible(&g.direct_trip()) {
        return Err(triprec::Error::NoFeasibleTrip.into());
    }
    let trip = match a.solver {
        SolverChoice::Exact => solve_exact(&g)?.trip,
        SolverChoice::Alns => {
            let result = run_alns(&g, &settings.alns_config()?)?;
            if let Some(path) = &a.trace {
                let mut w = create(path)?;
                write_trace(&result.trace, &mut w)?;
                finish(w, path)?;
            }
            result.trip
        }
    };
    let pois: Vec<&str> = trip.iter().map(|&v| g.poi(v)).collect();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    write_trip(&mut out, &pois, &g, &trip).map_err(triprec::Error::from)?;
    writeln!(out, "budget\t{:.3}", loaded.query.budget).map_err(triprec::Error::from)?;
    writeln!(out, "ctq_score\t{:.12}", ctx.ctq_score(&pois)?).map_err(triprec::Error::from)?;
    let solver = match a.solver {
        SolverChoice::Exact => "exact",
        SolverChoice::Alns => "alns",
    };
    settings.set("solvers", solver)?;
    let mut m = RunManifest::new("recommend", &settings)?
        .input("model", &a.query.model)
        .input("corpus", &a.query.corpus);
    let default = match &a.trace {
        Some(t) => {
            m = m.output("trace", t);
            with_suffix(t, ".manifest")
        }
        None => PathBuf::from("triprec-recommend.manifest"),
    };
    save_manifest(global, m, default)
}

fn write_trip<W: Write>(w: &mut W, pois: &[&str], g: &PoiGraph, trip: &[usize]) -> io::Result<()> {
    writeln!(w, "step\tpoi\ttransit_s\tvisit_s\tdepart_s")?;
    let mut clock = g.visit_cost(trip[0]);
    writeln!(w, "0\t{}\t{:.3}\t{:.3}\t{:.3}", pois[0], 0.0, g.visit_cost(trip[0]), clock)?;
    for k in 1..trip.len() {
        let transit = g.transit(trip[k - 1], trip[k]);
        let visit = g.visit_cost(trip[k]);
        clock += transit + visit;
        writeln!(w, "{k}\t{}\t{transit:.3}\t{visit:.3}\t{clock:.3}", pois[k])?;
    }
    writeln!(w, "total_cost\t{:.3}", g.trip_cost(trip))
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Per-fold results CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-solver summary table (default: <out>.summary).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Comma-separated solvers: random, pop, exact, alns, alns-pop-pref, alns-pop-only.
    #[arg(long)]
    solvers: Option<String>,
    /// Train each model once on the whole corpus (faster, leaks the test trip).
    #[arg(long)]
    shared_model: bool,
}

pub fn evaluate(global: &GlobalArgs, a: &EvaluateArgs) -> CliResult {
    let mut settings = global.settings()?;
    if let Some(s) = &a.solvers {
        settings.set("solvers", s)?;
    }
    if a.shared_model {
        settings.set("shared_model", true)?;
    }
    let cfg = settings.eval_config()?;
    let corpus = load_corpus(&a.corpus)?;
    let tc = corpus.time_model(true)?;
    let folds = make_folds(&corpus, &tc)?;
    let report = run_evaluation(&corpus, &folds, &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for e in &report.errors {
        eprintln!("warning: fold {} {}: {}", e.fold_id, e.solver, e.message);
    }
    let mut w = create(&a.out)?;
    report.write_csv(&mut w)?;
    finish(w, &a.out)?;
    let summary = a.summary.clone().unwrap_or_else(|| with_suffix(&a.out, ".summary"));
    let mut w = create(&summary)?;
    report.write_summary(&mut w)?;
    finish(w, &summary)?;
    report.write_summary(&mut io::stdout().lock())?;
    let m = RunManifest::new("evaluate", &settings)?
        .input("corpus", &a.corpus)
        .output("results", &a.out)
        .output("summary", &summary);
    save_manifest(global, m, with_suffix(&a.out, ".manifest"))
}

#[derive(Debug, Args)]
pub struct ExportLpArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Output LP file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the query graph as text.
    #[arg(long)]
    graph: Option<PathBuf>,
}

pub fn export_lp(global: &GlobalArgs, a: &ExportLpArgs) -> CliResult {
    let mut settings = global.settings()?;
    let loaded = a.query.load(&mut settings)?;
    let (_, g) = loaded.graph(&settings)?;
    let ilp = build_ilp(&g);
    let mut w = create(&a.out)?;
    write_lp(&ilp, &mut w)?;
    finish(w, &a.out)?;
    println!("{} vertices, {} variables, {} constraints", g.len(), ilp.vars.len(), ilp.constraints.len());
    let mut m = RunManifest::new("export-lp", &settings)?
        .input("model", &a.query.model)
        .input("corpus", &a.query.corpus)
        .output("lp", &a.out);
    if let Some(path) = &a.graph {
        let mut w = create(path)?;
        g.write_dump(&mut w)?;
        finish(w, path)?;
        m = m.output("graph", path);
    }
    save_manifest(global, m, with_suffix(&a.out, ".manifest"))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for checkins.csv and pois.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    cliques: usize,
    #[arg(long, default_value_t = 6)]
    clique_size: usize,
    #[arg(long, default_value_t = 12)]
    users: usize,
    #[arg(long, default_value_t = 72)]
    trips: usize,
    /// Probability that a trip stays in the user's preferred clique.
    #[arg(long, default_value_t = 0.8)]
    preference: f64,
    /// Zipf exponent of POI popularity.
    #[arg(long, default_value_t = 1.0)]
    skew: f64,
}

pub fn synth(global: &GlobalArgs, a: &SynthArgs) -> CliResult {
    let settings = global.settings()?;
    let params = StructuredParams {
        cliques: a.cliques,
        clique_size: a.clique_size,
        users: a.users,
        trips: a.trips,
        preference: a.preference,
        skew: a.skew,
        ..Default::default()
    };
    let (pois, records) = structured_checkins(&params, settings.seed()?)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::in_file(&a.out_dir)(e.into()))?;
    let checkins = a.out_dir.join("checkins.csv");
    let poi_path = a.out_dir.join("pois.csv");
    let mut w = create(&checkins)?;
    write_checkins_csv(&records, &mut w)?;
    finish(w, &checkins)?;
    let mut w = create(&poi_path)?;
    write_pois_csv(&pois, &mut w)?;
    finish(w, &poi_path)?;
    println!("{} check-ins over {} POIs", records.len(), pois.len());
    let m = RunManifest::new("synth", &settings)?.output("checkins", &checkins).output("pois", &poi_path);
    save_manifest(global, m, a.out_dir.join("synth.manifest"))
}
