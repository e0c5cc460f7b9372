//! Leave-one-out evaluation: folds, recall / precision / F1 (plain and
//! starred), the Random and Pop baselines, and embedding ablations.

use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alns::{run_alns, AlnsConfig};
use crate::checkin::{Corpus, TimeCostModel, Trip};
use crate::embedding::{train_with_vocab, EmbeddingModel, TrainConfig, TrainMode};
use crate::error::{Error, Result};
use crate::exact::solve_exact;
use crate::graph::{build_graph, PoiGraph};
use crate::scoring::{Query, ScoreContext, ScoreOptions};

/// One held-out trip and the query derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub id: usize,
    /// Index of the test trip in the corpus; every other trip trains.
    pub trip_index: usize,
    pub query: Query,
    /// The test trip's POI sequence.
    pub truth: Vec<String>,
}

impl Fold {
    pub fn training(&self, trips: &[Trip]) -> Vec<Trip> {
        trips
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.trip_index)
            .map(|(_, t)| t.clone())
            .collect()
    }
}

/// One fold per trip with at least three distinct POIs, in corpus order.
/// The budget is the test trip's own time cost.
pub fn make_folds(corpus: &Corpus, tc: &TimeCostModel) -> Result<Vec<Fold>> {
    let mut folds = Vec::new();
    for (i, t) in corpus.trips.iter().enumerate() {
        if t.distinct_pois().len() < 3 {
            continue;
        }
        let ids = t.poi_ids();
        let budget = tc.trip_cost(&ids)?;
        let query = Query::new(t.user_id.clone(), ids[0], ids[ids.len() - 1], budget)?;
        folds.push(Fold {
            id: folds.len(),
            trip_index: i,
            query,
            truth: ids.iter().map(|s| s.to_string()).collect(),
        });
    }
    if folds.is_empty() {
        return Err(Error::invalid("no trip has at least three distinct POIs"));
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub recall_s: f64,
    pub precision_s: f64,
    pub f1_s: f64,
}

fn f1(r: f64, p: f64) -> f64 {
    if r + p == 0.0 {
        0.0
    } else {
        2.0 * r * p / (r + p)
    }
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn set_scores(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> (f64, f64, f64) {
    let hits = a.intersection(b).count();
    let r = ratio(hits, b.len());
    let p = ratio(hits, a.len());
    (r, p, f1(r, p))
}

fn id_set<S: AsRef<str>>(t: &[S]) -> BTreeSet<&str> {
    t.iter().map(AsRef::as_ref).collect()
}

/// Scores a recommended trip against the ground truth. Plain metrics
/// compare interior POI sets; starred ones compare all POIs.
pub fn metrics<S: AsRef<str>, T: AsRef<str>>(rec: &[S], truth: &[T]) -> Result<Metrics> {
    if rec.len() < 2 || truth.len() < 2 {
        return Err(Error::invalid("trips need a start and an end"));
    }
    let (rf, rl) = (rec[0].as_ref(), rec[rec.len() - 1].as_ref());
    let (tf, tl) = (truth[0].as_ref(), truth[truth.len() - 1].as_ref());
    if rf != tf || rl != tl {
        return Err(Error::invalid(format!("endpoint mismatch: {rf}..{rl} vs {tf}..{tl}")));
    }
    let (recall, precision, f) = set_scores(&id_set(&rec[1..rec.len() - 1]), &id_set(&truth[1..truth.len() - 1]));
    let (recall_s, precision_s, f_s) = set_scores(&id_set(rec), &id_set(truth));
    Ok(Metrics { recall, precision, f1: f, recall_s, precision_s, f1_s: f_s })
}

/// What a baseline does when its chosen POI does not fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineMode {
    /// Return the trip built so far.
    #[default]
    Stop,
    /// Drop that POI and choose again among the rest.
    Skip,
}

fn insert_until<F>(g: &PoiGraph, mode: BaselineMode, mut pick: F) -> Vec<usize>
where
    F: FnMut(&[usize]) -> Option<usize>,
{
    let mut trip = g.direct_trip();
    let mut cost = g.trip_cost(&trip);
    let mut skipped: Vec<usize> = Vec::new();
    loop {
        let pool: Vec<usize> = g.interior().filter(|v| !trip.contains(v) && !skipped.contains(v)).collect();
        let Some(v) = pick(&pool) else {
            return trip;
        };
        let (pos, delta) = g.best_insertion(&trip, v);
        if g.fits(cost + delta) {
            trip.insert(pos, v);
            cost += delta;
        } else if mode == BaselineMode::Skip {
            skipped.push(v);
        } else {
            return trip;
        }
    }
}

/// Adds uniformly random unvisited POIs at their cheapest positions.
pub fn baseline_random<R: Rng + ?Sized>(g: &PoiGraph, rng: &mut R, mode: BaselineMode) -> Vec<usize> {
    insert_until(g, mode, |pool| (!pool.is_empty()).then(|| pool[rng.random_range(0..pool.len())]))
}

/// Adds the most-visited unvisited POI (ties by id) at its cheapest
/// position.
pub fn baseline_pop(g: &PoiGraph, visits: &HashMap<String, usize>, mode: BaselineMode) -> Vec<usize> {
    let count = |v: usize| visits.get(g.poi(v)).copied().unwrap_or(0);
    insert_until(g, mode, |pool| {
        pool.iter().copied().min_by(|&a, &b| count(b).cmp(&count(a)).then_with(|| g.poi(a).cmp(g.poi(b))))
    })
}

pub fn visit_counts(trips: &[Trip]) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for v in trips.iter().flat_map(|t| &t.visits) {
        *m.entry(v.poi_id.clone()).or_insert(0) += 1;
    }
    m
}

/// Embedding variants for the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ablation {
    PopOnly,
    PopPref,
    Full,
}

impl Ablation {
    pub fn train_mode(self) -> TrainMode {
        match self {
            Ablation::PopOnly => TrainMode::PopOnly,
            Ablation::PopPref => TrainMode::PopPref,
            Ablation::Full => TrainMode::Full,
        }
    }
}

/// Trains the ablation variant over the corpus vocabulary.
pub fn ablation_train(corpus: &Corpus, trips: &[Trip], cfg: &TrainConfig, variant: Ablation) -> Result<EmbeddingModel> {
    let cfg = TrainConfig { mode: variant.train_mode(), ..cfg.clone() };
    train_with_vocab(trips, corpus.poi_ids(), corpus.user_ids(), &cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Solver {
    Random,
    Pop,
    Exact,
    Alns,
    AlnsPopPref,
    AlnsPopOnly,
}

impl Solver {
    pub const ALL: [Solver; 6] =
        [Solver::Random, Solver::Pop, Solver::Exact, Solver::Alns, Solver::AlnsPopPref, Solver::AlnsPopOnly];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Random => "random",
            Solver::Pop => "pop",
            Solver::Exact => "exact",
            Solver::Alns => "alns",
            Solver::AlnsPopPref => "alns-pop-pref",
            Solver::AlnsPopOnly => "alns-pop-only",
        }
    }

    fn embedding(self) -> Option<Ablation> {
        match self {
            Solver::Random | Solver::Pop => None,
            Solver::Exact | Solver::Alns => Some(Ablation::Full),
            Solver::AlnsPopPref => Some(Ablation::PopPref),
            Solver::AlnsPopOnly => Some(Ablation::PopOnly),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown solver `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub solvers: Vec<Solver>,
    pub train: TrainConfig,
    pub alns: AlnsConfig,
    pub score: ScoreOptions,
    pub baseline_mode: BaselineMode,
    /// Train each variant once on the whole corpus instead of per fold.
    /// Faster, but the test trip leaks into training.
    pub shared_model: bool,
    /// Folds on graphs larger than this skip the exact solver.
    pub exact_max_vertices: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            solvers: vec![Solver::Random, Solver::Pop, Solver::Alns],
            train: TrainConfig::default(),
            alns: AlnsConfig::default(),
            score: ScoreOptions::default(),
            baseline_mode: BaselineMode::Stop,
            shared_model: false,
            exact_max_vertices: 16,
            seed: 42,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold_id: usize,
    pub solver: Solver,
    pub metrics: Metrics,
    pub ms: f64,
    pub trip: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldError {
    pub fold_id: usize,
    pub solver: Solver,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSummary {
    pub solver: Solver,
    pub folds: usize,
    pub errors: usize,
    pub mean: Metrics,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<FoldResult>,
    pub errors: Vec<FoldError>,
    pub warnings: Vec<String>,
    pub summary: Vec<SolverSummary>,
}

impl EvalReport {
    pub fn summary_for(&self, solver: Solver) -> Option<&SolverSummary> {
        self.summary.iter().find(|s| s.solver == solver)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "fold_id,solver,recall,precision,f1,recall_s,precision_s,f1_s,ms")?;
        for r in &self.rows {
            let m = &r.metrics;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{:.3}",
                r.fold_id, r.solver, m.recall, m.precision, m.f1, m.recall_s, m.precision_s, m.f1_s, r.ms
            )?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "{:<14} {:>5} {:>6} {:>7} {:>9} {:>7} {:>8} {:>10} {:>7} {:>10}",
            "solver", "folds", "errors", "recall", "precision", "f1", "recall*", "precision*", "f1*", "ms"
        )?;
        for s in &self.summary {
            let m = &s.mean;
            writeln!(
                w,
                "{:<14} {:>5} {:>6} {:>7.4} {:>9.4} {:>7.4} {:>8.4} {:>10.4} {:>7.4} {:>10.2}",
                s.solver.name(),
                s.folds,
                s.errors,
                m.recall,
                m.precision,
                m.f1,
                m.recall_s,
                m.precision_s,
                m.f1_s,
                s.mean_ms
            )?;
        }
        Ok(())
    }
}

/// Mean of each metric; zero for no rows.
pub fn mean_metrics<'a>(rows: impl IntoIterator<Item = &'a Metrics>) -> Metrics {
    let mut sum = Metrics::default();
    let mut n = 0usize;
    for m in rows {
        sum.recall += m.recall;
        sum.precision += m.precision;
        sum.f1 += m.f1;
        sum.recall_s += m.recall_s;
        sum.precision_s += m.precision_s;
        sum.f1_s += m.f1_s;
        n += 1;
    }
    if n == 0 {
        return sum;
    }
    let k = n as f64;
    Metrics {
        recall: sum.recall / k,
        precision: sum.precision / k,
        f1: sum.f1 / k,
        recall_s: sum.recall_s / k,
        precision_s: sum.precision_s / k,
        f1_s: sum.f1_s / k,
    }
}

type Models = HashMap<Ablation, EmbeddingModel>;

fn train_models(corpus: &Corpus, trips: &[Trip], cfg: &EvalConfig) -> Result<Models> {
    let mut out = HashMap::new();
    for s in &cfg.solvers {
        if let Some(a) = s.embedding() {
            if let Entry::Vacant(e) = out.entry(a) {
                e.insert(ablation_train(corpus, trips, &cfg.train, a)?);
            }
        }
    }
    Ok(out)
}

struct FoldOutput {
    rows: Vec<FoldResult>,
    errors: Vec<FoldError>,
}

fn run_solver(
    solver: Solver,
    fold: &Fold,
    corpus: &Corpus,
    tc: &TimeCostModel,
    models: &Models,
    counts: &HashMap<String, usize>,
    cfg: &EvalConfig,
) -> Result<Vec<String>> {
    let graph_for = |model: &EmbeddingModel| -> Result<PoiGraph> {
        let ctx = ScoreContext::new(model, &fold.query, cfg.score)?;
        build_graph(&ctx, tc, None)
    };
    let trip = match solver.embedding() {
        None => {
            let blank = EmbeddingModel::zeros(1, corpus.poi_ids(), corpus.user_ids())?;
            let g = graph_for(&blank)?;
            if !g.feasible(&g.direct_trip()) {
                return Err(Error::NoFeasibleTrip);
            }
            let t = if solver == Solver::Random {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(fold.id as u64));
                baseline_random(&g, &mut rng, cfg.baseline_mode)
            } else {
                baseline_pop(&g, counts, cfg.baseline_mode)
            };
            return Ok(t.iter().map(|&v| g.poi(v).to_string()).collect());
        }
        Some(a) => {
            let g = graph_for(&models[&a])?;
            let trip = if solver == Solver::Exact {
                if g.len() > cfg.exact_max_vertices {
                    return Err(Error::invalid(format!(
                        "graph has {} vertices, above the exact limit of {}",
                        g.len(),
                        cfg.exact_max_vertices
                    )));
                }
                solve_exact(&g)?.trip
            } else {
                run_alns(&g, &cfg.alns)?.trip
            };
            trip.iter().map(|&v| g.poi(v).to_string()).collect()
        }
    };
    Ok(trip)
}

fn run_fold(fold: &Fold, corpus: &Corpus, tc: &TimeCostModel, shared: Option<&Models>, cfg: &EvalConfig) -> FoldOutput {
    let mut out = FoldOutput { rows: Vec::new(), errors: Vec::new() };
    let training = if shared.is_some() { corpus.trips.clone() } else { fold.training(&corpus.trips) };
    let counts = visit_counts(&training);
    let owned;
    let models = match shared {
        Some(m) => m,
        None => match train_models(corpus, &training, cfg) {
            Ok(m) => {
                owned = m;
                &owned
            }
            Err(e) => {
                for &solver in &cfg.solvers {
                    out.errors.push(FoldError { fold_id: fold.id, solver, message: e.to_string() });
                }
                return out;
            }
        },
    };
    for &solver in &cfg.solvers {
        let t0 = Instant::now();
        let res = run_solver(solver, fold, corpus, tc, models, &counts, cfg)
            .and_then(|trip| Ok((metrics(&trip, &fold.truth)?, trip)));
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        match res {
            Ok((metrics, trip)) => out.rows.push(FoldResult { fold_id: fold.id, solver, metrics, ms, trip }),
            Err(e) => out.errors.push(FoldError { fold_id: fold.id, solver, message: e.to_string() }),
        }
    }
    out
}

/// Runs every solver on every fold. Folds are spread over `workers`
/// threads; results are reduced in fold order, so the report does not
/// depend on the worker count (apart from timings).
pub fn evaluate(corpus: &Corpus, folds: &[Fold], cfg: &EvalConfig) -> Result<EvalReport> {
    if folds.is_empty() {
        return Err(Error::invalid("no folds to evaluate"));
    }
    if cfg.solvers.is_empty() {
        return Err(Error::invalid("no solvers selected"));
    }
    cfg.train.validate()?;
    cfg.alns.validate()?;
    let tc = corpus.time_model(true)?;
    let mut warnings = Vec::new();
    if corpus.trips.len() == 1 && !cfg.shared_model {
        warnings.push("the corpus has a single trip, so every fold trains on nothing".to_string());
    }
    let shared = if cfg.shared_model { Some(train_models(corpus, &corpus.trips, cfg)?) } else { None };

    let workers = cfg.workers.clamp(1, folds.len());
    let mut outputs: Vec<Option<FoldOutput>> = (0..folds.len()).map(|_| None).collect();
    if workers == 1 {
        for (k, f) in folds.iter().enumerate() {
            outputs[k] = Some(run_fold(f, corpus, &tc, shared.as_ref(), cfg));
        }
    } else {
        let tc = &tc;
        let shared = shared.as_ref();
        let parts: Vec<Vec<(usize, FoldOutput)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    s.spawn(move || {
                        (w..folds.len())
                            .step_by(workers)
                            .map(|k| (k, run_fold(&folds[k], corpus, tc, shared, cfg)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
        });
        for (k, o) in parts.into_iter().flatten() {
            outputs[k] = Some(o);
        }
    }

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for o in outputs.into_iter().flatten() {
        rows.extend(o.rows);
        errors.extend(o.errors);
    }
    let summary = cfg
        .solvers
        .iter()
        .map(|&solver| {
            let mine: Vec<&FoldResult> = rows.iter().filter(|r| r.solver == solver).collect();
            let mean_ms = if mine.is_empty() { 0.0 } else { mine.iter().map(|r| r.ms).sum::<f64>() / mine.len() as f64 };
            SolverSummary {
                solver,
                folds: mine.len(),
                errors: errors.iter().filter(|e| e.solver == solver).count(),
                mean: mean_metrics(mine.iter().map(|r| &r.metrics)),
                mean_ms,
            }
        })
        .collect();
    Ok(EvalReport { rows, errors, warnings, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let m = metrics(&["s", "a", "b", "e"], &["s", "a", "b", "e"]).unwrap();
        assert_eq!((m.recall, m.precision, m.f1, m.recall_s, m.precision_s, m.f1_s), (1.0, 1.0, 1.0, 1.0, 1.0, 1.0));
        let m = metrics(&["s", "a", "e"], &["s", "b", "e"]).unwrap();
        assert_eq!((m.recall, m.precision, m.f1), (0.0, 0.0, 0.0));
        assert!((m.recall_s - 2.0 / 3.0).abs() < 1e-12);
        let m = metrics(&["s", "a", "e"], &["s", "a", "b", "e"]).unwrap();
        assert_eq!((m.recall, m.precision), (0.5, 1.0));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(metrics(&["s", "a", "e"], &["x", "a", "e"]).is_err());
        let m = metrics(&["s", "e"], &["s", "a", "e"]).unwrap();
        assert_eq!((m.recall, m.precision, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mean_of_two() {
        let a = Metrics { f1: 1.0, ..Default::default() };
        let b = Metrics::default();
        assert_eq!(mean_metrics([&a, &b]).f1, 0.5);
    }

    #[test]
    fn solver_names_roundtrip() {
        for s in Solver::ALL {
            assert_eq!(s.name().parse::<Solver>().unwrap(), s);
        }
        assert!("greedy".parse::<Solver>().is_err());
    }
}
