//! Python bindings: corpora, embedding models, trip recommendation and
//! evaluation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use triprec::alns::run_alns;
use triprec::checkin::{ingest_checkins, read_distance_matrix, read_pois, Corpus, OnRowError};
use triprec::config::Settings;
use triprec::embedding::{read_model, train_with_vocab, write_model, EmbeddingModel, ProbTerms};
use triprec::eval::{evaluate as run_evaluate, make_folds, Metrics, Solver};
use triprec::exact::solve_exact;
use triprec::graph::build_graph;
use triprec::scoring::{Query, ScoreContext};
use triprec::synth::{structured_corpus, StructuredParams};

create_exception!(triprec_py, NoFeasibleTrip, PyValueError);

fn err(e: triprec::Error) -> PyErr {
    match e {
        triprec::Error::NoFeasibleTrip => NoFeasibleTrip::new_err(e.to_string()),
        triprec::Error::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        triprec::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn file_err(path: &Path) -> impl FnOnce(triprec::Error) -> PyErr + '_ {
    move |e| match e {
        triprec::Error::Parse { line, message } => PyValueError::new_err(format!("{}:{line}: {message}", path.display())),
        triprec::Error::Io(io) => PyOSError::new_err(format!("{}: {io}", path.display())),
        other => err(other),
    }
}

fn open(path: &Path) -> PyResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))
}

/// Defaults overridden by a `{key: value}` dict; values are converted with `str()`.
fn settings(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Settings> {
    let mut s = Settings::default();
    if let Some(d) = overrides {
        let mut map = BTreeMap::new();
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<bool>() {
                Ok(b) => b.to_string(),
                Err(_) => v.str()?.to_string(),
            };
            map.insert(key, value);
        }
        s.apply(&map).map_err(err)?;
    }
    Ok(s)
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("recall", m.recall)?;
    d.set_item("precision", m.precision)?;
    d.set_item("f1", m.f1)?;
    d.set_item("recall_star", m.recall_s)?;
    d.set_item("precision_star", m.precision_s)?;
    d.set_item("f1_star", m.f1_s)?;
    Ok(d)
}

/// Trips, POIs and time-cost inputs built from check-in data.
#[pyclass(name = "Corpus", module = "triprec_py", frozen)]
struct PyCorpus {
    inner: Corpus,
}

#[pymethods]
impl PyCorpus {
    /// Builds a corpus from a check-in table and a POI table.
    #[staticmethod]
    #[pyo3(signature = (checkins, pois, distances=None, skip_bad_rows=false, settings=None))]
    fn from_csv(
        checkins: PathBuf,
        pois: PathBuf,
        distances: Option<PathBuf>,
        skip_bad_rows: bool,
        settings: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<Self> {
        let s = self::settings(settings)?;
        let poi_rows = read_pois(open(&pois)?).map_err(file_err(&pois))?;
        let mode = if skip_bad_rows { OnRowError::Skip } else { OnRowError::FailFast };
        let report = ingest_checkins(open(&checkins)?, mode).map_err(file_err(&checkins))?;
        if report.records.is_empty() {
            return Err(PyValueError::new_err(format!("{}: no check-ins", checkins.display())));
        }
        let matrix = match &distances {
            Some(p) => Some(read_distance_matrix(open(p)?).map_err(file_err(p))?),
            None => None,
        };
        let window = s.parse("trip_window").map_err(err)?;
        let rule = s.trip_rule().map_err(err)?;
        let mut inner = Corpus::from_checkins(&report.records, poi_rows, matrix, window, rule).map_err(err)?;
        inner.walking_speed = s.parse("walking_speed").map_err(err)?;
        Ok(PyCorpus { inner })
    }

    /// The structured synthetic corpus for `seed`.
    #[staticmethod]
    #[pyo3(signature = (seed=42))]
    fn synthetic(seed: u64) -> PyResult<Self> {
        let inner = structured_corpus(&StructuredParams::default(), seed).map_err(err)?;
        Ok(PyCorpus { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = Corpus::load(&path).map_err(file_err(&path))?;
        Ok(PyCorpus { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(file_err(&path))
    }

    /// Users, POI visits, trips and mean POIs per trip.
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.inner.stats;
        let d = PyDict::new(py);
        d.set_item("users", s.users)?;
        d.set_item("poi_visits", s.poi_visits)?;
        d.set_item("trips", s.trips)?;
        d.set_item("pois_per_trip", s.pois_per_trip)?;
        Ok(d)
    }

    fn poi_ids(&self) -> Vec<String> {
        self.inner.poi_ids()
    }

    fn user_ids(&self) -> Vec<String> {
        self.inner.user_ids()
    }

    /// `(user, [poi, ...])` for every trip.
    fn trips(&self) -> Vec<(String, Vec<String>)> {
        self.inner
            .trips
            .iter()
            .map(|t| (t.user_id.clone(), t.poi_ids().into_iter().map(String::from).collect()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.trips.len()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.stats;
        format!("Corpus(users={}, trips={}, pois={})", s.users, s.trips, self.inner.pois.len())
    }
}

/// Trained POI, user and popularity embeddings.
#[pyclass(name = "Model", module = "triprec_py", frozen)]
struct PyModel {
    inner: EmbeddingModel,
    log_zpair: f64,
}

#[pymethods]
impl PyModel {
    /// Trains on every trip of `corpus`.
    #[staticmethod]
    #[pyo3(signature = (corpus, settings=None))]
    fn train(py: Python<'_>, corpus: &PyCorpus, settings: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg = self::settings(settings)?.train_config().map_err(err)?;
        let c = &corpus.inner;
        let inner = py
            .detach(|| train_with_vocab(&c.trips, c.poi_ids(), c.user_ids(), &cfg))
            .map_err(err)?;
        let log_zpair = inner.log_pair_partition();
        Ok(PyModel { inner, log_zpair })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = read_model(open(&path)?).map_err(file_err(&path))?;
        let log_zpair = match file.zpair {
            Some(z) => z.ln(),
            None => file.model.log_pair_partition(),
        };
        Ok(PyModel { inner: file.model, log_zpair })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let f = File::create(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(f);
        write_model(&mut w, &self.inner, Some(self.log_zpair.exp())).map_err(file_err(&path))?;
        w.flush().map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn poi_ids(&self) -> Vec<String> {
        self.inner.poi_ids().to_vec()
    }

    fn user_ids(&self) -> Vec<String> {
        self.inner.user_ids().to_vec()
    }

    fn poi_vector(&self, poi: &str) -> PyResult<Vec<f64>> {
        let i = self.inner.poi(poi).map_err(err)?;
        Ok(self.inner.poi_vector(i).to_vec())
    }

    fn user_vector(&self, user: &str) -> PyResult<Vec<f64>> {
        let u = self.inner.user(user).map_err(err)?;
        Ok(self.inner.user_vector(u).to_vec())
    }

    fn bias(&self, poi: &str) -> PyResult<f64> {
        let i = self.inner.poi(poi).map_err(err)?;
        Ok(self.inner.bias(i))
    }

    /// Inner product of two POI vectors.
    fn csim(&self, a: &str, b: &str) -> PyResult<f64> {
        self.inner.csim(a, b).map_err(err)
    }

    /// Probability of `target` given its context POIs and the user.
    fn prob(&self, target: &str, context: Vec<String>, user: &str) -> PyResult<f64> {
        let ctx: Vec<&str> = context.iter().map(String::as_str).collect();
        self.inner.prob(target, &ctx, user, ProbTerms::FULL).map_err(err)
    }

    fn log_pair_partition(&self) -> f64 {
        self.log_zpair
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(pois={}, users={}, dim={})",
            self.inner.num_pois(),
            self.inner.num_users(),
            self.inner.dim()
        )
    }
}

/// Recommends a trip from `start` to `end` within `budget` seconds.
///
/// Returns a dict with `trip`, `total_cost` and `ctq_score`.
#[pyfunction]
#[pyo3(signature = (model, corpus, user, start, end, budget, solver="alns", settings=None))]
#[allow(clippy::too_many_arguments)]
fn recommend<'py>(
    py: Python<'py>,
    model: &PyModel,
    corpus: &PyCorpus,
    user: &str,
    start: &str,
    end: &str,
    budget: f64,
    solver: &str,
    settings: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let s = self::settings(settings)?;
    let exact = match solver {
        "exact" => true,
        "alns" => false,
        other => return Err(PyValueError::new_err(format!("unknown solver `{other}`"))),
    };
    let alns_cfg = s.alns_config().map_err(err)?;
    let options = s.score_options().map_err(err)?;
    let query = Query::new(user, start, end, budget).map_err(err)?;
    let (pois, cost, score) = py
        .detach(|| -> triprec::Result<(Vec<String>, f64, f64)> {
            let tc = corpus.inner.time_model(true)?;
            let ctx = ScoreContext::with_log_pair_partition(&model.inner, &query, options, model.log_zpair)?;
            let g = build_graph(&ctx, &tc, None)?;
            if !g.feasible(&g.direct_trip()) {
                return Err(triprec::Error::NoFeasibleTrip);
            }
            let trip = if exact { solve_exact(&g)?.trip } else { run_alns(&g, &alns_cfg)?.trip };
            let pois: Vec<&str> = trip.iter().map(|&v| g.poi(v)).collect();
            let score = ctx.ctq_score(&pois)?;
            Ok((pois.into_iter().map(String::from).collect(), g.trip_cost(&trip), score))
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("trip", pois)?;
    d.set_item("total_cost", cost)?;
    d.set_item("ctq_score", score)?;
    Ok(d)
}

/// Recall, precision and F1 of a recommended trip against the true one.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, recommended: Vec<String>, truth: Vec<String>) -> PyResult<Bound<'py, PyDict>> {
    let m = triprec::eval::metrics(&recommended, &truth).map_err(err)?;
    metrics_dict(py, &m)
}

/// Leave-one-out evaluation; returns one summary dict per solver.
#[pyfunction]
#[pyo3(signature = (corpus, solvers=None, settings=None))]
fn evaluate<'py>(
    py: Python<'py>,
    corpus: &PyCorpus,
    solvers: Option<Vec<String>>,
    settings: Option<&Bound<'py, PyDict>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = self::settings(settings)?.eval_config().map_err(err)?;
    if let Some(names) = solvers {
        cfg.solvers = names.iter().map(|n| n.parse::<Solver>()).collect::<triprec::Result<_>>().map_err(err)?;
    }
    let report = py
        .detach(|| {
            let tc = corpus.inner.time_model(true)?;
            let folds = make_folds(&corpus.inner, &tc)?;
            run_evaluate(&corpus.inner, &folds, &cfg)
        })
        .map_err(err)?;
    report
        .summary
        .iter()
        .map(|s| {
            let d = metrics_dict(py, &s.mean)?;
            d.set_item("solver", s.solver.name())?;
            d.set_item("folds", s.folds)?;
            d.set_item("errors", s.errors)?;
            d.set_item("mean_ms", s.mean_ms)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn triprec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(recommend, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("NoFeasibleTrip", m.py().get_type::<NoFeasibleTrip>())?;
    Ok(())
}
