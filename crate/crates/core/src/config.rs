//! Flat `key = value` settings shared by every command, and the run
//! manifest written next to each output.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::alns::AlnsConfig;
use crate::checkin::{TripRule, DEFAULT_TRIP_WINDOW, DEFAULT_WALKING_SPEED_KMH};
use crate::embedding::{NegativeSampling, RegMode, TrainConfig, TrainMode};
use crate::error::{Error, Result};
use crate::eval::{BaselineMode, EvalConfig, Solver};
use crate::scoring::ScoreOptions;

pub const ARTIFACT_VERSION: &str = "1";

/// Parses `key = value` lines; `#` starts a comment line, blank lines are
/// skipped, and later keys override earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse { line: i + 1, message: format!("expected `key = value`, got `{line}`") });
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse { line: i + 1, message: "empty key".into() });
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn names<T: Copy + PartialEq>(pairs: &[(&'static str, T)], value: T) -> &'static str {
    pairs.iter().find(|(_, v)| *v == value).map(|(n, _)| *n).unwrap()
}

fn lookup<T: Copy>(pairs: &[(&'static str, T)], key: &str, text: &str) -> Result<T> {
    pairs
        .iter()
        .find(|(n, _)| *n == text)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let known: Vec<&str> = pairs.iter().map(|p| p.0).collect();
            Error::invalid(format!("`{key}` must be one of {}, got `{text}`", known.join(", ")))
        })
}

const REG_MODES: [(&str, RegMode); 2] = [("literal", RegMode::Literal), ("corrected", RegMode::Corrected)];
const SAMPLINGS: [(&str, NegativeSampling); 2] =
    [("uniform", NegativeSampling::Uniform), ("frequency", NegativeSampling::Frequency)];
const TRAIN_MODES: [(&str, TrainMode); 3] =
    [("full", TrainMode::Full), ("pop-pref", TrainMode::PopPref), ("pop-only", TrainMode::PopOnly)];
const TRIP_RULES: [(&str, TripRule); 2] = [("anchored", TripRule::Anchored), ("gap", TripRule::Gap)];
const BASELINE_MODES: [(&str, BaselineMode); 2] = [("stop", BaselineMode::Stop), ("skip", BaselineMode::Skip)];

/// Fully materialized settings. Built from defaults, then overlaid by a
/// config file, then by explicit flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = AlnsConfig::default();
        let e = EvalConfig::default();
        let pi: Vec<String> = a.pi.iter().map(|x| x.to_string()).collect();
        let solvers: Vec<&str> = e.solvers.iter().map(|s| s.name()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("seed", t.seed.to_string()),
            ("trip_window", DEFAULT_TRIP_WINDOW.to_string()),
            ("trip_rule", names(&TRIP_RULES, TripRule::default()).into()),
            ("walking_speed", DEFAULT_WALKING_SPEED_KMH.to_string()),
            ("dim", t.dim.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("regularization", t.regularization.to_string()),
            ("negatives", t.negatives.to_string()),
            ("epochs", t.epochs.to_string()),
            ("reg_mode", names(&REG_MODES, t.reg_mode).into()),
            ("sampling", names(&SAMPLINGS, t.sampling).into()),
            ("shuffle", t.shuffle.to_string()),
            ("train_mode", names(&TRAIN_MODES, t.mode).into()),
            ("bias_in_closeness", "false".into()),
            ("runs", a.runs.to_string()),
            ("iterations", a.iterations.to_string()),
            ("rho", a.rho.to_string()),
            ("psi", a.psi.to_string()),
            ("pi", pi.join(",")),
            ("kappa", a.kappa.to_string()),
            ("tau", a.tau.to_string()),
            ("theta", a.theta.to_string()),
            ("pool_capacity", a.pool_capacity.to_string()),
            ("solvers", solvers.join(",")),
            ("baseline_mode", names(&BASELINE_MODES, e.baseline_mode).into()),
            ("shared_model", e.shared_model.to_string()),
            ("exact_max_vertices", e.exact_max_vertices.to_string()),
            ("workers", e.workers.to_string()),
        ];
        Settings { values: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect() }
    }
}

impl Settings {
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Overrides one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: impl Display) -> Result<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => Err(Error::invalid(format!("unknown setting `{key}`"))),
        }
    }

    pub fn apply(&mut self, overrides: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in overrides {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply(&parse_kv(&text)?)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("no setting `{key}`"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse().map_err(|_| Error::invalid(format!("invalid value `{v}` for `{key}`")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    pub fn trip_rule(&self) -> Result<TripRule> {
        lookup(&TRIP_RULES, "trip_rule", self.get("trip_rule"))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            dim: self.parse("dim")?,
            learning_rate: self.parse("learning_rate")?,
            regularization: self.parse("regularization")?,
            negatives: self.parse("negatives")?,
            epochs: self.parse("epochs")?,
            seed: self.seed()?,
            reg_mode: lookup(&REG_MODES, "reg_mode", self.get("reg_mode"))?,
            sampling: lookup(&SAMPLINGS, "sampling", self.get("sampling"))?,
            shuffle: self.parse("shuffle")?,
            mode: lookup(&TRAIN_MODES, "train_mode", self.get("train_mode"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn alns_config(&self) -> Result<AlnsConfig> {
        let pi: Vec<f64> = self
            .get("pi")
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("invalid `pi` list `{}`", self.get("pi"))))?;
        let pi: [f64; 5] = pi.try_into().map_err(|_| Error::invalid("`pi` needs exactly five values"))?;
        let cfg = AlnsConfig {
            runs: self.parse("runs")?,
            iterations: self.parse("iterations")?,
            rho: self.parse("rho")?,
            psi: self.parse("psi")?,
            pi,
            kappa: self.parse("kappa")?,
            tau: self.parse("tau")?,
            theta: self.parse("theta")?,
            pool_capacity: self.parse("pool_capacity")?,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn score_options(&self) -> Result<ScoreOptions> {
        Ok(ScoreOptions { bias_in_closeness: self.parse("bias_in_closeness")? })
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let solvers = self
            .get("solvers")
            .split(',')
            .map(|s| s.trim().parse::<Solver>())
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalConfig {
            solvers,
            train: self.train_config()?,
            alns: self.alns_config()?,
            score: self.score_options()?,
            baseline_mode: lookup(&BASELINE_MODES, "baseline_mode", self.get("baseline_mode"))?,
            shared_model: self.parse("shared_model")?,
            exact_max_vertices: self.parse("exact_max_vertices")?,
            seed: self.seed()?,
            workers: self.parse::<usize>("workers")?.max(1),
        })
    }
}

/// What a command ran with; written as flat `key=value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub settings: Settings,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, settings: &Settings) -> Result<Self> {
        Ok(RunManifest {
            command: command.into(),
            seed: settings.seed()?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            settings: settings.clone(),
        })
    }

    pub fn input(mut self, name: &str, path: impl AsRef<Path>) -> Self {
        self.inputs.insert(name.into(), path.as_ref().display().to_string());
        self
    }

    pub fn output(mut self, name: &str, path: impl AsRef<Path>) -> Self {
        self.outputs.insert(name.into(), path.as_ref().display().to_string());
        self
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "artifact_version={ARTIFACT_VERSION}")?;
        writeln!(w, "command={}", self.command)?;
        writeln!(w, "seed={}", self.seed)?;
        for (k, v) in &self.inputs {
            writeln!(w, "input.{k}={v}")?;
        }
        for (k, v) in &self.outputs {
            writeln!(w, "output.{k}={v}")?;
        }
        for (k, v) in self.settings.values() {
            writeln!(w, "config.{k}={v}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }
}
