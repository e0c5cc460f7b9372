use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingModel;
use crate::checkin::Trip;
use crate::error::{Error, Result};

/// How the regularization term enters the negative POI's update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegMode {
    /// The whole bracket, including `-2λθ`, is subtracted for the negative
    /// POI, so regularization grows `l'` and `l'.p`.
    #[default]
    Literal,
    /// Plain gradient ascent on the regularized objective: every parameter
    /// is shrunk.
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeSampling {
    #[default]
    Uniform,
    /// Proportional to training visit counts.
    Frequency,
}

/// Which parts of the model are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    #[default]
    Full,
    /// User vectors, POI vectors and biases; the context term is zeroed.
    PopPref,
    /// Only the popularity biases; every vector stays zero.
    PopOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    pub reg_mode: RegMode,
    pub sampling: NegativeSampling,
    pub shuffle: bool,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 13,
            learning_rate: 0.0005,
            regularization: 0.02,
            negatives: 5,
            epochs: 50,
            seed: 42,
            reg_mode: RegMode::Literal,
            sampling: NegativeSampling::Uniform,
            shuffle: false,
            mode: TrainMode::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::invalid("regularization must be >= 0"));
        }
        if self.negatives == 0 {
            return Err(Error::invalid("negatives per observation must be >= 1"));
        }
        Ok(())
    }
}

/// One training example: a target POI of a trip with the trip's other POIs
/// as its context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub user: usize,
    pub trip: Vec<usize>,
    pub target: usize,
    pub context: Vec<usize>,
}

impl Observation {
    pub fn new(trip_pois: Vec<usize>, target: usize, user: usize) -> Result<Self> {
        if !trip_pois.contains(&target) {
            return Err(Error::invalid("observation target is not in its trip"));
        }
        let context = trip_pois.iter().copied().filter(|&p| p != target).collect();
        Ok(Observation {
            user,
            trip: trip_pois,
            target,
            context,
        })
    }
}

/// One observation per (trip, distinct POI), trips in corpus order and
/// targets in trip order.
pub fn observations(trips: &[Trip], model: &EmbeddingModel) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for t in trips {
        let user = model.user(&t.user_id)?;
        let pois = t
            .distinct_pois()
            .into_iter()
            .map(|p| model.poi(p))
            .collect::<Result<Vec<_>>>()?;
        for &target in &pois {
            out.push(Observation::new(pois.clone(), target, user)?);
        }
    }
    Ok(out)
}

/// Draws negatives with replacement from the POIs outside a trip.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    n: usize,
    weighted: Option<WeightedIndex<f64>>,
    weights: Vec<f64>,
}

impl NegativeSampler {
    pub fn uniform(n_pois: usize) -> Self {
        NegativeSampler {
            n: n_pois,
            weighted: None,
            weights: Vec::new(),
        }
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        let weighted = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(NegativeSampler {
            n: weights.len(),
            weighted: Some(weighted),
            weights,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, trip: &[usize], k: usize, rng: &mut R) -> Result<Vec<usize>> {
        let eligible = (0..self.n).filter(|i| !trip.contains(i)).count();
        if eligible == 0 {
            return Err(Error::invalid("trip covers every POI; no negative to sample"));
        }
        let weighted = self
            .weighted
            .as_ref()
            .filter(|_| (0..self.n).any(|i| !trip.contains(&i) && self.weights[i] > 0.0));
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            // Rejection keeps the draw uniform (or weight-proportional) over
            // the POIs outside the trip.
            let c = match weighted {
                Some(w) => w.sample(rng),
                None => rng.random_range(0..self.n),
            };
            if !trip.contains(&c) {
                out.push(c);
            }
        }
        Ok(out)
    }
}

pub fn sample_negatives<R: Rng + ?Sized>(
    model: &EmbeddingModel,
    trip: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    NegativeSampler::uniform(model.num_pois()).sample(trip, k, rng)
}

fn one_minus_sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + z.exp())
}

fn ln_sigmoid(z: f64) -> f64 {
    if z > 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn margin(model: &EmbeddingModel, obs: &Observation, negative: usize, mode: TrainMode) -> f64 {
    let d = model.dim();
    match mode {
        TrainMode::Full => {
            let c = model.context_sum(&obs.context);
            model.margin_with(obs.target, negative, &c, model.user_vector(obs.user))
        }
        TrainMode::PopPref => {
            model.margin_with(obs.target, negative, &vec![0.0; d], model.user_vector(obs.user))
        }
        TrainMode::PopOnly => model.bias(obs.target) - model.bias(negative),
    }
}

/// One stochastic gradient step for an (observation, negative) pair. All
/// updates read the pre-step parameter values.
pub fn sgd_step(model: &mut EmbeddingModel, obs: &Observation, negative: usize, cfg: &TrainConfig) {
    let eta = cfg.learning_rate;
    let lambda = cfg.regularization;
    let d = model.dim();
    let z = margin(model, obs, negative, cfg.mode);
    let delta = one_minus_sigmoid(z);
    let neg_reg = match cfg.reg_mode {
        RegMode::Literal => -2.0 * lambda,
        RegMode::Corrected => 2.0 * lambda,
    };

    let l = obs.target;
    let lp = model.bias(l);
    let np = model.bias(negative);
    *model.bias_mut(l) = lp + eta * (delta - 2.0 * lambda * lp);
    *model.bias_mut(negative) = np - eta * (delta + neg_reg * np);

    if cfg.mode == TrainMode::PopOnly {
        return;
    }

    let u0 = model.user_vector(obs.user).to_vec();
    let l0 = model.poi_vector(l).to_vec();
    let n0 = model.poi_vector(negative).to_vec();
    let mut direction = u0.clone();
    if cfg.mode == TrainMode::Full {
        for (dir, c) in direction.iter_mut().zip(model.context_sum(&obs.context)) {
            *dir += c;
        }
    }
    let diff: Vec<f64> = l0.iter().zip(&n0).map(|(a, b)| a - b).collect();

    for (k, u) in model.user_vector_mut(obs.user).iter_mut().enumerate() {
        *u += eta * (delta * diff[k] - 2.0 * lambda * u0[k]);
    }
    for (k, x) in model.poi_vector_mut(l).iter_mut().enumerate() {
        *x += eta * (delta * direction[k] - 2.0 * lambda * l0[k]);
    }
    for (k, x) in model.poi_vector_mut(negative).iter_mut().enumerate() {
        *x -= eta * (delta * direction[k] + neg_reg * n0[k]);
    }
    if cfg.mode == TrainMode::Full {
        for &c in &obs.context {
            let v = model.poi_vector_mut(c);
            for k in 0..d {
                let c0 = v[k];
                v[k] += eta * (delta * diff[k] - 2.0 * lambda * c0);
            }
        }
    }
}

fn vocabulary(trips: &[Trip]) -> (Vec<String>, Vec<String>) {
    let pois: BTreeSet<String> = trips
        .iter()
        .flat_map(|t| t.visits.iter().map(|v| v.poi_id.clone()))
        .collect();
    let users: BTreeSet<String> = trips.iter().map(|t| t.user_id.clone()).collect();
    (pois.into_iter().collect(), users.into_iter().collect())
}

/// Trains over the vocabulary found in `trips`.
pub fn train(trips: &[Trip], cfg: &TrainConfig) -> Result<EmbeddingModel> {
    let (pois, users) = vocabulary(trips);
    train_with_vocab(trips, pois, users, cfg)
}

/// Trains with explicit POI and user vocabularies, which may include ids
/// absent from `trips` (they keep their initial values apart from negative
/// updates).
pub fn train_with_vocab(
    trips: &[Trip],
    pois: Vec<String>,
    users: Vec<String>,
    cfg: &TrainConfig,
) -> Result<EmbeddingModel> {
    cfg.validate()?;
    let mut model = EmbeddingModel::zeros(cfg.dim, pois, users)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    {
        let (poi_vec, poi_pop, user_vec) = model.params_mut();
        for x in poi_vec.iter_mut().chain(poi_pop.iter_mut()).chain(user_vec.iter_mut()) {
            *x = rng.random::<f64>();
        }
        if cfg.mode == TrainMode::PopOnly {
            poi_vec.fill(0.0);
            user_vec.fill(0.0);
        }
    }
    let mut obs = observations(trips, &model)?;
    let sampler = match cfg.sampling {
        NegativeSampling::Uniform => NegativeSampler::uniform(model.num_pois()),
        NegativeSampling::Frequency => {
            let mut w = vec![0.0; model.num_pois()];
            for v in trips.iter().flat_map(|t| &t.visits) {
                w[model.poi(&v.poi_id)?] += 1.0;
            }
            if w.iter().all(|&x| x == 0.0) {
                NegativeSampler::uniform(model.num_pois())
            } else {
                NegativeSampler::weighted(w)?
            }
        }
    };
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            obs.shuffle(&mut rng);
        }
        for o in &obs {
            for neg in sampler.sample(&o.trip, cfg.negatives, &mut rng)? {
                sgd_step(&mut model, o, neg, cfg);
            }
        }
        if !model.is_finite() {
            return Err(Error::Invariant(format!(
                "non-finite parameter after epoch {epoch}"
            )));
        }
    }
    Ok(model)
}

/// Monte-Carlo estimate of the regularized pairwise objective, with
/// negatives drawn from a generator seeded by `seed`.
pub fn bpr_objective(trips: &[Trip], model: &EmbeddingModel, cfg: &TrainConfig, seed: u64) -> Result<f64> {
    let obs = observations(trips, model)?;
    let sampler = NegativeSampler::uniform(model.num_pois());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for o in &obs {
        for neg in sampler.sample(&o.trip, cfg.negatives, &mut rng)? {
            total += ln_sigmoid(margin(model, o, neg, cfg.mode));
        }
    }
    Ok(total - cfg.regularization * model.squared_norm())
}
