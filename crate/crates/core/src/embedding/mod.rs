//! Context-aware POI embedding: d-dimensional POI and user vectors plus a
//! scalar popularity bias per POI, trained with pairwise ranking and
//! negative sampling.

mod io;
mod train;

pub use io::{read_model, write_model, ModelFile};
pub use train::{
    bpr_objective, observations, sample_negatives, sgd_step, train, train_with_vocab,
    NegativeSampler, NegativeSampling, Observation, RegMode, TrainConfig, TrainMode,
};

use std::collections::HashMap;

use crate::checkin::validate_id;
use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stable `ln(sum(exp(xs)))`.
pub(crate) fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Which terms enter the softmax exponent of [`EmbeddingModel::prob`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbTerms {
    pub context: bool,
    pub user: bool,
    pub bias: bool,
}

impl ProbTerms {
    /// `p(l | c(l), u)` with popularity.
    pub const FULL: ProbTerms = ProbTerms { context: true, user: true, bias: true };
    /// `p(l | c(l))`.
    pub const CONTEXT: ProbTerms = ProbTerms { context: true, user: false, bias: false };
    /// `p(l | u)`.
    pub const USER: ProbTerms = ProbTerms { context: false, user: true, bias: false };
    /// `p(l)`.
    pub const POPULARITY: ProbTerms = ProbTerms { context: false, user: false, bias: true };
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    poi_ids: Vec<String>,
    poi_index: HashMap<String, usize>,
    poi_vec: Vec<f64>,
    poi_pop: Vec<f64>,
    user_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    user_vec: Vec<f64>,
}

fn index_of(ids: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        validate_id(id)?;
        if map.insert(id.clone(), i).is_some() {
            return Err(Error::invalid(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(map)
}

impl EmbeddingModel {
    /// All-zero model over the given vocabularies.
    pub fn zeros(dim: usize, pois: Vec<String>, users: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let poi_index = index_of(&pois, "POI")?;
        let user_index = index_of(&users, "user")?;
        Ok(EmbeddingModel {
            dim,
            poi_vec: vec![0.0; pois.len() * dim],
            poi_pop: vec![0.0; pois.len()],
            user_vec: vec![0.0; users.len() * dim],
            poi_ids: pois,
            poi_index,
            user_ids: users,
            user_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_pois(&self) -> usize {
        self.poi_ids.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn poi_ids(&self) -> &[String] {
        &self.poi_ids
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn poi(&self, id: &str) -> Result<usize> {
        self.poi_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownPoi(id.into()))
    }

    pub fn user(&self, id: &str) -> Result<usize> {
        self.user_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownUser(id.into()))
    }

    pub fn has_poi(&self, id: &str) -> bool {
        self.poi_index.contains_key(id)
    }

    pub fn poi_vector(&self, i: usize) -> &[f64] {
        &self.poi_vec[i * self.dim..(i + 1) * self.dim]
    }

    pub fn poi_vector_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.poi_vec[i * self.dim..(i + 1) * self.dim]
    }

    pub fn user_vector(&self, u: usize) -> &[f64] {
        &self.user_vec[u * self.dim..(u + 1) * self.dim]
    }

    pub fn user_vector_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user_vec[u * self.dim..(u + 1) * self.dim]
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.poi_pop[i]
    }

    pub fn bias_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.poi_pop[i]
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (&mut self.poi_vec, &mut self.poi_pop, &mut self.user_vec)
    }

    pub fn is_finite(&self) -> bool {
        self.poi_vec
            .iter()
            .chain(&self.poi_pop)
            .chain(&self.user_vec)
            .all(|x| x.is_finite())
    }

    /// Squared L2 norm of every parameter.
    pub fn squared_norm(&self) -> f64 {
        self.poi_vec
            .iter()
            .chain(&self.poi_pop)
            .chain(&self.user_vec)
            .map(|x| x * x)
            .sum()
    }

    /// Componentwise sum of POI vectors; the empty set gives zero.
    pub fn context_sum(&self, members: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &m in members {
            for (o, x) in out.iter_mut().zip(self.poi_vector(m)) {
                *o += x;
            }
        }
        out
    }

    pub fn context_vector(&self, members: &[&str]) -> Result<Vec<f64>> {
        let idx = members
            .iter()
            .map(|m| self.poi(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.context_sum(&idx))
    }

    /// Co-occurrence similarity: dot product of the POI vectors (bias excluded).
    pub fn csim(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.csim_idx(self.poi(a)?, self.poi(b)?))
    }

    pub fn csim_idx(&self, a: usize, b: usize) -> f64 {
        dot(self.poi_vector(a), self.poi_vector(b))
    }

    /// `ln` of the sum of `exp(csim)` over ordered pairs of distinct POIs;
    /// negative infinity with fewer than two POIs.
    pub fn log_pair_partition(&self) -> f64 {
        let n = self.num_pois();
        let terms: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.csim_idx(i, j))
            .collect();
        log_sum_exp(terms.iter().copied())
    }

    /// Softmax probability of observing `target` given its context and a
    /// user, restricted to the selected terms.
    pub fn prob(&self, target: &str, context: &[&str], user: &str, terms: ProbTerms) -> Result<f64> {
        let l = self.poi(target)?;
        let ctx = context
            .iter()
            .map(|c| self.poi(c))
            .collect::<Result<Vec<_>>>()?;
        let u = self.user(user)?;
        Ok(self.prob_idx(l, &ctx, u, terms))
    }

    pub fn prob_idx(&self, target: usize, context: &[usize], user: usize, terms: ProbTerms) -> f64 {
        let mut query = vec![0.0; self.dim];
        if terms.context {
            query = self.context_sum(context);
        }
        if terms.user {
            for (q, x) in query.iter_mut().zip(self.user_vector(user)) {
                *q += x;
            }
        }
        let score = |i: usize| {
            dot(self.poi_vector(i), &query) + if terms.bias { self.bias(i) } else { 0.0 }
        };
        let lse = log_sum_exp((0..self.num_pois()).map(score));
        (score(target) - lse).exp()
    }

    /// Pairwise margin `z` between an observed POI and a negative one.
    pub fn bpr_margin(&self, target: &str, negative: &str, context: &[&str], user: &str) -> Result<f64> {
        let l = self.poi(target)?;
        let n = self.poi(negative)?;
        let c = self.context_vector(context)?;
        let u = self.user(user)?;
        Ok(self.margin_with(l, n, &c, self.user_vector(u)))
    }

    /// `z` given a precomputed context-plus-user direction split into parts.
    pub(crate) fn margin_with(&self, target: usize, negative: usize, context: &[f64], user: &[f64]) -> f64 {
        let lv = self.poi_vector(target);
        let nv = self.poi_vector(negative);
        dot(lv, context) + dot(lv, user) + self.bias(target)
            - dot(nv, context)
            - dot(nv, user)
            - self.bias(negative)
    }
}
