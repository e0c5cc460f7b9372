//! Context-aware trip quality: closeness of interior POIs to the query and
//! normalized pairwise co-occurrence similarity.

use serde::{Deserialize, Serialize};

use crate::checkin::validate_id;
use crate::embedding::{dot, log_sum_exp, EmbeddingModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub user: String,
    pub start: String,
    pub end: String,
    /// Seconds.
    pub budget: f64,
}

impl Query {
    pub fn new(user: impl Into<String>, start: impl Into<String>, end: impl Into<String>, budget: f64) -> Result<Self> {
        let q = Query {
            user: user.into(),
            start: start.into(),
            end: end.into(),
            budget,
        };
        validate_id(&q.user)?;
        validate_id(&q.start)?;
        validate_id(&q.end)?;
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::invalid(format!("budget must be positive, got {budget}")));
        }
        Ok(q)
    }
}

/// `u + l_s + l_e`.
pub fn query_vector(model: &EmbeddingModel, query: &Query) -> Result<Vec<f64>> {
    let u = model.user(&query.user)?;
    let s = model.poi(&query.start)?;
    let e = model.poi(&query.end)?;
    Ok(model
        .user_vector(u)
        .iter()
        .zip(model.poi_vector(s))
        .zip(model.poi_vector(e))
        .map(|((a, b), c)| a + b + c)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Add each POI's popularity bias to its closeness exponent.
    pub bias_in_closeness: bool,
}

/// Query-specific scoring state. Both normalizers are held in log space.
#[derive(Debug, Clone)]
pub struct ScoreContext<'a> {
    model: &'a EmbeddingModel,
    query: Query,
    q: Vec<f64>,
    log_zq: f64,
    log_zpair: f64,
    options: ScoreOptions,
}

impl<'a> ScoreContext<'a> {
    pub fn new(model: &'a EmbeddingModel, query: &Query, options: ScoreOptions) -> Result<Self> {
        Self::with_log_pair_partition(model, query, options, model.log_pair_partition())
    }

    /// Reuses a pair normalizer computed once per model.
    pub fn with_log_pair_partition(
        model: &'a EmbeddingModel,
        query: &Query,
        options: ScoreOptions,
        log_zpair: f64,
    ) -> Result<Self> {
        if model.num_pois() < 2 {
            return Err(Error::invalid("scoring needs at least two POIs"));
        }
        if !log_zpair.is_finite() {
            return Err(Error::Invariant(format!("pair normalizer ln Z = {log_zpair}")));
        }
        let q = query_vector(model, query)?;
        let mut ctx = ScoreContext {
            model,
            query: query.clone(),
            q,
            log_zq: 0.0,
            log_zpair,
            options,
        };
        let exps: Vec<f64> = (0..model.num_pois()).map(|i| ctx.closeness_exponent(i)).collect();
        ctx.log_zq = log_sum_exp(exps.iter().copied());
        if !ctx.log_zq.is_finite() {
            return Err(Error::Invariant(format!("query normalizer ln Z = {}", ctx.log_zq)));
        }
        Ok(ctx)
    }

    pub fn model(&self) -> &'a EmbeddingModel {
        self.model
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn query_vector(&self) -> &[f64] {
        &self.q
    }

    pub fn log_zq(&self) -> f64 {
        self.log_zq
    }

    pub fn log_zpair(&self) -> f64 {
        self.log_zpair
    }

    fn closeness_exponent(&self, i: usize) -> f64 {
        let b = if self.options.bias_in_closeness { self.model.bias(i) } else { 0.0 };
        dot(self.model.poi_vector(i), &self.q) + b
    }

    pub fn closeness_idx(&self, i: usize) -> f64 {
        (self.closeness_exponent(i) - self.log_zq).exp()
    }

    pub fn closeness(&self, poi: &str) -> Result<f64> {
        Ok(self.closeness_idx(self.model.poi(poi)?))
    }

    /// Caller guarantees `i != j`.
    pub fn ncsim_idx(&self, i: usize, j: usize) -> f64 {
        (self.model.csim_idx(i, j) - self.log_zpair).exp()
    }

    pub fn ncsim(&self, a: &str, b: &str) -> Result<f64> {
        if a == b {
            return Err(Error::invalid(format!("ncsim of `{a}` with itself")));
        }
        Ok(self.ncsim_idx(self.model.poi(a)?, self.model.poi(b)?))
    }

    /// Score of a trip from the query start to the query end. Endpoints
    /// contribute nothing; interior POIs must be distinct and differ from
    /// both endpoints.
    pub fn ctq_score(&self, trip: &[&str]) -> Result<f64> {
        if trip.len() < 2 {
            return Err(Error::invalid("a trip has at least its two endpoints"));
        }
        if trip[0] != self.query.start || trip[trip.len() - 1] != self.query.end {
            return Err(Error::invalid("trip endpoints differ from the query"));
        }
        let interior = &trip[1..trip.len() - 1];
        let idx = interior
            .iter()
            .map(|p| self.model.poi(p))
            .collect::<Result<Vec<_>>>()?;
        for (k, p) in interior.iter().enumerate() {
            if *p == self.query.start || *p == self.query.end || interior[..k].contains(p) {
                return Err(Error::invalid(format!("interior POI `{p}` repeats")));
            }
        }
        Ok(self.interior_score(&idx))
    }

    /// Score of an interior POI set given by model indices.
    pub fn interior_score(&self, interior: &[usize]) -> f64 {
        let mut s: f64 = interior.iter().map(|&i| self.closeness_idx(i)).sum();
        for (k, &a) in interior.iter().enumerate() {
            for &b in &interior[k + 1..] {
                s += self.ncsim_idx(a, b);
            }
        }
        s
    }
}
