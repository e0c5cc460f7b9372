//! Adaptive large neighborhood search over trips: a solution pool, four
//! destroy and four build operators chosen by roulette wheel, 2-opt local
//! search, and simulated-annealing acceptance.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PoiGraph;

pub const WEIGHT_FLOOR: f64 = 1e-6;

const REPAIR_CACHE_LIMIT: usize = 1 << 16;

type RepairCache = HashMap<(Vec<usize>, BuildOp, usize), (Vec<usize>, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlnsConfig {
    pub runs: usize,
    pub iterations: usize,
    /// Removal fraction.
    pub rho: f64,
    /// Determinism of the ranked destroy operators; larger is greedier.
    pub psi: f64,
    /// Operator scores for: new global best, new run best, improvement,
    /// accepted worse trip, anything else.
    pub pi: [f64; 5],
    /// Reaction factor: weight kept from the previous value.
    pub kappa: f64,
    /// Initial temperature.
    pub tau: f64,
    /// Cooling factor.
    pub theta: f64,
    pub pool_capacity: usize,
    pub seed: u64,
}

impl Default for AlnsConfig {
    fn default() -> Self {
        AlnsConfig {
            runs: 5,
            iterations: 1000,
            rho: 0.2,
            psi: 6.0,
            pi: [10.0, 5.0, 3.0, 1.0, 0.0],
            kappa: 0.9,
            tau: 0.3,
            theta: 0.9995,
            pool_capacity: 10,
            seed: 42,
        }
    }
}

impl AlnsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid("rho must be in (0, 1]"));
        }
        if !(self.psi > 0.0 && self.psi.is_finite()) {
            return Err(Error::invalid("psi must be positive"));
        }
        if self.pi.windows(2).any(|w| w[0] <= w[1]) || self.pi.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("pi must be non-negative and strictly decreasing"));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::invalid("kappa must be in [0, 1]"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau must be positive"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::invalid("theta must be in (0, 1)"));
        }
        if self.pool_capacity == 0 {
            return Err(Error::invalid("pool capacity must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DestroyOp {
    Random,
    LeastProfit,
    MostCost,
    Shaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BuildOp {
    MostProfit,
    LeastCost,
    MostSimilar,
    HighestPotential,
}

impl DestroyOp {
    pub const ALL: [DestroyOp; 4] = [DestroyOp::Random, DestroyOp::LeastProfit, DestroyOp::MostCost, DestroyOp::Shaw];
}

impl BuildOp {
    pub const ALL: [BuildOp; 4] = [BuildOp::MostProfit, BuildOp::LeastCost, BuildOp::MostSimilar, BuildOp::HighestPotential];
}

impl fmt::Display for DestroyOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DestroyOp::Random => "random",
            DestroyOp::LeastProfit => "least-profit",
            DestroyOp::MostCost => "most-cost",
            DestroyOp::Shaw => "shaw",
        })
    }
}

impl fmt::Display for BuildOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BuildOp::MostProfit => "most-profit",
            BuildOp::LeastCost => "least-cost",
            BuildOp::MostSimilar => "most-similar",
            BuildOp::HighestPotential => "highest-potential",
        })
    }
}

/// Greedy rules used to seed the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyRule {
    HighestProfit,
    LeastCost,
    BestRatio,
}

/// Best trips seen so far, unique by trip, sorted by descending score
/// (ties: lexicographically smaller trip first).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPool {
    capacity: usize,
    entries: Vec<(Vec<usize>, f64)>,
}

impl SolutionPool {
    pub fn new(capacity: usize) -> Self {
        SolutionPool { capacity, entries: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Vec<usize>, f64)] {
        &self.entries
    }

    pub fn best(&self) -> Option<&(Vec<usize>, f64)> {
        self.entries.first()
    }

    /// Inserts unless the trip is already present, then evicts beyond
    /// capacity. Returns whether the trip is in the pool afterwards.
    pub fn insert(&mut self, trip: Vec<usize>, score: f64) -> bool {
        if self.entries.iter().any(|(t, _)| *t == trip) {
            return true;
        }
        self.entries.push((trip.clone(), score));
        self.entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        self.entries.truncate(self.capacity);
        self.entries.iter().any(|(t, _)| *t == trip)
    }
}

fn interior(trip: &[usize]) -> &[usize] {
    &trip[1..trip.len() - 1]
}

/// Objective gain from adding `v` to the trip's interior.
fn profit_gain(g: &PoiGraph, trip: &[usize], v: usize) -> f64 {
    g.vertex_profit(v) + interior(trip).iter().map(|&i| g.edge_profit(v, i)).sum::<f64>()
}

/// Objective lost by removing the interior vertex `v`.
fn profit_loss(g: &PoiGraph, trip: &[usize], v: usize) -> f64 {
    g.vertex_profit(v) + interior(trip).iter().filter(|&&i| i != v).map(|&i| g.edge_profit(v, i)).sum::<f64>()
}

/// Cost saved by removing the vertex at position `k`.
fn cost_saving(g: &PoiGraph, trip: &[usize], k: usize) -> f64 {
    let (a, v, b) = (trip[k - 1], trip[k], trip[k + 1]);
    g.edge_cost(a, v) + g.edge_cost(v, b) - g.edge_cost(a, b)
}

fn insertion_delta(g: &PoiGraph, a: usize, v: usize, b: usize) -> f64 {
    g.edge_cost(a, v) + g.edge_cost(v, b) - g.edge_cost(a, b)
}

/// Cheapest and second-cheapest insertion edges of one vertex; edge `k`
/// joins `trip[k]` and `trip[k + 1]`. Ties go to the earlier edge.
#[derive(Clone, Copy)]
struct EdgeChoice {
    best: f64,
    best_edge: usize,
    second: f64,
    second_edge: usize,
}

impl EdgeChoice {
    const NONE: EdgeChoice = EdgeChoice { best: f64::INFINITY, best_edge: usize::MAX, second: f64::INFINITY, second_edge: usize::MAX };

    fn offer(&mut self, d: f64, e: usize) {
        if d < self.best || (d == self.best && e < self.best_edge) {
            self.second = self.best;
            self.second_edge = self.best_edge;
            self.best = d;
            self.best_edge = e;
        } else if d < self.second || (d == self.second && e < self.second_edge) {
            self.second = d;
            self.second_edge = e;
        }
    }
}

fn edge_choice(g: &PoiGraph, trip: &[usize], v: usize) -> EdgeChoice {
    let mut c = EdgeChoice::NONE;
    for k in 0..trip.len() - 1 {
        c.offer(insertion_delta(g, trip[k], v, trip[k + 1]), k);
    }
    c
}

/// A trip under construction with its cost, membership mask, each vertex's
/// current objective gain, and each free vertex's cheapest insertion edges.
struct Builder<'g> {
    g: &'g PoiGraph,
    trip: Vec<usize>,
    cost: f64,
    member: Vec<bool>,
    gain: Vec<f64>,
    free: Vec<usize>,
    choice: Vec<EdgeChoice>,
}

impl<'g> Builder<'g> {
    fn new(g: &'g PoiGraph, trip: Vec<usize>) -> Self {
        let mut member = vec![false; g.len()];
        for &v in &trip {
            member[v] = true;
        }
        let free: Vec<usize> = g.interior().filter(|&v| !member[v]).collect();
        let mut gain = vec![0.0; g.len()];
        let mut choice = vec![EdgeChoice::NONE; g.len()];
        for &v in &free {
            gain[v] = profit_gain(g, &trip, v);
            choice[v] = edge_choice(g, &trip, v);
        }
        Builder { g, cost: g.trip_cost(&trip), trip, member, gain, free, choice }
    }

    fn insert(&mut self, pos: usize, v: usize, delta: f64) {
        let g = self.g;
        let k = pos - 1;
        let (a, b) = (self.trip[k], self.trip[k + 1]);
        self.trip.insert(pos, v);
        self.cost += delta;
        self.member[v] = true;
        self.free.retain(|&w| w != v);
        for &w in &self.free {
            self.gain[w] += g.edge_profit(w, v);
            let c = &mut self.choice[w];
            if c.best_edge == k || c.second_edge == k {
                *c = edge_choice(g, &self.trip, w);
                continue;
            }
            if c.best_edge > k {
                c.best_edge += 1;
            }
            if c.second_edge != usize::MAX && c.second_edge > k {
                c.second_edge += 1;
            }
            c.offer(insertion_delta(g, a, w, v), k);
            c.offer(insertion_delta(g, v, w, b), k + 1);
        }
    }

    /// Cheapest insertion of `v` if it stays within budget.
    fn fitting(&self, v: usize) -> Option<(usize, f64)> {
        let c = self.choice[v];
        self.g.fits(self.cost + c.best).then_some((c.best_edge + 1, c.best))
    }
}

/// Grows `trip` greedily: each step inserts the fitting vertex preferred by
/// `rule` at its cheapest position, until nothing fits. Ties go to the
/// lowest vertex index.
pub fn greedy_fill(g: &PoiGraph, trip: Vec<usize>, rule: GreedyRule) -> Vec<usize> {
    let mut b = Builder::new(g, trip);
    loop {
        let mut best: Option<(usize, usize, f64, f64)> = None;
        for &v in &b.free {
            let Some((pos, delta)) = b.fitting(v) else {
                continue;
            };
            let key = match rule {
                GreedyRule::HighestProfit => b.gain[v],
                GreedyRule::LeastCost => -delta,
                GreedyRule::BestRatio => {
                    if delta > 0.0 {
                        b.gain[v] / delta
                    } else {
                        f64::INFINITY
                    }
                }
            };
            if best.is_none_or(|x| key > x.3) {
                best = Some((v, pos, delta, key));
            }
        }
        match best {
            Some((v, pos, delta, _)) => b.insert(pos, v, delta),
            None => return b.trip,
        }
    }
}

/// Pool seeded with the three greedy trips.
pub fn init_pool(g: &PoiGraph, capacity: usize) -> Result<SolutionPool> {
    let direct = g.direct_trip();
    if !g.feasible(&direct) {
        return Err(Error::NoFeasibleTrip);
    }
    let mut pool = SolutionPool::new(capacity.max(1));
    for rule in [GreedyRule::HighestProfit, GreedyRule::LeastCost, GreedyRule::BestRatio] {
        let trip = greedy_fill(g, direct.clone(), rule);
        let score = g.trip_objective(&trip);
        pool.insert(trip, score);
    }
    Ok(pool)
}

/// Samples a pool trip with probability proportional to its score, or
/// uniformly when every score is zero.
pub fn select_initial<R: Rng + ?Sized>(pool: &SolutionPool, rng: &mut R) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::invalid("empty solution pool"));
    }
    let weights: Vec<f64> = pool.entries.iter().map(|e| e.1.max(0.0)).collect();
    let k = if weights.iter().sum::<f64>() > 0.0 {
        roulette_select(&weights, rng)
    } else {
        rng.random_range(0..pool.len())
    };
    Ok(pool.entries[k].0.clone())
}

/// Index drawn with probability proportional to its weight.
pub fn roulette_select<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// `w' = kappa w + (1 - kappa) score`, floored.
pub fn update_weight(w: f64, score: f64, kappa: f64) -> f64 {
    (kappa * w + (1.0 - kappa) * score).max(WEIGHT_FLOOR)
}

/// Number of interior vertices a destroy step removes.
pub fn removal_count(interior_len: usize, rho: f64) -> usize {
    (((rho * interior_len as f64) - 1e-9).ceil().max(0.0) as usize).min(interior_len)
}

/// Randomized rank `floor(x^(psi rho) len)` with `x ~ U(0, 1)`.
pub fn randomized_rank<R: Rng + ?Sized>(len: usize, psi: f64, rho: f64, rng: &mut R) -> usize {
    let x: f64 = rng.random();
    ((x.powf(psi * rho) * len as f64).floor() as usize).min(len - 1)
}

/// Removes `removal_count` interior vertices by the operator's rule.
pub fn destroy<R: Rng + ?Sized>(g: &PoiGraph, trip: &[usize], op: DestroyOp, rho: f64, psi: f64, rng: &mut R) -> Vec<usize> {
    let mut out = trip.to_vec();
    let k = removal_count(trip.len().saturating_sub(2), rho);
    if k == 0 {
        return out;
    }
    match op {
        DestroyOp::Random => {
            for _ in 0..k {
                let pos = rng.random_range(1..out.len() - 1);
                out.remove(pos);
            }
        }
        DestroyOp::LeastProfit | DestroyOp::MostCost => {
            for _ in 0..k {
                let mut ranked: Vec<(usize, f64)> = (1..out.len() - 1)
                    .map(|pos| {
                        let key = match op {
                            DestroyOp::LeastProfit => profit_loss(g, &out, out[pos]),
                            _ => -cost_saving(g, &out, pos),
                        };
                        (pos, key)
                    })
                    .collect();
                ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| out[a.0].cmp(&out[b.0])));
                let r = randomized_rank(ranked.len(), psi, rho, rng);
                out.remove(ranked[r].0);
            }
        }
        DestroyOp::Shaw => {
            let pivot = out[rng.random_range(1..out.len() - 1)];
            let mut near: Vec<usize> = interior(&out).iter().copied().filter(|&v| v != pivot).collect();
            near.sort_by(|&a, &b| g.transit(pivot, a).total_cmp(&g.transit(pivot, b)).then(a.cmp(&b)));
            let mut removed = vec![pivot];
            for _ in 1..k {
                let r = randomized_rank(near.len(), psi, rho, rng);
                removed.push(near.remove(r));
            }
            out.retain(|v| !removed.contains(v));
        }
    }
    out
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One step of the highest-potential rule: among vertices that fit, the one
/// maximizing its own gain plus the best gain of a second vertex that still
/// fits afterwards (or its own gain alone). Returns `(v, pos, delta)`.
fn highest_potential_step(b: &Builder<'_>) -> Option<(usize, usize, f64)> {
    let g = b.g;
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for &v in &b.free {
        let Some((pos, delta)) = b.fitting(v) else {
            continue;
        };
        let k = pos - 1;
        let (l, r) = (b.trip[k], b.trip[k + 1]);
        let mut pot = b.gain[v];
        for &w in &b.free {
            if w == v {
                continue;
            }
            // Insertion of w into the trip with v placed on edge k.
            let c = &b.choice[w];
            let old = if c.best_edge == k { c.second } else { c.best };
            let dw = old.min(insertion_delta(g, l, w, v)).min(insertion_delta(g, v, w, r));
            if g.fits(b.cost + delta + dw) {
                pot = pot.max(b.gain[v] + b.gain[w] + g.edge_profit(v, w));
            }
        }
        if best.is_none_or(|bst| pot > bst.3) {
            best = Some((v, pos, delta, pot));
        }
    }
    best.map(|(v, pos, delta, _)| (v, pos, delta))
}

/// Inserts unvisited vertices per the operator's rule, each at its cheapest
/// position, until no insertion fits.
pub fn build<R: Rng + ?Sized>(g: &PoiGraph, partial: &[usize], op: BuildOp, rng: &mut R) -> Vec<usize> {
    let pivot = build_pivot(partial, op, rng);
    build_from(g, partial, op, pivot)
}

/// The random pivot of the most-similar rule; other rules draw nothing.
fn build_pivot<R: Rng + ?Sized>(partial: &[usize], op: BuildOp, rng: &mut R) -> usize {
    match op {
        BuildOp::MostSimilar => partial[rng.random_range(0..partial.len())],
        _ => usize::MAX,
    }
}

fn build_from(g: &PoiGraph, partial: &[usize], op: BuildOp, pivot: usize) -> Vec<usize> {
    match op {
        BuildOp::MostProfit => greedy_fill(g, partial.to_vec(), GreedyRule::HighestProfit),
        BuildOp::LeastCost => greedy_fill(g, partial.to_vec(), GreedyRule::LeastCost),
        BuildOp::MostSimilar => {
            let mut b = Builder::new(g, partial.to_vec());
            let mut keyed: Vec<(f64, usize)> = b.free.iter().map(|&v| (l2(g.embedding(pivot), g.embedding(v)), v)).collect();
            keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let order: Vec<usize> = keyed.into_iter().map(|(_, v)| v).collect();
            loop {
                let mut changed = false;
                for &v in &order {
                    if b.member[v] {
                        continue;
                    }
                    if let Some((pos, delta)) = b.fitting(v) {
                        b.insert(pos, v, delta);
                        changed = true;
                    }
                }
                if !changed {
                    return b.trip;
                }
            }
        }
        BuildOp::HighestPotential => {
            let mut b = Builder::new(g, partial.to_vec());
            while let Some((v, pos, delta)) = highest_potential_step(&b) {
                b.insert(pos, v, delta);
            }
            b.trip
        }
    }
}

/// The 2-opt neighbor that drops edges `(trip[i], trip[i+1])` and
/// `(trip[j], trip[j+1])` and reverses the section between them.
pub fn two_opt_move(trip: &[usize], i: usize, j: usize) -> Vec<usize> {
    let mut out = trip.to_vec();
    out[i + 1..=j].reverse();
    out
}

/// Change in trip cost from [`two_opt_move`]. Transit is symmetric and
/// the visited set is unchanged, so only the two swapped edges matter.
pub fn two_opt_delta(g: &PoiGraph, trip: &[usize], i: usize, j: usize) -> f64 {
    let (a, b, c, d) = (trip[i], trip[i + 1], trip[j], trip[j + 1]);
    g.transit(a, c) + g.transit(b, d) - g.transit(a, b) - g.transit(c, d)
}

/// 2-opt descent on time cost with fixed endpoints; a move is taken when it
/// saves more than 1e-9 s. The vertex set, and so the score, is unchanged.
pub fn local_search(g: &PoiGraph, trip: &[usize]) -> Vec<usize> {
    let mut best = trip.to_vec();
    if best.len() < 4 {
        return best;
    }
    loop {
        let mut improved = false;
        for i in 0..best.len() - 3 {
            for j in (i + 2)..best.len() - 1 {
                if two_opt_delta(g, &best, i, j) < -1e-9 {
                    best[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            return best;
        }
    }
}

/// Simulated-annealing test: improvements always pass; otherwise accept
/// with probability `exp(delta / temp)`, i.e. iff `delta > temp ln x` for
/// `x ~ U(0, 1)`.
pub fn sa_accept<R: Rng + ?Sized>(s_new: f64, s_old: f64, temp: f64, rng: &mut R) -> bool {
    if s_new > s_old {
        return true;
    }
    let x: f64 = rng.random();
    x < ((s_new - s_old) / temp).exp()
}

/// Iteration outcome, ordered by the score it earns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    GlobalBest,
    RunBest,
    Improved,
    AcceptedWorse,
    Other,
}

impl Outcome {
    pub fn score(self, pi: &[f64; 5]) -> f64 {
        pi[self as usize]
    }
}

/// Scores awarded to both applied operators.
pub fn score_operators(outcome: Outcome, pi: &[f64; 5]) -> (f64, f64) {
    let s = outcome.score(pi);
    (s, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorWeights {
    pub destroy: [f64; 4],
    pub build: [f64; 4],
}

impl Default for OperatorWeights {
    fn default() -> Self {
        OperatorWeights { destroy: [1.0; 4], build: [1.0; 4] }
    }
}

impl OperatorWeights {
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> (DestroyOp, BuildOp) {
        let d = roulette_select(&self.destroy, rng);
        let b = roulette_select(&self.build, rng);
        (DestroyOp::ALL[d], BuildOp::ALL[b])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run: usize,
    pub iter: usize,
    pub destroy: DestroyOp,
    pub build: BuildOp,
    /// Score of the candidate trip.
    pub score: f64,
    pub accepted: bool,
    pub temp: f64,
}

#[derive(Debug, Clone)]
pub struct AlnsResult {
    pub trip: Vec<usize>,
    pub score: f64,
    pub trace: Vec<TraceRow>,
    pub pool: SolutionPool,
}

pub fn write_trace<W: Write>(trace: &[TraceRow], w: &mut W) -> Result<()> {
    writeln!(w, "run,iter,destroy_op,build_op,score,accepted,temp")?;
    for r in trace {
        writeln!(w, "{},{},{},{},{},{},{}", r.run, r.iter, r.destroy, r.build, r.score, r.accepted as u8, r.temp)?;
    }
    Ok(())
}

/// Hook called after every iteration with the current, run-best, and
/// global-best trips. Used by tests to audit invariants.
pub type Observer<'a> = dyn FnMut(&IterationState<'_>) + 'a;

pub struct IterationState<'s> {
    pub row: &'s TraceRow,
    pub candidate: &'s [usize],
    pub current: &'s [usize],
    pub run_best: (&'s [usize], f64),
    pub global_best: (&'s [usize], f64),
    pub weights: &'s OperatorWeights,
}

pub fn run_alns(g: &PoiGraph, cfg: &AlnsConfig) -> Result<AlnsResult> {
    run_alns_observed(g, cfg, &mut |_| {})
}

/// [`run_alns`] with a per-iteration observer.
pub fn run_alns_observed(g: &PoiGraph, cfg: &AlnsConfig, observe: &mut Observer<'_>) -> Result<AlnsResult> {
    cfg.validate()?;
    let mut pool = init_pool(g, cfg.pool_capacity)?;
    let (mut best, mut best_score) = pool.best().cloned().expect("pool is seeded");
    let mut trace = Vec::with_capacity(cfg.runs * cfg.iterations);
    // Repair + 2-opt results keyed by (partial trip, rule, pivot).
    let mut repairs = RepairCache::new();
    for run in 0..cfg.runs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(run as u64));
        let mut current = select_initial(&pool, &mut rng)?;
        let mut current_score = g.trip_objective(&current);
        let (mut run_best, mut run_best_score) = (current.clone(), current_score);
        let mut temp = cfg.tau;
        let mut weights = OperatorWeights::default();
        for iter in 0..cfg.iterations {
            let (d, b) = weights.select(&mut rng);
            let partial = destroy(g, &current, d, cfg.rho, cfg.psi, &mut rng);
            let pivot = build_pivot(&partial, b, &mut rng);
            if repairs.len() >= REPAIR_CACHE_LIMIT {
                repairs.clear();
            }
            let (candidate, score) = match repairs.entry((partial, b, pivot)) {
                Entry::Occupied(e) => e.get().clone(),
                Entry::Vacant(e) => {
                    let (partial, b, pivot) = e.key();
                    let candidate = local_search(g, &build_from(g, partial, *b, *pivot));
                    if let Err(v) = g.check(&candidate) {
                        return Err(Error::Invariant(format!("ALNS produced an infeasible trip: {v}")));
                    }
                    let score = g.trip_objective(&candidate);
                    e.insert((candidate, score)).clone()
                }
            };
            let accepted = sa_accept(score, current_score, temp, &mut rng);
            let outcome = if !accepted {
                Outcome::Other
            } else if score > best_score {
                Outcome::GlobalBest
            } else if score > run_best_score {
                Outcome::RunBest
            } else if score > current_score {
                Outcome::Improved
            } else if score < current_score {
                Outcome::AcceptedWorse
            } else {
                Outcome::Other
            };
            if accepted {
                current = candidate.clone();
                current_score = score;
                if score > run_best_score {
                    run_best = current.clone();
                    run_best_score = score;
                }
                if score > best_score {
                    best = current.clone();
                    best_score = score;
                }
            }
            let (sd, sb) = score_operators(outcome, &cfg.pi);
            let di = DestroyOp::ALL.iter().position(|&x| x == d).unwrap();
            let bi = BuildOp::ALL.iter().position(|&x| x == b).unwrap();
            weights.destroy[di] = update_weight(weights.destroy[di], sd, cfg.kappa);
            weights.build[bi] = update_weight(weights.build[bi], sb, cfg.kappa);
            let row = TraceRow { run, iter, destroy: d, build: b, score, accepted, temp };
            observe(&IterationState {
                row: &row,
                candidate: &candidate,
                current: &current,
                run_best: (&run_best, run_best_score),
                global_best: (&best, best_score),
                weights: &weights,
            });
            trace.push(row);
            temp *= cfg.theta;
        }
        pool.insert(run_best, run_best_score);
    }
    Ok(AlnsResult { trip: best, score: best_score, trace, pool })
}
