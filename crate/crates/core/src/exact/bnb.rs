use crate::error::{Error, Result};
use crate::graph::{PoiGraph, BUDGET_RTOL};

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub trip: Vec<usize>,
    pub objective: f64,
    /// Search nodes expanded.
    pub nodes: u64,
}

struct Search<'g> {
    g: &'g PoiGraph,
    n: usize,
    limit: f64,
    /// All-pairs shortest path costs over usable edges.
    dist: Vec<f64>,
    /// Shortest completion cost from each vertex to the end vertex.
    to_end: Vec<f64>,
    /// Cheapest edge into each vertex.
    min_in: Vec<f64>,
    path: Vec<usize>,
    interior: Vec<usize>,
    visited: Vec<bool>,
    best: Option<(Vec<usize>, f64)>,
    nodes: u64,
    gains: Vec<f64>,
    pair_buf: Vec<f64>,
}

fn shortest_paths(g: &PoiGraph) -> Vec<f64> {
    let n = g.len();
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
        for j in 0..n {
            if i != j && j != 0 && i != n - 1 {
                d[i * n + j] = g.edge_cost(i, j);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i * n + k] + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    d
}

impl<'g> Search<'g> {
    fn new(g: &'g PoiGraph) -> Self {
        let n = g.len();
        // Tiny extra slack so pruning never rejects a trip the final,
        // canonical feasibility check would accept.
        let limit = g.budget() * (1.0 + BUDGET_RTOL) + 1e-9 * g.budget();
        let min_in = (0..n)
            .map(|j| {
                (0..n - 1)
                    .filter(|&i| i != j)
                    .map(|i| g.edge_cost(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut visited = vec![false; n];
        visited[0] = true;
        let dist = shortest_paths(g);
        let to_end = (0..n).map(|i| dist[i * n + n - 1]).collect();
        Search {
            g,
            n,
            limit,
            dist,
            to_end,
            min_in,
            path: vec![0],
            interior: Vec::new(),
            visited,
            best: None,
            nodes: 0,
            gains: Vec::new(),
            pair_buf: Vec::new(),
        }
    }

    /// Admissible bound on the objective gain of any completion. Each added
    /// vertex `a` contributes at most its profit, its pair profits with the
    /// current interior, and half of its best pair profits with the other
    /// added vertices (each added pair is shared by two vertices).
    fn gain_bound(&mut self, candidates: &[usize], cost: f64) -> f64 {
        if candidates.is_empty() {
            return 0.0;
        }
        let g = self.g;
        let spare = self.limit - cost - self.min_in[self.n - 1];
        let cheapest = candidates.iter().map(|&a| self.min_in[a]).fold(f64::INFINITY, f64::min);
        let mut m = candidates.len();
        if cheapest > 0.0 {
            m = m.min((spare / cheapest).floor().max(0.0) as usize);
        }
        if m == 0 {
            return 0.0;
        }
        self.gains.clear();
        for &a in candidates {
            let mut gain = g.vertex_profit(a);
            for &i in &self.interior {
                gain += g.edge_profit(a, i);
            }
            if m > 1 {
                self.pair_buf.clear();
                self.pair_buf.extend(candidates.iter().filter(|&&b| b != a).map(|&b| g.edge_profit(a, b)));
                let k = (m - 1).min(self.pair_buf.len());
                if k > 0 && k < self.pair_buf.len() {
                    self.pair_buf.select_nth_unstable_by(k - 1, |x, y| y.total_cmp(x));
                }
                gain += 0.5 * self.pair_buf[..k].iter().sum::<f64>();
            }
            self.gains.push(gain);
        }
        if m < self.gains.len() {
            self.gains.select_nth_unstable_by(m - 1, |x, y| y.total_cmp(x));
        }
        self.gains[..m].iter().sum()
    }

    fn dfs(&mut self, cost: f64, objective: f64) {
        self.nodes += 1;
        let g = self.g;
        let n = self.n;
        let last = *self.path.last().unwrap();

        let candidates: Vec<usize> = (1..n - 1)
            .filter(|&a| !self.visited[a] && cost + g.edge_cost(last, a) + self.to_end[a] <= self.limit)
            .collect();
        if let Some((_, best)) = &self.best {
            let best = *best;
            // Without a triangle inequality a vertex may be reachable only
            // through others, so the bound ranges over shortest paths.
            let reachable: Vec<usize> = (1..n - 1)
                .filter(|&a| !self.visited[a] && cost + self.dist[last * n + a] + self.to_end[a] <= self.limit)
                .collect();
            let ub = objective + self.gain_bound(&reachable, cost);
            if ub < best - 1e-12 {
                return;
            }
        }
        for a in candidates {
            let step = g.edge_cost(last, a);
            let mut gained = g.vertex_profit(a);
            for &i in &self.interior {
                gained += g.edge_profit(a, i);
            }
            self.path.push(a);
            self.interior.push(a);
            self.visited[a] = true;
            self.dfs(cost + step, objective + gained);
            self.visited[a] = false;
            self.interior.pop();
            self.path.pop();
        }
        // Closing at the end vertex is the largest child.
        if cost + g.edge_cost(last, n - 1) <= self.limit {
            self.path.push(n - 1);
            if g.feasible(&self.path) {
                let obj = g.trip_objective(&self.path);
                if self.best.as_ref().is_none_or(|(_, b)| obj > *b) {
                    self.best = Some((self.path.clone(), obj));
                }
            }
            self.path.pop();
        }
    }
}

/// Optimal trip by depth-first branch-and-bound. Children are expanded in
/// increasing vertex order, so complete trips are met in lexicographic
/// order and only a strictly better objective replaces the incumbent:
/// among optimal trips the lexicographically smallest is returned.
pub fn solve_exact(graph: &PoiGraph) -> Result<ExactSolution> {
    let mut s = Search::new(graph);
    if graph.start_visit_cost() + s.to_end[0] > s.limit {
        return Err(Error::NoFeasibleTrip);
    }
    s.dfs(graph.start_visit_cost(), 0.0);
    match s.best {
        Some((trip, objective)) => Ok(ExactSolution { trip, objective, nodes: s.nodes }),
        None => Err(Error::NoFeasibleTrip),
    }
}
