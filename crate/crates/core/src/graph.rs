//! The per-query profit/cost graph shared by every solver.

use std::fmt;
use std::io::Write;

use crate::checkin::TimeCostModel;
use crate::error::{Error, Result};
use crate::scoring::ScoreContext;

/// Relative slack on budget comparisons, absorbing summation-order noise.
pub const BUDGET_RTOL: f64 = 1e-9;

/// Directed complete graph over the query's candidate POIs. Vertex 0 is the
/// start and vertex `n - 1` the end; both have zero profit.
#[derive(Debug, Clone, PartialEq)]
pub struct PoiGraph {
    pois: Vec<String>,
    vertex_profit: Vec<f64>,
    edge_profit: Vec<f64>,
    transit: Vec<f64>,
    visit_cost: Vec<f64>,
    embedding: Vec<Vec<f64>>,
    budget: f64,
}

/// Why a trip is infeasible.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooShort,
    OutOfRange(usize),
    WrongStart,
    WrongEnd,
    Repeat(usize),
    OverBudget { cost: f64, budget: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooShort => write!(f, "too short: a trip needs both endpoints"),
            Violation::OutOfRange(v) => write!(f, "vertex {v} out of range"),
            Violation::WrongStart => write!(f, "does not start at the start vertex"),
            Violation::WrongEnd => write!(f, "does not end at the end vertex"),
            Violation::Repeat(v) => write!(f, "repeat: vertex {v} appears twice"),
            Violation::OverBudget { cost, budget } => write!(f, "over budget: {cost} > {budget}"),
        }
    }
}

impl PoiGraph {
    /// Assembles a graph from raw parts. Matrices are row-major `n x n`.
    /// `transit` must be symmetric with a zero diagonal.
    pub fn from_parts(
        pois: Vec<String>,
        vertex_profit: Vec<f64>,
        edge_profit: Vec<f64>,
        transit: Vec<f64>,
        visit_cost: Vec<f64>,
        embedding: Vec<Vec<f64>>,
        budget: f64,
    ) -> Result<Self> {
        let n = pois.len();
        if n < 2 {
            return Err(Error::invalid("a graph needs at least the two endpoint vertices"));
        }
        if vertex_profit.len() != n || visit_cost.len() != n || embedding.len() != n {
            return Err(Error::invalid("per-vertex arrays have the wrong length"));
        }
        if edge_profit.len() != n * n || transit.len() != n * n {
            return Err(Error::invalid("edge matrices have the wrong size"));
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::invalid(format!("budget {budget}")));
        }
        let nonneg = |x: &f64| x.is_finite() && *x >= 0.0;
        if !vertex_profit.iter().all(nonneg) || !edge_profit.iter().all(nonneg) {
            return Err(Error::invalid("profits must be finite and non-negative"));
        }
        if !transit.iter().all(nonneg) || !visit_cost.iter().all(nonneg) {
            return Err(Error::invalid("costs must be finite and non-negative"));
        }
        if vertex_profit[0] != 0.0 || vertex_profit[n - 1] != 0.0 {
            return Err(Error::invalid("endpoint profits must be zero"));
        }
        for i in 0..n {
            if transit[i * n + i] != 0.0 {
                return Err(Error::invalid("transit diagonal must be zero"));
            }
            for j in 0..n {
                if transit[i * n + j] != transit[j * n + i] || edge_profit[i * n + j] != edge_profit[j * n + i] {
                    return Err(Error::invalid("transit and edge profits must be symmetric"));
                }
            }
        }
        Ok(PoiGraph {
            pois,
            vertex_profit,
            edge_profit,
            transit,
            visit_cost,
            embedding,
            budget,
        })
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn end(&self) -> usize {
        self.pois.len() - 1
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.pois.len() - 1
    }

    pub fn poi(&self, v: usize) -> &str {
        &self.pois[v]
    }

    pub fn pois(&self) -> &[String] {
        &self.pois
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn vertex_profit(&self, v: usize) -> f64 {
        self.vertex_profit[v]
    }

    pub fn edge_profit(&self, i: usize, j: usize) -> f64 {
        self.edge_profit[i * self.len() + j]
    }

    pub fn transit(&self, i: usize, j: usize) -> f64 {
        self.transit[i * self.len() + j]
    }

    pub fn visit_cost(&self, v: usize) -> f64 {
        self.visit_cost[v]
    }

    pub fn start_visit_cost(&self) -> f64 {
        self.visit_cost[0]
    }

    /// Visit time of the target plus transit.
    pub fn edge_cost(&self, i: usize, j: usize) -> f64 {
        self.visit_cost[j] + self.transit(i, j)
    }

    pub fn embedding(&self, v: usize) -> &[f64] {
        &self.embedding[v]
    }

    pub fn fits(&self, cost: f64) -> bool {
        cost <= self.budget * (1.0 + BUDGET_RTOL)
    }

    pub fn direct_trip(&self) -> Vec<usize> {
        vec![self.start(), self.end()]
    }

    /// Start visit time plus every edge cost along the trip.
    pub fn trip_cost(&self, trip: &[usize]) -> f64 {
        let Some(&first) = trip.first() else {
            return 0.0;
        };
        self.visit_cost[first] + trip.windows(2).map(|w| self.edge_cost(w[0], w[1])).sum::<f64>()
    }

    /// Interior vertex profits plus unordered interior pair profits. The
    /// interior is summed in sorted order so equal sets give bit-identical
    /// values.
    pub fn trip_objective(&self, trip: &[usize]) -> f64 {
        if trip.len() <= 2 {
            return 0.0;
        }
        let mut interior = trip[1..trip.len() - 1].to_vec();
        interior.sort_unstable();
        self.set_objective(&interior)
    }

    /// Objective of a sorted interior vertex set.
    pub fn set_objective(&self, sorted: &[usize]) -> f64 {
        let mut s = 0.0;
        for (k, &a) in sorted.iter().enumerate() {
            s += self.vertex_profit[a];
            for &b in &sorted[k + 1..] {
                s += self.edge_profit(a, b);
            }
        }
        s
    }

    pub fn check(&self, trip: &[usize]) -> Result<(), Violation> {
        let n = self.len();
        if trip.len() < 2 {
            return Err(Violation::TooShort);
        }
        if let Some(&v) = trip.iter().find(|&&v| v >= n) {
            return Err(Violation::OutOfRange(v));
        }
        if trip[0] != self.start() {
            return Err(Violation::WrongStart);
        }
        if trip[trip.len() - 1] != self.end() {
            return Err(Violation::WrongEnd);
        }
        let mut seen = vec![false; n];
        for &v in trip {
            if seen[v] {
                return Err(Violation::Repeat(v));
            }
            seen[v] = true;
        }
        let cost = self.trip_cost(trip);
        if !self.fits(cost) {
            return Err(Violation::OverBudget {
                cost,
                budget: self.budget,
            });
        }
        Ok(())
    }

    pub fn feasible(&self, trip: &[usize]) -> bool {
        self.check(trip).is_ok()
    }

    /// Cheapest position to insert `v` (index in the new trip) and the
    /// resulting cost increase; the earliest position wins ties.
    pub fn best_insertion(&self, trip: &[usize], v: usize) -> (usize, f64) {
        let mut best = (1, f64::INFINITY);
        for k in 0..trip.len() - 1 {
            let (a, b) = (trip[k], trip[k + 1]);
            let delta = self.edge_cost(a, v) + self.edge_cost(v, b) - self.edge_cost(a, b);
            if delta < best.1 {
                best = (k + 1, delta);
            }
        }
        best
    }

    /// Debug dump: `V <i> <poi> <profit>` then `E <i> <j> <profit> <cost>`,
    /// 1-based.
    pub fn write_dump<W: Write>(&self, w: &mut W) -> Result<()> {
        let n = self.len();
        for v in 0..n {
            writeln!(w, "V {} {} {}", v + 1, self.pois[v], self.vertex_profit[v])?;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    writeln!(w, "E {} {} {} {}", i + 1, j + 1, self.edge_profit(i, j), self.edge_cost(i, j))?;
                }
            }
        }
        Ok(())
    }
}

/// POIs that fit in some trip on their own: the start visit, the detour
/// through the POI, and the end visit together fit the budget.
pub fn reach_filter(ctx: &ScoreContext<'_>, tc: &TimeCostModel) -> Result<Vec<String>> {
    let q = ctx.query();
    let start_cost = tc.visit_time(&q.start)?;
    let end_cost = tc.visit_time(&q.end)?;
    let mut out = Vec::new();
    for l in ctx.model().poi_ids() {
        if *l == q.start || *l == q.end {
            continue;
        }
        if !tc.distances().contains(l) {
            continue;
        }
        let total = start_cost
            + tc.transit_time(&q.start, l)?
            + tc.visit_time(l)?
            + tc.transit_time(l, &q.end)?
            + end_cost;
        if total <= q.budget * (1.0 + BUDGET_RTOL) {
            out.push(l.clone());
        }
    }
    Ok(out)
}

/// Builds the query graph over `candidates` (default: [`reach_filter`]).
/// Interior vertices follow model order; endpoints in `candidates` are
/// ignored since they are always present. A query with equal start and end
/// gets two vertices for that POI.
pub fn build_graph(ctx: &ScoreContext<'_>, tc: &TimeCostModel, candidates: Option<&[String]>) -> Result<PoiGraph> {
    let model = ctx.model();
    let q = ctx.query();
    let interior: Vec<String> = match candidates {
        None => reach_filter(ctx, tc)?,
        Some(c) => {
            let unknown: Vec<String> = c.iter().filter(|p| !model.has_poi(p)).cloned().collect();
            if !unknown.is_empty() {
                return Err(Error::UnknownPois(unknown));
            }
            let mut idx: Vec<usize> = c
                .iter()
                .filter(|p| **p != q.start && **p != q.end)
                .map(|p| model.poi(p))
                .collect::<Result<_>>()?;
            idx.sort_unstable();
            idx.dedup();
            idx.into_iter().map(|i| model.poi_ids()[i].clone()).collect()
        }
    };
    let mut pois = Vec::with_capacity(interior.len() + 2);
    pois.push(q.start.clone());
    pois.extend(interior);
    pois.push(q.end.clone());
    let n = pois.len();

    let midx = pois.iter().map(|p| model.poi(p)).collect::<Result<Vec<_>>>()?;
    let mut vertex_profit: Vec<f64> = midx.iter().map(|&i| ctx.closeness_idx(i)).collect();
    vertex_profit[0] = 0.0;
    vertex_profit[n - 1] = 0.0;
    let visit_cost = pois.iter().map(|p| tc.visit_time(p)).collect::<Result<Vec<_>>>()?;
    let mut edge_profit = vec![0.0; n * n];
    let mut transit = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            if midx[i] == midx[j] {
                continue;
            }
            let p = ctx.ncsim_idx(midx[i], midx[j]);
            let t = tc.transit_time(&pois[i], &pois[j])?;
            edge_profit[i * n + j] = p;
            edge_profit[j * n + i] = p;
            transit[i * n + j] = t;
            transit[j * n + i] = t;
        }
    }
    let embedding = midx.iter().map(|&i| model.poi_vector(i).to_vec()).collect();
    PoiGraph::from_parts(pois, vertex_profit, edge_profit, transit, visit_cost, embedding, q.budget)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::checkin::{DistanceMatrix, Distances};
    use crate::embedding::EmbeddingModel;
    use crate::scoring::{Query, ScoreOptions};

    fn setup() -> (EmbeddingModel, TimeCostModel) {
        let ids: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let mut m = EmbeddingModel::zeros(2, ids.clone(), vec!["u".into()]).unwrap();
        for i in 0..5 {
            m.poi_vector_mut(i).copy_from_slice(&[0.1 * i as f64, 0.3 - 0.05 * i as f64]);
        }
        m.user_vector_mut(0).copy_from_slice(&[0.2, 0.4]);
        // Points on a line, 1 km apart.
        let km = (0..5).map(|i| (0..5).map(|j| (i as f64 - j as f64).abs()).collect()).collect();
        let dm = DistanceMatrix::new(ids.clone(), km).unwrap();
        let vt: BTreeMap<String, f64> = ids.iter().enumerate().map(|(i, p)| (p.clone(), 100.0 * (i + 1) as f64)).collect();
        (m, TimeCostModel::new(vt, 4.0, Distances::matrix(dm)).unwrap())
    }

    #[test]
    fn entries_match_direct_calls() {
        let (m, tc) = setup();
        let q = Query::new("u", "a", "e", 1e6).unwrap();
        let ctx = ScoreContext::new(&m, &q, ScoreOptions::default()).unwrap();
        let g = build_graph(&ctx, &tc, None).unwrap();
        assert_eq!(g.pois(), &["a", "b", "c", "d", "e"]);
        assert_eq!(g.vertex_profit(0), 0.0);
        assert_eq!(g.vertex_profit(4), 0.0);
        for i in 0..5 {
            if i != 0 && i != 4 {
                assert_eq!(g.vertex_profit(i), ctx.closeness(g.poi(i)).unwrap());
            }
            for j in 0..5 {
                if i == j {
                    continue;
                }
                assert_eq!(g.edge_profit(i, j), ctx.ncsim(g.poi(i), g.poi(j)).unwrap());
                let cost = tc.visit_time(g.poi(j)).unwrap() + tc.transit_time(g.poi(i), g.poi(j)).unwrap();
                assert!((g.edge_cost(i, j) - cost).abs() < 1e-9);
            }
        }
        let trip = [0, 2, 1, 4];
        let names: Vec<&str> = trip.iter().map(|&v| g.poi(v)).collect();
        assert!((g.trip_objective(&trip) - ctx.ctq_score(&names).unwrap()).abs() < 1e-12);
        assert!((g.trip_cost(&trip) - tc.trip_cost(&names).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn endpoints_only_and_same_endpoint() {
        let (m, tc) = setup();
        let q = Query::new("u", "a", "e", 1e6).unwrap();
        let ctx = ScoreContext::new(&m, &q, ScoreOptions::default()).unwrap();
        let g = build_graph(&ctx, &tc, Some(&["a".to_string(), "e".to_string()])).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.feasible(&[0, 1]));

        let q = Query::new("u", "b", "b", 1e6).unwrap();
        let ctx = ScoreContext::new(&m, &q, ScoreOptions::default()).unwrap();
        let g = build_graph(&ctx, &tc, None).unwrap();
        assert_eq!(g.poi(0), "b");
        assert_eq!(g.poi(g.end()), "b");
        assert_eq!(g.transit(0, g.end()), 0.0);
        assert_eq!(g.trip_cost(&[0, g.end()]), 400.0);

        let err = build_graph(&ctx, &tc, Some(&["zz".to_string()])).unwrap_err();
        assert!(matches!(err, Error::UnknownPois(ref v) if v == &["zz"]));
    }

    #[test]
    fn reach_filter_drops_unreachable() {
        let (m, tc) = setup();
        // a..b..e: start 100, end 500, 4 km walk = 3600 s. Detour through a
        // POI on the line costs no extra transit, so only its visit time
        // matters: 4200 + 200 (b), 300 (c), 400 (d).
        let q = Query::new("u", "a", "e", 4500.0).unwrap();
        let ctx = ScoreContext::new(&m, &q, ScoreOptions::default()).unwrap();
        assert_eq!(reach_filter(&ctx, &tc).unwrap(), vec!["b", "c"]);
    }

    #[test]
    fn feasibility_diagnostics() {
        let (m, tc) = setup();
        let q = Query::new("u", "a", "e", 4200.0).unwrap();
        let ctx = ScoreContext::new(&m, &q, ScoreOptions::default()).unwrap();
        let all: Vec<String> = m.poi_ids().to_vec();
        let g = build_graph(&ctx, &tc, Some(&all)).unwrap();
        // Direct trip: 100 + 500 + 3600 = 4200, exactly the budget.
        assert!(g.feasible(&[0, 4]));
        assert_eq!(g.check(&[0, 1, 1, 4]), Err(Violation::Repeat(1)));
        assert!(g.check(&[0, 1, 1, 4]).unwrap_err().to_string().starts_with("repeat"));
        assert!(matches!(g.check(&[0, 2, 4]), Err(Violation::OverBudget { .. })));
        assert_eq!(g.check(&[1, 4]), Err(Violation::WrongStart));
        assert_eq!(g.check(&[0, 3]), Err(Violation::WrongEnd));
        assert_eq!(g.check(&[0]), Err(Violation::TooShort));
        assert_eq!(g.check(&[0, 9, 4]), Err(Violation::OutOfRange(9)));
    }

    #[test]
    fn dump_format() {
        let (m, tc) = setup();
        let q = Query::new("u", "a", "e", 1e6).unwrap();
        let ctx = ScoreContext::new(&m, &q, ScoreOptions::default()).unwrap();
        let g = build_graph(&ctx, &tc, Some(&["a".to_string(), "c".to_string(), "e".to_string()])).unwrap();
        let mut buf = Vec::new();
        g.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3 + 6);
        assert!(lines[0].starts_with("V 1 a 0"));
        assert!(lines[3].starts_with("E 1 2 "));
    }
}
