use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::{PoiGraph, BUDGET_RTOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A maximization integer program over named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpModel {
    pub vars: Vec<Variable>,
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
}

/// Variable values keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub values: BTreeMap<String, f64>,
}

impl Assignment {
    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub feasible: bool,
    /// Constraint names, `g_<i>` for position bounds, and `z_<var>` for
    /// other bound or integrality violations.
    pub violated: Vec<String>,
    pub objective: f64,
}

pub fn x_name(i: usize, j: usize) -> String {
    format!("x_{}_{}", i + 1, j + 1)
}

pub fn xp_name(i: usize, j: usize) -> String {
    format!("xp_{}_{}", i + 1, j + 1)
}

pub fn p_name(i: usize) -> String {
    format!("p_{}", i + 1)
}

/// Number of constraints [`build_ilp`] emits for `n` vertices:
/// start and end degree (2), flow balance and out-degree cap per interior
/// vertex (2(n-2)), three pair-linking inequalities per pair among the
/// first n-1 vertices (3 C(n-1, 2)), the budget (1), and one MTZ inequality
/// per ordered pair of distinct vertices in 2..n ((n-1)(n-2)).
pub fn constraint_count(n: usize) -> usize {
    assert!(n >= 2);
    2 + 2 * (n - 2) + 3 * (n - 1) * (n - 2) / 2 + 1 + (n - 1) * (n - 2)
}

/// Variable count: n^2 edge indicators, C(n-1, 2) pair indicators, n-1
/// positions.
pub fn variable_count(n: usize) -> usize {
    n * n + (n - 1) * (n - 2) / 2 + (n - 1)
}

struct Builder {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        self.vars.push(Variable { name, kind, lower, upper });
        self.vars.len() - 1
    }

    fn constraint(&mut self, name: String, terms: &[(usize, f64)], sense: Sense, rhs: f64) {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        let mut order = Vec::new();
        for &(v, c) in terms {
            if !merged.contains_key(&v) {
                order.push(v);
            }
            *merged.entry(v).or_insert(0.0) += c;
        }
        let terms = order
            .into_iter()
            .map(|v| (v, merged[&v]))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        self.constraints.push(Constraint { name, terms, sense, rhs });
    }
}

/// The linearized program for `graph`. Vertices are 1-based in names.
///
/// Edge indicators that can never be used (self loops, edges into the
/// start, edges out of the end) are fixed at zero through their bounds.
/// Pair indicators exist for `i < j <= n - 1`.
pub fn build_ilp(graph: &PoiGraph) -> IlpModel {
    let n = graph.len();
    let mut b = Builder { vars: Vec::new(), constraints: Vec::new() };
    let mut x = vec![0usize; n * n];
    for i in 0..n {
        for j in 0..n {
            let fixed = i == j || j == 0 || i == n - 1;
            x[i * n + j] = b.var(x_name(i, j), VarKind::Binary, 0.0, if fixed { 0.0 } else { 1.0 });
        }
    }
    let mut xp = HashMap::new();
    for i in 0..n - 1 {
        for j in (i + 1)..n - 1 {
            xp.insert((i, j), b.var(xp_name(i, j), VarKind::Binary, 0.0, 1.0));
        }
    }
    let mut p = vec![usize::MAX; n];
    for (i, slot) in p.iter_mut().enumerate().skip(1) {
        *slot = b.var(p_name(i), VarKind::General, 2.0, n as f64);
    }
    let xv = |i: usize, j: usize| x[i * n + j];

    let mut objective = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let f = graph.vertex_profit(j);
            if f != 0.0 && b.vars[xv(i, j)].upper > 0.0 {
                objective.push((xv(i, j), f));
            }
        }
    }
    for i in 1..n - 1 {
        for j in (i + 1)..n - 1 {
            let f = graph.edge_profit(i, j);
            if f != 0.0 {
                objective.push((xp[&(i, j)], f));
            }
        }
    }

    let out = |i: usize| (0..n).map(move |k| (xv(i, k), 1.0));
    let row: Vec<_> = out(0).collect();
    b.constraint("a".into(), &row, Sense::Eq, 1.0);
    let col: Vec<_> = (0..n).map(|k| (xv(k, n - 1), 1.0)).collect();
    b.constraint("b".into(), &col, Sense::Eq, 1.0);
    for i in 1..n - 1 {
        let mut t: Vec<_> = out(i).collect();
        t.extend((0..n).map(|k| (xv(k, i), -1.0)));
        b.constraint(format!("c_flow_{}", i + 1), &t, Sense::Eq, 0.0);
        let t: Vec<_> = out(i).collect();
        b.constraint(format!("c_cap_{}", i + 1), &t, Sense::Le, 1.0);
    }
    for i in 0..n - 1 {
        for j in (i + 1)..n - 1 {
            let v = xp[&(i, j)];
            let tag = format!("{}_{}", i + 1, j + 1);
            let mut t = vec![(v, 1.0)];
            t.extend(out(i).map(|(k, _)| (k, -1.0)));
            b.constraint(format!("d1_{tag}"), &t, Sense::Le, 0.0);
            let mut t = vec![(v, 1.0)];
            t.extend(out(j).map(|(k, _)| (k, -1.0)));
            b.constraint(format!("d2_{tag}"), &t, Sense::Le, 0.0);
            let mut t = vec![(v, 1.0)];
            t.extend(out(i).map(|(k, _)| (k, -1.0)));
            t.extend(out(j).map(|(k, _)| (k, -1.0)));
            b.constraint(format!("d3_{tag}"), &t, Sense::Ge, -1.0);
        }
    }
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..n {
            t.push((xv(i, j), graph.edge_cost(i, j)));
        }
    }
    b.constraint("f".into(), &t, Sense::Le, graph.budget() - graph.start_visit_cost());
    for i in 1..n {
        for j in 1..n {
            if i != j {
                let t = [(p[i], 1.0), (p[j], -1.0), (xv(i, j), (n - 1) as f64)];
                b.constraint(format!("h_{}_{}", i + 1, j + 1), &t, Sense::Le, (n - 2) as f64);
            }
        }
    }
    IlpModel { vars: b.vars, objective, constraints: b.constraints }
}

impl IlpModel {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Values in variable order; errors on a missing variable.
    pub fn values_of(&self, a: &Assignment) -> Result<Vec<f64>> {
        self.vars
            .iter()
            .map(|v| {
                a.get(&v.name)
                    .ok_or_else(|| Error::invalid(format!("assignment is missing `{}`", v.name)))
            })
            .collect()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Evaluates bounds, integrality, and every constraint on a dense value
    /// vector. Comparisons allow a relative slack of 1e-9.
    pub fn check_values(&self, values: &[f64]) -> CheckOutcome {
        let mut violated = Vec::new();
        for (var, &x) in self.vars.iter().zip(values) {
            let integral = (x - x.round()).abs() <= 1e-9;
            let in_bounds = x >= var.lower - 1e-9 && x <= var.upper + 1e-9;
            if !(integral && in_bounds) {
                match var.name.strip_prefix("p_") {
                    Some(i) => violated.push(format!("g_{i}")),
                    None => violated.push(format!("z_{}", var.name)),
                }
            }
        }
        for c in &self.constraints {
            let mut lhs = 0.0;
            let mut scale = c.rhs.abs().max(1.0);
            for &(v, coef) in &c.terms {
                let t = coef * values[v];
                lhs += t;
                scale = scale.max(t.abs());
            }
            let tol = BUDGET_RTOL * scale;
            let ok = match c.sense {
                Sense::Le => lhs <= c.rhs + tol,
                Sense::Ge => lhs >= c.rhs - tol,
                Sense::Eq => (lhs - c.rhs).abs() <= tol,
            };
            if !ok {
                violated.push(c.name.clone());
            }
        }
        CheckOutcome {
            feasible: violated.is_empty(),
            violated,
            objective: self.objective_value(values),
        }
    }

    pub fn check_assignment(&self, a: &Assignment) -> Result<CheckOutcome> {
        Ok(self.check_values(&self.values_of(a)?))
    }
}

/// Convenience wrapper over [`IlpModel::check_assignment`].
pub fn check_assignment(model: &IlpModel, a: &Assignment) -> Result<CheckOutcome> {
    model.check_assignment(a)
}

/// The assignment a vertex sequence induces: its edges, pair indicators
/// for every pair of vertices with an outgoing edge, and positions (1-based
/// order along the trip; unvisited vertices sit at 2).
pub fn encode_trip(n: usize, trip: &[usize]) -> Assignment {
    let mut a = Assignment::default();
    for i in 0..n {
        for j in 0..n {
            a.set(x_name(i, j), 0.0);
        }
    }
    let mut has_out = vec![false; n];
    for w in trip.windows(2) {
        a.set(x_name(w[0], w[1]), 1.0);
        has_out[w[0]] = true;
    }
    for i in 0..n.saturating_sub(1) {
        for j in (i + 1)..n - 1 {
            a.set(xp_name(i, j), if has_out[i] && has_out[j] { 1.0 } else { 0.0 });
        }
    }
    for i in 1..n {
        a.set(p_name(i), 2.0);
    }
    for (pos, &v) in trip.iter().enumerate() {
        if v != 0 && v < n {
            a.set(p_name(v), (pos + 1) as f64);
        }
    }
    a
}
