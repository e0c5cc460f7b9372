#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use triprec::checkin::{PoiVisit, Trip};
use triprec::embedding::{sgd_step, EmbeddingModel, Observation, RegMode, TrainConfig, TrainMode};
use triprec::exact::{build_ilp, encode_trip, xp_name, IlpModel};
use triprec::graph::PoiGraph;

pub fn trip(user: &str, pois: &[&str]) -> Trip {
    Trip {
        user_id: user.into(),
        visits: pois
            .iter()
            .enumerate()
            .map(|(i, p)| PoiVisit {
                user_id: user.into(),
                poi_id: p.to_string(),
                t_a: 100 * i as i64,
                t_d: 100 * i as i64 + 50,
            })
            .collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flat parameter view of the fixture used by the gradient check.
#[derive(Clone)]
pub struct GradFixture {
    pub model: EmbeddingModel,
    pub obs: Observation,
    pub negative: usize,
    pub lambda: f64,
}

pub fn grad_fixture(seed: u64) -> GradFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pois: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
    let mut m = EmbeddingModel::zeros(3, pois, vec!["u0".into(), "u1".into()]).unwrap();
    for i in 0..6 {
        for x in m.poi_vector_mut(i) {
            *x = rng.random_range(-1.0..1.0);
        }
        *m.bias_mut(i) = rng.random_range(-1.0..1.0);
    }
    for u in 0..2 {
        for x in m.user_vector_mut(u) {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    let target = rng.random_range(0..3);
    let negative = rng.random_range(3..6);
    let obs = Observation::new(vec![0, 1, 2], target, rng.random_range(0..2)).unwrap();
    GradFixture { model: m, obs, negative, lambda: rng.random_range(0.0..0.1) }
}

/// `ln sigma(z) - lambda * ||touched parameters||^2`, computed from the raw
/// parameters.
pub fn single_objective(f: &GradFixture, m: &EmbeddingModel) -> f64 {
    let u = m.user_vector(f.obs.user);
    let mut dir = u.to_vec();
    for &c in &f.obs.context {
        for (d, x) in dir.iter_mut().zip(m.poi_vector(c)) {
            *d += x;
        }
    }
    let l = f.obs.target;
    let n = f.negative;
    let z = dot(m.poi_vector(l), &dir) + m.bias(l) - dot(m.poi_vector(n), &dir) - m.bias(n);
    let ln_sig = -(-z).exp().ln_1p();
    let mut reg = dot(u, u) + m.bias(l).powi(2) + m.bias(n).powi(2);
    for p in [l, n].iter().chain(&f.obs.context) {
        reg += dot(m.poi_vector(*p), m.poi_vector(*p));
    }
    ln_sig - f.lambda * reg
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    User,
    Target,
    TargetBias,
    Negative,
    NegativeBias,
    Context,
}

pub const FAMILIES: [Family; 6] =
    [Family::User, Family::Target, Family::TargetBias, Family::Negative, Family::NegativeBias, Family::Context];

fn family_params(f: &GradFixture, fam: Family) -> Vec<(Family, usize, usize)> {
    match fam {
        Family::User => (0..3).map(|k| (fam, f.obs.user, k)).collect(),
        Family::Target => (0..3).map(|k| (fam, f.obs.target, k)).collect(),
        Family::TargetBias => vec![(fam, f.obs.target, 0)],
        Family::Negative => (0..3).map(|k| (fam, f.negative, k)).collect(),
        Family::NegativeBias => vec![(fam, f.negative, 0)],
        Family::Context => f.obs.context.iter().flat_map(|&c| (0..3).map(move |k| (fam, c, k))).collect(),
    }
}

fn param(m: &mut EmbeddingModel, fam: Family, idx: usize, k: usize) -> &mut f64 {
    match fam {
        Family::User => &mut m.user_vector_mut(idx)[k],
        Family::Target | Family::Negative | Family::Context => &mut m.poi_vector_mut(idx)[k],
        Family::TargetBias | Family::NegativeBias => m.bias_mut(idx),
    }
}

/// Relative error between the step direction `(after - before) / eta` and
/// central finite differences of [`single_objective`], for one family.
pub fn grad_relative_error(f: &GradFixture, fam: Family, reg: RegMode) -> f64 {
    let eta = 1e-3;
    let cfg = TrainConfig {
        dim: 3,
        learning_rate: eta,
        regularization: f.lambda,
        reg_mode: reg,
        mode: TrainMode::Full,
        ..Default::default()
    };
    let mut stepped = f.model.clone();
    sgd_step(&mut stepped, &f.obs, f.negative, &cfg);
    let h = 1e-5;
    let mut num = 0.0;
    let mut den = 0.0;
    for (fam, idx, k) in family_params(f, fam) {
        let mut before = f.model.clone();
        let x0 = *param(&mut before, fam, idx, k);
        let analytic = (*param(&mut stepped, fam, idx, k) - x0) / eta;
        let mut plus = f.model.clone();
        *param(&mut plus, fam, idx, k) = x0 + h;
        let mut minus = f.model.clone();
        *param(&mut minus, fam, idx, k) = x0 - h;
        let fd = (single_objective(f, &plus) - single_objective(f, &minus)) / (2.0 * h);
        num += (analytic - fd).powi(2);
        den += fd.powi(2);
    }
    num.sqrt() / den.sqrt().max(1e-12)
}

/// Graph with arbitrary (possibly non-metric) symmetric transit times.
pub fn random_graph(n: usize, seed: u64, budget_scale: f64) -> PoiGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vp: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.3)).collect();
    vp[0] = 0.0;
    vp[n - 1] = 0.0;
    let mut ep = vec![0.0; n * n];
    let mut tr = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let p = rng.random_range(0.0..0.1);
            let t = rng.random_range(1.0..10.0);
            ep[i * n + j] = p;
            ep[j * n + i] = p;
            tr[i * n + j] = t;
            tr[j * n + i] = t;
        }
    }
    let vc: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
    let emb: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let direct = vc[0] + vc[n - 1] + tr[n - 1];
    let budget = direct * (1.0 + budget_scale * rng.random_range(0.5..1.5));
    PoiGraph::from_parts((0..n).map(|i| format!("v{i}")).collect(), vp, ep, tr, vc, emb, budget).unwrap()
}

/// Every simple path from vertex 0 to vertex n-1.
pub fn all_paths(n: usize) -> Vec<Vec<usize>> {
    fn walk(n: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for v in 1..n {
            if path.contains(&v) {
                continue;
            }
            path.push(v);
            if v == n - 1 {
                out.push(path.clone());
            } else {
                walk(n, path, out);
            }
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(n, &mut vec![0], &mut out);
    out
}

/// Objective recomputed from the graph's profit tables.
pub fn oracle_objective(g: &PoiGraph, trip: &[usize]) -> f64 {
    let inner = &trip[1..trip.len() - 1];
    let mut s: f64 = inner.iter().map(|&v| g.vertex_profit(v)).sum();
    for (a, &i) in inner.iter().enumerate() {
        for &j in &inner[a + 1..] {
            s += g.edge_profit(i, j);
        }
    }
    s
}

/// For every path of the graph and every setting of the pair indicators,
/// checks that feasibility forces `xp_ij = x_i x_j` and that the objective
/// of the feasible setting matches `trip_objective`. Returns the number of
/// (path, pair setting) combinations examined and the largest objective
/// error.
pub fn linearization_sweep(g: &PoiGraph) -> (usize, f64) {
    let n = g.len();
    let ilp: IlpModel = build_ilp(g);
    let pairs: Vec<(usize, usize)> = (0..n - 1).flat_map(|i| ((i + 1)..n - 1).map(move |j| (i, j))).collect();
    let mut seen = 0;
    let mut worst: f64 = 0.0;
    for path in all_paths(n) {
        let base = encode_trip(n, &path);
        let mut has_out = vec![false; n];
        for w in path.windows(2) {
            has_out[w[0]] = true;
        }
        for mask in 0u32..(1 << pairs.len()) {
            let mut a = base.clone();
            for (b, &(i, j)) in pairs.iter().enumerate() {
                a.set(xp_name(i, j), f64::from((mask >> b) & 1));
            }
            let out = ilp.check_assignment(&a).unwrap();
            let product = pairs
                .iter()
                .enumerate()
                .all(|(b, &(i, j))| ((mask >> b) & 1 == 1) == (has_out[i] && has_out[j]));
            let within_budget = g.feasible(&path);
            assert_eq!(out.feasible, product && within_budget, "path {path:?} mask {mask:b}: {:?}", out.violated);
            if out.feasible {
                worst = worst.max((out.objective - g.trip_objective(&path)).abs());
            }
            seen += 1;
        }
    }
    (seen, worst)
}

/// Enumerates successor maps that satisfy the degree constraints and
/// contain a cycle avoiding vertex 0, and checks that no integral position
/// vector makes them feasible. Returns how many such maps were examined.
pub fn mtz_subtour_sweep(n: usize) -> usize {
    let g = random_graph(n, 7, 1e6);
    let ilp = build_ilp(&g);
    let free: Vec<usize> = (0..n - 1).collect();
    let mut succ = vec![usize::MAX; n - 1];
    let mut examined = 0;
    fn rec(k: usize, n: usize, free: &[usize], succ: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if k == free.len() {
            f(succ);
            return;
        }
        let i = free[k];
        let first = if i == 0 { 1 } else { 0 };
        for choice in first..=n {
            // choice 0 means no outgoing edge; otherwise successor choice
            if choice == 0 {
                succ[i] = usize::MAX;
            } else {
                let j = choice - 1;
                if j == i || j == 0 {
                    continue;
                }
                succ[i] = j;
            }
            rec(k + 1, n, free, succ, f);
        }
    }
    let mut check = |succ: &[usize]| {
        let mut indeg = vec![0; n];
        for &j in succ.iter().filter(|&&j| j != usize::MAX) {
            indeg[j] += 1;
        }
        if succ[0] == usize::MAX || indeg[n - 1] != 1 {
            return;
        }
        for i in 1..n - 1 {
            let out = usize::from(succ[i] != usize::MAX);
            if out != indeg[i] {
                return;
            }
        }
        // Vertices on the walk from 0; anything else with an out-edge is on
        // a cycle that avoids 0.
        let mut on_path = vec![false; n];
        let mut v = 0;
        on_path[0] = true;
        while v != n - 1 {
            v = succ[v];
            on_path[v] = true;
        }
        let has_cycle = (1..n - 1).any(|i| succ[i] != usize::MAX && !on_path[i]);
        if !has_cycle {
            return;
        }
        examined += 1;
        let path: Vec<usize> = {
            let mut p = vec![0];
            let mut v = 0;
            while v != n - 1 {
                v = succ[v];
                p.push(v);
            }
            p
        };
        let mut a = encode_trip(n, &path);
        let mut has_out = vec![false; n];
        for (i, &j) in succ.iter().enumerate() {
            if j != usize::MAX {
                a.set(triprec::exact::x_name(i, j), 1.0);
                has_out[i] = true;
            }
        }
        for i in 0..n - 1 {
            for j in (i + 1)..n - 1 {
                a.set(xp_name(i, j), f64::from(u8::from(has_out[i] && has_out[j])));
            }
        }
        let positions = (n - 1) as u32;
        let combos = (n - 1).pow(positions);
        for code in 0..combos {
            let mut c = code;
            for i in 1..n {
                a.set(triprec::exact::p_name(i), (2 + c % (n - 1)) as f64);
                c /= n - 1;
            }
            let out = ilp.check_assignment(&a).unwrap();
            assert!(!out.feasible, "subtour accepted: {succ:?}");
            assert!(out.violated.iter().any(|v| v.starts_with("h_")), "{:?}", out.violated);
        }
    };
    rec(0, n, &free, &mut succ, &mut check);
    examined
}
