use crate::error::{Error, Result};
use crate::graph::PoiGraph;

pub const ENUMERATE_MAX_VERTICES: usize = 12;

/// Best feasible trip by trying every ordered subset of interior vertices,
/// in lexicographic order; the first maximum wins. Used as a reference for
/// the branch-and-bound solver.
pub fn enumerate_all(graph: &PoiGraph) -> Result<(Vec<usize>, f64)> {
    let n = graph.len();
    if n > ENUMERATE_MAX_VERTICES {
        return Err(Error::invalid(format!(
            "enumeration is limited to {ENUMERATE_MAX_VERTICES} vertices, got {n}"
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut path = vec![0];
    fn walk(g: &PoiGraph, path: &mut Vec<usize>, best: &mut Option<(Vec<usize>, f64)>) {
        for v in 1..g.len() {
            if path.contains(&v) {
                continue;
            }
            path.push(v);
            if v == g.end() {
                if g.feasible(path) {
                    let obj = g.trip_objective(path);
                    if best.as_ref().is_none_or(|(_, b)| obj > *b) {
                        *best = Some((path.clone(), obj));
                    }
                }
            } else {
                walk(g, path, best);
            }
            path.pop();
        }
    }
    walk(graph, &mut path, &mut best);
    best.ok_or(Error::NoFeasibleTrip)
}
