use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::Trip;
use crate::error::{Error, Result};

/// Trip-level co-occurrence counts over a fixed POI vocabulary.
struct Cooccurrence {
    pois: Vec<String>,
    counts: Vec<Vec<f64>>,
}

impl Cooccurrence {
    fn build<'a>(trips: impl IntoIterator<Item = &'a Trip>) -> Self {
        let trips: Vec<&Trip> = trips.into_iter().collect();
        let pois: Vec<String> = trips
            .iter()
            .flat_map(|t| t.visits.iter().map(|v| v.poi_id.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, usize> = pois
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        let n = pois.len();
        let mut counts = vec![vec![0.0; n]; n];
        for t in &trips {
            let members: Vec<usize> = t.distinct_pois().iter().map(|p| index[p]).collect();
            for &a in &members {
                for &b in &members {
                    if a != b {
                        counts[a][b] += 1.0;
                    }
                }
            }
        }
        Cooccurrence { pois, counts }
    }
}

/// Normalized frequency with which each POI shares a trip with `poi_id`.
/// All-zero counts yield the zero vector.
pub fn cooccurrence_distribution(poi_id: &str, trips: &[Trip]) -> Result<BTreeMap<String, f64>> {
    let co = Cooccurrence::build(trips);
    let i = co
        .pois
        .iter()
        .position(|p| p == poi_id)
        .ok_or_else(|| Error::UnknownPoi(poi_id.into()))?;
    let row = &co.counts[i];
    let total: f64 = row.iter().sum();
    Ok(co
        .pois
        .iter()
        .zip(row)
        .map(|(p, &c)| (p.clone(), if total > 0.0 { c / total } else { 0.0 }))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub rejected: bool,
}

/// Two-sample chi-square test on binned counts with unequal totals. Bins
/// empty in both samples are dropped; dof = retained bins - 1.
pub fn chi_square_two_sample(r: &[f64], s: &[f64], significance: f64) -> Result<ChiSquareOutcome> {
    if r.len() != s.len() {
        return Err(Error::invalid("chi-square samples have different lengths"));
    }
    let (rt, st): (f64, f64) = (r.iter().sum(), s.iter().sum());
    if rt <= 0.0 || st <= 0.0 {
        return Err(Error::invalid("chi-square sample with zero total"));
    }
    let (k1, k2) = ((st / rt).sqrt(), (rt / st).sqrt());
    let mut statistic = 0.0;
    let mut bins = 0usize;
    for (&a, &b) in r.iter().zip(s) {
        if a == 0.0 && b == 0.0 {
            continue;
        }
        bins += 1;
        statistic += (k1 * a - k2 * b).powi(2) / (a + b);
    }
    let dof = bins.saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
        1.0 - dist.cdf(statistic)
    };
    Ok(ChiSquareOutcome {
        statistic,
        dof,
        p_value,
        rejected: p_value < significance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTestParams {
    pub sample_fraction: f64,
    pub runs: usize,
    pub significance: f64,
    pub seed: u64,
}

impl Default for PairTestParams {
    fn default() -> Self {
        PairTestParams {
            sample_fraction: 0.5,
            runs: 100,
            significance: 0.05,
            seed: 42,
        }
    }
}

/// Mean fraction of POI pairs whose co-occurrence count vectors differ
/// significantly, over `runs` random trip samples.
pub fn independent_pair_ratio(trips: &[Trip], params: PairTestParams) -> Result<f64> {
    if !(params.sample_fraction > 0.0 && params.sample_fraction <= 1.0) {
        return Err(Error::invalid("sample fraction must be in (0, 1]"));
    }
    if params.runs == 0 {
        return Err(Error::invalid("runs must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let take = ((params.sample_fraction * trips.len() as f64).round() as usize).clamp(1, trips.len().max(1));
    let mut total = 0.0;
    for _ in 0..params.runs {
        let picked = rand::seq::index::sample(&mut rng, trips.len(), take.min(trips.len()));
        let mut idx = picked.into_vec();
        idx.sort_unstable();
        let co = Cooccurrence::build(idx.iter().map(|&i| &trips[i]));
        let active: Vec<usize> = (0..co.pois.len())
            .filter(|&i| co.counts[i].iter().any(|&c| c > 0.0))
            .collect();
        if active.len() < 2 {
            return Err(Error::invalid(
                "fewer than 2 POIs with nonzero co-occurrence counts",
            ));
        }
        let mut rejected = 0usize;
        let mut pairs = 0usize;
        for (k, &a) in active.iter().enumerate() {
            for &b in &active[k + 1..] {
                pairs += 1;
                if chi_square_two_sample(&co.counts[a], &co.counts[b], params.significance)?.rejected {
                    rejected += 1;
                }
            }
        }
        total += rejected as f64 / pairs as f64;
    }
    Ok(total / params.runs as f64)
}

/// Popularity ranks (1 = most visited) from visit counts; ties by POI id.
fn popularity_ranks(pois: &[String], counts: &HashMap<&str, usize>) -> HashMap<String, usize> {
    let mut order: Vec<&String> = pois.iter().collect();
    order.sort_by(|a, b| {
        let ca = counts.get(a.as_str()).copied().unwrap_or(0);
        let cb = counts.get(b.as_str()).copied().unwrap_or(0);
        cb.cmp(&ca).then_with(|| a.cmp(b))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i + 1))
        .collect()
}

/// Whether a user's distinct visited POIs have a mean popularity rank inside
/// the popular half (`mean rank < |L| / 2`).
pub(crate) fn is_impacted(visited: &BTreeSet<&str>, ranks: &HashMap<String, usize>, n_pois: usize) -> bool {
    if visited.is_empty() {
        return false;
    }
    let mean = visited.iter().map(|p| ranks[*p] as f64).sum::<f64>() / visited.len() as f64;
    mean < n_pois as f64 / 2.0
}

/// Mean fraction of held-out users whose visits concentrate on POIs that
/// are popular among the other half of the users.
pub fn impacted_user_ratio(trips: &[Trip], runs: usize, seed: u64) -> Result<f64> {
    let mut per_user: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in trips {
        let e = per_user.entry(&t.user_id).or_default();
        e.extend(t.visits.iter().map(|v| v.poi_id.as_str()));
    }
    if per_user.len() < 2 {
        return Err(Error::invalid("impacted_user_ratio needs at least 2 users"));
    }
    if runs == 0 {
        return Err(Error::invalid("runs must be positive"));
    }
    let pois: Vec<String> = per_user
        .values()
        .flatten()
        .map(|p| p.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let users: Vec<&str> = per_user.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..runs {
        let mut shuffled = users.clone();
        shuffled.shuffle(&mut rng);
        let (history, test) = shuffled.split_at(users.len() / 2);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for u in history {
            for p in &per_user[u] {
                *counts.entry(p).or_default() += 1;
            }
        }
        if counts.is_empty() || test.is_empty() {
            return Err(Error::invalid("a user half has zero visits"));
        }
        let ranks = popularity_ranks(&pois, &counts);
        let impacted = test
            .iter()
            .filter(|u| {
                let visited: BTreeSet<&str> = per_user[**u].iter().copied().collect();
                is_impacted(&visited, &ranks, pois.len())
            })
            .count();
        total += impacted as f64 / test.len() as f64;
    }
    Ok(total / runs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkin::PoiVisit;

    fn trip(user: &str, pois: &[&str]) -> Trip {
        Trip {
            user_id: user.into(),
            visits: pois
                .iter()
                .enumerate()
                .map(|(i, p)| PoiVisit {
                    user_id: user.into(),
                    poi_id: p.to_string(),
                    t_a: i as i64 * 100,
                    t_d: i as i64 * 100 + 10,
                })
                .collect(),
        }
    }

    #[test]
    fn distribution_examples() {
        let trips = vec![trip("u", &["p1", "p2"]); 3];
        let d = cooccurrence_distribution("p1", &trips).unwrap();
        assert_eq!(d["p2"], 1.0);
        assert_eq!(d["p1"], 0.0);

        let trips = vec![
            trip("u", &["p1", "p2"]),
            trip("u", &["p1", "p2"]),
            trip("u", &["p1", "p3"]),
            trip("u", &["p3", "p1"]),
        ];
        let d = cooccurrence_distribution("p1", &trips).unwrap();
        assert_eq!((d["p2"], d["p3"]), (0.5, 0.5));

        let trips = vec![trip("u", &["p1"]), trip("u", &["p2", "p3"])];
        let d = cooccurrence_distribution("p1", &trips).unwrap();
        assert!(d.values().all(|&v| v == 0.0));
        assert!(cooccurrence_distribution("zz", &trips).is_err());
    }

    #[test]
    fn identical_counts_have_zero_statistic() {
        let r = [3.0, 0.0, 5.0, 1.0];
        let out = chi_square_two_sample(&r, &r, 0.05).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.dof, 2);
        assert!(!out.rejected);
    }

    #[test]
    fn disjoint_supports_statistic() {
        // Equal totals N on disjoint bins: statistic = 2N.
        let r = [30.0, 0.0];
        let s = [0.0, 30.0];
        let out = chi_square_two_sample(&r, &s, 0.05).unwrap();
        assert!((out.statistic - 60.0).abs() < 1e-12);
        assert_eq!(out.dof, 1);
        // Tabulated critical value for one dof at 0.05 is 3.841.
        assert!(out.statistic > 3.841 && out.rejected);
    }

    #[test]
    fn pair_ratio_is_seed_deterministic() {
        let mut trips = Vec::new();
        for i in 0..40 {
            let a = ["a", "b", "c", "d", "e"][i % 5];
            let b = ["b", "c", "d", "e", "a"][(i * 3) % 5];
            if a != b {
                trips.push(trip("u", &[a, b, "f"]));
            }
        }
        let p = PairTestParams::default();
        let r1 = independent_pair_ratio(&trips, p).unwrap();
        let r2 = independent_pair_ratio(&trips, p).unwrap();
        assert_eq!(r1, r2);
        assert!((0.0..=1.0).contains(&r1));
    }

    #[test]
    fn pair_ratio_needs_two_active_pois() {
        let trips = vec![trip("u", &["a"]), trip("u", &["b"])];
        let p = PairTestParams {
            sample_fraction: 1.0,
            runs: 1,
            ..Default::default()
        };
        assert!(independent_pair_ratio(&trips, p).is_err());
    }

    #[test]
    fn impacted_rank_rule() {
        let pois: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
        let counts: HashMap<&str, usize> = pois
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), 100 - i))
            .collect();
        let ranks = popularity_ranks(&pois, &counts);
        assert_eq!(ranks["p0"], 1);
        assert_eq!(ranks["p9"], 10);
        assert!(is_impacted(&BTreeSet::from(["p0"]), &ranks, 10));
        assert!(!is_impacted(&BTreeSet::from(["p9"]), &ranks, 10));
        // Mean rank exactly |L|/2 is not inside the popular half.
        assert!(!is_impacted(&BTreeSet::from(["p3", "p5"]), &ranks, 10));
    }

    #[test]
    fn impacted_ratio_requires_two_users() {
        assert!(impacted_user_ratio(&[trip("u", &["a", "b"])], 5, 1).is_err());
    }

    #[test]
    fn pair_ratio_zero_for_uniform_cooccurrence() {
        // Each pair's rows differ only in the two self bins: statistic 6 on
        // 9 dof, below the tabulated 0.05 critical value 16.919.
        let pois: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
        let refs: Vec<&str> = pois.iter().map(String::as_str).collect();
        let trips = vec![trip("u", &refs); 3];
        let p = PairTestParams { sample_fraction: 1.0, runs: 3, ..Default::default() };
        assert_eq!(independent_pair_ratio(&trips, p).unwrap(), 0.0);
        let co = Cooccurrence::build(&trips);
        let out = chi_square_two_sample(&co.counts[0], &co.counts[1], 0.05).unwrap();
        assert!((out.statistic - 6.0).abs() < 1e-12);
        assert_eq!(out.dof, 9);
    }

    #[test]
    fn pair_ratio_one_for_disjoint_supports() {
        let mut trips = vec![trip("u", &["a1", "a2"]); 30];
        trips.extend(vec![trip("v", &["b1", "b2"]); 30]);
        let p = PairTestParams { sample_fraction: 1.0, runs: 2, ..Default::default() };
        assert_eq!(independent_pair_ratio(&trips, p).unwrap(), 1.0);
    }

    #[test]
    fn impacted_ratio_hand_split() {
        // |L| = 3, threshold 1.5. With A as history the ranks are p0,p1,p2
        // and B's mean rank is 2: not impacted. With B as history every
        // count is 1, ranks fall back to id order, and A's mean rank is 1:
        // impacted. The ratio is the fraction of runs with B as history.
        let trips = vec![trip("A", &["p0"]), trip("B", &["p0", "p1", "p2"])];
        let one = impacted_user_ratio(&trips, 1, 7).unwrap();
        assert!(one == 0.0 || one == 1.0);
        let many = impacted_user_ratio(&trips, 4000, 7).unwrap();
        assert!((many - 0.5).abs() < 0.05, "{many}");
    }
}
