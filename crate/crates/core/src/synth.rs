//! Seeded synthetic data: random query graphs, a two-clique trip corpus, and
//! a structured check-in corpus with popularity skew, co-occurrence cliques,
//! and planted user preferences.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkin::{
    haversine_km, CheckinRecord, Corpus, Distances, Poi, PoiVisit, TimeCostModel, Trip, TripRule,
    DEFAULT_TRIP_WINDOW, DEFAULT_WALKING_SPEED_KMH,
};
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::graph::{build_graph, PoiGraph};
use crate::scoring::{Query, ScoreContext, ScoreOptions};

const CENTER: (f64, f64) = (55.9533, -3.1883);

/// Model with components drawn from `U(-scale, scale)`.
pub fn random_model<R: Rng + ?Sized>(
    pois: Vec<String>,
    users: Vec<String>,
    dim: usize,
    scale: f64,
    rng: &mut R,
) -> Result<EmbeddingModel> {
    let mut m = EmbeddingModel::zeros(dim, pois, users)?;
    for i in 0..m.num_pois() {
        for x in m.poi_vector_mut(i) {
            *x = rng.random_range(-scale..scale);
        }
        *m.bias_mut(i) = rng.random_range(-scale..scale);
    }
    for u in 0..m.num_users() {
        for x in m.user_vector_mut(u) {
            *x = rng.random_range(-scale..scale);
        }
    }
    Ok(m)
}

/// A random query over a random model; every POI is a candidate.
#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub model: EmbeddingModel,
    pub time_model: TimeCostModel,
    pub query: Query,
    pub graph: PoiGraph,
}

/// `n_vertices` POIs scattered within about a kilometre, visit times of
/// 10 to 60 minutes, and a budget equal to the cost of cheapest-insertion
/// of a random subset whose size is drawn from `interior`.
pub fn random_instance(n_vertices: usize, interior: RangeInclusive<usize>, seed: u64) -> Result<SynthInstance> {
    if n_vertices < 2 {
        return Err(Error::invalid("an instance needs at least two vertices"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n_vertices).map(|i| format!("p{i:02}")).collect();
    let model = random_model(ids.clone(), vec!["u0".into()], 4, 1.0, &mut rng)?;
    let mut pois = Vec::with_capacity(n_vertices);
    let mut visit = BTreeMap::new();
    for id in &ids {
        let lat = CENTER.0 + rng.random_range(-0.008..0.008);
        let lon = CENTER.1 + rng.random_range(-0.012..0.012);
        pois.push(Poi::new(id.clone(), lat, lon)?);
        visit.insert(id.clone(), rng.random_range(600.0..3600.0));
    }
    let tc = TimeCostModel::new(visit, DEFAULT_WALKING_SPEED_KMH, Distances::great_circle(&pois))?;

    let inner = n_vertices - 2;
    let lo = (*interior.start()).min(inner);
    let hi = (*interior.end()).min(inner).max(lo);
    let k = rng.random_range(lo..=hi);
    let mut chosen: Vec<usize> = (1..n_vertices - 1).collect();
    chosen.shuffle(&mut rng);
    chosen.truncate(k);

    let start = ids[0].clone();
    let end = ids[n_vertices - 1].clone();
    let mut probe = Query::new("u0", start.clone(), end.clone(), f64::MAX)?;
    let ctx = ScoreContext::new(&model, &probe, ScoreOptions::default())?;
    let loose = build_graph(&ctx, &tc, Some(&ids))?;
    let mut trip = loose.direct_trip();
    for v in chosen {
        let (pos, _) = loose.best_insertion(&trip, v);
        trip.insert(pos, v);
    }
    probe.budget = loose.trip_cost(&trip);

    let query = Query::new("u0", start, end, probe.budget)?;
    let ctx = ScoreContext::new(&model, &query, ScoreOptions::default())?;
    let graph = build_graph(&ctx, &tc, Some(&ids))?;
    Ok(SynthInstance { model, time_model: tc, query, graph })
}

fn trip_of(user: &str, pois: &[String], day: i64) -> Trip {
    let mut t = day * 86_400 + 9 * 3600;
    let visits = pois
        .iter()
        .map(|p| {
            let v = PoiVisit { user_id: user.into(), poi_id: p.clone(), t_a: t, t_d: t + 1800 };
            t += 3600;
            v
        })
        .collect();
    Trip { user_id: user.into(), visits }
}

/// Clique membership of a two-clique POI id (`a*` or `b*`).
pub fn clique_of(poi: &str) -> usize {
    usize::from(poi.starts_with('b'))
}

/// 200 trips of 3 to 6 distinct POIs, each drawn from one of two disjoint
/// 10-POI cliques (`a0`..`a9`, `b0`..`b9`), by 20 users.
pub fn two_clique_trips(seed: u64) -> Vec<Trip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cliques: Vec<Vec<String>> = ["a", "b"]
        .iter()
        .map(|p| (0..10).map(|i| format!("{p}{i}")).collect())
        .collect();
    (0..200)
        .map(|t| {
            let c = &cliques[rng.random_range(0..2)];
            let len = rng.random_range(3..=6);
            let pick: Vec<String> = c.choose_multiple(&mut rng, len).cloned().collect();
            trip_of(&format!("u{}", t % 20), &pick, t as i64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredParams {
    pub cliques: usize,
    pub clique_size: usize,
    pub users: usize,
    pub trips: usize,
    /// Probability that a trip uses the user's preferred clique.
    pub preference: f64,
    /// Zipf exponent of the POI popularity weights.
    pub skew: f64,
    pub trip_len: RangeInclusive<usize>,
}

impl Default for StructuredParams {
    fn default() -> Self {
        StructuredParams {
            cliques: 3,
            clique_size: 6,
            users: 12,
            trips: 72,
            preference: 0.8,
            skew: 1.0,
            trip_len: 3..=5,
        }
    }
}

/// POIs and check-ins of a structured corpus. POIs are scattered at random
/// (clique membership is independent of location) with Zipf popularity
/// over a random rank order; each user prefers one clique. A trip picks a
/// clique, samples distinct POIs from it by popularity, and visits them in
/// nearest-neighbor order, one trip per day with an arrival and a
/// departure check-in per visit.
pub fn structured_checkins(p: &StructuredParams, seed: u64) -> Result<(Vec<Poi>, Vec<CheckinRecord>)> {
    if p.cliques == 0 || p.clique_size < *p.trip_len.end() || p.users == 0 || *p.trip_len.start() == 0 {
        return Err(Error::invalid("structured corpus parameters are inconsistent"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.cliques * p.clique_size;
    let mut pois = Vec::with_capacity(n);
    let mut duration = Vec::with_capacity(n);
    for c in 0..p.cliques {
        for k in 0..p.clique_size {
            let lat = CENTER.0 + rng.random_range(-0.008..0.008);
            let lon = CENTER.1 + rng.random_range(-0.012..0.012);
            pois.push(Poi::new(format!("c{c}p{k}"), lat, lon)?);
            duration.push(rng.random_range(900..2700_i64));
        }
    }
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(&mut rng);
    let mut weight = vec![0.0; n];
    for (r, &i) in rank.iter().enumerate() {
        weight[i] = 1.0 / ((r + 1) as f64).powf(p.skew);
    }
    let preferred: Vec<usize> = (0..p.users).map(|u| u % p.cliques).collect();
    let transit = |a: usize, b: usize| -> i64 {
        let km = haversine_km(pois[a].lat, pois[a].lon, pois[b].lat, pois[b].lon);
        (km / DEFAULT_WALKING_SPEED_KMH * 3600.0).round() as i64
    };

    let mut records = Vec::new();
    let mut last_poi = vec![None; p.users];
    for t in 0..p.trips {
        let u = t % p.users;
        let clique = if p.cliques == 1 || rng.random_bool(p.preference) {
            preferred[u]
        } else {
            let others: Vec<usize> = (0..p.cliques).filter(|&c| c != preferred[u]).collect();
            *others.choose(&mut rng).unwrap()
        };
        let members: Vec<usize> = (clique * p.clique_size..(clique + 1) * p.clique_size).collect();
        let len = rng.random_range(p.trip_len.clone());
        let picked: Vec<usize> = members
            .choose_multiple_weighted(&mut rng, len, |&i| weight[i])
            .map_err(|e| Error::invalid(e.to_string()))?
            .copied()
            .collect();
        // Starting where the user's previous trip ended would merge the two
        // visits into one.
        let first = usize::from(last_poi[u] == Some(picked[0]));
        let mut rest = picked;
        let mut order = vec![rest.remove(first)];
        while !rest.is_empty() {
            let last = *order.last().unwrap();
            let (k, _) = rest
                .iter()
                .enumerate()
                .min_by_key(|(_, &b)| (transit(last, b), b))
                .unwrap();
            order.push(rest.remove(k));
        }
        let user = format!("u{u:02}");
        let mut clock = t as i64 * 86_400 + 9 * 3600;
        for (k, &i) in order.iter().enumerate() {
            if k > 0 {
                clock += transit(order[k - 1], i);
            }
            let stay = duration[i] + rng.random_range(-300..=300);
            for ts in [clock, clock + stay] {
                records.push(CheckinRecord { user_id: user.clone(), poi_id: pois[i].id.clone(), timestamp: ts });
            }
            clock += stay;
        }
        last_poi[u] = order.last().copied();
    }
    Ok((pois, records))
}

/// [`structured_checkins`] ingested with the default trip rule.
pub fn structured_corpus(p: &StructuredParams, seed: u64) -> Result<Corpus> {
    let (pois, records) = structured_checkins(p, seed)?;
    Corpus::from_checkins(&records, pois, None, DEFAULT_TRIP_WINDOW, TripRule::Anchored)
}

pub fn write_checkins_csv<W: Write>(records: &[CheckinRecord], w: &mut W) -> Result<()> {
    writeln!(w, "user_id,poi_id,timestamp")?;
    for r in records {
        writeln!(w, "{},{},{}", r.user_id, r.poi_id, r.timestamp)?;
    }
    Ok(())
}

pub fn write_pois_csv<W: Write>(pois: &[Poi], w: &mut W) -> Result<()> {
    writeln!(w, "poi_id,lat,lon,category")?;
    for p in pois {
        writeln!(w, "{},{:.6},{:.6},{}", p.id, p.lat, p.lon, p.category.as_deref().unwrap_or(""))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instance_budget_admits_chosen_subset() {
        for seed in 0..20 {
            let inst = random_instance(7, 3..=5, seed).unwrap();
            let g = &inst.graph;
            assert_eq!(g.len(), 7);
            assert!(g.feasible(&g.direct_trip()));
            assert!(g.budget() > g.trip_cost(&g.direct_trip()));
        }
    }

    #[test]
    fn two_clique_shape() {
        let trips = two_clique_trips(42);
        assert_eq!(trips.len(), 200);
        for t in &trips {
            let ids = t.distinct_pois();
            assert!((3..=6).contains(&ids.len()));
            assert!(ids.iter().all(|p| clique_of(p) == clique_of(ids[0])));
        }
        assert_eq!(trips, two_clique_trips(42));
    }

    #[test]
    fn structured_corpus_roundtrips_through_ingest() {
        let p = StructuredParams::default();
        let c = structured_corpus(&p, 7).unwrap();
        assert_eq!(c.trips.len(), p.trips);
        for t in &c.trips {
            let ids = t.distinct_pois();
            assert_eq!(ids.len(), t.len());
            assert!(p.trip_len.contains(&ids.len()), "{t:?}");
            let clique = &ids[0][..2];
            assert!(ids.iter().all(|id| id.starts_with(clique)));
        }
    }
}
