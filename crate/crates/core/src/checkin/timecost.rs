use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Poi, Trip};
use crate::error::{Error, Result};

pub const DEFAULT_WALKING_SPEED_KMH: f64 = 4.0;
pub const EARTH_RADIUS_KM: f64 = 6371.0;

pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Symmetric POI-to-POI distances in km, zero on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub pois: Vec<String>,
    pub km: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn new(pois: Vec<String>, km: Vec<Vec<f64>>) -> Result<Self> {
        let n = pois.len();
        if km.len() != n || km.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("distance matrix is not square"));
        }
        for i in 0..n {
            if km[i][i].abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "distance matrix diagonal at `{}` is {}",
                    pois[i], km[i][i]
                )));
            }
            for j in 0..n {
                let d = km[i][j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::invalid(format!("invalid distance {d}")));
                }
                if (d - km[j][i]).abs() > 1e-6 {
                    return Err(Error::invalid(format!(
                        "distance matrix not symmetric at ({}, {})",
                        pois[i], pois[j]
                    )));
                }
            }
        }
        Ok(DistanceMatrix { pois, km })
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.pois
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum Distances {
    GreatCircle(HashMap<String, (f64, f64)>),
    Matrix {
        index: HashMap<String, usize>,
        matrix: DistanceMatrix,
    },
}

impl Distances {
    pub fn great_circle<'a>(pois: impl IntoIterator<Item = &'a Poi>) -> Self {
        Distances::GreatCircle(
            pois.into_iter()
                .map(|p| (p.id.clone(), (p.lat, p.lon)))
                .collect(),
        )
    }

    pub fn matrix(matrix: DistanceMatrix) -> Self {
        let index = matrix
            .index()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Distances::Matrix { index, matrix }
    }

    pub fn km(&self, a: &str, b: &str) -> Result<f64> {
        match self {
            Distances::GreatCircle(coords) => {
                let &(la, oa) = coords.get(a).ok_or_else(|| Error::UnknownPoi(a.into()))?;
                let &(lb, ob) = coords.get(b).ok_or_else(|| Error::UnknownPoi(b.into()))?;
                if a == b {
                    return Ok(0.0);
                }
                Ok(haversine_km(la, oa, lb, ob))
            }
            Distances::Matrix { index, matrix } => {
                let i = *index.get(a).ok_or_else(|| Error::UnknownPoi(a.into()))?;
                let j = *index.get(b).ok_or_else(|| Error::UnknownPoi(b.into()))?;
                // Symmetrize within the accepted 1e-6 slack.
                Ok(0.5 * (matrix.km[i][j] + matrix.km[j][i]))
            }
        }
    }

    pub fn contains(&self, poi: &str) -> bool {
        match self {
            Distances::GreatCircle(c) => c.contains_key(poi),
            Distances::Matrix { index, .. } => index.contains_key(poi),
        }
    }
}

/// Mean visit duration per POI, in seconds.
pub fn compute_visit_times(trips: &[Trip]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for v in trips.iter().flat_map(|t| &t.visits) {
        let e = acc.entry(v.poi_id.clone()).or_insert((0.0, 0));
        e.0 += v.duration() as f64;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}

/// Mean visit duration of one POI across every visit in the corpus.
pub fn visit_time(poi_id: &str, trips: &[Trip]) -> Result<f64> {
    let (sum, n) = trips
        .iter()
        .flat_map(|t| &t.visits)
        .filter(|v| v.poi_id == poi_id)
        .fold((0.0, 0usize), |(s, n), v| (s + v.duration() as f64, n + 1));
    if n == 0 {
        return Err(Error::NoVisitPoi(poi_id.into()));
    }
    Ok(sum / n as f64)
}

/// Mean duration over all visits (not over per-POI means).
pub fn mean_visit_duration(trips: &[Trip]) -> Option<f64> {
    let (sum, n) = trips
        .iter()
        .flat_map(|t| &t.visits)
        .fold((0.0, 0usize), |(s, n), v| (s + v.duration() as f64, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone)]
pub struct TimeCostModel {
    visit_time: BTreeMap<String, f64>,
    walking_speed: f64,
    distances: Distances,
    fallback_visit_time: Option<f64>,
}

impl TimeCostModel {
    pub fn new(
        visit_time: BTreeMap<String, f64>,
        walking_speed: f64,
        distances: Distances,
    ) -> Result<Self> {
        if !(walking_speed > 0.0 && walking_speed.is_finite()) {
            return Err(Error::invalid(format!("walking speed {walking_speed}")));
        }
        if let Some((k, v)) = visit_time.iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("visit time of `{k}` is {v}")));
        }
        Ok(TimeCostModel {
            visit_time,
            walking_speed,
            distances,
            fallback_visit_time: None,
        })
    }

    /// Visit time used for POIs with no recorded visit; `None` makes such
    /// POIs an error.
    pub fn with_fallback_visit_time(mut self, fallback: Option<f64>) -> Self {
        self.fallback_visit_time = fallback;
        self
    }

    pub fn walking_speed(&self) -> f64 {
        self.walking_speed
    }

    pub fn distances(&self) -> &Distances {
        &self.distances
    }

    pub fn visit_times(&self) -> &BTreeMap<String, f64> {
        &self.visit_time
    }

    pub fn visit_time(&self, poi: &str) -> Result<f64> {
        match self.visit_time.get(poi) {
            Some(&t) => Ok(t),
            None => {
                if !self.distances.contains(poi) {
                    return Err(Error::UnknownPoi(poi.into()));
                }
                self.fallback_visit_time
                    .ok_or_else(|| Error::NoVisitPoi(poi.into()))
            }
        }
    }

    pub fn transit_time(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.distances.km(a, b)? / self.walking_speed * 3600.0)
    }

    /// Visit time of every POI plus transit between consecutive POIs.
    pub fn trip_cost(&self, pois: &[&str]) -> Result<f64> {
        if pois.is_empty() {
            return Err(Error::invalid("trip_cost of an empty sequence"));
        }
        let mut total = 0.0;
        for p in pois {
            total += self.visit_time(p)?;
        }
        for w in pois.windows(2) {
            total += self.transit_time(w[0], w[1])?;
        }
        Ok(total)
    }
}
