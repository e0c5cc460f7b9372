use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::timecost::{compute_visit_times, mean_visit_duration, DistanceMatrix, Distances, TimeCostModel};
use super::{aggregate_visits, extract_trips, validate_id, CheckinRecord, Poi, Trip, TripRule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub poi_visits: usize,
    pub trips: usize,
    pub pois_per_trip: f64,
}

/// Everything downstream stages need: POIs, trips, and the time-cost inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub pois: Vec<Poi>,
    pub trips: Vec<Trip>,
    pub visit_time: BTreeMap<String, f64>,
    pub walking_speed: f64,
    #[serde(default)]
    pub distance_matrix: Option<DistanceMatrix>,
    pub stats: CorpusStats,
}

impl Corpus {
    pub fn from_checkins(
        records: &[CheckinRecord],
        pois: Vec<Poi>,
        distance_matrix: Option<DistanceMatrix>,
        window: i64,
        rule: TripRule,
    ) -> Result<Self> {
        let known: HashSet<&str> = pois.iter().map(|p| p.id.as_str()).collect();
        let mut missing: BTreeSet<String> = BTreeSet::new();
        for r in records {
            if !known.contains(r.poi_id.as_str()) {
                missing.insert(r.poi_id.clone());
            }
        }
        if !missing.is_empty() {
            return Err(Error::UnknownPois(missing.into_iter().collect()));
        }
        let users = records
            .iter()
            .map(|r| r.user_id.as_str())
            .collect::<HashSet<_>>()
            .len();
        let visits = aggregate_visits(records);
        let trips = extract_trips(&visits, window, rule);
        let mut corpus = Corpus::from_trips(pois, trips, distance_matrix)?;
        corpus.stats.users = users;
        Ok(corpus)
    }

    pub fn from_trips(
        pois: Vec<Poi>,
        trips: Vec<Trip>,
        distance_matrix: Option<DistanceMatrix>,
    ) -> Result<Self> {
        let mut ids = HashSet::new();
        for p in &pois {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::invalid(format!("duplicate POI id `{}`", p.id)));
            }
        }
        if let Some(m) = &distance_matrix {
            let covered: HashSet<&str> = m.pois.iter().map(String::as_str).collect();
            let missing: Vec<String> = pois
                .iter()
                .filter(|p| !covered.contains(p.id.as_str()))
                .map(|p| p.id.clone())
                .collect();
            if !missing.is_empty() {
                return Err(Error::UnknownPois(missing));
            }
        }
        let poi_visits: usize = trips.iter().map(Trip::len).sum();
        let stats = CorpusStats {
            users: trips
                .iter()
                .map(|t| t.user_id.as_str())
                .collect::<HashSet<_>>()
                .len(),
            poi_visits,
            trips: trips.len(),
            pois_per_trip: if trips.is_empty() {
                0.0
            } else {
                poi_visits as f64 / trips.len() as f64
            },
        };
        Ok(Corpus {
            visit_time: compute_visit_times(&trips),
            pois,
            trips,
            walking_speed: super::DEFAULT_WALKING_SPEED_KMH,
            distance_matrix,
            stats,
        })
    }

    /// Time-cost model over this corpus. With `fallback_to_mean`, POIs that
    /// were never visited get the corpus-wide mean visit duration.
    pub fn time_model(&self, fallback_to_mean: bool) -> Result<TimeCostModel> {
        let distances = match &self.distance_matrix {
            Some(m) => Distances::matrix(m.clone()),
            None => Distances::great_circle(&self.pois),
        };
        let fallback = if fallback_to_mean {
            Some(mean_visit_duration(&self.trips).unwrap_or(0.0))
        } else {
            None
        };
        Ok(TimeCostModel::new(self.visit_time.clone(), self.walking_speed, distances)?
            .with_fallback_visit_time(fallback))
    }

    /// Sorted POI ids.
    pub fn poi_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.pois.iter().map(|p| p.id.clone()).collect();
        ids.sort();
        ids
    }

    /// Sorted ids of users with at least one trip.
    pub fn user_ids(&self) -> Vec<String> {
        self.trips
            .iter()
            .map(|t| t.user_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_json(std::io::BufReader::new(f))
    }
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} `{}`", field.trim()),
    })
}

/// Reads a `poi_id,lat,lon,category` file; the category may be empty or
/// the column absent.
pub fn read_pois<R: BufRead>(reader: R) -> Result<Vec<Poi>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && trimmed.starts_with("poi_id") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        let lat = parse_f64(fields[1], lineno, "latitude")?;
        let lon = parse_f64(fields[2], lineno, "longitude")?;
        let mut poi = Poi::new(fields[0], lat, lon).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        poi.category = fields
            .get(3)
            .filter(|c| !c.is_empty())
            .map(|c| c.to_string());
        if !seen.insert(poi.id.clone()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("duplicate POI id `{}`", poi.id),
            });
        }
        out.push(poi);
    }
    Ok(out)
}

/// Reads a square CSV matrix whose header row and first column carry POI
/// ids; entries are kilometres.
pub fn read_distance_matrix<R: BufRead>(reader: R) -> Result<DistanceMatrix> {
    let mut lines = reader
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid("empty distance matrix"))?;
    let header = header?;
    let cols: Vec<String> = header
        .split(',')
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    for c in &cols {
        validate_id(c)?;
    }
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} fields, found {}", cols.len() + 1, fields.len()),
            });
        }
        let vals = fields[1..]
            .iter()
            .map(|f| parse_f64(f, lineno, "distance"))
            .collect::<Result<Vec<_>>>()?;
        if rows.insert(fields[0].to_string(), vals).is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("duplicate row `{}`", fields[0]),
            });
        }
    }
    let km = cols
        .iter()
        .map(|c| {
            rows.remove(c)
                .ok_or_else(|| Error::invalid(format!("distance matrix has no row for `{c}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = rows.keys().next() {
        return Err(Error::invalid(format!(
            "distance matrix row `{extra}` has no column"
        )));
    }
    DistanceMatrix::new(cols, km)
}
