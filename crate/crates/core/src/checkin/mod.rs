//! Check-in ingestion, visit aggregation, trip extraction, the time-cost
//! model, and the co-occurrence / popularity analyses over a trip corpus.

mod analysis;
mod corpus;
mod timecost;

pub use analysis::{
    chi_square_two_sample, cooccurrence_distribution, impacted_user_ratio, independent_pair_ratio,
    ChiSquareOutcome, PairTestParams,
};
pub use corpus::{read_distance_matrix, read_pois, Corpus, CorpusStats};
pub use timecost::{
    compute_visit_times, haversine_km, mean_visit_duration, visit_time, DistanceMatrix, Distances,
    TimeCostModel, DEFAULT_WALKING_SPEED_KMH, EARTH_RADIUS_KM,
};

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default trip window: eight hours.
pub const DEFAULT_TRIP_WINDOW: i64 = 8 * 3600;

const CHECKIN_HEADER: &str = "user_id,poi_id,timestamp";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckinRecord {
    pub user_id: String,
    pub poi_id: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub category: Option<String>,
}

impl Poi {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64) -> Result<Self> {
        let id = id.into();
        validate_id(&id)?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::invalid(format!(
                "POI `{id}` has out-of-range coordinates ({lat}, {lon})"
            )));
        }
        Ok(Poi {
            id,
            lat,
            lon,
            category: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoiVisit {
    pub user_id: String,
    pub poi_id: String,
    pub t_a: i64,
    pub t_d: i64,
}

impl PoiVisit {
    pub fn duration(&self) -> i64 {
        self.t_d - self.t_a
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trip {
    pub user_id: String,
    pub visits: Vec<PoiVisit>,
}

impl Trip {
    pub fn poi_ids(&self) -> Vec<&str> {
        self.visits.iter().map(|v| v.poi_id.as_str()).collect()
    }

    /// Distinct POIs in first-visit order.
    pub fn distinct_pois(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::with_capacity(self.visits.len());
        for v in &self.visits {
            if !out.contains(&v.poi_id.as_str()) {
                out.push(&v.poi_id);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.visits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty()
    }
}

/// Ids are written into whitespace-separated files, so they may not contain
/// whitespace.
pub(crate) fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::invalid("empty id"));
    }
    if id.chars().any(char::is_whitespace) {
        return Err(Error::invalid(format!("id `{id}` contains whitespace")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnRowError {
    #[default]
    FailFast,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub records: Vec<CheckinRecord>,
    pub skipped: Vec<RowError>,
}

fn parse_checkin_row(line: &str) -> std::result::Result<CheckinRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, found {}", fields.len()));
    }
    for f in &fields[..2] {
        validate_id(f).map_err(|e| e.to_string())?;
    }
    let timestamp: i64 = fields[2]
        .parse()
        .map_err(|_| format!("invalid timestamp `{}`", fields[2]))?;
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    Ok(CheckinRecord {
        user_id: fields[0].to_string(),
        poi_id: fields[1].to_string(),
        timestamp,
    })
}

/// Reads `user_id,poi_id,timestamp` rows. A leading header row is skipped,
/// blank lines are ignored, and line numbers are 1-based physical lines.
pub fn ingest_checkins<R: BufRead>(reader: R, on_error: OnRowError) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut seen_content = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if trimmed.replace(' ', "") == CHECKIN_HEADER {
                continue;
            }
        }
        match parse_checkin_row(trimmed) {
            Ok(rec) => report.records.push(rec),
            Err(message) => match on_error {
                OnRowError::FailFast => {
                    return Err(Error::Parse {
                        line: lineno,
                        message,
                    })
                }
                OnRowError::Skip => report.skipped.push(RowError {
                    line: lineno,
                    message,
                }),
            },
        }
    }
    Ok(report)
}

/// Groups check-ins per user, sorts them by time (stable), and merges each
/// maximal run at one POI into a single visit.
pub fn aggregate_visits(records: &[CheckinRecord]) -> BTreeMap<String, Vec<PoiVisit>> {
    let mut by_user: BTreeMap<&str, Vec<&CheckinRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(&r.user_id).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (user, mut recs) in by_user {
        recs.sort_by_key(|r| r.timestamp);
        let mut visits: Vec<PoiVisit> = Vec::new();
        for r in recs {
            match visits.last_mut() {
                Some(last) if last.poi_id == r.poi_id => last.t_d = r.timestamp,
                _ => visits.push(PoiVisit {
                    user_id: user.to_string(),
                    poi_id: r.poi_id.clone(),
                    t_a: r.timestamp,
                    t_d: r.timestamp,
                }),
            }
        }
        out.insert(user.to_string(), visits);
    }
    out
}

/// How visits are grouped into trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripRule {
    /// A visit joins the trip iff its arrival is within the window of the
    /// trip's first arrival (inclusive).
    #[default]
    Anchored,
    /// A visit joins the trip iff its arrival is within the window of the
    /// previous visit's arrival (inclusive).
    Gap,
}

pub fn extract_trips(
    visits: &BTreeMap<String, Vec<PoiVisit>>,
    window: i64,
    rule: TripRule,
) -> Vec<Trip> {
    let mut trips = Vec::new();
    for (user, seq) in visits {
        let mut current: Vec<PoiVisit> = Vec::new();
        for v in seq {
            let joins = match (current.first(), current.last()) {
                (Some(first), Some(last)) => {
                    let anchor = match rule {
                        TripRule::Anchored => first.t_a,
                        TripRule::Gap => last.t_a,
                    };
                    v.t_a - anchor <= window
                }
                _ => true,
            };
            if !joins {
                trips.push(Trip {
                    user_id: user.clone(),
                    visits: std::mem::take(&mut current),
                });
            }
            current.push(v.clone());
        }
        if !current.is_empty() {
            trips.push(Trip {
                user_id: user.clone(),
                visits: current,
            });
        }
    }
    trips
}
