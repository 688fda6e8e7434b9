//! POIs, visits and trajectories, plus the readers and generators that
//! produce them.
//!
//! A [`PoiTable`] keeps its POIs sorted by id, so the dense index of a POI
//! (its position in the table) orders the same way as its id. Decoders rely
//! on this for their smaller-id tie-break.

mod io;
mod photos;
mod synth;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_photos, load_pois, load_trajectories, parse_photos, parse_pois, parse_trajectories,
    write_pois, write_trajectories, PHOTO_HEADER, POI_HEADER, VISIT_HEADER,
};
pub use photos::{build_trajectories, DEFAULT_MAP_RADIUS_M, DEFAULT_TIME_GAP_S};
pub use synth::{sample_from, synth_dataset, PlantedModel, SynthConfig, SYNTH_CATEGORIES};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PoiId(pub u32);

impl fmt::Display for PoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: PoiId,
    pub name: Option<String>,
    pub lat: f64,
    pub lon: f64,
    pub category: String,
}

impl Poi {
    pub fn new(id: u32, lat: f64, lon: f64, category: impl Into<String>) -> Self {
        Poi {
            id: PoiId(id),
            name: None,
            lat,
            lon,
            category: category.into(),
        }
    }
}

pub(crate) fn check_coordinates(lat: f64, lon: f64) -> std::result::Result<(), String> {
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} outside [-90, 90]"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} outside [-180, 180]"));
    }
    Ok(())
}

/// The set of POIs available for recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoiTableRepr", into = "PoiTableRepr")]
pub struct PoiTable {
    pois: Vec<Poi>,
    categories: Vec<String>,
    category_of: Vec<usize>,
    index: HashMap<PoiId, usize>,
}

#[derive(Serialize, Deserialize)]
struct PoiTableRepr {
    categories: Vec<String>,
    pois: Vec<Poi>,
}

impl TryFrom<PoiTableRepr> for PoiTable {
    type Error = Error;

    fn try_from(repr: PoiTableRepr) -> Result<Self> {
        PoiTable::with_categories(repr.pois, repr.categories)
    }
}

impl From<PoiTable> for PoiTableRepr {
    fn from(table: PoiTable) -> Self {
        PoiTableRepr {
            categories: table.categories,
            pois: table.pois,
        }
    }
}

impl PoiTable {
    /// Builds a table whose category vocabulary is the distinct categories in
    /// input order.
    pub fn new(pois: Vec<Poi>) -> Result<Self> {
        let mut categories: Vec<String> = Vec::new();
        for p in &pois {
            if !categories.contains(&p.category) {
                categories.push(p.category.clone());
            }
        }
        Self::with_categories(pois, categories)
    }

    /// Builds a table with an explicit category vocabulary. Every POI
    /// category must appear in `categories`; unused entries are allowed.
    pub fn with_categories(mut pois: Vec<Poi>, categories: Vec<String>) -> Result<Self> {
        if pois.is_empty() {
            return Err(Error::EmptyTable);
        }
        for (i, c) in categories.iter().enumerate() {
            if categories[..i].contains(c) {
                return Err(Error::validation(format!("duplicate category {c:?}")));
            }
        }
        for p in &pois {
            check_coordinates(p.lat, p.lon).map_err(Error::Validation)?;
        }
        pois.sort_by_key(|p| p.id);
        let mut index = HashMap::with_capacity(pois.len());
        let mut category_of = Vec::with_capacity(pois.len());
        for (i, p) in pois.iter().enumerate() {
            if index.insert(p.id, i).is_some() {
                return Err(Error::validation(format!("duplicate POI id {}", p.id)));
            }
            let c = categories
                .iter()
                .position(|c| *c == p.category)
                .ok_or_else(|| {
                    Error::validation(format!(
                        "POI {} has category {:?} outside the vocabulary",
                        p.id, p.category
                    ))
                })?;
            category_of.push(c);
        }
        Ok(PoiTable {
            pois,
            categories,
            category_of,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn ids(&self) -> impl Iterator<Item = PoiId> + '_ {
        self.pois.iter().map(|p| p.id)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn index_of(&self, id: PoiId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn require(&self, id: PoiId) -> Result<usize> {
        self.index_of(id).ok_or(Error::UnknownPoi(id))
    }

    pub fn get(&self, id: PoiId) -> Option<&Poi> {
        self.index_of(id).map(|i| &self.pois[i])
    }

    pub fn poi(&self, index: usize) -> &Poi {
        &self.pois[index]
    }

    /// Category index (into [`PoiTable::categories`]) of the POI at `index`.
    pub fn category_index(&self, index: usize) -> usize {
        self.category_of[index]
    }

    pub fn contains(&self, id: PoiId) -> bool {
        self.index.contains_key(&id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoRecord {
    pub user: String,
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub poi: PoiId,
    pub arrival: i64,
    pub departure: i64,
}

impl Visit {
    pub fn new(poi: PoiId, arrival: i64, departure: i64) -> Self {
        Visit {
            poi,
            arrival,
            departure,
        }
    }

    pub fn duration(&self) -> i64 {
        self.departure - self.arrival
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user: String,
    pub traj_id: u64,
    visits: Vec<Visit>,
}

impl Trajectory {
    pub fn new(user: impl Into<String>, traj_id: u64, visits: Vec<Visit>) -> Result<Self> {
        let t = Trajectory {
            user: user.into(),
            traj_id,
            visits,
        };
        t.validate()?;
        Ok(t)
    }

    /// Builds a trajectory from a bare POI sequence, one hour per visit.
    pub fn from_pois(user: impl Into<String>, traj_id: u64, pois: &[PoiId]) -> Result<Self> {
        let visits = pois
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let t = 7200 * k as i64;
                Visit::new(p, t, t + 3600)
            })
            .collect();
        Self::new(user, traj_id, visits)
    }

    fn validate(&self) -> Result<()> {
        if self.visits.is_empty() {
            return Err(Error::validation(format!(
                "trajectory ({}, {}) has no visits",
                self.user, self.traj_id
            )));
        }
        for v in &self.visits {
            if v.departure < v.arrival {
                return Err(Error::validation(format!(
                    "visit to POI {} departs ({}) before it arrives ({})",
                    v.poi, v.departure, v.arrival
                )));
            }
        }
        for w in self.visits.windows(2) {
            if w[1].arrival < w[0].arrival {
                return Err(Error::validation(format!(
                    "trajectory ({}, {}) is not in time order",
                    self.user, self.traj_id
                )));
            }
            if w[0].poi == w[1].poi {
                return Err(Error::validation(format!(
                    "trajectory ({}, {}) repeats POI {} consecutively",
                    self.user, self.traj_id, w[0].poi
                )));
            }
        }
        Ok(())
    }

    pub fn visits(&self) -> &[Visit] {
        &self.visits
    }

    pub fn len(&self) -> usize {
        self.visits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty()
    }

    pub fn pois(&self) -> Vec<PoiId> {
        self.visits.iter().map(|v| v.poi).collect()
    }

    pub fn start(&self) -> PoiId {
        self.visits[0].poi
    }

    pub fn end(&self) -> PoiId {
        self.visits[self.visits.len() - 1].poi
    }

    /// The query this trajectory answers, if it forms a valid one.
    pub fn query(&self) -> Option<Query> {
        (self.len() >= 2 && self.start() != self.end()).then(|| Query {
            start: self.start(),
            end: self.end(),
            length: self.len(),
        })
    }
}

/// A recommendation request: start POI, end POI and total number of POIs.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Query {
    pub start: PoiId,
    pub end: PoiId,
    pub length: usize,
}

impl Query {
    /// Validated constructor. `length` may exceed the number of POIs only for
    /// decoders that return walks; use [`Query::check_path`] for the others.
    pub fn new(start: PoiId, end: PoiId, length: usize, pois: &PoiTable) -> Result<Self> {
        let q = Query { start, end, length };
        q.check(pois)?;
        Ok(q)
    }

    pub fn check(&self, pois: &PoiTable) -> Result<()> {
        pois.require(self.start)?;
        pois.require(self.end)?;
        if self.start == self.end {
            return Err(Error::validation("query start and end must differ"));
        }
        if self.length < 2 {
            return Err(Error::validation(format!(
                "query length {} is below 2",
                self.length
            )));
        }
        Ok(())
    }

    pub fn check_path(&self, pois: &PoiTable) -> Result<()> {
        self.check(pois)?;
        if self.length > pois.len() {
            return Err(Error::validation(format!(
                "query length {} exceeds the {} available POIs",
                self.length,
                pois.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.start, self.end, self.length)
    }
}
