//! POI statistics and query-conditioned feature vectors.

mod discretize;
mod kmeans;
mod scaler;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{PoiId, PoiTable, Query, Trajectory};
use crate::error::{Error, Result};

pub use discretize::Discretizer;
pub use kmeans::{kmeans, ClusterAssignment, DEFAULT_CLUSTERS, MAX_KMEANS_ITERATIONS};
pub use scaler::Scaler;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Width of the neighbourhood one-hot block.
pub const NEIGHBOURHOODS: usize = DEFAULT_CLUSTERS;

/// Great-circle distance in kilometres between two `(lat, lon)` points given
/// in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PoiStats {
    /// Number of distinct users who visited the POI.
    pub popularity: u32,
    pub n_visit: u32,
    /// Mean visit duration in seconds.
    pub avg_duration: f64,
}

/// Per-POI statistics. POIs absent from the map have all-zero statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoiStatistics(BTreeMap<PoiId, PoiStats>);

impl PoiStatistics {
    pub fn get(&self, id: PoiId) -> PoiStats {
        self.0.get(&id).copied().unwrap_or_default()
    }

    pub fn contains(&self, id: PoiId) -> bool {
        self.0.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PoiId, PoiStats)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }
}

pub fn compute_stats(trajectories: &[Trajectory]) -> PoiStatistics {
    let mut users: BTreeMap<PoiId, BTreeSet<&str>> = BTreeMap::new();
    let mut visits: BTreeMap<PoiId, (u32, i64)> = BTreeMap::new();
    for t in trajectories {
        for v in t.visits() {
            users.entry(v.poi).or_default().insert(t.user.as_str());
            let e = visits.entry(v.poi).or_default();
            e.0 += 1;
            e.1 += v.duration();
        }
    }
    PoiStatistics(
        visits
            .into_iter()
            .map(|(poi, (n, total))| {
                let stats = PoiStats {
                    popularity: users[&poi].len() as u32,
                    n_visit: n,
                    avg_duration: total as f64 / n as f64,
                };
                (poi, stats)
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Names of the ranking feature dimensions for a category vocabulary.
pub fn feature_schema(categories: &[String]) -> Vec<String> {
    let mut names: Vec<String> = categories.iter().map(|c| format!("category={c}")).collect();
    names.extend((0..NEIGHBOURHOODS).map(|k| format!("neighbourhood={k}")));
    names.extend(
        [
            "popularity",
            "nVisit",
            "avgDuration",
            "trajLen",
            "sameCatStart",
            "sameCatEnd",
            "sameNeighbourhoodStart",
            "sameNeighbourhoodEnd",
            "distStart",
            "distEnd",
            "diffPopStart",
            "diffPopEnd",
            "diffNVisitStart",
            "diffNVisitEnd",
            "diffDurationStart",
            "diffDurationEnd",
        ]
        .map(String::from),
    );
    names
}

fn same(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        -1.0
    }
}

/// Everything needed to featurise a POI against a query.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub pois: &'a PoiTable,
    pub stats: &'a PoiStatistics,
    pub clusters: &'a ClusterAssignment,
}

impl FeatureContext<'_> {
    pub fn schema(&self) -> Vec<String> {
        feature_schema(self.pois.categories())
    }

    pub fn query_features(&self, p: PoiId, q: &Query) -> Result<FeatureVector> {
        let ip = self.pois.require(p)?;
        let is = self.pois.require(q.start)?;
        let ie = self.pois.require(q.end)?;
        Ok(self.features_at(ip, is, ie, q.length))
    }

    /// Features for every POI in table order.
    pub fn query_features_all(&self, q: &Query) -> Result<Vec<FeatureVector>> {
        let is = self.pois.require(q.start)?;
        let ie = self.pois.require(q.end)?;
        Ok((0..self.pois.len())
            .map(|ip| self.features_at(ip, is, ie, q.length))
            .collect())
    }

    fn features_at(&self, ip: usize, is: usize, ie: usize, length: usize) -> FeatureVector {
        let n_cat = self.pois.categories().len();
        let mut x = vec![0.0; n_cat + 21];
        let poi = |i: usize| self.pois.poi(i);
        let stats = |i: usize| self.stats.get(poi(i).id);
        let cat = |i: usize| self.pois.category_index(i);
        let cluster = |i: usize| self.clusters.cluster(i);
        let (sp, ss, se) = (stats(ip), stats(is), stats(ie));

        x[cat(ip)] = 1.0;
        x[n_cat + cluster(ip)] = 1.0;
        let mut k = n_cat + NEIGHBOURHOODS;
        let mut push = |v: f64| {
            x[k] = v;
            k += 1;
        };
        push((sp.popularity as f64).ln_1p());
        push((sp.n_visit as f64).ln_1p());
        push(sp.avg_duration.ln_1p());
        push(length as f64);
        push(same(cat(ip), cat(is)));
        push(same(cat(ip), cat(ie)));
        push(same(cluster(ip), cluster(is)));
        push(same(cluster(ip), cluster(ie)));
        let loc = |i: usize| (poi(i).lat, poi(i).lon);
        push(haversine_km(loc(ip), loc(is)));
        push(haversine_km(loc(ip), loc(ie)));
        push(sp.popularity as f64 - ss.popularity as f64);
        push(sp.popularity as f64 - se.popularity as f64);
        push(sp.n_visit as f64 - ss.n_visit as f64);
        push(sp.n_visit as f64 - se.n_visit as f64);
        push(sp.avg_duration - ss.avg_duration);
        push(sp.avg_duration - se.avg_duration);
        FeatureVector(x)
    }
}

pub(crate) fn check_dims(expected: usize, found: usize, what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::validation(format!(
            "{what}: expected {expected} dimensions, found {found}"
        )));
    }
    Ok(())
}
