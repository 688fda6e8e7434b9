//! Trajectory construction from geo-tagged photos.

use std::collections::BTreeMap;

use super::{PhotoRecord, PoiId, PoiTable, Trajectory, Visit};
use crate::error::{Error, Result};
use crate::features::haversine_km;

pub const DEFAULT_MAP_RADIUS_M: f64 = 200.0;
pub const DEFAULT_TIME_GAP_S: i64 = 8 * 3600;

fn nearest_poi(pois: &PoiTable, lat: f64, lon: f64) -> (PoiId, f64) {
    // The table is sorted by id, so a strict comparison keeps the lower id
    // on ties.
    let mut best = (pois.poi(0).id, f64::INFINITY);
    for p in pois.pois() {
        let d = haversine_km((lat, lon), (p.lat, p.lon));
        if d < best.1 {
            best = (p.id, d);
        }
    }
    best
}

/// Maps photos onto POIs and splits each user's visit history into
/// trajectories.
///
/// A photo is assigned to its nearest POI when that POI lies within
/// `map_radius_m` metres and is dropped otherwise. Consecutive photos at the
/// same POI form one visit (arrival at the first photo, departure at the
/// last) unless they are more than `time_gap_s` apart. A new trajectory
/// starts whenever the next visit begins more than `time_gap_s` after the
/// previous one ended. Trajectory ids are assigned in order of
/// `(user, start time)`.
pub fn build_trajectories(
    photos: &[PhotoRecord],
    pois: &PoiTable,
    map_radius_m: f64,
    time_gap_s: i64,
) -> Result<Vec<Trajectory>> {
    if !(map_radius_m > 0.0) {
        return Err(Error::validation("map radius must be positive"));
    }
    if time_gap_s <= 0 {
        return Err(Error::validation("time gap must be positive"));
    }

    let mut by_user: BTreeMap<&str, Vec<(i64, PoiId)>> = BTreeMap::new();
    for photo in photos {
        let (poi, km) = nearest_poi(pois, photo.lat, photo.lon);
        if km * 1000.0 <= map_radius_m {
            by_user
                .entry(photo.user.as_str())
                .or_default()
                .push((photo.timestamp, poi));
        }
    }

    let mut out = Vec::new();
    let mut next_id = 0u64;
    for (user, mut shots) in by_user {
        shots.sort_unstable();
        let mut visits: Vec<Visit> = Vec::new();
        for (t, poi) in shots {
            match visits.last_mut() {
                Some(v) if v.poi == poi && t - v.departure <= time_gap_s => v.departure = t,
                _ => visits.push(Visit::new(poi, t, t)),
            }
        }

        let mut current: Vec<Visit> = Vec::new();
        for v in visits {
            if let Some(prev) = current.last() {
                if v.arrival - prev.departure > time_gap_s {
                    out.push(Trajectory::new(user, next_id, std::mem::take(&mut current))?);
                    next_id += 1;
                }
            }
            current.push(v);
        }
        if !current.is_empty() {
            out.push(Trajectory::new(user, next_id, current)?);
            next_id += 1;
        }
    }
    Ok(out)
}
