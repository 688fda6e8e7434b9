//! CSV readers and writers for POI, visit and photo files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Trim};

use super::{check_coordinates, PhotoRecord, Poi, PoiId, PoiTable, Trajectory, Visit};
use crate::error::{Error, Result};

pub const POI_HEADER: [&str; 5] = ["poiID", "poiName", "lat", "lon", "category"];
pub const VISIT_HEADER: [&str; 5] = ["userID", "trajID", "poiID", "arrivalTime", "departureTime"];
pub const PHOTO_HEADER: [&str; 4] = ["userID", "timestamp", "lat", "lon"];

struct Rows<R: Read> {
    reader: csv::Reader<R>,
    source_name: String,
    width: usize,
}

impl<R: Read> Rows<R> {
    fn open(input: R, source_name: &str, header: &[&str]) -> Result<Self> {
        let mut reader = ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(Trim::All)
            .from_reader(input);
        let found = reader.headers().map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: 1,
            message: e.to_string(),
        })?;
        if found.iter().ne(header.iter().copied()) {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: 1,
                message: format!(
                    "expected header `{}`, found `{}`",
                    header.join(","),
                    found.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        Ok(Rows {
            reader,
            source_name: source_name.to_string(),
            width: header.len(),
        })
    }

    fn error(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.source_name.clone(),
            line,
            message: message.into(),
        }
    }

    /// Calls `f` with each record and its 1-based line number.
    fn for_each(mut self, mut f: impl FnMut(&Self, &StringRecord, u64) -> Result<()>) -> Result<()> {
        let mut record = StringRecord::new();
        loop {
            let more = self
                .reader
                .read_record(&mut record)
                .map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line());
                    self.error(line, e.to_string())
                })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != self.width {
                return Err(self.error(
                    line,
                    format!("expected {} columns, found {}", self.width, record.len()),
                ));
            }
            f(&self, &record, line)?;
        }
    }

    fn field<T: FromStr>(&self, record: &StringRecord, col: usize, line: u64, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = &record[col];
        raw.parse::<T>()
            .map_err(|e| self.error(line, format!("{name}: cannot parse {raw:?}: {e}")))
    }

    fn finite(&self, record: &StringRecord, col: usize, line: u64, name: &str) -> Result<f64> {
        let v: f64 = self.field(record, col, line, name)?;
        if !v.is_finite() {
            return Err(self.error(line, format!("{name}: value must be finite")));
        }
        Ok(v)
    }
}

fn open_file(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn parse_pois<R: Read>(input: R, source_name: &str) -> Result<PoiTable> {
    let rows = Rows::open(input, source_name, &POI_HEADER)?;
    let mut pois: Vec<Poi> = Vec::new();
    let mut seen = BTreeSet::new();
    rows.for_each(|rows, rec, line| {
        let id = PoiId(rows.field(rec, 0, line, "poiID")?);
        let name = (!rec[1].is_empty()).then(|| rec[1].to_string());
        let lat = rows.finite(rec, 2, line, "lat")?;
        let lon = rows.finite(rec, 3, line, "lon")?;
        check_coordinates(lat, lon).map_err(|m| rows.error(line, m))?;
        if !seen.insert(id) {
            return Err(Error::DuplicateKey {
                source_name: rows.source_name.clone(),
                line,
                id,
            });
        }
        pois.push(Poi {
            id,
            name,
            lat,
            lon,
            category: rec[4].to_string(),
        });
        Ok(())
    })?;
    PoiTable::new(pois)
}

pub fn load_pois(path: impl AsRef<Path>) -> Result<PoiTable> {
    let path = path.as_ref();
    parse_pois(open_file(path)?, &path.display().to_string())
}

/// Reads visit rows and groups them into trajectories keyed by
/// `(userID, trajID)`. Within a group visits are sorted by time and
/// consecutive visits to the same POI are merged.
pub fn parse_trajectories<R: Read>(
    input: R,
    source_name: &str,
    pois: &PoiTable,
) -> Result<Vec<Trajectory>> {
    let rows = Rows::open(input, source_name, &VISIT_HEADER)?;
    let mut groups: BTreeMap<(String, u64), Vec<Visit>> = BTreeMap::new();
    rows.for_each(|rows, rec, line| {
        let user = rec[0].to_string();
        let traj_id: u64 = rows.field(rec, 1, line, "trajID")?;
        let poi = PoiId(rows.field(rec, 2, line, "poiID")?);
        let arrival: i64 = rows.field(rec, 3, line, "arrivalTime")?;
        let departure: i64 = rows.field(rec, 4, line, "departureTime")?;
        if !pois.contains(poi) {
            return Err(Error::UnknownPoi(poi));
        }
        if departure < arrival {
            return Err(rows.error(
                line,
                format!("departure {departure} precedes arrival {arrival}"),
            ));
        }
        groups
            .entry((user, traj_id))
            .or_default()
            .push(Visit::new(poi, arrival, departure));
        Ok(())
    })?;

    groups
        .into_iter()
        .map(|((user, traj_id), mut visits)| {
            visits.sort_by_key(|v| (v.arrival, v.departure, v.poi));
            Trajectory::new(user, traj_id, merge_repeats(visits))
        })
        .collect()
}

pub fn load_trajectories(path: impl AsRef<Path>, pois: &PoiTable) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    parse_trajectories(open_file(path)?, &path.display().to_string(), pois)
}

pub(crate) fn merge_repeats(visits: Vec<Visit>) -> Vec<Visit> {
    let mut out: Vec<Visit> = Vec::with_capacity(visits.len());
    for v in visits {
        match out.last_mut() {
            Some(last) if last.poi == v.poi => last.departure = last.departure.max(v.departure),
            _ => out.push(v),
        }
    }
    out
}

pub fn parse_photos<R: Read>(input: R, source_name: &str) -> Result<Vec<PhotoRecord>> {
    let rows = Rows::open(input, source_name, &PHOTO_HEADER)?;
    let mut photos = Vec::new();
    rows.for_each(|rows, rec, line| {
        let timestamp: i64 = rows.field(rec, 1, line, "timestamp")?;
        if timestamp < 0 {
            return Err(rows.error(line, "timestamp must be non-negative"));
        }
        let lat = rows.finite(rec, 2, line, "lat")?;
        let lon = rows.finite(rec, 3, line, "lon")?;
        check_coordinates(lat, lon).map_err(|m| rows.error(line, m))?;
        photos.push(PhotoRecord {
            user: rec[0].to_string(),
            timestamp,
            lat,
            lon,
        });
        Ok(())
    })?;
    Ok(photos)
}

pub fn load_photos(path: impl AsRef<Path>) -> Result<Vec<PhotoRecord>> {
    let path = path.as_ref();
    parse_photos(open_file(path)?, &path.display().to_string())
}

fn csv_error(e: csv::Error) -> Error {
    Error::validation(format!("csv write: {e}"))
}

pub fn write_pois<W: Write>(out: W, pois: &PoiTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POI_HEADER).map_err(csv_error)?;
    for p in pois.pois() {
        w.write_record([
            p.id.to_string(),
            p.name.clone().unwrap_or_default(),
            p.lat.to_string(),
            p.lon.to_string(),
            p.category.clone(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::validation(format!("csv write: {e}")))
}

pub fn write_trajectories<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VISIT_HEADER).map_err(csv_error)?;
    for t in trajectories {
        for v in t.visits() {
            w.write_record([
                t.user.clone(),
                t.traj_id.to_string(),
                v.poi.to_string(),
                v.arrival.to_string(),
                v.departure.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::validation(format!("csv write: {e}")))
}
