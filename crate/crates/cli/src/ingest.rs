//! Parsers for the two public taxi corpora and the station/box filter.

use std::fs;
use std::path::Path;

use trajflow_core::geometry::{haversine, GeoPoint};

use crate::{CliError, Result};

/// A parsed trajectory before projection: geographic fixes with absolute
/// timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub id: String,
    pub points: Vec<(GeoPoint, i64)>,
}

impl RawTrajectory {
    pub fn start_epoch(&self) -> i64 {
        self.points.first().map(|&(_, t)| t).unwrap_or(0)
    }
}

/// Result of parsing a source file or directory: the kept trajectories and
/// how many rows were skipped (missing data, empty or one-point polylines,
/// malformed fields).
#[derive(Debug)]
pub struct ParseOutcome {
    pub trajectories: Vec<RawTrajectory>,
    pub skipped: usize,
}

/// Porto CSV parsing options.
#[derive(Debug, Clone)]
pub struct PortoOptions {
    /// Seconds between consecutive polyline samples; the corpus records a
    /// single start timestamp per trip and samples uniformly.
    pub sample_interval_s: i64,
    /// Abort on the first malformed row instead of skipping it.
    pub strict: bool,
}

impl Default for PortoOptions {
    fn default() -> Self {
        PortoOptions { sample_interval_s: 15, strict: false }
    }
}

/// Parse the Porto taxi CSV: one trip per row with a `POLYLINE` column of
/// `[lon, lat]` pairs and a `TIMESTAMP` start epoch. Rows flagged
/// `MISSING_DATA`, empty polylines, and trips with fewer than two fixes are
/// skipped and counted.
pub fn parse_porto(path: &Path, opts: &PortoOptions) -> Result<ParseOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CliError::Data(format!("{}: missing column {name}", path.display())))
    };
    let id_col = column("TRIP_ID")?;
    let time_col = column("TIMESTAMP")?;
    let missing_col = column("MISSING_DATA")?;
    let poly_col = column("POLYLINE")?;

    let mut trajectories = Vec::new();
    let mut skipped = 0usize;
    for (row_no, record) in reader.records().enumerate() {
        let parsed = record
            .map_err(|e| format!("row {}: {e}", row_no + 2))
            .and_then(|r| parse_porto_row(&r, id_col, time_col, missing_col, poly_col, opts));
        match parsed {
            Ok(Some(t)) => trajectories.push(t),
            Ok(None) => skipped += 1,
            Err(msg) => {
                if opts.strict {
                    return Err(CliError::Data(format!("{}: {msg}", path.display())));
                }
                eprintln!("warning: {}: {msg} (skipped)", path.display());
                skipped += 1;
            }
        }
    }
    Ok(ParseOutcome { trajectories, skipped })
}

fn parse_porto_row(
    record: &csv::StringRecord,
    id_col: usize,
    time_col: usize,
    missing_col: usize,
    poly_col: usize,
    opts: &PortoOptions,
) -> std::result::Result<Option<RawTrajectory>, String> {
    let field = |col: usize| record.get(col).ok_or_else(|| format!("missing field {col}"));
    if field(missing_col)?.eq_ignore_ascii_case("true") {
        return Ok(None);
    }
    let id = field(id_col)?.to_string();
    let start: i64 =
        field(time_col)?.trim().parse().map_err(|e| format!("trip {id}: bad timestamp: {e}"))?;
    let polyline: Vec<[f64; 2]> = serde_json::from_str(field(poly_col)?)
        .map_err(|e| format!("trip {id}: bad polyline: {e}"))?;
    if polyline.len() < 2 {
        return Ok(None);
    }
    let mut points = Vec::with_capacity(polyline.len());
    for (j, [lon, lat]) in polyline.into_iter().enumerate() {
        let g = GeoPoint::new(lon, lat)
            .map_err(|e| format!("trip {id}: point {j}: {e}"))?;
        points.push((g, start + j as i64 * opts.sample_interval_s));
    }
    Ok(Some(RawTrajectory { id, points }))
}

/// Parse a cabspotting-style directory: one whitespace-delimited file per
/// taxi with `latitude longitude occupancy epoch` per line, newest first.
/// Fixes are re-sorted by time and each maximal run of occupied (`1`) fixes
/// becomes one trip; runs shorter than two fixes are dropped.
pub fn parse_cabspotting(dir: &Path, strict: bool) -> Result<ParseOutcome> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no taxi files", dir.display())));
    }

    let mut trajectories = Vec::new();
    let mut skipped = 0usize;
    for file in files {
        let stem = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("taxi")
            .to_string();
        let content = fs::read_to_string(&file)?;
        let mut fixes: Vec<(GeoPoint, u8, i64)> = Vec::new();
        for (line_no, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match parse_cab_line(line) {
                Ok(fix) => fixes.push(fix),
                Err(msg) => {
                    let msg = format!("{}:{}: {msg}", file.display(), line_no + 1);
                    if strict {
                        return Err(CliError::Data(msg));
                    }
                    eprintln!("warning: {msg} (skipped)");
                    skipped += 1;
                }
            }
        }
        fixes.sort_by_key(|&(_, _, t)| t);

        let mut run: Vec<(GeoPoint, i64)> = Vec::new();
        let mut trip_no = 0usize;
        let flush = |run: &mut Vec<(GeoPoint, i64)>,
                         trip_no: &mut usize,
                         out: &mut Vec<RawTrajectory>,
                         skipped: &mut usize| {
            if run.len() >= 2 {
                *trip_no += 1;
                out.push(RawTrajectory {
                    id: format!("{stem}_{trip_no}"),
                    points: std::mem::take(run),
                });
            } else if !run.is_empty() {
                *skipped += 1;
                run.clear();
            }
        };
        for (g, occupied, t) in fixes {
            if occupied == 1 {
                run.push((g, t));
            } else {
                flush(&mut run, &mut trip_no, &mut trajectories, &mut skipped);
            }
        }
        flush(&mut run, &mut trip_no, &mut trajectories, &mut skipped);
    }
    Ok(ParseOutcome { trajectories, skipped })
}

fn parse_cab_line(line: &str) -> std::result::Result<(GeoPoint, u8, i64), String> {
    let mut parts = line.split_whitespace();
    let mut next = |what: &str| parts.next().ok_or_else(|| format!("missing {what}"));
    let lat: f64 = next("latitude")?.parse().map_err(|e| format!("bad latitude: {e}"))?;
    let lon: f64 = next("longitude")?.parse().map_err(|e| format!("bad longitude: {e}"))?;
    let occupied: u8 = next("occupancy")?.parse().map_err(|e| format!("bad occupancy: {e}"))?;
    let time: i64 = next("timestamp")?.parse().map_err(|e| format!("bad timestamp: {e}"))?;
    let g = GeoPoint::new(lon, lat).map_err(|e| e.to_string())?;
    Ok((g, occupied, time))
}

/// Well-ordered lon/lat extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self> {
        if min_lon < max_lon && min_lat < max_lat {
            Ok(BoundingBox { min_lon, min_lat, max_lon, max_lat })
        } else {
            Err(CliError::Usage("bounding box must be min_lon,min_lat,max_lon,max_lat".into()))
        }
    }

    pub fn contains(&self, g: GeoPoint) -> bool {
        (self.min_lon..=self.max_lon).contains(&g.lon)
            && (self.min_lat..=self.max_lat).contains(&g.lat)
    }
}

/// Subset selection: keep trips starting near a station and ending inside a
/// box, with sane point counts.
#[derive(Debug, Clone, Default)]
pub struct DatasetSpec {
    /// Keep only trips whose first fix is within `radius_m` of the point.
    pub origin_filter: Option<(GeoPoint, f64)>,
    /// Keep only trips whose last fix falls inside the box.
    pub destination_box: Option<BoundingBox>,
    /// Minimum fixes per trip (at least 2 regardless).
    pub min_points: usize,
    pub max_points: Option<usize>,
}

impl DatasetSpec {
    fn keeps(&self, t: &RawTrajectory) -> bool {
        if t.points.len() < self.min_points.max(2) {
            return false;
        }
        if let Some(max) = self.max_points {
            if t.points.len() > max {
                return false;
            }
        }
        if let Some((station, radius_m)) = self.origin_filter {
            let (first, _) = t.points[0];
            if haversine(first, station) * 1000.0 >= radius_m {
                return false;
            }
        }
        if let Some(bbox) = self.destination_box {
            let (last, _) = *t.points.last().expect("non-empty");
            if !bbox.contains(last) {
                return false;
            }
        }
        true
    }
}

/// Keep the trajectories matching the spec. Idempotent.
pub fn filter(ts: Vec<RawTrajectory>, spec: &DatasetSpec) -> Vec<RawTrajectory> {
    ts.into_iter().filter(|t| spec.keeps(t)).collect()
}
