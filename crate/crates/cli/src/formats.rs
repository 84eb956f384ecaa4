//! On-disk formats for every pipeline artifact.
//!
//! All text artifacts are written with deterministic formatting so repeated
//! runs with the same seeds produce byte-identical files. Coordinates are
//! stored with six decimal places (about 0.1 m), which round-trips within
//! the 1e-6 degree contract; model parameters use Rust's shortest
//! round-trip float formatting and reload bit-exactly.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use trajflow_core::clustering::{ClusterAssignment, DistanceMatrix};
use trajflow_core::eval::EvalReport;
use trajflow_core::geometry::{GeoPoint, PlanarPoint};
use trajflow_core::gmm::{Covariance, GaussianComponent, MixtureModel};
use trajflow_core::scoring::{ClusterModel, FlowModel, WeightFlags, WeightTables};

use crate::config::flags_name;
use crate::ingest::RawTrajectory;
use crate::{CliError, Result};

const TRAJ_HEADER: &str = "# trajfile v1";
const LABELS_MAGIC: &str = "# labels v1";
const MODEL_MAGIC: &str = "trajflow-model v1";
const MATRIX_MAGIC: &[u8; 4] = b"TFDM";
const MATRIX_VERSION: u32 = 1;

fn data_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

// ---------------------------------------------------------------------------
// Canonical trajectory file
// ---------------------------------------------------------------------------

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r', ',', ';']) {
        return Err(CliError::Data(format!("trajectory id {id:?} contains reserved characters")));
    }
    Ok(())
}

/// One record per trajectory: id, start epoch, and `lon,lat,t` triples.
pub fn write_trajectories(path: &Path, ts: &[RawTrajectory]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{TRAJ_HEADER}")?;
    for t in ts {
        check_id(&t.id)?;
        write!(out, "{}\t{}\t", t.id, t.start_epoch())?;
        for (i, &(g, time)) in t.points.iter().enumerate() {
            if i > 0 {
                write!(out, ";")?;
            }
            write!(out, "{:.6},{:.6},{}", g.lon, g.lat, time)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<Vec<RawTrajectory>> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines();
    match lines.next() {
        Some(TRAJ_HEADER) => {}
        _ => return Err(data_err(path, "not a trajectory file (bad header)")),
    }
    let mut ts = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields
            .next()
            .ok_or_else(|| data_err(path, format!("line {}: missing id", line_no + 2)))?;
        let _start = fields.next();
        let triples = fields
            .next()
            .ok_or_else(|| data_err(path, format!("line {}: missing points", line_no + 2)))?;
        let mut points = Vec::new();
        for triple in triples.split(';') {
            let mut parts = triple.split(',');
            let bad =
                || data_err(path, format!("line {}: bad point {triple:?}", line_no + 2));
            let lon: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let lat: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let time: i64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            points.push((GeoPoint::new(lon, lat)?, time));
        }
        if points.len() < 2 {
            return Err(data_err(path, format!("line {}: fewer than 2 points", line_no + 2)));
        }
        ts.push(RawTrajectory { id: id.to_string(), points });
    }
    if ts.is_empty() {
        return Err(data_err(path, "no trajectories"));
    }
    Ok(ts)
}

// ---------------------------------------------------------------------------
// Cluster labels
// ---------------------------------------------------------------------------

/// Labels are written 1-based, one `id<TAB>label` line per trajectory in
/// input order.
pub fn write_labels(path: &Path, ts: &[RawTrajectory], labels: &ClusterAssignment) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{LABELS_MAGIC} k={}", labels.cluster_count())?;
    for (t, &label) in ts.iter().zip(labels.labels()) {
        writeln!(out, "{}\t{}", t.id, label + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Read labels back, checking they line up with the given trajectories.
pub fn read_labels(path: &Path, ts: &[RawTrajectory]) -> Result<ClusterAssignment> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines();
    let header = lines.next().unwrap_or_default();
    let k: usize = header
        .strip_prefix(LABELS_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("k="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| data_err(path, "not a labels file (bad header)"))?;
    let mut labels = Vec::with_capacity(ts.len());
    for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| data_err(path, format!("line {}: expected id<TAB>label", i + 2)))?;
        let expected = ts.get(i).map(|t| t.id.as_str());
        if expected != Some(id) {
            return Err(data_err(
                path,
                format!(
                    "line {}: label id {id:?} does not match trajectory {:?}",
                    i + 2,
                    expected.unwrap_or("<none>")
                ),
            ));
        }
        let one_based: usize = label
            .parse()
            .map_err(|_| data_err(path, format!("line {}: bad label {label:?}", i + 2)))?;
        if one_based == 0 {
            return Err(data_err(path, format!("line {}: labels are 1-based", i + 2)));
        }
        labels.push((one_based - 1) as u32);
    }
    if labels.len() != ts.len() {
        return Err(data_err(
            path,
            format!("{} labels for {} trajectories", labels.len(), ts.len()),
        ));
    }
    ClusterAssignment::from_labels(labels, k).map_err(CliError::from)
}

// ---------------------------------------------------------------------------
// Distance matrix (binary)
// ---------------------------------------------------------------------------

/// Header: magic `TFDM`, little-endian u32 version, u64 observation count;
/// payload: condensed upper-triangle f64 values, row-major.
pub fn write_distance_matrix(path: &Path, d: &DistanceMatrix) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&MATRIX_VERSION.to_le_bytes())?;
    out.write_all(&(d.observations() as u64).to_le_bytes())?;
    for v in d.condensed() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_distance_matrix(path: &Path) -> Result<DistanceMatrix> {
    let mut file = fs::File::open(path)?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header)
        .map_err(|_| data_err(path, "truncated distance matrix header"))?;
    if &header[..4] != MATRIX_MAGIC {
        return Err(data_err(path, "not a distance matrix file (bad magic)"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != MATRIX_VERSION {
        return Err(data_err(path, format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let expected = n.checked_mul(n.saturating_sub(1)).map(|v| v / 2).unwrap_or(usize::MAX);
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    if payload.len() != expected * 8 {
        return Err(data_err(
            path,
            format!("payload holds {} bytes, expected {}", payload.len(), expected * 8),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DistanceMatrix::from_condensed(n, values).map_err(CliError::from)
}

// ---------------------------------------------------------------------------
// Flow model (versioned text)
// ---------------------------------------------------------------------------

/// Versioned text serialization of a fitted flow model. Floats use the
/// shortest representation that round-trips exactly, so a reloaded model is
/// bit-identical. Cluster and component indices are written 1-based.
pub fn write_model(path: &Path, model: &FlowModel) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let k = model.cluster_count();
    writeln!(out, "{MODEL_MAGIC}")?;
    writeln!(out, "origin {} {}", model.origin().lon, model.origin().lat)?;
    writeln!(out, "clusters {k}")?;
    for (m, cluster) in model.clusters().iter().enumerate() {
        writeln!(
            out,
            "cluster {} members {} ntrain {} loglik {} dest {} {} components {}",
            m + 1,
            cluster.member_count,
            cluster.mixture.n_train(),
            cluster.mixture.train_log_likelihood(),
            cluster.mean_destination.x,
            cluster.mean_destination.y,
            cluster.mixture.component_count(),
        )?;
        for (j, comp) in cluster.mixture.components().iter().enumerate() {
            let cov = comp.covariance();
            writeln!(
                out,
                "component {} {} weight {} mean {} {} cov {} {} {}",
                m + 1,
                j + 1,
                comp.weight(),
                comp.mean().x,
                comp.mean().y,
                cov.xx,
                cov.xy,
                cov.yy,
            )?;
        }
    }
    let tables = model.tables();
    for m in 0..k {
        writeln!(out, "emp {} {}", m + 1, tables.empirical(m))?;
    }
    for d in 1..=7u8 {
        for m in 0..k {
            writeln!(out, "weekday {} {} {}", d, m + 1, tables.weekday(d, m))?;
        }
    }
    for h in 0..24u8 {
        for m in 0..k {
            writeln!(out, "hour {} {} {}", h, m + 1, tables.hour(h, m))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Word-at-a-time reader for one model-file line.
struct LineCursor<'a> {
    words: std::str::SplitWhitespace<'a>,
    path: &'a Path,
    line_no: usize,
}

impl<'a> LineCursor<'a> {
    fn bad(&self, msg: &str) -> CliError {
        data_err(self.path, format!("line {}: {msg}", self.line_no + 1))
    }

    fn word(&mut self, what: &str) -> Result<&'a str> {
        self.words.next().ok_or_else(|| self.bad(&format!("missing {what}")))
    }

    fn literal(&mut self, expected: &str) -> Result<()> {
        let got = self.word(expected)?;
        if got == expected {
            Ok(())
        } else {
            Err(self.bad(&format!("expected {expected:?}, found {got:?}")))
        }
    }

    fn num<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let raw = self.word(what)?;
        raw.parse().map_err(|_| self.bad(&format!("bad {what}: {raw:?}")))
    }
}

pub fn read_model(path: &Path) -> Result<FlowModel> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate();

    match lines.next() {
        Some((_, MODEL_MAGIC)) => {}
        _ => return Err(data_err(path, "not a model file (bad magic)")),
    }

    let mut origin: Option<GeoPoint> = None;
    let mut k = 0usize;
    struct ClusterParts {
        members: usize,
        n_train: usize,
        loglik: f64,
        dest: PlanarPoint,
        declared_components: usize,
        components: Vec<GaussianComponent>,
    }
    let mut clusters: Vec<ClusterParts> = Vec::new();
    let mut emp: Vec<f64> = Vec::new();
    let mut weekday: Vec<f64> = Vec::new();
    let mut hour: Vec<f64> = Vec::new();

    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut cursor = LineCursor { words: line.split_whitespace(), path, line_no };
        let keyword = cursor.word("record keyword")?;
        match keyword {
            "origin" => {
                let lon: f64 = cursor.num("lon")?;
                let lat: f64 = cursor.num("lat")?;
                origin = Some(GeoPoint::new(lon, lat)?);
            }
            "clusters" => {
                k = cursor.num("cluster count")?;
            }
            "cluster" => {
                let index: usize = cursor.num("cluster index")?;
                if index != clusters.len() + 1 {
                    return Err(cursor.bad("cluster records out of order"));
                }
                cursor.literal("members")?;
                let members = cursor.num("members")?;
                cursor.literal("ntrain")?;
                let n_train = cursor.num("ntrain")?;
                cursor.literal("loglik")?;
                let loglik = cursor.num("loglik")?;
                cursor.literal("dest")?;
                let dx: f64 = cursor.num("dest x")?;
                let dy: f64 = cursor.num("dest y")?;
                cursor.literal("components")?;
                let declared = cursor.num("component count")?;
                clusters.push(ClusterParts {
                    members,
                    n_train,
                    loglik,
                    dest: PlanarPoint::new(dx, dy),
                    declared_components: declared,
                    components: Vec::with_capacity(declared),
                });
            }
            "component" => {
                let m: usize = cursor.num("cluster index")?;
                let _j: usize = cursor.num("component index")?;
                cursor.literal("weight")?;
                let weight = cursor.num("weight")?;
                cursor.literal("mean")?;
                let mx: f64 = cursor.num("mean x")?;
                let my: f64 = cursor.num("mean y")?;
                cursor.literal("cov")?;
                let xx: f64 = cursor.num("cov xx")?;
                let xy: f64 = cursor.num("cov xy")?;
                let yy: f64 = cursor.num("cov yy")?;
                let component = GaussianComponent::new(
                    weight,
                    PlanarPoint::new(mx, my),
                    Covariance::new(xx, xy, yy),
                )?;
                clusters
                    .get_mut(m.wrapping_sub(1))
                    .ok_or_else(|| cursor.bad("component before its cluster"))?
                    .components
                    .push(component);
            }
            "emp" => {
                let m: usize = cursor.num("cluster index")?;
                if m != emp.len() + 1 {
                    return Err(cursor.bad("emp records out of order"));
                }
                emp.push(cursor.num("value")?);
            }
            "weekday" => {
                let _d: u8 = cursor.num("weekday")?;
                let _m: usize = cursor.num("cluster index")?;
                weekday.push(cursor.num("value")?);
            }
            "hour" => {
                let _h: u8 = cursor.num("hour")?;
                let _m: usize = cursor.num("cluster index")?;
                hour.push(cursor.num("value")?);
            }
            other => return Err(cursor.bad(&format!("unknown record {other:?}"))),
        }
    }

    let origin = origin.ok_or_else(|| data_err(path, "missing origin record"))?;
    if clusters.len() != k {
        return Err(data_err(path, format!("found {} clusters, declared {k}", clusters.len())));
    }
    let clusters: Vec<ClusterModel> = clusters
        .into_iter()
        .enumerate()
        .map(|(m, parts)| {
            if parts.components.len() != parts.declared_components {
                return Err(data_err(
                    path,
                    format!(
                        "cluster {}: {} components, declared {}",
                        m + 1,
                        parts.components.len(),
                        parts.declared_components
                    ),
                ));
            }
            let mixture = MixtureModel::new(parts.components, parts.loglik, parts.n_train)?;
            Ok(ClusterModel {
                mixture,
                mean_destination: parts.dest,
                member_count: parts.members,
            })
        })
        .collect::<Result<_>>()?;
    let tables = WeightTables::from_rows(emp, weekday, hour)?;
    FlowModel::new(origin, clusters, tables).map_err(CliError::from)
}

// ---------------------------------------------------------------------------
// Predictions (CSV)
// ---------------------------------------------------------------------------

/// One prediction query result; both rules are always recorded, `rule`
/// marks which one `pred_lon`/`pred_lat` carry.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub id: String,
    pub completion: f64,
    pub rule: u8,
    pub top_cluster_dest: GeoPoint,
    pub weighted_dest: GeoPoint,
    /// Up to three `(0-based cluster, normalized score)` pairs, best first.
    pub top3: Vec<(usize, f64)>,
}

impl PredictionRecord {
    pub fn chosen_dest(&self) -> GeoPoint {
        if self.rule == 1 {
            self.top_cluster_dest
        } else {
            self.weighted_dest
        }
    }
}

const PREDICTION_HEADER: &str = "id,completion,rule,pred_lon,pred_lat,rule1_lon,rule1_lat,\
rule2_lon,rule2_lat,top1,top1_score,top2,top2_score,top3,top3_score";

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{PREDICTION_HEADER}")?;
    for r in records {
        check_id(&r.id)?;
        let chosen = r.chosen_dest();
        write!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.id,
            r.completion,
            r.rule,
            chosen.lon,
            chosen.lat,
            r.top_cluster_dest.lon,
            r.top_cluster_dest.lat,
            r.weighted_dest.lon,
            r.weighted_dest.lat,
        )?;
        for slot in 0..3 {
            match r.top3.get(slot) {
                Some(&(m, score)) => write!(out, ",{},{}", m + 1, score)?,
                None => write!(out, ",,")?,
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines();
    match lines.next() {
        Some(h) if h == PREDICTION_HEADER => {}
        _ => return Err(data_err(path, "not a predictions file (bad header)")),
    }
    let mut records = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(data_err(path, format!("line {}: expected 15 fields", line_no + 2)));
        }
        let bad = |what: &str| data_err(path, format!("line {}: bad {what}", line_no + 2));
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| bad(what))
        };
        let mut top3 = Vec::new();
        for slot in 0..3 {
            let cluster = fields[9 + slot * 2];
            if cluster.is_empty() {
                continue;
            }
            let m: usize = cluster.parse().map_err(|_| bad("top cluster"))?;
            let score = parse_f(fields[10 + slot * 2], "top score")?;
            top3.push((m - 1, score));
        }
        records.push(PredictionRecord {
            id: fields[0].to_string(),
            completion: parse_f(fields[1], "completion")?,
            rule: fields[2].parse().map_err(|_| bad("rule"))?,
            top_cluster_dest: GeoPoint::new(
                parse_f(fields[5], "rule1 lon")?,
                parse_f(fields[6], "rule1 lat")?,
            )?,
            weighted_dest: GeoPoint::new(
                parse_f(fields[7], "rule2 lon")?,
                parse_f(fields[8], "rule2 lat")?,
            )?,
            top3,
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Evaluation report (long CSV) + per-cluster ROC files
// ---------------------------------------------------------------------------

/// Long-format report: one `p,metric,flags,rule,value` row per measurement.
pub fn write_eval_report(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "p,metric,flags,rule,value")?;
    for (fi, &flags) in report.flag_sets.iter().enumerate() {
        let name = flags_name(flags);
        for (pi, &p) in report.completion_grid.iter().enumerate() {
            let m = &report.metrics[fi][pi];
            writeln!(out, "{p},q_class,{name},,{}", m.q_class)?;
            writeln!(out, "{p},best2,{name},,{}", m.best2)?;
            writeln!(out, "{p},best3,{name},,{}", m.best3)?;
            writeln!(out, "{p},q_pred,{name},1,{}", m.q_pred_top_km)?;
            writeln!(out, "{p},q_pred,{name},2,{}", m.q_pred_weighted_km)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One `<stem>_roc_cluster_NN.csv` per cluster next to the report (or in
/// `roc_dir` when given). Degenerate clusters are written with an
/// `undefined` AUC marker and no curve rows.
pub fn write_roc_files(
    report_path: &Path,
    roc_dir: Option<&Path>,
    report: &EvalReport,
) -> Result<Vec<PathBuf>> {
    let stem = report_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report")
        .to_string();
    let dir = roc_dir
        .map(Path::to_path_buf)
        .or_else(|| report_path.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for (m, curve) in report.roc.iter().enumerate() {
        let file = dir.join(format!("{stem}_roc_cluster_{:02}.csv", m + 1));
        let mut out = BufWriter::new(fs::File::create(&file)?);
        match curve {
            Some(curve) => {
                writeln!(out, "# auc {}", curve.auc)?;
                writeln!(out, "threshold,fpr,tpr")?;
                for point in &curve.points {
                    writeln!(
                        out,
                        "{},{},{}",
                        point.threshold, point.false_positive_rate, point.true_positive_rate
                    )?;
                }
            }
            None => {
                writeln!(out, "# auc undefined")?;
                writeln!(out, "threshold,fpr,tpr")?;
            }
        }
        out.flush()?;
        written.push(file);
    }
    Ok(written)
}

/// Map a prediction ranking to the CSV's top-3 representation.
pub fn top3_from_ranking(ranking: &[usize], normalized: &[f64]) -> Vec<(usize, f64)> {
    ranking.iter().take(3).map(|&m| (m, normalized[m])).collect()
}

/// Canonical flag spellings used in report files, e.g. `none`,
/// `emp+weekday`, `emp+weekday+hour`.
pub fn eval_flag_label(flags: WeightFlags) -> String {
    flags_name(flags)
}
