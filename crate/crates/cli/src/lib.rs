//! Dataset ingestion, synthetic benchmark generation, file formats, and the
//! command-line pipeline around [`trajflow_core`].
//!
//! The pipeline is file-based and restartable at every stage:
//!
//! ```text
//! ingest/synth -> trajectories.tsv
//! distances    -> distances.bin      (condensed SSPD matrix)
//! cluster      -> labels.tsv         (dendrogram cut at K)
//! fit          -> model.txt          (per-cluster mixtures + weights)
//! predict      -> predictions.csv    (+ optional GeoJSON)
//! evaluate     -> report.csv         (+ one ROC CSV per cluster)
//! export       -> .geojson           (map rendering of any artifact)
//! ```

pub mod cli;
pub mod config;
pub mod formats;
pub mod geojson;
pub mod ingest;
pub mod synth;

use trajflow_core::geometry::{GeoPoint, Trajectory};

pub use ingest::{parse_cabspotting, parse_porto, BoundingBox, DatasetSpec, RawTrajectory};
pub use synth::{synth_city, SyntheticCitySpec};

/// Errors from the pipeline; the variant picks the process exit code
/// (usage errors exit 1, data errors exit 2).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(#[from] trajflow_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Mean of every fix over the whole data set; the planar reference origin.
pub fn dataset_centroid(raw: &[RawTrajectory]) -> Result<GeoPoint> {
    let mut lon = 0.0;
    let mut lat = 0.0;
    let mut count = 0usize;
    for t in raw {
        for &(g, _) in &t.points {
            lon += g.lon;
            lat += g.lat;
            count += 1;
        }
    }
    if count == 0 {
        return Err(CliError::Data("no points to take a centroid over".into()));
    }
    GeoPoint::new(lon / count as f64, lat / count as f64).map_err(CliError::from)
}

/// Project raw trajectories into the planar frame around the dataset
/// centroid. Returns the trajectories and the origin used.
pub fn project_about_centroid(raw: &[RawTrajectory]) -> Result<(Vec<Trajectory>, GeoPoint)> {
    let origin = dataset_centroid(raw)?;
    Ok((project_about(raw, origin)?, origin))
}

/// Project raw trajectories around a fixed origin (e.g. a trained model's).
pub fn project_about(raw: &[RawTrajectory], origin: GeoPoint) -> Result<Vec<Trajectory>> {
    raw.iter()
        .map(|r| Trajectory::from_geo(r.id.clone(), &r.points, origin).map_err(CliError::from))
        .collect()
}
