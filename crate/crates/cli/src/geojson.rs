//! GeoJSON renderings of pipeline artifacts: trajectories colored by
//! cluster, mixture components as confidence ellipses, and predicted
//! destinations with their scores.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};
use trajflow_core::clustering::ClusterAssignment;
use trajflow_core::geometry::{unproject, PlanarPoint};
use trajflow_core::scoring::FlowModel;

use crate::formats::PredictionRecord;
use crate::ingest::RawTrajectory;
use crate::Result;

const ELLIPSE_VERTICES: usize = 64;

/// LineString features, one per trajectory, optionally tagged with 1-based
/// cluster labels.
pub fn trajectory_features(
    ts: &[RawTrajectory],
    labels: Option<&ClusterAssignment>,
) -> Vec<Value> {
    ts.iter()
        .enumerate()
        .map(|(i, t)| {
            let coordinates: Vec<Value> =
                t.points.iter().map(|&(g, _)| json!([g.lon, g.lat])).collect();
            let mut properties = Map::new();
            properties.insert("id".into(), json!(t.id));
            properties.insert("start_epoch".into(), json!(t.start_epoch()));
            if let Some(labels) = labels {
                properties.insert("cluster".into(), json!(labels.cluster_of(i) + 1));
            }
            feature(json!({ "type": "LineString", "coordinates": coordinates }), properties)
        })
        .collect()
}

/// Model features: each cluster's mean destination as a point plus 1-sigma
/// and 2-sigma ellipses for every mixture component.
pub fn model_features(model: &FlowModel) -> Vec<Value> {
    let mut features = Vec::new();
    for (m, cluster) in model.clusters().iter().enumerate() {
        let dest = unproject(cluster.mean_destination, model.origin());
        let mut properties = Map::new();
        properties.insert("kind".into(), json!("mean_destination"));
        properties.insert("cluster".into(), json!(m + 1));
        properties.insert("members".into(), json!(cluster.member_count));
        features.push(feature(
            json!({ "type": "Point", "coordinates": [dest.lon, dest.lat] }),
            properties,
        ));

        for (j, comp) in cluster.mixture.components().iter().enumerate() {
            for sigma in [1.0, 2.0] {
                let ring = ellipse_ring(model, comp.mean(), comp.covariance(), sigma);
                let mut properties = Map::new();
                properties.insert("kind".into(), json!("component_ellipse"));
                properties.insert("cluster".into(), json!(m + 1));
                properties.insert("component".into(), json!(j + 1));
                properties.insert("weight".into(), json!(comp.weight()));
                properties.insert("sigma".into(), json!(sigma));
                features.push(feature(
                    json!({ "type": "Polygon", "coordinates": [ring] }),
                    properties,
                ));
            }
        }
    }
    features
}

/// Point features for prediction records, carrying the chosen rule and the
/// top clusters with their normalized scores.
pub fn prediction_features(records: &[PredictionRecord]) -> Vec<Value> {
    records
        .iter()
        .map(|r| {
            let dest = r.chosen_dest();
            let mut properties = Map::new();
            properties.insert("kind".into(), json!("predicted_destination"));
            properties.insert("id".into(), json!(r.id));
            properties.insert("completion".into(), json!(r.completion));
            properties.insert("rule".into(), json!(r.rule));
            let top: Vec<Value> = r
                .top3
                .iter()
                .map(|&(m, s)| json!({ "cluster": m + 1, "score": s }))
                .collect();
            properties.insert("top_clusters".into(), json!(top));
            feature(json!({ "type": "Point", "coordinates": [dest.lon, dest.lat] }), properties)
        })
        .collect()
}

/// Wrap features into a FeatureCollection and write it.
pub fn write_feature_collection(path: &Path, features: Vec<Value>) -> Result<()> {
    let collection = json!({ "type": "FeatureCollection", "features": features });
    fs::write(path, serde_json::to_string_pretty(&collection)? + "\n")?;
    Ok(())
}

impl From<serde_json::Error> for crate::CliError {
    fn from(e: serde_json::Error) -> Self {
        crate::CliError::Data(format!("json: {e}"))
    }
}

fn feature(geometry: Value, properties: Map<String, Value>) -> Value {
    json!({ "type": "Feature", "geometry": geometry, "properties": properties })
}

/// Closed ring approximating the `sigma`-level covariance ellipse around a
/// planar mean, in lon/lat coordinates.
fn ellipse_ring(
    model: &FlowModel,
    mean: PlanarPoint,
    cov: trajflow_core::gmm::Covariance,
    sigma: f64,
) -> Vec<Value> {
    let ((vx, vy), l1, l2) = cov.principal_axes();
    let a = sigma * l1.max(0.0).sqrt();
    let b = sigma * l2.max(0.0).sqrt();
    let mut ring = Vec::with_capacity(ELLIPSE_VERTICES + 1);
    for i in 0..=ELLIPSE_VERTICES {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / ELLIPSE_VERTICES as f64;
        let (c, s) = (phi.cos(), phi.sin());
        let point = PlanarPoint::new(
            mean.x + a * c * vx - b * s * vy,
            mean.y + a * c * vy + b * s * vx,
        );
        let g = unproject(point, model.origin());
        ring.push(json!([g.lon, g.lat]));
    }
    ring
}
