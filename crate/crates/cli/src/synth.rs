//! Synthetic benchmark city: known traffic flows fanning out from a shared
//! origin, for oracle-based end-to-end tests.

use trajflow_core::geometry::{unproject, GeoPoint, PlanarPoint};
use trajflow_core::rng::Rng;

use crate::ingest::RawTrajectory;
use crate::{CliError, Result};

/// Parameters of the generated city.
#[derive(Debug, Clone)]
pub struct SyntheticCitySpec {
    /// Number of flows (ground-truth trajectory clusters).
    pub flows: usize,
    pub trajectories_per_flow: usize,
    /// Way-points per flow path (the polyline has this many bends).
    pub waypoints: usize,
    /// Isotropic GPS noise added to every sample, meters.
    pub noise_sigma_m: f64,
    /// Arc-length distance between consecutive samples, meters.
    pub step_m: f64,
    /// Total path length of each flow, meters.
    pub path_length_m: f64,
    pub seed: u64,
    /// Geographic location of the shared departure point.
    pub origin: GeoPoint,
}

impl Default for SyntheticCitySpec {
    fn default() -> Self {
        SyntheticCitySpec {
            flows: 3,
            trajectories_per_flow: 200,
            waypoints: 4,
            noise_sigma_m: 20.0,
            step_m: 100.0,
            path_length_m: 3_000.0,
            seed: 7,
            origin: GeoPoint { lon: -8.61, lat: 41.15 },
        }
    }
}

impl SyntheticCitySpec {
    fn validate(&self) -> Result<()> {
        let ok = self.flows > 0
            && self.trajectories_per_flow > 0
            && self.waypoints > 0
            && self.noise_sigma_m >= 0.0
            && self.step_m > 0.0
            && self.path_length_m > self.step_m;
        if ok {
            Ok(())
        } else {
            Err(CliError::Usage("synthetic city parameters must be positive".into()))
        }
    }
}

/// Generate the city: returns the trajectories and each one's generating
/// flow index (0-based). Deterministic under the spec's seed.
pub fn synth_city(spec: &SyntheticCitySpec) -> Result<(Vec<RawTrajectory>, Vec<usize>)> {
    spec.validate()?;
    spec.origin.validate()?;
    let rng = Rng::seed_from_u64(spec.seed);

    // Flow center lines fan out from the origin across a 150 degree arc.
    let paths: Vec<Vec<PlanarPoint>> = (0..spec.flows)
        .map(|f| {
            let bearing = if spec.flows == 1 {
                0.0
            } else {
                (-75.0 + 150.0 * f as f64 / (spec.flows - 1) as f64).to_radians()
            };
            flow_path(spec, bearing, &mut rng.fork(f as u64))
        })
        .collect();

    let week_s = 7 * 86_400;
    let base_epoch = 1_388_534_400i64; // 2014-01-01 00:00 UTC
    let mut trajectories = Vec::with_capacity(spec.flows * spec.trajectories_per_flow);
    let mut labels = Vec::with_capacity(trajectories.capacity());
    for (f, path) in paths.iter().enumerate() {
        let mut flow_rng = rng.fork(1_000 + f as u64);
        for i in 0..spec.trajectories_per_flow {
            let start = base_epoch + (flow_rng.next_u64() % (2 * week_s as u64)) as i64;
            let samples = sample_path(path, spec.step_m);
            let points = samples
                .into_iter()
                .enumerate()
                .map(|(j, p)| {
                    let noisy = PlanarPoint::new(
                        p.x + spec.noise_sigma_m * flow_rng.next_normal(),
                        p.y + spec.noise_sigma_m * flow_rng.next_normal(),
                    );
                    (unproject(noisy, spec.origin), start + j as i64 * 15)
                })
                .collect();
            trajectories.push(RawTrajectory { id: format!("flow{f}_trip{i}"), points });
            labels.push(f);
        }
    }
    Ok((trajectories, labels))
}

/// Fraction of every path shared by all flows before they branch, like the
/// street leading away from a station. Early prefixes are therefore
/// genuinely ambiguous.
const TRUNK_FRACTION: f64 = 0.15;

/// A flow center line: the common trunk northward, then a gently bending
/// branch along `bearing`.
fn flow_path(spec: &SyntheticCitySpec, bearing: f64, rng: &mut Rng) -> Vec<PlanarPoint> {
    let trunk_len = TRUNK_FRACTION * spec.path_length_m;
    let fork = PlanarPoint::new(0.0, trunk_len);
    let mut points = vec![PlanarPoint::new(0.0, 0.0), fork];
    let dir = (bearing.sin(), bearing.cos()); // east, north
    let lateral = (dir.1, -dir.0);
    let leg = (spec.path_length_m - trunk_len) / spec.waypoints as f64;
    for w in 1..=spec.waypoints {
        let along = leg * w as f64;
        // Bend amplitude grows with distance but stays well under the
        // inter-flow separation.
        let bend = (rng.next_f64() - 0.5) * 0.2 * along;
        points.push(PlanarPoint::new(
            fork.x + along * dir.0 + bend * lateral.0,
            fork.y + along * dir.1 + bend * lateral.1,
        ));
    }
    points
}

/// Sample a polyline at fixed arc-length steps, keeping the final vertex.
fn sample_path(path: &[PlanarPoint], step_m: f64) -> Vec<PlanarPoint> {
    let total: f64 = path.windows(2).map(|w| w[0].distance(&w[1])).sum();
    let mut samples = Vec::new();
    let mut target = 0.0;
    while target < total {
        samples.push(point_at(path, target));
        target += step_m;
    }
    samples.push(path[path.len() - 1]);
    samples
}

fn point_at(path: &[PlanarPoint], arc: f64) -> PlanarPoint {
    let mut remaining = arc;
    for w in path.windows(2) {
        let len = w[0].distance(&w[1]);
        if remaining <= len {
            if len == 0.0 {
                return w[0];
            }
            let t = remaining / len;
            return PlanarPoint::new(
                w[0].x + t * (w[1].x - w[0].x),
                w[0].y + t * (w[1].y - w[0].y),
            );
        }
        remaining -= len;
    }
    path[path.len() - 1]
}
