//! Shared helpers for unit tests.

use alloc::vec::Vec;

use crate::geometry::{GeoPoint, PlanarPoint, Trajectory};

pub(crate) const TEST_ORIGIN: GeoPoint = GeoPoint { lon: -8.61, lat: 41.15 };

/// Trajectory from bare planar coordinates with 15 s synthetic timestamps.
pub(crate) fn traj_from_xy(id: &str, xy: &[(f64, f64)]) -> Trajectory {
    let points: Vec<PlanarPoint> = xy.iter().map(|&(x, y)| PlanarPoint::new(x, y)).collect();
    let times: Vec<i64> = (0..xy.len() as i64).map(|i| i * 15).collect();
    Trajectory::from_planar(id, points, times, TEST_ORIGIN).unwrap()
}

/// Like [`traj_from_xy`] but with an explicit start epoch, for tests that
/// exercise the hour/weekday context tables.
pub(crate) fn traj_from_xy_at(id: &str, xy: &[(f64, f64)], start_epoch: i64) -> Trajectory {
    let points: Vec<PlanarPoint> = xy.iter().map(|&(x, y)| PlanarPoint::new(x, y)).collect();
    let times: Vec<i64> = (0..xy.len() as i64).map(|i| start_epoch + i * 15).collect();
    Trajectory::from_planar(id, points, times, TEST_ORIGIN).unwrap()
}
