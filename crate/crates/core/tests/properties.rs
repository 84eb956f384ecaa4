//! Property tests for the distance, scoring, and evaluation invariants.

use proptest::prelude::*;
use trajflow_core::geometry::{
    self, haversine, point_to_segment, point_to_trajectory, prefix, spd, sspd, GeoPoint,
    PlanarPoint, PrefixFraction, Segment, Trajectory,
};
use trajflow_core::scoring::ScoreVector;

const TEST_ORIGIN: GeoPoint = GeoPoint { lon: -8.61, lat: 41.15 };

fn traj(xy: Vec<(f64, f64)>) -> Trajectory {
    let points: Vec<PlanarPoint> = xy.iter().map(|&(x, y)| PlanarPoint::new(x, y)).collect();
    let times: Vec<i64> = (0..xy.len() as i64).map(|i| i * 15).collect();
    Trajectory::from_planar("p", points, times, TEST_ORIGIN).unwrap()
}

fn coord() -> impl Strategy<Value = (f64, f64)> {
    (-5_000.0..5_000.0f64, -5_000.0..5_000.0f64)
}

fn trajectory_strategy() -> impl Strategy<Value = Trajectory> {
    prop::collection::vec(coord(), 2..12).prop_map(traj)
}

fn geo_point() -> impl Strategy<Value = GeoPoint> {
    (-180.0..180.0f64, -89.0..89.0f64).prop_map(|(lon, lat)| GeoPoint { lon, lat })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sspd_symmetric_identity_nonnegative(a in trajectory_strategy(), b in trajectory_strategy()) {
        let ab = sspd(&a, &b);
        let ba = sspd(&b, &a);
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(sspd(&a, &a), 0.0);
        prop_assert_eq!(spd(&a, &a), 0.0);
        prop_assert!(spd(&a, &b) >= 0.0);
    }

    #[test]
    fn point_to_segment_bounded_by_endpoints(
        (px, py) in coord(),
        (ax, ay) in coord(),
        (bx, by) in coord(),
    ) {
        let p = PlanarPoint::new(px, py);
        let a = PlanarPoint::new(ax, ay);
        let b = PlanarPoint::new(bx, by);
        let d = point_to_segment(p, Segment::new(a, b));
        prop_assert!(d <= p.distance(&a).min(p.distance(&b)) + 1e-9);
        prop_assert!(d >= 0.0);
    }

    #[test]
    fn point_to_trajectory_shrinks_as_segments_are_added(
        xy in prop::collection::vec(coord(), 3..10),
        (px, py) in coord(),
    ) {
        let p = PlanarPoint::new(px, py);
        let full = traj(xy.clone());
        for n in 2..xy.len() {
            let shorter = traj(xy[..n].to_vec());
            prop_assert!(point_to_trajectory(p, &full) <= point_to_trajectory(p, &shorter) + 1e-12);
        }
    }

    #[test]
    fn prefixes_are_nested(t in trajectory_strategy(), p1 in 0.0..1.0f64, p2 in 0.0..1.0f64) {
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let a = prefix(&t, PrefixFraction::new(lo).unwrap());
        let b = prefix(&t, PrefixFraction::new(hi).unwrap());
        prop_assert!(a.point_count() <= b.point_count());
        prop_assert_eq!(a.points(), &b.points()[..a.point_count()]);
    }

    #[test]
    fn haversine_is_a_metric_on_random_triples(
        a in geo_point(),
        b in geo_point(),
        c in geo_point(),
    ) {
        prop_assert_eq!(haversine(a, b), haversine(b, a));
        prop_assert!(haversine(a, b) >= 0.0);
        // Triangle inequality with slack for the float trig.
        prop_assert!(haversine(a, c) <= haversine(a, b) + haversine(b, c) + 1e-6);
    }

    #[test]
    fn projection_round_trip_is_submeter(
        dlon in -0.3..0.3f64,
        dlat in -0.3..0.3f64,
    ) {
        let g = GeoPoint { lon: TEST_ORIGIN.lon + dlon, lat: TEST_ORIGIN.lat + dlat };
        let p = geometry::project(g, TEST_ORIGIN).unwrap();
        let back = geometry::unproject(p, TEST_ORIGIN);
        prop_assert!(haversine(g, back) * 1000.0 < 1.0);
    }

    #[test]
    fn score_normalization_is_shift_invariant(
        scores in prop::collection::vec(-500.0..0.0f64, 1..8),
        shift in -100.0..100.0f64,
    ) {
        let base = ScoreVector::from_log_scores(scores.clone());
        let shifted = ScoreVector::from_log_scores(scores.iter().map(|s| s + shift).collect());
        let total: f64 = base.normalized().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for (x, y) in base.normalized().iter().zip(shifted.normalized()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
