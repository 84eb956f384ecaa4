//! Ward linkage against a from-scratch agglomerator.
//!
//! The oracle recomputes every cluster-to-cluster Ward distance at every
//! step directly from the original dissimilarity matrix using the closed
//! form over member pairs, never the recursive update. Merge sequences must
//! agree exactly in structure and to float tolerance in height.

use trajflow_core::clustering::{pairwise_distances, ward_linkage, DistanceMatrix, Merge};
use trajflow_core::geometry::{PlanarPoint, Trajectory};
use trajflow_core::rng::Rng;

const TEST_ORIGIN: trajflow_core::GeoPoint = trajflow_core::GeoPoint { lon: -8.61, lat: 41.15 };

fn random_trajectories(rng: &mut Rng, n: usize) -> Vec<Trajectory> {
    (0..n)
        .map(|i| {
            let len = 2 + rng.gen_range(5);
            let points: Vec<PlanarPoint> = (0..len)
                .map(|_| PlanarPoint::new(rng.next_f64() * 2000.0, rng.next_f64() * 2000.0))
                .collect();
            let times: Vec<i64> = (0..len as i64).map(|j| j * 15).collect();
            Trajectory::from_planar(format!("t{i}"), points, times, TEST_ORIGIN).unwrap()
        })
        .collect()
}

/// Squared Ward distance between clusters from the original matrix alone:
/// `(|A||B|/(|A|+|B|)) (2·mean(d²(A,B)) − mean(d²(A,A)) − mean(d²(B,B)))`.
fn ward_sq_from_scratch(d: &DistanceMatrix, a: &[usize], b: &[usize]) -> f64 {
    let pair_sum = |xs: &[usize], ys: &[usize]| -> f64 {
        let mut total = 0.0;
        for &x in xs {
            for &y in ys {
                let v = d.get(x, y);
                total += v * v;
            }
        }
        total
    };
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let s_ab = pair_sum(a, b);
    let s_aa = pair_sum(a, a);
    let s_bb = pair_sum(b, b);
    (na * nb / (na + nb)) * (2.0 * s_ab / (na * nb) - s_aa / (na * na) - s_bb / (nb * nb))
}

/// O(n^4) agglomerator: every step rescans all active cluster pairs with
/// the closed form, lowest slot pair wins ties.
fn brute_force_ward(d: &DistanceMatrix) -> Vec<Merge> {
    let n = d.observations();
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut node_ids: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let active: Vec<usize> =
            (0..n).filter(|&i| members[i].is_some()).collect();
        let mut best = f64::INFINITY;
        let (mut bi, mut bj) = (0, 0);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let v = ward_sq_from_scratch(
                    d,
                    members[i].as_ref().unwrap(),
                    members[j].as_ref().unwrap(),
                );
                if v < best {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        let absorbed = members[bj].take().unwrap();
        let keep = members[bi].as_mut().unwrap();
        keep.extend(absorbed);
        let size = keep.len();
        let (left, right) = if node_ids[bi] < node_ids[bj] {
            (node_ids[bi], node_ids[bj])
        } else {
            (node_ids[bj], node_ids[bi])
        };
        merges.push(Merge { left, right, height: best.max(0.0).sqrt(), size });
        node_ids[bi] = n + step;
    }
    merges
}

fn assert_same_sequence(got: &[Merge], want: &[Merge], context: &str) {
    assert_eq!(got.len(), want.len(), "{context}: merge counts differ");
    for (step, (g, w)) in got.iter().zip(want).enumerate() {
        assert_eq!(
            (g.left, g.right, g.size),
            (w.left, w.right, w.size),
            "{context}: structure differs at step {step}"
        );
        let tol = 1e-10 * g.height.abs().max(w.height.abs()).max(1e-9);
        assert!(
            (g.height - w.height).abs() <= tol,
            "{context}: heights differ at step {step}: {} vs {}",
            g.height,
            w.height
        );
    }
}

#[test]
fn linkage_matches_brute_force_on_random_trajectory_sets() {
    let mut rng = Rng::seed_from_u64(2024);
    for instance in 0..20 {
        let n = 3 + rng.gen_range(6); // 3..=8
        let ts = random_trajectories(&mut rng, n);
        let d = pairwise_distances(&ts).unwrap();
        let got = ward_linkage(&d);
        let want = brute_force_ward(&d);
        assert_same_sequence(got.merges(), &want, &format!("instance {instance} (n={n})"));
    }
}

#[test]
fn linkage_matches_brute_force_on_random_matrices() {
    let mut rng = Rng::seed_from_u64(77);
    for instance in 0..20 {
        let n = 2 + rng.gen_range(7);
        let values: Vec<f64> =
            (0..n * (n - 1) / 2).map(|_| rng.next_f64() * 50.0).collect();
        let d = DistanceMatrix::from_condensed(n, values).unwrap();
        let got = ward_linkage(&d);
        let want = brute_force_ward(&d);
        assert_same_sequence(got.merges(), &want, &format!("instance {instance} (n={n})"));
    }
}

#[test]
fn brute_force_agrees_on_duplicate_observations() {
    // Two identical trajectories merge first at height zero.
    let d = DistanceMatrix::from_condensed(3, vec![0.0, 5.0, 5.0]).unwrap();
    let got = ward_linkage(&d);
    let want = brute_force_ward(&d);
    assert_same_sequence(got.merges(), &want, "duplicates");
    assert_eq!(got.merges()[0].height, 0.0);
}
