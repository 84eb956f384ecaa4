//! Pairwise SSPD matrix and agglomerative hierarchical clustering with Ward
//! linkage.
//!
//! Ward linkage is generalized to the (non-Euclidean) SSPD dissimilarity via
//! the Lance–Williams recurrence on squared dissimilarities, matching the
//! behaviour of common statistical software. When clusters `a` and `b` of
//! sizes `n_a`, `n_b` merge, the squared distance to any cluster `c` becomes
//!
//! ```text
//! ((n_a + n_c)·d²(a,c) + (n_b + n_c)·d²(b,c) − n_c·d²(a,b)) / (n_a + n_b + n_c)
//! ```
//!
//! Each step merges the closest active pair; exact ties go to the lowest
//! `(i, j)` slot pair, so identical inputs always give identical dendrograms.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{sspd, Trajectory};
use crate::math;
use crate::{Error, Result};

/// Condensed symmetric matrix of pairwise distances over `n` trajectories.
///
/// Only the upper triangle is stored, row-major: entry `(i, j)` with `i < j`
/// lives at `n·i − i·(i+1)/2 + (j − i − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Wrap an existing condensed value buffer. The length must be
    /// `n·(n−1)/2` and every entry non-negative.
    pub fn from_condensed(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewTrajectories { have: n, need: 2 });
        }
        let expected = n * (n - 1) / 2;
        if values.len() != expected {
            return Err(Error::LengthMismatch { left: values.len(), right: expected });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig("distances must be finite and non-negative"));
        }
        Ok(DistanceMatrix { n, values })
    }

    /// Number of observations.
    pub fn observations(&self) -> usize {
        self.n
    }

    /// Distance between observations `i` and `j` (zero on the diagonal).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.values[condensed_index(self.n, i.min(j), i.max(j))]
        }
    }

    /// The condensed upper-triangular buffer.
    pub fn condensed(&self) -> &[f64] {
        &self.values
    }
}

#[inline]
fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

/// Compute the condensed pairwise SSPD matrix over a trajectory set.
///
/// Entries are independent of each other, so the result is deterministic
/// regardless of evaluation order.
pub fn pairwise_distances(ts: &[Trajectory]) -> Result<DistanceMatrix> {
    if ts.len() < 2 {
        return Err(Error::TooFewTrajectories { have: ts.len(), need: 2 });
    }
    let n = ts.len();
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            values.push(sspd(&ts[i], &ts[j]));
        }
    }
    Ok(DistanceMatrix { n, values })
}

/// One agglomeration step: clusters `left` and `right` merge at `height`
/// into a cluster of `size` observations.
///
/// Node ids follow the usual stepwise convention: `0..n` are the original
/// observations, and the cluster formed at step `s` gets id `n + s`.
/// `left < right` always.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// A stepwise dendrogram: `n − 1` merges over `n` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    observations: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }
}

/// Agglomerative clustering of a dissimilarity matrix under Ward linkage.
///
/// Merge heights are non-decreasing: the recurrence keeps every updated
/// distance at or above the current minimum, for any input dissimilarity.
pub fn ward_linkage(d: &DistanceMatrix) -> Dendrogram {
    let n = d.n;
    // Work on squared dissimilarities; heights are square roots.
    let mut work: Vec<f64> = d.values.iter().map(|v| v * v).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut node_ids: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut min_sq = f64::INFINITY;
        let (mut si, mut sj) = (0, 0);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let v = work[condensed_index(n, i, j)];
                if v < min_sq {
                    min_sq = v;
                    si = i;
                    sj = j;
                }
            }
        }

        let merged_sq = min_sq;
        for &c in &active {
            if c == si || c == sj {
                continue;
            }
            let d_ic = work[condensed_index(n, si.min(c), si.max(c))];
            let d_jc = work[condensed_index(n, sj.min(c), sj.max(c))];
            let (na, nb, nc) = (sizes[si] as f64, sizes[sj] as f64, sizes[c] as f64);
            let updated =
                ((na + nc) * d_ic + (nb + nc) * d_jc - nc * merged_sq) / (na + nb + nc);
            work[condensed_index(n, si.min(c), si.max(c))] = updated.max(0.0);
        }

        sizes[si] += sizes[sj];
        let (left, right) = if node_ids[si] < node_ids[sj] {
            (node_ids[si], node_ids[sj])
        } else {
            (node_ids[sj], node_ids[si])
        };
        merges.push(Merge {
            left,
            right,
            height: math::sqrt(merged_sq.max(0.0)),
            size: sizes[si],
        });
        node_ids[si] = n + step;
        let pos = active.iter().position(|&a| a == sj).expect("sj is active");
        active.remove(pos);
    }

    Dendrogram { observations: n, merges }
}

/// A flat partition of trajectories into `k` clusters.
///
/// Labels are 0-based cluster indices, assigned in order of each cluster's
/// first member. Every cluster is non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    labels: Vec<u32>,
    k: usize,
}

impl ClusterAssignment {
    /// Wrap externally produced labels, checking that every label is in
    /// `0..k` and every cluster has at least one member.
    pub fn from_labels(labels: Vec<u32>, k: usize) -> Result<Self> {
        if k == 0 || k > labels.len() {
            return Err(Error::ClusterCountOutOfRange { k, n: labels.len() });
        }
        let mut seen = vec![false; k];
        for &l in &labels {
            if (l as usize) >= k {
                return Err(Error::ClusterCountOutOfRange { k: l as usize, n: k });
            }
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::EmptyCluster { cluster: missing });
        }
        Ok(ClusterAssignment { labels, k })
    }

    /// Number of clusters.
    pub fn cluster_count(&self) -> usize {
        self.k
    }

    /// 0-based cluster index of trajectory `i`.
    pub fn cluster_of(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Per-trajectory labels.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Indices of the trajectories in cluster `m`.
    pub fn members(&self, m: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l as usize == m)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Cut a dendrogram into `k` clusters by undoing the last `k − 1` merges.
pub fn cut(dend: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = dend.observations;
    if k < 1 || k > n {
        return Err(Error::ClusterCountOutOfRange { k, n });
    }
    // Union-find over node ids; apply the first n − k merges.
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (step, merge) in dend.merges[..n - k].iter().enumerate() {
        let new_id = n + step;
        let l = find(&mut parent, merge.left);
        let r = find(&mut parent, merge.right);
        parent[l] = new_id;
        parent[r] = new_id;
    }

    let mut labels = vec![u32::MAX; n];
    let mut root_label: Vec<(usize, u32)> = Vec::with_capacity(k);
    let mut next = 0u32;
    for (i, slot) in labels.iter_mut().enumerate() {
        let root = find(&mut parent, i);
        let label = match root_label.iter().find(|&&(r, _)| r == root) {
            Some(&(_, l)) => l,
            None => {
                let l = next;
                root_label.push((root, l));
                next += 1;
                l
            }
        };
        *slot = label;
    }
    debug_assert_eq!(next as usize, k);
    Ok(ClusterAssignment { labels, k })
}
