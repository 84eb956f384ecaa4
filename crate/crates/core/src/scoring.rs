//! Likelihood scoring of (partial) trajectories against flow clusters and
//! the two destination-prediction rules.
//!
//! The simple score of a trajectory under cluster `m` is the product of the
//! cluster mixture's densities over the trajectory's points; the complete
//! score multiplies in a context weight built from empiric, weekday, and
//! hour count tables. All score arithmetic is carried in log space: the raw
//! products underflow beyond a few dozen points, while the argmax cluster
//! and the normalized score vector are unchanged by the transformation.

use alloc::vec;
use alloc::vec::Vec;

use crate::clustering::ClusterAssignment;
use crate::geometry::{unproject, GeoPoint, PlanarPoint, Trajectory};
use crate::gmm::MixtureModel;
use crate::math;
use crate::{Error, Result};

/// Which context weights participate in the complete score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WeightFlags {
    pub emp: bool,
    pub weekday: bool,
    pub hour: bool,
}

impl WeightFlags {
    pub const NONE: WeightFlags = WeightFlags { emp: false, weekday: false, hour: false };
    pub const ALL: WeightFlags = WeightFlags { emp: true, weekday: true, hour: true };

    pub fn is_empty(&self) -> bool {
        !(self.emp || self.weekday || self.hour)
    }
}

/// How count ratios are turned into weight-table entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// Add-one smoothing over clusters; every entry stays positive, so a
    /// cluster never observed in some context keeps a finite log score.
    Laplace,
    /// Raw count ratios. Contexts with no observations at all fall back to
    /// a uniform row.
    None,
}

/// Context weight tables: per-cluster empiric share plus per-weekday and
/// per-hour cluster distributions.
///
/// Every row (the empiric row, each weekday, each hour) sums to one over
/// clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTables {
    k: usize,
    emp: Vec<f64>,
    weekday: Vec<f64>, // 7 rows of k, weekday 1 first
    hour: Vec<f64>,    // 24 rows of k
}

impl WeightTables {
    /// Count trajectory starts per cluster, weekday, and hour.
    pub fn from_trajectories(
        ts: &[Trajectory],
        labels: &ClusterAssignment,
        smoothing: Smoothing,
    ) -> Result<Self> {
        if ts.len() != labels.labels().len() {
            return Err(Error::LengthMismatch { left: ts.len(), right: labels.labels().len() });
        }
        let k = labels.cluster_count();
        let mut member_counts = vec![0usize; k];
        let mut weekday_counts = vec![0usize; 7 * k];
        let mut hour_counts = vec![0usize; 24 * k];
        for (i, t) in ts.iter().enumerate() {
            let m = labels.cluster_of(i);
            member_counts[m] += 1;
            weekday_counts[(t.start_weekday() as usize - 1) * k + m] += 1;
            hour_counts[t.start_hour() as usize * k + m] += 1;
        }
        Ok(Self::from_counts(&member_counts, &weekday_counts, &hour_counts, smoothing))
    }

    /// Build tables from raw counts. `weekday_counts` holds 7 rows of `k`
    /// values, `hour_counts` 24 rows.
    pub fn from_counts(
        member_counts: &[usize],
        weekday_counts: &[usize],
        hour_counts: &[usize],
        smoothing: Smoothing,
    ) -> Self {
        let k = member_counts.len();
        assert_eq!(weekday_counts.len(), 7 * k);
        assert_eq!(hour_counts.len(), 24 * k);
        let emp = normalize_row(member_counts, smoothing);
        let mut weekday = Vec::with_capacity(7 * k);
        for d in 0..7 {
            weekday.extend(normalize_row(&weekday_counts[d * k..(d + 1) * k], smoothing));
        }
        let mut hour = Vec::with_capacity(24 * k);
        for h in 0..24 {
            hour.extend(normalize_row(&hour_counts[h * k..(h + 1) * k], smoothing));
        }
        WeightTables { k, emp, weekday, hour }
    }

    /// Rebuild tables from stored rows (e.g. a model file). Row lengths and
    /// normalization are checked; entries must be non-negative and each row
    /// must sum to one within 1e-9.
    pub fn from_rows(emp: Vec<f64>, weekday: Vec<f64>, hour: Vec<f64>) -> Result<Self> {
        let k = emp.len();
        if k == 0 {
            return Err(Error::InvalidConfig("weight tables need at least one cluster"));
        }
        if weekday.len() != 7 * k || hour.len() != 24 * k {
            return Err(Error::LengthMismatch { left: weekday.len(), right: 7 * k });
        }
        let rows = core::iter::once(&emp[..])
            .chain(weekday.chunks(k))
            .chain(hour.chunks(k));
        for row in rows {
            if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidConfig("weight entries must be non-negative"));
            }
            let total: f64 = row.iter().sum();
            if math::abs(total - 1.0) > 1e-9 {
                return Err(Error::InvalidConfig("weight rows must sum to 1"));
            }
        }
        Ok(WeightTables { k, emp, weekday, hour })
    }

    /// Uniform tables (every entry `1/k`); the neutral element for scoring.
    pub fn uniform(k: usize) -> Self {
        let row = vec![1.0 / k as f64; k];
        let mut weekday = Vec::with_capacity(7 * k);
        let mut hour = Vec::with_capacity(24 * k);
        for _ in 0..7 {
            weekday.extend_from_slice(&row);
        }
        for _ in 0..24 {
            hour.extend_from_slice(&row);
        }
        WeightTables { k, emp: row, weekday, hour }
    }

    pub fn cluster_count(&self) -> usize {
        self.k
    }

    /// Share of all trajectories that belong to cluster `m`.
    pub fn empirical(&self, m: usize) -> f64 {
        self.emp[m]
    }

    /// Share of trajectories starting on weekday `d` (1–7) in cluster `m`.
    pub fn weekday(&self, d: u8, m: usize) -> f64 {
        debug_assert!((1..=7).contains(&d));
        self.weekday[(d as usize - 1) * self.k + m]
    }

    /// Share of trajectories starting in hour `h` (0–23) in cluster `m`.
    pub fn hour(&self, h: u8, m: usize) -> f64 {
        debug_assert!(h <= 23);
        self.hour[h as usize * self.k + m]
    }
}

fn normalize_row(counts: &[usize], smoothing: Smoothing) -> Vec<f64> {
    let k = counts.len();
    let total: usize = counts.iter().sum();
    match smoothing {
        Smoothing::Laplace => {
            let denom = (total + k) as f64;
            counts.iter().map(|&c| (c + 1) as f64 / denom).collect()
        }
        Smoothing::None => {
            if total == 0 {
                vec![1.0 / k as f64; k]
            } else {
                counts.iter().map(|&c| c as f64 / total as f64).collect()
            }
        }
    }
}

/// One flow cluster's fitted artifacts: its point-cloud mixture, the mean
/// final destination of its member trajectories, and the member count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub mixture: MixtureModel,
    pub mean_destination: PlanarPoint,
    pub member_count: usize,
}

/// The trained model of a city's traffic flows: one [`ClusterModel`] per
/// trajectory cluster plus the context weight tables. Immutable once built
/// and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    origin: GeoPoint,
    clusters: Vec<ClusterModel>,
    tables: WeightTables,
}

/// Per-cluster scores of one trajectory: raw log scores and the normalized
/// vector `exp(log_score_m − logsumexp(log_scores))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    log_scores: Vec<f64>,
    normalized: Vec<f64>,
}

impl ScoreVector {
    pub fn from_log_scores(log_scores: Vec<f64>) -> Self {
        let lse = math::log_sum_exp(&log_scores);
        let normalized = if lse == f64::NEG_INFINITY {
            vec![1.0 / log_scores.len() as f64; log_scores.len()]
        } else {
            log_scores.iter().map(|&s| math::exp(s - lse)).collect()
        };
        ScoreVector { log_scores, normalized }
    }

    pub fn log_scores(&self) -> &[f64] {
        &self.log_scores
    }

    /// Normalized per-cluster scores; sums to one.
    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }
}

/// Result of classifying a trajectory against all clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Cluster with the highest score (ties go to the lowest index).
    pub best: usize,
    /// All cluster indices, best first.
    pub ranking: Vec<usize>,
    pub scores: ScoreVector,
}

/// Destination prediction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionRule {
    /// The mean destination of the single best-scoring cluster.
    TopCluster,
    /// Destinations of all clusters averaged with the normalized scores.
    Weighted,
}

impl FlowModel {
    pub fn new(
        origin: GeoPoint,
        clusters: Vec<ClusterModel>,
        tables: WeightTables,
    ) -> Result<Self> {
        origin.validate()?;
        if clusters.is_empty() {
            return Err(Error::EmptyCluster { cluster: 0 });
        }
        if let Some(m) = clusters.iter().position(|c| c.member_count == 0) {
            return Err(Error::EmptyCluster { cluster: m });
        }
        if tables.cluster_count() != clusters.len() {
            return Err(Error::LengthMismatch {
                left: tables.cluster_count(),
                right: clusters.len(),
            });
        }
        Ok(FlowModel { origin, clusters, tables })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[ClusterModel] {
        &self.clusters
    }

    pub fn tables(&self) -> &WeightTables {
        &self.tables
    }

    /// Log of the simple score: the summed log-density of the trajectory's
    /// points under cluster `m`'s mixture.
    pub fn simple_log_score(&self, t: &Trajectory, m: usize) -> f64 {
        let mixture = &self.clusters[m].mixture;
        let mut acc = 0.0;
        for &p in t.points() {
            acc += mixture.log_pdf(p);
        }
        acc
    }

    /// Product of the selected context weights for cluster `m` at start
    /// hour `h` and weekday `d`. An empty flag set yields 1, reducing the
    /// complete score to the simple score.
    pub fn auxiliary_weight(&self, m: usize, h: u8, d: u8, flags: WeightFlags) -> f64 {
        let mut w = 1.0;
        if flags.emp {
            w *= self.tables.empirical(m);
        }
        if flags.weekday {
            w *= self.tables.weekday(d, m);
        }
        if flags.hour {
            w *= self.tables.hour(h, m);
        }
        w
    }

    /// Log of the complete score: the context weight times the simple
    /// score. With no flags set this is the simple score, bit for bit.
    pub fn complete_log_score(&self, t: &Trajectory, m: usize, flags: WeightFlags) -> f64 {
        let simple = self.simple_log_score(t, m);
        if flags.is_empty() {
            return simple;
        }
        math::ln(self.auxiliary_weight(m, t.start_hour(), t.start_weekday(), flags)) + simple
    }

    /// Log scores of `t` against every cluster under the chosen flags.
    pub fn log_scores(&self, t: &Trajectory, flags: WeightFlags) -> Vec<f64> {
        (0..self.clusters.len())
            .map(|m| self.complete_log_score(t, m, flags))
            .collect()
    }

    /// Rank all clusters by score for trajectory `t`.
    pub fn classify(&self, t: &Trajectory, flags: WeightFlags) -> Classification {
        let scores = ScoreVector::from_log_scores(self.log_scores(t, flags));
        let mut ranking: Vec<usize> = (0..self.clusters.len()).collect();
        // Stable sort keeps the lower cluster index first on exact ties.
        ranking.sort_by(|&a, &b| {
            scores.log_scores[b]
                .partial_cmp(&scores.log_scores[a])
                .expect("log scores are never NaN")
        });
        Classification { best: ranking[0], ranking, scores }
    }

    /// Predict the final destination of (the observed part of) `t`.
    pub fn predict_destination(
        &self,
        t: &Trajectory,
        flags: WeightFlags,
        rule: PredictionRule,
    ) -> GeoPoint {
        let classification = self.classify(t, flags);
        self.predict_from_classification(&classification, rule)
    }

    /// Destination for an already-computed classification; avoids rescoring
    /// when several rules are evaluated on the same prefix.
    pub fn predict_from_classification(
        &self,
        classification: &Classification,
        rule: PredictionRule,
    ) -> GeoPoint {
        let planar = match rule {
            PredictionRule::TopCluster => self.clusters[classification.best].mean_destination,
            PredictionRule::Weighted => {
                let weights = classification.scores.normalized();
                let mut x = 0.0;
                let mut y = 0.0;
                let mut total = 0.0;
                for (w, c) in weights.iter().zip(&self.clusters) {
                    x += w * c.mean_destination.x;
                    y += w * c.mean_destination.y;
                    total += w;
                }
                // The score ratio sums to one in exact arithmetic; dividing
                // by the float total keeps the result a true convex
                // combination of the destinations.
                PlanarPoint::new(x / total, y / total)
            }
        };
        unproject(planar, self.origin)
    }
}
