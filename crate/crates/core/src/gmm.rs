//! Per-cluster 2D Gaussian mixture models, fitted by expectation-maximization
//! with the component count selected by BIC.
//!
//! The mixture over a cluster's pooled points is `Σ_k ω_k·φ_k(p)` with
//! bivariate normal components. EM runs from k-means++ seeding with several
//! restarts, keeping the restart with the best final log-likelihood. The
//! covariance floor is enforced as an eigenvalue lower bound, so every
//! M-step maximizes the EM surrogate over the feasible family and the
//! training log-likelihood is non-decreasing at every iteration.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use crate::clustering::ClusterAssignment;
use crate::geometry::{PlanarPoint, Trajectory};
use crate::math;
use crate::rng::Rng;
use crate::scoring::{ClusterModel, FlowModel, Smoothing, WeightTables};
use crate::{Error, Result};

const LN_TWO_PI: f64 = 1.837_877_066_409_345_5;

/// Symmetric 2×2 covariance matrix in m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Covariance {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Covariance { xx, xy, yy }
    }

    pub fn identity() -> Self {
        Covariance { xx: 1.0, xy: 0.0, yy: 1.0 }
    }

    pub fn determinant(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx.is_finite()
            && self.xy.is_finite()
            && self.yy.is_finite()
            && self.xx > 0.0
            && self.determinant() > 0.0
    }

    /// Eigenvalues, largest first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = (self.xx + self.yy) / 2.0;
        let half_diff = (self.xx - self.yy) / 2.0;
        let radius = math::sqrt(half_diff * half_diff + self.xy * self.xy);
        (mid + radius, mid - radius)
    }

    /// Unit eigenvector of the larger eigenvalue, plus both eigenvalues
    /// (largest first). The axis of an isotropic matrix is `(1, 0)`.
    pub fn principal_axes(&self) -> ((f64, f64), f64, f64) {
        let (l1, l2) = self.eigenvalues();
        // Two candidate eigenvector forms, both orthogonal to a row of
        // (Σ − λ1·I); pick the better-conditioned.
        let a = (self.xy, l1 - self.xx);
        let b = (l1 - self.yy, self.xy);
        let (vx, vy) =
            if a.0 * a.0 + a.1 * a.1 >= b.0 * b.0 + b.1 * b.1 { a } else { b };
        let norm = math::hypot(vx, vy);
        if norm == 0.0 {
            ((1.0, 0.0), l1, l2)
        } else {
            ((vx / norm, vy / norm), l1, l2)
        }
    }

    /// Raise both eigenvalues to at least `floor`, keeping the eigenvectors.
    /// Returns the matrix unchanged when it already satisfies the bound.
    pub fn floor_eigenvalues(&self, floor: f64) -> Covariance {
        let ((vx, vy), l1, l2) = self.principal_axes();
        if l2 >= floor {
            return *self;
        }
        let c1 = l1.max(floor);
        let c2 = floor;
        Covariance {
            xx: c1 * vx * vx + c2 * vy * vy,
            xy: (c1 - c2) * vx * vy,
            yy: c1 * vy * vy + c2 * vx * vx,
        }
    }
}

/// One weighted bivariate normal component of a mixture.
///
/// The inverse covariance and normalization constant are cached at
/// construction; the covariance must be symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    weight: f64,
    mean: PlanarPoint,
    cov: Covariance,
    inv_xx: f64,
    inv_xy: f64,
    inv_yy: f64,
    log_norm: f64,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: PlanarPoint, cov: Covariance) -> Result<Self> {
        if !(weight > 0.0 && weight <= 1.0 + 1e-9 && weight.is_finite()) {
            return Err(Error::InvalidConfig("component weight must be in (0, 1]"));
        }
        if !cov.is_positive_definite() {
            return Err(Error::NotPositiveDefinite);
        }
        let det = cov.determinant();
        Ok(GaussianComponent {
            weight: weight.min(1.0),
            mean,
            cov,
            inv_xx: cov.yy / det,
            inv_xy: -cov.xy / det,
            inv_yy: cov.xx / det,
            log_norm: -LN_TWO_PI - 0.5 * math::ln(det),
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> PlanarPoint {
        self.mean
    }

    pub fn covariance(&self) -> Covariance {
        self.cov
    }

    /// Log of the bivariate normal density at `p`.
    pub fn log_pdf(&self, p: PlanarPoint) -> f64 {
        let dx = p.x - self.mean.x;
        let dy = p.y - self.mean.y;
        let quad = self.inv_xx * dx * dx + 2.0 * self.inv_xy * dx * dy + self.inv_yy * dy * dy;
        self.log_norm - 0.5 * quad
    }
}

/// A fitted Gaussian mixture over one cluster's point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    components: Vec<GaussianComponent>,
    log_weights: Vec<f64>,
    train_log_likelihood: f64,
    n_train: usize,
}

impl MixtureModel {
    /// Assemble a mixture from components. Weights must sum to one within
    /// 1e-9.
    pub fn new(
        components: Vec<GaussianComponent>,
        train_log_likelihood: f64,
        n_train: usize,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyComponentRange);
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if math::abs(total - 1.0) > 1e-9 {
            return Err(Error::InvalidConfig("mixture weights must sum to 1"));
        }
        let log_weights = components.iter().map(|c| math::ln(c.weight)).collect();
        Ok(MixtureModel { components, log_weights, train_log_likelihood, n_train })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    /// Log-likelihood of the training points under the fitted parameters.
    pub fn train_log_likelihood(&self) -> f64 {
        self.train_log_likelihood
    }

    /// Number of training points the mixture was fitted to.
    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// Log of the mixture density `ln Σ_k ω_k·φ_k(p)`, accumulated in log
    /// space so small densities cannot underflow.
    pub fn log_pdf(&self, p: PlanarPoint) -> f64 {
        let mut acc = f64::NEG_INFINITY;
        for (c, &lw) in self.components.iter().zip(&self.log_weights) {
            acc = math::log_add_exp(acc, lw + c.log_pdf(p));
        }
        acc
    }
}

/// EM fitting parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Maximum EM iterations per restart.
    pub max_iter: usize,
    /// Relative log-likelihood change below which a restart stops.
    pub tol: f64,
    /// Independent seeded restarts; the best final log-likelihood wins.
    pub n_restarts: usize,
    /// Lower bound on covariance eigenvalues, in m².
    pub cov_floor: f64,
    /// Seed for initialization; fixing it makes fits reproducible.
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { max_iter: 300, tol: 1e-6, n_restarts: 5, cov_floor: 1.0, seed: 0 }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig("tol must be positive"));
        }
        if self.n_restarts == 0 {
            return Err(Error::InvalidConfig("n_restarts must be positive"));
        }
        if !(self.cov_floor > 0.0 && self.cov_floor.is_finite()) {
            return Err(Error::InvalidConfig("cov_floor must be positive"));
        }
        Ok(())
    }
}

/// Fit a `k`-component mixture to `points` by EM.
pub fn em_fit(points: &[PlanarPoint], k: usize, cfg: &EmConfig) -> Result<MixtureModel> {
    em_fit_traced(points, k, cfg).map(|(model, _)| model)
}

/// Like [`em_fit`], also returning the per-iteration training log-likelihood
/// of the winning restart. The trace is non-decreasing up to floating-point
/// noise.
pub fn em_fit_traced(
    points: &[PlanarPoint],
    k: usize,
    cfg: &EmConfig,
) -> Result<(MixtureModel, Vec<f64>)> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("component count must be positive"));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints { have: points.len(), need: k });
    }

    if k == 1 {
        // Closed form: the single-component MLE is the sample mean and
        // covariance, no iteration needed.
        let (mean, cov) = sample_mean_cov(points);
        let comp = GaussianComponent::new(1.0, mean, cov.floor_eigenvalues(cfg.cov_floor))?;
        let ll: f64 = points.iter().map(|&p| comp.log_pdf(p)).sum();
        let model = MixtureModel::new(vec![comp], ll, points.len())?;
        let trace = vec![ll];
        return Ok((model, trace));
    }

    let base = Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(MixtureModel, Vec<f64>)> = None;
    for restart in 0..cfg.n_restarts {
        let mut rng = base.fork(restart as u64);
        let fitted = em_single(points, k, cfg, &mut rng)?;
        let better = match &best {
            None => true,
            Some((m, _)) => fitted.0.train_log_likelihood > m.train_log_likelihood,
        };
        if better {
            best = Some(fitted);
        }
    }
    Ok(best.expect("n_restarts >= 1"))
}

struct WorkingComponent {
    weight: f64,
    mean: PlanarPoint,
    cov: Covariance,
}

fn em_single(
    points: &[PlanarPoint],
    k: usize,
    cfg: &EmConfig,
    rng: &mut Rng,
) -> Result<(MixtureModel, Vec<f64>)> {
    let n = points.len();
    let seeds = kmeans_pp_seeds(points, k, rng);
    let mut params = initial_params(points, &seeds, cfg.cov_floor);

    let mut resp = vec![0.0f64; n * k];
    let mut log_probs = vec![0.0f64; k];
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;

    loop {
        let components = build_components(&params)?;

        // E-step and log-likelihood of the current parameters.
        let mut ll = 0.0;
        for (i, &p) in points.iter().enumerate() {
            let mut lse = f64::NEG_INFINITY;
            for (j, c) in components.iter().enumerate() {
                let lp = math::ln(c.weight) + c.log_pdf(p);
                log_probs[j] = lp;
                lse = math::log_add_exp(lse, lp);
            }
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = math::exp(log_probs[j] - lse);
            }
        }
        debug_assert!(
            ll >= prev_ll - 1e-8,
            "EM log-likelihood decreased: {prev_ll} -> {ll}"
        );
        trace.push(ll);

        let converged =
            trace.len() > 1 && math::abs(ll - prev_ll) <= cfg.tol * math::abs(prev_ll).max(1.0);
        if converged || trace.len() > cfg.max_iter {
            let model = MixtureModel::new(components, ll, n)?;
            return Ok((model, trace));
        }
        prev_ll = ll;

        // M-step.
        for (j, param) in params.iter_mut().enumerate() {
            let mut weight_sum = 0.0;
            let mut mx = 0.0;
            let mut my = 0.0;
            for (i, &p) in points.iter().enumerate() {
                let r = resp[i * k + j];
                weight_sum += r;
                mx += r * p.x;
                my += r * p.y;
            }
            if weight_sum < 1e-300 {
                // Component lost every point; keep its shape, let the weight
                // reflect that nothing is assigned to it.
                param.weight = f64::MIN_POSITIVE;
                continue;
            }
            let mean = PlanarPoint::new(mx / weight_sum, my / weight_sum);
            let mut sxx = 0.0;
            let mut sxy = 0.0;
            let mut syy = 0.0;
            for (i, &p) in points.iter().enumerate() {
                let r = resp[i * k + j];
                let dx = p.x - mean.x;
                let dy = p.y - mean.y;
                sxx += r * dx * dx;
                sxy += r * dx * dy;
                syy += r * dy * dy;
            }
            let cov = Covariance::new(sxx / weight_sum, sxy / weight_sum, syy / weight_sum);
            param.weight = weight_sum / n as f64;
            param.mean = mean;
            param.cov = cov.floor_eigenvalues(cfg.cov_floor);
        }
        normalize_weights(&mut params);
    }
}

fn build_components(params: &[WorkingComponent]) -> Result<Vec<GaussianComponent>> {
    params
        .iter()
        .map(|p| GaussianComponent::new(p.weight, p.mean, p.cov))
        .collect()
}

fn normalize_weights(params: &mut [WorkingComponent]) {
    let total: f64 = params.iter().map(|p| p.weight).sum();
    for p in params.iter_mut() {
        p.weight /= total;
    }
}

fn sample_mean_cov(points: &[PlanarPoint]) -> (PlanarPoint, Covariance) {
    let n = points.len() as f64;
    let mut mx = 0.0;
    let mut my = 0.0;
    for p in points {
        mx += p.x;
        my += p.y;
    }
    let mean = PlanarPoint::new(mx / n, my / n);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for p in points {
        let dx = p.x - mean.x;
        let dy = p.y - mean.y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    (mean, Covariance::new(sxx / n, sxy / n, syy / n))
}

/// k-means++ seeding: the first center is uniform, each further center is
/// drawn with probability proportional to its squared distance from the
/// nearest already-chosen center.
fn kmeans_pp_seeds(points: &[PlanarPoint], k: usize, rng: &mut Rng) -> Vec<PlanarPoint> {
    let n = points.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(n)]);
    let mut dist_sq: Vec<f64> = points
        .iter()
        .map(|p| {
            let d = p.distance(&centers[0]);
            d * d
        })
        .collect();
    while centers.len() < k {
        let total: f64 = dist_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist_sq.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            points[chosen]
        } else {
            // All points coincide with a center already.
            points[rng.gen_range(n)]
        };
        centers.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = p.distance(&next);
            dist_sq[i] = dist_sq[i].min(d * d);
        }
    }
    centers
}

/// Initial mixture parameters from a hard assignment to the nearest seed.
fn initial_params(
    points: &[PlanarPoint],
    seeds: &[PlanarPoint],
    cov_floor: f64,
) -> Vec<WorkingComponent> {
    let k = seeds.len();
    let n = points.len();
    let mut assignment = vec![0usize; n];
    for (i, p) in points.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, s) in seeds.iter().enumerate() {
            let d = p.distance(s);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        assignment[i] = best;
    }
    let mut params = Vec::with_capacity(k);
    for (j, &seed) in seeds.iter().enumerate() {
        let member_points: Vec<PlanarPoint> = points
            .iter()
            .zip(&assignment)
            .filter(|&(_, &a)| a == j)
            .map(|(&p, _)| p)
            .collect();
        if member_points.is_empty() {
            params.push(WorkingComponent {
                weight: 1.0 / n as f64,
                mean: seed,
                cov: Covariance::new(cov_floor, 0.0, cov_floor),
            });
        } else {
            let (mean, cov) = sample_mean_cov(&member_points);
            params.push(WorkingComponent {
                weight: member_points.len() as f64 / n as f64,
                mean,
                cov: cov.floor_eigenvalues(cov_floor),
            });
        }
    }
    normalize_weights(&mut params);
    params
}

/// Number of free parameters of a `k`-component bivariate mixture:
/// `k − 1` weights, `2k` means, `3k` covariance entries.
fn free_parameters(k: usize) -> usize {
    6 * k - 1
}

fn bic_from_counts(log_likelihood: f64, k: usize, n: f64) -> f64 {
    -2.0 * log_likelihood + free_parameters(k) as f64 * math::ln(n)
}

/// Bayesian information criterion of a fit; lower is better.
pub fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    bic_from_counts(log_likelihood, k, n as f64)
}

/// BIC with the penalty counting `k` alone rather than the full
/// free-parameter count. Kept for fidelity experiments; [`select_k`] uses
/// the standard penalty.
pub fn bic_bare_k(log_likelihood: f64, k: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + k as f64 * math::ln(n as f64)
}

/// Fit every component count in `k_range` and keep the model with the
/// lowest BIC; ties go to the smaller count.
pub fn select_k(
    points: &[PlanarPoint],
    k_range: RangeInclusive<usize>,
    cfg: &EmConfig,
) -> Result<MixtureModel> {
    if k_range.is_empty() {
        return Err(Error::EmptyComponentRange);
    }
    let mut best: Option<(f64, MixtureModel)> = None;
    for k in k_range {
        let model = em_fit(points, k, cfg)?;
        let score = bic(model.train_log_likelihood, k, points.len());
        let better = match &best {
            None => true,
            Some((b, _)) => score < *b,
        };
        if better {
            best = Some((score, model));
        }
    }
    Ok(best.expect("range checked non-empty").1)
}

/// Fit the full flow model: per trajectory cluster, pool the member points,
/// select a mixture by BIC, and record the mean final destination, alongside
/// the context weight tables (Laplace-smoothed over clusters).
pub fn fit_flow_model(
    ts: &[Trajectory],
    labels: &ClusterAssignment,
    cfg: &EmConfig,
    k_range: RangeInclusive<usize>,
) -> Result<FlowModel> {
    if ts.is_empty() {
        return Err(Error::TooFewTrajectories { have: 0, need: 1 });
    }
    if ts.len() != labels.labels().len() {
        return Err(Error::LengthMismatch { left: ts.len(), right: labels.labels().len() });
    }
    let seed_source = Rng::seed_from_u64(cfg.seed);
    let mut clusters = Vec::with_capacity(labels.cluster_count());
    for m in 0..labels.cluster_count() {
        let members = labels.members(m);
        if members.is_empty() {
            return Err(Error::EmptyCluster { cluster: m });
        }
        let mut points = Vec::new();
        let mut dest_x = 0.0;
        let mut dest_y = 0.0;
        for &i in &members {
            points.extend_from_slice(ts[i].points());
            let end = ts[i].final_point();
            dest_x += end.x;
            dest_y += end.y;
        }
        let cluster_cfg = EmConfig {
            seed: seed_source.fork(m as u64).next_u64(),
            ..cfg.clone()
        };
        let mixture = select_k(&points, k_range.clone(), &cluster_cfg)?;
        clusters.push(ClusterModel {
            mixture,
            mean_destination: PlanarPoint::new(
                dest_x / members.len() as f64,
                dest_y / members.len() as f64,
            ),
            member_count: members.len(),
        });
    }
    let tables = WeightTables::from_trajectories(ts, labels, Smoothing::Laplace)?;
    FlowModel::new(ts[0].origin(), clusters, tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::traj_from_xy;

    fn blob(rng: &mut Rng, cx: f64, cy: f64, sigma: f64, n: usize) -> Vec<PlanarPoint> {
        (0..n)
            .map(|_| {
                PlanarPoint::new(cx + sigma * rng.next_normal(), cy + sigma * rng.next_normal())
            })
            .collect()
    }

    #[test]
    fn log_pdf_at_mean_with_identity_covariance() {
        let c = GaussianComponent::new(1.0, PlanarPoint::new(3.0, -2.0), Covariance::identity())
            .unwrap();
        let got = c.log_pdf(PlanarPoint::new(3.0, -2.0));
        assert!((got - (-LN_TWO_PI)).abs() < 1e-12);
    }

    #[test]
    fn log_pdf_unit_mahalanobis_step() {
        let mean = PlanarPoint::new(0.0, 0.0);
        let c = GaussianComponent::new(1.0, mean, Covariance::identity()).unwrap();
        let got = c.log_pdf(PlanarPoint::new(1.0, 0.0));
        assert!((got - (-LN_TWO_PI - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn log_pdf_anisotropic_matches_direct_formula() {
        let c = GaussianComponent::new(
            1.0,
            PlanarPoint::new(0.0, 0.0),
            Covariance::new(4.0, 0.0, 1.0),
        )
        .unwrap();
        let got = c.log_pdf(PlanarPoint::new(2.0, 0.0));
        // ln(1/(2π·2)) − ½·(2²/4)
        let want = -(2.0 * core::f64::consts::PI * 2.0).ln() - 0.5;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn non_positive_definite_covariance_is_rejected() {
        let bad = Covariance::new(1.0, 2.0, 1.0);
        assert!(matches!(
            GaussianComponent::new(1.0, PlanarPoint::new(0.0, 0.0), bad),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn eigenvalue_floor_preserves_compliant_matrices() {
        let cov = Covariance::new(9.0, 1.0, 5.0);
        assert_eq!(cov.floor_eigenvalues(1.0), cov);
    }

    #[test]
    fn eigenvalue_floor_lifts_degenerate_directions() {
        // Rank-one scatter along the diagonal direction.
        let cov = Covariance::new(2.0, 2.0, 2.0);
        let floored = cov.floor_eigenvalues(0.5);
        let (l1, l2) = floored.eigenvalues();
        assert!((l1 - 4.0).abs() < 1e-12);
        assert!((l2 - 0.5).abs() < 1e-12);
        assert!(floored.is_positive_definite());
    }

    #[test]
    fn mixture_with_one_component_equals_component() {
        let c = GaussianComponent::new(1.0, PlanarPoint::new(1.0, 1.0), Covariance::identity())
            .unwrap();
        let m = MixtureModel::new(vec![c.clone()], 0.0, 1).unwrap();
        let p = PlanarPoint::new(0.3, 2.0);
        assert_eq!(m.log_pdf(p), c.log_pdf(p));
    }

    #[test]
    fn mixture_of_identical_components_collapses() {
        let mk = |w: f64| {
            GaussianComponent::new(w, PlanarPoint::new(1.0, 1.0), Covariance::identity()).unwrap()
        };
        let m = MixtureModel::new(vec![mk(0.3), mk(0.7)], 0.0, 1).unwrap();
        let single = mk(1.0);
        let p = PlanarPoint::new(-0.5, 0.8);
        assert!((m.log_pdf(p) - single.log_pdf(p)).abs() < 1e-12);
    }

    #[test]
    fn mixture_log_pdf_matches_linear_domain_sum() {
        let mut rng = Rng::seed_from_u64(8);
        let comps: Vec<GaussianComponent> = [(0.5, 0.0, 0.0), (0.3, 4.0, 1.0), (0.2, -2.0, 3.0)]
            .iter()
            .map(|&(w, x, y)| {
                let spread = 1.0 + rng.next_f64();
                GaussianComponent::new(
                    w,
                    PlanarPoint::new(x, y),
                    Covariance::new(spread, 0.2, spread + 0.5),
                )
                .unwrap()
            })
            .collect();
        let m = MixtureModel::new(comps.clone(), 0.0, 1).unwrap();
        for _ in 0..50 {
            let p = PlanarPoint::new(rng.next_f64() * 8.0 - 3.0, rng.next_f64() * 8.0 - 3.0);
            let naive: f64 = comps.iter().map(|c| c.weight() * math::exp(c.log_pdf(p))).sum();
            let rel = math::abs(m.log_pdf(p) - math::ln(naive)) / math::abs(math::ln(naive));
            assert!(rel < 1e-12, "relative error {rel}");
        }
    }

    #[test]
    fn mixture_weights_must_sum_to_one() {
        let c = |w| {
            GaussianComponent::new(w, PlanarPoint::new(0.0, 0.0), Covariance::identity()).unwrap()
        };
        assert!(MixtureModel::new(vec![c(0.5), c(0.4)], 0.0, 1).is_err());
    }

    #[test]
    fn single_component_fit_is_the_sample_moment_estimate() {
        let mut rng = Rng::seed_from_u64(4);
        let points = blob(&mut rng, 100.0, -50.0, 30.0, 400);
        let cfg = EmConfig::default();
        let model = em_fit(&points, 1, &cfg).unwrap();
        let (mean, cov) = sample_mean_cov(&points);
        let comp = &model.components()[0];
        assert!((comp.mean().x - mean.x).abs() < 1e-9);
        assert!((comp.mean().y - mean.y).abs() < 1e-9);
        assert!((comp.covariance().xx - cov.xx).abs() < 1e-9);
        assert_eq!(comp.weight(), 1.0);
        assert_eq!(model.n_train(), 400);
    }

    #[test]
    fn identical_points_get_floor_covariance() {
        let points = vec![PlanarPoint::new(5.0, 5.0); 20];
        let cfg = EmConfig { cov_floor: 2.0, ..EmConfig::default() };
        let model = em_fit(&points, 1, &cfg).unwrap();
        let cov = model.components()[0].covariance();
        assert_eq!((cov.xx, cov.xy, cov.yy), (2.0, 0.0, 2.0));
    }

    #[test]
    fn em_requires_enough_points() {
        let points = vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(1.0, 0.0)];
        assert!(matches!(
            em_fit(&points, 3, &EmConfig::default()),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn two_separated_blobs_are_recovered() {
        let mut rng = Rng::seed_from_u64(7);
        let sigma = 25.0;
        let first = blob(&mut rng, 0.0, 0.0, sigma, 600);
        let second = blob(&mut rng, 2000.0, 500.0, sigma, 400);
        let empirical = |b: &[PlanarPoint]| sample_mean_cov(b).0;
        let (e0, e1) = (empirical(&first), empirical(&second));
        let mut points = first;
        points.extend(second);
        let cfg = EmConfig { seed: 7, ..EmConfig::default() };
        let model = em_fit(&points, 2, &cfg).unwrap();

        let mut comps: Vec<&GaussianComponent> = model.components().iter().collect();
        comps.sort_by(|a, b| a.mean().x.partial_cmp(&b.mean().x).unwrap());
        // Within three standard errors of the generating centers.
        let tol0 = 3.0 * sigma / (600.0f64).sqrt();
        let tol1 = 3.0 * sigma / (400.0f64).sqrt();
        assert!((comps[0].mean().x - 0.0).abs() < tol0);
        assert!((comps[0].mean().y - 0.0).abs() < tol0);
        assert!((comps[1].mean().x - 2000.0).abs() < tol1);
        assert!((comps[1].mean().y - 500.0).abs() < tol1);
        // With this separation the component means should essentially be
        // the per-blob sample means.
        assert!(comps[0].mean().distance(&e0) < 0.5);
        assert!(comps[1].mean().distance(&e1) < 0.5);
        assert!((comps[0].weight() - 0.6).abs() < 0.05);
        assert!((comps[1].weight() - 0.4).abs() < 0.05);
    }

    #[test]
    fn multi_component_fit_is_at_least_as_good_as_single() {
        let mut rng = Rng::seed_from_u64(3);
        let mut points = blob(&mut rng, 0.0, 0.0, 20.0, 300);
        points.extend(blob(&mut rng, 800.0, 0.0, 20.0, 300));
        let cfg = EmConfig::default();
        let single = em_fit(&points, 1, &cfg).unwrap();
        let double = em_fit(&points, 2, &cfg).unwrap();
        assert!(double.train_log_likelihood() >= single.train_log_likelihood() - 1e-6);
    }

    #[test]
    fn log_likelihood_trace_is_monotone() {
        let mut rng = Rng::seed_from_u64(21);
        for run in 0..10 {
            let mut points = blob(&mut rng, 0.0, 0.0, 40.0, 150);
            points.extend(blob(&mut rng, 300.0, 200.0, 60.0, 150));
            let cfg = EmConfig { seed: run, n_restarts: 1, ..EmConfig::default() };
            let (_, trace) = em_fit_traced(&points, 3, &cfg).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "trace dipped: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn responsibilities_reconstructed_from_model_sum_to_one() {
        let mut rng = Rng::seed_from_u64(33);
        let mut points = blob(&mut rng, 0.0, 0.0, 30.0, 100);
        points.extend(blob(&mut rng, 500.0, 100.0, 30.0, 100));
        let model = em_fit(&points, 2, &EmConfig::default()).unwrap();
        for &p in points.iter().take(50) {
            let lse = model.log_pdf(p);
            let total: f64 = model
                .components()
                .iter()
                .map(|c| math::exp(math::ln(c.weight()) + c.log_pdf(p) - lse))
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fits_are_deterministic_for_a_fixed_seed() {
        let mut rng = Rng::seed_from_u64(2);
        let points = blob(&mut rng, 10.0, 20.0, 50.0, 200);
        let cfg = EmConfig { seed: 99, ..EmConfig::default() };
        let a = em_fit(&points, 3, &cfg).unwrap();
        let b = em_fit(&points, 3, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bic_plugin_values() {
        // ln n = 1 makes the penalty exactly the free-parameter count.
        assert!((bic_from_counts(0.0, 1, core::f64::consts::E) - 5.0).abs() < 1e-12);
        let n = 100;
        let diff = bic(0.0, 2, 2 * n) - bic(0.0, 2, n);
        assert!((diff - free_parameters(2) as f64 * core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(free_parameters(1), 5);
        assert_eq!(free_parameters(4), 23);
        // The bare-k variant scales its penalty with k alone.
        assert!((bic_bare_k(0.0, 3, n) - 3.0 * (n as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn select_k_prefers_one_component_for_a_single_blob() {
        let mut rng = Rng::seed_from_u64(41);
        let points = blob(&mut rng, 0.0, 0.0, 30.0, 800);
        let cfg = EmConfig { seed: 5, n_restarts: 2, ..EmConfig::default() };
        let model = select_k(&points, 1..=5, &cfg).unwrap();
        assert_eq!(model.component_count(), 1);
    }

    #[test]
    fn select_k_finds_two_separated_blobs() {
        let mut rng = Rng::seed_from_u64(42);
        let mut points = blob(&mut rng, 0.0, 0.0, 30.0, 500);
        points.extend(blob(&mut rng, 1500.0, 0.0, 30.0, 500));
        let cfg = EmConfig { seed: 5, n_restarts: 2, ..EmConfig::default() };
        let model = select_k(&points, 1..=5, &cfg).unwrap();
        assert_eq!(model.component_count(), 2);
    }

    #[test]
    fn singleton_range_returns_that_fit() {
        let mut rng = Rng::seed_from_u64(43);
        let points = blob(&mut rng, 0.0, 0.0, 30.0, 100);
        let cfg = EmConfig::default();
        let model = select_k(&points, 3..=3, &cfg).unwrap();
        assert_eq!(model.component_count(), 3);
        #[allow(clippy::reversed_empty_ranges)]
        let empty_range = 4..=3;
        assert!(select_k(&points, empty_range, &cfg).is_err());
    }

    #[test]
    fn flow_model_single_cluster_pools_everything() {
        let ts = vec![
            traj_from_xy("a", &[(0.0, 0.0), (100.0, 0.0)]),
            traj_from_xy("b", &[(0.0, 50.0), (200.0, 0.0)]),
            traj_from_xy("c", &[(0.0, -50.0), (100.0, 300.0)]),
        ];
        let labels = ClusterAssignment::from_labels(vec![0, 0, 0], 1).unwrap();
        let model = fit_flow_model(&ts, &labels, &EmConfig::default(), 1..=1).unwrap();
        assert_eq!(model.cluster_count(), 1);
        let c = &model.clusters()[0];
        assert_eq!(c.member_count, 3);
        assert_eq!(c.mixture.n_train(), 6);
        // Mean of the final points (100,0), (200,0), (100,300).
        assert!((c.mean_destination.x - 400.0 / 3.0).abs() < 1e-9);
        assert!((c.mean_destination.y - 100.0).abs() < 1e-9);
    }

    #[test]
    fn flow_model_mean_destination_example() {
        let ts = vec![
            traj_from_xy("a", &[(-10.0, -10.0), (0.0, 0.0)]),
            traj_from_xy("b", &[(-10.0, -10.0), (2.0, 0.0)]),
            traj_from_xy("c", &[(-10.0, -10.0), (1.0, 3.0)]),
        ];
        let labels = ClusterAssignment::from_labels(vec![0, 0, 0], 1).unwrap();
        let model = fit_flow_model(&ts, &labels, &EmConfig::default(), 1..=1).unwrap();
        let d = model.clusters()[0].mean_destination;
        assert!((d.x - 1.0).abs() < 1e-12);
        assert!((d.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_clusters_score_their_own_points_higher() {
        let mut rng = Rng::seed_from_u64(77);
        let mk_cluster = |rng: &mut Rng, cx: f64, cy: f64, n: usize| -> Vec<Trajectory> {
            (0..n)
                .map(|i| {
                    let pts: Vec<(f64, f64)> = (0..6)
                        .map(|j| {
                            (
                                cx + j as f64 * 100.0 + 10.0 * rng.next_normal(),
                                cy + 10.0 * rng.next_normal(),
                            )
                        })
                        .collect();
                    traj_from_xy(&alloc::format!("c{cx}-{i}"), &pts)
                })
                .collect()
        };
        let mut ts = mk_cluster(&mut rng, 0.0, 0.0, 20);
        ts.extend(mk_cluster(&mut rng, 0.0, 5000.0, 20));
        let labels = ClusterAssignment::from_labels(
            (0..40).map(|i| if i < 20 { 0 } else { 1 }).collect(),
            2,
        )
        .unwrap();
        let cfg = EmConfig { seed: 3, n_restarts: 2, ..EmConfig::default() };
        let model = fit_flow_model(&ts, &labels, &cfg, 1..=3).unwrap();

        let mut correct = 0usize;
        let mut total = 0usize;
        for (i, t) in ts.iter().enumerate() {
            let own = labels.cluster_of(i);
            for &p in t.points() {
                total += 1;
                let own_lp = model.clusters()[own].mixture.log_pdf(p);
                let other_lp = model.clusters()[1 - own].mixture.log_pdf(p);
                if own_lp > other_lp {
                    correct += 1;
                }
            }
        }
        assert!(correct as f64 / total as f64 >= 0.99);
    }
}
