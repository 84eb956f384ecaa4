//! Evaluation protocol: k-fold cross-validation over trajectories,
//! classification quality and destination error as functions of trip
//! completion, and per-cluster one-vs-all ROC/AUC.
//!
//! Each fold trains a full model (clustering plus mixtures) on the other
//! folds and evaluates prefixes of the held-out trips. A held-out trip has
//! no label of its own, so its ground-truth cluster is defined as the one
//! whose member trajectories are nearest in mean SSPD to the complete trip.
//! Keep that definition in mind when comparing rates across
//! implementations that pin it differently.

use alloc::vec;
use alloc::vec::Vec;

use crate::clustering::{cut, pairwise_distances, ward_linkage, ClusterAssignment};
use crate::geometry::{haversine, prefix, sspd, PrefixFraction, Trajectory};
use crate::gmm::{fit_flow_model, EmConfig};
use crate::rng::Rng;
use crate::scoring::{FlowModel, PredictionRule, WeightFlags};
use crate::{Error, Result};

/// Assignment of each trajectory to one of `n_folds` test folds.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    assignment: Vec<u32>,
    n_folds: usize,
    seed: u64,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i] as usize
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.fold_of(i) == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.fold_of(i) != fold).collect()
    }
}

/// Uniform random partition of `n_items` into `n_folds` folds, sizes within
/// one of each other.
pub fn kfold(n_items: usize, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds"));
    }
    if n_items < n_folds {
        return Err(Error::TooFewForFolds { have: n_items, folds: n_folds });
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut rng = Rng::seed_from_u64(seed);
    rng.shuffle(&mut order);
    let mut assignment = vec![0u32; n_items];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = (pos % n_folds) as u32;
    }
    Ok(FoldPlan { assignment, n_folds, seed })
}

/// Ground-truth cluster of a held-out trajectory: the training cluster
/// whose members are nearest in mean SSPD to the complete trip. Ties go to
/// the lower cluster index.
pub fn true_label(t: &Trajectory, train: &[Trajectory], labels: &ClusterAssignment) -> usize {
    let mut best = 0;
    let mut best_mean = f64::INFINITY;
    for m in 0..labels.cluster_count() {
        let members = labels.members(m);
        let mut total = 0.0;
        for &i in &members {
            total += sspd(t, &train[i]);
        }
        let mean = total / members.len() as f64;
        if mean < best_mean {
            best_mean = mean;
            best = m;
        }
    }
    best
}

/// One point of a ROC curve at a given score threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
}

/// ROC curve and its area for one one-vs-all problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// One-vs-all ROC from scores and positive-class flags.
///
/// The AUC uses the Mann–Whitney rank statistic with midranks for ties; the
/// curve is a sweep over the observed score thresholds. Returns `None` when
/// either class is empty, in which case the AUC is undefined rather than
/// zero.
pub fn roc_auc(scores: &[f64], is_positive: &[bool]) -> Option<RocCurve> {
    assert_eq!(scores.len(), is_positive.len());
    let n_pos = is_positive.iter().filter(|&&p| p).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores are not NaN"));

    // Midranks: tied scores share the average of their rank positions.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            if is_positive[idx] {
                rank_sum_pos += midrank;
            }
        }
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    let auc = u / (n_pos as f64 * n_neg as f64);

    // Threshold sweep from the highest score down; at each threshold the
    // prediction is "positive when score >= threshold".
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        false_positive_rate: 0.0,
        true_positive_rate: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = order.len();
    while i > 0 {
        let threshold = scores[order[i - 1]];
        while i > 0 && scores[order[i - 1]] == threshold {
            if is_positive[order[i - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i -= 1;
        }
        points.push(RocPoint {
            threshold,
            false_positive_rate: fp as f64 / n_neg as f64,
            true_positive_rate: tp as f64 / n_pos as f64,
        });
    }
    Some(RocCurve { points, auc })
}

/// Whether each fold refits the clustering or reuses a global one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefitMode {
    /// Cluster and fit mixtures from scratch on each fold's training 90%.
    /// This is the protocol the evaluation reproduces.
    PerFold,
    /// Cluster once on the full data set and only refit the mixtures per
    /// fold. Faster, but the clustering has seen the test trajectories, so
    /// the rates are optimistic. Not conformant with the protocol.
    FixedClustering,
}

/// Cross-validation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Number of trajectory clusters `K` for the dendrogram cut.
    pub clusters: usize,
    /// BIC search range for mixture components per cluster.
    pub component_range: core::ops::RangeInclusive<usize>,
    pub em: EmConfig,
    pub folds: usize,
    /// Seed for the fold split.
    pub seed: u64,
    /// Completion fractions at which test prefixes are evaluated.
    pub completion_grid: Vec<f64>,
    /// Weight-flag configurations to score under.
    pub flag_sets: Vec<WeightFlags>,
    pub refit: RefitMode,
}

impl EvalConfig {
    /// Defaults mirroring the reported protocol: 10 folds, completion grid
    /// 0, 0.05, …, 1, and the five standard flag configurations.
    pub fn new(clusters: usize, component_range: core::ops::RangeInclusive<usize>) -> Self {
        EvalConfig {
            clusters,
            component_range,
            em: EmConfig::default(),
            folds: 10,
            seed: 0,
            completion_grid: default_completion_grid(),
            flag_sets: standard_flag_sets(),
            refit: RefitMode::PerFold,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::InvalidConfig("clusters must be positive"));
        }
        if self.completion_grid.is_empty()
            || self.completion_grid.iter().any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::InvalidConfig("completion grid must lie in [0, 1]"));
        }
        if self.flag_sets.is_empty() {
            return Err(Error::InvalidConfig("need at least one flag configuration"));
        }
        Ok(())
    }
}

/// Completion fractions 0, 0.05, …, 1.
pub fn default_completion_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// No weights, each single weight, and all weights combined.
pub fn standard_flag_sets() -> Vec<WeightFlags> {
    vec![
        WeightFlags::NONE,
        WeightFlags { emp: true, ..WeightFlags::NONE },
        WeightFlags { weekday: true, ..WeightFlags::NONE },
        WeightFlags { hour: true, ..WeightFlags::NONE },
        WeightFlags::ALL,
    ]
}

/// Classification and prediction quality at one completion fraction, for
/// one flag configuration, averaged over folds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionMetrics {
    /// Fraction of test prefixes whose top-scoring cluster is the truth.
    pub q_class: f64,
    /// Truth within the top two ranked clusters.
    pub best2: f64,
    /// Truth within the top three ranked clusters.
    pub best3: f64,
    /// Mean Haversine error (km) of the top-cluster prediction rule.
    pub q_pred_top_km: f64,
    /// Mean Haversine error (km) of the score-weighted prediction rule.
    pub q_pred_weighted_km: f64,
}

/// Accumulated outcomes of evaluating one fitted model on one test set.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    tested: usize,
    /// `hits[flag][p][0..3]`: top-1/2/3 hit counts.
    hits: Vec<Vec<[usize; 3]>>,
    /// `err_sums[flag][p][rule]`: summed Haversine errors in km.
    err_sums: Vec<Vec<[f64; 2]>>,
    /// Per cluster: (normalized score, is the true cluster) at completion 1.
    roc_samples: Vec<Vec<(f64, bool)>>,
}

impl SweepOutcome {
    pub fn tested(&self) -> usize {
        self.tested
    }
}

/// Evaluate a fitted model over every grid completion and flag set.
///
/// `truths[i]` is the ground-truth cluster of `test[i]`. ROC samples are
/// collected at completion 1.0 (when present in the grid) from the
/// unweighted normalized scores, one one-vs-all sample per cluster.
pub fn completion_sweep(
    model: &FlowModel,
    test: &[Trajectory],
    truths: &[usize],
    completion_grid: &[f64],
    flag_sets: &[WeightFlags],
) -> Result<SweepOutcome> {
    if test.len() != truths.len() {
        return Err(Error::LengthMismatch { left: test.len(), right: truths.len() });
    }
    let n_p = completion_grid.len();
    let n_f = flag_sets.len();
    let k = model.cluster_count();
    let mut outcome = SweepOutcome {
        tested: test.len(),
        hits: vec![vec![[0; 3]; n_p]; n_f],
        err_sums: vec![vec![[0.0; 2]; n_p]; n_f],
        roc_samples: vec![Vec::new(); k],
    };

    for (t, &truth) in test.iter().zip(truths) {
        for (pi, &p) in completion_grid.iter().enumerate() {
            let partial = prefix(t, PrefixFraction::new(p)?);
            for (fi, &flags) in flag_sets.iter().enumerate() {
                let classification = model.classify(&partial, flags);
                let rank = classification
                    .ranking
                    .iter()
                    .position(|&m| m == truth)
                    .expect("every cluster index appears in the ranking");
                for (slot, top) in outcome.hits[fi][pi].iter_mut().zip(1..=3) {
                    if rank < top {
                        *slot += 1;
                    }
                }
                let top = model
                    .predict_from_classification(&classification, PredictionRule::TopCluster);
                let weighted =
                    model.predict_from_classification(&classification, PredictionRule::Weighted);
                outcome.err_sums[fi][pi][0] += haversine(top, t.final_geo());
                outcome.err_sums[fi][pi][1] += haversine(weighted, t.final_geo());
            }
            if p == 1.0 {
                let unweighted = model.classify(&partial, WeightFlags::NONE);
                for (m, &s) in unweighted.scores.normalized().iter().enumerate() {
                    outcome.roc_samples[m].push((s, m == truth));
                }
            }
        }
    }
    Ok(outcome)
}

/// Fit on the training folds and sweep the held-out fold.
pub fn evaluate_fold(
    ts: &[Trajectory],
    plan: &FoldPlan,
    fold: usize,
    cfg: &EvalConfig,
    global_labels: Option<&ClusterAssignment>,
) -> Result<SweepOutcome> {
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let train: Vec<Trajectory> = train_idx.iter().map(|&i| ts[i].clone()).collect();

    let labels = match (cfg.refit, global_labels) {
        (RefitMode::FixedClustering, Some(global)) => {
            let labels: Vec<u32> =
                train_idx.iter().map(|&i| global.cluster_of(i) as u32).collect();
            ClusterAssignment::from_labels(labels, global.cluster_count())?
        }
        _ => {
            let distances = pairwise_distances(&train)?;
            let dendrogram = ward_linkage(&distances);
            cut(&dendrogram, cfg.clusters)?
        }
    };

    let em = EmConfig {
        seed: Rng::seed_from_u64(cfg.em.seed).fork(fold as u64).next_u64(),
        ..cfg.em.clone()
    };
    let model = fit_flow_model(&train, &labels, &em, cfg.component_range.clone())?;

    let test: Vec<Trajectory> = test_idx.iter().map(|&i| ts[i].clone()).collect();
    let truths: Vec<usize> =
        test.iter().map(|t| true_label(t, &train, &labels)).collect();
    completion_sweep(&model, &test, &truths, &cfg.completion_grid, &cfg.flag_sets)
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub completion_grid: Vec<f64>,
    pub flag_sets: Vec<WeightFlags>,
    /// `metrics[flag][p]`, aligned with `flag_sets` and `completion_grid`.
    pub metrics: Vec<Vec<CompletionMetrics>>,
    /// One-vs-all ROC per cluster index, pooled over folds; `None` where a
    /// cluster never had both positive and negative examples.
    pub roc: Vec<Option<RocCurve>>,
    pub folds: usize,
}

impl EvalReport {
    /// Average per-fold outcomes into the final report.
    pub fn from_outcomes(
        outcomes: &[SweepOutcome],
        completion_grid: Vec<f64>,
        flag_sets: Vec<WeightFlags>,
    ) -> Self {
        let n_p = completion_grid.len();
        let n_f = flag_sets.len();
        let mut metrics =
            vec![
                vec![
                    CompletionMetrics {
                        q_class: 0.0,
                        best2: 0.0,
                        best3: 0.0,
                        q_pred_top_km: 0.0,
                        q_pred_weighted_km: 0.0,
                    };
                    n_p
                ];
                n_f
            ];
        let folds = outcomes.len();
        for outcome in outcomes {
            let n = outcome.tested as f64;
            for (fi, row) in metrics.iter_mut().enumerate() {
                for (pi, m) in row.iter_mut().enumerate() {
                    m.q_class += outcome.hits[fi][pi][0] as f64 / n;
                    m.best2 += outcome.hits[fi][pi][1] as f64 / n;
                    m.best3 += outcome.hits[fi][pi][2] as f64 / n;
                    m.q_pred_top_km += outcome.err_sums[fi][pi][0] / n;
                    m.q_pred_weighted_km += outcome.err_sums[fi][pi][1] / n;
                }
            }
        }
        for row in &mut metrics {
            for m in row {
                m.q_class /= folds as f64;
                m.best2 /= folds as f64;
                m.best3 /= folds as f64;
                m.q_pred_top_km /= folds as f64;
                m.q_pred_weighted_km /= folds as f64;
            }
        }

        let k = outcomes.iter().map(|o| o.roc_samples.len()).max().unwrap_or(0);
        let mut roc = Vec::with_capacity(k);
        for m in 0..k {
            let mut scores = Vec::new();
            let mut positives = Vec::new();
            for outcome in outcomes {
                if let Some(samples) = outcome.roc_samples.get(m) {
                    for &(s, pos) in samples {
                        scores.push(s);
                        positives.push(pos);
                    }
                }
            }
            roc.push(roc_auc(&scores, &positives));
        }

        EvalReport { completion_grid, flag_sets, metrics, roc, folds }
    }

    /// Metrics for a flag set and completion fraction, if present.
    pub fn metrics_at(&self, flags: WeightFlags, p: f64) -> Option<&CompletionMetrics> {
        let fi = self.flag_sets.iter().position(|&f| f == flags)?;
        let pi = self.completion_grid.iter().position(|&g| g == p)?;
        Some(&self.metrics[fi][pi])
    }
}

/// Run the full cross-validated evaluation.
pub fn cross_validate(ts: &[Trajectory], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let plan = kfold(ts.len(), cfg.folds, cfg.seed)?;
    let global_labels = match cfg.refit {
        RefitMode::FixedClustering => {
            let distances = pairwise_distances(ts)?;
            Some(cut(&ward_linkage(&distances), cfg.clusters)?)
        }
        RefitMode::PerFold => None,
    };
    let mut outcomes = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        outcomes.push(evaluate_fold(ts, &plan, fold, cfg, global_labels.as_ref())?);
    }
    Ok(EvalReport::from_outcomes(
        &outcomes,
        cfg.completion_grid.clone(),
        cfg.flag_sets.clone(),
    ))
}
