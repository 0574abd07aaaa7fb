//! Offline curriculum filtering of label noise.
//!
//! An auxiliary classifier is trained on the raw noisy source for a fixed
//! number of early epochs while the full-dataset per-example cross-entropy
//! is recorded at the *start* of every epoch (frozen parameters, so the
//! ledger is independent of batch order within an epoch). Epoch-averaged
//! losses are then thresholded per class at a rank derived from the declared
//! label-noise rate, producing binary sample weights: small-loss examples
//! are trusted, the rest are set aside. The per-epoch global-threshold
//! variant is kept as the online baseline.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::{derive_seed, Dataset};
use crate::error::{Error, Result};
use crate::loss;
use crate::matrix::Matrix;
use crate::mlp::Mlp;
use crate::optim::SgdNesterov;

/// Per-example, per-epoch loss matrix: entry `(i, t)` is the loss of
/// example `i` under the frozen parameters at the start of epoch `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLedger {
    losses: Matrix,
}

impl LossLedger {
    pub fn new(examples: usize, epochs: usize) -> Self {
        LossLedger {
            losses: Matrix::zeros(examples, epochs),
        }
    }

    /// Wrap an `m x T` loss matrix (artifact reload path).
    pub fn from_matrix(losses: Matrix) -> Self {
        LossLedger { losses }
    }

    pub fn examples(&self) -> usize {
        self.losses.rows()
    }

    pub fn epochs(&self) -> usize {
        self.losses.cols()
    }

    pub fn loss(&self, example: usize, epoch: usize) -> f64 {
        self.losses.get(example, epoch)
    }

    pub fn epoch_column(&self, epoch: usize) -> Vec<f64> {
        (0..self.examples()).map(|i| self.loss(i, epoch)).collect()
    }

    fn record(&mut self, epoch: usize, column: &[f64]) {
        for (i, &v) in column.iter().enumerate() {
            self.losses.set(i, epoch, v);
        }
    }

    /// Arithmetic mean along epochs.
    pub fn average_losses(&self) -> Vec<f64> {
        let t = self.epochs() as f64;
        (0..self.examples())
            .map(|i| (0..self.epochs()).map(|e| self.loss(i, e)).sum::<f64>() / t)
            .collect()
    }
}

/// Per-class loss thresholds plus the keep fractions that produced them.
/// `gamma[k] == f64::NEG_INFINITY` means class `k` keeps nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassThresholds {
    pub gamma: Vec<f64>,
    pub keep_fraction: Vec<f64>,
}

/// Binary per-example weights: `true` = trusted.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights {
    pub w: Vec<bool>,
}

impl SampleWeights {
    pub fn kept(&self) -> usize {
        self.w.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.w
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    /// Untrusted complement. Produced by the filter, retained in run
    /// artifacts, and deliberately unused by the adaptation stage.
    pub fn rejected_indices(&self) -> Vec<usize> {
        self.w
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| (!k).then_some(i))
            .collect()
    }
}

/// Training options for the auxiliary loss-collection run.
#[derive(Debug, Clone)]
pub struct CollectOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch: usize,
}

/// Train an auxiliary classifier on the raw noisy source for `epochs`
/// epochs, recording the full-dataset per-example cross-entropy BEFORE each
/// epoch's updates. Returns the trained network and the `m x T` ledger.
///
/// The auxiliary network sees raw features (no representation in front) and
/// is discarded after filtering.
pub fn collect_training_losses(
    mut net: Mlp,
    source: &Dataset,
    opts: &CollectOptions,
    seed: u64,
) -> Result<(Mlp, LossLedger)> {
    if opts.epochs == 0 {
        return Err(Error::config(
            "need at least one collection epoch".to_string(),
        ));
    }
    if source.is_empty() {
        return Err(Error::input("source dataset is empty".to_string()));
    }
    if opts.batch == 0 {
        return Err(Error::config("batch size must be positive".to_string()));
    }
    let m = source.len();
    let features = source.feature_matrix();
    let labels = source.observed_labels();
    let mut opt = SgdNesterov::new(opts.learning_rate, opts.momentum, &net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x57a6e1));
    let mut ledger = LossLedger::new(m, opts.epochs);
    let mut order: Vec<usize> = (0..m).collect();

    for epoch in 0..opts.epochs {
        // Frozen-parameter pass over the full dataset.
        let logits = net.forward(&features)?;
        let per_example = loss::per_example_cross_entropy(&logits, &labels)?;
        if per_example.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite loss while collecting at epoch {epoch}"
            )));
        }
        ledger.record(epoch, &per_example);

        // One epoch of mini-batch SGD on (observed features, observed labels).
        for i in (1..m).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(opts.batch.min(m)) {
            let x = source.gather_features(chunk);
            let y = source.gather_observed_labels(chunk);
            let trace = net.forward_trace(&x)?;
            let (batch_loss, d_logits) = loss::mean_cross_entropy_and_grad(trace.logits(), &y)?;
            if !batch_loss.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            let (grads, _) = net.backward(&trace, &d_logits);
            opt.step(&mut net, &grads)?;
        }
    }
    Ok((net, ledger))
}

/// The keep fraction `p = max(1 - 1.2 r, 0.8 (1 - r))` for a declared
/// label-noise rate `r`. The more conservative of the two branches.
pub fn keep_fraction(noise_rate: f64) -> f64 {
    (1.0 - 1.2 * noise_rate).max(0.8 * (1.0 - noise_rate))
}

/// The plain variant `p = 1 - r`, selectable by config.
pub fn keep_fraction_plain(noise_rate: f64) -> f64 {
    1.0 - noise_rate
}

/// Which keep-fraction rule to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeepRule {
    /// `max(1 - 1.2 r, 0.8 (1 - r))`.
    #[default]
    Safer,
    /// `1 - r`.
    OneMinusRate,
}

impl KeepRule {
    pub fn fraction(&self, noise_rate: f64) -> f64 {
        match self {
            KeepRule::Safer => keep_fraction(noise_rate),
            KeepRule::OneMinusRate => keep_fraction_plain(noise_rate),
        }
    }
}

/// Per-class thresholds: `gamma[k]` is the `ceil(m_k * p_k)`-th smallest
/// averaged loss among class-k examples (1-indexed). If `m_k * p_k < 1` the
/// class keeps nothing and the threshold is the `-inf` sentinel. Ties at
/// the threshold all pass the later `<=` test.
pub fn class_thresholds(
    avg_losses: &[f64],
    labels: &[usize],
    keep: &[f64],
) -> Result<ClassThresholds> {
    if avg_losses.len() != labels.len() {
        return Err(Error::config(format!(
            "{} losses for {} labels",
            avg_losses.len(),
            labels.len()
        )));
    }
    let classes = keep.len();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::input(format!("label {bad} out of range")));
    }
    if keep.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::input(
            "keep fractions must lie in [0, 1]".to_string(),
        ));
    }
    let mut gamma = vec![f64::NEG_INFINITY; classes];
    for k in 0..classes {
        let mut class_losses: Vec<f64> = avg_losses
            .iter()
            .zip(labels)
            .filter_map(|(&l, &y)| (y == k).then_some(l))
            .collect();
        if class_losses.is_empty() {
            return Err(Error::input(format!("class {k} has no examples")));
        }
        let rank = class_losses.len() as f64 * keep[k];
        if rank < 1.0 {
            continue; // sentinel: keep nothing
        }
        class_losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = (rank.ceil() as usize).min(class_losses.len());
        gamma[k] = class_losses[idx - 1];
    }
    Ok(ClassThresholds {
        gamma,
        keep_fraction: keep.to_vec(),
    })
}

/// `w_i = 1` iff the averaged loss of example `i` is at or below the
/// threshold of its observed class.
pub fn assign_weights(
    avg_losses: &[f64],
    labels: &[usize],
    thresholds: &ClassThresholds,
) -> Result<SampleWeights> {
    if avg_losses.len() != labels.len() {
        return Err(Error::config(format!(
            "{} losses for {} labels",
            avg_losses.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= thresholds.gamma.len()) {
        return Err(Error::input(format!("label {bad} out of range")));
    }
    let w = avg_losses
        .iter()
        .zip(labels)
        .map(|(&l, &y)| l <= thresholds.gamma[y])
        .collect();
    Ok(SampleWeights { w })
}

/// The conditional-weighted empirical risk: mean over ALL `m` examples of
/// `w_i * CE_i`. The divisor counts kept and dropped examples alike.
pub fn conditional_weighted_risk(
    net: &Mlp,
    data: &Dataset,
    weights: &SampleWeights,
) -> Result<f64> {
    if weights.w.len() != data.len() {
        return Err(Error::config(format!(
            "{} weights for {} examples",
            weights.w.len(),
            data.len()
        )));
    }
    let logits = net.forward(&data.feature_matrix())?;
    let per = loss::per_example_cross_entropy(&logits, &data.observed_labels())?;
    let total: f64 = per
        .iter()
        .zip(&weights.w)
        .map(|(&l, &keep)| if keep { l } else { 0.0 })
        .sum();
    Ok(total / data.len() as f64)
}

/// The online baseline: per-epoch weights from a single global threshold,
/// no class conditioning, no averaging.
pub fn online_curriculum_weights(losses_this_epoch: &[f64], gamma: f64) -> SampleWeights {
    SampleWeights {
        w: losses_this_epoch.iter().map(|&l| l <= gamma).collect(),
    }
}

/// Global threshold that keeps exactly `kept` of the given losses (the
/// `kept`-th smallest value; ties may keep more via `<=`). Used to hand the
/// online baseline the same keep budget as the offline filter.
pub fn global_threshold_for_count(losses: &[f64], kept: usize) -> f64 {
    if kept == 0 {
        return f64::NEG_INFINITY;
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[kept.min(sorted.len()) - 1]
}

/// Filter quality against ground-truth corruption flags.
///
/// "Clean" here means label-clean: feature-noisy examples count as clean
/// (keeping them is desirable), and are reported separately in the
/// breakdown. With an empty keep set precision is vacuously 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMetrics {
    pub precision: f64,
    pub recall: f64,
    pub kept_fraction: f64,
    pub kept: usize,
    /// Kept counts by category: [clean, label-only, feature-only, both].
    pub kept_by_category: [usize; 4],
    /// Dataset totals in the same categories.
    pub total_by_category: [usize; 4],
}

pub fn noise_category(label_noisy: bool, feature_noisy: bool) -> usize {
    match (label_noisy, feature_noisy) {
        (false, false) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (true, true) => 3,
    }
}

pub fn filter_metrics(weights: &SampleWeights, source: &Dataset) -> Result<FilterMetrics> {
    if weights.w.len() != source.len() {
        return Err(Error::config(format!(
            "{} weights for {} examples",
            weights.w.len(),
            source.len()
        )));
    }
    let mut kept_by_category = [0usize; 4];
    let mut total_by_category = [0usize; 4];
    let mut kept = 0usize;
    let mut kept_clean = 0usize;
    let mut total_clean = 0usize;
    for (s, &keep) in source.samples.iter().zip(&weights.w) {
        let cat = noise_category(s.label_noisy, s.feature_noisy);
        total_by_category[cat] += 1;
        if !s.label_noisy {
            total_clean += 1;
        }
        if keep {
            kept += 1;
            kept_by_category[cat] += 1;
            if !s.label_noisy {
                kept_clean += 1;
            }
        }
    }
    let precision = if kept == 0 {
        1.0
    } else {
        kept_clean as f64 / kept as f64
    };
    let recall = if total_clean == 0 {
        0.0
    } else {
        kept_clean as f64 / total_clean as f64
    };
    Ok(FilterMetrics {
        precision,
        recall,
        kept_fraction: kept as f64 / source.len() as f64,
        kept,
        kept_by_category,
        total_by_category,
    })
}
