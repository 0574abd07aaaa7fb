//! Proxy-margin-discrepancy adversarial training.
//!
//! Three heads: a representation `psi`, a main classifier `f`, and an
//! adversarial classifier `f_adv`. The adversarial classifier maximizes a
//! pair of disparity terms that measure, through `f`'s own argmax labels,
//! how separable the noisy source, a low-loss proxy subset, and the target
//! look in representation space; `psi` minimizes classification loss plus
//! `beta` times the same disparity; `f` is trained by cross-entropy on the
//! proxy subset. The proxy grows over iterations on the `min(n/N_max, tau)`
//! schedule, starting from the full batch.
//!
//! Update order within one iteration (the single-pass default):
//!
//! 1. `f` descends cross-entropy on the previous iteration's proxy
//!    selection (the full current batch at iteration 1);
//! 2. `psi` descends `CE(trusted batch) + beta * (source + target
//!    disparity)`, the disparity evaluated with the previous selection;
//! 3. the new proxy selection is taken from the current batch;
//! 4. `f_adv` ascends the disparity evaluated with the new selection.
//!
//! `f`'s argmax labels are recomputed wherever needed and receive no
//! gradient. The maximization is implemented as gradient ascent with a
//! separate optimizer, not a reversal trick. A two-pass variant of the
//! `psi` update (classification first, disparity after the `f_adv` step)
//! is available behind [`PmdConfig::two_pass_psi`] for ablation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::{derive_seed, Dataset};
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::loss;
use crate::matrix::Matrix;
use crate::mlp::{GradBundle, Mlp, Trace};
use crate::optim::SgdNesterov;

const TAG_PSI: u64 = 0x951;
const TAG_F: u64 = 0xF0;
const TAG_F_ADV: u64 = 0xFAD;
const TAG_SOURCE_BATCHES: u64 = 0xB0;
const TAG_TARGET_BATCHES: u64 = 0xB1;
const TAG_NOISY_BATCHES: u64 = 0xB2;

/// The three-head network. `psi`'s output feeds both classifiers, which
/// share their class count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialNet {
    pub psi: Mlp,
    pub f: Mlp,
    pub f_adv: Mlp,
}

impl AdversarialNet {
    pub fn new(psi: Mlp, f: Mlp, f_adv: Mlp) -> Result<Self> {
        if psi.output_dim() != f.input_dim() || psi.output_dim() != f_adv.input_dim() {
            return Err(Error::config(format!(
                "representation output {} must feed both classifiers ({} / {})",
                psi.output_dim(),
                f.input_dim(),
                f_adv.input_dim()
            )));
        }
        if f.output_dim() != f_adv.output_dim() {
            return Err(Error::config(
                "classifier heads must share the class count".to_string(),
            ));
        }
        Ok(AdversarialNet { psi, f, f_adv })
    }

    /// Seeded init. `psi_widths` are the representation's layer widths after
    /// the input (last entry = embedding dimension); `head_widths` the hidden
    /// widths of both classifier heads.
    pub fn init(
        input_dim: usize,
        psi_widths: &[usize],
        head_widths: &[usize],
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if psi_widths.is_empty() {
            return Err(Error::config("psi needs at least one layer".to_string()));
        }
        let mut psi_dims = vec![input_dim];
        psi_dims.extend_from_slice(psi_widths);
        let embed = *psi_widths.last().unwrap();
        let mut head_dims = vec![embed];
        head_dims.extend_from_slice(head_widths);
        head_dims.push(classes);
        let psi = Mlp::init(&psi_dims, derive_seed(seed, TAG_PSI))?;
        let f = Mlp::init(&head_dims, derive_seed(seed, TAG_F))?;
        let f_adv = Mlp::init(&head_dims, derive_seed(seed, TAG_F_ADV))?;
        AdversarialNet::new(psi, f, f_adv)
    }

    pub fn embedding_dim(&self) -> usize {
        self.psi.output_dim()
    }

    pub fn classes(&self) -> usize {
        self.f.output_dim()
    }

    /// Argmax labels of `f` through `psi`; ties resolve to the lowest index.
    pub fn predicted_labels(&self, x: &Matrix) -> Result<Vec<usize>> {
        let feats = self.psi.forward(x)?;
        let logits = self.f.forward(&feats)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Hyperparameters of the adversarial stage.
#[derive(Debug, Clone)]
pub struct PmdConfig {
    /// Margin factor weighting the agreement terms; >= 1.
    pub alpha: f64,
    /// Trade-off between source risk and discrepancy in `psi`'s objective.
    /// Zero disables the adversarial path for `psi` (the reduction case);
    /// `f_adv`'s own maximization is always unscaled.
    pub beta: f64,
    /// Final proxy fraction; the schedule ramps up to it.
    pub tau: f64,
    pub n_max: usize,
    pub batch: usize,
    /// Learning rate of the classifier heads.
    pub eta: f64,
    /// Learning rate of the representation (a tenth of `eta` in the
    /// standard setup).
    pub eta_psi: f64,
    pub momentum: f64,
    /// Evaluate target accuracy every this many iterations (0 = never);
    /// the final iteration is always evaluated when nonzero.
    pub eval_every: usize,
    /// Literal two-pass `psi` update for ablation.
    pub two_pass_psi: bool,
    /// Evaluate the noisy-source agreement term of the source disparity on
    /// batches from the full noisy source instead of the trusted set.
    pub disparity_on_full_source: bool,
}

impl PmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 1.0 || !self.alpha.is_finite() {
            return Err(Error::config("alpha must be >= 1".to_string()));
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::config("beta must be >= 0".to_string()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("tau must lie in [0, 1]".to_string()));
        }
        if self.n_max == 0 {
            return Err(Error::config("n_max must be >= 1".to_string()));
        }
        if self.batch == 0 {
            return Err(Error::config("batch size must be >= 1".to_string()));
        }
        if self.eta <= 0.0 || self.eta_psi <= 0.0 {
            return Err(Error::config("learning rates must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)".to_string()));
        }
        Ok(())
    }
}

/// Proxy fraction used at iteration `n` (1-based): `min(n / N_max, tau)`,
/// except iteration 1 where the fraction starts at 1 (full batch).
pub fn tau_schedule(n: usize, n_max: usize, tau: f64) -> f64 {
    debug_assert!(n >= 1 && n <= n_max);
    if n == 1 {
        return 1.0;
    }
    (n as f64 / n_max as f64).min(tau)
}

/// Low-loss subset of one batch: local indices plus the fraction used.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxySelection {
    /// Indices into the batch, ascending.
    pub kept: Vec<usize>,
    pub tau_used: f64,
}

/// The minimizer of total loss under the size floor `|Q'| >= tau' * b` is
/// the `ceil(tau' * b)` smallest-loss examples, taken with equality (adding
/// any example only increases the objective). Ties break toward the lowest
/// index; the selection never shrinks below one example; `tau' = 1` keeps
/// the full batch.
pub fn select_proxy_batch(losses: &[f64], tau_prime: f64) -> ProxySelection {
    let b = losses.len();
    if b == 0 {
        return ProxySelection {
            kept: Vec::new(),
            tau_used: tau_prime,
        };
    }
    let floor = (tau_prime * b as f64).ceil() as usize;
    let size = floor.clamp(1, b);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&a, &c| losses[a].partial_cmp(&losses[c]).unwrap().then(a.cmp(&c)));
    let mut kept: Vec<usize> = order.into_iter().take(size).collect();
    kept.sort_unstable();
    ProxySelection {
        kept,
        tau_used: tau_prime,
    }
}

// ---------------------------------------------------------------------------
// Disparity terms
// ---------------------------------------------------------------------------

struct TermEval {
    psi_trace: Trace,
    fadv_trace: Trace,
    /// Per-row `log sigma_label(f_adv . psi)`.
    agree: Vec<f64>,
    /// Row-wise gradients of `agree` w.r.t. the `f_adv` logits.
    agree_grad: Matrix,
    /// Per-row `log(1 - sigma_label(...))`; filled only when requested.
    comp: Vec<f64>,
    comp_grad: Matrix,
}

fn eval_term(
    net: &AdversarialNet,
    x: &Matrix,
    labels: &[usize],
    with_complement: bool,
) -> Result<TermEval> {
    let psi_trace = net.psi.forward_trace(x)?;
    let fadv_trace = net.f_adv.forward_trace(psi_trace.logits())?;
    let logits = fadv_trace.logits();
    let n = logits.rows();
    let k = logits.cols();
    let mut agree = Vec::with_capacity(n);
    let mut agree_grad = Matrix::zeros(n, k);
    let mut comp = Vec::new();
    let mut comp_grad = Matrix::zeros(if with_complement { n } else { 0 }, k);
    for (i, &label) in labels.iter().enumerate().take(n) {
        let (v, g) = loss::agreement_log_prob(logits.row(i), label);
        agree.push(v);
        agree_grad.row_mut(i).copy_from_slice(&g);
        if with_complement {
            let (cv, cg) = loss::complement_log_prob(logits.row(i), label);
            comp.push(cv);
            comp_grad.row_mut(i).copy_from_slice(&cg);
        }
    }
    Ok(TermEval {
        psi_trace,
        fadv_trace,
        agree,
        agree_grad,
        comp,
        comp_grad,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Backprop one term through `f_adv` (and produce the gradient with respect
/// to the representation output). Each row's agreement gradient is weighted
/// `agree_coeff`, the complement gradient `comp_coeff`.
fn term_grads(
    net: &AdversarialNet,
    eval: &TermEval,
    agree_coeff: f64,
    comp_coeff: f64,
) -> (GradBundle, Matrix) {
    let n = eval.agree_grad.rows();
    let k = eval.agree_grad.cols();
    let mut d_logits = Matrix::zeros(n, k);
    for i in 0..n {
        let row = d_logits.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let mut acc = agree_coeff * eval.agree_grad.get(i, j);
            if comp_coeff != 0.0 && eval.comp_grad.rows() == n {
                acc += comp_coeff * eval.comp_grad.get(i, j);
            }
            *v = acc;
        }
    }
    net.f_adv.backward(&eval.fadv_trace, &d_logits)
}

/// The source-side disparity
/// `alpha * E_batch[log sigma_h(f_adv)] - E_proxy[log sigma_h(f_adv)]`,
/// where `h` is `f`'s argmax label, treated as a constant. The proxy indices
/// select rows of `batch`. An empty proxy skips the term and returns 0 with
/// a warning.
pub fn source_disparity(
    net: &AdversarialNet,
    batch: &Matrix,
    proxy: &ProxySelection,
    alpha: f64,
) -> Result<f64> {
    if batch.rows() == 0 {
        return Err(Error::input("source batch is empty".to_string()));
    }
    if proxy.kept.is_empty() {
        eprintln!("warning: empty proxy selection, source disparity skipped");
        return Ok(0.0);
    }
    let labels = net.predicted_labels(batch)?;
    let proxy_rows = batch.gather_rows(&proxy.kept);
    let proxy_labels: Vec<usize> = proxy.kept.iter().map(|&i| labels[i]).collect();
    source_disparity_fixed_labels(net, batch, &labels, &proxy_rows, &proxy_labels, alpha)
}

/// Value of the source disparity with the argmax labels supplied by the
/// caller; the form finite-difference checks differentiate.
pub fn source_disparity_fixed_labels(
    net: &AdversarialNet,
    batch: &Matrix,
    batch_labels: &[usize],
    proxy: &Matrix,
    proxy_labels: &[usize],
    alpha: f64,
) -> Result<f64> {
    let qn = eval_term(net, batch, batch_labels, false)?;
    let px = eval_term(net, proxy, proxy_labels, false)?;
    Ok(alpha * mean(&qn.agree) - mean(&px.agree))
}

/// The target-side disparity
/// `alpha * E_proxy[log sigma_h(f_adv)] + E_target[log(1 - sigma_h(f_adv))]`
/// with the complement probability clamped before the log. `proxy` holds the
/// selected source rows. Empty proxy skips with a warning.
pub fn target_disparity(
    net: &AdversarialNet,
    proxy: &Matrix,
    target: &Matrix,
    alpha: f64,
) -> Result<f64> {
    if target.rows() == 0 {
        return Err(Error::input("target batch is empty".to_string()));
    }
    if proxy.rows() == 0 {
        eprintln!("warning: empty proxy selection, target disparity skipped");
        return Ok(0.0);
    }
    let proxy_labels = net.predicted_labels(proxy)?;
    let target_labels = net.predicted_labels(target)?;
    target_disparity_fixed_labels(net, proxy, &proxy_labels, target, &target_labels, alpha)
}

pub fn target_disparity_fixed_labels(
    net: &AdversarialNet,
    proxy: &Matrix,
    proxy_labels: &[usize],
    target: &Matrix,
    target_labels: &[usize],
    alpha: f64,
) -> Result<f64> {
    let px = eval_term(net, proxy, proxy_labels, false)?;
    let tg = eval_term(net, target, target_labels, true)?;
    Ok(alpha * mean(&px.agree) + mean(&tg.comp))
}

/// Full gradients of `source + target disparity` with respect to `f_adv`
/// and `psi`, plus both values. Exposed so correctness checks can compare
/// every path against finite differences.
pub struct DisparityGrads {
    pub source_value: f64,
    pub target_value: f64,
    pub d_f_adv: GradBundle,
    pub d_psi: GradBundle,
}

#[allow(clippy::too_many_arguments)]
pub fn disparity_with_grads(
    net: &AdversarialNet,
    qn_batch: &Matrix,
    qn_labels: &[usize],
    proxy: &Matrix,
    proxy_labels: &[usize],
    target: &Matrix,
    target_labels: &[usize],
    alpha: f64,
) -> Result<DisparityGrads> {
    let qn = eval_term(net, qn_batch, qn_labels, false)?;
    let px = eval_term(net, proxy, proxy_labels, false)?;
    let tg = eval_term(net, target, target_labels, true)?;

    let source_value = alpha * mean(&qn.agree) - mean(&px.agree);
    let target_value = alpha * mean(&px.agree) + mean(&tg.comp);

    let mut d_f_adv = GradBundle::zeros_like(&net.f_adv);
    let mut d_psi = GradBundle::zeros_like(&net.psi);

    // Noisy-batch agreement, weight alpha / |batch|.
    let (g, d_feats) = term_grads(net, &qn, alpha / qn.agree.len() as f64, 0.0);
    d_f_adv.add_scaled(&g, 1.0);
    let (pg, _) = net.psi.backward(&qn.psi_trace, &d_feats);
    d_psi.add_scaled(&pg, 1.0);

    // Proxy agreement appears in both terms: (alpha - 1) / |proxy|.
    let (g, d_feats) = term_grads(net, &px, (alpha - 1.0) / px.agree.len() as f64, 0.0);
    d_f_adv.add_scaled(&g, 1.0);
    let (pg, _) = net.psi.backward(&px.psi_trace, &d_feats);
    d_psi.add_scaled(&pg, 1.0);

    // Target complement, weight 1 / |target|.
    let (g, d_feats) = term_grads(net, &tg, 0.0, 1.0 / tg.comp.len() as f64);
    d_f_adv.add_scaled(&g, 1.0);
    let (pg, _) = net.psi.backward(&tg.psi_trace, &d_feats);
    d_psi.add_scaled(&pg, 1.0);

    Ok(DisparityGrads {
        source_value,
        target_value,
        d_f_adv,
        d_psi,
    })
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

/// Epoch-cycled batch sampler: shuffles the index pool, yields full batches,
/// reshuffles when exhausted. Deterministic per RNG seed.
struct BatchStream {
    indices: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(indices: Vec<usize>, batch: usize, rng: ChaCha8Rng) -> Self {
        let mut s = BatchStream {
            batch: batch.min(indices.len()).max(1),
            indices,
            pos: 0,
            rng,
        };
        s.shuffle();
        s
    }

    fn shuffle(&mut self) {
        for i in (1..self.indices.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            self.indices.swap(i, j);
        }
    }

    fn next(&mut self) -> Vec<usize> {
        if self.pos + self.batch > self.indices.len() {
            self.shuffle();
            self.pos = 0;
        }
        let out = self.indices[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        out
    }
}

/// One history row per iteration of [`train_adversarial`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub tau_prime: f64,
    pub source_ce: f64,
    pub source_disparity: f64,
    pub target_disparity: f64,
    pub eval_accuracy: Option<f64>,
}

/// One history row per iteration of [`train_classifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierRecord {
    pub iteration: usize,
    pub source_ce: f64,
    pub eval_accuracy: Option<f64>,
}

fn check_finite(value: f64, what: &str, iteration: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite {what} at iteration {iteration}"
        )));
    }
    Ok(())
}

/// The adversarial stage. `trusted_idx` points into `source`; the remaining
/// (untrusted) examples stay in the artifact but are never consumed here,
/// except for the optional full-source agreement term.
pub fn train_adversarial(
    mut net: AdversarialNet,
    source: &Dataset,
    trusted_idx: &[usize],
    target: &Dataset,
    cfg: &PmdConfig,
    seed: u64,
) -> Result<(AdversarialNet, Vec<TrainRecord>)> {
    cfg.validate()?;
    if trusted_idx.is_empty() {
        return Err(Error::input("trusted set is empty".to_string()));
    }
    if target.is_empty() {
        return Err(Error::input("target set is empty".to_string()));
    }

    let mut opt_f = SgdNesterov::new(cfg.eta, cfg.momentum, &net.f)?;
    let mut opt_fadv = SgdNesterov::new(cfg.eta, cfg.momentum, &net.f_adv)?;
    let mut opt_psi = SgdNesterov::new(cfg.eta_psi, cfg.momentum, &net.psi)?;

    let mut src_stream = BatchStream::new(
        trusted_idx.to_vec(),
        cfg.batch,
        ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_SOURCE_BATCHES)),
    );
    let mut tgt_stream = BatchStream::new(
        (0..target.len()).collect(),
        cfg.batch,
        ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_TARGET_BATCHES)),
    );
    let mut noisy_stream = cfg.disparity_on_full_source.then(|| {
        BatchStream::new(
            (0..source.len()).collect(),
            cfg.batch,
            ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_NOISY_BATCHES)),
        )
    });

    let mut prev_proxy: Option<Vec<usize>> = None;
    let mut history = Vec::with_capacity(cfg.n_max);

    for n in 1..=cfg.n_max {
        let tau_prime = tau_schedule(n, cfg.n_max, cfg.tau);
        let batch_idx = src_stream.next();
        let tgt_idx = tgt_stream.next();
        let x_batch = source.gather_features(&batch_idx);
        let y_batch = source.gather_observed_labels(&batch_idx);
        let x_target = target.gather_features(&tgt_idx);
        // The noisy-source agreement batch: trusted batch by default.
        let x_qn = match noisy_stream.as_mut() {
            Some(stream) => source.gather_features(&stream.next()),
            None => x_batch.clone(),
        };

        // (1) f descends cross-entropy on the previous proxy selection.
        let f_idx: &[usize] = prev_proxy.as_deref().unwrap_or(&batch_idx);
        let x_f = source.gather_features(f_idx);
        let y_f = source.gather_observed_labels(f_idx);
        let feats_f = net.psi.forward(&x_f)?;
        let trace_f = net.f.forward_trace(&feats_f)?;
        let (f_ce, d_logits_f) = loss::mean_cross_entropy_and_grad(trace_f.logits(), &y_f)?;
        check_finite(f_ce, "classifier loss", n)?;
        let (grads_f, _) = net.f.backward(&trace_f, &d_logits_f);
        opt_f.step(&mut net.f, &grads_f)?;

        // (2) psi descends CE(trusted batch) + beta * disparity(prev proxy).
        let proxy_global: Vec<usize> = prev_proxy.clone().unwrap_or_else(|| batch_idx.clone());
        let x_proxy = source.gather_features(&proxy_global);
        let (source_ce, source_disp, target_disp) = if cfg.two_pass_psi {
            let source_ce = psi_classification_step(&mut net, &mut opt_psi, &x_batch, &y_batch, n)?;
            (source_ce, f64::NAN, f64::NAN) // disparity recorded after the second pass
        } else {
            psi_joint_step(
                &mut net,
                &mut opt_psi,
                &x_batch,
                &y_batch,
                &x_qn,
                &x_proxy,
                &x_target,
                cfg,
                n,
            )?
        };

        // (3) new proxy selection from the current batch.
        let feats_now = net.psi.forward(&x_batch)?;
        let logits_now = net.f.forward(&feats_now)?;
        let losses_now = loss::per_example_cross_entropy(&logits_now, &y_batch)?;
        let selection = select_proxy_batch(&losses_now, tau_prime);
        let new_proxy: Vec<usize> = selection.kept.iter().map(|&l| batch_idx[l]).collect();
        let x_proxy_new = x_batch.gather_rows(&selection.kept);

        // (4) f_adv ascends the disparity with the new selection.
        let qn_labels = net.predicted_labels(&x_qn)?;
        let proxy_labels = net.predicted_labels(&x_proxy_new)?;
        let target_labels = net.predicted_labels(&x_target)?;
        let grads = disparity_with_grads(
            &net,
            &x_qn,
            &qn_labels,
            &x_proxy_new,
            &proxy_labels,
            &x_target,
            &target_labels,
            cfg.alpha,
        )?;
        check_finite(grads.source_value, "source disparity", n)?;
        check_finite(grads.target_value, "target disparity", n)?;
        let mut ascent = grads.d_f_adv;
        ascent.negate();
        opt_fadv.step(&mut net.f_adv, &ascent)?;

        // Two-pass ablation: psi's disparity descent happens here, after the
        // f_adv update, with the new selection.
        let (source_disp, target_disp) = if cfg.two_pass_psi {
            let (s, t) = psi_disparity_step(
                &mut net,
                &mut opt_psi,
                &x_qn,
                &x_proxy_new,
                &x_target,
                cfg,
                n,
            )?;
            (s, t)
        } else {
            (source_disp, target_disp)
        };

        let eval_accuracy = if cfg.eval_every > 0 && (n % cfg.eval_every == 0 || n == cfg.n_max) {
            Some(diagnostics::target_accuracy(&net, target)?)
        } else {
            None
        };

        history.push(TrainRecord {
            iteration: n,
            tau_prime,
            source_ce,
            source_disparity: source_disp,
            target_disparity: target_disp,
            eval_accuracy,
        });
        prev_proxy = Some(new_proxy);
    }

    Ok((net, history))
}

/// psi step of the single-pass variant: one descent on
/// `CE + beta * (source + target disparity)`, the disparity carrying the
/// previous proxy selection. Returns the recorded loss components.
#[allow(clippy::too_many_arguments)]
fn psi_joint_step(
    net: &mut AdversarialNet,
    opt_psi: &mut SgdNesterov,
    x_batch: &Matrix,
    y_batch: &[usize],
    x_qn: &Matrix,
    x_proxy: &Matrix,
    x_target: &Matrix,
    cfg: &PmdConfig,
    iteration: usize,
) -> Result<(f64, f64, f64)> {
    // Classification path.
    let psi_trace = net.psi.forward_trace(x_batch)?;
    let trace_f = net.f.forward_trace(psi_trace.logits())?;
    let (source_ce, d_logits) = loss::mean_cross_entropy_and_grad(trace_f.logits(), y_batch)?;
    check_finite(source_ce, "source cross-entropy", iteration)?;
    let (_, d_feats) = net.f.backward(&trace_f, &d_logits);
    let (mut psi_grads, _) = net.psi.backward(&psi_trace, &d_feats);

    // Disparity path; values are recorded even when beta = 0.
    let qn_labels = net.predicted_labels(x_qn)?;
    let proxy_labels = net.predicted_labels(x_proxy)?;
    let target_labels = net.predicted_labels(x_target)?;
    let disp = disparity_with_grads(
        net,
        x_qn,
        &qn_labels,
        x_proxy,
        &proxy_labels,
        x_target,
        &target_labels,
        cfg.alpha,
    )?;
    check_finite(disp.source_value, "source disparity", iteration)?;
    check_finite(disp.target_value, "target disparity", iteration)?;
    if cfg.beta > 0.0 {
        psi_grads.add_scaled(&disp.d_psi, cfg.beta);
    }
    opt_psi.step(&mut net.psi, &psi_grads)?;
    Ok((source_ce, disp.source_value, disp.target_value))
}

/// First pass of the two-pass ablation: plain classification descent.
fn psi_classification_step(
    net: &mut AdversarialNet,
    opt_psi: &mut SgdNesterov,
    x_batch: &Matrix,
    y_batch: &[usize],
    iteration: usize,
) -> Result<f64> {
    let psi_trace = net.psi.forward_trace(x_batch)?;
    let trace_f = net.f.forward_trace(psi_trace.logits())?;
    let (source_ce, d_logits) = loss::mean_cross_entropy_and_grad(trace_f.logits(), y_batch)?;
    check_finite(source_ce, "source cross-entropy", iteration)?;
    let (_, d_feats) = net.f.backward(&trace_f, &d_logits);
    let (psi_grads, _) = net.psi.backward(&psi_trace, &d_feats);
    opt_psi.step(&mut net.psi, &psi_grads)?;
    Ok(source_ce)
}

/// Second pass of the two-pass ablation: beta-scaled disparity descent.
fn psi_disparity_step(
    net: &mut AdversarialNet,
    opt_psi: &mut SgdNesterov,
    x_qn: &Matrix,
    x_proxy: &Matrix,
    x_target: &Matrix,
    cfg: &PmdConfig,
    iteration: usize,
) -> Result<(f64, f64)> {
    let qn_labels = net.predicted_labels(x_qn)?;
    let proxy_labels = net.predicted_labels(x_proxy)?;
    let target_labels = net.predicted_labels(x_target)?;
    let disp = disparity_with_grads(
        net,
        x_qn,
        &qn_labels,
        x_proxy,
        &proxy_labels,
        x_target,
        &target_labels,
        cfg.alpha,
    )?;
    check_finite(disp.source_value, "source disparity", iteration)?;
    check_finite(disp.target_value, "target disparity", iteration)?;
    if cfg.beta > 0.0 {
        let mut scaled = GradBundle::zeros_like(&net.psi);
        scaled.add_scaled(&disp.d_psi, cfg.beta);
        opt_psi.step(&mut net.psi, &scaled)?;
    }
    Ok((disp.source_value, disp.target_value))
}

/// Plain source training of `psi` and `f` on the given subset; the
/// adversarial head is left untouched. Used by the non-adversarial methods.
pub fn train_classifier(
    mut net: AdversarialNet,
    source: &Dataset,
    train_idx: &[usize],
    target: Option<&Dataset>,
    cfg: &PmdConfig,
    seed: u64,
) -> Result<(AdversarialNet, Vec<ClassifierRecord>)> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::input("training set is empty".to_string()));
    }
    let mut opt_f = SgdNesterov::new(cfg.eta, cfg.momentum, &net.f)?;
    let mut opt_psi = SgdNesterov::new(cfg.eta_psi, cfg.momentum, &net.psi)?;
    let mut stream = BatchStream::new(
        train_idx.to_vec(),
        cfg.batch,
        ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_SOURCE_BATCHES)),
    );
    let mut history = Vec::with_capacity(cfg.n_max);
    for n in 1..=cfg.n_max {
        let batch_idx = stream.next();
        let x = source.gather_features(&batch_idx);
        let y = source.gather_observed_labels(&batch_idx);
        let psi_trace = net.psi.forward_trace(&x)?;
        let trace_f = net.f.forward_trace(psi_trace.logits())?;
        let (ce, d_logits) = loss::mean_cross_entropy_and_grad(trace_f.logits(), &y)?;
        check_finite(ce, "source cross-entropy", n)?;
        let (grads_f, d_feats) = net.f.backward(&trace_f, &d_logits);
        let (grads_psi, _) = net.psi.backward(&psi_trace, &d_feats);
        opt_f.step(&mut net.f, &grads_f)?;
        opt_psi.step(&mut net.psi, &grads_psi)?;

        let eval_accuracy = match target {
            Some(t) if cfg.eval_every > 0 && (n % cfg.eval_every == 0 || n == cfg.n_max) => {
                Some(diagnostics::target_accuracy(&net, t)?)
            }
            _ => None,
        };
        history.push(ClassifierRecord {
            iteration: n,
            source_ce: ce,
            eval_accuracy,
        });
    }
    Ok((net, history))
}
