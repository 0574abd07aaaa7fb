//! Synthetic shifted-domain pairs with controlled, ground-truth-flagged
//! corruption.
//!
//! A [`DomainPair`] holds a labeled source set and an unlabeled-in-spirit
//! target set drawn from the same generating process composed with a shift
//! transform (rotation, translation, class-prior skew). Corruption operators
//! rewrite observed labels or features while retaining the clean values and
//! setting per-sample flags, so filters can later be scored against ground
//! truth. Every generator and corruptor is a pure function of its inputs
//! and a seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One example. `x` is what training sees; `x_clean`/`y_clean` are retained
/// for diagnostics only and are never mutated by corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub x_clean: Vec<f64>,
    pub y_clean: usize,
    pub y_obs: usize,
    pub label_noisy: bool,
    pub feature_noisy: bool,
}

impl Sample {
    pub(crate) fn clean(x: Vec<f64>, y: usize) -> Self {
        Sample {
            x_clean: x.clone(),
            x,
            y_clean: y,
            y_obs: y,
            label_noisy: false,
            feature_noisy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    classes: usize,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, classes: usize, dim: usize) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != dim || s.x_clean.len() != dim {
                return Err(Error::input(format!("sample {i} has wrong dimension")));
            }
            if s.y_clean >= classes || s.y_obs >= classes {
                return Err(Error::input(format!("sample {i} has label out of range")));
            }
        }
        Ok(Dataset {
            samples,
            classes,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Observed features as an `m x d` matrix.
    pub fn feature_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.len(), self.dim);
        for (i, s) in self.samples.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&s.x);
        }
        m
    }

    pub fn gather_features(&self, indices: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(indices.len(), self.dim);
        for (row, &i) in indices.iter().enumerate() {
            m.row_mut(row).copy_from_slice(&self.samples[i].x);
        }
        m
    }

    pub fn observed_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.y_obs).collect()
    }

    pub fn gather_observed_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.samples[i].y_obs).collect()
    }

    pub fn clean_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.y_clean).collect()
    }

    pub fn observed_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes];
        for s in &self.samples {
            counts[s.y_obs] += 1;
        }
        counts
    }

    pub fn clean_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes];
        for s in &self.samples {
            counts[s.y_clean] += 1;
        }
        counts
    }
}

/// Generating process for a domain pair.
#[derive(Debug, Clone, PartialEq)]
pub enum PairKind {
    /// Two interleaved half-circles in the plane; two classes.
    TwoMoons { noise_sigma: f64 },
    /// Isotropic Gaussian blobs with centers on a circle of radius
    /// `separation` in the first two coordinates.
    GaussianBlobs {
        classes: usize,
        dim: usize,
        separation: f64,
        noise_sigma: f64,
    },
}

impl PairKind {
    pub fn classes(&self) -> usize {
        match self {
            PairKind::TwoMoons { .. } => 2,
            PairKind::GaussianBlobs { classes, .. } => *classes,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PairKind::TwoMoons { .. } => 2,
            PairKind::GaussianBlobs { dim, .. } => *dim,
        }
    }
}

/// Shift applied to the target domain: a rotation in the first two
/// coordinates, a translation, and optionally different class priors.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    pub rotation_deg: f64,
    pub translation: Vec<f64>,
    pub target_priors: Option<Vec<f64>>,
}

impl ShiftSpec {
    pub fn identity() -> Self {
        ShiftSpec {
            rotation_deg: 0.0,
            translation: Vec::new(),
            target_priors: None,
        }
    }

    pub fn rotation(rotation_deg: f64) -> Self {
        ShiftSpec {
            rotation_deg,
            translation: Vec::new(),
            target_priors: None,
        }
    }

    pub(crate) fn apply(&self, x: &mut [f64]) {
        if self.rotation_deg != 0.0 && x.len() >= 2 {
            let theta = self.rotation_deg.to_radians();
            let (sin, cos) = theta.sin_cos();
            let (a, b) = (x[0], x[1]);
            x[0] = cos * a - sin * b;
            x[1] = sin * a + cos * b;
        }
        for (v, t) in x.iter_mut().zip(&self.translation) {
            *v += t;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: Dataset,
    pub target: Dataset,
    pub shift: ShiftSpec,
}

/// Noise applied to the source of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    None,
    Label,
    Feature,
    Mixed,
}

/// Corruption recipe: which mode, at what rate, with what feature-noise
/// parameters. In label mode the transition matrix defaults to
/// [`uniform_transition`] at rate `p_noise` when not supplied.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub p_noise: f64,
    pub transition: Option<Matrix>,
    pub sigma_e: f64,
    pub sp_fraction: f64,
}

impl NoiseSpec {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_noise) {
            return Err(Error::input("p_noise must lie in [0, 1]".to_string()));
        }
        if self.sigma_e < 0.0 || !self.sigma_e.is_finite() {
            return Err(Error::input("sigma_e must be finite and >= 0".to_string()));
        }
        if !(0.0..=1.0).contains(&self.sp_fraction) {
            return Err(Error::input("sp_fraction must lie in [0, 1]".to_string()));
        }
        if let Some(t) = &self.transition {
            validate_transition(t, classes)?;
        }
        Ok(())
    }

    /// Apply this recipe to a dataset, deterministically per seed.
    pub fn apply(&self, ds: &Dataset, seed: u64) -> Result<Dataset> {
        self.validate(ds.classes())?;
        match self.mode {
            NoiseMode::None => Ok(ds.clone()),
            NoiseMode::Label => {
                let t = match &self.transition {
                    Some(t) => t.clone(),
                    None => uniform_transition(ds.classes(), self.p_noise)?,
                };
                corrupt_labels(ds, &t, seed)
            }
            NoiseMode::Feature => {
                corrupt_features(ds, self.p_noise, self.sigma_e, self.sp_fraction, seed)
            }
            NoiseMode::Mixed => {
                corrupt_mixed(ds, self.p_noise, self.sigma_e, self.sp_fraction, seed)
            }
        }
    }
}

/// Splitmix64 step, used to derive independent sub-streams from one seed.
/// Every seeded component of a run draws its own stream through this, so
/// artifacts can be regenerated piecemeal.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal via Box-Muller; two uniform draws per value.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Exact per-class counts from priors via largest remainder.
fn counts_from_priors(n: usize, priors: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = priors
        .iter()
        .map(|p| (n as f64 * p).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..priors.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = n as f64 * priors[a] - (n as f64 * priors[a]).floor();
        let fb = n as f64 * priors[b] - (n as f64 * priors[b]).floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().take(n - assigned) {
        counts[k] += 1;
    }
    counts
}

fn validate_priors(priors: &[f64], classes: usize) -> Result<()> {
    if priors.len() != classes {
        return Err(Error::input(format!(
            "{} priors for {classes} classes",
            priors.len()
        )));
    }
    if priors.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
        return Err(Error::input(
            "class priors must be strictly positive (a zero-probability class cannot be sampled)"
                .to_string(),
        ));
    }
    let sum: f64 = priors.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!(
            "class priors sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn generate_dataset(kind: &PairKind, n: usize, priors: &[f64], rng: &mut ChaCha8Rng) -> Dataset {
    let classes = kind.classes();
    let dim = kind.dim();
    let counts = counts_from_priors(n, priors);
    let mut samples = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let x = match kind {
                PairKind::TwoMoons { noise_sigma } => {
                    let t = rng.gen_range(0.0..std::f64::consts::PI);
                    let (mut a, mut b) = if class == 0 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    a += noise_sigma * standard_normal(rng);
                    b += noise_sigma * standard_normal(rng);
                    vec![a, b]
                }
                PairKind::GaussianBlobs {
                    classes,
                    dim,
                    separation,
                    noise_sigma,
                } => {
                    let angle = 2.0 * std::f64::consts::PI * class as f64 / *classes as f64;
                    let mut x = vec![0.0; *dim];
                    x[0] = separation * angle.cos();
                    x[1] = separation * angle.sin();
                    for v in x.iter_mut() {
                        *v += noise_sigma * standard_normal(rng);
                    }
                    x
                }
            };
            samples.push(Sample::clean(x, class));
        }
    }
    // Interleave classes deterministically so full-batch slices are not
    // class-ordered.
    shuffle(&mut samples, rng);
    Dataset {
        samples,
        classes,
        dim,
    }
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Generate a source/target pair: both domains come from the same process,
/// the target composed with `shift`. Deterministic per seed.
pub fn gen_shifted_pair(
    kind: &PairKind,
    n_source: usize,
    n_target: usize,
    shift: &ShiftSpec,
    source_priors: Option<&[f64]>,
    seed: u64,
) -> Result<DomainPair> {
    let classes = kind.classes();
    let dim = kind.dim();
    if classes < 2 {
        return Err(Error::input("need at least two classes".to_string()));
    }
    if dim < 2 {
        return Err(Error::input(
            "need at least two feature dimensions".to_string(),
        ));
    }
    if n_source < classes || n_target < classes {
        return Err(Error::input(format!(
            "need at least {classes} samples per domain"
        )));
    }
    if !shift.rotation_deg.is_finite() {
        return Err(Error::input("rotation angle must be finite".to_string()));
    }
    if !shift.translation.is_empty() && shift.translation.len() != dim {
        return Err(Error::input(format!(
            "translation has length {}, feature dimension is {dim}",
            shift.translation.len()
        )));
    }
    let uniform = vec![1.0 / classes as f64; classes];
    let src_priors = source_priors.unwrap_or(&uniform);
    validate_priors(src_priors, classes)?;
    let tgt_priors = shift.target_priors.as_deref().unwrap_or(src_priors);
    validate_priors(tgt_priors, classes)?;

    let mut rng_src = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x51));
    let mut rng_tgt = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x52));
    let source = generate_dataset(kind, n_source, src_priors, &mut rng_src);
    let mut target = generate_dataset(kind, n_target, tgt_priors, &mut rng_tgt);
    for s in &mut target.samples {
        shift.apply(&mut s.x);
        shift.apply(&mut s.x_clean);
    }
    Ok(DomainPair {
        source,
        target,
        shift: shift.clone(),
    })
}

/// Row-stochastic `K x K` transition: diagonal `1 - p`, off-diagonal
/// `p / (K - 1)`. "Random class" is read as uniform over the K-1 *other*
/// classes, so the nominal flip rate is exactly `p`.
pub fn uniform_transition(classes: usize, p: f64) -> Result<Matrix> {
    if classes < 2 {
        return Err(Error::input(
            "transition needs at least two classes".to_string(),
        ));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(
            "flip probability must lie in [0, 1]".to_string(),
        ));
    }
    let off = p / (classes - 1) as f64;
    let mut t = Matrix::zeros(classes, classes);
    for i in 0..classes {
        for j in 0..classes {
            t.set(i, j, if i == j { 1.0 - p } else { off });
        }
    }
    Ok(t)
}

pub fn validate_transition(t: &Matrix, classes: usize) -> Result<()> {
    if t.rows() != classes || t.cols() != classes {
        return Err(Error::input(format!(
            "transition is {}x{}, expected {classes}x{classes}",
            t.rows(),
            t.cols()
        )));
    }
    for i in 0..classes {
        let row = t.row(i);
        if row.iter().any(|&v| v < 0.0) {
            return Err(Error::input(format!(
                "transition row {i} has negative entries"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::input(format!(
                "transition row {i} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Redraw each observed label from the transition row of its clean label.
/// Features untouched; flags are set, never cleared.
pub fn corrupt_labels(ds: &Dataset, transition: &Matrix, seed: u64) -> Result<Dataset> {
    validate_transition(transition, ds.classes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1abe1));
    let mut out = ds.clone();
    for s in &mut out.samples {
        let row = transition.row(s.y_clean);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut drawn = ds.classes() - 1;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                drawn = j;
                break;
            }
        }
        s.y_obs = drawn;
        s.label_noisy = s.label_noisy || s.y_obs != s.y_clean;
    }
    Ok(out)
}

/// With probability `p_f` per sample, apply BOTH additive per-coordinate
/// Gaussian noise (std `sigma_e`) AND salt-and-pepper clamping: a
/// `sp_fraction` of coordinates are set to the per-feature minimum or
/// maximum of the clean data, equiprobably. Labels untouched.
///
/// Degenerate corner, kept as specified: `p_f = 1, sigma_e = 0,
/// sp_fraction = 0` leaves features unchanged but still sets every flag.
pub fn corrupt_features(
    ds: &Dataset,
    p_f: f64,
    sigma_e: f64,
    sp_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&p_f) {
        return Err(Error::input("p_f must lie in [0, 1]".to_string()));
    }
    if sigma_e < 0.0 || !sigma_e.is_finite() {
        return Err(Error::input("sigma_e must be finite and >= 0".to_string()));
    }
    if !(0.0..=1.0).contains(&sp_fraction) {
        return Err(Error::input("sp_fraction must lie in [0, 1]".to_string()));
    }
    let dim = ds.dim();
    // Per-feature extremes of the clean source, the salt/pepper levels.
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for s in &ds.samples {
        for (j, &v) in s.x_clean.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let n_sp = (sp_fraction * dim as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xfea7));
    let mut out = ds.clone();
    for s in &mut out.samples {
        if rng.gen::<f64>() >= p_f {
            continue;
        }
        for v in s.x.iter_mut() {
            *v += sigma_e * standard_normal(&mut rng);
        }
        // Choose n_sp distinct coordinates (partial Fisher-Yates).
        let mut coords: Vec<usize> = (0..dim).collect();
        for i in 0..n_sp {
            let j = rng.gen_range(i..dim);
            coords.swap(i, j);
            let c = coords[i];
            s.x[c] = if rng.gen::<f64>() < 0.5 { lo[c] } else { hi[c] };
        }
        s.feature_noisy = true;
    }
    Ok(out)
}

/// Label corruption at rate `p_noise / 2` and feature corruption at rate
/// `p_noise / 2`, applied independently; a sample may carry both flags.
/// The label component uses the uniform transition.
pub fn corrupt_mixed(
    ds: &Dataset,
    p_noise: f64,
    sigma_e: f64,
    sp_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&p_noise) {
        return Err(Error::input("p_noise must lie in [0, 1]".to_string()));
    }
    let transition = uniform_transition(ds.classes(), p_noise / 2.0)?;
    let labeled = corrupt_labels(ds, &transition, derive_seed(seed, 0x4301))?;
    corrupt_features(
        &labeled,
        p_noise / 2.0,
        sigma_e,
        sp_fraction,
        derive_seed(seed, 0x4302),
    )
}
