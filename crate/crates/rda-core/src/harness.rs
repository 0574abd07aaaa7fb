//! Config-driven experiment runner.
//!
//! A [`RunConfig`] (TOML on disk) names a synthetic domain pair, a
//! corruption recipe, one training method, and the hyperparameters; the
//! runner executes it once per seed, writing every artifact needed to
//! reconstruct the result rows — datasets, loss ledger, sample weights,
//! final network, histories, embeddings — under a directory keyed by the
//! config hash. Wall-clock times go to a separate `timings.csv` so the
//! result tables stay byte-identical across reruns of the same config and
//! seed.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::curriculum::{
    assign_weights, class_thresholds, collect_training_losses, filter_metrics,
    global_threshold_for_count, online_curriculum_weights, CollectOptions, KeepRule, SampleWeights,
};
use crate::datagen::{derive_seed, gen_shifted_pair, NoiseMode, NoiseSpec, PairKind, ShiftSpec};
use crate::diagnostics::{estimate_discrepancy, export_embeddings, target_accuracy};
use crate::error::{Error, Result};
use crate::io::{self, fmt_sig};
use crate::mlp::Mlp;
use crate::pmd::{train_adversarial, train_classifier, AdversarialNet, PmdConfig};

// Sub-stream tags for one experiment seed.
const TAG_PAIR: u64 = 0xE1;
const TAG_NOISE: u64 = 0xE2;
const TAG_NET: u64 = 0xE3;
const TAG_AUX: u64 = 0xE4;
const TAG_STAGE1: u64 = 0xE5;
const TAG_TRAIN: u64 = 0xE6;
const TAG_DISC: u64 = 0xE7;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub noise: NoiseConfig,
    pub method: Method,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub output_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "two-moons")]
    TwoMoons,
    #[serde(rename = "gaussian-blobs")]
    GaussianBlobs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub n_source: usize,
    pub n_target: usize,
    #[serde(default = "defaults::classes")]
    pub classes: usize,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    /// Generator jitter (moon width / blob spread).
    #[serde(default = "defaults::gen_sigma")]
    pub noise_sigma: f64,
    /// Blob center radius; unused for two-moons.
    #[serde(default = "defaults::separation")]
    pub separation: f64,
    #[serde(default)]
    pub rotation_deg: f64,
    #[serde(default)]
    pub translation: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_priors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_priors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModeConfig {
    None,
    Label,
    Feature,
    Mixed,
}

impl From<NoiseModeConfig> for NoiseMode {
    fn from(m: NoiseModeConfig) -> Self {
        match m {
            NoiseModeConfig::None => NoiseMode::None,
            NoiseModeConfig::Label => NoiseMode::Label,
            NoiseModeConfig::Feature => NoiseMode::Feature,
            NoiseModeConfig::Mixed => NoiseMode::Mixed,
        }
    }
}

impl NoiseModeConfig {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseModeConfig::None => "none",
            NoiseModeConfig::Label => "label",
            NoiseModeConfig::Feature => "feature",
            NoiseModeConfig::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub mode: NoiseModeConfig,
    #[serde(default)]
    pub level: f64,
    #[serde(default = "defaults::sigma_e")]
    pub sigma_e: f64,
    #[serde(default = "defaults::sp_fraction")]
    pub sp_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Plain ERM on the full noisy source.
    #[serde(rename = "source-only")]
    SourceOnly,
    /// Offline curriculum filter, then ERM on the trusted subset.
    #[serde(rename = "erm-ocl")]
    ErmOcl,
    /// Adversarial alignment without any filtering.
    #[serde(rename = "adversarial")]
    Adversarial,
    /// Online (per-epoch, global-threshold) filter, then ERM on its keep set.
    #[serde(rename = "online")]
    OnlineCurriculum,
    /// The full pipeline: offline filter, then adversarial alignment.
    #[serde(rename = "rda")]
    Rda,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SourceOnly => "source-only",
            Method::ErmOcl => "erm-ocl",
            Method::Adversarial => "adversarial",
            Method::OnlineCurriculum => "online",
            Method::Rda => "rda",
        }
    }

    fn uses_filter(&self) -> bool {
        matches!(
            self,
            Method::ErmOcl | Method::OnlineCurriculum | Method::Rda
        )
    }

    fn adversarial(&self) -> bool {
        matches!(self, Method::Adversarial | Method::Rda)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseRate {
    Scalar(f64),
    PerClass(Vec<f64>),
}

impl Default for NoiseRate {
    fn default() -> Self {
        NoiseRate::Scalar(0.0)
    }
}

impl NoiseRate {
    /// Broadcast to one rate per class.
    pub fn per_class(&self, classes: usize) -> Result<Vec<f64>> {
        let rates = match self {
            NoiseRate::Scalar(r) => vec![*r; classes],
            NoiseRate::PerClass(v) => {
                if v.len() != classes {
                    return Err(Error::config(format!(
                        "train.noise_rate lists {} rates for {classes} classes",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config(
                "train.noise_rate entries must lie in [0, 1]".to_string(),
            ));
        }
        Ok(rates)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KeepRuleConfig {
    #[default]
    Safer,
    OneMinusRate,
}

impl From<KeepRuleConfig> for KeepRule {
    fn from(k: KeepRuleConfig) -> Self {
        match k {
            KeepRuleConfig::Safer => KeepRule::Safer,
            KeepRuleConfig::OneMinusRate => KeepRule::OneMinusRate,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Early-training epochs of the loss-collection stage.
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    pub n_max: usize,
    /// Head learning rate; the representation trains at a tenth of it.
    #[serde(default = "defaults::eta")]
    pub eta: f64,
    #[serde(default = "defaults::momentum")]
    pub momentum: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    /// Declared label-noise rate: scalar broadcast or per-class list.
    #[serde(default)]
    pub noise_rate: NoiseRate,
    #[serde(default = "defaults::batch")]
    pub batch: usize,
    #[serde(default = "defaults::eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub keep_rule: KeepRuleConfig,
    #[serde(default = "defaults::psi_widths")]
    pub psi_widths: Vec<usize>,
    #[serde(default = "defaults::head_widths")]
    pub head_widths: Vec<usize>,
    /// Hidden widths of the stage-one auxiliary classifier.
    #[serde(default = "defaults::aux_widths")]
    pub aux_widths: Vec<usize>,
    #[serde(default)]
    pub two_pass_psi: bool,
    #[serde(default)]
    pub disparity_on_full_source: bool,
}

mod defaults {
    pub fn classes() -> usize {
        2
    }
    pub fn dim() -> usize {
        2
    }
    pub fn gen_sigma() -> f64 {
        0.13
    }
    pub fn separation() -> f64 {
        3.0
    }
    pub fn sigma_e() -> f64 {
        0.6
    }
    pub fn sp_fraction() -> f64 {
        0.5
    }
    pub fn epochs() -> usize {
        30
    }
    pub fn eta() -> f64 {
        0.05
    }
    pub fn momentum() -> f64 {
        0.9
    }
    pub fn alpha() -> f64 {
        3.0
    }
    pub fn beta() -> f64 {
        0.1
    }
    pub fn tau() -> f64 {
        0.9
    }
    pub fn batch() -> usize {
        32
    }
    pub fn eval_every() -> usize {
        100
    }
    pub fn psi_widths() -> Vec<usize> {
        vec![16, 8]
    }
    pub fn head_widths() -> Vec<usize> {
        vec![8]
    }
    pub fn aux_widths() -> Vec<usize> {
        vec![16]
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Field-level validation; runs before any compute.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.classes < 2 {
            return Err(Error::config("dataset.classes must be >= 2".to_string()));
        }
        if d.dim < 2 {
            return Err(Error::config("dataset.dim must be >= 2".to_string()));
        }
        if d.kind == DatasetKind::TwoMoons && (d.classes != 2 || d.dim != 2) {
            return Err(Error::config(
                "two-moons forces dataset.classes = 2 and dataset.dim = 2".to_string(),
            ));
        }
        if d.n_source < d.classes || d.n_target < d.classes {
            return Err(Error::config(
                "dataset.n_source and dataset.n_target must cover every class".to_string(),
            ));
        }
        if d.noise_sigma < 0.0 || !d.noise_sigma.is_finite() {
            return Err(Error::config(
                "dataset.noise_sigma must be finite and >= 0".to_string(),
            ));
        }
        if d.separation <= 0.0 {
            return Err(Error::config(
                "dataset.separation must be positive".to_string(),
            ));
        }
        if !d.rotation_deg.is_finite() {
            return Err(Error::config(
                "dataset.rotation_deg must be finite".to_string(),
            ));
        }
        if !d.translation.is_empty() && d.translation.len() != d.dim {
            return Err(Error::config(format!(
                "dataset.translation must have length {} (or be omitted)",
                d.dim
            )));
        }
        let n = &self.noise;
        if !(0.0..=1.0).contains(&n.level) {
            return Err(Error::config("noise.level must lie in [0, 1]".to_string()));
        }
        if n.sigma_e < 0.0 || !n.sigma_e.is_finite() {
            return Err(Error::config(
                "noise.sigma_e must be finite and >= 0".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&n.sp_fraction) {
            return Err(Error::config(
                "noise.sp_fraction must lie in [0, 1]".to_string(),
            ));
        }
        let t = &self.train;
        if t.epochs == 0 {
            return Err(Error::config("train.epochs must be >= 1".to_string()));
        }
        if t.n_max == 0 {
            return Err(Error::config("train.n_max must be >= 1".to_string()));
        }
        if t.eta <= 0.0 || !t.eta.is_finite() {
            return Err(Error::config("train.eta must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return Err(Error::config(
                "train.momentum must lie in [0, 1)".to_string(),
            ));
        }
        if t.alpha < 1.0 {
            return Err(Error::config("train.alpha must be >= 1".to_string()));
        }
        if t.beta < 0.0 {
            return Err(Error::config("train.beta must be >= 0".to_string()));
        }
        if !(0.0..=1.0).contains(&t.tau) {
            return Err(Error::config("train.tau must lie in [0, 1]".to_string()));
        }
        if t.batch == 0 {
            return Err(Error::config("train.batch must be >= 1".to_string()));
        }
        t.noise_rate.per_class(d.classes)?;
        if t.psi_widths.is_empty() || t.psi_widths.contains(&0) {
            return Err(Error::config(
                "train.psi_widths must be non-empty, positive".to_string(),
            ));
        }
        if t.head_widths.contains(&0) || t.aux_widths.contains(&0) {
            return Err(Error::config("layer widths must be positive".to_string()));
        }
        if self.seeds.is_empty() {
            return Err(Error::config(
                "seeds must list at least one seed".to_string(),
            ));
        }
        Ok(())
    }

    pub fn pair_kind(&self) -> PairKind {
        match self.dataset.kind {
            DatasetKind::TwoMoons => PairKind::TwoMoons {
                noise_sigma: self.dataset.noise_sigma,
            },
            DatasetKind::GaussianBlobs => PairKind::GaussianBlobs {
                classes: self.dataset.classes,
                dim: self.dataset.dim,
                separation: self.dataset.separation,
                noise_sigma: self.dataset.noise_sigma,
            },
        }
    }

    pub fn shift_spec(&self) -> ShiftSpec {
        ShiftSpec {
            rotation_deg: self.dataset.rotation_deg,
            translation: self.dataset.translation.clone(),
            target_priors: self.dataset.target_priors.clone(),
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            mode: self.noise.mode.into(),
            p_noise: self.noise.level,
            transition: None,
            sigma_e: self.noise.sigma_e,
            sp_fraction: self.noise.sp_fraction,
        }
    }

    pub fn pmd_config(&self) -> PmdConfig {
        PmdConfig {
            alpha: self.train.alpha,
            beta: self.train.beta,
            tau: self.train.tau,
            n_max: self.train.n_max,
            batch: self.train.batch,
            eta: self.train.eta,
            eta_psi: self.train.eta / 10.0,
            momentum: self.train.momentum,
            eval_every: self.train.eval_every,
            two_pass_psi: self.train.two_pass_psi,
            disparity_on_full_source: self.train.disparity_on_full_source,
        }
    }

    /// Stable hash of everything except the output directory; names the run
    /// directory.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = String::new();
        let text = toml::to_string(&canonical).expect("config serializes");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }

    /// The standard shifted two-moons task: rotation + translation shift,
    /// mixed corruption, and stage-2 settings calibrated so the adversarial
    /// game neither starves the classifier (the proxy needs a useful
    /// absolute size early, hence the large batch) nor oscillates into
    /// feature collapse (hence the small step sizes). Methods and noise
    /// levels are overridden per experiment.
    pub fn standard_two_moons(output_dir: &str) -> RunConfig {
        RunConfig {
            dataset: DatasetConfig {
                kind: DatasetKind::TwoMoons,
                n_source: 1500,
                n_target: 1500,
                classes: 2,
                dim: 2,
                noise_sigma: 0.15,
                separation: defaults::separation(),
                rotation_deg: 30.0,
                translation: vec![1.0, 0.8],
                source_priors: None,
                target_priors: None,
            },
            noise: NoiseConfig {
                mode: NoiseModeConfig::Mixed,
                level: 0.4,
                sigma_e: 0.6,
                sp_fraction: 0.5,
            },
            method: Method::Rda,
            train: TrainConfig {
                epochs: 30,
                n_max: 5000,
                eta: 0.005,
                momentum: 0.9,
                alpha: 3.0,
                beta: 0.1,
                tau: 0.9,
                noise_rate: NoiseRate::Scalar(0.2),
                batch: 256,
                eval_every: defaults::eval_every(),
                keep_rule: KeepRuleConfig::Safer,
                psi_widths: defaults::psi_widths(),
                head_widths: defaults::head_widths(),
                aux_widths: defaults::aux_widths(),
                two_pass_psi: false,
                disparity_on_full_source: false,
            },
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: output_dir.to_string(),
        }
    }

    /// The standard three-class Gaussian-blobs task used for the filter
    /// studies: overlapping blobs and a hotter auxiliary-training schedule,
    /// which is what separates the loss distributions of clean, label-noisy,
    /// and feature-noisy examples.
    pub fn standard_blobs(output_dir: &str) -> RunConfig {
        let mut cfg = Self::standard_two_moons(output_dir);
        cfg.dataset.kind = DatasetKind::GaussianBlobs;
        cfg.dataset.classes = 3;
        cfg.dataset.dim = 2;
        cfg.dataset.noise_sigma = 0.8;
        cfg.dataset.separation = 3.0;
        cfg.dataset.rotation_deg = 25.0;
        cfg.dataset.translation = Vec::new();
        cfg.noise.sigma_e = 1.0;
        cfg.train.eta = 0.05;
        cfg.train.batch = 32;
        cfg.train.n_max = 2000;
        cfg
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// One (method, noise, seed) outcome. `wall_time_s` is kept out of the
/// deterministic result table and written to `timings.csv` instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub noise_mode: String,
    pub noise_level: f64,
    pub seed: u64,
    pub target_accuracy: f64,
    pub filter_precision: Option<f64>,
    pub filter_recall: Option<f64>,
    pub proxy_a_distance: f64,
    pub wall_time_s: f64,
}

pub const RESULT_HEADER: &str =
    "method,noise_mode,noise_level,seed,target_accuracy,filter_precision,filter_recall,proxy_a_distance";

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.noise_mode,
            fmt_sig(self.noise_level, 6),
            self.seed,
            fmt_sig(self.target_accuracy, 6),
            self.filter_precision
                .map(|v| fmt_sig(v, 6))
                .unwrap_or_default(),
            self.filter_recall
                .map(|v| fmt_sig(v, 6))
                .unwrap_or_default(),
            fmt_sig(self.proxy_a_distance, 6),
        )
    }

    pub fn parse_csv(line: &str) -> Result<ResultRow> {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 8 {
            return Err(Error::parse(format!(
                "result row has {} cells",
                cells.len()
            )));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse::<f64>().map_err(|_| {
                    Error::parse(format!("bad float '{s}' in results"))
                })?))
            }
        };
        Ok(ResultRow {
            method: cells[0].to_string(),
            noise_mode: cells[1].to_string(),
            noise_level: cells[2]
                .parse()
                .map_err(|_| Error::parse("bad noise level".to_string()))?,
            seed: cells[3]
                .parse()
                .map_err(|_| Error::parse("bad seed".to_string()))?,
            target_accuracy: cells[4]
                .parse()
                .map_err(|_| Error::parse("bad accuracy".to_string()))?,
            filter_precision: opt(cells[5])?,
            filter_recall: opt(cells[6])?,
            proxy_a_distance: cells[7]
                .parse()
                .map_err(|_| Error::parse("bad distance".to_string()))?,
            wall_time_s: 0.0,
        })
    }
}

// ---------------------------------------------------------------------------
// Single experiment
// ---------------------------------------------------------------------------

/// Run every seed of `cfg`. The run directory is `output_dir/<config-hash>`;
/// an existing directory is refused unless `force` is set. Result rows are
/// flushed to `results.csv` as each seed finishes, so a numeric abort leaves
/// the completed seeds on disk.
pub fn run_experiment(cfg: &RunConfig, force: bool) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let run_root = PathBuf::from(&cfg.output_dir).join(cfg.config_hash());
    if run_root.exists() {
        if !force {
            return Err(Error::config(format!(
                "run directory {} already exists; pass --force to overwrite",
                run_root.display()
            )));
        }
        fs::remove_dir_all(&run_root)?;
    }
    fs::create_dir_all(&run_root)?;
    fs::write(
        run_root.join("config.toml"),
        toml::to_string(cfg).expect("config serializes"),
    )?;

    let results_path = run_root.join("results.csv");
    fs::write(&results_path, format!("{RESULT_HEADER}\n"))?;
    let timings_path = run_root.join("timings.csv");
    fs::write(&timings_path, "seed,wall_time_s\n")?;

    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let row = run_single(cfg, seed, &run_root)?;
        let mut results = fs::OpenOptions::new().append(true).open(&results_path)?;
        writeln!(results, "{}", row.to_csv())?;
        let mut timings = fs::OpenOptions::new().append(true).open(&timings_path)?;
        writeln!(timings, "{seed},{}", fmt_sig(row.wall_time_s, 6))?;
        rows.push(row);
    }
    Ok(rows)
}

fn run_single(cfg: &RunConfig, seed: u64, run_root: &Path) -> Result<ResultRow> {
    let start = Instant::now();
    let seed_dir = run_root.join(format!("seed_{seed}"));
    fs::create_dir_all(&seed_dir)?;

    // Generate and corrupt.
    let pair = gen_shifted_pair(
        &cfg.pair_kind(),
        cfg.dataset.n_source,
        cfg.dataset.n_target,
        &cfg.shift_spec(),
        cfg.dataset.source_priors.as_deref(),
        derive_seed(seed, TAG_PAIR),
    )?;
    let source = cfg
        .noise_spec()
        .apply(&pair.source, derive_seed(seed, TAG_NOISE))?;
    io::write_dataset(&source, &seed_dir.join("source.csv"))?;
    io::write_dataset(&pair.target, &seed_dir.join("target.csv"))?;

    // Stage one: loss collection and filtering, where the method uses it.
    let mut weights: Option<SampleWeights> = None;
    if cfg.method.uses_filter() {
        let mut aux_dims = vec![source.dim()];
        aux_dims.extend_from_slice(&cfg.train.aux_widths);
        aux_dims.push(source.classes());
        let aux = Mlp::init(&aux_dims, derive_seed(seed, TAG_AUX))?;
        let opts = CollectOptions {
            epochs: cfg.train.epochs,
            learning_rate: cfg.train.eta,
            momentum: cfg.train.momentum,
            batch: cfg.train.batch,
        };
        let (_, ledger) =
            collect_training_losses(aux, &source, &opts, derive_seed(seed, TAG_STAGE1))?;
        io::write_ledger(&ledger, &seed_dir.join("ledger.csv"))?;
        let hist = crate::diagnostics::loss_histogram(&ledger.average_losses(), &source, 20)?;
        io::write_histogram_csv(&hist, &seed_dir.join("loss_histogram.csv"))?;
        io::write_histogram_gnuplot(&hist, &seed_dir.join("loss_histogram.dat"))?;

        let labels = source.observed_labels();
        let rates = cfg.train.noise_rate.per_class(source.classes())?;
        let rule: KeepRule = cfg.train.keep_rule.into();
        let keep: Vec<f64> = rates.iter().map(|&r| rule.fraction(r)).collect();
        let avg = ledger.average_losses();

        let w = match cfg.method {
            Method::OnlineCurriculum => {
                // Same keep budget as the offline filter, single global
                // threshold on the final epoch's instantaneous losses.
                let counts = source.observed_class_counts();
                let budget: usize = counts
                    .iter()
                    .zip(&keep)
                    .map(|(&m_k, &p_k)| {
                        let rank = m_k as f64 * p_k;
                        if rank < 1.0 {
                            0
                        } else {
                            (rank.ceil() as usize).min(m_k)
                        }
                    })
                    .sum();
                let last = ledger.epoch_column(ledger.epochs() - 1);
                let gamma = global_threshold_for_count(&last, budget);
                online_curriculum_weights(&last, gamma)
            }
            _ => {
                let thresholds = class_thresholds(&avg, &labels, &keep)?;
                assign_weights(&avg, &labels, &thresholds)?
            }
        };
        io::write_weights(&w, &seed_dir.join("sample_weights.csv"))?;
        weights = Some(w);
    }

    // Train by method.
    let net = AdversarialNet::init(
        source.dim(),
        &cfg.train.psi_widths,
        &cfg.train.head_widths,
        source.classes(),
        derive_seed(seed, TAG_NET),
    )?;
    let pmd_cfg = cfg.pmd_config();
    let all_idx: Vec<usize> = (0..source.len()).collect();
    let train_idx: Vec<usize> = match (&weights, cfg.method) {
        (Some(w), Method::ErmOcl | Method::OnlineCurriculum | Method::Rda) => {
            let kept = w.kept_indices();
            if kept.is_empty() {
                return Err(Error::input(
                    "filter kept no examples; nothing to train on".to_string(),
                ));
            }
            kept
        }
        _ => all_idx.clone(),
    };

    let train_seed = derive_seed(seed, TAG_TRAIN);
    let trained = if cfg.method.adversarial() {
        let (trained, history) =
            train_adversarial(net, &source, &train_idx, &pair.target, &pmd_cfg, train_seed)?;
        io::write_rda_history(&history, &seed_dir.join("history.csv"))?;
        trained
    } else {
        let (trained, history) = train_classifier(
            net,
            &source,
            &train_idx,
            Some(&pair.target),
            &pmd_cfg,
            train_seed,
        )?;
        io::write_classifier_history(&history, &seed_dir.join("history.csv"))?;
        trained
    };
    io::write_adversarial_net(&trained, &seed_dir.join("net.txt"))?;

    // Diagnostics and artifacts.
    let sets = [(&source, "source"), (&pair.target, "target")];
    export_embeddings(&trained, &sets, &seed_dir.join("embeddings.csv"))?;

    let accuracy = target_accuracy(&trained, &pair.target)?;
    let disc = estimate_discrepancy(
        &source.feature_matrix(),
        &pair.target.feature_matrix(),
        0.5,
        derive_seed(seed, TAG_DISC),
    )?;
    let (precision, recall) = match &weights {
        Some(w) => {
            let m = filter_metrics(w, &source)?;
            (Some(m.precision), Some(m.recall))
        }
        None => (None, None),
    };

    Ok(ResultRow {
        method: cfg.method.as_str().to_string(),
        noise_mode: cfg.noise.mode.as_str().to_string(),
        noise_level: cfg.noise.level,
        seed,
        target_accuracy: accuracy,
        filter_precision: precision,
        filter_recall: recall,
        proxy_a_distance: disc.proxy_a_distance,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Rebuild the result rows of a finished run purely from its serialized
/// artifacts (datasets, weights, network). Wall time is not reconstructible
/// and reads as zero.
pub fn report(run_root: &Path) -> Result<Vec<ResultRow>> {
    let cfg = RunConfig::load(&run_root.join("config.toml"))?;
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let seed_dir = run_root.join(format!("seed_{seed}"));
        let source = io::read_dataset(&seed_dir.join("source.csv"))?;
        let target = io::read_dataset(&seed_dir.join("target.csv"))?;
        let net = io::read_adversarial_net(&seed_dir.join("net.txt"))?;
        let accuracy = target_accuracy(&net, &target)?;
        let disc = estimate_discrepancy(
            &source.feature_matrix(),
            &target.feature_matrix(),
            0.5,
            derive_seed(seed, TAG_DISC),
        )?;
        let weights_path = seed_dir.join("sample_weights.csv");
        let (precision, recall) = if weights_path.exists() {
            let w = io::read_weights(&weights_path)?;
            let m = filter_metrics(&w, &source)?;
            (Some(m.precision), Some(m.recall))
        } else {
            (None, None)
        };
        rows.push(ResultRow {
            method: cfg.method.as_str().to_string(),
            noise_mode: cfg.noise.mode.as_str().to_string(),
            noise_level: cfg.noise.level,
            seed,
            target_accuracy: accuracy,
            filter_precision: precision,
            filter_recall: recall,
            proxy_a_distance: disc.proxy_a_distance,
            wall_time_s: 0.0,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub modes: Vec<NoiseModeConfig>,
    pub levels: Vec<f64>,
    pub base: RunConfig,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.modes.is_empty() || self.levels.is_empty() {
            return Err(Error::config("sweep grid must be non-empty".to_string()));
        }
        if self.levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::config("sweep levels must lie in [0, 1]".to_string()));
        }
        self.base.validate()
    }

    pub fn sweep_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.base.output_dir = String::new();
        let text = toml::to_string(&canonical).expect("config serializes");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }
}

/// Aggregate statistics for one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: String,
    pub noise_mode: String,
    pub noise_level: f64,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub seeds: usize,
    /// Empty on success, the error text otherwise.
    pub error: String,
}

pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<CellSummary>,
    pub root: PathBuf,
}

/// Run the full grid. Cell failures are recorded in the summary and the
/// sweep continues.
pub fn sweep(cfg: &SweepConfig, force: bool) -> Result<SweepOutcome> {
    cfg.validate()?;
    let root = PathBuf::from(&cfg.base.output_dir).join(format!("sweep_{}", cfg.sweep_hash()));
    if root.exists() {
        if !force {
            return Err(Error::config(format!(
                "sweep directory {} already exists; pass --force to overwrite",
                root.display()
            )));
        }
        fs::remove_dir_all(&root)?;
    }
    fs::create_dir_all(&root)?;
    fs::write(
        root.join("sweep.toml"),
        toml::to_string(cfg).expect("config serializes"),
    )?;

    let mut all_rows = Vec::new();
    let mut summaries = Vec::new();
    for &method in &cfg.methods {
        for &mode in &cfg.modes {
            for &level in &cfg.levels {
                let mut cell = cfg.base.clone();
                cell.method = method;
                cell.noise.mode = mode;
                cell.noise.level = level;
                cell.output_dir = root.join("cells").to_string_lossy().into_owned();
                match run_experiment(&cell, force) {
                    Ok(rows) => {
                        let accs: Vec<f64> = rows.iter().map(|r| r.target_accuracy).collect();
                        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                        let sd = if accs.len() > 1 {
                            (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>()
                                / (accs.len() - 1) as f64)
                                .sqrt()
                        } else {
                            0.0
                        };
                        summaries.push(CellSummary {
                            method: method.as_str().to_string(),
                            noise_mode: mode.as_str().to_string(),
                            noise_level: level,
                            mean_accuracy: mean,
                            sd_accuracy: sd,
                            seeds: accs.len(),
                            error: String::new(),
                        });
                        all_rows.extend(rows);
                    }
                    Err(e) => {
                        summaries.push(CellSummary {
                            method: method.as_str().to_string(),
                            noise_mode: mode.as_str().to_string(),
                            noise_level: level,
                            mean_accuracy: f64::NAN,
                            sd_accuracy: f64::NAN,
                            seeds: 0,
                            error: e.to_string(),
                        });
                    }
                }
            }
        }
    }

    write_sweep_outputs(&root, &all_rows, &summaries, cfg)?;
    Ok(SweepOutcome {
        rows: all_rows,
        summaries,
        root,
    })
}

fn write_sweep_outputs(
    root: &Path,
    rows: &[ResultRow],
    summaries: &[CellSummary],
    cfg: &SweepConfig,
) -> Result<()> {
    let mut out = format!("{RESULT_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    fs::write(root.join("sweep_results.csv"), out)?;

    let mut out =
        String::from("method,noise_mode,noise_level,seeds,mean_accuracy,sd_accuracy,error\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.method,
            s.noise_mode,
            fmt_sig(s.noise_level, 6),
            s.seeds,
            fmt_sig(s.mean_accuracy, 6),
            fmt_sig(s.sd_accuracy, 6),
            s.error.replace(',', ";")
        );
    }
    fs::write(root.join("sweep_summary.csv"), out)?;

    // Matrix view per noise mode: rows = levels, columns = methods.
    for &mode in &cfg.modes {
        let mut out = String::from("noise_level");
        for m in &cfg.methods {
            let _ = write!(out, ",{}", m.as_str());
        }
        out.push('\n');
        for &level in &cfg.levels {
            let _ = write!(out, "{}", fmt_sig(level, 6));
            for m in &cfg.methods {
                let cell = summaries.iter().find(|s| {
                    s.method == m.as_str()
                        && s.noise_mode == mode.as_str()
                        && s.noise_level == level
                });
                match cell {
                    Some(c) if c.error.is_empty() => {
                        let _ = write!(out, ",{}", fmt_sig(c.mean_accuracy, 6));
                    }
                    _ => out.push(','),
                }
            }
            out.push('\n');
        }
        fs::write(
            root.join(format!("sweep_matrix_{}.csv", mode.as_str())),
            out,
        )?;
    }
    Ok(())
}
