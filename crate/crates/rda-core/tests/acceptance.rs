//! Acceptance gate: one test per criterion, each printing a PASS line with
//! its measured quantities (run with `--nocapture` to see them). Every
//! tolerance is pinned here, in code.
//!
//! The wall-clock budgets assume the suite is run one test at a time
//! (`--test-threads=1`), which is also what makes the printed timings
//! meaningful.

use std::path::PathBuf;
use std::time::Instant;

use rda_core::curriculum::{
    assign_weights, class_thresholds, collect_training_losses, filter_metrics,
    global_threshold_for_count, keep_fraction, noise_category, online_curriculum_weights,
    CollectOptions,
};
use rda_core::datagen::{
    corrupt_features, derive_seed, gen_shifted_pair, uniform_transition, Dataset,
};
use rda_core::diagnostics::estimate_discrepancy;
use rda_core::gradcheck::{central_difference_grads, max_relative_error};
use rda_core::harness::{run_experiment, Method, NoiseModeConfig, RunConfig};
use rda_core::loss;
use rda_core::matrix::Matrix;
use rda_core::mlp::Mlp;
use rda_core::pmd::{
    disparity_with_grads, select_proxy_batch, source_disparity_fixed_labels,
    target_disparity_fixed_labels, tau_schedule, AdversarialNet,
};

const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_ABS_FLOOR: f64 = 1e-8;
const EXACT_TOL: f64 = 1e-12;
/// Criterion 5: keep-set label precision must beat the base clean rate by
/// at least this much, mean over five seeds.
const FILTER_MARGIN_MIN: f64 = 0.10;
/// Criterion 5 regression baseline: the exact mean margin recorded on the
/// first green run of this suite.
const FILTER_MARGIN_RECORDED: f64 = 0.184967084414;
/// Criterion 7 tolerances.
const RDA_VS_ADV_SLACK: f64 = 0.01;
const RDA_VS_SRC_MARGIN: f64 = 0.05;
const RDA_VS_ADV_CLEAN_SLACK: f64 = 0.02;

fn tmp_out(tag: &str) -> String {
    let dir = std::env::temp_dir().join(format!("rda-acceptance-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir.to_string_lossy().into_owned()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Stage-one run of the standard blobs task for one seed: corrupted source,
/// averaged losses. Shared by criteria 4, 5, and 8.
fn blobs_stage_one(seed: u64) -> (Dataset, rda_core::curriculum::LossLedger) {
    let cfg = RunConfig::standard_blobs("unused");
    let pair = gen_shifted_pair(
        &cfg.pair_kind(),
        cfg.dataset.n_source,
        cfg.dataset.n_target,
        &cfg.shift_spec(),
        None,
        derive_seed(seed, 0xE1),
    )
    .unwrap();
    let source = cfg
        .noise_spec()
        .apply(&pair.source, derive_seed(seed, 0xE2))
        .unwrap();
    let mut aux_dims = vec![source.dim()];
    aux_dims.extend_from_slice(&cfg.train.aux_widths);
    aux_dims.push(source.classes());
    let aux = Mlp::init(&aux_dims, derive_seed(seed, 0xE4)).unwrap();
    let opts = CollectOptions {
        epochs: cfg.train.epochs,
        learning_rate: cfg.train.eta,
        momentum: cfg.train.momentum,
        batch: cfg.train.batch,
    };
    let (_, ledger) =
        collect_training_losses(aux, &source, &opts, derive_seed(seed, 0xE5)).unwrap();
    (source, ledger)
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    // Cross-entropy through the full network, five seeded fixtures.
    for seed in 0..5u64 {
        let mut net = Mlp::init(&[3, 6, 4], seed).unwrap();
        let mut rng_x = seed.wrapping_mul(0x9e37_79b9).wrapping_add(1);
        let mut next = || {
            rng_x = rng_x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((rng_x >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
        };
        let x = Matrix::from_vec(5, 3, (0..15).map(|_| next() * 2.0).collect()).unwrap();
        let labels: Vec<usize> = (0..5).map(|i| i % 4).collect();
        let trace = net.forward_trace(&x).unwrap();
        let (_, d_logits) = loss::mean_cross_entropy_and_grad(trace.logits(), &labels).unwrap();
        let (analytic, _) = net.backward(&trace, &d_logits);
        let numeric = central_difference_grads(&mut net, 1e-5, |n| {
            let logits = n.forward(&x).unwrap();
            let per = loss::per_example_cross_entropy(&logits, &labels).unwrap();
            per.iter().sum::<f64>() / per.len() as f64
        });
        let (worst, idx) = max_relative_error(&analytic, &numeric, GRAD_ABS_FLOOR);
        assert!(
            worst <= GRAD_REL_TOL,
            "cross-entropy gradient: rel err {worst} at param {idx} (seed {seed})"
        );
    }

    // Source and target disparities, with respect to the adversarial head
    // and the representation, five seeded fixtures.
    for seed in 0..5u64 {
        let net = AdversarialNet::init(2, &[6, 4], &[4], 3, seed).unwrap();
        let mut rng_x = seed.wrapping_mul(0xc2b2_ae35).wrapping_add(7);
        let mut next = || {
            rng_x = rng_x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((rng_x >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
        };
        let qn = Matrix::from_vec(6, 2, (0..12).map(|_| next() * 2.0).collect()).unwrap();
        let target = Matrix::from_vec(5, 2, (0..10).map(|_| next() * 2.0).collect()).unwrap();
        let qn_labels = net.predicted_labels(&qn).unwrap();
        let target_labels = net.predicted_labels(&target).unwrap();
        let proxy = qn.gather_rows(&[0, 2, 3]);
        let proxy_labels = vec![qn_labels[0], qn_labels[2], qn_labels[3]];
        let alpha = 3.0;

        let grads = disparity_with_grads(
            &net,
            &qn,
            &qn_labels,
            &proxy,
            &proxy_labels,
            &target,
            &target_labels,
            alpha,
        )
        .unwrap();
        let value = |candidate: &AdversarialNet| {
            source_disparity_fixed_labels(candidate, &qn, &qn_labels, &proxy, &proxy_labels, alpha)
                .unwrap()
                + target_disparity_fixed_labels(
                    candidate,
                    &proxy,
                    &proxy_labels,
                    &target,
                    &target_labels,
                    alpha,
                )
                .unwrap()
        };
        let base = net.clone();
        let numeric_fadv = central_difference_grads(&mut net.f_adv.clone(), 1e-5, |head| {
            let mut candidate = base.clone();
            candidate.f_adv = head.clone();
            value(&candidate)
        });
        let (worst, idx) = max_relative_error(&grads.d_f_adv, &numeric_fadv, GRAD_ABS_FLOOR);
        assert!(
            worst <= GRAD_REL_TOL,
            "disparity d/d f_adv: rel err {worst} at param {idx} (seed {seed})"
        );
        let numeric_psi = central_difference_grads(&mut net.psi.clone(), 1e-5, |repr| {
            let mut candidate = base.clone();
            candidate.psi = repr.clone();
            value(&candidate)
        });
        let (worst, idx) = max_relative_error(&grads.d_psi, &numeric_psi, GRAD_ABS_FLOOR);
        assert!(
            worst <= GRAD_REL_TOL,
            "disparity d/d psi: rel err {worst} at param {idx} (seed {seed})"
        );
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "criterion 1 took {elapsed:.1}s, budget 10s");
    println!(
        "[criterion 1] PASS: all loss gradients within {GRAD_REL_TOL} of central differences \
         on 5 fixtures each ({elapsed:.2}s)"
    );
}

#[test]
fn criterion_2_exact_formula_oracles() {
    let start = Instant::now();

    // keep_fraction.
    assert!((keep_fraction(0.4) - 0.52).abs() <= EXACT_TOL);
    assert!((keep_fraction(0.0) - 1.0).abs() <= EXACT_TOL);
    assert!((keep_fraction(0.5) - 0.4).abs() <= EXACT_TOL);

    // uniform_transition.
    let t = uniform_transition(2, 0.4).unwrap();
    for (i, row) in [[0.6, 0.4], [0.4, 0.6]].iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert!((t.get(i, j) - v).abs() <= EXACT_TOL);
        }
    }
    let t = uniform_transition(3, 0.0).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((t.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs() <= EXACT_TOL);
        }
    }
    let t = uniform_transition(3, 0.4).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let expect = if i == j { 0.6 } else { 0.2 };
            assert!((t.get(i, j) - expect).abs() <= EXACT_TOL);
        }
    }

    // tau_schedule.
    assert!((tau_schedule(100, 1000, 0.9) - 0.1).abs() <= EXACT_TOL);
    assert!((tau_schedule(950, 1000, 0.9) - 0.9).abs() <= EXACT_TOL);
    assert!((tau_schedule(1, 1000, 0.9) - 1.0).abs() <= EXACT_TOL);

    // class_thresholds.
    let losses = [0.1, 0.2, 0.9, 1.0];
    let labels = [0usize; 4];
    let th = class_thresholds(&losses, &labels, &[0.5]).unwrap();
    assert!((th.gamma[0] - 0.2).abs() <= EXACT_TOL);
    let th = class_thresholds(&losses, &labels, &[1.0]).unwrap();
    assert!((th.gamma[0] - 1.0).abs() <= EXACT_TOL);
    let ties = [0.3, 0.3, 0.3];
    let th = class_thresholds(&ties, &[0usize; 3], &[1.0 / 3.0]).unwrap();
    assert!((th.gamma[0] - 0.3).abs() <= EXACT_TOL);
    let w = assign_weights(&ties, &[0usize; 3], &th).unwrap();
    assert_eq!(w.kept(), 3, "ties at the threshold must all pass");

    // conditional_weighted_risk: the divisor counts all m examples. The
    // tabulated case -- m = 4, two kept with losses {0.2, 0.6} -> 0.2 --
    // checked on the formula, then the operation checked against an
    // independently computed weighted sum on a real network.
    let per = [0.2_f64, 0.6, 3.0, 9.0];
    let kept = [true, true, false, false];
    let weighted: f64 = per
        .iter()
        .zip(&kept)
        .map(|(&l, &k)| if k { l } else { 0.0 })
        .sum();
    assert!((weighted / 4.0 - 0.2).abs() <= EXACT_TOL);

    let pair = gen_shifted_pair(
        &rda_core::datagen::PairKind::GaussianBlobs {
            classes: 2,
            dim: 2,
            separation: 4.0,
            noise_sigma: 0.6,
        },
        8,
        8,
        &rda_core::datagen::ShiftSpec::identity(),
        None,
        3,
    )
    .unwrap();
    let net = Mlp::init(&[2, 4, 2], 5).unwrap();
    let pattern = vec![true, false, true, true, false, false, true, false];
    let w = rda_core::curriculum::SampleWeights { w: pattern.clone() };
    let risk = rda_core::curriculum::conditional_weighted_risk(&net, &pair.source, &w).unwrap();
    let logits = net.forward(&pair.source.feature_matrix()).unwrap();
    let per = loss::per_example_cross_entropy(&logits, &pair.source.observed_labels()).unwrap();
    let oracle: f64 = per
        .iter()
        .zip(&pattern)
        .map(|(&l, &k)| if k { l } else { 0.0 })
        .sum::<f64>()
        / 8.0;
    assert!((risk - oracle).abs() <= EXACT_TOL);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "criterion 2 took {elapsed:.2}s, budget 1s");
    println!(
        "[criterion 2] PASS: keep_fraction, uniform_transition, tau_schedule, class_thresholds, \
         conditional_weighted_risk match their oracles to {EXACT_TOL} ({elapsed:.3}s)"
    );
}

#[test]
fn criterion_3_proxy_selection_optimality() {
    let start = Instant::now();
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    for case in 0..200u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(case);
        let b = rng.gen_range(1..=12usize);
        let losses: Vec<f64> = (0..b).map(|_| rng.gen_range(0.001..5.0)).collect();
        let tau_prime: f64 = rng.gen_range(0.0..=1.0);
        let floor = ((tau_prime * b as f64).ceil() as usize).clamp(1, b);

        // Exhaustive search over subsets meeting the size floor, minimizing
        // total loss; ties prefer smaller size then lexicographic order.
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 1u32..(1 << b) {
            let subset: Vec<usize> = (0..b).filter(|i| mask & (1 << i) != 0).collect();
            if subset.len() < floor {
                continue;
            }
            let total: f64 = subset.iter().map(|&i| losses[i]).sum();
            let better = match &best {
                None => true,
                Some((bt, bs)) => {
                    total < bt - 1e-12
                        || ((total - bt).abs() <= 1e-12
                            && (subset.len() < bs.len()
                                || (subset.len() == bs.len() && subset < *bs)))
                }
            };
            if better {
                best = Some((total, subset));
            }
        }
        let selection = select_proxy_batch(&losses, tau_prime);
        assert_eq!(
            selection.kept,
            best.unwrap().1,
            "case {case}: losses {losses:?} tau' {tau_prime}"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "criterion 3 took {elapsed:.2}s, budget 5s");
    println!(
        "[criterion 3] PASS: proxy selection equals exhaustive subset search on 200 cases \
         ({elapsed:.2}s)"
    );
}

#[test]
fn criterion_4_small_loss_ordering() {
    let start = Instant::now();
    let mut label_above_clean = 0;
    let mut label_above_feature = 0;
    for seed in 1..=5u64 {
        let (source, ledger) = blobs_stage_one(seed);
        let avg = ledger.average_losses();
        let mut sums = [0.0f64; 4];
        let mut counts = [0usize; 4];
        for (s, &l) in source.samples.iter().zip(&avg) {
            let cat = noise_category(s.label_noisy, s.feature_noisy);
            sums[cat] += l;
            counts[cat] += 1;
        }
        let mean_of = |c: usize| sums[c] / counts[c] as f64;
        let (clean, label, feature) = (mean_of(0), mean_of(1), mean_of(2));
        if label > clean {
            label_above_clean += 1;
        }
        if label > feature {
            label_above_feature += 1;
        }
        println!(
            "  seed {seed}: mean avg-loss clean {clean:.3}, label-noisy {label:.3}, \
             feature-only {feature:.3}"
        );
    }
    assert!(
        label_above_clean >= 4,
        "label-noisy > clean held on only {label_above_clean}/5 seeds"
    );
    assert!(
        label_above_feature >= 4,
        "label-noisy > feature-only held on only {label_above_feature}/5 seeds"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 120.0,
        "criterion 4 took {elapsed:.0}s, budget 2min"
    );
    println!(
        "[criterion 4] PASS: label-noisy losses dominate clean on {label_above_clean}/5 and \
         feature-only on {label_above_feature}/5 seeds ({elapsed:.1}s)"
    );
}

#[test]
fn criterion_5_filter_quality() {
    let start = Instant::now();
    let cfg = RunConfig::standard_blobs("unused");
    let mut margins = Vec::new();
    for seed in 1..=5u64 {
        let (source, ledger) = blobs_stage_one(seed);
        let avg = ledger.average_losses();
        let labels = source.observed_labels();
        let rates = cfg.train.noise_rate.per_class(source.classes()).unwrap();
        let keep: Vec<f64> = rates.iter().map(|&r| keep_fraction(r)).collect();
        let thresholds = class_thresholds(&avg, &labels, &keep).unwrap();
        let w = assign_weights(&avg, &labels, &thresholds).unwrap();
        let metrics = filter_metrics(&w, &source).unwrap();
        let clean_rate =
            source.samples.iter().filter(|s| !s.label_noisy).count() as f64 / source.len() as f64;
        margins.push(metrics.precision - clean_rate);
        println!(
            "  seed {seed}: precision {:.4}, clean rate {clean_rate:.4}, margin {:.4}",
            metrics.precision,
            metrics.precision - clean_rate
        );
    }
    let mean_margin = mean(&margins);
    assert!(
        mean_margin >= FILTER_MARGIN_MIN,
        "mean precision margin {mean_margin:.4} below {FILTER_MARGIN_MIN}"
    );
    assert!(
        (mean_margin - FILTER_MARGIN_RECORDED).abs() <= 1e-9,
        "regression: mean margin {mean_margin:.12} drifted from recorded \
         {FILTER_MARGIN_RECORDED:.12}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 120.0,
        "criterion 5 took {elapsed:.0}s, budget 2min"
    );
    println!(
        "[criterion 5] PASS: filter precision beats clean rate by {mean_margin:.4} mean \
         (threshold {FILTER_MARGIN_MIN}, recorded baseline matched) ({elapsed:.1}s)"
    );
}

#[test]
fn criterion_6_feature_noise_enlarges_discrepancy() {
    // The discrepancy-enlargement claim concerns domains that substantially
    // overlap (corruption then makes the source MORE distinguishable from
    // the target). A mild shift keeps the experiment in that regime; under
    // the standard task's large shift the domains are near-separable to
    // begin with and scattering the source into the target region can only
    // lower the measured distance.
    let start = Instant::now();
    let cfg = RunConfig::standard_two_moons("unused");
    let mild_shift = rda_core::datagen::ShiftSpec::rotation(10.0);
    let mut clean_d = Vec::new();
    let mut noisy_d = Vec::new();
    for seed in 1..=5u64 {
        let pair = gen_shifted_pair(
            &cfg.pair_kind(),
            cfg.dataset.n_source,
            cfg.dataset.n_target,
            &mild_shift,
            None,
            derive_seed(seed, 0xE1),
        )
        .unwrap();
        let corrupted = corrupt_features(
            &pair.source,
            0.4,
            cfg.noise.sigma_e,
            cfg.noise.sp_fraction,
            derive_seed(seed, 0xE2),
        )
        .unwrap();
        let clean = estimate_discrepancy(
            &pair.source.feature_matrix(),
            &pair.target.feature_matrix(),
            0.5,
            derive_seed(seed, 0xD0),
        )
        .unwrap();
        let noisy = estimate_discrepancy(
            &corrupted.feature_matrix(),
            &pair.target.feature_matrix(),
            0.5,
            derive_seed(seed, 0xD0),
        )
        .unwrap();
        println!(
            "  seed {seed}: clean distance {:.3}, feature-noisy distance {:.3}",
            clean.proxy_a_distance, noisy.proxy_a_distance
        );
        clean_d.push(clean.proxy_a_distance);
        noisy_d.push(noisy.proxy_a_distance);
    }
    let (mc, mn) = (mean(&clean_d), mean(&noisy_d));
    assert!(
        mn > mc,
        "feature noise did not enlarge the mean proxy-A-distance: {mn:.3} vs {mc:.3}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 60.0,
        "criterion 6 took {elapsed:.0}s, budget 1min"
    );
    println!(
        "[criterion 6] PASS: mean proxy-A-distance rises from {mc:.3} (clean) to {mn:.3} \
         (feature noise at 0.4) ({elapsed:.1}s)"
    );
}

#[test]
fn criterion_7_method_ordering() {
    let start = Instant::now();
    let out = tmp_out("c7");
    let base = RunConfig::standard_two_moons(&out);

    let mean_acc = |method: Method, mode: NoiseModeConfig, level: f64| -> f64 {
        let mut cfg = base.clone();
        cfg.method = method;
        cfg.noise.mode = mode;
        cfg.noise.level = level;
        cfg.train.eval_every = 0;
        let rows = run_experiment(&cfg, true).unwrap();
        mean(&rows.iter().map(|r| r.target_accuracy).collect::<Vec<_>>())
    };

    let src_noisy = mean_acc(Method::SourceOnly, NoiseModeConfig::Mixed, 0.4);
    let adv_noisy = mean_acc(Method::Adversarial, NoiseModeConfig::Mixed, 0.4);
    let rda_noisy = mean_acc(Method::Rda, NoiseModeConfig::Mixed, 0.4);
    let adv_clean = mean_acc(Method::Adversarial, NoiseModeConfig::None, 0.0);
    let rda_clean = mean_acc(Method::Rda, NoiseModeConfig::None, 0.0);

    println!(
        "  mixed 40%: source-only {src_noisy:.4}, adversarial {adv_noisy:.4}, rda {rda_noisy:.4}"
    );
    println!("  clean: adversarial {adv_clean:.4}, rda {rda_clean:.4}");

    assert!(
        rda_noisy >= adv_noisy - RDA_VS_ADV_SLACK,
        "rda {rda_noisy:.4} below adversarial {adv_noisy:.4} - {RDA_VS_ADV_SLACK}"
    );
    assert!(
        rda_noisy - src_noisy >= RDA_VS_SRC_MARGIN,
        "rda - source-only = {:.4} below {RDA_VS_SRC_MARGIN}",
        rda_noisy - src_noisy
    );
    assert!(
        rda_clean >= adv_clean - RDA_VS_ADV_CLEAN_SLACK,
        "at 0% noise rda {rda_clean:.4} below adversarial {adv_clean:.4} - \
         {RDA_VS_ADV_CLEAN_SLACK}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 600.0,
        "criterion 7 took {elapsed:.0}s, budget 10min"
    );
    println!(
        "[criterion 7] PASS: rda {rda_noisy:.4} >= adversarial {adv_noisy:.4} (slack \
         {RDA_VS_ADV_SLACK}), beats source-only {src_noisy:.4} by {:.4} (>= \
         {RDA_VS_SRC_MARGIN}), and at 0%% noise {rda_clean:.4} vs {adv_clean:.4} ({elapsed:.0}s)",
        rda_noisy - src_noisy
    );
}

#[test]
fn criterion_8_offline_beats_online_filter() {
    let start = Instant::now();
    let cfg = RunConfig::standard_blobs("unused");
    let mut offline_precisions = Vec::new();
    let mut online_precisions = Vec::new();
    for seed in 1..=5u64 {
        let (source, ledger) = blobs_stage_one(seed);
        let avg = ledger.average_losses();
        let labels = source.observed_labels();
        let rates = cfg.train.noise_rate.per_class(source.classes()).unwrap();
        let keep: Vec<f64> = rates.iter().map(|&r| keep_fraction(r)).collect();
        let thresholds = class_thresholds(&avg, &labels, &keep).unwrap();
        let w = assign_weights(&avg, &labels, &thresholds).unwrap();
        let offline = filter_metrics(&w, &source).unwrap().precision;

        // Online baseline: ONE fixed global threshold tuned on the pooled
        // per-epoch losses to keep the same fraction as the offline filter,
        // applied per-epoch (the per-epoch, global-threshold rule);
        // precision averaged over the epochs it filters.
        let keep_fraction_offline = w.kept() as f64 / source.len() as f64;
        let mut pooled = Vec::with_capacity(source.len() * ledger.epochs());
        for t in 0..ledger.epochs() {
            pooled.extend(ledger.epoch_column(t));
        }
        let budget = (keep_fraction_offline * pooled.len() as f64).round() as usize;
        let gamma = global_threshold_for_count(&pooled, budget);
        let mut per_epoch = Vec::with_capacity(ledger.epochs());
        for t in 0..ledger.epochs() {
            let wt = online_curriculum_weights(&ledger.epoch_column(t), gamma);
            per_epoch.push(filter_metrics(&wt, &source).unwrap().precision);
        }
        let online = mean(&per_epoch);
        println!("  seed {seed}: offline precision {offline:.4}, online {online:.4}");
        offline_precisions.push(offline);
        online_precisions.push(online);
    }
    let (off, on) = (mean(&offline_precisions), mean(&online_precisions));
    assert!(
        off >= on,
        "offline precision {off:.4} below online baseline {on:.4}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 120.0,
        "criterion 8 took {elapsed:.0}s, budget 2min"
    );
    println!(
        "[criterion 8] PASS: offline filter precision {off:.4} >= online baseline {on:.4} \
         ({elapsed:.1}s)"
    );
}

#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let out_a = tmp_out("c9a");
    let out_b = tmp_out("c9b");
    let mut cfg = RunConfig::standard_two_moons(&out_a);
    cfg.dataset.n_source = 200;
    cfg.dataset.n_target = 200;
    cfg.train.epochs = 5;
    cfg.train.n_max = 80;
    cfg.train.batch = 32;
    cfg.train.eval_every = 20;
    cfg.method = Method::Rda;
    cfg.seeds = vec![11];
    let mut cfg_b = cfg.clone();
    cfg_b.output_dir = out_b.clone();

    run_experiment(&cfg, false).unwrap();
    run_experiment(&cfg_b, false).unwrap();

    let root_a = PathBuf::from(&out_a).join(cfg.config_hash());
    let root_b = PathBuf::from(&out_b).join(cfg_b.config_hash());
    let artifacts = [
        "results.csv",
        "seed_11/source.csv",
        "seed_11/target.csv",
        "seed_11/ledger.csv",
        "seed_11/loss_histogram.csv",
        "seed_11/loss_histogram.dat",
        "seed_11/sample_weights.csv",
        "seed_11/history.csv",
        "seed_11/net.txt",
        "seed_11/embeddings.csv",
    ];
    for name in artifacts {
        let a = std::fs::read(root_a.join(name)).unwrap();
        let b = std::fs::read(root_b.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "[criterion 9] PASS: identical config and seed reproduce {} artifacts byte-for-byte \
         ({elapsed:.1}s)",
        artifacts.len()
    );
}
