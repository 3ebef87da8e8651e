//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! 1. Gradient fidelity of the network against central finite differences.
//! 2. Weighted loss reduces to cross-entropy at unit weights; zero weights
//!    give exactly zero loss and gradients.
//! 3. Boosting mechanics: distribution normalization, weight monotonicity,
//!    untouched correct instances, vote rule vs. brute force.
//! 4. Relative ordering on the synthetic shift benchmark: iterative transfer
//!    beats target-only and the naive combination by at least 0.02.
//! 5. Finetune-based initialization beats average initialization and peaks
//!    within five iterations.
//! 6. Pattern mining ranks a planted trigram first under both scores.
//! 7. Metrics match hand arithmetic; the 9:1 split reproduces 13,154.
//! 8. LSH dedup removes planted duplicates with at most 1% false merges.
//! 9. Every CLI subcommand is byte-deterministic under a fixed seed.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use imcred_core::boost::{
    compute_betas, init_weights, normalize, run_boost, target_error, update_weights, BetaDecision,
    BoostConfig, BoostEnsemble, InitStrategy, VoteRange, WeightedLearner,
};
use imcred_core::error::Result as CoreResult;
use imcred_core::eval::compare::{
    model_transfer_models, run_comparison, synth_compare_data, Arm, ComparisonConfig,
    LogRegBoostLearner,
};
use imcred_core::eval::stratified_split;
use imcred_core::eval::synth::{synth_shift, ShiftSpec};
use imcred_core::image::ImageTensor;
use imcred_core::learners::{
    batch_gradients, weighted_loss, Activation, ConvNet, ConvNetSpec, LayerSpec,
};
use imcred_core::lsh::dedup;
use imcred_core::patterns::{
    rank_patterns, score_patterns, Contingency, RankMethod, TokenizedDoc,
};
use imcred_core::rng::Rng;
use imcred_core::CoreError;

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient fidelity, tiny 2 conv + 2 FC net on 8x8 input.
// ---------------------------------------------------------------------------

fn tiny_net_spec() -> ConvNetSpec {
    ConvNetSpec {
        input_height: 8,
        input_width: 8,
        input_channels: 1,
        layers: vec![
            LayerSpec::Convolution { out_channels: 4, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::MaxPool { kernel: 2, stride: 2 },
            LayerSpec::Convolution { out_channels: 6, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::MaxPool { kernel: 2, stride: 2 },
            LayerSpec::FullyConnected {
                out_dim: 10,
                activation: Activation::Relu,
                dropout_rate: 0.0,
            },
            LayerSpec::FullyConnected {
                out_dim: 2,
                activation: Activation::Softmax,
                dropout_rate: 0.0,
            },
        ],
    }
}

fn randomized_net(seed: u64) -> ConvNet<f64> {
    let mut net = ConvNet::<f64>::init(tiny_net_spec(), seed).unwrap();
    let mut rng = Rng::new(seed ^ 0xabcd);
    for p in net.params.iter_mut().flatten() {
        for v in p.weights.data_mut() {
            *v = rng.next_gaussian() * 0.3;
        }
        for v in p.bias.data_mut() {
            *v = rng.next_gaussian() * 0.03;
        }
    }
    net
}

fn weighted_batch(seed: u64, n: usize) -> (Vec<ImageTensor<f64>>, Vec<u8>, Vec<f64>) {
    let mut rng = Rng::new(seed);
    let images = (0..n)
        .map(|_| {
            let values = (0..64).map(|_| rng.next_f64()).collect();
            ImageTensor::new(8, 8, 1, values).unwrap()
        })
        .collect();
    let labels = (0..n).map(|_| rng.next_index(2) as u8).collect();
    let weights = (0..n).map(|_| 0.5 + 1.5 * rng.next_f64()).collect();
    (images, labels, weights)
}

fn batch_loss(
    net: &ConvNet<f64>,
    images: &[ImageTensor<f64>],
    labels: &[u8],
    weights: &[f64],
) -> f64 {
    let probs: Vec<[f64; 2]> = images
        .iter()
        .map(|img| net.forward(img, false, 0).unwrap().probs)
        .collect();
    weighted_loss(&probs, labels, weights).unwrap()
}

#[test]
fn criterion_1_gradient_fidelity() {
    let start = Instant::now();
    let step = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in [2u64, 29] {
        let net = randomized_net(seed);
        let (images, labels, weights) = weighted_batch(seed ^ 0x77, 4);
        let refs: Vec<&ImageTensor<f64>> = images.iter().collect();
        let (_, grads) = batch_gradients(&net, &refs, &labels, &weights, false, 0).unwrap();
        for k in 0..net.params.len() {
            let Some(g) = grads.layers[k].as_ref() else { continue };
            let entries: Vec<(bool, usize, f64)> = g
                .weights
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| (true, i, v))
                .chain(g.bias.data().iter().enumerate().map(|(i, &v)| (false, i, v)))
                .collect();
            for (is_weight, i, analytic) in entries {
                let mut plus = net.clone();
                let mut minus = net.clone();
                for (net_mut, delta) in [(&mut plus, step), (&mut minus, -step)] {
                    let p = net_mut.params[k].as_mut().unwrap();
                    let slot = if is_weight { p.weights.data_mut() } else { p.bias.data_mut() };
                    slot[i] += delta;
                }
                let numeric = (batch_loss(&plus, &images, &labels, &weights)
                    - batch_loss(&minus, &images, &labels, &weights))
                    / (2.0 * step);
                let rel =
                    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                assert!(
                    rel < 1e-4,
                    "seed {seed} layer {k} idx {i}: analytic {analytic:.4e} vs numeric {numeric:.4e} (rel {rel:.2e})"
                );
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "gradient fidelity",
        checked > 1000 && worst < 1e-4 && elapsed.as_secs() < 30,
        &format!("{checked} parameters, worst rel err {worst:.2e}, {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: weighted-loss reduction and zero-weight behavior.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_weighted_loss_reduction() {
    let mut rng = Rng::new(12);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let batch = 1 + rng.next_index(8);
        let mut probs = Vec::with_capacity(batch);
        let mut labels = Vec::with_capacity(batch);
        for _ in 0..batch {
            let p1 = 1e-6 + (1.0 - 2e-6) * rng.next_f64();
            probs.push([1.0 - p1, p1]);
            labels.push(rng.next_index(2) as u8);
        }
        let unit = vec![1.0f64; batch];
        let ours = weighted_loss(&probs, &labels, &unit).unwrap();
        // Plain cross-entropy, written independently.
        let reference: f64 = probs
            .iter()
            .zip(&labels)
            .map(|(p, &y)| if y == 1 { -p[1].ln() } else { -p[0].ln() })
            .sum();
        worst = worst.max((ours - reference).abs());
    }

    // Zero weights: exactly zero loss and exactly zero gradients.
    let net = randomized_net(5);
    let (images, labels, _) = weighted_batch(6, 5);
    let refs: Vec<&ImageTensor<f64>> = images.iter().collect();
    let zeros = vec![0.0f64; images.len()];
    let (loss, grads) = batch_gradients(&net, &refs, &labels, &zeros, false, 0).unwrap();
    let zero_grads = grads
        .layers
        .iter()
        .flatten()
        .all(|g| g.weights.data().iter().all(|&x| x == 0.0) && g.bias.data().iter().all(|&x| x == 0.0));

    report(
        2,
        "weighted loss reduction",
        worst < 1e-12 && loss == 0.0 && zero_grads,
        &format!("max |weighted - plain CE| = {worst:.2e} over 1000 batches; zero-weight loss {loss}, gradients all zero: {zero_grads}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: Algorithm mechanics over randomized runs + exhaustive votes.
// ---------------------------------------------------------------------------

struct StubLearner {
    labels: Vec<u8>,
    accuracy: f64,
    rng: Rng,
}

impl WeightedLearner<f64> for StubLearner {
    type Model = Vec<u8>;

    fn train(&mut self, _weights: &[f64], _round: usize) -> CoreResult<Vec<u8>> {
        Ok(self
            .labels
            .iter()
            .map(|&l| if self.rng.next_bool(self.accuracy) { l } else { 1 - l })
            .collect())
    }

    fn predict_all(&self, model: &Vec<u8>) -> CoreResult<Vec<u8>> {
        Ok(model.clone())
    }
}

#[test]
fn criterion_3_boost_mechanics() {
    let mut runs = 0usize;
    for seed in 0..100u64 {
        let mut rng = Rng::new(seed.wrapping_mul(977));
        let n = 4 + rng.next_index(20);
        let m = 1 + rng.next_index(8);
        let labels: Vec<u8> = (0..n + m).map(|_| rng.next_index(2) as u8).collect();
        let cfg = BoostConfig {
            iterations: 1 + rng.next_index(8),
            ..BoostConfig::default()
        };
        let mut learner = StubLearner {
            labels: labels.clone(),
            accuracy: 0.6 + 0.35 * rng.next_f64(),
            rng: Rng::new(seed ^ 0x5555),
        };
        let mut w: Vec<f64> = init_weights(n, m, InitStrategy::Average, None).unwrap();
        for round in 1..=cfg.iterations {
            let p = normalize(&w).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "p summed to {sum}");
            let model = learner.train(&p, round).unwrap();
            let preds = learner.predict_all(&model).unwrap();
            let eps = target_error(&preds[n..], &labels[n..], &w[n..]).unwrap();
            assert!((0.0..=1.0).contains(&eps));
            let decision = compute_betas(eps, n, cfg.iterations, &cfg).unwrap();
            let BetaDecision::Proceed { beta_t, beta, epsilon_used } = decision else {
                break;
            };
            assert!(epsilon_used >= cfg.epsilon_floor && epsilon_used < 0.5);
            assert!(beta_t > 0.0 && beta_t < 1.0);
            assert!(beta > 0.0 && beta < 1.0);
            let next = update_weights(&w, &preds, &labels, beta, beta_t, n);
            for i in 0..n {
                assert!(next[i] <= w[i] + 1e-18, "auxiliary weight rose");
            }
            for i in n..n + m {
                assert!(next[i] + 1e-18 >= w[i], "target weight fell");
            }
            for i in 0..n + m {
                if preds[i] == labels[i] {
                    assert_eq!(next[i], w[i], "correct weight changed");
                }
            }
            w = next;
        }
        runs += 1;
    }

    // Exhaustive vote patterns for K <= 6 against a brute-force evaluation.
    let mut rng = Rng::new(424242);
    let mut patterns = 0usize;
    for k in 1..=6usize {
        for range in [VoteRange::AllIterations, VoteRange::LastHalf] {
            for _ in 0..3 {
                let betas: Vec<f64> = (0..k).map(|_| 1e-6 + 0.4999 * rng.next_f64()).collect();
                let ens = BoostEnsemble {
                    members: betas.iter().map(|&b| ((), b)).collect(),
                    vote_range: range,
                };
                for bits in 0..(1u32 << k) {
                    let votes: Vec<u8> = (0..k).map(|i| ((bits >> i) & 1) as u8).collect();
                    let start = match range {
                        VoteRange::AllIterations => 0,
                        VoteRange::LastHalf => k.div_ceil(2) - 1,
                    };
                    let lhs: f64 = (start..k)
                        .map(|i| (1.0 / betas[i]).ln() * votes[i] as f64)
                        .sum();
                    let rhs: f64 = (start..k).map(|i| 0.5 * (1.0 / betas[i]).ln()).sum();
                    assert_eq!(ens.vote(&votes).unwrap(), u8::from(lhs >= rhs));
                    patterns += 1;
                }
            }
        }
    }
    report(
        3,
        "boosting mechanics",
        runs == 100,
        &format!("{runs} randomized runs, {patterns} exhaustive vote patterns"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 4 and 5: relative ordering on the synthetic shift benchmark.
// ---------------------------------------------------------------------------

fn benchmark_data(seed: u64) -> imcred_core::eval::compare::CompareData {
    let mut spec = ShiftSpec::default_benchmark();
    assert_eq!(spec.aux_size, 2000);
    assert_eq!(spec.target_train_size, 100);
    assert_eq!(spec.test_size, 1000);
    assert_eq!(spec.aux_label_noise_rate, 0.2);
    spec.seed = seed;
    synth_compare_data(&synth_shift(&spec).unwrap(), false).unwrap()
}

fn boost_members(
    data: &imcred_core::eval::compare::CompareData,
    cfg: &ComparisonConfig,
    init: InitStrategy,
    iterations: usize,
) -> BoostEnsemble<imcred_core::LogRegF64, f64> {
    let n = data.aux.len();
    let m = data.target_train.len();
    let labels: Vec<u8> = data.aux.iter().chain(&data.target_train).map(|s| s.label).collect();
    let rows: Vec<Vec<f64>> = data
        .aux
        .iter()
        .chain(&data.target_train)
        .map(|s| s.features.clone().unwrap())
        .collect();
    let boost_cfg = BoostConfig { iterations, init_strategy: init, ..BoostConfig::default() };
    let initial = match init {
        InitStrategy::Average => init_weights(n, m, init, None).unwrap(),
        InitStrategy::FinetuneBased => {
            let (_, probs) = model_transfer_models(data, cfg).unwrap();
            init_weights(n, m, init, Some(&probs)).unwrap()
        }
    };
    let mut learner = LogRegBoostLearner { rows, labels: labels.clone(), cfg: cfg.logreg_train.clone() };
    run_boost(&mut learner, &labels, n, m, initial, &boost_cfg)
        .unwrap()
        .ensemble
}

fn ensemble_accuracy(
    ens: &BoostEnsemble<imcred_core::LogRegF64, f64>,
    upto: usize,
    data: &imcred_core::eval::compare::CompareData,
) -> f64 {
    let prefix = BoostEnsemble {
        members: ens.members[..upto.min(ens.members.len())].to_vec(),
        vote_range: ens.vote_range,
    };
    let mut hits = 0usize;
    for s in &data.target_test {
        let x = s.features.as_ref().unwrap();
        let p = prefix
            .predict_with::<CoreError>(|m| m.predict(x).map(|p| p.label))
            .unwrap();
        if p == s.label {
            hits += 1;
        }
    }
    hits as f64 / data.target_test.len() as f64
}

#[test]
fn criterion_4_relative_ordering() {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let mut target_only = 0.0;
    let mut naive = 0.0;
    let mut data_transfer = 0.0;
    let mut iterative = 0.0;
    for &seed in &seeds {
        let data = benchmark_data(seed);
        let cfg = ComparisonConfig {
            arms: vec![Arm::TargetOnly, Arm::DataTransfer, Arm::NaiveCombination],
            seed,
            ..ComparisonConfig::default()
        };
        for outcome in run_comparison(&data, &cfg).unwrap() {
            let acc = outcome.report.as_ref().unwrap().accuracy;
            match outcome.arm.as_str() {
                "target-only" => target_only += acc,
                "data-transfer" => data_transfer += acc,
                "naive-combination" => naive += acc,
                _ => unreachable!(),
            }
        }
        let ens = boost_members(&data, &cfg, InitStrategy::FinetuneBased, 5);
        iterative += ensemble_accuracy(&ens, ens.members.len(), &data);
    }
    let k = seeds.len() as f64;
    let (target_only, naive, data_transfer, iterative) =
        (target_only / k, naive / k, data_transfer / k, iterative / k);
    let elapsed = start.elapsed();
    let pass = iterative >= target_only + 0.02
        && iterative >= naive + 0.02
        && iterative >= data_transfer + 0.02
        && elapsed.as_secs() < 120;
    report(
        4,
        "relative ordering",
        pass,
        &format!(
            "iterative {iterative:.4} vs target-only {target_only:.4}, naive {naive:.4}, data-transfer {data_transfer:.4} ({elapsed:.2?})"
        ),
    );
}

#[test]
fn criterion_5_initialization_comparison() {
    let seeds: Vec<u64> = (0..10).collect();
    let k_rounds = 10usize;
    let mut finetune_final = 0.0;
    let mut average_final = 0.0;
    let mut curve_sum = vec![0.0f64; k_rounds];
    let mut curve_count = vec![0usize; k_rounds];
    for &seed in &seeds {
        let data = benchmark_data(seed);
        let cfg = ComparisonConfig { seed, ..ComparisonConfig::default() };
        let ft = boost_members(&data, &cfg, InitStrategy::FinetuneBased, k_rounds);
        let avg = boost_members(&data, &cfg, InitStrategy::Average, k_rounds);
        // Final accuracy at the default K = 5 operating point.
        finetune_final += ensemble_accuracy(&ft, 5, &data);
        average_final += ensemble_accuracy(&avg, 5, &data);
        for t in 0..ft.members.len() {
            curve_sum[t] += ensemble_accuracy(&ft, t + 1, &data);
            curve_count[t] += 1;
        }
    }
    let k = seeds.len() as f64;
    let (finetune_final, average_final) = (finetune_final / k, average_final / k);
    let curve: Vec<f64> = curve_sum
        .iter()
        .zip(&curve_count)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let best = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best_within_5 = curve.iter().take(5).cloned().fold(f64::NEG_INFINITY, f64::max);
    let pass = finetune_final >= average_final && best_within_5 >= best - 1e-12;
    report(
        5,
        "initialization comparison",
        pass,
        &format!(
            "finetune {finetune_final:.4} >= average {average_final:.4}; mean curve {:?} peaks within 5",
            curve.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: planted-pattern mining.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_pattern_mining() {
    // 200 docs; the planted trigram appears in 95% of fake and 2% of real
    // docs. Its fragments ("is", "it real", ...) also occur innocently in
    // both classes, so no sub-gram can tie the full trigram's contingency.
    let planted = ["is", "it", "real"];
    let contains_run = |tokens: &[String], pattern: &[&str]| {
        tokens
            .windows(pattern.len())
            .any(|w| w.iter().map(String::as_str).eq(pattern.iter().copied()))
    };
    let noise = [
        "sunny", "day", "market", "launch", "river", "music", "travel", "phone", "coffee",
        "city", "report", "game",
    ];
    let fragments: [&[&str]; 5] = [
        &["is"],
        &["it"],
        &["real"],
        &["is", "it", "market"],
        &["day", "it", "real"],
    ];
    let mut rng = Rng::new(606);
    let mut corpus = Vec::new();
    for i in 0..200 {
        let fake = i < 100;
        let with_planted = if fake { i % 100 < 95 } else { i % 100 < 2 };
        let tokens = loop {
            let mut tokens: Vec<String> = (0..6)
                .map(|_| noise[rng.next_index(noise.len())].to_string())
                .collect();
            // Innocent fragments in roughly a third of all docs.
            for fragment in &fragments {
                if rng.next_bool(0.3) {
                    let at = rng.next_index(tokens.len());
                    for (off, tok) in fragment.iter().enumerate() {
                        tokens.insert(at + off, tok.to_string());
                    }
                }
            }
            if with_planted {
                let at = rng.next_index(tokens.len());
                for (off, tok) in planted.iter().enumerate() {
                    tokens.insert(at + off, tok.to_string());
                }
            }
            // Keep the planted contingency exact: reject accidental runs.
            if contains_run(&tokens, &planted) == with_planted {
                break tokens;
            }
        };
        corpus.push(TokenizedDoc {
            id: format!("doc{i}"),
            tokens,
            label: u8::from(fake),
        });
    }

    let mut first_both = true;
    for method in [RankMethod::Chi2, RankMethod::GainRatio] {
        let ranked = rank_patterns(&corpus, 3, method, 10, 2).unwrap();
        first_both &= ranked.patterns[0] == planted.map(String::from).to_vec();
    }

    // Exact-rational chi-squared oracle: integer numerator and denominator
    // below 2^53, so the f64 quotient is correctly rounded.
    let chi2_oracle = |c: Contingency| -> f64 {
        let (a, b, cc, d) = (c.a as i128, c.b as i128, c.c as i128, c.d as i128);
        let den = (a + b) * (cc + d) * (a + cc) * (b + d);
        if den == 0 {
            return 0.0;
        }
        let n = a + b + cc + d;
        let diff = a * d - b * cc;
        (n * diff * diff) as f64 / den as f64
    };
    let scores = score_patterns(&corpus, 3, 1).unwrap();
    let mut worst_chi2 = 0.0f64;
    let mut gain_ok = true;
    for s in &scores {
        worst_chi2 = worst_chi2.max((s.chi2 - chi2_oracle(s.counts)).abs());
        gain_ok &= (-1e-12..=1.0 + 1e-12).contains(&s.gain_ratio);
    }
    report(
        6,
        "pattern mining",
        first_both && worst_chi2 < 1e-9 && gain_ok,
        &format!(
            "planted trigram first under both methods: {first_both}; max chi2 error {worst_chi2:.2e} over {} candidates; gain ratios in [0,1]: {gain_ok}",
            scores.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: metrics arithmetic and the 9:1 split echo.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_metrics_and_split() {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (p, l, count) in [(1u8, 1u8, 75usize), (0, 1, 25), (1, 0, 20), (0, 0, 80)] {
        preds.extend(std::iter::repeat_n(p, count));
        labels.extend(std::iter::repeat_n(l, count));
    }
    let m = imcred_core::eval::compute_metrics(&preds, &labels, "hand").unwrap();
    let metrics_ok = (m.fake_f1 - 0.7692).abs() < 1e-4
        && (m.fake_precision - 75.0 / 95.0).abs() < 1e-12
        && (m.fake_recall - 0.75).abs() < 1e-12;

    let balanced: Vec<u8> = (0..14_616).map(|i| (i % 2) as u8).collect();
    let (train, test) = stratified_split(&balanced, (9, 1), 17).unwrap();
    let split_ok = train.len() == 13_154 && test.len() == 14_616 - 13_154;
    report(
        7,
        "metrics and split",
        metrics_ok && split_ok,
        &format!(
            "fake F1 {:.4} (want 0.7692 +/- 1e-4); 9:1 split of 14,616 gives {} train",
            m.fake_f1,
            train.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: dedup with planted duplicates.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_dedup() {
    let mut rng = Rng::new(88);
    let originals: Vec<ImageTensor<f64>> = (0..900)
        .map(|_| {
            let values = (0..24 * 24).map(|_| rng.next_f64()).collect();
            ImageTensor::new(24, 24, 1, values).unwrap()
        })
        .collect();
    // Interleave 100 exact copies of the first 100 originals.
    let mut images = originals.clone();
    let mut duplicate_positions = Vec::new();
    for i in 0..100 {
        let pos = 900 - i * 7;
        images.insert(pos, originals[i].clone());
    }
    // Recompute where the copies landed: a copy is any index whose tensor
    // equals an earlier one.
    for (i, img) in images.iter().enumerate() {
        if images[..i].iter().any(|other| other == img) {
            duplicate_positions.push(i);
        }
    }
    assert_eq!(images.len(), 1000);
    assert_eq!(duplicate_positions.len(), 100);

    let kept = dedup(&images, 64, 0, 31).unwrap();
    let kept_set: std::collections::HashSet<usize> = kept.iter().copied().collect();
    let copies_removed = duplicate_positions.iter().all(|p| !kept_set.contains(p));
    let false_merges = 1000 - kept.len() - duplicate_positions.len();
    report(
        8,
        "dedup",
        copies_removed && false_merges <= 10,
        &format!(
            "kept {} of 1000; all 100 planted copies removed: {copies_removed}; false merges {false_merges} (allowed 10)",
            kept.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical CLI reruns under a fixed seed.
// ---------------------------------------------------------------------------

fn imcred() -> Command {
    Command::new(env!("CARGO_BIN_EXE_imcred"))
}

fn run_ok(cmd: &mut Command) {
    let output = cmd.output().expect("spawn imcred");
    assert!(
        output.status.success(),
        "command {:?} failed:\n{}",
        cmd,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_fixtures(dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let shift = dir.join("shift.json");
    let mut spec = ShiftSpec::default_benchmark();
    spec.aux_size = 60;
    spec.target_train_size = 20;
    spec.test_size = 30;
    spec.seed = 11;
    std::fs::write(&shift, serde_json::to_string_pretty(&spec).unwrap()).unwrap();

    let corpus = dir.join("corpus.jsonl");
    let mut rng = Rng::new(9);
    let noise = ["sunny", "day", "market", "game", "river"];
    let mut lines = String::new();
    for i in 0..40 {
        let fake = i % 2 == 0;
        let mut words: Vec<&str> = (0..4).map(|_| noise[rng.next_index(noise.len())]).collect();
        if fake && i % 10 != 8 {
            words.insert(1, "is it real");
        }
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"id": format!("c{i}"), "text": words.join(" "), "label": u8::from(fake)})
        ));
    }
    std::fs::write(&corpus, lines).unwrap();

    let texts = dir.join("texts.jsonl");
    let mut lines = String::new();
    for i in 0..10 {
        let text = if i < 4 { "heard is it real today" } else { "calm sunny day" };
        lines.push_str(&format!("{}\n", serde_json::json!({"id": format!("t{i}"), "text": text})));
    }
    std::fs::write(&texts, lines).unwrap();

    let text_manifest = dir.join("texts-manifest.jsonl");
    let mut lines = String::new();
    for i in 0..20 {
        let fake = i % 2 == 0;
        let domain = if i % 4 < 2 { "target_train" } else { "target_test" };
        let text = if fake { "is it real? rumor!" } else { "confirmed by bbc" };
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"id": format!("m{i}"), "text": text, "label": u8::from(fake), "domain": domain})
        ));
    }
    std::fs::write(&text_manifest, lines).unwrap();

    let net_cfg = dir.join("cfg.json");
    let cfg = serde_json::json!({
        "seed": 11,
        "train": {
            "schedule": [{"rate": 0.05, "epochs": 2}],
            "batch_size": 16,
            "momentum": 0.9,
            "weight_decay": 5e-4,
            "dropout": true,
            "seed": 0,
            "last_layer_lr_multiplier": 1.0
        },
        "net_spec": {
            "input_height": 16,
            "input_width": 16,
            "input_channels": 1,
            "layers": [
                {"type": "convolution", "out_channels": 4, "kernel": 3, "stride": 1, "padding": 1},
                {"type": "max_pool", "kernel": 2, "stride": 2},
                {"type": "fully_connected", "out_dim": 16, "activation": "relu", "dropout_rate": 0.5},
                {"type": "fully_connected", "out_dim": 2, "activation": "softmax", "dropout_rate": 0.0}
            ]
        }
    });
    std::fs::write(&net_cfg, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    (shift, corpus, texts, text_manifest)
}

/// Run the full pipeline (every subcommand) into `out`, seed 11 throughout.
fn run_pipeline(fixtures: &Path, out: &Path) {
    let (shift, corpus, texts, text_manifest) = (
        fixtures.join("shift.json"),
        fixtures.join("corpus.jsonl"),
        fixtures.join("texts.jsonl"),
        fixtures.join("texts-manifest.jsonl"),
    );
    let cfg = fixtures.join("cfg.json");
    std::fs::create_dir_all(out).unwrap();
    let data = out.join("data");
    run_ok(imcred()
        .args(["synth", "--spec"])
        .arg(&shift)
        .arg("--out")
        .arg(&data)
        .args(["--images", "--seed", "11"]));
    let manifest = data.join("manifest.jsonl");
    run_ok(imcred()
        .arg("dedup")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(out.join("dedup.jsonl"))
        .arg("--report")
        .arg(out.join("dedup-report.json"))
        .args(["--min-side", "8", "--threshold", "0", "--seed", "11"]));
    run_ok(imcred()
        .arg("mine-patterns")
        .arg("--corpus")
        .arg(&corpus)
        .args(["--method", "chi2", "--top-k", "5", "--max-n", "3", "--min-df", "2"])
        .arg("--out")
        .arg(out.join("patterns.json")));
    run_ok(imcred()
        .arg("weak-label")
        .arg("--texts")
        .arg(&texts)
        .arg("--patterns")
        .arg(out.join("patterns.json"))
        .arg("--out")
        .arg(out.join("weak.jsonl")));
    run_ok(imcred()
        .args(["featurize", "text"])
        .arg("--manifest")
        .arg(&text_manifest)
        .arg("--out")
        .arg(out.join("text.csv")));
    run_ok(imcred()
        .args(["featurize", "bovw"])
        .arg("--manifest")
        .arg(&manifest)
        .args(["--k", "8", "--grid-step", "8", "--patch", "8", "--seed", "11"])
        .arg("--out")
        .arg(out.join("bovw.csv"))
        .arg("--vocab-out")
        .arg(out.join("vocab.json")));
    run_ok(imcred()
        .args(["train", "logreg"])
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(out.join("lr.json")));
    run_ok(imcred()
        .args(["train", "convnet"])
        .arg("--manifest")
        .arg(&manifest)
        .args(["--domains", "auxiliary", "--seed", "11"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out.join("cnn.json")));
    run_ok(imcred()
        .arg("fine-tune")
        .arg("--model")
        .arg(out.join("cnn.json"))
        .arg("--manifest")
        .arg(&manifest)
        .arg("--config")
        .arg(&cfg)
        .args(["--seed", "11"])
        .arg("--out")
        .arg(out.join("ft.json")));
    run_ok(imcred()
        .arg("extract-features")
        .arg("--model")
        .arg(out.join("ft.json"))
        .arg("--manifest")
        .arg(&manifest)
        .args(["--layer", "fc6"])
        .arg("--out")
        .arg(out.join("fc6.csv")));
    run_ok(imcred()
        .args(["train", "logreg"])
        .arg("--features")
        .arg(out.join("fc6.csv"))
        .arg("--out")
        .arg(out.join("lr-fc6.json")));
    run_ok(imcred()
        .arg("evaluate")
        .arg("--model")
        .arg(out.join("lr-fc6.json"))
        .arg("--manifest")
        .arg(&manifest)
        .arg("--features")
        .arg(out.join("fc6.csv"))
        .arg("--out")
        .arg(out.join("fc6-metrics.json")));
    run_ok(imcred()
        .arg("transfer-boost")
        .arg("--manifest")
        .arg(&manifest)
        .args(["--iterations", "2", "--init", "finetune", "--base", "logreg", "--seed", "11"])
        .arg("--out")
        .arg(out.join("ens.json"))
        .arg("--log")
        .arg(out.join("runlog.jsonl")));
    run_ok(imcred()
        .arg("evaluate")
        .arg("--model")
        .arg(out.join("lr.json"))
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(out.join("metrics.json"))
        .arg("--table")
        .arg(out.join("table.txt")));
    run_ok(imcred()
        .arg("evaluate")
        .arg("--ensemble")
        .arg(out.join("ens.json"))
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(out.join("ens-metrics.json")));
    run_ok(imcred()
        .arg("compare")
        .arg("--manifest")
        .arg(&manifest)
        .args(["--arms", "target-only,data-transfer,iterative-transfer", "--seed", "11"])
        .arg("--out")
        .arg(out.join("cmp")));
}

fn collect_files(root: &Path, files: &mut Vec<PathBuf>) {
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, files);
        } else {
            files.push(path);
        }
    }
}

#[test]
fn criterion_9_cli_determinism() {
    let base = tempfile::tempdir().unwrap();
    let fixtures = base.path().join("fixtures");
    std::fs::create_dir_all(&fixtures).unwrap();
    write_fixtures(&fixtures);
    let run_a = base.path().join("a");
    let run_b = base.path().join("b");
    run_pipeline(&fixtures, &run_a);
    run_pipeline(&fixtures, &run_b);

    let mut files_a = Vec::new();
    collect_files(&run_a, &mut files_a);
    files_a.sort();
    assert!(files_a.len() >= 15, "expected a full pipeline, saw {} files", files_a.len());
    let mut compared = 0usize;
    for a in &files_a {
        let rel = a.strip_prefix(&run_a).unwrap();
        let b = run_b.join(rel);
        let bytes_a = std::fs::read(a).unwrap();
        let bytes_b = std::fs::read(&b)
            .unwrap_or_else(|_| panic!("second run missing {}", rel.display()));
        assert_eq!(bytes_a, bytes_b, "{} differs between reruns", rel.display());
        compared += 1;
    }
    report(
        9,
        "CLI determinism",
        compared >= 15,
        &format!("{compared} output files byte-identical across reruns"),
    );
}
