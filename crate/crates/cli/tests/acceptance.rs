//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test -p tva-cli --test acceptance -- --nocapture`).
//!
//! The heavy criteria (5, 6, 7) share seeded single-worker evolution runs on
//! a frozen 10k-record synthetic scenario, built once on demand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use tva_core::baselines;
use tva_core::datagen::{synth_trace, SynthConfig, UrtMode};
use tva_core::decision::{
    self, predictors::OraclePredictor, predictors::ScriptedPredictor, Decision, DecisionOutcome,
    OutcomeTag, UtilityParams,
};
use tva_core::metrics;
use tva_core::neuroevolution::{evolve, EvolveConfig};
use tva_core::rnn::{self, EdgeGene, NodeGene, NodeKind, RnnGenome};
use tva_core::trace::{self, TraceDataset, Window, WindowSet, CH_COST, CH_LATENCY, CH_URT_PING};

fn pass(criterion: usize, label: &str) {
    println!("ACCEPTANCE C{criterion} {label}: PASS");
}

// ---------------------------------------------------------------------------
// Criterion 1: BPTT gradients match central finite differences for every
// memory-cell kind (max relative error < 1e-4, h = 1e-5, 8-step window).
// ---------------------------------------------------------------------------

fn minimal_cell_genome(kind: NodeKind, seed: u64) -> RnnGenome {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut p = || rng.random_range(-0.7..0.7);
    let node = |node_id, kind: NodeKind, depth, cell_params| NodeGene {
        node_id,
        kind,
        depth,
        cell_params,
    };
    let edge = |edge_id, src, dst, weight, recurrent_depth| EdgeGene {
        edge_id,
        src,
        dst,
        weight,
        enabled: true,
        recurrent_depth,
    };
    let params: Vec<f64> = (0..kind.param_count()).map(|_| p()).collect();
    RnnGenome {
        nodes: vec![
            node(0, NodeKind::Input, 0.0, vec![]),
            node(1, NodeKind::Output, 1.0, vec![]),
            node(2, kind, 0.5, params),
        ],
        edges: vec![
            edge(0, 0, 2, p(), 0),
            edge(1, 2, 1, p(), 0),
            edge(2, 2, 2, p(), 1),
            edge(3, 0, 1, p(), 2),
        ],
        input_channels: vec!["x".into()],
        output_channels: vec!["y".into()],
        fitness: None,
        generation_id: 0,
    }
}

fn eight_step_window() -> Window {
    let xs = [0.5, -0.3, 0.8, -0.9, 0.2, 0.7, -0.5, 0.1];
    let ys = [-0.2, 0.6, -0.4, 0.3, -0.8, 0.1, 0.9, -0.6];
    Window {
        inputs: xs.iter().map(|&x| vec![x]).collect(),
        targets: ys.iter().map(|&y| vec![y]).collect(),
    }
}

#[test]
fn c1_gradient_correctness() {
    let started = Instant::now();
    let w = eight_step_window();
    let h = 1e-5;
    for (i, kind) in NodeKind::HIDDEN_KINDS.into_iter().enumerate() {
        let g = minimal_cell_genome(kind, 300 + i as u64);
        let (_, analytic) = rnn::loss_gradients(&g, &w).unwrap();
        let flat = g.parameter_vector();
        let mut max_err = 0.0f64;
        for j in 0..flat.len() {
            let mut plus = flat.clone();
            plus[j] += h;
            let mut minus = flat.clone();
            minus[j] -= h;
            let lp = rnn::window_loss(&g.with_parameter_vector(&plus).unwrap(), &w).unwrap();
            let lm = rnn::window_loss(&g.with_parameter_vector(&minus).unwrap(), &w).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let err =
                (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(1e-6);
            max_err = max_err.max(err);
        }
        assert!(
            max_err < 1e-4,
            "{kind:?}: max relative gradient error {max_err:e}"
        );
        println!("  C1 {kind:?}: max relative error {max_err:.3e}");
    }
    assert!(
        started.elapsed() < Duration::from_secs(10),
        "took {:?}",
        started.elapsed()
    );
    pass(1, "gradient-correctness");
}

// ---------------------------------------------------------------------------
// Criterion 2: ARIMA(1,1,0) fits agree with an independent normal-equation
// oracle to 1e-8; the diffs-constant series 1..5 forecasts exactly 6.
// ---------------------------------------------------------------------------

#[test]
fn c2_arima_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    for case in 0..100 {
        let phi_true: f64 = rng.random_range(-0.9..0.9);
        let mut level = 5.0;
        let mut diff = 0.0;
        let series: Vec<f64> = (0..150)
            .map(|_| {
                diff = phi_true * diff + rng.random_range(-0.5..0.5);
                level += diff;
                level
            })
            .collect();
        let fitted = baselines::fit_arima_110(&series).unwrap();

        // independent oracle: the normal equation for a no-intercept slope
        let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
        let xtx: f64 = diffs[..diffs.len() - 1].iter().map(|x| x * x).sum();
        let xty: f64 = diffs[..diffs.len() - 1]
            .iter()
            .zip(&diffs[1..])
            .map(|(x, y)| x * y)
            .sum();
        let oracle = if xtx > 0.0 { xty / xtx } else { 0.0 };
        assert!(
            (fitted.phi - oracle).abs() < 1e-8,
            "case {case}: {} vs oracle {oracle}",
            fitted.phi
        );
    }

    let model = baselines::fit_arima_110(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert_eq!(
        model.forecast(),
        6.0,
        "diffs-constant series must forecast exactly 6"
    );

    assert!(
        started.elapsed() < Duration::from_secs(5),
        "took {:?}",
        started.elapsed()
    );
    pass(2, "arima-oracle-equivalence");
}

// ---------------------------------------------------------------------------
// Criterion 3: the adaptation loop with a perfect-information oracle makes
// only correct decisions; the hand-enumerated 6-step fixture matches exactly.
// ---------------------------------------------------------------------------

fn record(i: usize, latency: f64, cost: f64) -> trace::TacticRecord {
    trace::TacticRecord {
        seq_index: i,
        tactic_source: "s".into(),
        latency,
        cost,
        urt_ping: None,
        urt_available: None,
    }
}

#[test]
fn c3_decision_loop_exactness() {
    let started = Instant::now();

    // oracle on volatile synthetic traces
    for seed in [1u64, 99, 31415] {
        let ds = synth_trace(&SynthConfig {
            length: 500,
            latency_base: 0.08,
            cost_base: 0.06,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let params = UtilityParams {
            reward: 150.0,
            threshold: 1000.0,
        };
        let mut oracle = OraclePredictor::new(ds.records.clone());
        let outcomes = decision::run_adaptation_loop(&mut oracle, &ds.records, 5, &params).unwrap();
        let m = metrics::decision_metrics(&outcomes).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!((m.fpr, m.fnr), (0.0, 0.0));
        assert_eq!(m.u_loss, 0.0);
    }

    // hand-enumerated fixture: reward 150, threshold 1200, so the decision
    // boundary sits at latency + cost = 0.125
    let params = UtilityParams {
        reward: 150.0,
        threshold: 1200.0,
    };
    //    predicted (l, c)      observed (l, c)     pred U    true U    tag
    // 1  (0.05,  0.05)         (0.06,  0.05)       1500      1363.6    TP
    // 2  (0.1,   0.1)          (0.06,  0.06)        750      1250      FN
    // 3  (0.04,  0.05)         (0.2,   0.1)        1666.7     500      FP
    // 4  (0.2,   0.2)          (0.2,   0.2)         375       375      TN
    // 5  (0.0625, 0.0625)      (0.0625, 0.0625)    1200      1200      TP (ties)
    // 6  (0.5,   0.5)          (0.0625, 0.0625)     150      1200      FN
    let preds = [
        (0.05, 0.05),
        (0.1, 0.1),
        (0.04, 0.05),
        (0.2, 0.2),
        (0.0625, 0.0625),
        (0.5, 0.5),
    ];
    let truths = [
        (0.06, 0.05),
        (0.06, 0.06),
        (0.2, 0.1),
        (0.2, 0.2),
        (0.0625, 0.0625),
        (0.0625, 0.0625),
    ];
    let mut records = vec![record(0, 0.05, 0.05)];
    records.extend(
        truths
            .iter()
            .enumerate()
            .map(|(i, &(l, c))| record(i + 1, l, c)),
    );
    let mut scripted = ScriptedPredictor::new("fixture", preds.to_vec());
    let outcomes = decision::run_adaptation_loop(&mut scripted, &records, 1, &params).unwrap();
    let tags: Vec<OutcomeTag> = outcomes.iter().map(|o| o.tag).collect();
    use OutcomeTag::*;
    assert_eq!(tags, vec![Tp, Fn, Fp, Tn, Tp, Fn]);

    assert!(
        started.elapsed() < Duration::from_secs(1),
        "took {:?}",
        started.elapsed()
    );
    pass(3, "decision-loop-exactness");
}

// ---------------------------------------------------------------------------
// Criterion 4: utility accounting identity gain + loss = sum of true utility
// over truth-Update steps, on 1,000 random outcome sets.
// ---------------------------------------------------------------------------

#[test]
fn c4_utility_accounting_identity() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    for set in 0..1000 {
        let n = rng.random_range(1..200);
        let outcomes: Vec<DecisionOutcome> = (0..n)
            .map(|step| {
                let tag = match rng.random_range(0..4) {
                    0 => OutcomeTag::Tp,
                    1 => OutcomeTag::Fp,
                    2 => OutcomeTag::Tn,
                    _ => OutcomeTag::Fn,
                };
                let (pred, truth) = match tag {
                    OutcomeTag::Tp => (Decision::Update, Decision::Update),
                    OutcomeTag::Fp => (Decision::Update, Decision::Pass),
                    OutcomeTag::Tn => (Decision::Pass, Decision::Pass),
                    OutcomeTag::Fn => (Decision::Pass, Decision::Update),
                };
                DecisionOutcome {
                    step,
                    predicted_latency: rng.random_range(0.01..0.5),
                    predicted_cost: rng.random_range(0.0..0.5),
                    true_latency: rng.random_range(0.01..0.5),
                    true_cost: rng.random_range(0.0..0.5),
                    predicted_utility: rng.random_range(1.0..5000.0),
                    true_utility: rng.random_range(1.0..5000.0),
                    predicted_decision: pred,
                    true_decision: truth,
                    tag,
                }
            })
            .collect();
        let (gain, loss) = decision::utility_gain_loss(&outcomes);
        let expected: f64 = outcomes
            .iter()
            .filter(|o| o.true_decision == Decision::Update)
            .map(|o| o.true_utility)
            .sum();
        assert!(
            (gain + loss - expected).abs() <= 1e-9 * expected.max(1.0),
            "set {set}: {gain} + {loss} != {expected}"
        );
    }
    assert!(
        started.elapsed() < Duration::from_secs(5),
        "took {:?}",
        started.elapsed()
    );
    pass(4, "utility-accounting-identity");
}

// ---------------------------------------------------------------------------
// Shared heavy fixture for criteria 5, 6 and 7: frozen synthetic scenario,
// deterministic single-worker evolution, fixed-architecture baselines.
// ---------------------------------------------------------------------------

const SCENARIO_SEED: u64 = 424_242;

fn scenario_synth(urt_mode: UrtMode) -> SynthConfig {
    SynthConfig {
        length: 10_000,
        latency_base: 0.08,
        latency_ar: 0.45,
        latency_noise_sd: 0.008,
        spike_prob: 0.02,
        spike_scale: 6.0,
        cost_base: 0.06,
        cost_noise_sd: 0.01,
        cost_regimes: vec![(2000, 0.12), (4500, 0.06), (8000, 0.12)],
        urt_mode,
        urt_noise_sd: 0.01,
        seed: SCENARIO_SEED,
        tactic_source: "server1".into(),
    }
}

fn scenario_evolve() -> EvolveConfig {
    EvolveConfig {
        max_evaluations: 600,
        mutation_rate: 0.85,
        crossover_rate: 0.15,
        // favor edge-level rewiring so the searched networks stay small
        op_weights: tva_core::neuroevolution::OpWeights {
            add_edge: 3.0,
            add_recurrent_edge: 3.0,
            enable_edge: 1.5,
            disable_edge: 1.5,
            split_edge: 0.5,
            add_node: 0.5,
            split_node: 0.25,
            merge_node: 0.5,
            clone: 0.25,
        },
        bptt_epochs: 4,
        bptt_lr: 0.2,
        seed: 7,
        workers: 1,
        ..EvolveConfig::default()
    }
}

const SEQ_LEN: usize = 16;
const BASELINE_EPOCHS: usize = 30;
const BASELINE_LR: f64 = 0.2;

fn prepare(ds: &TraceDataset, input_channels: &[String]) -> trace::SplitWindows {
    let split = trace::split_chronological(ds, (0.7, 0.15, 0.15)).unwrap();
    let normalized = trace::normalize_fit_apply(&split).unwrap();
    let targets = vec![CH_LATENCY.to_string(), CH_COST.to_string()];
    trace::make_windows(&normalized, input_channels, &targets, SEQ_LEN).unwrap()
}

#[derive(Debug, Clone, Copy)]
struct ChannelMse {
    total: f64,
    latency: f64,
}

/// Per-channel validation MSE of a genome's forward predictions.
fn genome_channel_mse(g: &RnnGenome, windows: &WindowSet) -> ChannelMse {
    let lat = windows
        .target_channels
        .iter()
        .position(|c| c == CH_LATENCY)
        .unwrap();
    let mut sq = vec![0.0f64; windows.target_channels.len()];
    let mut count = 0usize;
    for w in &windows.windows {
        let out = rnn::forward(g, &w.inputs).unwrap();
        for (t, target) in w.targets.iter().enumerate() {
            for (k, &y) in target.iter().enumerate() {
                let e = out[t][k] - y;
                sq[k] += e * e;
            }
            count += 1;
        }
    }
    ChannelMse {
        total: sq.iter().sum::<f64>() / (count * sq.len()) as f64,
        latency: sq[lat] / count as f64,
    }
}

/// Persistence floor on the same windows: predict the current value of each
/// target channel for the next step.
fn persistence_channel_mse(windows: &WindowSet) -> ChannelMse {
    let input_idx: Vec<usize> = windows
        .target_channels
        .iter()
        .map(|c| windows.input_channels.iter().position(|i| i == c).unwrap())
        .collect();
    let lat = windows
        .target_channels
        .iter()
        .position(|c| c == CH_LATENCY)
        .unwrap();
    let mut sq = vec![0.0f64; windows.target_channels.len()];
    let mut count = 0usize;
    for w in &windows.windows {
        for (t, target) in w.targets.iter().enumerate() {
            for (k, &y) in target.iter().enumerate() {
                let e = w.inputs[t][input_idx[k]] - y;
                sq[k] += e * e;
            }
            count += 1;
        }
    }
    ChannelMse {
        total: sq.iter().sum::<f64>() / (count * sq.len()) as f64,
        latency: sq[lat] / count as f64,
    }
}

struct HeavyRuns {
    ernn: RnnGenome,
    ernn_val: ChannelMse,
    persistence_val: ChannelMse,
    mlp_val: ChannelMse,
    lstm: RnnGenome,
    lstm_val: ChannelMse,
    base_elapsed: Duration,
    informative_latency_val: f64,
    pure_noise_latency_val: f64,
    total_elapsed: Duration,
}

static HEAVY: Lazy<HeavyRuns> = Lazy::new(|| {
    let started = Instant::now();
    let plain_channels = vec![CH_LATENCY.to_string(), CH_COST.to_string()];
    let urt_channels = vec![
        CH_LATENCY.to_string(),
        CH_COST.to_string(),
        CH_URT_PING.to_string(),
    ];

    // Criterion 5 scenario, no URT channel.
    let ds = synth_trace(&scenario_synth(UrtMode::None)).unwrap();
    let windows = prepare(&ds, &plain_channels);
    let (ernn, log) = evolve(&scenario_evolve(), &windows.train, &windows.test).unwrap();
    assert!(log.evaluations() <= 1000);
    let ernn_val = genome_channel_mse(&ernn, &windows.val);
    let persistence_val = persistence_channel_mse(&windows.val);

    let mut rng = ChaCha12Rng::seed_from_u64(5050);
    let mlp = baselines::make_mlp_genome(&plain_channels, &plain_channels, 100, &mut rng);
    let (mlp, _) =
        rnn::bptt_train(&mlp, &windows.train, BASELINE_EPOCHS, BASELINE_LR, 1.0).unwrap();
    let mlp_val = genome_channel_mse(&mlp, &windows.val);

    let mut rng = ChaCha12Rng::seed_from_u64(5151);
    let lstm = baselines::make_lstm_genome(&plain_channels, &plain_channels, 32, &mut rng);
    let (lstm, _) =
        rnn::bptt_train(&lstm, &windows.train, BASELINE_EPOCHS, BASELINE_LR, 1.0).unwrap();
    let lstm_val = genome_channel_mse(&lstm, &windows.val);
    let base_elapsed = started.elapsed();

    // Criterion 6 runs: the same latency/cost series (identical seed; the
    // URT channel is generated after them) with a URT input channel.
    let informative = synth_trace(&scenario_synth(UrtMode::Informative)).unwrap();
    let w_informative = prepare(&informative, &urt_channels);
    let (g_inf, _) = evolve(
        &scenario_evolve(),
        &w_informative.train,
        &w_informative.test,
    )
    .unwrap();
    let informative_latency_val = genome_channel_mse(&g_inf, &w_informative.val).latency;

    let noise = synth_trace(&scenario_synth(UrtMode::PureNoise)).unwrap();
    let w_noise = prepare(&noise, &urt_channels);
    let (g_noise, _) = evolve(&scenario_evolve(), &w_noise.train, &w_noise.test).unwrap();
    let pure_noise_latency_val = genome_channel_mse(&g_noise, &w_noise.val).latency;

    let runs = HeavyRuns {
        ernn,
        ernn_val,
        persistence_val,
        mlp_val,
        lstm,
        lstm_val,
        base_elapsed,
        informative_latency_val,
        pure_noise_latency_val,
        total_elapsed: started.elapsed(),
    };
    eprintln!(
        "heavy fixture: ernn total {:.5e} latency {:.5e} ({} weights) | persistence total {:.5e} | mlp total {:.5e} | lstm total {:.5e} | urt informative latency {:.5e} | urt noise latency {:.5e} | base {:?} total {:?}",
        runs.ernn_val.total,
        runs.ernn_val.latency,
        runs.ernn.count_params().1,
        runs.persistence_val.total,
        runs.mlp_val.total,
        runs.lstm_val.total,
        runs.informative_latency_val,
        runs.pure_noise_latency_val,
        runs.base_elapsed,
        runs.total_elapsed,
    );
    runs
});

// ---------------------------------------------------------------------------
// Criterion 5: on the frozen scenario the evolved network's validation MSE is
// at least 20% below persistence and no worse than the MLP-100 baseline.
// ---------------------------------------------------------------------------

#[test]
fn c5_directional_table1_reproduction() {
    let h = &*HEAVY;
    let improvement = 1.0 - h.ernn_val.total / h.persistence_val.total;
    println!(
        "  C5 ernn {:.5e} vs persistence {:.5e} ({:.1}% better), mlp {:.5e}",
        h.ernn_val.total,
        h.persistence_val.total,
        improvement * 100.0,
        h.mlp_val.total
    );
    assert!(
        improvement >= 0.20,
        "evolved network improves only {:.2}% over persistence",
        improvement * 100.0
    );
    assert!(
        h.ernn_val.total <= h.mlp_val.total,
        "evolved network ({:.5e}) worse than MLP-100 ({:.5e})",
        h.ernn_val.total,
        h.mlp_val.total
    );
    assert!(
        h.base_elapsed < Duration::from_secs(15 * 60),
        "base fixture took {:?}",
        h.base_elapsed
    );
    pass(5, "directional-table1-reproduction");
}

// ---------------------------------------------------------------------------
// Criterion 6: an informative URT channel improves validation latency MSE by
// at least 5%; a pure-noise channel degrades it by less than 10%.
// ---------------------------------------------------------------------------

#[test]
fn c6_urt_benefit() {
    let h = &*HEAVY;
    let baseline = h.ernn_val.latency;
    let informative_gain = 1.0 - h.informative_latency_val / baseline;
    let noise_degradation = h.pure_noise_latency_val / baseline - 1.0;
    println!(
        "  C6 latency MSE no-URT {:.5e}, informative {:.5e} ({:+.1}%), pure-noise {:.5e} ({:+.1}%)",
        baseline,
        h.informative_latency_val,
        -informative_gain * 100.0,
        h.pure_noise_latency_val,
        noise_degradation * 100.0
    );
    assert!(
        informative_gain >= 0.05,
        "informative URT improved latency MSE only {:.2}%",
        informative_gain * 100.0
    );
    assert!(
        noise_degradation < 0.10,
        "pure-noise URT degraded latency MSE {:.2}%",
        noise_degradation * 100.0
    );
    assert!(
        h.total_elapsed < Duration::from_secs(30 * 60),
        "heavy fixture took {:?}",
        h.total_elapsed
    );
    pass(6, "urt-benefit");
}

// ---------------------------------------------------------------------------
// Criterion 7: the evolved genome carries < 25% of the LSTM-32 baseline's
// weights while its validation MSE is at most 10% worse than that baseline.
// ---------------------------------------------------------------------------

#[test]
fn c7_network_compactness() {
    let h = &*HEAVY;
    let (ernn_nodes, ernn_weights) = h.ernn.count_params();
    let (lstm_nodes, lstm_weights) = h.lstm.count_params();
    println!(
        "  C7 ernn {} weights vs lstm-32 {} weights; val MSE {:.5e} vs {:.5e}",
        ernn_weights, lstm_weights, h.ernn_val.total, h.lstm_val.total
    );
    assert!(
        (ernn_weights as f64) < 0.25 * lstm_weights as f64,
        "evolved genome has {ernn_weights} weights, LSTM-32 has {lstm_weights}"
    );
    assert!(
        ernn_nodes < lstm_nodes,
        "evolved genome has {ernn_nodes} nodes, LSTM-32 has {lstm_nodes}"
    );
    assert!(
        h.ernn_val.total <= 1.10 * h.lstm_val.total,
        "evolved network ({:.5e}) more than 10% worse than LSTM-32 ({:.5e})",
        h.ernn_val.total,
        h.lstm_val.total
    );
    pass(7, "network-compactness");
}

// ---------------------------------------------------------------------------
// Criterion 8: metric formulas reproduce hand-computed fixtures, including
// the verbatim FPR/FNR denominators and the percent MAPE convention.
// ---------------------------------------------------------------------------

#[test]
fn c8_metric_formula_fidelity() {
    let started = Instant::now();

    let m = metrics::regression_metrics(&[0.0, 2.0], &[1.0, 1.0], 1e-9).unwrap();
    assert_eq!((m.mse, m.mae, m.mape), (1.0, 1.0, Some(100.0)));

    // hand-computed: truth (3, -1, 2), pred (2.5, -2, 4)
    // errors 0.5, 1, -2 -> MSE = (0.25 + 1 + 4)/3, MAE = 3.5/3,
    // MAPE = (0.5/3 + 1 + 1) * 100 / 3
    let m = metrics::regression_metrics(&[2.5, -2.0, 4.0], &[3.0, -1.0, 2.0], 1e-9).unwrap();
    assert!((m.mse - 5.25 / 3.0).abs() < 1e-12);
    assert!((m.mae - 3.5 / 3.0).abs() < 1e-12);
    assert!((m.mape.unwrap() - 100.0 * (0.5 / 3.0 + 1.0 + 1.0) / 3.0).abs() < 1e-12);

    // the (1000, 1210) pair reproduces the 21% MAPE convention
    let m = metrics::regression_metrics(&[1210.0], &[1000.0], 1e-9).unwrap();
    assert!((m.mape.unwrap() - 21.0).abs() < 1e-12);

    // verbatim rate forms on a TP=3 FP=1 TN=5 FN=1 fixture
    let mk = |tag: OutcomeTag| {
        let (pred, truth) = match tag {
            OutcomeTag::Tp => (Decision::Update, Decision::Update),
            OutcomeTag::Fp => (Decision::Update, Decision::Pass),
            OutcomeTag::Tn => (Decision::Pass, Decision::Pass),
            OutcomeTag::Fn => (Decision::Pass, Decision::Update),
        };
        DecisionOutcome {
            step: 0,
            predicted_latency: 0.1,
            predicted_cost: 0.1,
            true_latency: 0.1,
            true_cost: 0.1,
            predicted_utility: 750.0,
            true_utility: 900.0,
            predicted_decision: pred,
            true_decision: truth,
            tag,
        }
    };
    let mut outcomes = vec![mk(OutcomeTag::Fp), mk(OutcomeTag::Fn)];
    outcomes.extend((0..3).map(|_| mk(OutcomeTag::Tp)));
    outcomes.extend((0..5).map(|_| mk(OutcomeTag::Tn)));
    let d = metrics::decision_metrics(&outcomes).unwrap();
    assert_eq!((d.tp, d.fp, d.tn, d.fn_), (3, 1, 5, 1));
    assert_eq!(d.fpr, 1.0 / 4.0, "FPR must be FP / (TP + FP)");
    assert_eq!(d.fnr, 1.0 / 6.0, "FNR must be FN / (FN + TN)");
    assert_eq!(d.accuracy, 0.8);

    assert!(
        started.elapsed() < Duration::from_secs(1),
        "took {:?}",
        started.elapsed()
    );
    pass(8, "metric-formula-fidelity");
}

// ---------------------------------------------------------------------------
// Criterion 9: the CLI pipeline is byte-deterministic — two identical
// synth/train/simulate/evaluate runs produce identical files, and evolution
// with one worker produces identical models and search logs.
// ---------------------------------------------------------------------------

fn tva(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_tva"))
        .args(args)
        .output()
        .expect("spawn tva");
    assert!(
        out.status.success(),
        "tva {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn determinism_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
            "seed": 42,
            "synth": {
                "length": 2000,
                "latency_base": 0.08,
                "cost_base": 0.06,
                "cost_regimes": [[800, 0.1], [1500, 0.06]],
                "tactic_source": "server1"
            },
            "prepare": {"seq_len": 8},
            "train": {
                "baseline_epochs": 4,
                "baseline_lr": 0.05,
                "evolve": {
                    "max_evaluations": 30,
                    "bptt_epochs": 2,
                    "bptt_lr": 0.05,
                    "islands": 2,
                    "island_capacity": 5,
                    "migration_period": 10,
                    "workers": 1
                }
            }
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn c9_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = determinism_config(dir.path());
    let cfg = config.display().to_string();
    let p = |name: &str| dir.path().join(name).display().to_string();

    let run_pipeline = |suffix: &str| {
        let trace = p(&format!("trace_{suffix}.csv"));
        tva(&["synth", "--config", &cfg, "--out", &trace]);
        let mut outcome_files = Vec::new();
        for model in ["persistence", "arima", "mlp"] {
            let model_path = p(&format!("{model}_{suffix}.json"));
            let outcomes = p(&format!("{model}_out_{suffix}.csv"));
            tva(&[
                "train",
                "--config",
                &cfg,
                "--trace",
                &trace,
                "--model-out",
                &model_path,
                "--model",
                model,
            ]);
            tva(&[
                "simulate",
                "--config",
                &cfg,
                "--trace",
                &trace,
                "--model",
                &model_path,
                "--out",
                &outcomes,
            ]);
            outcome_files.push(outcomes);
        }
        let report = p(&format!("report_{suffix}.json"));
        let mut args: Vec<&str> = vec!["evaluate", "--config", &cfg, "--report", &report];
        let refs: Vec<&str> = outcome_files.iter().map(String::as_str).collect();
        args.extend(refs);
        tva(&args);
        std::fs::read(&report).unwrap()
    };

    let report_a = run_pipeline("a");
    let report_b = run_pipeline("b");
    assert_eq!(
        report_a, report_b,
        "pipeline reports differ between identical runs"
    );

    // single-worker evolution is byte-reproducible
    let trace = p("trace_a.csv");
    for suffix in ["e1", "e2"] {
        tva(&[
            "train",
            "--config",
            &cfg,
            "--trace",
            &trace,
            "--model-out",
            &p(&format!("ernn_{suffix}.json")),
            "--model",
            "ernn",
            "--log-out",
            &p(&format!("log_{suffix}.csv")),
        ]);
    }
    assert_eq!(
        std::fs::read(p("ernn_e1.json")).unwrap(),
        std::fs::read(p("ernn_e2.json")).unwrap(),
        "evolved models differ"
    );
    assert_eq!(
        std::fs::read(p("log_e1.csv")).unwrap(),
        std::fs::read(p("log_e2.csv")).unwrap(),
        "search logs differ"
    );

    assert!(
        started.elapsed() < Duration::from_secs(5 * 60),
        "took {:?}",
        started.elapsed()
    );
    pass(9, "determinism");
}
