//! Subcommand implementations.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use tva_core::baselines;
use tva_core::datagen::{self, UrtMode};
use tva_core::decision::{
    self,
    predictors::{ArimaPredictor, GenomePredictor, OraclePredictor, PersistencePredictor},
    TacticPredictor,
};
use tva_core::metrics::{self, ModelEval, SourceEvals};
use tva_core::neuroevolution;
use tva_core::rnn;
use tva_core::trace::{self, SplitKind, SplitWindows, TraceDataset, CH_COST, CH_LATENCY};

use crate::config::{ModelKind, PrepareConfig, RunConfig};
use crate::model_file::{GenomeModel, ModelFile};
use crate::CliError;

fn read_trace(path: &Path) -> Result<TraceDataset, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read trace {}: {e}", path.display())))?;
    trace::parse_trace(&text)
        .map_err(|e| CliError::usage(format!("invalid trace {}: {e}", path.display())))
}

pub fn synth(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    length: Option<usize>,
    urt_mode: Option<&str>,
    source: Option<String>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let mut synth_cfg = cfg.synth.clone();
    synth_cfg.seed = cfg.effective_seed(seed, synth_cfg.seed);
    if let Some(length) = length {
        synth_cfg.length = length;
    }
    if let Some(mode) = urt_mode {
        synth_cfg.urt_mode = match mode {
            "none" => UrtMode::None,
            "informative" => UrtMode::Informative,
            "pure_noise" => UrtMode::PureNoise,
            other => return Err(CliError::usage(format!("unknown urt mode {other:?}"))),
        };
    }
    if let Some(source) = source {
        synth_cfg.tactic_source = source;
    }
    let ds = datagen::synth_trace(&synth_cfg).map_err(|e| CliError::usage(e.to_string()))?;
    std::fs::write(out, trace::write_trace_csv(&ds))
        .map_err(|e| CliError::runtime(format!("write {}: {e}", out.display())))?;
    println!("wrote {} records to {}", ds.len(), out.display());
    Ok(())
}

pub fn collect(
    config: &Path,
    out: &Path,
    count: Option<usize>,
    target_url: Option<String>,
    ping_target: Option<String>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let mut probe_cfg = cfg.probe.clone();
    if let Some(count) = count {
        probe_cfg.count = count;
    }
    if let Some(url) = target_url {
        probe_cfg.target_url = url;
    }
    if let Some(ping) = ping_target {
        probe_cfg.ping_target = ping;
    }
    let written = datagen::run_collection(&probe_cfg, out).map_err(|e| match e {
        datagen::DatagenError::InvalidConfig(_) => CliError::usage(e.to_string()),
        other => CliError::runtime(other.to_string()),
    })?;
    println!("appended {written} records to {}", out.display());
    Ok(())
}

/// Shared preparation: URT merge, downsampling, channel selection, split.
/// Returns the raw (unnormalized) split dataset.
fn prepare_raw(ds: TraceDataset, prepare: &PrepareConfig) -> Result<TraceDataset, CliError> {
    let usage = |e: trace::TraceError| CliError::usage(e.to_string());
    let mut ds = ds;
    if let Some(urt_path) = &prepare.urt_csv {
        let urt = read_trace(urt_path)?;
        ds = trace::merge_urt(&ds, &urt).map_err(usage)?;
    }
    if let Some(n) = prepare.downsample_n {
        ds = trace::downsample(&ds, n).map_err(usage)?;
    }
    if let Some(keep) = &prepare.input_channels {
        let mut keep = keep.clone();
        keep.extend(prepare.target_channels.iter().cloned());
        ds = trace::retain_channels(&ds, &keep);
    }
    match prepare.counts {
        Some(counts) => trace::split_exact(&ds, counts).map_err(usage),
        None => trace::split_chronological(&ds, prepare.fractions).map_err(usage),
    }
}

fn prepare_windows(
    raw_split: &TraceDataset,
    prepare: &PrepareConfig,
) -> Result<(TraceDataset, SplitWindows), CliError> {
    let usage = |e: trace::TraceError| CliError::usage(e.to_string());
    let normalized = trace::normalize_fit_apply(raw_split).map_err(usage)?;
    let input_channels = prepare
        .input_channels
        .clone()
        .unwrap_or_else(|| normalized.channels.clone());
    let windows = trace::make_windows(
        &normalized,
        &input_channels,
        &prepare.target_channels,
        prepare.seq_len,
    )
    .map_err(usage)?;
    Ok((normalized, windows))
}

pub fn train(
    config: &Path,
    trace_path: &Path,
    model_out: &Path,
    model: Option<ModelKind>,
    log_out: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let model_kind = model.unwrap_or(cfg.train.model);
    let raw_split = prepare_raw(read_trace(trace_path)?, &cfg.prepare)?;

    let model_file = match model_kind {
        ModelKind::Persistence => ModelFile::Persistence,
        ModelKind::Arima => {
            let split = raw_split.split.expect("prepare_raw always sets a split");
            let fit = |channel: &str| -> Result<baselines::Arima110Model, CliError> {
                let series = raw_split
                    .channel_values(channel)
                    .map_err(|e| CliError::usage(e.to_string()))?;
                baselines::fit_arima_110(&series[..split.train])
                    .map_err(|e| CliError::usage(e.to_string()))
            };
            ModelFile::Arima {
                latency: fit(CH_LATENCY)?,
                cost: fit(CH_COST)?,
            }
        }
        ModelKind::Mlp | ModelKind::Lstm => {
            let (normalized, windows) = prepare_windows(&raw_split, &cfg.prepare)?;
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.effective_seed(seed, 42));
            let genome = match model_kind {
                ModelKind::Mlp => baselines::make_mlp_genome(
                    &windows.train.input_channels,
                    &windows.train.target_channels,
                    cfg.train.mlp_hidden,
                    &mut rng,
                ),
                _ => baselines::make_lstm_genome(
                    &windows.train.input_channels,
                    &windows.train.target_channels,
                    cfg.train.lstm_hidden,
                    &mut rng,
                ),
            };
            let (mut trained, losses) = rnn::bptt_train(
                &genome,
                &windows.train,
                cfg.train.baseline_epochs,
                cfg.train.baseline_lr,
                cfg.train.baseline_clip,
            )
            .map_err(|e| CliError::runtime(format!("training failed: {e}")))?;
            trained.fitness = Some(
                rnn::evaluate_mse(&trained, &windows.test)
                    .map_err(|e| CliError::runtime(e.to_string()))?,
            );
            println!(
                "trained {} ({} epochs): train loss {:.6e} -> {:.6e}, test mse {:.6e}",
                model_kind.as_str(),
                losses.len(),
                losses.first().unwrap(),
                losses.last().unwrap(),
                trained.fitness.unwrap()
            );
            let gm = GenomeModel {
                genome: trained,
                norm: normalized
                    .norm
                    .clone()
                    .expect("normalized dataset has params"),
                seq_len: cfg.prepare.seq_len,
            };
            match model_kind {
                ModelKind::Mlp => ModelFile::Mlp(gm),
                _ => ModelFile::Lstm(gm),
            }
        }
        ModelKind::Ernn => {
            let (normalized, windows) = prepare_windows(&raw_split, &cfg.prepare)?;
            let mut evolve_cfg = cfg.train.evolve.clone();
            evolve_cfg.seed = cfg.effective_seed(seed, evolve_cfg.seed);
            let (best, log) = neuroevolution::evolve(&evolve_cfg, &windows.train, &windows.test)
                .map_err(|e| CliError::runtime(format!("evolution failed: {e}")))?;
            let (nodes, weights) = best.count_params();
            println!(
                "evolved genome {}: test mse {:.6e}, {} nodes / {} weights over {} evaluations",
                best.generation_id,
                best.fitness.unwrap_or(f64::INFINITY),
                nodes,
                weights,
                log.evaluations()
            );
            let log_path: PathBuf = match log_out {
                Some(p) => p.to_path_buf(),
                None => {
                    let mut os = model_out.as_os_str().to_owned();
                    os.push(".log.csv");
                    PathBuf::from(os)
                }
            };
            std::fs::write(&log_path, log.to_csv())
                .map_err(|e| CliError::runtime(format!("write {}: {e}", log_path.display())))?;
            ModelFile::Ernn(GenomeModel {
                genome: best,
                norm: normalized
                    .norm
                    .clone()
                    .expect("normalized dataset has params"),
                seq_len: cfg.prepare.seq_len,
            })
        }
    };
    model_file.save(model_out)?;
    println!(
        "saved {} model to {}",
        model_file.name(),
        model_out.display()
    );
    Ok(())
}

pub fn simulate(
    config: &Path,
    trace_path: &Path,
    model: Option<&Path>,
    oracle: bool,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let raw_split = prepare_raw(read_trace(trace_path)?, &cfg.prepare)?;
    let val_records = raw_split
        .split_records(SplitKind::Val)
        .map_err(|e| CliError::usage(e.to_string()))?
        .to_vec();

    let mut predictor: Box<dyn TacticPredictor> = match (oracle, model) {
        (true, _) => Box::new(OraclePredictor::new(val_records.clone())),
        (false, Some(path)) => {
            let loaded = ModelFile::load(path)?;
            let label = loaded.name();
            match loaded {
                ModelFile::Persistence => Box::new(PersistencePredictor),
                ModelFile::Arima { latency, cost } => {
                    Box::new(ArimaPredictor::new(&latency, &cost))
                }
                ModelFile::Ernn(m) | ModelFile::Mlp(m) | ModelFile::Lstm(m) => Box::new(
                    GenomePredictor::new(label, m.genome, m.norm, m.seq_len)
                        .map_err(|e| CliError::usage(e.to_string()))?,
                ),
            }
        }
        (false, None) => return Err(CliError::usage("simulate needs --model <path> or --oracle")),
    };

    let outcomes = decision::run_adaptation_loop(
        predictor.as_mut(),
        &val_records,
        cfg.prepare.seq_len,
        &cfg.decide,
    )
    .map_err(|e| CliError::runtime(format!("adaptation loop failed: {e}")))?;

    let meta = [
        ("source", raw_split.tactic_source().to_string()),
        ("model", predictor.name().to_string()),
        ("threshold", format!("{}", cfg.decide.threshold)),
        ("reward", format!("{}", cfg.decide.reward)),
    ];
    std::fs::write(out, decision::write_outcomes_csv(&outcomes, &meta))
        .map_err(|e| CliError::runtime(format!("write {}: {e}", out.display())))?;
    println!(
        "simulated {} cycles with {} (threshold {})",
        outcomes.len(),
        predictor.name(),
        cfg.decide.threshold
    );
    Ok(())
}

pub fn evaluate(config: &Path, report_path: &Path, outcomes: &[PathBuf]) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let eps = cfg.evaluate.mape_epsilon;
    let mut per_source = SourceEvals::new();
    for path in outcomes {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(format!("cannot read outcomes {}: {e}", path.display()))
        })?;
        let (meta, rows) = decision::read_outcomes_csv(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if rows.is_empty() {
            return Err(CliError::usage(format!(
                "{} has no outcome rows",
                path.display()
            )));
        }
        let get = |key: &str| {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .unwrap_or_else(|| "unknown".to_string())
        };
        let (source, model) = (get("source"), get("model"));
        let eval = evaluate_outcomes(&rows, eps)?;
        let by_model = per_source.entry(source.clone()).or_default();
        if by_model.insert(model.clone(), eval).is_some() {
            return Err(CliError::usage(format!(
                "duplicate outcomes for source {source:?} and model {model:?}"
            )));
        }
    }
    let report = metrics::build_report(per_source);
    std::fs::write(report_path, report.to_json())
        .map_err(|e| CliError::runtime(format!("write {}: {e}", report_path.display())))?;
    println!(
        "wrote report for {} source(s) to {}",
        report.sources.len(),
        report_path.display()
    );
    Ok(())
}

fn evaluate_outcomes(
    rows: &[decision::DecisionOutcome],
    mape_epsilon: f64,
) -> Result<ModelEval, CliError> {
    let usable: Vec<&decision::DecisionOutcome> =
        rows.iter().filter(|o| !o.forced_pass()).collect();
    let runtime = |e: metrics::MetricsError| CliError::runtime(e.to_string());

    let mut eval = ModelEval {
        forced_passes: rows.len() - usable.len(),
        decisions: Some(metrics::decision_metrics(rows).map_err(runtime)?),
        ..Default::default()
    };
    if !usable.is_empty() {
        let series = |pick: fn(&decision::DecisionOutcome) -> (f64, f64)| {
            let pred: Vec<f64> = usable.iter().map(|o| pick(o).0).collect();
            let truth: Vec<f64> = usable.iter().map(|o| pick(o).1).collect();
            (pred, truth)
        };
        let (pred, truth) = series(|o| (o.predicted_latency, o.true_latency));
        eval.latency =
            Some(metrics::regression_metrics(&pred, &truth, mape_epsilon).map_err(runtime)?);
        let (pred, truth) = series(|o| (o.predicted_cost, o.true_cost));
        eval.cost =
            Some(metrics::regression_metrics(&pred, &truth, mape_epsilon).map_err(runtime)?);
        let (pred, truth) = series(|o| (o.predicted_utility, o.true_utility));
        let utility = metrics::regression_metrics(&pred, &truth, mape_epsilon).map_err(runtime)?;
        eval.utility_mape = utility.mape;
        eval.utility_mape_excluded = utility.mape_excluded;
    }
    Ok(eval)
}
