//! Regression and decision metrics, multi-source averaging, and report
//! assembly.
//!
//! The decision-rate formulas follow the source conventions verbatim:
//! `FPR = FP / (TP + FP)` (the frequency of wrong Updates among Updates,
//! which is the false-discovery form, not the standard FP / (FP + TN)) and
//! `FNR = FN / (FN + TN)`. The standard definitions are exposed alongside
//! under `std_fpr` / `std_fnr` for sanity checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{utility_gain_loss, DecisionOutcome, OutcomeTag};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ: {pred} vs {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("need at least one value pair")]
    Empty,
}

/// MSE, MAE and MAPE (in percent). Pairs whose absolute truth falls below the
/// MAPE epsilon are excluded from MAPE only; if every pair is excluded MAPE
/// is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
    pub mape_excluded: usize,
}

pub fn regression_metrics(
    pred: &[f64],
    truth: &[f64],
    mape_epsilon: f64,
) -> Result<RegressionMetrics, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = pred.len() as f64;
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut ape = 0.0;
    let mut ape_n = 0usize;
    for (&p, &t) in pred.iter().zip(truth) {
        let e = t - p;
        se += e * e;
        ae += e.abs();
        if t.abs() >= mape_epsilon {
            ape += (e / t).abs();
            ape_n += 1;
        }
    }
    Ok(RegressionMetrics {
        mse: se / n,
        mae: ae / n,
        mape: (ape_n > 0).then(|| 100.0 * ape / ape_n as f64),
        mape_excluded: pred.len() - ape_n,
    })
}

/// Decision-quality metrics over tagged outcomes. Zero-denominator rates are
/// reported as 0 with the corresponding `*_denom_zero` flag set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    /// FP / (TP + FP), verbatim source convention.
    pub fpr: f64,
    /// FN / (FN + TN), verbatim source convention.
    pub fnr: f64,
    pub fpr_denom_zero: bool,
    pub fnr_denom_zero: bool,
    /// FP / (FP + TN), the standard false-positive rate.
    pub std_fpr: f64,
    /// FN / (FN + TP), the standard false-negative rate.
    pub std_fnr: f64,
    pub u_gain: f64,
    pub u_loss: f64,
}

pub fn decision_metrics(outcomes: &[DecisionOutcome]) -> Result<DecisionMetrics, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for o in outcomes {
        match o.tag {
            OutcomeTag::Tp => tp += 1,
            OutcomeTag::Fp => fp += 1,
            OutcomeTag::Tn => tn += 1,
            OutcomeTag::Fn => fn_ += 1,
        }
    }
    let rate = |num: usize, denom: usize| {
        if denom == 0 {
            (0.0, true)
        } else {
            (num as f64 / denom as f64, false)
        }
    };
    let (fpr, fpr_denom_zero) = rate(fp, tp + fp);
    let (fnr, fnr_denom_zero) = rate(fn_, fn_ + tn);
    let (std_fpr, _) = rate(fp, fp + tn);
    let (std_fnr, _) = rate(fn_, fn_ + tp);
    let (u_gain, u_loss) = utility_gain_loss(outcomes);
    Ok(DecisionMetrics {
        tp,
        fp,
        tn,
        fn_,
        accuracy: (tp + tn) as f64 / outcomes.len() as f64,
        fpr,
        fnr,
        fpr_denom_zero,
        fnr_denom_zero,
        std_fpr,
        std_fnr,
        u_gain,
        u_loss,
    })
}

/// Everything measured for one (source, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelEval {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<RegressionMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<RegressionMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility_mape: Option<f64>,
    pub utility_mape_excluded: usize,
    /// Cycles whose forecast failed or fell outside the utility domain;
    /// excluded from the regression metrics, kept in the decision metrics.
    pub forced_passes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decisions: Option<DecisionMetrics>,
}

/// Mean regression metrics across sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub mse: f64,
    pub mae: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mape: Option<f64>,
    pub sources: usize,
}

/// Mean decision metrics across sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub u_gain: f64,
    pub u_loss: f64,
    pub sources: usize,
}

/// Across-source arithmetic means for one model (the overbar metrics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OverbarEval {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<RegressionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<RegressionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility_mape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decisions: Option<DecisionSummary>,
    /// Sources or channels excluded from a mean, with the reason.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

pub type SourceEvals = BTreeMap<String, BTreeMap<String, ModelEval>>;

/// Arithmetic means over every source that reports a given metric; sources
/// missing a channel are excluded and noted.
pub fn average_over_sources(per_source: &SourceEvals) -> BTreeMap<String, OverbarEval> {
    let mut models: Vec<String> = Vec::new();
    for evals in per_source.values() {
        for model in evals.keys() {
            if !models.contains(model) {
                models.push(model.clone());
            }
        }
    }
    models.sort();

    let mut out = BTreeMap::new();
    for model in models {
        let mut over = OverbarEval::default();
        let entries: Vec<(&String, &ModelEval)> = per_source
            .iter()
            .filter_map(|(src, evals)| evals.get(&model).map(|e| (src, e)))
            .collect();

        for (channel, pick) in [
            (
                "latency",
                Box::new(|e: &ModelEval| e.latency.clone())
                    as Box<dyn Fn(&ModelEval) -> Option<RegressionMetrics>>,
            ),
            ("cost", Box::new(|e: &ModelEval| e.cost.clone())),
        ] {
            let present: Vec<(&String, RegressionMetrics)> = entries
                .iter()
                .filter_map(|(s, e)| pick(e).map(|m| (*s, m)))
                .collect();
            for (src, _) in entries.iter().filter(|(_, e)| pick(e).is_none()) {
                over.notes.push(format!(
                    "source {src} has no {channel} metrics; excluded from the {channel} mean"
                ));
            }
            if present.is_empty() {
                continue;
            }
            let n = present.len() as f64;
            let mapes: Vec<f64> = present.iter().filter_map(|(_, m)| m.mape).collect();
            let summary = RegressionSummary {
                mse: present.iter().map(|(_, m)| m.mse).sum::<f64>() / n,
                mae: present.iter().map(|(_, m)| m.mae).sum::<f64>() / n,
                mape: (!mapes.is_empty()).then(|| mapes.iter().sum::<f64>() / mapes.len() as f64),
                sources: present.len(),
            };
            match channel {
                "latency" => over.latency = Some(summary),
                _ => over.cost = Some(summary),
            }
        }

        let mapes: Vec<f64> = entries.iter().filter_map(|(_, e)| e.utility_mape).collect();
        over.utility_mape =
            (!mapes.is_empty()).then(|| mapes.iter().sum::<f64>() / mapes.len() as f64);

        let decisions: Vec<&DecisionMetrics> = entries
            .iter()
            .filter_map(|(_, e)| e.decisions.as_ref())
            .collect();
        if !decisions.is_empty() {
            let n = decisions.len() as f64;
            over.decisions = Some(DecisionSummary {
                accuracy: decisions.iter().map(|d| d.accuracy).sum::<f64>() / n,
                fpr: decisions.iter().map(|d| d.fpr).sum::<f64>() / n,
                fnr: decisions.iter().map(|d| d.fnr).sum::<f64>() / n,
                u_gain: decisions.iter().map(|d| d.u_gain).sum::<f64>() / n,
                u_loss: decisions.iter().map(|d| d.u_loss).sum::<f64>() / n,
                sources: decisions.len(),
            });
        }
        out.insert(model, over);
    }
    out
}

/// Full evaluation report: per-source per-model metrics plus the across-source
/// means under the reserved `overbar` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    #[serde(flatten)]
    pub sources: SourceEvals,
    pub overbar: BTreeMap<String, OverbarEval>,
}

/// Assemble a report from per-source evaluations, computing the overbar
/// section.
pub fn build_report(per_source: SourceEvals) -> EvalReport {
    let overbar = average_over_sources(&per_source);
    EvalReport {
        sources: per_source,
        overbar,
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<EvalReport, serde_json::Error> {
        serde_json::from_str(text)
    }
}
