//! Utility models and the adaptation control loop.
//!
//! Each cycle forecasts the next tactic latency and cost from history, turns
//! the forecast into a utility score, compares it against a threshold to
//! choose Update or Pass, then scores the same decision on the observed
//! values and records the outcome. History always advances with the observed
//! record (teacher forcing), never with the model's own forecast.

pub mod predictors;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::TacticRecord;

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("utility domain error: latency + cost must be positive, got {0}")]
    UtilityDomain(f64),
    #[error("SLA parameter out of domain: {0}")]
    SlaDomain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("outcomes parse error at line {line}: {msg}")]
    OutcomesParse { line: usize, msg: String },
}

/// Threshold-gated utility configuration. Ties go to Update: the decision is
/// Update exactly when `utility >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityParams {
    pub reward: f64,
    pub threshold: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        // Reward sized so typical latency + cost around 0.15 sits near the
        // canonical threshold of 1000, making both decision classes occur.
        UtilityParams {
            reward: 150.0,
            threshold: 1000.0,
        }
    }
}

/// Expected reward per unit of combined latency and cost.
pub fn utility(p: &UtilityParams, latency: f64, cost: f64) -> Result<f64, DecisionError> {
    if p.reward <= 0.0 {
        return Err(DecisionError::InvalidArgument(format!(
            "reward must be > 0, got {}",
            p.reward
        )));
    }
    // NaN forecasts must also land here, not produce NaN utilities
    let denom = latency + cost;
    if denom.is_nan() || denom <= 0.0 {
        return Err(DecisionError::UtilityDomain(denom));
    }
    Ok(p.reward / denom)
}

/// SLA utility model of the motivating web-farm example: rewards accrue per
/// interval while the target response time is met, penalties otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaParams {
    /// Interval length (tau), seconds.
    pub interval: f64,
    /// Average response rate (a).
    pub response_rate: f64,
    /// Average response time (r).
    pub response_time: f64,
    /// Maximum request rate (k).
    pub max_request_rate: f64,
    /// Dimmer: fraction of responses carrying optional content (d), in [0, 1].
    pub dimmer: f64,
    /// Reward for optional content (R_O); must exceed `reward_mandatory`.
    pub reward_optional: f64,
    /// Reward for mandatory content (R_M).
    pub reward_mandatory: f64,
    /// Cost (C), proportional to active servers; must be positive.
    pub cost: f64,
    /// Target response time (T).
    pub target_response_time: f64,
}

pub fn sla_utility(s: &SlaParams) -> Result<f64, DecisionError> {
    if s.cost.is_nan() || s.cost <= 0.0 {
        return Err(DecisionError::SlaDomain(format!(
            "cost must be > 0, got {}",
            s.cost
        )));
    }
    if !(0.0..=1.0).contains(&s.dimmer) {
        return Err(DecisionError::SlaDomain(format!(
            "dimmer must be in [0, 1], got {}",
            s.dimmer
        )));
    }
    let u = if s.response_time <= s.target_response_time {
        s.interval
            * s.response_rate
            * (s.dimmer * s.reward_optional + (1.0 - s.dimmer) * s.reward_mandatory)
            / s.cost
    } else {
        s.interval * (s.response_rate - s.max_request_rate).min(0.0) * s.reward_optional / s.cost
    };
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Update,
    Pass,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Update => write!(f, "Update"),
            Decision::Pass => write!(f, "Pass"),
        }
    }
}

/// Update iff the utility reaches the threshold.
pub fn decide(u: f64, p: &UtilityParams) -> Decision {
    if u >= p.threshold {
        Decision::Update
    } else {
        Decision::Pass
    }
}

/// Classification of one decision cycle against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeTag {
    /// Correct Update.
    Tp,
    /// Incorrect Update (truth said Pass).
    Fp,
    /// Correct Pass.
    Tn,
    /// Incorrect Pass (truth said Update).
    Fn,
}

impl OutcomeTag {
    pub fn from_decisions(predicted: Decision, truth: Decision) -> OutcomeTag {
        match (predicted, truth) {
            (Decision::Update, Decision::Update) => OutcomeTag::Tp,
            (Decision::Update, Decision::Pass) => OutcomeTag::Fp,
            (Decision::Pass, Decision::Pass) => OutcomeTag::Tn,
            (Decision::Pass, Decision::Update) => OutcomeTag::Fn,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeTag::Tp => "TP",
            OutcomeTag::Fp => "FP",
            OutcomeTag::Tn => "TN",
            OutcomeTag::Fn => "FN",
        }
    }
}

impl std::fmt::Display for OutcomeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One adaptation-loop cycle. Predicted fields are NaN when the predictor
/// failed or its forecast fell outside the utility domain; the cycle is then
/// a forced Pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionOutcome {
    pub step: usize,
    pub predicted_latency: f64,
    pub predicted_cost: f64,
    pub true_latency: f64,
    pub true_cost: f64,
    pub predicted_utility: f64,
    pub true_utility: f64,
    pub predicted_decision: Decision,
    pub true_decision: Decision,
    pub tag: OutcomeTag,
}

impl DecisionOutcome {
    pub fn forced_pass(&self) -> bool {
        !self.predicted_utility.is_finite()
    }
}

/// One-step-ahead forecaster of (latency, cost) in raw units.
///
/// `history` holds every record observed so far; `step` is the index of the
/// record being predicted, usable by oracle-style predictors.
pub trait TacticPredictor {
    fn name(&self) -> &str;
    fn predict(
        &mut self,
        history: &[TacticRecord],
        step: usize,
    ) -> Result<(f64, f64), PredictError>;
}

#[derive(Debug, Error)]
#[error("predictor failure: {0}")]
pub struct PredictError(pub String);

/// Run the adaptation control loop over `records`. The first `warmup` records
/// seed the history; one outcome is produced per remaining record.
pub fn run_adaptation_loop(
    predictor: &mut dyn TacticPredictor,
    records: &[TacticRecord],
    warmup: usize,
    params: &UtilityParams,
) -> Result<Vec<DecisionOutcome>, DecisionError> {
    if warmup == 0 || warmup >= records.len() {
        return Err(DecisionError::InvalidArgument(format!(
            "warmup {warmup} must be in 1..{} (record count)",
            records.len()
        )));
    }
    let mut outcomes = Vec::with_capacity(records.len() - warmup);
    for step in warmup..records.len() {
        let history = &records[..step];
        let observed = &records[step];
        let true_utility = utility(params, observed.latency, observed.cost)?;
        let true_decision = decide(true_utility, params);

        let (pred_latency, pred_cost, pred_utility, pred_decision) =
            match predictor.predict(history, step) {
                Ok((lat, cost)) => match utility(params, lat, cost) {
                    Ok(u) => (lat, cost, u, decide(u, params)),
                    // Out-of-domain forecast: guard with a forced Pass.
                    Err(DecisionError::UtilityDomain(_)) => (lat, cost, f64::NAN, Decision::Pass),
                    Err(e) => return Err(e),
                },
                Err(_) => (f64::NAN, f64::NAN, f64::NAN, Decision::Pass),
            };

        outcomes.push(DecisionOutcome {
            step: observed.seq_index,
            predicted_latency: pred_latency,
            predicted_cost: pred_cost,
            true_latency: observed.latency,
            true_cost: observed.cost,
            predicted_utility: pred_utility,
            true_utility,
            predicted_decision: pred_decision,
            true_decision,
            tag: OutcomeTag::from_decisions(pred_decision, true_decision),
        });
    }
    Ok(outcomes)
}

/// Utility gained by correct Update decisions and lost to missed ones:
/// gain sums true utility over TP cycles, loss over FN cycles.
pub fn utility_gain_loss(outcomes: &[DecisionOutcome]) -> (f64, f64) {
    let mut gain = 0.0;
    let mut loss = 0.0;
    for o in outcomes {
        match o.tag {
            OutcomeTag::Tp => gain += o.true_utility,
            OutcomeTag::Fn => loss += o.true_utility,
            _ => {}
        }
    }
    (gain, loss)
}

/// Render outcomes in the canonical CSV format. `meta` key/value pairs are
/// echoed as leading `# key: value` comment lines.
pub fn write_outcomes_csv(outcomes: &[DecisionOutcome], meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.push_str("step,pred_latency,pred_cost,true_latency,true_cost,pred_U,true_U,pred_decision,true_decision,tag\n");
    for o in outcomes {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            o.step,
            o.predicted_latency,
            o.predicted_cost,
            o.true_latency,
            o.true_cost,
            o.predicted_utility,
            o.true_utility,
            o.predicted_decision,
            o.true_decision,
            o.tag
        ));
    }
    out
}

/// Leading `# key: value` metadata of an outcomes file.
pub type OutcomesMeta = Vec<(String, String)>;

/// Parse the outcomes CSV, returning the leading comment metadata and rows.
pub fn read_outcomes_csv(
    text: &str,
) -> Result<(OutcomesMeta, Vec<DecisionOutcome>), DecisionError> {
    let mut meta = Vec::new();
    let mut outcomes = Vec::new();
    let mut saw_header = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if !saw_header {
            if !line.starts_with("step,") {
                return Err(DecisionError::OutcomesParse {
                    line: line_no,
                    msg: "expected outcomes header".into(),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(DecisionError::OutcomesParse {
                line: line_no,
                msg: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let num = |idx: usize| -> Result<f64, DecisionError> {
            fields[idx]
                .parse()
                .map_err(|_| DecisionError::OutcomesParse {
                    line: line_no,
                    msg: format!("field {idx} is not a number: {:?}", fields[idx]),
                })
        };
        let dec = |idx: usize| -> Result<Decision, DecisionError> {
            match fields[idx] {
                "Update" => Ok(Decision::Update),
                "Pass" => Ok(Decision::Pass),
                other => Err(DecisionError::OutcomesParse {
                    line: line_no,
                    msg: format!("unknown decision {other:?}"),
                }),
            }
        };
        let tag = match fields[9] {
            "TP" => OutcomeTag::Tp,
            "FP" => OutcomeTag::Fp,
            "TN" => OutcomeTag::Tn,
            "FN" => OutcomeTag::Fn,
            other => {
                return Err(DecisionError::OutcomesParse {
                    line: line_no,
                    msg: format!("unknown tag {other:?}"),
                })
            }
        };
        outcomes.push(DecisionOutcome {
            step: num(0)? as usize,
            predicted_latency: num(1)?,
            predicted_cost: num(2)?,
            true_latency: num(3)?,
            true_cost: num(4)?,
            predicted_utility: num(5)?,
            true_utility: num(6)?,
            predicted_decision: dec(7)?,
            true_decision: dec(8)?,
            tag,
        });
    }
    if !saw_header {
        return Err(DecisionError::OutcomesParse {
            line: 1,
            msg: "missing outcomes header".into(),
        });
    }
    Ok((meta, outcomes))
}
