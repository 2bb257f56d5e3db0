//! Predictor adapters for the adaptation loop.

use super::{PredictError, TacticPredictor};
use crate::baselines::Arima110Model;
use crate::rnn::{self, RnnGenome};
use crate::trace::{NormParams, TacticRecord, CH_COST, CH_LATENCY};

/// Perfect-information predictor: returns the observed values of the record
/// being predicted. Must be constructed over the same record slice the loop
/// runs on.
pub struct OraclePredictor {
    records: Vec<TacticRecord>,
}

impl OraclePredictor {
    pub fn new(records: Vec<TacticRecord>) -> Self {
        OraclePredictor { records }
    }
}

impl TacticPredictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(
        &mut self,
        _history: &[TacticRecord],
        step: usize,
    ) -> Result<(f64, f64), PredictError> {
        let r = self
            .records
            .get(step)
            .ok_or_else(|| PredictError(format!("oracle has no record for step {step}")))?;
        Ok((r.latency, r.cost))
    }
}

/// Fixed playback of forecasts, one per cycle. Test helper.
pub struct ScriptedPredictor {
    name: String,
    script: Script,
}

enum Script {
    Constant(f64, f64),
    Sequence(Vec<(f64, f64)>, usize),
}

impl ScriptedPredictor {
    pub fn new(name: &str, values: Vec<(f64, f64)>) -> Self {
        ScriptedPredictor {
            name: name.into(),
            script: Script::Sequence(values, 0),
        }
    }

    pub fn constant(name: &str, latency: f64, cost: f64) -> Self {
        ScriptedPredictor {
            name: name.into(),
            script: Script::Constant(latency, cost),
        }
    }
}

impl TacticPredictor for ScriptedPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(
        &mut self,
        _history: &[TacticRecord],
        _step: usize,
    ) -> Result<(f64, f64), PredictError> {
        match &mut self.script {
            Script::Constant(l, c) => Ok((*l, *c)),
            Script::Sequence(values, cursor) => {
                let v = values
                    .get(*cursor)
                    .copied()
                    .ok_or_else(|| PredictError("script exhausted".into()))?;
                *cursor += 1;
                Ok(v)
            }
        }
    }
}

/// Naive floor: the next value equals the last observed value.
pub struct PersistencePredictor;

impl TacticPredictor for PersistencePredictor {
    fn name(&self) -> &str {
        "persistence"
    }

    fn predict(
        &mut self,
        history: &[TacticRecord],
        _step: usize,
    ) -> Result<(f64, f64), PredictError> {
        let last = history
            .last()
            .ok_or_else(|| PredictError("empty history".into()))?;
        Ok((last.latency, last.cost))
    }
}

/// Teacher-forced rolling ARIMA(1,1,0) forecasts, one model per channel. The
/// autoregressive coefficients come from fitted models; the forecast state is
/// re-derived from the loop's (ground truth) history each cycle.
pub struct ArimaPredictor {
    phi_latency: f64,
    phi_cost: f64,
}

impl ArimaPredictor {
    pub fn new(latency: &Arima110Model, cost: &Arima110Model) -> Self {
        ArimaPredictor {
            phi_latency: latency.phi,
            phi_cost: cost.phi,
        }
    }

    fn forecast(phi: f64, last: f64, prev: f64) -> f64 {
        last + phi * (last - prev)
    }
}

impl TacticPredictor for ArimaPredictor {
    fn name(&self) -> &str {
        "arima"
    }

    fn predict(
        &mut self,
        history: &[TacticRecord],
        _step: usize,
    ) -> Result<(f64, f64), PredictError> {
        if history.len() < 2 {
            return Err(PredictError(
                "ARIMA needs at least two observed records".into(),
            ));
        }
        let last = &history[history.len() - 1];
        let prev = &history[history.len() - 2];
        Ok((
            Self::forecast(self.phi_latency, last.latency, prev.latency),
            Self::forecast(self.phi_cost, last.cost, prev.cost),
        ))
    }
}

/// Network-backed predictor: feeds the normalized tail of the history through
/// a genome and denormalizes the final-step outputs.
pub struct GenomePredictor {
    name: String,
    genome: RnnGenome,
    norm: NormParams,
    seq_len: usize,
    latency_out: usize,
    cost_out: usize,
}

impl GenomePredictor {
    pub fn new(
        name: &str,
        genome: RnnGenome,
        norm: NormParams,
        seq_len: usize,
    ) -> Result<Self, PredictError> {
        let out_idx = |ch: &str| {
            genome
                .output_channels
                .iter()
                .position(|c| c == ch)
                .ok_or_else(|| PredictError(format!("model does not predict channel {ch:?}")))
        };
        let latency_out = out_idx(CH_LATENCY)?;
        let cost_out = out_idx(CH_COST)?;
        for ch in &genome.input_channels {
            if norm.get(ch).is_none() {
                return Err(PredictError(format!(
                    "normalization parameters missing channel {ch:?}"
                )));
            }
        }
        Ok(GenomePredictor {
            name: name.into(),
            genome,
            norm,
            seq_len,
            latency_out,
            cost_out,
        })
    }
}

impl TacticPredictor for GenomePredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(
        &mut self,
        history: &[TacticRecord],
        _step: usize,
    ) -> Result<(f64, f64), PredictError> {
        if history.is_empty() {
            return Err(PredictError("empty history".into()));
        }
        let tail = &history[history.len().saturating_sub(self.seq_len)..];
        let inputs: Vec<Vec<f64>> = tail
            .iter()
            .map(|r| {
                self.genome
                    .input_channels
                    .iter()
                    .map(|ch| {
                        let raw = r
                            .channel(ch)
                            .ok_or_else(|| PredictError(format!("history lacks channel {ch:?}")))?;
                        self.norm
                            .normalize(ch, raw)
                            .map_err(|e| PredictError(e.to_string()))
                    })
                    .collect::<Result<Vec<f64>, PredictError>>()
            })
            .collect::<Result<_, _>>()?;
        let outputs =
            rnn::forward(&self.genome, &inputs).map_err(|e| PredictError(e.to_string()))?;
        let last = outputs.last().expect("non-empty input sequence");
        let latency = self
            .norm
            .denormalize(CH_LATENCY, last[self.latency_out])
            .map_err(|e| PredictError(e.to_string()))?;
        let cost = self
            .norm
            .denormalize(CH_COST, last[self.cost_out])
            .map_err(|e| PredictError(e.to_string()))?;
        Ok((latency, cost))
    }
}
