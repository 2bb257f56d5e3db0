//! Classical and fixed-architecture baseline predictors: persistence,
//! ARIMA(1,1,0), a one-hidden-layer MLP and a single-layer LSTM network.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rnn::{EdgeGene, NodeGene, NodeKind, RnnGenome};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("series too short: need at least {need} values, have {have}")]
    TooShort { need: usize, have: usize },
    #[error("empty series")]
    Empty,
}

/// ARIMA(1,1,0): an AR(1) model on the once-differenced series.
///
/// The one-step forecast is `x_t + phi * (x_t - x_{t-1})`; observing a new
/// true value rolls the state forward (teacher forcing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arima110Model {
    pub phi: f64,
    pub last_value: f64,
    pub last_diff: f64,
}

/// Least-squares fit of the AR(1) coefficient on the differenced series
/// (slope through the origin, no intercept). A zero-variance diff series
/// falls back to `phi = 0`.
pub fn fit_arima_110(series: &[f64]) -> Result<Arima110Model, BaselineError> {
    if series.len() < 3 {
        return Err(BaselineError::TooShort {
            need: 3,
            have: series.len(),
        });
    }
    let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 1..diffs.len() {
        num += diffs[t] * diffs[t - 1];
        den += diffs[t - 1] * diffs[t - 1];
    }
    let phi = if den > 0.0 { num / den } else { 0.0 };
    Ok(Arima110Model {
        phi,
        last_value: *series.last().unwrap(),
        last_diff: *diffs.last().unwrap(),
    })
}

impl Arima110Model {
    /// One-step-ahead forecast from the current state.
    pub fn forecast(&self) -> f64 {
        self.last_value + self.phi * self.last_diff
    }

    /// Roll the state forward with an observed true value.
    pub fn observe(&mut self, value: f64) {
        self.last_diff = value - self.last_value;
        self.last_value = value;
    }
}

/// Teacher-forced one-step prediction: fold in the observed value if present,
/// then forecast the next one.
pub fn predict_arima(model: &mut Arima110Model, observed: Option<f64>) -> f64 {
    if let Some(v) = observed {
        model.observe(v);
    }
    model.forecast()
}

/// Naive forecast: the next value equals the last observed value.
pub fn persistence_predict(series: &[f64]) -> Result<f64, BaselineError> {
    series.last().copied().ok_or(BaselineError::Empty)
}

fn cell_init(rng: &mut impl Rng) -> f64 {
    Normal::new(0.0, 0.1).unwrap().sample(rng)
}

/// Fan-in-scaled edge init keeps the pre-activations of wide dense layers in
/// a trainable range.
fn fan_in_init(rng: &mut impl Rng, fan_in: usize) -> f64 {
    Normal::new(0.0, 1.0 / (fan_in as f64).sqrt())
        .unwrap()
        .sample(rng)
}

fn dense_genome(
    input_channels: &[String],
    output_channels: &[String],
    hidden: usize,
    kind: NodeKind,
    rng: &mut impl Rng,
) -> RnnGenome {
    let n_in = input_channels.len() as u64;
    let n_out = output_channels.len() as u64;
    let mut nodes = Vec::new();
    for i in 0..n_in {
        nodes.push(NodeGene {
            node_id: i,
            kind: NodeKind::Input,
            depth: 0.0,
            cell_params: vec![],
        });
    }
    for o in 0..n_out {
        nodes.push(NodeGene {
            node_id: n_in + o,
            kind: NodeKind::Output,
            depth: 1.0,
            cell_params: vec![],
        });
    }
    let first_hidden = n_in + n_out;
    for h in 0..hidden as u64 {
        let cell_params = (0..kind.param_count()).map(|_| cell_init(rng)).collect();
        nodes.push(NodeGene {
            node_id: first_hidden + h,
            kind,
            depth: 0.5,
            cell_params,
        });
    }
    let mut edges = Vec::new();
    let mut edge_id = 0;
    for i in 0..n_in {
        for h in 0..hidden as u64 {
            edges.push(EdgeGene {
                edge_id,
                src: i,
                dst: first_hidden + h,
                weight: fan_in_init(rng, input_channels.len()),
                enabled: true,
                recurrent_depth: 0,
            });
            edge_id += 1;
        }
    }
    for h in 0..hidden as u64 {
        for o in 0..n_out {
            edges.push(EdgeGene {
                edge_id,
                src: first_hidden + h,
                dst: n_in + o,
                weight: fan_in_init(rng, hidden),
                enabled: true,
                recurrent_depth: 0,
            });
            edge_id += 1;
        }
    }
    RnnGenome {
        nodes,
        edges,
        input_channels: input_channels.to_vec(),
        output_channels: output_channels.to_vec(),
        fitness: None,
        generation_id: 0,
    }
}

/// Fully connected feedforward network with one hidden layer of tanh neurons.
/// Every edge has recurrent depth 0, so trained with BPTT it degenerates to
/// plain per-step backpropagation.
pub fn make_mlp_genome(
    input_channels: &[String],
    output_channels: &[String],
    hidden: usize,
    rng: &mut impl Rng,
) -> RnnGenome {
    dense_genome(
        input_channels,
        output_channels,
        hidden,
        NodeKind::Simple,
        rng,
    )
}

/// Fully connected network with one hidden layer of LSTM cells; each cell
/// carries its own depth-1 recurrent state.
pub fn make_lstm_genome(
    input_channels: &[String],
    output_channels: &[String],
    hidden: usize,
    rng: &mut impl Rng,
) -> RnnGenome {
    dense_genome(input_channels, output_channels, hidden, NodeKind::Lstm, rng)
}
