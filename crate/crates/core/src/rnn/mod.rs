//! Graph-structured recurrent neural networks.
//!
//! A network is a genome: typed node genes (inputs, identity outputs, tanh
//! neurons, and five gated memory cells) plus weighted edge genes, each edge
//! carrying a recurrent depth `d` (0 = within-timestep feedforward, `d >= 1`
//! reads the source activation from `d` steps back). The within-timestep
//! subgraph is kept acyclic by requiring feedforward edges to go strictly
//! upward in node depth; recurrent edges may connect any pair, including
//! self-loops.
//!
//! Training is full backpropagation through time of the mean-squared error
//! over a window, with global gradient-norm clipping and plain SGD.

mod cells;
mod compiled;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Window, WindowSet};
use compiled::CompiledNet;

#[derive(Debug, Error)]
pub enum RnnError {
    #[error("invalid genome: {0}")]
    InvalidGenome(String),
    #[error("input dimension mismatch: genome expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("window set is empty")]
    EmptyWindows,
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Node type. Memory cells follow their standard published single-unit
/// formulations driven by the scalar pre-activation (see `cells`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Output,
    Simple,
    Lstm,
    Gru,
    Mgu,
    Ugrnn,
    DeltaRnn,
}

impl NodeKind {
    /// All kinds a hidden node may take.
    pub const HIDDEN_KINDS: [NodeKind; 6] = [
        NodeKind::Simple,
        NodeKind::Lstm,
        NodeKind::Gru,
        NodeKind::Mgu,
        NodeKind::Ugrnn,
        NodeKind::DeltaRnn,
    ];

    /// Number of internal cell parameters (weights and biases).
    pub fn param_count(self) -> usize {
        match self {
            NodeKind::Input | NodeKind::Output => 0,
            NodeKind::Simple => 1,   // bias
            NodeKind::Lstm => 12,    // (w, u, b) for input, forget, output, candidate gates
            NodeKind::Gru => 9,      // (w, u, b) for update, reset, candidate
            NodeKind::Mgu => 6,      // (w, u, b) for forget, candidate
            NodeKind::Ugrnn => 6,    // (w, u, b) for update gate, candidate
            NodeKind::DeltaRnn => 6, // alpha, beta1, beta2, v, candidate bias, gate bias
        }
    }

    pub fn is_hidden(self) -> bool {
        !matches!(self, NodeKind::Input | NodeKind::Output)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub node_id: u64,
    pub kind: NodeKind,
    /// Topological layer hint: inputs 0, outputs 1, hidden strictly between.
    pub depth: f64,
    pub cell_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGene {
    pub edge_id: u64,
    pub src: u64,
    pub dst: u64,
    pub weight: f64,
    pub enabled: bool,
    /// 0 = within-timestep feedforward; d >= 1 reads src activation at t - d.
    pub recurrent_depth: usize,
}

/// A complete network genome. Plain value type: cloning is cheap enough to
/// move genomes between evolution workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnGenome {
    pub nodes: Vec<NodeGene>,
    pub edges: Vec<EdgeGene>,
    pub input_channels: Vec<String>,
    pub output_channels: Vec<String>,
    /// Post-training MSE on the fitness split; lower is better.
    pub fitness: Option<f64>,
    pub generation_id: u64,
}

impl RnnGenome {
    pub fn node(&self, id: u64) -> Option<&NodeGene> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    /// Input node ids in channel order (sorted by node id).
    pub fn input_node_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Input)
            .map(|n| n.node_id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Output node ids in channel order (sorted by node id).
    pub fn output_node_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Output)
            .map(|n| n.node_id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Check every structural invariant; returns the first violation.
    pub fn validate(&self) -> Result<(), RnnError> {
        let err = |msg: String| Err(RnnError::InvalidGenome(msg));
        if self.input_channels.is_empty() || self.output_channels.is_empty() {
            return err("genome needs at least one input and one output channel".into());
        }
        let mut node_ids = std::collections::HashSet::new();
        let mut inputs = 0;
        let mut outputs = 0;
        for n in &self.nodes {
            if !node_ids.insert(n.node_id) {
                return err(format!("duplicate node id {}", n.node_id));
            }
            if n.cell_params.len() != n.kind.param_count() {
                return err(format!(
                    "node {} has {} cell params, kind {:?} needs {}",
                    n.node_id,
                    n.cell_params.len(),
                    n.kind,
                    n.kind.param_count()
                ));
            }
            match n.kind {
                NodeKind::Input => {
                    inputs += 1;
                    if n.depth != 0.0 {
                        return err(format!("input node {} must have depth 0", n.node_id));
                    }
                }
                NodeKind::Output => {
                    outputs += 1;
                    if n.depth != 1.0 {
                        return err(format!("output node {} must have depth 1", n.node_id));
                    }
                }
                _ => {
                    if !(n.depth > 0.0 && n.depth < 1.0) {
                        return err(format!(
                            "hidden node {} must have depth in (0, 1), got {}",
                            n.node_id, n.depth
                        ));
                    }
                }
            }
        }
        if inputs != self.input_channels.len() {
            return err(format!(
                "{} input nodes for {} input channels",
                inputs,
                self.input_channels.len()
            ));
        }
        if outputs != self.output_channels.len() {
            return err(format!(
                "{} output nodes for {} output channels",
                outputs,
                self.output_channels.len()
            ));
        }
        let mut edge_ids = std::collections::HashSet::new();
        for e in &self.edges {
            if !edge_ids.insert(e.edge_id) {
                return err(format!("duplicate edge id {}", e.edge_id));
            }
            let (src, dst) = match (self.node(e.src), self.node(e.dst)) {
                (Some(s), Some(d)) => (s, d),
                _ => return err(format!("edge {} references a missing node", e.edge_id)),
            };
            if dst.kind == NodeKind::Input {
                return err(format!("edge {} targets input node {}", e.edge_id, e.dst));
            }
            if e.recurrent_depth == 0 && src.depth >= dst.depth {
                return err(format!(
                    "feedforward edge {} must go strictly upward in depth ({} -> {})",
                    e.edge_id, src.depth, dst.depth
                ));
            }
            if !e.weight.is_finite() {
                return err(format!("edge {} has non-finite weight", e.edge_id));
            }
        }
        Ok(())
    }

    /// Size accounting: (total node count, trainable weight count). The weight
    /// count covers enabled edge weights plus all cell parameters of
    /// non-input nodes; disabled edges do not count.
    pub fn count_params(&self) -> (usize, usize) {
        let edge_weights = self.edges.iter().filter(|e| e.enabled).count();
        let cell_params: usize = self
            .nodes
            .iter()
            .filter(|n| n.kind != NodeKind::Input)
            .map(|n| n.cell_params.len())
            .sum();
        (self.nodes.len(), edge_weights + cell_params)
    }

    /// Canonical trainable-parameter layout: indices into `edges` of enabled
    /// edges sorted by edge id, then indices into `nodes` of parameterized
    /// nodes sorted by node id.
    pub(crate) fn parameter_layout(&self) -> (Vec<usize>, Vec<usize>) {
        let mut edge_idx: Vec<usize> = (0..self.edges.len())
            .filter(|&i| self.edges[i].enabled)
            .collect();
        edge_idx.sort_by_key(|&i| self.edges[i].edge_id);
        let mut node_idx: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| !self.nodes[i].cell_params.is_empty())
            .collect();
        node_idx.sort_by_key(|&i| self.nodes[i].node_id);
        (edge_idx, node_idx)
    }

    /// Flatten all trainable parameters in the canonical layout. The length
    /// always equals the weight count from [`count_params`].
    pub fn parameter_vector(&self) -> Vec<f64> {
        let (edge_idx, node_idx) = self.parameter_layout();
        let mut v: Vec<f64> = edge_idx.iter().map(|&i| self.edges[i].weight).collect();
        for &i in &node_idx {
            v.extend_from_slice(&self.nodes[i].cell_params);
        }
        v
    }

    /// Rebuild a genome with the given flat parameters (canonical layout).
    pub fn with_parameter_vector(&self, v: &[f64]) -> Result<RnnGenome, RnnError> {
        let (edge_idx, node_idx) = self.parameter_layout();
        let expected = edge_idx.len()
            + node_idx
                .iter()
                .map(|&i| self.nodes[i].cell_params.len())
                .sum::<usize>();
        if v.len() != expected {
            return Err(RnnError::InvalidArgument(format!(
                "parameter vector has {} entries, genome needs {expected}",
                v.len()
            )));
        }
        let mut g = self.clone();
        let mut k = 0;
        for &i in &edge_idx {
            g.edges[i].weight = v[k];
            k += 1;
        }
        for &i in &node_idx {
            let len = g.nodes[i].cell_params.len();
            g.nodes[i].cell_params.copy_from_slice(&v[k..k + len]);
            k += len;
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("genome serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<RnnGenome, RnnError> {
        let g: RnnGenome =
            serde_json::from_str(text).map_err(|e| RnnError::InvalidGenome(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }
}

/// Deterministic forward pass over an input sequence. No state is retained
/// across calls; history starts from zero activations each time.
pub fn forward(g: &RnnGenome, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, RnnError> {
    g.validate()?;
    for step in inputs {
        if step.len() != g.input_channels.len() {
            return Err(RnnError::DimensionMismatch {
                expected: g.input_channels.len(),
                got: step.len(),
            });
        }
    }
    let net = CompiledNet::compile(g);
    let mut scratch = net.scratch();
    Ok(net.forward_outputs(inputs, &mut scratch))
}

/// Full backpropagation through time with MSE loss, gradient-norm clipping at
/// `clip` and plain SGD updates at fixed `lr`, one update per window. Each
/// epoch visits the windows in a freshly shuffled order (chronologically
/// ordered windows would bias the weights toward whatever regime ends the
/// training span); the shuffle runs off a fixed internal seed, so the whole
/// procedure stays a pure function of the window order and initial weights.
/// Returns the trained genome and the mean pre-update loss per epoch.
pub fn bptt_train(
    g: &RnnGenome,
    windows: &WindowSet,
    epochs: usize,
    lr: f64,
    clip: f64,
) -> Result<(RnnGenome, Vec<f64>), RnnError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    g.validate()?;
    check_windows(g, windows)?;
    if epochs == 0 {
        return Err(RnnError::InvalidArgument("epochs must be >= 1".into()));
    }
    if lr.is_nan() || lr < 0.0 || clip.is_nan() || clip <= 0.0 {
        return Err(RnnError::InvalidArgument(format!(
            "bad lr {lr} or clip {clip}"
        )));
    }
    let mut net = CompiledNet::compile(g);
    let mut scratch = net.scratch();
    let mut order: Vec<usize> = (0..windows.windows.len()).collect();
    let mut shuffle_rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x7a5_5eed);
    let mut window_losses = vec![0.0; windows.windows.len()];
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut shuffle_rng);
        for &i in &order {
            let w = &windows.windows[i];
            window_losses[i] = net.train_window(&w.inputs, &w.targets, lr, clip, &mut scratch);
        }
        // summed in index order so the reported loss does not depend on the
        // visit order (exactly constant when lr = 0)
        let mean = window_losses.iter().sum::<f64>() / window_losses.len() as f64;
        if !mean.is_finite() {
            return Err(RnnError::Diverged { epoch });
        }
        losses.push(mean);
    }
    let mut trained = g.clone();
    net.write_back(&mut trained);
    Ok((trained, losses))
}

/// Mean squared prediction error over every (window, step, channel) element.
/// Matches the regression-metrics MSE on the flattened arrays.
pub fn evaluate_mse(g: &RnnGenome, windows: &WindowSet) -> Result<f64, RnnError> {
    g.validate()?;
    check_windows(g, windows)?;
    let net = CompiledNet::compile(g);
    let mut scratch = net.scratch();
    let mut sq = 0.0;
    let mut count = 0usize;
    for w in &windows.windows {
        sq += net.forward_sq_error(&w.inputs, &w.targets, &mut scratch);
        count += w.targets.len() * windows.target_channels.len();
    }
    Ok(sq / count as f64)
}

/// MSE loss of one window, forward pass only. Building block for the
/// finite-difference gradient oracle: it never touches the backward path.
pub fn window_loss(g: &RnnGenome, window: &Window) -> Result<f64, RnnError> {
    g.validate()?;
    let net = CompiledNet::compile(g);
    let mut scratch = net.scratch();
    let sq = net.forward_sq_error(&window.inputs, &window.targets, &mut scratch);
    let count = window.targets.len() * window.targets.first().map(Vec::len).unwrap_or(0);
    Ok(sq / count as f64)
}

/// Analytic BPTT gradients of one window's MSE loss, aligned with
/// [`RnnGenome::parameter_vector`].
pub fn loss_gradients(g: &RnnGenome, window: &Window) -> Result<(f64, Vec<f64>), RnnError> {
    g.validate()?;
    let net = CompiledNet::compile(g);
    let mut scratch = net.scratch();
    let loss = net.loss_and_grads(&window.inputs, &window.targets, &mut scratch);
    Ok((loss, scratch.grads.clone()))
}

fn check_windows(g: &RnnGenome, windows: &WindowSet) -> Result<(), RnnError> {
    if windows.windows.is_empty() {
        return Err(RnnError::EmptyWindows);
    }
    if windows.input_channels.len() != g.input_channels.len() {
        return Err(RnnError::DimensionMismatch {
            expected: g.input_channels.len(),
            got: windows.input_channels.len(),
        });
    }
    if windows.target_channels.len() != g.output_channels.len() {
        return Err(RnnError::DimensionMismatch {
            expected: g.output_channels.len(),
            got: windows.target_channels.len(),
        });
    }
    Ok(())
}
