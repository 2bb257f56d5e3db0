//! Flat execution plan for a genome.
//!
//! Compilation sorts nodes into the canonical evaluation order (by depth,
//! ties by node id — feedforward edges only ever point upward in depth, so
//! this is a topological order of the within-timestep subgraph), gathers
//! enabled edges into a CSR incoming-edge table, and packs all trainable
//! parameters into one flat vector in the genome's canonical layout. The
//! forward and backward passes then run over plain arrays; evaluation results
//! are independent of the order nodes or edges were stored in the genome.

use super::cells::{cell_backward, cell_forward, CellStep};
use super::{NodeKind, RnnGenome};

#[derive(Debug, Clone, Copy)]
struct CEdge {
    src: u32,
    lag: u32,
    widx: u32,
}

pub(crate) struct CompiledNet {
    n: usize,
    kinds: Vec<NodeKind>,
    /// Cell-parameter offset per slot (into `params`).
    pofs: Vec<usize>,
    /// Non-input slots in evaluation order.
    eval_order: Vec<usize>,
    in_start: Vec<usize>,
    in_edges: Vec<CEdge>,
    input_slots: Vec<usize>,
    output_slots: Vec<usize>,
    pub params: Vec<f64>,
    /// Enabled-edge count; params[..n_edge_params] are edge weights.
    n_edge_params: usize,
    /// Genome indices backing each parameter block, for write-back.
    edge_gene_idx: Vec<usize>,
    node_gene_idx: Vec<usize>,
}

pub(crate) struct Scratch {
    cap_t: usize,
    act: Vec<f64>,
    cell: Vec<f64>,
    steps: Vec<CellStep>,
    pre: Vec<f64>,
    dact: Vec<f64>,
    dh_carry: Vec<f64>,
    dc_carry: Vec<f64>,
    pub grads: Vec<f64>,
}

impl CompiledNet {
    /// Build the execution plan. The genome must already be validated.
    pub fn compile(g: &RnnGenome) -> CompiledNet {
        let (edge_idx, node_idx) = g.parameter_layout();

        // Canonical slot order: (depth, node_id).
        let mut order: Vec<usize> = (0..g.nodes.len()).collect();
        order.sort_by(|&a, &b| {
            let (na, nb) = (&g.nodes[a], &g.nodes[b]);
            na.depth
                .partial_cmp(&nb.depth)
                .unwrap()
                .then(na.node_id.cmp(&nb.node_id))
        });
        let slot_of_gene: std::collections::HashMap<u64, usize> = order
            .iter()
            .enumerate()
            .map(|(slot, &i)| (g.nodes[i].node_id, slot))
            .collect();

        let n = order.len();
        let kinds: Vec<NodeKind> = order.iter().map(|&i| g.nodes[i].kind).collect();

        // Edge weights first, in canonical order.
        let mut params: Vec<f64> = edge_idx.iter().map(|&i| g.edges[i].weight).collect();
        let n_edge_params = params.len();

        // Cell params per node, canonical order; record each slot's offset.
        let mut pofs = vec![usize::MAX; n];
        for &i in &node_idx {
            let slot = slot_of_gene[&g.nodes[i].node_id];
            pofs[slot] = params.len();
            params.extend_from_slice(&g.nodes[i].cell_params);
        }

        // CSR incoming edges per destination slot, ordered by edge id so the
        // accumulation order never depends on genome storage order.
        let mut incoming: Vec<Vec<CEdge>> = vec![Vec::new(); n];
        for (widx, &i) in edge_idx.iter().enumerate() {
            let e = &g.edges[i];
            incoming[slot_of_gene[&e.dst]].push(CEdge {
                src: slot_of_gene[&e.src] as u32,
                lag: e.recurrent_depth as u32,
                widx: widx as u32,
            });
        }
        let mut in_start = Vec::with_capacity(n + 1);
        let mut in_edges = Vec::new();
        in_start.push(0);
        for slot_edges in incoming {
            in_edges.extend(slot_edges);
            in_start.push(in_edges.len());
        }

        let eval_order: Vec<usize> = (0..n).filter(|&s| kinds[s] != NodeKind::Input).collect();

        let input_slots: Vec<usize> = g
            .input_node_ids()
            .iter()
            .map(|id| slot_of_gene[id])
            .collect();
        let output_slots: Vec<usize> = g
            .output_node_ids()
            .iter()
            .map(|id| slot_of_gene[id])
            .collect();

        CompiledNet {
            n,
            kinds,
            pofs,
            eval_order,
            in_start,
            in_edges,
            input_slots,
            output_slots,
            params,
            n_edge_params,
            edge_gene_idx: edge_idx,
            node_gene_idx: node_idx,
        }
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            cap_t: 0,
            act: Vec::new(),
            cell: Vec::new(),
            steps: Vec::new(),
            pre: Vec::new(),
            dact: Vec::new(),
            dh_carry: vec![0.0; self.n],
            dc_carry: vec![0.0; self.n],
            grads: vec![0.0; self.params.len()],
        }
    }

    fn ensure(&self, s: &mut Scratch, t_len: usize) {
        if s.cap_t < t_len {
            s.cap_t = t_len;
            s.act.resize(t_len * self.n, 0.0);
            s.cell.resize(t_len * self.n, 0.0);
            s.steps.resize(t_len * self.n, CellStep::default());
            s.pre.resize(t_len * self.n, 0.0);
            s.dact.resize(t_len * self.n, 0.0);
        }
    }

    fn run_forward(&self, inputs: &[Vec<f64>], s: &mut Scratch) {
        let t_len = inputs.len();
        self.ensure(s, t_len);
        let n = self.n;
        for (t, step_inputs) in inputs.iter().enumerate() {
            let base = t * n;
            for (k, &slot) in self.input_slots.iter().enumerate() {
                s.act[base + slot] = step_inputs[k];
                s.steps[base + slot] = CellStep {
                    h: step_inputs[k],
                    ..Default::default()
                };
            }
            for &slot in &self.eval_order {
                let mut x = 0.0;
                for e in &self.in_edges[self.in_start[slot]..self.in_start[slot + 1]] {
                    let lag = e.lag as usize;
                    if t >= lag {
                        x += self.params[e.widx as usize] * s.act[(t - lag) * n + e.src as usize];
                    }
                }
                let (h_prev, c_prev) = if t > 0 {
                    (s.act[(t - 1) * n + slot], s.cell[(t - 1) * n + slot])
                } else {
                    (0.0, 0.0)
                };
                let p = self.cell_params(slot);
                let step = cell_forward(self.kinds[slot], p, x, h_prev, c_prev);
                s.pre[base + slot] = x;
                s.act[base + slot] = step.h;
                s.cell[base + slot] = step.c;
                s.steps[base + slot] = step;
            }
        }
    }

    fn cell_params(&self, slot: usize) -> &[f64] {
        if self.pofs[slot] == usize::MAX {
            &[]
        } else {
            let len = self.kinds[slot].param_count();
            &self.params[self.pofs[slot]..self.pofs[slot] + len]
        }
    }

    /// Forward pass returning the per-step output vectors.
    pub fn forward_outputs(&self, inputs: &[Vec<f64>], s: &mut Scratch) -> Vec<Vec<f64>> {
        self.run_forward(inputs, s);
        (0..inputs.len())
            .map(|t| {
                self.output_slots
                    .iter()
                    .map(|&o| s.act[t * self.n + o])
                    .collect()
            })
            .collect()
    }

    /// Forward pass returning the total squared error against targets.
    pub fn forward_sq_error(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        s: &mut Scratch,
    ) -> f64 {
        self.run_forward(inputs, s);
        let mut sq = 0.0;
        for (t, target) in targets.iter().enumerate() {
            for (k, &o) in self.output_slots.iter().enumerate() {
                let e = s.act[t * self.n + o] - target[k];
                sq += e * e;
            }
        }
        sq
    }

    /// Forward + full BPTT backward. Fills `s.grads` (canonical layout) and
    /// returns the window's mean squared error.
    pub fn loss_and_grads(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        s: &mut Scratch,
    ) -> f64 {
        self.run_forward(inputs, s);
        let t_len = inputs.len();
        let n = self.n;
        let k_out = self.output_slots.len();
        let norm = (targets.len() * k_out) as f64;

        s.dact[..t_len * n].fill(0.0);
        s.dh_carry.fill(0.0);
        s.dc_carry.fill(0.0);
        s.grads.fill(0.0);

        let mut sq = 0.0;
        for (t, target) in targets.iter().enumerate() {
            for (k, &o) in self.output_slots.iter().enumerate() {
                let e = s.act[t * n + o] - target[k];
                sq += e * e;
                s.dact[t * n + o] = 2.0 * e / norm;
            }
        }

        for t in (0..t_len).rev() {
            let base = t * n;
            for &slot in self.eval_order.iter().rev() {
                let dh = s.dact[base + slot] + s.dh_carry[slot];
                let dc = s.dc_carry[slot];
                s.dh_carry[slot] = 0.0;
                s.dc_carry[slot] = 0.0;
                if dh == 0.0 && dc == 0.0 {
                    continue;
                }
                let (h_prev, c_prev) = if t > 0 {
                    (s.act[(t - 1) * n + slot], s.cell[(t - 1) * n + slot])
                } else {
                    (0.0, 0.0)
                };
                let step = s.steps[base + slot];
                let x = s.pre[base + slot];
                let kind = self.kinds[slot];
                let grad = if self.pofs[slot] == usize::MAX {
                    let mut no_params: [f64; 0] = [];
                    cell_backward(kind, &[], &mut no_params, x, h_prev, c_prev, &step, dh, dc)
                } else {
                    let len = kind.param_count();
                    let (pofs, n_params) = (self.pofs[slot], len);
                    // params and grads are disjoint vectors; split borrows are fine
                    let p = &self.params[pofs..pofs + n_params];
                    let gp = &mut s.grads[pofs..pofs + n_params];
                    cell_backward(kind, p, gp, x, h_prev, c_prev, &step, dh, dc)
                };
                if t > 0 {
                    s.dh_carry[slot] += grad.dh_prev;
                    s.dc_carry[slot] += grad.dc_prev;
                }
                if grad.dx != 0.0 {
                    for e in &self.in_edges[self.in_start[slot]..self.in_start[slot + 1]] {
                        let lag = e.lag as usize;
                        if t >= lag {
                            let src_at = (t - lag) * n + e.src as usize;
                            s.grads[e.widx as usize] += s.act[src_at] * grad.dx;
                            if self.kinds[e.src as usize] != NodeKind::Input {
                                s.dact[src_at] += self.params[e.widx as usize] * grad.dx;
                            }
                        }
                    }
                }
            }
        }
        sq / norm
    }

    /// One SGD step on one window: returns the pre-update loss.
    pub fn train_window(
        &mut self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        lr: f64,
        clip: f64,
        s: &mut Scratch,
    ) -> f64 {
        let loss = self.loss_and_grads(inputs, targets, s);
        let norm: f64 = s.grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > clip { lr * clip / norm } else { lr };
        for (p, g) in self.params.iter_mut().zip(&s.grads) {
            *p -= scale * g;
        }
        loss
    }

    /// Copy trained parameters back into a genome (Lamarckian write-back).
    pub fn write_back(&self, g: &mut RnnGenome) {
        for (k, &i) in self.edge_gene_idx.iter().enumerate() {
            g.edges[i].weight = self.params[k];
        }
        let mut ofs = self.n_edge_params;
        for &i in &self.node_gene_idx {
            let len = g.nodes[i].cell_params.len();
            g.nodes[i]
                .cell_params
                .copy_from_slice(&self.params[ofs..ofs + len]);
            ofs += len;
        }
    }
}
