//! Asynchronous island evolution over network genomes.
//!
//! The search grows networks from a minimal seed (inputs fully connected to
//! outputs, nothing else) through node-level structural mutations and
//! crossover with Lamarckian weight inheritance: children reuse trained
//! parental weights wherever structure is shared, every candidate is trained
//! by BPTT before scoring, and the trained weights are written back into the
//! surviving genome. Fitness is the post-training MSE on the test windows;
//! validation data never enters the search.
//!
//! A single coordinator owns the islands, the RNG and the innovation table;
//! workers only train and score candidates. With one worker the whole run is
//! bit-reproducible from the seed; with several, insertion order depends on
//! scheduling and reproducibility is not guaranteed.

use std::collections::{BTreeMap, HashMap};
use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rnn::{self, EdgeGene, NodeGene, NodeKind, RnnError, RnnGenome};
use crate::trace::WindowSet;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("parents have incompatible channel signatures")]
    IncompatiblePair,
    #[error(transparent)]
    Rnn(#[from] RnnError),
}

/// Structural mutation operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationOp {
    AddEdge,
    AddRecurrentEdge,
    EnableEdge,
    DisableEdge,
    SplitEdge,
    AddNode,
    SplitNode,
    MergeNode,
    Clone,
}

impl MutationOp {
    pub fn as_str(self) -> &'static str {
        match self {
            MutationOp::AddEdge => "add_edge",
            MutationOp::AddRecurrentEdge => "add_recurrent_edge",
            MutationOp::EnableEdge => "enable_edge",
            MutationOp::DisableEdge => "disable_edge",
            MutationOp::SplitEdge => "split_edge",
            MutationOp::AddNode => "add_node",
            MutationOp::SplitNode => "split_node",
            MutationOp::MergeNode => "merge_node",
            MutationOp::Clone => "clone",
        }
    }
}

/// Relative draw weights for the mutation operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpWeights {
    pub add_edge: f64,
    pub add_recurrent_edge: f64,
    pub enable_edge: f64,
    pub disable_edge: f64,
    pub split_edge: f64,
    pub add_node: f64,
    pub split_node: f64,
    pub merge_node: f64,
    pub clone: f64,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            add_edge: 1.0,
            add_recurrent_edge: 1.0,
            enable_edge: 1.0,
            disable_edge: 1.0,
            split_edge: 1.0,
            add_node: 1.0,
            split_node: 1.0,
            merge_node: 1.0,
            clone: 1.0,
        }
    }
}

impl OpWeights {
    fn entries(&self) -> Vec<(MutationOp, f64)> {
        vec![
            (MutationOp::AddEdge, self.add_edge),
            (MutationOp::AddRecurrentEdge, self.add_recurrent_edge),
            (MutationOp::EnableEdge, self.enable_edge),
            (MutationOp::DisableEdge, self.disable_edge),
            (MutationOp::SplitEdge, self.split_edge),
            (MutationOp::AddNode, self.add_node),
            (MutationOp::SplitNode, self.split_node),
            (MutationOp::MergeNode, self.merge_node),
            (MutationOp::Clone, self.clone),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub islands: usize,
    pub island_capacity: usize,
    pub max_evaluations: usize,
    /// Probability a child comes from mutation; crossover otherwise.
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub op_weights: OpWeights,
    /// Best-genome ring migration every this many evaluations (0 disables).
    pub migration_period: usize,
    pub bptt_epochs: usize,
    pub bptt_lr: f64,
    pub bptt_clip: f64,
    pub seed: u64,
    pub cell_kinds_enabled: Vec<NodeKind>,
    pub max_recurrent_depth: usize,
    pub workers: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            islands: 4,
            island_capacity: 10,
            max_evaluations: 1000,
            mutation_rate: 0.7,
            crossover_rate: 0.3,
            op_weights: OpWeights::default(),
            migration_period: 100,
            bptt_epochs: 10,
            bptt_lr: 0.001,
            bptt_clip: 1.0,
            seed: 42,
            cell_kinds_enabled: NodeKind::HIDDEN_KINDS.to_vec(),
            max_recurrent_depth: 10,
            workers: 1,
        }
    }
}

impl EvolveConfig {
    fn validate(&self) -> Result<(), EvolveError> {
        let fail = |msg: String| Err(EvolveError::InvalidConfig(msg));
        if self.islands == 0 || self.island_capacity == 0 {
            return fail("islands and island_capacity must be >= 1".into());
        }
        if self.max_evaluations == 0 {
            return fail("max_evaluations must be >= 1".into());
        }
        if !(self.mutation_rate >= 0.0 && self.crossover_rate >= 0.0) {
            return fail("rates must be non-negative".into());
        }
        if (self.mutation_rate + self.crossover_rate - 1.0).abs() > 1e-9 {
            return fail(format!(
                "mutation_rate + crossover_rate must sum to 1, got {}",
                self.mutation_rate + self.crossover_rate
            ));
        }
        let lr_ok = self.bptt_lr >= 0.0 && self.bptt_lr.is_finite();
        let clip_ok = self.bptt_clip > 0.0 && self.bptt_clip.is_finite();
        if self.bptt_epochs == 0 || !lr_ok || !clip_ok {
            return fail("bptt settings out of range".into());
        }
        if self.max_recurrent_depth == 0 {
            return fail("max_recurrent_depth must be >= 1".into());
        }
        if self.workers == 0 {
            return fail("workers must be >= 1".into());
        }
        if self.cell_kinds_enabled.is_empty()
            || self.cell_kinds_enabled.iter().any(|k| !k.is_hidden())
        {
            return fail("cell_kinds_enabled must be a non-empty set of hidden kinds".into());
        }
        Ok(())
    }
}

/// One log row per evaluation (and one per migration, op `migrate`).
#[derive(Debug, Clone, PartialEq)]
pub struct SearchLogEntry {
    pub eval: usize,
    pub genome_id: u64,
    pub parent_ids: Vec<u64>,
    pub op: String,
    pub fitness: f64,
    pub nodes: usize,
    pub weights: usize,
    pub island: usize,
}

/// Append-only record of the whole search.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchLog {
    pub entries: Vec<SearchLogEntry>,
}

impl SearchLog {
    /// Rows that consumed an evaluation (everything but migrations).
    pub fn evaluations(&self) -> usize {
        self.entries.iter().filter(|e| e.op != "migrate").count()
    }

    /// Canonical CSV export.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eval,genome_id,parent_ids,op,fitness,nodes,weights\n");
        for e in &self.entries {
            let parents = e
                .parent_ids
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join("+");
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.eval, e.genome_id, parents, e.op, e.fitness, e.nodes, e.weights
            ));
        }
        out
    }
}

/// Shared id authority. Repeated creation of the same edge (same endpoints
/// and recurrent depth) anywhere in the run yields the same edge id, so
/// crossover can align genes by identity; node ids are always fresh.
#[derive(Debug, Default)]
pub struct InnovationTable {
    next_node_id: u64,
    next_edge_id: u64,
    edge_keys: HashMap<(u64, u64, usize), u64>,
}

impl InnovationTable {
    pub fn for_seed(seed: &RnnGenome) -> InnovationTable {
        let mut table = InnovationTable {
            next_node_id: seed.nodes.iter().map(|n| n.node_id + 1).max().unwrap_or(0),
            next_edge_id: seed.edges.iter().map(|e| e.edge_id + 1).max().unwrap_or(0),
            edge_keys: HashMap::new(),
        };
        for e in &seed.edges {
            table
                .edge_keys
                .insert((e.src, e.dst, e.recurrent_depth), e.edge_id);
        }
        table
    }

    pub fn fresh_node_id(&mut self) -> u64 {
        let id = self.next_node_id;
        self.next_node_id += 1;
        id
    }

    pub fn edge_id(&mut self, src: u64, dst: u64, recurrent_depth: usize) -> u64 {
        if let Some(&id) = self.edge_keys.get(&(src, dst, recurrent_depth)) {
            return id;
        }
        let id = self.next_edge_id;
        self.next_edge_id += 1;
        self.edge_keys.insert((src, dst, recurrent_depth), id);
        id
    }
}

/// Minimal seed architecture: one input node per channel, one output node per
/// target, the full feedforward input-to-output edge set and no hidden nodes.
pub fn seed_genome(input_channels: &[String], output_channels: &[String]) -> RnnGenome {
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
    let mut edges = Vec::new();
    for i in 0..n_in {
        for o in 0..n_out {
            edges.push(EdgeGene {
                edge_id: i * n_out + o,
                src: i,
                dst: n_in + o,
                weight: 0.1,
                enabled: true,
                recurrent_depth: 0,
            });
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

fn new_weight(rng: &mut impl Rng) -> f64 {
    Normal::new(0.0, 0.1).unwrap().sample(rng)
}

fn random_kind(rng: &mut impl Rng, kinds: &[NodeKind]) -> NodeKind {
    kinds[rng.random_range(0..kinds.len())]
}

fn has_edge(g: &RnnGenome, src: u64, dst: u64, depth: usize) -> bool {
    g.edges
        .iter()
        .any(|e| e.src == src && e.dst == dst && e.recurrent_depth == depth)
}

fn op_add_edge(g: &mut RnnGenome, rng: &mut impl Rng, innov: &mut InnovationTable) -> bool {
    let mut candidates = Vec::new();
    for s in &g.nodes {
        for d in &g.nodes {
            if s.depth < d.depth
                && d.kind != NodeKind::Input
                && !has_edge(g, s.node_id, d.node_id, 0)
            {
                candidates.push((s.node_id, d.node_id));
            }
        }
    }
    if candidates.is_empty() {
        return false;
    }
    let (src, dst) = candidates[rng.random_range(0..candidates.len())];
    g.edges.push(EdgeGene {
        edge_id: innov.edge_id(src, dst, 0),
        src,
        dst,
        weight: new_weight(rng),
        enabled: true,
        recurrent_depth: 0,
    });
    true
}

fn op_add_recurrent_edge(
    g: &mut RnnGenome,
    rng: &mut impl Rng,
    max_depth: usize,
    innov: &mut InnovationTable,
) -> bool {
    let targets: Vec<u64> = g
        .nodes
        .iter()
        .filter(|n| n.kind != NodeKind::Input)
        .map(|n| n.node_id)
        .collect();
    for _ in 0..20 {
        let src = g.nodes[rng.random_range(0..g.nodes.len())].node_id;
        let dst = targets[rng.random_range(0..targets.len())];
        let depth = rng.random_range(1..=max_depth);
        if !has_edge(g, src, dst, depth) {
            g.edges.push(EdgeGene {
                edge_id: innov.edge_id(src, dst, depth),
                src,
                dst,
                weight: new_weight(rng),
                enabled: true,
                recurrent_depth: depth,
            });
            return true;
        }
    }
    false
}

fn op_toggle_edge(g: &mut RnnGenome, rng: &mut impl Rng, enable: bool) -> bool {
    let idx: Vec<usize> = (0..g.edges.len())
        .filter(|&i| g.edges[i].enabled != enable)
        .collect();
    if idx.is_empty() {
        return false;
    }
    g.edges[idx[rng.random_range(0..idx.len())]].enabled = enable;
    true
}

fn op_split_edge(
    g: &mut RnnGenome,
    rng: &mut impl Rng,
    kinds: &[NodeKind],
    innov: &mut InnovationTable,
) -> bool {
    // Only feedforward edges are splittable; the two halves of a lagged edge
    // would have no consistent placement.
    let idx: Vec<usize> = (0..g.edges.len())
        .filter(|&i| g.edges[i].enabled && g.edges[i].recurrent_depth == 0)
        .collect();
    if idx.is_empty() {
        return false;
    }
    let i = idx[rng.random_range(0..idx.len())];
    let (src, dst, weight) = (g.edges[i].src, g.edges[i].dst, g.edges[i].weight);
    g.edges[i].enabled = false;
    let kind = random_kind(rng, kinds);
    let depth = (g.node(src).unwrap().depth + g.node(dst).unwrap().depth) / 2.0;
    let node_id = innov.fresh_node_id();
    g.nodes.push(NodeGene {
        node_id,
        kind,
        depth,
        cell_params: (0..kind.param_count()).map(|_| new_weight(rng)).collect(),
    });
    g.edges.push(EdgeGene {
        edge_id: innov.edge_id(src, node_id, 0),
        src,
        dst: node_id,
        weight: 1.0,
        enabled: true,
        recurrent_depth: 0,
    });
    g.edges.push(EdgeGene {
        edge_id: innov.edge_id(node_id, dst, 0),
        src: node_id,
        dst,
        weight,
        enabled: true,
        recurrent_depth: 0,
    });
    true
}

fn op_add_node(
    g: &mut RnnGenome,
    rng: &mut impl Rng,
    kinds: &[NodeKind],
    innov: &mut InnovationTable,
) -> bool {
    let depth = rng.random_range(0.05..0.95);
    let below: Vec<u64> = g
        .nodes
        .iter()
        .filter(|n| n.depth < depth)
        .map(|n| n.node_id)
        .collect();
    let above: Vec<u64> = g
        .nodes
        .iter()
        .filter(|n| n.depth > depth && n.kind != NodeKind::Input)
        .map(|n| n.node_id)
        .collect();
    if below.is_empty() || above.is_empty() {
        return false;
    }
    let kind = random_kind(rng, kinds);
    let node_id = innov.fresh_node_id();
    g.nodes.push(NodeGene {
        node_id,
        kind,
        depth,
        cell_params: (0..kind.param_count()).map(|_| new_weight(rng)).collect(),
    });
    let src = below[rng.random_range(0..below.len())];
    let dst = above[rng.random_range(0..above.len())];
    g.edges.push(EdgeGene {
        edge_id: innov.edge_id(src, node_id, 0),
        src,
        dst: node_id,
        weight: new_weight(rng),
        enabled: true,
        recurrent_depth: 0,
    });
    g.edges.push(EdgeGene {
        edge_id: innov.edge_id(node_id, dst, 0),
        src: node_id,
        dst,
        weight: new_weight(rng),
        enabled: true,
        recurrent_depth: 0,
    });
    true
}

fn hidden_node_ids(g: &RnnGenome) -> Vec<u64> {
    g.nodes
        .iter()
        .filter(|n| n.kind.is_hidden())
        .map(|n| n.node_id)
        .collect()
}

/// Duplicate a hidden node and randomly partition its incoming edges between
/// the original and the copy; outgoing edges are duplicated onto the copy.
/// Self-loops stay on the original.
fn op_split_node(g: &mut RnnGenome, rng: &mut impl Rng, innov: &mut InnovationTable) -> bool {
    let hidden = hidden_node_ids(g);
    if hidden.is_empty() {
        return false;
    }
    let target = hidden[rng.random_range(0..hidden.len())];
    let original = g.node(target).unwrap().clone();
    let copy_id = innov.fresh_node_id();
    g.nodes.push(NodeGene {
        node_id: copy_id,
        kind: original.kind,
        depth: original.depth,
        cell_params: original.cell_params.clone(),
    });
    let mut new_edges = Vec::new();
    for e in g.edges.iter_mut() {
        if !e.enabled || e.src == e.dst {
            continue;
        }
        if e.dst == target && rng.random_bool(0.5) {
            e.enabled = false;
            new_edges.push((e.src, copy_id, e.weight, e.recurrent_depth));
        } else if e.src == target {
            new_edges.push((copy_id, e.dst, e.weight, e.recurrent_depth));
        }
    }
    for (src, dst, weight, depth) in new_edges {
        g.edges.push(EdgeGene {
            edge_id: innov.edge_id(src, dst, depth),
            src,
            dst,
            weight,
            enabled: true,
            recurrent_depth: depth,
        });
    }
    true
}

/// Fuse two hidden nodes into one (keeping the first's kind and parameters,
/// averaging depths), re-pointing their enabled edges at the merged node and
/// summing weights where edges collide. Feedforward edges that the merged
/// depth would invert are dropped.
fn op_merge_node(g: &mut RnnGenome, rng: &mut impl Rng, innov: &mut InnovationTable) -> bool {
    let hidden = hidden_node_ids(g);
    if hidden.len() < 2 {
        return false;
    }
    let ai = rng.random_range(0..hidden.len());
    let bi = loop {
        let j = rng.random_range(0..hidden.len());
        if j != ai {
            break j;
        }
    };
    let (a_id, b_id) = (hidden[ai], hidden[bi]);
    let a = g.node(a_id).unwrap().clone();
    let b = g.node(b_id).unwrap().clone();
    let merged_id = innov.fresh_node_id();
    let merged_depth = (a.depth + b.depth) / 2.0;

    let depth_of = |g: &RnnGenome, id: u64| {
        if id == merged_id {
            merged_depth
        } else {
            g.node(id).unwrap().depth
        }
    };

    let mut remapped: BTreeMap<(u64, u64, usize), f64> = BTreeMap::new();
    for e in &g.edges {
        if !e.enabled || (e.src != a_id && e.src != b_id && e.dst != a_id && e.dst != b_id) {
            continue;
        }
        let src = if e.src == a_id || e.src == b_id {
            merged_id
        } else {
            e.src
        };
        let dst = if e.dst == a_id || e.dst == b_id {
            merged_id
        } else {
            e.dst
        };
        if e.recurrent_depth == 0 && depth_of(g, src) >= depth_of(g, dst) {
            continue;
        }
        *remapped.entry((src, dst, e.recurrent_depth)).or_insert(0.0) += e.weight;
    }

    g.nodes.retain(|n| n.node_id != a_id && n.node_id != b_id);
    g.edges
        .retain(|e| e.src != a_id && e.src != b_id && e.dst != a_id && e.dst != b_id);
    g.nodes.push(NodeGene {
        node_id: merged_id,
        kind: a.kind,
        depth: merged_depth,
        cell_params: a.cell_params.clone(),
    });
    for ((src, dst, depth), weight) in remapped {
        g.edges.push(EdgeGene {
            edge_id: innov.edge_id(src, dst, depth),
            src,
            dst,
            weight,
            enabled: true,
            recurrent_depth: depth,
        });
    }
    true
}

/// Apply exactly one structural operator, drawn by the configured weights.
/// Inapplicable operators fall through to the next draw; if nothing applies
/// the child is a plain clone. Unchanged structure keeps parental weights.
pub fn mutate(
    parent: &RnnGenome,
    rng: &mut impl Rng,
    cfg: &EvolveConfig,
    innov: &mut InnovationTable,
) -> (RnnGenome, MutationOp) {
    let mut child = parent.clone();
    child.fitness = None;
    let mut ops = cfg.op_weights.entries();
    ops.retain(|(_, w)| *w > 0.0);
    while !ops.is_empty() {
        let total: f64 = ops.iter().map(|(_, w)| w).sum();
        let mut pick = rng.random_range(0.0..total);
        let mut idx = ops.len() - 1;
        for (i, (_, w)) in ops.iter().enumerate() {
            if pick < *w {
                idx = i;
                break;
            }
            pick -= w;
        }
        let (op, _) = ops[idx];
        let applied = match op {
            MutationOp::AddEdge => op_add_edge(&mut child, rng, innov),
            MutationOp::AddRecurrentEdge => {
                op_add_recurrent_edge(&mut child, rng, cfg.max_recurrent_depth, innov)
            }
            MutationOp::EnableEdge => op_toggle_edge(&mut child, rng, true),
            MutationOp::DisableEdge => op_toggle_edge(&mut child, rng, false),
            MutationOp::SplitEdge => op_split_edge(&mut child, rng, &cfg.cell_kinds_enabled, innov),
            MutationOp::AddNode => op_add_node(&mut child, rng, &cfg.cell_kinds_enabled, innov),
            MutationOp::SplitNode => op_split_node(&mut child, rng, innov),
            MutationOp::MergeNode => op_merge_node(&mut child, rng, innov),
            MutationOp::Clone => true,
        };
        if applied {
            return (child, op);
        }
        ops.remove(idx);
    }
    (child, MutationOp::Clone)
}

/// Cross two genomes: the union of structures keyed by gene identity.
/// Matching genes take the fitter parent's weights; genes only the fitter
/// parent has are always inherited, the less fit parent's extras with
/// probability one half. All inherited weights are reused verbatim.
pub fn crossover(
    a: &RnnGenome,
    b: &RnnGenome,
    rng: &mut impl Rng,
) -> Result<RnnGenome, EvolveError> {
    if a.input_channels != b.input_channels || a.output_channels != b.output_channels {
        return Err(EvolveError::IncompatiblePair);
    }
    let a_fit = a.fitness.unwrap_or(f64::INFINITY);
    let b_fit = b.fitness.unwrap_or(f64::INFINITY);
    let (fit, other) = if a_fit <= b_fit { (a, b) } else { (b, a) };

    let mut child = fit.clone();
    child.fitness = None;
    let have_edge: std::collections::HashSet<u64> = child.edges.iter().map(|e| e.edge_id).collect();
    let mut extra_edges: Vec<EdgeGene> = Vec::new();
    for e in &other.edges {
        if !have_edge.contains(&e.edge_id) && rng.random_bool(0.5) {
            extra_edges.push(e.clone());
        }
    }
    // pull any nodes the inherited extra edges reference
    for e in &extra_edges {
        for id in [e.src, e.dst] {
            if child.node(id).is_none() {
                child.nodes.push(
                    other
                        .node(id)
                        .expect("parent edge references its own node")
                        .clone(),
                );
            }
        }
    }
    child.edges.extend(extra_edges);
    Ok(child)
}

struct Job {
    genome: RnnGenome,
    island: usize,
    op: String,
    parents: Vec<u64>,
}

struct Evaluated {
    genome: RnnGenome,
    island: usize,
    op: String,
    parents: Vec<u64>,
}

/// Train a candidate and score its fitness. Divergence is not fatal: the
/// candidate just gets infinite fitness.
fn train_and_score(
    genome: &RnnGenome,
    train: &WindowSet,
    test: &WindowSet,
    cfg: &EvolveConfig,
) -> Result<RnnGenome, EvolveError> {
    match rnn::bptt_train(genome, train, cfg.bptt_epochs, cfg.bptt_lr, cfg.bptt_clip) {
        Ok((mut trained, _)) => {
            let fitness = rnn::evaluate_mse(&trained, test)?;
            trained.fitness = Some(if fitness.is_finite() {
                fitness
            } else {
                f64::INFINITY
            });
            Ok(trained)
        }
        Err(RnnError::Diverged { .. }) => {
            let mut failed = genome.clone();
            failed.fitness = Some(f64::INFINITY);
            Ok(failed)
        }
        Err(e) => Err(e.into()),
    }
}

struct Coordinator<'a> {
    cfg: &'a EvolveConfig,
    rng: ChaCha12Rng,
    innov: InnovationTable,
    islands: Vec<Vec<RnnGenome>>,
    next_genome_id: u64,
    completed: usize,
    log: SearchLog,
    best: Option<RnnGenome>,
}

impl<'a> Coordinator<'a> {
    fn new(cfg: &'a EvolveConfig, seed: &RnnGenome) -> Coordinator<'a> {
        Coordinator {
            cfg,
            rng: ChaCha12Rng::seed_from_u64(cfg.seed),
            innov: InnovationTable::for_seed(seed),
            islands: vec![Vec::new(); cfg.islands],
            next_genome_id: 1,
            completed: 0,
            log: SearchLog::default(),
            best: None,
        }
    }

    fn next_job(&mut self, seed: &RnnGenome) -> Job {
        let island = self.rng.random_range(0..self.cfg.islands);
        let n_members = self.islands[island].len();
        let (mut genome, op, parents) = if n_members == 0 {
            // found the island with a freshly weighted seed
            let mut g = seed.clone();
            for e in &mut g.edges {
                e.weight = new_weight(&mut self.rng);
            }
            (g, "seed".to_string(), vec![])
        } else if n_members >= 2 && self.rng.random_range(0.0..1.0) < self.cfg.crossover_rate {
            let i = self.rng.random_range(0..n_members);
            let j = loop {
                let j = self.rng.random_range(0..n_members);
                if j != i {
                    break j;
                }
            };
            let (pa, pb) = (
                self.islands[island][i].clone(),
                self.islands[island][j].clone(),
            );
            let child = crossover(&pa, &pb, &mut self.rng)
                .expect("island members share channel signatures");
            (
                child,
                "crossover".to_string(),
                vec![pa.generation_id, pb.generation_id],
            )
        } else {
            let i = self.rng.random_range(0..n_members);
            let parent = self.islands[island][i].clone();
            let (child, op) = mutate(&parent, &mut self.rng, self.cfg, &mut self.innov);
            (child, op.as_str().to_string(), vec![parent.generation_id])
        };
        genome.generation_id = self.next_genome_id;
        self.next_genome_id += 1;
        Job {
            genome,
            island,
            op,
            parents,
        }
    }

    fn insert(&mut self, island: usize, genome: RnnGenome) {
        let pool = &mut self.islands[island];
        pool.push(genome);
        if pool.len() > self.cfg.island_capacity {
            // evict the worst; ties evict the newer genome
            let worst = pool
                .iter()
                .enumerate()
                .max_by(|(_, x), (_, y)| {
                    let fx = x.fitness.unwrap_or(f64::INFINITY);
                    let fy = y.fitness.unwrap_or(f64::INFINITY);
                    fx.partial_cmp(&fy)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(x.generation_id.cmp(&y.generation_id))
                })
                .map(|(i, _)| i)
                .expect("non-empty island");
            pool.remove(worst);
        }
    }

    fn record(&mut self, done: Evaluated) {
        self.completed += 1;
        let fitness = done.genome.fitness.unwrap_or(f64::INFINITY);
        let (nodes, weights) = done.genome.count_params();
        self.log.entries.push(SearchLogEntry {
            eval: self.completed,
            genome_id: done.genome.generation_id,
            parent_ids: done.parents,
            op: done.op,
            fitness,
            nodes,
            weights,
            island: done.island,
        });
        let improves = match &self.best {
            Some(b) => fitness < b.fitness.unwrap_or(f64::INFINITY),
            None => true,
        };
        if improves {
            self.best = Some(done.genome.clone());
        }
        self.insert(done.island, done.genome);
        if self.cfg.migration_period > 0
            && self.completed.is_multiple_of(self.cfg.migration_period)
            && self.completed < self.cfg.max_evaluations
        {
            self.migrate();
        }
    }

    /// Ring migration: each island's best is copied into the next island.
    fn migrate(&mut self) {
        let k = self.islands.len();
        if k < 2 {
            return;
        }
        let bests: Vec<Option<RnnGenome>> = self
            .islands
            .iter()
            .map(|pool| {
                pool.iter()
                    .min_by(|x, y| {
                        let fx = x.fitness.unwrap_or(f64::INFINITY);
                        let fy = y.fitness.unwrap_or(f64::INFINITY);
                        fx.partial_cmp(&fy)
                            .unwrap_or(std::cmp::Ordering::Equal)
                            .then(x.generation_id.cmp(&y.generation_id))
                    })
                    .cloned()
            })
            .collect();
        for (i, best) in bests.into_iter().enumerate() {
            let Some(best) = best else { continue };
            let target = (i + 1) % k;
            let mut migrant = best.clone();
            migrant.generation_id = self.next_genome_id;
            self.next_genome_id += 1;
            let (nodes, weights) = migrant.count_params();
            self.log.entries.push(SearchLogEntry {
                eval: self.completed,
                genome_id: migrant.generation_id,
                parent_ids: vec![best.generation_id],
                op: "migrate".to_string(),
                fitness: migrant.fitness.unwrap_or(f64::INFINITY),
                nodes,
                weights,
                island: target,
            });
            self.insert(target, migrant);
        }
    }
}

/// Run the evolutionary search. Fitness is trained MSE on `test`; the best
/// genome ever evaluated is returned along with the full search log.
pub fn evolve(
    cfg: &EvolveConfig,
    train: &WindowSet,
    test: &WindowSet,
) -> Result<(RnnGenome, SearchLog), EvolveError> {
    cfg.validate()?;
    if train.windows.is_empty() || test.windows.is_empty() {
        return Err(EvolveError::Rnn(RnnError::EmptyWindows));
    }
    let seed = seed_genome(&train.input_channels, &train.target_channels);
    seed.validate()?;
    let mut coordinator = Coordinator::new(cfg, &seed);

    if cfg.workers <= 1 {
        while coordinator.completed < cfg.max_evaluations {
            let job = coordinator.next_job(&seed);
            let genome = train_and_score(&job.genome, train, test, cfg)?;
            coordinator.record(Evaluated {
                genome,
                island: job.island,
                op: job.op,
                parents: job.parents,
            });
        }
    } else {
        run_parallel(&mut coordinator, &seed, train, test, cfg)?;
    }

    let best = coordinator
        .best
        .take()
        .expect("at least one evaluation ran");
    Ok((best, coordinator.log))
}

fn run_parallel(
    coordinator: &mut Coordinator,
    seed: &RnnGenome,
    train: &WindowSet,
    test: &WindowSet,
    cfg: &EvolveConfig,
) -> Result<(), EvolveError> {
    std::thread::scope(|scope| -> Result<(), EvolveError> {
        let (result_tx, result_rx) = mpsc::channel::<(usize, Result<Evaluated, EvolveError>)>();
        let mut job_txs = Vec::new();
        for worker in 0..cfg.workers {
            let (job_tx, job_rx) = mpsc::channel::<Job>();
            job_txs.push(job_tx);
            let result_tx = result_tx.clone();
            scope.spawn(move || {
                while let Ok(job) = job_rx.recv() {
                    let out =
                        train_and_score(&job.genome, train, test, cfg).map(|genome| Evaluated {
                            genome,
                            island: job.island,
                            op: job.op,
                            parents: job.parents,
                        });
                    if result_tx.send((worker, out)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(result_tx);

        let mut dispatched = 0;
        for tx in &job_txs {
            if dispatched == cfg.max_evaluations {
                break;
            }
            tx.send(coordinator.next_job(seed)).expect("worker alive");
            dispatched += 1;
        }
        while coordinator.completed < cfg.max_evaluations {
            let (worker, result) = result_rx.recv().expect("workers alive while jobs pending");
            coordinator.record(result?);
            if dispatched < cfg.max_evaluations {
                job_txs[worker]
                    .send(coordinator.next_job(seed))
                    .expect("worker alive");
                dispatched += 1;
            }
        }
        drop(job_txs);
        Ok(())
    })
}

#[cfg(test)]
mod tests;
