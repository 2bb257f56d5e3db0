use super::*;
use crate::datagen::{synth_trace, SynthConfig};
use crate::trace::{self, CH_COST, CH_LATENCY};

fn chans(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn small_windows(records: usize, seed: u64) -> (WindowSet, WindowSet) {
    let ds = synth_trace(&SynthConfig {
        length: records,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let ds = trace::split_chronological(&ds, (0.6, 0.2, 0.2)).unwrap();
    let ds = trace::normalize_fit_apply(&ds).unwrap();
    let io = chans(&[CH_LATENCY, CH_COST]);
    let w = trace::make_windows(&ds, &io, &io, 8).unwrap();
    (w.train, w.test)
}

fn quick_config(max_evaluations: usize) -> EvolveConfig {
    EvolveConfig {
        islands: 2,
        island_capacity: 5,
        max_evaluations,
        migration_period: 10,
        bptt_epochs: 2,
        bptt_lr: 0.05,
        seed: 7,
        ..EvolveConfig::default()
    }
}

#[test]
fn seed_genome_shapes() {
    let g = seed_genome(&chans(&["a", "b"]), &chans(&["y", "z"]));
    g.validate().unwrap();
    assert_eq!((g.nodes.len(), g.edges.len()), (4, 4));

    let g = seed_genome(&chans(&["a", "b", "urt"]), &chans(&["y", "z"]));
    g.validate().unwrap();
    assert_eq!((g.nodes.len(), g.edges.len()), (5, 6));
}

#[test]
fn innovation_table_deduplicates_edge_keys() {
    let seed = seed_genome(&chans(&["a"]), &chans(&["y"]));
    let mut table = InnovationTable::for_seed(&seed);
    let id1 = table.edge_id(0, 1, 3);
    let id2 = table.edge_id(0, 1, 3);
    assert_eq!(id1, id2);
    assert_ne!(table.edge_id(0, 1, 4), id1);
    // seed keys are registered
    assert_eq!(table.edge_id(0, 1, 0), seed.edges[0].edge_id);
}

#[test]
fn add_recurrent_edge_on_seed() {
    let seed = seed_genome(&chans(&["a", "b"]), &chans(&["y"]));
    let mut innov = InnovationTable::for_seed(&seed);
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let cfg = EvolveConfig {
        op_weights: OpWeights {
            add_recurrent_edge: 1.0,
            add_edge: 0.0,
            enable_edge: 0.0,
            disable_edge: 0.0,
            split_edge: 0.0,
            add_node: 0.0,
            split_node: 0.0,
            merge_node: 0.0,
            clone: 0.0,
        },
        ..EvolveConfig::default()
    };
    let (child, op) = mutate(&seed, &mut rng, &cfg, &mut innov);
    assert_eq!(op, MutationOp::AddRecurrentEdge);
    assert_eq!(child.edges.len(), seed.edges.len() + 1);
    child.validate().unwrap();
    assert!(child.edges.last().unwrap().recurrent_depth >= 1);
}

#[test]
fn split_edge_follows_the_split_contract() {
    let seed = seed_genome(&chans(&["a"]), &chans(&["y"]));
    let mut innov = InnovationTable::for_seed(&seed);
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let cfg = EvolveConfig {
        op_weights: OpWeights {
            split_edge: 1.0,
            add_edge: 0.0,
            add_recurrent_edge: 0.0,
            enable_edge: 0.0,
            disable_edge: 0.0,
            add_node: 0.0,
            split_node: 0.0,
            merge_node: 0.0,
            clone: 0.0,
        },
        ..EvolveConfig::default()
    };
    let (child, op) = mutate(&seed, &mut rng, &cfg, &mut innov);
    assert_eq!(op, MutationOp::SplitEdge);
    child.validate().unwrap();
    assert_eq!(child.nodes.len(), 3);
    assert!(!child.edges[0].enabled, "original edge should be disabled");
    let enabled: Vec<&EdgeGene> = child.edges.iter().filter(|e| e.enabled).collect();
    assert_eq!(enabled.len(), 2);
    assert_eq!(enabled[0].weight, 1.0);
    assert_eq!(enabled[1].weight, seed.edges[0].weight);
}

#[test]
fn mutation_sweep_never_produces_invalid_children() {
    let seed = seed_genome(&chans(&["a", "b"]), &chans(&["y", "z"]));
    let mut innov = InnovationTable::for_seed(&seed);
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let cfg = EvolveConfig::default();

    // grow a moderately sized genome, validating along the way
    let mut g = seed.clone();
    for step in 0..200 {
        let (child, op) = mutate(&g, &mut rng, &cfg, &mut innov);
        child
            .validate()
            .unwrap_or_else(|e| panic!("step {step} ({op:?}): {e}"));
        g = child;
    }
    // then hammer one-off mutations from the grown genome
    for step in 0..10_000 {
        let (child, op) = mutate(&g, &mut rng, &cfg, &mut innov);
        child
            .validate()
            .unwrap_or_else(|e| panic!("sweep {step} ({op:?}): {e}"));
    }
}

#[test]
fn crossover_of_identical_parents_is_identity() {
    let mut g = seed_genome(&chans(&["a", "b"]), &chans(&["y"]));
    g.fitness = Some(0.5);
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let child = crossover(&g, &g, &mut rng).unwrap();
    assert_eq!(child.nodes, g.nodes);
    assert_eq!(child.edges, g.edges);
}

#[test]
fn crossover_keeps_every_seed_edge() {
    let seed = seed_genome(&chans(&["a", "b"]), &chans(&["y"]));
    let mut innov = InnovationTable::for_seed(&seed);
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let cfg = EvolveConfig::default();
    let mut a = seed.clone();
    let mut b = seed.clone();
    for _ in 0..20 {
        a = mutate(&a, &mut rng, &cfg, &mut innov).0;
        b = mutate(&b, &mut rng, &cfg, &mut innov).0;
    }
    a.fitness = Some(0.2);
    b.fitness = Some(0.3);
    let child = crossover(&a, &b, &mut rng).unwrap();
    child.validate().unwrap();
    for e in &seed.edges {
        assert!(
            child.edges.iter().any(|c| c.edge_id == e.edge_id),
            "seed edge {} missing",
            e.edge_id
        );
    }
}

#[test]
fn crossover_sweep_produces_valid_children() {
    let seed = seed_genome(&chans(&["a", "b"]), &chans(&["y", "z"]));
    let mut innov = InnovationTable::for_seed(&seed);
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let cfg = EvolveConfig::default();
    // a pool of diverged lineages
    let mut pool = Vec::new();
    for l in 0..20 {
        let mut g = seed.clone();
        for _ in 0..30 {
            g = mutate(&g, &mut rng, &cfg, &mut innov).0;
        }
        g.fitness = Some(0.1 * (l as f64 + 1.0));
        pool.push(g);
    }
    for step in 0..10_000 {
        let i = rng.random_range(0..pool.len());
        let j = rng.random_range(0..pool.len());
        let child = crossover(&pool[i], &pool[j], &mut rng).unwrap();
        child
            .validate()
            .unwrap_or_else(|e| panic!("pair {step} ({i}, {j}): {e}"));
    }
}

#[test]
fn crossover_rejects_incompatible_channels() {
    let a = seed_genome(&chans(&["a"]), &chans(&["y"]));
    let b = seed_genome(&chans(&["a", "b"]), &chans(&["y"]));
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    assert!(matches!(
        crossover(&a, &b, &mut rng),
        Err(EvolveError::IncompatiblePair)
    ));
}

#[test]
fn single_evaluation_returns_trained_seed() {
    let (train, test) = small_windows(200, 11);
    let (best, log) = evolve(&quick_config(1), &train, &test).unwrap();
    assert_eq!(log.evaluations(), 1);
    assert_eq!(log.entries[0].op, "seed");
    assert!(best.fitness.is_some());
    // structurally still the seed
    assert_eq!(best.nodes.len(), 4);
    assert_eq!(best.edges.len(), 4);
}

#[test]
fn best_fitness_never_worse_than_trained_seed() {
    let (train, test) = small_windows(300, 12);
    let (best, log) = evolve(&quick_config(40), &train, &test).unwrap();
    let seed_fitness = log.entries.iter().find(|e| e.op == "seed").unwrap().fitness;
    let best_fitness = best.fitness.unwrap();
    assert!(
        best_fitness <= seed_fitness,
        "{best_fitness} vs seed {seed_fitness}"
    );
    // returned best matches the minimum over the log
    let log_min = log
        .entries
        .iter()
        .filter(|e| e.op != "migrate")
        .map(|e| e.fitness)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best_fitness, log_min);
}

#[test]
fn every_logged_genome_is_valid_and_capacity_respected() {
    let (train, test) = small_windows(260, 13);
    let cfg = quick_config(50);
    let (_, log) = evolve(&cfg, &train, &test).unwrap();
    assert_eq!(log.evaluations(), 50);
    assert!(log.entries.iter().all(|e| e.nodes >= 4));
}

#[test]
fn island_isolation_between_migrations() {
    let (train, test) = small_windows(260, 14);
    let (_, log) = evolve(&quick_config(60), &train, &test).unwrap();
    let mut island_of: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    for e in &log.entries {
        for p in &e.parent_ids {
            if e.op != "migrate" {
                assert_eq!(
                    island_of.get(p),
                    Some(&e.island),
                    "genome {} crossed islands without migration (eval {})",
                    p,
                    e.eval
                );
            }
        }
        island_of.insert(e.genome_id, e.island);
    }
    // migrations actually happen with the quick config
    assert!(log.entries.iter().any(|e| e.op == "migrate"));
}

#[test]
fn single_worker_runs_are_bit_reproducible() {
    let (train, test) = small_windows(260, 15);
    let cfg = quick_config(30);
    let (best_a, log_a) = evolve(&cfg, &train, &test).unwrap();
    let (best_b, log_b) = evolve(&cfg, &train, &test).unwrap();
    assert_eq!(log_a.to_csv(), log_b.to_csv());
    assert_eq!(best_a.to_json(), best_b.to_json());
}

#[test]
fn multi_worker_run_completes_with_valid_log() {
    let (train, test) = small_windows(260, 16);
    let cfg = EvolveConfig {
        workers: 3,
        ..quick_config(25)
    };
    let (best, log) = evolve(&cfg, &train, &test).unwrap();
    assert_eq!(log.evaluations(), 25);
    assert!(best.fitness.unwrap().is_finite());
    best.validate().unwrap();
}

#[test]
fn log_csv_shape() {
    let (train, test) = small_windows(200, 17);
    let (_, log) = evolve(&quick_config(5), &train, &test).unwrap();
    let csv = log.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "eval,genome_id,parent_ids,op,fitness,nodes,weights"
    );
    assert_eq!(lines.filter(|l| !l.is_empty()).count(), log.entries.len());
}

#[test]
fn invalid_configs_are_rejected() {
    let (train, test) = small_windows(200, 18);
    let bad = EvolveConfig {
        mutation_rate: 0.5,
        crossover_rate: 0.2,
        ..EvolveConfig::default()
    };
    assert!(matches!(
        evolve(&bad, &train, &test),
        Err(EvolveError::InvalidConfig(_))
    ));
    let bad = EvolveConfig {
        islands: 0,
        ..EvolveConfig::default()
    };
    assert!(matches!(
        evolve(&bad, &train, &test),
        Err(EvolveError::InvalidConfig(_))
    ));
}
