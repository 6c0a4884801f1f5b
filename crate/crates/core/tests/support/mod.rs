#![allow(dead_code)]

pub mod gradcheck;

use cauemo::datasets::{balanced_test_set, generate_spurious_motif, Dataset, MotifSpec, SplitData};
use cauemo::trainer::ExperimentConfig;

/// Small, fast configuration for smoke-level training runs.
pub fn tiny_config(epochs: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.gnn.hidden_dim = 16;
    cfg.gnn.layers = 2;
    cfg.sci.heads = 2;
    cfg.batch_size = 16;
    cfg
}

/// Spurious-Motif train/val at bias `b` plus a balanced test set.
pub fn motif_split(n_train: usize, n_val: usize, n_test: usize, b: f64, seed: u64) -> SplitData {
    let spec = MotifSpec::new(b);
    SplitData {
        train: generate_spurious_motif(n_train, &spec, seed).unwrap(),
        val: if n_val == 0 {
            Dataset::new("spurious-motif", Vec::new())
        } else {
            generate_spurious_motif(n_val, &spec, seed + 1).unwrap()
        },
        test: balanced_test_set(n_test, seed + 2).unwrap(),
    }
}
