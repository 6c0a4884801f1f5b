//! Spurious-Motif graphs: one base shape plus one label-determining motif,
//! joined by a single bridging edge. The base type agrees with the motif
//! class with probability `b` and is otherwise uniform over the other two
//! base types.

use rand::Rng as _;

use super::Dataset;
use crate::autodiff::{rng_from_seed, Rng};
use crate::error::{Error, Result};
use crate::graph::{BondEdge, FeatureScheme, MolecularGraph, NodeKind};

pub const BASES: [&str; 3] = ["tree", "ladder", "wheel"];
pub const MOTIFS: [&str; 3] = ["cycle", "house", "crane"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotifSpec {
    /// Base-motif agreement probability in `[1/3, 1]`.
    pub b: f64,
    pub min_base: usize,
    pub max_base: usize,
}

impl MotifSpec {
    pub fn new(b: f64) -> Self {
        MotifSpec {
            b,
            min_base: 8,
            max_base: 15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1.0 / 3.0 - 1e-12..=1.0).contains(&self.b) {
            return Err(Error::arg(format!("b = {} outside [1/3, 1]", self.b)));
        }
        if self.min_base < 4 || self.min_base > self.max_base {
            return Err(Error::arg(format!(
                "base size range {}..={} invalid (minimum 4)",
                self.min_base, self.max_base
            )));
        }
        Ok(())
    }
}

/// Edges of motif `class` over local nodes `0..5`.
pub fn motif_edges(class: usize) -> &'static [(usize, usize)] {
    match class {
        0 => &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)],
        // Square 0-1-2-3 with roof apex 4 over edge (0, 1).
        1 => &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)],
        // Two triangles sharing node 2.
        2 => &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2)],
        _ => panic!("motif class {class} out of range"),
    }
}

/// Base graph of `kind` with about `n` nodes. Ladders round `n` down to an
/// even count; wheels have a hub plus an `n - 1` rim.
pub fn base_edges(kind: usize, n: usize, rng: &mut Rng) -> (usize, Vec<(usize, usize)>) {
    match kind {
        0 => {
            let edges = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
            (n, edges)
        }
        1 => {
            let rungs = n / 2;
            let mut edges = Vec::new();
            for i in 0..rungs {
                edges.push((i, i + rungs));
                if i + 1 < rungs {
                    edges.push((i, i + 1));
                    edges.push((i + rungs, i + rungs + 1));
                }
            }
            (2 * rungs, edges)
        }
        2 => {
            let rim = n - 1;
            let mut edges = Vec::new();
            for i in 1..=rim {
                edges.push((0, i));
                edges.push((i, if i == rim { 1 } else { i + 1 }));
            }
            (n, edges)
        }
        _ => panic!("base kind {kind} out of range"),
    }
}

fn graph_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0xA24B_AED4_963E_E407)
}

fn one_graph(spec: &MotifSpec, rng: &mut Rng) -> Result<MolecularGraph> {
    let motif = rng.random_range(0..3usize);
    let base = if rng.random::<f64>() < spec.b {
        motif
    } else {
        let other = rng.random_range(0..2usize);
        if other >= motif {
            other + 1
        } else {
            other
        }
    };
    let size = rng.random_range(spec.min_base..=spec.max_base);
    let (nb, mut edges) = base_edges(base, size, rng);
    edges.extend(motif_edges(motif).iter().map(|&(u, v)| (u + nb, v + nb)));
    edges.push((rng.random_range(0..nb), nb + rng.random_range(0..5)));
    let mut g = MolecularGraph::new(
        vec![NodeKind::Feature(0); nb + 5],
        edges.into_iter().map(|(u, v)| BondEdge::new(u, v, 1)).collect(),
        Some(motif),
        FeatureScheme::Constant,
    )?;
    g.meta.insert("dataset".into(), "spurious-motif".into());
    g.meta.insert("base_id".into(), base.to_string());
    g.meta.insert("base".into(), BASES[base].into());
    g.meta.insert("motif_id".into(), motif.to_string());
    g.meta.insert("motif".into(), MOTIFS[motif].into());
    g.meta.insert("motif_nodes".into(), format!("{nb}..{}", nb + 5));
    Ok(g)
}

/// `n` graphs; graph `i` depends only on `(seed, i)`.
pub fn generate_spurious_motif(n: usize, spec: &MotifSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::arg("need n >= 1 graphs"));
    }
    let graphs = (0..n)
        .map(|i| one_graph(spec, &mut rng_from_seed(graph_seed(seed, i))))
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset::new("spurious-motif", graphs);
    ds.num_classes = 3;
    Ok(ds)
}

/// De-correlated set with `b = 1/3`.
pub fn balanced_test_set(n: usize, seed: u64) -> Result<Dataset> {
    generate_spurious_motif(n, &MotifSpec::new(1.0 / 3.0), seed)
}

/// Motif node range recorded in a generated graph's metadata.
pub fn motif_range(g: &MolecularGraph) -> Option<(usize, usize)> {
    let (lo, hi) = g.meta.get("motif_nodes")?.split_once("..")?;
    Some((lo.parse().ok()?, hi.parse().ok()?))
}

/// Fraction of graphs whose base type equals the motif class.
pub fn agreement_fraction(ds: &Dataset) -> f64 {
    let agree = ds
        .graphs
        .iter()
        .filter(|g| g.meta.get("base_id") == g.meta.get("motif_id"))
        .count();
    agree as f64 / ds.len().max(1) as f64
}
