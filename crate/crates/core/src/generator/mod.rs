//! Knowledge-guided environment growth.
//!
//! Labeled molecules (or functional-group fragments) are extended with
//! environment fragments one bond at a time. A bond is only admitted when
//! both endpoints keep their explicit bond-order sum within the element's
//! valence; the rest of each atom's valence is implicit hydrogen.

pub mod library;
pub mod smiles;
pub mod valence;

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::autodiff::{rng_from_seed, Rng};
use crate::error::{Error, Result};
use crate::graph::{BondEdge, MolecularGraph, NodeKind};

pub use library::{Fragment, FragmentLibrary, FragmentRole};
pub use smiles::parse_smiles_subset;
pub use valence::{is_valence_valid, spare_valence, valence_check, valence_violations, ValenceTable};

/// Disjoint union of `base` and `env` joined by one bond
/// `(base_node, env_node + |base|)`, with the valence rule enforced on both
/// endpoints. The label and metadata come from `base`.
pub fn attach(
    base: &MolecularGraph,
    env: &MolecularGraph,
    base_node: usize,
    env_node: usize,
    order: u8,
) -> Result<MolecularGraph> {
    if env.num_nodes() == 0 {
        return Ok(base.clone());
    }
    check_index(base, base_node, "base")?;
    check_index(env, env_node, "environment")?;
    if !valence_check(base, base_node, order as u32)? {
        return Err(Error::Chemistry {
            node: base_node,
            message: format!("base atom cannot take a bond of order {order}"),
        });
    }
    if !valence_check(env, env_node, order as u32)? {
        return Err(Error::Chemistry {
            node: base.num_nodes() + env_node,
            message: format!("environment atom cannot take a bond of order {order}"),
        });
    }
    attach_unchecked(base, env, base_node, env_node, order)
}

fn check_index(g: &MolecularGraph, i: usize, which: &str) -> Result<()> {
    if i >= g.num_nodes() {
        return Err(Error::arg(format!(
            "{which} node {i} out of range for {} nodes",
            g.num_nodes()
        )));
    }
    Ok(())
}

/// [`attach`] without valence checks; used for the random-growth control.
pub fn attach_unchecked(
    base: &MolecularGraph,
    env: &MolecularGraph,
    base_node: usize,
    env_node: usize,
    order: u8,
) -> Result<MolecularGraph> {
    if env.num_nodes() == 0 {
        return Ok(base.clone());
    }
    check_index(base, base_node, "base")?;
    check_index(env, env_node, "environment")?;
    let offset = base.num_nodes();
    let kinds: Vec<NodeKind> = base
        .nodes()
        .iter()
        .chain(env.nodes())
        .map(|n| n.kind)
        .collect();
    let mut edges: Vec<BondEdge> = base.edges().to_vec();
    edges.extend(
        env.edges()
            .iter()
            .map(|e| BondEdge::new(e.u + offset, e.v + offset, e.order)),
    );
    edges.push(BondEdge::new(base_node, env_node + offset, order));
    let mut g = MolecularGraph::new(kinds, edges, base.label, base.scheme())?;
    g.meta = base.meta.clone();
    g.meta.insert("provenance".into(), "generated".into());
    Ok(g)
}

/// One admitted growth step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrowthStep {
    pub env_fragment: usize,
    pub base_node: usize,
    pub env_node: usize,
    pub order: u8,
}

impl fmt::Display for GrowthStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "env={} base_node={} env_node={} order={}",
            self.env_fragment, self.base_node, self.env_node, self.order
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthPlan {
    pub seed: u64,
    pub steps: Vec<GrowthStep>,
}

#[derive(Debug, Clone)]
pub struct GrowthOutput {
    pub graphs: Vec<MolecularGraph>,
    pub plan: GrowthPlan,
    /// Steps skipped for lack of a valence-valid attachment pair.
    pub warnings: Vec<String>,
}

/// Grows `k` graphs from `base`: graph `t` joins `base` with the `t`-th
/// smallest environment fragment (wrapping around the ranked list) at an
/// attachment pair drawn uniformly from the valence-valid pairs.
pub fn grow(base: &MolecularGraph, library: &FragmentLibrary, k: usize, seed: u64) -> Result<GrowthOutput> {
    if k == 0 {
        return Err(Error::arg("growth needs k >= 1"));
    }
    let ranked = library.rank_environments()?;
    let mut rng = rng_from_seed(seed);
    let mut out = GrowthOutput {
        graphs: Vec::with_capacity(k),
        plan: GrowthPlan {
            seed,
            steps: Vec::new(),
        },
        warnings: Vec::new(),
    };
    let base_sites: Vec<usize> = (0..base.num_nodes())
        .filter(|&i| valence_check(base, i, 1).unwrap_or(false))
        .collect();
    for t in 0..k {
        let env_id = ranked[t % ranked.len()];
        let env = &library.environment[env_id];
        let mut pairs = Vec::new();
        for &b in &base_sites {
            for &e in &env.attachments {
                if valence_check(&env.graph, e, 1)? {
                    pairs.push((b, e));
                }
            }
        }
        let Some(&(base_node, env_node)) = pairs.choose(&mut rng) else {
            let msg = format!("step {t}: no valid attachment for environment fragment {env_id}");
            warn!("{msg}");
            out.warnings.push(msg);
            continue;
        };
        let step = GrowthStep {
            env_fragment: env_id,
            base_node,
            env_node,
            order: 1,
        };
        let mut g = attach(base, &env.graph, base_node, env_node, step.order)?;
        g.meta.insert("growth".into(), step.to_string());
        out.plan.steps.push(step);
        out.graphs.push(g);
    }
    if !out.warnings.is_empty() {
        let note = out.warnings.join("; ");
        for g in &mut out.graphs {
            g.meta.insert("growth_warnings".into(), note.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrowthMode {
    /// Valence-checked growth over ranked environment fragments.
    Knowledge,
    /// Uniformly random fragments, sites and bond orders; no checks.
    Random,
    #[default]
    Off,
}

impl fmt::Display for GrowthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthMode::Knowledge => "knowledge",
            GrowthMode::Random => "random",
            GrowthMode::Off => "off",
        })
    }
}

impl FromStr for GrowthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knowledge" => Ok(GrowthMode::Knowledge),
            "random" => Ok(GrowthMode::Random),
            "off" => Ok(GrowthMode::Off),
            _ => Err(Error::arg(format!(
                "unknown growth mode `{s}` (knowledge|random|off)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AugmentSummary {
    pub generated: usize,
    /// Generated graphs containing at least one over-valent atom.
    pub invalid_graphs: usize,
    pub warnings: Vec<String>,
}

/// Seed for per-graph generation tasks.
fn task_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64)
        .rotate_left(17)
}

/// Input graphs followed by up to `per_graph` generated graphs for each
/// labeled molecule. Generated graphs inherit the label of the graph they
/// were grown from.
pub fn generate_augmented_dataset(
    graphs: &[MolecularGraph],
    library: &FragmentLibrary,
    per_graph: usize,
    mode: GrowthMode,
    seed: u64,
) -> Result<(Vec<MolecularGraph>, AugmentSummary)> {
    let mut out = graphs.to_vec();
    let mut summary = AugmentSummary::default();
    if mode == GrowthMode::Off || per_graph == 0 {
        return Ok((out, summary));
    }
    for (idx, g) in graphs.iter().enumerate() {
        if g.nodes().iter().any(|n| n.element().is_none()) {
            summary
                .warnings
                .push(format!("graph {idx}: non-atom nodes, growth skipped"));
            continue;
        }
        let seed = task_seed(seed, idx);
        let new = match mode {
            GrowthMode::Knowledge => {
                let grown = grow(g, library, per_graph, seed)?;
                summary
                    .warnings
                    .extend(grown.warnings.into_iter().map(|w| format!("graph {idx}: {w}")));
                grown.graphs
            }
            GrowthMode::Random => random_growth(g, library, per_graph, seed)?,
            GrowthMode::Off => unreachable!(),
        };
        for g in new {
            if !is_valence_valid(&g)? {
                summary.invalid_graphs += 1;
            }
            summary.generated += 1;
            out.push(g);
        }
    }
    Ok((out, summary))
}

/// Random control: uniform fragment, uniform sites, uniform order in 1..=3.
pub fn random_growth(
    base: &MolecularGraph,
    library: &FragmentLibrary,
    count: usize,
    seed: u64,
) -> Result<Vec<MolecularGraph>> {
    if library.environment.is_empty() {
        return Err(Error::arg("library has no environment fragments"));
    }
    if base.num_nodes() == 0 {
        return Ok(Vec::new());
    }
    let mut rng: Rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let env = &library.environment[rng.random_range(0..library.environment.len())].graph;
        let base_node = rng.random_range(0..base.num_nodes());
        let env_node = rng.random_range(0..env.num_nodes());
        let order = rng.random_range(1..=3u8);
        let mut g = attach_unchecked(base, env, base_node, env_node, order)?;
        g.meta.insert("growth".into(), "random".into());
        out.push(g);
    }
    Ok(out)
}
