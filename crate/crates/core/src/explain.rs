//! Edge-level explanations: environment probabilities per edge, invariant
//! rankings, motif recall on synthetic data and DOT export.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::datasets::motif::motif_range;
use crate::datasets::Dataset;
use crate::egib::{rank_invariant_edges, EdgeScore};
use crate::error::Result;
use crate::graph::GraphBatch;
use crate::model::Model;

/// Evaluation-mode `p_uv` for every edge of every graph, in dataset order.
/// Graph ids are dataset indices.
pub fn score_dataset(model: &Model, ds: &Dataset, batch_size: usize) -> Result<Vec<EdgeScore>> {
    let mut out = Vec::new();
    let mut first = 0;
    for chunk in ds.graphs.chunks(batch_size.max(1)) {
        let batch = GraphBatch::new(chunk.iter().collect())?;
        out.extend(model.edge_scores(&batch, first)?);
        first += chunk.len();
    }
    Ok(out)
}

/// Splits scores by graph id; graphs without edges get an empty slice.
pub fn per_graph(scores: &[EdgeScore], num_graphs: usize) -> Vec<Vec<EdgeScore>> {
    let mut out = vec![Vec::new(); num_graphs];
    for s in scores {
        out[s.graph].push(*s);
    }
    out
}

/// Edges with both endpoints inside the recorded motif node range.
pub fn motif_edge_set(g: &crate::graph::MolecularGraph) -> Option<HashSet<(usize, usize)>> {
    let (lo, hi) = motif_range(g)?;
    Some(
        g.edges()
            .iter()
            .filter(|e| (lo..hi).contains(&e.u) && (lo..hi).contains(&e.v))
            .map(|e| (e.u.min(e.v), e.u.max(e.v)))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotifRecall {
    /// Mean over graphs of the motif-edge fraction among the top-|motif|
    /// edges ranked by `1 - p`.
    pub model: f64,
    /// Expected value of the same quantity under a uniformly random ranking.
    pub random: f64,
    pub graphs: usize,
}

/// Recall of true motif edges. Graphs without motif metadata are skipped;
/// returns `None` when none carry it.
pub fn motif_recall(ds: &Dataset, scores: &[EdgeScore]) -> Option<MotifRecall> {
    let grouped = per_graph(scores, ds.len());
    let (mut model, mut random, mut n) = (0.0, 0.0, 0usize);
    for (g, edges) in ds.graphs.iter().zip(&grouped) {
        let Some(motif) = motif_edge_set(g) else {
            continue;
        };
        if motif.is_empty() || edges.is_empty() {
            continue;
        }
        let k = motif.len();
        model += expected_hits(&rank_invariant_edges(edges), &motif, k) / k as f64;
        random += k as f64 / edges.len() as f64;
        n += 1;
    }
    (n > 0).then(|| MotifRecall {
        model: model / n as f64,
        random: random / n as f64,
        graphs: n,
    })
}

/// Motif edges among the top `k` of `ranked`, averaged over uniform
/// tie-breaking: the tie group straddling the cutoff contributes its motif
/// share of the remaining slots.
fn expected_hits(ranked: &[EdgeScore], motif: &HashSet<(usize, usize)>, k: usize) -> f64 {
    let is_motif = |s: &EdgeScore| motif.contains(&(s.u.min(s.v), s.u.max(s.v)));
    let mut hits = 0.0;
    let mut i = 0;
    while i < ranked.len() && i < k {
        let j = i + ranked[i..].iter().take_while(|s| s.p == ranked[i].p).count();
        let inside = ranked[i..j].iter().filter(|s| is_motif(s)).count() as f64;
        let slots = (k - i).min(j - i);
        hits += inside * slots as f64 / (j - i) as f64;
        i = j;
    }
    hits
}

/// Per-graph top-`k` invariant edges as CSV rows
/// `graph_id,rank,u,v,invariance` where invariance is `1 - p_uv`.
pub fn invariant_csv(scores: &[EdgeScore], num_graphs: usize, k: usize) -> String {
    let mut s = String::from("graph_id,rank,u,v,invariance\n");
    for edges in per_graph(scores, num_graphs) {
        for (rank, e) in rank_invariant_edges(&edges).iter().take(k).enumerate() {
            let _ = writeln!(s, "{},{},{},{},{:.6}", e.graph, rank + 1, e.u, e.v, 1.0 - e.p);
        }
    }
    s
}

/// One undirected DOT graph with a cluster per input graph. The `k` most
/// invariant edges of each graph are drawn red and thick; the rest grey
/// with width growing in `1 - p`.
pub fn to_dot(ds: &Dataset, scores: &[EdgeScore], k: usize, max_graphs: usize) -> String {
    let grouped = per_graph(scores, ds.len());
    let mut s = String::from("graph explanation {\n  node [shape=circle, fontsize=10];\n");
    for (gi, (g, edges)) in ds.graphs.iter().zip(&grouped).enumerate().take(max_graphs) {
        let _ = writeln!(s, "  subgraph cluster_{gi} {{");
        let label = g.label.map_or("?".to_string(), |l| l.to_string());
        let _ = writeln!(s, "    label=\"graph {gi} (label {label})\";");
        for (i, node) in g.nodes().iter().enumerate() {
            let _ = writeln!(s, "    g{gi}_{i} [label=\"{}\"];", node.kind);
        }
        let top: HashSet<(usize, usize)> = rank_invariant_edges(edges)
            .iter()
            .take(k)
            .map(|e| (e.u, e.v))
            .collect();
        for e in edges {
            let style = if top.contains(&(e.u, e.v)) {
                "color=red, penwidth=3".to_string()
            } else {
                format!("color=gray, penwidth={:.2}", 0.5 + 1.5 * (1.0 - e.p))
            };
            let _ = writeln!(s, "    g{gi}_{} -- g{gi}_{} [{style}, tooltip=\"p={:.3}\"];", e.u, e.v, e.p);
        }
        s.push_str("  }\n");
    }
    s.push_str("}\n");
    s
}
