//! In-memory molecular graph model and batching.
//!
//! Hydrogens are implicit: only heavy atoms are stored and any valence not
//! used by explicit bonds is assumed to be filled by hydrogens.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::valence::ValenceTable;

/// Elements understood by the featurizer and the valence table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    H,
    C,
    N,
    O,
    F,
    Cl,
    Br,
    I,
    S,
    P,
    B,
}

impl Element {
    pub const ALL: [Element; 11] = [
        Element::H,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
        Element::S,
        Element::P,
        Element::B,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
            Element::S => "S",
            Element::P => "P",
            Element::B => "B",
        }
    }

    pub fn index(self) -> usize {
        Element::ALL.iter().position(|&e| e == self).unwrap()
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Element {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Element::ALL
            .iter()
            .copied()
            .find(|e| e.symbol() == s)
            .ok_or_else(|| Error::UnknownElement(s.to_string()))
    }
}

/// What a node stands for: a chemical element, or an opaque categorical id
/// (synthetic graphs, TU node labels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Atom(Element),
    Feature(u32),
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Atom(e) => write!(f, "{e}"),
            NodeKind::Feature(id) => write!(f, "#{id}"),
        }
    }
}

impl FromStr for NodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix('#') {
            Some(id) => id
                .parse()
                .map(NodeKind::Feature)
                .map_err(|_| Error::arg(format!("bad feature id `{s}`"))),
            None => s.parse().map(NodeKind::Atom),
        }
    }
}

/// Node featurization. Every scheme appends the node degree divided by
/// [`DEGREE_SCALE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureScheme {
    /// One-hot over [`Element::ALL`].
    ElementOneHot,
    /// A single constant 1.
    Constant,
    /// One-hot over `num_labels` categorical ids.
    LabelOneHot { num_labels: usize },
}

pub const DEGREE_SCALE: f64 = 4.0;

impl FeatureScheme {
    pub fn dim(self) -> usize {
        match self {
            FeatureScheme::ElementOneHot => Element::ALL.len() + 1,
            FeatureScheme::Constant => 2,
            FeatureScheme::LabelOneHot { num_labels } => num_labels + 1,
        }
    }

    fn encode(self, kind: NodeKind, degree: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        match (self, kind) {
            (FeatureScheme::ElementOneHot, NodeKind::Atom(e)) => out[e.index()] = 1.0,
            (FeatureScheme::Constant, _) => out[0] = 1.0,
            (FeatureScheme::LabelOneHot { num_labels }, NodeKind::Feature(id)) => {
                if id as usize >= num_labels {
                    return Err(Error::arg(format!(
                        "node label {id} outside one-hot range {num_labels}"
                    )));
                }
                out[id as usize] = 1.0;
            }
            (scheme, kind) => {
                return Err(Error::arg(format!(
                    "feature scheme {scheme} cannot encode node {kind}"
                )))
            }
        }
        *out.last_mut().unwrap() = degree as f64 / DEGREE_SCALE;
        Ok(out)
    }
}

impl fmt::Display for FeatureScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureScheme::ElementOneHot => f.write_str("element-onehot"),
            FeatureScheme::Constant => f.write_str("constant"),
            FeatureScheme::LabelOneHot { num_labels } => write!(f, "label-onehot:{num_labels}"),
        }
    }
}

impl FromStr for FeatureScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "element-onehot" => Ok(FeatureScheme::ElementOneHot),
            "constant" => Ok(FeatureScheme::Constant),
            _ => s
                .strip_prefix("label-onehot:")
                .and_then(|n| n.parse().ok())
                .map(|num_labels| FeatureScheme::LabelOneHot { num_labels })
                .ok_or_else(|| Error::arg(format!("unknown feature scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomNode {
    pub kind: NodeKind,
    pub features: Vec<f64>,
}

impl AtomNode {
    pub fn element(&self) -> Option<Element> {
        match self.kind {
            NodeKind::Atom(e) => Some(e),
            NodeKind::Feature(_) => None,
        }
    }

    /// Maximum bond-order sum; `None` for non-atom nodes.
    pub fn valence_capacity(&self) -> Option<u32> {
        self.element().map(|e| ValenceTable::standard().capacity(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BondEdge {
    pub u: usize,
    pub v: usize,
    pub order: u8,
}

impl BondEdge {
    pub fn new(u: usize, v: usize, order: u8) -> Self {
        BondEdge { u, v, order }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    nodes: Vec<AtomNode>,
    edges: Vec<BondEdge>,
    pub label: Option<usize>,
    pub meta: BTreeMap<String, String>,
    scheme: FeatureScheme,
}

impl MolecularGraph {
    /// Validates the graph invariants, canonicalizes every edge to `u < v`
    /// and computes node features under `scheme`.
    pub fn new(
        kinds: Vec<NodeKind>,
        edges: Vec<BondEdge>,
        label: Option<usize>,
        scheme: FeatureScheme,
    ) -> Result<Self> {
        let n = kinds.len();
        let mut seen = HashSet::with_capacity(edges.len());
        let mut canonical = Vec::with_capacity(edges.len());
        for e in edges {
            if e.u >= n || e.v >= n {
                return Err(Error::arg(format!(
                    "edge ({}, {}) out of range for {n} nodes",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(Error::arg(format!("self-loop on node {}", e.u)));
            }
            if !(1..=3).contains(&e.order) {
                return Err(Error::arg(format!("bond order {} not in 1..=3", e.order)));
            }
            let c = BondEdge::new(e.u.min(e.v), e.u.max(e.v), e.order);
            if !seen.insert((c.u, c.v)) {
                return Err(Error::arg(format!("duplicate edge ({}, {})", c.u, c.v)));
            }
            canonical.push(c);
        }
        let mut graph = MolecularGraph {
            nodes: kinds
                .into_iter()
                .map(|kind| AtomNode {
                    kind,
                    features: Vec::new(),
                })
                .collect(),
            edges: canonical,
            label,
            meta: BTreeMap::new(),
            scheme,
        };
        graph.featurize(scheme)?;
        Ok(graph)
    }

    pub fn from_elements(
        elements: &[Element],
        edges: &[(usize, usize, u8)],
        label: Option<usize>,
    ) -> Result<Self> {
        MolecularGraph::new(
            elements.iter().map(|&e| NodeKind::Atom(e)).collect(),
            edges.iter().map(|&(u, v, o)| BondEdge::new(u, v, o)).collect(),
            label,
            FeatureScheme::ElementOneHot,
        )
    }

    /// Recomputes node features; the degree term depends on the edge set.
    pub fn featurize(&mut self, scheme: FeatureScheme) -> Result<()> {
        let degrees = self.neighbor_counts();
        for (node, deg) in self.nodes.iter_mut().zip(degrees) {
            node.features = scheme.encode(node.kind, deg)?;
        }
        self.scheme = scheme;
        Ok(())
    }

    pub fn nodes(&self) -> &[AtomNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[BondEdge] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn scheme(&self) -> FeatureScheme {
        self.scheme
    }

    pub fn feature_dim(&self) -> usize {
        self.scheme.dim()
    }

    fn neighbor_counts(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        deg
    }

    /// Dense symmetric adjacency with bond orders as entries.
    pub fn build_adjacency(&self) -> Vec<Vec<u32>> {
        let n = self.nodes.len();
        let mut a = vec![vec![0u32; n]; n];
        for e in &self.edges {
            a[e.u][e.v] = e.order as u32;
            a[e.v][e.u] = e.order as u32;
        }
        a
    }

    /// Sum of bond orders incident to node `i`.
    pub fn node_degree_sum(&self, i: usize) -> Result<u32> {
        if i >= self.nodes.len() {
            return Err(Error::arg(format!(
                "node {i} out of range for {} nodes",
                self.nodes.len()
            )));
        }
        Ok(self
            .edges
            .iter()
            .filter(|e| e.u == i || e.v == i)
            .map(|e| e.order as u32)
            .sum())
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |e| {
            if e.u == i {
                Some(e.v)
            } else if e.v == i {
                Some(e.u)
            } else {
                None
            }
        })
    }

    /// Applies a node permutation: node `i` moves to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.nodes.len();
        if perm.len() != n {
            return Err(Error::arg("permutation length mismatch"));
        }
        let mut kinds = vec![NodeKind::Feature(0); n];
        for (i, node) in self.nodes.iter().enumerate() {
            kinds[perm[i]] = node.kind;
        }
        let edges = self
            .edges
            .iter()
            .map(|e| BondEdge::new(perm[e.u], perm[e.v], e.order))
            .collect();
        let mut g = MolecularGraph::new(kinds, edges, self.label, self.scheme)?;
        g.meta = self.meta.clone();
        Ok(g)
    }
}

/// An undirected edge in a batch, in global node indices with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackedEdge {
    pub u: usize,
    pub v: usize,
    pub order: u8,
}

/// Several graphs packed into one disjoint union.
#[derive(Debug, Clone)]
pub struct GraphBatch<'a> {
    pub graphs: Vec<&'a MolecularGraph>,
    /// `node_offsets[k]` is the first global node index of graph `k`.
    pub node_offsets: Vec<usize>,
    /// `edge_offsets[k]` is the first packed edge of graph `k`; one extra
    /// trailing entry holds the total.
    pub edge_offsets: Vec<usize>,
    pub edges: Vec<PackedEdge>,
    num_nodes: usize,
}

impl<'a> GraphBatch<'a> {
    pub fn new(graphs: Vec<&'a MolecularGraph>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::arg("cannot batch an empty graph sequence"));
        }
        let dim = graphs[0].feature_dim();
        let mut node_offsets = Vec::with_capacity(graphs.len());
        let mut edge_offsets = Vec::with_capacity(graphs.len() + 1);
        let mut edges = Vec::new();
        let mut offset = 0;
        for g in &graphs {
            if g.feature_dim() != dim {
                return Err(Error::shape(format!(
                    "feature width {} differs from {dim}",
                    g.feature_dim()
                )));
            }
            node_offsets.push(offset);
            edge_offsets.push(edges.len());
            edges.extend(g.edges().iter().map(|e| PackedEdge {
                u: e.u + offset,
                v: e.v + offset,
                order: e.order,
            }));
            offset += g.num_nodes();
        }
        edge_offsets.push(edges.len());
        Ok(GraphBatch {
            graphs,
            node_offsets,
            edge_offsets,
            edges,
            num_nodes: offset,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.graphs.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs[0].feature_dim()
    }

    /// Row-major `[num_nodes x feature_dim]` feature matrix.
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_nodes * self.feature_dim());
        for g in &self.graphs {
            for node in g.nodes() {
                out.extend_from_slice(&node.features);
            }
        }
        out
    }

    /// Graph labels; errors when any graph is unlabeled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.graphs
            .iter()
            .enumerate()
            .map(|(k, g)| {
                g.label
                    .ok_or_else(|| Error::arg(format!("graph {k} in batch has no label")))
            })
            .collect()
    }

    /// Per-graph node ranges, in the form consumed by readouts.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        self.graphs
            .iter()
            .zip(&self.node_offsets)
            .map(|(g, &o)| (o, o + g.num_nodes()))
            .collect()
    }

    pub fn edge_sources(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.u).collect()
    }

    pub fn edge_targets(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.v).collect()
    }

    /// Rebuilds each graph from the packed adjacency.
    pub fn unbatch(&self) -> Result<Vec<MolecularGraph>> {
        let mut out = Vec::with_capacity(self.graphs.len());
        for (k, g) in self.graphs.iter().enumerate() {
            let offset = self.node_offsets[k];
            let edges = self.edges[self.edge_offsets[k]..self.edge_offsets[k + 1]]
                .iter()
                .map(|e| BondEdge::new(e.u - offset, e.v - offset, e.order))
                .collect();
            let kinds = g.nodes().iter().map(|n| n.kind).collect();
            let mut rebuilt = MolecularGraph::new(kinds, edges, g.label, g.scheme())?;
            rebuilt.meta = g.meta.clone();
            out.push(rebuilt);
        }
        Ok(out)
    }
}

pub fn batch_graphs(graphs: &[MolecularGraph]) -> Result<GraphBatch<'_>> {
    GraphBatch::new(graphs.iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn carbons(n: usize, edges: &[(usize, usize, u8)]) -> MolecularGraph {
        MolecularGraph::from_elements(&vec![Element::C; n], edges, None).unwrap()
    }

    #[test]
    fn adjacency_small_cases() {
        assert!(carbons(0, &[]).build_adjacency().is_empty());
        assert_eq!(
            carbons(2, &[(0, 1, 2)]).build_adjacency(),
            vec![vec![0, 2], vec![2, 0]]
        );
        let tri = carbons(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]).build_adjacency();
        for (i, row) in tri.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                assert_eq!(a, u32::from(i != j));
            }
        }
    }

    #[test]
    fn degree_sums() {
        let g = carbons(4, &[(0, 1, 1), (0, 2, 2)]);
        assert_eq!(g.node_degree_sum(3).unwrap(), 0);
        assert_eq!(g.node_degree_sum(0).unwrap(), 3);
        let star = carbons(5, &[(0, 1, 1), (0, 2, 1), (0, 3, 1), (0, 4, 1)]);
        assert_eq!(star.node_degree_sum(0).unwrap(), 4);
        assert!(matches!(star.node_degree_sum(5), Err(Error::Argument(_))));
    }

    #[test]
    fn rejects_invalid_graphs() {
        assert!(MolecularGraph::from_elements(&[Element::C], &[(0, 0, 1)], None).is_err());
        assert!(MolecularGraph::from_elements(&[Element::C; 2], &[(0, 2, 1)], None).is_err());
        assert!(
            MolecularGraph::from_elements(&[Element::C; 2], &[(0, 1, 1), (1, 0, 1)], None)
                .is_err()
        );
    }

    #[test]
    fn batching_offsets() {
        let gs = vec![carbons(3, &[(0, 1, 1), (1, 2, 1)]), carbons(2, &[(0, 1, 1)])];
        let b = batch_graphs(&gs).unwrap();
        assert_eq!(b.node_offsets, vec![0, 3]);
        assert_eq!(b.num_nodes(), 5);
        assert_eq!(b.edges[2], PackedEdge { u: 3, v: 4, order: 1 });

        let one = vec![carbons(3, &[(0, 1, 1), (1, 2, 2)])];
        let b = batch_graphs(&one).unwrap();
        assert_eq!(b.node_offsets, vec![0]);
        assert_eq!(b.edges.len(), 2);
        assert_eq!(b.edges[1], PackedEdge { u: 1, v: 2, order: 2 });

        let singles: Vec<_> = (0..10).map(|_| carbons(1, &[])).collect();
        let b = batch_graphs(&singles).unwrap();
        assert_eq!(b.node_offsets, (0..10).collect::<Vec<_>>());
        assert!(b.edges.is_empty());

        assert!(batch_graphs(&[]).is_err());
    }

    #[test]
    fn features_follow_scheme() {
        let g = MolecularGraph::from_elements(&[Element::C, Element::O], &[(0, 1, 2)], None)
            .unwrap();
        let f = &g.nodes()[1].features;
        assert_eq!(f.len(), 12);
        assert_eq!(f[Element::O.index()], 1.0);
        assert_eq!(f[11], 0.25);
    }
}
