use crate::error::{Error, Result};
use crate::graph::{Element, MolecularGraph};

/// Maximum valence per element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceTable {
    entries: Vec<(Element, u32)>,
}

static STANDARD: &[(Element, u32)] = &[
    (Element::H, 1),
    (Element::C, 4),
    (Element::N, 3),
    (Element::O, 2),
    (Element::F, 1),
    (Element::Cl, 1),
    (Element::Br, 1),
    (Element::I, 1),
    (Element::S, 6),
    (Element::P, 5),
    (Element::B, 3),
];

impl ValenceTable {
    pub fn standard() -> &'static ValenceTable {
        static TABLE: std::sync::OnceLock<ValenceTable> = std::sync::OnceLock::new();
        TABLE.get_or_init(|| ValenceTable {
            entries: STANDARD.to_vec(),
        })
    }

    pub fn capacity(&self, element: Element) -> u32 {
        self.entries
            .iter()
            .find(|(e, _)| *e == element)
            .map(|&(_, c)| c)
            .expect("every element has a table entry")
    }
}

/// Remaining bond-order capacity of node `i` (filled by implicit hydrogens).
pub fn spare_valence(graph: &MolecularGraph, i: usize) -> Result<u32> {
    let used = graph.node_degree_sum(i)?;
    let cap = capacity_of(graph, i)?;
    Ok(cap.saturating_sub(used))
}

fn capacity_of(graph: &MolecularGraph, i: usize) -> Result<u32> {
    graph.nodes()[i]
        .valence_capacity()
        .ok_or_else(|| Error::UnknownElement(graph.nodes()[i].kind.to_string()))
}

/// Whether node `i` can take `added_order` more bond units without
/// exceeding its valence.
pub fn valence_check(graph: &MolecularGraph, i: usize, added_order: u32) -> Result<bool> {
    if added_order < 1 {
        return Err(Error::arg("added bond order must be >= 1"));
    }
    let used = graph.node_degree_sum(i)?;
    Ok(used + added_order <= capacity_of(graph, i)?)
}

/// Nodes whose explicit bond-order sum exceeds their valence.
pub fn valence_violations(graph: &MolecularGraph) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..graph.num_nodes() {
        if graph.node_degree_sum(i)? > capacity_of(graph, i)? {
            out.push(i);
        }
    }
    Ok(out)
}

pub fn is_valence_valid(graph: &MolecularGraph) -> Result<bool> {
    Ok(valence_violations(graph)?.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeKind;
    use crate::graph::{BondEdge, FeatureScheme};

    fn star(center: Element, orders: &[u8]) -> MolecularGraph {
        let mut elements = vec![center];
        let mut edges = Vec::new();
        for (k, &o) in orders.iter().enumerate() {
            elements.push(Element::C);
            edges.push((0, k + 1, o));
        }
        MolecularGraph::from_elements(&elements, &edges, None).unwrap()
    }

    #[test]
    fn table_boundaries() {
        assert!(valence_check(&star(Element::C, &[1, 1, 1]), 0, 1).unwrap());
        assert!(!valence_check(&star(Element::C, &[1, 1, 1, 1]), 0, 1).unwrap());
        assert!(!valence_check(&star(Element::O, &[2]), 0, 1).unwrap());
        assert_eq!(spare_valence(&star(Element::N, &[1]), 0).unwrap(), 2);
    }

    #[test]
    fn non_atom_nodes_are_table_errors() {
        let g = MolecularGraph::new(
            vec![NodeKind::Feature(0), NodeKind::Feature(1)],
            vec![BondEdge::new(0, 1, 1)],
            None,
            FeatureScheme::Constant,
        )
        .unwrap();
        assert!(matches!(valence_check(&g, 0, 1), Err(Error::UnknownElement(_))));
    }

    #[test]
    fn violations_are_listed() {
        let g = star(Element::O, &[2, 1]);
        assert_eq!(valence_violations(&g).unwrap(), vec![0]);
    }
}
