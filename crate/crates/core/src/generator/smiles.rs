//! Parser for a small SMILES subset:
//!
//! ```text
//! atom   := 'C' | 'N' | 'O' | 'S' | 'P' | 'F' | 'B' | 'Cl' | 'Br' | 'I'
//! bond   := '' | '=' | '#'
//! ring   := digit
//! branch := '(' bond chain ')'
//! chain  := atom (ring | branch | bond atom)*
//! ```
//!
//! Ring closures are single bonds. No aromatic atoms, charges, isotopes,
//! brackets, or stereo markers.

use std::collections::HashMap;

use super::valence::valence_violations;
use crate::error::{Error, Result};
use crate::graph::{BondEdge, Element, FeatureScheme, MolecularGraph, NodeKind};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Last {
    Start,
    Atom,
    Bond,
    Ring,
    Open,
    Close,
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

/// Parses `text` into a heavy-atom graph and rejects valence violations.
pub fn parse_smiles_subset(text: &str) -> Result<MolecularGraph> {
    let bytes = text.as_bytes();
    let mut elements: Vec<Element> = Vec::new();
    let mut edges: Vec<BondEdge> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut bond: Option<u8> = None;
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut rings: HashMap<u8, (usize, usize)> = HashMap::new();
    let mut last = Last::Start;
    let mut i = 0;

    let add_edge = |edges: &mut Vec<BondEdge>, u: usize, v: usize, order: u8, at: usize| {
        if u == v || edges.iter().any(|e| (e.u, e.v) == (u.min(v), u.max(v))) {
            return Err(syntax(at, "ring closure duplicates an existing bond"));
        }
        edges.push(BondEdge::new(u.min(v), u.max(v), order));
        Ok(())
    };

    while i < bytes.len() {
        let c = bytes[i];
        let at = i;
        match c {
            b'C' | b'N' | b'O' | b'S' | b'P' | b'F' | b'B' | b'I' => {
                let (element, width) = match (c, bytes.get(i + 1)) {
                    (b'C', Some(b'l')) => (Element::Cl, 2),
                    (b'B', Some(b'r')) => (Element::Br, 2),
                    _ => ((c as char).to_string().parse::<Element>()?, 1),
                };
                let node = elements.len();
                elements.push(element);
                if let Some(p) = prev {
                    add_edge(&mut edges, p, node, bond.take().unwrap_or(1), at)?;
                }
                prev = Some(node);
                last = Last::Atom;
                i += width;
                continue;
            }
            b'=' | b'#' => {
                if !matches!(last, Last::Atom | Last::Ring | Last::Close | Last::Open) {
                    return Err(syntax(at, "bond symbol must follow an atom or '('"));
                }
                bond = Some(if c == b'=' { 2 } else { 3 });
                last = Last::Bond;
            }
            b'0'..=b'9' => {
                if !matches!(last, Last::Atom | Last::Ring) {
                    return Err(syntax(at, "ring digit must follow an atom"));
                }
                let current = prev.expect("atom precedes ring digit");
                let digit = c - b'0';
                match rings.remove(&digit) {
                    Some((opener, _)) => add_edge(&mut edges, opener, current, 1, at)?,
                    None => {
                        rings.insert(digit, (current, at));
                    }
                }
                last = Last::Ring;
            }
            b'(' => {
                if !matches!(last, Last::Atom | Last::Ring | Last::Close) {
                    return Err(syntax(at, "'(' must follow an atom"));
                }
                branches.push((prev.expect("atom precedes branch"), at));
                last = Last::Open;
            }
            b')' => {
                if !matches!(last, Last::Atom | Last::Ring | Last::Close) {
                    return Err(syntax(at, "empty or unterminated branch"));
                }
                let (origin, _) = branches
                    .pop()
                    .ok_or_else(|| syntax(at, "unmatched ')'"))?;
                prev = Some(origin);
                last = Last::Close;
            }
            _ => {
                let ch = text[at..].chars().next().unwrap_or('?');
                return Err(syntax(at, format!("unexpected character `{ch}`")));
            }
        }
        i += 1;
    }

    if elements.is_empty() {
        return Err(syntax(0, "empty input"));
    }
    if last == Last::Bond {
        return Err(syntax(bytes.len(), "dangling bond symbol"));
    }
    if let Some(&(_, at)) = branches.first() {
        return Err(syntax(at, "unmatched '('"));
    }
    if let Some((digit, &(_, at))) = rings.iter().min_by_key(|(_, (_, at))| *at) {
        return Err(syntax(at, format!("unmatched ring digit {digit}")));
    }

    let graph = MolecularGraph::new(
        elements.into_iter().map(NodeKind::Atom).collect(),
        edges,
        None,
        FeatureScheme::ElementOneHot,
    )?;
    if let Some(&node) = valence_violations(&graph)?.first() {
        return Err(Error::Chemistry {
            node,
            message: format!(
                "{} carries bond order {} above its valence",
                graph.nodes()[node].kind,
                graph.node_degree_sum(node)?
            ),
        });
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(g: &MolecularGraph) -> (Vec<String>, Vec<(usize, usize, u8)>) {
        (
            g.nodes().iter().map(|n| n.kind.to_string()).collect(),
            g.edges().iter().map(|e| (e.u, e.v, e.order)).collect(),
        )
    }

    #[test]
    fn ethanol() {
        let g = parse_smiles_subset("CCO").unwrap();
        assert_eq!(
            summary(&g),
            (
                vec!["C".into(), "C".into(), "O".into()],
                vec![(0, 1, 1), (1, 2, 1)]
            )
        );
    }

    #[test]
    fn cyclohexane_ring_closure() {
        let g = parse_smiles_subset("C1CCCCC1").unwrap();
        assert_eq!(g.num_nodes(), 6);
        assert_eq!(g.num_edges(), 6);
        for i in 0..6 {
            assert_eq!(g.node_degree_sum(i).unwrap(), 2);
        }
    }

    #[test]
    fn carboxyl_branch() {
        let g = parse_smiles_subset("C(=O)O").unwrap();
        assert_eq!(summary(&g).1, vec![(0, 1, 2), (0, 2, 1)]);
    }

    #[test]
    fn two_letter_halogens() {
        let g = parse_smiles_subset("ClCBr").unwrap();
        assert_eq!(summary(&g).0, vec!["Cl", "C", "Br"]);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_smiles_subset("CC(O").unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 2),
            e => panic!("{e}"),
        }
        match parse_smiles_subset("CCx").unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 2),
            e => panic!("{e}"),
        }
        assert!(matches!(parse_smiles_subset("C1CC"), Err(Error::Parse { offset: 1, .. })));
        assert!(parse_smiles_subset("").is_err());
        assert!(parse_smiles_subset("C=").is_err());
        assert!(parse_smiles_subset("c1ccccc1").is_err());
        assert!(parse_smiles_subset("C()").is_err());
    }

    #[test]
    fn valence_violation_is_chemistry_error() {
        assert!(matches!(
            parse_smiles_subset("O=C=O=C"),
            Err(Error::Chemistry { node: 2, .. })
        ));
        assert!(matches!(
            parse_smiles_subset("C(C)(C)(C)(C)C"),
            Err(Error::Chemistry { node: 0, .. })
        ));
    }
}
