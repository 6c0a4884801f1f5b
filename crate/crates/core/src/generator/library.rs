//! Fragment libraries: tab-separated lines of
//! `role<TAB>smiles<TAB>attachments<TAB>label`, where role is `I`
//! (invariant, labeled) or `N` (environment, label `-`). Blank lines and
//! lines starting with `#` are ignored.

use std::fs;
use std::path::Path;

use super::smiles::parse_smiles_subset;
use super::valence::spare_valence;
use crate::error::{Error, Result};
use crate::graph::MolecularGraph;

const STARTER: &str = include_str!("../../data/starter_fragments.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentRole {
    Invariant,
    Environment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub smiles: String,
    pub graph: MolecularGraph,
    pub attachments: Vec<usize>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FragmentLibrary {
    pub invariant: Vec<Fragment>,
    pub environment: Vec<Fragment>,
}

impl FragmentLibrary {
    /// The library bundled with the crate: hydroxyl, carboxyl, amine,
    /// nitroso and chloride as invariant groups; methyl through hexyl
    /// chains and a ring as environments.
    pub fn starter() -> Self {
        Self::parse(STARTER, "<starter>").expect("bundled library parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lib = FragmentLibrary::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |message: String| Error::Format {
                path: source.into(),
                line: idx + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(fail(format!("expected 4 tab-separated columns, found {}", cols.len())));
            }
            let role = match cols[0] {
                "I" => FragmentRole::Invariant,
                "N" => FragmentRole::Environment,
                other => return Err(fail(format!("unknown role `{other}`"))),
            };
            let graph = parse_smiles_subset(cols[1]).map_err(|e| fail(e.to_string()))?;
            let attachments = cols[2]
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| fail(format!("bad attachment list `{}`", cols[2])))?;
            if attachments.is_empty() {
                return Err(fail("no attachment nodes".into()));
            }
            for &a in &attachments {
                if a >= graph.num_nodes() {
                    return Err(fail(format!("attachment {a} out of range")));
                }
                if spare_valence(&graph, a)? < 1 {
                    return Err(fail(format!("attachment {a} has no spare valence")));
                }
            }
            let label = match (role, cols[3]) {
                (FragmentRole::Environment, "-") => None,
                (FragmentRole::Environment, other) => {
                    return Err(fail(format!("environment fragment has label `{other}`")))
                }
                (FragmentRole::Invariant, s) => Some(
                    s.parse::<usize>()
                        .map_err(|_| fail(format!("bad label `{s}`")))?,
                ),
            };
            let mut graph = graph;
            graph.label = label;
            let fragment = Fragment {
                smiles: cols[1].to_string(),
                graph,
                attachments,
                label,
            };
            match role {
                FragmentRole::Invariant => lib.invariant.push(fragment),
                FragmentRole::Environment => lib.environment.push(fragment),
            }
        }
        Ok(lib)
    }

    /// Environment fragment ids by ascending atom count; ties keep
    /// insertion order.
    pub fn rank_environments(&self) -> Result<Vec<usize>> {
        if self.environment.is_empty() {
            return Err(Error::arg("environment fragment set is empty"));
        }
        let mut ids: Vec<usize> = (0..self.environment.len()).collect();
        ids.sort_by_key(|&i| self.environment[i].graph.num_nodes());
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_line(smiles: &str) -> String {
        format!("N\t{smiles}\t0\t-\n")
    }

    #[test]
    fn starter_library_shape() {
        let lib = FragmentLibrary::starter();
        assert_eq!(lib.invariant.len(), 5);
        assert!(lib.environment.len() >= 7);
        assert!(lib.invariant.iter().all(|f| f.label.is_some()));
    }

    #[test]
    fn ranking_is_stable_by_size() {
        let text = ["CCC", "C", "CC"].map(env_line).concat();
        let lib = FragmentLibrary::parse(&text, "t").unwrap();
        assert_eq!(lib.rank_environments().unwrap(), vec![1, 2, 0]);
        let same = ["CC", "CO", "CN"].map(env_line).concat();
        let lib = FragmentLibrary::parse(&same, "t").unwrap();
        assert_eq!(lib.rank_environments().unwrap(), vec![0, 1, 2]);
        let one = FragmentLibrary::parse(&env_line("C"), "t").unwrap();
        assert_eq!(one.rank_environments().unwrap(), vec![0]);
        assert!(FragmentLibrary::default().rank_environments().is_err());
    }

    #[test]
    fn rejects_saturated_attachment_and_bad_lines() {
        let err = FragmentLibrary::parse("N\tC(C)(C)(C)C\t0\t-\n", "lib").unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }), "{err}");
        assert!(FragmentLibrary::parse("X\tC\t0\t-\n", "lib").is_err());
        assert!(FragmentLibrary::parse("I\tO\t0\n", "lib").is_err());
        assert!(FragmentLibrary::parse("# comment\n\nI\tO\t0\t1\n", "lib").is_ok());
    }
}
