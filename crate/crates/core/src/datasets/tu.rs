//! TU benchmark text format: `<name>_A.txt` (1-based `u, v` pairs),
//! `<name>_graph_indicator.txt`, `<name>_graph_labels.txt` and optionally
//! `<name>_node_labels.txt`. Edge labels, if present, are ignored and every
//! bond gets order 1.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::{BondEdge, Element, FeatureScheme, MolecularGraph, NodeKind};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TuOptions {
    /// When set, node label `i` (after remapping) is read as this element,
    /// producing atom nodes with element one-hot features.
    pub elements: Option<Vec<Element>>,
}

/// The `<name>` prefix of the `*_A.txt` file in `dir`.
pub fn find_prefix(dir: &Path) -> Result<String> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix("_A.txt").map(str::to_string))
        .collect();
    names.sort();
    match names.len() {
        1 => Ok(names.pop().unwrap()),
        0 => Err(Error::io(
            dir.join("<name>_A.txt"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no *_A.txt file"),
        )),
        _ => Err(Error::Format {
            path: dir.display().to_string(),
            line: 0,
            message: format!("several TU datasets present: {}", names.join(", ")),
        }),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn integers(path: &Path) -> Result<Vec<(usize, i64)>> {
    let text = read(path)?;
    lines(&text)
        .map(|(n, l)| {
            l.parse::<i64>()
                .map(|v| (n, v))
                .map_err(|_| format_err(path, n, format!("expected an integer, found `{l}`")))
        })
        .collect()
}

/// Maps the distinct values to `0..k` in ascending order.
fn remap(values: &[i64]) -> (Vec<usize>, usize) {
    let distinct: Vec<i64> = values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let idx = values
        .iter()
        .map(|v| distinct.binary_search(v).expect("value present"))
        .collect();
    (idx, distinct.len())
}

pub fn load_tu_dataset(dir: &Path, options: &TuOptions) -> Result<Dataset> {
    let name = find_prefix(dir)?;
    let file = |suffix: &str| -> PathBuf { dir.join(format!("{name}_{suffix}.txt")) };

    let indicator_path = file("graph_indicator");
    let indicator = integers(&indicator_path)?;
    let labels_path = file("graph_labels");
    let graph_labels = integers(&labels_path)?;
    let num_graphs = graph_labels.len();
    let num_nodes = indicator.len();

    let mut node_graph = Vec::with_capacity(num_nodes);
    for &(line, g) in &indicator {
        if g < 1 || g as usize > num_graphs {
            return Err(format_err(
                &indicator_path,
                line,
                format!("graph id {g} outside 1..={num_graphs}"),
            ));
        }
        let g = g as usize - 1;
        if let Some(&prev) = node_graph.last() {
            if g < prev {
                return Err(format_err(&indicator_path, line, "graph ids must be nondecreasing"));
            }
        }
        node_graph.push(g);
    }
    let mut first_node = vec![usize::MAX; num_graphs];
    let mut sizes = vec![0usize; num_graphs];
    for (i, &g) in node_graph.iter().enumerate() {
        first_node[g] = first_node[g].min(i);
        sizes[g] += 1;
    }

    let node_labels_path = file("node_labels");
    let (kinds_flat, scheme) = if node_labels_path.is_file() {
        let raw = integers(&node_labels_path)?;
        if raw.len() != num_nodes {
            return Err(format_err(
                &node_labels_path,
                raw.len(),
                format!("{} node labels for {num_nodes} nodes", raw.len()),
            ));
        }
        let values: Vec<i64> = raw.iter().map(|&(_, v)| v).collect();
        let (idx, k) = remap(&values);
        match &options.elements {
            Some(elements) => {
                if elements.len() < k {
                    return Err(Error::arg(format!(
                        "{k} node labels but only {} elements given",
                        elements.len()
                    )));
                }
                let kinds = idx.iter().map(|&i| NodeKind::Atom(elements[i])).collect();
                (kinds, FeatureScheme::ElementOneHot)
            }
            None => (
                idx.iter().map(|&i| NodeKind::Feature(i as u32)).collect(),
                FeatureScheme::LabelOneHot { num_labels: k },
            ),
        }
    } else {
        (vec![NodeKind::Feature(0); num_nodes], FeatureScheme::Constant)
    };

    let a_path = file("A");
    let a_text = read(&a_path)?;
    let mut edges: Vec<Vec<BondEdge>> = vec![Vec::new(); num_graphs];
    let mut seen = HashSet::new();
    for (line, l) in lines(&a_text) {
        let mut parts = l.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format_err(&a_path, line, format!("expected `u, v`, found `{l}`")));
        };
        let parse = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| format_err(&a_path, line, format!("bad node index `{s}`")))?;
            if v == 0 || v > num_nodes {
                return Err(format_err(
                    &a_path,
                    line,
                    format!("node index {v} outside 1..={num_nodes}"),
                ));
            }
            Ok(v - 1)
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if node_graph[u] != node_graph[v] {
            return Err(format_err(&a_path, line, "edge joins two different graphs"));
        }
        if u == v {
            return Err(format_err(&a_path, line, "self-loop"));
        }
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            let g = node_graph[u];
            let o = first_node[g];
            edges[g].push(BondEdge::new(key.0 - o, key.1 - o, 1));
        }
    }

    let label_values: Vec<i64> = graph_labels.iter().map(|&(_, v)| v).collect();
    let (labels, num_classes) = remap(&label_values);
    let mut graphs = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let kinds = if sizes[g] == 0 {
            Vec::new()
        } else {
            kinds_flat[first_node[g]..first_node[g] + sizes[g]].to_vec()
        };
        let mut graph = MolecularGraph::new(kinds, std::mem::take(&mut edges[g]), Some(labels[g]), scheme)?;
        graph.meta.insert("dataset".into(), name.clone());
        graph.meta.insert("provenance".into(), "parsed".into());
        graphs.push(graph);
    }
    Ok(Dataset {
        name,
        graphs,
        num_classes,
    })
}

/// Writes `ds` in TU format under `dir` with prefix `name`. Node labels are
/// feature ids, or element table indices for atom nodes.
pub fn write_tu_dataset(dir: &Path, name: &str, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut a = String::new();
    let mut indicator = String::new();
    let mut node_labels = String::new();
    let mut graph_labels = String::new();
    let mut offset = 0;
    for (k, g) in ds.graphs.iter().enumerate() {
        for node in g.nodes() {
            indicator.push_str(&format!("{}\n", k + 1));
            let id = match node.kind {
                NodeKind::Feature(id) => id as usize,
                NodeKind::Atom(e) => e.index(),
            };
            node_labels.push_str(&format!("{id}\n"));
        }
        for e in g.edges() {
            a.push_str(&format!("{}, {}\n", e.u + offset + 1, e.v + offset + 1));
            a.push_str(&format!("{}, {}\n", e.v + offset + 1, e.u + offset + 1));
        }
        let label = g
            .label
            .ok_or_else(|| Error::arg(format!("graph {k} has no label")))?;
        graph_labels.push_str(&format!("{label}\n"));
        offset += g.num_nodes();
    }
    for (suffix, body) in [
        ("A", a),
        ("graph_indicator", indicator),
        ("node_labels", node_labels),
        ("graph_labels", graph_labels),
    ] {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
