//! Line-delimited JSON graph records. Each line is one object:
//!
//! ```text
//! {"nodes":["C","C","O"],"edges":[[0,1,1],[1,2,1]],"label":0,
//!  "meta":{"provenance":"parsed"},"features":"element-onehot"}
//! ```
//!
//! Nodes are element symbols or `#<id>` feature ids; `label` may be `null`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::{BondEdge, FeatureScheme, MolecularGraph, NodeKind};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    nodes: Vec<String>,
    edges: Vec<(usize, usize, u8)>,
    label: Option<usize>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    features: String,
}

pub fn to_line(g: &MolecularGraph) -> String {
    let record = Record {
        nodes: g.nodes().iter().map(|n| n.kind.to_string()).collect(),
        edges: g.edges().iter().map(|e| (e.u, e.v, e.order)).collect(),
        label: g.label,
        meta: g.meta.clone(),
        features: g.scheme().to_string(),
    };
    serde_json::to_string(&record).expect("records serialize")
}

pub fn from_line(line: &str) -> Result<MolecularGraph> {
    let record: Record = serde_json::from_str(line).map_err(|e| Error::arg(e.to_string()))?;
    let kinds = record
        .nodes
        .iter()
        .map(|s| s.parse::<NodeKind>())
        .collect::<Result<Vec<_>>>()?;
    let scheme: FeatureScheme = record.features.parse()?;
    let edges = record
        .edges
        .into_iter()
        .map(|(u, v, o)| BondEdge::new(u, v, o))
        .collect();
    let mut g = MolecularGraph::new(kinds, edges, record.label, scheme)?;
    g.meta = record.meta;
    Ok(g)
}

pub fn write_records(path: &Path, graphs: &[MolecularGraph]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for g in graphs {
        writeln!(w, "{}", to_line(g)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut graphs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let g = from_line(&line).map_err(|e| Error::Format {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = graphs.first() {
            let first: &MolecularGraph = first;
            if first.scheme() != g.scheme() {
                return Err(Error::Format {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: format!("feature scheme {} differs from {}", g.scheme(), first.scheme()),
                });
            }
        }
        graphs.push(g);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Dataset::new(name, graphs))
}
