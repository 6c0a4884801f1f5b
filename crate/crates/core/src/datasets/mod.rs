//! Dataset containers, synthetic generation, file formats and splits.

pub mod motif;
pub mod records;
pub mod split;
pub mod tu;

use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{FeatureScheme, MolecularGraph};

pub use motif::{balanced_test_set, generate_spurious_motif, MotifSpec, BASES, MOTIFS};
pub use records::{read_records, write_records};
pub use split::{ood_split, SplitCriterion, SplitSpec};
pub use tu::{load_tu_dataset, write_tu_dataset, TuOptions};

/// Labeled graphs sharing one feature scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<MolecularGraph>,
    pub num_classes: usize,
}

impl Dataset {
    /// Wraps `graphs`, inferring the class count from the largest label.
    pub fn new(name: impl Into<String>, graphs: Vec<MolecularGraph>) -> Self {
        let num_classes = graphs
            .iter()
            .filter_map(|g| g.label)
            .max()
            .map_or(0, |m| m + 1);
        Dataset {
            name: name.into(),
            graphs,
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn scheme(&self) -> Option<FeatureScheme> {
        self.graphs.first().map(|g| g.scheme())
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        self.graphs
            .iter()
            .enumerate()
            .map(|(i, g)| g.label.ok_or_else(|| Error::arg(format!("graph {i} has no label"))))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Re-encodes every graph under `scheme`.
    pub fn featurize(&mut self, scheme: FeatureScheme) -> Result<()> {
        for g in &mut self.graphs {
            g.featurize(scheme)?;
        }
        Ok(())
    }
}

/// Train, validation and test parts of one experiment.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Data source recognized from a path: a directory holding
/// `train.jsonl`/`val.jsonl`/`test.jsonl`, a TU directory (`*_A.txt`), or
/// a single records file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    PreSplit,
    Tu,
    Records,
}

pub fn detect_source(path: &Path) -> Result<Source> {
    if path.is_dir() {
        if ["train.jsonl", "val.jsonl", "test.jsonl"]
            .iter()
            .all(|f| path.join(f).is_file())
        {
            return Ok(Source::PreSplit);
        }
        if tu::find_prefix(path).is_ok() {
            return Ok(Source::Tu);
        }
        return Err(Error::Format {
            path: path.display().to_string(),
            line: 0,
            message: "directory holds neither split record files nor a TU dataset".into(),
        });
    }
    if path.is_file() {
        return Ok(Source::Records);
    }
    Err(Error::io(
        path,
        std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
    ))
}
