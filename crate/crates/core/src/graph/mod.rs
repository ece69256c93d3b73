//! Attributed node graphs, split masks and graph builders.

mod io;
mod sbm;
mod temporal;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub use io::{read_graph_dir, write_graph_dir};
pub use sbm::{generate_sbm, SbmConfig};
pub use temporal::{build_temporal_graph, AgentAnnotation, FrameAnnotation, WindowConfig};

/// Label value of nodes without a class (scene nodes, unannotated nodes).
pub const UNLABELED: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Parse(format!("unknown split {other:?}"))),
        }
    }
}

/// A single attributed graph with per-node labels and split tags.
///
/// Edges are directed `(src, dst)` pairs; an undirected link is stored as two
/// reciprocal edges.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGraph {
    features: Array2<f64>,
    edges: Vec<(usize, usize)>,
    labels: Vec<i64>,
    split: Vec<Split>,
    metadata: BTreeMap<String, String>,
}

impl NodeGraph {
    pub fn new(
        features: Array2<f64>,
        edges: Vec<(usize, usize)>,
        labels: Vec<i64>,
        split: Vec<Split>,
    ) -> Result<Self> {
        let n = features.nrows();
        check_len("node labels", n, labels.len())?;
        check_len("node split tags", n, split.len())?;
        if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s >= n || d >= n) {
            return Err(Error::Data(format!(
                "edge ({s}, {d}) out of range for {n} nodes"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < UNLABELED) {
            return Err(Error::Data(format!("invalid label {bad}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("node features must be finite".into()));
        }
        Ok(Self {
            features,
            edges,
            labels,
            split,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    pub fn set_labels(&mut self, labels: Vec<i64>) -> Result<()> {
        check_len("node labels", self.num_nodes(), labels.len())?;
        self.labels = labels;
        Ok(())
    }

    pub fn set_split(&mut self, split: Vec<Split>) -> Result<()> {
        check_len("node split tags", self.num_nodes(), split.len())?;
        self.split = split;
        Ok(())
    }

    /// Number of classes: one more than the largest label, or the
    /// `num_classes` metadata entry when that is larger.
    pub fn num_classes(&self) -> usize {
        let from_labels = self
            .labels
            .iter()
            .copied()
            .max()
            .map_or(0, |m| (m + 1).max(0) as usize);
        let declared = self
            .metadata
            .get("num_classes")
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(0);
        from_labels.max(declared)
    }

    /// Returns a copy where every node carries exactly one self-loop.
    pub fn with_self_loops(&self) -> Self {
        let mut edges: Vec<(usize, usize)> =
            self.edges.iter().copied().filter(|(s, d)| s != d).collect();
        edges.extend((0..self.num_nodes()).map(|v| (v, v)));
        Self {
            edges,
            ..self.clone()
        }
    }

    /// Nodes carrying a class label (`label ≥ 0`) with the given split tag.
    pub fn labeled_mask(&self, tag: Split) -> Vec<bool> {
        self.labels
            .iter()
            .zip(&self.split)
            .map(|(&l, &s)| l >= 0 && s == tag)
            .collect()
    }
}

/// Partition of the class set into in-distribution and held-out classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OodSplit {
    id_classes: BTreeSet<usize>,
    ood_classes: BTreeSet<usize>,
}

impl OodSplit {
    /// Holds out `ood_classes`; every other class in `0..num_classes` is ID.
    pub fn new(num_classes: usize, ood_classes: impl IntoIterator<Item = usize>) -> Result<Self> {
        let ood: BTreeSet<usize> = ood_classes.into_iter().collect();
        let id = (0..num_classes).filter(|c| !ood.contains(c)).collect();
        Self::from_parts(num_classes, id, ood)
    }

    pub fn from_parts(
        num_classes: usize,
        id_classes: BTreeSet<usize>,
        ood_classes: BTreeSet<usize>,
    ) -> Result<Self> {
        if id_classes.is_empty() {
            return Err(Error::InvalidArgument("no in-distribution classes".into()));
        }
        if let Some(c) = id_classes.intersection(&ood_classes).next() {
            return Err(Error::InvalidArgument(format!(
                "class {c} is both ID and OOD"
            )));
        }
        if let Some(c) = id_classes
            .iter()
            .chain(&ood_classes)
            .find(|&&c| c >= num_classes)
        {
            return Err(Error::InvalidArgument(format!(
                "class {c} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            id_classes,
            ood_classes,
        })
    }

    pub fn id_classes(&self) -> &BTreeSet<usize> {
        &self.id_classes
    }

    pub fn ood_classes(&self) -> &BTreeSet<usize> {
        &self.ood_classes
    }

    pub fn is_id(&self, label: i64) -> bool {
        label >= 0 && self.id_classes.contains(&(label as usize))
    }

    pub fn is_ood(&self, label: i64) -> bool {
        label >= 0 && self.ood_classes.contains(&(label as usize))
    }
}

/// Training nodes whose label is an ID class.
pub fn id_label_mask(graph: &NodeGraph, split: &OodSplit) -> Vec<bool> {
    id_mask_for(graph, split, Split::Train)
}

/// Nodes with the given split tag whose label is an ID class.
pub fn id_mask_for(graph: &NodeGraph, split: &OodSplit, tag: Split) -> Vec<bool> {
    graph
        .labels()
        .iter()
        .zip(graph.split())
        .map(|(&l, &s)| s == tag && split.is_id(l))
        .collect()
}
