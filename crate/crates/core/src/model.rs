//! Encoder plus head, the ID class mapping, and binary checkpoints.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::belief::FocalFamily;
use crate::encoder::{Encoder, Mode};
use crate::error::{Error, Result};
use crate::graph::{NodeGraph, OodSplit};
use crate::heads::{belief_forward, BeliefHead, BeliefOutput, VanillaHead};
use crate::loss::{cross_entropy_loss, total_loss, LossConfig};
use crate::nn::{softmax_backward, Param, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vanilla,
    #[default]
    Rsgnn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Vanilla => "vanilla",
            Self::Rsgnn => "rsgnn",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Self::Vanilla),
            "rsgnn" => Ok(Self::Rsgnn),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?} (expected vanilla or rsgnn)"
            ))),
        }
    }
}

/// Bijection between the ID classes (original labels) and `0..|ID|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    id_classes: Vec<usize>,
}

impl ClassMap {
    pub fn new(split: &OodSplit) -> Self {
        Self {
            id_classes: split.id_classes().iter().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.id_classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_classes.is_empty()
    }

    pub fn id_classes(&self) -> &[usize] {
        &self.id_classes
    }

    /// Local index of an original label, or `None` for OOD and unlabeled nodes.
    pub fn to_local(&self, label: i64) -> Option<usize> {
        usize::try_from(label)
            .ok()
            .and_then(|l| self.id_classes.binary_search(&l).ok())
    }

    pub fn to_global(&self, local: usize) -> usize {
        self.id_classes[local]
    }

    pub fn local_labels(&self, graph: &NodeGraph) -> Vec<Option<usize>> {
        graph.labels().iter().map(|&l| self.to_local(l)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Head {
    Vanilla(VanillaHead),
    Belief {
        head: BeliefHead,
        family: FocalFamily,
    },
}

/// Class probabilities over the ID classes (local indices). For the belief
/// head these are the pignistic probabilities and `belief` holds the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Array2<f64>,
    pub belief: Option<BeliefOutput>,
}

impl Prediction {
    pub fn predicted(&self) -> Vec<usize> {
        match &self.belief {
            Some(b) => b.prediction.clone(),
            None => crate::heads::argmax_rows(&self.probs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: Encoder,
    pub head: Head,
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self.head {
            Head::Vanilla(_) => ModelKind::Vanilla,
            Head::Belief { .. } => ModelKind::Rsgnn,
        }
    }

    pub fn family(&self) -> Option<&FocalFamily> {
        match &self.head {
            Head::Belief { family, .. } => Some(family),
            Head::Vanilla(_) => None,
        }
    }

    /// One training-mode forward and reverse pass. Gradients are zeroed first
    /// and left in the parameters; returns the loss.
    pub fn loss_and_grad(
        &mut self,
        graph: &NodeGraph,
        labels: &[Option<usize>],
        mask: &[bool],
        config: &LossConfig,
        dropout_seed: u64,
    ) -> Result<f64> {
        self.zero_grad();
        let (emb, tape) = self.encoder.forward(graph, Mode::Train, dropout_seed)?;
        let (loss, grad_emb) = match &mut self.head {
            Head::Vanilla(head) => {
                let probs = head.forward(&emb)?;
                let (loss, grad_probs) = cross_entropy_loss(&probs, labels, mask, config)?;
                let grad_logits = softmax_backward(&probs, &grad_probs);
                (loss, head.backward(&emb, &grad_logits))
            }
            Head::Belief { head, family } => {
                let (bel, head_tape) = head.forward(&emb)?;
                let (parts, grad_bel) = total_loss(&bel, labels, family, mask, config)?;
                (parts.total(), head.backward(&head_tape, &grad_bel))
            }
        };
        self.encoder.backward(&tape, &grad_emb)?;
        Ok(loss)
    }

    /// Evaluation-mode predictions for every node.
    pub fn predict(&self, graph: &NodeGraph) -> Result<Prediction> {
        let (emb, _) = self.encoder.forward(graph, Mode::Eval, 0)?;
        match &self.head {
            Head::Vanilla(head) => Ok(Prediction {
                probs: head.forward(&emb)?,
                belief: None,
            }),
            Head::Belief { head, family } => {
                let (out, _) = belief_forward(head, &emb, family)?;
                Ok(Prediction {
                    probs: out.betp.clone(),
                    belief: Some(out),
                })
            }
        }
    }
}

impl Parameters for Model {
    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = self.encoder.params_mut();
        match &mut self.head {
            Head::Vanilla(h) => out.extend(h.params_mut()),
            Head::Belief { head, .. } => out.extend(head.params_mut()),
        }
        out
    }

    fn params(&self) -> Vec<(String, &Param)> {
        let mut out = self.encoder.params();
        match &self.head {
            Head::Vanilla(h) => out.extend(h.params()),
            Head::Belief { head, .. } => out.extend(head.params()),
        }
        out
    }
}

const MAGIC: &[u8; 8] = b"RSGNNCK1";

/// Layout: magic, tensor count (u64), then per tensor the name length (u64),
/// UTF-8 name, rows and cols (u64) and row-major little-endian f64 values.
pub fn write_checkpoint<P: Parameters + ?Sized>(module: &P, path: &Path) -> Result<()> {
    let params = module.params();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for (name, p) in params {
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        let (r, c) = p.shape();
        buf.extend_from_slice(&(r as u64).to_le_bytes());
        buf.extend_from_slice(&(c as u64).to_le_bytes());
        for v in p.value.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Array2<f64>)>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Parse(format!("{}: {what}", path.display()));
    let mut cursor = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(bad("truncated checkpoint"));
        }
        let (head, rest) = cursor.split_at(n);
        cursor = rest;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let read_u64 = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize;
    let count = read_u64(take(8)?);
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = read_u64(take(8)?);
        let name =
            String::from_utf8(take(len)?.to_vec()).map_err(|_| bad("tensor name is not UTF-8"))?;
        let rows = read_u64(take(8)?);
        let cols = read_u64(take(8)?);
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| bad("tensor too large"))?;
        let data = take(n.checked_mul(8).ok_or_else(|| bad("tensor too large"))?)?;
        let values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let array =
            Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(&e.to_string()))?;
        out.push((name, array));
    }
    if !cursor.is_empty() {
        return Err(bad("trailing bytes after last tensor"));
    }
    Ok(out)
}

/// Copies tensors into a module whose parameter names and shapes match exactly.
pub fn load_parameters<P: Parameters + ?Sized>(
    module: &mut P,
    tensors: Vec<(String, Array2<f64>)>,
) -> Result<()> {
    let params = module.params_mut();
    if params.len() != tensors.len() {
        return Err(Error::Data(format!(
            "checkpoint holds {} tensors, model expects {}",
            tensors.len(),
            params.len()
        )));
    }
    for ((name, p), (tname, value)) in params.into_iter().zip(tensors) {
        if name != tname || p.shape() != value.dim() {
            return Err(Error::Data(format!(
                "checkpoint tensor {tname} {:?} does not match {name} {:?}",
                value.dim(),
                p.shape()
            )));
        }
        p.value = value;
        p.zero_grad();
    }
    Ok(())
}
