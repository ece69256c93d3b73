//! Training losses with analytic gradients.
//!
//! Every loss averages over the nodes selected by `mask`; labels of unmasked
//! nodes are never read.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::belief::{self, FocalFamily, EPS};
use crate::error::{check_len, Error, Result};
use crate::heads::beliefs_to_masses;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPenalty {
    /// `|Σ m − 1|`
    #[default]
    Absolute,
    /// `max(0, Σ m − 1)`
    Relaxed,
}

impl std::str::FromStr for NormPenalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(Self::Absolute),
            "relaxed" => Ok(Self::Relaxed),
            other => Err(Error::InvalidArgument(format!(
                "unknown norm penalty {other:?} (expected absolute or relaxed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub norm_penalty: NormPenalty,
    pub label_smoothing: f64,
    pub class_weights: Option<Vec<f64>>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 1e-3,
            norm_penalty: NormPenalty::Absolute,
            label_smoothing: 0.0,
            class_weights: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(
                "alpha and beta must be nonnegative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidArgument(format!(
                "label smoothing {} outside [0, 1)",
                self.label_smoothing
            )));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != num_classes {
                return Err(Error::InvalidArgument(format!(
                    "{} class weights given for {num_classes} classes",
                    w.len()
                )));
            }
            if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
                return Err(Error::InvalidArgument(
                    "class weights must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    fn weight(&self, class: usize) -> f64 {
        self.class_weights.as_ref().map_or(1.0, |w| w[class])
    }
}

/// Masked node indices with their labels.
fn supervised(
    labels: &[Option<usize>],
    mask: &[bool],
    num_classes: usize,
) -> Result<Vec<(usize, usize)>> {
    check_len("mask length", labels.len(), mask.len())?;
    let mut out = Vec::new();
    for (v, (&m, &y)) in mask.iter().zip(labels).enumerate() {
        if !m {
            continue;
        }
        match y {
            Some(y) if y < num_classes => out.push((v, y)),
            Some(y) => {
                return Err(Error::Data(format!(
                    "node {v}: label {y} outside {num_classes} classes"
                )))
            }
            None => return Err(Error::Data(format!("node {v} is masked but unlabeled"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Data("loss mask selects no labeled nodes".into()));
    }
    Ok(out)
}

/// Binary cross-entropy between predicted beliefs and the belief targets of
/// the labels, summed over focal sets and averaged over masked nodes.
pub fn belief_bce_loss(
    pred_bel: &Array2<f64>,
    labels: &[Option<usize>],
    family: &FocalFamily,
    mask: &[bool],
    config: &LossConfig,
) -> Result<(f64, Array2<f64>)> {
    check_len("belief columns", family.len(), pred_bel.ncols())?;
    check_len("labels", pred_bel.nrows(), labels.len())?;
    config.validate(family.num_classes())?;
    let nodes = supervised(labels, mask, family.num_classes())?;
    let n = nodes.len() as f64;
    let s = config.label_smoothing;
    let mut grad = Array2::zeros(pred_bel.raw_dim());
    let mut loss = 0.0;
    for (v, y) in nodes {
        let w = config.weight(y);
        let target = belief::target_belief(y, family)?;
        let mut node_loss = 0.0;
        for (k, &t) in target.iter().enumerate() {
            let t = t * (1.0 - s) + s / 2.0;
            let p = pred_bel[[v, k]];
            node_loss -= t * (p + EPS).ln() + (1.0 - t) * (1.0 - p + EPS).ln();
            grad[[v, k]] = w / n * (-t / (p + EPS) + (1.0 - t) / (1.0 - p + EPS));
        }
        loss += w * node_loss;
    }
    Ok((loss / n, grad))
}

/// Penalty on negative mass and on departure from normalization.
pub fn mass_regularizer(
    mass: &Array2<f64>,
    mask: &[bool],
    config: &LossConfig,
) -> Result<(f64, Array2<f64>)> {
    check_len("mask length", mass.nrows(), mask.len())?;
    let mut grad = Array2::zeros(mass.raw_dim());
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Ok((0.0, grad));
    }
    let n = count as f64;
    let (mut neg, mut norm) = (0.0, 0.0);
    for v in (0..mass.nrows()).filter(|&v| mask[v]) {
        let row = mass.row(v);
        let total: f64 = row.sum();
        for (k, &m) in row.iter().enumerate() {
            if m < 0.0 {
                neg -= m;
                grad[[v, k]] -= config.alpha / n;
            }
        }
        let slope = match config.norm_penalty {
            NormPenalty::Absolute => {
                norm += (total - 1.0).abs();
                if total > 1.0 {
                    1.0
                } else if total < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            NormPenalty::Relaxed => {
                norm += (total - 1.0).max(0.0);
                if total > 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        if slope != 0.0 {
            for g in grad.row_mut(v) {
                *g += config.beta * slope / n;
            }
        }
    }
    Ok((config.alpha * neg / n + config.beta * norm / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub bce: f64,
    pub regularizer: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.bce + self.regularizer
    }
}

/// Belief BCE plus the mass regularizer, both over the same mask. The mass
/// gradient is pulled back onto the beliefs through the Möbius map.
pub fn total_loss(
    pred_bel: &Array2<f64>,
    labels: &[Option<usize>],
    family: &FocalFamily,
    mask: &[bool],
    config: &LossConfig,
) -> Result<(LossParts, Array2<f64>)> {
    let (bce, mut grad) = belief_bce_loss(pred_bel, labels, family, mask, config)?;
    let mass = beliefs_to_masses(pred_bel, family)?;
    let (regularizer, g_mass) = mass_regularizer(&mass, mask, config)?;
    let mut pulled = vec![0.0; family.len()];
    for v in (0..pred_bel.nrows()).filter(|&v| mask[v]) {
        let g = g_mass.row(v).to_vec();
        family.mobius_transpose_into(&g, &mut pulled);
        for (dst, &src) in grad.row_mut(v).iter_mut().zip(&pulled) {
            *dst += src;
        }
    }
    Ok((LossParts { bce, regularizer }, grad))
}

/// Weighted mean negative log-likelihood against smoothed one-hot targets.
/// Returns the gradient with respect to `probs`.
pub fn cross_entropy_loss(
    probs: &Array2<f64>,
    labels: &[Option<usize>],
    mask: &[bool],
    config: &LossConfig,
) -> Result<(f64, Array2<f64>)> {
    check_len("labels", probs.nrows(), labels.len())?;
    let c = probs.ncols();
    config.validate(c)?;
    let nodes = supervised(labels, mask, c)?;
    let n = nodes.len() as f64;
    let s = config.label_smoothing;
    let mut grad = Array2::zeros(probs.raw_dim());
    let mut loss = 0.0;
    for (v, y) in nodes {
        let w = config.weight(y);
        for i in 0..c {
            let q = if i == y { 1.0 - s } else { 0.0 } + s / c as f64;
            if q == 0.0 {
                continue;
            }
            let p = probs[[v, i]];
            loss -= w * q * (p + EPS).ln();
            grad[[v, i]] = -w * q / (n * (p + EPS));
        }
    }
    Ok((loss / n, grad))
}
