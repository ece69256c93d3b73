//! Prediction heads: a linear softmax baseline and the belief head.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::belief::{self, FocalFamily};
use crate::error::{Error, Result};
use crate::nn::{
    add_row_bias, bias_grad, relu_backward_inplace, relu_inplace, sigmoid, softmax_rows, Param,
    Parameters,
};

/// Linear layer followed by softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaHead {
    pub weight: Param,
    pub bias: Param,
}

impl VanillaHead {
    pub fn new<R: Rng + ?Sized>(hidden: usize, num_classes: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::glorot(hidden, num_classes, hidden, num_classes, rng),
            bias: Param::zeros(1, num_classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn logits(&self, embeddings: &Array2<f64>) -> Result<Array2<f64>> {
        check_width(
            "embedding width",
            self.weight.value.nrows(),
            embeddings.ncols(),
        )?;
        let mut logits = embeddings.dot(&self.weight.value);
        add_row_bias(&mut logits, &self.bias.value);
        Ok(logits)
    }

    /// Per-node class probabilities.
    pub fn forward(&self, embeddings: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.logits(embeddings)?))
    }

    pub fn backward(&mut self, embeddings: &Array2<f64>, grad_logits: &Array2<f64>) -> Array2<f64> {
        self.weight.grad += &embeddings.t().dot(grad_logits);
        self.bias.grad += &bias_grad(grad_logits);
        grad_logits.dot(&self.weight.value.t())
    }
}

impl Parameters for VanillaHead {
    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![
            ("head.weight".into(), &mut self.weight),
            ("head.bias".into(), &mut self.bias),
        ]
    }

    fn params(&self) -> Vec<(String, &Param)> {
        vec![
            ("head.weight".into(), &self.weight),
            ("head.bias".into(), &self.bias),
        ]
    }
}

/// Two-layer MLP (ReLU hidden layer) with one sigmoid output per focal set.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefHead {
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
}

#[derive(Debug, Clone)]
pub struct BeliefTape {
    embeddings: Array2<f64>,
    pre1: Array2<f64>,
    act1: Array2<f64>,
    belief: Array2<f64>,
}

impl BeliefHead {
    pub fn new<R: Rng + ?Sized>(
        hidden: usize,
        mlp_hidden: usize,
        num_sets: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: Param::glorot(hidden, mlp_hidden, hidden, mlp_hidden, rng),
            b1: Param::zeros(1, mlp_hidden),
            w2: Param::glorot(mlp_hidden, num_sets, mlp_hidden, num_sets, rng),
            b2: Param::zeros(1, num_sets),
        }
    }

    pub fn num_sets(&self) -> usize {
        self.w2.value.ncols()
    }

    /// Belief values in `(0, 1)`, one column per focal set.
    pub fn forward(&self, embeddings: &Array2<f64>) -> Result<(Array2<f64>, BeliefTape)> {
        check_width("embedding width", self.w1.value.nrows(), embeddings.ncols())?;
        let mut pre1 = embeddings.dot(&self.w1.value);
        add_row_bias(&mut pre1, &self.b1.value);
        let mut act1 = pre1.clone();
        relu_inplace(&mut act1);
        let mut logits = act1.dot(&self.w2.value);
        add_row_bias(&mut logits, &self.b2.value);
        let belief = logits.mapv(sigmoid);
        Ok((
            belief.clone(),
            BeliefTape {
                embeddings: embeddings.clone(),
                pre1,
                act1,
                belief,
            },
        ))
    }

    pub fn backward(&mut self, tape: &BeliefTape, grad_belief: &Array2<f64>) -> Array2<f64> {
        let g_logits = grad_belief * &tape.belief.mapv(|b| b * (1.0 - b));
        self.w2.grad += &tape.act1.t().dot(&g_logits);
        self.b2.grad += &bias_grad(&g_logits);
        let mut g_pre1 = g_logits.dot(&self.w2.value.t());
        relu_backward_inplace(&mut g_pre1, &tape.pre1);
        self.w1.grad += &tape.embeddings.t().dot(&g_pre1);
        self.b1.grad += &bias_grad(&g_pre1);
        g_pre1.dot(&self.w1.value.t())
    }
}

impl Parameters for BeliefHead {
    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![
            ("head.w1".into(), &mut self.w1),
            ("head.b1".into(), &mut self.b1),
            ("head.w2".into(), &mut self.w2),
            ("head.b2".into(), &mut self.b2),
        ]
    }

    fn params(&self) -> Vec<(String, &Param)> {
        vec![
            ("head.w1".into(), &self.w1),
            ("head.b1".into(), &self.b1),
            ("head.w2".into(), &self.w2),
            ("head.b2".into(), &self.b2),
        ]
    }
}

fn check_width(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}

/// Everything derived from a batch of predicted beliefs.
///
/// `mass` is the raw Möbius image and may be invalid; `betp`, the credal
/// bounds and both uncertainty scores are the reporting quantities and are
/// computed once here so predictions and scores never drift apart.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefOutput {
    pub belief: Array2<f64>,
    pub mass: Array2<f64>,
    pub betp: Array2<f64>,
    pub lower: Array2<f64>,
    pub upper: Array2<f64>,
    pub prediction: Vec<usize>,
    pub entropy: Vec<f64>,
    pub credal_width: Vec<f64>,
}

/// `belief · M` for every row.
pub fn beliefs_to_masses(belief: &Array2<f64>, family: &FocalFamily) -> Result<Array2<f64>> {
    check_width("belief columns", family.len(), belief.ncols())?;
    let mut mass = Array2::zeros(belief.raw_dim());
    for (b, mut m) in belief.rows().into_iter().zip(mass.rows_mut()) {
        let b = b.to_vec();
        let mut out = vec![0.0; family.len()];
        family.bel_to_mass_into(&b, &mut out);
        m.assign(&Array1::from(out));
    }
    Ok(mass)
}

/// Turns predicted beliefs into masses, pignistic probabilities, credal bounds,
/// argmax predictions and uncertainty scores.
pub fn belief_outputs(belief: Array2<f64>, family: &FocalFamily) -> Result<BeliefOutput> {
    let mass = beliefs_to_masses(&belief, family)?;
    let n = belief.nrows();
    let c = family.num_classes();
    let mut betp = Array2::zeros((n, c));
    let mut lower = Array2::zeros((n, c));
    let mut upper = Array2::zeros((n, c));
    let mut prediction = Vec::with_capacity(n);
    let mut entropy = Vec::with_capacity(n);
    let mut credal_width = Vec::with_capacity(n);
    for v in 0..n {
        let m = mass.row(v).to_vec();
        let p = belief::mass_to_betp(&m, family)?;
        let interval = belief::credal_bounds(&m, family)?;
        let yhat = argmax(&p);
        entropy.push(belief::pignistic_entropy(&p));
        credal_width.push(belief::credal_width(&interval, yhat));
        prediction.push(yhat);
        betp.row_mut(v).assign(&Array1::from(p));
        lower.row_mut(v).assign(&Array1::from(interval.lower));
        upper.row_mut(v).assign(&Array1::from(interval.upper));
    }
    Ok(BeliefOutput {
        belief,
        mass,
        betp,
        lower,
        upper,
        prediction,
        entropy,
        credal_width,
    })
}

/// Belief head forward pass plus all derived quantities.
pub fn belief_forward(
    head: &BeliefHead,
    embeddings: &Array2<f64>,
    family: &FocalFamily,
) -> Result<(BeliefOutput, BeliefTape)> {
    check_width("focal family size", head.num_sets(), family.len())?;
    let (belief, tape) = head.forward(embeddings)?;
    Ok((belief_outputs(belief, family)?, tape))
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

pub fn argmax_rows(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .axis_iter(Axis(0))
        .map(|r| argmax(r.as_slice().expect("row-major")))
        .collect()
}
