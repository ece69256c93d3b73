//! Parameter storage and small dense helpers shared by the encoder and heads.

use ndarray::{Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::new(Array2::from_shape_simple_fn((rows, cols), || {
            rng.random_range(-bound..=bound)
        }))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }
}

/// Named mutable access to every parameter of a module.
pub trait Parameters {
    fn params_mut(&mut self) -> Vec<(String, &mut Param)>;

    fn params(&self) -> Vec<(String, &Param)>;

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent with a fixed step.
    #[default]
    Gd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "gd" => Ok(Self::Gd),
            "adam" => Ok(Self::Adam),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown optimizer {other:?} (expected gd or adam)"
            ))),
        }
    }
}

/// Applies accumulated gradients. Adam keeps one moment pair per parameter,
/// matched by position, so the parameter list must not change between steps.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    steps: i32,
    moments: Vec<(Array2<f64>, Array2<f64>)>,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPSILON: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            steps: 0,
            moments: Vec::new(),
        }
    }

    pub fn step<P: Parameters + ?Sized>(&mut self, module: &mut P) {
        let params = module.params_mut();
        match self.kind {
            OptimizerKind::Gd => {
                for (_, p) in params {
                    p.value.scaled_add(-self.lr, &p.grad);
                }
            }
            OptimizerKind::Adam => {
                if self.moments.is_empty() {
                    self.moments = params
                        .iter()
                        .map(|(_, p)| {
                            (
                                Array2::zeros(p.value.raw_dim()),
                                Array2::zeros(p.value.raw_dim()),
                            )
                        })
                        .collect();
                }
                self.steps += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.steps);
                let c2 = 1.0 - Self::BETA2.powi(self.steps);
                let lr = self.lr;
                for ((_, p), (m, v)) in params.into_iter().zip(&mut self.moments) {
                    Zip::from(&mut p.value)
                        .and(&p.grad)
                        .and(m)
                        .and(v)
                        .for_each(|w, &g, m, v| {
                            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPSILON);
                        });
                }
            }
        }
    }
}

pub(crate) fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes `grad` wherever the pre-activation was not positive.
pub(crate) fn relu_backward_inplace(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    grad.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

pub(crate) fn add_row_bias(x: &mut Array2<f64>, bias: &Array2<f64>) {
    *x += &bias.row(0);
}

pub(crate) fn bias_grad(grad: &Array2<f64>) -> Array2<f64> {
    grad.sum_axis(Axis(0)).insert_axis(Axis(0))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

/// Pulls a gradient on softmax outputs back onto the logits.
pub fn softmax_backward(probs: &Array2<f64>, grad_probs: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((p, g), mut o) in probs
        .rows()
        .into_iter()
        .zip(grad_probs.rows())
        .zip(out.rows_mut())
    {
        let dot = p.dot(&g);
        o.assign(&(&p * &(&g - dot)));
    }
    out
}
