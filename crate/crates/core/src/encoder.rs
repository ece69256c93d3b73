//! Two-layer GATv2 message-passing encoder with an explicit reverse pass.
//!
//! For an edge `u → v` and head `h`, with `S = H·W_src` and `D = H·W_dst`:
//!
//! ```text
//! z_uv      = S[u] + D[v]                      (head block of width d_h)
//! e_uv      = att_h · LeakyReLU(z_uv)          (slope 0.2)
//! alpha_uv  = softmax over the in-edges of v
//! out[v]    = Σ_u alpha_uv · S[u] + bias
//! ```
//!
//! Layer 1 has four heads whose outputs are concatenated, followed by ReLU and
//! (in training mode) inverted dropout. Layer 2 is a single head followed by
//! ReLU. The source projection doubles as the message, as in GATv2.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeGraph;
use crate::nn::{add_row_bias, bias_grad, relu_backward_inplace, relu_inplace, Param, Parameters};

pub const NEGATIVE_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn new(in_dim: usize, hidden: usize, dropout: f64) -> Self {
        Self {
            in_dim,
            hidden,
            heads: 4,
            dropout,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden == 0 || self.heads == 0 {
            return Err(Error::InvalidArgument(
                "encoder dimensions must be positive".into(),
            ));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    heads: usize,
    pub w_src: Param,
    pub w_dst: Param,
    pub att: Param,
    pub bias: Param,
}

/// Activations of one layer kept for the reverse pass.
#[derive(Debug, Clone)]
struct LayerTape {
    input: Array2<f64>,
    src: Array2<f64>,
    dst: Array2<f64>,
    /// Per edge, `S[u] + D[v]` before the LeakyReLU.
    pair: Array2<f64>,
    /// Per edge and head attention weight.
    alpha: Array2<f64>,
    /// Layer output before the ReLU.
    out: Array2<f64>,
}

impl GatLayer {
    fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, heads: usize, rng: &mut R) -> Self {
        let head_dim = out_dim / heads;
        Self {
            heads,
            w_src: Param::glorot(in_dim, out_dim, in_dim, out_dim, rng),
            w_dst: Param::glorot(in_dim, out_dim, in_dim, out_dim, rng),
            att: Param::glorot(1, out_dim, head_dim, 1, rng),
            bias: Param::zeros(1, out_dim),
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    fn head_dim(&self) -> usize {
        self.w_src.value.ncols() / self.heads
    }

    fn forward(&self, input: &Array2<f64>, adj: &Adjacency) -> LayerTape {
        let src = input.dot(&self.w_src.value);
        let dst = input.dot(&self.w_dst.value);
        let (n, width) = src.dim();
        let dh = self.head_dim();
        let att = self.att.value.row(0);

        let mut pair = Array2::zeros((adj.edges.len(), width));
        let mut scores = Array2::zeros((adj.edges.len(), self.heads));
        for (e, &(u, v)) in adj.edges.iter().enumerate() {
            let mut z = pair.row_mut(e);
            z.assign(&src.row(u));
            z += &dst.row(v);
            for h in 0..self.heads {
                let mut score = 0.0;
                for c in h * dh..(h + 1) * dh {
                    score += att[c] * leaky(z[c]);
                }
                scores[[e, h]] = score;
            }
        }

        let mut alpha = Array2::zeros((adj.edges.len(), self.heads));
        for incoming in &adj.incoming {
            for h in 0..self.heads {
                let max = incoming
                    .iter()
                    .fold(f64::NEG_INFINITY, |m, &e| m.max(scores[[e, h]]));
                let mut total = 0.0;
                for &e in incoming {
                    let w = (scores[[e, h]] - max).exp();
                    alpha[[e, h]] = w;
                    total += w;
                }
                for &e in incoming {
                    alpha[[e, h]] /= total;
                }
            }
        }

        let mut out = Array2::zeros((n, width));
        for (e, &(u, v)) in adj.edges.iter().enumerate() {
            for h in 0..self.heads {
                let a = alpha[[e, h]];
                for c in h * dh..(h + 1) * dh {
                    out[[v, c]] += a * src[[u, c]];
                }
            }
        }
        add_row_bias(&mut out, &self.bias.value);

        LayerTape {
            input: input.clone(),
            src,
            dst,
            pair,
            alpha,
            out,
        }
    }

    /// Accumulates parameter gradients from `grad_out` (gradient on the
    /// pre-ReLU output) and returns the gradient on the layer input.
    fn backward(
        &mut self,
        tape: &LayerTape,
        grad_out: &Array2<f64>,
        adj: &Adjacency,
    ) -> Array2<f64> {
        let dh = self.head_dim();
        let att = self.att.value.row(0).to_owned();
        let mut g_src = Array2::zeros(tape.src.raw_dim());
        let mut g_dst = Array2::zeros(tape.dst.raw_dim());
        let mut g_att = Array2::zeros(self.att.value.raw_dim());

        self.bias.grad += &bias_grad(grad_out);

        // Gradient on each attention weight, then through the per-destination softmax.
        let mut g_alpha = Array2::zeros(tape.alpha.raw_dim());
        for (e, &(u, v)) in adj.edges.iter().enumerate() {
            for h in 0..self.heads {
                let a = tape.alpha[[e, h]];
                let mut dot = 0.0;
                for c in h * dh..(h + 1) * dh {
                    let g = grad_out[[v, c]];
                    g_src[[u, c]] += a * g;
                    dot += g * tape.src[[u, c]];
                }
                g_alpha[[e, h]] = dot;
            }
        }
        let mut g_score = Array2::zeros(tape.alpha.raw_dim());
        for incoming in &adj.incoming {
            for h in 0..self.heads {
                let weighted: f64 = incoming
                    .iter()
                    .map(|&e| tape.alpha[[e, h]] * g_alpha[[e, h]])
                    .sum();
                for &e in incoming {
                    g_score[[e, h]] = tape.alpha[[e, h]] * (g_alpha[[e, h]] - weighted);
                }
            }
        }

        for (e, &(u, v)) in adj.edges.iter().enumerate() {
            for h in 0..self.heads {
                let gs = g_score[[e, h]];
                if gs == 0.0 {
                    continue;
                }
                for c in h * dh..(h + 1) * dh {
                    let z = tape.pair[[e, c]];
                    g_att[[0, c]] += gs * leaky(z);
                    let gz = gs * att[c] * leaky_grad(z);
                    g_src[[u, c]] += gz;
                    g_dst[[v, c]] += gz;
                }
            }
        }

        self.att.grad += &g_att;
        self.w_src.grad += &tape.input.t().dot(&g_src);
        self.w_dst.grad += &tape.input.t().dot(&g_dst);
        g_src.dot(&self.w_src.value.t()) + g_dst.dot(&self.w_dst.value.t())
    }

    fn params_mut<'a>(&'a mut self, prefix: &str) -> Vec<(String, &'a mut Param)> {
        vec![
            (format!("{prefix}.w_src"), &mut self.w_src),
            (format!("{prefix}.w_dst"), &mut self.w_dst),
            (format!("{prefix}.att"), &mut self.att),
            (format!("{prefix}.bias"), &mut self.bias),
        ]
    }

    fn params<'a>(&'a self, prefix: &str) -> Vec<(String, &'a Param)> {
        vec![
            (format!("{prefix}.w_src"), &self.w_src),
            (format!("{prefix}.w_dst"), &self.w_dst),
            (format!("{prefix}.att"), &self.att),
            (format!("{prefix}.bias"), &self.bias),
        ]
    }
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        NEGATIVE_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        NEGATIVE_SLOPE
    }
}

#[derive(Debug, Clone)]
struct Adjacency {
    edges: Vec<(usize, usize)>,
    incoming: Vec<Vec<usize>>,
}

impl Adjacency {
    fn new(graph: &NodeGraph) -> Result<Self> {
        let mut incoming = vec![Vec::new(); graph.num_nodes()];
        for (e, &(_, v)) in graph.edges().iter().enumerate() {
            incoming[v].push(e);
        }
        if let Some(v) = incoming.iter().position(Vec::is_empty) {
            return Err(Error::Data(format!(
                "node {v} has no incoming edge; add self-loops before encoding"
            )));
        }
        Ok(Self {
            edges: graph.edges().to_vec(),
            incoming,
        })
    }
}

/// Everything the reverse pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    adj: Adjacency,
    layer1: LayerTape,
    dropout_mask: Option<Array2<f64>>,
    layer2: LayerTape,
}

impl ForwardTape {
    /// Attention weights of layer 1 (`edges × heads`) and layer 2 (`edges × 1`).
    pub fn attention(&self) -> (&Array2<f64>, &Array2<f64>) {
        (&self.layer1.alpha, &self.layer2.alpha)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.adj.edges
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    pub layer1: GatLayer,
    pub layer2: GatLayer,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layer1 = GatLayer::new(config.in_dim, config.hidden, config.heads, rng);
        let layer2 = GatLayer::new(config.hidden, config.hidden, 1, rng);
        Ok(Self {
            config,
            layer1,
            layer2,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Node embeddings (`N × hidden`) and the tape for [`Encoder::backward`].
    ///
    /// `rng_seed` only drives the dropout mask in training mode.
    pub fn forward(
        &self,
        graph: &NodeGraph,
        mode: Mode,
        rng_seed: u64,
    ) -> Result<(Array2<f64>, ForwardTape)> {
        if graph.num_nodes() == 0 {
            return Err(Error::Data("cannot encode an empty graph".into()));
        }
        if graph.feature_dim() != self.config.in_dim {
            return Err(Error::DimensionMismatch {
                what: "node feature width",
                expected: self.config.in_dim,
                actual: graph.feature_dim(),
            });
        }
        let adj = Adjacency::new(graph)?;

        let layer1 = self.layer1.forward(graph.features(), &adj);
        let mut hidden = layer1.out.clone();
        relu_inplace(&mut hidden);
        let dropout_mask = match mode {
            Mode::Train if self.config.dropout > 0.0 => {
                let keep = 1.0 - self.config.dropout;
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                let mask = Array2::from_shape_simple_fn(hidden.raw_dim(), || {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                hidden *= &mask;
                Some(mask)
            }
            _ => None,
        };

        let layer2 = self.layer2.forward(&hidden, &adj);
        let mut embeddings = layer2.out.clone();
        relu_inplace(&mut embeddings);

        Ok((
            embeddings,
            ForwardTape {
                adj,
                layer1,
                dropout_mask,
                layer2,
            },
        ))
    }

    /// Accumulates gradients into every parameter and returns the gradient on
    /// the input features.
    pub fn backward(
        &mut self,
        tape: &ForwardTape,
        grad_embeddings: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let expected = tape.layer2.out.dim();
        if grad_embeddings.dim() != expected {
            return Err(Error::DimensionMismatch {
                what: "embedding gradient rows x cols",
                expected: expected.0 * expected.1,
                actual: grad_embeddings.len(),
            });
        }
        let mut g2 = grad_embeddings.clone();
        relu_backward_inplace(&mut g2, &tape.layer2.out);
        let mut g_hidden = self.layer2.backward(&tape.layer2, &g2, &tape.adj);
        if let Some(mask) = &tape.dropout_mask {
            g_hidden *= mask;
        }
        relu_backward_inplace(&mut g_hidden, &tape.layer1.out);
        Ok(self.layer1.backward(&tape.layer1, &g_hidden, &tape.adj))
    }
}

impl Parameters for Encoder {
    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = self.layer1.params_mut("encoder.layer1");
        out.extend(self.layer2.params_mut("encoder.layer2"));
        out
    }

    fn params(&self) -> Vec<(String, &Param)> {
        let mut out = self.layer1.params("encoder.layer1");
        out.extend(self.layer2.params("encoder.layer2"));
        out
    }
}
