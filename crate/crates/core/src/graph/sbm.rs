use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NodeGraph, Split};
use crate::error::{Error, Result};

/// Planted-partition graph with class-conditional Gaussian features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_shift: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            num_classes: 6,
            nodes_per_class: 100,
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 16,
            feature_shift: 1.0,
            seed: 0,
        }
    }
}

/// Samples a stochastic block model.
///
/// Nodes are laid out class by class. Each unordered pair is linked with
/// probability `p_in` (same class) or `p_out` (different classes) and stored as
/// two reciprocal edges. Features are `feature_shift · e_{c mod d}` plus unit
/// Gaussian noise. Splits are 60/20/20 train/val/test over a seeded shuffle.
pub fn generate_sbm(config: &SbmConfig) -> Result<NodeGraph> {
    let SbmConfig {
        num_classes,
        nodes_per_class,
        p_in,
        p_out,
        feature_dim,
        feature_shift,
        seed,
    } = *config;
    if !(0.0 <= p_out && p_out <= p_in && p_in <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if num_classes == 0 || nodes_per_class == 0 || feature_dim == 0 {
        return Err(Error::InvalidArgument(
            "classes, nodes per class and feature dim must be positive".into(),
        ));
    }
    if !feature_shift.is_finite() {
        return Err(Error::InvalidArgument(
            "feature shift must be finite".into(),
        ));
    }

    let n = num_classes * nodes_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<i64> = (0..n).map(|v| (v / nodes_per_class) as i64).collect();

    let mut features = Array2::<f64>::zeros((n, feature_dim));
    for (v, mut row) in features.rows_mut().into_iter().enumerate() {
        for x in row.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        row[labels[v] as usize % feature_dim] += feature_shift;
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = n * 3 / 5;
    let n_val = n / 5;
    let mut split = vec![Split::Test; n];
    for (rank, &v) in order.iter().enumerate() {
        if rank < n_train {
            split[v] = Split::Train;
        } else if rank < n_train + n_val {
            split[v] = Split::Val;
        }
    }

    let metadata: BTreeMap<String, String> = [
        ("generator", "sbm".to_string()),
        ("num_classes", num_classes.to_string()),
        ("nodes_per_class", nodes_per_class.to_string()),
        ("p_in", p_in.to_string()),
        ("p_out", p_out.to_string()),
        ("feature_dim", feature_dim.to_string()),
        ("feature_shift", feature_shift.to_string()),
        ("seed", seed.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    Ok(NodeGraph::new(features, edges, labels, split)?.with_metadata(metadata))
}
