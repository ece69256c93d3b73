//! Uncertainty scores, OOD detection, calibration and proper scoring rules.
//!
//! OOD nodes are the positive class throughout: a good score is larger on
//! OOD nodes than on ID nodes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::belief::EPS;
use crate::error::{Error, Result};
use crate::graph::{NodeGraph, OodSplit, Split};
use crate::model::{ClassMap, Model, ModelKind};

pub const ECE_BINS: usize = 15;

/// `1 − max_i p(i)` per row.
pub fn msp_score(probs: &Array2<f64>) -> Vec<f64> {
    probs
        .rows()
        .into_iter()
        .map(|r| 1.0 - r.fold(f64::NEG_INFINITY, |m, &p| m.max(p)))
        .collect()
}

/// `−Σ p ln(p + ε)` per row.
pub fn entropy_score(probs: &Array2<f64>) -> Vec<f64> {
    probs
        .rows()
        .into_iter()
        .map(|r| -r.iter().map(|&p| p * (p + EPS).ln()).sum::<f64>())
        .collect()
}

fn class_counts(targets: &[bool]) -> (usize, usize) {
    let pos = targets.iter().filter(|&&t| t).count();
    (pos, targets.len() - pos)
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Probability that a random OOD node outscores a random ID node, ties
/// counting one half. `None` unless both classes are present.
pub fn auroc(scores: &[f64], targets: &[bool]) -> Option<f64> {
    let (pos, neg) = class_counts(targets);
    if pos == 0 || neg == 0 || scores.len() != targets.len() {
        return None;
    }
    // Walk from the highest score down; every negative is beaten by the
    // positives already seen and ties with the positives in its own group.
    let mut wins = 0.0;
    let mut pos_above = 0usize;
    for group in tie_groups(scores) {
        let p = group.iter().filter(|&&i| targets[i]).count();
        let n = group.len() - p;
        wins += n as f64 * (pos_above as f64 + 0.5 * p as f64);
        pos_above += p;
    }
    Some(wins / (pos as f64 * neg as f64))
}

/// Average precision: precision at each distinct threshold weighted by the
/// recall gained there (no interpolation).
pub fn auprc(scores: &[f64], targets: &[bool]) -> Option<f64> {
    let (pos, neg) = class_counts(targets);
    if pos == 0 || neg == 0 || scores.len() != targets.len() {
        return None;
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    for group in tie_groups(scores) {
        let p = group.iter().filter(|&&i| targets[i]).count();
        tp += p;
        fp += group.len() - p;
        area += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
    }
    Some(area)
}

/// Smallest false-positive rate over thresholds `score ≥ s`, `s` ranging over
/// the observed scores, whose true-positive rate reaches 0.95.
pub fn fpr_at_95_tpr(scores: &[f64], targets: &[bool]) -> Option<f64> {
    let (pos, neg) = class_counts(targets);
    if pos == 0 || neg == 0 || scores.len() != targets.len() {
        return None;
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    for group in tie_groups(scores) {
        let p = group.iter().filter(|&&i| targets[i]).count();
        tp += p;
        fp += group.len() - p;
        if tp as f64 >= 0.95 * pos as f64 {
            return Some(fp as f64 / neg as f64);
        }
    }
    Some(1.0)
}

fn argmax_and_max(row: ndarray::ArrayView1<'_, f64>) -> (usize, f64) {
    let slice = row.to_vec();
    let i = crate::heads::argmax(&slice);
    (i, slice[i])
}

/// One equal-width confidence bin; `confidence` and `accuracy` are means over
/// the nodes in the bin and absent when it is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Reliability table over `bins` equal-width bins of the top-class confidence.
pub fn reliability_bins(probs: &Array2<f64>, labels: &[usize], bins: usize) -> Vec<ReliabilityBin> {
    if bins == 0 {
        return Vec::new();
    }
    let mut count = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        let (yhat, conf) = argmax_and_max(row);
        let b = ((conf * bins as f64).floor() as usize).min(bins - 1);
        count[b] += 1;
        correct[b] += usize::from(yhat == y);
        conf_sum[b] += conf;
    }
    (0..bins)
        .map(|b| {
            let k = count[b] as f64;
            ReliabilityBin {
                lower: b as f64 / bins as f64,
                upper: (b + 1) as f64 / bins as f64,
                count: count[b],
                confidence: (count[b] > 0).then(|| conf_sum[b] / k),
                accuracy: (count[b] > 0).then(|| correct[b] as f64 / k),
            }
        })
        .collect()
}

/// Expected calibration error over `bins` equal-width confidence bins.
pub fn ece(probs: &Array2<f64>, labels: &[usize], bins: usize) -> f64 {
    let n = labels.len();
    if n == 0 || bins == 0 {
        return 0.0;
    }
    reliability_bins(probs, labels, bins)
        .iter()
        .filter_map(|b| Some((b.count as f64 / n as f64) * (b.accuracy? - b.confidence?).abs()))
        .sum()
}

/// Mean of `−ln(p(y) + ε)`.
pub fn nll(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(v, &y)| -(probs[[v, y]] + EPS).ln())
        .sum();
    total / labels.len() as f64
}

/// Mean over nodes of the squared distance to the one-hot label.
pub fn brier(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(v, &y)| {
            probs
                .row(v)
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let d = p - if i == y { 1.0 } else { 0.0 };
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    total / labels.len() as f64
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdMetrics {
    pub accuracy: f64,
    pub ece: f64,
    pub nll: f64,
    pub brier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub fpr95: Option<f64>,
    pub mean_id: Option<f64>,
    pub mean_ood: Option<f64>,
}

impl ScoreReport {
    pub fn new(scores: &[f64], is_ood: &[bool]) -> Self {
        let mean = |want: bool| {
            let picked: Vec<f64> = scores
                .iter()
                .zip(is_ood)
                .filter(|(_, &t)| t == want)
                .map(|(&s, _)| s)
                .collect();
            (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
        };
        Self {
            auroc: auroc(scores, is_ood),
            auprc: auprc(scores, is_ood),
            fpr95: fpr_at_95_tpr(scores, is_ood),
            mean_id: mean(false),
            mean_ood: mean(true),
        }
    }
}

pub const SCORE_NAMES: [&str; 3] = ["entropy", "msp", "credal_width"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub num_id_test: usize,
    pub num_ood_test: usize,
    pub id_metrics: IdMetrics,
    /// Keyed by score name; `credal_width` only for the belief head.
    pub ood_detection: BTreeMap<String, ScoreReport>,
    /// ID test nodes only; written to its own table rather than the JSON.
    #[serde(skip)]
    pub reliability: Vec<ReliabilityBin>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn csv_header() -> String {
        let mut cols = vec![
            "model".to_string(),
            "num_id_test".into(),
            "num_ood_test".into(),
            "accuracy".into(),
            "ece".into(),
            "nll".into(),
            "brier".into(),
        ];
        for score in SCORE_NAMES {
            for field in ["auroc", "auprc", "fpr95", "mean_id", "mean_ood"] {
                cols.push(format!("{score}_{field}"));
            }
        }
        cols.join(",")
    }

    /// One row matching [`EvalReport::csv_header`]; missing values are empty.
    pub fn csv_row(&self) -> String {
        let m = &self.id_metrics;
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            self.model, self.num_id_test, self.num_ood_test, m.accuracy, m.ece, m.nll, m.brier
        );
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for score in SCORE_NAMES {
            let r = self.ood_detection.get(score);
            for v in [
                r.and_then(|r| r.auroc),
                r.and_then(|r| r.auprc),
                r.and_then(|r| r.fpr95),
                r.and_then(|r| r.mean_id),
                r.and_then(|r| r.mean_ood),
            ] {
                let _ = write!(row, ",{}", cell(v));
            }
        }
        row
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }

    /// `bin,lower,upper,count,confidence,accuracy`; empty bins leave the last
    /// two cells blank.
    pub fn reliability_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out = String::from("bin,lower,upper,count,confidence,accuracy\n");
        for (i, b) in self.reliability.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{}",
                b.lower,
                b.upper,
                b.count,
                cell(b.confidence),
                cell(b.accuracy)
            );
        }
        out
    }
}

/// Evaluates on labeled test nodes. ID metrics use the ID-labeled ones;
/// detection metrics use all of them with OOD as the positive class.
pub fn evaluate(
    model: &Model,
    class_map: &ClassMap,
    ood: &OodSplit,
    graph: &NodeGraph,
) -> Result<EvalReport> {
    let graph = graph.with_self_loops();
    let pred = model.predict(&graph)?;
    let mut nodes = Vec::new();
    let mut is_ood = Vec::new();
    for (v, (&label, &split)) in graph.labels().iter().zip(graph.split()).enumerate() {
        if split != Split::Test {
            continue;
        }
        if ood.is_id(label) || ood.is_ood(label) {
            nodes.push(v);
            is_ood.push(ood.is_ood(label));
        }
    }
    if nodes.is_empty() {
        return Err(Error::Data("no labeled test nodes to evaluate".into()));
    }
    let id_nodes: Vec<usize> = nodes
        .iter()
        .zip(&is_ood)
        .filter(|(_, &o)| !o)
        .map(|(&v, _)| v)
        .collect();
    if id_nodes.is_empty() {
        return Err(Error::Data("no ID-labeled test nodes to evaluate".into()));
    }

    let id_probs = pred.probs.select(ndarray::Axis(0), &id_nodes);
    let id_labels: Vec<usize> = id_nodes
        .iter()
        .map(|&v| {
            class_map
                .to_local(graph.labels()[v])
                .expect("ID label maps")
        })
        .collect();
    let predicted = pred.predicted();
    let id_pred: Vec<usize> = id_nodes.iter().map(|&v| predicted[v]).collect();
    let id_metrics = IdMetrics {
        accuracy: accuracy(&id_pred, &id_labels),
        ece: ece(&id_probs, &id_labels, ECE_BINS),
        nll: nll(&id_probs, &id_labels),
        brier: brier(&id_probs, &id_labels),
    };

    let probs = pred.probs.select(ndarray::Axis(0), &nodes);
    let entropy = match &pred.belief {
        Some(b) => nodes.iter().map(|&v| b.entropy[v]).collect(),
        None => entropy_score(&probs),
    };
    let mut ood_detection = BTreeMap::new();
    ood_detection.insert("entropy".to_string(), ScoreReport::new(&entropy, &is_ood));
    ood_detection.insert(
        "msp".to_string(),
        ScoreReport::new(&msp_score(&probs), &is_ood),
    );
    if let Some(b) = &pred.belief {
        let width: Vec<f64> = nodes.iter().map(|&v| b.credal_width[v]).collect();
        ood_detection.insert(
            "credal_width".to_string(),
            ScoreReport::new(&width, &is_ood),
        );
    }
    Ok(EvalReport {
        model: model.kind(),
        num_id_test: id_nodes.len(),
        num_ood_test: nodes.len() - id_nodes.len(),
        id_metrics,
        ood_detection,
        reliability: reliability_bins(&id_probs, &id_labels, ECE_BINS),
    })
}
