//! Transductive leave-out-class training.
//!
//! The whole graph, OOD nodes included, goes through the encoder at every
//! step. Only training nodes whose label is an ID class contribute to the
//! loss, and heads only ever see the ID classes, re-indexed `0..|ID|`.

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{ClassUniverse, FocalFamily, MAX_POWER_SET_CLASSES};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::graph::{id_mask_for, NodeGraph, OodSplit, Split};
use crate::heads::{BeliefHead, VanillaHead};
use crate::loss::LossConfig;
use crate::model::{ClassMap, Head, Model, ModelKind, Prediction};
use crate::nn::{Optimizer, OptimizerKind, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    /// Total epochs, warm-up included.
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub seed: u64,
    pub ood_classes: Vec<usize>,
    pub budget: usize,
    pub max_card: usize,
    pub loss: LossConfig,
    pub use_full_power_set: bool,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Rsgnn,
            epochs: 200,
            warmup_epochs: 1,
            lr: 0.1,
            hidden: 64,
            dropout: 0.2,
            seed: 0,
            ood_classes: Vec::new(),
            budget: 64,
            max_card: 3,
            loss: LossConfig::default(),
            use_full_power_set: false,
            optimizer: OptimizerKind::Gd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs > self.epochs {
            return Err(Error::InvalidArgument(format!(
                "warm-up epochs ({}) exceed total epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.model == ModelKind::Rsgnn && self.max_card < 2 {
            return Err(Error::InvalidArgument("max_card must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Absent when the graph has no ID validation nodes.
    pub val_acc: Option<f64>,
}

/// `epoch,train_loss,val_acc` with shortest round-trip floats.
pub fn trace_to_csv(trace: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_acc\n");
    for r in trace {
        let val = r.val_acc.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, val));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    pub class_map: ClassMap,
    pub ood: OodSplit,
    pub epoch: usize,
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
    /// Warm-up confusion over original class indices (rsgnn only).
    pub confusion: Option<Array2<f64>>,
    pub rng: ChaCha8Rng,
}

/// Graph with self-loops plus everything derived from the class split.
struct Setup {
    graph: NodeGraph,
    ood: OodSplit,
    class_map: ClassMap,
    labels: Vec<Option<usize>>,
    train_mask: Vec<bool>,
    val_mask: Vec<bool>,
}

impl Setup {
    fn new(config: &TrainConfig, graph: &NodeGraph) -> Result<Self> {
        config.validate()?;
        let graph = graph.with_self_loops();
        let ood = OodSplit::new(graph.num_classes(), config.ood_classes.iter().copied())?;
        let class_map = ClassMap::new(&ood);
        let labels = class_map.local_labels(&graph);
        let train_mask = id_mask_for(&graph, &ood, Split::Train);
        if !train_mask.iter().any(|&m| m) {
            return Err(Error::Data("no labeled ID training nodes".into()));
        }
        let val_mask = id_mask_for(&graph, &ood, Split::Val);
        Ok(Self {
            graph,
            ood,
            class_map,
            labels,
            train_mask,
            val_mask,
        })
    }

    fn accuracy(&self, pred: &Prediction, mask: &[bool]) -> Option<f64> {
        let yhat = pred.predicted();
        let (mut hit, mut total) = (0usize, 0usize);
        for v in (0..mask.len()).filter(|&v| mask[v]) {
            total += 1;
            hit += usize::from(Some(yhat[v]) == self.labels[v]);
        }
        (total > 0).then(|| hit as f64 / total as f64)
    }
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    setup: &'a Setup,
    rng: ChaCha8Rng,
    trace: Vec<EpochRecord>,
    best: Option<(f64, usize, Model)>,
}

impl Trainer<'_> {
    /// Runs `epochs` steps starting at trace position `self.trace.len()`.
    fn run(&mut self, model: &mut Model, epochs: usize, track_best: bool) -> Result<()> {
        let mut optimizer = Optimizer::new(self.config.optimizer, self.config.lr);
        for _ in 0..epochs {
            let epoch = self.trace.len() + 1;
            let seed = self.rng.next_u64();
            let loss = model.loss_and_grad(
                &self.setup.graph,
                &self.setup.labels,
                &self.setup.train_mask,
                &self.config.loss,
                seed,
            )?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "training loss",
                    epoch,
                });
            }
            if model
                .params()
                .iter()
                .any(|(_, p)| p.grad.iter().any(|g| !g.is_finite()))
            {
                return Err(Error::NonFinite {
                    what: "gradient",
                    epoch,
                });
            }
            optimizer.step(model);
            let val_acc = if self.setup.val_mask.iter().any(|&m| m) {
                let pred = model.predict(&self.setup.graph)?;
                self.setup.accuracy(&pred, &self.setup.val_mask)
            } else {
                None
            };
            if let (true, Some(acc)) = (track_best, val_acc) {
                if self.best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                    self.best = Some((acc, epoch, model.clone()));
                }
            }
            self.trace.push(EpochRecord {
                epoch,
                train_loss: loss,
                val_acc,
            });
        }
        Ok(())
    }
}

/// `confusion[i][j]` counts ID training nodes of class `i` predicted as `j`,
/// over original class indices; rows and columns of OOD classes stay zero.
fn embedded_confusion(setup: &Setup, pred: &Prediction, num_classes: usize) -> Array2<f64> {
    let mut confusion = Array2::zeros((num_classes, num_classes));
    let yhat = pred.predicted();
    for v in (0..setup.graph.num_nodes()).filter(|&v| setup.train_mask[v]) {
        if let Some(y) = setup.labels[v] {
            let i = setup.class_map.to_global(y);
            let j = setup.class_map.to_global(yhat[v]);
            confusion[[i, j]] += 1.0;
        }
    }
    confusion
}

fn new_encoder(config: &TrainConfig, setup: &Setup, rng: &mut ChaCha8Rng) -> Result<Encoder> {
    Encoder::new(
        EncoderConfig::new(setup.graph.feature_dim(), config.hidden, config.dropout),
        rng,
    )
}

/// Warm-up phase with a temporary softmax head over the ID classes. Returns
/// the model (encoder kept, head to be replaced) and the confusion matrix.
fn warm_up(trainer: &mut Trainer<'_>) -> Result<(Model, Array2<f64>)> {
    let setup = trainer.setup;
    let config = trainer.config;
    let encoder = new_encoder(config, setup, &mut trainer.rng)?;
    let head = VanillaHead::new(config.hidden, setup.class_map.len(), &mut trainer.rng);
    let mut model = Model {
        encoder,
        head: Head::Vanilla(head),
    };
    trainer.run(&mut model, config.warmup_epochs, false)?;
    let pred = model.predict(&setup.graph)?;
    let confusion = embedded_confusion(setup, &pred, setup.graph.num_classes());
    Ok((model, confusion))
}

/// Confusion matrix at the end of the warm-up phase, over original classes.
pub fn warmup_confusion(config: &TrainConfig, graph: &NodeGraph) -> Result<Array2<f64>> {
    let setup = Setup::new(config, graph)?;
    let mut trainer = Trainer {
        config,
        setup: &setup,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        trace: Vec::new(),
        best: None,
    };
    Ok(warm_up(&mut trainer)?.1)
}

/// Focal family over the local ID universe.
fn choose_family(
    config: &TrainConfig,
    class_map: &ClassMap,
    confusion: &Array2<f64>,
) -> Result<FocalFamily> {
    let c = class_map.len();
    let universe = ClassUniverse::new(c)?;
    if config.use_full_power_set && c <= MAX_POWER_SET_CLASSES {
        return FocalFamily::power_set(universe);
    }
    let ids = class_map.id_classes();
    let local = Array2::from_shape_fn((c, c), |(i, j)| confusion[[ids[i], ids[j]]]);
    FocalFamily::budgeted(universe, &local, config.budget, config.max_card.min(c))
}

/// Full training run. The returned model is the best-validation snapshot when
/// the graph has ID validation nodes, and the final parameters otherwise.
pub fn train(config: &TrainConfig, graph: &NodeGraph) -> Result<(TrainState, Vec<EpochRecord>)> {
    let setup = Setup::new(config, graph)?;
    if config.model == ModelKind::Rsgnn && setup.class_map.len() < 2 {
        return Err(Error::InvalidArgument(
            "a belief head needs at least two ID classes".into(),
        ));
    }
    let mut trainer = Trainer {
        config,
        setup: &setup,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        trace: Vec::new(),
        best: None,
    };
    let (mut model, confusion) = match config.model {
        ModelKind::Vanilla => {
            let encoder = new_encoder(config, &setup, &mut trainer.rng)?;
            let head = VanillaHead::new(config.hidden, setup.class_map.len(), &mut trainer.rng);
            let mut model = Model {
                encoder,
                head: Head::Vanilla(head),
            };
            trainer.run(&mut model, config.epochs, true)?;
            (model, None)
        }
        ModelKind::Rsgnn => {
            let (mut model, confusion) = warm_up(&mut trainer)?;
            let family = choose_family(config, &setup.class_map, &confusion)?;
            let head =
                BeliefHead::new(config.hidden, config.hidden, family.len(), &mut trainer.rng);
            model.head = Head::Belief { head, family };
            trainer.run(&mut model, config.epochs - config.warmup_epochs, true)?;
            (model, Some(confusion))
        }
    };
    let (best_val_acc, best_epoch) = match trainer.best.take() {
        Some((acc, epoch, snapshot)) => {
            model = snapshot;
            (Some(acc), Some(epoch))
        }
        None => (None, None),
    };
    model.zero_grad();
    let state = TrainState {
        model,
        class_map: setup.class_map.clone(),
        ood: setup.ood.clone(),
        epoch: trainer.trace.len(),
        best_epoch,
        best_val_acc,
        confusion,
        rng: trainer.rng,
    };
    Ok((state, trainer.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmConfig};

    fn small_sbm(seed: u64) -> NodeGraph {
        generate_sbm(&SbmConfig {
            num_classes: 4,
            nodes_per_class: 25,
            p_in: 0.2,
            p_out: 0.01,
            feature_dim: 8,
            feature_shift: 2.0,
            seed,
        })
        .unwrap()
    }

    fn quick(model: ModelKind) -> TrainConfig {
        TrainConfig {
            model,
            epochs: 30,
            warmup_epochs: 3,
            hidden: 16,
            ood_classes: vec![3],
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_and_stays_finite() {
        let g = small_sbm(1);
        for kind in [ModelKind::Vanilla, ModelKind::Rsgnn] {
            let (_, trace) = train(&quick(kind), &g).unwrap();
            assert_eq!(trace.len(), 30);
            assert!(trace.iter().all(|r| r.train_loss.is_finite()));
            let warm = if kind == ModelKind::Rsgnn { 3 } else { 0 };
            assert!(trace.last().unwrap().train_loss < trace[warm].train_loss);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let g = small_sbm(2);
        let cfg = quick(ModelKind::Rsgnn);
        let (a, ta) = train(&cfg, &g).unwrap();
        let (b, tb) = train(&cfg, &g).unwrap();
        assert_eq!(trace_to_csv(&ta), trace_to_csv(&tb));
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn vanilla_head_covers_id_classes_only() {
        let g = small_sbm(3);
        let (state, _) = train(&quick(ModelKind::Vanilla), &g).unwrap();
        let pred = state.model.predict(&g.with_self_loops()).unwrap();
        assert_eq!(pred.probs.ncols(), 3);
        assert_eq!(state.class_map.id_classes(), &[0, 1, 2]);
    }

    #[test]
    fn confusion_rows_count_id_training_nodes() {
        let g = small_sbm(4);
        for warmup in [0, 5] {
            let cfg = TrainConfig {
                warmup_epochs: warmup,
                ..quick(ModelKind::Rsgnn)
            };
            let conf = warmup_confusion(&cfg, &g).unwrap();
            assert_eq!(conf.dim(), (4, 4));
            for class in 0..4 {
                let expected = (0..g.num_nodes())
                    .filter(|&v| g.split()[v] == Split::Train && g.labels()[v] == class as i64)
                    .count() as f64;
                let expected = if class == 3 { 0.0 } else { expected };
                assert_eq!(conf.row(class).sum(), expected);
                assert_eq!(conf[[class, 3]], 0.0);
            }
        }
    }

    #[test]
    fn separable_warmup_confusion_is_nearly_diagonal() {
        let g = generate_sbm(&SbmConfig {
            num_classes: 4,
            nodes_per_class: 40,
            p_in: 0.3,
            p_out: 0.005,
            feature_dim: 8,
            feature_shift: 3.0,
            seed: 8,
        })
        .unwrap();
        let cfg = TrainConfig {
            warmup_epochs: 60,
            epochs: 60,
            hidden: 16,
            ..TrainConfig::default()
        };
        let conf = warmup_confusion(&cfg, &g).unwrap();
        let off: f64 = conf.sum() - conf.diag().sum();
        assert!(off < 0.1 * conf.sum(), "{conf}");
    }

    #[test]
    fn non_id_labels_never_produce_gradient() {
        let g = small_sbm(5).with_self_loops();
        let cfg = quick(ModelKind::Rsgnn);
        let setup = Setup::new(&cfg, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let family = FocalFamily::power_set(ClassUniverse::new(3).unwrap()).unwrap();
        let mut model = Model {
            encoder: new_encoder(&cfg, &setup, &mut rng).unwrap(),
            head: Head::Belief {
                head: BeliefHead::new(16, 16, family.len(), &mut rng),
                family,
            },
        };
        model
            .loss_and_grad(&setup.graph, &setup.labels, &setup.train_mask, &cfg.loss, 9)
            .unwrap();
        let before: Vec<_> = model.params().iter().map(|(_, p)| p.grad.clone()).collect();

        let masked: Vec<Option<usize>> = setup
            .labels
            .iter()
            .zip(&setup.train_mask)
            .map(|(&l, &m)| if m { l } else { None })
            .collect();
        model
            .loss_and_grad(&setup.graph, &masked, &setup.train_mask, &cfg.loss, 9)
            .unwrap();
        let after: Vec<_> = model.params().iter().map(|(_, p)| p.grad.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn best_validation_snapshot_is_kept() {
        let g = small_sbm(6);
        let (state, trace) = train(&quick(ModelKind::Vanilla), &g).unwrap();
        let best = trace
            .iter()
            .filter_map(|r| r.val_acc)
            .fold(f64::MIN, f64::max);
        assert_eq!(state.best_val_acc, Some(best));
        let epoch = state.best_epoch.unwrap();
        assert_eq!(trace[epoch - 1].val_acc, Some(best));
        assert!(trace[..epoch - 1].iter().all(|r| r.val_acc.unwrap() < best));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let g = small_sbm(7);
        let bad = [
            TrainConfig {
                warmup_epochs: 40,
                ..quick(ModelKind::Rsgnn)
            },
            TrainConfig {
                lr: 0.0,
                ..quick(ModelKind::Rsgnn)
            },
            TrainConfig {
                ood_classes: vec![0, 1, 2, 3],
                ..quick(ModelKind::Vanilla)
            },
            TrainConfig {
                ood_classes: vec![9],
                ..quick(ModelKind::Vanilla)
            },
            TrainConfig {
                ood_classes: vec![1, 2, 3],
                ..quick(ModelKind::Rsgnn)
            },
        ];
        for cfg in bad {
            assert!(train(&cfg, &g).is_err(), "{cfg:?}");
        }
        let mut unlabeled = g.clone();
        unlabeled.set_labels(vec![-1; g.num_nodes()]).unwrap();
        assert!(train(&quick(ModelKind::Vanilla), &unlabeled).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let g = small_sbm(8);
        let cfg = TrainConfig {
            lr: 1e200,
            optimizer: OptimizerKind::Gd,
            ..quick(ModelKind::Vanilla)
        };
        match train(&cfg, &g) {
            Err(Error::NonFinite { .. }) => {}
            other => panic!("expected a numerical failure, got {other:?}"),
        }
    }
}
