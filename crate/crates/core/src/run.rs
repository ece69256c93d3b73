//! Run directories: everything needed to reload a trained model.
//!
//! ```text
//! config.json     resolved configuration
//! family.txt      focal family (belief head only)
//! checkpoint.bin  parameters
//! trace.csv       epoch, train_loss, val_acc
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::FocalFamily;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::graph::{NodeGraph, OodSplit};
use crate::heads::{BeliefHead, VanillaHead};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{
    load_parameters, read_checkpoint, write_checkpoint, ClassMap, Head, Model, ModelKind,
};
use crate::training::{trace_to_csv, EpochRecord, TrainConfig, TrainState};

/// Training configuration plus the facts resolved from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub num_classes: usize,
    pub id_classes: Vec<usize>,
    pub in_dim: usize,
    pub best_epoch: Option<usize>,
}

impl RunConfig {
    pub fn resolve(train: &TrainConfig, state: &TrainState, graph: &NodeGraph) -> Self {
        Self {
            train: train.clone(),
            num_classes: graph.num_classes(),
            id_classes: state.class_map.id_classes().to_vec(),
            in_dim: graph.feature_dim(),
            best_epoch: state.best_epoch,
        }
    }
}

pub fn save_run(
    dir: &Path,
    config: &RunConfig,
    state: &TrainState,
    trace: &[EpochRecord],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    let json = serde_json::to_string_pretty(config).map_err(|e| Error::Data(e.to_string()))?;
    write("config.json", json + "\n")?;
    let family_path = dir.join("family.txt");
    match state.model.family() {
        Some(family) => write("family.txt", family.to_text())?,
        None if family_path.exists() => {
            fs::remove_file(&family_path).map_err(|e| Error::io(&family_path, e))?
        }
        None => {}
    }
    write_checkpoint(&state.model, &dir.join("checkpoint.bin"))?;
    write("trace.csv", trace_to_csv(trace))
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: RunConfig,
    pub model: Model,
    pub class_map: ClassMap,
    pub ood: OodSplit,
}

impl LoadedRun {
    pub fn evaluate(&self, graph: &NodeGraph) -> Result<EvalReport> {
        if graph.feature_dim() != self.config.in_dim {
            return Err(Error::DimensionMismatch {
                what: "node feature width",
                expected: self.config.in_dim,
                actual: graph.feature_dim(),
            });
        }
        evaluate(&self.model, &self.class_map, &self.ood, graph)
    }
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let config_path = dir.join("config.json");
    let text = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", config_path.display())))?;
    let ood = OodSplit::new(config.num_classes, config.train.ood_classes.iter().copied())?;
    let class_map = ClassMap::new(&ood);
    if class_map.id_classes() != config.id_classes.as_slice() {
        return Err(Error::Data(format!(
            "{}: id_classes disagree with ood_classes",
            config_path.display()
        )));
    }

    let t = &config.train;
    // Placeholder weights; every tensor is overwritten from the checkpoint.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let encoder = Encoder::new(
        EncoderConfig::new(config.in_dim, t.hidden, t.dropout),
        &mut rng,
    )?;
    let head = match t.model {
        ModelKind::Vanilla => Head::Vanilla(VanillaHead::new(t.hidden, class_map.len(), &mut rng)),
        ModelKind::Rsgnn => {
            let family_path = dir.join("family.txt");
            let text = fs::read_to_string(&family_path).map_err(|e| Error::io(&family_path, e))?;
            let family = FocalFamily::from_text(&text)?;
            if family.num_classes() != class_map.len() {
                return Err(Error::Data(format!(
                    "{}: family covers {} classes, run has {} ID classes",
                    family_path.display(),
                    family.num_classes(),
                    class_map.len()
                )));
            }
            Head::Belief {
                head: BeliefHead::new(t.hidden, t.hidden, family.len(), &mut rng),
                family,
            }
        }
    };
    let mut model = Model { encoder, head };
    load_parameters(&mut model, read_checkpoint(&dir.join("checkpoint.bin"))?)?;
    Ok(LoadedRun {
        config,
        model,
        class_map,
        ood,
    })
}
