use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{hflip, Dataset, LabeledPatch, Split};
use crate::error::{Error, Result};
use crate::graph::{GradWrt, LayerGraph, Network};
use crate::metrics::{argmax_labels, ConfusionMatrix};
use crate::tensor::{Element, Shape, Tensor};

use super::checkpoint::save_checkpoint;
use super::init::{derive_seed, init_network};
use super::loss::{cross_entropy_loss, one_hot};
use super::sgd::{sgd_step, OptimizerState};

pub const LOG_HEADER: &str = "epoch,loss,miou,acc,seconds";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Share of patches used for training when the dataset is not yet split.
    pub train_fraction: f64,
    pub flip_probability: f64,
    pub checkpoint_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    /// Record elapsed seconds in the log. Off by default so that reruns
    /// produce identical files.
    pub log_wall_time: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.00005,
            batch_size: 2,
            epochs: 20,
            seed: 0,
            train_fraction: 0.9,
            flip_probability: 0.5,
            checkpoint_path: None,
            log_path: None,
            log_wall_time: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        for (name, v) in [("train_fraction", self.train_fraction), ("flip_probability", self.flip_probability)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's steps.
    pub loss: f64,
    pub miou: f64,
    pub acc: f64,
    pub seconds: f64,
    pub steps: usize,
}

impl EpochRecord {
    pub fn csv_row(&self, wall_time: bool) -> String {
        let secs = if wall_time { self.seconds } else { 0.0 };
        format!("{},{:.8},{:.6},{:.6},{:.3}", self.epoch, self.loss, self.miou, self.acc, secs)
    }
}

pub struct TrainOutcome<T> {
    pub network: Network<T>,
    pub optimizer: OptimizerState<T>,
    pub log: Vec<EpochRecord>,
}

/// Stacks patch images into one `(N, 3, H, W)` batch.
pub fn stack_batch<T: Element>(patches: &[&LabeledPatch]) -> Result<Tensor<T>> {
    let first = patches
        .first()
        .ok_or_else(|| Error::Validation("empty batch".into()))?;
    let s = first.image.shape();
    let mut data = Vec::with_capacity(patches.len() * s.len());
    for p in patches {
        if p.image.shape() != s {
            return Err(Error::Validation(format!(
                "batch mixes patch shapes {s} and {}",
                p.image.shape()
            )));
        }
        data.extend(p.image.data().iter().map(|&v| T::lit(v as f64)));
    }
    Tensor::new(Shape::new(patches.len(), s.c(), s.h(), s.w()), data)
}

/// Confusion matrix of argmax predictions over `patches`.
pub fn evaluate<T: Element>(network: &Network<T>, patches: &[&LabeledPatch], batch_size: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(network.graph().n_classes());
    for chunk in patches.chunks(batch_size.max(1)) {
        let probs = network.forward(&stack_batch(chunk)?)?;
        for (pred, p) in argmax_labels(&probs).iter().zip(chunk) {
            cm.accumulate(pred, &p.label)?;
        }
    }
    Ok(cm)
}

/// Trains a freshly initialised network. The dataset is split with
/// `train_fraction` unless its manifest already assigns every patch.
///
/// Initialisation, shuffling and augmentation draw from separate streams
/// derived from `config.seed`.
pub fn train<T: Element>(
    graph: &LayerGraph,
    dataset: &Dataset,
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("training dataset is empty".into()));
    }
    let split;
    let dataset = if dataset.is_split() {
        dataset
    } else {
        split = dataset
            .clone()
            .with_split(config.train_fraction, derive_seed(config.seed, "split"))?;
        &split
    };
    let train_set = dataset.subset(Split::Train);
    let val_set = dataset.subset(Split::Val);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Validation(format!(
            "need both training and validation patches, got {} and {}",
            train_set.len(),
            val_set.len()
        )));
    }
    for p in train_set.iter().chain(&val_set) {
        graph.check_input(p.image.shape())?;
    }

    let mut network = init_network::<T>(graph.clone(), derive_seed(config.seed, "init"))?;
    let mut optimizer = OptimizerState::new(network.params());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle"));
    let mut flip_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "augment"));

    let mut log_file = match &config.log_path {
        Some(path) => {
            let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
            writeln!(f, "{LOG_HEADER}").map_err(|e| Error::io(path, e))?;
            drop(f);
            Some((path, OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?))
        }
        None => None,
    };

    let n_classes = graph.n_classes();
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let flipped: Vec<LabeledPatch> = idx
                .iter()
                .map(|&i| {
                    let p = train_set[i];
                    if flip_rng.random_bool(config.flip_probability) {
                        hflip(p)
                    } else {
                        p.clone()
                    }
                })
                .collect();
            let batch: Vec<&LabeledPatch> = flipped.iter().collect();
            let x = stack_batch::<T>(&batch)?;
            let labels = one_hot::<T>(&batch.iter().map(|p| &p.label).collect::<Vec<_>>(), n_classes)?;
            let cache = network.forward_train(&x)?;
            let (loss, grad) = cross_entropy_loss(cache.probs(), &labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { epoch, step: step + 1 });
            }
            let grads = network.backward(&cache, &grad, GradWrt::Logits)?;
            drop(cache);
            sgd_step(
                network.params_mut(),
                &grads,
                &mut optimizer,
                config.learning_rate,
                config.momentum,
                config.weight_decay,
            )?;
            loss_sum += loss;
            steps += 1;
        }
        if network.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite { epoch, step: steps });
        }
        let cm = evaluate(&network, &val_set, config.batch_size)?;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / steps as f64,
            miou: cm.miou()?,
            acc: cm.acc()?,
            seconds: start.elapsed().as_secs_f64(),
            steps,
        };
        if let Some(path) = &config.checkpoint_path {
            save_checkpoint(path, &network, Some(&optimizer))?;
        }
        if let Some((path, f)) = &mut log_file {
            writeln!(f, "{}", record.csv_row(config.log_wall_time)).map_err(|e| Error::io(*path, e))?;
            f.flush().map_err(|e| Error::io(*path, e))?;
        }
        on_epoch(&record);
        log.push(record);
    }
    Ok(TrainOutcome { network, optimizer, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::graph::{build_architecture, ArchitectureSpec};

    fn tiny_graph() -> LayerGraph {
        let spec = ArchitectureSpec::from_toml(
            "variant = \"custom\"\nbase_e = 4\nencoder_rate_schedule = [[1], [1], [2]]\nmodules_per_encoder_sequence = 1\nmodules_per_decoder_sequence = 1\n",
        )
        .unwrap();
        build_architecture(&spec).unwrap()
    }

    #[test]
    fn counts_steps() {
        let data = Dataset::from_patches(gen_synthetic(5, 32, 1).unwrap());
        let cfg = TrainingConfig {
            epochs: 1,
            train_fraction: 0.8,
            ..Default::default()
        };
        let out = train::<f32>(&tiny_graph(), &data, &cfg, |_| {}).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].steps, 2);
    }

    #[test]
    fn zero_learning_rate_keeps_initialisation() {
        let data = Dataset::from_patches(gen_synthetic(3, 16, 1).unwrap());
        let cfg = TrainingConfig {
            epochs: 2,
            learning_rate: 0.0,
            seed: 4,
            ..Default::default()
        };
        let g = tiny_graph();
        let out = train::<f64>(&g, &data, &cfg, |_| {}).unwrap();
        let init = init_network::<f64>(g, derive_seed(4, "init")).unwrap();
        assert_eq!(out.network.params(), init.params());
    }
}
