//! SGD training from scratch, fine-tuning with a replaced head, and
//! checkpoint persistence.

mod checkpoint;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use optim::{
    plateau_step, sgd_momentum_step, OptimizerState, PlateauSettings, ScheduleState, SgdSettings,
};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{apply_running_updates, is_head_param, Network, Parameters};
use crate::rng::SeededRng;
use crate::tensor::{one_hot, softmax_cross_entropy, BnMode, Scalar, Tensor};

/// Stream id for the head re-initialization when fine-tuning.
const HEAD_STREAM: u64 = 0x4845_4144;
/// Base stream id of the per-epoch mirror draws.
const MIRROR_STREAM: u64 = 0x4d49_5252 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Evaluations without improvement before the learning rate drops.
    pub plateau_patience: usize,
    pub plateau_epsilon: f64,
    pub lr_factor: f64,
    pub max_epochs: usize,
    /// Steps between validation passes; 0 means once per epoch.
    pub eval_every: u64,
    /// Training stops once the learning rate falls below this.
    pub min_lr: f64,
    /// Learning-rate multiplier of every layer below the head. Used only
    /// when fine-tuning.
    pub body_lr_ratio: f64,
    /// Mirror each training image left-right with probability 1/2.
    pub mirror_augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.1,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 1e-4,
            plateau_patience: 5,
            plateau_epsilon: 1e-3,
            lr_factor: 10.0,
            max_epochs: 60,
            eval_every: 0,
            min_lr: 1e-6,
            body_lr_ratio: 0.1,
            mirror_augment: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.initial_lr > 0.0) {
            return bad("initial_lr must be positive");
        }
        if !(self.lr_factor > 1.0) {
            return bad("lr_factor must exceed 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 || self.plateau_epsilon < 0.0 || self.min_lr < 0.0 {
            return bad("weight_decay, plateau_epsilon and min_lr must be non-negative");
        }
        if self.plateau_patience == 0 {
            return bad("plateau_patience must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.body_lr_ratio) {
            return bad("body_lr_ratio must lie in [0, 1]");
        }
        Ok(())
    }

    fn sgd(&self) -> SgdSettings {
        SgdSettings {
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    fn plateau(&self) -> PlateauSettings {
        PlateauSettings {
            patience: self.plateau_patience,
            epsilon: self.plateau_epsilon,
            factor: self.lr_factor,
        }
    }
}

/// One validation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub step: u64,
    /// Mean mini-batch loss since the previous evaluation.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
}

/// Images `N×C×H×W` with one class label each.
#[derive(Clone, Debug)]
pub struct LabeledSet<T> {
    images: Tensor<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(images: Tensor<T>, labels: Vec<usize>) -> Result<Self> {
        let [n, _, _, _] = images.dims4("labeled_set")?;
        if n != labels.len() {
            return Err(Error::Data(format!(
                "{n} images but {} labels",
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn from_images(images: &[Tensor<T>], labels: Vec<usize>) -> Result<Self> {
        let refs: Vec<&Tensor<T>> = images.iter().collect();
        if refs.is_empty() {
            return Err(Error::Data("no images".into()));
        }
        Self::new(Tensor::stack(&refs)?, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &Tensor<T> {
        &self.images
    }

    /// `C×H×W` of one image.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn image(&self, i: usize) -> Result<Tensor<T>> {
        let [c, h, w] = self.image_shape();
        self.images.slice_outer(i, i + 1)?.reshape(&[c, h, w])
    }

    /// The images at `indices`, stacked in that order.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let [c, h, w] = self.image_shape();
        let size = c * h * w;
        let src = self.images.data();
        let mut data = Vec::with_capacity(indices.len() * size);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Usage(format!("image index {i} out of range")));
            }
            data.extend_from_slice(&src[i * size..(i + 1) * size]);
        }
        Tensor::from_vec(&[indices.len(), c, h, w], data)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            images: self.gather(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }

    fn check_labels(&self, classes: usize, what: &str) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Data(format!("{what} set is empty")));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!(
                "{what} label {bad} outside [0, {classes})"
            )));
        }
        Ok(())
    }
}

/// Softmax classification quality over a labeled set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub loss: f64,
    /// `top_k[r - 1]`: fraction of images whose true class is among the `r`
    /// highest logits (ties go to the lower class index).
    pub top_k: Vec<f64>,
}

impl ClassifierEval {
    pub fn accuracy(&self) -> f64 {
        self.top_k.first().copied().unwrap_or(0.0)
    }
}

/// Inference-mode loss and top-k accuracies.
pub fn evaluate_classifier<T: Scalar>(
    net: &Network,
    params: &Parameters<T>,
    set: &LabeledSet<T>,
    batch_size: usize,
    max_rank: usize,
) -> Result<ClassifierEval> {
    let k = net.num_classes();
    set.check_labels(k, "evaluation")?;
    let max_rank = max_rank.clamp(1, k);
    let mut hits = vec![0usize; max_rank];
    let mut loss_sum = 0.0;
    let order: Vec<usize> = (0..set.len()).collect();
    for chunk in order.chunks(batch_size.max(1)) {
        let x = set.gather(chunk)?;
        let logits = net.forward(params, &x, BnMode::Inference)?.logits;
        let labels: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
        let (loss, _) = softmax_cross_entropy(&logits, &one_hot(&labels, k)?)?;
        loss_sum += loss.f64() * chunk.len() as f64;
        for (row, &label) in logits.data().chunks_exact(k).zip(&labels) {
            let target = row[label];
            let rank = row
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v > target || (v == target && j < label))
                .count();
            for h in hits.iter_mut().skip(rank) {
                *h += 1;
            }
        }
    }
    let n = set.len() as f64;
    Ok(ClassifierEval {
        loss: loss_sum / n,
        top_k: hits.iter().map(|&h| h as f64 / n).collect(),
    })
}

/// Trains every layer from the given starting parameters.
pub fn train<T: Scalar>(
    net: &Network,
    params: Parameters<T>,
    train_set: &LabeledSet<T>,
    val_set: &LabeledSet<T>,
    config: &TrainConfig,
) -> Result<Checkpoint<T>> {
    run(net, params, train_set, val_set, config, None)
}

/// Replaces the head with a fresh `num_new_classes` softmax and trains with
/// the body learning rate scaled by `config.body_lr_ratio`. A ratio of 0
/// freezes the body completely, batch-norm running statistics included.
pub fn finetune<T: Scalar>(
    pretrained: &Checkpoint<T>,
    train_set: &LabeledSet<T>,
    val_set: &LabeledSet<T>,
    num_new_classes: usize,
    config: &TrainConfig,
) -> Result<Checkpoint<T>> {
    let base = pretrained.network()?;
    let mut rng = SeededRng::derive(config.seed, HEAD_STREAM);
    let (net, params) = base.with_new_head(&pretrained.params, num_new_classes, &mut rng)?;
    run(
        &net,
        params,
        train_set,
        val_set,
        config,
        Some(config.body_lr_ratio),
    )
}

fn run<T: Scalar>(
    net: &Network,
    mut params: Parameters<T>,
    train_set: &LabeledSet<T>,
    val_set: &LabeledSet<T>,
    config: &TrainConfig,
    body_ratio: Option<f64>,
) -> Result<Checkpoint<T>> {
    config.validate()?;
    net.check_params(&params)?;
    let classes = net.num_classes();
    train_set.check_labels(classes, "training")?;
    val_set.check_labels(classes, "validation")?;
    let lr_scale = |name: &str| match body_ratio {
        Some(r) if !is_head_param(name) => r,
        _ => 1.0,
    };
    let frozen_body = body_ratio == Some(0.0);

    let mut state = OptimizerState::new(&params, config.initial_lr);
    let mut history = Vec::new();
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.max_epochs {
        if state.lr < config.min_lr {
            break;
        }
        order.sort_unstable();
        SeededRng::derive(config.seed, epoch as u64 + 1).shuffle(&mut order);
        let mut mirror_rng = SeededRng::derive(config.seed, MIRROR_STREAM + epoch as u64);
        for chunk in order.chunks(config.batch_size) {
            let mut x = train_set.gather(chunk)?;
            if config.mirror_augment {
                mirror_some(&mut x, &mut mirror_rng);
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let targets = one_hot(&labels, classes)?;
            let pass = net.forward(&params, &x, BnMode::Train)?;
            let (loss, g) = softmax_cross_entropy(&pass.logits, &targets)?;
            if !loss.f64().is_finite() {
                return Err(Error::Domain(format!(
                    "training diverged at step {} (loss {:?})",
                    state.step, loss
                )));
            }
            loss_sum += loss.f64();
            loss_count += 1;
            let grads = net.backward(&pass, &g)?;
            sgd_momentum_step(
                &mut params,
                &grads.params,
                &mut state,
                config.sgd(),
                lr_scale,
            )?;
            let updates = if frozen_body {
                pass.running_updates
                    .into_iter()
                    .filter(|(n, _)| is_head_param(n))
                    .collect()
            } else {
                pass.running_updates
            };
            apply_running_updates(&mut params, updates)?;
            if config.eval_every > 0 && state.step % config.eval_every == 0 {
                let rec = evaluate_epoch(
                    net, &params, val_set, config, epoch, &mut state, loss_sum, loss_count,
                )?;
                history.push(rec);
                loss_sum = 0.0;
                loss_count = 0;
            }
        }
        if config.eval_every == 0 {
            let rec = evaluate_epoch(
                net, &params, val_set, config, epoch, &mut state, loss_sum, loss_count,
            )?;
            history.push(rec);
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    Ok(Checkpoint {
        network: net.config().clone(),
        params,
        optimizer: Some(state),
        history,
        seed: config.seed,
        train_config: Some(config.clone()),
    })
}

/// Flips each image of an `N×C×H×W` batch with probability 1/2.
fn mirror_some<T: Scalar>(x: &mut Tensor<T>, rng: &mut SeededRng) {
    let s = x.shape();
    let (n, w) = (s[0], s[3]);
    let size = s[1] * s[2] * w;
    for i in 0..n {
        if rng.uniform() < 0.5 {
            for row in x.data_mut()[i * size..(i + 1) * size].chunks_mut(w) {
                row.reverse();
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate_epoch<T: Scalar>(
    net: &Network,
    params: &Parameters<T>,
    val_set: &LabeledSet<T>,
    config: &TrainConfig,
    epoch: usize,
    state: &mut OptimizerState<T>,
    loss_sum: f64,
    loss_count: usize,
) -> Result<EvalRecord> {
    let eval = evaluate_classifier(net, params, val_set, config.batch_size, 1)?;
    let rec = EvalRecord {
        epoch,
        step: state.step,
        train_loss: if loss_count > 0 {
            loss_sum / loss_count as f64
        } else {
            0.0
        },
        val_loss: eval.loss,
        val_accuracy: eval.accuracy(),
        lr: state.lr,
    };
    info!(
        "epoch {epoch} step {}: train loss {:.4}, val loss {:.4}, val acc {:.3}, lr {:e}",
        rec.step, rec.train_loss, rec.val_loss, rec.val_accuracy, rec.lr
    );
    if plateau_step(state, eval.loss, config.plateau()) {
        info!("validation loss plateaued; lr now {:e}", state.lr);
    }
    Ok(rec)
}
