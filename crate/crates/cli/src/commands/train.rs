use std::path::Path;

use log::info;
use soma_forge::network::Network;
use soma_forge::synthset::{DatasetManifest, Split};
use soma_forge::training::{finetune, load_checkpoint, save_checkpoint, train, Checkpoint};
use soma_forge::{Result, SeededRng};

use super::{history_csv, label_map, load_dataset, load_set, select, write_file, INIT_STREAM};
use crate::config::RunConfig;

pub const CHECKPOINT: &str = "checkpoint.somf";
pub const HISTORY_CSV: &str = "history.csv";

/// Trains from scratch on the training split, validating on the
/// validation split; classes are the manifest's subjects.
pub(crate) fn train_on(
    cfg: &RunConfig,
    seed: u64,
    dir: &Path,
    manifest: &DatasetManifest,
) -> Result<Checkpoint<f32>> {
    let labels = label_map(manifest);
    let net = Network::new(cfg.network.build(labels.len()))?;
    let input = net.config().input_shape;
    let train_set = load_set(
        dir,
        &select(manifest, Some(Split::Train))?,
        input,
        Some(&labels),
    )?;
    let val_set = load_set(
        dir,
        &select(manifest, Some(Split::Val))?,
        input,
        Some(&labels),
    )?;
    let params = net.init_params::<f32>(&mut SeededRng::derive(seed, INIT_STREAM));
    let mut training = cfg.training.clone();
    training.seed = seed;
    info!(
        "training on {} images of {} subjects, validating on {}",
        train_set.len(),
        labels.len(),
        val_set.len()
    );
    train(&net, params, &train_set, &val_set, &training)
}

fn finish(cfg: &RunConfig, ckpt: &Checkpoint<f32>) -> Result<()> {
    let out = cfg.out_dir()?;
    if let Some(last) = ckpt.history.last() {
        info!(
            "epoch {}: val loss {:.4}, val accuracy {:.3}",
            last.epoch, last.val_loss, last.val_accuracy
        );
    }
    save_checkpoint(&out.join(CHECKPOINT), ckpt)?;
    write_file(&out.join(HISTORY_CSV), history_csv(&ckpt.history))
}

pub(super) fn run_train(cfg: &RunConfig) -> Result<()> {
    let (dir, manifest) = load_dataset(cfg)?;
    let ckpt = train_on(cfg, cfg.seed, dir, &manifest)?;
    finish(cfg, &ckpt)
}

pub(super) fn run_finetune(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let pretrained = load_checkpoint::<f32>(checkpoint)?;
    let (dir, manifest) = load_dataset(cfg)?;
    let labels = label_map(&manifest);
    let input = pretrained.network.input_shape;
    let train_set = load_set(
        dir,
        &select(&manifest, Some(Split::Train))?,
        input,
        Some(&labels),
    )?;
    let val_set = load_set(
        dir,
        &select(&manifest, Some(Split::Val))?,
        input,
        Some(&labels),
    )?;
    let ckpt = finetune(
        &pretrained,
        &train_set,
        &val_set,
        labels.len(),
        &cfg.training,
    )?;
    finish(cfg, &ckpt)
}
