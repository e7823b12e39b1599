mod ablation;
mod eval;
mod genset;
mod probe;
mod report;
mod train;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use soma_forge::synthset::{load_images, read_manifest, DatasetManifest, ImageRecord, Split};
use soma_forge::training::{EvalRecord, LabeledSet};
use soma_forge::{Error, Result, Tensor};

use crate::config::RunConfig;
use crate::{Command, TrainingFlags};

pub use ablation::{AblationRow, ABLATION_CSV};
pub use eval::{EvalOutput, CMC_CSV, CMC_SVG, EVAL_REPORT};
pub use probe::{ProbeOutput, PROBE_REPORT, PROBE_SCORES, PROBE_SHEET};
pub use report::SUMMARY;
pub use train::{CHECKPOINT, HISTORY_CSV};

/// Stream ids derived from the run seed.
pub(crate) const PARTITION_STREAM: u64 = 0x5041_5254;
pub(crate) const INIT_STREAM: u64 = 0x494e_4954;
pub(crate) const REDUCE_STREAM: u64 = 0x5245_4455;
pub(crate) const PROBE_STREAM: u64 = 0x5052_4f42;
pub(crate) const PERMUTATION_STREAM: u64 = 0x5045_524d;
pub(crate) const HOLDOUT_STREAM: u64 = 0x484f_4c44;

fn apply_training(cfg: &mut RunConfig, f: &TrainingFlags) {
    let t = &mut cfg.training;
    if let Some(v) = f.lr {
        t.initial_lr = v;
    }
    if let Some(v) = f.batch {
        t.batch_size = v;
    }
    if let Some(v) = f.epochs {
        t.max_epochs = v;
    }
    if let Some(v) = f.momentum {
        t.momentum = v;
    }
    if let Some(v) = f.weight_decay {
        t.weight_decay = v;
    }
    if let Some(v) = f.patience {
        t.plateau_patience = v;
    }
    if f.mirror {
        t.mirror_augment = true;
    }
    let n = &mut cfg.network;
    if let Some(p) = f.profile {
        n.profile = p.into();
    }
    if let Some(v) = f.input_height {
        n.input_height = v;
    }
    if let Some(v) = f.input_width {
        n.input_width = v;
    }
}

/// Folds the per-command flags into the configuration.
pub fn apply_flags(cfg: &mut RunConfig, command: &Command) -> Result<()> {
    match command {
        Command::Genset(a) => {
            let g = &mut cfg.dataset.generate;
            if let Some(n) = a.subjects {
                g.n_female = n - n / 2;
                g.n_male = n / 2;
            }
            if let Some(n) = a.female {
                g.n_female = n;
            }
            if let Some(n) = a.male {
                g.n_male = n;
            }
            if let Some(n) = a.clothing {
                g.clothing_per_subject = n;
            }
            if let Some(n) = a.poses {
                g.poses = n;
            }
            if let Some(n) = a.width {
                g.width = n;
            }
            if let Some(n) = a.height {
                g.height = n;
            }
            if let Some(f) = a.format {
                g.image_format = f.into();
            }
            if a.from.is_some() {
                cfg.dataset.dir = a.from.clone();
            }
            if a.reduce_poses.is_some() {
                cfg.dataset.reduce_poses = a.reduce_poses;
            }
            if a.reduce_subjects.is_some() {
                cfg.dataset.reduce_subjects = a.reduce_subjects;
            }
            if let Some(s) = &a.split {
                cfg.dataset.split = [s[0], s[1], s[2]];
            }
            if a.holdout_subjects.is_some() {
                cfg.dataset.holdout_subjects = a.holdout_subjects;
            }
        }
        Command::Train(a) => {
            if a.data.is_some() {
                cfg.dataset.dir = a.data.clone();
            }
            apply_training(cfg, &a.training);
        }
        Command::Finetune(a) => {
            if a.data.is_some() {
                cfg.dataset.dir = a.data.clone();
            }
            if let Some(r) = a.body_lr_ratio {
                cfg.training.body_lr_ratio = r;
            }
            apply_training(cfg, &a.training);
        }
        Command::Eval(a) => {
            if a.data.is_some() {
                cfg.dataset.dir = a.data.clone();
            }
            let e = &mut cfg.eval;
            if let Some(p) = a.protocol {
                e.protocol = p.into();
            }
            if let Some(r) = a.rounds {
                e.rounds = r;
            }
            if let Some(f) = a.filter {
                e.filter = f.into();
            }
            if let Some(s) = a.split {
                e.split = s.into();
            }
            if let Some(r) = a.max_rank {
                e.max_rank = r;
            }
            if a.no_plot {
                e.plot = false;
            }
        }
        Command::Probe(a) => {
            if a.data.is_some() {
                cfg.dataset.dir = a.data.clone();
            }
            let p = &mut cfg.probe;
            if a.attribute.is_some() {
                p.attribute = a.attribute.clone();
            }
            if let Some(k) = a.k {
                p.k = k;
            }
            if let Some(n) = a.permutations {
                p.permutations = n;
            }
            if let Some(f) = a.localization {
                p.localization = f;
            }
            if let Some(s) = a.split {
                p.split = Some(s.into());
            }
            if let Some(n) = a.sheet {
                p.sheet = n;
            }
        }
        Command::Ablation(a) => {
            if a.data.is_some() {
                cfg.dataset.dir = a.data.clone();
            }
            if let Some(f) = &a.fractions {
                cfg.ablation.fractions = f.clone();
            }
            if let Some(s) = &a.seeds {
                cfg.ablation.seeds = s.clone();
            }
            if a.no_full {
                cfg.ablation.include_full = false;
            }
            apply_training(cfg, &a.training);
        }
        Command::Report(_) => {}
    }
    Ok(())
}

pub fn dispatch(cfg: &RunConfig, command: &Command) -> Result<()> {
    if let Command::Report(a) = command {
        let same = match (a.run.canonicalize(), cfg.out_dir()?.canonicalize()) {
            (Ok(x), Ok(y)) => x == y,
            _ => false,
        };
        if same {
            return Err(Error::Usage(
                "report output must go to a directory other than the run it reads".into(),
            ));
        }
    }
    cfg.echo()?;
    match command {
        Command::Genset(_) => genset::run(cfg),
        Command::Train(_) => train::run_train(cfg),
        Command::Finetune(a) => train::run_finetune(cfg, &a.checkpoint),
        Command::Eval(a) => eval::run(cfg, &a.checkpoint).map(|_| ()),
        Command::Probe(a) => probe::run(cfg, &a.checkpoint).map(|_| ()),
        Command::Ablation(_) => ablation::run(cfg).map(|_| ()),
        Command::Report(a) => report::run(cfg, &a.run),
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub(crate) fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Dense class index, in ascending id order, of every subject with
/// training or validation images.
pub(crate) fn label_map(manifest: &DatasetManifest) -> BTreeMap<usize, usize> {
    let trained: BTreeSet<usize> = manifest
        .records
        .iter()
        .filter(|r| matches!(r.split, Some(Split::Train | Split::Val)))
        .map(|r| r.subject_id)
        .collect();
    trained
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect()
}

pub(crate) fn select(
    manifest: &DatasetManifest,
    split: Option<Split>,
) -> Result<Vec<&ImageRecord>> {
    let records: Vec<&ImageRecord> = match split {
        Some(s) => manifest.split(s),
        None => manifest.records.iter().collect(),
    };
    if records.is_empty() {
        let what = match split {
            Some(s) => format!("the {} split", serde_json::to_string(&s)?.trim_matches('"')),
            None => "the manifest".into(),
        };
        return Err(Error::Data(format!("{what} has no images")));
    }
    Ok(records)
}

/// Images of `records` resampled to `input` (`C×H×W`), labelled through
/// `labels` (subject id when absent).
pub(crate) fn load_set(
    dir: &Path,
    records: &[&ImageRecord],
    input: [usize; 3],
    labels: Option<&BTreeMap<usize, usize>>,
) -> Result<LabeledSet<f32>> {
    let images = load_images(dir, records, input[2], input[1])?;
    let tensors: Vec<Tensor<f32>> = images.iter().map(|i| i.to_tensor()).collect();
    let labels = records
        .iter()
        .map(|r| match labels {
            Some(m) => m.get(&r.subject_id).copied().ok_or_else(|| {
                Error::Data(format!("{}: subject {} has no class", r.path, r.subject_id))
            }),
            None => Ok(r.subject_id),
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledSet::from_images(&tensors, labels)
}

pub(crate) fn load_dataset(cfg: &RunConfig) -> Result<(&Path, DatasetManifest)> {
    let dir = cfg.data_dir()?;
    Ok((dir, read_manifest(dir)?))
}

pub fn history_csv(history: &[EvalRecord]) -> String {
    let mut s = String::from("epoch,step,train_loss,val_loss,val_accuracy,lr\n");
    for r in history {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.step, r.train_loss, r.val_loss, r.val_accuracy, r.lr
        ));
    }
    s
}
