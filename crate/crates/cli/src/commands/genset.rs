use std::fs;

use log::info;
use soma_forge::reid_eval::split_identities;
use soma_forge::synthset::{
    generate_dataset, partition, read_manifest, reduce_poses, reduce_subjects, write_manifest,
    DatasetManifest, Split,
};
use soma_forge::{Error, Result, SeededRng};

use super::{HOLDOUT_STREAM, PARTITION_STREAM, REDUCE_STREAM};
use crate::config::RunConfig;

pub(super) fn run(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let d = &cfg.dataset;
    let manifest = if d.reduce_poses.is_some() || d.reduce_subjects.is_some() {
        let src = cfg.data_dir()?;
        let same = match (src.canonicalize(), out.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
        if same {
            return Err(Error::Usage(
                "the reduced dataset needs an output directory of its own".into(),
            ));
        }
        let mut m = read_manifest(src)?;
        let mut rng = SeededRng::derive(cfg.seed, REDUCE_STREAM);
        if let Some(n) = d.reduce_subjects {
            m = reduce_subjects(&m, n, &mut rng)?;
        }
        if let Some(n) = d.reduce_poses {
            m = reduce_poses(&m, n, &mut rng)?;
        }
        for r in &m.records {
            let to = out.join(&r.path);
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::Io {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
            let from = src.join(&r.path);
            fs::copy(&from, &to).map_err(|e| Error::Io {
                path: from.clone(),
                source: e,
            })?;
        }
        info!("kept {} of the images in {}", m.len(), src.display());
        m
    } else {
        let m = generate_dataset(&d.generate, out)?;
        info!("rendered {} images", m.len());
        m
    };
    let m = match d.holdout_subjects {
        None => partition(
            &manifest,
            d.split,
            &mut SeededRng::derive(cfg.seed, PARTITION_STREAM),
        )?,
        Some(n) => holdout(cfg, &manifest, n)?,
    };
    write_manifest(out, &m)
}

/// Test split of `n` whole subjects; the rest split into training and
/// validation.
fn holdout(cfg: &RunConfig, manifest: &DatasetManifest, n: usize) -> Result<DatasetManifest> {
    let [train, val, _] = cfg.dataset.split;
    if !(train > 0.0 && val >= 0.0) {
        return Err(Error::Config(format!(
            "held-out subjects need a positive training fraction, not {train}"
        )));
    }
    let (_, test) = split_identities(
        &manifest.subject_ids(),
        n,
        &mut SeededRng::derive(cfg.seed, HOLDOUT_STREAM),
    )?;
    let mut m = partition(
        manifest,
        [train / (train + val), val / (train + val), 0.0],
        &mut SeededRng::derive(cfg.seed, PARTITION_STREAM),
    )?;
    for r in &mut m.records {
        if test.binary_search(&r.subject_id).is_ok() {
            r.split = Some(Split::Test);
        }
    }
    info!("held out subjects {test:?}");
    Ok(m)
}
