use std::path::PathBuf;

use log::info;
use serde::{Deserialize, Serialize};
use soma_forge::synthset::{
    generate_dataset, partition, read_manifest, reduce_poses, reduce_subjects, GenConfig,
};
use soma_forge::{Error, Result, SeededRng};

use super::eval::{describe_records, reid_rounds};
use super::train::train_on;
use super::{write_file, PARTITION_STREAM, REDUCE_STREAM};
use crate::config::RunConfig;

pub const ABLATION_CSV: &str = "ablation.csv";
const CSV_HEADER: &str = "variant,images,subjects,poses,seed,rank1,map";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub images: usize,
    pub subjects: usize,
    pub poses: usize,
    pub seed: u64,
    pub rank1: f64,
    pub map: f64,
}

impl AblationRow {
    pub fn to_csv(rows: &[AblationRow]) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for r in rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.variant, r.images, r.subjects, r.poses, r.seed, r.rank1, r.map
            ));
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Vec<AblationRow>> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Format("ablation CSV: unexpected header".into()));
        }
        lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let bad = || Error::Format(format!("ablation CSV: bad row `{line}`"));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 7 {
                    return Err(bad());
                }
                Ok(AblationRow {
                    variant: f[0].to_string(),
                    images: f[1].parse().map_err(|_| bad())?,
                    subjects: f[2].parse().map_err(|_| bad())?,
                    poses: f[3].parse().map_err(|_| bad())?,
                    seed: f[4].parse().map_err(|_| bad())?,
                    rank1: f[5].parse().map_err(|_| bad())?,
                    map: f[6].parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }
}

struct Variant {
    name: String,
    keep_subjects: Option<usize>,
    keep_poses: Option<usize>,
}

fn variants(cfg: &RunConfig, subjects: usize, poses: usize) -> Result<Vec<Variant>> {
    let mut out = Vec::new();
    if cfg.ablation.include_full {
        out.push(Variant {
            name: "full".into(),
            keep_subjects: None,
            keep_poses: None,
        });
    }
    for &f in &cfg.ablation.fractions {
        let ks = (f * subjects as f64).round() as usize;
        let kp = (f * poses as f64).round() as usize;
        if !(f > 0.0 && f <= 1.0) || ks == 0 || kp == 0 {
            return Err(Error::Config(format!(
                "fraction {f} of {subjects} subjects and {poses} poses is not a feasible reduction"
            )));
        }
        // Subject-rich: every subject, fewer poses. Pose-rich: the reverse.
        out.push(Variant {
            name: format!("fewer-poses@{f}"),
            keep_subjects: None,
            keep_poses: Some(kp),
        });
        out.push(Variant {
            name: format!("fewer-subjects@{f}"),
            keep_subjects: Some(ks),
            keep_poses: None,
        });
    }
    if out.is_empty() {
        return Err(Error::Config("the ablation has no variants".into()));
    }
    Ok(out)
}

/// Trains every variant for every seed and scores it by single- or
/// multi-shot re-identification on a held-out population of new subjects.
pub(super) fn run(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    let out = cfg.out_dir()?;
    let a = &cfg.ablation;
    if a.seeds.is_empty() {
        return Err(Error::Config("the ablation needs at least one seed".into()));
    }
    if !(a.val_fraction > 0.0 && a.val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "val_fraction {} outside (0, 1)",
            a.val_fraction
        )));
    }
    let (base_dir, base): (PathBuf, _) = match &cfg.dataset.dir {
        Some(d) => (d.clone(), read_manifest(d)?),
        None => {
            let d = out.join("base");
            let m = generate_dataset(&cfg.dataset.generate, &d)?;
            (d, m)
        }
    };
    let poses = base
        .header
        .poses
        .ok_or_else(|| Error::Data("the base dataset has no pose ids".into()))?;
    let variants = variants(cfg, base.header.subjects, poses)?;

    let held_cfg = GenConfig {
        n_female: a.test_subjects - a.test_subjects / 2,
        n_male: a.test_subjects / 2,
        clothing_per_subject: a.test_clothing,
        poses: a.test_poses,
        seed: a.test_seed,
        ..cfg.dataset.generate.clone()
    };
    let held_dir = out.join("heldout");
    let held = generate_dataset(&held_cfg, &held_dir)?;
    let held_records: Vec<_> = held.records.iter().collect();

    let mut rows = Vec::new();
    for &seed in &a.seeds {
        for v in &variants {
            let mut rng = SeededRng::derive(seed, REDUCE_STREAM);
            let mut m = base.clone();
            if let Some(n) = v.keep_subjects {
                m = reduce_subjects(&m, n, &mut rng)?;
            }
            if let Some(n) = v.keep_poses {
                m = reduce_poses(&m, n, &mut rng)?;
            }
            let m = partition(
                &m,
                [1.0 - a.val_fraction, a.val_fraction, 0.0],
                &mut SeededRng::derive(seed, PARTITION_STREAM),
            )?;
            let ckpt = train_on(cfg, seed, &base_dir, &m)?;
            let net = ckpt.network()?;
            let (_, items) = describe_records(
                &net,
                &ckpt.params,
                &held_dir,
                &held_records,
                cfg.eval.batch_size,
            )?;
            let (_, summary) = reid_rounds(&items, &cfg.eval, seed)?;
            let row = AblationRow {
                variant: v.name.clone(),
                images: m.len(),
                subjects: m.header.subjects,
                poses: m.header.poses.unwrap_or(0),
                seed,
                rank1: summary.mean_rank1,
                map: summary.mean_map,
            };
            info!(
                "{} seed {}: {} images, rank-1 {:.4}, mAP {:.4}",
                row.variant, seed, row.images, row.rank1, row.map
            );
            rows.push(row);
            write_file(&out.join(ABLATION_CSV), AblationRow::to_csv(&rows))?;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![AblationRow {
            variant: "fewer-poses@0.4".into(),
            images: 480,
            subjects: 10,
            poses: 12,
            seed: 2,
            rank1: 0.123456789,
            map: 0.5,
        }];
        let text = AblationRow::to_csv(&rows);
        assert_eq!(AblationRow::parse_csv(&text).unwrap(), rows);
        assert!(AblationRow::parse_csv("a,b\n").is_err());
    }

    #[test]
    fn matched_variants() {
        let cfg = RunConfig::default();
        let v = variants(&cfg, 10, 30).unwrap();
        let names: Vec<&str> = v.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["full", "fewer-poses@0.4", "fewer-subjects@0.4"]);
        assert_eq!(v[1].keep_poses, Some(12));
        assert_eq!(v[2].keep_subjects, Some(4));
        let mut bad = RunConfig::default();
        bad.ablation.fractions = vec![0.01];
        assert!(variants(&bad, 10, 30).is_err());
    }
}
