use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use soma_forge::network::{Network, Parameters};
use soma_forge::reid_eval::{
    describe_batch, evaluate_multi_shot, evaluate_single_shot, EvalReport, LabeledDescriptor,
    Protocol, Shot, Summary,
};
use soma_forge::synthset::{ImageRecord, Split};
use soma_forge::training::{evaluate_classifier, load_checkpoint, ClassifierEval, LabeledSet};
use soma_forge::{Error, Result};

use super::{label_map, load_dataset, load_set, select, write_file, write_json};
use crate::config::{EvalBlock, RunConfig};
use crate::plot::{LineChart, Series};

pub const EVAL_REPORT: &str = "report.json";
pub const CMC_CSV: &str = "cmc.csv";
pub const CMC_SVG: &str = "cmc.svg";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub split: Split,
    pub images: usize,
    pub identities: usize,
    pub summary: Summary,
    pub rounds: Vec<EvalReport>,
    /// Softmax accuracy on the split, present when the checkpoint's classes
    /// are the manifest's subjects.
    pub classifier: Option<ClassifierEval>,
}

/// Mirror-concatenated descriptors of `records`, loaded from `dir`.
pub(crate) fn describe_records(
    net: &Network,
    params: &Parameters<f32>,
    dir: &Path,
    records: &[&ImageRecord],
    batch: usize,
) -> Result<(LabeledSet<f32>, Vec<LabeledDescriptor>)> {
    let set = load_set(dir, records, net.config().input_shape, None)?;
    let descriptors = describe_batch(net, params, set.images(), batch)?;
    let items = descriptors
        .into_iter()
        .zip(records)
        .map(|(descriptor, r)| LabeledDescriptor {
            descriptor,
            identity: r.subject_id,
            camera: r.camera_id,
        })
        .collect();
    Ok((set, items))
}

/// `eval.rounds` gallery draws of the configured protocol.
pub(crate) fn reid_rounds(
    items: &[LabeledDescriptor],
    eval: &EvalBlock,
    seed: u64,
) -> Result<(Vec<EvalReport>, Summary)> {
    if eval.rounds == 0 {
        return Err(Error::Config("evaluation needs at least one round".into()));
    }
    let reports = (0..eval.rounds)
        .map(|round| {
            let protocol = Protocol {
                shot: eval.protocol,
                filter: eval.filter,
                seed,
                round,
            };
            match eval.protocol {
                Shot::SingleShot => evaluate_single_shot(items, protocol, eval.max_rank),
                Shot::MultiShot => evaluate_multi_shot(items, protocol, eval.max_rank),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::of(&reports)?;
    Ok((reports, summary))
}

pub(crate) fn cmc_csv(rates: &[f64]) -> String {
    let mut s = String::from("rank,rate\n");
    for (i, r) in rates.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, r));
    }
    s
}

pub(crate) fn cmc_chart(series: Vec<Series>) -> String {
    LineChart {
        title: "CMC",
        x_label: "rank",
        y_label: "recognition rate",
        y_range: Some((0.0, 1.0)),
        series,
    }
    .to_svg()
}

pub(super) fn run(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalOutput> {
    let ckpt = load_checkpoint::<f32>(checkpoint)?;
    let net = ckpt.network()?;
    let (dir, manifest) = load_dataset(cfg)?;
    let e = &cfg.eval;
    let records = select(&manifest, Some(e.split))?;
    let (set, items) = describe_records(&net, &ckpt.params, dir, &records, e.batch_size)?;
    let (rounds, summary) = reid_rounds(&items, e, cfg.seed)?;

    let labels = label_map(&manifest);
    let known = set.labels().iter().all(|s| labels.contains_key(s));
    let classifier = if known && labels.len() == net.num_classes() {
        let dense = set.labels().iter().map(|s| labels[s]).collect();
        let set = LabeledSet::new(set.images().clone(), dense)?;
        Some(evaluate_classifier(
            &net,
            &ckpt.params,
            &set,
            e.batch_size,
            net.num_classes().min(5),
        )?)
    } else {
        None
    };
    let output = EvalOutput {
        split: e.split,
        images: records.len(),
        identities: labels_in(&records),
        summary,
        rounds,
        classifier,
    };
    info!(
        "rank-1 {:.4} ± {:.4}, mAP {:.4} over {} rounds",
        output.summary.mean_rank1, output.summary.std_rank1, output.summary.mean_map, e.rounds
    );

    let out = cfg.out_dir()?;
    write_json(&out.join(EVAL_REPORT), &output)?;
    write_file(&out.join(CMC_CSV), cmc_csv(&output.summary.mean_cmc))?;
    if e.plot {
        let points = output
            .summary
            .mean_cmc
            .iter()
            .enumerate()
            .map(|(i, &r)| ((i + 1) as f64, r))
            .collect();
        let name = match e.protocol {
            Shot::SingleShot => "single-shot",
            Shot::MultiShot => "multi-shot",
        };
        write_file(
            &out.join(CMC_SVG),
            cmc_chart(vec![Series {
                name: name.into(),
                points,
            }]),
        )?;
    }
    Ok(output)
}

fn labels_in(records: &[&ImageRecord]) -> usize {
    let ids: std::collections::BTreeSet<usize> = records.iter().map(|r| r.subject_id).collect();
    ids.len()
}
