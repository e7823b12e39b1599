use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use soma_forge::neuron_probe::{
    activations, explore, permutation_baseline, precision_at, score_all, top_k,
    DiscernibilityReport, ProbeSplit,
};
use soma_forge::synthset::RgbImage;
use soma_forge::training::load_checkpoint;
use soma_forge::{Error, Result, SeededRng};

use super::{
    load_dataset, load_set, select, write_file, write_json, PERMUTATION_STREAM, PROBE_STREAM,
};
use crate::config::RunConfig;
use crate::plot::contact_sheet;
use crate::rules::Rule;

pub const PROBE_REPORT: &str = "probe.json";
pub const PROBE_SCORES: &str = "scores.csv";
pub const PROBE_SHEET: &str = "exploration.ppm";

/// Depth at which the exploration ranking is scored.
pub const PRECISION_DEPTH: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutput {
    pub rule: String,
    pub images: usize,
    /// Share of the exploration images that satisfy the rule.
    pub base_rate: f64,
    /// Share of the top exploration images that satisfy the rule.
    pub precision_at_10: f64,
    /// 95th percentile of the permutation maxima.
    pub null_q95: Option<f64>,
    pub report: DiscernibilityReport,
}

pub(super) fn run(cfg: &RunConfig, checkpoint: &Path) -> Result<ProbeOutput> {
    let p = &cfg.probe;
    let text = p
        .attribute
        .as_deref()
        .ok_or_else(|| Error::Usage("no attribute rule (--attribute)".into()))?;
    let rule: Rule = text.parse()?;
    let ckpt = load_checkpoint::<f32>(checkpoint)?;
    let net = ckpt.network()?;
    let (dir, manifest) = load_dataset(cfg)?;
    let records = select(&manifest, p.split)?;
    let has = rule.select(&records)?;
    let matching = has.iter().filter(|&&h| h).count();
    if matching == 0 || matching == has.len() {
        let side = if matching == 0 { "no" } else { "every" };
        return Err(Error::Data(format!(
            "attribute rule `{rule}` selects {side} image of the {}",
            records.len()
        )));
    }

    let set = load_set(dir, &records, net.config().input_shape, None)?;
    let m = activations(&net, &ckpt.params, set.images(), p.batch_size)?;
    let split = ProbeSplit::random(
        rule.to_string(),
        &has,
        p.localization,
        &mut SeededRng::derive(cfg.seed, PROBE_STREAM),
    )?;
    let scores = score_all(&m, &split)?;
    let units = top_k(&scores, p.k)?;
    let exploration = explore(&m, &split.exploration, &units)?;
    let permutation = if p.permutations > 0 {
        Some(permutation_baseline(
            &m,
            &split,
            p.permutations,
            &mut SeededRng::derive(cfg.seed, PERMUTATION_STREAM),
        )?)
    } else {
        None
    };
    let explored_has = split.exploration.iter().filter(|&&r| has[r]).count();
    let output = ProbeOutput {
        rule: rule.to_string(),
        images: records.len(),
        base_rate: if split.exploration.is_empty() {
            0.0
        } else {
            explored_has as f64 / split.exploration.len() as f64
        },
        precision_at_10: precision_at(&exploration, &has, PRECISION_DEPTH),
        null_q95: permutation.as_ref().map(|t| t.quantile(0.95)),
        report: DiscernibilityReport {
            characteristic: rule.to_string(),
            scores,
            top_k: units,
            exploration,
            permutation,
        },
    };
    info!(
        "best neuron {} with D = {:.4}; precision@10 {:.2} against base rate {:.2}",
        output.report.scores.best().neuron,
        output.report.scores.best().discernibility,
        output.precision_at_10,
        output.base_rate
    );
    if let Some(t) = &output.report.permutation {
        info!("permutation p-value {}", t.p_value);
    }

    let out = cfg.out_dir()?;
    write_json(&out.join(PROBE_REPORT), &output)?;
    write_file(&out.join(PROBE_SCORES), output.report.scores.to_csv())?;
    let tiles = output
        .report
        .exploration
        .iter()
        .take(p.sheet)
        .map(|e| RgbImage::load(&dir.join(&records[e.row].path)))
        .collect::<Result<Vec<_>>>()?;
    if !tiles.is_empty() {
        contact_sheet(&tiles, 10).save(&out.join(PROBE_SHEET))?;
    }
    Ok(output)
}
