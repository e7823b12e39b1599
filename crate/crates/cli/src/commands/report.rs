use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};
use soma_forge::{Error, Result};

use super::ablation::{AblationRow, ABLATION_CSV};
use super::eval::{cmc_chart, EvalOutput, EVAL_REPORT};
use super::probe::{ProbeOutput, PROBE_REPORT};
use super::train::HISTORY_CSV;
use super::{read_file, write_file, write_json};
use crate::config::RunConfig;
use crate::plot::{LineChart, Series};

pub const SUMMARY: &str = "summary.json";

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct HistoryRow {
    epoch: f64,
    train_loss: f64,
    val_loss: f64,
    val_accuracy: f64,
    lr: f64,
}

fn parse_history(text: &str) -> Result<Vec<HistoryRow>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("history CSV: bad row `{line}`")))?;
            if v.len() != 6 {
                return Err(Error::Format(format!("history CSV: bad row `{line}`")));
            }
            Ok(HistoryRow {
                epoch: v[0],
                train_loss: v[2],
                val_loss: v[3],
                val_accuracy: v[4],
                lr: v[5],
            })
        })
        .collect()
}

fn history(run: &Path, out: &Path) -> Result<Value> {
    let rows = parse_history(&read_file(&run.join(HISTORY_CSV))?)?;
    let series = |name: &str, f: fn(&HistoryRow) -> f64| Series {
        name: name.into(),
        points: rows.iter().map(|r| (r.epoch, f(r))).collect(),
    };
    let loss = LineChart {
        title: "Loss",
        x_label: "epoch",
        y_label: "cross-entropy",
        y_range: None,
        series: vec![
            series("train", |r| r.train_loss),
            series("validation", |r| r.val_loss),
        ],
    };
    write_file(&out.join("loss.svg"), loss.to_svg())?;
    let acc = LineChart {
        title: "Validation accuracy",
        x_label: "epoch",
        y_label: "rank-1",
        y_range: Some((0.0, 1.0)),
        series: vec![series("validation", |r| r.val_accuracy)],
    };
    write_file(&out.join("accuracy.svg"), acc.to_svg())?;
    let last = rows.last();
    Ok(json!({
        "evaluations": rows.len(),
        "final_val_accuracy": last.map(|r| r.val_accuracy),
        "best_val_accuracy": rows.iter().map(|r| r.val_accuracy).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))),
        "final_lr": last.map(|r| r.lr),
    }))
}

fn eval(run: &Path, out: &Path) -> Result<Value> {
    let report: EvalOutput = serde_json::from_str(&read_file(&run.join(EVAL_REPORT))?)
        .map_err(|e| Error::Format(format!("{EVAL_REPORT}: {e}")))?;
    let s = &report.summary;
    let points = s
        .mean_cmc
        .iter()
        .enumerate()
        .map(|(i, &r)| ((i + 1) as f64, r))
        .collect();
    write_file(
        &out.join("cmc.svg"),
        cmc_chart(vec![Series {
            name: "mean".into(),
            points,
        }]),
    )?;
    Ok(json!({
        "split": report.split,
        "rounds": s.rounds,
        "mean_rank1": s.mean_rank1,
        "std_rank1": s.std_rank1,
        "mean_rank5": s.mean_cmc.get(4).or(s.mean_cmc.last()),
        "mean_map": s.mean_map,
        "classifier_top1": report.classifier.as_ref().and_then(|c| c.top_k.first()),
    }))
}

fn ablation(run: &Path, out: &Path) -> Result<Value> {
    let rows = AblationRow::parse_csv(&read_file(&run.join(ABLATION_CSV))?)?;
    let mut groups: BTreeMap<&str, Vec<&AblationRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry(&r.variant).or_default().push(r);
    }
    let mut csv = String::from("variant,images,runs,mean_rank1,std_rank1,mean_map,std_map\n");
    let mut summary = Vec::new();
    // Each reduction family as a curve of rank-1 against image count.
    let mut families: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    let mut full = None;
    for (variant, g) in &groups {
        let r1: Vec<f64> = g.iter().map(|r| r.rank1).collect();
        let maps: Vec<f64> = g.iter().map(|r| r.map).collect();
        let (m1, s1) = mean_std(&r1);
        let (mm, sm) = mean_std(&maps);
        let images = g[0].images;
        csv.push_str(&format!(
            "{variant},{images},{},{m1},{s1},{mm},{sm}\n",
            g.len()
        ));
        summary.push(json!({
            "variant": variant, "images": images, "runs": g.len(),
            "mean_rank1": m1, "std_rank1": s1, "mean_map": mm, "std_map": sm,
        }));
        match variant.split_once('@') {
            Some((family, _)) => families
                .entry(family)
                .or_default()
                .push((images as f64, m1)),
            None => full = Some((images as f64, m1)),
        }
    }
    write_file(&out.join("ablation_summary.csv"), csv)?;
    let series = families
        .into_iter()
        .map(|(name, mut points)| {
            points.extend(full);
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                name: name.into(),
                points,
            }
        })
        .collect();
    let chart = LineChart {
        title: "Ablation",
        x_label: "images",
        y_label: "mean rank-1",
        y_range: Some((0.0, 1.0)),
        series,
    };
    write_file(&out.join("ablation.svg"), chart.to_svg())?;
    Ok(Value::Array(summary))
}

fn probe(run: &Path) -> Result<Value> {
    let p: ProbeOutput = serde_json::from_str(&read_file(&run.join(PROBE_REPORT))?)
        .map_err(|e| Error::Format(format!("{PROBE_REPORT}: {e}")))?;
    let best = p.report.scores.best();
    Ok(json!({
        "rule": p.rule,
        "best_neuron": best.neuron,
        "discernibility": best.discernibility,
        "p_value": p.report.permutation.as_ref().map(|t| t.p_value),
        "precision_at_10": p.precision_at_10,
        "base_rate": p.base_rate,
    }))
}

pub(super) fn run(cfg: &RunConfig, run_dir: &Path) -> Result<()> {
    let out = cfg.out_dir()?;
    let mut summary = Map::new();
    if run_dir.join(HISTORY_CSV).exists() {
        summary.insert("history".into(), history(run_dir, out)?);
    }
    if run_dir.join(EVAL_REPORT).exists() {
        summary.insert("eval".into(), eval(run_dir, out)?);
    }
    if run_dir.join(ABLATION_CSV).exists() {
        summary.insert("ablation".into(), ablation(run_dir, out)?);
    }
    if run_dir.join(PROBE_REPORT).exists() {
        summary.insert("probe".into(), probe(run_dir)?);
    }
    if summary.is_empty() {
        return Err(Error::Data(format!(
            "nothing to report in {}",
            run_dir.display()
        )));
    }
    write_json(&out.join(SUMMARY), &Value::Object(summary))
}
