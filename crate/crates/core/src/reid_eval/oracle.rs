//! Deliberately naive reference implementations: selection-sort rankings,
//! explicit double loops, and per-rank recounting.

use super::{CameraFilter, Descriptor};

fn distance(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
    }
    for x in a {
        aa += x * x;
    }
    for x in b {
        bb += x * x;
    }
    let d = 1.0 - ab / (aa.sqrt() * bb.sqrt());
    d.max(0.0).min(2.0)
}

fn allowed(filter: CameraFilter, qid: usize, qcams: &[u32], id: usize, cam: u32) -> bool {
    filter == CameraFilter::None || id != qid || !qcams.contains(&cam)
}

/// Repeatedly extracts the closest remaining entry (lowest index on ties).
fn selection_order(mut pending: Vec<(usize, f64)>) -> Vec<usize> {
    let mut out = Vec::new();
    while !pending.is_empty() {
        let mut best = 0;
        for i in 1..pending.len() {
            let (bi, bd) = pending[best];
            let (ci, cd) = pending[i];
            if cd < bd || (cd == bd && ci < bi) {
                best = i;
            }
        }
        out.push(pending.remove(best).0);
    }
    out
}

/// Gallery indices in ranked order.
pub fn single_shot(
    query: &[f64],
    query_identity: usize,
    query_camera: u32,
    gallery: &[(Descriptor, usize, u32)],
    filter: CameraFilter,
) -> Vec<usize> {
    let mut pending = Vec::new();
    for (i, (d, id, cam)) in gallery.iter().enumerate() {
        if allowed(filter, query_identity, &[query_camera], *id, *cam) {
            pending.push((i, distance(query, &d.values)));
        }
    }
    selection_order(pending)
}

/// Gallery identities in ranked order.
pub fn multi_shot(
    probes: &[&[f64]],
    probe_identity: usize,
    probe_cameras: &[u32],
    gallery: &[(Descriptor, usize, u32)],
    filter: CameraFilter,
) -> Vec<usize> {
    let mut ids: Vec<usize> = gallery.iter().map(|g| g.1).collect();
    ids.sort();
    ids.dedup();
    let mut pending = Vec::new();
    for id in ids {
        let mut sum = 0.0;
        let mut count = 0;
        for p in probes {
            for (d, gid, cam) in gallery {
                if *gid == id && allowed(filter, probe_identity, probe_cameras, *gid, *cam) {
                    sum += distance(p, &d.values);
                    count += 1;
                }
            }
        }
        if count > 0 {
            pending.push((id, sum / count as f64));
        }
    }
    selection_order(pending)
}

/// `curve[r - 1]` for `r` in `1..=max_rank`, counting queries with any match.
pub fn cmc(relevance: &[Vec<bool>], max_rank: usize) -> Vec<f64> {
    let valid: Vec<&Vec<bool>> = relevance.iter().filter(|r| r.contains(&true)).collect();
    let mut curve = Vec::new();
    for r in 1..=max_rank {
        let mut hit = 0;
        for q in &valid {
            if q.iter().take(r).any(|&x| x) {
                hit += 1;
            }
        }
        curve.push(if valid.is_empty() {
            0.0
        } else {
            hit as f64 / valid.len() as f64
        });
    }
    curve
}

/// Precision recomputed from scratch at every relevant position.
pub fn average_precision(relevance: &[bool]) -> Option<f64> {
    let mut precisions = Vec::new();
    for k in 0..relevance.len() {
        if relevance[k] {
            let relevant_so_far = relevance[..=k].iter().filter(|&&x| x).count();
            precisions.push(relevant_so_far as f64 / (k + 1) as f64);
        }
    }
    if precisions.is_empty() {
        return None;
    }
    Some(precisions.iter().sum::<f64>() / precisions.len() as f64)
}
