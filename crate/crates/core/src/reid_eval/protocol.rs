use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{cmc, mean_average_precision, CmcCurve};
use super::{rank_all, rank_multi_shot, CameraFilter, Descriptor, GalleryIndex, Query};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDescriptor {
    pub descriptor: Descriptor,
    pub identity: usize,
    pub camera: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shot {
    SingleShot,
    MultiShot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub shot: Shot,
    pub filter: CameraFilter,
    pub seed: u64,
    pub round: usize,
}

impl Protocol {
    fn rng(&self) -> SeededRng {
        SeededRng::derive(self.seed, self.round as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub cmc: CmcCurve,
    pub map: f64,
    /// AP of every query that had a relevant gallery entry, in query order.
    pub ap: Vec<f64>,
    pub gallery_size: usize,
}

impl EvalReport {
    pub fn rank1(&self) -> f64 {
        self.cmc.rate(1)
    }

    fn from_relevance(
        protocol: Protocol,
        relevance: &[Vec<bool>],
        max_rank: usize,
        gallery_size: usize,
    ) -> Self {
        let (ap, map) = mean_average_precision(relevance);
        Self {
            protocol,
            cmc: cmc(relevance, max_rank),
            map,
            ap,
            gallery_size,
        }
    }
}

fn index(items: &[&LabeledDescriptor]) -> Result<GalleryIndex> {
    GalleryIndex::new(
        items
            .iter()
            .map(|d| (d.descriptor.clone(), d.identity, d.camera))
            .collect(),
    )
}

/// Ranks every query against a fixed gallery.
pub fn evaluate_query_gallery(
    queries: &[LabeledDescriptor],
    gallery: &[LabeledDescriptor],
    protocol: Protocol,
    max_rank: usize,
) -> Result<EvalReport> {
    let g = index(&gallery.iter().collect::<Vec<_>>())?;
    let q: Vec<Query<'_>> = queries
        .iter()
        .map(|d| Query {
            descriptor: &d.descriptor,
            identity: d.identity,
            camera: d.camera,
        })
        .collect();
    let relevance = rank_all(&q, &g, protocol.filter)?;
    Ok(EvalReport::from_relevance(
        protocol,
        &relevance,
        max_rank,
        g.len(),
    ))
}

fn group(items: &[LabeledDescriptor]) -> BTreeMap<usize, Vec<&LabeledDescriptor>> {
    let mut by_id: BTreeMap<usize, Vec<&LabeledDescriptor>> = BTreeMap::new();
    for d in items {
        by_id.entry(d.identity).or_default().push(d);
    }
    by_id
}

/// One randomly drawn image per identity forms the gallery; every other
/// image is a query. The draw depends only on the protocol seed and round.
pub fn evaluate_single_shot(
    items: &[LabeledDescriptor],
    protocol: Protocol,
    max_rank: usize,
) -> Result<EvalReport> {
    let mut rng = protocol.rng();
    let mut gallery = Vec::new();
    let mut queries = Vec::new();
    for (_, members) in group(items) {
        let pick = rng.below(members.len());
        for (i, d) in members.into_iter().enumerate() {
            if i == pick {
                gallery.push(d.clone());
            } else {
                queries.push(d.clone());
            }
        }
    }
    if queries.is_empty() {
        return Err(Error::Data(
            "single-shot evaluation needs an identity with at least two images".into(),
        ));
    }
    evaluate_query_gallery(
        &queries,
        &gallery,
        Protocol {
            shot: Shot::SingleShot,
            ..protocol
        },
        max_rank,
    )
}

/// Each identity's images are shuffled and split in two: the first half is
/// its probe set, the rest joins the gallery. Every probe set ranks the
/// gallery identities by mean pairwise distance.
pub fn evaluate_multi_shot(
    items: &[LabeledDescriptor],
    protocol: Protocol,
    max_rank: usize,
) -> Result<EvalReport> {
    let mut rng = protocol.rng();
    let mut gallery = Vec::new();
    let mut probe_sets = Vec::new();
    for (identity, mut members) in group(items) {
        rng.shuffle(&mut members);
        let half = members.len() / 2;
        if half == 0 {
            log::warn!("identity {identity} has one image; it only joins the gallery");
        } else {
            probe_sets.push((identity, members[..half].to_vec()));
        }
        gallery.extend_from_slice(&members[half..]);
    }
    if probe_sets.is_empty() {
        return Err(Error::Data(
            "multi-shot evaluation needs an identity with at least two images".into(),
        ));
    }
    let g = index(&gallery)?;
    let relevance = probe_sets
        .par_iter()
        .map(|(identity, probes)| {
            let descs: Vec<&Descriptor> = probes.iter().map(|d| &d.descriptor).collect();
            let mut cams: Vec<u32> = probes.iter().map(|d| d.camera).collect();
            cams.sort_unstable();
            cams.dedup();
            Ok(
                rank_multi_shot(&descs, *identity, &cams, &g, protocol.filter)?
                    .iter()
                    .map(|r| r.identity == *identity)
                    .collect(),
            )
        })
        .collect::<Result<Vec<Vec<bool>>>>()?;
    Ok(EvalReport::from_relevance(
        Protocol {
            shot: Shot::MultiShot,
            ..protocol
        },
        &relevance,
        max_rank,
        g.identity_count(),
    ))
}

/// Mean and population standard deviation over rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rounds: usize,
    pub mean_rank1: f64,
    pub std_rank1: f64,
    pub mean_map: f64,
    pub std_map: f64,
    /// Point-wise mean of the CMC curves.
    pub mean_cmc: Vec<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Summary {
    pub fn of(reports: &[EvalReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Domain("summary of zero reports".into()));
        }
        let r1: Vec<f64> = reports.iter().map(EvalReport::rank1).collect();
        let maps: Vec<f64> = reports.iter().map(|r| r.map).collect();
        let len = reports.iter().map(|r| r.cmc.rates.len()).max().unwrap_or(0);
        let mean_cmc = (1..=len)
            .map(|k| reports.iter().map(|r| r.cmc.rate(k)).sum::<f64>() / reports.len() as f64)
            .collect();
        let (mean_rank1, std_rank1) = mean_std(&r1);
        let (mean_map, std_map) = mean_std(&maps);
        Ok(Self {
            rounds: reports.len(),
            mean_rank1,
            std_rank1,
            mean_map,
            std_map,
            mean_cmc,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub reports: Vec<EvalReport>,
    pub summary: Summary,
}

/// Random disjoint split of `identities` into training and `n_test` test
/// identities, both sorted.
pub fn split_identities(
    identities: &[usize],
    n_test: usize,
    rng: &mut SeededRng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut ids = identities.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if n_test == 0 || n_test >= ids.len() {
        return Err(Error::Data(format!(
            "cannot split {} identities into {n_test} test and at least one training",
            ids.len()
        )));
    }
    let picked = rng.sample_indices(ids.len(), n_test);
    let mut is_test = vec![false; ids.len()];
    for i in picked {
        is_test[i] = true;
    }
    let (mut test, mut train) = (Vec::new(), Vec::new());
    for (id, t) in ids.into_iter().zip(is_test) {
        if t {
            test.push(id);
        } else {
            train.push(id);
        }
    }
    Ok((train, test))
}

/// Runs `round(r, train_ids, test_ids)` on `rounds` seeded identity
/// partitions and summarizes the resulting reports.
pub fn cross_validate(
    identities: &[usize],
    n_test: usize,
    rounds: usize,
    seed: u64,
    mut round: impl FnMut(usize, &[usize], &[usize]) -> Result<EvalReport>,
) -> Result<CrossValidation> {
    if rounds == 0 {
        return Err(Error::Config(
            "cross-validation needs at least one round".into(),
        ));
    }
    let mut reports = Vec::with_capacity(rounds);
    for r in 0..rounds {
        let mut rng = SeededRng::derive(seed, r as u64);
        let (train, test) = split_identities(identities, n_test, &mut rng)?;
        reports.push(round(r, &train, &test)?);
    }
    let summary = Summary::of(&reports)?;
    Ok(CrossValidation { reports, summary })
}
