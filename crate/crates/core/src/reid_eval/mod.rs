//! Mirror-concat descriptors, cosine ranking, CMC and mAP, and the
//! evaluation protocols built on them.

mod metrics;
pub mod oracle;
mod protocol;

pub use metrics::{average_precision, cmc, mean_average_precision, CmcCurve};
pub use protocol::{
    cross_validate, evaluate_multi_shot, evaluate_query_gallery, evaluate_single_shot,
    split_identities, CrossValidation, EvalReport, LabeledDescriptor, Protocol, Shot, Summary,
};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, Parameters};
use crate::tensor::{Scalar, Tensor};

/// Embedding of an image followed by the embedding of its mirror image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub values: Vec<f64>,
    /// Index of the image this was computed from.
    pub source: usize,
}

impl Descriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The same descriptor with its two halves exchanged.
    pub fn swap_halves(&self) -> Self {
        let h = self.values.len() / 2;
        let mut values = self.values[h..].to_vec();
        values.extend_from_slice(&self.values[..h]);
        Self {
            values,
            source: self.source,
        }
    }
}

/// Descriptor of one `C×H×W` image.
pub fn describe<T: Scalar>(
    net: &Network,
    params: &Parameters<T>,
    image: &Tensor<T>,
    source: usize,
) -> Result<Descriptor> {
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    let batch = image.clone().reshape(&shape)?;
    let mut d = describe_batch(net, params, &batch, 1)?;
    let mut out = d.pop().expect("one image in, one descriptor out");
    out.source = source;
    Ok(out)
}

/// Descriptors of an `N×C×H×W` stack, evaluated `batch_size` images at a
/// time. `source` is the position in the stack.
pub fn describe_batch<T: Scalar>(
    net: &Network,
    params: &Parameters<T>,
    images: &Tensor<T>,
    batch_size: usize,
) -> Result<Vec<Descriptor>> {
    let [n, ..] = images.dims4("describe")?;
    let e = net.embed_dim();
    let mut out = Vec::with_capacity(n);
    let step = batch_size.max(1);
    for start in (0..n).step_by(step) {
        let x = images.slice_outer(start, (start + step).min(n))?;
        let direct = net.embed(params, &x)?;
        let mirrored = net.embed(params, &x.flip_width())?;
        for (i, (a, b)) in direct
            .data()
            .chunks_exact(e)
            .zip(mirrored.data().chunks_exact(e))
            .enumerate()
        {
            let values = a.iter().chain(b).map(|v| v.f64()).collect();
            out.push(Descriptor {
                values,
                source: start + i,
            });
        }
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_nonzero(v: &[f64], what: &str) -> Result<f64> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Domain(format!(
            "cosine distance needs a non-zero finite {what} vector"
        )));
    }
    Ok(n)
}

/// `1 − cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "cosine_distance",
            format!("lengths {} and {}", a.len(), b.len()),
        ));
    }
    let na = check_nonzero(a, "first")?;
    let nb = check_nonzero(b, "second")?;
    Ok(cosine_from_parts(dot(a, b), na, nb))
}

fn cosine_from_parts(dot: f64, na: f64, nb: f64) -> f64 {
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Which gallery entries a query may be compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CameraFilter {
    /// Every gallery entry.
    #[default]
    None,
    /// Entries of the query's identity seen by the query's camera are removed.
    CrossCamera,
}

impl CameraFilter {
    fn keeps(self, query_identity: usize, query_cameras: &[u32], entry: &GalleryEntry) -> bool {
        match self {
            CameraFilter::None => true,
            CameraFilter::CrossCamera => {
                entry.identity != query_identity || !query_cameras.contains(&entry.camera)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GalleryEntry {
    pub descriptor: Descriptor,
    pub identity: usize,
    pub camera: u32,
    norm: f64,
}

/// Gallery descriptors with their labels, grouped by identity and camera.
#[derive(Clone, Debug, PartialEq)]
pub struct GalleryIndex {
    entries: Vec<GalleryEntry>,
    by_identity: BTreeMap<usize, Vec<usize>>,
    by_camera: BTreeMap<u32, Vec<usize>>,
}

impl GalleryIndex {
    pub fn new(items: Vec<(Descriptor, usize, u32)>) -> Result<Self> {
        let dim = items.first().map(|(d, ..)| d.len());
        let mut entries = Vec::with_capacity(items.len());
        let mut by_identity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut by_camera: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, (descriptor, identity, camera)) in items.into_iter().enumerate() {
            if Some(descriptor.len()) != dim {
                return Err(Error::shape(
                    "GalleryIndex::new",
                    format!("descriptor {i} has length {}", descriptor.len()),
                ));
            }
            let norm = check_nonzero(&descriptor.values, "gallery")?;
            by_identity.entry(identity).or_default().push(i);
            by_camera.entry(camera).or_default().push(i);
            entries.push(GalleryEntry {
                descriptor,
                identity,
                camera,
                norm,
            });
        }
        Ok(Self {
            entries,
            by_identity,
            by_camera,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    pub fn by_identity(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.by_identity
    }

    pub fn by_camera(&self) -> &BTreeMap<u32, Vec<usize>> {
        &self.by_camera
    }

    pub fn identity_count(&self) -> usize {
        self.by_identity.len()
    }

    fn dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.descriptor.len())
    }

    fn check_query(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.dim() {
            return Err(Error::shape(
                "rank",
                format!("query length {} vs gallery {}", q.len(), self.dim()),
            ));
        }
        check_nonzero(q, "query")
    }
}

/// A single-image query.
#[derive(Clone, Debug, PartialEq)]
pub struct Query<'a> {
    pub descriptor: &'a Descriptor,
    pub identity: usize,
    pub camera: u32,
}

/// One gallery position in a ranking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ranked {
    pub index: usize,
    pub distance: f64,
}

/// Gallery entries in ascending cosine distance after filtering; equal
/// distances keep gallery order.
pub fn rank_single_shot(
    query: &Query<'_>,
    gallery: &GalleryIndex,
    filter: CameraFilter,
) -> Result<Vec<Ranked>> {
    let q = &query.descriptor.values;
    let nq = gallery.check_query(q)?;
    let cams = [query.camera];
    let mut ranked: Vec<Ranked> = gallery
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| filter.keeps(query.identity, &cams, e))
        .map(|(index, e)| Ranked {
            index,
            distance: cosine_from_parts(dot(q, &e.descriptor.values), nq, e.norm),
        })
        .collect();
    if ranked.is_empty() {
        return Err(Error::Domain(format!(
            "no gallery entries left for query of identity {} after filtering",
            query.identity
        )));
    }
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(ranked)
}

/// A gallery identity in a multi-shot ranking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedIdentity {
    pub identity: usize,
    /// Mean cosine distance over all probe × gallery-image pairs.
    pub distance: f64,
}

/// Gallery identities in ascending mean pairwise distance to the probe
/// set. `probe_identity` and `probe_cameras` only matter for filtering;
/// identities left with no images are skipped with a warning.
pub fn rank_multi_shot(
    probes: &[&Descriptor],
    probe_identity: usize,
    probe_cameras: &[u32],
    gallery: &GalleryIndex,
    filter: CameraFilter,
) -> Result<Vec<RankedIdentity>> {
    if probes.is_empty() {
        return Err(Error::Domain("multi-shot ranking needs probes".into()));
    }
    let norms = probes
        .iter()
        .map(|p| gallery.check_query(&p.values))
        .collect::<Result<Vec<_>>>()?;
    let mut ranked = Vec::with_capacity(gallery.by_identity.len());
    for (&identity, members) in &gallery.by_identity {
        let kept: Vec<&GalleryEntry> = members
            .iter()
            .map(|&i| &gallery.entries[i])
            .filter(|e| filter.keeps(probe_identity, probe_cameras, e))
            .collect();
        if kept.is_empty() {
            log::warn!("identity {identity} has no gallery images after filtering; skipped");
            continue;
        }
        let mut sum = 0.0;
        for (p, &np) in probes.iter().zip(&norms) {
            for e in &kept {
                sum += cosine_from_parts(dot(&p.values, &e.descriptor.values), np, e.norm);
            }
        }
        ranked.push(RankedIdentity {
            identity,
            distance: sum / (probes.len() * kept.len()) as f64,
        });
    }
    if ranked.is_empty() {
        return Err(Error::Domain(
            "no gallery identities left after filtering".into(),
        ));
    }
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(ranked)
}

/// Relevance flags (identity match) of every query's ranking, in query order.
pub fn rank_all(
    queries: &[Query<'_>],
    gallery: &GalleryIndex,
    filter: CameraFilter,
) -> Result<Vec<Vec<bool>>> {
    queries
        .par_iter()
        .map(|q| {
            Ok(rank_single_shot(q, gallery, filter)?
                .iter()
                .map(|r| gallery.entries[r.index].identity == q.identity)
                .collect())
        })
        .collect()
}
