//! Search for embedding units that respond to a visual characteristic:
//! fire rate, activation score and their mean, the discernibility.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, Parameters};
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_TOP_K: usize = 10;

/// Unit step with `T(0) = 0`.
pub fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn mean(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Domain("mean over an empty image set".into()));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Share of `c` on which the unit fires minus the share of `r`.
pub fn fire_rate(c: &[f64], r: &[f64]) -> Result<f64> {
    let t = |v: &[f64]| mean(&v.iter().map(|&x| heaviside(x)).collect::<Vec<_>>());
    Ok(t(c)? - t(r)?)
}

/// Half the difference of mean activations; in `[-1, 1]` for tanh units.
pub fn activation_score(c: &[f64], r: &[f64]) -> Result<f64> {
    Ok(0.5 * mean(c)? - 0.5 * mean(r)?)
}

pub fn discernibility(fire_rate: f64, activation_score: f64) -> f64 {
    (fire_rate + activation_score) / 2.0
}

/// Images × units activations of the embedding layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    images: usize,
    neurons: usize,
    data: Vec<f64>,
    /// Caller-side identifier of each row.
    pub image_ids: Vec<usize>,
}

impl ActivationMatrix {
    /// Row-major `images × neurons` values, each in `[-1, 1]`.
    pub fn new(images: usize, neurons: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != images * neurons {
            return Err(Error::shape(
                "ActivationMatrix::new",
                format!("{} values for {images}x{neurons}", data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Domain(format!(
                "activation {v} is outside the tanh range"
            )));
        }
        Ok(Self {
            images,
            neurons,
            data,
            image_ids: (0..images).collect(),
        })
    }

    pub fn images(&self) -> usize {
        self.images
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.neurons..(i + 1) * self.neurons]
    }

    pub fn get(&self, image: usize, neuron: usize) -> f64 {
        self.data[image * self.neurons + neuron]
    }

    /// Per-unit `(sum of T(x), sum of x)` over `rows`, accumulated in
    /// ascending row order.
    fn column_sums(&self, rows: impl Iterator<Item = usize>) -> (Vec<f64>, Vec<f64>) {
        let mut fires = vec![0.0; self.neurons];
        let mut sums = vec![0.0; self.neurons];
        for i in rows {
            for ((f, s), &x) in fires.iter_mut().zip(&mut sums).zip(self.row(i)) {
                *f += heaviside(x);
                *s += x;
            }
        }
        (fires, sums)
    }
}

/// Embedding-layer activations of an `N×C×H×W` stack.
pub fn activations<T: Scalar>(
    net: &Network,
    params: &Parameters<T>,
    images: &Tensor<T>,
    batch_size: usize,
) -> Result<ActivationMatrix> {
    let [n, ..] = images.dims4("activations")?;
    let step = batch_size.max(1);
    let mut data = Vec::with_capacity(n * net.embed_dim());
    for start in (0..n).step_by(step) {
        let x = images.slice_outer(start, (start + step).min(n))?;
        data.extend(net.embed(params, &x)?.data().iter().map(|v| v.f64()));
    }
    ActivationMatrix::new(n, net.embed_dim(), data)
}

/// Localization images with (`with`) and without (`without`) the
/// characteristic, plus the held-out exploration images. All entries are
/// row indices of an [`ActivationMatrix`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSplit {
    pub characteristic: String,
    pub with: Vec<usize>,
    pub without: Vec<usize>,
    pub exploration: Vec<usize>,
}

impl ProbeSplit {
    /// Random split of all rows: `localization` of them form the
    /// localization set, divided by `has`; the rest are for exploration.
    pub fn random(
        characteristic: impl Into<String>,
        has: &[bool],
        localization: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&localization) {
            return Err(Error::Config(format!(
                "localization fraction {localization} outside [0, 1]"
            )));
        }
        let mut rows: Vec<usize> = (0..has.len()).collect();
        rng.shuffle(&mut rows);
        let n_loc = (localization * has.len() as f64).round() as usize;
        let (loc, explore) = rows.split_at(n_loc);
        let mut split = Self {
            characteristic: characteristic.into(),
            with: loc.iter().copied().filter(|&i| has[i]).collect(),
            without: loc.iter().copied().filter(|&i| !has[i]).collect(),
            exploration: explore.to_vec(),
        };
        split.with.sort_unstable();
        split.without.sort_unstable();
        split.exploration.sort_unstable();
        split.validate(has.len())?;
        Ok(split)
    }

    pub fn validate(&self, images: usize) -> Result<()> {
        let name = &self.characteristic;
        if self.with.is_empty() {
            return Err(Error::Data(format!("no localization image has `{name}`")));
        }
        if self.without.is_empty() {
            return Err(Error::Data(format!(
                "every localization image has `{name}`"
            )));
        }
        let mut seen = vec![false; images];
        for &i in self
            .with
            .iter()
            .chain(&self.without)
            .chain(&self.exploration)
        {
            if i >= images {
                return Err(Error::Data(format!(
                    "row {i} out of range ({images} images)"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Data(format!("row {i} appears in two probe sets")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronScore {
    pub neuron: usize,
    pub fire_rate: f64,
    pub activation_score: f64,
    pub discernibility: f64,
}

/// Scores of every unit, most discerning first (ties by unit index).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronScoreTable {
    pub rows: Vec<NeuronScore>,
}

impl NeuronScoreTable {
    /// The specialized unit.
    pub fn best(&self) -> &NeuronScore {
        &self.rows[0]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("neuron,fire_rate,activation_score,discernibility\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.neuron, r.fire_rate, r.activation_score, r.discernibility
            ));
        }
        s
    }
}

fn scores_from_sums(
    with: (Vec<f64>, Vec<f64>),
    n_with: usize,
    without: (Vec<f64>, Vec<f64>),
    n_without: usize,
) -> Vec<NeuronScore> {
    let (cw, nw) = (n_with as f64, n_without as f64);
    (0..with.0.len())
        .map(|n| {
            let f = with.0[n] / cw - without.0[n] / nw;
            let a = 0.5 * (with.1[n] / cw) - 0.5 * (without.1[n] / nw);
            NeuronScore {
                neuron: n,
                fire_rate: f,
                activation_score: a,
                discernibility: discernibility(f, a),
            }
        })
        .collect()
}

fn sorted(rows: &[usize]) -> Vec<usize> {
    let mut v = rows.to_vec();
    v.sort_unstable();
    v
}

pub fn score_all(m: &ActivationMatrix, split: &ProbeSplit) -> Result<NeuronScoreTable> {
    split.validate(m.images())?;
    let with = m.column_sums(sorted(&split.with).into_iter());
    let without = m.column_sums(sorted(&split.without).into_iter());
    let mut rows = scores_from_sums(with, split.with.len(), without, split.without.len());
    rows.sort_by(|a, b| b.discernibility.total_cmp(&a.discernibility));
    Ok(NeuronScoreTable { rows })
}

/// The `k` most discerning units, best first.
pub fn top_k(table: &NeuronScoreTable, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > table.rows.len() {
        return Err(Error::Usage(format!(
            "k = {k} outside 1..={}",
            table.rows.len()
        )));
    }
    Ok(table.rows[..k].iter().map(|r| r.neuron).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explored {
    /// Row in the activation matrix.
    pub row: usize,
    pub image_id: usize,
    /// Mean activation over the selected units.
    pub score: f64,
    /// How many of the image's `|S|` most active units are in `S`.
    pub overlap: usize,
}

/// Exploration images ranked by mean activation over `units`, highest
/// first; ties keep the order of `rows`.
pub fn explore(m: &ActivationMatrix, rows: &[usize], units: &[usize]) -> Result<Vec<Explored>> {
    if units.is_empty() {
        return Err(Error::Usage("exploration needs at least one unit".into()));
    }
    if let Some(&u) = units.iter().find(|&&u| u >= m.neurons()) {
        return Err(Error::Usage(format!("unit {u} out of range")));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= m.images()) {
        return Err(Error::Usage(format!("row {r} out of range")));
    }
    let mut out: Vec<Explored> = rows
        .iter()
        .map(|&row| {
            let x = m.row(row);
            let score = units.iter().map(|&u| x[u]).sum::<f64>() / units.len() as f64;
            let mut order: Vec<usize> = (0..x.len()).collect();
            order.sort_by(|&a, &b| x[b].total_cmp(&x[a]));
            let overlap = order[..units.len()]
                .iter()
                .filter(|u| units.contains(u))
                .count();
            Explored {
                row,
                image_id: m.image_ids[row],
                score,
                overlap,
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

/// Fraction of the first `k` ranked images for which `has[row]` holds.
pub fn precision_at(ranked: &[Explored], has: &[bool], k: usize) -> f64 {
    let top = &ranked[..k.min(ranked.len())];
    if top.is_empty() {
        return 0.0;
    }
    top.iter().filter(|e| has[e.row]).count() as f64 / top.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub observed_max: f64,
    /// Maximum discernibility of every shuffled split.
    pub null_max: Vec<f64>,
    /// Share of shuffles reaching the observed maximum.
    pub p_value: f64,
}

impl PermutationTest {
    /// Empirical `q`-quantile of the null maxima (nearest rank).
    pub fn quantile(&self, q: f64) -> f64 {
        let mut v = self.null_max.clone();
        v.sort_by(f64::total_cmp);
        let i = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
        v[i]
    }
}

/// Reshuffles the with/without labels over the localization images
/// `trials` times and records the best discernibility of each shuffle.
pub fn permutation_baseline(
    m: &ActivationMatrix,
    split: &ProbeSplit,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<PermutationTest> {
    if trials == 0 {
        return Err(Error::Config(
            "permutation test needs at least one trial".into(),
        ));
    }
    let observed_max = score_all(m, split)?.best().discernibility;
    let pool = sorted(&[split.with.as_slice(), &split.without].concat());
    let n_with = split.with.len();
    let masks: Vec<Vec<bool>> = (0..trials)
        .map(|_| {
            let mut mask = vec![false; pool.len()];
            for i in rng.sample_indices(pool.len(), n_with) {
                mask[i] = true;
            }
            mask
        })
        .collect();
    let null_max: Vec<f64> = masks
        .par_iter()
        .map(|mask| {
            let pick = |want: bool| {
                pool.iter()
                    .zip(mask)
                    .filter(move |(_, &w)| w == want)
                    .map(|(&r, _)| r)
            };
            let with = m.column_sums(pick(true));
            let without = m.column_sums(pick(false));
            scores_from_sums(with, n_with, without, pool.len() - n_with)
                .iter()
                .map(|s| s.discernibility)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let reached = null_max.iter().filter(|&&v| v >= observed_max).count();
    Ok(PermutationTest {
        observed_max,
        p_value: reached as f64 / trials as f64,
        null_max,
    })
}

/// Everything a probe run reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscernibilityReport {
    pub characteristic: String,
    pub scores: NeuronScoreTable,
    pub top_k: Vec<usize>,
    pub exploration: Vec<Explored>,
    pub permutation: Option<PermutationTest>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_two_plus_two_example() {
        let c = [0.5, 0.2];
        let r = [-0.1, 0.3];
        let f = fire_rate(&c, &r).unwrap();
        let a = activation_score(&c, &r).unwrap();
        assert_eq!(f, 0.5);
        assert!((a - 0.125).abs() < 1e-15);
        assert!((discernibility(f, a) - 0.3125).abs() < 1e-15);
        assert_eq!(discernibility(0.5, 0.125), 0.3125);
    }

    #[test]
    fn step_function_values() {
        assert_eq!(heaviside(0.5), 1.0);
        assert_eq!(heaviside(0.0), 0.0);
        assert_eq!(heaviside(-0.0), 0.0);
        assert_eq!(heaviside(-0.3), 0.0);
    }

    #[test]
    fn extreme_units() {
        assert_eq!(fire_rate(&[0.4, 1.0], &[0.0, -1.0]).unwrap(), 1.0);
        assert_eq!(activation_score(&[1.0, 1.0], &[-1.0]).unwrap(), 1.0);
        let d = discernibility(
            fire_rate(&[-1.0], &[1.0]).unwrap(),
            activation_score(&[-1.0], &[1.0]).unwrap(),
        );
        assert_eq!(d, -1.0);
        assert!(matches!(fire_rate(&[], &[1.0]), Err(Error::Domain(_))));
        assert!(activation_score(&[1.0], &[]).is_err());
    }

    #[test]
    fn matrix_rejects_out_of_range_values() {
        assert!(ActivationMatrix::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(ActivationMatrix::new(1, 2, vec![0.5, f64::NAN]).is_err());
        assert!(ActivationMatrix::new(1, 2, vec![0.5]).is_err());
        assert!(ActivationMatrix::new(1, 2, vec![-1.0, 1.0]).is_ok());
    }

    #[test]
    fn split_validation() {
        let ok = ProbeSplit {
            characteristic: "x".into(),
            with: vec![0],
            without: vec![1],
            exploration: vec![2],
        };
        ok.validate(3).unwrap();
        let overlap = ProbeSplit {
            exploration: vec![1],
            ..ok.clone()
        };
        assert!(overlap.validate(3).is_err());
        let empty = ProbeSplit {
            with: vec![],
            ..ok.clone()
        };
        let e = empty.validate(3).unwrap_err().to_string();
        assert!(e.contains("`x`"), "{e}");
        assert!(ok.validate(2).is_err());
    }
}
