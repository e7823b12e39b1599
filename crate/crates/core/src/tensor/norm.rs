use serde::{Deserialize, Serialize};

use super::{check_len, Scalar, Tensor};
use crate::error::{Error, Result};

/// Weight of the old value in the running-statistics moving average.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BnMode {
    /// Normalize with batch statistics and update the running averages.
    Train,
    /// Normalize with the stored running statistics.
    Inference,
}

/// Learned and running parameters of one batch-norm layer.
#[derive(Clone, Copy, Debug)]
pub struct BatchNormParams<'a, T> {
    pub gamma: &'a Tensor<T>,
    pub beta: &'a Tensor<T>,
    pub running_mean: &'a Tensor<T>,
    pub running_var: &'a Tensor<T>,
    pub epsilon: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    gamma: Vec<T>,
    mode: BnMode,
}

#[derive(Clone, Debug)]
pub struct BatchNormOutput<T> {
    pub output: Tensor<T>,
    /// Updated `(running_mean, running_var)`; only produced in train mode.
    pub running: Option<(Tensor<T>, Tensor<T>)>,
    pub cache: BatchNormCache<T>,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// `(batch, channels, spatial)` of a BCHW or BC tensor.
fn layout<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match x.shape()[..] {
        [b, c, h, w] => Ok((b, c, h * w)),
        [b, c] => Ok((b, c, 1)),
        _ => Err(Error::shape(
            "batchnorm",
            format!("expected BCHW or BC input, got {:?}", x.shape()),
        )),
    }
}

/// Per-channel normalization followed by the affine map `gamma·x̂ + beta`.
pub fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    params: BatchNormParams<'_, T>,
    mode: BnMode,
) -> Result<BatchNormOutput<T>> {
    const OP: &str = "batchnorm";
    let (b, c, s) = layout(input)?;
    check_len(OP, "gamma", params.gamma.data(), c)?;
    check_len(OP, "beta", params.beta.data(), c)?;
    check_len(OP, "running_mean", params.running_mean.data(), c)?;
    check_len(OP, "running_var", params.running_var.data(), c)?;
    if mode == BnMode::Train && b * s == 0 {
        return Err(Error::Usage(
            "batch norm in train mode needs a non-empty batch".into(),
        ));
    }
    let eps = T::of(params.epsilon);
    let x = input.data();
    let n = b * s;
    let nt = T::of(n as f64);

    let (mean, var) = match mode {
        BnMode::Train => {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut acc = T::zero();
                for bi in 0..b {
                    let off = (bi * c + ch) * s;
                    for &v in &x[off..off + s] {
                        acc += v;
                    }
                }
                let m = acc / nt;
                let mut sq = T::zero();
                for bi in 0..b {
                    let off = (bi * c + ch) * s;
                    for &v in &x[off..off + s] {
                        let d = v - m;
                        sq += d * d;
                    }
                }
                mean[ch] = m;
                var[ch] = sq / nt;
            }
            (mean, var)
        }
        BnMode::Inference => (
            params.running_mean.data().to_vec(),
            params.running_var.data().to_vec(),
        ),
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let gamma = params.gamma.data();
    let beta = params.beta.data();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * s;
            for i in off..off + s {
                let h = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = h;
                out[i] = gamma[ch] * h + beta[ch];
            }
        }
    }

    let running = match mode {
        BnMode::Train => {
            let mom = T::of(params.momentum);
            let keep = T::one() - mom;
            let unbias = if n > 1 {
                nt / T::of((n - 1) as f64)
            } else {
                T::one()
            };
            let rm = params
                .running_mean
                .data()
                .iter()
                .zip(&mean)
                .map(|(&r, &m)| mom * r + keep * m)
                .collect();
            let rv = params
                .running_var
                .data()
                .iter()
                .zip(&var)
                .map(|(&r, &v)| mom * r + keep * v * unbias)
                .collect();
            Some((Tensor::vector(rm), Tensor::vector(rv)))
        }
        BnMode::Inference => None,
    };

    Ok(BatchNormOutput {
        output: Tensor::from_vec(input.shape(), out)?,
        running,
        cache: BatchNormCache {
            xhat: Tensor::from_vec(input.shape(), xhat)?,
            inv_std,
            gamma: gamma.to_vec(),
            mode,
        },
    })
}

pub fn batchnorm_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &BatchNormCache<T>,
) -> Result<BatchNormGrads<T>> {
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::shape(
            "batchnorm_backward",
            format!(
                "grad_out {:?} vs forward {:?}",
                grad_out.shape(),
                cache.xhat.shape()
            ),
        ));
    }
    let (b, c, s) = layout(grad_out)?;
    let dy = grad_out.data();
    let xhat = cache.xhat.data();
    let nt = T::of((b * s) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        for bi in 0..b {
            let off = (bi * c + ch) * s;
            for i in off..off + s {
                dbeta[ch] += dy[i];
                dgamma[ch] += dy[i] * xhat[i];
            }
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for ch in 0..c {
        let scale = cache.gamma[ch] * cache.inv_std[ch];
        for bi in 0..b {
            let off = (bi * c + ch) * s;
            for i in off..off + s {
                dx[i] = match cache.mode {
                    BnMode::Train => scale / nt * (nt * dy[i] - dbeta[ch] - xhat[i] * dgamma[ch]),
                    BnMode::Inference => scale * dy[i],
                };
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_vec(grad_out.shape(), dx)?,
        gamma: Tensor::vector(dgamma),
        beta: Tensor::vector(dbeta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Owned {
        gamma: Tensor<f64>,
        beta: Tensor<f64>,
        rm: Tensor<f64>,
        rv: Tensor<f64>,
    }

    impl Owned {
        fn new(c: usize, gamma: f64, beta: f64) -> Self {
            Self {
                gamma: Tensor::full(&[c], gamma),
                beta: Tensor::full(&[c], beta),
                rm: Tensor::zeros(&[c]),
                rv: Tensor::full(&[c], 1.0),
            }
        }
        fn params(&self) -> BatchNormParams<'_, f64> {
            BatchNormParams {
                gamma: &self.gamma,
                beta: &self.beta,
                running_mean: &self.rm,
                running_var: &self.rv,
                epsilon: BN_EPSILON,
                momentum: BN_MOMENTUM,
            }
        }
    }

    #[test]
    fn already_normalized_passes_through() {
        // Per-channel mean 0, variance 1.
        let x = Tensor::from_f64(&[4, 1], &[1., -1., 1., -1.]).unwrap();
        let p = Owned::new(1, 1.0, 0.0);
        let out = batchnorm_forward(&x, p.params(), BnMode::Train).unwrap();
        for (a, b) in out.output.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn train_mode_output_moments_match_affine() {
        let vals: Vec<f64> = (0..2 * 3 * 4 * 4)
            .map(|i| ((i * 37 % 23) as f64).sin() * 3.0 + 1.0)
            .collect();
        let x = Tensor::from_f64(&[2, 3, 4, 4], &vals).unwrap();
        let p = Owned::new(3, 2.5, -0.75);
        let out = batchnorm_forward(&x, p.params(), BnMode::Train).unwrap();
        let y = out.output.data();
        for ch in 0..3 {
            let items: Vec<f64> = (0..2)
                .flat_map(|b| y[(b * 3 + ch) * 16..(b * 3 + ch + 1) * 16].to_vec())
                .collect();
            let mean = items.iter().sum::<f64>() / items.len() as f64;
            let std =
                (items.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / items.len() as f64).sqrt();
            assert!((mean + 0.75).abs() < 1e-9);
            assert!((std - 2.5).abs() < 1e-3);
        }
    }

    #[test]
    fn running_stats_follow_moving_average() {
        let x = Tensor::from_f64(&[2, 1], &[1.0, 3.0]).unwrap();
        let p = Owned::new(1, 1.0, 0.0);
        let out = batchnorm_forward(&x, p.params(), BnMode::Train).unwrap();
        let (rm, rv) = out.running.unwrap();
        // mean 2, unbiased variance 2
        assert!((rm.data()[0] - 0.2).abs() < 1e-12);
        assert!((rv.data()[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn inference_uses_running_stats() {
        let x = Tensor::from_f64(&[1, 1], &[5.0]).unwrap();
        let mut p = Owned::new(1, 2.0, 1.0);
        p.rm = Tensor::full(&[1], 3.0);
        p.rv = Tensor::full(&[1], 4.0);
        let out = batchnorm_forward(&x, p.params(), BnMode::Inference).unwrap();
        let expected = 2.0 * (5.0 - 3.0) / (4.0f64 + BN_EPSILON).sqrt() + 1.0;
        assert!((out.output.data()[0] - expected).abs() < 1e-12);
        assert!(out.running.is_none());
    }

    #[test]
    fn empty_batch_in_train_mode_is_usage_error() {
        let x = Tensor::<f64>::zeros(&[0, 2]);
        let p = Owned::new(2, 1.0, 0.0);
        assert!(matches!(
            batchnorm_forward(&x, p.params(), BnMode::Train),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn gamma_length_checked() {
        let x = Tensor::<f64>::zeros(&[2, 3]);
        let p = Owned::new(2, 1.0, 0.0);
        assert!(batchnorm_forward(&x, p.params(), BnMode::Train).is_err());
    }
}
