use std::borrow::Cow;

use rayon::prelude::*;

use super::gemm::{matmul, transpose};
use super::{check_len, Scalar, Tensor};
use crate::error::{Error, Result};

/// Everything the backward pass of a convolution needs.
#[derive(Clone, Debug)]
pub struct Conv2dCache<T> {
    input: Tensor<T>,
    weights: Tensor<T>,
    has_bias: bool,
    stride: usize,
    padding: usize,
    out_hw: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn output_dim(op: &'static str, size: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape(op, "stride must be positive"));
    }
    let padded = size + 2 * pad;
    if k == 0 || k > padded {
        return Err(Error::shape(
            op,
            format!("kernel {k} does not fit padded input {padded}"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

/// Unrolls one sample into a `(C·kh·kw) × (oh·ow)` patch matrix.
fn im2col<T: Scalar>(x: &[T], g: &Geometry) -> Vec<T> {
    let p = g.positions();
    let mut cols = vec![T::zero(); g.patch_len() * p];
    for ch in 0..g.c {
        let plane = &x[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (ch * g.kh + i) * g.kw + j;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + j) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-adds a patch-matrix gradient back onto the input plane layout.
fn col2im<T: Scalar>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let p = g.positions();
    for ch in 0..g.c {
        let plane = &mut dx[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (ch * g.kh + i) * g.kw + j;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + j) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn patches<'a, T: Scalar>(x: &'a [T], g: &Geometry) -> Cow<'a, [T]> {
    if g.is_pointwise() {
        Cow::Borrowed(x)
    } else {
        Cow::Owned(im2col(x, g))
    }
}

/// 2-D cross-correlation of a BCHW input with OIHW weights.
///
/// Output spatial size is `floor((H + 2·padding − kH) / stride) + 1`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Conv2dCache<T>)> {
    const OP: &str = "conv2d";
    let [b, c, h, w] = input.dims4(OP)?;
    let [o, i, kh, kw] = weights.dims4(OP)?;
    if i != c {
        return Err(Error::shape(
            OP,
            format!("input has {c} channels but weights expect {i}"),
        ));
    }
    if let Some(bias) = bias {
        check_len(OP, "bias", bias.data(), o)?;
    }
    let g = Geometry {
        c,
        h,
        w,
        kh,
        kw,
        stride,
        pad: padding,
        oh: output_dim(OP, h, kh, stride, padding)?,
        ow: output_dim(OP, w, kw, stride, padding)?,
    };
    let k = g.patch_len();
    let p = g.positions();
    let per_sample = c * h * w;

    let outputs: Vec<Vec<T>> = (0..b)
        .into_par_iter()
        .map(|s| {
            let cols = patches(&input.data()[s * per_sample..(s + 1) * per_sample], &g);
            let mut out = vec![T::zero(); o * p];
            if let Some(bias) = bias {
                for (row, &bv) in out.chunks_exact_mut(p).zip(bias.data()) {
                    row.fill(bv);
                }
            }
            matmul(o, k, p, weights.data(), &cols, &mut out, true);
            out
        })
        .collect();

    let output = Tensor::from_vec(&[b, o, g.oh, g.ow], outputs.concat())?;
    let cache = Conv2dCache {
        input: input.clone(),
        weights: weights.clone(),
        has_bias: bias.is_some(),
        stride,
        padding,
        out_hw: (g.oh, g.ow),
    };
    Ok((output, cache))
}

/// Gradients of a convolution with respect to its input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &Conv2dCache<T>,
) -> Result<Conv2dGrads<T>> {
    const OP: &str = "conv2d_backward";
    let [b, c, h, w] = cache.input.dims4(OP)?;
    let [o, _, kh, kw] = cache.weights.dims4(OP)?;
    let (oh, ow) = cache.out_hw;
    if grad_out.shape() != [b, o, oh, ow] {
        return Err(Error::shape(
            OP,
            format!(
                "grad_out {:?} does not match forward output {:?}",
                grad_out.shape(),
                [b, o, oh, ow]
            ),
        ));
    }
    let g = Geometry {
        c,
        h,
        w,
        kh,
        kw,
        stride: cache.stride,
        pad: cache.padding,
        oh,
        ow,
    };
    let k = g.patch_len();
    let p = g.positions();
    let per_sample = c * h * w;
    let w_t = transpose(o, k, cache.weights.data());

    // Per-sample partial weight gradients, reduced below in sample order.
    let per_sample_grads: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..b)
        .into_par_iter()
        .map(|s| {
            let x = &cache.input.data()[s * per_sample..(s + 1) * per_sample];
            let dy = &grad_out.data()[s * o * p..(s + 1) * o * p];

            let cols = patches(x, &g);
            let rows = transpose(k, p, &cols);
            let mut dw = vec![T::zero(); o * k];
            matmul(o, p, k, dy, &rows, &mut dw, false);

            let mut dcols = vec![T::zero(); k * p];
            matmul(k, o, p, &w_t, dy, &mut dcols, false);
            let dx = if g.is_pointwise() {
                dcols
            } else {
                let mut dx = vec![T::zero(); per_sample];
                col2im(&dcols, &g, &mut dx);
                dx
            };

            let db = dy
                .chunks_exact(p)
                .map(|row| row.iter().fold(T::zero(), |acc, &v| acc + v))
                .collect();
            (dx, dw, db)
        })
        .collect();

    let mut dx = Vec::with_capacity(b * per_sample);
    let mut dw = vec![T::zero(); o * k];
    let mut db = vec![T::zero(); o];
    for (sx, sw, sb) in per_sample_grads {
        dx.extend_from_slice(&sx);
        for (acc, v) in dw.iter_mut().zip(sw) {
            *acc += v;
        }
        for (acc, v) in db.iter_mut().zip(sb) {
            *acc += v;
        }
    }

    Ok(Conv2dGrads {
        input: Tensor::from_vec(&[b, c, h, w], dx)?,
        weights: Tensor::from_vec(cache.weights.shape(), dw)?,
        bias: if cache.has_bias {
            Some(Tensor::vector(db))
        } else {
            None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = t(&[1, 1, 2, 3], &[1., -2., 3., 4., 5., -6.]);
        let wt = t(&[1, 1, 1, 1], &[1.0]);
        let bias = t(&[1], &[0.0]);
        let (y, _) = conv2d_forward(&x, &wt, Some(&bias), 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn two_by_two_sum() {
        let x = t(&[1, 1, 2, 2], &[1., 2., 3., 4.]);
        let wt = t(&[1, 1, 2, 2], &[1., 1., 1., 1.]);
        let bias = t(&[1], &[0.0]);
        let (y, _) = conv2d_forward(&x, &wt, Some(&bias), 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor::<f64>::zeros(&[2, 3, 5, 4]);
        let wt = Tensor::full(&[2, 3, 3, 3], 0.7);
        let bias = t(&[2], &[0.25, -1.5]);
        let (y, _) = conv2d_forward(&x, &wt, Some(&bias), 2, 1).unwrap();
        assert_eq!(y.shape(), &[2, 2, 3, 2]);
        for s in 0..2 {
            let off = s * 12;
            assert!(y.data()[off..off + 6].iter().all(|&v| v == 0.25));
            assert!(y.data()[off + 6..off + 12].iter().all(|&v| v == -1.5));
        }
    }

    #[test]
    fn output_size_formula() {
        let x = Tensor::<f32>::zeros(&[1, 1, 7, 6]);
        let wt = Tensor::<f32>::zeros(&[4, 1, 3, 3]);
        let (y, _) = conv2d_forward(&x, &wt, None, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 3]);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let wt = Tensor::<f32>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(
            conv2d_forward(&x, &wt, None, 1, 1),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn kernel_larger_than_input_is_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        let wt = Tensor::<f32>::zeros(&[1, 1, 5, 5]);
        assert!(conv2d_forward(&x, &wt, None, 1, 1).is_err());
    }

    #[test]
    fn scalar_weight_gradient_is_input() {
        let x = t(&[1, 1, 1, 1], &[3.5]);
        let wt = t(&[1, 1, 1, 1], &[2.0]);
        let (_, cache) = conv2d_forward(&x, &wt, None, 1, 0).unwrap();
        let g = conv2d_backward(&t(&[1, 1, 1, 1], &[1.0]), &cache).unwrap();
        assert_eq!(g.weights.data(), &[3.5]);
        assert_eq!(g.input.data(), &[2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = Tensor::full(&[2, 2, 4, 4], 0.3);
        let wt = Tensor::full(&[3, 2, 3, 3], -0.2);
        let bias = Tensor::full(&[3], 0.1);
        let (y, cache) = conv2d_forward(&x, &wt, Some(&bias), 1, 1).unwrap();
        let g = conv2d_backward(&Tensor::zeros(y.shape()), &cache).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_grad_shape_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 1, 4, 4]);
        let wt = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        let (_, cache) = conv2d_forward(&x, &wt, None, 1, 0).unwrap();
        assert!(conv2d_backward(&Tensor::zeros(&[1, 1, 4, 4]), &cache).is_err());
    }
}
