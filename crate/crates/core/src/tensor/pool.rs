use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MaxPoolCache {
    input_shape: Vec<usize>,
    /// Flat input index of the winning element for every output element.
    argmax: Vec<usize>,
}

impl MaxPoolCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Max pooling over `window × window` patches. Padding cells never win.
pub fn maxpool_forward<T: Scalar>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, MaxPoolCache)> {
    const OP: &str = "maxpool";
    let [b, c, h, w] = input.dims4(OP)?;
    if window == 0 || stride == 0 {
        return Err(Error::shape(OP, "window and stride must be positive"));
    }
    if padding >= window {
        return Err(Error::shape(OP, "padding must be smaller than the window"));
    }
    if window > h + 2 * padding || window > w + 2 * padding {
        return Err(Error::shape(
            OP,
            format!("window {window} larger than padded input {h}x{w} (pad {padding})"),
        ));
    }
    let oh = (h + 2 * padding - window) / stride + 1;
    let ow = (w + 2 * padding - window) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let y0 = (oy * stride) as isize - padding as isize;
            for ox in 0..ow {
                let x0 = (ox * stride) as isize - padding as isize;
                let mut best: Option<(T, usize)> = None;
                for dy in 0..window as isize {
                    let iy = y0 + dy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for dx in 0..window as isize {
                        let ix = x0 + dx;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = base + iy as usize * w + ix as usize;
                        let v = x[idx];
                        if best.is_none_or(|(bv, _)| v > bv) {
                            best = Some((v, idx));
                        }
                    }
                }
                // padding < window guarantees at least one real cell.
                let (v, idx) = best.expect("window covers a real cell");
                out.push(v);
                argmax.push(idx);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[b, c, oh, ow], out)?,
        MaxPoolCache {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

/// Routes each upstream gradient to the argmax position of its window.
pub fn maxpool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &MaxPoolCache,
) -> Result<Tensor<T>> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::shape(
            "maxpool_backward",
            format!(
                "grad_out has {} elements, forward produced {}",
                grad_out.len(),
                cache.argmax.len()
            ),
        ));
    }
    let mut dx = Tensor::zeros(&cache.input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        d[idx] += g;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_max() {
        let x = Tensor::<f64>::from_f64(&[1, 1, 2, 2], &[1., 2., 3., 4.]).unwrap();
        let (y, cache) = maxpool_forward(&x, 2, 2, 0).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(cache.argmax(), &[3]);
    }

    #[test]
    fn constant_in_constant_out() {
        let x = Tensor::<f32>::full(&[2, 3, 6, 5], 1.25);
        let (y, _) = maxpool_forward(&x, 3, 2, 1).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn backward_routes_only_to_argmax() {
        let x = Tensor::<f64>::from_f64(&[1, 1, 2, 4], &[1., 5., 0., -1., 2., 3., 7., 6.]).unwrap();
        let (_, cache) = maxpool_forward(&x, 2, 2, 0).unwrap();
        let g = Tensor::<f64>::from_f64(&[1, 1, 1, 2], &[10., 20.]).unwrap();
        let dx = maxpool_backward(&g, &cache).unwrap();
        assert_eq!(dx.data(), &[0., 10., 0., 0., 0., 0., 20., 0.]);
    }

    #[test]
    fn window_larger_than_input() {
        let x = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        assert!(matches!(
            maxpool_forward(&x, 3, 1, 0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn stride_two_with_padding_halves() {
        let x = Tensor::<f32>::zeros(&[1, 2, 16, 8]);
        let (y, _) = maxpool_forward(&x, 3, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 2, 8, 4]);
    }
}
