use super::gemm::{matmul, transpose};
use super::{check_len, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LinearCache<T> {
    input: Tensor<T>,
    weights: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `y = x·Wᵀ + b` for `x: B×D_in`, `W: D_out×D_in`.
pub fn fully_connected_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, LinearCache<T>)> {
    const OP: &str = "fully_connected";
    let [b, d_in] = input.dims2(OP)?;
    let [d_out, w_in] = weights.dims2(OP)?;
    if w_in != d_in {
        return Err(Error::shape(
            OP,
            format!("input width {d_in} but weights take {w_in}"),
        ));
    }
    check_len(OP, "bias", bias.data(), d_out)?;
    // yᵀ = W·xᵀ keeps the large weight matrix in place.
    let x_t = transpose(b, d_in, input.data());
    let mut y_t = vec![T::zero(); d_out * b];
    for (row, &bv) in y_t.chunks_exact_mut(b.max(1)).zip(bias.data()) {
        row.fill(bv);
    }
    matmul(d_out, d_in, b, weights.data(), &x_t, &mut y_t, true);
    let y = transpose(d_out, b, &y_t);
    Ok((
        Tensor::from_vec(&[b, d_out], y)?,
        LinearCache {
            input: input.clone(),
            weights: weights.clone(),
        },
    ))
}

pub fn fully_connected_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &LinearCache<T>,
) -> Result<LinearGrads<T>> {
    const OP: &str = "fully_connected_backward";
    let [b, d_in] = cache.input.dims2(OP)?;
    let [d_out, _] = cache.weights.dims2(OP)?;
    if grad_out.shape() != [b, d_out] {
        return Err(Error::shape(
            OP,
            format!("grad_out {:?}, expected {:?}", grad_out.shape(), [b, d_out]),
        ));
    }
    let dy_t = transpose(b, d_out, grad_out.data());
    let mut dw = vec![T::zero(); d_out * d_in];
    matmul(d_out, b, d_in, &dy_t, cache.input.data(), &mut dw, false);
    let mut dx = vec![T::zero(); b * d_in];
    matmul(
        b,
        d_out,
        d_in,
        grad_out.data(),
        cache.weights.data(),
        &mut dx,
        false,
    );
    let db = dy_t
        .chunks_exact(b.max(1))
        .map(|row| row.iter().fold(T::zero(), |acc, &v| acc + v))
        .collect();
    Ok(LinearGrads {
        input: Tensor::from_vec(&[b, d_in], dx)?,
        weights: Tensor::from_vec(&[d_out, d_in], dw)?,
        bias: Tensor::vector(db),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let x = Tensor::<f64>::from_f64(&[2, 3], &[1., 2., 3., -4., 5., 6.]).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let (y, _) = fully_connected_forward(&x, &eye, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor::<f32>::zeros(&[4, 5]);
        let w = Tensor::full(&[2, 5], 0.3);
        let bias = Tensor::from_f64(&[2], &[1.5, -2.0]).unwrap();
        let (y, _) = fully_connected_forward(&x, &w, &bias).unwrap();
        for row in y.data().chunks(2) {
            assert_eq!(row, &[1.5, -2.0]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 4]);
        let w = Tensor::<f32>::zeros(&[2, 3]);
        assert!(fully_connected_forward(&x, &w, &Tensor::zeros(&[2])).is_err());
    }
}
