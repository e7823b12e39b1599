use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Masks the upstream gradient by `input > 0`; the subgradient at 0 is 0.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("relu_backward", grad_out, input)?;
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Elementwise tanh, clamped to the open interval (−1, 1).
///
/// In 32-bit floats `tanh(x)` rounds to exactly ±1 for |x| ≳ 9; the clamp
/// keeps outputs strictly inside the interval.
pub fn tanh_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let bound = T::one() - T::epsilon() / T::of(2.0);
    input.map(|v| v.tanh().max(-bound).min(bound))
}

/// `grad · (1 − y²)` where `y` is the forward output.
pub fn tanh_backward<T: Scalar>(grad_out: &Tensor<T>, output: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("tanh_backward", grad_out, output)?;
    let data = grad_out
        .data()
        .iter()
        .zip(output.data())
        .map(|(&g, &y)| g * (T::one() - y * y))
        .collect();
    Tensor::from_vec(output.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::<f64>::from_f64(&[3], &[-2.0, 3.0, 0.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 3.0, 0.0]);
        let g = relu_backward(&Tensor::full(&[3], 1.0), &x).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn relu_idempotent() {
        let x = Tensor::<f32>::from_f64(&[5], &[-1.0, 0.5, 0.0, 2.0, -0.1]).unwrap();
        let once = relu_forward(&x);
        assert_eq!(relu_forward(&once), once);
    }

    #[test]
    fn tanh_basics() {
        let x = Tensor::<f64>::from_f64(&[3], &[0.0, 0.7, -0.7]).unwrap();
        let y = tanh_forward(&x);
        assert_eq!(y.data()[0], 0.0);
        assert_eq!(y.data()[1], -y.data()[2]);
        let g = tanh_backward(&Tensor::full(&[3], 1.0), &y).unwrap();
        assert_eq!(g.data()[0], 1.0);
    }

    #[test]
    fn tanh_strictly_bounded_in_f32() {
        let x = Tensor::<f32>::from_f64(&[2], &[50.0, -50.0]).unwrap();
        let y = tanh_forward(&x);
        assert!(y.data()[0] < 1.0 && y.data()[1] > -1.0);
    }
}
