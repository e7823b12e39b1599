use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Stacks BCHW tensors along the channel axis, in argument order.
pub fn channel_concat<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    const OP: &str = "channel_concat";
    let first = inputs
        .first()
        .ok_or_else(|| Error::shape(OP, "nothing to concatenate"))?;
    let [b, _, h, w] = first.dims4(OP)?;
    let mut channels = 0;
    for t in inputs {
        let [tb, tc, th, tw] = t.dims4(OP)?;
        if (tb, th, tw) != (b, h, w) {
            return Err(Error::shape(
                OP,
                format!(
                    "{:?} does not match batch/spatial dims of {:?}",
                    t.shape(),
                    first.shape()
                ),
            ));
        }
        channels += tc;
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(b * channels * plane);
    for bi in 0..b {
        for t in inputs {
            let tc = t.shape()[1];
            data.extend_from_slice(&t.data()[bi * tc * plane..(bi + 1) * tc * plane]);
        }
    }
    Tensor::from_vec(&[b, channels, h, w], data)
}

/// Inverse of [`channel_concat`]: cuts the channel axis into the given widths.
pub fn channel_split<T: Scalar>(input: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    const OP: &str = "channel_split";
    let [b, c, h, w] = input.dims4(OP)?;
    if widths.iter().sum::<usize>() != c {
        return Err(Error::shape(
            OP,
            format!("widths {widths:?} do not sum to {c} channels"),
        ));
    }
    let plane = h * w;
    let mut parts: Vec<Vec<T>> = widths
        .iter()
        .map(|&wc| Vec::with_capacity(b * wc * plane))
        .collect();
    for bi in 0..b {
        let mut start = bi * c * plane;
        for (part, &wc) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&input.data()[start..start + wc * plane]);
            start += wc * plane;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(data, &wc)| Tensor::from_vec(&[b, wc, h, w], data))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize], offset: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_f64(
            shape,
            &(0..n).map(|i| i as f64 + offset).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn single_input_is_identity() {
        let a = ramp(&[2, 3, 2, 2], 0.0);
        assert_eq!(channel_concat(&[&a]).unwrap(), a);
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = ramp(&[2, 3, 2, 2], 0.0);
        let b = ramp(&[2, 1, 2, 2], 100.0);
        let c = channel_concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 4, 2, 2]);
        let parts = channel_split(&c, &[3, 1]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn spatial_mismatch_rejected() {
        let a = ramp(&[1, 1, 2, 2], 0.0);
        let b = ramp(&[1, 1, 3, 2], 0.0);
        assert!(matches!(
            channel_concat(&[&a, &b]),
            Err(Error::Shape { .. })
        ));
    }
}
