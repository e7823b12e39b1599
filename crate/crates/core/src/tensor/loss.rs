use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Row-wise softmax of a `B×K` matrix, stabilized by max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, k] = logits.dims2("softmax")?;
    let mut out = logits.data().to_vec();
    if k == 0 {
        return Tensor::from_vec(logits.shape(), out);
    }
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::from_vec(logits.shape(), out)
}

/// One-hot `B×K` targets from class indices.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Data(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        t.data_mut()[row * classes + label] = T::one();
    }
    Ok(t)
}

/// Mean cross-entropy of softmax(logits) against one-hot targets, and its
/// gradient `(softmax − target) / B`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    const OP: &str = "softmax_cross_entropy";
    let [b, k] = logits.dims2(OP)?;
    if targets.shape() != logits.shape() {
        return Err(Error::shape(
            OP,
            format!(
                "targets {:?} vs logits {:?}",
                targets.shape(),
                logits.shape()
            ),
        ));
    }
    if b == 0 {
        return Err(Error::Usage("cross-entropy over an empty batch".into()));
    }
    let mut labels = Vec::with_capacity(b);
    for (r, row) in targets.data().chunks_exact(k).enumerate() {
        let ones = row.iter().filter(|&&v| v == T::one()).count();
        let zeros = row.iter().filter(|&&v| v == T::zero()).count();
        if ones != 1 || zeros != k - 1 {
            return Err(Error::Usage(format!("target row {r} is not one-hot")));
        }
        labels.push(row.iter().position(|&v| v == T::one()).expect("one entry"));
    }

    let bt = T::of(b as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); b * k];
    for (r, (row, &label)) in logits.data().chunks_exact(k).zip(&labels).enumerate() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let total = row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
        let log_z = total.ln() + max;
        loss += log_z - row[label];
        for (j, &v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            let t = if j == label { T::one() } else { T::zero() };
            grad[r * k + j] = (p - t) / bt;
        }
    }
    Ok((loss / bt, Tensor::from_vec(&[b, k], grad)?))
}
