use super::Tensor;
use crate::error::{Error, Result};

/// Denominator floor in the relative error, so exact zeros do not divide by zero.
pub const GRADCHECK_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// `(input index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Compares an analytic gradient against central finite differences.
///
/// `loss` maps the inputs to a scalar; `analytic` holds its claimed gradient
/// with respect to each input. Every coordinate of every input is perturbed
/// by `±epsilon` and the relative error
/// `|g − ĝ| / max(|g|, |ĝ|, floor)` is maximized over all coordinates.
pub fn finite_difference_check<F>(
    mut loss: F,
    inputs: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    epsilon: f64,
) -> Result<GradCheck>
where
    F: FnMut(&[Tensor<f64>]) -> Result<f64>,
{
    if epsilon <= 0.0 {
        return Err(Error::Usage("epsilon must be positive".into()));
    }
    if analytic.len() != inputs.len() {
        return Err(Error::Usage(format!(
            "{} gradients for {} inputs",
            analytic.len(),
            inputs.len()
        )));
    }
    for (i, (x, g)) in inputs.iter().zip(analytic).enumerate() {
        if x.shape() != g.shape() {
            return Err(Error::shape(
                "finite_difference_check",
                format!(
                    "gradient {i} has shape {:?}, input {:?}",
                    g.shape(),
                    x.shape()
                ),
            ));
        }
    }

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + epsilon;
            let plus = loss(&work)?;
            work[i].data_mut()[j] = orig - epsilon;
            let minus = loss(&work)?;
            work[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let exact = grad.data()[j];
            let denom = exact.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            let err = (exact - numeric).abs() / denom;
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let coef = [1.5, -2.0, 0.25, 4.0];
        let x = Tensor::from_f64(&[4], &[0.3, -1.2, 2.0, 0.7]).unwrap();
        let g = Tensor::from_f64(&[4], &coef).unwrap();
        let r = finite_difference_check(
            |xs| Ok(xs[0].data().iter().zip(&coef).map(|(a, b)| a * b).sum()),
            &[x],
            &[g],
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-9, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let x = Tensor::from_f64(&[3], &[0.5, -0.3, 1.1]).unwrap();
        let mut g = x.map(|v| 2.0 * v);
        g.data_mut()[1] *= 1.1;
        let r = finite_difference_check(
            |xs| Ok(xs[0].data().iter().map(|v| v * v).sum()),
            &[x],
            &[g],
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error > 0.05);
        assert_eq!(r.worst, Some((0, 1)));
    }

    #[test]
    fn rejects_bad_epsilon() {
        let x = Tensor::from_f64(&[1], &[0.0]).unwrap();
        assert!(finite_difference_check(|_| Ok(0.0), &[x.clone()], &[x], 0.0).is_err());
    }
}
