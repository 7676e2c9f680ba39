//! Central-difference gradient oracle.

use crate::error::TensorError;

/// Step used for all finite-difference checks in this crate.
pub const FD_EPSILON: f64 = 1e-5;

/// Numerical gradient of `f` at `point` by central differences.
pub fn numeric_gradient<F>(mut f: F, point: &[f64], eps: f64) -> Result<Vec<f64>, TensorError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(TensorError::NonFinite {
                context: "grad_check",
                row: i,
            });
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Max over coordinates of `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, point: &[f64], analytic: &[f64], eps: f64) -> Result<f64, TensorError>
where
    F: FnMut(&[f64]) -> f64,
{
    if point.len() != analytic.len() {
        return Err(TensorError::Shape(format!(
            "point has {} coordinates, analytic gradient {}",
            point.len(),
            analytic.len()
        )));
    }
    if let Some(i) = analytic.iter().position(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite {
            context: "grad_check analytic",
            row: i,
        });
    }
    let numeric = numeric_gradient(f, point, eps)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max))
}
