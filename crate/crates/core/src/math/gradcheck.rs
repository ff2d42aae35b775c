use super::DenseVector;
use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`.
///
/// Each coordinate `i` is `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
pub fn finite_diff_gradient<F>(mut f: F, x: &DenseVector, eps: f64) -> Result<DenseVector>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let mut probe = x.as_slice().to_vec();
    let mut grad = Vec::with_capacity(probe.len());
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe);
        probe[i] = orig - eps;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                context: "finite_diff_gradient",
                index: i,
            });
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    DenseVector::new(grad)
}
