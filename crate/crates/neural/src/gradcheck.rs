//! Central finite-difference gradient checking.
//!
//! The checker only perturbs leaf values and re-runs a forward closure; it
//! never looks at the backward rules it is used to verify.

use crate::{Result, Tensor};

/// Relative error with an absolute floor so that vanishing gradients are
/// compared on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// (parameter index, element index, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compares the analytic gradient of `loss` with respect to every element
/// of `params` (or a strided subset when `max_per_param` is smaller than the
/// parameter) against `(f(x+h) - f(x-h)) / 2h`.
pub fn check<F>(params: &[Tensor<f64>], loss: F, h: f64, max_per_param: usize) -> Result<GradCheck>
where
    F: Fn() -> Result<Tensor<f64>>,
{
    for p in params {
        p.zero_grad();
    }
    loss()?.backward()?;
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad_or_zeros()).collect();

    let mut out = GradCheck {
        max_relative_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (pi, p) in params.iter().enumerate() {
        let base = p.to_vec();
        let stride = (base.len() / max_per_param.max(1)).max(1);
        for j in (0..base.len()).step_by(stride) {
            let mut v = base.clone();
            v[j] = base[j] + h;
            p.set_values(v.clone())?;
            let up = loss()?.item();
            v[j] = base[j] - h;
            p.set_values(v)?;
            let down = loss()?.item();
            p.set_values(base.clone())?;

            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic[pi][j], numeric);
            out.checked += 1;
            if err > out.max_relative_error || out.worst.is_none() {
                out.max_relative_error = err.max(out.max_relative_error);
                out.worst = Some((pi, j, analytic[pi][j], numeric));
            }
        }
    }
    for p in params {
        p.zero_grad();
    }
    Ok(out)
}
