use serde::Serialize;

use super::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Parameters whose analytic and numeric gradient norms are both below this
/// are reported as zero-gradient and skipped.
pub const ZERO_GRAD_NORM: f64 = 1e-8;

pub const DEFAULT_FD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub param: String,
    /// `max_i |analytic_i - numeric_i| / max(|analytic|_inf, |numeric|_inf)`.
    pub max_rel_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub skipped: bool,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.skipped || self.max_rel_error <= tol
    }
}

/// Compares `analytic` against central differences of `loss` for every
/// scalar of every parameter in `params`.
pub fn finite_diff_check<F>(
    params: &ParamStore,
    analytic: &Gradients,
    eps: f64,
    loss: F,
) -> Result<Vec<GradReport>>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    let mut probe = params.clone();
    let mut reports = Vec::with_capacity(params.len());
    for (id, name, tensor) in params.iter() {
        let mut numeric = vec![0.0; tensor.len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = tensor.data()[k];
            probe.tensor_mut(id).data_mut()[k] = orig + eps;
            let up = loss(&probe)?;
            probe.tensor_mut(id).data_mut()[k] = orig - eps;
            let down = loss(&probe)?;
            probe.tensor_mut(id).data_mut()[k] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing {name}[{k}]")));
            }
            *slot = (up - down) / (2.0 * eps);
        }
        let zeros = vec![0.0; tensor.len()];
        let a = analytic.get(id).map(|t| t.data()).unwrap_or(&zeros);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let (an, nn) = (norm(a), norm(&numeric));
        let skipped = an < ZERO_GRAD_NORM && nn < ZERO_GRAD_NORM;
        let scale = inf(a).max(inf(&numeric));
        let max_rel_error = if skipped {
            0.0
        } else {
            a.iter()
                .zip(&numeric)
                .map(|(x, y)| (x - y).abs() / scale)
                .fold(0.0, f64::max)
        };
        reports.push(GradReport {
            param: name.to_string(),
            max_rel_error,
            analytic_norm: an,
            numeric_norm: nn,
            skipped,
        });
    }
    Ok(reports)
}
