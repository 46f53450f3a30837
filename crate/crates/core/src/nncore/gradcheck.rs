use super::tensor::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares analytic gradients from `f` with central differences of step `eps`
/// on every coordinate. The relative error of one coordinate is
/// `|a - n| / max(|a| + |n|, floor)`, where the floor keeps coordinates whose
/// gradient is numerically zero from dominating.
pub fn grad_check<F>(f: F, params: &ModelParams, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&ModelParams) -> Result<(f64, ModelParams)>,
{
    const FLOOR: f64 = 1e-8;
    let (_, analytic) = f(params)?;
    if !analytic.same_layout(params) {
        return Err(Error::Shape("gradient layout differs from parameters".into()));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut probe = params.clone();
    for (name, g) in analytic.iter() {
        for (i, &a) in g.data().iter().enumerate() {
            let orig = params.get(name)?.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + eps;
            let (lp, _) = f(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig - eps;
            let (lm, _) = f(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            let n = (lp - lm) / (2.0 * eps);
            let rel = (a - n).abs() / (a.abs() + n.abs()).max(FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}
