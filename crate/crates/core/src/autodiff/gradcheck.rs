//! Central finite differences, used as the oracle for analytic gradients.

use std::collections::HashMap;

use super::graph::ParamId;
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients to central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

fn eval<F: FnMut(&ParamStore) -> Result<f64>>(f: &mut F, params: &ParamStore) -> Result<f64> {
    let y = f(params)?;
    if !y.is_finite() {
        return Err(Error::Evaluation(format!("objective evaluated to {y}")));
    }
    Ok(y)
}

const RIDDERS_SHRINK: f64 = 1.4;
const RIDDERS_STEPS: usize = 10;

/// Central differences refined by Ridders' extrapolation: the step starts at
/// `h` and shrinks by a factor 1.4 per round, and the tableau entry with the
/// smallest error estimate wins. Small derivatives stay accurate because the
/// estimate never relies on a single step that rounding noise could swamp.
pub fn numeric_gradient<F>(mut f: F, params: &mut ParamStore, h: f64) -> Result<HashMap<ParamId, Tensor>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
    }
    let mut out = HashMap::new();
    for id in params.ids().collect::<Vec<_>>() {
        let mut grad = Tensor::zeros(params.get(id).shape());
        for i in 0..grad.len() {
            let orig = params.get(id).data()[i];
            let mut central = |step: f64, params: &mut ParamStore| -> Result<f64> {
                params.get_mut(id).data_mut()[i] = orig + step;
                let up = eval(&mut f, params);
                params.get_mut(id).data_mut()[i] = orig - step;
                let down = eval(&mut f, params);
                params.get_mut(id).data_mut()[i] = orig;
                Ok((up? - down?) / (2.0 * step))
            };
            let c2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
            let mut table = vec![vec![0.0; RIDDERS_STEPS]; RIDDERS_STEPS];
            let mut step = h;
            table[0][0] = central(step, params)?;
            let mut best = table[0][0];
            let mut err = f64::INFINITY;
            for k in 1..RIDDERS_STEPS {
                step /= RIDDERS_SHRINK;
                table[0][k] = central(step, params)?;
                let mut fac = c2;
                for j in 1..=k {
                    table[j][k] = (table[j - 1][k] * fac - table[j - 1][k - 1]) / (fac - 1.0);
                    fac *= c2;
                    let e = (table[j][k] - table[j - 1][k]).abs().max((table[j][k] - table[j - 1][k - 1]).abs());
                    if e <= err {
                        err = e;
                        best = table[j][k];
                    }
                }
                if (table[k][k] - table[k - 1][k - 1]).abs() >= 2.0 * err {
                    break;
                }
            }
            grad.data_mut()[i] = best;
        }
        out.insert(id, grad);
    }
    Ok(out)
}

/// Max over coordinates of `|a − n| / max(1e-8, |a| + |n|)`.
///
/// Parameters missing from `analytic` are taken to have zero gradient.
pub fn finite_diff_check<F>(
    f: F,
    params: &mut ParamStore,
    analytic: &HashMap<ParamId, Tensor>,
    h: f64,
) -> Result<GradCheck>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let numeric = numeric_gradient(f, params, h)?;
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: None,
        coordinates: 0,
    };
    for id in params.ids() {
        let num = &numeric[&id];
        for (i, &n) in num.data().iter().enumerate() {
            let a = analytic.get(&id).map_or(0.0, |t| t.data()[i]);
            let err = (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
            report.coordinates += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((params.name(id).to_string(), i));
            }
        }
    }
    Ok(report)
}
