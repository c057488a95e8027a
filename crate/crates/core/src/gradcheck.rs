//! Finite-difference validation of analytic gradients.
//!
//! Central differences are taken at the requested step. The losses in this
//! crate are piecewise smooth (rectifiers, hinges, histogram knots, the
//! absolute value inside the EMD), so a stencil can straddle a kink. When the
//! left and right one-sided slopes disagree, the step is shrunk by 10x down
//! to [`MIN_STEP`]; if they still disagree the kink sits inside the smallest
//! stencil and the analytic value is compared against the nearer one-sided
//! slope instead, which is the derivative of the smooth piece on that side.

use crate::error::{Error, Result};
use crate::tensor::ParamSet;

pub const MIN_STEP: f64 = 1e-8;

/// A scalar function of a parameter set with an analytic gradient.
pub trait Objective {
    fn value(&self, params: &ParamSet) -> Result<f64>;
    fn value_and_grad(&self, params: &ParamSet) -> Result<(f64, ParamSet)>;
}

/// Closure pair adapter for [`Objective`].
pub struct FnObjective<V, G> {
    pub value: V,
    pub grad: G,
}

impl<V, G> Objective for FnObjective<V, G>
where
    V: Fn(&ParamSet) -> Result<f64>,
    G: Fn(&ParamSet) -> Result<(f64, ParamSet)>,
{
    fn value(&self, params: &ParamSet) -> Result<f64> {
        (self.value)(params)
    }

    fn value_and_grad(&self, params: &ParamSet) -> Result<(f64, ParamSet)> {
        (self.grad)(params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over scalars of |analytic - numeric| / max(1, |numeric|)
    pub max_relative_error: f64,
    /// `name[index]` of the worst scalar
    pub worst: String,
    pub checked: usize,
    /// scalars whose stencil had to be shrunk because of a nearby kink
    pub refined: usize,
    /// scalars where a kink remained inside the smallest stencil
    pub one_sided: usize,
}

pub fn grad_check(obj: &dyn Objective, params: &ParamSet, eps: f64) -> Result<GradCheckReport> {
    if !(1e-6..=1e-2).contains(&eps) {
        return Err(Error::Config(format!("grad_check step {eps} outside [1e-6, 1e-2]")));
    }
    let (base, analytic) = obj.value_and_grad(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("unperturbed parameters".into()));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: String::new(),
        checked: 0,
        refined: 0,
        one_sided: 0,
    };
    let mut work = params.clone();
    for (name, tensor) in params.iter() {
        let grad = analytic.expect(name)?;
        for i in 0..tensor.len() {
            let a = grad.data()[i];
            let x0 = tensor.data()[i];
            let mut eval = |delta: f64| -> Result<f64> {
                work.get_mut(name).expect("cloned set").data_mut()[i] = x0 + delta;
                let v = obj.value(&work);
                work.get_mut(name).expect("cloned set").data_mut()[i] = x0;
                let v = v?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{name}[{i}] {delta:+e}")));
                }
                Ok(v)
            };
            let mut h = eps;
            let mut shrunk = false;
            let err = loop {
                let lp = eval(h)?;
                let lm = eval(-h)?;
                let central = (lp - lm) / (2.0 * h);
                let right = (lp - base) / h;
                let left = (base - lm) / h;
                let smooth = (right - left).abs() <= 1e-6 * central.abs().max(1.0);
                if smooth {
                    break (a - central).abs() / central.abs().max(1.0);
                }
                if h / 10.0 >= MIN_STEP {
                    h /= 10.0;
                    shrunk = true;
                    continue;
                }
                report.one_sided += 1;
                let e_r = (a - right).abs() / right.abs().max(1.0);
                let e_l = (a - left).abs() / left.abs().max(1.0);
                break e_r.min(e_l);
            };
            if shrunk {
                report.refined += 1;
            }
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_empty() {
                report.max_relative_error = err;
                report.worst = format!("{name}[{i}]");
            }
        }
    }
    Ok(report)
}
