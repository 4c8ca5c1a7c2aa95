//! Central finite-difference gradient checking.

use super::{Array, Tape, Var};
use crate::error::{Error, Result};

/// Step used by every finite-difference check in the crate.
pub const FD_STEP: f64 = 1e-5;

/// Magnitude below which errors are measured absolutely rather than
/// relative to the gradient size.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the tape gradient of `f` at `inputs` against central
/// differences with step `h`, over every input element.
pub fn check_gradients<F>(inputs: &[Array], h: f64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |arrays: &[Array]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = arrays.iter().map(|a| tape.constant(a.clone())).collect();
        let out = f(&tape, &vars)?;
        out.value().item().ok_or_else(|| Error::NotScalar(out.shape()))
    };

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheck::default();
    let mut work: Vec<Array> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).clone();
        for e in 0..inputs[i].len() {
            let orig = inputs[i].data()[e];
            work[i].data_mut()[e] = orig + h;
            let fp = eval(&work)?;
            work[i].data_mut()[e] = orig - h;
            let fm = eval(&work)?;
            work[i].data_mut()[e] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data()[e];
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            report.max_rel_err = report.max_rel_err.max(rel_err(a, numeric));
            report.checked += 1;
        }
    }
    Ok(report)
}
