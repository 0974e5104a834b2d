//! Finite-difference gradient oracle.
//!
//! The loss is rebuilt from scratch for every perturbed coordinate, so only the
//! forward definitions are trusted; the backward rules are what gets checked.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Outcome of a gradient check over every coordinate of every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(param index, flat element index)` of the largest error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates whose perturbation flipped a ReLU input sign.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the tape's gradients against a fourth-order central difference
/// with spacing `step`. `build` must create the loss from the vars it is
/// handed (one trainable leaf per entry of `params`).
pub fn gradcheck<F>(params: &[Tensor<f64>], step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.param(v.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok((tape.value(loss).get(0, 0), tape.relu_signature()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|v| tape.param(v.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let base_sig = tape.relu_signature();
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("param leaf").clone();
        for e in 0..params[pi].len() {
            let orig = params[pi].data()[e];
            let mut f = [0.0; 4];
            let mut kink = false;
            for (slot, offset) in [2.0, 1.0, -1.0, -2.0].iter().enumerate() {
                work[pi].data_mut()[e] = orig + offset * step;
                let (val, sig) = eval(&work)?;
                kink |= sig != base_sig;
                f[slot] = val;
            }
            work[pi].data_mut()[e] = orig;
            if kink {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * step);
            let err = relative_error(analytic.data()[e], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((pi, e));
            }
        }
    }
    Ok(report)
}
