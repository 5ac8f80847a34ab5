//! Reverse-mode gradients checked against central finite differences.

use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{Fault, Parameterized, Tape, Var};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Maximum accepted relative error.
pub const TOLERANCE: f64 = 1e-4;

/// Gradient magnitude below which the relative error denominator is
/// clamped, so entries that are zero up to rounding compare absolutely.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, MAGNITUDE_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GroupReport> {
        self.groups.iter().filter(|g| !g.passed)
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    /// Prefixes every group name, for merging reports of several losses.
    pub fn prefixed(mut self, prefix: &str) -> Self {
        for g in &mut self.groups {
            g.name = format!("{prefix}{}", g.name);
        }
        self
    }

    pub fn merge(mut self, other: GradcheckReport) -> Self {
        self.groups.extend(other.groups);
        self
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            writeln!(
                f,
                "{} {:<32} entries={:<6} max_rel_err={:.3e}",
                if g.passed { "PASS" } else { "FAIL" },
                g.name,
                g.entries,
                g.max_rel_error
            )?;
        }
        write!(
            f,
            "{}: {} groups, worst {:.3e} (tolerance {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.groups.len(),
            self.worst(),
            self.tolerance
        )
    }
}

/// Compares the tape's gradient of `loss` with central differences for every
/// parameter of `model`. `loss` must bind all parameters in
/// [`Parameterized::named_params`] order. A `fault` perturbs one backward
/// rule of the analytic pass only.
pub fn check<M, F>(model: &mut M, loss: F, fault: Option<Fault>) -> Result<GradcheckReport>
where
    M: Parameterized,
    F: for<'p> Fn(&'p M, &mut Tape<'p>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::recording();
        if let Some(f) = fault {
            tape = tape.with_fault(f);
        }
        let l = loss(model, &mut tape)?;
        if tape.param_count() != model.named_params().len() {
            return Err(Error::Contract(format!(
                "loss bound {} parameters, model has {}",
                tape.param_count(),
                model.named_params().len()
            )));
        }
        tape.backward(l)?.into_param_grads()
    };
    let eval = |m: &M| -> Result<f64> {
        let mut tape = Tape::inference();
        let l = loss(m, &mut tape)?;
        Ok(tape.value(l).get(0, 0))
    };

    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    let mut groups = Vec::with_capacity(names.len());
    for (g, name) in names.into_iter().enumerate() {
        let n = analytic[g].len();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let original = model.named_params()[g].1.as_slice()[j];
            set_entry(model, g, j, original + FD_STEP);
            let plus = eval(model);
            set_entry(model, g, j, original - FD_STEP);
            let minus = eval(model);
            set_entry(model, g, j, original);
            let numeric = (plus? - minus?) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[g].as_slice()[j], numeric));
        }
        groups.push(GroupReport {
            name,
            entries: n,
            max_rel_error: worst,
            passed: worst < TOLERANCE,
        });
    }
    Ok(GradcheckReport {
        groups,
        tolerance: TOLERANCE,
    })
}

fn set_entry<M: Parameterized>(model: &mut M, group: usize, index: usize, value: f64) {
    let mut params = model.named_params_mut();
    params[group].1.as_mut_slice()[index] = value;
}
