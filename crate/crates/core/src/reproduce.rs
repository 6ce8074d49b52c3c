//! Scripted parameter sweeps over three reference families with known
//! behaviour, each producing a list of pass/fail checks.
//!
//! * `a`: `psi = t^alpha`, `omega_i = (1+x)^beta_i`; bounded iff
//!   `beta2 <= beta1` and `beta2 < alpha`.
//! * `b`: `psi = t^alpha`, `omega2 = e^-x`; `Phi(s)` is pinched between
//!   `2^-(alpha+2) e^-s / s` and `e^-s / s` for `s >= 1`.
//! * `c`: `psi = e^{-1/t^2}`, `omega2 = e^x`; `Phi(s)` is of exact order
//!   `e^{s^2/4} / s`.

use crate::condition_c::{certify, phi};
use crate::error::{Error, Result};
use crate::grid::log_grid;
use crate::quadrature::{integrate_positive_axis, integrate_unit, QuadOptions};
use crate::weights::{ProblemInstance, PsiProfile, Weight};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Relative slack allowed on each side of a two-sided bound.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    A,
    B,
    C,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Family::A),
            "b" | "B" => Ok(Family::B),
            "c" | "C" => Ok(Family::C),
            other => Err(Error::invalid("example", format!("expected a, b or c, got {other:?}"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::A => "a",
            Family::B => "b",
            Family::C => "c",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(label: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            label: label.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.label, self.detail)
    }
}

pub fn run(family: Family) -> Result<Vec<Check>> {
    match family {
        Family::A => power_family(),
        Family::B => exponential_family(),
        Family::C => gaussian_family(),
    }
}

pub const POWER_ALPHAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const POWER_BETAS: [f64; 4] = [-1.0, 0.0, 0.4, 1.5];

pub fn power_instance(alpha: f64, beta1: f64, beta2: f64) -> Result<ProblemInstance> {
    Ok(ProblemInstance::new(
        PsiProfile::power(alpha)?,
        Weight::polynomial(beta1)?,
        Weight::polynomial(beta2)?,
    ))
}

/// One check per `(alpha, beta1, beta2)` comparing the verdict with the
/// closed-form criterion.
pub fn power_family() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for alpha in POWER_ALPHAS {
        for beta1 in POWER_BETAS {
            for beta2 in POWER_BETAS {
                let expected = beta2 <= beta1 && beta2 < alpha;
                let v = certify(&power_instance(alpha, beta1, beta2)?)?;
                out.push(Check::new(
                    format!("a alpha={alpha} beta1={beta1} beta2={beta2}"),
                    v.is_bounded() == expected,
                    format!("expected bounded={expected}, got {:?}", v.status),
                ));
            }
        }
    }
    Ok(out)
}

pub fn exponential_instance(alpha: f64) -> Result<ProblemInstance> {
    Ok(ProblemInstance::new(
        PsiProfile::power(alpha)?,
        Weight::parametric(0.0, -1.0, -1.0, 0.0)?,
        Weight::parametric(0.0, 0.0, -1.0, 0.0)?,
    ))
}

/// Two-sided bounds at 20 points of `[1, 10]` and a bounded verdict with
/// `omega1 = e^-x / (1+x)`, for `alpha` in `{1, 2}`.
pub fn exponential_family() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for alpha in [1.0, 2.0] {
        let inst = exponential_instance(alpha)?;
        for s in log_grid(1.0, 10.0, 20) {
            let value = phi(&inst, s)?;
            let upper = (-s).exp() / s;
            let lower = upper * 2f64.powf(-(alpha + 2.0));
            out.push(Check::new(
                format!("b alpha={alpha} s={s:.4} lower"),
                lower <= value * (1.0 + BOUND_SLACK),
                format!("{lower:.6e} <= Phi = {value:.6e}"),
            ));
            out.push(Check::new(
                format!("b alpha={alpha} s={s:.4} upper"),
                value <= upper * (1.0 + BOUND_SLACK),
                format!("Phi = {value:.6e} <= {upper:.6e}"),
            ));
        }
        let v = certify(&inst)?;
        out.push(Check::new(
            format!("b alpha={alpha} certify"),
            v.is_bounded(),
            format!("{:?}, norm estimate {:?}", v.status, v.norm_estimate),
        ));
    }
    Ok(out)
}

pub fn gaussian_instance() -> Result<ProblemInstance> {
    Ok(ProblemInstance::new(
        PsiProfile::gauss_essential(),
        Weight::parametric(-1.0, 0.0, 0.0, 0.25)?,
        Weight::parametric(0.0, 0.0, 1.0, 0.0)?,
    ))
}

/// `(int_0^1 e^{-u^2} du, int_R e^{-u^2} du)` by quadrature.
pub fn gaussian_constants(tol: f64) -> Result<(f64, f64)> {
    let unit = integrate_unit(|u| (-u * u).exp(), tol)?.value;
    let half = integrate_positive_axis(|u| (-u * u).exp(), &[], &QuadOptions::with_tol(tol))?.value;
    Ok((unit, 2.0 * half))
}

/// Lower bound at `s` in `{2,3,4,6,8}`, upper bound at `s` in `{4,6,8}`, and
/// a bounded verdict with `omega1 = e^{x^2/4} / x`.
pub fn gaussian_family() -> Result<Vec<Check>> {
    let inst = gaussian_instance()?;
    let (unit, line) = gaussian_constants(1e-12)?;
    let scale = |s: f64| (s * s / 4.0).exp() / s;
    let mut out = Vec::new();
    for s in [2.0, 3.0, 4.0, 6.0, 8.0] {
        let value = phi(&inst, s)?;
        let lower = unit * scale(s);
        out.push(Check::new(
            format!("c s={s} lower"),
            lower <= value * (1.0 + BOUND_SLACK),
            format!("{lower:.6e} <= Phi = {value:.6e}"),
        ));
    }
    for s in [4.0, 6.0, 8.0] {
        let value = phi(&inst, s)?;
        let upper = (4.0 * line + 1.0) * scale(s);
        out.push(Check::new(
            format!("c s={s} upper"),
            value <= upper * (1.0 + BOUND_SLACK),
            format!("Phi = {value:.6e} <= {upper:.6e}"),
        ));
    }
    let v = certify(&inst)?;
    out.push(Check::new(
        "c certify",
        v.is_bounded(),
        format!("{:?}, norm estimate {:?}", v.status, v.norm_estimate),
    ));
    Ok(out)
}
