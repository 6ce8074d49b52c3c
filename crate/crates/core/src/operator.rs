//! `U_psi` and its adjoint applied to concrete functions, weighted norms,
//! and the duality check `<U f, h> = <f, U* h>`.

use crate::condition_c::{certify, tail_breaks, unit_breaks};
use crate::error::{Error, Result};
use crate::function::{Term, TestFunction};
use crate::grid::log_grid;
use crate::quadrature::{
    integrate_positive_axis, integrate_tail_log, integrate_tail_with, integrate_unit_log, integrate_unit_log_until,
    integrate_unit_with, LogQuadResult, QuadOptions, QuadResult,
};
use crate::weights::{log_mul, ProblemInstance, PsiProfile, Weight};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;

/// Abscissae on which `U f` is tabulated when it has to be integrated again.
pub const SAMPLE_GRID: (f64, f64, usize) = (1e-6, 1e6, 400);

/// A computed integral with its error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub abs_error: f64,
    pub diverged: bool,
}

impl Evaluation {
    const ZERO: Evaluation = Evaluation {
        value: 0.0,
        abs_error: 0.0,
        diverged: false,
    };

    fn from_plain(r: QuadResult) -> Self {
        Evaluation {
            value: if r.diverged { f64::INFINITY } else { r.value },
            abs_error: r.abs_error_estimate,
            diverged: r.diverged,
        }
    }

    fn add_log(self, sign: f64, r: &LogQuadResult) -> Self {
        if r.result.diverged {
            return Evaluation {
                value: f64::INFINITY,
                abs_error: f64::INFINITY,
                diverged: true,
            };
        }
        Evaluation {
            value: self.value + sign * r.value(),
            abs_error: self.abs_error + r.abs_error(),
            diverged: self.diverged,
        }
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "x",
            requirement: "x > 0",
            value: x,
        })
    }
}

/// `(U f)(x) = int_0^1 f(t x) psi(t) dt`.
pub fn apply_u(inst: &ProblemInstance, f: &TestFunction, x: f64) -> Result<f64> {
    Ok(apply_u_eval(inst, f, x, &inst.quad_options())?.value)
}

pub fn apply_u_eval(inst: &ProblemInstance, f: &TestFunction, x: f64, opts: &QuadOptions) -> Result<Evaluation> {
    check_x(x)?;
    let psi = &inst.psi;
    let Some(terms) = f.terms() else {
        let mut breaks = psi.breakpoints();
        breaks.extend(f.breakpoints().iter().map(|b| b / x));
        let r = integrate_unit_with(|t| f.eval(t * x) * psi.value(t), &breaks, opts)?;
        return Ok(Evaluation::from_plain(r));
    };
    let mut acc = Evaluation::ZERO;
    for term in terms {
        // f(t x) psi(t) dt = f(x e^-u) psi(e^-u) e^-u du
        let h = |u: f64| {
            let t = (-u).exp();
            log_mul(psi.ln_value(t), term.ln_abs(x * t)) - u
        };
        let mut breaks = unit_breaks(psi, 1.0, &[]);
        if let Some(b) = term.b {
            breaks.push((x / b).ln());
        }
        acc = acc.add_log(term.sign(), &integrate_unit_log(h, &breaks, opts)?);
    }
    Ok(acc)
}

/// Which representation of the adjoint to integrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointForm {
    /// `int_0^1 h(x/t) psi(t)/t dt`
    Unit,
    /// `int_x^inf h(s) psi(x/s)/s ds`
    Tail,
}

/// `(U* h)(x) = int_0^1 h(x/t) psi(t)/t dt`.
pub fn apply_adjoint(inst: &ProblemInstance, h: &TestFunction, x: f64) -> Result<f64> {
    Ok(apply_adjoint_eval(inst, h, x, AdjointForm::Unit, &inst.quad_options())?.value)
}

pub fn apply_adjoint_eval(
    inst: &ProblemInstance,
    h: &TestFunction,
    x: f64,
    form: AdjointForm,
    opts: &QuadOptions,
) -> Result<Evaluation> {
    check_x(x)?;
    if h.support_bound().is_some_and(|b| x >= b) {
        return Ok(Evaluation::ZERO);
    }
    let psi = &inst.psi;
    let Some(terms) = h.terms() else {
        let nodes = h.breakpoints();
        let r = match form {
            AdjointForm::Unit => {
                let mut breaks = psi.breakpoints();
                breaks.extend(nodes.iter().map(|b| x / b));
                integrate_unit_with(|t| h.eval(x / t) * psi.value(t) / t, &breaks, opts)?
            }
            AdjointForm::Tail => {
                let breaks = tail_breaks(psi, x, &nodes);
                integrate_tail_with(|s| h.eval(s) * psi.value(x / s) / s, x, &breaks, opts)?
            }
        };
        return Ok(Evaluation::from_plain(r));
    };
    let mut acc = Evaluation::ZERO;
    for term in terms {
        if term.b.is_some_and(|b| x >= b) {
            continue;
        }
        let r = adjoint_term(psi, term, x, form, opts)?;
        acc = acc.add_log(term.sign(), &r);
    }
    Ok(acc)
}

fn adjoint_term(psi: &PsiProfile, term: &Term, x: f64, form: AdjointForm, opts: &QuadOptions) -> Result<LogQuadResult> {
    let cut: Vec<f64> = term.b.into_iter().collect();
    match form {
        AdjointForm::Unit => {
            let lx = x.ln();
            // h(x/t) psi(t)/t dt = h(x e^u) psi(e^-u) du
            let g = |u: f64| log_mul(psi.ln_value((-u).exp()), term.ln_abs_log(lx + u));
            let breaks = unit_breaks(psi, x, &[]);
            match term.b {
                Some(b) => integrate_unit_log_until(g, &breaks, (b / x).ln(), opts),
                None => integrate_unit_log(g, &breaks, opts),
            }
        }
        AdjointForm::Tail => {
            let g = |s: f64| log_mul(psi.ln_value(x / s), term.ln_abs(s)) - s.ln();
            integrate_tail_log(g, x, &tail_breaks(psi, x, &cut), opts)
        }
    }
}

/// `int_0^inf |f| w`.
pub fn weighted_norm(f: &TestFunction, w: &Weight, tol: f64) -> Result<Evaluation> {
    if f.is_zero() {
        return Ok(Evaluation::ZERO);
    }
    let mut breaks = f.breakpoints();
    breaks.extend_from_slice(crate::condition_c::weight_nodes(w));
    let r = integrate_positive_axis(
        |x| f.eval_weighted(x, w.ln_eval(x)).abs(),
        &breaks,
        &QuadOptions::with_tol(tol),
    )?;
    Ok(Evaluation::from_plain(r))
}

/// Kinks of `U f` and `U* h` induced by the cutoffs of `f` and `h`.
fn image_breaks(psi: &PsiProfile, f: &TestFunction, h: &TestFunction) -> Vec<f64> {
    let mut out = f.breakpoints();
    out.extend(h.breakpoints());
    for a in psi.breakpoints() {
        out.extend(f.breakpoints().iter().map(|b| b / a));
        out.extend(h.breakpoints().iter().map(|b| b * a));
    }
    out
}

/// `int_0^inf p(x) q(x) dx` where `q` is an integral evaluated pointwise.
fn pairing(
    outer: impl Fn(f64) -> f64,
    inner: impl Fn(f64) -> Result<Evaluation>,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Result<Evaluation> {
    let failure = RefCell::new(None);
    let r = integrate_positive_axis(
        |x| {
            let p = outer(x);
            if p == 0.0 {
                return 0.0;
            }
            match inner(x) {
                Ok(e) if !e.diverged => p * e.value,
                Ok(_) => {
                    failure.borrow_mut().get_or_insert(Error::Divergent(format!("inner integral at x = {x:e}")));
                    f64::NAN
                }
                Err(err) => {
                    failure.borrow_mut().get_or_insert(err);
                    f64::NAN
                }
            }
        },
        breaks,
        opts,
    );
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    Ok(Evaluation::from_plain(r?))
}

/// Both sides of the duality identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `<U f, h>`
    pub image_pairing: f64,
    /// `<f, U* h>`
    pub adjoint_pairing: f64,
    /// `|image - adjoint| / (1 + |image|)`
    pub gap: f64,
}

pub fn duality(inst: &ProblemInstance, f: &TestFunction, h: &TestFunction, tol: f64) -> Result<DualityReport> {
    if f.is_zero() || h.is_zero() {
        return Ok(DualityReport {
            image_pairing: 0.0,
            adjoint_pairing: 0.0,
            gap: 0.0,
        });
    }
    let outer = QuadOptions::with_tol(tol);
    let inner = QuadOptions::with_tol(tol / 100.0);
    let breaks = image_breaks(&inst.psi, f, h);
    let a = pairing(|x| h.eval(x), |x| apply_u_eval(inst, f, x, &inner), &breaks, &outer)?;
    let b = pairing(
        |x| f.eval(x),
        |x| apply_adjoint_eval(inst, h, x, AdjointForm::Unit, &inner),
        &breaks,
        &outer,
    )?;
    if a.diverged || b.diverged {
        return Err(Error::Divergent("duality pairing".into()));
    }
    Ok(DualityReport {
        image_pairing: a.value,
        adjoint_pairing: b.value,
        gap: (a.value - b.value).abs() / (1.0 + a.value.abs()),
    })
}

/// `|<U f, h> - <f, U* h>| / (1 + |<U f, h>|)`.
pub fn duality_gap(inst: &ProblemInstance, f: &TestFunction, h: &TestFunction, tol: f64) -> Result<f64> {
    Ok(duality(inst, f, h, tol)?.gap)
}

/// `U f` tabulated on `n` log-spaced points of `[lo, hi]`.
pub fn sample_apply_u(inst: &ProblemInstance, f: &TestFunction, lo: f64, hi: f64, n: usize) -> Result<TestFunction> {
    let xs = log_grid(lo, hi, n);
    let values = xs.par_iter().map(|&x| apply_u(inst, f, x)).collect::<Result<Vec<_>>>()?;
    TestFunction::sampled(xs, values)
}

/// `U* h` tabulated on `n` log-spaced points of `[lo, hi]`.
pub fn sample_adjoint(inst: &ProblemInstance, h: &TestFunction, lo: f64, hi: f64, n: usize) -> Result<TestFunction> {
    let xs = log_grid(lo, hi, n);
    let values = xs.par_iter().map(|&x| apply_adjoint(inst, h, x)).collect::<Result<Vec<_>>>()?;
    TestFunction::sampled(xs, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `||U f||` in `L1(omega2)`, from the tabulated image.
    pub lhs: f64,
    /// `C ||f||` in `L1(omega1)`.
    pub rhs: f64,
    pub norm_estimate: f64,
    pub ok: bool,
}

/// Checks `||U f|| <= C ||f||` with `C` from [`certify`].
pub fn bound_check(inst: &ProblemInstance, f: &TestFunction) -> Result<BoundCheck> {
    let verdict = certify(inst)?;
    let Some(c) = verdict.norm_estimate else {
        return Err(Error::Precondition(format!(
            "norm bound needs a bounded instance, got {:?}",
            verdict.status
        )));
    };
    bound_check_with(inst, f, c)
}

/// As [`bound_check`] with a given norm estimate.
pub fn bound_check_with(inst: &ProblemInstance, f: &TestFunction, norm_estimate: f64) -> Result<BoundCheck> {
    let (lo, hi, n) = SAMPLE_GRID;
    let (lhs, rhs) = if f.is_zero() {
        (0.0, 0.0)
    } else {
        let image = sample_apply_u(inst, f, lo, hi, n)?;
        let lhs = weighted_norm(&image, &inst.omega2, inst.quad_tol)?.value;
        let rhs = norm_estimate * weighted_norm(f, &inst.omega1, inst.quad_tol)?.value;
        (lhs, rhs)
    };
    Ok(BoundCheck {
        lhs,
        rhs,
        norm_estimate,
        ok: lhs <= rhs * (1.0 + 1e-3),
    })
}
