//! The boundedness test for `U_psi : L1(omega1) -> L1(omega2)`.
//!
//! The operator is bounded exactly when
//! `Phi(s) = int_0^1 omega2(s/t) psi(t)/t dt <= C omega1(s)` for all `s > 0`.
//! [`certify`] decides this by evaluating the ratio `Phi(s)/omega1(s)` on a
//! log grid and extrapolating the end slopes; the verdict records the grid
//! so the decision can be audited.

use crate::error::{Error, Result};
use crate::float_serde::{csv_float, ext, ext_opt, ext_vec};
use crate::grid::decade_grid;
use crate::quadrature::{golden_section_max, integrate_tail_log, integrate_unit_log, LogQuadResult};
use crate::weights::{log_mul, ProblemInstance, PsiProfile, Weight, WeightKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// `int_0^1 psi(t)/t dt`, `+inf` on divergence.
pub fn moment(psi: &PsiProfile, tol: f64) -> Result<f64> {
    psi.moment(tol)
}

fn check_s(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "s",
            requirement: "s > 0",
            value: s,
        })
    }
}

/// Abscissae where a tabulated weight changes slope.
pub(crate) fn weight_nodes(w: &Weight) -> &[f64] {
    match w.kind() {
        WeightKind::Tabulated { x, .. } => x,
        WeightKind::Parametric { .. } => &[],
    }
}

/// Breakpoints in `u = -ln t` for `int_0^1 k(s/t) psi(t)/t dt` where `k` has
/// kinks at `nodes`.
pub(crate) fn unit_breaks(psi: &PsiProfile, s: f64, nodes: &[f64]) -> Vec<f64> {
    psi.breakpoints()
        .iter()
        .map(|t| -t.ln())
        .chain(nodes.iter().map(|x| (x / s).ln()))
        .filter(|u| *u > 0.0)
        .collect()
}

/// Breakpoints in `x` for `int_s^inf k(x) psi(s/x)/x dx`.
pub(crate) fn tail_breaks(psi: &PsiProfile, s: f64, nodes: &[f64]) -> Vec<f64> {
    psi.breakpoints()
        .iter()
        .map(|t| s / t)
        .chain(nodes.iter().copied())
        .filter(|x| *x > s)
        .collect()
}

/// `Phi(s)` in the unit-interval form, integrated in `u = -ln t`.
pub fn phi_unit_form(inst: &ProblemInstance, s: f64) -> Result<LogQuadResult> {
    check_s(s)?;
    let (psi, w2) = (&inst.psi, &inst.omega2);
    let ls = s.ln();
    // psi(t)/t dt = psi(e^-u) du
    let h = |u: f64| log_mul(psi.ln_value((-u).exp()), w2.ln_eval_log(ls + u));
    let breaks = unit_breaks(psi, s, weight_nodes(w2));
    integrate_unit_log(h, &breaks, &inst.quad_options())
}

/// `Phi(s)` in the tail form `int_s^inf omega2(x) psi(s/x)/x dx`.
pub fn phi_tail_form(inst: &ProblemInstance, s: f64) -> Result<LogQuadResult> {
    check_s(s)?;
    let (psi, w2) = (&inst.psi, &inst.omega2);
    let h = |x: f64| log_mul(psi.ln_value(s / x), w2.ln_eval(x)) - x.ln();
    let breaks = tail_breaks(psi, s, weight_nodes(w2));
    integrate_tail_log(h, s, &breaks, &inst.quad_options())
}

/// Relative disagreement of two log-form evaluations of the same integral.
pub(crate) fn log_gap(a: &LogQuadResult, b: &LogQuadResult) -> f64 {
    match (a.result.diverged, b.result.diverged) {
        (true, true) => 0.0,
        (false, false) => {
            let (la, lb) = (a.ln_value(), b.ln_value());
            if la == f64::NEG_INFINITY && lb == f64::NEG_INFINITY {
                0.0
            } else if a.sign() != b.sign() {
                2.0
            } else {
                ((la - lb).exp() - 1.0).abs()
            }
        }
        _ => f64::INFINITY,
    }
}

/// One evaluation of `Phi(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiEval {
    #[serde(with = "ext")]
    pub s: f64,
    /// `Phi(s)`; `+inf` on divergence (and when a finite value overflows).
    #[serde(with = "ext")]
    pub value: f64,
    #[serde(with = "ext")]
    pub ln_value: f64,
    /// Estimated relative error.
    #[serde(with = "ext")]
    pub rel_error: f64,
    pub diverged: bool,
    /// Relative gap to the tail form, when the self-check ran.
    #[serde(with = "ext_opt", skip_serializing_if = "Option::is_none", default)]
    pub self_check_gap: Option<f64>,
}

/// `Phi(s)`, `+inf` on divergence.
pub fn phi(inst: &ProblemInstance, s: f64) -> Result<f64> {
    Ok(phi_eval(inst, s, false)?.value)
}

/// `Phi(s)` with error information; `self_check` also evaluates the tail
/// form and records the relative gap.
pub fn phi_eval(inst: &ProblemInstance, s: f64, self_check: bool) -> Result<PhiEval> {
    let unit = phi_unit_form(inst, s)?;
    let self_check_gap = if self_check {
        Some(log_gap(&unit, &phi_tail_form(inst, s)?))
    } else {
        None
    };
    Ok(PhiEval {
        s,
        value: unit.value(),
        ln_value: unit.ln_value(),
        rel_error: if unit.result.diverged { f64::INFINITY } else { unit.rel_error() },
        diverged: unit.result.diverged,
        self_check_gap,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Bounded,
    MomentInfinite,
    PhiInfinite,
    RatioUnbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "s->0+")]
    ToZero,
    #[serde(rename = "s->inf")]
    ToInfinity,
}

/// Evidence for a negative verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `int_0^1 psi(t)/t dt` diverges.
    MomentDivergent,
    /// `Phi` diverged at this `s`.
    PhiDivergent {
        #[serde(with = "ext")]
        s: f64,
    },
    /// The ratio grows like `s^exponent` (or `s^-exponent` toward zero).
    Growth {
        direction: Direction,
        #[serde(with = "ext")]
        exponent: f64,
    },
}

/// The grid examined by [`certify`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictGrid {
    #[serde(with = "ext_vec")]
    pub s_values: Vec<f64>,
    #[serde(with = "ext_vec")]
    pub ratio_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessVerdict {
    pub status: Status,
    /// Grid supremum of `Phi(s)/omega1(s)`; present iff bounded.
    #[serde(with = "ext_opt", default)]
    pub norm_estimate: Option<f64>,
    #[serde(default)]
    pub witness: Option<Witness>,
    pub grid: VerdictGrid,
    #[serde(with = "ext")]
    pub moment: f64,
    /// Largest relative gap between the two forms of `Phi`, when checked.
    #[serde(with = "ext_opt", skip_serializing_if = "Option::is_none", default)]
    pub max_self_check_gap: Option<f64>,
}

impl BoundednessVerdict {
    pub fn is_bounded(&self) -> bool {
        self.status == Status::Bounded
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Grid and decision parameters for [`certify_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyOptions {
    pub s_min: f64,
    pub s_max: f64,
    pub per_decade: usize,
    /// Minimum fitted end exponent for an unbounded verdict.
    pub slope_threshold: f64,
    /// Minimum ratio between the end value and the grid minimum for an
    /// unbounded verdict.
    pub growth_factor: f64,
    pub self_check: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            s_min: 1e-6,
            s_max: 1e6,
            per_decade: 25,
            slope_threshold: 0.05,
            growth_factor: 10.0,
            self_check: false,
        }
    }
}

fn check_grid(s_min: f64, s_max: f64, per_decade: usize) -> Result<()> {
    if !(s_min > 0.0 && s_max > s_min && s_max.is_finite()) {
        return Err(Error::invalid("grid", format!("need 0 < s_min < s_max, got {s_min}..{s_max}")));
    }
    if per_decade == 0 {
        return Err(Error::invalid("grid", "points per decade must be positive"));
    }
    Ok(())
}

/// `ln(Phi(s)/omega1(s))` with the evaluation it came from.
fn ln_ratio(inst: &ProblemInstance, s: f64, self_check: bool) -> Result<(f64, PhiEval)> {
    let e = phi_eval(inst, s, self_check)?;
    Ok((log_mul(e.ln_value, -inst.omega1.ln_eval(s)), e))
}

/// Decides boundedness on the default grid.
pub fn certify(inst: &ProblemInstance) -> Result<BoundednessVerdict> {
    certify_with(inst, &CertifyOptions::default())
}

pub fn certify_with(inst: &ProblemInstance, opts: &CertifyOptions) -> Result<BoundednessVerdict> {
    check_grid(opts.s_min, opts.s_max, opts.per_decade)?;
    let m = inst.moment()?;
    if m == f64::INFINITY {
        return Ok(BoundednessVerdict {
            status: Status::MomentInfinite,
            norm_estimate: None,
            witness: Some(Witness::MomentDivergent),
            grid: VerdictGrid::default(),
            moment: m,
            max_self_check_gap: None,
        });
    }

    let mut s_values = decade_grid(opts.s_min, opts.s_max, opts.per_decade);
    let evals: Vec<(f64, PhiEval)> = s_values
        .par_iter()
        .map(|&s| ln_ratio(inst, s, opts.self_check))
        .collect::<Result<_>>()?;
    let mut ln_ratios: Vec<f64> = evals.iter().map(|(l, _)| *l).collect();
    let max_self_check_gap = opts
        .self_check
        .then(|| evals.iter().filter_map(|(_, e)| e.self_check_gap).fold(0.0, f64::max));
    let verdict = |status, norm_estimate, witness, s_values: Vec<f64>, ln_ratios: &[f64]| BoundednessVerdict {
        status,
        norm_estimate,
        witness,
        grid: VerdictGrid {
            s_values,
            ratio_values: ln_ratios.iter().map(|l| l.exp()).collect(),
        },
        moment: m,
        max_self_check_gap,
    };

    if let Some((_, e)) = evals.iter().find(|(_, e)| e.diverged) {
        let w = Witness::PhiDivergent { s: e.s };
        return Ok(verdict(Status::PhiInfinite, None, Some(w), s_values, &ln_ratios));
    }

    if let Some(w) = end_growth(&s_values, &ln_ratios, opts) {
        return Ok(verdict(Status::RatioUnbounded, None, Some(w), s_values, &ln_ratios));
    }

    // refine the maximizer between its grid neighbours
    let (imax, &lmax) = ln_ratios
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    if lmax > f64::NEG_INFINITY {
        let n = s_values.len();
        let lo = s_values[imax.saturating_sub(1)].ln();
        let hi = s_values[(imax + 1).min(n - 1)].ln();
        let probe = |ls: f64| ln_ratio(inst, ls.exp(), false).map(|(l, _)| l).unwrap_or(f64::NEG_INFINITY);
        let (ls, l) = golden_section_max(probe, lo, hi, 1e-6, 60);
        if l > lmax {
            let s = ls.exp();
            let at = s_values.partition_point(|v| *v < s);
            if s_values.get(at) != Some(&s) {
                s_values.insert(at, s);
                ln_ratios.insert(at, l);
            }
        }
    }
    let norm = ln_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(verdict(Status::Bounded, Some(norm), None, s_values, &ln_ratios))
}

/// Least-squares slope of `y` against `x`.
fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Checks the outermost decade at each end of the grid for sustained growth
/// of the ratio; returns the steeper qualifying end.
fn end_growth(s_values: &[f64], ln_ratios: &[f64], opts: &CertifyOptions) -> Option<Witness> {
    let n = s_values.len();
    let ln_min = ln_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let decade = opts.per_decade.min(n - 1);
    let ends = [
        (Direction::ToZero, 0..decade + 1, 0usize, -1.0),
        (Direction::ToInfinity, n - 1 - decade..n, n - 1, 1.0),
    ];
    let mut best: Option<(Direction, f64)> = None;
    for (direction, range, end, sign) in ends {
        let ys = &ln_ratios[range.clone()];
        let growth = if ln_ratios[end] == f64::INFINITY {
            f64::INFINITY
        } else if ys.iter().any(|l| !l.is_finite()) {
            // vanishing ratios: not growing
            continue;
        } else {
            let xs: Vec<f64> = s_values[range].iter().map(|s| s.ln()).collect();
            sign * fit_slope(&xs, ys)
        };
        let grew = ln_ratios[end] - ln_min >= opts.growth_factor.ln();
        if growth > opts.slope_threshold && grew && best.is_none_or(|(_, g)| growth > g) {
            best = Some((direction, growth));
        }
    }
    best.map(|(direction, exponent)| Witness::Growth { direction, exponent })
}

/// Tabulated `Phi` and ratio values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiProfile {
    #[serde(with = "ext_vec")]
    pub s_values: Vec<f64>,
    #[serde(with = "ext_vec")]
    pub phi_values: Vec<f64>,
    #[serde(with = "ext_vec")]
    pub ratio_values: Vec<f64>,
}

impl PhiProfile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes columns `s,phi,ratio`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "phi", "ratio"])?;
        for ((s, p), r) in self.s_values.iter().zip(&self.phi_values).zip(&self.ratio_values) {
            w.write_record([csv_float(*s), csv_float(*p), csv_float(*r)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn phi_profile(inst: &ProblemInstance, s_min: f64, s_max: f64, per_decade: usize) -> Result<PhiProfile> {
    check_grid(s_min, s_max, per_decade)?;
    let s_values = decade_grid(s_min, s_max, per_decade);
    let rows: Vec<(f64, f64)> = s_values
        .par_iter()
        .map(|&s| {
            let (lr, e) = ln_ratio(inst, s, false)?;
            Ok((e.value, if e.diverged { f64::INFINITY } else { lr.exp() }))
        })
        .collect::<Result<_>>()?;
    let (phi_values, ratio_values) = rows.into_iter().unzip();
    Ok(PhiProfile {
        s_values,
        phi_values,
        ratio_values,
    })
}
