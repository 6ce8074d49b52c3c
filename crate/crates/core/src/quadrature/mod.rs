//! Adaptive integration for the two integral shapes that drive the whole
//! crate: `int_0^1 f(t) dt` with a possibly singular or essentially
//! vanishing integrand at `t = 0`, and semi-infinite tails `int_s^inf`.
//!
//! Both are run through the same block engine. Blocks are dyadic: for the
//! unit interval they are `[2^-(k+1), 2^-k]` in `t` (unit-width `ln 2` panels
//! in `u = -ln t`, integrated in `u`), for tails they are `[s 2^k, s 2^(k+1)]`
//! (integrated directly in `x`). Every block is integrated by globally
//! adaptive 7/15-point Gauss-Kronrod bisection. The block sequence stops when
//! the geometric extrapolation of the last two block magnitudes bounds the
//! remaining tail below a tenth of the tolerance, or flags divergence when
//! the blocks stop contracting.
//!
//! The `*_log` variants take the logarithm of the integrand. They normalize
//! by its maximum, so integrals whose value overflows `f64` are still
//! computed (the result carries a log scale), and they cluster extra panel
//! boundaries around narrow peaks that a fixed block layout would miss.

mod gk;
mod search;

pub use search::golden_section_max;

use crate::error::{Error, Result};
use gk::{adaptive, Segment};
use search::scan_peak;
use std::f64::consts::LN_2;

/// Largest `u = -ln t` visited on the unit interval (`t` stays a normal float).
pub const UNIT_U_MAX: f64 = 700.0;
/// Largest `x` visited by the tail integrator.
pub const TAIL_X_MAX: f64 = 1e300;
/// Divergence cap on partial sums.
pub const DIVERGENCE_CAP: f64 = 1e12;
/// Number of consecutive non-contracting blocks that signals divergence.
pub const NON_CONTRACTING_RUN: usize = 60;
/// Block ratio at or above which a block counts as non-contracting.
pub const NON_CONTRACTING_RATIO: f64 = 0.99;
/// Block ratio at or above which an over-cap sum counts as still growing.
const CAP_GROWTH_RATIO: f64 = 0.9;
/// Blocks required past the last breakpoint before truncation is allowed.
const MIN_TAIL_BLOCKS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub divergence_cap: f64,
    /// Bisection budget per block.
    pub max_pieces: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-15,
            divergence_cap: DIVERGENCE_CAP,
            max_pieces: 2000,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(tol: f64) -> Self {
        QuadOptions {
            rel_tol: tol,
            ..Default::default()
        }
    }

    pub fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    /// Gauss-Kronrod panels (blocks split at breakpoints) integrated.
    pub panels_used: usize,
    pub diverged: bool,
    /// Whether the error estimate met the tolerance. Always false when
    /// `diverged` is set.
    pub converged: bool,
}

/// Result of a log-form integration: the integral equals
/// `result.value * exp(log_scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogQuadResult {
    pub result: QuadResult,
    pub log_scale: f64,
}

impl LogQuadResult {
    fn zero() -> Self {
        LogQuadResult {
            result: QuadResult {
                value: 0.0,
                abs_error_estimate: 0.0,
                panels_used: 0,
                diverged: false,
                converged: true,
            },
            log_scale: 0.0,
        }
    }

    /// The integral, `+inf` on divergence; may overflow to `inf` for
    /// convergent integrals too.
    pub fn value(&self) -> f64 {
        if self.result.diverged {
            f64::INFINITY
        } else {
            self.result.value * self.log_scale.exp()
        }
    }

    /// `ln |integral|`.
    pub fn ln_value(&self) -> f64 {
        if self.result.diverged {
            f64::INFINITY
        } else {
            self.result.value.abs().ln() + self.log_scale
        }
    }

    pub fn sign(&self) -> f64 {
        if self.result.value < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Estimated relative error of the integral.
    pub fn rel_error(&self) -> f64 {
        if self.result.value == 0.0 {
            if self.result.abs_error_estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.result.abs_error_estimate / self.result.value.abs()
        }
    }

    /// Absolute error estimate in the unscaled units.
    pub fn abs_error(&self) -> f64 {
        self.result.abs_error_estimate * self.log_scale.exp()
    }
}

/// Integrates a block sequence over `[0, limit]` in the engine coordinate.
/// `panel(a, b, running)` integrates one panel given the running sum.
struct Engine<'a> {
    opts: &'a QuadOptions,
    breakpoints: &'a [f64],
    limit: f64,
    /// `true` when `limit` is a genuine upper integration limit rather than
    /// the representable end of an infinite range.
    finite_end: bool,
    /// Truncation is not attempted before this point.
    settled_from: f64,
}

impl Engine<'_> {
    fn run(&self, panel: &dyn Fn(f64, f64, f64) -> Result<Segment>) -> Result<QuadResult> {
        let opts = self.opts;
        let last_break = self.breakpoints.last().copied().unwrap_or(0.0).max(self.settled_from);
        let mut sum = 0.0;
        let mut err = 0.0;
        let mut panels = 0usize;
        let mut all_converged = true;
        let mut prev: Option<f64> = None;
        let mut last_ratio = f64::NAN;
        let mut run = 0usize;
        let mut tail_blocks = 0usize;
        let mut next_break = 0usize;

        let mut k = 0usize;
        loop {
            let a = k as f64 * LN_2;
            if a >= self.limit {
                if self.finite_end {
                    break;
                }
                // representable range exhausted: extrapolate or give up
                let r = last_ratio;
                if r.is_finite() && r < NON_CONTRACTING_RATIO {
                    let c = prev.unwrap_or(0.0).abs();
                    err += c * r / (1.0 - r);
                    break;
                }
                return Ok(diverged(sum, err, panels));
            }
            let b = ((k + 1) as f64 * LN_2).min(self.limit);

            // split the block at any breakpoints inside it
            let mut block = 0.0;
            let mut lo = a;
            while next_break < self.breakpoints.len() && self.breakpoints[next_break] <= lo {
                next_break += 1;
            }
            let mut cuts = Vec::new();
            let mut j = next_break;
            while j < self.breakpoints.len() && self.breakpoints[j] < b {
                cuts.push(self.breakpoints[j]);
                j += 1;
            }
            cuts.push(b);
            for hi in cuts {
                if hi <= lo {
                    continue;
                }
                let seg = panel(lo, hi, sum + block)?;
                panels += 1;
                block += seg.value;
                err += seg.error;
                all_converged &= seg.converged;
                lo = hi;
            }
            if !block.is_finite() {
                return Ok(diverged(sum, err, panels));
            }
            sum += block;

            if !self.finite_end {
                let ratio = match prev {
                    Some(p) if p != 0.0 => block.abs() / p.abs(),
                    Some(_) if block == 0.0 => 0.0,
                    Some(_) => f64::INFINITY,
                    None => f64::NAN,
                };
                last_ratio = ratio;
                if ratio >= NON_CONTRACTING_RATIO {
                    run += 1;
                } else {
                    run = 0;
                }
                if run >= NON_CONTRACTING_RUN
                    || (sum.abs() > opts.divergence_cap && ratio >= CAP_GROWTH_RATIO)
                {
                    return Ok(diverged(sum, err, panels));
                }
                if b >= last_break {
                    tail_blocks += 1;
                }
                if tail_blocks >= MIN_TAIL_BLOCKS && ratio < 1.0 {
                    let tol = opts.tolerance(sum);
                    let tail = block.abs() * ratio / (1.0 - ratio);
                    if block.abs() <= 0.1 * tol && tail <= 0.1 * tol {
                        err += tail;
                        break;
                    }
                }
            }
            prev = Some(block);
            k += 1;
        }

        Ok(QuadResult {
            value: sum,
            abs_error_estimate: err,
            panels_used: panels,
            diverged: false,
            converged: all_converged && err <= opts.tolerance(sum),
        })
    }
}

fn diverged(sum: f64, err: f64, panels: usize) -> QuadResult {
    QuadResult {
        value: sum,
        abs_error_estimate: err.max(f64::INFINITY),
        panels_used: panels,
        diverged: true,
        converged: false,
    }
}

fn panel_target(opts: &QuadOptions, running: f64) -> impl Fn(f64) -> f64 + '_ {
    move |v: f64| 0.1 * opts.abs_tol.max(opts.rel_tol * v.abs().max(running.abs()))
}

fn sorted_in_range(points: impl IntoIterator<Item = f64>, lo: f64, hi: f64) -> Vec<f64> {
    let mut out: Vec<f64> = points
        .into_iter()
        .filter(|v| v.is_finite() && *v > lo && *v < hi)
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "tolerance",
            requirement: "tol > 0",
            value: tol,
        })
    }
}

/// `int_0^1 f(t) dt` at relative tolerance `tol`.
pub fn integrate_unit(f: impl Fn(f64) -> f64, tol: f64) -> Result<QuadResult> {
    check_tol(tol)?;
    integrate_unit_with(f, &[], &QuadOptions::with_tol(tol))
}

/// `int_0^1 f(t) dt` with known interior breakpoints (in `t`).
pub fn integrate_unit_with(f: impl Fn(f64) -> f64, breakpoints: &[f64], opts: &QuadOptions) -> Result<QuadResult> {
    let breaks = sorted_in_range(breakpoints.iter().map(|t| -t.ln()), 0.0, UNIT_U_MAX);
    let g = |u: f64| {
        let t = (-u).exp();
        f(t) * t
    };
    let engine = Engine {
        opts,
        breakpoints: &breaks,
        limit: UNIT_U_MAX,
        finite_end: false,
        settled_from: 0.0,
    };
    engine.run(&|a, b, running| {
        adaptive(&g, a, b, &panel_target(opts, running), opts.max_pieces)
            .map_err(|u| Error::Evaluation { abscissa: (-u).exp() })
    })
}

/// `int_0^1 f(t) dt` given `h(u) = ln(f(e^-u) e^-u)`, i.e. the logarithm of
/// the integrand after the substitution `t = e^-u`. Breakpoints are in `u`.
pub fn integrate_unit_log(h: impl Fn(f64) -> f64, breakpoints: &[f64], opts: &QuadOptions) -> Result<LogQuadResult> {
    log_engine(&h, breakpoints, UNIT_U_MAX, false, opts)
}

/// As [`integrate_unit_log`] but over `t` in `[e^-u_end, 1]` only.
pub fn integrate_unit_log_until(
    h: impl Fn(f64) -> f64,
    breakpoints: &[f64],
    u_end: f64,
    opts: &QuadOptions,
) -> Result<LogQuadResult> {
    if u_end.is_nan() || u_end <= 0.0 {
        return Ok(LogQuadResult::zero());
    }
    log_engine(&h, breakpoints, u_end.min(UNIT_U_MAX), true, opts)
}

fn log_engine(
    h: &dyn Fn(f64) -> f64,
    breakpoints: &[f64],
    limit: f64,
    finite_end: bool,
    opts: &QuadOptions,
) -> Result<LogQuadResult> {
    let given = sorted_in_range(breakpoints.iter().copied(), 0.0, limit);
    let scan = scan_peak(h, 0.0, limit, &given);
    if scan.h_max == f64::NEG_INFINITY {
        return Ok(LogQuadResult::zero());
    }
    let shift = if scan.h_max.is_finite() { scan.h_max } else { 0.0 };
    let scaled = QuadOptions {
        abs_tol: opts.abs_tol * (-shift).exp(),
        ..*opts
    };
    let opts = &scaled;
    let breaks = sorted_in_range(given.into_iter().chain(scan.breakpoints), 0.0, limit);
    let g = |u: f64| {
        let l = h(u);
        if l.is_nan() {
            f64::NAN
        } else {
            (l - shift).exp()
        }
    };
    let engine = Engine {
        opts,
        breakpoints: &breaks,
        limit,
        finite_end,
        settled_from: scan.peak,
    };
    let result = engine.run(&|a, b, running| {
        adaptive(&g, a, b, &panel_target(opts, running), opts.max_pieces)
            .map_err(|u| Error::Evaluation { abscissa: (-u).exp() })
    })?;
    Ok(LogQuadResult {
        result,
        log_scale: shift,
    })
}

fn check_start(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "tail start s",
            requirement: "s > 0",
            value: s,
        })
    }
}

/// `int_s^inf f(x) dx` at relative tolerance `tol`.
pub fn integrate_tail(f: impl Fn(f64) -> f64, s: f64, tol: f64) -> Result<QuadResult> {
    check_tol(tol)?;
    integrate_tail_with(f, s, &[], &QuadOptions::with_tol(tol))
}

/// `int_s^inf f(x) dx` with known breakpoints (in `x`).
pub fn integrate_tail_with(
    f: impl Fn(f64) -> f64,
    s: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<QuadResult> {
    check_start(s)?;
    let limit = (TAIL_X_MAX / s).ln();
    let breaks = sorted_in_range(breakpoints.iter().map(|x| (x / s).ln()), 0.0, limit);
    let engine = Engine {
        opts,
        breakpoints: &breaks,
        limit,
        finite_end: false,
        settled_from: 0.0,
    };
    engine.run(&|a, b, running| {
        let (xa, xb) = (s * a.exp(), s * b.exp());
        adaptive(&f, xa, xb, &panel_target(opts, running), opts.max_pieces)
            .map_err(|x| Error::Evaluation { abscissa: x })
    })
}

/// `int_s^inf f(x) dx` given `h(x) = ln f(x)`.
pub fn integrate_tail_log(
    h: impl Fn(f64) -> f64,
    s: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<LogQuadResult> {
    check_start(s)?;
    let limit = (TAIL_X_MAX / s).ln();
    // mass per unit of v = ln(x/s)
    let mass = |v: f64| h(s * v.exp()) + v + s.ln();
    let given = sorted_in_range(breakpoints.iter().map(|x| (x / s).ln()), 0.0, limit);
    let scan = scan_peak(&mass, 0.0, limit, &given);
    if scan.h_max == f64::NEG_INFINITY {
        return Ok(LogQuadResult::zero());
    }
    let shift = if scan.h_max.is_finite() { scan.h_max } else { 0.0 };
    let scaled = QuadOptions {
        abs_tol: opts.abs_tol * (-shift).exp(),
        ..*opts
    };
    let opts = &scaled;
    let breaks = sorted_in_range(given.into_iter().chain(scan.breakpoints), 0.0, limit);
    let g = |x: f64| {
        let l = h(x);
        if l.is_nan() {
            f64::NAN
        } else {
            (l - shift).exp()
        }
    };
    let engine = Engine {
        opts,
        breakpoints: &breaks,
        limit,
        finite_end: false,
        settled_from: scan.peak,
    };
    let result = engine.run(&|a, b, running| {
        let (xa, xb) = (s * a.exp(), s * b.exp());
        adaptive(&g, xa, xb, &panel_target(opts, running), opts.max_pieces)
            .map_err(|x| Error::Evaluation { abscissa: x })
    })?;
    Ok(LogQuadResult {
        result,
        log_scale: shift,
    })
}

/// Split point between the unit-interval and tail parts of a half-line
/// integral.
pub const AXIS_SPLIT: f64 = 1e-8;

/// `int_0^inf f(x) dx` as `s0 int_0^1 f(s0 t) dt + int_s0^inf f(x) dx` with
/// `s0 =` [`AXIS_SPLIT`]. Breakpoints are in `x`.
pub fn integrate_positive_axis(f: impl Fn(f64) -> f64, breakpoints: &[f64], opts: &QuadOptions) -> Result<QuadResult> {
    let s0 = AXIS_SPLIT;
    let head_breaks: Vec<f64> = breakpoints.iter().filter(|x| **x < s0).map(|x| x / s0).collect();
    let head = integrate_unit_with(|t| s0 * f(s0 * t), &head_breaks, opts)?;
    let tail = integrate_tail_with(&f, s0, breakpoints, opts)?;
    let value = head.value + tail.value;
    let diverged = head.diverged || tail.diverged;
    let err = head.abs_error_estimate + tail.abs_error_estimate;
    Ok(QuadResult {
        value,
        abs_error_estimate: err,
        panels_used: head.panels_used + tail.panels_used,
        diverged,
        converged: !diverged && head.converged && tail.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    #[test]
    fn unit_examples() {
        let r = integrate_unit(|t| t / t, 1e-10).unwrap();
        assert!(!r.diverged && r.converged);
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-10);

        let r = integrate_unit(|t| t.sqrt() / t, 1e-10).unwrap();
        assert!(!r.diverged);
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-9);

        let r = integrate_unit(|t| 1.0 / t, 1e-8).unwrap();
        assert!(r.diverged);
        assert!(!r.converged);
    }

    #[test]
    fn tail_examples() {
        let r = integrate_tail(|x| (-x).exp(), 1.0, 1e-10).unwrap();
        assert_relative_eq!(r.value, 1.0 / E, max_relative = 1e-10);

        let r = integrate_tail(|x| (-x).exp() / (x * x), 1.0, 1e-10).unwrap();
        assert!(r.value <= 1.0 / E);
        // E_2(1) = e^-1 - E_1(1)
        assert_relative_eq!(r.value, 1.0 / E - 0.219_383_934_395_520_27, max_relative = 1e-9);

        let r = integrate_tail(|x| 1.0 / x, 1.0, 1e-8).unwrap();
        assert!(r.diverged);
    }

    #[test]
    fn slow_power_decay_converges() {
        // t^{-0.9}: blocks contract by 2^-0.1 each
        let r = integrate_unit(|t| t.powf(-0.9), 1e-9).unwrap();
        assert!(!r.diverged);
        assert_relative_eq!(r.value, 10.0, max_relative = 1e-7);
    }

    #[test]
    fn nan_is_an_evaluation_error() {
        let e = integrate_unit(|t| if t < 0.25 { f64::NAN } else { 1.0 }, 1e-8).unwrap_err();
        match e {
            Error::Evaluation { abscissa } => assert!(abscissa < 0.25),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_tolerance_is_rejected() {
        assert!(integrate_unit(|t| t, 0.0).is_err());
        assert!(integrate_tail(|x| x, -1.0, 1e-8).is_err());
    }

    #[test]
    fn log_form_survives_overflowing_values() {
        // int_0^1 e^{800} dt: value overflows, log does not
        let r = integrate_unit_log(|u| 800.0 - u, &[], &QuadOptions::default()).unwrap();
        assert!(!r.result.diverged);
        assert_relative_eq!(r.ln_value(), 800.0, max_relative = 1e-12);
    }

    #[test]
    fn positive_axis() {
        let r = integrate_positive_axis(|x| (-x).exp(), &[], &QuadOptions::with_tol(1e-10)).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-10);
        let r = integrate_positive_axis(|x| if x <= 1.0 { 1.0 + x } else { 0.0 }, &[1.0], &QuadOptions::default())
            .unwrap();
        assert_relative_eq!(r.value, 1.5, max_relative = 1e-9);
    }

    #[test]
    fn finite_range_log_form() {
        // int_{e^-2}^1 dt
        let r = integrate_unit_log_until(|u| -u, &[], 2.0, &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value(), 1.0 - (-2f64).exp(), max_relative = 1e-10);
    }
}
