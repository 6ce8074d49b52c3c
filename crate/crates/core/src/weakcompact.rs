//! The kernels `rho(s)(x) = psi(s/x) / (x omega1(s))` on `[s, inf)` have
//! bounded `L1(omega2)` norms, yet as `s -> 0+` they converge weak-star to
//! `m / omega1(0)` times `delta_0` and concentrate all their mass near zero.
//! This module measures both halves of that behaviour.

use crate::condition_c::{phi_unit_form, unit_breaks, weight_nodes};
use crate::error::{Error, Result};
use crate::float_serde::{csv_float, ext, ext_vec};
use crate::function::{Term, TestFunction};
use crate::grid::log_grid;
use crate::operator::{apply_adjoint_eval, AdjointForm};
use crate::quadrature::integrate_unit_log_until;
use crate::weights::{log_mul, ProblemInstance, Weight, WeightKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

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

/// `x -> psi(s/x) / (x omega1(s))` for `x >= s`, zero below.
#[derive(Clone, Debug)]
pub struct RhoKernel<'a> {
    inst: &'a ProblemInstance,
    s: f64,
    ln_w1: f64,
}

impl<'a> RhoKernel<'a> {
    pub fn new(inst: &'a ProblemInstance, s: f64) -> Result<Self> {
        check_s(s)?;
        Ok(RhoKernel {
            inst,
            s,
            ln_w1: inst.omega1.ln_eval(s),
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x.is_nan() || x < self.s {
            return 0.0;
        }
        let l = log_mul(self.inst.psi.ln_value(self.s / x), -self.ln_w1) - x.ln();
        l.exp()
    }
}

/// `||rho(s)||` in `L1(omega2)`, i.e. `Phi(s)/omega1(s)`.
pub fn rho_norm(inst: &ProblemInstance, s: f64) -> Result<f64> {
    check_s(s)?;
    let r = phi_unit_form(inst, s)?;
    if r.result.diverged {
        return Ok(f64::INFINITY);
    }
    Ok(log_mul(r.ln_value(), -inst.omega1.ln_eval(s)).exp())
}

/// `<g, rho(s)> = int_0^1 g(s/t) psi(t)/t dt / omega1(s)`.
pub fn pairing(inst: &ProblemInstance, g: &TestFunction, s: f64) -> Result<f64> {
    check_s(s)?;
    let e = apply_adjoint_eval(inst, g, s, AdjointForm::Unit, &inst.quad_options())?;
    if e.diverged {
        return Err(Error::Divergent(format!("pairing at s = {s:e}")));
    }
    Ok(e.value / inst.omega1.ln_eval(s).exp())
}

/// Fraction of the `omega2`-weighted mass of `rho(s)` inside `(0, eps]`.
pub fn concentration(inst: &ProblemInstance, s: f64, eps: f64) -> Result<f64> {
    check_s(s)?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Domain {
            what: "eps",
            requirement: "eps > 0",
            value: eps,
        });
    }
    if eps <= s {
        return Ok(0.0);
    }
    let total = phi_unit_form(inst, s)?;
    if total.result.diverged {
        return Err(Error::Divergent(format!("Phi at s = {s:e}")));
    }
    if total.result.value == 0.0 {
        return Ok(0.0);
    }
    let (psi, w2) = (&inst.psi, &inst.omega2);
    let ls = s.ln();
    // x = s/t <= eps  <=>  u = -ln t <= ln(eps/s)
    let h = |u: f64| log_mul(psi.ln_value((-u).exp()), w2.ln_eval_log(ls + u));
    let breaks = unit_breaks(psi, s, weight_nodes(w2));
    let inner = integrate_unit_log_until(h, &breaks, (eps / s).ln(), &inst.quad_options())?;
    if inner.result.value == 0.0 {
        return Ok(0.0);
    }
    Ok((inner.ln_value() - total.ln_value()).exp().clamp(0.0, 1.0))
}

/// A test function with a display name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedFunction {
    pub name: String,
    pub function: TestFunction,
}

impl NamedFunction {
    pub fn new(name: impl Into<String>, function: TestFunction) -> Self {
        NamedFunction {
            name: name.into(),
            function,
        }
    }
}

/// `e^-x`, `(1+x)^-2`, `x e^-x`, and `omega2(x) (1-x)_+` when `omega2` is
/// parametric.
pub fn default_g_suite(omega2: &Weight) -> Result<Vec<NamedFunction>> {
    let mut suite = vec![
        NamedFunction::new("exp(-x)", TestFunction::exponential(-1.0)?),
        NamedFunction::new(
            "(1+x)^-2",
            TestFunction::closed_form(vec![Term::new(1.0).shifted_power(-2.0)])?,
        ),
        NamedFunction::new(
            "x*exp(-x)",
            TestFunction::closed_form(vec![Term::new(1.0).power(1.0).exp_linear(-1.0)])?,
        ),
    ];
    if let WeightKind::Parametric { a, b, c, d } = omega2.kind() {
        let w = Term {
            c: 1.0,
            p: *a,
            r: *b,
            q: *c,
            d: *d,
            b: None,
        };
        let bump = TestFunction::closed_form(vec![
            w.times(&Term::new(1.0).cutoff(1.0)),
            w.times(&Term::new(-1.0).power(1.0).cutoff(1.0)),
        ])?;
        suite.push(NamedFunction::new("omega2*(1-x)+", bump));
    }
    Ok(suite)
}

/// `10^-1` down to `10^-6`, five points per decade.
pub fn default_s_sequence() -> Vec<f64> {
    let mut s = log_grid(1e-6, 1e-1, 26);
    s.reverse();
    s
}

pub const CONCENTRATION_EPSILONS: [f64; 3] = [1e-1, 1e-2, 1e-3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GSeries {
    pub name: String,
    /// `g(0) m / omega1(0)`.
    #[serde(with = "ext")]
    pub limit_target: f64,
    #[serde(with = "ext_vec")]
    pub pairings: Vec<f64>,
    #[serde(with = "ext_vec")]
    pub gaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    #[serde(with = "ext_vec")]
    pub s_values: Vec<f64>,
    #[serde(with = "ext")]
    pub moment: f64,
    #[serde(with = "ext")]
    pub omega1_at_zero: f64,
    /// Set when `psi = 0`; every pairing then vanishes.
    pub degenerate: bool,
    #[serde(with = "ext_vec")]
    pub rho_norms: Vec<f64>,
    pub series: Vec<GSeries>,
    #[serde(with = "ext_vec")]
    pub epsilons: Vec<f64>,
    /// `concentration[k][i]` is the fraction of mass in `(0, epsilons[k]]`
    /// at `s_values[i]`.
    pub concentration: Vec<Vec<f64>>,
}

impl ConcentrationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per `(s, g)` with the concentration at each epsilon.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["s".to_string(), "g".into(), "pairing".into(), "gap".into()];
        header.extend(self.epsilons.iter().map(|e| format!("concentration_{e:e}")));
        w.write_record(&header)?;
        for (i, s) in self.s_values.iter().enumerate() {
            for g in &self.series {
                let mut row = vec![csv_float(*s), g.name.clone(), csv_float(g.pairings[i]), csv_float(g.gaps[i])];
                row.extend(self.concentration.iter().map(|c| csv_float(c[i])));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Pairings of `rho(s)` with each `g` along a decreasing `s` sequence,
/// compared with the weak-star limit, plus the mass concentration near 0.
pub fn weak_star_limit_check(
    inst: &ProblemInstance,
    g_suite: &[NamedFunction],
    s_sequence: &[f64],
) -> Result<ConcentrationReport> {
    for &s in s_sequence {
        check_s(s)?;
    }
    let Some(w1_zero) = inst.omega1.limit_at_zero() else {
        return Err(Error::Precondition(
            "omega1 must extend continuously to x = 0 with a finite positive value omega1(0); \
             samples at 10^-4..10^-8 do not stabilize"
                .into(),
        ));
    };
    let m = inst.moment()?;
    if m == f64::INFINITY {
        return Err(Error::Precondition("the moment of psi must be finite".into()));
    }
    let degenerate = m == 0.0 || inst.psi.is_zero();

    let rho_norms = s_sequence
        .par_iter()
        .map(|&s| rho_norm(inst, s))
        .collect::<Result<Vec<_>>>()?;
    let series = g_suite
        .iter()
        .map(|g| {
            let target = g.function.eval(0.0) * m / w1_zero;
            let pairings = s_sequence
                .par_iter()
                .map(|&s| pairing(inst, &g.function, s))
                .collect::<Result<Vec<_>>>()?;
            let gaps = pairings.iter().map(|p| (p - target).abs()).collect();
            Ok(GSeries {
                name: g.name.clone(),
                limit_target: target,
                pairings,
                gaps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let concentration = CONCENTRATION_EPSILONS
        .iter()
        .map(|&eps| {
            s_sequence
                .par_iter()
                .map(|&s| if degenerate { Ok(0.0) } else { concentration(inst, s, eps) })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConcentrationReport {
        s_values: s_sequence.to_vec(),
        moment: m,
        omega1_at_zero: w1_zero,
        degenerate,
        rho_norms,
        series,
        epsilons: CONCENTRATION_EPSILONS.to_vec(),
        concentration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::PsiProfile;
    use approx::assert_relative_eq;

    fn unit_inst() -> ProblemInstance {
        ProblemInstance::new(PsiProfile::power(1.0).unwrap(), Weight::unit(), Weight::unit())
    }

    #[test]
    fn rho_norm_examples() {
        let i = unit_inst();
        for s in [1e-6, 0.3, 40.0] {
            assert_relative_eq!(rho_norm(&i, s).unwrap(), 1.0, max_relative = 1e-8);
        }
        let z = ProblemInstance::new(PsiProfile::zero(), Weight::unit(), Weight::unit());
        assert_eq!(rho_norm(&z, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn kernel_values() {
        let i = unit_inst();
        let k = RhoKernel::new(&i, 2.0).unwrap();
        assert_eq!(k.eval(1.0), 0.0);
        assert_relative_eq!(k.eval(4.0), 0.5 / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn pairing_examples() {
        let i = unit_inst();
        let g = TestFunction::exponential(-1.0).unwrap();
        assert!((pairing(&i, &g, 1e-4).unwrap() - 1.0).abs() <= 1e-2);
        let w2 = TestFunction::from_weight(&i.omega2).unwrap();
        assert_relative_eq!(pairing(&i, &w2, 0.3).unwrap(), rho_norm(&i, 0.3).unwrap(), max_relative = 1e-8);
        let xg = TestFunction::closed_form(vec![Term::new(1.0).power(1.0).exp_linear(-1.0)]).unwrap();
        assert!(pairing(&i, &xg, 1e-6).unwrap() < 1e-4);
    }

    #[test]
    fn default_report() {
        let i = unit_inst();
        let suite = default_g_suite(&i.omega2).unwrap();
        let r = weak_star_limit_check(&i, &suite, &default_s_sequence()).unwrap();
        assert!(!r.degenerate);
        assert_eq!(r.series.len(), 4);
        let last = r.s_values.len() - 1;
        assert!(r.series[0].gaps[last] <= 1e-3);
        let k = r.epsilons.iter().position(|e| *e == 1e-2).unwrap();
        assert!(r.concentration[k][last] >= 0.99);
        assert!(r.concentration.iter().flatten().all(|c| (0.0..=1.0).contains(c)));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 26 * 4);
        let back: ConcentrationReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn zero_profile_is_degenerate() {
        let z = ProblemInstance::new(PsiProfile::zero(), Weight::unit(), Weight::unit());
        let suite = default_g_suite(&z.omega2).unwrap();
        let r = weak_star_limit_check(&z, &suite, &default_s_sequence()).unwrap();
        assert!(r.degenerate);
        assert!(r.series.iter().all(|g| g.pairings.iter().all(|p| *p == 0.0)));
    }

    #[test]
    fn singular_omega1_is_rejected() {
        let i = ProblemInstance::new(
            PsiProfile::power(1.0).unwrap(),
            Weight::parametric(-1.0, 0.0, 0.0, 0.25).unwrap(),
            Weight::unit(),
        );
        let e = weak_star_limit_check(&i, &[], &[1e-2]).unwrap_err();
        assert!(matches!(e, Error::Precondition(m) if m.contains("omega1(0)")));
    }
}
