//! Weight functions on the open half-line and kernel profiles on `[0, 1]`.
//!
//! Weights are evaluated primarily in log space: the weights that matter for
//! boundedness (`e^{x}`, `e^{x^2/4}/x`, ...) overflow `f64` long before the
//! certifier's grid ends, while their ratios stay moderate.

use crate::error::{Error, Result};
use crate::grid::log_grid;
use crate::quadrature::{self, QuadOptions};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Value returned when a weight overflows `f64`.
pub const SATURATION_SENTINEL: f64 = f64::MAX;

/// Sample grid used to verify positivity and monotonicity tags.
const CHECK_GRID: (f64, f64, usize) = (1e-8, 1e8, 1000);

/// `ln(x^a (1+x)^b e^{c x + d x^2})`, well defined for `x = +inf` and for
/// vanishing coefficients.
pub(crate) fn ln_power_exp(a: f64, b: f64, c: f64, d: f64, x: f64) -> f64 {
    if x.is_infinite() {
        return if d != 0.0 {
            d.signum() * f64::INFINITY
        } else if c != 0.0 {
            c.signum() * f64::INFINITY
        } else if a + b != 0.0 {
            (a + b).signum() * f64::INFINITY
        } else {
            0.0
        };
    }
    let mut acc = 0.0;
    if a != 0.0 {
        acc += a * x.ln();
    }
    if b != 0.0 {
        acc += b * x.ln_1p();
    }
    if c != 0.0 {
        acc += c * x;
    }
    if d != 0.0 {
        acc += d * x * x;
    }
    acc
}

/// [`ln_power_exp`] at `x = e^lx`, accurate when `e^lx` overflows.
pub(crate) fn ln_power_exp_log(a: f64, b: f64, c: f64, d: f64, lx: f64) -> f64 {
    if lx == f64::INFINITY {
        return ln_power_exp(a, b, c, d, f64::INFINITY);
    }
    let mut acc = 0.0;
    if a != 0.0 {
        acc += a * lx;
    }
    if b != 0.0 {
        let l1p = if lx > 35.0 { lx + (-lx).exp() } else { lx.exp().ln_1p() };
        acc += b * l1p;
    }
    if c != 0.0 {
        acc += c * lx.exp();
    }
    if d != 0.0 {
        acc += d * (2.0 * lx).exp();
    }
    if acc.is_nan() {
        // competing overflowing terms: the fastest-growing one wins
        ln_power_exp(a, b, c, d, f64::INFINITY)
    } else {
        acc
    }
}

/// Adds two log-magnitudes so that a vanishing factor wins over an
/// overflowing one.
pub(crate) fn log_mul(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        a + b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub enum WeightKind {
    /// `x^a (1+x)^b exp(c x + d x^2)`.
    Parametric { a: f64, b: f64, c: f64, d: f64 },
    /// Log-log interpolation between nodes, power-law extrapolation outside.
    Tabulated { x: Vec<f64>, w: Vec<f64> },
}

/// A positive continuous weight on `(0, inf)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightRepr", into = "WeightRepr")]
pub struct Weight {
    kind: WeightKind,
    monotonicity: Monotonicity,
    // cached (ln x, ln w) for the tabulated kind
    log_nodes: Vec<(f64, f64)>,
}

/// Result of a direct (non-log) weight evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightValue {
    pub value: f64,
    /// Set when the true value exceeds `f64::MAX` and `value` holds
    /// [`SATURATION_SENTINEL`].
    pub saturated: bool,
}

impl Weight {
    pub fn parametric(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::parametric_tagged(a, b, c, d, Monotonicity::None)
    }

    pub fn parametric_tagged(a: f64, b: f64, c: f64, d: f64, tag: Monotonicity) -> Result<Self> {
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("weight", "parametric exponents must be finite"));
        }
        Self::validated(WeightKind::Parametric { a, b, c, d }, tag)
    }

    pub fn tabulated(x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        Self::tabulated_tagged(x, w, Monotonicity::None)
    }

    pub fn tabulated_tagged(x: Vec<f64>, w: Vec<f64>, tag: Monotonicity) -> Result<Self> {
        if x.len() != w.len() {
            return Err(Error::invalid("weight", "tabulated x and w differ in length"));
        }
        if x.len() < 2 {
            return Err(Error::invalid("weight", "a tabulated weight needs at least two nodes"));
        }
        if x.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("weight", "tabulated abscissae must be positive and finite"));
        }
        if x.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("weight", "tabulated abscissae must be strictly increasing"));
        }
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("weight", "tabulated values must be positive and finite"));
        }
        Self::validated(WeightKind::Tabulated { x, w }, tag)
    }

    /// The constant weight 1.
    pub fn unit() -> Self {
        Self::parametric(0.0, 0.0, 0.0, 0.0).expect("constant weight is valid")
    }

    /// `(1+x)^beta`.
    pub fn polynomial(beta: f64) -> Result<Self> {
        let tag = match beta {
            b if b > 0.0 => Monotonicity::Increasing,
            b if b < 0.0 => Monotonicity::Decreasing,
            _ => Monotonicity::None,
        };
        Self::parametric_tagged(0.0, beta, 0.0, 0.0, tag)
    }

    fn validated(kind: WeightKind, monotonicity: Monotonicity) -> Result<Self> {
        let log_nodes = match &kind {
            WeightKind::Tabulated { x, w } => {
                x.iter().zip(w).map(|(x, w)| (x.ln(), w.ln())).collect()
            }
            WeightKind::Parametric { .. } => Vec::new(),
        };
        let weight = Weight {
            kind,
            monotonicity,
            log_nodes,
        };
        weight.check_sampled()?;
        Ok(weight)
    }

    fn check_sampled(&self) -> Result<()> {
        let (lo, hi, n) = CHECK_GRID;
        let grid = log_grid(lo, hi, n);
        let logs: Vec<f64> = grid.iter().map(|&x| self.ln_eval(x)).collect();
        if let Some((x, l)) = grid.iter().zip(&logs).find(|(_, l)| !l.is_finite()) {
            return Err(Error::invalid(
                "weight",
                format!("weight is not positive and finite at x = {x:e} (log value {l})"),
            ));
        }
        let slack = |a: f64, b: f64| 1e-12 * (1.0 + a.abs().max(b.abs()));
        let violated = match self.monotonicity {
            Monotonicity::None => None,
            Monotonicity::Increasing => logs.windows(2).position(|p| p[1] < p[0] - slack(p[0], p[1])),
            Monotonicity::Decreasing => logs.windows(2).position(|p| p[1] > p[0] + slack(p[0], p[1])),
        };
        if let Some(i) = violated {
            return Err(Error::invalid(
                "weight",
                format!(
                    "monotonicity tag {:?} violated between x = {:e} and x = {:e}",
                    self.monotonicity,
                    grid[i],
                    grid[i + 1]
                ),
            ));
        }
        Ok(())
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.monotonicity
    }

    /// Natural log of the weight. Accepts `x = +inf` (for asymptotic probes);
    /// callers are responsible for `x > 0`.
    pub fn ln_eval(&self, x: f64) -> f64 {
        match &self.kind {
            WeightKind::Parametric { a, b, c, d } => ln_power_exp(*a, *b, *c, *d, x),
            WeightKind::Tabulated { x: xs, w } => {
                if let Ok(i) = xs.binary_search_by(|p| p.total_cmp(&x)) {
                    return w[i].ln();
                }
                self.ln_tabulated(x.ln())
            }
        }
    }

    /// `ln w(e^lx)`, accurate when `e^lx` itself would overflow or underflow.
    pub fn ln_eval_log(&self, lx: f64) -> f64 {
        match &self.kind {
            WeightKind::Parametric { a, b, c, d } => ln_power_exp_log(*a, *b, *c, *d, lx),
            WeightKind::Tabulated { .. } => {
                let x = lx.exp();
                if x > 0.0 && x.is_finite() {
                    self.ln_eval(x)
                } else {
                    self.ln_tabulated(lx)
                }
            }
        }
    }

    fn ln_tabulated(&self, lx: f64) -> f64 {
        let nodes = &self.log_nodes;
        let n = nodes.len();
        // segment used for interpolation or extrapolation
        let i = match nodes.iter().position(|&(nx, _)| nx > lx) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => n - 2,
        };
        let (x0, y0) = nodes[i];
        let (x1, y1) = nodes[i + 1];
        let slope = (y1 - y0) / (x1 - x0);
        if lx.is_infinite() {
            return if slope == 0.0 { y1 } else { slope.signum() * lx };
        }
        y0 + slope * (lx - x0)
    }

    /// `w(x)` with overflow saturated to [`SATURATION_SENTINEL`].
    pub fn eval(&self, x: f64) -> Result<WeightValue> {
        if x.is_nan() || x <= 0.0 {
            return Err(Error::Domain {
                what: "weight argument x",
                requirement: "x > 0",
                value: x,
            });
        }
        if let WeightKind::Tabulated { x: xs, w } = &self.kind {
            if let Ok(i) = xs.binary_search_by(|p| p.total_cmp(&x)) {
                return Ok(WeightValue {
                    value: w[i],
                    saturated: false,
                });
            }
        }
        let l = self.ln_eval(x);
        let v = l.exp();
        Ok(if v.is_finite() {
            WeightValue {
                value: v,
                saturated: false,
            }
        } else {
            WeightValue {
                value: SATURATION_SENTINEL,
                saturated: true,
            }
        })
    }

    /// Estimates `lim_{x -> 0+} w(x)` from `w(10^-k)`, `k = 4..=8`.
    ///
    /// Returns `None` when the samples do not stabilize to a finite positive
    /// value.
    pub fn limit_at_zero(&self) -> Option<f64> {
        let vals: Vec<f64> = (4..=8).map(|k| self.ln_eval(10f64.powi(-k)).exp()).collect();
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return None;
        }
        let diffs: Vec<f64> = vals.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
        let last = vals[vals.len() - 1];
        let contracting = diffs.windows(2).all(|d| d[1] <= d[0] * 0.5 + 1e-15 * last);
        if !contracting || diffs[diffs.len() - 1] > 1e-6 * last {
            return None;
        }
        // Richardson step for a linear leading term in x
        let prev = vals[vals.len() - 2];
        let limit = last - (prev - last) / 9.0;
        (limit.is_finite() && limit > 0.0).then_some(limit)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum WeightRepr {
    Parametric {
        #[serde(default)]
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default)]
        c: f64,
        #[serde(default)]
        d: f64,
        #[serde(default, skip_serializing_if = "is_untagged")]
        monotonicity: Monotonicity,
    },
    Tabulated {
        x: Vec<f64>,
        w: Vec<f64>,
        #[serde(default, skip_serializing_if = "is_untagged")]
        monotonicity: Monotonicity,
    },
}

fn is_untagged(m: &Monotonicity) -> bool {
    *m == Monotonicity::None
}

impl TryFrom<WeightRepr> for Weight {
    type Error = Error;

    fn try_from(repr: WeightRepr) -> Result<Self> {
        match repr {
            WeightRepr::Parametric {
                a,
                b,
                c,
                d,
                monotonicity,
            } => Weight::parametric_tagged(a, b, c, d, monotonicity),
            WeightRepr::Tabulated { x, w, monotonicity } => {
                Weight::tabulated_tagged(x, w, monotonicity)
            }
        }
    }
}

impl From<Weight> for WeightRepr {
    fn from(w: Weight) -> Self {
        let monotonicity = w.monotonicity;
        match w.kind {
            WeightKind::Parametric { a, b, c, d } => WeightRepr::Parametric {
                a,
                b,
                c,
                d,
                monotonicity,
            },
            WeightKind::Tabulated { x, w } => WeightRepr::Tabulated { x, w, monotonicity },
        }
    }
}

/// Kernel profile variants.
#[derive(Clone, Debug, PartialEq)]
pub enum PsiKind {
    /// `t^alpha`, `alpha > 0`.
    Power { alpha: f64 },
    /// `exp(-1/t^2)`, continuously extended by 0 at `t = 0`.
    GaussEssential,
    /// `K * 1_{[a, 1]}`.
    Plateau { k: f64, a: f64 },
    /// Linear interpolation through `(nodes[i], values[i])`. A repeated node
    /// encodes a jump; the right value applies at the node itself.
    PiecewiseLinear { nodes: Vec<f64>, values: Vec<f64> },
    /// Non-negative combination of profiles.
    ScaledSum { terms: Vec<(f64, PsiProfile)> },
}

/// A non-negative kernel profile `psi` on `[0, 1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "PsiRepr", into = "PsiRepr")]
pub struct PsiProfile {
    kind: PsiKind,
    // (tolerance used, moment)
    moment: OnceLock<(f64, f64)>,
}

impl PartialEq for PsiProfile {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl PsiProfile {
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("psi", format!("power kind requires alpha > 0, got {alpha}")));
        }
        Ok(Self::new(PsiKind::Power { alpha }))
    }

    pub fn gauss_essential() -> Self {
        Self::new(PsiKind::GaussEssential)
    }

    pub fn plateau(k: f64, a: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::invalid("psi", format!("plateau requires K > 0, got {k}")));
        }
        if !(0.0..1.0).contains(&a) {
            return Err(Error::invalid("psi", format!("plateau requires a in [0, 1), got {a}")));
        }
        Ok(Self::new(PsiKind::Plateau { k, a }))
    }

    pub fn piecewise_linear(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() || nodes.len() < 2 {
            return Err(Error::invalid(
                "psi",
                "piecewise_linear needs at least two nodes and one value per node",
            ));
        }
        if nodes[0] != 0.0 || nodes[nodes.len() - 1] != 1.0 {
            return Err(Error::invalid("psi", "piecewise_linear nodes must start at 0 and end at 1"));
        }
        if nodes.windows(2).any(|p| p[1].is_nan() || p[1] < p[0]) {
            return Err(Error::invalid("psi", "piecewise_linear nodes must be non-decreasing"));
        }
        if nodes.windows(3).any(|p| p[0] == p[2]) {
            return Err(Error::invalid("psi", "a node may be repeated at most once"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("psi", "piecewise_linear values must be finite and non-negative"));
        }
        Ok(Self::new(PsiKind::PiecewiseLinear { nodes, values }))
    }

    pub fn scaled_sum(terms: Vec<(f64, PsiProfile)>) -> Result<Self> {
        if terms.iter().any(|(c, _)| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("psi", "scaled_sum coefficients must be finite and non-negative"));
        }
        Ok(Self::new(PsiKind::ScaledSum { terms }))
    }

    /// The zero profile (an empty sum).
    pub fn zero() -> Self {
        Self::new(PsiKind::ScaledSum { terms: Vec::new() })
    }

    fn new(kind: PsiKind) -> Self {
        PsiProfile {
            kind,
            moment: OnceLock::new(),
        }
    }

    pub fn kind(&self) -> &PsiKind {
        &self.kind
    }

    /// Pointwise value at `t` in `[0, 1]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain {
                what: "psi argument t",
                requirement: "0 <= t <= 1",
                value: t,
            });
        }
        Ok(self.value(t))
    }

    /// Unchecked evaluation; `t` is clamped into `[0, 1]` semantics by callers.
    pub(crate) fn value(&self, t: f64) -> f64 {
        match &self.kind {
            PsiKind::Power { alpha } => t.powf(*alpha),
            PsiKind::GaussEssential => {
                if t == 0.0 {
                    0.0
                } else {
                    (-1.0 / (t * t)).exp()
                }
            }
            PsiKind::Plateau { k, a } => {
                if t >= *a {
                    *k
                } else {
                    0.0
                }
            }
            PsiKind::PiecewiseLinear { nodes, values } => pl_value(nodes, values, t),
            PsiKind::ScaledSum { terms } => terms.iter().map(|(c, p)| c * p.value(t)).sum(),
        }
    }

    /// `ln psi(t)`, `-inf` where `psi` vanishes.
    pub(crate) fn ln_value(&self, t: f64) -> f64 {
        match &self.kind {
            PsiKind::Power { alpha } => {
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    alpha * t.ln()
                }
            }
            PsiKind::GaussEssential => {
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -1.0 / (t * t)
                }
            }
            _ => self.value(t).ln(),
        }
    }

    /// Interior points of `(0, 1)` where the profile jumps or kinks.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(&mut out);
        out.retain(|t| *t > 0.0 && *t < 1.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_breakpoints(&self, out: &mut Vec<f64>) {
        match &self.kind {
            PsiKind::Plateau { a, .. } => out.push(*a),
            PsiKind::PiecewiseLinear { nodes, .. } => out.extend(nodes.iter().copied()),
            PsiKind::ScaledSum { terms } => terms.iter().for_each(|(_, p)| p.collect_breakpoints(out)),
            _ => {}
        }
    }

    /// Whether the profile is identically zero.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            PsiKind::PiecewiseLinear { values, .. } => values.iter().all(|v| *v == 0.0),
            PsiKind::ScaledSum { terms } => terms.iter().all(|(c, p)| *c == 0.0 || p.is_zero()),
            _ => false,
        }
    }

    /// `int_0^1 psi(t)/t dt`, `+inf` when the quadrature reports divergence.
    /// The first value computed is cached and reused for any request with an
    /// equal or looser tolerance.
    pub fn moment(&self, tol: f64) -> Result<f64> {
        if let Some(&(cached_tol, m)) = self.moment.get() {
            if cached_tol <= tol {
                return Ok(m);
            }
        }
        let m = self.compute_moment(tol)?;
        let _ = self.moment.set((tol, m));
        Ok(m)
    }

    /// The cached moment, if one has been computed.
    pub fn cached_moment(&self) -> Option<f64> {
        self.moment.get().map(|&(_, m)| m)
    }

    fn compute_moment(&self, tol: f64) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let breaks: Vec<f64> = self.breakpoints().iter().map(|t| -t.ln()).collect();
        let opts = QuadOptions::with_tol(tol);
        let res = quadrature::integrate_unit_log(|u| self.ln_value((-u).exp()), &breaks, &opts)?;
        Ok(if res.result.diverged {
            f64::INFINITY
        } else {
            res.value()
        })
    }

    /// Multiplies the profile by a non-negative constant.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::scaled_sum(vec![(c, self.clone())])
    }
}

fn pl_value(nodes: &[f64], values: &[f64], t: f64) -> f64 {
    // last index with nodes[i] <= t; the right value of a repeated node wins
    let i = nodes.partition_point(|&n| n <= t);
    if i == 0 {
        return values[0];
    }
    let i = i - 1;
    if i + 1 >= nodes.len() || nodes[i] == t {
        return values[i];
    }
    let (t0, t1) = (nodes[i], nodes[i + 1]);
    let w = (t - t0) / (t1 - t0);
    values[i] * (1.0 - w) + values[i + 1] * w
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PsiRepr {
    Power {
        alpha: f64,
    },
    GaussEssential,
    Plateau {
        #[serde(rename = "K", alias = "k")]
        k: f64,
        a: f64,
    },
    PiecewiseLinear {
        nodes: Vec<f64>,
        values: Vec<f64>,
    },
    ScaledSum {
        #[serde(default)]
        terms: Vec<ScaledTermRepr>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaledTermRepr {
    coeff: f64,
    psi: PsiProfile,
}

impl TryFrom<PsiRepr> for PsiProfile {
    type Error = Error;

    fn try_from(repr: PsiRepr) -> Result<Self> {
        match repr {
            PsiRepr::Power { alpha } => PsiProfile::power(alpha),
            PsiRepr::GaussEssential => Ok(PsiProfile::gauss_essential()),
            PsiRepr::Plateau { k, a } => PsiProfile::plateau(k, a),
            PsiRepr::PiecewiseLinear { nodes, values } => PsiProfile::piecewise_linear(nodes, values),
            PsiRepr::ScaledSum { terms } => {
                PsiProfile::scaled_sum(terms.into_iter().map(|t| (t.coeff, t.psi)).collect())
            }
        }
    }
}

impl From<PsiProfile> for PsiRepr {
    fn from(p: PsiProfile) -> Self {
        match p.kind {
            PsiKind::Power { alpha } => PsiRepr::Power { alpha },
            PsiKind::GaussEssential => PsiRepr::GaussEssential,
            PsiKind::Plateau { k, a } => PsiRepr::Plateau { k, a },
            PsiKind::PiecewiseLinear { nodes, values } => PsiRepr::PiecewiseLinear { nodes, values },
            PsiKind::ScaledSum { terms } => PsiRepr::ScaledSum {
                terms: terms
                    .into_iter()
                    .map(|(coeff, psi)| ScaledTermRepr { coeff, psi })
                    .collect(),
            },
        }
    }
}

pub const DEFAULT_QUAD_TOL: f64 = 1e-8;

fn default_quad_tol() -> f64 {
    DEFAULT_QUAD_TOL
}

/// One operator `U_psi : L1(omega1) -> L1(omega2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemInstance {
    pub psi: PsiProfile,
    pub omega1: Weight,
    pub omega2: Weight,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
}

impl ProblemInstance {
    pub fn new(psi: PsiProfile, omega1: Weight, omega2: Weight) -> Self {
        ProblemInstance {
            psi,
            omega1,
            omega2,
            quad_tol: DEFAULT_QUAD_TOL,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::invalid("quad_tol", format!("must be positive, got {tol}")));
        }
        self.quad_tol = tol;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quad_tol.is_finite() && self.quad_tol > 0.0) {
            return Err(Error::invalid("quad_tol", format!("must be positive, got {}", self.quad_tol)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: ProblemInstance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub(crate) fn quad_options(&self) -> QuadOptions {
        QuadOptions::with_tol(self.quad_tol)
    }

    /// The moment of `psi` at the instance tolerance.
    pub fn moment(&self) -> Result<f64> {
        self.psi.moment(self.quad_tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weight_eval_examples() {
        let w = Weight::parametric(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(w.eval(1.0).unwrap().value, 2.0, max_relative = 1e-15);

        let w = Weight::parametric(-1.0, 0.0, 0.0, 0.25).unwrap();
        assert_relative_eq!(
            w.eval(2.0).unwrap().value,
            std::f64::consts::E / 2.0,
            max_relative = 1e-14
        );

        let w = Weight::tabulated(vec![1.0, 10.0], vec![1.0, 10.0]).unwrap();
        let x = 10f64.sqrt();
        assert_relative_eq!(w.eval(x).unwrap().value, x, max_relative = 1e-14);
    }

    #[test]
    fn weight_rejects_non_positive_argument() {
        let w = Weight::unit();
        assert!(matches!(w.eval(0.0), Err(Error::Domain { .. })));
        assert!(matches!(w.eval(-1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn weight_overflow_saturates() {
        let w = Weight::parametric(0.0, 0.0, 1.0, 0.0).unwrap();
        let v = w.eval(1000.0).unwrap();
        assert!(v.saturated);
        assert_eq!(v.value, SATURATION_SENTINEL);
        assert!(!w.eval(10.0).unwrap().saturated);
    }

    type ClosedForm = Box<dyn Fn(f64) -> f64>;

    #[test]
    fn standard_weights_match_closed_forms() {
        let cases: Vec<(Weight, ClosedForm)> = vec![
            (Weight::parametric(0.0, 0.7, 0.0, 0.0).unwrap(), Box::new(|x: f64| (1.0 + x).powf(0.7))),
            (
                Weight::parametric(0.0, -1.0, -1.0, 0.0).unwrap(),
                Box::new(|x: f64| (-x).exp() / (1.0 + x)),
            ),
            (Weight::parametric(0.0, 0.0, -1.0, 0.0).unwrap(), Box::new(|x: f64| (-x).exp())),
            (
                Weight::parametric(-1.0, 0.0, 0.0, 0.25).unwrap(),
                Box::new(|x: f64| (x * x / 4.0).exp() / x),
            ),
            (Weight::parametric(0.0, 0.0, 1.0, 0.0).unwrap(), Box::new(|x: f64| x.exp())),
        ];
        for (w, exact) in &cases {
            for x in log_grid(1e-4, 1e2, 200) {
                let v = w.eval(x).unwrap();
                if exact(x).is_finite() {
                    assert_relative_eq!(v.value, exact(x), max_relative = 1e-12);
                } else {
                    assert!(v.saturated);
                }
            }
        }
    }

    #[test]
    fn tabulated_reproduces_nodes_and_extrapolates_power_law() {
        let xs = vec![0.5, 1.0, 3.0, 7.0];
        let ws = vec![0.3, 1.7, 2.2, 9.1];
        let w = Weight::tabulated(xs.clone(), ws.clone()).unwrap();
        for (x, v) in xs.iter().zip(&ws) {
            assert_eq!(w.eval(*x).unwrap().value, *v);
        }
        // beyond the last node: power law through (3, 2.2) and (7, 9.1)
        let p = (9.1f64 / 2.2).ln() / (7.0f64 / 3.0).ln();
        assert_relative_eq!(w.eval(14.0).unwrap().value, 9.1 * 2f64.powf(p), max_relative = 1e-12);
        let p0 = (1.7f64 / 0.3).ln() / 2f64.ln();
        assert_relative_eq!(w.eval(0.25).unwrap().value, 0.3 * 0.5f64.powf(p0), max_relative = 1e-12);
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(Weight::tabulated(vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(Weight::tabulated(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(Weight::tabulated(vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn monotonicity_tag_is_verified() {
        assert!(Weight::parametric_tagged(0.0, 1.0, 0.0, 0.0, Monotonicity::Increasing).is_ok());
        assert!(Weight::parametric_tagged(0.0, 1.0, 0.0, 0.0, Monotonicity::Decreasing).is_err());
        assert!(Weight::parametric_tagged(0.0, -1.0, -1.0, 0.0, Monotonicity::Decreasing).is_ok());
        // e^{x^2/4}/x decreases then increases
        assert!(Weight::parametric_tagged(-1.0, 0.0, 0.0, 0.25, Monotonicity::Increasing).is_err());
    }

    #[test]
    fn limit_at_zero() {
        let w = Weight::polynomial(0.5).unwrap();
        assert_relative_eq!(w.limit_at_zero().unwrap(), 1.0, max_relative = 1e-10);
        let singular = Weight::parametric(-1.0, 0.0, 0.0, 0.25).unwrap();
        assert!(singular.limit_at_zero().is_none());
        let vanishing = Weight::parametric(1.0, 0.0, 0.0, 0.0).unwrap();
        assert!(vanishing.limit_at_zero().is_none());
    }

    #[test]
    fn psi_eval_examples() {
        assert_eq!(PsiProfile::power(2.0).unwrap().eval(0.5).unwrap(), 0.25);
        let p = PsiProfile::plateau(3.0, 0.5).unwrap();
        assert_eq!(p.eval(0.4).unwrap(), 0.0);
        assert_eq!(p.eval(0.7).unwrap(), 3.0);
        let g = PsiProfile::gauss_essential();
        assert_relative_eq!(g.eval(1.0).unwrap(), (-1f64).exp(), max_relative = 1e-15);
        assert_eq!(g.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn psi_rejects_bad_arguments() {
        let p = PsiProfile::power(1.0).unwrap();
        assert!(matches!(p.eval(1.5), Err(Error::Domain { .. })));
        assert!(matches!(p.eval(-0.1), Err(Error::Domain { .. })));
        assert!(PsiProfile::power(0.0).is_err());
        assert!(PsiProfile::plateau(1.0, 1.0).is_err());
        assert!(PsiProfile::plateau(0.0, 0.5).is_err());
        assert!(PsiProfile::piecewise_linear(vec![0.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(PsiProfile::piecewise_linear(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn scaled_sum_is_pointwise_combination() {
        let p1 = PsiProfile::power(1.5).unwrap();
        let p2 = PsiProfile::plateau(2.0, 0.3).unwrap();
        let s = PsiProfile::scaled_sum(vec![(0.7, p1.clone()), (1.9, p2.clone())]).unwrap();
        for t in (0..=100).map(|i| i as f64 / 100.0) {
            let want = 0.7 * p1.eval(t).unwrap() + 1.9 * p2.eval(t).unwrap();
            assert_relative_eq!(s.eval(t).unwrap(), want, max_relative = 1e-15);
        }
    }

    #[test]
    fn piecewise_linear_jump_semantics() {
        let p = PsiProfile::piecewise_linear(vec![0.0, 0.5, 0.5, 1.0], vec![0.0, 1.0, 3.0, 3.0]).unwrap();
        assert_relative_eq!(p.eval(0.25).unwrap(), 0.5);
        assert_eq!(p.eval(0.5).unwrap(), 3.0);
        assert_eq!(p.eval(0.75).unwrap(), 3.0);
        assert_eq!(p.eval(1.0).unwrap(), 3.0);
        assert_eq!(p.breakpoints(), vec![0.5]);
    }

    #[test]
    fn sampled_non_negativity() {
        let profiles = vec![
            PsiProfile::power(0.3).unwrap(),
            PsiProfile::gauss_essential(),
            PsiProfile::plateau(1.0, 0.2).unwrap(),
            PsiProfile::piecewise_linear(vec![0.0, 0.3, 1.0], vec![0.0, 2.0, 0.0]).unwrap(),
        ];
        for p in &profiles {
            for i in 0..1000 {
                assert!(p.eval(i as f64 / 999.0).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"psi":{"kind":"plateau","K":2.0,"a":0.5},
            "omega1":{"kind":"parametric","a":0,"b":-1,"c":-1,"d":0},
            "omega2":{"kind":"tabulated","x":[1,2,4],"w":[1,3,9]}}"#;
        let inst = ProblemInstance::from_json(text).unwrap();
        assert_eq!(inst.quad_tol, DEFAULT_QUAD_TOL);
        let again = ProblemInstance::from_json(&serde_json::to_string(&inst).unwrap()).unwrap();
        assert_eq!(inst, again);
    }

    #[test]
    fn json_validation_errors_name_the_problem() {
        let bad = r#"{"psi":{"kind":"power","alpha":-1.0},
            "omega1":{"kind":"parametric"},"omega2":{"kind":"parametric"}}"#;
        let msg = ProblemInstance::from_json(bad).unwrap_err().to_string();
        assert!(msg.contains("alpha"), "{msg}");
        let unknown = r#"{"psi":{"kind":"cubic"},"omega1":{"kind":"parametric"},"omega2":{"kind":"parametric"}}"#;
        assert!(ProblemInstance::from_json(unknown).is_err());
    }
}
