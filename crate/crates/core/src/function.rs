//! Concrete functions on the half-line: finite sums of closed-form terms
//! `c x^p (1+x)^r e^{q x + d x^2} 1_[0,b]`, or tables interpolated linearly
//! in `ln x`.

use crate::error::{Error, Result};
use crate::float_serde::csv_float;
use crate::weights::{ln_power_exp, ln_power_exp_log, Weight, WeightKind};
use serde::{Deserialize, Serialize};
use std::io::Write;

fn one() -> f64 {
    1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// `c x^p (1+x)^r e^{q x + d x^2}`, cut off to zero beyond `b` when present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub p: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub r: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub q: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl Term {
    pub fn new(c: f64) -> Self {
        Term {
            c,
            p: 0.0,
            r: 0.0,
            q: 0.0,
            d: 0.0,
            b: None,
        }
    }

    pub fn power(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn shifted_power(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn exp_linear(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn exp_quadratic(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn cutoff(mut self, b: f64) -> Self {
        self.b = Some(b);
        self
    }

    /// Pointwise product of two terms.
    pub fn times(&self, other: &Term) -> Term {
        let b = match (self.b, other.b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
        Term {
            c: self.c * other.c,
            p: self.p + other.p,
            r: self.r + other.r,
            q: self.q + other.q,
            d: self.d + other.d,
            b,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.c, self.p, self.r, self.q, self.d];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("term", "coefficients must be finite"));
        }
        if let Some(b) = self.b {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid("term", format!("cutoff must be positive, got {b}")));
            }
        }
        Ok(())
    }

    pub fn sign(&self) -> f64 {
        self.c.signum()
    }

    /// `ln |term(x)|` for `x > 0`; `-inf` beyond the cutoff.
    pub fn ln_abs(&self, x: f64) -> f64 {
        if self.c == 0.0 || self.b.is_some_and(|b| x > b) {
            return f64::NEG_INFINITY;
        }
        self.c.abs().ln() + ln_power_exp(self.p, self.r, self.q, self.d, x)
    }

    /// `ln |term(e^lx)|`, accurate when `e^lx` overflows.
    pub fn ln_abs_log(&self, lx: f64) -> f64 {
        let x = lx.exp();
        if x.is_finite() && x > 0.0 {
            return self.ln_abs(x);
        }
        if self.c == 0.0 || self.b.is_some_and(|b| lx > b.ln()) {
            return f64::NEG_INFINITY;
        }
        self.c.abs().ln() + ln_power_exp_log(self.p, self.r, self.q, self.d, lx)
    }

    pub fn value(&self, x: f64) -> f64 {
        if x == 0.0 {
            return if self.p > 0.0 {
                0.0
            } else if self.p == 0.0 {
                self.c
            } else {
                self.c.signum() * f64::INFINITY
            };
        }
        self.sign() * self.ln_abs(x).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionKind {
    ClosedForm { terms: Vec<Term> },
    Sampled { x: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FunctionKind", into = "FunctionKind")]
pub struct TestFunction {
    kind: FunctionKind,
    support_bound: Option<f64>,
    /// `ln x` of the sample abscissae.
    log_x: Vec<f64>,
}

impl TryFrom<FunctionKind> for TestFunction {
    type Error = Error;

    fn try_from(kind: FunctionKind) -> Result<Self> {
        match kind {
            FunctionKind::ClosedForm { terms } => TestFunction::closed_form(terms),
            FunctionKind::Sampled { x, values } => TestFunction::sampled(x, values),
        }
    }
}

impl From<TestFunction> for FunctionKind {
    fn from(f: TestFunction) -> Self {
        f.kind
    }
}

impl TestFunction {
    pub fn closed_form(terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            t.validate()?;
        }
        let terms: Vec<Term> = terms.into_iter().filter(|t| t.c != 0.0).collect();
        let support_bound = if terms.is_empty() {
            Some(0.0)
        } else if terms.iter().all(|t| t.b.is_some()) {
            terms.iter().filter_map(|t| t.b).reduce(f64::max)
        } else {
            None
        };
        Ok(TestFunction {
            kind: FunctionKind::ClosedForm { terms },
            support_bound,
            log_x: Vec::new(),
        })
    }

    /// Table on increasing positive abscissae, interpolated linearly in
    /// `ln x` and zero outside `[x_0, x_n]`.
    pub fn sampled(x: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if x.len() != values.len() || x.len() < 2 {
            return Err(Error::invalid("sampled function", "need at least two (x, value) pairs of equal length"));
        }
        if x.iter().any(|v| !(v.is_finite() && *v > 0.0)) || x.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("sampled function", "abscissae must be positive and strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sampled function", "values must be finite"));
        }
        let last = values.iter().rposition(|v| *v != 0.0);
        let support_bound = Some(match last {
            None => 0.0,
            Some(i) if i + 1 < x.len() => x[i + 1],
            Some(_) => x[x.len() - 1],
        });
        let log_x = x.iter().map(|v| v.ln()).collect();
        Ok(TestFunction {
            kind: FunctionKind::Sampled { x, values },
            support_bound,
            log_x,
        })
    }

    pub fn zero() -> Self {
        Self::closed_form(Vec::new()).expect("empty sum is valid")
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::closed_form(vec![Term::new(c)])
    }

    pub fn monomial(p: f64) -> Result<Self> {
        Self::closed_form(vec![Term::new(1.0).power(p)])
    }

    pub fn exponential(q: f64) -> Result<Self> {
        Self::closed_form(vec![Term::new(1.0).exp_linear(q)])
    }

    /// `1_[0,b]`.
    pub fn indicator(b: f64) -> Result<Self> {
        Self::closed_form(vec![Term::new(1.0).cutoff(b)])
    }

    /// A parametric weight viewed as a function.
    pub fn from_weight(w: &Weight) -> Result<Self> {
        match w.kind() {
            WeightKind::Parametric { a, b, c, d } => Self::closed_form(vec![Term {
                c: 1.0,
                p: *a,
                r: *b,
                q: *c,
                d: *d,
                b: None,
            }]),
            WeightKind::Tabulated { .. } => Err(Error::invalid(
                "function",
                "only parametric weights have a closed form",
            )),
        }
    }

    pub fn kind(&self) -> &FunctionKind {
        &self.kind
    }

    pub fn terms(&self) -> Option<&[Term]> {
        match &self.kind {
            FunctionKind::ClosedForm { terms } => Some(terms),
            FunctionKind::Sampled { .. } => None,
        }
    }

    /// `f = 0` beyond this point, when known.
    pub fn support_bound(&self) -> Option<f64> {
        self.support_bound
    }

    pub fn is_zero(&self) -> bool {
        self.support_bound == Some(0.0)
    }

    /// Value at `x >= 0`.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            FunctionKind::ClosedForm { terms } => terms.iter().map(|t| t.value(x)).sum(),
            FunctionKind::Sampled { x: xs, values } => {
                if !(x >= xs[0] && x <= xs[xs.len() - 1]) {
                    return 0.0;
                }
                let i = xs.partition_point(|v| *v <= x);
                if i == xs.len() {
                    return values[i - 1];
                }
                let (l0, l1) = (self.log_x[i - 1], self.log_x[i]);
                let w = (x.ln() - l0) / (l1 - l0);
                values[i - 1] + w * (values[i] - values[i - 1])
            }
        }
    }

    /// `f(x) w(x)` given `ln w(x)`, computed term by term so that large
    /// weights times small terms do not overflow.
    pub fn eval_weighted(&self, x: f64, ln_w: f64) -> f64 {
        match &self.kind {
            FunctionKind::ClosedForm { terms } => terms
                .iter()
                .map(|t| {
                    let l = t.ln_abs(x);
                    if l == f64::NEG_INFINITY {
                        0.0
                    } else {
                        t.sign() * (l + ln_w).exp()
                    }
                })
                .sum(),
            FunctionKind::Sampled { .. } => {
                let v = self.eval(x);
                if v == 0.0 {
                    0.0
                } else {
                    v * ln_w.exp()
                }
            }
        }
    }

    /// Points in `(0, inf)` where `f` jumps or kinks.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            FunctionKind::ClosedForm { terms } => terms.iter().filter_map(|t| t.b).collect(),
            FunctionKind::Sampled { x, .. } => x.clone(),
        }
    }

    /// `a f + b g` for closed forms, or for tables on the same abscissae.
    pub fn combine(a: f64, f: &TestFunction, b: f64, g: &TestFunction) -> Result<TestFunction> {
        match (&f.kind, &g.kind) {
            (FunctionKind::ClosedForm { terms: tf }, FunctionKind::ClosedForm { terms: tg }) => {
                let scale = |k: f64| move |t: &Term| Term { c: k * t.c, ..*t };
                let terms = tf.iter().map(scale(a)).chain(tg.iter().map(scale(b))).collect();
                TestFunction::closed_form(terms)
            }
            (FunctionKind::Sampled { x: xf, values: vf }, FunctionKind::Sampled { x: xg, values: vg }) if xf == xg => {
                let values = vf.iter().zip(vg).map(|(p, q)| a * p + b * q).collect();
                TestFunction::sampled(xf.clone(), values)
            }
            _ => Err(Error::invalid(
                "combine",
                "needs two closed forms or two tables on the same abscissae",
            )),
        }
    }

    /// Writes columns `x,value` for a sampled function.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let FunctionKind::Sampled { x, values } = &self.kind else {
            return Err(Error::invalid("csv output", "only sampled functions are tabulated"));
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "value"])?;
        for (x, v) in x.iter().zip(values) {
            w.write_record([csv_float(*x), csv_float(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}
