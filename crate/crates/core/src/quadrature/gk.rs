//! 7/15-point Gauss-Kronrod rule and globally adaptive bisection on a panel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
pub(crate) struct RuleResult {
    pub value: f64,
    pub error: f64,
}

/// Applies the rule on `[a, b]`. `Err(x)` reports an abscissa where `f`
/// returned NaN.
// Node k pairs with Gauss weight j, so the loops index several tables at once.
#[allow(clippy::needless_range_loop)]
pub(crate) fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<RuleResult, f64> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let probe = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            Err(x)
        } else {
            Ok(v)
        }
    };

    let fc = probe(center)?;
    let mut gauss = fc * WG[3];
    let mut kronrod = fc * WGK[7];
    let mut res_abs = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];

    for j in 0..3 {
        let k = 2 * j + 1;
        let dx = half * XGK[k];
        let (f1, f2) = (probe(center - dx)?, probe(center + dx)?);
        fv1[k] = f1;
        fv2[k] = f2;
        gauss += WG[j] * (f1 + f2);
        kronrod += WGK[k] * (f1 + f2);
        res_abs += WGK[k] * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let k = 2 * j;
        let dx = half * XGK[k];
        let (f1, f2) = (probe(center - dx)?, probe(center + dx)?);
        fv1[k] = f1;
        fv2[k] = f2;
        kronrod += WGK[k] * (f1 + f2);
        res_abs += WGK[k] * (f1.abs() + f2.abs());
    }

    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for k in 0..7 {
        res_asc += WGK[k] * ((fv1[k] - mean).abs() + (fv2[k] - mean).abs());
    }

    let width = half.abs();
    let value = kronrod * half;
    res_abs *= width;
    res_asc *= width;
    let mut error = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    if !value.is_finite() {
        error = f64::INFINITY;
    }
    Ok(RuleResult { value, error })
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Segment {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

struct Piece {
    a: f64,
    b: f64,
    rule: RuleResult,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rule.error.total_cmp(&other.rule.error)
    }
}

/// Bisects the piece with the largest error estimate until the summed error
/// falls below `target(value)`.
pub(crate) fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    target: &dyn Fn(f64) -> f64,
    max_pieces: usize,
) -> Result<Segment, f64> {
    let first = gk15(f, a, b)?;
    let (mut value, mut error) = (first.value, first.error);
    if !value.is_finite() {
        return Ok(Segment {
            value,
            error: f64::INFINITY,
            converged: false,
        });
    }
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, rule: first });

    while error > target(value) {
        if heap.len() >= max_pieces {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b)
            || (worst.b - worst.a) <= 8.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs())
        {
            // cannot resolve further
            heap.push(worst);
            break;
        }
        let left = gk15(f, worst.a, mid)?;
        let right = gk15(f, mid, worst.b)?;
        value += left.value + right.value - worst.rule.value;
        error += left.error + right.error - worst.rule.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            rule: left,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            rule: right,
        });
        if !value.is_finite() {
            break;
        }
    }

    // recompute sums to shed accumulated cancellation in the running totals
    let (v, e) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.rule.value, e + p.rule.error));
    let error = if v.is_finite() { e.max(0.0) } else { f64::INFINITY };
    Ok(Segment {
        value: v,
        error,
        converged: error <= target(v),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let r = gk15(&|x| 3.0 * x * x + 2.0 * x + 1.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(r.value, 8.0 + 4.0 + 2.0, max_relative = 1e-14);
        assert!(r.error < 1e-12);
    }

    #[test]
    fn adaptive_handles_a_kink() {
        let s = adaptive(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, &|v| 1e-12 * v.abs(), 2000).unwrap();
        assert!(s.converged);
        assert_relative_eq!(s.value, 0.5 * 0.09 + 0.5 * 0.49, max_relative = 1e-11);
    }

    #[test]
    fn nan_is_reported_with_abscissa() {
        let err = gk15(&|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0).unwrap_err();
        assert!(err > 0.5);
    }
}
