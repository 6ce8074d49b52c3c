//! One-dimensional searches: golden-section maximization and the peak scan
//! that places extra panel boundaries around narrow integrand peaks.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn finite_or_low(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximizes `f` on `[a, b]` assuming local unimodality. Returns the best
/// abscissa seen and its value.
pub fn golden_section_max(f: impl Fn(f64) -> f64, a: f64, b: f64, xtol: f64, max_iter: usize) -> (f64, f64) {
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = finite_or_low(f(x1));
    let mut f2 = finite_or_low(f(x2));
    for _ in 0..max_iter {
        if hi - lo <= xtol {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = finite_or_low(f(x1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = finite_or_low(f(x2));
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct PeakScan {
    /// Maximum of the log-integrand found by the scan.
    pub h_max: f64,
    /// Location of the maximum; `hi` when the profile is still rising there.
    pub peak: f64,
    /// Extra panel boundaries clustered around a narrow maximum.
    pub breakpoints: Vec<f64>,
}

/// Beyond this drop below the peak (in log units) the integrand is treated
/// as resolved and no more boundaries are placed.
const MAX_DROP: f64 = 40.0;

fn sample_points(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts = Vec::new();
    let mut v = lo;
    while v < hi {
        pts.push(v);
        v += if v - lo < 40.0 { 0.25 } else { 1.0 };
    }
    pts.push(hi);
    // known breakpoints and the midpoints between them catch narrow support
    let inside: Vec<f64> = extra.iter().copied().filter(|v| *v > lo && *v < hi).collect();
    pts.extend(&inside);
    pts.extend(inside.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Locates the maximum of a log-integrand `h` on `[lo, hi]` and, when the
/// peak is narrower than one unit, returns boundaries at geometrically
/// growing distances `sigma * 2^k` on each side, where `sigma` is the
/// distance over which `h` drops by one. `extra` (sorted) are known
/// breakpoints, sampled in addition to the regular grid.
pub(crate) fn scan_peak(h: &dyn Fn(f64) -> f64, lo: f64, hi: f64, extra: &[f64]) -> PeakScan {
    let pts = sample_points(lo, hi, extra);
    let vals: Vec<f64> = pts.iter().map(|&v| finite_or_low(h(v))).collect();
    let (imax, &vmax) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least two samples");
    if vmax == f64::NEG_INFINITY {
        return PeakScan {
            h_max: f64::NEG_INFINITY,
            peak: lo,
            breakpoints: Vec::new(),
        };
    }
    if imax == pts.len() - 1 {
        // still rising at the end of the range
        return PeakScan {
            h_max: vmax,
            peak: hi,
            breakpoints: Vec::new(),
        };
    }

    let left = pts[imax.saturating_sub(1)];
    let right = pts[(imax + 1).min(pts.len() - 1)];
    let (mut peak, mut h_max) = golden_section_max(h, left, right, 1e-15 * (1.0 + right.abs()), 200);
    if h_max < vmax {
        peak = pts[imax];
        h_max = vmax;
    }

    let mut breakpoints = vec![peak];
    for dir in [1.0, -1.0] {
        let within = |v: f64| v > lo && v < hi;
        let sigma = (-45..=0)
            .map(|j| 2f64.powi(j))
            .take_while(|d| within(peak + dir * d))
            .find(|d| h_max - finite_or_low(h(peak + dir * d)) >= 1.0);
        let Some(sigma) = sigma else { continue };
        let mut k = -3;
        loop {
            let v = peak + dir * sigma * 2f64.powi(k);
            if !within(v) {
                break;
            }
            breakpoints.push(v);
            if h_max - finite_or_low(h(v)) > MAX_DROP {
                break;
            }
            k += 1;
        }
    }
    breakpoints.retain(|v| *v > lo && *v < hi);
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    PeakScan { h_max, peak, breakpoints }
}
