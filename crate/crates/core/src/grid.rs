//! Log-spaced grids.

/// `n` points from `lo` to `hi` (inclusive), equally spaced in `ln x`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let step = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    i if i == n - 1 => hi,
                    i => (a + step * i as f64).exp(),
                })
                .collect()
        }
    }
}

/// Grid from `lo` to `hi` with `per_decade` points per factor of ten.
pub fn decade_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).round().max(1.0) as usize + 1;
    log_grid(lo, hi, n)
}
