//! Least-squares line fits used for convergence orders and decay exponents.

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Exponent `p` of the power law `y ≈ C x^p`, fitted in log-log space.
/// Non-positive samples are skipped.
pub fn power_law(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    line(&lx, &ly).map(|(s, _)| s)
}

/// Observed convergence order of errors `errs` measured at resolutions `hs`.
pub fn order(hs: &[f64], errs: &[f64]) -> Option<f64> {
    power_law(hs, errs)
}
