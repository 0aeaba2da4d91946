//! Central finite differences, used as the independent oracle for every
//! analytic gradient in the crate.

use super::Matrix;

/// `(f(p + eps·e_k) − f(p − eps·e_k)) / (2·eps)` for every coordinate `k`.
pub fn central_difference(mut f: impl FnMut(&Matrix) -> f64, p: &Matrix, eps: f64) -> Matrix {
    let mut probe = p.clone();
    let mut out = Matrix::zeros(p.rows(), p.cols());
    for k in 0..p.len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + eps;
        let up = f(&probe);
        probe.as_mut_slice()[k] = orig - eps;
        let down = f(&probe);
        probe.as_mut_slice()[k] = orig;
        out.as_mut_slice()[k] = (up - down) / (2.0 * eps);
    }
    out
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
///
/// The floor keeps coordinates whose true gradient is (near) zero from
/// dividing round-off noise by round-off noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest [`relative_error`] over matching coordinates.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}
