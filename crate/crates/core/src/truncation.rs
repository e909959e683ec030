//! Dirichlet kernel identities and Fourier truncation error rates.

use std::f64::consts::PI;

use crate::error::{CoreError, Result};
use crate::field::{Field, GridSpec};
use crate::prior::truncate;
use crate::quadrature::integrate;

/// Below this value of `|sin(x/2)|` the kernel is evaluated from its series.
const SERIES_SWITCH: f64 = 1e-8;

/// `D_N(x) = ½ Σ_{|m| <= N} e^{imx} = ½ sin((N+½)x) / sin(x/2)`.
pub fn dirichlet_kernel(n: usize, x: f64) -> f64 {
    let half = (0.5 * x).sin();
    if half.abs() < SERIES_SWITCH {
        0.5 + (1..=n).map(|m| (m as f64 * x).cos()).sum::<f64>()
    } else {
        0.5 * ((n as f64 + 0.5) * x).sin() / half
    }
}

/// Zeros of `D_N` in `(0, π)`, i.e. `x = mπ/(N+½)`.
fn kernel_zeros(n: usize) -> Vec<f64> {
    let w = n as f64 + 0.5;
    (1..)
        .map(|m| m as f64 * PI / w)
        .take_while(|&x| x < PI)
        .collect()
}

/// Integral of `|D_N|` (or `D_N` itself) over `(-π, π)`, integrating piecewise
/// between consecutive zeros where the kernel has one sign.
fn kernel_integral(n: usize, absolute: bool, tol: f64) -> f64 {
    let mut breaks = vec![0.0];
    breaks.extend(kernel_zeros(n));
    breaks.push(PI);
    let half: f64 = breaks
        .windows(2)
        .map(|w| {
            let r = integrate(|x| dirichlet_kernel(n, x), w[0], w[1], tol, tol);
            if absolute {
                r.value.abs()
            } else {
                r.value
            }
        })
        .sum();
    // D_N is even
    2.0 * half
}

/// `∫_{-π}^{π} D_N(x) dx`, which equals `π` for every `N`.
pub fn dirichlet_integral(n: usize) -> f64 {
    kernel_integral(n, false, 1e-14)
}

/// `‖D_N‖_{L¹(-π,π)}` by adaptive quadrature, relative accuracy better than 1e-6.
pub fn dn_l1_norm(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(CoreError::InvalidArgument(format!("N = {n} must be >= 2")));
    }
    Ok(kernel_integral(n, true, 1e-10))
}

/// `‖u - P^N u‖_{L^∞}` on the grid.
pub fn truncation_sup_error(u: &Field, n: usize) -> Result<f64> {
    Ok(u.sub(&truncate(u, n)?).sup_norm())
}

/// Lacunary series `W_t(x) = Σ_{j=0}^{J} 2^{-jt} cos(2^j x)`, a `C^t` test function.
pub fn weierstrass_field(grid: GridSpec, t: f64, levels: u32) -> Result<Field> {
    if grid.dim() != 1 {
        return Err(CoreError::InvalidArgument("Weierstrass field is one-dimensional".into()));
    }
    if 2usize.pow(levels) >= grid.points_per_axis() / 2 {
        return Err(CoreError::InvalidArgument(format!(
            "2^{levels} must be below n/2 = {}",
            grid.points_per_axis() / 2
        )));
    }
    Ok(Field::from_fn(grid, |x| {
        (0..=levels)
            .map(|j| 2f64.powf(-(j as f64) * t) * (2f64.powi(j as i32) * x[0]).cos())
            .sum()
    }))
}

/// Least-squares line through `(log N, log e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub log_abscissae: Vec<f64>,
    pub log_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

pub fn fit_rate(abscissae: &[f64], errors: &[f64]) -> Result<RateFit> {
    if abscissae.len() != errors.len() {
        return Err(CoreError::InvalidArgument("abscissae and errors differ in length".into()));
    }
    if abscissae.len() < 3 {
        return Err(CoreError::InvalidArgument(format!(
            "rate fit needs at least 3 points, got {}",
            abscissae.len()
        )));
    }
    if let Some(e) = errors.iter().chain(abscissae).find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(CoreError::InvalidArgument(format!("non-positive value {e} in rate fit")));
    }
    let xs: Vec<f64> = abscissae.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(RateFit {
        log_abscissae: xs,
        log_errors: ys,
        slope,
        intercept,
        residual,
    })
}
