//! Integrated autocorrelation time and effective sample size of a scalar chain.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{CoreError, Result};

/// Window constant `c` in the self-consistent cutoff `M >= c τ(M)`.
pub const SOKAL_WINDOW_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutocorrEstimate {
    /// Integrated autocorrelation time `1 + 2 Σ_{t=1}^{M} ρ_t`.
    pub tau: f64,
    /// Cutoff lag `M`.
    pub window: usize,
    /// `n / τ`.
    pub ess: f64,
    pub samples: usize,
    /// Biased sample variance `γ_0`.
    pub variance: f64,
}

/// Estimates `τ` with FFT autocovariances and Sokal's automatic window.
///
/// A constant series has no autocorrelation structure to speak of; it reports
/// `τ = 1`.
pub fn integrated_autocorrelation(series: &[f64]) -> Result<AutocorrEstimate> {
    let n = series.len();
    if n < 2 {
        return Err(CoreError::InvalidArgument(format!(
            "autocorrelation needs at least 2 samples, got {n}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidArgument("non-finite value in series".into()));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = series
        .iter()
        .map(|v| Complex64::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(m)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
    planner.plan_fft_inverse(m).process(&mut buf);
    let scale = 1.0 / (m as f64 * n as f64);
    let gamma0 = buf[0].re * scale;
    if gamma0 <= 0.0 {
        return Ok(AutocorrEstimate {
            tau: 1.0,
            window: 0,
            ess: n as f64,
            samples: n,
            variance: 0.0,
        });
    }

    let mut tau = 1.0;
    let mut window = n - 1;
    for t in 1..n {
        tau += 2.0 * buf[t].re * scale / gamma0;
        if t as f64 >= SOKAL_WINDOW_FACTOR * tau {
            window = t;
            break;
        }
    }
    let tau = tau.max(f64::EPSILON);
    Ok(AutocorrEstimate {
        tau,
        window,
        ess: n as f64 / tau,
        samples: n,
        variance: gamma0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let mut x = 0.0;
        let innov = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                x = rho * x + innov * rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn white_noise_has_unit_tau() {
        let est = integrated_autocorrelation(&ar1(0.0, 50_000, 1)).unwrap();
        assert!((est.tau - 1.0).abs() < 0.1, "{est:?}");
        assert!((est.variance - 1.0).abs() < 0.05);
    }

    #[test]
    fn ar1_matches_closed_form() {
        // τ = (1 + ρ) / (1 - ρ)
        for rho in [0.5, 0.9] {
            let est = integrated_autocorrelation(&ar1(rho, 200_000, 7)).unwrap();
            let exact = (1.0 + rho) / (1.0 - rho);
            assert!((est.tau / exact - 1.0).abs() < 0.1, "rho {rho}: {est:?} vs {exact}");
        }
    }

    #[test]
    fn direct_autocovariance_agrees() {
        let x = ar1(0.7, 300, 3);
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let gamma = |t: usize| (0..n - t).map(|j| (x[j] - mean) * (x[j + t] - mean)).sum::<f64>() / n as f64;
        let est = integrated_autocorrelation(&x).unwrap();
        let g0 = gamma(0);
        let direct = 1.0 + 2.0 * (1..=est.window).map(|t| gamma(t) / g0).sum::<f64>();
        assert!((direct - est.tau).abs() < 1e-10);
        assert!((g0 - est.variance).abs() < 1e-12);
    }

    #[test]
    fn constant_series() {
        let est = integrated_autocorrelation(&[3.0; 100]).unwrap();
        assert_eq!(est.tau, 1.0);
        assert_eq!(est.ess, 100.0);
    }

    #[test]
    fn rejects_short_or_bad_series() {
        assert!(integrated_autocorrelation(&[1.0]).is_err());
        assert!(integrated_autocorrelation(&[1.0, f64::NAN]).is_err());
    }
}
