//! Lower-tail conditional value-at-risk of a Gaussian.

use statrs::distribution::{ContinuousCDF, Normal};

use super::quadrature::integrate_with_limit;

#[derive(Debug, Clone, thiserror::Error)]
pub enum GaussianError {
    #[error("gamma must lie in (0, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("sigma must be non-negative, got {0}")]
    NegativeSigma(f64),
}

/// Expected value of the lower `gamma`-tail of N(mu, sigma^2).
///
/// Computed by numerically integrating the quantile function,
/// CVaR_g = (1/g) * int_0^g VaR_u du with VaR_u = mu + sigma * Phi^-1(u).
/// `sigma = 0` degenerates to `mu`.
pub fn gaussian_cvar_lower(mu: f64, sigma: f64, gamma: f64) -> Result<f64, GaussianError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(GaussianError::GammaOutOfRange(gamma));
    }
    if sigma < 0.0 {
        return Err(GaussianError::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(mu);
    }

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    // The integrand has integrable singularities at 0 and 1; the Kronrod
    // nodes are interior so neither endpoint is ever evaluated.
    let quantile = |u: f64| std_normal.inverse_cdf(u);
    let tail = integrate_with_limit(quantile, 0.0, gamma, 1e-9, 1e-9, 200)
        .expect("quantile integral converges within the interval budget");
    Ok(mu + sigma * tail.value / gamma)
}
