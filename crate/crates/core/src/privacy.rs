//! Privacy budgets and noise calibration.
//!
//! Gaussian differential privacy (μ-GDP) composes as `√(μ₁² + μ₂²)`, so
//! peeling `m′` indices from two independently noised copies of every
//! statistic costs a factor `√(2m′)` in noise scale.

use crate::error::{domain, Result};
use crate::num::{log_std_normal_cdf, Real};

/// Privacy guarantee a procedure is asked to meet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PrivacyBudget<T> {
    /// μ-Gaussian differential privacy.
    Gdp { mu: T },
    /// (ε, δ)-differential privacy.
    ApproxDp { eps: T, delta: T },
}

impl<T: Real> PrivacyBudget<T> {
    pub fn gdp(mu: T) -> Result<Self> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(domain(format!("GDP budget needs mu > 0, got {mu}")));
        }
        Ok(Self::Gdp { mu })
    }

    pub fn approx_dp(eps: T, delta: T) -> Result<Self> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(domain(format!("eps must be positive, got {eps}")));
        }
        if !(delta > T::zero() && delta < T::one()) {
            return Err(domain(format!("delta must be in (0,1), got {delta}")));
        }
        Ok(Self::ApproxDp { eps, delta })
    }
}

/// Noise scales for the inference row (`sigma0`) and the peeling rows (`sigma1`).
///
/// For Gaussian noise these are standard deviations, for Laplace noise the
/// Laplace scale parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseScales<T> {
    pub sigma0: T,
    pub sigma1: T,
}

impl<T: Real> NoiseScales<T> {
    pub fn zero() -> Self {
        Self { sigma0: T::zero(), sigma1: T::zero() }
    }
}

/// Composition of a μ₁-GDP and a μ₂-GDP mechanism.
pub fn gdp_compose<T: Real>(mu1: T, mu2: T) -> Result<T> {
    if !(mu1 >= T::zero()) || !(mu2 >= T::zero()) {
        return Err(domain(format!("GDP parameters must be nonnegative, got {mu1}, {mu2}")));
    }
    Ok(mu1.hypot(mu2))
}

/// δ(ε) of the (ε, δ)-DP curve implied by μ-GDP:
/// `Φ(−ε/μ + μ/2) − e^ε Φ(−ε/μ − μ/2)`.
pub fn gdp_to_approx_dp_delta<T: Real>(mu: T, eps: T) -> Result<T> {
    if !(mu > T::zero()) || !(eps > T::zero()) {
        return Err(domain(format!("need mu > 0 and eps > 0, got mu={mu}, eps={eps}")));
    }
    let half_mu = mu * T::of(0.5);
    let ratio = eps / mu;
    let log_a = log_std_normal_cdf(-ratio + half_mu);
    let log_b = eps + log_std_normal_cdf(-ratio - half_mu);
    // a − b = a·(1 − e^{log_b − log_a}); log_b < log_a always.
    let delta = log_a.exp() * -(log_b - log_a).exp_m1();
    Ok(delta.max(T::zero()))
}

/// The GDP parameter the simulations pair with an (ε, δ) setting:
/// `μ = 4ε / √(10 ln(1/δ))`.
pub fn experiment_mu<T: Real>(eps: T, delta: T) -> Result<T> {
    if !(eps > T::zero()) || !(delta > T::zero() && delta < T::one()) {
        return Err(domain(format!("need eps > 0 and delta in (0,1), got {eps}, {delta}")));
    }
    Ok(T::of(4.0) * eps / (T::of(10.0) * (-delta.ln())).sqrt())
}

/// Gaussian scales making reversed peeling of `m_peel` indices μ-GDP:
/// `σ₀ = √(2m′)·GS/μ`, `σ₁ = 2σ₀`.
pub fn calibrate_peeling_scales<T: Real>(mu: T, gs: T, m_peel: usize) -> Result<NoiseScales<T>> {
    if m_peel == 0 {
        return Err(domain("peeling number must be at least 1"));
    }
    if !(mu > T::zero()) || !(gs > T::zero()) {
        return Err(domain(format!("need mu > 0 and gs > 0, got mu={mu}, gs={gs}")));
    }
    let sigma0 = T::of_usize(2 * m_peel).sqrt() * gs / mu;
    Ok(NoiseScales { sigma0, sigma1: sigma0 + sigma0 })
}

/// Laplace scales for the (ε, δ)-DP variant: `b₁ = 2√(2m′ ln(1/δ))·GS/ε`
/// for peeling rows and `b₀ = b₁/2` for the inference row.
pub fn calibrate_laplace_scales<T: Real>(eps: T, delta: T, gs: T, m_peel: usize) -> Result<NoiseScales<T>> {
    if m_peel == 0 {
        return Err(domain("peeling number must be at least 1"));
    }
    PrivacyBudget::approx_dp(eps, delta)?;
    if !(gs > T::zero()) {
        return Err(domain(format!("gs must be positive, got {gs}")));
    }
    let sigma0 = (T::of_usize(2 * m_peel) * -delta.ln()).sqrt() * gs / eps;
    Ok(NoiseScales { sigma0, sigma1: sigma0 + sigma0 })
}

/// Splits μ into `(μ√ρ, μ√(1−ρ))`, which compose back to μ.
pub fn split_budget<T: Real>(mu: T, rho: T) -> Result<(T, T)> {
    if !(mu > T::zero()) {
        return Err(domain(format!("mu must be positive, got {mu}")));
    }
    if !(rho > T::zero() && rho < T::one()) {
        return Err(domain(format!("budget fraction must be in (0,1), got {rho}")));
    }
    Ok((mu * rho.sqrt(), mu * (T::one() - rho).sqrt()))
}
