//! Data-driven peeling numbers and thresholds from private estimates of the
//! null proportion `π₀`.
//!
//! Both estimators measure how far the p-values above a cutoff `τ` sit,
//! on the `Q = Φ⁻¹` scale, relative to what uniform nulls would give:
//!
//! ```text
//! S   = Σ_{p_j > τ} (Q(p_j) − Q(τ))
//! π̄₀  = S / (m(1−τ)E_τ)
//! π̄₀⁻¹ = m(1−τ)E_τ / max(S, c₀·m(1−τ)E_τ)
//! ```
//!
//! Moving one `Q(p_j)` by at most `GS` moves `S` by at most `GS`, which is
//! what makes both releases cheap in privacy budget.

use crate::error::{domain, Result};
use crate::num::{std_normal_pdf, std_normal_quantile, Real};
use crate::privacy::split_budget;
use crate::pvalues::PValues;
use crate::stream::RandomStream;
use crate::thresholds::{
    gaussian_mu, peeling_scales, sup_test_on_matrix, RejectionResult, TestConfig, ThresholdFamily, ESTIMATOR_STREAM,
    MATRIX_STREAM,
};
use crate::transform::{clamp_probability, generate_noisy_matrix, NoiseKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveConfig<T> {
    /// Cutoff `τ` above which p-values inform the estimate.
    pub tau: T,
    /// Inflation `c` of the estimated signal count.
    pub c: T,
    /// Minimum peeling number `m̃`.
    pub m_tilde: usize,
    /// Floor `c₀` of the `π̄₀⁻¹` denominator, so `π̂₀ ≥ c₀`.
    pub c0: T,
    /// Share `ρ` of the squared GDP budget spent on the estimator.
    pub rho: T,
    /// Replaces the calibrated estimator noise scale.
    pub sigma_override: Option<T>,
}

impl<T: Real> AdaptiveConfig<T> {
    /// `τ = 0.5`, `c = 1/(1−α) − 1`, `m̃ = 100`, `c₀ = 0.5`, `ρ = 0.1`.
    pub fn new(alpha: T) -> Self {
        Self {
            tau: T::of(0.5),
            c: (T::one() - alpha).recip() - T::one(),
            m_tilde: 100,
            c0: T::of(0.5),
            rho: T::of(0.1),
            sigma_override: None,
        }
    }

    pub fn validate(&self, alpha: T) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.tau > alpha && self.tau < T::one()) {
            bad.push(format!("tau must be in (alpha, 1), got {}", self.tau));
        }
        if !(self.c >= T::zero()) || !self.c.is_finite() {
            bad.push(format!("c must be nonnegative, got {}", self.c));
        }
        if self.m_tilde == 0 {
            bad.push("m_tilde must be at least 1".to_string());
        }
        if !(self.c0 > T::zero() && self.c0 < T::one()) {
            bad.push(format!("c0 must be in (0,1), got {}", self.c0));
        }
        if !(self.rho > T::zero() && self.rho < T::one()) {
            bad.push(format!("rho must be in (0,1), got {}", self.rho));
        }
        if let Some(s) = self.sigma_override {
            if !(s >= T::zero()) {
                bad.push(format!("estimator noise override must be nonnegative, got {s}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(domain(bad.join("; ")))
        }
    }
}

/// What the adaptive step released and chose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveInfo<T> {
    /// `π̂₀` (or the noisy `π̄₀` for `m†`).
    pub pi0: T,
    /// `m*` or `m†`.
    pub m_peel: usize,
    /// Standard deviation of the estimator noise.
    pub estimator_sigma: T,
}

/// `E_τ = E[Q(p_U) − Q(τ) | p_U > τ] = φ(Q(τ))/(1−τ) − Q(τ)`.
pub fn e_tau<T: Real>(tau: T) -> Result<T> {
    if !(tau > T::zero() && tau < T::one()) {
        return Err(domain(format!("tau must be in (0,1), got {tau}")));
    }
    let q = std_normal_quantile(tau)?;
    Ok(std_normal_pdf(q) / (T::one() - tau) - q)
}

fn check_tau<T: Real>(tau: T) -> Result<()> {
    if tau > T::zero() && tau < T::one() {
        Ok(())
    } else {
        Err(domain(format!("tau must be in (0,1), got {tau}")))
    }
}

/// Storey's `#{p_j > τ} / (m(1−τ))`.
pub fn storey_pi0<T: Real>(pvals: &PValues<T>, tau: T) -> Result<T> {
    check_tau(tau)?;
    let above = pvals.values().iter().filter(|&&p| p > tau).count();
    Ok(T::of_usize(above) / (T::of_usize(pvals.len()) * (T::one() - tau)))
}

/// `S = Σ_{p_j > τ} (Q(p_j) − Q(τ))`.
fn excess<T: Real>(pvals: &PValues<T>, tau: T) -> Result<T> {
    let q_tau = std_normal_quantile(tau)?;
    Ok(pvals
        .values()
        .iter()
        .filter(|&&p| p > tau)
        .map(|&p| std_normal_quantile(clamp_probability(p)).expect("clamped p is inside (0,1)") - q_tau)
        .sum())
}

/// `π̄₀ = S / (m(1−τ)E_τ)`.
pub fn pi0_bar<T: Real>(pvals: &PValues<T>, tau: T) -> Result<T> {
    check_tau(tau)?;
    let denom = T::of_usize(pvals.len()) * (T::one() - tau) * e_tau(tau)?;
    Ok(excess(pvals, tau)? / denom)
}

/// Sensitivity used for the `π̄₀` release: `GS/((1−τ)E_τ)`.
pub fn gs_pi0_bar<T: Real>(gs: T, tau: T) -> Result<T> {
    if !(gs >= T::zero()) {
        return Err(domain(format!("gs must be nonnegative, got {gs}")));
    }
    Ok(gs / ((T::one() - tau) * e_tau(tau)?))
}

/// `max(⌈(1+c)·m·x⌉, m̃)` capped at `m`.
fn peel_count<T: Real>(x: T, m: usize, c: T, m_tilde: usize) -> usize {
    let floor = m_tilde.min(m);
    let target = (T::one() + c) * T::of_usize(m) * x;
    if !(target > T::of_usize(floor)) {
        return floor;
    }
    if target >= T::of_usize(m) {
        return m;
    }
    target.ceil().to_usize().unwrap_or(m).clamp(floor, m)
}

/// `m† = max(⌈(1+c)m(1 − π̄₀ + Z)⌉, m̃)`, kept within `[m̃, m]`.
pub fn peel_count_m_dagger<T: Real>(pi0_bar_val: T, noise: T, m: usize, cfg: &AdaptiveConfig<T>) -> usize {
    peel_count(T::one() - pi0_bar_val + noise, m, cfg.c, cfg.m_tilde)
}

/// `m* = max(⌈(1+c)m(1 − π̂₀)⌉, m̃)`, kept within `[m̃, m]`.
pub fn peel_count_m_star<T: Real>(pi0_hat_val: T, m: usize, cfg: &AdaptiveConfig<T>) -> usize {
    peel_count(T::one() - pi0_hat_val, m, cfg.c, cfg.m_tilde)
}

/// `π̄₀⁻¹ = m(1−τ)E_τ / max(S, c₀·m(1−τ)E_τ)`.
pub fn pi0_inv_bar<T: Real>(pvals: &PValues<T>, tau: T, c0: T) -> Result<T> {
    check_tau(tau)?;
    if !(c0 > T::zero() && c0 < T::one()) {
        return Err(domain(format!("c0 must be in (0,1), got {c0}")));
    }
    let scale = T::of_usize(pvals.len()) * (T::one() - tau) * e_tau(tau)?;
    Ok(scale / excess(pvals, tau)?.max(c0 * scale))
}

/// Sensitivity bound for `π̄₀⁻¹`: `1/c₀ − 1/(c₀ + GS/((1−τ)E_τ))`.
pub fn gs_pi0_inv<T: Real>(gs: T, tau: T, c0: T) -> Result<T> {
    if !(c0 > T::zero() && c0 < T::one()) {
        return Err(domain(format!("c0 must be in (0,1), got {c0}")));
    }
    let shift = gs_pi0_bar(gs, tau)?;
    Ok(c0.recip() - (c0 + shift).recip())
}

/// `π̂₀ = 1/(π̄₀⁻¹ + Z)` with `π̄₀⁻¹ + Z` first clamped to `[1, 1/c₀]`.
pub fn pi0_hat<T: Real>(pi0_inv_val: T, noise: T, c0: T) -> T {
    let released = pi0_inv_val + noise;
    let clamped = if released.is_nan() { T::one() } else { released.max(T::one()).min(c0.recip()) };
    clamped.recip()
}

fn estimator_budget<T: Real>(cfg: &TestConfig<T>, acfg: &AdaptiveConfig<T>) -> Result<(T, T)> {
    if cfg.noise != NoiseKind::Gaussian {
        return Err(domain("adaptive peeling is only available with Gaussian noise"));
    }
    split_budget(gaussian_mu(cfg.budget)?, acfg.rho)
}

fn estimator_noise<T: Real>(sigma: T, stream: &RandomStream) -> T {
    if sigma == T::zero() {
        return T::zero();
    }
    sigma * T::of(stream.child(ESTIMATOR_STREAM).normal())
}

/// Adaptive test: release `π̂₀` with part of the budget, peel `m*` indices
/// with the rest, and screen against `λ_j/π̂₀` (BH and Bonferroni only).
pub fn adaptive_sup_test<T: Real>(
    pvals: &PValues<T>,
    cfg: &TestConfig<T>,
    acfg: &AdaptiveConfig<T>,
) -> Result<RejectionResult<T>> {
    adaptive_sup_test_with_stream(pvals, cfg, acfg, &RandomStream::new(cfg.seed, 0))
}

pub fn adaptive_sup_test_with_stream<T: Real>(
    pvals: &PValues<T>,
    cfg: &TestConfig<T>,
    acfg: &AdaptiveConfig<T>,
    stream: &RandomStream,
) -> Result<RejectionResult<T>> {
    acfg.validate(cfg.alpha)?;
    let (mu_est, mu_peel) = estimator_budget(cfg, acfg)?;
    let m = pvals.len();
    let sigma = match acfg.sigma_override {
        Some(s) => s,
        None => gs_pi0_inv(cfg.gs, acfg.tau, acfg.c0)? / mu_est,
    };
    let inv = pi0_inv_bar(pvals, acfg.tau, acfg.c0)?;
    let pi0 = pi0_hat(inv, estimator_noise(sigma, stream), acfg.c0);
    let m_peel = peel_count_m_star(pi0, m, acfg);
    let mut family = ThresholdFamily::new(cfg.family, cfg.alpha, m)?;
    if cfg.family.supports_pi0_scaling() {
        family = family.with_pi0_inv_scale(pi0.recip())?;
    }
    let scales = peeling_scales(cfg, Some(mu_peel), m_peel)?;
    let matrix = generate_noisy_matrix(pvals, m_peel, scales, &stream.child(MATRIX_STREAM), cfg.noise)?;
    let mut out = sup_test_on_matrix(&matrix, &family, cfg.step)?;
    out.adaptive_info = Some(AdaptiveInfo { pi0, m_peel, estimator_sigma: sigma });
    Ok(out)
}

/// Peels `m†` indices chosen from a private `π̄₀`; thresholds are unchanged.
pub fn dagger_sup_test<T: Real>(
    pvals: &PValues<T>,
    cfg: &TestConfig<T>,
    acfg: &AdaptiveConfig<T>,
    stream: &RandomStream,
) -> Result<RejectionResult<T>> {
    acfg.validate(cfg.alpha)?;
    let (mu_est, mu_peel) = estimator_budget(cfg, acfg)?;
    let m = pvals.len();
    let sigma = match acfg.sigma_override {
        Some(s) => s,
        None => gs_pi0_bar(cfg.gs, acfg.tau)? / mu_est,
    };
    let noisy = pi0_bar(pvals, acfg.tau)? + estimator_noise(sigma, stream);
    let m_peel = peel_count_m_dagger(noisy, T::zero(), m, acfg);
    let family = ThresholdFamily::new(cfg.family, cfg.alpha, m)?;
    let scales = peeling_scales(cfg, Some(mu_peel), m_peel)?;
    let matrix = generate_noisy_matrix(pvals, m_peel, scales, &stream.child(MATRIX_STREAM), cfg.noise)?;
    let mut out = sup_test_on_matrix(&matrix, &family, cfg.step)?;
    out.adaptive_info = Some(AdaptiveInfo { pi0: noisy, m_peel, estimator_sigma: sigma });
    Ok(out)
}
