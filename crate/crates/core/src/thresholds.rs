//! Rejection thresholds, step-up/step-down selection and the full SUP test.

use crate::adaptive::{self, AdaptiveConfig, AdaptiveInfo};
use crate::error::{domain, invalid, Result};
use crate::num::Real;
use crate::peeling::{reversed_peel, PeelOutcome};
use crate::privacy::{calibrate_laplace_scales, calibrate_peeling_scales, experiment_mu, NoiseScales, PrivacyBudget};
use crate::pvalues::PValues;
use crate::stream::RandomStream;
use crate::transform::{generate_inference_row, generate_noisy_matrix, NoiseKind, NoisyMatrix};

/// Child label of the stream that feeds the noisy matrix.
pub(crate) const MATRIX_STREAM: u64 = 1;
/// Child label of the stream that feeds private estimator releases.
pub(crate) const ESTIMATOR_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    /// `λ_j = αj/m`
    Bh,
    /// `λ_j = αj/(m·Σ_{l≤m} 1/l)`
    By,
    /// `λ_j = α/m`
    Bonf,
    /// `λ_j = α/(m + 1 − j)`
    Holm,
}

impl FamilyKind {
    pub fn default_step(self) -> StepRule {
        match self {
            FamilyKind::Holm => StepRule::StepDown,
            _ => StepRule::StepUp,
        }
    }

    /// Whether thresholds are rescaled by `1/π̂₀` under adaptive peeling.
    pub fn supports_pi0_scaling(self) -> bool {
        matches!(self, FamilyKind::Bh | FamilyKind::Bonf)
    }
}

/// `ζ = 1` (step-up) or `ζ = 0` (step-down).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepRule {
    StepUp,
    StepDown,
}

impl StepRule {
    pub fn zeta(self) -> u8 {
        match self {
            StepRule::StepUp => 1,
            StepRule::StepDown => 0,
        }
    }

    pub fn from_zeta(zeta: u8) -> Result<Self> {
        match zeta {
            1 => Ok(StepRule::StepUp),
            0 => Ok(StepRule::StepDown),
            z => Err(domain(format!("step parameter must be 0 or 1, got {z}"))),
        }
    }
}

/// A threshold sequence `λ_1, …, λ_m`, always indexed against the full `m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdFamily<T> {
    kind: FamilyKind,
    alpha: T,
    m: usize,
    pi0_inv_scale: T,
    harmonic: T,
}

impl<T: Real> ThresholdFamily<T> {
    pub fn new(kind: FamilyKind, alpha: T, m: usize) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(domain(format!("alpha must be in (0,1), got {alpha}")));
        }
        if m == 0 {
            return Err(domain("family needs m >= 1"));
        }
        let harmonic = if kind == FamilyKind::By {
            (1..=m).map(|l| (l as f64).recip()).sum::<f64>()
        } else {
            1.0
        };
        Ok(Self { kind, alpha, m, pi0_inv_scale: T::one(), harmonic: T::of(harmonic) })
    }

    /// Multiplies every threshold by `scale` (`1/π̂₀`), which must be at least 1.
    pub fn with_pi0_inv_scale(mut self, scale: T) -> Result<Self> {
        if !(scale >= T::one()) || !scale.is_finite() {
            return Err(domain(format!("threshold scale must be >= 1, got {scale}")));
        }
        self.pi0_inv_scale = scale;
        Ok(self)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn pi0_inv_scale(&self) -> T {
        self.pi0_inv_scale
    }

    #[inline]
    fn raw(&self, j: usize) -> T {
        let m = T::of_usize(self.m);
        let base = match self.kind {
            FamilyKind::Bh => self.alpha * T::of_usize(j) / m,
            FamilyKind::By => self.alpha * T::of_usize(j) / (m * self.harmonic),
            FamilyKind::Bonf => self.alpha / m,
            FamilyKind::Holm => self.alpha / T::of_usize(self.m + 1 - j),
        };
        base * self.pi0_inv_scale
    }

    /// `λ_1, …, λ_n`.
    pub fn values(&self, n: usize) -> Result<Vec<T>> {
        if n > self.m {
            return Err(domain(format!("asked for {n} thresholds of a family with m = {}", self.m)));
        }
        Ok((1..=n).map(|j| self.raw(j)).collect())
    }
}

/// `λ_j` for `1 ≤ j ≤ m`.
pub fn threshold_value<T: Real>(family: &ThresholdFamily<T>, j: usize) -> Result<T> {
    if j == 0 || j > family.m {
        return Err(domain(format!("threshold index {j} outside 1..={}", family.m)));
    }
    Ok(family.raw(j))
}

/// Number of hypotheses to reject from nondecreasing `sorted` values.
///
/// Step-up returns the largest `j` with `p_(j) ≤ λ_j` (0 if none); step-down
/// returns one less than the first `j` with `p_(j) > λ_j` (all of them if no
/// entry exceeds its threshold).
pub fn select_step<T: Real>(sorted: &[T], family: &ThresholdFamily<T>, step: StepRule) -> Result<usize> {
    if sorted.len() > family.m {
        return Err(domain(format!("{} values for a family with m = {}", sorted.len(), family.m)));
    }
    if let Some(w) = sorted.windows(2).position(|w| !(w[0] <= w[1])) {
        return Err(invalid(format!("values are not sorted at position {}", w + 1)));
    }
    Ok(match step {
        StepRule::StepUp => (1..=sorted.len())
            .rev()
            .find(|&j| sorted[j - 1] <= family.raw(j))
            .unwrap_or(0),
        StepRule::StepDown => (1..=sorted.len())
            .find(|&j| sorted[j - 1] > family.raw(j))
            .map_or(sorted.len(), |j| j - 1),
    })
}

/// How many indices are peeled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PeelPolicy<T> {
    /// A fixed `m′`.
    Fixed(usize),
    /// `m†` from a private release of `π̄₀`; thresholds unchanged.
    Dagger(AdaptiveConfig<T>),
    /// `m*` and thresholds `λ_j/π̂₀` from a private release of `π̂₀`.
    Adaptive(AdaptiveConfig<T>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestConfig<T> {
    pub family: FamilyKind,
    pub alpha: T,
    pub step: StepRule,
    /// Global sensitivity of `Φ⁻¹(p)`.
    pub gs: T,
    pub budget: PrivacyBudget<T>,
    pub noise: NoiseKind,
    pub peel: PeelPolicy<T>,
    pub seed: u64,
    /// Replaces the calibrated scales (analysis and zero-noise checks only).
    pub scale_override: Option<NoiseScales<T>>,
}

impl<T: Real> TestConfig<T> {
    /// Gaussian noise, the family's default step rule and seed 0.
    pub fn new(family: FamilyKind, alpha: T, gs: T, budget: PrivacyBudget<T>, peel: PeelPolicy<T>) -> Self {
        Self {
            family,
            alpha,
            step: family.default_step(),
            gs,
            budget,
            noise: NoiseKind::Gaussian,
            peel,
            seed: 0,
            scale_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(domain(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if !(self.gs > T::zero()) || !self.gs.is_finite() {
            return Err(domain(format!("gs must be positive, got {}", self.gs)));
        }
        match self.budget {
            PrivacyBudget::Gdp { mu } => {
                PrivacyBudget::gdp(mu)?;
            }
            PrivacyBudget::ApproxDp { eps, delta } => {
                PrivacyBudget::approx_dp(eps, delta)?;
            }
        }
        if let Some(s) = self.scale_override {
            if !(s.sigma0 >= T::zero()) || !(s.sigma1 >= T::zero()) {
                return Err(domain("scale override must be nonnegative"));
            }
        }
        match self.peel {
            PeelPolicy::Fixed(0) => Err(domain("peeling number must be at least 1")),
            PeelPolicy::Fixed(_) => Ok(()),
            PeelPolicy::Dagger(a) | PeelPolicy::Adaptive(a) => a.validate(self.alpha),
        }
    }
}

/// GDP parameter used for Gaussian noise: `μ` itself, or the simulation
/// pairing `4ε/√(10 ln(1/δ))` for an (ε, δ) budget.
pub fn gaussian_mu<T: Real>(budget: PrivacyBudget<T>) -> Result<T> {
    match budget {
        PrivacyBudget::Gdp { mu } => Ok(mu),
        PrivacyBudget::ApproxDp { eps, delta } => experiment_mu(eps, delta),
    }
}

/// Noise scales for peeling `m_peel` indices. `mu_peel` replaces the Gaussian
/// budget when part of it was spent elsewhere.
pub(crate) fn peeling_scales<T: Real>(cfg: &TestConfig<T>, mu_peel: Option<T>, m_peel: usize) -> Result<NoiseScales<T>> {
    if let Some(s) = cfg.scale_override {
        return Ok(s);
    }
    match (cfg.noise, cfg.budget) {
        (NoiseKind::Gaussian, budget) => {
            let mu = match mu_peel {
                Some(mu) => mu,
                None => gaussian_mu(budget)?,
            };
            calibrate_peeling_scales(mu, cfg.gs, m_peel)
        }
        (NoiseKind::Laplace, PrivacyBudget::ApproxDp { eps, delta }) => {
            calibrate_laplace_scales(eps, delta, cfg.gs, m_peel)
        }
        (NoiseKind::Laplace, PrivacyBudget::Gdp { .. }) => {
            Err(domain("Laplace noise needs an (eps, delta) budget"))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RejectionResult<T> {
    pub peeled: PeelOutcome<T>,
    pub j_star: usize,
    /// Rejected hypothesis indices, ascending.
    pub rejected: Vec<usize>,
    /// `λ_1, …, λ_n` for the `n` values that were screened.
    pub thresholds_used: Vec<T>,
    pub adaptive_info: Option<AdaptiveInfo<T>>,
    pub scales: NoiseScales<T>,
}

impl<T: Real> RejectionResult<T> {
    pub fn m_peel(&self) -> usize {
        self.peeled.len()
    }

    pub fn rejection_count(&self) -> usize {
        self.rejected.len()
    }
}

fn select_from<T: Real>(
    peeled: &PeelOutcome<T>,
    family: &ThresholdFamily<T>,
    step: StepRule,
) -> Result<(usize, Vec<usize>, Vec<T>)> {
    let sorted = peeled.sorted_by_value();
    let values: Vec<T> = sorted.iter().map(|x| x.1).collect();
    let j_star = select_step(&values, family, step)?;
    let mut rejected: Vec<usize> = sorted[..j_star].iter().map(|x| x.0).collect();
    rejected.sort_unstable();
    Ok((j_star, rejected, family.values(values.len())?))
}

/// Peels `matrix`, then applies the threshold family to the peeled
/// inference values.
pub fn sup_test_on_matrix<T: Real>(
    matrix: &NoisyMatrix<T>,
    family: &ThresholdFamily<T>,
    step: StepRule,
) -> Result<RejectionResult<T>> {
    if family.m() != matrix.cols() {
        return Err(domain(format!("family built for m = {} but matrix has {} columns", family.m(), matrix.cols())));
    }
    let peeled = reversed_peel(matrix)?;
    let (j_star, rejected, thresholds_used) = select_from(&peeled, family, step)?;
    Ok(RejectionResult { peeled, j_star, rejected, thresholds_used, adaptive_info: None, scales: matrix.scales() })
}

/// Applies the threshold family to all `m` inference values, without peeling.
pub fn truncated_on_row<T: Real>(
    row0: &[T],
    scales: NoiseScales<T>,
    family: &ThresholdFamily<T>,
    step: StepRule,
) -> Result<RejectionResult<T>> {
    if family.m() != row0.len() {
        return Err(domain(format!("family built for m = {} but row has {} entries", family.m(), row0.len())));
    }
    let peeled = PeelOutcome { peeled_indices: (0..row0.len()).collect(), inference_pvals: row0.to_vec() };
    let (j_star, rejected, thresholds_used) = select_from(&peeled, family, step)?;
    Ok(RejectionResult { peeled, j_star, rejected, thresholds_used, adaptive_info: None, scales })
}

/// Private multiple test: calibrate, draw the noisy sets, peel, select.
pub fn sup_test<T: Real>(pvals: &PValues<T>, cfg: &TestConfig<T>) -> Result<RejectionResult<T>> {
    sup_test_with_stream(pvals, cfg, &RandomStream::new(cfg.seed, 0))
}

/// As [`sup_test`] but drawing from `stream` instead of `cfg.seed`.
pub fn sup_test_with_stream<T: Real>(
    pvals: &PValues<T>,
    cfg: &TestConfig<T>,
    stream: &RandomStream,
) -> Result<RejectionResult<T>> {
    cfg.validate()?;
    let m = pvals.len();
    match cfg.peel {
        PeelPolicy::Fixed(m_peel) => {
            if m_peel > m {
                return Err(domain(format!("cannot peel {m_peel} of {m} hypotheses")));
            }
            let scales = peeling_scales(cfg, None, m_peel)?;
            let matrix = generate_noisy_matrix(pvals, m_peel, scales, &stream.child(MATRIX_STREAM), cfg.noise)?;
            let family = ThresholdFamily::new(cfg.family, cfg.alpha, m)?;
            sup_test_on_matrix(&matrix, &family, cfg.step)
        }
        PeelPolicy::Dagger(acfg) => adaptive::dagger_sup_test(pvals, cfg, &acfg, stream),
        PeelPolicy::Adaptive(acfg) => adaptive::adaptive_sup_test_with_stream(pvals, cfg, &acfg, stream),
    }
}

/// The no-peeling analysis variant: only row 0 is drawn (with the scale the
/// full test would use), and all `m` noisy values are screened. It shares
/// row 0 with [`sup_test`] under the same seed. It carries no privacy
/// guarantee.
pub fn truncated_sup_test<T: Real>(pvals: &PValues<T>, cfg: &TestConfig<T>) -> Result<RejectionResult<T>> {
    truncated_sup_test_with_stream(pvals, cfg, &RandomStream::new(cfg.seed, 0))
}

pub fn truncated_sup_test_with_stream<T: Real>(
    pvals: &PValues<T>,
    cfg: &TestConfig<T>,
    stream: &RandomStream,
) -> Result<RejectionResult<T>> {
    cfg.validate()?;
    let m_peel = match cfg.peel {
        PeelPolicy::Fixed(n) => n,
        _ => return Err(domain("the truncated test needs a fixed peeling number for calibration")),
    };
    let scales = peeling_scales(cfg, None, m_peel)?;
    let row0 = generate_inference_row(pvals, scales, &stream.child(MATRIX_STREAM), cfg.noise)?;
    let family = ThresholdFamily::new(cfg.family, cfg.alpha, pvals.len())?;
    truncated_on_row(&row0, scales, &family, cfg.step)
}
