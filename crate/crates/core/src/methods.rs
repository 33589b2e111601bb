//! Named procedures shared by the command line and the simulation engine.

use std::fmt;
use std::str::FromStr;

use crate::adaptive::AdaptiveConfig;
use crate::baselines::{classic_procedure, dp_bh, dp_bonf, DworkParams};
use crate::error::{invalid, Error, Result};
use crate::privacy::PrivacyBudget;
use crate::pvalues::PValues;
use crate::stream::RandomStream;
use crate::thresholds::{sup_test_with_stream, FamilyKind, PeelPolicy, TestConfig};
use crate::transform::NoiseKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Bh,
    By,
    Bonf,
    Holm,
    DpBh,
    DpBonf,
    SupBh,
    SupBy,
    SupBonf,
    SupHolm,
    AsupBh,
    AsupBonf,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Bh,
        Method::By,
        Method::Bonf,
        Method::Holm,
        Method::DpBh,
        Method::DpBonf,
        Method::SupBh,
        Method::SupBy,
        Method::SupBonf,
        Method::SupHolm,
        Method::AsupBh,
        Method::AsupBonf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bh => "bh",
            Method::By => "by",
            Method::Bonf => "bonf",
            Method::Holm => "holm",
            Method::DpBh => "dp-bh",
            Method::DpBonf => "dp-bonf",
            Method::SupBh => "sup-bh",
            Method::SupBy => "sup-by",
            Method::SupBonf => "sup-bonf",
            Method::SupHolm => "sup-holm",
            Method::AsupBh => "asup-bh",
            Method::AsupBonf => "asup-bonf",
        }
    }

    pub fn family(self) -> FamilyKind {
        match self {
            Method::Bh | Method::DpBh | Method::SupBh | Method::AsupBh => FamilyKind::Bh,
            Method::By | Method::SupBy => FamilyKind::By,
            Method::Bonf | Method::DpBonf | Method::SupBonf | Method::AsupBonf => FamilyKind::Bonf,
            Method::Holm | Method::SupHolm => FamilyKind::Holm,
        }
    }

    pub fn is_private(self) -> bool {
        !matches!(self, Method::Bh | Method::By | Method::Bonf | Method::Holm)
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::AsupBh | Method::AsupBonf)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let known: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            invalid(format!("unknown method `{s}` (expected one of: {})", known.join(", ")))
        })
    }
}

/// Everything a method may need besides the data and the random stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodSettings {
    pub alpha: f64,
    /// Sensitivity: `GS` of `Φ⁻¹(p)` for the SUP methods, `η` for DP-BH/DP-Bonf.
    pub gs: f64,
    /// GDP budget for Gaussian noise; when absent, derived from `(eps, delta)`.
    pub mu: Option<f64>,
    pub eps: f64,
    pub delta: f64,
    /// Noise for the fixed-peeling SUP methods. The adaptive ones are always Gaussian.
    pub noise: NoiseKind,
    pub m_peel: usize,
    pub adaptive: AdaptiveConfig<f64>,
    /// Truncation for the DP baselines, default `0.5α/m`.
    pub nu: Option<f64>,
}

impl MethodSettings {
    /// `α = 0.1`, `η = GS = 1e-4`, `ε = 0.5`, `δ = 0.001`, `m′ = 200`, Gaussian noise.
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            gs: 1e-4,
            mu: None,
            eps: 0.5,
            delta: 0.001,
            noise: NoiseKind::Gaussian,
            m_peel: 200,
            adaptive: AdaptiveConfig::new(alpha),
            nu: None,
        }
    }

    fn gaussian_budget(&self) -> Result<PrivacyBudget<f64>> {
        match self.mu {
            Some(mu) => PrivacyBudget::gdp(mu),
            None => PrivacyBudget::approx_dp(self.eps, self.delta),
        }
    }

    /// Test configuration of a SUP method (`None` for the others).
    pub fn test_config(&self, method: Method) -> Result<Option<TestConfig<f64>>> {
        if !method.is_private() || matches!(method, Method::DpBh | Method::DpBonf) {
            return Ok(None);
        }
        let (budget, noise, peel) = if method.is_adaptive() {
            (self.gaussian_budget()?, NoiseKind::Gaussian, PeelPolicy::Adaptive(self.adaptive))
        } else {
            let budget = match self.noise {
                NoiseKind::Gaussian => self.gaussian_budget()?,
                NoiseKind::Laplace => PrivacyBudget::approx_dp(self.eps, self.delta)?,
            };
            (budget, self.noise, PeelPolicy::Fixed(self.m_peel))
        };
        let mut cfg = TestConfig::new(method.family(), self.alpha, self.gs, budget, peel);
        cfg.noise = noise;
        Ok(Some(cfg))
    }

    pub fn dwork_params(&self, m: usize) -> DworkParams<f64> {
        let mut p = DworkParams::new(self.gs, self.eps, self.delta, self.m_peel, self.alpha, m);
        if let Some(nu) = self.nu {
            p.nu = nu;
        }
        p
    }
}

/// Result of running one named method.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MethodOutcome {
    /// Rejected indices, ascending.
    pub rejected: Vec<usize>,
    /// `(index, noisy p-value)` for every released index. The log-scale
    /// baselines report `min(1, exp(noisy log p))`.
    pub released: Vec<(usize, f64)>,
    pub j_star: Option<usize>,
    pub m_peel: Option<usize>,
    pub pi0_hat: Option<f64>,
}

pub fn run_method(
    method: Method,
    pvals: &PValues<f64>,
    settings: &MethodSettings,
    stream: &RandomStream,
) -> Result<MethodOutcome> {
    match method {
        Method::Bh | Method::By | Method::Bonf | Method::Holm => {
            let rejected = classic_procedure(pvals, method.family(), settings.alpha)?;
            let j_star = Some(rejected.len());
            Ok(MethodOutcome { rejected, j_star, ..Default::default() })
        }
        Method::DpBh | Method::DpBonf => {
            let params = settings.dwork_params(pvals.len());
            let out = if method == Method::DpBh {
                dp_bh(pvals, &params, settings.alpha, stream)?
            } else {
                dp_bonf(pvals, &params, settings.alpha, stream)?
            };
            let released = out.released.iter().map(|&(j, l)| (j, l.exp().min(1.0))).collect();
            Ok(MethodOutcome {
                j_star: Some(out.rejected.len()),
                m_peel: Some(out.released.len()),
                rejected: out.rejected,
                released,
                pi0_hat: None,
            })
        }
        _ => {
            let cfg = settings.test_config(method)?.expect("SUP method has a test configuration");
            let res = sup_test_with_stream(pvals, &cfg, stream)?;
            let released = res.peeled.peeled_indices.iter().copied().zip(res.peeled.inference_pvals.iter().copied()).collect();
            Ok(MethodOutcome {
                j_star: Some(res.j_star),
                m_peel: Some(res.m_peel()),
                pi0_hat: res.adaptive_info.map(|a| a.pi0),
                rejected: res.rejected,
                released,
            })
        }
    }
}
