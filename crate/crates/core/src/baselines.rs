//! Comparators: textbook BH/BY/Bonferroni/Holm and the log-scale DP-BH and
//! DP-Bonf procedures built on forward peeling with Laplace noise.

use crate::error::{domain, Result};
use crate::num::Real;
use crate::peeling::forward_peel_baseline;
use crate::pvalues::{argsort, PValues};
use crate::stream::RandomStream;
use crate::thresholds::{select_step, FamilyKind, ThresholdFamily};

/// Textbook procedure on the raw p-values; returns rejected indices, ascending.
pub fn classic_procedure<T: Real>(pvals: &PValues<T>, family: FamilyKind, alpha: T) -> Result<Vec<usize>> {
    let fam = ThresholdFamily::new(family, alpha, pvals.len())?;
    let order = argsort(pvals.values());
    let sorted: Vec<T> = order.iter().map(|&j| pvals.values()[j]).collect();
    let j_star = select_step(&sorted, &fam, family.default_step())?;
    let mut rejected = order[..j_star].to_vec();
    rejected.sort_unstable();
    Ok(rejected)
}

/// Parameters of the multiplicative-sensitivity baselines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DworkParams<T> {
    /// Sensitivity of `ln p` for p-values above `nu`.
    pub eta: T,
    /// Truncation level; p-values are floored at `nu` before taking logs.
    pub nu: T,
    pub eps: T,
    pub delta: T,
    /// Number of peeled indices for DP-BH.
    pub m_peel: usize,
    /// Replaces the default Laplace scale.
    pub laplace_scale: Option<T>,
}

impl<T: Real> DworkParams<T> {
    /// `ν = 0.5α/m`.
    pub fn new(eta: T, eps: T, delta: T, m_peel: usize, alpha: T, m: usize) -> Self {
        Self {
            eta,
            nu: T::of(0.5) * alpha / T::of_usize(m.max(1)),
            eps,
            delta,
            m_peel,
            laplace_scale: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.eta > T::zero()) || !self.eta.is_finite() {
            bad.push(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.nu > T::zero() && self.nu < T::one()) {
            bad.push(format!("nu must be in (0,1), got {}", self.nu));
        }
        if !(self.eps > T::zero()) || !self.eps.is_finite() {
            bad.push(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            bad.push(format!("delta must be in (0,1), got {}", self.delta));
        }
        if self.m_peel == 0 {
            bad.push("m_peel must be at least 1".to_string());
        }
        if let Some(s) = self.laplace_scale {
            if !(s > T::zero()) {
                bad.push(format!("laplace scale must be positive, got {s}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(domain(bad.join("; ")))
        }
    }

    fn ln_inv_delta(&self) -> T {
        -self.delta.ln()
    }

    /// `η√(10m′ ln(1/δ))/ε`.
    pub fn dp_bh_scale(&self) -> T {
        self.laplace_scale.unwrap_or_else(|| {
            self.eta * (T::of(10.0) * T::of_usize(self.m_peel) * self.ln_inv_delta()).sqrt() / self.eps
        })
    }

    /// `η√(10m′ ln(1/δ) ln(6m′/α))/ε`.
    pub fn dp_bh_penalty(&self, alpha: T) -> T {
        let k = T::of_usize(self.m_peel);
        self.eta * (T::of(10.0) * k * self.ln_inv_delta() * (T::of(6.0) * k / alpha).ln()).sqrt() / self.eps
    }

    /// `η√(10m ln(1/δ))/(2ε)`.
    pub fn dp_bonf_scale(&self, m: usize) -> T {
        self.laplace_scale.unwrap_or_else(|| {
            self.eta * (T::of(10.0) * T::of_usize(m) * self.ln_inv_delta()).sqrt() / (T::of(2.0) * self.eps)
        })
    }

    /// `η√(10m ln(1/δ) ln(5m/α))/(2ε)`.
    pub fn dp_bonf_penalty(&self, alpha: T, m: usize) -> T {
        let m = T::of_usize(m);
        self.eta * (T::of(10.0) * m * self.ln_inv_delta() * (T::of(5.0) * m / alpha).ln()).sqrt()
            / (T::of(2.0) * self.eps)
    }
}

/// Rejections of a log-scale baseline together with every released value.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineResult<T> {
    /// Rejected indices, ascending.
    pub rejected: Vec<usize>,
    /// `(index, noisy log p-value)` in release order.
    pub released: Vec<(usize, T)>,
}

fn floored_logs<T: Real>(pvals: &PValues<T>, nu: T) -> Vec<T> {
    pvals.values().iter().map(|&p| p.max(nu).ln()).collect()
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(domain(format!("alpha must be in (0,1), got {alpha}")))
    }
}

/// DP-BH: forward-peel `m′` noisy log p-values, then step up against
/// `ln(αj/m) − penalty`.
pub fn dp_bh<T: Real>(
    pvals: &PValues<T>,
    params: &DworkParams<T>,
    alpha: T,
    stream: &RandomStream,
) -> Result<BaselineResult<T>> {
    params.validate()?;
    check_alpha(alpha)?;
    let m = pvals.len();
    if params.m_peel > m {
        return Err(domain(format!("cannot peel {} of {m} hypotheses", params.m_peel)));
    }
    let logs = floored_logs(pvals, params.nu);
    let released = forward_peel_baseline(&logs, params.m_peel, params.dp_bh_scale(), stream)?;
    let mut sorted = released.clone();
    sorted.sort_unstable_by(|a, b| a.1.partial_cmp(&b.1).expect("finite").then(a.0.cmp(&b.0)));
    let penalty = params.dp_bh_penalty(alpha);
    let mf = T::of_usize(m);
    let j_star = (1..=sorted.len())
        .rev()
        .find(|&j| sorted[j - 1].1 <= (alpha * T::of_usize(j) / mf).ln() - penalty)
        .unwrap_or(0);
    let mut rejected: Vec<usize> = sorted[..j_star].iter().map(|x| x.0).collect();
    rejected.sort_unstable();
    Ok(BaselineResult { rejected, released })
}

/// DP-Bonf: every index is released with fresh Laplace noise on its log
/// p-value and rejected when below `ln(α/m) − penalty`.
///
/// Peeling all `m` indices releases each one exactly once, and the reported
/// value uses noise independent of the selection draws, so the selection
/// order does not influence the rejection set and is not simulated.
pub fn dp_bonf<T: Real>(
    pvals: &PValues<T>,
    params: &DworkParams<T>,
    alpha: T,
    stream: &RandomStream,
) -> Result<BaselineResult<T>> {
    params.validate()?;
    check_alpha(alpha)?;
    let m = pvals.len();
    let scale = params.dp_bonf_scale(m).f64();
    let threshold = (alpha / T::of_usize(m)).ln() - params.dp_bonf_penalty(alpha, m);
    let mut rs = stream.child(0);
    let released: Vec<(usize, T)> = floored_logs(pvals, params.nu)
        .into_iter()
        .enumerate()
        .map(|(j, l)| (j, l + T::of(rs.laplace(scale))))
        .collect();
    let rejected = released.iter().filter(|x| x.1 <= threshold).map(|x| x.0).collect();
    Ok(BaselineResult { rejected, released })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DworkVariant {
    Bh,
    Bonf,
}

/// Sufficient condition under which the SUP test with Laplace noise has at
/// least the power of the corresponding baseline:
/// `(η/ε)√(10m′ ln(1/δ)) ≤ 1 − 1/ln(6m′/α)` for BH, and
/// `0.5(η/ε)√(10m ln(1/δ)) ≤ 1 − 1/ln(5m/α)` for Bonferroni.
pub fn power_condition_holds<T: Real>(params: &DworkParams<T>, alpha: T, m: usize, variant: DworkVariant) -> bool {
    let (lhs, rhs) = power_condition_sides(params, alpha, m, variant);
    lhs <= rhs
}

/// Left and right sides of [`power_condition_holds`].
pub fn power_condition_sides<T: Real>(params: &DworkParams<T>, alpha: T, m: usize, variant: DworkVariant) -> (T, T) {
    let ratio = params.eta / params.eps;
    let ln_inv_delta = -params.delta.ln();
    match variant {
        DworkVariant::Bh => {
            let k = T::of_usize(params.m_peel);
            let lhs = ratio * (T::of(10.0) * k * ln_inv_delta).sqrt();
            (lhs, T::one() - (T::of(6.0) * k / alpha).ln().recip())
        }
        DworkVariant::Bonf => {
            let mf = T::of_usize(m);
            let lhs = T::of(0.5) * ratio * (T::of(10.0) * mf * ln_inv_delta).sqrt();
            (lhs, T::one() - (T::of(5.0) * mf / alpha).ln().recip())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn reference_params(m: usize) -> DworkParams<f64> {
        DworkParams::new(1e-4, 0.5, 0.001, 200, 0.1, m)
    }

    #[test]
    fn classic_examples() {
        let p = PValues::new(vec![0.01, 0.02, 0.9]).unwrap();
        assert_eq!(classic_procedure(&p, FamilyKind::Bh, 0.05).unwrap(), vec![0, 1]);
        let ones = PValues::new(vec![1.0; 5]).unwrap();
        for fam in [FamilyKind::Bh, FamilyKind::By, FamilyKind::Bonf, FamilyKind::Holm] {
            assert!(classic_procedure(&ones, fam, 0.1).unwrap().is_empty());
        }
        // Holm steps past 0.012 ≤ 0.05/4 and 0.016 ≤ 0.05/3, stops at 0.03 > 0.025
        let p = PValues::new(vec![0.03, 0.012, 0.016, 0.6]).unwrap();
        assert_eq!(classic_procedure(&p, FamilyKind::Holm, 0.05).unwrap(), vec![1, 2]);
        assert_eq!(classic_procedure(&p, FamilyKind::Bonf, 0.05).unwrap(), vec![1]);
    }

    #[test]
    fn golden_penalties() {
        // 40-digit arithmetic: 0.07204565775792818, 0.4368848040127081, 0.2071931270546420
        assert_abs_diff_eq!(reference_params(20000).dp_bh_penalty(0.1), 0.07204565775792818, epsilon = 1e-14);
        assert_abs_diff_eq!(reference_params(20000).dp_bonf_penalty(0.1, 20000), 0.4368848040127081, epsilon = 1e-14);
        assert_abs_diff_eq!(reference_params(5000).dp_bonf_penalty(0.1, 5000), 0.2071931270546420, epsilon = 1e-14);
    }

    #[test]
    fn power_condition_examples() {
        let p = reference_params(20000);
        let (lhs, rhs) = power_condition_sides(&p, 0.1, 20000, DworkVariant::Bh);
        assert_abs_diff_eq!(lhs, 0.023507880004768, epsilon = 1e-12);
        assert_abs_diff_eq!(rhs, 0.8935339089617443, epsilon = 1e-12);
        assert!(power_condition_holds(&p, 0.1, 20000, DworkVariant::Bh));
        let loud = DworkParams { eta: 1.0, ..p };
        assert!(!power_condition_holds(&loud, 0.1, 20000, DworkVariant::Bh));
        assert!(!power_condition_holds(&loud, 0.1, 20000, DworkVariant::Bonf));
        let quiet = DworkParams { eta: 1e-12, ..p };
        assert!(power_condition_holds(&quiet, 0.1, 20000, DworkVariant::Bh));
        assert!(power_condition_holds(&quiet, 0.1, 20000, DworkVariant::Bonf));
    }

    fn mixed(m: usize, seed: u64) -> PValues<f64> {
        let mut s = RandomStream::new(seed, 0);
        PValues::new(
            (0..m)
                .map(|j| if j % 10 == 0 { crate::num::std_normal_cdf(s.normal() - 4.0) } else { s.uniform() })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn dp_bh_vanishing_noise_is_bh_on_peeled_set() {
        let p = mixed(400, 1);
        let mut params = DworkParams::new(1e-4, 1e3, 0.001, 60, 0.1, 400);
        params.nu = 1e-300;
        let out = dp_bh(&p, &params, 0.1, &RandomStream::new(2, 0)).unwrap();
        let peeled: Vec<usize> = out.released.iter().map(|x| x.0).collect();
        let order = argsort(p.values());
        assert_eq!(peeled, order[..60].to_vec());
        let bh = classic_procedure(&p, FamilyKind::Bh, 0.1).unwrap();
        let expected: Vec<usize> = bh.into_iter().filter(|j| peeled.contains(j)).collect();
        assert_eq!(out.rejected, expected);
    }

    #[test]
    fn stringent_budgets_reject_nothing() {
        let p = mixed(300, 3);
        // noise pinned small so only the penalty term acts
        let mut params = DworkParams::new(1.0, 1e-3, 0.001, 30, 0.1, 300);
        params.laplace_scale = Some(1e-6);
        assert!(dp_bh(&p, &params, 0.1, &RandomStream::new(4, 0)).unwrap().rejected.is_empty());
        let halves = PValues::new(vec![0.5; 300]).unwrap();
        assert!(dp_bonf(&halves, &params, 0.1, &RandomStream::new(4, 0)).unwrap().rejected.is_empty());
    }

    #[test]
    fn dp_bonf_large_eps_is_bonferroni() {
        let p = mixed(500, 5);
        let mut params = DworkParams::new(1e-4, 1e4, 0.001, 500, 0.1, 500);
        params.nu = 1e-300;
        let out = dp_bonf(&p, &params, 0.1, &RandomStream::new(6, 0)).unwrap();
        assert_eq!(out.rejected, classic_procedure(&p, FamilyKind::Bonf, 0.1).unwrap());
        assert_eq!(out.released.len(), 500);
    }

    #[test]
    fn invalid_params() {
        let p = mixed(50, 7);
        let s = RandomStream::new(0, 0);
        let mut params = DworkParams::new(1e-4, 0.5, 0.001, 10, 0.1, 50);
        params.delta = 1.0;
        assert!(dp_bh(&p, &params, 0.1, &s).is_err());
        params.delta = 0.001;
        params.m_peel = 51;
        assert!(dp_bh(&p, &params, 0.1, &s).is_err());
        params.m_peel = 10;
        assert!(dp_bonf(&p, &params, 1.0, &s).is_err());
    }

    proptest! {
        #[test]
        fn bh_count_monotone_in_alpha(seed in 0u64..1000, a in 0.001..0.5f64, b in 0.001..0.5f64) {
            let p = mixed(200, seed);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let r_lo = classic_procedure(&p, FamilyKind::Bh, lo).unwrap().len();
            let r_hi = classic_procedure(&p, FamilyKind::Bh, hi).unwrap().len();
            prop_assert!(r_lo <= r_hi);
        }

        #[test]
        fn bonferroni_inside_holm(seed in 0u64..1000) {
            let p = mixed(150, seed);
            let bonf = classic_procedure(&p, FamilyKind::Bonf, 0.1).unwrap();
            let holm = classic_procedure(&p, FamilyKind::Holm, 0.1).unwrap();
            prop_assert!(bonf.iter().all(|j| holm.contains(j)));
        }
    }
}
