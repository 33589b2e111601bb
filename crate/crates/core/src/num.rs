//! Scalar abstraction and the standard-normal special functions everything
//! else is built on.
//!
//! The complementary error function is evaluated in scaled form,
//! `erfcx(x) = exp(x²)·erfc(x)`, so that normal tail probabilities and the
//! normal–Laplace convolution never form `exp(x²)` or `exp(x/b)` explicitly.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

use crate::error::{domain, Result};

/// Floating-point scalar the procedures are generic over (`f32`, `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    /// Converts a count into this scalar.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// Lossy conversion back to `f64`.
    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Below this argument `erfcx` is summed from the power series of `erf`,
/// above it from the Laplace continued fraction.
const SERIES_CUTOFF: f64 = 1.5;
const MAX_TERMS: usize = 500;

/// Scaled complementary error function `exp(x²)·erfc(x)` for `x ≥ 0`.
pub(crate) fn erfcx_nonneg<T: Real>(x: T) -> T {
    debug_assert!(!(x < T::zero()));
    let eps = T::epsilon();
    let two_over_sqrt_pi = T::FRAC_2_SQRT_PI();
    if x < T::of(SERIES_CUTOFF) {
        // erf(x) = 2/√π · e^{-x²} · Σ 2ⁿ x^{2n+1} / (2n+1)!!   (all terms positive)
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for n in 1..MAX_TERMS {
            term = term * (x2 + x2) / T::of_usize(2 * n + 1);
            sum = sum + term;
            if term <= eps * sum {
                break;
            }
        }
        x2.exp() - two_over_sqrt_pi * sum
    } else {
        // erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        // evaluated with the modified Lentz algorithm.
        let tiny = T::min_positive_value().sqrt();
        let mut f = x;
        let mut c = x;
        let mut d = T::zero();
        let half = T::of(0.5);
        for n in 1..MAX_TERMS {
            let a = T::of_usize(n) * half;
            d = x + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            d = d.recip();
            c = x + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            let delta = c * d;
            f = f * delta;
            if (delta - T::one()).abs() <= eps {
                break;
            }
        }
        (f * T::PI().sqrt()).recip()
    }
}

/// `Φ(-|x|)` with full relative accuracy in the tail.
#[inline]
fn lower_tail<T: Real>(x: T) -> T {
    let z = x.abs() * T::FRAC_1_SQRT_2();
    T::of(0.5) * (-(z * z)).exp() * erfcx_nonneg(z)
}

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let tail = lower_tail(x);
    if x < T::zero() {
        tail
    } else {
        T::one() - tail
    }
}

/// Natural log of the standard normal CDF, accurate far into the lower tail.
pub fn log_std_normal_cdf<T: Real>(x: T) -> T {
    if x < T::zero() {
        let z = -x * T::FRAC_1_SQRT_2();
        -(z * z) + (T::of(0.5) * erfcx_nonneg(z)).ln()
    } else {
        (-lower_tail(x)).ln_1p()
    }
}

/// Standard normal density.
pub fn std_normal_pdf<T: Real>(x: T) -> T {
    let inv_sqrt_2pi = T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() * T::of(0.5);
    (-(x * x) * T::of(0.5)).exp() * inv_sqrt_2pi
}

// Rational approximation of the normal quantile (P. J. Acklam), relative
// error about 1.15e-9 before refinement.
const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const ACKLAM_P_LOW: f64 = 0.02425;

fn horner<T: Real>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().fold(T::zero(), |acc, &c| acc * x + T::of(c))
}

/// Quantile for `p ∈ (0, 1/2]`.
fn lower_quantile<T: Real>(p: T) -> T {
    let x0 = if p < T::of(ACKLAM_P_LOW) {
        let q = (-(p.ln() + p.ln())).sqrt();
        horner(&ACKLAM_C, q) / (horner(&ACKLAM_D, q) * q + T::one())
    } else {
        let q = p - T::of(0.5);
        let r = q * q;
        q * horner(&ACKLAM_A, r) / (horner(&ACKLAM_B, r) * r + T::one())
    };
    // One Newton step. In the lower half Φ(x) is the relative-accurate tail,
    // so the correction stays exact down to p ≈ 1e-300.
    let pdf = std_normal_pdf(x0);
    if pdf > T::zero() {
        x0 - (std_normal_cdf(x0) - p) / pdf
    } else {
        x0
    }
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn std_normal_quantile<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(domain(format!("normal quantile needs p in (0,1), got {p}")));
    }
    let half = T::of(0.5);
    if p > half {
        // 1 - p is exact for p in [1/2, 1).
        Ok(-lower_quantile(T::one() - p))
    } else {
        Ok(lower_quantile(p))
    }
}

/// `φ(y)·R(α − y)` where `R` is the Mills ratio `Φ(-z)/φ(z)`.
fn mills_term<T: Real>(y: T, alpha: T) -> T {
    let z = alpha - y;
    if z >= T::zero() {
        let sqrt_half_pi = (T::PI() * T::of(0.5)).sqrt();
        std_normal_pdf(y) * sqrt_half_pi * erfcx_nonneg(z * T::FRAC_1_SQRT_2())
    } else {
        // y > α, so the exponent α(α/2 − y) is negative.
        (alpha * (alpha * T::of(0.5) - y)).exp() * std_normal_cdf(y - alpha)
    }
}

/// CDF of `N(0,1) + Laplace(0, b)`.
///
/// Closed form `Φ(x) − φ(x)·[R(1/b − x) − R(1/b + x)]/2`; the positive half
/// is obtained by reflection so that `F(x) + F(−x) = 1` holds by construction.
pub fn normal_laplace_cdf<T: Real>(x: T, b: T) -> Result<T> {
    if !(b > T::zero()) || !b.is_finite() {
        return Err(domain(format!("laplace scale must be positive and finite, got {b}")));
    }
    if x.is_nan() {
        return Err(domain("normal-laplace cdf of NaN"));
    }
    let alpha = b.recip();
    let lower = |y: T| {
        let v = std_normal_cdf(y) - T::of(0.5) * (mills_term(y, alpha) - mills_term(-y, alpha));
        v.max(T::zero()).min(T::one())
    };
    if x > T::zero() {
        Ok(T::one() - lower(-x))
    } else {
        Ok(lower(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cdf_center_and_symmetry() {
        assert_eq!(std_normal_cdf(0.0_f64), 0.5);
        for &x in &[0.1, 0.7, 1.3, 2.5, 3.9, 6.0, 8.5] {
            let s = std_normal_cdf(x) + std_normal_cdf(-x);
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn cdf_known_values() {
        // Reference values evaluated with 40-digit arithmetic.
        let cases = [
            (1.959964, 0.975000000903557595697504894747),
            (-1.0, 0.158655253931457051414767454368),
            (-3.0, 0.00134989803163009452665181476759),
            (-5.0, 2.86651571879193911673752333463e-7),
            (2.0, 0.977249868051820792799717362833),
            (-2.5, 0.00620966532577613516697810457),
        ];
        for (x, want) in cases {
            assert_abs_diff_eq!(std_normal_cdf(x), want, epsilon = 1e-14);
        }
        // relative accuracy deep in the tail
        let t = std_normal_cdf(-20.0_f64);
        let want = 2.753624118606233695e-89;
        assert!((t / want - 1.0).abs() < 1e-12, "{t}");
    }

    #[test]
    fn erfcx_branches_agree_at_cutoff() {
        // 40-digit references either side of the switch
        let cases = [
            (SERIES_CUTOFF - 1e-4, 0.3216017795076341392),
            (SERIES_CUTOFF, 0.3215854164543175024),
            (SERIES_CUTOFF + 1e-4, 0.3215690549240217690),
        ];
        for (x, want) in cases {
            let got: f64 = erfcx_nonneg(x);
            assert!((got / want - 1.0).abs() < 1e-14, "{x}: {got}");
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(std_normal_quantile(0.5_f64).unwrap(), 0.0);
        assert_abs_diff_eq!(std_normal_quantile(0.975_f64).unwrap(), 1.959964, epsilon = 1e-5);
        assert_abs_diff_eq!(std_normal_quantile(0.01_f64).unwrap(), -2.326348, epsilon = 1e-5);
        assert_abs_diff_eq!(
            std_normal_quantile(0.01_f64).unwrap(),
            -2.326347874040841100885606163,
            epsilon = 1e-13
        );
    }

    #[test]
    fn quantile_rejects_boundary() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(crate::Error::Domain(_))));
        }
    }

    #[test]
    fn quantile_inverts_cdf_on_log_grid() {
        let mut p = 1e-12_f64;
        while p < 0.5 {
            for q in [p, 1.0 - p] {
                let x = std_normal_quantile(q).unwrap();
                assert!((std_normal_cdf(x) - q).abs() <= 1e-10, "p={q}");
            }
            p *= 1.37;
        }
    }

    #[test]
    fn normal_laplace_quadrature_values() {
        // Reference values: adaptive quadrature of ∫ φ(n) G_Laplace(x − n) dn
        // at 40 digits.
        let cases = [
            (1.0, 1.0, 0.740691589990836752715453801967),
            (-2.0, 0.5, 0.0501954073167562749320495065866),
            (3.0, 2.0, 0.873606022673310500279500512117),
            (5.0, 3.0, 0.900167181044286144245476996964),
            (-2.326347874040841100885606163, 1.0, 0.0793509862119399076424361414773),
        ];
        for (x, b, want) in cases {
            assert_abs_diff_eq!(normal_laplace_cdf(x, b).unwrap(), want, epsilon = 1e-12);
        }
        // tails: relative accuracy
        let tail = normal_laplace_cdf(-6.0_f64, 0.1).unwrap();
        assert!((tail / 1.516385541908828505e-9 - 1.0).abs() < 1e-9, "{tail}");
        let tail = normal_laplace_cdf(-8.0_f64, 0.05).unwrap();
        assert!((tail / 7.410704267870848144e-16 - 1.0).abs() < 1e-9, "{tail}");
    }

    #[test]
    fn normal_laplace_limits() {
        for b in [1e-3, 0.5, 1.0, 7.0, 1e3] {
            assert_eq!(normal_laplace_cdf(0.0_f64, b).unwrap(), 0.5);
        }
        for x in [-3.0, -1.0, 0.3, 2.0] {
            let v = normal_laplace_cdf(x, 1e-4).unwrap();
            assert_abs_diff_eq!(v, std_normal_cdf(x), epsilon = 1e-6);
        }
        assert!(normal_laplace_cdf(1.0, 0.0).is_err());
        assert!(normal_laplace_cdf(1.0, -2.0).is_err());
        // huge |x|/b must neither overflow nor produce NaN
        for (x, b) in [(-40.0, 1e-3), (40.0, 1e-3), (-700.0, 0.5), (-40.0, 50.0)] {
            let v = normal_laplace_cdf(x, b).unwrap();
            assert!(v.is_finite() && (0.0..=1.0).contains(&v), "{x} {b} {v}");
        }
    }

    #[test]
    fn f32_instantiation() {
        assert!((std_normal_cdf(1.959964_f32) - 0.975).abs() < 1e-6);
        assert!((std_normal_quantile(0.975_f32).unwrap() - 1.959964).abs() < 1e-4);
        assert!((normal_laplace_cdf(1.0_f32, 1.0).unwrap() - 0.7406916).abs() < 1e-6);
    }
}
