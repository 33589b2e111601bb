//! Super-uniformity-preserving noisy p-values.
//!
//! A p-value is mapped to `Q(p) + Z` and pushed back through `F`, the CDF of
//! `Q(p_U) + Z` for uniform `p_U`. With `Q = Φ⁻¹`, `Q(p_U)` is exactly
//! standard normal, so `F` is `Φ(·/√(1+σ²))` for Gaussian noise and the
//! normal–Laplace CDF for Laplace noise. A uniform input stays uniform and a
//! super-uniform one stays super-uniform.

use crate::error::{domain, invalid, Result};
use crate::num::{normal_laplace_cdf, std_normal_cdf, std_normal_quantile, Real};
use crate::privacy::NoiseScales;
use crate::pvalues::PValues;
use crate::stream::RandomStream;

/// Lowest p-value fed to the quantile transform; the mirror image bounds it above.
pub const P_CLAMP: f64 = 1e-15;

/// Clamps into `[1e-15, 1 − 1e-15]` (wider when the scalar cannot resolve that).
pub fn clamp_probability<T: Real>(p: T) -> T {
    let lo = T::of(P_CLAMP);
    let hi = T::one() - lo.max(T::epsilon());
    p.max(lo).min(hi)
}

/// Keeps a noisy p-value strictly inside `(0, 1)`.
fn open_unit<T: Real>(p: T) -> T {
    p.max(T::min_positive_value()).min(T::one() - T::epsilon() * T::of(0.5))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum QuantileKind {
    /// `Q = Φ⁻¹`.
    #[default]
    Normal,
}

/// The transform `Q` together with the global sensitivity of `Q∘p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform<T> {
    pub kind: QuantileKind,
    pub gs: T,
}

impl<T: Real> Transform<T> {
    pub fn normal(gs: T) -> Result<Self> {
        if !(gs > T::zero()) || !gs.is_finite() {
            return Err(domain(format!("global sensitivity must be positive, got {gs}")));
        }
        Ok(Self { kind: QuantileKind::Normal, gs })
    }

    /// `Q(p)` on the clamped p-value.
    pub fn apply(&self, p: T) -> T {
        match self.kind {
            QuantileKind::Normal => {
                std_normal_quantile(clamp_probability(p)).expect("clamped p is inside (0,1)")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Laplace,
}

/// `Φ((Φ⁻¹(p) + z)/√(1+σ²))` where `z` is a draw from `N(0, σ²)`.
pub fn noisy_p_gaussian<T: Real>(p: T, sigma: T, z: T) -> T {
    let p = clamp_probability(p);
    if sigma == T::zero() && z == T::zero() {
        return p;
    }
    let q = std_normal_quantile(p).expect("clamped p is inside (0,1)");
    gaussian_from_score(q + z, sigma)
}

/// `F(Φ⁻¹(p) + z)` with `F` the CDF of `N(0,1) + Laplace(0, b)`.
pub fn noisy_p_laplace<T: Real>(p: T, b: T, z: T) -> Result<T> {
    let p = clamp_probability(p);
    let q = std_normal_quantile(p).expect("clamped p is inside (0,1)");
    Ok(open_unit(normal_laplace_cdf(q + z, b)?))
}

#[inline]
fn gaussian_from_score<T: Real>(score: T, sigma: T) -> T {
    open_unit(std_normal_cdf(score / (T::one() + sigma * sigma).sqrt()))
}

/// The `(1 + m′) × m` array of noisy p-values.
///
/// Entries are kept on the score scale `Q(p_j) + Z_j^{(k)}`; the noisy
/// p-value is a strictly increasing function of the score within a row, so
/// row-wise minima can be found without evaluating `F`. Rows whose scale is
/// zero carry the clamped p-values themselves.
#[derive(Clone, Debug)]
pub struct NoisyMatrix<T> {
    pvals: Vec<T>,
    scores: Vec<T>,
    m: usize,
    m_peel: usize,
    scales: NoiseScales<T>,
    kind: NoiseKind,
}

impl<T: Real> NoisyMatrix<T> {
    pub fn rows(&self) -> usize {
        self.m_peel + 1
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn m_peel(&self) -> usize {
        self.m_peel
    }

    pub fn scales(&self) -> NoiseScales<T> {
        self.scales
    }

    pub fn noise_kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn row_scale(&self, k: usize) -> T {
        if k == 0 {
            self.scales.sigma0
        } else {
            self.scales.sigma1
        }
    }

    /// Values whose order within row `k` matches the order of its noisy p-values.
    pub fn row_keys(&self, k: usize) -> &[T] {
        assert!(k < self.rows(), "row {k} out of range");
        if self.row_scale(k) == T::zero() {
            &self.pvals
        } else {
            &self.scores[k * self.m..(k + 1) * self.m]
        }
    }

    /// Noisy p-value `p̃_j^{(k)}`.
    pub fn value(&self, k: usize, j: usize) -> T {
        let scale = self.row_scale(k);
        if scale == T::zero() {
            return self.pvals[j];
        }
        let score = self.scores[k * self.m + j];
        match self.kind {
            NoiseKind::Gaussian => gaussian_from_score(score, scale),
            NoiseKind::Laplace => {
                open_unit(normal_laplace_cdf(score, scale).expect("laplace scale is positive"))
            }
        }
    }

    pub fn row(&self, k: usize) -> Vec<T> {
        (0..self.m).map(|j| self.value(k, j)).collect()
    }
}

fn draw_noise<T: Real>(stream: &mut RandomStream, kind: NoiseKind, scale: T) -> T {
    match kind {
        NoiseKind::Gaussian => scale * T::of(stream.normal()),
        NoiseKind::Laplace => T::of(stream.laplace(scale.f64())),
    }
}

/// Builds the first `rows` rows of the noisy matrix. Row `k` draws from
/// `stream.child(k)`, so any prefix of rows is identical across calls.
fn build<T: Real>(
    pvals: &PValues<T>,
    m_peel: usize,
    rows: usize,
    scales: NoiseScales<T>,
    stream: &RandomStream,
    kind: NoiseKind,
) -> Result<NoisyMatrix<T>> {
    if pvals.is_empty() {
        return Err(invalid("no p-values"));
    }
    if !(scales.sigma0 >= T::zero()) || !(scales.sigma1 >= T::zero()) {
        return Err(domain("noise scales must be nonnegative"));
    }
    let m = pvals.len();
    let clamped: Vec<T> = pvals.values().iter().map(|&p| clamp_probability(p)).collect();
    let transform = Transform { kind: QuantileKind::Normal, gs: T::one() };
    let needs_scores = scales.sigma0 > T::zero() || (rows > 1 && scales.sigma1 > T::zero());
    let base: Vec<T> = if needs_scores {
        clamped.iter().map(|&p| transform.apply(p)).collect()
    } else {
        Vec::new()
    };
    let mut scores = vec![T::zero(); if needs_scores { rows * m } else { 0 }];
    for k in 0..rows {
        let scale = if k == 0 { scales.sigma0 } else { scales.sigma1 };
        if scale == T::zero() {
            continue;
        }
        let mut rs = stream.child(k as u64);
        let row = &mut scores[k * m..(k + 1) * m];
        for (s, &q) in row.iter_mut().zip(&base) {
            *s = q + draw_noise(&mut rs, kind, scale);
        }
    }
    Ok(NoisyMatrix { pvals: clamped, scores, m, m_peel, scales, kind })
}

/// Generates the inference row and `m_peel` peeling rows of noisy p-values.
pub fn generate_noisy_matrix<T: Real>(
    pvals: &PValues<T>,
    m_peel: usize,
    scales: NoiseScales<T>,
    stream: &RandomStream,
    kind: NoiseKind,
) -> Result<NoisyMatrix<T>> {
    if m_peel == 0 {
        return Err(domain("peeling number must be at least 1"));
    }
    build(pvals, m_peel, m_peel + 1, scales, stream, kind)
}

/// Only the inference row, drawn exactly as row 0 of [`generate_noisy_matrix`]
/// with the same stream.
pub fn generate_inference_row<T: Real>(
    pvals: &PValues<T>,
    scales: NoiseScales<T>,
    stream: &RandomStream,
    kind: NoiseKind,
) -> Result<Vec<T>> {
    Ok(build(pvals, 0, 1, scales, stream, kind)?.row(0))
}
