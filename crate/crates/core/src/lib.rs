//! Differentially private multiple testing.
//!
//! P-values are mapped through `Φ⁻¹`, perturbed, and mapped back, which keeps
//! null p-values super-uniform. Reversed peeling picks the indices to release
//! from independent noisy copies, and a BH, BY, Bonferroni or Holm threshold
//! runs on a fresh copy. The math modules are generic over the scalar; the
//! aliases below fix it to `f64`.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod adaptive;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod methods;
pub mod num;
pub mod peeling;
pub mod privacy;
pub mod pvalues;
pub mod simulate;
pub mod stream;
pub mod thresholds;
pub mod transform;

pub use error::{Error, Result};
pub use num::Real;
pub use stream::RandomStream;

pub type PValueSet = pvalues::PValues<f64>;
pub type NoisyMatrix = transform::NoisyMatrix<f64>;
pub type PeelOutcome = peeling::PeelOutcome<f64>;
pub type PrivacyBudget = privacy::PrivacyBudget<f64>;
pub type NoiseScales = privacy::NoiseScales<f64>;
pub type ThresholdFamily = thresholds::ThresholdFamily<f64>;
pub type TestConfig = thresholds::TestConfig<f64>;
pub type RejectionResult = thresholds::RejectionResult<f64>;
pub type AdaptiveConfig = adaptive::AdaptiveConfig<f64>;
pub type DworkParams = baselines::DworkParams<f64>;
