//! Monte Carlo engine: scenario files, data generation, replicated runs of
//! named methods, and the large-`m` power-loss oracle for BH.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::Deserialize;

use crate::adaptive::AdaptiveConfig;
use crate::baselines::classic_procedure;
use crate::error::{invalid, Error, Result};
use crate::methods::{run_method, Method, MethodSettings};
use crate::num::{std_normal_cdf, std_normal_quantile};
use crate::privacy::{calibrate_peeling_scales, experiment_mu};
use crate::pvalues::PValues;
use crate::stream::{label_of, RandomStream};
use crate::thresholds::{truncated_on_row, FamilyKind, StepRule, ThresholdFamily};
use crate::transform::{generate_inference_row, NoiseKind};

const DATA_STREAM: u64 = 0xDA7A;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NullMode {
    /// Every null has `θ = 0`, so its p-value is uniform.
    Uniform,
    /// 60% of nulls have `θ = 0`, the rest `θ ~ U(−0.3, 0)`.
    Conservative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dependence {
    Independent,
    /// Equicorrelated blocks of `block_size` statistics with correlation `rho`.
    Block { block_size: usize, rho: f64 },
}

/// A simulation design plus the methods to compare on it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimScenario {
    pub m: usize,
    pub m1: usize,
    pub theta_signal: f64,
    pub null_mode: NullMode,
    pub dependence: Dependence,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub settings: MethodSettings,
    /// Sizes used when the full-scale flag is given.
    pub full_m: usize,
    pub full_m1: usize,
}

impl SimScenario {
    /// `m = 5000`, `m₁ = 50`, `θ = 4`, independent uniform nulls, 200 reps,
    /// `η = 1e-4`, `ε = 0.5`, `δ = 0.001`, `m′ = 200`, `m̃ = 100`.
    pub fn desk(methods: Vec<Method>) -> Self {
        Self {
            m: 5000,
            m1: 50,
            theta_signal: 4.0,
            null_mode: NullMode::Uniform,
            dependence: Dependence::Independent,
            reps: 200,
            seed: 2024,
            methods,
            settings: MethodSettings::new(0.1),
            full_m: 20_000,
            full_m1: 100,
        }
    }

    /// Switches to the full-size design.
    pub fn full_scale(mut self) -> Self {
        self.m = self.full_m;
        self.m1 = self.full_m1;
        self
    }

    /// Every violated constraint, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.m == 0 {
            bad.push("m must be at least 1".to_string());
        }
        if self.m1 > self.m {
            bad.push(format!("m1 = {} exceeds m = {}", self.m1, self.m));
        }
        if !self.theta_signal.is_finite() {
            bad.push("theta must be finite".to_string());
        }
        if let Dependence::Block { block_size, rho } = self.dependence {
            if block_size == 0 || !self.m.is_multiple_of(block_size) {
                bad.push(format!("block_size = {block_size} must divide m = {}", self.m));
            }
            if !(rho.abs() < 1.0) {
                bad.push(format!("block_rho must satisfy |rho| < 1, got {rho}"));
            }
            if rho < 0.0 && block_size > 1 && rho < -1.0 / (block_size as f64 - 1.0) {
                bad.push(format!("block_rho = {rho} is not a valid equicorrelation for blocks of {block_size}"));
            }
        }
        if self.reps == 0 {
            bad.push("reps must be at least 1".to_string());
        }
        if self.methods.is_empty() {
            bad.push("methods must name at least one method".to_string());
        }
        let s = &self.settings;
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            bad.push(format!("alpha must be in (0,1), got {}", s.alpha));
        }
        if !(s.eps > 0.0) || !s.eps.is_finite() {
            bad.push(format!("eps must be positive, got {}", s.eps));
        }
        if !(s.delta > 0.0 && s.delta < 1.0) {
            bad.push(format!("delta must be in (0,1), got {}", s.delta));
        }
        if let Some(mu) = s.mu {
            if !(mu > 0.0) || !mu.is_finite() {
                bad.push(format!("mu must be positive, got {mu}"));
            }
        }
        if !(s.gs > 0.0) || !s.gs.is_finite() {
            bad.push(format!("eta must be positive, got {}", s.gs));
        }
        if let Some(nu) = s.nu {
            if !(nu > 0.0 && nu < 1.0) {
                bad.push(format!("nu must be in (0,1), got {nu}"));
            }
        }
        if s.m_peel == 0 || s.m_peel > self.m {
            bad.push(format!("m_peel must be in 1..=m, got {}", s.m_peel));
        }
        if let Err(e) = s.adaptive.validate(s.alpha) {
            bad.push(e.to_string());
        }
        if s.noise == NoiseKind::Laplace && s.mu.is_some() {
            bad.push("mu cannot be combined with laplace noise, which is calibrated from eps and delta".to_string());
        }
        bad
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(bad))
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Scenario(vec![e.message().to_string()]))?;
        file.into_scenario()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// On-disk scenario: flat keys, everything but `m`, `m1` and `methods` optional.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    m: usize,
    m1: usize,
    methods: Vec<String>,
    theta: Option<f64>,
    null_mode: Option<String>,
    dependence: Option<String>,
    block_size: Option<usize>,
    block_rho: Option<f64>,
    alpha: Option<f64>,
    reps: Option<usize>,
    seed: Option<u64>,
    eps: Option<f64>,
    delta: Option<f64>,
    mu: Option<f64>,
    eta: Option<f64>,
    nu: Option<f64>,
    m_peel: Option<usize>,
    noise: Option<String>,
    m_tilde: Option<usize>,
    tau: Option<f64>,
    c0: Option<f64>,
    rho: Option<f64>,
    c: Option<f64>,
    full_m: Option<usize>,
    full_m1: Option<usize>,
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<SimScenario> {
        let mut bad = Vec::new();
        let mut methods = Vec::new();
        for name in &self.methods {
            match name.parse::<Method>() {
                Ok(m) => methods.push(m),
                Err(e) => bad.push(e.to_string()),
            }
        }
        let null_mode = match self.null_mode.as_deref().unwrap_or("uniform") {
            "uniform" => NullMode::Uniform,
            "conservative" => NullMode::Conservative,
            other => {
                bad.push(format!("null_mode must be `uniform` or `conservative`, got `{other}`"));
                NullMode::Uniform
            }
        };
        let block_size = self.block_size.unwrap_or(200);
        let block_rho = self.block_rho.unwrap_or(0.6);
        let dependence = match self.dependence.as_deref().unwrap_or("independent") {
            "independent" => Dependence::Independent,
            "block" => Dependence::Block { block_size, rho: block_rho },
            other => {
                bad.push(format!("dependence must be `independent` or `block`, got `{other}`"));
                Dependence::Independent
            }
        };
        let noise = match self.noise.as_deref().unwrap_or("gaussian") {
            "gaussian" => NoiseKind::Gaussian,
            "laplace" => NoiseKind::Laplace,
            other => {
                bad.push(format!("noise must be `gaussian` or `laplace`, got `{other}`"));
                NoiseKind::Gaussian
            }
        };
        let alpha = self.alpha.unwrap_or(0.1);
        let mut settings = MethodSettings::new(alpha);
        settings.eps = self.eps.unwrap_or(settings.eps);
        settings.delta = self.delta.unwrap_or(settings.delta);
        settings.mu = self.mu;
        settings.gs = self.eta.unwrap_or(settings.gs);
        settings.nu = self.nu;
        settings.m_peel = self.m_peel.unwrap_or(settings.m_peel);
        settings.noise = noise;
        let mut adaptive = AdaptiveConfig::new(alpha);
        adaptive.m_tilde = self.m_tilde.unwrap_or(adaptive.m_tilde);
        adaptive.tau = self.tau.unwrap_or(adaptive.tau);
        adaptive.c0 = self.c0.unwrap_or(adaptive.c0);
        adaptive.rho = self.rho.unwrap_or(adaptive.rho);
        adaptive.c = self.c.unwrap_or(adaptive.c);
        settings.adaptive = adaptive;
        let scenario = SimScenario {
            m: self.m,
            m1: self.m1,
            theta_signal: self.theta.unwrap_or(4.0),
            null_mode,
            dependence,
            reps: self.reps.unwrap_or(200),
            seed: self.seed.unwrap_or(2024),
            methods,
            settings,
            full_m: self.full_m.unwrap_or(20_000),
            full_m1: self.full_m1.unwrap_or(100),
        };
        bad.extend(scenario.violations());
        if bad.is_empty() {
            Ok(scenario)
        } else {
            bad.dedup();
            Err(Error::Scenario(bad))
        }
    }
}

/// Draws one data set: test statistics `T ~ N(0, Σ)`, `p_j = Φ(T_j − θ_j)`,
/// labels marking the `m₁` signals.
pub fn gen_pvalues(scenario: &SimScenario, stream: &RandomStream) -> Result<PValues<f64>> {
    scenario.validate()?;
    let m = scenario.m;
    let mut rng = stream.child(1);
    let mut labels = vec![false; m];
    for j in index::sample(&mut rng, m, scenario.m1) {
        labels[j] = true;
    }
    let mut theta = vec![0.0; m];
    for (t, &s) in theta.iter_mut().zip(&labels) {
        if s {
            *t = scenario.theta_signal;
        }
    }
    if scenario.null_mode == NullMode::Conservative {
        let nulls: Vec<usize> = (0..m).filter(|&j| !labels[j]).collect();
        let shifted = nulls.len() - (0.6 * nulls.len() as f64).round() as usize;
        let mut rng = stream.child(2);
        for pos in index::sample(&mut rng, nulls.len(), shifted) {
            theta[nulls[pos]] = -0.3 * rng.uniform();
        }
    }
    let stats = gen_statistics(m, scenario.dependence, &stream.child(3));
    let p = stats.iter().zip(&theta).map(|(t, th)| std_normal_cdf(t - th)).collect();
    PValues::with_labels(p, labels)
}

fn gen_statistics(m: usize, dependence: Dependence, stream: &RandomStream) -> Vec<f64> {
    let mut rng = stream.clone();
    match dependence {
        Dependence::Independent => (0..m).map(|_| rng.normal()).collect(),
        Dependence::Block { block_size, rho } => {
            let n = block_size as f64;
            let mut out = Vec::with_capacity(m);
            for _ in 0..m / block_size {
                if rho >= 0.0 {
                    let common = rng.normal();
                    out.extend((0..block_size).map(|_| rho.sqrt() * common + (1.0 - rho).sqrt() * rng.normal()));
                } else {
                    // a·(e_j − ē) + b·ē with a² = 1 − ρ and b² = 1 + (n − 1)ρ
                    let e: Vec<f64> = (0..block_size).map(|_| rng.normal()).collect();
                    let mean = e.iter().sum::<f64>() / n;
                    let (a, b) = ((1.0 - rho).sqrt(), (1.0 + (n - 1.0) * rho).max(0.0).sqrt());
                    out.extend(e.iter().map(|&x| a * (x - mean) + b * mean));
                }
            }
            out
        }
    }
}

/// Mean and Monte Carlo standard error (`sd/√reps`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodMetrics {
    pub method: Method,
    pub fdr: MetricSummary,
    pub fwer: MetricSummary,
    pub power: MetricSummary,
    pub rejections: MetricSummary,
    /// Rejected nulls whose raw p-value exceeds `τ`.
    pub v_tau: MetricSummary,
    /// `V_τ/(R ∨ 1)`.
    pub v_tau_ratio: MetricSummary,
}

impl MethodMetrics {
    fn metrics(&self) -> [(&'static str, MetricSummary); 6] {
        [
            ("fdr", self.fdr),
            ("fwer", self.fwer),
            ("power", self.power),
            ("rejections", self.rejections),
            ("v_tau", self.v_tau),
            ("v_tau_ratio", self.v_tau_ratio),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub reps: usize,
    pub rows: Vec<MethodMetrics>,
}

impl MetricsTable {
    pub fn get(&self, method: Method) -> Option<&MethodMetrics> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// CSV with header `method,metric,mean,stderr,reps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,metric,mean,stderr,reps\n");
        for row in &self.rows {
            for (name, s) in row.metrics() {
                writeln!(out, "{},{},{},{},{}", row.method, name, s.mean, s.stderr, self.reps).expect("write to string");
            }
        }
        out
    }
}

/// Per-replicate error and power counts for one method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepMetrics {
    pub fdp: f64,
    pub any_false: f64,
    pub tdp: f64,
    pub rejections: f64,
    pub v_tau: f64,
    pub v_tau_ratio: f64,
}

/// Error and power counts of a rejection set against ground truth.
pub fn rep_metrics(rejected: &[usize], pvals: &PValues<f64>, tau: f64) -> Result<RepMetrics> {
    let labels = pvals.labels().ok_or_else(|| invalid("metrics need labelled p-values"))?;
    let m1 = labels.iter().filter(|&&s| s).count();
    let r = rejected.len();
    let v = rejected.iter().filter(|&&j| !labels[j]).count();
    let v_tau = rejected.iter().filter(|&&j| !labels[j] && pvals.values()[j] > tau).count();
    let denom = r.max(1) as f64;
    Ok(RepMetrics {
        fdp: v as f64 / denom,
        any_false: if v > 0 { 1.0 } else { 0.0 },
        tdp: (r - v) as f64 / m1.max(1) as f64,
        rejections: r as f64,
        v_tau: v_tau as f64,
        v_tau_ratio: v_tau as f64 / denom,
    })
}

fn summarize(xs: impl Iterator<Item = f64> + Clone, n: usize) -> MetricSummary {
    let mean = xs.clone().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    MetricSummary { mean, stderr }
}

/// Runs one replicate: fresh data, then every method on its own stream.
pub fn run_replicate(scenario: &SimScenario, rep: usize) -> Result<Vec<RepMetrics>> {
    let root = RandomStream::new(scenario.seed, rep as u64);
    let data = gen_pvalues(scenario, &root.child(DATA_STREAM))?;
    scenario
        .methods
        .iter()
        .map(|&method| {
            let out = run_method(method, &data, &scenario.settings, &root.child(label_of(method.name())))?;
            rep_metrics(&out.rejected, &data, scenario.settings.adaptive.tau)
        })
        .collect()
}

/// Replicates in parallel; the summary is assembled in replicate order, so it
/// does not depend on scheduling or thread count.
pub fn run_replications(scenario: &SimScenario) -> Result<MetricsTable> {
    scenario.validate()?;
    let per_rep: Vec<Vec<RepMetrics>> =
        (0..scenario.reps).into_par_iter().map(|r| run_replicate(scenario, r)).collect::<Result<_>>()?;
    let n = scenario.reps;
    let rows = scenario
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let col = |f: fn(&RepMetrics) -> f64| summarize(per_rep.iter().map(move |r| f(&r[i])), n);
            MethodMetrics {
                method,
                fdr: col(|r| r.fdp),
                fwer: col(|r| r.any_false),
                power: col(|r| r.tdp),
                rejections: col(|r| r.rejections),
                v_tau: col(|r| r.v_tau),
                v_tau_ratio: col(|r| r.v_tau_ratio),
            }
        })
        .collect();
    Ok(MetricsTable { reps: n, rows })
}

/// Limit of the BH threshold and true discovery proportion when a fraction
/// `ω₁` of p-values follow `F₁(p) = Φ(Φ⁻¹(p) + s_eff)` and the rest are
/// uniform, with `s_eff = |signal|/√(1 + noise_inflation)`.
///
/// `λ*` is the largest root of `F₁(p) = βp` with `β = (1 − αω₀)/(αω₁)`.
pub fn asymptotic_bh_threshold(omega1: f64, alpha: f64, signal: f64, noise_inflation: f64) -> Result<(f64, f64)> {
    if !(omega1 > 0.0 && omega1 < 1.0) {
        return Err(Error::Domain(format!("omega1 must be in (0,1), got {omega1}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    if !(signal.abs() > 0.0) || !signal.is_finite() {
        return Err(Error::Domain(format!("signal must be nonzero and finite, got {signal}")));
    }
    if !(noise_inflation >= 0.0) {
        return Err(Error::Domain(format!("noise inflation must be nonnegative, got {noise_inflation}")));
    }
    let beta = (1.0 - alpha * (1.0 - omega1)) / (alpha * omega1);
    if beta <= 1.0 {
        return Err(Error::NoRoot(format!("beta = {beta} <= 1: every hypothesis is rejected in the limit")));
    }
    let s_eff = signal.abs() / (1.0 + noise_inflation).sqrt();
    let f1 = |p: f64| std_normal_cdf(std_normal_quantile(p).expect("p inside (0,1)") + s_eff);
    let g = |p: f64| f1(p) - beta * p;
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-15);
    if !(g(lo) > 0.0) {
        return Err(Error::NoRoot(format!("F1(p) - {beta} p has no positive root above 1e-12")));
    }
    // g is concave with g(0) = 0, so the sign change on (lo, hi) is the largest root
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    let root = 0.5 * (lo + hi);
    Ok((root, f1(root)))
}

/// Mixture design for the large-`m` power-loss comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdpScenario {
    pub m: usize,
    pub omega1: f64,
    pub alpha: f64,
    pub signal: f64,
    pub mu: f64,
    pub gs: f64,
    pub m_peel: usize,
}

impl TdpScenario {
    /// `m = 10⁵`, `ω₁ = 0.1`, `α = 0.2`, signal 2, and the noise level of
    /// `μ = 4ε/√(10 ln(1/δ))` with `ε = 0.5`, `δ = 0.001`, `GS = 1e-4`, `m′ = 200`.
    pub fn reference() -> Self {
        Self {
            m: 100_000,
            omega1: 0.1,
            alpha: 0.2,
            signal: 2.0,
            mu: experiment_mu(0.5, 0.001).expect("valid constants"),
            gs: 1e-4,
            m_peel: 200,
        }
    }

    /// `σ₀²` of the calibrated inference row.
    pub fn noise_inflation(&self) -> Result<f64> {
        let s = calibrate_peeling_scales(self.mu, self.gs, self.m_peel)?;
        Ok(s.sigma0 * s.sigma0)
    }

    /// `F₁(λ*) − F̃₁(λ̃*)`.
    pub fn asymptotic_gap(&self) -> Result<f64> {
        let (_, clean) = asymptotic_bh_threshold(self.omega1, self.alpha, self.signal, 0.0)?;
        let (_, noisy) = asymptotic_bh_threshold(self.omega1, self.alpha, self.signal, self.noise_inflation()?)?;
        Ok(clean - noisy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdpGap {
    /// `TDP(BH on raw p) − TDP(BH on the noisy inference row)`.
    pub gap: f64,
    pub signals: usize,
    /// Set when no signal was drawn; the gap is then reported as 0.
    pub no_signals: bool,
}

/// One replicate of the mixture design: BH on the raw p-values against the
/// no-peeling test on the noisy inference row of the same data.
pub fn empirical_tdp_gap(scenario: &TdpScenario, stream: &RandomStream) -> Result<TdpGap> {
    let m = scenario.m;
    let mut rng = stream.child(1);
    let labels: Vec<bool> = (0..m).map(|_| rng.uniform() < scenario.omega1).collect();
    let mut stat_rng = stream.child(2);
    let p: Vec<f64> = labels
        .iter()
        .map(|&s| std_normal_cdf(stat_rng.normal() - if s { scenario.signal.abs() } else { 0.0 }))
        .collect();
    let pvals = PValues::with_labels(p, labels.clone())?;
    let signals = labels.iter().filter(|&&s| s).count();
    if signals == 0 {
        return Ok(TdpGap { gap: 0.0, signals, no_signals: true });
    }
    let scales = calibrate_peeling_scales(scenario.mu, scenario.gs, scenario.m_peel)?;
    let row0 = generate_inference_row(&pvals, scales, &stream.child(3), NoiseKind::Gaussian)?;
    let family = ThresholdFamily::new(FamilyKind::Bh, scenario.alpha, m)?;
    let noisy = truncated_on_row(&row0, scales, &family, StepRule::StepUp)?;
    let clean = classic_procedure(&pvals, FamilyKind::Bh, scenario.alpha)?;
    let tdp = |r: &[usize]| r.iter().filter(|&&j| labels[j]).count() as f64 / signals as f64;
    Ok(TdpGap { gap: tdp(&clean) - tdp(&noisy.rejected), signals, no_signals: false })
}
