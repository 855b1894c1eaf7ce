//! Counting distribution P_T(n) by numerical Laplace inversion.
//!
//! The transform in T of the probability generating function is a geometric series
//! in ξ·f̃(s). Its ξⁿ coefficient `(1 − f̃)f̃ⁿ/s` is the transform of P_T(n), and
//! `f̃ⁿ/s` is the transform of K_n(T), the probability that the n-th event falls
//! inside the window. Both are inverted numerically here.
//!
//! [`convolve_oracle`] computes the same quantities the slow way, by repeated
//! convolution on a grid, and exists to check the inversion.

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::analytics::{renewal_moments, WindowSpec};
use crate::error::{Error, Result};
use crate::model::{pgf_laplace, DistributionKind};

/// Inverted probabilities may stray this far outside [0, 1] before clamping.
pub const PROBABILITY_NOISE_FLOOR: f64 = 1e-8;

const EULER_AVERAGING_TERMS: usize = 11;
/// Largest Fourier-series damping exponent; beyond it round-off outgrows the
/// discretization error in double precision.
const EULER_MAX_DAMPING: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionMethod {
    /// Fixed Talbot contour. Needs transforms that stay bounded as Re s → −∞, so it
    /// cannot invert anything carrying a dead-time delay factor exp(−sD).
    FixedTalbot,
    /// Damped Fourier series along a vertical line, accelerated by Euler
    /// (binomial) averaging of the partial sums.
    FourierEuler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    method: InversionMethod,
    node_count: usize,
    precision_target: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            method: InversionMethod::FourierEuler,
            node_count: 64,
            precision_target: 1e-9,
        }
    }
}

impl InversionConfig {
    pub fn new(method: InversionMethod, node_count: usize, precision_target: f64) -> Result<Self> {
        if node_count < 16 {
            return Err(Error::invalid(
                "node_count",
                format!("must be at least 16, got {node_count}"),
            ));
        }
        if !(1e-12..1.0).contains(&precision_target) {
            return Err(Error::invalid(
                "precision_target",
                format!("must lie in [1e-12, 1), got {precision_target}"),
            ));
        }
        Ok(Self {
            method,
            node_count,
            precision_target,
        })
    }

    /// Fixed Talbot with a node count suited to double precision.
    pub fn talbot() -> Self {
        Self {
            method: InversionMethod::FixedTalbot,
            node_count: 24,
            precision_target: 1e-9,
        }
    }

    pub fn method(&self) -> InversionMethod {
        self.method
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn precision_target(&self) -> f64 {
        self.precision_target
    }
}

/// Inverse Laplace transform of `transform` at time `t`.
///
/// Convergence is judged on a unit scale: the residual estimate must stay below
/// `precision_target · max(|f(t)|, 1)`. Inverting a density right at its jump
/// (t = D for the dead-time law) returns the midpoint of the two one-sided limits.
pub fn invert<F>(transform: F, t: f64, cfg: &InversionConfig) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("inversion needs t > 0, got {t}")));
    }
    let (value, residual) = match cfg.method {
        InversionMethod::FourierEuler => fourier_euler(&transform, t, cfg)?,
        InversionMethod::FixedTalbot => fixed_talbot(&transform, t, cfg)?,
    };
    let tolerance = cfg.precision_target * value.abs().max(1.0);
    if !value.is_finite() || residual.is_nan() || residual > tolerance {
        return Err(Error::InversionDiverged { t, residual, tolerance });
    }
    Ok(value)
}

fn fourier_euler<F>(transform: &F, t: f64, cfg: &InversionConfig) -> Result<(f64, f64)>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let damping = (-cfg.precision_target.ln() + 1.0).min(EULER_MAX_DAMPING);
    let m = EULER_AVERAGING_TERMS;
    // one evaluation at k = 0, then n + m alternating terms
    let n = cfg.node_count - m - 1;
    let x = damping / (2.0 * t);
    let h = std::f64::consts::PI / t;

    let mut partial = Vec::with_capacity(n + m + 1);
    let mut sum = 0.5 * transform(Complex64::new(x, 0.0))?.re;
    partial.push(sum);
    for k in 1..=(n + m) {
        let term = transform(Complex64::new(x, k as f64 * h))?.re;
        sum += if k % 2 == 0 { term } else { -term };
        partial.push(sum);
    }

    let weights = binomial_weights(m);
    let average = |start: usize| -> f64 { weights.iter().enumerate().map(|(k, w)| w * partial[start + k]).sum() };
    let scale = damping.exp().sqrt() / t;
    let value = scale * average(n);
    let residual = scale * (average(n) - average(n - 1)).abs();
    Ok((value, residual))
}

/// C(m, k)/2^m for k = 0..=m.
fn binomial_weights(m: usize) -> Vec<f64> {
    let mut w = vec![1.0f64; m + 1];
    for k in 1..=m {
        w[k] = w[k - 1] * (m - k + 1) as f64 / k as f64;
    }
    let norm = 2f64.powi(m as i32);
    w.iter().map(|c| c / norm).collect()
}

fn talbot_sum<F>(transform: &F, t: f64, nodes: usize) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let m = nodes as f64;
    let r = 2.0 * m / (5.0 * t);
    let mut acc = 0.5 * transform(Complex64::new(r, 0.0))?.re * (r * t).exp();
    for k in 1..nodes {
        let theta = k as f64 * std::f64::consts::PI / m;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let term = (s * t).exp() * transform(s)? * Complex64::new(1.0, sigma);
        acc += term.re;
    }
    Ok(r / m * acc)
}

fn fixed_talbot<F>(transform: &F, t: f64, cfg: &InversionConfig) -> Result<(f64, f64)>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let value = talbot_sum(transform, t, cfg.node_count)?;
    let coarse = talbot_sum(transform, t, cfg.node_count - cfg.node_count / 4)?;
    Ok((value, (value - coarse).abs()))
}

fn check_s(s: Complex64) -> Result<()> {
    if s.norm() == 0.0 {
        return Err(Error::Domain("counting transforms have a pole at s = 0"));
    }
    Ok(())
}

/// Transform of K_n(T): f̃(s)ⁿ/s.
pub fn k_n_transform(n: usize, s: Complex64, kind: &DistributionKind) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::invalid("n", "K_n is defined for n >= 1"));
    }
    check_s(s)?;
    Ok(kind.laplace(s)?.powi(n as i32) / s)
}

/// Transform of P_T(n): (1 − f̃(s))·f̃(s)ⁿ/s, the ξⁿ coefficient of the PGF transform.
pub fn counting_prob_transform(n: usize, s: Complex64, kind: &DistributionKind) -> Result<Complex64> {
    check_s(s)?;
    let f = kind.laplace(s)?;
    Ok((1.0 - f) * f.powi(n as i32) / s)
}

/// K_n(T), the probability that at least n events fall in [0, T].
///
/// With dead time, f̃ⁿ = e^{−snD}·hⁿ where h is the undelayed transform, so K_n(T) is
/// the inverse of hⁿ/s at T − nD. Inverting that instead keeps the kinks at multiples
/// of D away from the Fourier series, which converges slowly across them.
pub fn k_n(kind: &DistributionKind, n: usize, w: &WindowSpec, cfg: &InversionConfig) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let delay = kind.deadtime();
    if delay == 0.0 {
        return invert(|s| k_n_transform(n, s, kind), w.duration(), cfg);
    }
    let remaining = w.duration() - n as f64 * delay;
    if remaining <= 0.0 {
        return Ok(0.0);
    }
    let law = kind.phase_law();
    invert(
        |s| {
            check_s(s)?;
            Ok(law.laplace_undelayed(s)?.powi(n as i32) / s)
        },
        remaining,
        cfg,
    )
}

/// P_T(n). Without dead time this inverts [`counting_prob_transform`]; with it, the
/// difference K_n − K_{n+1} of delay-factored inversions (see [`k_n`]).
pub fn counting_prob(kind: &DistributionKind, n: usize, w: &WindowSpec, cfg: &InversionConfig) -> Result<f64> {
    if kind.deadtime() == 0.0 {
        invert(|s| counting_prob_transform(n, s, kind), w.duration(), cfg)
    } else {
        Ok(k_n(kind, n, w, cfg)? - k_n(kind, n + 1, w, cfg)?)
    }
}

/// G(T, ξ) by direct inversion of the PGF transform.
pub fn pgf(kind: &DistributionKind, xi: f64, w: &WindowSpec, cfg: &InversionConfig) -> Result<f64> {
    check_method(kind, cfg)?;
    let xi = Complex64::new(xi, 0.0);
    invert(|s| pgf_laplace(s, xi, kind.laplace(s)?), w.duration(), cfg)
}

fn check_method(kind: &DistributionKind, cfg: &InversionConfig) -> Result<()> {
    if cfg.method == InversionMethod::FixedTalbot && kind.deadtime() > 0.0 {
        return Err(Error::Unsupported(
            "the Talbot contour cannot invert the dead-time PGF transform; use the Fourier–Euler method".into(),
        ));
    }
    Ok(())
}

/// P_T(n) for n = 0..=n_max in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingDistribution {
    pub window: WindowSpec,
    /// Clamped to [0, 1].
    pub probs: Vec<f64>,
    /// Values as returned by the inversion, before clamping.
    pub raw: Vec<f64>,
    /// 1 − Σ probs.
    pub tail_mass: f64,
}

impl CountingDistribution {
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - mean).powi(2) * p)
            .sum()
    }

    /// Σ probs[n]·ξⁿ.
    pub fn pgf(&self, xi: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, p| acc * xi + p)
    }
}

/// A truncation point leaving negligible tail mass: five mean counts' worth of
/// intervals plus a margin for short windows.
pub fn suggested_n_max(kind: &DistributionKind, w: &WindowSpec) -> usize {
    (5.0 * w.duration() / renewal_moments(kind).m1).ceil() as usize + 10
}

/// P_T(n) for every n up to `n_max`, one inversion per n.
pub fn counting_distribution(
    kind: &DistributionKind,
    w: &WindowSpec,
    n_max: usize,
    cfg: &InversionConfig,
) -> Result<CountingDistribution> {
    let m1 = renewal_moments(kind).m1;
    let recommended = (3.0 * w.duration() / m1).ceil();
    if (n_max as f64) < recommended {
        warn!("n_max = {n_max} is below the recommended {recommended}; expect visible tail mass");
    }
    let raw = (0..=n_max)
        .into_par_iter()
        .map(|n| counting_prob(kind, n, w, cfg).map_err(|e| Error::CountingFailed { n, source: Box::new(e) }))
        .collect::<Result<Vec<f64>>>()?;
    for (n, &p) in raw.iter().enumerate() {
        if !(-PROBABILITY_NOISE_FLOOR..=1.0 + PROBABILITY_NOISE_FLOOR).contains(&p) {
            return Err(Error::ProbabilityOutOfRange { n, value: p });
        }
    }
    let probs: Vec<f64> = raw.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let tail_mass = 1.0 - probs.iter().sum::<f64>();
    Ok(CountingDistribution {
        window: *w,
        probs,
        raw,
        tail_mass,
    })
}

/// Mean and variance of a distribution compared with the finite-window closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentResiduals {
    pub mean_relative: f64,
    pub variance_relative: f64,
}

/// Relative moment residuals against the finite-window closed forms. The lossy law is
/// the cycle law with rates μm/2 and μp/2, so it is covered too; dead time is not.
pub fn moment_residuals(kind: &DistributionKind, dist: &CountingDistribution) -> Option<MomentResiduals> {
    if kind.deadtime() > 0.0 {
        return None;
    }
    let law = kind.phase_law();
    let rates = crate::model::RateParams::new(law.slow_rate(), law.fast_rate()).ok()?;
    let mean = crate::analytics::mean_finite(&rates, &dist.window);
    let var = crate::analytics::var_finite(&rates, &dist.window);
    Some(MomentResiduals {
        mean_relative: (dist.mean() - mean) / mean,
        variance_relative: (dist.variance() - var) / var,
    })
}

/// The n-fold convolution of an interval density tabulated on a uniform grid.
///
/// Values are stored for `t = offset + i·step`; the density vanishes below `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    pub offset: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    /// Linear interpolation; zero outside the tabulated range.
    pub fn value_at(&self, t: f64) -> f64 {
        let u = (t - self.offset) / self.step;
        if u < 0.0 || u > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = u.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.values[i];
        }
        let frac = u - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Trapezoidal ∫ from the offset to `t`.
    pub fn integral_to(&self, t: f64) -> f64 {
        let u = (t - self.offset) / self.step;
        if u <= 0.0 {
            return 0.0;
        }
        let last = self.values.len() - 1;
        let whole = (u.floor() as usize).min(last);
        let mut acc = 0.0;
        for i in 0..whole {
            acc += 0.5 * (self.values[i] + self.values[i + 1]);
        }
        acc *= self.step;
        if whole < last {
            let frac = u - whole as f64;
            let end = self.values[whole] * (1.0 - frac) + self.values[whole + 1] * frac;
            acc += 0.5 * (self.values[whole] + end) * frac * self.step;
        }
        acc
    }

    pub fn total_mass(&self) -> f64 {
        self.integral_to(self.offset + (self.values.len() - 1) as f64 * self.step)
    }
}

/// n-fold convolution of the interval density by repeated trapezoidal convolution.
///
/// The dead-time delay is factored out first: the undelayed density is convolved and
/// the result shifted by n·D, so the jump at D never sits inside a quadrature cell.
pub fn convolve_oracle(kind: &DistributionKind, n: usize, grid_step: f64, t_max: f64) -> Result<TabulatedDensity> {
    if !(1..=8).contains(&n) {
        return Err(Error::invalid("n", format!("oracle supports 1 <= n <= 8, got {n}")));
    }
    if !(grid_step > 0.0 && t_max > grid_step) {
        return Err(Error::invalid("grid", "need 0 < grid_step < t_max"));
    }
    let m1 = renewal_moments(kind).m1;
    if grid_step > m1 / 50.0 {
        warn!("grid step {grid_step} under-resolves the density (mean interval {m1})");
    }
    let delay = kind.deadtime();
    let cells = (t_max / grid_step).ceil() as usize;
    let base: Vec<f64> = (0..=cells).map(|i| kind.pdf(delay + i as f64 * grid_step)).collect();
    let mut current = base.clone();
    for _ in 1..n {
        current = (0..=cells)
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                let mut acc = 0.5 * (base[0] * current[i] + base[i] * current[0]);
                for j in 1..i {
                    acc += base[j] * current[i - j];
                }
                acc * grid_step
            })
            .collect();
    }
    Ok(TabulatedDensity {
        offset: n as f64 * delay,
        step: grid_step,
        values: current,
    })
}
