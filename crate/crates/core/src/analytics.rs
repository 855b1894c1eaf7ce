//! Closed-form counting statistics: finite-window and asymptotic moments,
//! Fano factors for the three detection models, saturation and dead-time rate
//! relations, and Fano-factor sweeps over the pump-to-decay ratio.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DetectorParams, DistributionKind, Efficiency, PumpParams, RateParams};

/// Length T of one counting window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    duration: f64,
}

impl WindowSpec {
    pub fn new(duration: f64) -> Result<Self> {
        if !duration.is_finite() || duration <= 0.0 {
            return Err(Error::invalid(
                "window",
                format!("duration must be positive and finite, got {duration}"),
            ));
        }
        Ok(Self { duration })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }
}

/// First two raw moments of the inter-detection interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair {
    pub m1: f64,
    pub m2: f64,
}

impl MomentPair {
    pub fn variance(&self) -> f64 {
        self.m2 - self.m1 * self.m1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationResult {
    pub rate_asymptotic: f64,
    pub rate_saturation: f64,
    pub power_saturation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FanoPoint {
    pub ratio: f64,
    pub fano: f64,
    /// Present for Monte Carlo estimates.
    pub stderr: Option<f64>,
}

/// ξ∞ evaluated along a grid of μ1/μ2 at fixed μ2, η and D/τ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FanoCurve {
    pub eta: f64,
    pub deadtime_over_tau: f64,
    pub points: Vec<FanoPoint>,
}

impl FanoCurve {
    /// Index of the smallest Fano value on the grid.
    pub fn argmin(&self) -> usize {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.fano.total_cmp(&b.1.fano))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn minimum(&self) -> FanoPoint {
        self.points[self.argmin()]
    }

    /// Grid points that are strict local minima away from both ends.
    pub fn interior_minima(&self) -> Vec<usize> {
        let f: Vec<f64> = self.points.iter().map(|p| p.fano).collect();
        (1..f.len().saturating_sub(1))
            .filter(|&i| f[i] < f[i - 1] && f[i] <= f[i + 1])
            .collect()
    }

    /// Whether some interior local minimum dips below the left-plateau value.
    pub fn has_interior_minimum_below_left_plateau(&self) -> bool {
        let Some(left) = self.points.first().map(|p| p.fano) else {
            return false;
        };
        self.interior_minima().iter().any(|&i| self.points[i].fano < left)
    }
}

/// `exp(-x) + x - 1` without cancellation for small x.
fn exp_excess(x: f64) -> f64 {
    if x < 1e-3 {
        // x²/2 − x³/6 + x⁴/24 − x⁵/120
        x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    } else {
        (-x).exp_m1() + x
    }
}

fn require_ideal(kind: &DistributionKind) -> Result<()> {
    match kind {
        DistributionKind::IdealCycle(_) => Ok(()),
        _ => Err(Error::Unsupported(
            "finite-window closed forms exist for the ideal cycle only".into(),
        )),
    }
}

/// Mean count in a window of length T opened at pump activation.
pub fn mean_finite(p: &RateParams, w: &WindowSpec) -> f64 {
    let (a, b) = (p.mu1(), p.mu2());
    let sum = a + b;
    a * b / (sum * sum) * exp_excess(sum * w.duration())
}

/// Count variance in a window of length T opened at pump activation.
pub fn var_finite(p: &RateParams, w: &WindowSpec) -> f64 {
    let (a, b, t) = (p.mu1(), p.mu2(), w.duration());
    let sum = a + b;
    let e1 = (-sum * t).exp();
    let e2 = e1 * e1;
    // the bracketed expression multiplied through by exp(−2T(μ1+μ2))
    let steady = t * a.powi(3) + (a * a + b * b) * (-1.0 + t * b) + a * b * (3.0 + t * b);
    let transient = b * b + a * a * (1.0 - 4.0 * t * b) - 2.0 * a * b * (1.0 + 2.0 * t * b);
    a * b / sum.powi(4) * (-a * b * e2 + steady + e1 * transient)
}

/// The finite-window mean with its exponentially decaying transient dropped:
/// μ1μ2/(μ1+μ2)²·((μ1+μ2)T − 1). Grows with slope [`mean_asymptotic`]/T.
pub fn mean_long_window(p: &RateParams, w: &WindowSpec) -> f64 {
    let (a, b) = (p.mu1(), p.mu2());
    let sum = a + b;
    a * b / (sum * sum) * (sum * w.duration() - 1.0)
}

/// The finite-window variance with its exponentially decaying transients dropped.
/// Grows with slope [`var_asymptotic`]/T.
pub fn var_long_window(p: &RateParams, w: &WindowSpec) -> f64 {
    let (a, b, t) = (p.mu1(), p.mu2(), w.duration());
    let steady = t * a.powi(3) + (a * a + b * b) * (-1.0 + t * b) + a * b * (3.0 + t * b);
    a * b / (a + b).powi(4) * steady
}

/// Finite-window moments for a [`DistributionKind`]; only the ideal cycle has them.
pub fn finite_moments(kind: &DistributionKind, w: &WindowSpec) -> Result<(f64, f64)> {
    require_ideal(kind)?;
    let p = kind.rates();
    Ok((mean_finite(p, w), var_finite(p, w)))
}

/// Long-window mean count μ1μ2T/(μ1+μ2).
pub fn mean_asymptotic(p: &RateParams, w: &WindowSpec) -> f64 {
    p.mu1() * p.mu2() / (p.mu1() + p.mu2()) * w.duration()
}

/// Long-window variance of the ideal count.
pub fn var_asymptotic(p: &RateParams, w: &WindowSpec) -> f64 {
    fano_ideal(p) * mean_asymptotic(p, w)
}

/// (μ1² + μ2²)/(μ1 + μ2)².
pub fn fano_ideal(p: &RateParams) -> f64 {
    let (a, b) = (p.mu1(), p.mu2());
    (a * a + b * b) / (a + b).powi(2)
}

/// (μ1² + 2(1−η)μ1μ2 + μ2²)/(μ1 + μ2)².
pub fn fano_lossy(p: &RateParams, eta: Efficiency) -> f64 {
    let (a, b, e) = (p.mu1(), p.mu2(), eta.value());
    (a * a + 2.0 * (1.0 - e) * a * b + b * b) / (a + b).powi(2)
}

/// m1 = −f̃′(0) and m2 = f̃″(0) of the inter-detection law.
pub fn renewal_moments(kind: &DistributionKind) -> MomentPair {
    match kind {
        DistributionKind::IdealCycle(p) => {
            let (a, b) = (p.mu1(), p.mu2());
            MomentPair {
                m1: 1.0 / a + 1.0 / b,
                m2: 2.0 * (1.0 / (a * a) + 1.0 / (a * b) + 1.0 / (b * b)),
            }
        }
        _ => {
            let law = kind.phase_law();
            let m1 = law.mean();
            MomentPair {
                m1,
                m2: law.variance() + m1 * m1,
            }
        }
    }
}

/// Asymptotic Fano factor σ²/m1² of the renewal count.
pub fn fano_asymptotic(kind: &DistributionKind) -> f64 {
    match kind {
        DistributionKind::IdealCycle(_) => {
            let m = renewal_moments(kind);
            m.variance() / (m.m1 * m.m1)
        }
        // the variance is formed directly; m2 − m1² cancels once D dominates the mean
        _ => {
            let law = kind.phase_law();
            law.variance() / law.mean().powi(2)
        }
    }
}

/// Emission rate against pump power in saturation form.
pub fn saturation(pp: &PumpParams) -> SaturationResult {
    let rate_saturation = 1.0 / pp.tau();
    let power_saturation = 1.0 / (pp.tau() * pp.alpha());
    SaturationResult {
        rate_asymptotic: rate_saturation * pp.power() / (pp.power() + power_saturation),
        rate_saturation,
        power_saturation,
    }
}

/// Recorded rate of a non-paralyzable detector with dead time `deadtime`.
pub fn deadtime_rate(nu_in: f64, deadtime: f64) -> Result<f64> {
    if nu_in.is_nan() || nu_in < 0.0 || !deadtime.is_finite() || deadtime < 0.0 {
        return Err(Error::invalid(
            "deadtime_rate",
            "rate and dead time must be non-negative",
        ));
    }
    if nu_in.is_infinite() {
        return if deadtime > 0.0 {
            Ok(1.0 / deadtime)
        } else {
            Ok(f64::INFINITY)
        };
    }
    Ok(nu_in / (1.0 + deadtime * nu_in))
}

/// `points` logarithmically spaced values from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max > min && min.is_finite() && max.is_finite()) {
        return Err(Error::invalid(
            "ratio range",
            format!("need 0 < min < max, got [{min}, {max}]"),
        ));
    }
    if points < 2 {
        return Err(Error::invalid("points", "need at least two grid points"));
    }
    let (lo, hi) = (min.log10(), max.log10());
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            let t = i as f64 / last;
            10f64.powf(lo * (1.0 - t) + hi * t)
        })
        .collect())
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("ratio_grid", "empty grid"));
    }
    if grid.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("ratio_grid", "ratios must be positive and finite"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("ratio_grid", "ratios must be strictly increasing"));
    }
    Ok(())
}

/// The kind at one sweep point: μ1 = ratio·μ2 and D = (D/τ)/μ2.
pub fn sweep_kind(ratio: f64, mu2: f64, eta: f64, deadtime_over_tau: f64) -> Result<DistributionKind> {
    let rates = RateParams::from_ratio(ratio, mu2)?;
    let detector = DetectorParams::new(eta, deadtime_over_tau / mu2)?;
    Ok(DistributionKind::new(rates, detector))
}

/// Asymptotic Fano factor along `ratio_grid`.
pub fn fano_curve(ratio_grid: &[f64], mu2: f64, eta: f64, deadtime_over_tau: f64) -> Result<FanoCurve> {
    check_grid(ratio_grid)?;
    // validates every parameter once, up front
    sweep_kind(ratio_grid[0], mu2, eta, deadtime_over_tau)?;
    let points = ratio_grid
        .par_iter()
        .map(|&ratio| {
            let kind = sweep_kind(ratio, mu2, eta, deadtime_over_tau)?;
            Ok(FanoPoint {
                ratio,
                fano: fano_asymptotic(&kind),
                stderr: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FanoCurve {
        eta,
        deadtime_over_tau,
        points,
    })
}
