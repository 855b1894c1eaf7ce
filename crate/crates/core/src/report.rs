//! Dead-time comparison: the analytic truncated-law Fano factor next to Monte Carlo
//! estimates from both simulator modes.

use crate::analytics::{fano_curve, FanoCurve};
use crate::error::Result;
use crate::simulator::{derive_seed, fano_curve_mc, McPlan, SimMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadtimeComparisonRow {
    pub deadtime_over_tau: f64,
    pub ratio: f64,
    pub analytic: f64,
    pub paper_fano: f64,
    pub paper_stderr: f64,
    pub physical_fano: f64,
    pub physical_stderr: f64,
}

impl DeadtimeComparisonRow {
    /// Deviation of the renewal-mode estimate from the analytic value, in standard errors.
    pub fn paper_z(&self) -> f64 {
        (self.paper_fano - self.analytic) / self.paper_stderr
    }

    /// Physical minus renewal estimate, in combined standard errors.
    pub fn mode_gap_z(&self) -> f64 {
        (self.physical_fano - self.paper_fano) / self.paper_stderr.hypot(self.physical_stderr)
    }
}

fn stderr_of(curve: &FanoCurve, i: usize) -> f64 {
    curve.points[i].stderr.unwrap_or(f64::NAN)
}

/// One row per (dead time, ratio) pair. `plan.mode` is ignored; both modes run with
/// the same per-point seeds.
pub fn deadtime_comparison(
    eta: f64,
    deadtimes_over_tau: &[f64],
    ratios: &[f64],
    mu2: f64,
    plan: &McPlan,
) -> Result<Vec<DeadtimeComparisonRow>> {
    let mut rows = Vec::with_capacity(deadtimes_over_tau.len() * ratios.len());
    for (k, &dead) in deadtimes_over_tau.iter().enumerate() {
        let seed = derive_seed(plan.seed, k as u64);
        let analytic = fano_curve(ratios, mu2, eta, dead)?;
        let paper = fano_curve_mc(
            ratios,
            mu2,
            eta,
            dead,
            &McPlan {
                seed,
                mode: SimMode::PaperRenewal,
                ..*plan
            },
        )?;
        let physical = fano_curve_mc(
            ratios,
            mu2,
            eta,
            dead,
            &McPlan {
                seed,
                mode: SimMode::Physical,
                ..*plan
            },
        )?;
        for (i, &ratio) in ratios.iter().enumerate() {
            rows.push(DeadtimeComparisonRow {
                deadtime_over_tau: dead,
                ratio,
                analytic: analytic.points[i].fano,
                paper_fano: paper.points[i].fano,
                paper_stderr: stderr_of(&paper, i),
                physical_fano: physical.points[i].fano,
                physical_stderr: stderr_of(&physical, i),
            });
        }
    }
    Ok(rows)
}
