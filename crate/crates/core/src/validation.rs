//! Cross-route validation: closed forms against quadrature, numerical inversion,
//! the convolution oracle and Monte Carlo. Backs the `validate` command.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::{
    fano_asymptotic, fano_curve, fano_ideal, fano_lossy, log_grid, mean_asymptotic, mean_finite, mean_long_window,
    renewal_moments, var_asymptotic, var_finite, var_long_window, WindowSpec,
};
use crate::inversion::{self, counting_distribution, InversionConfig};
use crate::model::{root_pair, DetectorParams, DistributionKind, Efficiency, RateParams};
use crate::quadrature::integrate_scaled;
use crate::simulator::{self, fano_curve_mc, McPlan, SimConfig, SimMode};

/// Deliberate defects used to show that the suite catches wiring mistakes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Feeds η² into the lossy Fano factor.
    EtaMiswired,
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub quick: bool,
    pub seed: u64,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

type Outcome = (bool, String);

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_kinds(rng: &mut ChaCha8Rng, draws: usize) -> Vec<DistributionKind> {
    (0..draws)
        .flat_map(|_| {
            let rates = RateParams::new(log_uniform(rng, 1e-2, 1e2), log_uniform(rng, 1e-2, 1e2)).unwrap();
            let eta = rng.random_range(0.05..=1.0);
            let dead = rng.random_range(0.0..5.0) / rates.mu2();
            [
                DistributionKind::IdealCycle(rates),
                DistributionKind::Lossy(rates, Efficiency::new(eta).unwrap()),
                DistributionKind::LossyDeadtime(rates, DetectorParams::new(eta, dead).unwrap()),
            ]
        })
        .collect()
}

fn check_normalization(rng: &mut ChaCha8Rng, draws: usize) -> Outcome {
    let mut worst = 0.0f64;
    for kind in random_kinds(rng, draws) {
        let scale = kind.phase_law().mean() - kind.deadtime();
        let mass = integrate_scaled(|t| kind.pdf(t), kind.deadtime(), scale, 1e-13);
        worst = worst.max((mass - 1.0).abs());
    }
    (worst <= 1e-9, format!("max |∫f − 1| = {worst:.2e}"))
}

fn check_transforms(rng: &mut ChaCha8Rng, draws: usize) -> Outcome {
    let mut worst = 0.0f64;
    for kind in random_kinds(rng, draws) {
        let p = kind.rates();
        let s = rng.random_range(0.0..10.0 * (p.mu1() + p.mu2()));
        let d = kind.deadtime();
        // both sides carry the factor exp(−sD); compare with it removed
        let quad = integrate_scaled(
            |u| (-s * u).exp() * kind.pdf(u + d),
            0.0,
            kind.phase_law().mean() - d,
            1e-15,
        );
        let closed = kind.laplace(Complex64::new(s, 0.0)).unwrap().re * (s * d).exp();
        worst = worst.max(((quad - closed) / closed).abs());
    }
    (worst <= 1e-7, format!("max relative gap {worst:.2e}"))
}

fn check_identity_chain(rng: &mut ChaCha8Rng, draws: usize) -> Outcome {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let rates = RateParams::new(log_uniform(rng, 1e-2, 1e2), log_uniform(rng, 1e-2, 1e2)).unwrap();
        let eta = rng.random_range(0.05..=1.0);
        let ideal = DistributionKind::IdealCycle(rates);
        let unit = DistributionKind::Lossy(rates, Efficiency::PERFECT);
        let lossy = DistributionKind::Lossy(rates, Efficiency::new(eta).unwrap());
        let undelayed = DistributionKind::LossyDeadtime(rates, DetectorParams::new(eta, 0.0).unwrap());
        let m = rates.mean_cycle();
        for k in 1..20 {
            let t = m * k as f64 / 4.0;
            let s = Complex64::new(k as f64 / m, k as f64 / m);
            for (a, b) in [(&ideal, &unit), (&lossy, &undelayed)] {
                let (fa, fb) = (a.pdf(t), b.pdf(t));
                worst = worst.max((fa - fb).abs() / fa.abs().max(1e-300));
                let (la, lb) = (a.laplace(s).unwrap(), b.laplace(s).unwrap());
                worst = worst.max((la - lb).norm() / la.norm());
            }
        }
    }
    (worst <= 1e-12, format!("max relative gap {worst:.2e}"))
}

fn check_vieta(rng: &mut ChaCha8Rng, draws: usize) -> Outcome {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let (a, b) = (log_uniform(rng, 1e-2, 1e2), log_uniform(rng, 1e-2, 1e2));
        let eta = rng.random_range(0.01..=1.0);
        let r = root_pair(&RateParams::new(a, b).unwrap(), Efficiency::new(eta).unwrap());
        worst = worst
            .max(((r.mu_p + r.mu_m) / (2.0 * (a + b)) - 1.0).abs())
            .max(((r.mu_p * r.mu_m) / (4.0 * eta * a * b) - 1.0).abs());
    }
    (worst <= 1e-12, format!("max relative gap {worst:.2e}"))
}

fn check_rescaling(fault: Option<Fault>) -> Outcome {
    let lossy = |p: &RateParams, eta: f64| match fault {
        Some(Fault::EtaMiswired) => fano_lossy(p, Efficiency::new(eta * eta).unwrap()),
        None => fano_lossy(p, Efficiency::new(eta).unwrap()),
    };
    let grid = log_grid(1e-3, 1e3, 121).unwrap();
    let mut worst = 0.0f64;
    for &eta in &[1.0, 0.5, 0.1] {
        for &ratio in &grid {
            let p = RateParams::from_ratio(ratio, 1.0).unwrap();
            worst = worst.max(((1.0 - lossy(&p, eta)) - eta * (1.0 - fano_ideal(&p))).abs());
        }
    }
    (worst <= 1e-12, format!("max |1 − ξ(η) − η(1 − ξ(1))| = {worst:.2e}"))
}

fn check_symmetry() -> Outcome {
    let half = Efficiency::new(0.5).unwrap();
    let mut worst = 0.0f64;
    for &(a, b) in &[(0.3, 2.0), (1.0, 50.0), (7.0, 0.01)] {
        let (p, q) = (RateParams::new(a, b).unwrap(), RateParams::new(b, a).unwrap());
        worst = worst
            .max((fano_ideal(&p) - fano_ideal(&q)).abs())
            .max((fano_lossy(&p, half) - fano_lossy(&q, half)).abs());
    }
    let right = fano_curve(&[0.01, 100.0], 1.0, 0.5, 0.1).unwrap();
    let asymmetric = right.points[1].fano < right.points[0].fano;
    (
        worst <= 1e-15 && asymmetric,
        format!(
            "symmetry gap {worst:.1e}; with D = 0.1τ: ξ(100) = {:.4} < ξ(0.01) = {:.4}",
            right.points[1].fano, right.points[0].fano
        ),
    )
}

fn check_dual_route(rng: &mut ChaCha8Rng, draws: usize) -> Outcome {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let p = RateParams::new(log_uniform(rng, 1e-2, 1e2), log_uniform(rng, 1e-2, 1e2)).unwrap();
        let eta = Efficiency::new(rng.random_range(0.01..=1.0)).unwrap();
        worst = worst
            .max((fano_asymptotic(&DistributionKind::IdealCycle(p)) - fano_ideal(&p)).abs())
            .max((fano_asymptotic(&DistributionKind::Lossy(p, eta)) - fano_lossy(&p, eta)).abs());
    }
    (worst <= 1e-10, format!("max |renewal − closed form| = {worst:.2e}"))
}

fn check_finite_window() -> Outcome {
    let mut worst = 0.0f64;
    for &(a, b) in &[(1.0, 1.0), (4.0, 0.5), (0.2, 3.0)] {
        let p = RateParams::new(a, b).unwrap();
        let w = WindowSpec::new(50.0 / (a + b)).unwrap();
        let unit = WindowSpec::new(1.0).unwrap();
        // slopes of the long-window forms are the asymptotic rates
        let mean_slope = mean_long_window(&p, &WindowSpec::new(2.0 * w.duration()).unwrap()) - mean_long_window(&p, &w);
        let var_slope = var_long_window(&p, &WindowSpec::new(2.0 * w.duration()).unwrap()) - var_long_window(&p, &w);
        worst = worst
            .max((mean_finite(&p, &w) / mean_long_window(&p, &w) - 1.0).abs())
            .max((var_finite(&p, &w) / var_long_window(&p, &w) - 1.0).abs())
            .max((mean_slope / (w.duration() * mean_asymptotic(&p, &unit)) - 1.0).abs())
            .max((var_slope / (w.duration() * var_asymptotic(&p, &unit)) - 1.0).abs());
    }
    (worst <= 1e-6, format!("max relative gap {worst:.2e}"))
}

fn check_counting_distribution() -> Outcome {
    let kind = DistributionKind::IdealCycle(RateParams::new(1.0, 1.0).unwrap());
    let cfg = InversionConfig::default();
    let w = WindowSpec::new(5.0).unwrap();
    let dist = match counting_distribution(&kind, &w, 40, &cfg) {
        Ok(d) => d,
        Err(e) => return (false, e.to_string()),
    };
    let p = kind.rates();
    let mass_gap = (dist.total_mass() - 1.0).abs();
    let mean_gap = (dist.mean() / mean_finite(p, &w) - 1.0).abs();
    let var_gap = (dist.variance() / var_finite(p, &w) - 1.0).abs();
    let p0 = inversion::invert(|s| inversion::counting_prob_transform(0, s, &kind), 1.0, &cfg).unwrap_or(f64::NAN);
    let p0_gap = (p0 - 2.0 * (-1.0f64).exp()).abs();
    let xi = 0.5;
    let pgf_gap = match inversion::pgf(&kind, xi, &w, &cfg) {
        Ok(g) => (g - dist.pgf(xi)).abs(),
        Err(_) => f64::NAN,
    };
    (
        mass_gap <= 1e-6 && mean_gap <= 1e-4 && var_gap <= 1e-4 && p0_gap <= 1e-7 && pgf_gap <= 1e-6,
        format!(
            "mass {mass_gap:.1e}, mean {mean_gap:.1e}, variance {var_gap:.1e}, P(0) {p0_gap:.1e}, PGF {pgf_gap:.1e}"
        ),
    )
}

fn check_two_route(quick: bool) -> Outcome {
    let kinds = [
        DistributionKind::IdealCycle(RateParams::new(1.0, 1.0).unwrap()),
        DistributionKind::Lossy(RateParams::new(2.0, 0.7).unwrap(), Efficiency::new(0.6).unwrap()),
        DistributionKind::LossyDeadtime(
            RateParams::new(1.5, 1.0).unwrap(),
            DetectorParams::new(0.5, 0.3).unwrap(),
        ),
    ];
    let cfg = InversionConfig::default();
    let mut worst = 0.0f64;
    for kind in &kinds {
        let m1 = renewal_moments(kind).m1;
        let w = WindowSpec::new(3.0 * m1).unwrap();
        let step = m1 / if quick { 300.0 } else { 1000.0 };
        let k: Vec<f64> = (1..=6)
            .map(|n| {
                inversion::convolve_oracle(kind, n, step, w.duration())
                    .map(|tab| tab.integral_to(w.duration()))
                    .unwrap_or(f64::NAN)
            })
            .collect();
        for n in 0..=5 {
            let p = match inversion::counting_prob(kind, n, &w, &cfg) {
                Ok(p) => p,
                Err(e) => return (false, e.to_string()),
            };
            let kn = if n == 0 { 1.0 } else { k[n - 1] };
            worst = worst.max((p - (kn - k[n])).abs());
        }
    }
    (worst <= 2e-5, format!("max |P_T(n) − (K_n − K_n+1)| = {worst:.2e}"))
}

fn check_figures() -> Outcome {
    let grid = log_grid(1e-3, 1e3, 121).unwrap();
    let fig1 = fano_curve(&grid, 1.0, 1.0, 0.0).unwrap();
    let min1 = fig1.minimum();
    let ok1 = min1.ratio == 1.0 && (min1.fano - 0.5).abs() <= 1e-12;
    let minima: Vec<f64> = [0.5, 0.1]
        .iter()
        .map(|&eta| fano_curve(&grid, 1.0, eta, 0.0).unwrap().minimum().fano)
        .collect();
    let ok2 = (minima[0] - 0.75).abs() <= 1e-12 && (minima[1] - 0.95).abs() <= 1e-12;
    let plateaus = fano_curve(&[1e-4, 1e4], 1.0, 0.5, 0.1).unwrap();
    let ok3 = (plateaus.points[1].fano - 1.0 / 1.05f64.powi(2)).abs() <= 2e-3
        && (plateaus.points[0].fano - 1.0).abs() <= 1e-3
        && fano_curve(&grid, 1.0, 0.5, 0.5).unwrap().minimum().ratio > 1.0
        && !fano_curve(&grid, 1.0, 0.5, 1.0)
            .unwrap()
            .has_interior_minimum_below_left_plateau();
    (
        ok1 && ok2 && ok3,
        format!(
            "ideal minimum {:.6} at {}, lossy minima {:.6}/{:.6}, dead-time plateau {:.5}",
            min1.fano, min1.ratio, minima[0], minima[1], plateaus.points[1].fano
        ),
    )
}

fn check_monte_carlo(quick: bool, seed: u64) -> Outcome {
    let windows = if quick { 2_000 } else { 10_000 };
    let ideal = McPlan {
        window_count: windows,
        intervals_per_window: 50.0,
        seed,
        mode: SimMode::Physical,
    };
    let mut details = Vec::new();
    let mut ok = true;
    let cases: [(f64, f64, f64, SimMode); 3] = [
        (1.0, 1.0, 0.0, SimMode::Physical),
        (1.0, 0.5, 0.0, SimMode::Physical),
        (10.0, 0.5, 0.1, SimMode::PaperRenewal),
    ];
    for (i, (ratio, eta, dead, mode)) in cases.into_iter().enumerate() {
        let plan = McPlan {
            mode,
            seed: simulator::derive_seed(seed, i as u64),
            ..ideal
        };
        let mc = match fano_curve_mc(&[ratio], 1.0, eta, dead, &plan) {
            Ok(c) => c.points[0],
            Err(e) => return (false, e.to_string()),
        };
        let expected = fano_curve(&[ratio], 1.0, eta, dead).unwrap().points[0].fano;
        let se = mc.stderr.unwrap_or(f64::NAN);
        let z = (mc.fano - expected) / se;
        ok &= z.abs() <= 3.0;
        details.push(format!("{:.4}±{:.4} vs {:.4}", mc.fano, se, expected));
    }
    (ok, details.join("; "))
}

fn check_deadtime_floor(seed: u64) -> Outcome {
    let dead = 0.7;
    let mut smallest = f64::INFINITY;
    for mode in [SimMode::Physical, SimMode::PaperRenewal] {
        let cfg = SimConfig::new(
            RateParams::new(5.0, 1.0).unwrap(),
            DetectorParams::new(0.8, dead).unwrap(),
            WindowSpec::new(40.0).unwrap(),
            200,
            seed,
            mode,
        )
        .unwrap();
        smallest = smallest.min(simulator::simulate(&cfg).min_gap().unwrap_or(f64::INFINITY));
    }
    (
        smallest >= dead,
        format!("smallest gap {smallest:.6} against D = {dead}"),
    )
}

/// Runs every check. `quick` trims Monte Carlo sample sizes and grid resolution.
pub fn run_suite(opts: &ValidationOptions) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draws = if opts.quick { 10 } else { 40 };
    let mut report = ValidationReport::default();
    let mut push = |name: &'static str, (passed, detail): Outcome| {
        report.checks.push(CheckOutcome { name, passed, detail });
    };
    push("density normalization", check_normalization(&mut rng, draws));
    push("transform consistency", check_transforms(&mut rng, draws));
    push("identity chain", check_identity_chain(&mut rng, draws));
    push("root-pair Vieta identities", check_vieta(&mut rng, 100));
    push("loss rescaling law", check_rescaling(opts.fault));
    push("symmetry and dead-time asymmetry", check_symmetry());
    push("renewal vs closed-form Fano", check_dual_route(&mut rng, 100));
    push("finite window vs asymptote", check_finite_window());
    push("counting distribution", check_counting_distribution());
    push("inversion vs convolution oracle", check_two_route(opts.quick));
    push("figure landmarks", check_figures());
    push("Monte Carlo vs analytic Fano", check_monte_carlo(opts.quick, opts.seed));
    push("dead-time floor", check_deadtime_floor(opts.seed));
    report
}
