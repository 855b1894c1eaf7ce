//! Interval laws and closed-form statistics checked against independent numerics:
//! adaptive quadrature and contour-integral differentiation of the transforms.

use approx::assert_relative_eq;
use num_complex::Complex64;
use photostat::analytics::{
    deadtime_rate, fano_asymptotic, fano_ideal, fano_lossy, renewal_moments, saturation, sweep_kind,
};
use photostat::model::{pdf_cycle, pdf_deadtime, pdf_lossy, root_pair};
use photostat::quadrature::integrate_scaled;
use photostat::{DetectorParams, DistributionKind, Efficiency, PumpParams, RateParams};

fn laws() -> Vec<DistributionKind> {
    let r = |a, b| RateParams::new(a, b).unwrap();
    vec![
        DistributionKind::IdealCycle(r(1.0, 1.0)),
        DistributionKind::IdealCycle(r(3.0, 0.2)),
        DistributionKind::IdealCycle(r(1.0, 1.0 + 1e-9)),
        DistributionKind::Lossy(r(2.0, 1.0), Efficiency::new(0.5).unwrap()),
        DistributionKind::Lossy(r(0.05, 7.0), Efficiency::new(0.1).unwrap()),
        DistributionKind::new(r(2.0, 1.0), DetectorParams::new(0.5, 0.3).unwrap()),
        DistributionKind::new(r(10.0, 1.0), DetectorParams::new(0.5, 1.0).unwrap()),
        DistributionKind::new(r(1.0, 1.0), DetectorParams::new(1.0, 4.0).unwrap()),
    ]
}

/// Integral of g against the density, split at the dead time so the jump is a node.
fn against_density(kind: &DistributionKind, g: impl Fn(f64) -> f64) -> f64 {
    let scale = renewal_moments(kind).m1;
    let d = kind.deadtime();
    integrate_scaled(|t| g(t) * kind.pdf(t), d, scale, 1e-13)
}

/// k-th derivative at 0 from the trapezoid rule on a circle of radius r.
fn contour_derivative(f: impl Fn(Complex64) -> Complex64, k: u32, r: f64) -> f64 {
    let nodes = 128;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..nodes {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / nodes as f64;
        let z = Complex64::from_polar(r, theta);
        acc += f(z) * Complex64::from_polar(1.0, -(k as f64) * theta);
    }
    let factorial: f64 = (1..=k).map(f64::from).product();
    factorial * acc.re / (nodes as f64 * r.powi(k as i32))
}

#[test]
fn densities_are_normalized() {
    for kind in laws() {
        let mass = against_density(&kind, |_| 1.0);
        assert!((mass - 1.0).abs() < 1e-10, "{kind:?}: mass {mass}");
    }
}

#[test]
fn densities_vanish_inside_dead_time() {
    for kind in laws().iter().filter(|k| k.deadtime() > 0.0) {
        let d = kind.deadtime();
        for frac in [0.0, 0.3, 0.999] {
            assert_eq!(kind.pdf(frac * d), 0.0);
        }
        assert!(kind.pdf(d * 1.001) > 0.0);
    }
}

#[test]
fn transforms_match_quadrature() {
    let points = [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.7, 0.0),
        Complex64::new(0.3, 2.0),
        Complex64::new(2.5, -1.5),
    ];
    for kind in laws() {
        for &s in &points {
            let re = against_density(&kind, |t| (-s.re * t).exp() * (s.im * t).cos());
            let im = -against_density(&kind, |t| (-s.re * t).exp() * (s.im * t).sin());
            let l = kind.laplace(s).unwrap();
            assert!(
                (l.re - re).abs() < 1e-10 && (l.im - im).abs() < 1e-10,
                "{kind:?} at {s}: {l} vs {re}+{im}i"
            );
        }
    }
}

#[test]
fn renewal_moments_match_quadrature_and_contour_derivatives() {
    for kind in laws() {
        let m = renewal_moments(&kind);
        let q1 = against_density(&kind, |t| t);
        let q2 = against_density(&kind, |t| t * t);
        assert_relative_eq!(m.m1, q1, max_relative = 1e-9);
        assert_relative_eq!(m.m2, q2, max_relative = 1e-9);
        // the nearest singularity of the transform is the slow pole
        let radius = 0.5 * kind.phase_law().slow_rate();
        let d1 = contour_derivative(|s| kind.laplace(s).unwrap(), 1, radius);
        let d2 = contour_derivative(|s| kind.laplace(s).unwrap(), 2, radius);
        assert_relative_eq!(m.m1, -d1, max_relative = 1e-9);
        assert_relative_eq!(m.m2, d2, max_relative = 1e-9);
    }
}

#[test]
fn free_functions_agree_with_kind_dispatch() {
    let p = RateParams::new(2.0, 0.7).unwrap();
    let eta = Efficiency::new(0.4).unwrap();
    let d = DetectorParams::new(0.4, 0.25).unwrap();
    let lossy = DistributionKind::Lossy(p, eta);
    let dead = DistributionKind::new(p, d);
    for t in [0.01, 0.3, 1.0, 4.0, 20.0] {
        assert_eq!(pdf_cycle(t, &p), DistributionKind::IdealCycle(p).pdf(t));
        assert_relative_eq!(pdf_lossy(t, &p, eta), lossy.pdf(t), max_relative = 1e-13);
        assert_relative_eq!(pdf_deadtime(t, &p, &d), dead.pdf(t), max_relative = 1e-13);
    }
}

#[test]
fn lossy_rates_satisfy_vieta() {
    for (a, b, e) in [(1.0, 1.0, 0.5), (1e3, 1e-3, 0.9), (0.2, 5.0, 1e-4), (4.0, 4.0, 1.0)] {
        let p = RateParams::new(a, b).unwrap();
        let r = root_pair(&p, Efficiency::new(e).unwrap());
        assert_relative_eq!(0.5 * (r.mu_p + r.mu_m), a + b, max_relative = 1e-14);
        assert_relative_eq!(0.25 * r.mu_p * r.mu_m, e * a * b, max_relative = 1e-14);
    }
}

#[test]
fn ideal_fano_is_symmetric_and_dead_time_breaks_it() {
    for ratio in [1e-2, 0.3, 5.0, 100.0] {
        let p = RateParams::from_ratio(ratio, 1.0).unwrap();
        let q = RateParams::new(1.0, ratio).unwrap();
        assert_relative_eq!(fano_ideal(&p), fano_ideal(&q), max_relative = 1e-14);
        let eta = Efficiency::new(0.3).unwrap();
        assert_relative_eq!(fano_lossy(&p, eta), fano_lossy(&q, eta), max_relative = 1e-14);
    }
    let left = fano_asymptotic(&sweep_kind(0.1, 1.0, 0.5, 0.5).unwrap());
    let right = fano_asymptotic(&sweep_kind(10.0, 1.0, 0.5, 0.5).unwrap());
    assert!((left - right).abs() > 1e-2, "{left} vs {right}");
}

#[test]
fn lossy_fano_of_unit_rates_is_one_minus_half_eta() {
    let p = RateParams::new(1.0, 1.0).unwrap();
    for eta in [1.0, 0.5, 0.1, 1e-3] {
        assert_relative_eq!(
            fano_lossy(&p, Efficiency::new(eta).unwrap()),
            1.0 - eta / 2.0,
            max_relative = 1e-15
        );
    }
}

#[test]
fn dead_time_right_plateau_approaches_truncation_limit() {
    // a fast pump leaves one exponential of rate ημ2 truncated at D
    for (eta, dt) in [(0.5, 0.1), (1.0, 0.5), (0.2, 2.0)] {
        let f = fano_asymptotic(&sweep_kind(1e7, 1.0, eta, dt).unwrap());
        let expected = (1.0 + eta * dt).powi(-2);
        assert!((f - expected).abs() < 1e-5, "η={eta} D={dt}: {f} vs {expected}");
    }
}

#[test]
fn detection_rate_matches_nonparalyzable_formula_for_poisson_input() {
    // a fast pump makes the thinned stream Poisson with rate ημ2
    let (eta, d) = (0.5, 0.4);
    let kind = sweep_kind(1e8, 1.0, eta, d).unwrap();
    let rate = 1.0 / renewal_moments(&kind).m1;
    assert_relative_eq!(rate, deadtime_rate(eta, d).unwrap(), max_relative = 1e-6);
}

#[test]
fn saturation_curve_is_consistent_with_rates() {
    let pump = PumpParams::new(0.8, 3.0, 2.0).unwrap();
    let sat = saturation(&pump);
    let rates = pump.to_rates().unwrap();
    assert_relative_eq!(sat.rate_asymptotic, 1.0 / rates.mean_cycle(), max_relative = 1e-14);
    let half = PumpParams::new(0.8, sat.power_saturation, 2.0).unwrap();
    assert_relative_eq!(
        saturation(&half).rate_asymptotic,
        0.5 * sat.rate_saturation,
        max_relative = 1e-14
    );
}
