//! Monte Carlo streams against the interval laws and closed-form moments.

use photostat::analytics::{fano_asymptotic, renewal_moments};
use photostat::simulator::{
    read_trace, simulate, simulate_counts, stats_from_counts, window_stats, write_trace, RenewalSampler,
};
use photostat::{DetectorParams, DistributionKind, RateParams, SimConfig, SimMode, WindowPartition, WindowSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(mu1: f64, eta: f64, deadtime: f64, t: f64, windows: usize, seed: u64, mode: SimMode) -> SimConfig {
    SimConfig::new(
        RateParams::new(mu1, 1.0).unwrap(),
        DetectorParams::new(eta, deadtime).unwrap(),
        WindowSpec::new(t).unwrap(),
        windows,
        seed,
        mode,
    )
    .unwrap()
}

#[test]
fn sampled_intervals_match_law_moments() {
    let kinds = [
        DistributionKind::IdealCycle(RateParams::new(2.0, 0.5).unwrap()),
        DistributionKind::new(
            RateParams::new(2.0, 0.5).unwrap(),
            DetectorParams::new(0.3, 0.0).unwrap(),
        ),
        DistributionKind::new(
            RateParams::new(2.0, 0.5).unwrap(),
            DetectorParams::new(0.3, 1.5).unwrap(),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    for kind in kinds {
        let sampler = RenewalSampler::new(&kind);
        let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng).length).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let second = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let m = renewal_moments(&kind);
        let var = m.m2 - m.m1 * m.m1;
        let se = (var / n as f64).sqrt();
        assert!((mean - m.m1).abs() < 4.0 * se, "{kind:?}: mean {mean} vs {}", m.m1);
        // the fourth moment is bounded by a few times var² for these laws
        assert!((second - m.m2).abs() < 0.02 * m.m2, "{kind:?}: m2 {second} vs {}", m.m2);
        assert!(xs.iter().all(|&x| x >= kind.deadtime()));
    }
}

#[test]
fn physical_detections_respect_dead_time() {
    let cfg = config(5.0, 0.7, 0.3, 20.0, 50, 3, SimMode::Physical).with_emissions(true);
    let trace = simulate(&cfg);
    assert!(trace.min_gap().unwrap() >= 0.3);
    let emissions = trace.emissions.as_ref().unwrap();
    assert!(emissions.len() > trace.detections.len());
    // every detection is one of the emissions
    for d in &trace.detections {
        assert!(emissions.binary_search_by(|e| e.total_cmp(d)).is_ok());
    }
}

#[test]
fn counts_are_independent_of_trace_recording() {
    for mode in [SimMode::Physical, SimMode::PaperRenewal] {
        let cfg = config(2.0, 0.5, 0.2, 30.0, 40, 99, mode);
        let trace = simulate(&cfg);
        let counts = simulate_counts(&cfg);
        assert_eq!(counts.iter().sum::<u64>() as usize, trace.detections.len());
        assert_eq!(
            window_stats(&trace, &cfg).unwrap(),
            stats_from_counts(&counts, &cfg).unwrap()
        );
    }
}

#[test]
fn detection_rate_matches_mean_interval() {
    for mode in [SimMode::Physical, SimMode::PaperRenewal] {
        let cfg = config(3.0, 0.5, 0.0, 200.0, 2_000, 5, mode);
        let stats = stats_from_counts(&simulate_counts(&cfg), &cfg).unwrap();
        let expected = 200.0 / renewal_moments(&cfg.kind()).m1;
        assert!(
            (stats.mean - expected).abs() < 4.0 * stats.mean_stderr + 0.01 * expected.sqrt(),
            "{mode:?}"
        );
    }
}

#[test]
fn modes_agree_without_dead_time() {
    let physical = config(1.0, 0.5, 0.0, 100.0, 5_000, 21, SimMode::Physical);
    let renewal = SimConfig {
        mode: SimMode::PaperRenewal,
        seed: 22,
        ..physical.clone()
    };
    let a = stats_from_counts(&simulate_counts(&physical), &physical).unwrap();
    let b = stats_from_counts(&simulate_counts(&renewal), &renewal).unwrap();
    let gap = (a.fano.unwrap() - b.fano.unwrap()) / a.fano_stderr.unwrap().hypot(b.fano_stderr.unwrap());
    assert!(gap.abs() < 4.0, "z = {gap}");
    let expected = fano_asymptotic(&physical.kind());
    assert!((a.fano.unwrap() - expected).abs() < 4.0 * a.fano_stderr.unwrap());
}

#[test]
fn restart_windows_start_from_ground_state() {
    // in a very short restarted window the first detection needs a full cycle
    let cfg = config(1.0, 1.0, 0.0, 0.05, 20_000, 8, SimMode::Physical).with_partition(WindowPartition::Restart);
    let stats = stats_from_counts(&simulate_counts(&cfg), &cfg).unwrap();
    // P(cycle < 0.05) = 1 − (1 + 0.05)e^{−0.05} ≈ 1.2e-3
    assert!(stats.mean < 3e-3, "mean {}", stats.mean);
}

#[test]
fn trace_file_round_trips() {
    let cfg = config(2.0, 0.8, 0.1, 10.0, 5, 77, SimMode::Physical);
    let trace = simulate(&cfg);
    let mut buf = Vec::new();
    write_trace(&trace, &cfg, &mut buf).unwrap();
    let back = read_trace(buf.as_slice(), cfg.horizon()).unwrap();
    assert_eq!(back.detections.len(), trace.detections.len());
    for (a, b) in back.detections.iter().zip(&trace.detections) {
        assert!((a - b).abs() < 1e-11);
    }
}

#[test]
fn seeds_reproduce_bit_for_bit() {
    let cfg = config(1.5, 0.4, 0.2, 25.0, 100, 1234, SimMode::Physical);
    assert_eq!(simulate(&cfg), simulate(&cfg));
    let burned = cfg.clone().with_burn_in(50.0).unwrap();
    assert_ne!(simulate_counts(&cfg), simulate_counts(&burned));
}
