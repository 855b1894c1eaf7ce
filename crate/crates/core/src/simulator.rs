//! Monte Carlo event streams and window-count statistics.
//!
//! Two generators are available:
//!
//! * [`SimMode::Physical`] runs the emitter state machine event by event. Each emitted
//!   photon is kept with probability η and then recorded only if the detector has
//!   recovered from its previous detection. The emitter never notices the detector.
//! * [`SimMode::PaperRenewal`] draws i.i.d. inter-detection intervals from the model's
//!   interval law, including the truncated–renormalized dead-time law.
//!
//! The two agree without dead time. With dead time they differ, because after a
//! recovery period the physical emitter is part-way through a cycle.
//!
//! Every window owns a ChaCha stream selected by its index under the master seed, so a
//! trace depends only on its [`SimConfig`]. State crossing a window boundary (pending
//! transition, detector recovery) is carried forward.

use std::io::{BufRead, Write};

use log::warn;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use rayon::prelude::*;

use crate::analytics::{check_grid, sweep_kind, FanoCurve, FanoPoint, WindowSpec};
use crate::error::{Error, Result};
use crate::model::{DetectorParams, DistributionKind, RateParams};

/// Stream index reserved for the burn-in segment.
const BURN_IN_STREAM: u64 = u64::MAX;
const JACKKNIFE_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Physical,
    PaperRenewal,
}

/// How the time axis is cut into counting windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowPartition {
    /// Back-to-back windows on one trace starting at pump activation.
    #[default]
    Contiguous,
    /// Independent replicas, each starting from pump activation with a live detector.
    Restart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub rates: RateParams,
    pub detector: DetectorParams,
    pub window: WindowSpec,
    pub window_count: usize,
    pub seed: u64,
    pub mode: SimMode,
    pub partition: WindowPartition,
    /// Time simulated and discarded before the first window opens.
    pub burn_in: f64,
    /// Keep emission timestamps (before thinning) in the trace. Physical mode only.
    pub record_emissions: bool,
}

impl SimConfig {
    pub fn new(
        rates: RateParams,
        detector: DetectorParams,
        window: WindowSpec,
        window_count: usize,
        seed: u64,
        mode: SimMode,
    ) -> Result<Self> {
        if window_count < 2 {
            return Err(Error::invalid(
                "window_count",
                format!("need at least 2 windows, got {window_count}"),
            ));
        }
        let m1 = DistributionKind::new(rates, detector).mean_interval();
        if window.duration() < 10.0 * m1 {
            warn!(
                "window T = {} is shorter than ten mean intervals ({}); counts will carry start-up bias",
                window.duration(),
                10.0 * m1
            );
        }
        Ok(Self {
            rates,
            detector,
            window,
            window_count,
            seed,
            mode,
            partition: WindowPartition::Contiguous,
            burn_in: 0.0,
            record_emissions: false,
        })
    }

    pub fn with_partition(mut self, partition: WindowPartition) -> Self {
        self.partition = partition;
        self
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Result<Self> {
        if !(burn_in >= 0.0 && burn_in.is_finite()) {
            return Err(Error::invalid("burn_in", "must be non-negative and finite"));
        }
        self.burn_in = burn_in;
        Ok(self)
    }

    pub fn with_emissions(mut self, record: bool) -> Self {
        self.record_emissions = record;
        self
    }

    pub fn kind(&self) -> DistributionKind {
        DistributionKind::new(self.rates, self.detector)
    }

    pub fn horizon(&self) -> f64 {
        self.window_count as f64 * self.window.duration()
    }
}

/// Recorded detection times on [0, window_count·T).
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub detections: Vec<f64>,
    pub emissions: Option<Vec<f64>>,
    pub horizon: f64,
}

impl EventTrace {
    pub fn from_detections(detections: Vec<f64>, horizon: f64) -> Result<Self> {
        if detections.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("detections", "timestamps must be strictly increasing"));
        }
        if detections.iter().any(|t| !(*t >= 0.0 && *t < horizon)) {
            return Err(Error::invalid("detections", "timestamps must lie in [0, horizon)"));
        }
        Ok(Self {
            detections,
            emissions: None,
            horizon,
        })
    }

    /// Smallest gap between consecutive detections.
    pub fn min_gap(&self) -> Option<f64> {
        self.detections.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
    }
}

/// One inter-detection interval drawn by [`RenewalSampler`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub length: f64,
    /// Emission cycles making up the interval, where the sampler builds it from cycles.
    pub cycles: Option<u64>,
}

/// Exact sampler for the interval law of a [`DistributionKind`].
#[derive(Debug, Clone)]
pub enum RenewalSampler {
    Cycle {
        absorb: Exp<f64>,
        emit: Exp<f64>,
    },
    /// A Geometric(η) number of whole cycles.
    Lossy {
        absorb: Exp<f64>,
        emit: Exp<f64>,
        misses: Geometric,
    },
    /// The lossy law conditioned on exceeding the dead time. The lossy law is a
    /// slow exponential phase followed by a fast one; at the dead-time boundary the
    /// conditioned interval is in the slow phase with probability `slow_weight`, and
    /// memorylessness gives the remainder.
    Truncated {
        delay: f64,
        slow: Exp<f64>,
        fast: Exp<f64>,
        slow_weight: f64,
    },
}

fn exp(rate: f64) -> Exp<f64> {
    Exp::new(rate).expect("rates are validated positive")
}

impl RenewalSampler {
    pub fn new(kind: &DistributionKind) -> Self {
        match kind {
            DistributionKind::IdealCycle(p) => RenewalSampler::Cycle {
                absorb: exp(p.mu1()),
                emit: exp(p.mu2()),
            },
            DistributionKind::Lossy(p, eta) => RenewalSampler::Lossy {
                absorb: exp(p.mu1()),
                emit: exp(p.mu2()),
                misses: Geometric::new(eta.value()).expect("efficiency lies in (0, 1]"),
            },
            DistributionKind::LossyDeadtime(..) => {
                let law = kind.phase_law();
                RenewalSampler::Truncated {
                    delay: law.delay(),
                    slow: exp(law.slow_rate()),
                    fast: exp(law.fast_rate()),
                    slow_weight: law.slow_phase_weight(),
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Interval {
        match self {
            RenewalSampler::Cycle { absorb, emit } => Interval {
                length: absorb.sample(rng) + emit.sample(rng),
                cycles: Some(1),
            },
            RenewalSampler::Lossy { absorb, emit, misses } => {
                let cycles = 1 + misses.sample(rng);
                let length = (0..cycles).map(|_| absorb.sample(rng) + emit.sample(rng)).sum();
                Interval {
                    length,
                    cycles: Some(cycles),
                }
            }
            RenewalSampler::Truncated {
                delay,
                slow,
                fast,
                slow_weight,
            } => {
                let mut length = *delay + fast.sample(rng);
                if rng.random::<f64>() < *slow_weight {
                    length += slow.sample(rng);
                }
                Interval { length, cycles: None }
            }
        }
    }
}

fn window_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th independent run under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    window_rng(master, index).next_u64()
}

/// Receives detections; keeps timestamps or only per-window counts.
struct Recorder {
    window: f64,
    record_from: f64,
    counts: Vec<u64>,
    detections: Option<Vec<f64>>,
    emissions: Option<Vec<f64>>,
}

impl Recorder {
    fn detection(&mut self, t: f64) {
        if t < self.record_from {
            return;
        }
        let idx = ((t / self.window) as usize).min(self.counts.len() - 1);
        self.counts[idx] += 1;
        if let Some(d) = self.detections.as_mut() {
            d.push(t);
        }
    }

    fn emission(&mut self, t: f64) {
        if t < self.record_from {
            return;
        }
        if let Some(e) = self.emissions.as_mut() {
            e.push(t);
        }
    }
}

trait Process {
    fn start(&mut self, t0: f64, rng: &mut ChaCha8Rng);
    /// Handles every pending event strictly before `end`.
    fn advance(&mut self, end: f64, rng: &mut ChaCha8Rng, rec: &mut Recorder);
}

struct PhysicalProcess {
    absorb: Exp<f64>,
    emit: Exp<f64>,
    eta: f64,
    deadtime: f64,
    excited: bool,
    next_transition: f64,
    last_detection: Option<f64>,
}

impl PhysicalProcess {
    fn new(rates: &RateParams, detector: &DetectorParams) -> Self {
        Self {
            absorb: exp(rates.mu1()),
            emit: exp(rates.mu2()),
            eta: detector.eta(),
            deadtime: detector.deadtime(),
            excited: false,
            next_transition: 0.0,
            last_detection: None,
        }
    }
}

impl Process for PhysicalProcess {
    fn start(&mut self, t0: f64, rng: &mut ChaCha8Rng) {
        self.excited = false;
        self.last_detection = None;
        self.next_transition = t0 + self.absorb.sample(rng);
    }

    fn advance(&mut self, end: f64, rng: &mut ChaCha8Rng, rec: &mut Recorder) {
        while self.next_transition < end {
            let t = self.next_transition;
            if self.excited {
                rec.emission(t);
                let kept = self.eta >= 1.0 || rng.random::<f64>() < self.eta;
                let live = self.last_detection.is_none_or(|last| t - last >= self.deadtime);
                if kept && live {
                    self.last_detection = Some(t);
                    rec.detection(t);
                }
                self.excited = false;
                self.next_transition = t + self.absorb.sample(rng);
            } else {
                self.excited = true;
                self.next_transition = t + self.emit.sample(rng);
            }
        }
    }
}

struct RenewalProcess {
    sampler: RenewalSampler,
    next_detection: f64,
}

impl Process for RenewalProcess {
    fn start(&mut self, t0: f64, rng: &mut ChaCha8Rng) {
        self.next_detection = t0 + self.sampler.sample(rng).length;
    }

    fn advance(&mut self, end: f64, rng: &mut ChaCha8Rng, rec: &mut Recorder) {
        while self.next_detection < end {
            rec.detection(self.next_detection);
            self.next_detection += self.sampler.sample(rng).length;
        }
    }
}

fn drive<P: Process>(cfg: &SimConfig, mut make: impl FnMut() -> P, rec: &mut Recorder) {
    let t = cfg.window.duration();
    match cfg.partition {
        WindowPartition::Contiguous => {
            let mut process = make();
            let mut rng = window_rng(cfg.seed, BURN_IN_STREAM);
            process.start(-cfg.burn_in, &mut rng);
            process.advance(0.0, &mut rng, rec);
            for w in 0..cfg.window_count {
                let mut rng = window_rng(cfg.seed, w as u64);
                process.advance((w + 1) as f64 * t, &mut rng, rec);
            }
        }
        WindowPartition::Restart => {
            for w in 0..cfg.window_count {
                let open = w as f64 * t;
                let mut rng = window_rng(cfg.seed, w as u64);
                let mut process = make();
                rec.record_from = open;
                process.start(open - cfg.burn_in, &mut rng);
                process.advance(open + t, &mut rng, rec);
            }
        }
    }
}

fn run(cfg: &SimConfig, keep_times: bool) -> Recorder {
    let mut rec = Recorder {
        window: cfg.window.duration(),
        record_from: 0.0,
        counts: vec![0; cfg.window_count],
        detections: keep_times.then(Vec::new),
        emissions: (keep_times && cfg.record_emissions && cfg.mode == SimMode::Physical).then(Vec::new),
    };
    match cfg.mode {
        SimMode::Physical => drive(cfg, || PhysicalProcess::new(&cfg.rates, &cfg.detector), &mut rec),
        SimMode::PaperRenewal => {
            let sampler = RenewalSampler::new(&cfg.kind());
            drive(
                cfg,
                || RenewalProcess {
                    sampler: sampler.clone(),
                    next_detection: 0.0,
                },
                &mut rec,
            )
        }
    }
    rec
}

fn into_trace(cfg: &SimConfig, rec: Recorder) -> EventTrace {
    EventTrace {
        detections: rec.detections.unwrap_or_default(),
        emissions: rec.emissions,
        horizon: cfg.horizon(),
    }
}

/// Event-level simulation of emitter, losses and detector.
pub fn simulate_physical(cfg: &SimConfig) -> EventTrace {
    let cfg = SimConfig {
        mode: SimMode::Physical,
        ..cfg.clone()
    };
    into_trace(&cfg, run(&cfg, true))
}

/// i.i.d. inter-detection intervals drawn from the interval law.
pub fn simulate_paper_renewal(cfg: &SimConfig) -> EventTrace {
    let cfg = SimConfig {
        mode: SimMode::PaperRenewal,
        ..cfg.clone()
    };
    into_trace(&cfg, run(&cfg, true))
}

/// Runs the mode selected in `cfg`.
pub fn simulate(cfg: &SimConfig) -> EventTrace {
    into_trace(cfg, run(cfg, true))
}

/// Per-window counts without keeping timestamps.
pub fn simulate_counts(cfg: &SimConfig) -> Vec<u64> {
    run(cfg, false).counts
}

/// Counting statistics over the windows of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub mean_stderr: f64,
    pub variance_stderr: f64,
    /// Absent when no window recorded a detection.
    pub fano: Option<f64>,
    pub fano_stderr: Option<f64>,
    pub fano_missing_reason: Option<&'static str>,
    pub total_detections: u64,
    pub config: SimConfig,
}

impl WindowStats {
    pub fn mandel_q(&self) -> Option<f64> {
        self.fano.map(|f| f - 1.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: i128,
    s1: i128,
    s2: i128,
}

impl Sums {
    fn of(counts: &[u64]) -> Self {
        counts.iter().fold(Sums::default(), |acc, &c| Sums {
            n: acc.n + 1,
            s1: acc.s1 + c as i128,
            s2: acc.s2 + (c as i128) * (c as i128),
        })
    }

    fn minus(self, other: Sums) -> Sums {
        Sums {
            n: self.n - other.n,
            s1: self.s1 - other.s1,
            s2: self.s2 - other.s2,
        }
    }

    fn mean(&self) -> f64 {
        self.s1 as f64 / self.n as f64
    }

    /// Exact in integers before the final division.
    fn variance(&self) -> f64 {
        let num = self.n * self.s2 - self.s1 * self.s1;
        num as f64 / (self.n * (self.n - 1)) as f64
    }

    fn fano(&self) -> Option<f64> {
        (self.s1 > 0).then(|| self.variance() / self.mean())
    }
}

/// Delete-one-batch jackknife standard error.
fn jackknife(estimates: &[f64]) -> f64 {
    let g = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / g;
    let ss: f64 = estimates.iter().map(|e| (e - mean).powi(2)).sum();
    ((g - 1.0) / g * ss).sqrt()
}

/// Statistics of per-window counts; standard errors from a delete-one-batch
/// jackknife over contiguous batches of windows.
pub fn stats_from_counts(counts: &[u64], cfg: &SimConfig) -> Result<WindowStats> {
    if counts.len() < 2 {
        return Err(Error::invalid("counts", "need at least two windows"));
    }
    let total = Sums::of(counts);
    let batches = JACKKNIFE_BATCHES.min(counts.len());
    let bounds: Vec<usize> = (0..=batches).map(|b| b * counts.len() / batches).collect();
    let leave_out: Vec<Sums> = bounds
        .windows(2)
        .map(|w| total.minus(Sums::of(&counts[w[0]..w[1]])))
        .collect();
    let usable = leave_out.iter().all(|s| s.n >= 2);

    let se = |f: &dyn Fn(&Sums) -> Option<f64>| -> Option<f64> {
        if !usable {
            return None;
        }
        let est: Option<Vec<f64>> = leave_out.iter().map(f).collect();
        est.map(|e| jackknife(&e))
    };

    let fano = total.fano();
    let fano_stderr = fano.and_then(|_| se(&|s: &Sums| s.fano()));
    Ok(WindowStats {
        mean: total.mean(),
        variance: total.variance(),
        mean_stderr: (total.variance() / total.n as f64).sqrt(),
        variance_stderr: se(&|s: &Sums| Some(s.variance())).unwrap_or(f64::NAN),
        fano,
        fano_stderr,
        fano_missing_reason: fano
            .is_none()
            .then_some("no detections in any window; the Fano factor is undefined"),
        total_detections: total.s1 as u64,
        config: cfg.clone(),
    })
}

/// Window statistics of a recorded trace.
pub fn window_stats(trace: &EventTrace, cfg: &SimConfig) -> Result<WindowStats> {
    let t = cfg.window.duration();
    let mut counts = vec![0u64; cfg.window_count];
    for &d in &trace.detections {
        if !(d >= 0.0 && d < cfg.horizon()) {
            return Err(Error::invalid(
                "trace",
                format!("detection at {d} lies outside the configured horizon"),
            ));
        }
        counts[((d / t) as usize).min(cfg.window_count - 1)] += 1;
    }
    stats_from_counts(&counts, cfg)
}

/// Simulation plan shared by every point of a Monte Carlo sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McPlan {
    pub window_count: usize,
    /// Window length in units of the mean inter-detection interval at each point.
    pub intervals_per_window: f64,
    pub seed: u64,
    pub mode: SimMode,
}

/// Configuration of the `index`-th sweep point.
pub fn sweep_config(
    index: usize,
    ratio: f64,
    mu2: f64,
    eta: f64,
    deadtime_over_tau: f64,
    plan: &McPlan,
) -> Result<SimConfig> {
    let kind = sweep_kind(ratio, mu2, eta, deadtime_over_tau)?;
    let window = WindowSpec::new(plan.intervals_per_window * kind.mean_interval())?;
    let detector = DetectorParams::new(eta, deadtime_over_tau / mu2)?;
    SimConfig::new(
        *kind.rates(),
        detector,
        window,
        plan.window_count,
        derive_seed(plan.seed, index as u64),
        plan.mode,
    )
}

/// Monte Carlo Fano factor along `ratio_grid`, with jackknife errors per point.
pub fn fano_curve_mc(
    ratio_grid: &[f64],
    mu2: f64,
    eta: f64,
    deadtime_over_tau: f64,
    plan: &McPlan,
) -> Result<FanoCurve> {
    check_grid(ratio_grid)?;
    let points = ratio_grid
        .par_iter()
        .enumerate()
        .map(|(i, &ratio)| {
            let cfg = sweep_config(i, ratio, mu2, eta, deadtime_over_tau, plan)?;
            let stats = stats_from_counts(&simulate_counts(&cfg), &cfg)?;
            let fano = stats
                .fano
                .ok_or_else(|| Error::Simulation(format!("no detections at ratio {ratio}")))?;
            Ok(FanoPoint {
                ratio,
                fano,
                stderr: stats.fano_stderr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FanoCurve {
        eta,
        deadtime_over_tau,
        points,
    })
}

/// Writes detection timestamps, one per line, behind `#` header lines.
pub fn write_trace<W: Write>(trace: &EventTrace, cfg: &SimConfig, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# detection timestamps")?;
    writeln!(
        out,
        "# mu1={} mu2={} eta={} deadtime={} window={} windows={} seed={} mode={:?}",
        cfg.rates.mu1(),
        cfg.rates.mu2(),
        cfg.detector.eta(),
        cfg.detector.deadtime(),
        cfg.window.duration(),
        cfg.window_count,
        cfg.seed,
        cfg.mode
    )?;
    writeln!(out, "# horizon={}", trace.horizon)?;
    for t in &trace.detections {
        writeln!(out, "{t:.12}")?;
    }
    Ok(())
}

/// Reads timestamps written by [`write_trace`]; `#` lines and blank lines are skipped.
pub fn read_trace<R: BufRead>(input: R, horizon: f64) -> Result<EventTrace> {
    let mut detections = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Simulation(format!("reading trace: {e}")))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: f64 = line
            .parse()
            .map_err(|_| Error::Simulation(format!("line {}: not a timestamp: {line}", lineno + 1)))?;
        detections.push(t);
    }
    EventTrace::from_detections(detections, horizon)
}
