//! Physical parameters and the inter-event laws of the emitter/detector chain.
//!
//! Three interval laws are modelled:
//!
//! * the ideal absorption–emission cycle, a hypoexponential with rates μ1 and μ2;
//! * the lossy inter-detection law obtained by geometric thinning with efficiency η;
//! * the lossy law truncated at a detector dead time D and renormalized.
//!
//! The lossy law is itself hypoexponential, with rates `mu_m/2` and `mu_p/2` taken
//! from [`RootPair`]. All three laws are therefore members of one family, a
//! hypoexponential with rates `a <= b` delayed by `D`. [`PhaseLaw`] evaluates that
//! family in a form free of cancellation at `a == b` and of underflow for large `D`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative rate gap below which two exponential rates are treated as equal and
/// the analytic limit of the hypoexponential is used instead.
pub const LIMIT_GAP: f64 = 1e-6;

fn check_rate(name: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::invalid(
            name,
            format!("must be positive and finite, got {value}"),
        ));
    }
    Ok(value)
}

/// Absorption rate μ1 and emission rate μ2 of the two-level cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    mu1: f64,
    mu2: f64,
}

impl RateParams {
    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        Ok(Self {
            mu1: check_rate("mu1", mu1)?,
            mu2: check_rate("mu2", mu2)?,
        })
    }

    /// Rates from the pump-to-decay ratio μ1/μ2 at fixed μ2.
    pub fn from_ratio(ratio: f64, mu2: f64) -> Result<Self> {
        check_rate("ratio", ratio)?;
        Self::new(ratio * mu2, mu2)
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    /// Excited-state lifetime τ = 1/μ2.
    pub fn tau(&self) -> f64 {
        1.0 / self.mu2
    }

    pub fn ratio(&self) -> f64 {
        self.mu1 / self.mu2
    }

    /// Mean duration of one absorption–emission cycle.
    pub fn mean_cycle(&self) -> f64 {
        1.0 / self.mu1 + 1.0 / self.mu2
    }
}

/// Pump coupling α, excitation power P and lifetime τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpParams {
    alpha: f64,
    power: f64,
    tau: f64,
}

impl PumpParams {
    pub fn new(alpha: f64, power: f64, tau: f64) -> Result<Self> {
        check_rate("alpha", alpha)?;
        check_rate("tau", tau)?;
        if !power.is_finite() || power < 0.0 {
            return Err(Error::invalid(
                "power",
                format!("must be non-negative and finite, got {power}"),
            ));
        }
        Ok(Self { alpha, power, tau })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// μ1 = α·P and μ2 = 1/τ. Fails at zero power since the cycle never starts.
    pub fn to_rates(&self) -> Result<RateParams> {
        if self.power == 0.0 {
            return Err(Error::invalid("power", "zero power gives no absorption"));
        }
        RateParams::new(self.alpha * self.power, 1.0 / self.tau)
    }
}

/// Detection efficiency η in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Efficiency(f64);

impl Efficiency {
    pub const PERFECT: Efficiency = Efficiency(1.0);

    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid("eta", format!("must lie in (0, 1], got {eta}")));
        }
        Ok(Self(eta))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Detection efficiency and non-paralyzable dead time D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    eta: Efficiency,
    deadtime: f64,
}

impl DetectorParams {
    pub fn new(eta: f64, deadtime: f64) -> Result<Self> {
        let eta = Efficiency::new(eta)?;
        if !deadtime.is_finite() || deadtime < 0.0 {
            return Err(Error::invalid(
                "deadtime",
                format!("must be non-negative and finite, got {deadtime}"),
            ));
        }
        Ok(Self { eta, deadtime })
    }

    /// Unit efficiency, no dead time.
    pub fn ideal() -> Self {
        Self {
            eta: Efficiency::PERFECT,
            deadtime: 0.0,
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta.value()
    }

    pub fn efficiency(&self) -> Efficiency {
        self.eta
    }

    pub fn deadtime(&self) -> f64 {
        self.deadtime
    }
}

/// The two decay constants μp ≥ μm of the lossy inter-detection density.
///
/// The density decays as `exp(-mu_m t / 2)` and `exp(-mu_p t / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPair {
    pub mu_p: f64,
    pub mu_m: f64,
}

/// Roots of the lossy law. `mu_m` comes from the product identity, so it keeps
/// full relative precision when it is much smaller than `mu_p`.
pub fn root_pair(p: &RateParams, eta: Efficiency) -> RootPair {
    let (mu1, mu2, eta) = (p.mu1, p.mu2, eta.value());
    let sum = mu1 + mu2;
    // (μ1+μ2)² − 4ημ1μ2 rewritten as a sum of non-negative terms
    let disc = (mu1 - mu2).powi(2) + 4.0 * (1.0 - eta) * mu1 * mu2;
    let mu_p = sum + disc.sqrt();
    let mu_m = 4.0 * eta * mu1 * mu2 / mu_p;
    RootPair { mu_p, mu_m }
}

/// Absorption waiting-time density μ1·exp(−μ1 t)θ(t).
pub fn pdf_abs(t: f64, p: &RateParams) -> f64 {
    exponential_pdf(t, p.mu1)
}

/// Emission waiting-time density μ2·exp(−μ2 t)θ(t).
pub fn pdf_em(t: f64, p: &RateParams) -> f64 {
    exponential_pdf(t, p.mu2)
}

fn exponential_pdf(t: f64, rate: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        rate * (-rate * t).exp()
    }
}

/// Density of one full absorption–emission cycle.
pub fn pdf_cycle(t: f64, p: &RateParams) -> f64 {
    PhaseLaw::cycle(p).pdf(t)
}

/// Lossy inter-detection density.
pub fn pdf_lossy(t: f64, p: &RateParams, eta: Efficiency) -> f64 {
    PhaseLaw::lossy(p, eta).pdf(t)
}

/// Lossy inter-detection density truncated at the dead time and renormalized.
/// At `t == D` the right-hand limit is returned.
pub fn pdf_deadtime(t: f64, p: &RateParams, d: &DetectorParams) -> f64 {
    PhaseLaw::deadtime(p, d).pdf(t)
}

fn check_pole(s: Complex64, rate: f64) -> Result<()> {
    if (s + rate).norm() <= 4.0 * f64::EPSILON * rate {
        return Err(Error::Pole { s });
    }
    Ok(())
}

/// μ1μ2 / ((μ1+s)(μ2+s)).
pub fn laplace_cycle(s: Complex64, p: &RateParams) -> Result<Complex64> {
    check_pole(s, p.mu1)?;
    check_pole(s, p.mu2)?;
    Ok(p.mu1 * p.mu2 / ((s + p.mu1) * (s + p.mu2)))
}

/// Transform of the lossy density, ηf̃/(1 − (1−η)f̃), evaluated in its factored
/// form ημ1μ2/((s + μm/2)(s + μp/2)) so the only singularities are the true poles.
pub fn laplace_lossy(s: Complex64, p: &RateParams, eta: Efficiency) -> Result<Complex64> {
    let roots = root_pair(p, eta);
    let (a, b) = (0.5 * roots.mu_m, 0.5 * roots.mu_p);
    check_pole(s, a)?;
    check_pole(s, b)?;
    Ok(eta.value() * p.mu1 * p.mu2 / ((s + a) * (s + b)))
}

/// Transform of the dead-time-truncated density.
pub fn laplace_deadtime(s: Complex64, p: &RateParams, d: &DetectorParams) -> Result<Complex64> {
    PhaseLaw::deadtime(p, d).laplace(s)
}

/// Laplace transform in T of the probability generating function G(T, ξ),
/// given the interval transform `ftilde = f̃(s)`.
pub fn pgf_laplace(s: Complex64, xi: Complex64, ftilde: Complex64) -> Result<Complex64> {
    if s.norm() == 0.0 {
        return Err(Error::Domain("PGF transform is singular at s = 0"));
    }
    let denom = Complex64::new(1.0, 0.0) - xi * ftilde;
    if denom.norm() <= 4.0 * f64::EPSILON {
        return Err(Error::Domain("PGF transform is singular at xi * f(s) = 1"));
    }
    Ok((1.0 - ftilde) / (s * denom))
}

/// Which inter-detection law is in force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind {
    IdealCycle(RateParams),
    Lossy(RateParams, Efficiency),
    LossyDeadtime(RateParams, DetectorParams),
}

impl DistributionKind {
    /// The simplest variant that describes `rates` seen through `detector`.
    pub fn new(rates: RateParams, detector: DetectorParams) -> Self {
        if detector.deadtime() > 0.0 {
            DistributionKind::LossyDeadtime(rates, detector)
        } else if detector.eta() < 1.0 {
            DistributionKind::Lossy(rates, detector.efficiency())
        } else {
            DistributionKind::IdealCycle(rates)
        }
    }

    pub fn rates(&self) -> &RateParams {
        match self {
            DistributionKind::IdealCycle(p) | DistributionKind::Lossy(p, _) | DistributionKind::LossyDeadtime(p, _) => {
                p
            }
        }
    }

    pub fn eta(&self) -> f64 {
        match self {
            DistributionKind::IdealCycle(_) => 1.0,
            DistributionKind::Lossy(_, eta) => eta.value(),
            DistributionKind::LossyDeadtime(_, d) => d.eta(),
        }
    }

    pub fn deadtime(&self) -> f64 {
        match self {
            DistributionKind::LossyDeadtime(_, d) => d.deadtime(),
            _ => 0.0,
        }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match self {
            DistributionKind::IdealCycle(p) => pdf_cycle(t, p),
            DistributionKind::Lossy(p, eta) => pdf_lossy(t, p, *eta),
            DistributionKind::LossyDeadtime(p, d) => pdf_deadtime(t, p, d),
        }
    }

    pub fn laplace(&self, s: Complex64) -> Result<Complex64> {
        match self {
            DistributionKind::IdealCycle(p) => laplace_cycle(s, p),
            DistributionKind::Lossy(p, eta) => laplace_lossy(s, p, *eta),
            DistributionKind::LossyDeadtime(p, d) => laplace_deadtime(s, p, d),
        }
    }

    pub fn phase_law(&self) -> PhaseLaw {
        match self {
            DistributionKind::IdealCycle(p) => PhaseLaw::cycle(p),
            DistributionKind::Lossy(p, eta) => PhaseLaw::lossy(p, *eta),
            DistributionKind::LossyDeadtime(p, d) => PhaseLaw::deadtime(p, d),
        }
    }

    /// Mean inter-detection interval.
    pub fn mean_interval(&self) -> f64 {
        self.phase_law().mean()
    }
}

/// Hypoexponential law with rates `a <= b`, conditioned to exceed `delay`.
///
/// With `q = (1 − exp(−(b−a)·D))/(b−a)` (equal to `D` when `a == b`) the density is
///
/// ```text
/// f(t) = a·b·exp(−a(t−D))·r(t) / (1 + a·q),   r(t) = (1 − exp(−(b−a)t))/(b−a),   t >= D
/// ```
///
/// which equals the truncated–renormalized form term by term but never subtracts
/// nearly equal exponentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLaw {
    slow: f64,
    fast: f64,
    delay: f64,
}

impl PhaseLaw {
    pub fn new(rate1: f64, rate2: f64, delay: f64) -> Self {
        let (mut slow, mut fast) = if rate1 <= rate2 { (rate1, rate2) } else { (rate2, rate1) };
        if fast - slow <= LIMIT_GAP * (fast + slow) {
            let mid = 0.5 * (slow + fast);
            slow = mid;
            fast = mid;
        }
        Self { slow, fast, delay }
    }

    pub fn cycle(p: &RateParams) -> Self {
        Self::new(p.mu1, p.mu2, 0.0)
    }

    pub fn lossy(p: &RateParams, eta: Efficiency) -> Self {
        let roots = root_pair(p, eta);
        Self::new(0.5 * roots.mu_m, 0.5 * roots.mu_p, 0.0)
    }

    pub fn deadtime(p: &RateParams, d: &DetectorParams) -> Self {
        let roots = root_pair(p, d.efficiency());
        Self::new(0.5 * roots.mu_m, 0.5 * roots.mu_p, d.deadtime())
    }

    pub fn slow_rate(&self) -> f64 {
        self.slow
    }

    pub fn fast_rate(&self) -> f64 {
        self.fast
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    fn gap(&self) -> f64 {
        self.fast - self.slow
    }

    /// `q` of the type-level docs.
    fn delay_weight(&self) -> f64 {
        expm1_ratio(self.gap(), self.delay)
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t < self.delay {
            return 0.0;
        }
        let (a, b) = (self.slow, self.fast);
        let q = self.delay_weight();
        a * b * (-a * (t - self.delay)).exp() * expm1_ratio(self.gap(), t) / (1.0 + a * q)
    }

    pub fn laplace(&self, s: Complex64) -> Result<Complex64> {
        let undelayed = self.laplace_undelayed(s)?;
        if self.delay == 0.0 {
            Ok(undelayed)
        } else {
            Ok((-s * self.delay).exp() * undelayed)
        }
    }

    /// Transform of the density shifted left by the delay, `e^{sD}·f̃(s)`.
    pub fn laplace_undelayed(&self, s: Complex64) -> Result<Complex64> {
        let (a, b) = (self.slow, self.fast);
        check_pole(s, a)?;
        check_pole(s, b)?;
        let q = self.delay_weight();
        Ok(a * b * (1.0 + (s + a) * q) / ((s + a) * (s + b) * (1.0 + a * q)))
    }

    /// Probability that the slow phase is still running at the dead-time boundary,
    /// given that the interval outlasts it.
    pub fn slow_phase_weight(&self) -> f64 {
        1.0 / (1.0 + self.slow * self.delay_weight())
    }

    /// Mean of the interval beyond the delay.
    fn excess_mean(&self) -> f64 {
        let (a, b) = (self.slow, self.fast);
        let q = self.delay_weight();
        (a + b + a * a * q) / (a * b * (1.0 + a * q))
    }

    pub fn mean(&self) -> f64 {
        self.delay + self.excess_mean()
    }

    pub fn variance(&self) -> f64 {
        let (a, b) = (self.slow, self.fast);
        let q = self.delay_weight();
        let num = (a * a + b * b) * (1.0 + 2.0 * a * q) + a.powi(4) * q * q;
        num / ((a * b).powi(2) * (1.0 + a * q).powi(2))
    }
}

/// `(1 − exp(−g·x))/g`, continuous at `g = 0` where it equals `x`.
fn expm1_ratio(g: f64, x: f64) -> f64 {
    if g == 0.0 {
        x
    } else {
        -(-g * x).exp_m1() / g
    }
}
