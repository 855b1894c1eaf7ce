//! Photon-counting statistics of a continuously excited two-level single-photon
//! source observed through a lossy, dead-time-limited detector.
//!
//! The same quantities are available through three independent routes:
//!
//! - [`analytics`]: closed-form finite-window and asymptotic moments and Fano factors;
//! - [`inversion`]: the full counting distribution by numerical Laplace inversion,
//!   with a brute-force convolution oracle;
//! - [`simulator`]: Monte Carlo event streams, either event by event or by sampling
//!   renewal intervals from the model's interval law.
//!
//! [`model`] holds the parameters and the interval densities and transforms all
//! three build on. [`validation`] runs the cross-route checks.

pub mod analytics;
pub mod error;
pub mod inversion;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod simulator;
pub mod validation;

pub use analytics::{FanoCurve, FanoPoint, MomentPair, SaturationResult, WindowSpec};
pub use error::{Error, Result};
pub use inversion::{CountingDistribution, InversionConfig, InversionMethod};
pub use model::{DetectorParams, DistributionKind, Efficiency, PumpParams, RateParams, RootPair};
pub use simulator::{EventTrace, SimConfig, SimMode, WindowPartition, WindowStats};
