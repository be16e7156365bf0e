//! Phase-space simulation of open collective spin systems.
//!
//! Spins are mapped onto pairs of Schwinger bosons, the master equation is
//! turned into Ito stochastic equations for the boson amplitudes, and
//! ensembles of trajectories are averaged into spin moments. An exact
//! Lindblad solver for one or two sites serves as a reference.

pub mod error;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod sampler;
pub mod sde;

pub use error::{EngineError, ModelError, OracleError};
pub use model::{Boundary, DissipatorTerm, HamiltonianTerm, ResolvedTerm, SiteSpec, SpinModel};
pub use observables::{CorrelationProfile, Obs, ObservableSeries, SpinMoments, Squeezing};
pub use oracle::{exact_series, steady_state, DensityMatrix, ExactRun, Tolerances};
pub use sampler::{DistributionKind, InitialState, PhasePoint};
pub use sde::{evolve_ensemble, Diagnostics, EnsembleAccumulator, EnsembleRun, IntegratorConfig, RuleOptions};
