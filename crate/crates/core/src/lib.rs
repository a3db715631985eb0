//! Simulation of few-qubit systems locally coupled to a mix of Markovian
//! (bosonic, weak-coupling) and non-Markovian (spin-star, explicitly evolved)
//! heat baths, with the thermodynamic bookkeeping on top: heat currents,
//! entropy production rate, a non-Markovianity witness built from the
//! non-Markovian dissipators, and the modified second-law margin sigma + M.
//!
//! Units: hbar = k_B = 1 and time is measured in units of the overall coupling
//! scale, so every frequency, temperature and rate in the public API is
//! dimensionless.

pub mod dynamics;
pub mod exec;
pub mod markov;
pub mod model;
pub mod qmath;
pub mod runner;
pub mod sparse;
pub mod thermo;
pub mod verify;

/// Crate-wide error type. Variants map to the failure classes the public
/// operations can hit: bad shapes, contract violations on operator inputs,
/// configuration problems, math domain errors, and integrator blow-up.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("operator not Hermitian: {0}")]
    NotHermitian(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(
        "integration unstable at t = {t_last_good}: pre-renormalization trace drift \
         {drift:.3e} exceeds {limit:.1e}; reduce dt"
    )]
    Unstable {
        t_last_good: f64,
        drift: f64,
        limit: f64,
    },
    #[error("numerical consistency failure: {0}")]
    Consistency(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Pinned numerical tolerances. Centralized so the acceptance checks, the
/// verify suite and the library agree on one set of numbers.
pub mod tol {
    /// Hermiticity gate for operator inputs (max-norm, relative to scale).
    pub const HERMITICITY: f64 = 1e-10;
    /// Entrywise agreement between the joint-evolution route and the reduced
    /// closure route for the same generator.
    pub const CLOSURE: f64 = 1e-10;
    /// Relative width used when grouping Bohr frequencies into eigenoperators.
    pub const OMEGA_GROUP_REL: f64 = 1e-9;
    /// Relative detailed-balance check on rate pairs.
    pub const DETAILED_BALANCE_REL: f64 = 1e-9;
    /// Eigenvalue floor applied before any log of a density matrix.
    pub const EPS_LOG_DEFAULT: f64 = 1e-12;
    /// Samples whose reduced-state minimum eigenvalue is below this multiple of
    /// the floor are flagged as log-floored and masked from second-law checks.
    pub const FLOOR_FLAG_FACTOR: f64 = 10.0;
    /// Per-step pre-renormalization trace drift that aborts the integration.
    pub const TRACE_DRIFT_ABORT: f64 = 1e-6;
    /// Per-step pre-renormalization trace drift considered healthy.
    pub const TRACE_DRIFT_STEP: f64 = 1e-7;
    /// Post-renormalization trace error allowed at recorded samples.
    pub const TRACE_SAMPLE: f64 = 1e-9;
    /// Most negative eigenvalue tolerated on an evolved density matrix.
    pub const MIN_EIG: f64 = -1e-8;
    /// Scale factor for second-law margins: margin >= -SPOHN_REL * max(1, max|sigma|).
    pub const SPOHN_REL: f64 = 1e-6;
    /// Agreement between the balance form and the relative-entropy form of the
    /// entropy production rate.
    pub const EPR_FORMS: f64 = 1e-8;
    /// Spread allowed across commutator-split weights p in {0, 0.5, 1}.
    pub const P_INVARIANCE: f64 = 1e-10;
    /// Minimum measured convergence order for the fixed-step integrator.
    pub const RK4_ORDER_MIN: f64 = 3.7;
    /// Entries below this (relative to the max entry) are treated as structural
    /// zeros when splitting a Hermitian matrix into connected blocks.
    pub const BLOCK_DROP_REL: f64 = 1e-14;
}
