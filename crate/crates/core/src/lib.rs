//! Numerical laboratory for log-Sobolev bounds of ferromagnetic Ising models.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] builds and normalises coupling matrices,
//! * [`exact`] enumerates small systems exactly (partition functions,
//!   correlations, susceptibility),
//! * [`glauber`] builds the reversible single-flip generator and computes
//!   spectral gaps, entropy ratios and entropy-decay traces,
//! * [`flow`] implements the covariance flow, the renormalised potential,
//!   the decomposition checks and the certified bound on the inverse
//!   log-Sobolev constant,
//! * [`inequalities`] runs batch checks of the correlation inequalities,
//! * [`mcmc`] is a heat-bath sampler for lattices beyond enumeration,
//! * [`report`] holds serialisation helpers shared with the CLI.

pub mod error;
pub mod exact;
pub mod flow;
pub mod glauber;
pub mod inequalities;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use exact::{
    susceptibility, truncated_correlation, two_point_spectral_radius, CorrelationMatrix,
    EnumerationCaps, ExactEnsemble,
};
pub use flow::{
    criterion_bound, lsi_bound, meanfield_corollary, BoundReport, BoundSettings, ChiSource,
    CovarianceSchedule,
};
pub use glauber::{
    entropy, estimate_inverse_lsi, spectral_gap, DensityFunction, GeneratorMatrix, LsiEstimate,
    OptimizerSettings,
};
pub use inequalities::{FieldSampler, ViolationReport};
pub use mcmc::{ChainConfig, SusceptibilityEstimate};
pub use model::{build_coupling, CouplingMatrix, Lattice, ModelSpec, Normalization};
