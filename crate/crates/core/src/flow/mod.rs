//! Covariance flow `C_t = (tA + (alpha - t))^{-1}` on `t in [0, beta]`, the
//! renormalised potential and measure it induces, numerical checks of the
//! decomposition identities, and the certified bound
//! `1/gamma <= 1/2 + int_0^beta exp(2 int_0^t chi_s ds) dt`.

mod bound;
mod criterion;
mod potential;
mod quadrature;
mod schedule;

pub use bound::{
    criterion_bound, lsi_bound, lsi_bound_with, meanfield_corollary, BoundReport, BoundSettings,
    ChiGrid, ChiSample, ChiSource, ConstantChi, CriterionBound, Enclosure, ExactChi, FnChi,
    MeanFieldChi, TwoPointRadiusChi, FLAG_NOT_MONOTONE, FLAG_TOLERANCE, FLAG_UNCERTIFIED,
};
pub use criterion::{criterion_batch, verify_criterion_matrix_inequality, CriterionBatch, CriterionWitness};
pub use potential::RenormalizedPotential;
pub use quadrature::{
    gauss_hermite, verify_convolution, verify_decomposition, verify_entropy_decomposition,
    ConvolutionCheck, DecompositionCheck, QuadratureConfig,
};
pub use schedule::CovarianceSchedule;
