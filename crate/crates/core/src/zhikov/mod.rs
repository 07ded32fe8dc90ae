//! β-matrix, β∞ and the limiting spectral sets.

pub mod beta;
pub mod infinity;
pub mod quadrature;
pub mod sets;
pub mod spectrum;

pub use beta::{
    beta_matrix, beta_r, dispersion, max_eigenvalue, nonnegative_count, sym_eigenvalues, BetaEngine, BetaMatrix,
    BetaR, DispersionSolution, EngineOptions, Pole, SpectralEvaluator, SupportAtom, DIM,
};
pub use infinity::{beta_inf_value, beta_infinity, closed_form, BetaInfParams, BetaInfinity};
pub use sets::{BandSample, SetLabel, SpectralSet, SET_SCHEMA};
pub use spectrum::{analyze, lambda_grid, set_g, spectrum_hom, Analysis, GridRow};
