//! Generalized eigensolves, Dirichlet spectra of single inclusions, and
//! resolvent solves for the constant-load response `b_λ`.

pub mod cache;
pub mod eigs;
pub mod inclusion;

pub use cache::{CacheManifest, EigenCache, ManifestEntry, CACHE_SCHEMA};
pub use eigs::{solve_eigs, EigOptions, EigenPairs};
pub use inclusion::{
    dirichlet_spectrum, solve_b_lambda, EigenDecomposition, InclusionProblem, ResolventSample, POLE_GUARD,
    RESOLVENT_TOL,
};
