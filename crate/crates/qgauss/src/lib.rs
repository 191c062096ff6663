//! Numerical realization of q-Gaussian processes.
//!
//! The crate builds truncated q-Fock spaces and their operator algebra
//! (creation/annihilation operators, Wick products, second quantization),
//! the q-Hermite orthogonal-polynomial analytics (orthogonality measure,
//! Gauss quadrature, Mehler kernel), and the Markov transition kernels of
//! q-Gaussian Markov processes.  Classical versions of these processes are
//! sampled by inverse-CDF Markov chains, and their time-ordered moments are
//! cross-validated three ways: exact Fock-matrix computation, transition-kernel
//! quadrature, and Monte Carlo.
//!
//! Modules follow the pipeline:
//!
//! - [`qcore`]: q-integers, q-factorials, q-binomials, Pochhammer symbols,
//!   permutation inversion counts.
//! - [`fock`]: truncated q-Fock space over a finite-dimensional one-particle
//!   space, operator matrices, vacuum moments.
//! - [`wick`]: normal-ordered Wick products and the q-Hermite identification.
//! - [`qhermite`]: q-Hermite polynomials, the measure `nu_q`, Gauss rules,
//!   Mehler kernel in series and product form.
//! - [`processes`]: covariance functions, Markov/martingale criteria,
//!   Hilbert-space embeddings, lambda quantities.
//! - [`kernels`]: transition kernels (general q, free closed forms, fermionic
//!   q = -1 tables), Chapman-Kolmogorov checks, the free OU generator, and
//!   the ultracontractivity constant.
//! - [`sampler`]: classical-version path sampling and the three-way moment
//!   cross-validation report.
//! - [`cli`]: command-line front end.

pub mod cli;
pub mod fock;
pub mod kernels;
pub mod processes;
pub mod qcore;
pub mod qhermite;
pub mod sampler;
pub mod wick;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum QgError {
    /// A numeric argument is outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A transition kernel was requested at a degenerate pair of times
    /// (|lambda_{s,t}| = 1 or a vanishing marginal variance).
    #[error("degenerate kernel: {0}")]
    Degenerate(String),
    /// A grid Gram matrix failed the positive-semidefiniteness tolerance.
    #[error("not a covariance: smallest eigenvalue {eigenvalue:.3e} below tolerance")]
    NotPositiveDefinite { eigenvalue: f64 },
    /// A covariance failed the Markov criterion where one was required.
    #[error("covariance is not Markov (max violation {violation:.3e} at triple {triple:?})")]
    NotMarkov { violation: f64, triple: (f64, f64, f64) },
    /// A requested truncation exceeds the basis-size guardrail.
    #[error("basis too large: {size} words exceeds guardrail {cap}")]
    TooLarge { size: usize, cap: usize },
    /// A quadrature rule has too few points for the requested degree.
    #[error("quadrature rule of {points} points cannot integrate degree {degree}")]
    InsufficientQuadrature { points: usize, degree: usize },
    /// An operator violates a contraction bound.
    #[error("operator is not a contraction: norm {norm}")]
    NotContraction { norm: f64 },
    /// Configuration or input-file problem.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QgError>;
