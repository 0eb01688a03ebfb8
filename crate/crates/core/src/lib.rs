//! Numerical laboratory for generalized Wigner matrices.
//!
//! A generalized Wigner matrix is a Hermitian random matrix `W` with
//! independent entries (up to symmetry) whose variances `S_ij` have unit row
//! sums. This crate samples such matrices for arbitrary variance profiles and
//! measures the quantities that control eigenvector delocalization:
//!
//! - [`variance_profile`]: profiles `S`, their square roots and the stability
//!   operator `S - 11ᵀ/N`.
//! - [`ensemble`]: reproducible, seeded sampling.
//! - [`spectral`]: the semicircle Stieltjes transform, classical eigenvalue
//!   locations and eigendecompositions.
//! - [`observables`]: the deterministic observable hierarchy built from a
//!   test matrix and the columns of `√S`.
//! - [`resolvent_traces`]: overlaps, one- and two-resolvent traces,
//!   renormalized products and exact resolvent identities.
//! - [`eth_stats`]: windowed overlap statistics and the ETH max statistic.
//! - [`predictions`]: deterministic approximations and error envelopes.
//! - [`experiments`]: seeded Monte Carlo studies, aggregation and output.

pub mod ensemble;
pub mod error;
pub mod eth_stats;
pub mod experiments;
pub mod linalg;
pub mod observables;
pub mod predictions;
pub mod quadrature;
pub mod resolvent_traces;
pub mod spectral;
pub mod variance_profile;

pub use error::{Error, Result};
pub use linalg::{c64, CMat, RMat};

pub use ensemble::{EntryLaw, SampleSpec, WignerSample};
pub use eth_stats::{LambdaEstimate, WindowSpec, XiStatistic};
pub use experiments::{ExperimentConfig, Record, RunResult, Study};
pub use observables::{Observable, ObservableFamily};
pub use predictions::{EnvelopeKind, TwoResolventPrediction};
pub use resolvent_traces::{Flavor, OverlapMatrix, RenormalizedTrace, ResolventSpec};
pub use spectral::{ClassicalLocations, SpectralDecomposition, SpectralPoint};
pub use variance_profile::{SqrtProfile, StabilityOperator, VarianceProfile};
