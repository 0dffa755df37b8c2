//! Orthogonal polynomials for weights `e^{-V(x)}` with polynomial `V`:
//! recurrence coefficients, the Jacobi operator, and the explicit 2x2
//! differential and deformation systems built from them, together with a
//! residual-based verification harness.
//!
//! Potentials use the normalization `V(x) = sum_k (1/k) u_k x^k`.

pub mod error;
pub mod jacobi;
pub mod laxpair;
pub mod model;
pub mod moments;
pub mod poly;
pub mod potential;
pub mod quadrature;
pub mod real;
pub mod verify;
pub mod wavefunction;

pub use error::{Error, Result};
pub use jacobi::{BandedOperator, Powers};
pub use laxpair::{DerivativeData, LaxSystem, PolyMatrix2x2};
pub use model::Model;
pub use moments::{MomentTable, RecurrenceCoefficients, SolveOptions};
pub use poly::Poly;
pub use potential::Potential;
pub use real::{Real, DEFAULT_PRECISION};
pub use verify::{VerificationReport, VerifyConfig};
pub use wavefunction::WaveState;
