//! Numerical toolkit for averaging operators `(U f)(x) = int_0^1 f(t x) psi(t) dt`
//! on weighted `L^1` spaces of the half-line.

pub mod condition_c;
pub mod error;
pub mod float_serde;
pub mod function;
pub mod grid;
pub mod measures;
pub mod operator;
pub mod quadrature;
pub mod reproduce;
pub mod suites;
pub mod weakcompact;
pub mod weights;

pub use error::{Error, Result};
pub use weights::{Monotonicity, ProblemInstance, PsiKind, PsiProfile, Weight, WeightKind, WeightValue};
pub use condition_c::{certify, certify_with, phi, phi_profile, BoundednessVerdict, CertifyOptions, PhiProfile, Status};
pub use function::{FunctionKind, Term, TestFunction};
