//! Cross-positive linear maps on matrix spaces, through real algebraic
//! geometry.
//!
//! A ∗-linear map `A : M_n(ℝ) → M_n(ℝ)` is *cross-positive* when
//! `⟨A(U), V⟩ ≥ 0` for all PSD U, V with `⟨U, V⟩ = 0`, and *completely
//! cross-positive* when every ampliation `I_k ⊗ A` is cross-positive. Via
//! the biform `p_A(x, y) = yᵀ A(xxᵀ) y` these properties become,
//! respectively, nonnegativity of `p_A` on the variety `V(xᵀy)` and a
//! sum-of-squares representation of `p_A` modulo the ideal `(xᵀy)` — which
//! is where semidefinite programming takes over.
//!
//! The crate provides:
//!
//! - [`polyalg`] — exact and floating-point biform algebra: the map ↔ biform
//!   correspondence, drift maps `CX + XCᵀ`, reduction mod `(xᵀy)`, the
//!   parameterization `Ψ` and the matrix polynomial `Q_A`;
//! - [`certify`] — SDP-backed certificates: sums of squares modulo the
//!   ideal, Positivstellensatz certificates of nonnegativity on `V(xᵀy)`,
//!   heuristic falsification, and the δ-bisection;
//! - [`generator`] — the randomized construction of quadratic forms
//!   nonnegative on the rank-one traceless variety but not sums of squares,
//!   i.e. of proper cross-positive maps;
//! - [`stiefel`] — the invariant measure on orthonormal 2-frames: exact
//!   degree-2/4 moments, Monte Carlo integration, L²/L⁴ norms and the
//!   reverse Hölder bounds;
//! - [`nsatz3`] — the n = 3 certificates: trace/determinant tests for 2×2
//!   quartic matrix polynomials, denominator-power search, and the
//!   constructive drift decomposition for singular maps;
//! - [`sdp`] — the solver-agnostic conic problem description plus the
//!   built-in dense interior-point backend;
//! - [`io`] — JSON schemas and run reports tying the CLI together.
//!
//! Runnable walkthroughs for each capability live under `examples/`.

pub mod certify;
pub mod fixtures;
pub mod generator;
pub mod io;
pub mod nsatz3;
pub mod polyalg;
pub mod scalar;
pub mod sdp;
pub mod stiefel;

pub use polyalg::{BiformQuad, BilinearForm, MatrixQuarticPoly, QAlphaForm, SymMapTensor};
pub use scalar::{Coeff, Scalar};

/// Crate version reported in run artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
