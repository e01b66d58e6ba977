//! Numerical treatment of the one-dimensional conformable fractional
//! Dirac-type integro-differential eigenvalue problem
//!
//! ```text
//! B Y + Omega(x) Y + int_0^x M(x,t) Y d_alpha t = lambda Y   on (0, pi),
//! sin(theta) y1(0) + cos(theta) y2(0) = 0,
//! sin(beta)  y1(pi) + cos(beta)  y2(pi) = 0,
//! ```
//!
//! covering the forward problem (solution traces, characteristic function,
//! spectrum, nodal points), the closed-form large-index expansions of all
//! those quantities, and the inverse nodal problem: recovering the boundary
//! angles, the potentials, or the kernel's antisymmetric diagonal trace from
//! a dense set of nodal points.
//!
//! All numerics run on a uniform grid in the flattened coordinate
//! s = x^alpha/alpha, where the conformable derivative is the ordinary
//! s-derivative. The crate is generic over the floating-point scalar through
//! [`Scalar`]; the `*64` aliases at the root fix `f64`, which is what the CLI
//! and the file formats use.

pub mod asymptotics;
pub mod calculus;
pub mod expr;
pub mod forward;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod model;
pub mod picard;
pub mod scalar;
pub mod spectrum;
pub mod spline;

pub use asymptotics::{
    delta_estimate, eigenvalue_estimate, f_exact, g_exact, node_estimate, phi_estimate,
    potential_functionals, AsymptoticsError, EstimateOrder, PotentialFunctionals,
};
pub use calculus::{frac_derivative, frac_integral, smooth_moving_average};
pub use expr::{ExprError, Expression, Var};
pub use forward::{char_delta, solve_phi, SolutionTrace, SolveError};
pub use grid::{s_of_x, x_of_s, AlphaOrder, GridError, GridFn, SGrid};
pub use inverse::{
    extract_limits, reconstruct, recover_l, recover_mu_derivative, recover_pr, recover_upsilon,
    ExtractOptions, Extrapolation, InverseError, KnownData, LimitExtraction, NodalDataset,
    ReconstructionResult,
};
pub use model::{Model, ModelError, ModelSpec};
pub use picard::picard_solve;
pub use scalar::Scalar;
pub use spectrum::{
    collect_nodes, find_eigenvalues, find_nodes, NodalLine, NodalSet, Spectrum, SpectrumEntry,
    SpectrumError, SpectrumFailure,
};

pub type SGrid64 = SGrid<f64>;
pub type GridFn64 = GridFn<f64>;
pub type Model64 = Model<f64>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type SolutionTrace64 = SolutionTrace<f64>;
pub type Spectrum64 = Spectrum<f64>;
pub type NodalSet64 = NodalSet<f64>;
pub type PotentialFunctionals64 = PotentialFunctionals<f64>;
pub type NodalDataset64 = NodalDataset<f64>;
pub type ReconstructionResult64 = ReconstructionResult<f64>;

pub type SGrid32 = SGrid<f32>;
pub type GridFn32 = GridFn<f32>;
pub type Model32 = Model<f32>;
pub type ModelSpec32 = ModelSpec<f32>;
