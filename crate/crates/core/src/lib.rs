//! Numerical laboratory for nonlocal inverse problems on a periodic box.
//!
//! The crate discretizes the fractional Laplacian in two ways (Fourier
//! multiplier and singular kernel), assembles bilinear forms built on it,
//! solves exterior-value problems, and computes the resulting exterior
//! Dirichlet-to-Neumann maps. On top of that it estimates fractional
//! Poincaré constants through generalized eigenproblems and implements the
//! conductivity/Schrödinger correspondence for the fractional conductivity
//! equation, including the construction of conductivity pairs that share
//! partial exterior data.
//!
//! All computations live on a uniform periodic grid ([`Grid`]); fields are
//! stored lexicographically, row-major.

pub mod dnmap;
pub mod error;
pub mod forms;
pub mod fracops;
pub mod grid;
pub mod linalg;
pub mod liouville;
pub mod poincare;
pub mod random;
pub mod solver;
pub mod spectral;
pub mod table;

pub use dnmap::{alessandrini_gap, assemble_dn, window_equal, DNMap};
pub use error::{Error, Result};
pub use forms::{
    coercivity_margin, conductivity_form, delta_budget, dirichlet_form, pdo_form, potential_form,
    BilinearForm, FormKind, PdoSpec,
};
pub use fracops::{
    frac_constant, frac_gradient_pairing, frac_laplacian, gagliardo_seminorm, sobolev_norm,
    BesselMultiplier, Flavor, OperatorKernel,
};
pub use grid::{inner, make_grid, mask_from_predicate, DomainMask, Field, Grid, Shape};
pub use liouville::{
    dn_comparison_gap, liouville_identity_gap, make_conductivity, nonuniqueness_pair,
    reconstruct_conductivity, transform, Conductivity, Direction, Reconstruction,
    ReconstructionOptions,
};
pub use poincare::{
    cylinder_limit, gagliardo_quotient, interpolation_check, poincare_constant,
    poincare_constant_with, rigid_invariance_check, Motion, PoincareEstimate,
};
pub use solver::{
    runge_residual, runge_residual_sequence, solve_adjoint, solve_exterior, ExteriorProblem,
    ExteriorSolver, Solution,
};

/// Largest number of grid points for which dense matrices are assembled.
pub const DENSE_DOF_CAP: usize = 4096;
