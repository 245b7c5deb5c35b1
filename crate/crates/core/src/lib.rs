//! Second-order `L²` flow of inextensible planar elastic curves with hinged ends.
//!
//! The state is the tangent angle `φ(s, t)` of an arclength-parametrized curve of
//! length `L`. It evolves by `∂ₜφ = ∂ₛ²φ + λ₁ sin φ − λ₂ cos φ` with Neumann
//! ends, where the multipliers `λ` keep the endpoint displacement `∫T ds` fixed.
//!
//! - [`grid_curve`]: grids, angle fields, curve reconstruction, energies.
//! - [`multipliers`]: Gram matrix, multipliers, determinant certificate.
//! - [`flow`]: explicit and IMEX time stepping, full runs.
//! - [`heat_picard`]: independent heat-kernel fixed-point solver for short times.
//! - [`diagnostics`]: energy identities, parity checks, norms, run summaries.
//! - [`presets`], [`manifest`], [`output`], [`plots`]: run configuration and files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod grid_curve;
pub mod heat_picard;
pub mod linalg;
pub mod manifest;
pub mod multipliers;
pub mod output;
pub mod par;
pub mod plots;
pub mod presets;

pub use error::{Error, Result};
pub use flow::{run_flow, FlowConfig, FlowTrajectory, Scheme, Termination};
pub use grid_curve::{AngleField, ConstraintSpec, CurveMode, Grid};
pub use multipliers::MultiplierMethod;
pub use par::Execution;
