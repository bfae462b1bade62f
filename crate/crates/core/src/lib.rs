//! Dynamics of inextensible strings at desk scale.
//!
//! Two solvers share one grid and one set of constitutive maps:
//!
//! * [`regdyn`] integrates the eps-regularized parabolic system in the
//!   velocity / regularized-flux variables (v, tau), semi-implicitly;
//! * [`refdyn`] integrates the original constrained system directly,
//!   resolving the tension multiplier from its two-point boundary value
//!   problem every step and projecting the tangent back to unit length.
//!
//! [`diagnostics`] collects the energies and inequality monitors, and
//! [`youngmeasure`] builds empirical generalized Young measures (oscillation
//! histogram, concentration mass, concentration-angle histogram) from
//! families of fields and evaluates the weak-form residual against them.
//! [`scenario`] holds the presets, the structured-text configuration, file
//! output, and the eps-sweep driver behind the command-line interface.
//! [`verify`] wires the major claims into named, runnable checks.

pub mod diagnostics;
mod error;
pub mod grid;
pub mod maps;
pub mod refdyn;
pub mod regdyn;
pub mod scenario;
pub mod tension;
pub mod verify;
pub mod youngmeasure;

pub use error::{Error, Result};
pub use grid::{integrate_s, integrate_st, Field3, FieldScalar, Grid1D, Vec3};
pub use maps::{EpsParam, Gamma};
pub use scenario::{preset, Scenario};
pub use tension::BoundaryFamily;
