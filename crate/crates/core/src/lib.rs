//! Follow-the-Leader traffic simulation viewed as a monotone numerical
//! scheme for the Lighthill-Whitham-Richards conservation law.
//!
//! The particle model is simulated in gap variables (semi-discrete flow or
//! forward Euler), mapped back to an Eulerian density through the discrete
//! Lagrange-to-Euler map, and compared against independent Godunov and
//! closed-form reference solutions.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod analysis;
pub mod config;
pub mod error;
pub mod euler;
pub mod invariants;
pub mod io;
pub mod ode;
pub mod reference;
pub mod scalar;
pub mod transform;
pub mod velocity;

pub use error::{FtlError, Result};
pub use scalar::Real;

pub use analysis::{convergence_study, l1_distance, l1_distance_linear, total_variation, ConvergenceReport};
pub use euler::{cfl_max_dt, euler_step_y, euler_step_z, monotonicity_weights, run_discrete};
pub use invariants::entropy_residual;
pub use ode::{integrate, integrate_recorded, positions_from_state, rhs, BoundaryMode, LagrangianState, Stride};
pub use reference::{godunov_flux, godunov_solve, lagrangian_upwind_solve, FluxLaw};
pub use transform::{eulerian_density, lagrangian_profile, place_vehicles, x_inverse, z_map, PiecewiseConstantDensity};
pub use velocity::VelocityModel;

pub type VelocityModel64 = velocity::VelocityModel<f64>;
pub type BoundaryMode64 = ode::BoundaryMode<f64>;
pub type LagrangianState64 = ode::LagrangianState<f64>;
pub type DiscreteRun64 = euler::DiscreteRun<f64>;
pub type Density64 = transform::PiecewiseConstantDensity<f64>;
pub type FluxLaw64 = reference::FluxLaw<f64>;
pub type EulerianGrid64 = reference::EulerianGrid<f64>;
pub type StudySetup64 = analysis::StudySetup<f64>;

pub type VelocityModel32 = velocity::VelocityModel<f32>;
pub type LagrangianState32 = ode::LagrangianState<f32>;
