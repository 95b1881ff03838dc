//! Discrete realizations of Brownian motion, Itô processes, finite-variation
//! and weak Dirichlet processes, with constant continuation past the horizon.

mod grid;
pub mod io;
mod path;
mod simulate;
mod spec;

pub use grid::{TimeGrid, MIN_STEPS_PER_EPSILON};
pub use path::{extend_constant, DriverView, ProcessRole, SamplePath};
pub use simulate::{simulate_brownian, simulate_ito_process, simulate_scalar_ito};
pub use spec::{
    build_on_driver, build_weak_dirichlet, CoefficientFn, FiniteVariation, PathFunctional,
    ProcessSpec, TimeFn, WeakDirichletPaths, ZeroEnergyRecipe,
};
