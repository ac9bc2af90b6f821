//! Planar statics of stacked segments under tendon pulls, gravity and payload.

mod ccfit;
mod model;
mod solver;

pub use ccfit::{ccfit_angle_from_state, ccfit_angle_with_span, marker_positions, MarkerSpan};
pub use model::{
    energy_gradient, tendon_path_length, total_energy, LoadCase, MaterialParams, PlanarPoint, RodModel, RodState,
    SegmentSpec, STANDARD_GRAVITY,
};
pub use solver::{solve_equilibrium, EquilibriumResult, Solver, SolverSettings};
