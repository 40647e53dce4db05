//! Safe stabilization to a setpoint outside a convex polytopic obstacle.
//!
//! The core pieces are a closed-form CLF–CBF quadratic program, a hybrid switching
//! logic that moves an auxiliary setpoint across the faces of the obstacle, and a
//! backstepping recursion that lifts the construction to strict-feedback cascades.
//!
//! Everything is generic over the scalar type; `f64` and `f32` aliases are provided.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::result_large_err,
    clippy::too_many_arguments
)]

pub mod backstepping;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod hybrid;
pub mod scalar;
pub mod sim;
pub mod special;

pub use backstepping::{
    backstep_pair, backstepped_subproblem_controller, gradient_alignment,
    halfspace_gaussian_centroid, intersection_gaussian_centroid, smooth_intermediate_controller,
    smooth_step, BackstepLevel, BacksteppedPair, Backstepper, PairLie,
};
pub use controllers::{
    baseline_qp_ellipsoid, baseline_qp_smoothmax, bump, compatible_halfspace_controller,
    qp_closed_form, qp_data, solve_qp, Barrier, BumpParams, LinearClassK, QpCase, QpControllerSpec,
    QpData, QpSolution, QuadraticClf, SmoothMaxBarrier,
};
pub use dynamics::{
    AffineDynamics, DoubleIntegrator, FnDynamics, LinearAffine, SingleIntegrator, StrictFeedback,
};
pub use error::{Error, Result};
pub use geometry::{
    ellipsoid_cbf, halfspace_value, max_halfspace_index, min_volume_ellipsoid, polytope_contains,
    project_direction, project_onto_hyperplane, segment_hyperplane_intersection, smoothmax_cbf,
    Ellipsoid, HalfSpace, Polytope, TieBreakRule,
};
pub use hybrid::{
    aux_invariants_hold, baseline_cbf_only_update, in_jump_set, initialize_aux, jump_update,
    next_index, prediction_set, reference_direction, scaling_factor, AuxiliaryState,
    SwitchingParams,
};
pub use scalar::Real;
pub use sim::{
    detect_deadlock, integrate_flow_step, run_backstepped, run_hybrid, ControllerKind,
    HybridTrajectory, JumpRecord, Scenario, SimFailure, SimSettings, Verdict,
};

pub type HalfSpace64 = HalfSpace<f64>;
pub type Polytope64 = Polytope<f64>;
pub type Ellipsoid64 = Ellipsoid<f64>;
pub type AuxiliaryState64 = AuxiliaryState<f64>;
pub type HybridTrajectory64 = HybridTrajectory<f64>;
pub type Scenario64 = Scenario<f64>;

pub type HalfSpace32 = HalfSpace<f32>;
pub type Polytope32 = Polytope<f32>;
pub type Ellipsoid32 = Ellipsoid<f32>;
pub type AuxiliaryState32 = AuxiliaryState<f32>;
pub type HybridTrajectory32 = HybridTrajectory<f32>;
pub type Scenario32 = Scenario<f32>;
