//! Switching logic over the half-spaces of a polytope: active setpoint and active face.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{
    argmax_over, max_halfspace_index, project_direction, project_onto_hyperplane,
    segment_hyperplane_intersection, Polytope, TieBreakRule,
};
use crate::scalar::{lit, Real};

/// Auxiliary state `(x̂, q)`: active setpoint and active half-space index.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryState<T: Real> {
    pub setpoint: DVector<T>,
    pub active: usize,
}

/// Parameters of the switching logic.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingParams<T: Real> {
    /// Minimum synergy gap `μ`.
    pub mu: T,
    /// Hysteresis width `σ ∈ (0, μ)`.
    pub sigma: T,
    /// Reference direction `v = n_q̄`.
    pub reference: DVector<T>,
    /// Index `q̄` of the face with the largest value at the target.
    pub target_index: usize,
    pub tiebreak: TieBreakRule<T>,
}

impl<T: Real> SwitchingParams<T> {
    /// Derives `v` and `q̄` from the target and validates `0 < σ < μ`.
    pub fn new(
        polytope: &Polytope<T>,
        target: &DVector<T>,
        mu: T,
        sigma: T,
        tiebreak: TieBreakRule<T>,
    ) -> Result<Self> {
        if !(sigma > T::zero() && sigma < mu) {
            return Err(Error::InvalidParameter(
                "sigma must satisfy 0 < sigma < mu".into(),
            ));
        }
        let (reference, target_index) = reference_direction(polytope, target)?;
        Ok(Self {
            mu,
            sigma,
            reference,
            target_index,
            tiebreak,
        })
    }
}

/// `v = n_q̄` with `q̄` the smallest argmax of `h_q(x̄)`.
pub fn reference_direction<T: Real>(
    polytope: &Polytope<T>,
    target: &DVector<T>,
) -> Result<(DVector<T>, usize)> {
    let (q, value) = max_halfspace_index(polytope, target)?;
    if value < T::zero() {
        return Err(Error::InvalidScenario(
            "target lies strictly inside the polytope".into(),
        ));
    }
    Ok((polytope.halfspace(q).normal().clone(), q))
}

/// `Q̂_q = {q' : vᵀ(n_q' − n_q) > 0} ∪ {q̄}`, in increasing index order.
pub fn prediction_set<T: Real>(
    polytope: &Polytope<T>,
    reference: &DVector<T>,
    q: usize,
    target_index: usize,
) -> Vec<usize> {
    let base = reference.dot(polytope.halfspace(q).normal());
    (0..polytope.len())
        .filter(|&k| {
            k == target_index || reference.dot(polytope.halfspace(k).normal()) - base > T::zero()
        })
        .collect()
}

/// `q̂ = argmax_{q' ∈ Q̂_q} h_q'(x̂)`.
pub fn next_index<T: Real>(
    polytope: &Polytope<T>,
    aux: &AuxiliaryState<T>,
    params: &SwitchingParams<T>,
) -> usize {
    let pred = prediction_set(polytope, &params.reference, aux.active, params.target_index);
    argmax_over(polytope, pred, &aux.setpoint)
        .expect("prediction set always contains the target index")
        .0
}

/// Jump condition `h_q̂(x) − h_q(x) ≥ σ ∧ h_q(x) ≥ 0`.
pub fn in_jump_set<T: Real>(
    polytope: &Polytope<T>,
    x: &DVector<T>,
    aux: &AuxiliaryState<T>,
    params: &SwitchingParams<T>,
) -> bool {
    let q_hat = next_index(polytope, aux, params);
    let hq = polytope.halfspace(aux.active).value(x);
    polytope.halfspace(q_hat).value(x) - hq >= params.sigma && hq >= T::zero()
}

/// Smallest `τ ≥ 0` such that some `q' ∈ pred` has `h_q'(x̃ + τ·dir) ≥ μ`, with the limiting index.
pub fn scaling_factor<T: Real>(
    polytope: &Polytope<T>,
    x_tilde: &DVector<T>,
    direction: &DVector<T>,
    pred: &[usize],
    mu: T,
) -> Result<(T, usize)> {
    let mut best: Option<(T, usize)> = None;
    for &k in pred {
        let hs = polytope.halfspace(k);
        let h = hs.value(x_tilde);
        let slope = hs.normal().dot(direction);
        let tau = if h >= mu {
            T::zero()
        } else if slope > T::zero() {
            (mu - h) / slope
        } else {
            continue;
        };
        if best.is_none_or(|(bt, _)| tau < bt) {
            best = Some((tau, k));
        }
    }
    best.ok_or(Error::InfeasibleSwitch)
}

/// Setpoint placement shared by the jump map and the initialization.
fn place_setpoint<T: Real>(
    polytope: &Polytope<T>,
    x: &DVector<T>,
    target: &DVector<T>,
    q_new: usize,
    params: &SwitchingParams<T>,
) -> Result<DVector<T>> {
    let hs = polytope.halfspace(q_new);
    if hs.value(target) >= T::zero() {
        return Ok(target.clone());
    }
    let x_tilde = match segment_hyperplane_intersection(hs, x, target) {
        Ok(p) => p,
        Err(Error::DegenerateGeometry(_)) => project_onto_hyperplane(hs, x),
        Err(e) => return Err(e),
    };
    let direction = project_direction(&params.reference, hs.normal(), &params.tiebreak);
    let pred = prediction_set(polytope, &params.reference, q_new, params.target_index);
    let (tau, _) = scaling_factor(polytope, &x_tilde, &direction, &pred, params.mu)?;
    let mut setpoint = x_tilde + direction * tau;
    // Remove the rounding drift off the active hyperplane.
    let residual = hs.value(&setpoint);
    setpoint.axpy(-residual, hs.normal(), T::one());
    Ok(setpoint)
}

/// Jump map: `q⁺ = q̂` and the setpoint moves to `x̄` or to the scaled point on face `q̂`.
pub fn jump_update<T: Real>(
    polytope: &Polytope<T>,
    x: &DVector<T>,
    target: &DVector<T>,
    aux: &AuxiliaryState<T>,
    params: &SwitchingParams<T>,
) -> Result<AuxiliaryState<T>> {
    check_dim(polytope.dim(), x.len())?;
    check_dim(polytope.dim(), target.len())?;
    let q_hat = next_index(polytope, aux, params);
    let setpoint = place_setpoint(polytope, x, target, q_hat, params)?;
    Ok(AuxiliaryState {
        setpoint,
        active: q_hat,
    })
}

/// Pre-initial update: `q₀ = argmax_q h_q(x₀)` (or `q0_override`) and the matching setpoint.
pub fn initialize_aux<T: Real>(
    polytope: &Polytope<T>,
    x0: &DVector<T>,
    target: &DVector<T>,
    params: &SwitchingParams<T>,
    q0_override: Option<usize>,
) -> Result<AuxiliaryState<T>> {
    let (q_max, value) = max_halfspace_index(polytope, x0)?;
    check_dim(polytope.dim(), target.len())?;
    if value < T::zero() {
        return Err(Error::InvalidScenario(
            "initial state lies strictly inside the polytope".into(),
        ));
    }
    let q0 = match q0_override {
        None => q_max,
        Some(q) if q < polytope.len() && polytope.halfspace(q).value(x0) >= T::zero() => q,
        Some(q) => {
            return Err(Error::InvalidScenario(format!(
                "initial half-space override {q} does not contain the initial state"
            )))
        }
    };
    let setpoint = place_setpoint(polytope, x0, target, q0, params)?;
    Ok(AuxiliaryState {
        setpoint,
        active: q0,
    })
}

/// Comparison logic that only updates the active face; the setpoint stays at `x̄`.
pub fn baseline_cbf_only_update<T: Real>(
    polytope: &Polytope<T>,
    _x: &DVector<T>,
    target: &DVector<T>,
    aux: &AuxiliaryState<T>,
    params: &SwitchingParams<T>,
) -> AuxiliaryState<T> {
    AuxiliaryState {
        setpoint: target.clone(),
        active: next_index(polytope, aux, params),
    }
}

/// Checks the setpoint invariants `h_q(x̂) ≥ 0` and, when `x̂ ≠ x̄`,
/// `h_q(x̂) = 0 ∧ h_q̂(x̂) ≥ μ`, with absolute tolerance `tol`.
pub fn aux_invariants_hold<T: Real>(
    polytope: &Polytope<T>,
    target: &DVector<T>,
    aux: &AuxiliaryState<T>,
    params: &SwitchingParams<T>,
    tol: T,
) -> bool {
    let hq = polytope.halfspace(aux.active).value(&aux.setpoint);
    if hq < -tol {
        return false;
    }
    if (&aux.setpoint - target).norm() <= lit(1e-15) {
        return true;
    }
    let q_hat = next_index(polytope, aux, params);
    hq.abs() <= tol && polytope.halfspace(q_hat).value(&aux.setpoint) >= params.mu - tol
}
