//! Closed-loop simulation: fixed-step RK4 flows interleaved with switching-logic jumps.

use nalgebra::DVector;

use crate::backstepping::{BackstepLevel, Backstepper};
use crate::controllers::compatible_halfspace_controller;
use crate::controllers::{
    qp_closed_form, BumpParams, LinearClassK, QpControllerSpec, QuadraticClf, SmoothMaxBarrier,
};
use crate::dynamics::{AffineDynamics, StrictFeedback};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{max_halfspace_index, Ellipsoid, Polytope, TieBreakRule};
use crate::hybrid::{
    baseline_cbf_only_update, in_jump_set, initialize_aux, jump_update, AuxiliaryState,
    SwitchingParams,
};
use crate::scalar::{lit, to_f64, vec_to_f64, Real};

/// Outcome of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Converged,
    Deadlock,
    Unsafe,
    TimedOut,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::Deadlock => "deadlock",
            Verdict::Unsafe => "unsafe",
            Verdict::TimedOut => "timed_out",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "converged" => Ok(Verdict::Converged),
            "deadlock" => Ok(Verdict::Deadlock),
            "unsafe" => Ok(Verdict::Unsafe),
            "timed_out" => Ok(Verdict::TimedOut),
            other => Err(format!(
                "unknown verdict '{other}' (expected converged, deadlock, unsafe or timed_out)"
            )),
        }
    }
}

/// Integration and termination settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings<T: Real> {
    pub dt: T,
    pub t_max: T,
    pub conv_tol: T,
    pub stall_tol: T,
    /// `None` selects `1e-6·(1 + max_q |d_q|)`.
    pub safety_tol: Option<T>,
    /// Record every `record_every`-th step (jump instants and the final state are always kept).
    pub record_every: usize,
    /// Hold the input constant over each step instead of re-evaluating it per RK stage.
    pub zoh: bool,
}

impl<T: Real> Default for SimSettings<T> {
    fn default() -> Self {
        Self {
            dt: lit(1e-3),
            t_max: lit(100.0),
            conv_tol: lit(1e-2),
            stall_tol: lit(1e-4),
            safety_tol: None,
            record_every: 10,
            zoh: false,
        }
    }
}

/// One discrete transition of the switching logic.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord<T: Real> {
    pub t: T,
    pub q_before: usize,
    pub q_after: usize,
    pub setpoint_before: DVector<T>,
    pub setpoint_after: DVector<T>,
    pub state: DVector<T>,
}

/// Sampled closed-loop solution.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub inputs: Vec<DVector<T>>,
    pub aux_history: Vec<AuxiliaryState<T>>,
    /// Number of jumps applied at each sample (nonzero only at jump instants).
    pub jump_flags: Vec<usize>,
    pub jump_log: Vec<JumpRecord<T>>,
    pub verdict: Verdict,
    /// `min_t max_q h_q` over every integration step.
    pub min_clearance: T,
    /// `min_t h_q(t)` of the active face over every integration step.
    pub min_active_clearance: T,
    /// Distance of the top-level state to the target at the end.
    pub final_error: T,
    /// Initial value of the top backstepped barrier, when applicable.
    pub initial_margin: Option<T>,
    /// Dimension of the top-level substate the switching logic acts on.
    pub top_dim: usize,
    /// Number of integration steps taken.
    pub steps: usize,
}

impl<T: Real> HybridTrajectory<T> {
    fn new(top_dim: usize) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            inputs: Vec::new(),
            aux_history: Vec::new(),
            jump_flags: Vec::new(),
            jump_log: Vec::new(),
            verdict: Verdict::TimedOut,
            min_clearance: T::max_value().unwrap(),
            min_active_clearance: T::max_value().unwrap(),
            final_error: T::zero(),
            initial_margin: None,
            top_dim,
            steps: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DVector<T>> {
        self.states.last()
    }

    /// Top-level part of sample `k`.
    pub fn top_state(&self, k: usize) -> DVector<T> {
        self.states[k].rows(0, self.top_dim).into_owned()
    }
}

/// A run that stopped on an error, with everything recorded up to that point.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFailure<T: Real> {
    pub error: Error,
    pub partial: HybridTrajectory<T>,
}

impl<T: Real> std::fmt::Display for SimFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} samples)", self.error, self.partial.len())
    }
}

impl<T: Real> std::error::Error for SimFailure<T> {}

/// One classical RK4 step of `ẋ = f(x) + G(x)k(x)`, re-evaluating `k` at every stage.
pub fn integrate_flow_step<T, D, F>(
    dynamics: &D,
    mut controller: F,
    x: &DVector<T>,
    dt: T,
) -> Result<DVector<T>>
where
    T: Real,
    D: AffineDynamics<T> + ?Sized,
    F: FnMut(&DVector<T>) -> Result<DVector<T>>,
{
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    let half = lit::<T>(0.5);
    let mut field = |y: &DVector<T>| -> Result<DVector<T>> {
        let u = controller(y)?;
        Ok(dynamics.vector_field(y, &u))
    };
    let k1 = field(x)?;
    let k2 = field(&(x + &k1 * (dt * half)))?;
    let k3 = field(&(x + &k2 * (dt * half)))?;
    let k4 = field(&(x + &k3 * dt))?;
    let next = x + (k1 + (k2 + k3) * lit::<T>(2.0) + k4) * (dt / lit::<T>(6.0));
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NumericalBlowup {
            t: f64::NAN,
            last_state: vec_to_f64(x),
        })
    }
}

/// Controller family for a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerKind<T: Real> {
    /// Switching logic with the compatible half-space controller.
    Hybrid,
    /// Switching of the active face only, setpoint fixed at the target, relaxed QP.
    HybridCbfOnly,
    /// Relaxed QP with an ellipsoidal barrier.
    QpEllipsoid(Ellipsoid<T>),
    /// Relaxed QP with the smooth-max barrier.
    QpSmoothMax { kappa: T },
    /// Switching logic on the top-level substate with the backstepped controller.
    BacksteppedHybrid { levels: Vec<BackstepLevel<T>> },
}

impl<T: Real> ControllerKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Hybrid => "hybrid",
            ControllerKind::HybridCbfOnly => "hybrid_cbf_only",
            ControllerKind::QpEllipsoid(_) => "qp_ellipsoid",
            ControllerKind::QpSmoothMax { .. } => "qp_smoothmax",
            ControllerKind::BacksteppedHybrid { .. } => "backstepped_hybrid",
        }
    }
}

/// Everything one closed-loop run needs apart from the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T: Real> {
    pub polytope: Polytope<T>,
    pub target: DVector<T>,
    /// Full initial state (for cascades: all levels stacked).
    pub initial_state: DVector<T>,
    pub controller: ControllerKind<T>,
    pub rates: LinearClassK<T>,
    /// Relaxation weight `p` of the relaxed-QP controllers.
    pub relaxation_weight: T,
    pub bump: BumpParams<T>,
    pub mu: T,
    pub sigma: T,
    pub tiebreak: TieBreakRule<T>,
    pub initial_face: Option<usize>,
    pub settings: SimSettings<T>,
}

impl<T: Real> Scenario<T> {
    pub fn switching_params(&self) -> Result<SwitchingParams<T>> {
        SwitchingParams::new(
            &self.polytope,
            &self.target,
            self.mu,
            self.sigma,
            self.tiebreak.clone(),
        )
    }

    fn safety_tol(&self) -> T {
        self.settings
            .safety_tol
            .unwrap_or_else(|| lit::<T>(1e-6) * (T::one() + self.polytope.max_abs_offset()))
    }
}

type ControlFn<'a, T> = dyn Fn(&AuxiliaryState<T>, &DVector<T>) -> Result<DVector<T>> + 'a;
type JumpFn<'a, T> =
    dyn Fn(&DVector<T>, &AuxiliaryState<T>) -> Result<Option<AuxiliaryState<T>>> + 'a;

struct Loop<'a, T: Real> {
    scenario: &'a Scenario<T>,
    dynamics: &'a dyn AffineDynamics<T>,
    top_dim: usize,
    control: &'a ControlFn<'a, T>,
    jump: &'a JumpFn<'a, T>,
}

impl<T: Real> Loop<'_, T> {
    fn step(&self, aux: &AuxiliaryState<T>, x: &DVector<T>, dt: T) -> Result<DVector<T>> {
        if self.scenario.settings.zoh {
            let u = (self.control)(aux, x)?;
            integrate_flow_step(self.dynamics, |_| Ok(u.clone()), x, dt)
        } else {
            integrate_flow_step(self.dynamics, |y| (self.control)(aux, y), x, dt)
        }
    }

    fn fires(&self, x: &DVector<T>, aux: &AuxiliaryState<T>) -> Result<bool> {
        Ok((self.jump)(&x.rows(0, self.top_dim).into_owned(), aux)?.is_some())
    }

    /// Smallest fraction of the step `h` from `x` whose end state satisfies `hit`, given that
    /// the state at fraction `hi` does.
    fn bisect(
        &self,
        aux: &AuxiliaryState<T>,
        x: &DVector<T>,
        h: T,
        hi: T,
        at_hi: DVector<T>,
        hit: impl Fn(&DVector<T>) -> Result<bool>,
    ) -> Result<(T, DVector<T>)> {
        let (mut lo, mut hi, mut best) = (T::zero(), hi, at_hi);
        for _ in 0..60 {
            let mid = (lo + hi) * lit::<T>(0.5);
            if !(mid > lo && mid < hi) {
                break;
            }
            let trial = self.step(aux, x, h * mid)?;
            if hit(&trial)? {
                hi = mid;
                best = trial;
            } else {
                lo = mid;
            }
        }
        Ok((hi, best))
    }

    fn distance(&self, x: &DVector<T>) -> T {
        (x.rows(0, self.top_dim) - &self.scenario.target).norm()
    }

    fn record(
        &self,
        traj: &mut HybridTrajectory<T>,
        t: T,
        x: &DVector<T>,
        aux: &AuxiliaryState<T>,
        jumps: usize,
    ) -> Result<()> {
        let u = (self.control)(aux, x)?;
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.inputs.push(u);
        traj.aux_history.push(aux.clone());
        traj.jump_flags.push(jumps);
        Ok(())
    }

    /// Applies jumps until the flow set holds, at most `Q` times.
    fn drain_jumps(
        &self,
        traj: &mut HybridTrajectory<T>,
        t: T,
        x: &DVector<T>,
        aux: &mut AuxiliaryState<T>,
    ) -> Result<usize> {
        let top = x.rows(0, self.top_dim).into_owned();
        let mut count = 0;
        while count < self.scenario.polytope.len() {
            let Some(next) = (self.jump)(&top, aux)? else {
                break;
            };
            traj.jump_log.push(JumpRecord {
                t,
                q_before: aux.active,
                q_after: next.active,
                setpoint_before: aux.setpoint.clone(),
                setpoint_after: next.setpoint.clone(),
                state: top.clone(),
            });
            *aux = next;
            count += 1;
        }
        Ok(count)
    }

    fn track(&self, traj: &mut HybridTrajectory<T>, x: &DVector<T>, aux: &AuxiliaryState<T>) -> T {
        let top = x.rows(0, self.top_dim).into_owned();
        let clearance = self.scenario.polytope.clearance(&top);
        traj.min_clearance = traj.min_clearance.min(clearance);
        let active = self.scenario.polytope.halfspace(aux.active).value(&top);
        traj.min_active_clearance = traj.min_active_clearance.min(active);
        clearance
    }

    fn run(
        &self,
        aux0: AuxiliaryState<T>,
        traj: HybridTrajectory<T>,
    ) -> std::result::Result<HybridTrajectory<T>, SimFailure<T>> {
        let mut traj = traj;
        match self.run_inner(aux0, &mut traj) {
            Ok(()) => Ok(traj),
            Err(error) => Err(SimFailure {
                error,
                partial: traj,
            }),
        }
    }

    fn run_inner(&self, aux0: AuxiliaryState<T>, traj: &mut HybridTrajectory<T>) -> Result<()> {
        let s = &self.scenario.settings;
        if !(s.dt > T::zero() && s.t_max > T::zero()) {
            return Err(Error::InvalidParameter(
                "dt and t_max must be positive".into(),
            ));
        }
        let safety_tol = self.scenario.safety_tol();
        let record_every = s.record_every.max(1);
        let total_steps = to_f64(s.t_max / s.dt).ceil() as usize;
        let mut aux = aux0;
        let mut x = self.scenario.initial_state.clone();
        let mut t = T::zero();
        self.track(traj, &x, &aux);
        let jumps = self.drain_jumps(traj, t, &x, &mut aux)?;
        self.record(traj, t, &x, &aux, jumps)?;
        // `step` counts completed grid intervals; a jump located inside an interval splits it.
        let mut step = 0usize;
        let mut taken = 0usize;
        loop {
            if self.distance(&x) <= s.conv_tol {
                traj.verdict = Verdict::Converged;
                break;
            }
            if step >= total_steps {
                traj.verdict =
                    if detect_deadlock(traj, &self.scenario.target, s.stall_tol, s.conv_tol)
                        .unwrap_or(false)
                    {
                        Verdict::Deadlock
                    } else {
                        Verdict::TimedOut
                    };
                break;
            }
            let t_grid = lit::<T>((step + 1) as f64) * s.dt;
            let h = t_grid - t;
            let mut next = self.step(&aux, &x, h).map_err(|e| match e {
                Error::NumericalBlowup { last_state, .. } => Error::NumericalBlowup {
                    t: to_f64(t),
                    last_state,
                },
                other => other,
            })?;
            let mut frac = T::one();
            // Land on the convergence sphere instead of an arbitrary point inside it.
            if self.distance(&next) <= s.conv_tol {
                (frac, next) = self.bisect(&aux, &x, h, frac, next, |y| {
                    Ok(self.distance(y) <= s.conv_tol)
                })?;
            }
            // Apply a jump where the flow first reaches the jump set, not at the next grid point.
            if self.fires(&next, &aux)? {
                (frac, next) = self.bisect(&aux, &x, h, frac, next, |y| self.fires(y, &aux))?;
            }
            x = next;
            if frac == T::one() || h * (T::one() - frac) <= lit::<T>(1e-12) * s.dt {
                t = t_grid;
                step += 1;
            } else {
                t += h * frac;
            }
            taken += 1;
            traj.steps = taken;
            let clearance = self.track(traj, &x, &aux);
            if clearance < -safety_tol {
                self.record(traj, t, &x, &aux, 0)?;
                traj.verdict = Verdict::Unsafe;
                break;
            }
            let jumps = self.drain_jumps(traj, t, &x, &mut aux)?;
            let converged = self.distance(&x) <= s.conv_tol;
            if jumps > 0 || converged || step.is_multiple_of(record_every) || step >= total_steps {
                self.record(traj, t, &x, &aux, jumps)?;
            }
        }
        traj.final_error = self.distance(traj.states.last().expect("initial sample recorded"));
        Ok(())
    }
}

fn check_initial<T: Real>(scenario: &Scenario<T>, state_dim: usize, top_dim: usize) -> Result<()> {
    check_dim(state_dim, scenario.initial_state.len())?;
    check_dim(scenario.polytope.dim(), top_dim)?;
    check_dim(top_dim, scenario.target.len())?;
    let top = scenario.initial_state.rows(0, top_dim).into_owned();
    if scenario.polytope.clearance(&top) < T::zero() {
        return Err(Error::InvalidScenario(
            "initial state lies strictly inside the polytope".into(),
        ));
    }
    Ok(())
}

/// Runs a first-order scenario (`Hybrid`, `HybridCbfOnly`, `QpEllipsoid`, `QpSmoothMax`).
pub fn run_hybrid<T: Real>(
    scenario: &Scenario<T>,
    dynamics: &dyn AffineDynamics<T>,
) -> std::result::Result<HybridTrajectory<T>, SimFailure<T>> {
    let n = dynamics.state_dim();
    let early = |error| SimFailure {
        error,
        partial: HybridTrajectory::new(n),
    };
    check_initial(scenario, n, n).map_err(early)?;
    let polytope = &scenario.polytope;
    let target = &scenario.target;
    let x0 = &scenario.initial_state;
    let no_jump: &JumpFn<'_, T> = &|_, _| Ok(None);
    match &scenario.controller {
        ControllerKind::Hybrid => {
            scenario.rates.ensure_compatible().map_err(early)?;
            let params = scenario.switching_params().map_err(early)?;
            let aux0 = initialize_aux(polytope, x0, target, &params, scenario.initial_face)
                .map_err(early)?;
            let control: &ControlFn<'_, T> = &|aux, x| {
                compatible_halfspace_controller(
                    &aux.setpoint,
                    polytope.halfspace(aux.active),
                    &scenario.rates,
                    &scenario.bump,
                    dynamics,
                    x,
                )
            };
            let jump: &JumpFn<'_, T> = &|x, aux| {
                if in_jump_set(polytope, x, aux, &params) {
                    jump_update(polytope, x, target, aux, &params).map(Some)
                } else {
                    Ok(None)
                }
            };
            Loop {
                scenario,
                dynamics,
                top_dim: n,
                control,
                jump,
            }
            .run(aux0, HybridTrajectory::new(n))
        }
        ControllerKind::HybridCbfOnly => {
            let params = scenario.switching_params().map_err(early)?;
            let q0 = match scenario.initial_face {
                Some(q) => q,
                None => max_halfspace_index(polytope, x0).map_err(early)?.0,
            };
            let aux0 = AuxiliaryState {
                setpoint: target.clone(),
                active: q0,
            };
            let control: &ControlFn<'_, T> = &|aux, x| {
                let spec = QpControllerSpec {
                    clf: QuadraticClf::new(target.clone()),
                    cbf: polytope.halfspace(aux.active).clone(),
                    rates: scenario.rates,
                    weight: Some(scenario.relaxation_weight),
                    bump: None,
                };
                Ok(qp_closed_form(&spec, dynamics, x)?.u)
            };
            let jump: &JumpFn<'_, T> = &|x, aux| {
                if in_jump_set(polytope, x, aux, &params) {
                    Ok(Some(baseline_cbf_only_update(
                        polytope, x, target, aux, &params,
                    )))
                } else {
                    Ok(None)
                }
            };
            Loop {
                scenario,
                dynamics,
                top_dim: n,
                control,
                jump,
            }
            .run(aux0, HybridTrajectory::new(n))
        }
        ControllerKind::QpEllipsoid(ellipsoid) => {
            check_dim(n, ellipsoid.dim()).map_err(early)?;
            let aux0 = fixed_aux(polytope, x0, target).map_err(early)?;
            let spec = QpControllerSpec {
                clf: QuadraticClf::new(target.clone()),
                cbf: ellipsoid.clone(),
                rates: scenario.rates,
                weight: Some(scenario.relaxation_weight),
                bump: None,
            };
            let control: &ControlFn<'_, T> = &|_, x| Ok(qp_closed_form(&spec, dynamics, x)?.u);
            Loop {
                scenario,
                dynamics,
                top_dim: n,
                control,
                jump: no_jump,
            }
            .run(aux0, HybridTrajectory::new(n))
        }
        ControllerKind::QpSmoothMax { kappa } => {
            let aux0 = fixed_aux(polytope, x0, target).map_err(early)?;
            if !(*kappa > T::zero()) {
                return Err(early(Error::InvalidParameter(
                    "smooth-max kappa must be positive".into(),
                )));
            }
            let spec = QpControllerSpec {
                clf: QuadraticClf::new(target.clone()),
                cbf: SmoothMaxBarrier {
                    polytope: polytope.clone(),
                    kappa: *kappa,
                },
                rates: scenario.rates,
                weight: Some(scenario.relaxation_weight),
                bump: None,
            };
            let control: &ControlFn<'_, T> = &|_, x| Ok(qp_closed_form(&spec, dynamics, x)?.u);
            Loop {
                scenario,
                dynamics,
                top_dim: n,
                control,
                jump: no_jump,
            }
            .run(aux0, HybridTrajectory::new(n))
        }
        ControllerKind::BacksteppedHybrid { .. } => Err(early(Error::InvalidScenario(
            "backstepped_hybrid needs a strict-feedback plant; use run_backstepped".into(),
        ))),
    }
}

fn fixed_aux<T: Real>(
    polytope: &Polytope<T>,
    x0: &DVector<T>,
    target: &DVector<T>,
) -> Result<AuxiliaryState<T>> {
    Ok(AuxiliaryState {
        setpoint: target.clone(),
        active: max_halfspace_index(polytope, x0)?.0,
    })
}

/// Runs a `BacksteppedHybrid` scenario; switching and verdicts use the top-level substate.
pub fn run_backstepped<T: Real>(
    scenario: &Scenario<T>,
    system: &dyn StrictFeedback<T>,
) -> std::result::Result<HybridTrajectory<T>, SimFailure<T>> {
    let dims = system.level_dims();
    let top_dim = dims[0];
    let early = |error| SimFailure {
        error,
        partial: HybridTrajectory::new(top_dim),
    };
    let ControllerKind::BacksteppedHybrid { levels } = &scenario.controller else {
        return Err(early(Error::InvalidScenario(
            "run_backstepped requires the backstepped_hybrid controller".into(),
        )));
    };
    check_initial(scenario, system.state_dim(), top_dim).map_err(early)?;
    if !(scenario.rates.alpha_bar > scenario.rates.gamma_bar) {
        return Err(early(Error::InvalidParameter(
            "backstepped_hybrid requires alpha_bar > gamma_bar".into(),
        )));
    }
    let mut prev = scenario.rates;
    for level in levels {
        level.validate(&prev).map_err(early)?;
        prev = level.rates;
    }
    let polytope = &scenario.polytope;
    let target = &scenario.target;
    let params = scenario.switching_params().map_err(early)?;
    let top0 = scenario.initial_state.rows(0, top_dim).into_owned();
    let aux0 =
        initialize_aux(polytope, &top0, target, &params, scenario.initial_face).map_err(early)?;
    let design = |aux: &AuxiliaryState<T>| {
        Backstepper::new(
            system,
            levels,
            scenario.rates,
            scenario.bump,
            aux.setpoint.clone(),
            polytope.halfspace(aux.active).clone(),
        )
    };
    let depth = dims.len() - 1;
    let margin = design(&aux0)
        .and_then(|b| b.pair(depth, &scenario.initial_state))
        .map_err(early)?
        .h;
    if margin < T::zero() {
        return Err(early(Error::InvalidScenario(format!(
            "initial state violates the backstepped barrier (margin {:.6e}); \
             increase beta_h or start farther from the polytope",
            to_f64(margin)
        ))));
    }
    let control: &ControlFn<'_, T> = &|aux, x| design(aux)?.control(x);
    let jump: &JumpFn<'_, T> = &|x, aux| {
        if in_jump_set(polytope, x, aux, &params) {
            jump_update(polytope, x, target, aux, &params).map(Some)
        } else {
            Ok(None)
        }
    };
    let mut traj = HybridTrajectory::new(top_dim);
    traj.initial_margin = Some(margin);
    Loop {
        scenario,
        dynamics: system,
        top_dim,
        control,
        jump,
    }
    .run(aux0, traj)
}

/// True iff the last 5% of samples move with mean top-level speed `≤ stall_tol` while the
/// final top-level state is farther than `conv_tol` from the target.
pub fn detect_deadlock<T: Real>(
    traj: &HybridTrajectory<T>,
    target: &DVector<T>,
    stall_tol: T,
    conv_tol: T,
) -> Result<bool> {
    let len = traj.len();
    let window = ((len as f64) * 0.05).ceil().max(2.0) as usize;
    if len < window + 1 {
        return Err(Error::InsufficientData {
            len,
            needed: window + 1,
        });
    }
    let mut speed = T::zero();
    for k in (len - window)..len {
        let dt = traj.times[k] - traj.times[k - 1];
        if dt > T::zero() {
            speed += (traj.top_state(k) - traj.top_state(k - 1)).norm() / dt;
        }
    }
    speed /= lit::<T>(window as f64);
    let dist = (traj.top_state(len - 1) - target).norm();
    Ok(speed <= stall_tol && dist > conv_tol)
}
