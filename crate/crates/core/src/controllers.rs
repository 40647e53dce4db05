//! Closed-form CLF-CBF quadratic programs and the controllers built on them.

use nalgebra::DVector;

use crate::dynamics::AffineDynamics;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{ellipsoid_cbf, smoothmax_cbf, Ellipsoid, HalfSpace, Polytope};
use crate::scalar::{lit, vec_to_f64, Real};

/// `V(x) = ½‖x − target‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticClf<T: Real> {
    pub target: DVector<T>,
}

impl<T: Real> QuadraticClf<T> {
    pub fn new(target: DVector<T>) -> Self {
        Self { target }
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &DVector<T>) -> (T, DVector<T>) {
        let d = x - &self.target;
        (lit::<T>(0.5) * d.norm_squared(), d)
    }
}

/// Linear rates `γ(s) = 2γ̄s` (CLF) and `α(s) = ᾱs` (CBF).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearClassK<T: Real> {
    pub gamma_bar: T,
    pub alpha_bar: T,
}

impl<T: Real> LinearClassK<T> {
    pub fn new(gamma_bar: T, alpha_bar: T) -> Result<Self> {
        if !(gamma_bar > T::zero()) || !(alpha_bar > T::zero()) {
            return Err(Error::InvalidParameter(
                "gamma_bar and alpha_bar must be positive".into(),
            ));
        }
        Ok(Self {
            gamma_bar,
            alpha_bar,
        })
    }

    /// Checks `ᾱ ≥ γ̄`, the compatibility condition for half-space subproblems.
    pub fn ensure_compatible(&self) -> Result<()> {
        if self.alpha_bar >= self.gamma_bar {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "alpha_bar must satisfy alpha_bar >= gamma_bar".into(),
            ))
        }
    }

    pub fn gamma(&self, s: T) -> T {
        lit::<T>(2.0) * self.gamma_bar * s
    }

    pub fn alpha(&self, s: T) -> T {
        self.alpha_bar * s
    }
}

/// Bump `ψ(s) = κ·exp(−1/(ε² − s²))` on `[0, ε)`, zero beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpParams<T: Real> {
    pub eps: T,
    pub kappa: T,
}

impl<T: Real> BumpParams<T> {
    pub fn new(eps: T, kappa: T) -> Result<Self> {
        if !(eps > T::zero()) || !(kappa > T::zero()) {
            return Err(Error::InvalidParameter(
                "bump eps and kappa must be positive".into(),
            ));
        }
        Ok(Self { eps, kappa })
    }
}

/// Evaluates the bump function.
pub fn bump<T: Real>(s: T, bp: &BumpParams<T>) -> T {
    let s = s.abs();
    if s >= bp.eps {
        return T::zero();
    }
    let gap = bp.eps * bp.eps - s * s;
    bp.kappa * (-T::one() / gap).exp()
}

/// Barrier `h` with gradient; the safe set is `{h ≥ 0}`.
pub trait Barrier<T: Real> {
    fn dim(&self) -> usize;
    fn eval(&self, x: &DVector<T>) -> (T, DVector<T>);
}

impl<T: Real> Barrier<T> for HalfSpace<T> {
    fn dim(&self) -> usize {
        HalfSpace::dim(self)
    }
    fn eval(&self, x: &DVector<T>) -> (T, DVector<T>) {
        (self.value(x), self.normal().clone())
    }
}

impl<T: Real> Barrier<T> for Ellipsoid<T> {
    fn dim(&self) -> usize {
        Ellipsoid::dim(self)
    }
    fn eval(&self, x: &DVector<T>) -> (T, DVector<T>) {
        ellipsoid_cbf(self, x).expect("dimension checked by caller")
    }
}

/// Log-sum-exp smooth maximum of a polytope's half-space values.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothMaxBarrier<T: Real> {
    pub polytope: Polytope<T>,
    pub kappa: T,
}

impl<T: Real> Barrier<T> for SmoothMaxBarrier<T> {
    fn dim(&self) -> usize {
        self.polytope.dim()
    }
    fn eval(&self, x: &DVector<T>) -> (T, DVector<T>) {
        smoothmax_cbf(&self.polytope, self.kappa, x).expect("dimension checked by caller")
    }
}

/// Which KKT hypothesis produced a QP solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QpCase {
    /// Both constraints slack, `u = 0`.
    Unconstrained,
    /// Only the CLF constraint active.
    ClfActive,
    /// Only the CBF constraint active.
    CbfActive,
    /// Both constraints active.
    BothActive,
    /// Both active with parallel constraint rows and no relaxation.
    Collinear,
}

/// Minimizer of the CLF-CBF QP and its multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: Real> {
    pub u: DVector<T>,
    /// CLF relaxation `δ` (zero when the relaxation weight is infinite).
    pub delta: T,
    pub case: QpCase,
    pub lambda_clf: T,
    pub lambda_cbf: T,
}

/// Scalar data of the QP
/// `min ½‖u‖² + ½pδ²  s.t.  L_GV·u + F_V ≤ δ,  L_Gh·u + F_h ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpData<T: Real> {
    pub lg_v: DVector<T>,
    /// `L_fV + γ(V) − ψ(V)`.
    pub f_v: T,
    pub lg_h: DVector<T>,
    /// `L_fh + α(h)`.
    pub f_h: T,
    /// Relaxation weight `p`; `None` means `p = ∞` (hard CLF constraint, `δ = 0`).
    pub weight: Option<T>,
}

impl<T: Real> QpData<T> {
    /// CLF and CBF constraint residuals `(L_GV·u + F_V − δ, L_Gh·u + F_h)`.
    pub fn residuals(&self, u: &DVector<T>, delta: T) -> (T, T) {
        (
            self.lg_v.dot(u) + self.f_v - delta,
            self.lg_h.dot(u) + self.f_h,
        )
    }
}

/// Solves the two-constraint QP in closed form.
///
/// Cases are tried in the order unconstrained, CLF-only, CBF-only, both-active; the first
/// with nonnegative multipliers that is primal feasible (relative tolerance) is returned.
pub fn solve_qp<T: Real>(data: &QpData<T>, state: &DVector<T>) -> Result<QpSolution<T>> {
    let m = data.lg_v.len();
    check_dim(m, data.lg_h.len())?;
    let inv_p = match data.weight {
        None => T::zero(),
        Some(p) if p > T::zero() => T::one() / p,
        Some(_) => {
            return Err(Error::InvalidParameter(
                "relaxation weight must be positive".into(),
            ))
        }
    };
    let (f_v, f_h) = (data.f_v, data.f_h);
    let gv2 = data.lg_v.norm_squared();
    let c = data.lg_h.norm_squared();
    let a = inv_p + gv2;
    let l = data.lg_v.dot(&data.lg_h);
    let scale = T::one() + f_v.abs() + f_h.abs();
    let tol = lit::<T>(1e-11) * scale;

    let build = |l1: T, l2: T, case| {
        let u = &data.lg_v * (-l1) + &data.lg_h * l2;
        QpSolution {
            u,
            delta: l1 * inv_p,
            case,
            lambda_clf: l1,
            lambda_cbf: l2,
        }
    };
    let feasible = |s: &QpSolution<T>| {
        let (rv, rh) = data.residuals(&s.u, s.delta);
        let su = T::one() + s.u.norm() * (gv2.sqrt() + c.sqrt());
        rv <= tol * su && rh >= -tol * su
    };

    if f_v <= T::zero() && f_h >= T::zero() {
        return Ok(build(T::zero(), T::zero(), QpCase::Unconstrained));
    }
    if a > T::zero() {
        let l1 = f_v / a;
        if l1 >= T::zero() {
            let s = build(l1, T::zero(), QpCase::ClfActive);
            if feasible(&s) {
                return Ok(s);
            }
        }
    }
    if c > T::zero() {
        let l2 = -f_h / c;
        if l2 >= T::zero() {
            let s = build(T::zero(), l2, QpCase::CbfActive);
            if feasible(&s) {
                return Ok(s);
            }
        }
    }
    // l² − a·c via the Lagrange identity, so nearly parallel rows do not cancel.
    let mut wedge = T::zero();
    for i in 0..m {
        for j in i + 1..m {
            let w = data.lg_v[i] * data.lg_h[j] - data.lg_v[j] * data.lg_h[i];
            wedge += w * w;
        }
    }
    let delta = -(wedge + inv_p * c);
    let degenerate = data.weight.is_none() && delta.abs() <= lit::<T>(1e-12) * gv2 * c;
    if !degenerate && delta != T::zero() {
        let l1 = (l * f_h - c * f_v) / delta;
        let l2 = (a * f_h - l * f_v) / delta;
        if l1 >= -tol && l2 >= -tol {
            let (l1, l2) = (l1.max(T::zero()), l2.max(T::zero()));
            // Same point as −λ₁L_GV + λ₂L_Gh, written without the O(p) cancellation.
            let mut r = &data.lg_v - &data.lg_h * (l / c);
            let drift = r.dot(&data.lg_h) / c;
            r.axpy(-drift, &data.lg_h, T::one());
            let s = QpSolution {
                u: &data.lg_h * (-f_h / c) - r * l1,
                delta: l1 * inv_p,
                case: QpCase::BothActive,
                lambda_clf: l1,
                lambda_cbf: l2,
            };
            if feasible(&s) {
                return Ok(s);
            }
        }
    }
    if data.weight.is_none() {
        return solve_collinear(data, state, tol);
    }
    Err(Error::Infeasible {
        state: vec_to_f64(state),
        reason: "no KKT case is consistent".into(),
    })
}

/// Hard CLF and CBF constraints with parallel rows: min-norm point of the admissible interval.
fn solve_collinear<T: Real>(data: &QpData<T>, state: &DVector<T>, tol: T) -> Result<QpSolution<T>> {
    let c = data.lg_h.norm_squared();
    let gv2 = data.lg_v.norm_squared();
    let infeasible = |reason: &str| Error::Infeasible {
        state: vec_to_f64(state),
        reason: reason.into(),
    };
    if c == T::zero() {
        // CBF row vanished: it is either vacuous or impossible.
        if data.f_h < -tol {
            return Err(infeasible("CBF row vanishes with a violated constant"));
        }
        if gv2 == T::zero() {
            return if data.f_v <= tol {
                Ok(zero_solution(data.lg_v.len()))
            } else {
                Err(infeasible("CLF row vanishes with a violated constant"))
            };
        }
        let l1 = (data.f_v / gv2).max(T::zero());
        return Ok(QpSolution {
            u: &data.lg_v * (-l1),
            delta: T::zero(),
            case: QpCase::ClfActive,
            lambda_clf: l1,
            lambda_cbf: T::zero(),
        });
    }
    // L_GV = k·L_Gh; with u = s·L_Ghᵀ/‖L_Gh‖² the constraints read k·s ≤ −F_V and s ≥ −F_h.
    let k = data.lg_v.dot(&data.lg_h) / c;
    let mut lo = -data.f_h;
    let mut hi = T::max_value().unwrap_or(T::one() / T::default_epsilon());
    if k > T::zero() {
        hi = -data.f_v / k;
    } else if k < T::zero() {
        lo = lo.max(-data.f_v / k);
    } else if data.f_v > tol {
        return Err(infeasible("CLF row vanishes with a violated constant"));
    }
    let s = if lo <= hi {
        T::zero().clamp(lo, hi)
    } else if lo - hi <= tol * (T::one() + k.abs()) {
        lo
    } else {
        return Err(infeasible(
            "parallel CLF and CBF rows with incompatible bounds",
        ));
    };
    let u = &data.lg_h * (s / c);
    Ok(QpSolution {
        u,
        delta: T::zero(),
        case: QpCase::Collinear,
        lambda_clf: T::zero(),
        lambda_cbf: T::zero(),
    })
}

fn zero_solution<T: Real>(m: usize) -> QpSolution<T> {
    QpSolution {
        u: DVector::zeros(m),
        delta: T::zero(),
        case: QpCase::Unconstrained,
        lambda_clf: T::zero(),
        lambda_cbf: T::zero(),
    }
}

/// A CLF-CBF QP controller: quadratic CLF, a barrier, linear rates, relaxation and bump.
#[derive(Debug, Clone, PartialEq)]
pub struct QpControllerSpec<T: Real, B> {
    pub clf: QuadraticClf<T>,
    pub cbf: B,
    pub rates: LinearClassK<T>,
    /// `None` for `p = ∞`.
    pub weight: Option<T>,
    /// Only meaningful with `weight = None`.
    pub bump: Option<BumpParams<T>>,
}

/// Assembles the QP data for `spec` at `x`.
pub fn qp_data<T: Real, B: Barrier<T>, D: AffineDynamics<T> + ?Sized>(
    spec: &QpControllerSpec<T, B>,
    dynamics: &D,
    x: &DVector<T>,
) -> Result<QpData<T>> {
    check_dim(dynamics.state_dim(), x.len())?;
    check_dim(x.len(), spec.clf.target.len())?;
    check_dim(x.len(), spec.cbf.dim())?;
    if spec.bump.is_some() && spec.weight.is_some() {
        return Err(Error::InvalidParameter(
            "a bump relaxation requires the unrelaxed (p = inf) formulation".into(),
        ));
    }
    let f = dynamics.drift(x);
    let g = dynamics.input_matrix(x);
    let (v, grad_v) = spec.clf.eval(x);
    let (h, grad_h) = spec.cbf.eval(x);
    let psi = spec.bump.as_ref().map_or(T::zero(), |bp| bump(v, bp));
    Ok(QpData {
        lg_v: g.tr_mul(&grad_v),
        f_v: grad_v.dot(&f) + spec.rates.gamma(v) - psi,
        lg_h: g.tr_mul(&grad_h),
        f_h: grad_h.dot(&f) + spec.rates.alpha(h),
        weight: spec.weight,
    })
}

/// Closed-form minimizer of the CLF-CBF QP at `x`.
pub fn qp_closed_form<T: Real, B: Barrier<T>, D: AffineDynamics<T> + ?Sized>(
    spec: &QpControllerSpec<T, B>,
    dynamics: &D,
    x: &DVector<T>,
) -> Result<QpSolution<T>> {
    let data = qp_data(spec, dynamics, x)?;
    solve_qp(&data, x)
}

/// Min-norm input satisfying the hard CLF condition toward `target` (bump-relaxed) and the
/// CBF condition of half-space `hs`.
pub fn compatible_halfspace_controller<T: Real, D: AffineDynamics<T> + ?Sized>(
    target: &DVector<T>,
    hs: &HalfSpace<T>,
    rates: &LinearClassK<T>,
    bump: &BumpParams<T>,
    dynamics: &D,
    x: &DVector<T>,
) -> Result<DVector<T>> {
    let spec = QpControllerSpec {
        clf: QuadraticClf::new(target.clone()),
        cbf: hs.clone(),
        rates: *rates,
        weight: None,
        bump: Some(*bump),
    };
    Ok(qp_closed_form(&spec, dynamics, x)?.u)
}

/// Relaxed CLF-CBF QP with an ellipsoidal barrier around the obstacle.
pub fn baseline_qp_ellipsoid<T: Real, D: AffineDynamics<T> + ?Sized>(
    target: &DVector<T>,
    ellipsoid: &Ellipsoid<T>,
    rates: &LinearClassK<T>,
    weight: T,
    dynamics: &D,
    x: &DVector<T>,
) -> Result<DVector<T>> {
    let spec = QpControllerSpec {
        clf: QuadraticClf::new(target.clone()),
        cbf: ellipsoid.clone(),
        rates: *rates,
        weight: Some(weight),
        bump: None,
    };
    Ok(qp_closed_form(&spec, dynamics, x)?.u)
}

/// Relaxed CLF-CBF QP with the smooth-max polytopic barrier.
pub fn baseline_qp_smoothmax<T: Real, D: AffineDynamics<T> + ?Sized>(
    target: &DVector<T>,
    polytope: &Polytope<T>,
    kappa: T,
    rates: &LinearClassK<T>,
    weight: T,
    dynamics: &D,
    x: &DVector<T>,
) -> Result<DVector<T>> {
    if !(kappa > T::zero()) {
        return Err(Error::InvalidParameter(
            "smooth-max kappa must be positive".into(),
        ));
    }
    let spec = QpControllerSpec {
        clf: QuadraticClf::new(target.clone()),
        cbf: SmoothMaxBarrier {
            polytope: polytope.clone(),
            kappa,
        },
        rates: *rates,
        weight: Some(weight),
        bump: None,
    };
    Ok(qp_closed_form(&spec, dynamics, x)?.u)
}
