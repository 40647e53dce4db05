//! Joint CLF-CBF backstepping for strict-feedback cascades with a smooth
//! Gaussian-centroid intermediate controller.

use nalgebra::{DMatrix, DVector};

use crate::controllers::{bump, BumpParams, LinearClassK};
use crate::dynamics::StrictFeedback;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{HalfSpace, Polytope};
use crate::hybrid::AuxiliaryState;
use crate::scalar::{lit, to_f64, vec_to_f64, Real};
use crate::special::{inv_mills, log_norm_interval, truncated_mean_1d, wedge_moments};

/// Smooth step: 0 for `s ≤ 0`, 1 for `s ≥ 1`, `1/(1 + exp(1/s − 1/(1−s)))` in between.
pub fn smooth_step<T: Real>(s: T) -> T {
    if s <= T::zero() {
        T::zero()
    } else if s >= T::one() {
        T::one()
    } else {
        let z = T::one() / s - T::one() / (T::one() - s);
        T::one() / (T::one() + z.exp())
    }
}

/// Cosine of the angle between two row vectors.
pub fn gradient_alignment<T: Real>(lg_v: &DVector<T>, lg_h: &DVector<T>) -> Result<T> {
    check_dim(lg_v.len(), lg_h.len())?;
    let nv = lg_v.norm();
    let nh = lg_h.norm();
    if nv == T::zero() || nh == T::zero() {
        return Err(Error::UndefinedAlignment);
    }
    Ok((lg_v.dot(lg_h) / (nv * nh)).clamp(-T::one(), T::one()))
}

/// Centroid of `exp(−‖u‖²/(2σ))` restricted to `{u : aᵀu ≤ b}`.
///
/// `a` need not be normalized; `(a, b)` is rescaled to a unit normal first.
pub fn halfspace_gaussian_centroid<T: Real>(a: &DVector<T>, b: T, sigma: T) -> DVector<T> {
    let na = a.norm();
    if na == T::zero() {
        return DVector::zeros(a.len());
    }
    let sd = to_f64(sigma).sqrt();
    let beta = to_f64(b / na) / sd;
    a * (lit::<T>(-sd * inv_mills(beta)) / na)
}

/// Centroid of `exp(−‖u‖²/(2σ))` restricted to `{a1ᵀu ≤ b1} ∩ {a2ᵀu ≤ b2}`.
///
/// Works in the plane spanned by the two normals; parallel normals reduce to a single
/// half-space (same orientation) or a slab (opposite orientation).
pub fn intersection_gaussian_centroid<T: Real>(
    a1: &DVector<T>,
    b1: T,
    a2: &DVector<T>,
    b2: T,
    sigma: T,
) -> Result<DVector<T>> {
    check_dim(a1.len(), a2.len())?;
    let (n1, n2) = (a1.norm(), a2.norm());
    if n1 == T::zero() || n2 == T::zero() {
        return Err(Error::DegenerateGeometry(
            "centroid constraint with a zero normal".into(),
        ));
    }
    let e1 = a1 / n1;
    let u2 = a2 / n2;
    let sd = to_f64(sigma).sqrt();
    let beta1 = to_f64(b1 / n1) / sd;
    let beta2 = to_f64(b2 / n2) / sd;
    let r = to_f64(e1.dot(&u2)).clamp(-1.0, 1.0);
    let rp = (1.0 - r * r).max(0.0).sqrt();
    const MIN_LOG_MASS: f64 = -690.775_527_898_213_7; // ln(1e-300)

    if rp <= 1e-9 {
        if r > 0.0 {
            let (dir, beta) = if beta1 <= beta2 {
                (&e1, beta1)
            } else {
                (&u2, beta2)
            };
            if log_norm_interval(f64::NEG_INFINITY, beta) < MIN_LOG_MASS {
                return Err(Error::EmptyIntersection);
            }
            return Ok(dir * lit::<T>(-sd * inv_mills(beta)));
        }
        // Slab −β2 ≤ e1ᵀw ≤ β1.
        if log_norm_interval(-beta2, beta1) < MIN_LOG_MASS {
            return Err(Error::EmptyIntersection);
        }
        return Ok(&e1 * lit::<T>(sd * truncated_mean_1d(-beta2, beta1)));
    }
    // When the closest point of one half-space clears the other constraint by a wide margin,
    // the excluded mass is below exp(−margin²/2) relative and the intersection is that half-space.
    const CLEAR: f64 = 10.0;
    if beta2 - r * beta1.min(0.0) >= CLEAR {
        if log_norm_interval(f64::NEG_INFINITY, beta1) < MIN_LOG_MASS {
            return Err(Error::EmptyIntersection);
        }
        return Ok(&e1 * lit::<T>(-sd * inv_mills(beta1)));
    }
    if beta1 - r * beta2.min(0.0) >= CLEAR {
        if log_norm_interval(f64::NEG_INFINITY, beta2) < MIN_LOG_MASS {
            return Err(Error::EmptyIntersection);
        }
        return Ok(&u2 * lit::<T>(-sd * inv_mills(beta2)));
    }
    let m = wedge_moments(beta1, beta2, r);
    if !(m.log_mass >= MIN_LOG_MASS) {
        return Err(Error::EmptyIntersection);
    }
    let e2 = (&u2 - &e1 * lit::<T>(r)) / lit::<T>(rp);
    Ok(e1 * lit::<T>(sd * m.mean_t) + e2 * lit::<T>(sd * m.mean_s))
}

/// Parameters of one backstepping level `i ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackstepLevel<T: Real> {
    /// Weight `β_V` of the CLF correction term.
    pub beta_v: T,
    /// Weight `β_h` of the CBF correction term.
    pub beta_h: T,
    /// Rates `γ_i`, `α_i` of this level's pair.
    pub rates: LinearClassK<T>,
    /// Spread `σ` of the Gaussian weight used by the intermediate controller this level
    /// backsteps through.
    pub centroid_sigma: T,
}

impl<T: Real> BackstepLevel<T> {
    /// Validates positivity and the rate orderings against the previous level's rates.
    pub fn validate(&self, previous: &LinearClassK<T>) -> Result<()> {
        if !(self.beta_v > T::zero() && self.beta_h > T::zero()) {
            return Err(Error::InvalidParameter(
                "beta_v and beta_h must be positive".into(),
            ));
        }
        if !(self.centroid_sigma > T::zero()) {
            return Err(Error::InvalidParameter(
                "centroid_sigma must be positive".into(),
            ));
        }
        if !(self.rates.gamma_bar < previous.gamma_bar) {
            return Err(Error::InvalidParameter(
                "level gamma_bar must be strictly below the previous level's".into(),
            ));
        }
        if !(self.rates.alpha_bar >= previous.alpha_bar) {
            return Err(Error::InvalidParameter(
                "level alpha_bar must be at least the previous level's".into(),
            ));
        }
        Ok(())
    }
}

/// Values and gradients of a CLF/CBF pair over `η_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BacksteppedPair<T: Real> {
    pub v: T,
    pub grad_v: DVector<T>,
    pub h: T,
    pub grad_h: DVector<T>,
}

/// Lie derivatives of a pair along the subsystem `η̇_i = f̄_i + Ḡ_i z_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLie<T: Real> {
    pub pair: BacksteppedPair<T>,
    pub lf_v: T,
    pub lg_v: DVector<T>,
    pub lf_h: T,
    pub lg_h: DVector<T>,
}

/// Backstepping design for one subproblem: half-space CBF and quadratic CLF on `z_0`.
pub struct Backstepper<'a, T: Real, S: StrictFeedback<T> + ?Sized> {
    system: &'a S,
    levels: &'a [BackstepLevel<T>],
    base_rates: LinearClassK<T>,
    bump: BumpParams<T>,
    setpoint: DVector<T>,
    halfspace: HalfSpace<T>,
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl<'a, T: Real, S: StrictFeedback<T> + ?Sized> Backstepper<'a, T, S> {
    /// `levels[i−1]` describes pair `i`; its length must be `r`, the number of cascade levels
    /// below the top-level substate.
    pub fn new(
        system: &'a S,
        levels: &'a [BackstepLevel<T>],
        base_rates: LinearClassK<T>,
        bump: BumpParams<T>,
        setpoint: DVector<T>,
        halfspace: HalfSpace<T>,
    ) -> Result<Self> {
        let dims = system.level_dims();
        if dims.len() < 2 {
            return Err(Error::InvalidParameter(
                "backstepping needs at least two cascade levels".into(),
            ));
        }
        if levels.len() != dims.len() - 1 {
            return Err(Error::DimensionMismatch {
                expected: dims.len() - 1,
                found: levels.len(),
            });
        }
        check_dim(dims[0], setpoint.len())?;
        check_dim(dims[0], halfspace.dim())?;
        let mut offsets = vec![0];
        for d in &dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(Self {
            system,
            levels,
            base_rates,
            bump,
            setpoint,
            halfspace,
            dims,
            offsets,
        })
    }

    /// Number of levels `r` above the base.
    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    /// Length `p_i` of `η_i`.
    pub fn eta_len(&self, i: usize) -> usize {
        self.offsets[i + 1]
    }

    fn rates(&self, i: usize) -> LinearClassK<T> {
        if i == 0 {
            self.base_rates
        } else {
            self.levels[i - 1].rates
        }
    }

    /// Pair `(V_i, h_i)` with gradients at `η_i`.
    pub fn pair(&self, i: usize, eta: &DVector<T>) -> Result<BacksteppedPair<T>> {
        check_dim(self.eta_len(i), eta.len())?;
        if i == 0 {
            let d = eta - &self.setpoint;
            return Ok(BacksteppedPair {
                v: lit::<T>(0.5) * d.norm_squared(),
                grad_v: d,
                h: self.halfspace.value(eta),
                grad_h: self.halfspace.normal().clone(),
            });
        }
        let p_prev = self.eta_len(i - 1);
        let eta_prev = eta.rows(0, p_prev).into_owned();
        let z = eta.rows(p_prev, self.dims[i]).into_owned();
        let prev = self.pair(i - 1, &eta_prev)?;
        let (k, jac) = self.intermediate_with_jacobian(i - 1, &eta_prev)?;
        let level = &self.levels[i - 1];
        let e = z - k;
        let half = lit::<T>(0.5);
        let jte = jac.tr_mul(&e);
        let mut grad_v = DVector::zeros(eta.len());
        grad_v
            .rows_mut(0, p_prev)
            .copy_from(&(&prev.grad_v - &jte / level.beta_v));
        grad_v
            .rows_mut(p_prev, self.dims[i])
            .copy_from(&(&e / level.beta_v));
        let mut grad_h = DVector::zeros(eta.len());
        grad_h
            .rows_mut(0, p_prev)
            .copy_from(&(&prev.grad_h + &jte / level.beta_h));
        grad_h
            .rows_mut(p_prev, self.dims[i])
            .copy_from(&(&e / (-level.beta_h)));
        let e2 = e.norm_squared();
        Ok(BacksteppedPair {
            v: prev.v + half * e2 / level.beta_v,
            grad_v,
            h: prev.h - half * e2 / level.beta_h,
            grad_h,
        })
    }

    /// Stacked drift `f̄_i(η_i)` and the last-block gain `G_i(η_i)` of subsystem `i`.
    fn subsystem(&self, i: usize, eta: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        let mut f = DVector::zeros(eta.len());
        for j in 0..=i {
            let eta_j = eta.rows(0, self.eta_len(j)).into_owned();
            let mut fj = self.system.level_drift(j, &eta_j);
            if j < i {
                let g = self.system.level_gain(j, &eta_j);
                let z_next = eta.rows(self.offsets[j + 1], self.dims[j + 1]);
                fj += g * z_next;
            }
            f.rows_mut(self.offsets[j], self.dims[j]).copy_from(&fj);
        }
        (f, self.system.level_gain(i, eta))
    }

    /// Pair `i` with its Lie derivatives along subsystem `i` (input `z_{i+1}`).
    pub fn pair_lie(&self, i: usize, eta: &DVector<T>) -> Result<PairLie<T>> {
        let pair = self.pair(i, eta)?;
        let (f, g) = self.subsystem(i, eta);
        let last = self.offsets[i];
        let gv = pair.grad_v.rows(last, self.dims[i]);
        let gh = pair.grad_h.rows(last, self.dims[i]);
        Ok(PairLie {
            lf_v: pair.grad_v.dot(&f),
            lg_v: g.tr_mul(&gv),
            lf_h: pair.grad_h.dot(&f),
            lg_h: g.tr_mul(&gh),
            pair,
        })
    }

    /// Smooth intermediate controller `k_j(η_j)` for `j < r`.
    pub fn intermediate(&self, j: usize, eta: &DVector<T>) -> Result<DVector<T>> {
        let lie = self.pair_lie(j, eta)?;
        let rates = self.rates(j);
        let psi = bump(lie.pair.v, &self.bump);
        let b1 = -lie.lf_v - rates.gamma(lie.pair.v) + psi;
        let a2 = -&lie.lg_h;
        let b2 = lie.lf_h + rates.alpha(lie.pair.h);
        smooth_intermediate_controller(&lie.lg_v, b1, &a2, b2, self.levels[j].centroid_sigma, eta)
    }

    /// `k_j(η_j)` with its Jacobian by central differences.
    pub fn intermediate_with_jacobian(
        &self,
        j: usize,
        eta: &DVector<T>,
    ) -> Result<(DVector<T>, DMatrix<T>)> {
        let k = self.intermediate(j, eta)?;
        let step = lit::<T>(1e-6) * (T::one() + eta.norm());
        let mut jac = DMatrix::zeros(k.len(), eta.len());
        let mut probe = eta.clone();
        for c in 0..eta.len() {
            let orig = probe[c];
            probe[c] = orig + step;
            let kp = self.intermediate(j, &probe)?;
            probe[c] = orig - step;
            let km = self.intermediate(j, &probe)?;
            probe[c] = orig;
            jac.set_column(c, &((kp - km) / (lit::<T>(2.0) * step)));
        }
        Ok((k, jac))
    }

    /// Min-norm input satisfying the reduced top-level inequality.
    pub fn control(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let r = self.depth();
        let lie = self.pair_lie(r, x)?;
        let level = &self.levels[r - 1];
        let psi = bump(lie.pair.v, &self.bump);
        let clf_bound = -(lie.lf_v + level.rates.gamma(lie.pair.v) - psi);
        let cbf_bound = level.beta_h / level.beta_v * (lie.lf_h + level.rates.alpha(lie.pair.h));
        let b = clf_bound.min(cbf_bound);
        if b >= T::zero() {
            return Ok(DVector::zeros(lie.lg_v.len()));
        }
        let n2 = lie.lg_v.norm_squared();
        if n2 == T::zero() {
            return Err(Error::Infeasible {
                state: vec_to_f64(x),
                reason: "top-level input row vanishes while a decrease is required".into(),
            });
        }
        Ok(&lie.lg_v * (b / n2))
    }
}

/// Blend of Gaussian-weighted centroids over the CLF set `{a1ᵀυ ≤ b1}` and the CBF set
/// `{a2ᵀυ ≤ b2}`.
///
/// The weight is `ζ(c)` with `c` the cosine between the two constraint normals: acute
/// normals use the sum of single-constraint centroids, obtuse ones the centroid of the
/// intersection. A vanished row is dropped when its constant is satisfied.
pub fn smooth_intermediate_controller<T: Real>(
    a1: &DVector<T>,
    b1: T,
    a2: &DVector<T>,
    b2: T,
    sigma: T,
    state: &DVector<T>,
) -> Result<DVector<T>> {
    check_dim(a1.len(), a2.len())?;
    let zero1 = a1.norm() == T::zero();
    let zero2 = a2.norm() == T::zero();
    let infeasible = |reason: &str| Error::Infeasible {
        state: vec_to_f64(state),
        reason: reason.into(),
    };
    if zero1 && b1 < T::zero() {
        return Err(infeasible("CLF row vanishes with a violated constant"));
    }
    if zero2 && b2 < T::zero() {
        return Err(infeasible("CBF row vanishes with a violated constant"));
    }
    match (zero1, zero2) {
        (true, true) => return Ok(DVector::zeros(a1.len())),
        (true, false) => return Ok(halfspace_gaussian_centroid(a2, b2, sigma)),
        (false, true) => return Ok(halfspace_gaussian_centroid(a1, b1, sigma)),
        (false, false) => {}
    }
    let cos = gradient_alignment(a1, a2)?;
    let w = smooth_step(cos);
    let mut k = DVector::zeros(a1.len());
    if w > T::zero() {
        let sum =
            halfspace_gaussian_centroid(a1, b1, sigma) + halfspace_gaussian_centroid(a2, b2, sigma);
        k += sum * w;
    }
    if w < T::one() {
        let both = intersection_gaussian_centroid(a1, b1, a2, b2, sigma)?;
        k += both * (T::one() - w);
    }
    Ok(k)
}

/// Top-level backstepped controller for the subproblem `(x̂, q)` held in `aux`.
pub fn backstepped_subproblem_controller<T: Real, S: StrictFeedback<T> + ?Sized>(
    system: &S,
    levels: &[BackstepLevel<T>],
    polytope: &Polytope<T>,
    aux: &AuxiliaryState<T>,
    rates: &LinearClassK<T>,
    bump: &BumpParams<T>,
    x: &DVector<T>,
) -> Result<DVector<T>> {
    Backstepper::new(
        system,
        levels,
        *rates,
        *bump,
        aux.setpoint.clone(),
        polytope.halfspace(aux.active).clone(),
    )?
    .control(x)
}

/// Pair `i` of the subproblem `(x̂, q)` at `η_i`.
pub fn backstep_pair<T: Real, S: StrictFeedback<T> + ?Sized>(
    system: &S,
    levels: &[BackstepLevel<T>],
    polytope: &Polytope<T>,
    aux: &AuxiliaryState<T>,
    rates: &LinearClassK<T>,
    bump: &BumpParams<T>,
    i: usize,
    eta: &DVector<T>,
) -> Result<BacksteppedPair<T>> {
    Backstepper::new(
        system,
        levels,
        *rates,
        *bump,
        aux.setpoint.clone(),
        polytope.halfspace(aux.active).clone(),
    )?
    .pair(i, eta)
}
