//! Half-spaces, polytopes, ellipsoids and the barrier values built on them.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{lit, Real};

/// Affine half-space function `h(x) = nᵀx − d` with a unit outward normal.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace<T: Real> {
    normal: DVector<T>,
    offset: T,
}

impl<T: Real> HalfSpace<T> {
    /// Builds a half-space, rescaling `(normal, offset)` so the normal has unit length.
    pub fn new(normal: DVector<T>, offset: T) -> Result<Self> {
        let norm = normal.norm();
        if !(norm > T::zero()) || !norm.is_finite() || !offset.is_finite() {
            return Err(Error::DegenerateGeometry(
                "half-space normal must be finite and nonzero".into(),
            ));
        }
        Ok(Self {
            normal: normal / norm,
            offset: offset / norm,
        })
    }

    pub fn normal(&self) -> &DVector<T> {
        &self.normal
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `nᵀx − d` without a dimension check.
    #[inline]
    pub fn value(&self, x: &DVector<T>) -> T {
        self.normal.dot(x) - self.offset
    }
}

/// Evaluates `h_q(x) = n_qᵀx − d_q`.
pub fn halfspace_value<T: Real>(hs: &HalfSpace<T>, x: &DVector<T>) -> Result<T> {
    check_dim(hs.dim(), x.len())?;
    Ok(hs.value(x))
}

/// Convex polytope `{x : h_q(x) ≤ 0 ∀q}`; the safe set is the closure of its complement.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope<T: Real> {
    halfspaces: Vec<HalfSpace<T>>,
    vertices: Option<Vec<DVector<T>>>,
}

impl<T: Real> Polytope<T> {
    /// Builds a polytope from half-spaces and validates `Q ≥ n+1` and distinct normals.
    ///
    /// Boundedness is checked for planar polytopes only.
    pub fn from_halfspaces(halfspaces: Vec<HalfSpace<T>>) -> Result<Self> {
        let Some(first) = halfspaces.first() else {
            return Err(Error::DegenerateGeometry(
                "polytope has no half-spaces".into(),
            ));
        };
        let n = first.dim();
        for hs in &halfspaces {
            check_dim(n, hs.dim())?;
        }
        if halfspaces.len() < n + 1 {
            return Err(Error::DegenerateGeometry(format!(
                "polytope in R^{n} needs at least {} half-spaces, got {}",
                n + 1,
                halfspaces.len()
            )));
        }
        let tol = lit::<T>(1e-9);
        for i in 0..halfspaces.len() {
            for j in (i + 1)..halfspaces.len() {
                if (halfspaces[i].normal() - halfspaces[j].normal()).norm() <= tol {
                    return Err(Error::DegenerateGeometry(format!(
                        "half-spaces {i} and {j} share the same normal"
                    )));
                }
            }
        }
        if n == 2 {
            check_planar_bounded(&halfspaces)?;
        }
        Ok(Self {
            halfspaces,
            vertices: None,
        })
    }

    /// Builds a planar polytope from an ordered convex vertex list.
    ///
    /// Half-space `q` is the edge from vertex `q` to vertex `q+1`; either winding is accepted.
    pub fn from_vertices_2d(vertices: Vec<DVector<T>>) -> Result<Self> {
        let k = vertices.len();
        if k < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "a planar polytope needs at least 3 vertices, got {k}"
            )));
        }
        for v in &vertices {
            check_dim(2, v.len())?;
        }
        let mut area2 = T::zero();
        for i in 0..k {
            let a = &vertices[i];
            let b = &vertices[(i + 1) % k];
            area2 += a[0] * b[1] - a[1] * b[0];
        }
        if area2.abs() <= lit(1e-12) {
            return Err(Error::DegenerateGeometry(
                "vertex list encloses no area".into(),
            ));
        }
        let ccw = area2 > T::zero();
        let mut halfspaces = Vec::with_capacity(k);
        for i in 0..k {
            let a = &vertices[i];
            let b = &vertices[(i + 1) % k];
            let c = &vertices[(i + 2) % k];
            let e = b - a;
            let f = c - b;
            let turn = e[0] * f[1] - e[1] * f[0];
            if (ccw && turn <= T::zero()) || (!ccw && turn >= T::zero()) {
                return Err(Error::DegenerateGeometry(format!(
                    "vertex list is not strictly convex at vertex {}",
                    (i + 1) % k
                )));
            }
            // Outward normal: the edge rotated by -90° for counter-clockwise winding.
            let normal = if ccw {
                DVector::from_vec(vec![e[1], -e[0]])
            } else {
                DVector::from_vec(vec![-e[1], e[0]])
            };
            let offset = normal.dot(a);
            halfspaces.push(HalfSpace::new(normal, offset)?);
        }
        let mut p = Self::from_halfspaces(halfspaces)?;
        p.vertices = Some(vertices);
        Ok(p)
    }

    pub fn halfspaces(&self) -> &[HalfSpace<T>] {
        &self.halfspaces
    }

    pub fn halfspace(&self, q: usize) -> &HalfSpace<T> {
        &self.halfspaces[q]
    }

    pub fn vertices(&self) -> Option<&[DVector<T>]> {
        self.vertices.as_deref()
    }

    /// Number of half-spaces `Q`.
    pub fn len(&self) -> usize {
        self.halfspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.halfspaces.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.halfspaces[0].dim()
    }

    /// All half-space values at `x`.
    pub fn values(&self, x: &DVector<T>) -> Vec<T> {
        self.halfspaces.iter().map(|hs| hs.value(x)).collect()
    }

    /// `max_q h_q(x)`: nonnegative exactly on the safe set.
    pub fn clearance(&self, x: &DVector<T>) -> T {
        let mut best = self.halfspaces[0].value(x);
        for hs in &self.halfspaces[1..] {
            best = best.max(hs.value(x));
        }
        best
    }

    /// Largest absolute offset, used to scale safety tolerances.
    pub fn max_abs_offset(&self) -> T {
        self.halfspaces
            .iter()
            .fold(T::zero(), |a, hs| a.max(hs.offset().abs()))
    }
}

fn check_planar_bounded<T: Real>(halfspaces: &[HalfSpace<T>]) -> Result<()> {
    let mut angles: Vec<f64> = halfspaces
        .iter()
        .map(|hs| {
            let n = hs.normal();
            crate::scalar::to_f64(n[1]).atan2(crate::scalar::to_f64(n[0]))
        })
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut max_gap: f64 = angles[0] + std::f64::consts::TAU - angles[angles.len() - 1];
    for w in angles.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    if max_gap >= std::f64::consts::PI - 1e-12 {
        return Err(Error::DegenerateGeometry(
            "half-space normals do not positively span the plane (unbounded polytope)".into(),
        ));
    }
    Ok(())
}

/// True iff `x` lies in the closed polytope (boundary included).
pub fn polytope_contains<T: Real>(p: &Polytope<T>, x: &DVector<T>) -> Result<bool> {
    check_dim(p.dim(), x.len())?;
    Ok(p.halfspaces.iter().all(|hs| hs.value(x) <= T::zero()))
}

/// Smallest index attaining `max_q h_q(x)`, with that value.
pub fn max_halfspace_index<T: Real>(p: &Polytope<T>, x: &DVector<T>) -> Result<(usize, T)> {
    check_dim(p.dim(), x.len())?;
    Ok(argmax_over(p, 0..p.len(), x).expect("polytope has at least one half-space"))
}

/// Smallest index attaining the maximum of `h_q(x)` over `indices`.
pub(crate) fn argmax_over<T: Real>(
    p: &Polytope<T>,
    indices: impl IntoIterator<Item = usize>,
    x: &DVector<T>,
) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for q in indices {
        let v = p.halfspaces[q].value(x);
        match best {
            Some((bq, bv)) if v < bv || (v == bv && q > bq) => {}
            _ => best = Some((q, v)),
        }
    }
    best
}

/// Quadratic barrier region `½(x−c)ᵀA(x−c) ≥ ½r²` around an ellipsoidal obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid<T: Real> {
    center: DVector<T>,
    shape: DMatrix<T>,
    radius: T,
}

impl<T: Real> Ellipsoid<T> {
    pub fn new(center: DVector<T>, shape: DMatrix<T>, radius: T) -> Result<Self> {
        let n = center.len();
        if shape.nrows() != n || shape.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: shape.nrows(),
            });
        }
        let scale = shape.amax().max(T::one());
        if (&shape - shape.transpose()).amax() > lit::<T>(1e-12) * scale {
            return Err(Error::DegenerateGeometry(
                "ellipsoid shape is not symmetric".into(),
            ));
        }
        if shape.clone().cholesky().is_none() {
            return Err(Error::DegenerateGeometry(
                "ellipsoid shape is not positive definite".into(),
            ));
        }
        if !(radius > T::zero()) {
            return Err(Error::DegenerateGeometry(
                "ellipsoid radius must be positive".into(),
            ));
        }
        Ok(Self {
            center,
            shape,
            radius,
        })
    }

    pub fn center(&self) -> &DVector<T> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<T> {
        &self.shape
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

/// `h(x) = ½(x−c)ᵀA(x−c) − ½r²` and its gradient `A(x−c)`.
pub fn ellipsoid_cbf<T: Real>(e: &Ellipsoid<T>, x: &DVector<T>) -> Result<(T, DVector<T>)> {
    check_dim(e.dim(), x.len())?;
    let d = x - &e.center;
    let grad = &e.shape * &d;
    let half = lit::<T>(0.5);
    Ok((half * d.dot(&grad) - half * e.radius * e.radius, grad))
}

/// Log-sum-exp smooth maximum of the half-space values and its gradient.
pub fn smoothmax_cbf<T: Real>(
    p: &Polytope<T>,
    kappa: T,
    x: &DVector<T>,
) -> Result<(T, DVector<T>)> {
    check_dim(p.dim(), x.len())?;
    if !(kappa > T::zero()) {
        return Err(Error::InvalidParameter(
            "smooth-max kappa must be positive".into(),
        ));
    }
    let values = p.values(x);
    let hmax = values.iter().copied().fold(values[0], |a, b| a.max(b));
    let mut sum = T::zero();
    let mut grad = DVector::zeros(x.len());
    for (hs, &h) in p.halfspaces.iter().zip(&values) {
        let w = (kappa * (h - hmax)).exp();
        sum += w;
        grad.axpy(w, hs.normal(), T::one());
    }
    let q = lit::<T>(p.len() as f64);
    let value = hmax + (sum / q).ln() / kappa;
    Ok((value, grad / sum))
}

/// Point where segment `[a, b]` crosses the hyperplane `h = 0`.
pub fn segment_hyperplane_intersection<T: Real>(
    hs: &HalfSpace<T>,
    a: &DVector<T>,
    b: &DVector<T>,
) -> Result<DVector<T>> {
    check_dim(hs.dim(), a.len())?;
    check_dim(hs.dim(), b.len())?;
    let ha = hs.value(a);
    let hb = hs.value(b);
    if ha == T::zero() {
        return Ok(a.clone());
    }
    if hb == T::zero() {
        return Ok(b.clone());
    }
    if ha == hb {
        return Err(Error::DegenerateGeometry(
            "segment is parallel to the hyperplane".into(),
        ));
    }
    let t = ha / (ha - hb);
    let slack = lit::<T>(1e-12);
    if t < -slack || t > T::one() + slack {
        return Err(Error::DegenerateGeometry(
            "segment endpoints lie on the same side of the hyperplane".into(),
        ));
    }
    let t = t.clamp(T::zero(), T::one());
    let mut p = a + (b - a) * t;
    // One correction along the normal removes rounding left by the parametric solve.
    let residual = hs.value(&p);
    p.axpy(-residual, hs.normal(), T::one());
    Ok(p)
}

/// Orthogonal projection of `x` onto the hyperplane `h = 0`.
pub fn project_onto_hyperplane<T: Real>(hs: &HalfSpace<T>, x: &DVector<T>) -> DVector<T> {
    let h = hs.value(x);
    x - hs.normal() * h
}

/// Fallback direction used when the reference direction is parallel to a face normal.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TieBreakRule<T: Real> {
    /// `normalize(e_k − (vᵀe_k)v)` for the smallest usable basis index `k`.
    #[default]
    Canonical,
    /// `normalize(w − (vᵀw)v)` for a fixed vector `w`; falls back to `Canonical` if `w ∥ v`.
    Fixed(DVector<T>),
}

impl<T: Real> TieBreakRule<T> {
    /// A unit vector orthogonal to `v`.
    pub fn direction(&self, v: &DVector<T>) -> DVector<T> {
        let tol = lit::<T>(1e-9);
        if let TieBreakRule::Fixed(w) = self {
            if w.len() == v.len() {
                let e = w - v * v.dot(w);
                let norm = e.norm();
                if norm > tol {
                    return e / norm;
                }
            }
        }
        for k in 0..v.len() {
            let mut e = v * (-v[k]);
            e[k] += T::one();
            let norm = e.norm();
            if norm > tol {
                return e / norm;
            }
        }
        // Only reachable for n = 1, where no orthogonal direction exists.
        DVector::zeros(v.len())
    }
}

/// Projects `v` onto the hyperplane with normal `n` and normalizes, using the tie-break
/// direction when the projection vanishes.
pub fn project_direction<T: Real>(
    v: &DVector<T>,
    normal: &DVector<T>,
    rule: &TieBreakRule<T>,
) -> DVector<T> {
    let proj = v - normal * normal.dot(v);
    let norm = proj.norm();
    if norm > lit(1e-9) {
        proj / norm
    } else {
        rule.direction(v)
    }
}

/// Minimum-volume enclosing ellipsoid of a point set.
///
/// Khachiyan's algorithm with away steps; stops once every point satisfies
/// `q_jᵀX⁻¹q_j ≤ (1+tol)(n+1)`. The returned ellipsoid contains every input point.
pub fn min_volume_ellipsoid<T: Real>(points: &[DVector<T>], tol: T) -> Result<Ellipsoid<T>> {
    let Some(first) = points.first() else {
        return Err(Error::DegenerateGeometry("no points to enclose".into()));
    };
    let n = first.len();
    for p in points {
        check_dim(n, p.len())?;
    }
    let m = points.len();
    if m < n + 1 {
        return Err(Error::DegenerateGeometry(format!(
            "need at least {} points in R^{n}, got {m}",
            n + 1
        )));
    }
    let d = lit::<T>((n + 1) as f64);
    // Lifted points q_j = (p_j, 1).
    let mut lifted = DMatrix::<T>::zeros(n + 1, m);
    for (j, p) in points.iter().enumerate() {
        lifted.view_mut((0, j), (n, 1)).copy_from(p);
        lifted[(n, j)] = T::one();
    }
    let mut u = DVector::from_element(m, T::one() / lit::<T>(m as f64));
    for _ in 0..200_000 {
        let x = &lifted * DMatrix::from_diagonal(&u) * lifted.transpose();
        let chol = x
            .cholesky()
            .ok_or_else(|| Error::DegenerateGeometry("points are affinely dependent".into()))?;
        let solved = chol.solve(&lifted);
        let mvals: Vec<T> = (0..m)
            .map(|j| lifted.column(j).dot(&solved.column(j)))
            .collect();
        let (jp, mp) = mvals
            .iter()
            .copied()
            .enumerate()
            .fold((0, mvals[0]), |b, (j, v)| if v > b.1 { (j, v) } else { b });
        let (jm, mm) = mvals
            .iter()
            .copied()
            .enumerate()
            .filter(|(j, _)| u[*j] > T::zero())
            .fold((usize::MAX, T::max_value().unwrap()), |b, (j, v)| {
                if v < b.1 {
                    (j, v)
                } else {
                    b
                }
            });
        let gap_up = mp / d - T::one();
        let gap_down = T::one() - mm / d;
        if gap_up <= tol && gap_down <= tol {
            break;
        }
        if gap_up >= gap_down {
            let step = (mp - d) / (d * (mp - T::one()));
            u *= T::one() - step;
            u[jp] += step;
        } else {
            let uj = u[jm];
            let step = ((d - mm) / (d * (mm - T::one()))).min(uj / (T::one() - uj));
            u *= T::one() + step;
            u[jm] -= step;
            if u[jm] < T::zero() {
                u[jm] = T::zero();
            }
        }
    }
    let pts = lifted.rows(0, n).into_owned();
    let center = &pts * &u;
    let mut scatter = DMatrix::<T>::zeros(n, n);
    for (j, p) in points.iter().enumerate() {
        let dp = p - &center;
        scatter += &dp * dp.transpose() * u[j];
    }
    let inv = scatter
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("points are affinely dependent".into()))?;
    let mut shape = inv / lit::<T>(n as f64);
    shape = (&shape + shape.transpose()) * lit::<T>(0.5);
    let r2 = points.iter().fold(T::zero(), |acc, p| {
        let dp = p - &center;
        acc.max(dp.dot(&(&shape * &dp)))
    });
    Ellipsoid::new(center, shape, r2.sqrt())
}
