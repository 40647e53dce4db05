//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Solves `min ½‖u‖² + ½pδ²  s.t.  a·u + f_v ≤ δ,  c·u + f_h ≥ 0` by enumerating the four
/// active sets, solving each KKT system with a dense LU and keeping the feasible candidate
/// with nonnegative multipliers and the smallest objective. `p = None` fixes `δ = 0`.
pub fn qp_active_set_oracle(
    a: &DVector<f64>,
    f_v: f64,
    c: &DVector<f64>,
    f_h: f64,
    p: Option<f64>,
) -> Option<(DVector<f64>, f64)> {
    let m = a.len();
    let relaxed = p.is_some();
    let nz = if relaxed { m + 1 } else { m };
    // Constraints in the form g·z ≤ r.
    let mut g1 = DVector::zeros(nz);
    g1.rows_mut(0, m).copy_from(a);
    if relaxed {
        g1[m] = -1.0;
    }
    let r1 = -f_v;
    let mut g2 = DVector::zeros(nz);
    g2.rows_mut(0, m).copy_from(&(-c));
    let r2 = f_h;
    let mut hess = DMatrix::identity(nz, nz);
    if let Some(p) = p {
        hess[(m, m)] = p;
    }
    let rows = [(g1, r1), (g2, r2)];
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0..4u8 {
        let active: Vec<usize> = (0..2).filter(|k| mask & (1 << k) != 0).collect();
        let k = active.len();
        let mut kkt = DMatrix::zeros(nz + k, nz + k);
        kkt.view_mut((0, 0), (nz, nz)).copy_from(&hess);
        let mut rhs = DVector::zeros(nz + k);
        for (j, &idx) in active.iter().enumerate() {
            let (g, r) = &rows[idx];
            for i in 0..nz {
                kkt[(i, nz + j)] = g[i];
                kkt[(nz + j, i)] = g[i];
            }
            rhs[nz + j] = *r;
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        let z = sol.rows(0, nz).into_owned();
        let lambdas_ok = (0..k).all(|j| sol[nz + j] >= -1e-9);
        let feasible = rows
            .iter()
            .all(|(g, r)| g.dot(&z) <= r + 1e-9 * (1.0 + r.abs()));
        if !(lambdas_ok && feasible) {
            continue;
        }
        let obj = 0.5 * z.dot(&(&hess * &z));
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            let delta = if relaxed { z[m] } else { 0.0 };
            best = Some((z.rows(0, m).into_owned(), delta));
        }
    }
    best
}

/// Monte Carlo centroid of `N(0, σI)` restricted to `{a_kᵀu ≤ b_k}` by rejection sampling.
pub fn mc_centroid(
    constraints: &[(DVector<f64>, f64)],
    sigma: f64,
    samples: usize,
    seed: u64,
) -> DVector<f64> {
    let n = constraints[0].0.len();
    let sd = sigma.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = DVector::zeros(n);
    let mut kept = 0usize;
    let mut u = DVector::zeros(n);
    for _ in 0..samples {
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            u[i] = sd * z;
        }
        if constraints.iter().all(|(a, b)| a.dot(&u) <= *b) {
            acc += &u;
            kept += 1;
        }
    }
    assert!(
        kept > samples / 100,
        "rejection rate too high for a Monte Carlo oracle"
    );
    acc / kept as f64
}

/// Smallest grid point `τ ∈ {0, step, 2·step, …} ∩ [0, tau_max]` at which some half-space
/// in `faces` reaches clearance `μ` along `x + τ·dir`.
pub fn tau_grid_scan(
    faces: &[(DVector<f64>, f64)],
    x: &DVector<f64>,
    dir: &DVector<f64>,
    mu: f64,
    tau_max: f64,
    step: f64,
) -> Option<f64> {
    let steps = (tau_max / step).ceil() as usize;
    (0..=steps).map(|k| k as f64 * step).find(|&tau| {
        let y = x + dir * tau;
        faces.iter().any(|(n, d)| n.dot(&y) - d >= mu)
    })
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let nv = v.norm();
        if nv > 1e-3 {
            return v / nv;
        }
    }
}
