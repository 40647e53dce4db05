//! Standard normal functions and truncated-Gaussian first moments, evaluated in `f64`.

use libm::erfc;
use std::f64::consts::FRAC_1_SQRT_2;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Natural log of the standard normal density.
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Mills ratio `(1 − Φ(z))/φ(z)` for `z ≥ 5`, by backward evaluation of its continued fraction.
fn mills_ratio_tail(z: f64) -> f64 {
    let mut acc = z;
    for k in (1..=60).rev() {
        acc = z + k as f64 / acc;
    }
    1.0 / acc
}

/// `ln Φ(x)`, accurate deep into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -5.0 {
        norm_cdf(x).ln()
    } else {
        log_norm_pdf(x) + mills_ratio_tail(-x).ln()
    }
}

/// Inverse Mills ratio `φ(x)/Φ(x)`, stable for large negative `x`.
pub fn inv_mills(x: f64) -> f64 {
    if x > -5.0 {
        norm_pdf(x) / norm_cdf(x)
    } else {
        1.0 / mills_ratio_tail(-x)
    }
}

/// `ln(Φ(u) − Φ(l))` for `l < u`, using the tail that avoids cancellation.
pub fn log_norm_interval(l: f64, u: f64) -> f64 {
    if u <= l {
        return f64::NEG_INFINITY;
    }
    if l == f64::NEG_INFINITY {
        return log_norm_cdf(u);
    }
    if u == f64::INFINITY {
        return log_norm_cdf(-l);
    }
    if l >= 0.0 {
        let a = log_norm_cdf(-l);
        let b = log_norm_cdf(-u);
        a + (-(b - a).exp()).ln_1p()
    } else if u <= 0.0 {
        let a = log_norm_cdf(u);
        let b = log_norm_cdf(l);
        a + (-(b - a).exp()).ln_1p()
    } else {
        (1.0 - norm_cdf(l) - norm_cdf(-u)).ln()
    }
}

/// Mean of a standard normal truncated to `[l, u]`.
pub fn truncated_mean_1d(l: f64, u: f64) -> f64 {
    let lm = log_norm_interval(l, u);
    let dl = if l.is_finite() {
        (log_norm_pdf(l) - lm).exp()
    } else {
        0.0
    };
    let du = if u.is_finite() {
        (log_norm_pdf(u) - lm).exp()
    } else {
        0.0
    };
    dl - du
}

const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// Quadrature nodes and weights covering each segment between consecutive `breaks` with
/// `panels` equal panels. The count is fixed so the nodes move continuously with the
/// segment ends, which keeps the result smooth in the parameters.
fn quadrature_rule(breaks: &[f64], panels: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::new();
    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            let half = 0.5 * h;
            for (&x, &w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                rule.push((mid - half * x, w * half));
                rule.push((mid + half * x, w * half));
            }
        }
    }
    rule
}

/// First moment of a standard bivariate normal restricted to `{t ≤ β1, r t + s √(1−r²) ≤ β2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WedgeMoments {
    /// `ln` of the Gaussian measure of the region.
    pub log_mass: f64,
    /// Conditional mean of the coordinate along the first constraint normal.
    pub mean_t: f64,
    /// Conditional mean of the orthogonal coordinate (toward the second normal).
    pub mean_s: f64,
}

/// Closest point of the wedge to the origin, in `(t, s)` coordinates.
fn wedge_closest_point(b1: f64, b2: f64, r: f64, rp: f64) -> (f64, f64) {
    let feasible = |t: f64, s: f64| {
        let tol = 1e-12 * (1.0 + b1.abs() + b2.abs());
        t <= b1 + tol && r * t + rp * s <= b2 + tol
    };
    if feasible(0.0, 0.0) {
        return (0.0, 0.0);
    }
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |t: f64, s: f64| {
        if feasible(t, s) {
            let d = t * t + s * s;
            if best.is_none_or(|(bt, bs)| d < bt * bt + bs * bs) {
                best = Some((t, s));
            }
        }
    };
    consider(b1.min(0.0), 0.0);
    consider(b2.min(0.0) * r, b2.min(0.0) * rp);
    let t = b1;
    consider(t, (b2 - r * t) / rp);
    best.unwrap_or((b1, (b2 - r * b1) / rp))
}

/// Gaussian moments of the planar wedge `{t ≤ β1, r t + s √(1−r²) ≤ β2}` for `|r| < 1`.
///
/// Integrates one coordinate in closed form and the other by composite Gauss–Legendre
/// quadrature on a window around the closest point, with all terms scaled in log space so
/// the result keeps relative accuracy far into the tails.
pub fn wedge_moments(b1: f64, b2: f64, r: f64) -> WedgeMoments {
    let rp = (1.0 - r * r).max(0.0).sqrt();
    let (tc, sc) = wedge_closest_point(b1, b2, r, rp);
    // Relative to the closest point the density is below exp(−Δ²/2) at distance Δ.
    let half_window = 9.5;
    const PANELS: usize = 10;

    if r.abs() < FRAC_1_SQRT_2 {
        // Outer variable t ≤ β1, inner s ≤ c(t) = (β2 − r t)/√(1−r²).
        let lo = tc - half_window;
        let hi = (tc + half_window).min(b1);
        let rule = quadrature_rule(&[lo, hi], PANELS);
        let terms: Vec<(f64, f64, f64)> = rule
            .iter()
            .map(|&(t, w)| {
                let c = (b2 - r * t) / rp;
                (t, w, log_norm_pdf(t) + log_norm_cdf(c))
            })
            .collect();
        let shift = terms.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.2));
        let (mut m0, mut mt, mut ms) = (0.0, 0.0, 0.0);
        for &(t, w, l) in &terms {
            let c = (b2 - r * t) / rp;
            let e = w * (l - shift).exp();
            m0 += e;
            mt += t * e;
            ms -= w * (log_norm_pdf(t) + log_norm_pdf(c) - shift).exp();
        }
        WedgeMoments {
            log_mass: shift + m0.ln(),
            mean_t: mt / m0,
            mean_s: ms / m0,
        }
    } else {
        // Outer variable s, inner t on [L(s), U(s)].
        let s0 = (b2 - r * b1) / rp;
        let bounds = |s: f64| -> (f64, f64) {
            let cut = (b2 - rp * s) / r;
            if r > 0.0 {
                (f64::NEG_INFINITY, cut.min(b1))
            } else {
                (cut, b1)
            }
        };
        let lo = sc - half_window;
        let mut hi = sc + half_window;
        if r < 0.0 {
            hi = hi.min(s0);
        }
        let mut breaks = vec![lo];
        if r > 0.0 && s0 > lo && s0 < hi {
            breaks.push(s0);
        }
        breaks.push(hi);
        let rule = quadrature_rule(&breaks, PANELS);
        let terms: Vec<(f64, f64, f64)> = rule
            .iter()
            .map(|&(s, w)| {
                let (l, u) = bounds(s);
                (s, w, log_norm_pdf(s) + log_norm_interval(l, u))
            })
            .collect();
        let shift = terms.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.2));
        let (mut m0, mut mt, mut ms) = (0.0, 0.0, 0.0);
        for &(s, w, lm) in &terms {
            let e = w * (lm - shift).exp();
            m0 += e;
            ms += s * e;
            let (l, u) = bounds(s);
            if l.is_finite() {
                mt += w * (log_norm_pdf(s) + log_norm_pdf(l) - shift).exp();
            }
            if u.is_finite() {
                mt -= w * (log_norm_pdf(s) + log_norm_pdf(u) - shift).exp();
            }
        }
        WedgeMoments {
            log_mass: shift + m0.ln(),
            mean_t: mt / m0,
            mean_s: ms / m0,
        }
    }
}
