//! CSV and SVG artifacts.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::{DVector, SymmetricEigen};
use safeclf::{Ellipsoid64, HybridTrajectory64, Polytope64, Verdict};

use crate::error::{CliError, CliResult};

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column names of a trajectory CSV.
pub fn trajectory_header(n: usize, m: usize, n0: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..n).map(|i| format!("x_{i}")));
    h.extend((0..m).map(|i| format!("u_{i}")));
    h.push("q".into());
    h.extend((0..n0).map(|i| format!("xhat_{i}")));
    h.push("jump_flag".into());
    h
}

/// Writes the samples of one run. `jump_flag` holds the number of jumps applied at that
/// sample.
pub fn write_trajectory_csv<W: Write>(out: W, traj: &HybridTrajectory64) -> CliResult<()> {
    let n = traj.states.first().map_or(traj.top_dim, DVector::len);
    let m = traj.inputs.first().map_or(0, DVector::len);
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("csv: {e}"));
    w.write_record(trajectory_header(n, m, traj.top_dim))
        .map_err(csv_err)?;
    for k in 0..traj.len() {
        let mut rec = Vec::with_capacity(n + m + traj.top_dim + 3);
        rec.push(fmt_float(traj.times[k]));
        rec.extend(traj.states[k].iter().map(|&v| fmt_float(v)));
        rec.extend(traj.inputs[k].iter().map(|&v| fmt_float(v)));
        rec.push(traj.aux_history[k].active.to_string());
        rec.extend(traj.aux_history[k].setpoint.iter().map(|&v| fmt_float(v)));
        rec.push(traj.jump_flags[k].to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Runtime(format!("csv: {e}")))
}

/// One row of the batch summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub index: usize,
    pub label: String,
    pub controller: String,
    pub initial_state: Vec<f64>,
    pub verdict: Option<Verdict>,
    pub expected: Option<Verdict>,
    pub jumps: usize,
    pub min_clearance: f64,
    pub final_error: f64,
    pub t_final: f64,
    pub steps: usize,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl RunSummary {
    /// `None` when nothing was expected.
    pub fn matched(&self) -> Option<bool> {
        self.expected.map(|e| self.verdict == Some(e))
    }
}

pub const SUMMARY_HEADER: [&str; 14] = [
    "index",
    "label",
    "controller",
    "initial_state",
    "verdict",
    "expected",
    "matched",
    "jumps",
    "min_clearance",
    "final_error",
    "t_final",
    "steps",
    "wall_time_s",
    "error",
];

pub fn write_summary_csv<W: Write>(out: W, rows: &[RunSummary]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("csv: {e}"));
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        let x0: Vec<String> = r.initial_state.iter().map(|v| format!("{v}")).collect();
        w.write_record([
            r.index.to_string(),
            r.label.clone(),
            r.controller.clone(),
            x0.join(";"),
            r.verdict.map_or("error".into(), |v| v.to_string()),
            r.expected.map_or(String::new(), |v| v.to_string()),
            r.matched().map_or(String::new(), |m| m.to_string()),
            r.jumps.to_string(),
            fmt_float(r.min_clearance),
            fmt_float(r.final_error),
            fmt_float(r.t_final),
            r.steps.to_string(),
            format!("{:.6}", r.wall_time_s),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Runtime(format!("csv: {e}")))
}

/// Vertices of a bounded 2D polytope, counter-clockwise.
pub fn polygon_vertices(p: &Polytope64) -> CliResult<Vec<[f64; 2]>> {
    if p.dim() != 2 {
        return Err(CliError::UnsupportedDimension(p.dim()));
    }
    if let Some(v) = p.vertices() {
        return Ok(v.iter().map(|x| [x[0], x[1]]).collect());
    }
    let hs = p.halfspaces();
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for i in 0..hs.len() {
        for j in i + 1..hs.len() {
            let (a, b) = (hs[i].normal(), hs[j].normal());
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let (da, db) = (hs[i].offset(), hs[j].offset());
            let x = DVector::from_vec(vec![
                (da * b[1] - db * a[1]) / det,
                (a[0] * db - b[0] * da) / det,
            ]);
            if p.values(&x).iter().all(|&h| h <= 1e-9) {
                pts.push([x[0], x[1]]);
            }
        }
    }
    let n = pts.len().max(1) as f64;
    let c = pts
        .iter()
        .fold([0.0, 0.0], |s, q| [s[0] + q[0] / n, s[1] + q[1] / n]);
    pts.sort_by(|p, q| {
        let ap = (p[1] - c[1]).atan2(p[0] - c[0]);
        let aq = (q[1] - c[1]).atan2(q[0] - c[0]);
        ap.total_cmp(&aq)
    });
    pts.dedup_by(|p, q| (p[0] - q[0]).hypot(p[1] - q[1]) < 1e-9);
    Ok(pts)
}

/// Boundary of `{(x − c)ᵀP(x − c) ≤ r²}` sampled at `k` points.
pub fn ellipse_outline(e: &Ellipsoid64, k: usize) -> Vec<[f64; 2]> {
    let eig = SymmetricEigen::new(e.shape().clone());
    let c = e.center();
    (0..k)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / k as f64;
            let (s, co) = th.sin_cos();
            let mut p = [c[0], c[1]];
            for (j, w) in [co, s].into_iter().enumerate() {
                let axis = eig.eigenvectors.column(j);
                let len = e.radius() / eig.eigenvalues[j].sqrt();
                p[0] += w * len * axis[0];
                p[1] += w * len * axis[1];
            }
            p
        })
        .collect()
}

/// A trajectory to draw; `verdict = None` marks a run that stopped with an error.
pub struct SvgTrace<'a> {
    pub traj: &'a HybridTrajectory64,
    pub verdict: Option<Verdict>,
}

const WIDTH: f64 = 640.0;

/// Standalone SVG with the polytope, an optional dashed ellipse, the top-level paths and
/// start/target markers.
pub fn emit_svg(
    traces: &[SvgTrace<'_>],
    polytope: &Polytope64,
    ellipse: Option<&Ellipsoid64>,
    target: &DVector<f64>,
) -> CliResult<String> {
    let poly = polygon_vertices(polytope)?;
    if target.len() != 2 {
        return Err(CliError::UnsupportedDimension(target.len()));
    }
    for t in traces {
        if t.traj.top_dim != 2 {
            return Err(CliError::UnsupportedDimension(t.traj.top_dim));
        }
    }
    let ell = ellipse.map(|e| ellipse_outline(e, 180));

    let mut lo = [target[0], target[1]];
    let mut hi = lo;
    let mut grow = |p: [f64; 2]| {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    };
    poly.iter().for_each(|&p| grow(p));
    ell.iter().flatten().for_each(|&p| grow(p));
    for t in traces {
        t.traj.states.iter().for_each(|x| grow([x[0], x[1]]));
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
    let pad = 0.08 * span;
    let scale = WIDTH / (hi[0] - lo[0] + 2.0 * pad).max(1e-9);
    let height = ((hi[1] - lo[1] + 2.0 * pad) * scale).ceil();
    let map = |p: [f64; 2]| {
        (
            (p[0] - lo[0] + pad) * scale,
            height - (p[1] - lo[1] + pad) * scale,
        )
    };
    let points = |ps: &mut dyn Iterator<Item = [f64; 2]>| {
        ps.map(|p| {
            let (x, y) = map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    s.push_str(
        "<style>\n\
         .polytope { fill: #d9d9d9; stroke: #303030; stroke-width: 1.5; }\n\
         .ellipse { fill: none; stroke: #303030; stroke-width: 1; stroke-dasharray: 6 4; }\n\
         .traj { fill: none; stroke-width: 1.6; }\n\
         .converged { stroke: #1f77b4; }\n\
         .deadlock { stroke: #ff7f0e; }\n\
         .unsafe { stroke: #d62728; }\n\
         .timed_out { stroke: #7f7f7f; }\n\
         .failed { stroke: #9467bd; stroke-dasharray: 2 2; }\n\
         .start { fill: #000000; }\n\
         .target { stroke: #000000; stroke-width: 2; }\n\
         </style>\n",
    );
    let _ = writeln!(
        s,
        r#"<polygon class="polytope" points="{}"/>"#,
        points(&mut poly.iter().copied())
    );
    if let Some(e) = &ell {
        let _ = writeln!(
            s,
            r#"<polygon class="ellipse" points="{}"/>"#,
            points(&mut e.iter().copied())
        );
    }
    for t in traces {
        if t.traj.is_empty() {
            continue;
        }
        let class = t.verdict.map_or("failed", Verdict::as_str);
        let _ = writeln!(
            s,
            r#"<polyline class="traj {class}" points="{}"/>"#,
            points(&mut t.traj.states.iter().map(|x| [x[0], x[1]]))
        );
    }
    for t in traces {
        if let Some(x) = t.traj.states.first() {
            let (cx, cy) = map([x[0], x[1]]);
            let _ = writeln!(
                s,
                r#"<circle class="start" cx="{cx:.2}" cy="{cy:.2}" r="3"/>"#
            );
        }
    }
    let (tx, ty) = map([target[0], target[1]]);
    let _ = writeln!(
        s,
        r#"<path class="target" d="M {:.2} {:.2} L {:.2} {:.2} M {:.2} {:.2} L {:.2} {:.2}"/>"#,
        tx - 5.0,
        ty - 5.0,
        tx + 5.0,
        ty + 5.0,
        tx - 5.0,
        ty + 5.0,
        tx + 5.0,
        ty - 5.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
