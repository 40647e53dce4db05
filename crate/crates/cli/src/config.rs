//! Scenario files: schema, defaults, validation and translation into core scenarios.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeclf::{
    min_volume_ellipsoid, run_backstepped, run_hybrid, BackstepLevel, BumpParams, ControllerKind,
    DoubleIntegrator, Ellipsoid64, HalfSpace, HybridTrajectory64, LinearAffine, LinearClassK,
    Polytope64, Scenario64, SimFailure, SimSettings, SingleIntegrator, TieBreakRule, Verdict,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    SingleIntegrator,
    DoubleIntegrator,
    CustomAffine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerName {
    Hybrid,
    BacksteppedHybrid,
    QpEllipsoid,
    QpSmoothmax,
    HybridCbfOnly,
}

impl ControllerName {
    pub const ALL: [ControllerName; 5] = [
        ControllerName::Hybrid,
        ControllerName::BacksteppedHybrid,
        ControllerName::QpEllipsoid,
        ControllerName::QpSmoothmax,
        ControllerName::HybridCbfOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerName::Hybrid => "hybrid",
            ControllerName::BacksteppedHybrid => "backstepped_hybrid",
            ControllerName::QpEllipsoid => "qp_ellipsoid",
            ControllerName::QpSmoothmax => "qp_smoothmax",
            ControllerName::HybridCbfOnly => "hybrid_cbf_only",
        }
    }

    /// Controllers driven by the switching logic, which need `0 < σ < μ`.
    pub fn uses_switching(self) -> bool {
        matches!(
            self,
            ControllerName::Hybrid
                | ControllerName::BacksteppedHybrid
                | ControllerName::HybridCbfOnly
        )
    }
}

impl fmt::Display for ControllerName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerName {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        ControllerName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "unknown controller `{s}` (expected one of hybrid, backstepped_hybrid, \
                     qp_ellipsoid, qp_smoothmax, hybrid_cbf_only)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceConfig {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Either a 2D vertex list (any winding) or an n-D half-space list `{n_q, d_q}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfspaces: Option<Vec<HalfSpaceConfig>>,
}

/// `ẋ = A x + b + G u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomAffineConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub g: Vec<Vec<f64>>,
}

/// Set `(x − c)ᵀP(x − c) ≤ r²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidConfig {
    pub center: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub beta_v: f64,
    pub beta_h: f64,
    pub gamma_bar: f64,
    pub alpha_bar: f64,
    pub centroid_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Parameters {
    pub gamma_bar: f64,
    pub alpha_bar: f64,
    /// Relaxation weight `p` of the relaxed-QP controllers.
    pub relaxation_weight: f64,
    pub mu: f64,
    pub sigma: f64,
    pub smoothmax_kappa: f64,
    pub bump_eps: f64,
    pub bump_kappa: f64,
    /// Fixed tie-break vector `ε̄`; the canonical basis rule is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tiebreak: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_face: Option<usize>,
    /// Barrier ellipsoid of `qp_ellipsoid`; fitted to the vertices when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ellipsoid: Option<EllipsoidConfig>,
    /// Backstepping levels `1..=r`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelConfig>,
}

impl Default for Parameters {
    fn default() -> Self {
        Self {
            gamma_bar: 1.0,
            alpha_bar: 1.0,
            relaxation_weight: 100.0,
            mu: 0.2,
            sigma: 0.1,
            smoothmax_kappa: 10.0,
            bump_eps: 0.1,
            bump_kappa: 1.0,
            tiebreak: None,
            initial_face: None,
            ellipsoid: None,
            levels: Vec::new(),
        }
    }
}

/// Expected verdict, either for every controller or keyed by controller name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expectation {
    All(String),
    PerController(BTreeMap<String, String>),
}

impl Expectation {
    fn resolve(&self, controller: ControllerName) -> Option<Verdict> {
        let s = match self {
            Expectation::All(s) => s,
            Expectation::PerController(map) => map.get(controller.as_str())?,
        };
        s.parse().ok()
    }

    fn check(&self, field: &str) -> CliResult<()> {
        let verdict = |s: &String| {
            s.parse::<Verdict>()
                .map(|_| ())
                .map_err(|_| CliError::Config(format!("{field}: unknown verdict `{s}`")))
        };
        match self {
            Expectation::All(s) => verdict(s),
            Expectation::PerController(map) => {
                for (k, v) in map {
                    k.parse::<ControllerName>()
                        .map_err(|e| CliError::Config(format!("{field}: {e}")))?;
                    verdict(v)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub label: String,
    /// Top-level position, or the full stacked state.
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_face: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiebreak: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

/// `count` points on a circle, optionally jittered with a seeded generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub count: usize,
    #[serde(default)]
    pub angle_offset: f64,
    #[serde(default)]
    pub angle_jitter: f64,
    #[serde(default)]
    pub radius_jitter: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

impl GridSpec {
    pub fn points(&self) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let step = std::f64::consts::TAU / self.count as f64;
        (0..self.count)
            .map(|k| {
                let mut theta = self.angle_offset + step * k as f64;
                let mut r = self.radius;
                if self.angle_jitter > 0.0 {
                    theta += rng.random_range(-self.angle_jitter..=self.angle_jitter);
                }
                if self.radius_jitter > 0.0 {
                    r += rng.random_range(-self.radius_jitter..=self.radius_jitter);
                }
                DVector::from_vec(vec![
                    self.center[0] + r * theta.cos(),
                    self.center[1] + r * theta.sin(),
                ])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialStates {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<InitialState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub conv_tol: f64,
    pub stall_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety_tol: Option<f64>,
    pub record_every: usize,
    pub zoh: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let s = SimSettings::<f64>::default();
        Self {
            dt: s.dt,
            t_max: s.t_max,
            conv_tol: s.conv_tol,
            stall_tol: s.stall_tol,
            safety_tol: s.safety_tol,
            record_every: s.record_every,
            zoh: s.zoh,
        }
    }
}

fn default_name() -> String {
    "scenario".into()
}

fn default_dynamics() -> DynamicsKind {
    DynamicsKind::SingleIntegrator
}

fn default_controller() -> ControllerName {
    ControllerName::Hybrid
}

/// A scenario file. Scalars and arrays come before the tables so the struct serializes
/// back to valid TOML in field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Illustrative geometry rather than measured data.
    #[serde(default)]
    pub reconstruction: bool,
    #[serde(default = "default_dynamics")]
    pub dynamics: DynamicsKind,
    #[serde(default = "default_controller")]
    pub controller: ControllerName,
    pub target: Vec<f64>,
    pub polytope: PolytopeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_affine: Option<CustomAffineConfig>,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub initial_states: InitialStates,
    #[serde(default)]
    pub sim: SimConfig,
}

/// Command-line overrides applied on top of a loaded file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub controller: Option<ControllerName>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub seed: Option<u64>,
    pub zoh: bool,
}

/// One closed-loop run derived from the initial-state list.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    pub index: usize,
    pub label: String,
    pub initial_state: DVector<f64>,
    pub initial_face: Option<usize>,
    pub tiebreak: Option<Vec<f64>>,
    pub expect: Option<Verdict>,
}

/// Plant built from the dynamics kind.
pub enum Plant {
    Single(SingleIntegrator),
    Double(DoubleIntegrator),
    Custom(LinearAffine<f64>),
}

impl Plant {
    pub fn state_dim(&self) -> usize {
        use safeclf::AffineDynamics;
        match self {
            Plant::Single(p) => AffineDynamics::<f64>::state_dim(p),
            Plant::Double(p) => AffineDynamics::<f64>::state_dim(p),
            Plant::Custom(p) => p.state_dim(),
        }
    }

    // The failure keeps the partial trajectory, so it is as large as a success.
    #[allow(clippy::result_large_err)]
    pub fn simulate(&self, scenario: &Scenario64) -> Result<HybridTrajectory64, SimFailure<f64>> {
        match (&scenario.controller, self) {
            (ControllerKind::BacksteppedHybrid { .. }, Plant::Double(p)) => {
                run_backstepped(scenario, p)
            }
            (_, Plant::Single(p)) => run_hybrid(scenario, p),
            (_, Plant::Double(p)) => run_hybrid(scenario, p),
            (_, Plant::Custom(p)) => run_hybrid(scenario, p),
        }
    }
}

fn cfg_err(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> CliResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(cfg_err(field, "expected a non-empty rectangular matrix"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn check_len(field: &str, v: &[f64], n: usize) -> CliResult<()> {
    if v.len() != n {
        return Err(cfg_err(
            field,
            format!("expected {n} entries, got {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(cfg_err(field, "entries must be finite"));
    }
    Ok(())
}

fn positive(field: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

/// Parses and validates a scenario file, filling every default.
pub fn load_scenario(path: impl AsRef<Path>) -> CliResult<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_scenario(&text)
}

/// Same as [`load_scenario`] for in-memory text.
pub fn parse_scenario(text: &str) -> CliResult<ScenarioConfig> {
    let mut cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(cfg_err(
            "schema_version",
            format!(
                "unsupported version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            ),
        ));
    }
    cfg.materialize()?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Serializes the config; every default is explicit once materialized.
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self)
            .map_err(|e| CliError::Runtime(format!("cannot serialize config: {e}")))
    }

    /// Applies overrides, then re-materializes and re-validates.
    pub fn apply_overrides(&mut self, o: &Overrides) -> CliResult<()> {
        if let Some(c) = o.controller {
            self.controller = c;
        }
        if let Some(mu) = o.mu {
            self.parameters.mu = mu;
        }
        if let Some(sigma) = o.sigma {
            self.parameters.sigma = sigma;
        }
        if let Some(dt) = o.dt {
            self.sim.dt = dt;
        }
        if let Some(t) = o.t_max {
            self.sim.t_max = t;
        }
        if let Some(seed) = o.seed {
            if let Some(grid) = self.initial_states.grid.as_mut() {
                grid.seed = seed;
            }
        }
        if o.zoh {
            self.sim.zoh = true;
        }
        self.materialize()?;
        self.validate()
    }

    /// Fills the controller-dependent defaults: explicit labels, backstepping levels,
    /// and the fitted ellipsoid. Idempotent.
    pub fn materialize(&mut self) -> CliResult<()> {
        for (k, s) in self.initial_states.explicit.iter_mut().enumerate() {
            if s.label.is_empty() {
                s.label = format!("s{k:02}");
            }
        }
        if self.controller == ControllerName::BacksteppedHybrid && self.parameters.levels.is_empty()
        {
            let depth = match self.dynamics {
                DynamicsKind::DoubleIntegrator => 1,
                _ => 0,
            };
            let mut gamma = self.parameters.gamma_bar;
            for _ in 0..depth {
                gamma *= 0.9;
                self.parameters.levels.push(LevelConfig {
                    beta_v: 1.0,
                    beta_h: 1.0,
                    gamma_bar: gamma,
                    alpha_bar: self.parameters.alpha_bar,
                    centroid_sigma: 1.0,
                });
            }
        }
        if self.controller == ControllerName::QpEllipsoid && self.parameters.ellipsoid.is_none() {
            let Some(vertices) = &self.polytope.vertices else {
                return Err(cfg_err(
                    "parameters.ellipsoid",
                    "required for qp_ellipsoid when the polytope is given by half-spaces",
                ));
            };
            let points: Vec<DVector<f64>> = vertices
                .iter()
                .map(|v| DVector::from_vec(v.clone()))
                .collect();
            let e = min_volume_ellipsoid(&points, 1e-10)
                .map_err(|e| cfg_err("parameters.ellipsoid", e))?;
            let shape = e.shape();
            self.parameters.ellipsoid = Some(EllipsoidConfig {
                center: e.center().iter().copied().collect(),
                shape: (0..shape.nrows())
                    .map(|i| shape.row(i).iter().copied().collect())
                    .collect(),
                radius: e.radius(),
            });
        }
        Ok(())
    }

    pub fn polytope(&self) -> CliResult<Polytope64> {
        match (&self.polytope.vertices, &self.polytope.halfspaces) {
            (Some(v), None) => {
                for (k, p) in v.iter().enumerate() {
                    check_len(&format!("polytope.vertices[{k}]"), p, 2)?;
                }
                Polytope64::from_vertices_2d(
                    v.iter().map(|p| DVector::from_vec(p.clone())).collect(),
                )
                .map_err(|e| cfg_err("polytope.vertices", e))
            }
            (None, Some(hs)) => {
                let n = hs.first().map_or(0, |h| h.normal.len());
                let mut out = Vec::with_capacity(hs.len());
                for (k, h) in hs.iter().enumerate() {
                    let field = format!("polytope.halfspaces[{k}]");
                    check_len(&field, &h.normal, n)?;
                    out.push(
                        HalfSpace::new(DVector::from_vec(h.normal.clone()), h.offset)
                            .map_err(|e| cfg_err(&field, e))?,
                    );
                }
                Polytope64::from_halfspaces(out).map_err(|e| cfg_err("polytope.halfspaces", e))
            }
            _ => Err(cfg_err(
                "polytope",
                "give exactly one of `vertices` or `halfspaces`",
            )),
        }
    }

    pub fn plant(&self, n0: usize) -> CliResult<Plant> {
        match (self.dynamics, &self.custom_affine) {
            (DynamicsKind::SingleIntegrator, None) => {
                Ok(Plant::Single(SingleIntegrator { dim: n0 }))
            }
            (DynamicsKind::DoubleIntegrator, None) => {
                Ok(Plant::Double(DoubleIntegrator { dim: n0 }))
            }
            (DynamicsKind::CustomAffine, Some(c)) => {
                let a = matrix("custom_affine.a", &c.a)?;
                let g = matrix("custom_affine.g", &c.g)?;
                if a.nrows() != n0 {
                    return Err(cfg_err(
                        "custom_affine.a",
                        format!("state dimension must match the polytope dimension {n0}"),
                    ));
                }
                LinearAffine::new(a, DVector::from_vec(c.b.clone()), g)
                    .map(Plant::Custom)
                    .map_err(|e| cfg_err("custom_affine", e))
            }
            (DynamicsKind::CustomAffine, None) => Err(cfg_err(
                "custom_affine",
                "table required for custom_affine dynamics",
            )),
            (_, Some(_)) => Err(cfg_err(
                "custom_affine",
                "only allowed with custom_affine dynamics",
            )),
        }
    }

    fn rates(&self) -> CliResult<LinearClassK<f64>> {
        positive("parameters.gamma_bar", self.parameters.gamma_bar)?;
        positive("parameters.alpha_bar", self.parameters.alpha_bar)?;
        LinearClassK::new(self.parameters.gamma_bar, self.parameters.alpha_bar)
            .map_err(|e| cfg_err("parameters", e))
    }

    fn levels(&self) -> Vec<BackstepLevel<f64>> {
        self.parameters
            .levels
            .iter()
            .map(|l| BackstepLevel {
                beta_v: l.beta_v,
                beta_h: l.beta_h,
                rates: LinearClassK {
                    gamma_bar: l.gamma_bar,
                    alpha_bar: l.alpha_bar,
                },
                centroid_sigma: l.centroid_sigma,
            })
            .collect()
    }

    fn ellipsoid(&self, n0: usize) -> CliResult<Ellipsoid64> {
        let e = self
            .parameters
            .ellipsoid
            .as_ref()
            .ok_or_else(|| cfg_err("parameters.ellipsoid", "missing"))?;
        check_len("parameters.ellipsoid.center", &e.center, n0)?;
        let shape = matrix("parameters.ellipsoid.shape", &e.shape)?;
        Ellipsoid64::new(DVector::from_vec(e.center.clone()), shape, e.radius)
            .map_err(|err| cfg_err("parameters.ellipsoid", err))
    }

    /// Checks every constraint of the schema; messages name the offending field.
    pub fn validate(&self) -> CliResult<()> {
        let polytope = self.polytope()?;
        let n0 = polytope.dim();
        let plant = self.plant(n0)?;
        check_len("target", &self.target, n0)?;
        let target = DVector::from_vec(self.target.clone());
        if polytope.clearance(&target) < 0.0 {
            return Err(cfg_err(
                "target",
                "must satisfy x̄ ∉ int(𝒫) (the target lies inside the polytope)",
            ));
        }

        let p = &self.parameters;
        let rates = self.rates()?;
        positive("parameters.relaxation_weight", p.relaxation_weight)?;
        positive("parameters.smoothmax_kappa", p.smoothmax_kappa)?;
        BumpParams::new(p.bump_eps, p.bump_kappa).map_err(|e| cfg_err("parameters.bump_eps", e))?;
        if self.controller.uses_switching() && !(p.sigma > 0.0 && p.sigma < p.mu) {
            return Err(cfg_err(
                "parameters.sigma",
                "sigma must satisfy 0 < sigma < mu",
            ));
        }
        if let Some(t) = &p.tiebreak {
            check_len("parameters.tiebreak", t, n0)?;
        }
        if let Some(q) = p.initial_face {
            if q >= polytope.len() {
                return Err(cfg_err(
                    "parameters.initial_face",
                    format!("index {q} out of range"),
                ));
            }
        }

        match (self.controller, &plant) {
            (ControllerName::BacksteppedHybrid, Plant::Double(_)) => {
                if rates.alpha_bar <= rates.gamma_bar {
                    return Err(cfg_err(
                        "parameters.alpha_bar",
                        "backstepped_hybrid requires alpha_bar > gamma_bar",
                    ));
                }
                if p.levels.len() != 1 {
                    return Err(cfg_err(
                        "parameters.levels",
                        format!(
                            "double_integrator needs exactly 1 level, got {}",
                            p.levels.len()
                        ),
                    ));
                }
                let mut prev = rates;
                for (k, level) in self.levels().iter().enumerate() {
                    level
                        .validate(&prev)
                        .map_err(|e| cfg_err(&format!("parameters.levels[{k}]"), e))?;
                    prev = level.rates;
                }
            }
            (ControllerName::BacksteppedHybrid, _) => {
                return Err(cfg_err(
                    "dynamics",
                    "backstepped_hybrid requires double_integrator",
                ));
            }
            (c, Plant::Double(_)) => {
                return Err(cfg_err(
                    "controller",
                    format!("{c} acts on first-order dynamics; use backstepped_hybrid"),
                ));
            }
            (ControllerName::Hybrid, _) => {
                rates
                    .ensure_compatible()
                    .map_err(|e| cfg_err("parameters.alpha_bar", e))?;
            }
            (ControllerName::QpEllipsoid, _) => {
                self.ellipsoid(n0)?;
            }
            _ => {}
        }

        for (k, s) in self.initial_states.explicit.iter().enumerate() {
            let field = format!("initial_states.explicit[{k}]");
            self.check_start(&field, &s.x, &polytope, plant.state_dim())?;
            if let Some(q) = s.initial_face {
                if q >= polytope.len() {
                    return Err(cfg_err(&field, format!("initial_face {q} out of range")));
                }
            }
            if let Some(t) = &s.tiebreak {
                check_len(&format!("{field}.tiebreak"), t, n0)?;
            }
            if let Some(e) = &s.expect {
                e.check(&format!("{field}.expect"))?;
            }
        }
        if let Some(g) = &self.initial_states.grid {
            let field = "initial_states.grid";
            if n0 != 2 {
                return Err(cfg_err(field, "ring grids need a 2D polytope"));
            }
            check_len("initial_states.grid.center", &g.center, 2)?;
            positive("initial_states.grid.radius", g.radius)?;
            if g.count == 0 {
                return Err(cfg_err("initial_states.grid.count", "must be at least 1"));
            }
            for (k, x) in g.points().iter().enumerate() {
                self.check_start(&format!("{field} point {k}"), x.as_slice(), &polytope, n0)?;
            }
            if let Some(e) = &g.expect {
                e.check("initial_states.grid.expect")?;
            }
        }

        let s = &self.sim;
        positive("sim.dt", s.dt)?;
        positive("sim.t_max", s.t_max)?;
        positive("sim.conv_tol", s.conv_tol)?;
        positive("sim.stall_tol", s.stall_tol)?;
        if let Some(t) = s.safety_tol {
            positive("sim.safety_tol", t)?;
        }
        if s.record_every == 0 {
            return Err(cfg_err("sim.record_every", "must be at least 1"));
        }
        Ok(())
    }

    fn check_start(
        &self,
        field: &str,
        x: &[f64],
        polytope: &Polytope64,
        n: usize,
    ) -> CliResult<()> {
        let n0 = polytope.dim();
        if x.len() != n0 && x.len() != n {
            return Err(cfg_err(
                field,
                format!("expected {n0} or {n} entries, got {}", x.len()),
            ));
        }
        check_len(field, x, x.len())?;
        let top = DVector::from_column_slice(&x[..n0]);
        if polytope.clearance(&top) < 0.0 {
            return Err(cfg_err(
                field,
                "initial state must lie in 𝒞 (outside int(𝒫))",
            ));
        }
        Ok(())
    }

    /// Explicit starts followed by the grid; lower levels start at rest when only the
    /// top-level position is given.
    pub fn planned_runs(&self) -> CliResult<Vec<PlannedRun>> {
        let n0 = self.target.len();
        let n = self.plant(n0)?.state_dim();
        let pad = |x: &[f64]| {
            let mut full = DVector::zeros(n);
            full.rows_mut(0, x.len()).copy_from_slice(x);
            full
        };
        let mut runs = Vec::new();
        for s in &self.initial_states.explicit {
            runs.push(PlannedRun {
                index: runs.len(),
                label: s.label.clone(),
                initial_state: pad(&s.x),
                initial_face: s.initial_face.or(self.parameters.initial_face),
                tiebreak: s
                    .tiebreak
                    .clone()
                    .or_else(|| self.parameters.tiebreak.clone()),
                expect: s.expect.as_ref().and_then(|e| e.resolve(self.controller)),
            });
        }
        if let Some(g) = &self.initial_states.grid {
            for (k, x) in g.points().into_iter().enumerate() {
                runs.push(PlannedRun {
                    index: runs.len(),
                    label: format!("grid{k:02}"),
                    initial_state: pad(x.as_slice()),
                    initial_face: self.parameters.initial_face,
                    tiebreak: self.parameters.tiebreak.clone(),
                    expect: g.expect.as_ref().and_then(|e| e.resolve(self.controller)),
                });
            }
        }
        Ok(runs)
    }

    /// Core scenario for one planned run.
    pub fn core_scenario(&self, run: &PlannedRun) -> CliResult<Scenario64> {
        let polytope = self.polytope()?;
        let n0 = polytope.dim();
        let p = &self.parameters;
        let controller = match self.controller {
            ControllerName::Hybrid => ControllerKind::Hybrid,
            ControllerName::HybridCbfOnly => ControllerKind::HybridCbfOnly,
            ControllerName::QpEllipsoid => ControllerKind::QpEllipsoid(self.ellipsoid(n0)?),
            ControllerName::QpSmoothmax => ControllerKind::QpSmoothMax {
                kappa: p.smoothmax_kappa,
            },
            ControllerName::BacksteppedHybrid => ControllerKind::BacksteppedHybrid {
                levels: self.levels(),
            },
        };
        let s = &self.sim;
        Ok(Scenario64 {
            polytope,
            target: DVector::from_vec(self.target.clone()),
            initial_state: run.initial_state.clone(),
            controller,
            rates: self.rates()?,
            relaxation_weight: p.relaxation_weight,
            bump: BumpParams::new(p.bump_eps, p.bump_kappa)
                .map_err(|e| cfg_err("parameters.bump_eps", e))?,
            mu: p.mu,
            sigma: p.sigma,
            tiebreak: match &run.tiebreak {
                Some(t) => TieBreakRule::Fixed(DVector::from_vec(t.clone())),
                None => TieBreakRule::Canonical,
            },
            initial_face: run.initial_face,
            settings: SimSettings {
                dt: s.dt,
                t_max: s.t_max,
                conv_tol: s.conv_tol,
                stall_tol: s.stall_tol,
                safety_tol: s.safety_tol,
                record_every: s.record_every,
                zoh: s.zoh,
            },
        })
    }
}
