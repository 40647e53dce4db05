use std::path::Path;
use std::process::Command;

use safeclf::{HybridTrajectory64, Verdict};
use safeclf_cli::output::{polygon_vertices, trajectory_header, SUMMARY_HEADER};
use safeclf_cli::*;

const MINIMAL: &str = r#"
schema_version = 1
target = [-3.0, 0.0]

[polytope]
vertices = [[1.0, 0.0], [0.309017, 0.951057], [-0.809017, 0.587785], [-0.809017, -0.587785], [0.309017, -0.951057]]

[[initial_states.explicit]]
x = [3.0, 0.4]
"#;

fn pentagon_with(extra: &str) -> String {
    format!("{MINIMAL}{extra}")
}

fn config_error(text: &str) -> String {
    match parse_scenario(text) {
        Err(CliError::Config(msg)) => msg,
        Err(e) => panic!("expected a config error, got {e}"),
        Ok(_) => panic!("expected a config error, scenario was accepted"),
    }
}

fn four_starts() -> ScenarioConfig {
    parse_scenario(&format!(
        "{MINIMAL}
[[initial_states.explicit]]
x = [0.5, 3.0]
expect = \"converged\"

[[initial_states.explicit]]
x = [0.5, -3.0]

[[initial_states.explicit]]
x = [-0.5, 2.5]
"
    ))
    .unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_safeclf"))
}

#[test]
fn shipped_scenarios_validate_and_round_trip() {
    assert_eq!(SHIPPED.len(), 11);
    for (name, _) in SHIPPED {
        let cfg = load_shipped(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cfg.name, *name);
        let again = parse_scenario(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg, "{name} does not round-trip");
        assert!(!cfg.planned_runs().unwrap().is_empty());
    }
}

#[test]
fn minimal_file_gets_defaults() {
    let cfg = parse_scenario(MINIMAL).unwrap();
    assert_eq!(cfg.controller, ControllerName::Hybrid);
    assert_eq!(cfg.dynamics, DynamicsKind::SingleIntegrator);
    assert_eq!(cfg.parameters.mu, 0.2);
    assert_eq!(cfg.parameters.sigma, 0.1);
    assert_eq!(cfg.parameters.relaxation_weight, 100.0);
    assert_eq!(cfg.sim.dt, 1e-3);
    let runs = cfg.planned_runs().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].label, "s00");
    assert_eq!(runs[0].expect, None);
}

#[test]
fn invalid_files_are_rejected_with_the_field_name() {
    let msg = config_error(&pentagon_with("[parameters]\nmu = 0.2\nsigma = 0.2\n"));
    assert!(
        msg.contains("parameters.sigma") && msg.contains("0 < sigma < mu"),
        "{msg}"
    );

    let msg = config_error(&MINIMAL.replace("target = [-3.0, 0.0]", "target = [0.0, 0.0]"));
    assert!(msg.contains("x̄ ∉ int(𝒫)"), "{msg}");

    let msg = config_error(&pentagon_with("[parameters]\nmue = 0.3\n"));
    assert!(msg.contains("mue"), "{msg}");

    let msg = config_error(&MINIMAL.replace("schema_version = 1", "schema_version = 2"));
    assert!(msg.contains("schema_version"), "{msg}");

    let msg = config_error(&MINIMAL.replace("x = [3.0, 0.4]", "x = [0.1, 0.0]"));
    assert!(
        msg.contains("initial_states.explicit[0]") && msg.contains("𝒞"),
        "{msg}"
    );

    let msg =
        config_error(&MINIMAL.replace("target =", "controller = \"backstepped_hybrid\"\ntarget ="));
    assert!(msg.contains("double_integrator"), "{msg}");

    let msg = config_error(&pentagon_with(
        "[initial_states.explicit.expect]\nhybrid = \"stuck\"\n",
    ));
    assert!(msg.contains("stuck"), "{msg}");

    let msg = config_error(&MINIMAL.replace("[polytope]", "[polytope]\nhalfspaces = []"));
    assert!(msg.contains("polytope"), "{msg}");
}

#[test]
fn controller_names_parse() {
    for c in ControllerName::ALL {
        assert_eq!(c.as_str().parse::<ControllerName>().unwrap(), c);
    }
    assert!(matches!(
        "mpc".parse::<ControllerName>(),
        Err(CliError::Config(_))
    ));
}

#[test]
fn empty_start_list_is_a_config_error() {
    let text = MINIMAL.replace("[[initial_states.explicit]]\nx = [3.0, 0.4]\n", "");
    let cfg = parse_scenario(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_batch(&cfg, dir.path(), &BatchOptions::default())
        .err()
        .unwrap();
    assert!(err.to_string().contains("no initial states"));
    assert_eq!(err.exit_code(), 2);
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

#[test]
fn batch_writes_one_csv_per_start_plus_summary_and_svg() {
    let cfg = four_starts();
    let dir = tempfile::tempdir().unwrap();
    let report = run_batch(&cfg, dir.path(), &BatchOptions::default()).unwrap();
    assert_eq!(report.exit_code(), 0);
    let names: Vec<String> = report
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names
            .iter()
            .filter(|n| n.ends_with(".csv") && !n.ends_with("_summary.csv"))
            .count(),
        4
    );
    assert_eq!(names.iter().filter(|n| n.ends_with(".svg")).count(), 1);
    assert!(names.contains(&"scenario_summary.csv".to_string()));
    assert!(names.contains(&"scenario_config.toml".to_string()));

    let (header, rows) = read_csv(&dir.path().join("scenario_00_s00.csv"));
    assert_eq!(
        header,
        [
            "t",
            "x_0",
            "x_1",
            "u_0",
            "u_1",
            "q",
            "xhat_0",
            "xhat_1",
            "jump_flag"
        ]
    );
    assert_eq!(header, trajectory_header(2, 2, 2));
    assert!(rows.len() > 10);
    for row in &rows {
        for (k, v) in row.iter().enumerate() {
            if header[k] != "q" && header[k] != "jump_flag" {
                assert!(v.parse::<f64>().unwrap().is_finite());
            }
        }
    }
    let jumps: usize = rows.iter().map(|r| r[8].parse::<usize>().unwrap()).sum();
    assert_eq!(jumps, report.rows[0].jumps);

    let (header, rows) = read_csv(&dir.path().join("scenario_summary.csv"));
    assert_eq!(header, SUMMARY_HEADER);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[4] == "converged"));
    assert_eq!(rows[1][5], "converged");
    assert_eq!(rows[1][6], "true");
    assert_eq!(rows[0][6], "");

    let echoed = load_scenario(dir.path().join("scenario_config.toml")).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn svg_draws_each_trajectory_with_its_verdict() {
    let mut cfg = load_shipped("fig5c_square_compare").unwrap();
    cfg.apply_overrides(&Overrides {
        controller: Some(ControllerName::HybridCbfOnly),
        ..Default::default()
    })
    .unwrap();
    cfg.initial_states
        .explicit
        .retain(|s| s.label == "behind" || s.label == "above");
    let outcomes = execute(&cfg).unwrap();
    let verdicts: Vec<Verdict> = outcomes
        .iter()
        .map(|o| o.result.as_ref().unwrap().verdict)
        .collect();
    assert!(
        verdicts.contains(&Verdict::Deadlock) && verdicts.contains(&Verdict::Converged),
        "{verdicts:?}"
    );
    let polytope = cfg.polytope().unwrap();
    let target = nalgebra::DVector::from_vec(cfg.target.clone());
    let traces: Vec<SvgTrace<'_>> = outcomes
        .iter()
        .map(|o| SvgTrace {
            traj: o.trajectory(),
            verdict: o.result.as_ref().ok().map(|t| t.verdict),
        })
        .collect();
    let svg = emit_svg(&traces, &polytope, None, &target).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let classes: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .map(|n| n.attribute("class").unwrap())
        .collect();
    assert_eq!(classes.len(), 2);
    assert!(classes.contains(&"traj deadlock") && classes.contains(&"traj converged"));
    assert_eq!(
        doc.descendants()
            .filter(|n| n.has_tag_name("polygon"))
            .count(),
        1
    );

    let one = emit_svg(&traces[1..], &polytope, None, &target).unwrap();
    let doc = roxmltree::Document::parse(&one).unwrap();
    let lines: Vec<_> = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0].attribute("class"), Some("traj converged"));
}

#[test]
fn ellipsoid_scenario_svg_shows_the_baseline_set() {
    let mut cfg = load_shipped("fig1a_ellipsoid").unwrap();
    cfg.initial_states.explicit.truncate(1);
    cfg.sim.t_max = 2.0;
    let dir = tempfile::tempdir().unwrap();
    run_batch(&cfg, dir.path(), &BatchOptions::default()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("fig1a_ellipsoid.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert!(doc
        .descendants()
        .any(|n| n.attribute("class") == Some("ellipse")));
}

#[test]
fn svg_rejects_non_planar_input() {
    let p = safeclf::Polytope64::from_halfspaces(
        (0..3)
            .flat_map(|i| {
                [1.0, -1.0].map(|s| {
                    let mut n = nalgebra::DVector::zeros(3);
                    n[i] = s;
                    safeclf::HalfSpace::new(n, 1.0).unwrap()
                })
            })
            .collect(),
    )
    .unwrap();
    let target = nalgebra::DVector::from_vec(vec![-3.0, 0.0, 0.0]);
    assert!(matches!(
        emit_svg(&[], &p, None, &target),
        Err(CliError::UnsupportedDimension(3))
    ));
    assert!(matches!(
        polygon_vertices(&p),
        Err(CliError::UnsupportedDimension(3))
    ));
}

#[test]
fn halfspace_polytope_outline_is_recovered() {
    let cfg = parse_scenario(
        r#"
schema_version = 1
target = [-3.0, 0.0]

[[polytope.halfspaces]]
normal = [1.0, 0.0]
offset = 1.0

[[polytope.halfspaces]]
normal = [-1.0, 0.0]
offset = 1.0

[[polytope.halfspaces]]
normal = [0.0, 1.0]
offset = 1.0

[[polytope.halfspaces]]
normal = [0.0, -1.0]
offset = 1.0

[[initial_states.explicit]]
x = [3.0, 0.5]
"#,
    )
    .unwrap();
    let mut v = polygon_vertices(&cfg.polytope().unwrap()).unwrap();
    assert_eq!(v.len(), 4);
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(v, [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]);
    let dir = tempfile::tempdir().unwrap();
    let report = run_batch(&cfg, dir.path(), &BatchOptions::default()).unwrap();
    assert_eq!(report.rows[0].verdict, Some(Verdict::Converged));
    assert!(dir.path().join("scenario.svg").exists());
}

#[test]
fn reruns_are_bit_identical() {
    let cfg = four_starts();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_batch(&cfg, a.path(), &BatchOptions::default()).unwrap();
    run_batch(&cfg, b.path(), &BatchOptions::default()).unwrap();
    for k in 0..4 {
        let name = format!("scenario_{k:02}_s{k:02}.csv");
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap()
        );
    }
    assert_eq!(
        std::fs::read(a.path().join("scenario.svg")).unwrap(),
        std::fs::read(b.path().join("scenario.svg")).unwrap()
    );
    // Summaries differ only in the wall-clock column.
    let strip = |dir: &Path| {
        let (_, rows) = read_csv(&dir.join("scenario_summary.csv"));
        rows.into_iter()
            .map(|mut r| {
                r.remove(12);
                r
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn grid_seed_override_moves_the_starts() {
    let base = load_shipped("fig4a_pentagon").unwrap();
    let mut other = base.clone();
    other
        .apply_overrides(&Overrides {
            seed: Some(99),
            ..Default::default()
        })
        .unwrap();
    let a = base.initial_states.grid.as_ref().unwrap().points();
    let b = other.initial_states.grid.as_ref().unwrap().points();
    assert_eq!(a.len(), b.len());
    assert_ne!(a, b);
    assert_eq!(a, base.initial_states.grid.as_ref().unwrap().points());
    // Every jittered start is still admissible.
    other.validate().unwrap();
}

#[test]
fn custom_affine_plant_runs() {
    let cfg = parse_scenario(&MINIMAL.replace(
        "target =",
        "dynamics = \"custom_affine\"\ntarget =",
    ).replace(
        "[polytope]",
        "[custom_affine]\na = [[-0.1, 0.0], [0.0, -0.1]]\nb = [0.0, 0.0]\ng = [[1.0, 0.0], [0.0, 2.0]]\n\n[polytope]",
    ))
    .unwrap();
    let outcomes = execute(&cfg).unwrap();
    let traj: &HybridTrajectory64 = outcomes[0].result.as_ref().unwrap();
    assert_eq!(traj.verdict, Verdict::Converged);
    assert!(traj.min_clearance >= -1e-6);
}

#[test]
fn binary_lists_and_validates() {
    let out = bin().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (name, _) in SHIPPED {
        assert!(text.contains(name));
    }

    let out = bin().args(["validate", "fig4b_square"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("relaxation_weight"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, pentagon_with("[parameters]\nsigma = 0.5\n")).unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("parameters.sigma"));

    let out = bin()
        .args(["validate", "no_such_scenario"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_run_honours_out_flag_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("small.toml");
    std::fs::write(&file, MINIMAL).unwrap();

    let flag = dir.path().join("flag");
    let out = bin()
        .arg("run")
        .arg(&file)
        .arg("--out")
        .arg(&flag)
        .arg("--no-svg")
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(flag.join("scenario_00_s00.csv").exists());
    assert!(!flag.join("scenario.svg").exists());

    let env = dir.path().join("env");
    let out = bin()
        .arg("run")
        .arg(&file)
        .env("SAFECLF_OUT", &env)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(env.join("scenario_summary.csv").exists());
    assert!(env.join("scenario.svg").exists());
}

#[test]
fn binary_reports_expectation_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("wrong.toml");
    std::fs::write(
        &file,
        MINIMAL.replace("x = [3.0, 0.4]", "x = [3.0, 0.4]\nexpect = \"deadlock\""),
    )
    .unwrap();
    let out = bin()
        .arg("run")
        .arg(&file)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("MISMATCH"));

    let out = bin()
        .arg("run")
        .arg(&file)
        .args([
            "--out",
            dir.path().join("o").to_str().unwrap(),
            "--controller",
            "nonsense",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
