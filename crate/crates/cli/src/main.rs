use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use safeclf_cli::{
    resolve, run_batch, BatchOptions, CliResult, ControllerName, Overrides, SvgMode, SHIPPED,
};

#[derive(Parser)]
#[command(
    name = "safeclf",
    version,
    about = "Run hybrid CLF-CBF obstacle-avoidance scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every initial state of a scenario and write CSV/SVG artifacts.
    Run {
        /// Scenario file, or the name of a shipped scenario.
        scenario: String,
        #[arg(long, env = "SAFECLF_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        controller: Option<String>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
        /// Seed of the initial-state grid.
        #[arg(long)]
        seed: Option<u64>,
        /// Hold the input constant over each integration step.
        #[arg(long)]
        zoh: bool,
        /// Always write the SVG overlay (fails for non-2D scenarios).
        #[arg(long, overrides_with = "no_svg")]
        svg: bool,
        #[arg(long = "no-svg", overrides_with = "svg")]
        no_svg: bool,
    },
    /// Parse and validate a scenario, then print it with all defaults filled in.
    Validate { scenario: String },
    /// List the shipped scenarios.
    ListScenarios,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::ListScenarios => {
            for (name, _) in SHIPPED {
                let cfg = safeclf_cli::load_shipped(name)?;
                println!("{name:<24} {}", cfg.description);
            }
            Ok(0)
        }
        Command::Validate { scenario } => {
            let cfg = resolve(&scenario)?;
            print!("{}", cfg.to_toml()?);
            Ok(0)
        }
        Command::Run {
            scenario,
            out,
            controller,
            mu,
            sigma,
            dt,
            tmax,
            seed,
            zoh,
            svg,
            no_svg,
        } => {
            let mut cfg = resolve(&scenario)?;
            let overrides = Overrides {
                controller: controller
                    .as_deref()
                    .map(str::parse::<ControllerName>)
                    .transpose()?,
                mu,
                sigma,
                dt,
                t_max: tmax,
                seed,
                zoh,
            };
            cfg.apply_overrides(&overrides)?;
            let opts = BatchOptions {
                svg: if svg {
                    SvgMode::Always
                } else if no_svg {
                    SvgMode::Never
                } else {
                    SvgMode::Auto
                },
            };
            let report = run_batch(&cfg, &out, &opts)?;
            for r in &report.rows {
                let verdict = r.verdict.map_or("error".to_string(), |v| v.to_string());
                let check = match r.matched() {
                    Some(true) => " (as expected)",
                    Some(false) => " (EXPECTATION MISMATCH)",
                    None => "",
                };
                println!(
                    "{:>3} {:<12} {:<10} jumps={} min_clearance={:.3e} final_error={:.3e}{check}",
                    r.index, r.label, verdict, r.jumps, r.min_clearance, r.final_error
                );
                if let Some(e) = &r.error {
                    println!("    {e}");
                }
            }
            println!("wrote {} files to {}", report.files.len(), out.display());
            Ok(report.exit_code())
        }
    }
}
