use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use holab::commands::{cmd_check, cmd_compare, cmd_holonomy, cmd_validate};
use holab::error::HolabError;
use holab::report::Report;
use holab::scenario::{load_scenario, Model};

#[derive(Parser)]
#[command(
    name = "holab",
    version,
    about = "Surface holonomy of flat superconnections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (JSON).
    scenario: PathBuf,
    /// Path or simplex id.
    #[arg(long)]
    object: Option<String>,
    /// Transport or surface method.
    #[arg(long)]
    method: Option<String>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock timings (makes the report non-reproducible).
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Flatness, cocycle and curvature residuals.
    Validate(Common),
    /// Transport along a path or holonomy of a simplex.
    Holonomy(Common),
    /// Cross-check the surface holonomy methods.
    Compare(Common),
    /// Algebraic invariant suite.
    Check(Common),
}

fn run(command: Command) -> Result<Report, HolabError> {
    let (name, args) = match command {
        Command::Validate(a) => ("validate", a),
        Command::Holonomy(a) => ("holonomy", a),
        Command::Compare(a) => ("compare", a),
        Command::Check(a) => ("check", a),
    };
    let model = load_scenario(&args.scenario).and_then(Model::from_scenario)?;
    let report = match name {
        "validate" => cmd_validate(&model, args.timings),
        "holonomy" => {
            let object = args
                .object
                .as_deref()
                .ok_or_else(|| HolabError::Scenario("holonomy requires --object".into()))?;
            cmd_holonomy(&model, object, args.method.as_deref(), args.timings)
        }
        "compare" => cmd_compare(&model, args.object.as_deref(), args.timings),
        _ => cmd_check(&model, args.timings),
    }?;
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json())
            .map_err(|e| HolabError::Scenario(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("HOLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    match run(cli.command) {
        Ok(report) => {
            print!("{}", report.to_json());
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("holab: {e}");
            match e {
                HolabError::Precondition(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
