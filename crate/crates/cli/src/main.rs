mod artifacts;
mod commands;
mod config;
mod error;
mod figures;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::artifacts::{Artifacts, RunManifest};
use crate::error::{CliResult, Failure};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "EDGEBURST_OUT";
const DEFAULT_OUT: &str = "edgeburst-out";

#[derive(Parser, Debug)]
#[command(
    name = "edgeburst",
    version,
    about = "Steady states, quenches and scaling fits for pumped dissipative chains"
)]
struct Cli {
    /// Output directory [default: $EDGEBURST_OUT, else ./edgeburst-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write a gnuplot script for the produced CSV files.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset; `--config` is overlaid on it.
    #[arg(long)]
    preset: Option<String>,
    /// `key=value` applied last. Bare keys address the model section.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bloch spectrum of the damping matrix and its analytic summary.
    Spectrum(RunArgs),
    /// Loss probability profile after a single-particle quench.
    Quench(RunArgs),
    /// Steady-state B-site density.
    Steady(RunArgs),
    /// Positive-P ensemble with two-body loss.
    Positivep(RunArgs),
    /// Mean-field steady state with two-body loss.
    Meanfield(RunArgs),
    /// Bulk and edge exponents from profile CSV files named `*_x0_<cell>*.csv`.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Value column to fit [default: second column].
        #[arg(long)]
        column: Option<String>,
        files: Vec<PathBuf>,
    },
    /// Invariant suite, plus digest checks of the given manifests.
    Verify {
        #[arg(long = "manifest")]
        manifests: Vec<PathBuf>,
    },
    /// Reproduce a figure dataset from its preset.
    Figure {
        /// One of fig1c, fig1d, fig2, fig3, figS1, figS2.
        name: String,
        /// Set one config value; a bare key means `model.<key>`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Quench(_) => "quench",
            Command::Steady(_) => "steady",
            Command::Positivep(_) => "positivep",
            Command::Meanfield(_) => "meanfield",
            Command::Fit { .. } => "fit",
            Command::Verify { .. } => "verify",
            Command::Figure { .. } => "figure",
        }
    }
}

fn document(args: &RunArgs) -> CliResult<Value> {
    let mut doc = match &args.preset {
        Some(name) => figures::preset(name)?.config,
        None => Value::Null,
    };
    if let Some(path) = &args.config {
        config::merge(&mut doc, config::load_document(path)?);
    }
    Ok(doc)
}

fn execute(cli: &Cli) -> CliResult<()> {
    let start = Instant::now();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let (run_args, preset) = match &cli.command {
        Command::Spectrum(a)
        | Command::Quench(a)
        | Command::Steady(a)
        | Command::Positivep(a)
        | Command::Meanfield(a) => (a.clone(), a.preset.clone()),
        Command::Fit { run, .. } => (run.clone(), run.preset.clone()),
        Command::Verify { .. } => (RunArgs::default(), None),
        Command::Figure { name, .. } => (RunArgs::default(), Some(name.clone())),
    };
    let mut cfg = config::resolve(document(&run_args)?, &run_args.overrides)?;
    let mut art = Artifacts::create(&out)?;
    let mut diagnostics = Map::new();
    let mut generator = None;
    let mut stochastic = false;
    let mut failed_checks = Vec::new();

    let summary = match &cli.command {
        Command::Spectrum(_) => commands::spectrum(&cfg, &mut art, "")?,
        Command::Quench(_) => commands::quench(&cfg, &mut art, "")?,
        Command::Steady(_) => commands::steady(&cfg, &mut art, "")?,
        Command::Positivep(_) => {
            let (s, ens) = commands::positivep(&cfg, &mut art, "")?;
            generator = Some(ens.generator);
            stochastic = true;
            s
        }
        Command::Meanfield(_) => commands::meanfield(&cfg, &mut art, "")?.0,
        Command::Fit { files, column, .. } => commands::fit_files(&cfg, files, column.as_deref(), &mut art, "")?,
        Command::Verify { manifests } => {
            let checks = verify::run(manifests)?;
            for c in &checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                if !c.pass {
                    failed_checks.push(c.name.clone());
                }
            }
            art.write_json("verify_report.json", &checks)?;
            json!({ "checks": checks.len(), "failed": failed_checks })
        }
        Command::Figure { name, overrides } => {
            let (s, base) = figures::run(name, overrides, &mut art)?;
            if name == "fig3" {
                generator = Some(edgeburst::positivep::GENERATOR_NAME.to_string());
                stochastic = true;
            }
            cfg = base;
            s
        }
    };
    diagnostics.insert(cli.command.name().into(), summary);

    if cli.plot {
        if let Some(script) = figures::gnuplot_script(art.outputs()) {
            art.write_text("plot.gp", &script)?;
        }
    }
    let manifest = RunManifest {
        subcommand: cli.command.name().into(),
        preset,
        config: serde_json::to_value(&cfg).map_err(|e| Failure::Io(e.into()))?,
        seed: if stochastic { cfg.sde.base_seed } else { cfg.solver.seed },
        generator,
        code_version: env!("CARGO_PKG_VERSION").into(),
        threads: rayon::current_num_threads(),
        wall_time: start.elapsed().as_secs_f64(),
        outputs: Vec::new(),
        diagnostics,
    };
    let n_outputs = art.outputs().len();
    let path = art.finish(manifest)?;
    println!("{}", json!({ "manifest": path, "outputs": n_outputs }));
    if failed_checks.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed_checks.join(", ")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code())
        }
    }
}
