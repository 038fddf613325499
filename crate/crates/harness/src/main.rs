use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lsvi_harness::config::{ExperimentConfig, Overrides};
use lsvi_harness::error::HarnessError;
use lsvi_harness::plot::{plot_model_from_csv, render_svg};
use lsvi_harness::runner::{diagnose, run_experiment};

/// Experiment runner for optimistic least-squares value iteration with
/// generalized linear function approximation.
#[derive(Parser)]
#[command(name = "lsvi-ucb", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run an experiment: seed sweep, optional baselines, CSV/JSON
    /// outputs, and a diagnostics report.
    Run(RunArgs),
    /// Render an aggregated CSV as a static SVG regret plot.
    Plot(PlotArgs),
    /// Re-derive the diagnostics report from a stored run directory.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment family: tabular | linear | counterexample | chain.
    #[arg(long)]
    env: Option<String>,
    /// Number of episodes T.
    #[arg(long)]
    episodes: Option<String>,
    /// Link function: identity | logistic.
    #[arg(long)]
    link: Option<String>,
    /// Bonus-scale constant C.
    #[arg(long = "gamma-scale")]
    gamma_scale: Option<String>,
    /// Explicit bonus cap (default: one-shot formula).
    #[arg(long = "gamma-cap")]
    gamma_cap: Option<String>,
    /// Seeds: `5`, `1,2,7`, or a half-open range `0..10`.
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated baselines: random,eps_greedy.
    #[arg(long)]
    baselines: Option<String>,
    /// Environment size knobs.
    #[arg(long)]
    states: Option<String>,
    #[arg(long)]
    actions: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    /// Counterexample bonus-cap parameter.
    #[arg(long)]
    cap: Option<String>,
    /// Seed for random environment construction.
    #[arg(long = "env-seed")]
    env_seed: Option<String>,
    /// Parameter-ball radius B.
    #[arg(long = "ball-radius")]
    ball_radius: Option<String>,
    /// Declared curvature bound for the identity link (0 or 1).
    #[arg(long = "identity-big-m")]
    identity_big_m: Option<String>,
    /// Solver iteration cap.
    #[arg(long = "max-iters")]
    max_iters: Option<String>,
    /// Solver movement tolerance.
    #[arg(long)]
    tolerance: Option<String>,
    /// Rank-one updates between full covariance re-inversions.
    #[arg(long = "refresh-period")]
    refresh_period: Option<String>,
    /// Refit every k episodes (1 = every episode).
    #[arg(long = "refit-period")]
    refit_period: Option<String>,
    /// Exploration probability of the eps_greedy baseline.
    #[arg(long)]
    epsilon: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Overrides, HarnessError> {
        let mut o = Overrides::default();
        let pairs: [(&str, Option<&String>); 18] = [
            ("env", self.env.as_ref()),
            ("episodes", self.episodes.as_ref()),
            ("link", self.link.as_ref()),
            ("gamma-scale", self.gamma_scale.as_ref()),
            ("gamma-cap", self.gamma_cap.as_ref()),
            ("seeds", self.seed.as_ref()),
            ("baselines", self.baselines.as_ref()),
            ("states", self.states.as_ref()),
            ("actions", self.actions.as_ref()),
            ("horizon", self.horizon.as_ref()),
            ("dim", self.dim.as_ref()),
            ("cap", self.cap.as_ref()),
            ("env-seed", self.env_seed.as_ref()),
            ("ball-radius", self.ball_radius.as_ref()),
            ("identity-big-m", self.identity_big_m.as_ref()),
            ("max-iters", self.max_iters.as_ref()),
            ("tolerance", self.tolerance.as_ref()),
            ("refresh-period", self.refresh_period.as_ref()),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                o.set(key, v)?;
            }
        }
        if let Some(v) = &self.refit_period {
            o.set("refit-period", v)?;
        }
        if let Some(v) = &self.epsilon {
            o.set("epsilon", v)?;
        }
        if let Some(out) = &self.out {
            o.set("out", &out.display().to_string())?;
        }
        Ok(o)
    }
}

#[derive(Args)]
struct PlotArgs {
    /// Aggregated CSV produced by `run`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Run directory written by `run`.
    #[arg(long)]
    run: PathBuf,
}

fn real_main(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let overrides = args.overrides()?;
            let config = ExperimentConfig::resolve(args.config.as_deref(), overrides)?;
            let summary = run_experiment(&config)?;
            println!("wrote outputs to {}", summary.out_dir.display());
            print!("{}", summary.comparison.render());
            println!(
                "diagnostics: optimism {}/{} violations, potential bound {:.3} (max sum {:.3})",
                summary.diagnostics.optimism_violations,
                summary.diagnostics.optimism_checks,
                summary.diagnostics.potential_bound,
                summary
                    .diagnostics
                    .potential_sums
                    .iter()
                    .copied()
                    .fold(0.0, f64::max),
            );
            Ok(())
        }
        Command::Plot(args) => {
            let text = std::fs::read_to_string(&args.input)?;
            let model = plot_model_from_csv(&text, &args.input.display().to_string())?;
            std::fs::write(&args.out, render_svg(&model))?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Diagnose(args) => {
            let report = diagnose(&args.run)?;
            // tolerate a closed pipe (e.g. `| head`)
            let stdout = std::io::stdout();
            let _ = writeln!(
                stdout.lock(),
                "{}",
                serde_json::to_string_pretty(&report).expect("serializes")
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // clap's default usage-error exit code is 2, which this tool
    // reserves for invariant breaches; route argument errors to 1
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
