use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use passage_ldp::experiment::{parse_config, run, ExperimentSpec, Mode};
use passage_ldp::report::render_report;
use passage_ldp::{Error, Result};

#[derive(Parser)]
#[command(name = "passage-ldp", version, about = "First-passage large deviations: asymptotics, tilted Monte Carlo and a grid oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// α, ᾱ, α₀, λ(α) and k_u for each u
    Profile(RunArgs),
    /// Shape-only pointwise asymptotic for each u
    Asymptotic(RunArgs),
    /// Tilted Monte Carlo estimate of P[τ_u = ⌊k_u⌋]
    Simulate(RunArgs),
    /// Asymptotic with estimated constant vs Monte Carlo vs grid oracle
    Compare(RunArgs),
    /// J_L estimates with a stabilization flag
    Constant(RunArgs),
    /// Run with the mode taken from the config file or --mode
    Run {
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Plot data (CGF curve with tangent, ratio vs u) from an experiment CSV
    Report {
        csv: PathBuf,
        /// Output directory (defaults to the CSV's directory)
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// e.g. "gaussian mean=-1 var=1"
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    /// Comma-separated boundary levels
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated L values
    #[arg(long = "L")]
    big_l: Option<String>,
    /// Oracle grid spacing
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn pairs(self, mode: Option<String>) -> Result<BTreeMap<String, String>> {
        let mut pairs = match &self.config {
            Some(path) => parse_config(&fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        let overrides = [
            ("mode", mode),
            ("model", self.model),
            ("rho", self.rho),
            ("u", self.u),
            ("samples", self.samples),
            ("seed", self.seed),
            ("L", self.big_l),
            ("h", self.h),
            ("out", self.out.map(|p| p.to_string_lossy().into_owned())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                pairs.insert(key.to_string(), v);
            }
        }
        Ok(pairs)
    }
}

fn execute(command: Command) -> Result<()> {
    let (mode, args) = match command {
        Command::Profile(a) => (Some(Mode::Profile.to_string()), a),
        Command::Asymptotic(a) => (Some(Mode::Asymptotic.to_string()), a),
        Command::Simulate(a) => (Some(Mode::Simulate.to_string()), a),
        Command::Compare(a) => (Some(Mode::Compare.to_string()), a),
        Command::Constant(a) => (Some(Mode::Constant.to_string()), a),
        Command::Run { mode, args } => (mode, args),
        Command::Report { csv, out_dir } => {
            let dir = out_dir
                .or_else(|| csv.parent().map(PathBuf::from))
                .unwrap_or_default();
            let files = render_report(&csv, &dir)?;
            println!("{}", files.curve.display());
            println!("{}", files.ratios.display());
            return Ok(());
        }
    };
    let spec = ExperimentSpec::from_pairs(&args.pairs(mode)?)?;
    let rows = run(&spec)?;
    eprintln!("wrote {} rows to {}", rows.len(), spec.output_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
