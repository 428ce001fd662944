//! `heraldsim`: run netlists and the built-in gate experiments from the shell.
//!
//! Exit codes: 0 success, 1 usage error, 2 netlist diagnostic, 3 a herald or
//! detection pattern with zero probability.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use heraldsim::circuit::CircuitError;
use heraldsim::detection::{DetectionError, Outcome};
use heraldsim::experiments::{self, ExperimentError, Grid, NoiseConfig};
use heraldsim::fock::{QubitState, C64};
use heraldsim::netlist;
use heraldsim::report::Report;

#[derive(Parser)]
#[command(name = "heraldsim", version, about = "Heralded linear-optical circuit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a netlist and print its coincidence table or scan.
    Run {
        file: PathBuf,
        #[command(flatten)]
        output: Output,
        /// Replace the netlist's scan range, as start:stop:steps.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<Grid>,
    },
    /// Parse and compile a netlist without simulating it.
    Check { file: PathBuf },
    /// Logic table of the heralded CNOT.
    CnotTable {
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Singlet generation and its polarizer fringe.
    EntangleFringe {
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        output: Output,
        #[arg(long, value_parser = parse_grid, default_value = "0:180:37")]
        grid: Grid,
    },
    /// Teleportation with all four Bell outcomes resolved.
    Teleport {
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        output: Output,
        #[arg(long, value_parser = parse_grid, default_value = "0:180:37")]
        grid: Grid,
        /// Input polarization: H, V, P, M, L, R, or `theta[,phase]` in degrees.
        #[arg(long, value_parser = parse_state, default_value = "L")]
        input: QubitState,
    },
    /// Measure-and-resend teleportation limit, analytic and sampled.
    ClassicalBaseline {
        #[command(flatten)]
        output: Output,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Defaults are the ideal setup.
#[derive(Args)]
struct NoiseArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda23: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda45: f64,
    #[arg(long, default_value_t = 0.05)]
    pair_prob: f64,
    /// Mean photon number of a weak-coherent target; single photon if absent.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 1)]
    order: u8,
}

impl NoiseArgs {
    fn config(&self) -> NoiseConfig {
        NoiseConfig {
            lambda23: self.lambda23,
            lambda45: self.lambda45,
            pair_prob: self.pair_prob,
            mu: self.mu,
            spdc_order: self.order,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [from, to, steps] = parts.as_slice() else {
        return Err("expected start:stop:steps".into());
    };
    let num = |x: &str| match x.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{x}` is not a number")),
    };
    let steps: usize = steps
        .parse()
        .map_err(|_| format!("`{steps}` is not a step count"))?;
    if steps < 2 {
        return Err("a grid needs at least 2 steps".into());
    }
    Ok(Grid {
        from: num(from)?,
        to: num(to)?,
        steps,
    })
}

fn parse_state(s: &str) -> Result<QubitState, String> {
    if let Ok(o) = s.parse::<Outcome>() {
        return Ok(o.state());
    }
    let (theta, phase) = match s.split_once(',') {
        Some((t, p)) => (t, p),
        None => (s, "0"),
    };
    let num = |x: &str| {
        x.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{s}` is not H, V, P, M, L, R or theta[,phase]"))
    };
    let (theta, phase) = (num(theta)?.to_radians(), num(phase)?.to_radians());
    Ok(QubitState::normalized(
        C64::new(theta.cos(), 0.0),
        C64::from_polar(theta.sin(), phase),
    ))
}

enum Failure {
    Usage(String),
    Diagnostic(String),
    ZeroProbability(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Diagnostic(_) => 2,
            Failure::ZeroProbability(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Diagnostic(m) | Failure::ZeroProbability(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_zero_probability() {
            Failure::ZeroProbability(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<CircuitError> for Failure {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::Detection(DetectionError::ZeroProbability(_)) => {
                Failure::ZeroProbability(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn load(file: &Path) -> Result<heraldsim::circuit::Circuit, Failure> {
    let bytes = std::fs::read(file)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", file.display())))?;
    netlist::load_bytes(&bytes).map_err(|d| Failure::Diagnostic(d.with_file(&file.display().to_string())))
}

fn emit(report: &Report, output: &Output) -> Result<(), Failure> {
    let text = match output.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    match &output.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { file, output, grid } => {
            let mut circuit = load(&file)?;
            if let Some(g) = grid {
                let scan = circuit.scan.as_mut().ok_or_else(|| {
                    Failure::Usage(format!("{} has no scan for --grid", file.display()))
                })?;
                scan.from = g.from;
                scan.to = g.to;
                scan.steps = g.steps;
            }
            let result = circuit.run()?;
            let name = file
                .file_name()
                .map_or_else(|| "netlist".to_string(), |n| n.to_string_lossy().into_owned());
            emit(&Report::netlist(&name, &result), &output)
        }
        Command::Check { file } => {
            let circuit = load(&file)?;
            println!("{}: ok, {} stages", file.display(), circuit.pipeline_len());
            Ok(())
        }
        Command::CnotTable { noise, output } => {
            let r = experiments::run_cnot_truth_table(&noise.config())?;
            emit(&Report::truth_table(&r), &output)
        }
        Command::EntangleFringe {
            noise,
            output,
            grid,
        } => {
            let r = experiments::run_entangling_fringe(&noise.config(), &grid)?;
            emit(&Report::entangling(&r), &output)
        }
        Command::Teleport {
            noise,
            output,
            grid,
            input,
        } => {
            let r = experiments::run_teleportation(&input, &noise.config(), &grid)?;
            emit(&Report::teleportation(&r), &output)
        }
        Command::ClassicalBaseline {
            output,
            samples,
            seed,
        } => {
            let mc = experiments::classical_baseline_monte_carlo(samples, seed);
            emit(
                &Report::classical_baseline(experiments::classical_baseline(), mc, samples, seed),
                &output,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message());
            ExitCode::from(f.code())
        }
    }
}
