use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mixgrid::assembly::AuxMode;
use mixgrid::io::{self, GeometryFile, InitialGuess, IoError, SampleFormat, SolutionFile};

/// Folding-free spline parameterizations of planar domains from their boundary.
#[derive(Parser, Debug)]
#[command(name = "mixgrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Full,
    Xi,
    Eta,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Initial {
    Transfinite,
    File,
    Folded,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Vtk,
    Svg,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the inner control points and write a solution file.
    Solve {
        geometry: PathBuf,
        /// Defaults to `<geometry stem>.solution.json` next to the input.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        chi: Option<f64>,
        #[arg(long)]
        coarse_levels: Option<usize>,
        /// Relative Newton tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value = "transfinite")]
        initial: Initial,
        /// Solution file providing the initial guess for `--initial file`.
        #[arg(long)]
        initial_file: Option<PathBuf>,
        /// Print per-iteration diagnostics to stderr.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Validate a geometry file without solving.
    Check { geometry: PathBuf },
    /// Sample a solution on a grid and export it.
    Sample {
        solution: PathBuf,
        #[arg(long, value_enum, default_value = "vtk")]
        format: Format,
        /// Subdivisions per element.
        #[arg(long, default_value_t = 4)]
        resolution: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Winslow value and sampled Jacobian report for a solution.
    Quality { solution: PathBuf },
}

fn with_extension(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = stem.strip_suffix(".solution").unwrap_or(&stem).to_string();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[allow(clippy::too_many_arguments)]
fn solve(
    geometry: &Path,
    output: Option<PathBuf>,
    mode: Option<Mode>,
    mu: Option<f64>,
    chi: Option<f64>,
    coarse_levels: Option<usize>,
    tol: Option<f64>,
    initial: Initial,
    initial_file: Option<PathBuf>,
    verbose: bool,
) -> Result<ExitCode, IoError> {
    let mut g = GeometryFile::load(geometry)?;
    if let Some(m) = mode {
        g.solver.mode = match m {
            Mode::Full => AuxMode::Full,
            Mode::Xi => AuxMode::XiOnly,
            Mode::Eta => AuxMode::EtaOnly,
        };
    }
    if let Some(v) = mu {
        g.solver.mu = v;
    }
    if let Some(v) = chi {
        g.solver.chi = v;
    }
    if let Some(v) = coarse_levels {
        g.solver.coarse_levels = v;
    }
    if let Some(v) = tol {
        g.solver.newton_tol = v;
    }
    let initial = match (initial, initial_file) {
        (Initial::Transfinite, _) => InitialGuess::Transfinite,
        (Initial::Folded, _) => InitialGuess::Folded,
        (Initial::File, Some(p)) => InitialGuess::File(p),
        (Initial::File, None) => return Err(IoError::Invalid("--initial file needs --initial-file".into())),
    };
    let solution = io::solve_geometry(&g, &initial, verbose)?;
    let output = output.unwrap_or_else(|| with_extension(geometry, ".solution.json"));
    solution.save(&output)?;
    let r = &solution.report;
    println!(
        "{}: {:?} after {} Newton iterations, |R| = {:.3e}, folds = {}",
        output.display(),
        r.termination,
        r.iterations,
        r.final_residual_norm,
        solution.quality.fold_count
    );
    Ok(if r.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn sample(solution: &Path, format: Format, resolution: usize, output: Option<PathBuf>) -> Result<ExitCode, IoError> {
    let s = SolutionFile::load(solution)?;
    let format = match format {
        Format::Vtk => SampleFormat::Vtk,
        Format::Svg => SampleFormat::Svg,
        Format::Csv => SampleFormat::Csv,
    };
    let ext = match format {
        SampleFormat::Vtk => "vtk",
        SampleFormat::Svg => "svg",
        SampleFormat::Csv => "csv",
    };
    let output = output.unwrap_or_else(|| with_extension(solution, &format!(".{ext}")));
    let written = io::write_samples(&s, format, resolution, &output)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, IoError> {
    match cli.command {
        Command::Solve { geometry, output, mode, mu, chi, coarse_levels, tol, initial, initial_file, verbose } => {
            solve(&geometry, output, mode, mu, chi, coarse_levels, tol, initial, initial_file, verbose)
        }
        Command::Check { geometry } => {
            let report = io::check_file(&geometry);
            for w in &report.warnings {
                println!("warning: {w}");
            }
            for e in &report.errors {
                println!("error: {e}");
            }
            if report.is_ok() {
                println!("ok");
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Sample { solution, format, resolution, output } => sample(&solution, format, resolution, output),
        Command::Quality { solution } => {
            let s = SolutionFile::load(&solution)?;
            print!("{}", io::quality_text(&s)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
