//! Experiment CLI: repeated-solve recycling studies, IRKA runs, problem
//! generation, and a standalone principal-angle tool.
//!
//! Exit codes: 0 success; 2 bad flags (clap); 3 solver breakdown;
//! 4 non-convergence; 5 I/O error; 1 any other failure.

use clap::{Parser, Subcommand, ValueEnum};
use rbicg::irka::{IrkaOptions, SolverKind};
use rbicg::numerics::{creal, principal_angle_cosines, DenseMatrix};
use rbicg::problems::{
    gen_convdiff, gen_heat_model, gen_heat_model_2d, load_matrix_market, save_matrix_market_sparse,
    save_matrix_market_vector, ConvDiffConfig, MatrixMarketData,
};
use rbicg::report::{
    cmd_irka, cmd_repeat_solve, export_report, ExperimentReport, ExportFormat, IrkaCmdConfig,
    RepeatSolveConfig, ReportError,
};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_BREAKDOWN: u8 = 3;
const EXIT_NO_CONVERGENCE: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "rbicg", version, about = "Recycling BiCG experiment harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Bicg,
    Rbicg,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProblemKind {
    Convdiff,
    Heat1d,
    Heat2d,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the same dual system repeatedly, carrying the recycle space.
    RepeatSolve {
        /// Inverse mesh width of the convection-diffusion grid.
        #[arg(long = "h", default_value_t = 64)]
        h: usize,
        /// RBiCG cycle length.
        #[arg(long, default_value_t = 40)]
        s: usize,
        /// Recycle-space dimension target.
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long = "drop-tol", default_value_t = 0.05)]
        drop_tol: f64,
        #[arg(long, default_value_t = 4)]
        runs: usize,
        #[arg(long, default_value_t = 0x5EED)]
        seed: u64,
        /// Report destination (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Interpolatory model reduction on the 2-D heat model.
    Irka {
        /// Grid side of the 2-D heat model (n = side²).
        #[arg(long, default_value_t = 50)]
        side: usize,
        /// Reduced order.
        #[arg(long, default_value_t = 3)]
        r: usize,
        /// Initial shifts, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.00e-5, 7.08e-3, 5.01])]
        shifts: Vec<f64>,
        #[arg(long, value_enum, default_value_t = SolverArg::Both)]
        solver: SolverArg,
        #[arg(long = "recycle-every", default_value_t = 5)]
        recycle_every: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 40)]
        s: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// ILUT drop tolerance for the shifted systems (omit to solve
        /// unpreconditioned).
        #[arg(long = "drop-tol")]
        drop_tol: Option<f64>,
        #[arg(long = "shift-tol", default_value_t = 1e-6)]
        shift_tol: f64,
        #[arg(long = "max-steps", default_value_t = 100)]
        max_steps: usize,
        #[arg(long, default_value_t = 0x5EED)]
        seed: u64,
        /// Record wall time per arm (makes reports machine-dependent).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Emit a generated problem as Matrix Market files.
    Gen {
        #[arg(long, value_enum)]
        problem: ProblemKind,
        /// Inverse mesh width (convdiff).
        #[arg(long = "h", default_value_t = 64)]
        h: usize,
        /// Grid side (heat2d) or order (heat1d).
        #[arg(long, default_value_t = 50)]
        side: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Principal angles between the column spans of two Matrix Market arrays.
    Angles { x: PathBuf, y: PathBuf },
}

fn classify(e: &ReportError) -> u8 {
    use rbicg::bicg::SolveError;
    match e {
        ReportError::Solve(
            SolveError::SeriousBreakdown(_) | SolveError::SecondKindBreakdown(_),
        ) => EXIT_BREAKDOWN,
        ReportError::Io(_) | ReportError::Problems(_) => EXIT_IO,
        _ => 1,
    }
}

fn emit(
    report: &ExperimentReport,
    out: Option<&PathBuf>,
    format: Format,
) -> Result<(), ReportError> {
    let fmt = match format {
        Format::Json => ExportFormat::Json,
        Format::Csv => ExportFormat::Csv,
    };
    match out {
        Some(path) => export_report(report, path, fmt),
        None => {
            let text = match fmt {
                ExportFormat::Json => rbicg::report::report_to_json(report)?,
                ExportFormat::Csv => rbicg::report::report_to_csv(report),
            };
            print!("{text}");
            Ok(())
        }
    }
}

/// Emit the report and derive the exit code: breakdowns and non-convergence
/// are recorded in the report rather than propagated as hard errors.
fn finish(report: &ExperimentReport, out: Option<&PathBuf>, format: Format) -> ExitCode {
    if let Err(e) = emit(report, out, format) {
        eprintln!("rbicg: {e}");
        return ExitCode::from(EXIT_IO);
    }
    if report
        .runs
        .iter()
        .any(|r| r.termination.ends_with("breakdown"))
    {
        return ExitCode::from(EXIT_BREAKDOWN);
    }
    if !report.all_converged() {
        return ExitCode::from(EXIT_NO_CONVERGENCE);
    }
    ExitCode::SUCCESS
}

fn load_dense(path: &PathBuf) -> Result<DenseMatrix, String> {
    match load_matrix_market(path).map_err(|e| e.to_string())? {
        MatrixMarketData::Dense(m) => Ok(m),
        MatrixMarketData::Sparse(m) => Ok(m.to_dense()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::RepeatSolve {
            h,
            s,
            k,
            tol,
            drop_tol,
            runs,
            seed,
            out,
            format,
        } => {
            let cfg = RepeatSolveConfig {
                inv_h: h,
                runs,
                s,
                k,
                tol,
                drop_tol,
                seed,
                ..RepeatSolveConfig::default()
            };
            match cmd_repeat_solve(&cfg) {
                Ok(report) => finish(&report, out.as_ref(), format),
                Err(e) => {
                    eprintln!("rbicg: {e}");
                    ExitCode::from(classify(&e))
                }
            }
        }
        Cmd::Irka {
            side,
            r,
            shifts,
            solver,
            recycle_every,
            tol,
            s,
            k,
            drop_tol,
            shift_tol,
            max_steps,
            seed: _,
            timing,
            out,
            format,
        } => {
            let model = gen_heat_model_2d(side);
            let cfg = IrkaCmdConfig {
                r,
                shifts: shifts.iter().map(|&x| creal(x)).collect(),
                solver: match solver {
                    SolverArg::Bicg => Some(SolverKind::Bicg),
                    SolverArg::Rbicg => Some(SolverKind::Rbicg),
                    SolverArg::Both => None,
                },
                opts: IrkaOptions {
                    solve_tol: tol,
                    s,
                    k,
                    drop_tol,
                    shift_tol,
                    max_steps,
                    recycle_every,
                    ..IrkaOptions::default()
                },
                with_timing: timing,
            };
            match cmd_irka(&model, &format!("heat2d-{side}x{side}"), &cfg) {
                Ok(report) => finish(&report, out.as_ref(), format),
                Err(e) => {
                    eprintln!("rbicg: {e}");
                    ExitCode::from(classify(&e))
                }
            }
        }
        Cmd::Gen {
            problem,
            h,
            side,
            out,
        } => {
            let write = || -> Result<(), Box<dyn std::error::Error>> {
                std::fs::create_dir_all(&out)?;
                match problem {
                    ProblemKind::Convdiff => {
                        let (a, b) = gen_convdiff(&ConvDiffConfig::with_inv_h(h));
                        save_matrix_market_sparse(out.join("A.mtx"), &a)?;
                        save_matrix_market_vector(out.join("b.mtx"), &b)?;
                    }
                    ProblemKind::Heat1d => {
                        let m = gen_heat_model(side, side / 4, 3 * side / 4);
                        save_matrix_market_sparse(out.join("E.mtx"), &m.e)?;
                        save_matrix_market_sparse(out.join("A.mtx"), &m.a)?;
                        save_matrix_market_vector(out.join("b.mtx"), &m.b)?;
                        save_matrix_market_vector(out.join("c.mtx"), &m.c)?;
                    }
                    ProblemKind::Heat2d => {
                        let m = gen_heat_model_2d(side);
                        save_matrix_market_sparse(out.join("E.mtx"), &m.e)?;
                        save_matrix_market_sparse(out.join("A.mtx"), &m.a)?;
                        save_matrix_market_vector(out.join("b.mtx"), &m.b)?;
                        save_matrix_market_vector(out.join("c.mtx"), &m.c)?;
                    }
                }
                Ok(())
            };
            match write() {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("rbicg: {e}");
                    ExitCode::from(EXIT_IO)
                }
            }
        }
        Cmd::Angles { x, y } => {
            let run = || -> Result<Vec<f64>, String> {
                let xm = load_dense(&x)?;
                let ym = load_dense(&y)?;
                principal_angle_cosines(&xm, &ym).map_err(|e| e.to_string())
            };
            match run() {
                Ok(cosines) => {
                    for c in cosines {
                        println!("{c:.16e}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("rbicg: {e}");
                    ExitCode::from(EXIT_IO)
                }
            }
        }
    }
}
