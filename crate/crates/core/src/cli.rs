//! Command-line front end.
//!
//! ```text
//! condensed-opf solve <case.m> [--algorithm full|linred|redlin] [--tol 1e-8]
//!     [--batch-size 256] [--max-iter 200] [--output text|json] [--trace] [--verify]
//! ```
//!
//! Exit codes: 0 when the solve is optimal, 1 when the solver stops
//! without converging, 2 on invalid input.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::ipm::{solve, Algorithm, SolveReport, SolverOptions};
use crate::matpower::{read_case, to_per_unit, ConversionOptions};

pub const EXIT_OPTIMAL: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Relative tolerance on objective agreement used by `--verify`.
pub const VERIFY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "condensed-opf", version, about = "Interior-point AC optimal power flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the optimal power flow of a MATPOWER case.
    Solve(SolveArgs),
}

#[derive(Debug, clap::Args)]
struct SolveArgs {
    /// Path to a MATPOWER `.m` case file.
    case: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Linred)]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Columns per batched Hessian product in the reduction.
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    output: OutputFormat,
    /// Print one line per iteration (text) or include the trace (json).
    #[arg(long)]
    trace: bool,
    /// Solve with all three algorithms and check that the objectives agree.
    #[arg(long)]
    verify: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Full,
    Linred,
    Redlin,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Full => Algorithm::FullSpace,
            AlgorithmArg::Linred => Algorithm::LinRed,
            AlgorithmArg::Redlin => Algorithm::RedLin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OPTIMAL };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match cli.command {
        Command::Solve(args) => run_solve(&args, out, err),
    }
}

fn run_solve(args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let net = match read_case(&args.case).and_then(|c| to_per_unit(&c, ConversionOptions::default())) {
        Ok(net) => net,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", args.case.display());
            return EXIT_INPUT;
        }
    };
    if !(args.tol > 0.0) || args.batch_size == 0 {
        let _ = writeln!(err, "error: --tol must be positive and --batch-size at least 1");
        return EXIT_INPUT;
    }
    let opts =
        SolverOptions { tol: args.tol, max_iter: args.max_iter, batch_size: args.batch_size, ..Default::default() };

    if args.verify {
        let reports: Vec<SolveReport> = Algorithm::ALL.iter().map(|&a| solve(&net, a, &opts)).collect();
        return emit_verification(&reports, args, out, err);
    }

    let report = solve(&net, args.algorithm.into(), &opts);
    let written = match args.output {
        OutputFormat::Text => write_text(&report, args.trace, out),
        OutputFormat::Json => write_json(&report, args.trace, out),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: cannot write report: {e}");
        return EXIT_INPUT;
    }
    if let Some(msg) = &report.message {
        let _ = writeln!(err, "{msg}");
    }
    if report.status.is_optimal() {
        EXIT_OPTIMAL
    } else {
        EXIT_SOLVER
    }
}

fn report_json(report: &SolveReport, with_trace: bool) -> serde_json::Value {
    let mut value = serde_json::to_value(report).expect("report serializes");
    if !with_trace {
        if let Some(obj) = value.as_object_mut() {
            obj.remove("trace");
        }
    }
    value
}

fn write_value(value: &serde_json::Value, out: &mut dyn Write) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)
}

fn write_json(report: &SolveReport, with_trace: bool, out: &mut dyn Write) -> std::io::Result<()> {
    write_value(&report_json(report, with_trace), out)
}

/// Human-readable report. Numbers use the shortest round-trip form, so
/// they equal the JSON values exactly.
pub fn write_text(report: &SolveReport, with_trace: bool, out: &mut dyn Write) -> std::io::Result<()> {
    if with_trace {
        writeln!(
            out,
            "{:>4} {:>22} {:>10} {:>10} {:>10} {:>8} {:>9} {:>9} {:>8}",
            "iter", "objective", "inf_pr", "inf_du", "compl", "mu", "alpha_pr", "alpha_du", "delta"
        )?;
        for r in &report.trace {
            writeln!(
                out,
                "{:>4} {:>22.12e} {:>10.2e} {:>10.2e} {:>10.2e} {:>8.1e} {:>9.2e} {:>9.2e} {:>8.1e}",
                r.iteration,
                r.objective,
                r.primal_inf,
                r.dual_inf,
                r.complementarity,
                r.mu,
                r.alpha_primal,
                r.alpha_dual,
                r.delta
            )?;
        }
        writeln!(out)?;
    }
    let d = &report.dims;
    let t = &report.timings;
    writeln!(out, "algorithm        {}", report.algorithm)?;
    writeln!(out, "status           {}", report.status)?;
    writeln!(out, "iterations       {}", report.iterations)?;
    writeln!(out, "objective        {}", report.objective)?;
    writeln!(out, "primal_inf       {:e}", report.primal_inf)?;
    writeln!(out, "dual_inf         {:e}", report.dual_inf)?;
    writeln!(out, "complementarity  {:e}", report.complementarity)?;
    writeln!(
        out,
        "dims             n_b={} n_l={} n_g={} n_x={} n_u={} m={} ratio={:.4}",
        d.n_buses, d.n_lines, d.n_generators, d.n_states, d.n_controls, d.n_constraints, d.ratio
    )?;
    writeln!(
        out,
        "timings (s)      derivatives={:.4} reduction={:.4} factorization={:.4} power_flow={:.4} line_search={:.4} total={:.4}",
        t.derivatives, t.reduction, t.factorization, t.power_flow, t.line_search, t.total
    )?;
    writeln!(out, "regularizations  {}", report.regularizations.len())?;
    writeln!(out, "kernels          spmm={} spsm={}", report.kernels.spmm, report.kernels.spsm)?;
    if report.restoration_needed {
        writeln!(out, "note             stopped where a restoration phase would be required")?;
    }
    Ok(())
}

fn emit_verification(reports: &[SolveReport], args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let reference = reports.iter().find(|r| r.status.is_optimal()).map(|r| r.objective);
    let agree =
        |r: &SolveReport| reference.is_some_and(|o| (r.objective - o).abs() <= VERIFY_TOLERANCE * o.abs().max(1.0));
    let ok = reports.iter().all(|r| r.status.is_optimal() && agree(r));
    let written = match args.output {
        OutputFormat::Json => {
            let value = json!({
                "consistent": ok,
                "tolerance": VERIFY_TOLERANCE,
                "reports": reports.iter().map(|r| report_json(r, args.trace)).collect::<Vec<_>>(),
            });
            write_value(&value, out)
        }
        OutputFormat::Text => (|| {
            for r in reports {
                writeln!(
                    out,
                    "{:<8} {:<28} iterations={:<4} objective={} primal_inf={:e} dual_inf={:e}",
                    r.algorithm,
                    r.status.to_string(),
                    r.iterations,
                    r.objective,
                    r.primal_inf,
                    r.dual_inf
                )?;
            }
            writeln!(out, "consistent       {ok}")
        })(),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: cannot write report: {e}");
        return EXIT_INPUT;
    }
    if ok {
        EXIT_OPTIMAL
    } else {
        let _ = writeln!(err, "algorithms disagree or did not converge");
        EXIT_SOLVER
    }
}
