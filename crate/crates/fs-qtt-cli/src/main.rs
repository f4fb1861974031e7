use clap::{Args, Parser, Subcommand};
use fs_qtt::{fd, ProblemSpec, SchemeConfig};
use fs_qtt_cli::{records_to_csv, rel_error, run_experiment, RunConfig, RunError, RunRecord, SolverKind};
use std::path::PathBuf;
use std::process::ExitCode;
use tt_core::Tolerance;

/// Low-rank solvers for 2-D stationary diffusion problems on dyadic grids.
#[derive(Parser)]
#[command(name = "fs-qtt", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single instance and print its metrics
    Solve(SolveArgs),
    /// Sweep a grid-factor range and tabulate errors and energies
    Convergence(SweepArgs),
    /// Sweep a grid-factor range and tabulate effective ranks
    Ranks(SweepArgs),
    /// Dense verification of the scheme/finite-difference equivalence
    EquivalenceCheck(EquivArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Problem preset: analytic | constant-rhs | point-sources
    #[arg(long, default_value = "analytic")]
    problem: String,
    /// Solver: fs-qtt | fd-qtt | fd-dense
    #[arg(long, default_value = "fs-qtt")]
    solver: String,
    /// Tolerance profile: A (solver 1e-10, round/cross 1e-12) or B (1e-6, 1e-8)
    #[arg(long, default_value = "A")]
    profile: String,
    /// Override the solver tolerance
    #[arg(long)]
    tau_amen: Option<f64>,
    /// Override the rounding tolerance
    #[arg(long)]
    tau_round: Option<f64>,
    /// Override the cross-interpolation tolerance
    #[arg(long)]
    tau_cross: Option<f64>,
    /// Hard cap on bond ranks
    #[arg(long)]
    rmax: Option<usize>,
    /// Seed for sampling and starting guesses
    #[arg(long)]
    seed: Option<u64>,
    /// Write the records as CSV
    #[arg(long)]
    out: Option<PathBuf>,
    /// Persist the last computed solution in the container format
    #[arg(long)]
    dump_solution: Option<PathBuf>,
    /// Restrict the dumped solution to a coarser grid factor
    #[arg(long)]
    restrict_to: Option<u32>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Grid factor (per axis size 2^d)
    #[arg(long)]
    d: u32,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    d_min: u32,
    #[arg(long)]
    d_max: u32,
}

#[derive(Args)]
struct EquivArgs {
    /// Problem preset
    #[arg(long, default_value = "analytic")]
    problem: String,
    /// Grid factor (dense check, at most 5)
    #[arg(long, default_value_t = 3)]
    d: u32,
    /// Tolerance profile for the scheme side
    #[arg(long, default_value = "A")]
    profile: String,
}

fn scheme_config(common: &CommonArgs) -> Result<SchemeConfig, String> {
    let mut cfg = match common.profile.as_str() {
        "A" | "a" => SchemeConfig::profile_a(),
        "B" | "b" => SchemeConfig::profile_b(),
        other => return Err(format!("unknown profile {other:?}, expected A or B")),
    };
    let parse = |v: f64| Tolerance::new(v).map_err(|e| e.to_string());
    if let Some(t) = common.tau_amen {
        cfg.amen.tol = parse(t)?;
    }
    if let Some(t) = common.tau_round {
        cfg.tau_round = parse(t)?;
    }
    if let Some(t) = common.tau_cross {
        cfg.tau_cross = parse(t)?;
    }
    if let Some(r) = common.rmax {
        cfg.rmax = r;
        cfg.amen.rmax = r;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.amen.seed = s;
    }
    Ok(cfg)
}

fn run_config(common: &CommonArgs, d_min: u32, d_max: u32) -> Result<RunConfig, String> {
    let problem = ProblemSpec::preset(&common.problem)
        .ok_or_else(|| format!("unknown problem preset {:?}", common.problem))?;
    let solver = SolverKind::parse(&common.solver)
        .ok_or_else(|| format!("unknown solver {:?}", common.solver))?;
    Ok(RunConfig {
        problem,
        solver,
        d_min,
        d_max,
        scheme: scheme_config(common)?,
        out: common.out.clone(),
        dump_solution: common.dump_solution.clone(),
        restrict_to: common.restrict_to,
    })
}

fn print_records(records: &[RunRecord], ranks_view: bool) {
    if ranks_view {
        println!("{:>9} {:>3} {:>8} {:>8} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}", "solver", "d", "K_x^-1", "K_y^-1", "q_x", "q_y", "H_x", "H_y", "A", "u");
        for r in records {
            let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.1}"));
            println!(
                "{:>9} {:>3} {:>8} {:>8} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}",
                r.solver,
                r.d,
                f(r.erank_kxinv),
                f(r.erank_kyinv),
                f(r.erank_qx),
                f(r.erank_qy),
                f(r.erank_hx),
                f(r.erank_hy),
                f(r.erank_a),
                f(r.erank_u)
            );
        }
    } else {
        println!(
            "{:>9} {:>3} {:>12} {:>12} {:>12} {:>12} {:>10} {:>9}",
            "solver", "d", "err_u", "energy", "energy_re", "residual", "time_s", "converged"
        );
        for r in records {
            let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.3e}"));
            println!(
                "{:>9} {:>3} {:>12} {:>12} {:>12} {:>12} {:>10.3} {:>9}",
                r.solver,
                r.d,
                f(r.err_u),
                f(r.energy),
                f(r.energy_re_diff),
                f(r.residual),
                r.time_total_s,
                r.converged
            );
        }
    }
}

fn exit_for(records: &[RunRecord]) -> ExitCode {
    if records.iter().all(|r| r.converged) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run(cli: Cli) -> Result<ExitCode, RunError> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = run_config(&args.common, args.d, args.d).map_err(RunError::Config)?;
            let records = run_experiment(&cfg)?;
            print_records(&records, false);
            if cfg.out.is_none() {
                print!("{}", records_to_csv(&records));
            }
            Ok(exit_for(&records))
        }
        Command::Convergence(args) => {
            let cfg = run_config(&args.common, args.d_min, args.d_max).map_err(RunError::Config)?;
            let records = run_experiment(&cfg)?;
            print_records(&records, false);
            Ok(exit_for(&records))
        }
        Command::Ranks(args) => {
            let cfg = run_config(&args.common, args.d_min, args.d_max).map_err(RunError::Config)?;
            let records = run_experiment(&cfg)?;
            print_records(&records, true);
            Ok(exit_for(&records))
        }
        Command::EquivalenceCheck(args) => {
            if args.d > 5 {
                return Err(RunError::Config(format!(
                    "equivalence check is dense and capped at d = 5, got {}",
                    args.d
                )));
            }
            let problem = ProblemSpec::preset(&args.problem)
                .ok_or_else(|| RunError::Config(format!("unknown problem preset {:?}", args.problem)))?;
            let common = CommonArgs {
                problem: args.problem.clone(),
                solver: "fs-qtt".into(),
                profile: args.profile.clone(),
                tau_amen: None,
                tau_round: None,
                tau_cross: None,
                rmax: None,
                seed: None,
                out: None,
                dump_solution: None,
                restrict_to: None,
            };
            let scheme_cfg = scheme_config(&common).map_err(RunError::Config)?;
            let (ex, ey) = fd::scheme_identity_error(&problem, args.d)?;
            let bundle = fs_qtt::scheme::solve(&problem, args.d, &scheme_cfg)?;
            let u_fd = fd::solve_dense(&fd::assemble_dense(&problem, args.d)?)?;
            let u_fd_tt = tt_core::TtVector::from_dense(&u_fd, &vec![2; 2 * args.d as usize], Tolerance::EXACT)?;
            let err = rel_error(&bundle.u, &u_fd_tt)?.value;
            println!("inverse identity: max|A_x H_x - I(x)J| = {ex:.3e}, max|A_y H_y - J(x)I| = {ey:.3e}");
            println!("solution equivalence: |u_fs - u_fd| / |u_fd| = {err:.3e}");
            let ok = ex <= 1e-10 && ey <= 1e-10 && err <= 1e-8 && bundle.report.converged;
            println!("equivalence-check: {}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not usage errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(RunError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
