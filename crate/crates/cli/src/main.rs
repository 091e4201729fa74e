use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use stringflow::grid::DEFAULT_BUDGET;
use stringflow_cli::run::{EXIT_CONFIG, EXIT_OK};
use stringflow_cli::{execute, execute_verify, report, Command, Options, Scenario};

#[derive(Parser)]
#[command(name = "stringflow", version, about = "Geometric flows and supergravity checks on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random choice; overrides the scenario
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
    /// Largest number of lattice points
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
}

#[derive(Subcommand)]
enum Sub {
    /// Run a time-dependent flow
    Flow(Common),
    /// Solve the stationary Monge-Ampère equation by Newton iteration
    MaSolve(Common),
    /// Integrate the membrane ODE
    SugraOde(Common),
    /// Check warped membrane data against the field equations
    SugraCheck(Common),
    /// Compare optimized kernels with the reference oracles
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random inputs per operation when no scenario is given
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Extract plot-ready series from a finished run
    Report {
        /// Directory of a completed run
        run_dir: PathBuf,
    },
}

fn init_threads(n: Option<usize>) {
    if let Some(n) = n {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot configure {n} threads: {e}");
        }
    }
}

fn run(command: Command, common: Common) -> i32 {
    init_threads(common.threads);
    let Some(path) = common.scenario.as_ref() else {
        eprintln!("error: --scenario <path> is required for {}", command.name());
        return EXIT_CONFIG;
    };
    let scenario = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = common
        .out
        .or_else(|| scenario.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&scenario.name));
    let opts = Options { out, seed: common.seed, budget: common.budget };
    finish(execute(command, &scenario, &opts))
}

fn finish(result: Result<stringflow_cli::Outcome, stringflow_cli::Failure>) -> i32 {
    match result {
        Ok(o) => {
            if let Some(ops) = o.summary.get("reports").and_then(|r| r.as_array()) {
                for r in ops {
                    println!(
                        "{} {} deviation={:e}",
                        if r["passed"].as_bool() == Some(true) { "PASS" } else { "FAIL" },
                        r["operation"].as_str().unwrap_or("?"),
                        r["max_abs_deviation"].as_f64().unwrap_or(f64::NAN)
                    );
                }
            }
            println!(
                "{} {} exit={} -> {}",
                o.summary["kind"].as_str().unwrap_or("?"),
                o.summary["termination"].as_str().unwrap_or("?"),
                o.code,
                o.out.display()
            );
            o.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("STRINGFLOW_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    let code = match cli.command {
        Sub::Flow(c) => run(Command::Flow, c),
        Sub::MaSolve(c) => run(Command::MaSolve, c),
        Sub::SugraOde(c) => run(Command::SugraOde, c),
        Sub::SugraCheck(c) => run(Command::SugraCheck, c),
        Sub::Verify { common, samples } => {
            if common.scenario.is_some() {
                run(Command::Verify, common)
            } else {
                init_threads(common.threads);
                let seed = common.seed.unwrap_or(0);
                let out = common.out.unwrap_or_else(|| PathBuf::from("runs/verify"));
                finish(execute_verify(seed, samples, &out))
            }
        }
        Sub::Report { run_dir } => match report::report(&run_dir) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
    };
    ExitCode::from(code as u8)
}
