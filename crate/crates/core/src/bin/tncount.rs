use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tncount::decomp::{read_pace_td, Strategy};
use tncount::driver::{count, gen_cubic_vc, inspect, MethodChoice, RunConfig, RunError};
use tncount::formula::parse_dimacs;

const EXIT_TIMEOUT: u8 = 2;
const EXIT_MEM_CAP: u8 = 3;
const EXIT_PARSE: u8 = 4;

/// Exact weighted model counter via tensor-network contraction.
#[derive(Parser)]
#[command(name = "tncount", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count weighted models of a DIMACS CNF file
    Count(CountArgs),
    /// Generate benchmark formulas
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Report formula structure and planning prospects
    Inspect {
        /// DIMACS CNF file
        file: PathBuf,
        /// seconds to spend probing decompositions
        #[arg(long, default_value_t = 2.0)]
        budget: f64,
    },
}

#[derive(Args)]
struct CountArgs {
    /// DIMACS CNF file
    file: PathBuf,
    /// planning method: greedy, lg, ft, or portfolio
    #[arg(long, default_value = "portfolio")]
    method: MethodChoice,
    /// comma-separated decomposition heuristics, tried round-robin
    #[arg(long, value_delimiter = ',', default_value = "min-fill,min-degree")]
    td: Vec<Strategy>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// wall-clock limit in seconds
    #[arg(long)]
    timeout: Option<f64>,
    /// largest tensor, in entries, the contraction may build
    #[arg(long, default_value_t = tncount::network::DEFAULT_MEM_CAP)]
    mem_cap: u64,
    /// estimated seconds per scalar operation, for the planning stop rule
    #[arg(long, default_value_t = 1e-10)]
    seconds_per_flop: f64,
    /// use this decomposition (PACE .td format) instead of the heuristics
    #[arg(long)]
    import_td: Option<PathBuf>,
    /// write the chosen contraction tree to a file
    #[arg(long)]
    emit_tree: Option<PathBuf>,
    /// write the full plan summary to a file
    #[arg(long)]
    emit_plan: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Count(args) => run_count(args),
        Command::Gen { family } => run_gen(family),
        Command::Inspect { file, budget } => run_inspect(file, budget),
    }
}

#[derive(Subcommand)]
enum GenFamily {
    /// Weighted vertex-cover counting on a random 3-regular graph
    CubicVc {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_to_string(path: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_PARSE)
    })
}

fn run_count(args: CountArgs) -> ExitCode {
    let text = match read_to_string(&args.file) {
        Ok(t) => t,
        Err(c) => return c,
    };
    let formula = match parse_dimacs(&text) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let import_td = match &args.import_td {
        None => None,
        Some(path) => {
            let text = match read_to_string(path) {
                Ok(t) => t,
                Err(c) => return c,
            };
            match read_pace_td(&text) {
                Ok(td) => Some(td),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_PARSE);
                }
            }
        }
    };
    let cfg = RunConfig {
        method: args.method,
        strategies: args.td,
        seed: args.seed,
        timeout: args.timeout,
        mem_cap: args.mem_cap,
        seconds_per_flop: args.seconds_per_flop,
        import_td,
    };
    match count(&formula, &cfg) {
        Ok(report) => {
            println!("c method {}", report.plan.method);
            match report.plan.source_width {
                Some(w) => println!("c source-width {w}"),
                None => println!("c source-width -"),
            }
            println!("c max-rank {}", report.plan.max_rank);
            println!("c tensors {}", report.plan.network.tensors.len());
            println!("c plan-seconds {:.3}", report.plan_seconds);
            println!("c contract-seconds {:.3}", report.contract_seconds);
            println!("c total-seconds {:.3}", report.total_seconds);
            if let Some(path) = &args.emit_tree {
                if let Err(e) = std::fs::write(path, report.tree_text() + "\n") {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            if let Some(path) = &args.emit_plan {
                if let Err(e) = std::fs::write(path, report.plan_text()) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            println!("s wmc {:.16e}", report.count);
            ExitCode::SUCCESS
        }
        Err(RunError::Timeout) => {
            eprintln!("error: timed out");
            ExitCode::from(EXIT_TIMEOUT)
        }
        Err(e @ RunError::MemCap { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_MEM_CAP)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_gen(family: GenFamily) -> ExitCode {
    match family {
        GenFamily::CubicVc { n, seed } => match gen_cubic_vc(n, seed) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}

fn run_inspect(file: PathBuf, budget: f64) -> ExitCode {
    let text = match read_to_string(&file) {
        Ok(t) => t,
        Err(c) => return c,
    };
    match parse_dimacs(&text) {
        Ok(f) => {
            print!("{}", inspect(&f, budget));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_PARSE)
        }
    }
}
