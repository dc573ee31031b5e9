use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pmean_fair::exact::{enumerate_optima_with, grid_oracle_divisible_with};
use pmean_fair::market::{ChoresEquilibrium, GoodsEquilibrium};
use pmean_fair::rounding::{round_chores, round_goods, verify_chores_rounding, verify_goods_rounding, ContractCheck};
use pmean_fair::rounding::RoundingOutcome;
use pmean_fair::solver::{extract_chores_equilibrium, extract_goods_equilibrium, solve, Solution, SolverConfig};
use pmean_fair::{Error, Execution, Instance, Kind, PMean, Result};
use pmean_lab::experiments::{self, Context};
use pmean_lab::generators::{Named, Params};
use pmean_lab::manifest::Manifest;
use pmean_lab::report::write_csv;

const P_HELP: &str = "Exponent of the p-mean; inf and -inf are accepted, and |p| > 700 is treated as infinite";

#[derive(Parser)]
#[command(name = "pmean", version, about = "Normalized p-mean allocations: solve, round, enumerate and reproduce")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal divisible allocation with its KKT certificate and market equilibrium.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, allow_negative_numbers = true, help = P_HELP)]
        p: f64,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rounds an equilibrium written by `solve` to an integral allocation.
    Round {
        #[arg(long)]
        equilibrium: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive search over integral allocations.
    Enumerate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, allow_negative_numbers = true, help = P_HELP)]
        p: f64,
        /// Print every optimum instead of the first.
        #[arg(long)]
        all_optima: bool,
    },
    /// Grid search over divisible allocations.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, allow_negative_numbers = true, help = P_HELP)]
        p: f64,
        #[arg(long, default_value_t = 1000)]
        resolution: usize,
    },
    /// Runs experiments and reports one verdict per checked claim.
    Reproduce(ReproduceArgs),
    /// Writes a named instance as JSON.
    Generate(GenerateArgs),
    /// Lists experiment ids.
    List,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, conflicts_with = "experiment", required_unless_present = "experiment")]
    all: bool,
    #[arg(long)]
    experiment: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for results.csv.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Replaces the embedded manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    name: String,
    #[arg(long)]
    beta: Option<u32>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    v11: Option<f64>,
    #[arg(long)]
    v21: Option<f64>,
    #[arg(long)]
    c11: Option<f64>,
    #[arg(long)]
    c21: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Market {
    Goods(GoodsEquilibrium),
    Chores(ChoresEquilibrium),
}

#[derive(Serialize, Deserialize)]
struct Solved {
    instance: Instance,
    p: f64,
    solution: Solution,
    equilibrium: Market,
}

#[derive(Serialize)]
struct Rounded {
    instance: Instance,
    owners: Vec<usize>,
    outcome: RoundingOutcome,
    contract: ContractCheck,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_solve(inst: &Instance, p: f64, max_iterations: Option<usize>, out: Option<&Path>) -> Result<()> {
    let mut cfg = SolverConfig::default();
    if let Some(k) = max_iterations {
        cfg.max_iterations = k;
    }
    let solution = solve(inst, p, &cfg)?;
    let equilibrium = match inst.kind() {
        Kind::Goods => Market::Goods(extract_goods_equilibrium(inst, &solution.allocation, p)?),
        Kind::Chores => Market::Chores(extract_chores_equilibrium(inst, &solution.allocation, p)?),
    };
    emit(
        &Solved {
            instance: inst.clone(),
            p,
            solution,
            equilibrium,
        },
        out,
    )
}

fn cmd_round(path: &Path, out: Option<&Path>) -> Result<()> {
    let solved: Solved = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let inst = &solved.instance;
    let (outcome, contract) = match &solved.equilibrium {
        Market::Goods(eq) => {
            let o = round_goods(inst, eq)?;
            let c = verify_goods_rounding(inst, eq, &o)?;
            (o, c)
        }
        Market::Chores(eq) => {
            let o = round_chores(inst, eq, solved.p)?;
            let c = verify_chores_rounding(inst, eq, &o)?;
            (o, c)
        }
    };
    emit(
        &Rounded {
            instance: inst.clone(),
            owners: outcome.allocation.owners().to_vec(),
            outcome,
            contract,
        },
        out,
    )
}

fn cmd_reproduce(args: &ReproduceArgs, exec: Execution) -> Result<bool> {
    let manifest = match &args.manifest {
        Some(path) => Manifest::load(path)?,
        None => Manifest::embedded(),
    };
    let ctx = Context {
        seed: args.seed.unwrap_or(manifest.seed),
        manifest,
        exec,
    };
    let ids: Vec<String> = if args.all {
        experiments::ids().map(String::from).collect()
    } else {
        args.experiment.clone()
    };
    let mut reports = Vec::new();
    for id in &ids {
        let r = experiments::run_experiment(id, &ctx)?;
        print!("{r}");
        reports.push(r);
    }
    if let Some(dir) = &args.csv {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("results.csv"), &reports)?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.id.as_str()).collect();
    if failed.is_empty() {
        println!("all {} experiments passed", reports.len());
    } else {
        println!("failed: {}", failed.join(", "));
    }
    Ok(failed.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Solve {
            instance,
            p,
            max_iterations,
            out,
        } => cmd_solve(&Instance::load(&instance)?, p, max_iterations, out.as_deref())?,
        Command::Round { equilibrium, out } => cmd_round(&equilibrium, out.as_deref())?,
        Command::Enumerate {
            instance,
            p,
            all_optima,
        } => {
            let mut set = enumerate_optima_with(&Instance::load(&instance)?, PMean::new(p)?, exec)?;
            if !all_optima {
                set.optima.truncate(1);
            }
            emit(&set, None)?;
        }
        Command::Oracle { instance, p, resolution } => {
            let r = grid_oracle_divisible_with(&Instance::load(&instance)?, PMean::new(p)?, resolution, exec)?;
            emit(&r, None)?;
        }
        Command::Reproduce(args) => return cmd_reproduce(&args, exec),
        Command::Generate(g) => {
            let params = Params {
                beta: g.beta,
                n: g.n,
                m: g.m,
                p: g.p,
                eps: g.eps,
                delta: g.delta,
                v11: g.v11,
                v21: g.v21,
                c11: g.c11,
                c21: g.c21,
            };
            let inst = Named::from_params(&g.name, &params)?.generate()?;
            emit(&inst, g.out.as_deref())?;
        }
        Command::List => {
            for e in experiments::EXPERIMENTS {
                println!("{:<28} {}", e.id, e.summary);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Convergence { .. } = e {
                eprintln!("hint: raise --max-iterations");
            }
            ExitCode::from(2)
        }
    }
}
