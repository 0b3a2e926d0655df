use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ssdm_core::bisection::EngineKind;
use ssdm_core::harness::{
    cmd_demo, cmd_minimize, cmd_solve, cmd_validate, load_decision, load_instance, RunConfig, ScheduleKind,
    ValidationReport,
};

/// Strategic decisions under multi-stage uncertainty via sampled separation.
#[derive(Parser)]
#[command(name = "ssdm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one engine and report a candidate, a certificate or an exhausted budget.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Minimize the instance objective by bisection.
    Minimize {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Monte Carlo evaluation of a decision file.
    Validate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        decision: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Minimize and validate the shipped inventory instance.
    DemoInventory {
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Bl,
    Ellipsoid,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sched {
    Fixed,
    Adaptive,
}

#[derive(Args)]
struct Opts {
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    /// Bisection accuracy; default gives 10 steps.
    #[arg(long = "kappa-opt")]
    kappa: Option<f64>,
    #[arg(long, value_enum, default_value_t = Engine::Bl)]
    engine: Engine,
    #[arg(long, value_enum, default_value_t = Sched::Adaptive)]
    schedule: Sched,
    /// Oracle calls per engine run.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenarios drawn by validation.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Opts {
    fn config(&self) -> RunConfig {
        RunConfig {
            epsilon: self.epsilon,
            delta: self.delta,
            rho: self.rho,
            kappa: self.kappa,
            engine: match self.engine {
                Engine::Bl => EngineKind::Bl,
                Engine::Ellipsoid => EngineKind::Ellipsoid,
            },
            schedule: match self.schedule {
                Sched::Fixed => ScheduleKind::Fixed,
                Sched::Adaptive => ScheduleKind::Adaptive,
            },
            budget: self.budget,
            seed: self.seed,
            threads: self.threads,
            samples: self.samples,
            out_dir: self.out_dir.clone(),
        }
    }
}

fn print_report(r: &ValidationReport) {
    println!(
        "scenarios {}  failures {}  failure rate {:.4}  budget violations {}",
        r.n_scenarios, r.n_failures, r.failure_rate, r.budget_violations
    );
    if let Some(c) = &r.cost {
        println!("cost min {:.4}  mean {:.4}  median {:.4}  max {:.4}", c.min, c.mean, c.median, c.max);
    }
    if let Some(b) = r.bound {
        println!("bound {b:.4}");
    }
    if let Some(e) = r.mean_relative_excess {
        println!("mean excess over clairvoyant {:.2}%", 100.0 * e);
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Solve { instance, opts } => {
            let loaded = load_instance(&instance)?;
            let rep = cmd_solve(&loaded, &opts.config()).context("solve failed")?;
            println!("{} after {} oracle calls", rep.summary.outcome, rep.summary.calls);
            if let Some(d) = rep.summary.delta_r {
                println!("delta_R = {d:e}");
            }
            Ok(rep.exit_code as u8)
        }
        Command::Minimize { instance, opts } => {
            let loaded = load_instance(&instance)?;
            let rep = cmd_minimize(&loaded, &opts.config()).context("minimize failed")?;
            match rep.summary.bound {
                Some(b) => println!("solved in {} steps, bound {b}", rep.summary.steps),
                None => println!("failed: no step produced a candidate"),
            }
            Ok(rep.exit_code as u8)
        }
        Command::Validate {
            instance,
            decision,
            opts,
        } => {
            let loaded = load_instance(&instance)?;
            let dec = load_decision(&decision)?;
            let rep = cmd_validate(&loaded, &dec, &opts.config()).context("validate failed")?;
            print_report(&rep);
            Ok(0)
        }
        Command::DemoInventory { opts } => {
            let rep = cmd_demo(&opts.config()).context("demo failed")?;
            match rep.minimize.summary.bound {
                Some(b) => println!("bisection bound {b}"),
                None => println!("bisection failed"),
            }
            if let Some(v) = &rep.validation {
                print_report(v);
            }
            Ok(rep.minimize.exit_code as u8)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSDM_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
