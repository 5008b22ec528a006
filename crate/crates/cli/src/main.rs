use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meanfield_cli::config::{self, Experiment};
use meanfield_cli::run::{execute, Failure, Staging, Verb, BUILD};
use meanfield_cli::verify;

#[derive(Parser)]
#[command(name = "meanfield", version = BUILD, about = "Mean field equilibria and finite-population deviation sweeps")]
struct Cli {
    #[command(subcommand)]
    verb: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certificate, equilibrium, deviation sweep and decay chart.
    Run(Common),
    /// Compare oracle values with Monte Carlo estimates on a discrete model.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Test hook: pair each exact value with the estimate at the wrong pinned state.
        #[arg(long, hide = true)]
        seed_mismatch: bool,
    },
    /// Solve for the equilibrium only.
    Mfe(Common),
    /// Dump one population realization under the equilibrium.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(Experiment, PathBuf, usize), Failure> {
        let mut exp = config::load(&self.config).map_err(Failure::Config)?;
        if let Some(s) = self.seed {
            exp.set_seed(s);
        }
        let out = self
            .out
            .clone()
            .or_else(|| exp.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let workers = self
            .workers
            .or(exp.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if workers == 0 {
            return Err(Failure::Runtime("--workers must be at least 1".into()));
        }
        Ok((exp, out, workers))
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn run_verify(common: &Common, seed_mismatch: bool) -> Result<(), Failure> {
    let (exp, out, workers) = common.load()?;
    let v = exp.verify.clone().ok_or_else(|| {
        Failure::Config(config::ConfigError {
            path: exp.path.clone(),
            line: None,
            message: "verify needs a [verify] section and a discrete model".into(),
        })
    })?;
    let config::Model::Discrete(model) = &exp.model else {
        unreachable!("[verify] is only accepted with a discrete model")
    };
    let staging = Staging::new(&out)?;
    let result = pool(workers)?.install(|| -> Result<(), Failure> {
        let checks = verify::checks(model, &v, exp.seed, seed_mismatch)?;
        verify::print_table(&checks, &mut std::io::stdout())?;
        verify::write_csv(&checks, exp.seed, &staging.path("verify.csv"))?;
        let mut failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.key()).collect();
        failed.dedup();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Disagreement(failed))
        }
    });
    match result {
        // The table is kept even on disagreement; it is the evidence.
        Ok(()) | Err(Failure::Disagreement(_)) => {
            staging.commit()?;
        }
        Err(_) => staging.abandon(),
    }
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.verb {
        Command::Verify {
            common,
            seed_mismatch,
        } => run_verify(common, *seed_mismatch),
        Command::Run(c) | Command::Mfe(c) | Command::Simulate(c) => {
            let verb = match cli.verb {
                Command::Run(_) => Verb::Run,
                Command::Mfe(_) => Verb::Mfe,
                _ => Verb::Simulate,
            };
            c.load().and_then(|(exp, out, workers)| {
                let files =
                    pool(workers)?.install(|| execute(&exp, verb, &out, &mut std::io::stderr()))?;
                for f in files {
                    println!("{}", f.display());
                }
                Ok(())
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("meanfield: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
