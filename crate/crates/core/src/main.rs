use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};

use rdfl::scenario::{self, load_scenario, CliError};
use rdfl::verify::{self, Fault};

#[derive(Parser)]
#[command(name = "rdfl", version, about = "Ring-topology decentralized federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a scenario and write its metrics file.
    Run {
        /// Scenario file; repeat to run several.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics file, or a directory when several scenarios are given.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scenarios run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the ring entries and the untrusted routing table.
    Topology {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare closed-form and simulated per-round communication costs.
    BenchComm {
        #[arg(long, default_value_t = 2)]
        n_min: u64,
        #[arg(long, default_value_t = 16)]
        n_max: u64,
        /// Model size M in bytes.
        #[arg(long, default_value_t = 1)]
        model_bytes: u64,
        /// Gossip peer schedule seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite.
    Verify {
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    FedavgOrder,
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
            }
            std::fs::write(path, text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_one(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<String, CliError> {
    let sc = load_scenario(config)?;
    let run = scenario::run_scenario(&sc, seed)?;
    let out = out.or(sc.output.clone());
    write_or_print(&run.csv, out.as_deref())?;
    let json = serde_json::to_string(&run.summary).map_err(|e| CliError::Other(e.to_string()))?;
    Ok(match out {
        Some(path) => format!("{}: wrote {} {json}", config.display(), path.display()),
        None => String::new(),
    })
}

fn run(configs: &[PathBuf], seed: Option<u64>, out: Option<PathBuf>, jobs: usize) -> Result<(), CliError> {
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    if configs.len() == 1 {
        let msg = run_one(&configs[0], seed, out)?;
        if !msg.is_empty() {
            eprintln!("{msg}");
        }
        return Ok(());
    }
    let target = |config: &Path| -> Result<Option<PathBuf>, CliError> {
        match &out {
            Some(dir) => {
                let stem = config.file_stem().unwrap_or_default();
                Ok(Some(dir.join(stem).with_extension("csv")))
            }
            None => Ok(None),
        }
    };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<String, CliError>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(configs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = configs.get(i) else { break };
                let result = target(config).and_then(|path| {
                    if path.is_none() && load_scenario(config)?.output.is_none() {
                        return Err(CliError::Config(format!(
                            "{}: several scenarios need --out DIR or an output key",
                            config.display()
                        )));
                    }
                    run_one(config, seed, path)
                });
                results.lock().expect("results lock").push((i, result));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(i, _)| *i);
    let mut first_error = None;
    for (_, r) in results {
        match r {
            Ok(msg) => eprintln!("{msg}"),
            Err(e) => {
                eprintln!("error: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            configs,
            seed,
            out,
            jobs,
        } => run(&configs, seed, out, jobs),
        Command::Topology { config } => {
            print!("{}", scenario::cmd_topology(&load_scenario(&config)?)?);
            Ok(())
        }
        Command::BenchComm {
            n_min,
            n_max,
            model_bytes,
            seed,
            out,
        } => {
            let (csv, ok) = scenario::cmd_bench_comm(n_min, n_max, model_bytes, seed)?;
            write_or_print(&csv, out.as_deref())?;
            if ok {
                Ok(())
            } else {
                Err(CliError::Verification("simulated totals differ from the closed form".into()))
            }
        }
        Command::Verify { inject_fault } => {
            let fault = match inject_fault {
                Some(FaultArg::FedavgOrder) => Fault::FedavgOrder,
                None => Fault::None,
            };
            let results = verify::run_all(fault);
            for r in &results {
                println!("{}", r.line());
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} passed, {failed} failed", results.len() - failed);
            if failed == 0 {
                Ok(())
            } else {
                Err(CliError::Verification(format!("{failed} properties failed")))
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
