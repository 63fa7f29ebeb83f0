use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qclick_cli::run::SUMMARY_FILE;
use qclick_cli::scenarios::{self, CheckContext};
use qclick_cli::{exit, load_config, report, run_experiment, ConfigError, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "qclick", version, about = "Detector-click simulations for quantum particles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config or a built-in scenario.
    Run(RunArgs),
    /// Check a config and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Merge summary files into one report.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Also write report.csv here.
        #[arg(long, env = "QCLICK_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Built-in scenarios.
    Scenarios {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Overrides the seed of the config or scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, env = "QCLICK_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    List,
    /// Print the experiment config behind a scenario.
    Show { name: String },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(()) => exit::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("invalid configuration: {msg}");
            exit::VALIDATION
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            exit::RUNTIME
        }
    };
    ExitCode::from(code as u8)
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run(args) => run(args),
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("{}: ok ({} engine)", config.display(), cfg.engine);
            Ok(())
        }
        Command::Report { summaries, out } => {
            let r = report(&summaries).map_err(|e| Failure::Runtime(e.to_string()))?;
            print!("{}", r.to_text());
            if let Some(dir) = out {
                let csv = r.to_csv().map_err(|e| Failure::Runtime(e.to_string()))?;
                std::fs::create_dir_all(&dir)
                    .and_then(|_| std::fs::write(dir.join("report.csv"), csv))
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
            }
            Ok(())
        }
        Command::Scenarios { command } => {
            match command {
                ScenarioCommand::List => {
                    for s in scenarios::all() {
                        let kind = if s.config.is_some() { "run" } else { "check" };
                        println!("{:<26} {:>2}  {:<5}  {}", s.name, s.criterion, kind, s.description);
                    }
                }
                ScenarioCommand::Show { name } => {
                    let s = scenarios::find(&name).ok_or_else(|| Failure::Validation(format!("unknown scenario {name}")))?;
                    match s.config {
                        Some(cfg) => println!("{}", cfg().to_json()),
                        None => println!("{name} is a direct check without an experiment config"),
                    }
                }
            }
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    if let Some(name) = args.scenario {
        let s = scenarios::find(&name)
            .ok_or_else(|| Failure::Validation(format!("unknown scenario {name}; see `qclick scenarios list`")))?;
        let ctx = CheckContext {
            seed: args.seed,
            threads: args.threads,
            out_dir: args.out.clone(),
        };
        let r = s.run(&ctx)?;
        for m in &r.metrics {
            let verdict = if m.passed() { "pass" } else { "FAIL" };
            println!("{verdict}  {:<44} {:.6e}  (limit {:.3e})", m.name, m.value, m.limit);
        }
        if let Some(dir) = &args.out {
            std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(dir.join("check.json"), serde_json::to_vec_pretty(&r).expect("serializes")))
                .map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        return if r.passed() {
            Ok(())
        } else {
            Err(Failure::Runtime(format!("scenario {name} failed")))
        };
    }
    let path = args.config.expect("clap requires --config or --scenario");
    let mut cfg = load_config(&path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out_dir = args.out.or(cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("qclick-out"));
    let out = run_experiment(
        &cfg,
        &RunOptions {
            threads: args.threads,
            out_dir: Some(out_dir.clone()),
        },
    )?;
    let s = &out.summary;
    println!(
        "{} run: {} trajectories ({} aborted) in {:.2} s",
        s.engine, s.n_trajectories, s.aborted, s.wall_clock_s
    );
    if let Some(c) = &s.clicks {
        println!(
            "first click: n {}  mean {:.6}  stderr {:.6}  no-click fraction {:.6}",
            c.first_click.n,
            c.first_click.mean,
            c.first_click.stderr(),
            c.no_click_fraction
        );
    }
    if let Some(c) = &s.comparison {
        for (k, v) in c.metrics() {
            println!("{k:<32} {v:.6e}");
        }
    }
    println!("wrote {}", out_dir.join(SUMMARY_FILE).display());
    Ok(())
}
