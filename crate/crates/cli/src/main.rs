use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgdns::sim::sweep::SweepConfig;
use sgdns::NetworkSpec;
use sgdns_cli::commands::{self, Failure};
use sgdns_cli::exit;
use sgdns_cli::server::{self, Session};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "sgdns", version, about = "Structured gossip overlay simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write events.jsonl, metrics.csv and summary.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Measure convergence rounds and message rates across network sizes.
    Sweep(SweepArgs),
    /// Serve the HTTP control API over one network.
    Serve {
        /// Start with a fresh network of this many dense nodes.
        #[arg(long, conflicts_with = "scenario")]
        n: Option<usize>,
        /// Start from a scenario; its events fire as rounds are stepped.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fanout of the unstructured comparison; 0 skips it.
    #[arg(long, default_value_t = 3)]
    baseline_fanout: usize,
    #[arg(long, default_value_t = 2000)]
    max_rounds: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
        } => commands::cmd_run(&scenario, seed, &out),
        Command::Sweep(a) => commands::cmd_sweep(
            &SweepConfig {
                sizes: a.sizes,
                trials: a.trials,
                seed: a.seed,
                baseline_fanout: (a.baseline_fanout > 0).then_some(a.baseline_fanout),
                max_rounds: a.max_rounds,
            },
            &a.out,
        ),
        Command::Serve {
            n,
            scenario,
            seed,
            bind,
        } => return serve(n, scenario, seed, &bind),
    };
    match result {
        Ok(report) => {
            println!("{}", report.line);
            ExitCode::from(report.code)
        }
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn serve(n: Option<usize>, scenario: Option<PathBuf>, seed: u64, bind: &str) -> ExitCode {
    let session = match (n, scenario) {
        (_, Some(path)) => commands::load_scenario(&path).and_then(|s| {
            Session::with_scenario(&s).map_err(|e| Failure {
                code: exit::VALIDATION,
                message: e.to_string(),
            })
        }),
        (Some(n), None) => {
            Session::with_network(NetworkSpec::dense(n, seed)).map_err(|e| Failure {
                code: exit::VALIDATION,
                message: e.to_string(),
            })
        }
        (None, None) => Ok(Session::default()),
    };
    let session = match session {
        Ok(s) => s,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return ExitCode::from(f.code);
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return ExitCode::from(exit::ENVIRONMENT);
        }
    };
    match runtime.block_on(server::serve(session, bind)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: serving on {bind}: {e}");
            ExitCode::from(exit::ENVIRONMENT)
        }
    }
}
