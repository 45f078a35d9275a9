//! `calibguide` command line.
//!
//! Failures print `{"code": ..., "message": ...}` on stderr and exit with
//! status 1 (2 for usage errors).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use calibguide::pipeline::calibrate;
use calibguide::planner::{search, PlanningState, SearchOutcome};
use calibguide::simharness::{compare_strategies, run_convergence, ExperimentConfig};
use calibguide::{CalibrationDataset, RobustKernel, SearchConfig};
use calibguide_service::{ErrorBody, ServeConfig, SessionState, SuggestRequest};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "calibguide",
    version,
    about = "Next-best-pose planning and stereo calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study of random versus planned captures (CSV).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Accepted for compatibility: reductions are always in trial order,
        /// so output never depends on thread count.
        #[arg(long)]
        deterministic_reduce: bool,
    },
    /// Calibration-scheme comparison table (CSV).
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stereo calibration of a corner dataset (JSON).
    Calibrate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `quadratic`, `huber` or `huber:<px>`.
        #[arg(long, default_value = "huber:1.0")]
        kernel: RobustKernel,
    },
    /// Next board pose for a planning state or a saved service session (JSON).
    NextPose {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Guidance service; `CALIBGUIDE_DATA_DIR` and `CALIBGUIDE_PORT` apply.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

/// Input of `next-pose`: the rig (with its current relative estimate), the
/// board, the poses of the views captured so far, and planner settings.
#[derive(Deserialize)]
struct PlanningInput {
    #[serde(flatten)]
    state: PlanningState,
    #[serde(default)]
    search: SearchConfig,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NextPoseInput {
    Planning(PlanningInput),
    Session(Box<SessionState>),
}

#[derive(Serialize)]
#[serde(untagged)]
enum NextPoseOutput {
    Planning(SearchOutcome),
    Session(calibguide_service::Suggestion),
}

struct Failure(ErrorBody);

impl From<calibguide::Error> for Failure {
    fn from(e: calibguide::Error) -> Self {
        Failure(ErrorBody {
            code: e.code().into(),
            message: e.to_string(),
        })
    }
}

impl From<calibguide_service::ServiceError> for Failure {
    fn from(e: calibguide_service::ServiceError) -> Self {
        Failure(e.body())
    }
}

fn failure(code: &str, message: impl Into<String>) -> Failure {
    Failure(ErrorBody {
        code: code.into(),
        message: message.into(),
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| failure("IO_ERROR", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| failure("INVALID_INPUT", format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| failure("IO_ERROR", format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    write(path, &text)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            deterministic_reduce: _,
        } => {
            let mut cfg: ExperimentConfig = read_json(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            write(&out, &run_convergence(&cfg)?.to_csv())
        }
        Command::Compare { config, out } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            write(&out, &compare_strategies(&cfg)?.to_csv())
        }
        Command::Calibrate {
            dataset,
            out,
            kernel,
        } => {
            let ds: CalibrationDataset = read_json(&dataset)?;
            write_json(&out, &calibrate(&ds, kernel)?)
        }
        Command::NextPose { session, out } => {
            let output = match read_json::<NextPoseInput>(&session)? {
                NextPoseInput::Planning(p) => {
                    p.search.validate()?;
                    p.state.rig.validate()?;
                    NextPoseOutput::Planning(search(&p.state, &p.search)?)
                }
                NextPoseInput::Session(s) => match s.suggest(&SuggestRequest::default())? {
                    calibguide_service::Event::Suggested { suggestion } => {
                        NextPoseOutput::Session(suggestion)
                    }
                    _ => unreachable!("suggest yields a suggestion"),
                },
            };
            write_json(&out, &output)
        }
        Command::Serve { port, data_dir } => {
            let mut cfg = ServeConfig::from_env()?;
            if let Some(p) = port {
                cfg.port = p;
            }
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            let rt =
                tokio::runtime::Runtime::new().map_err(|e| failure("IO_ERROR", e.to_string()))?;
            eprintln!(
                "calibguide: serving on port {} with data in {}",
                cfg.port,
                cfg.data_dir.display()
            );
            rt.block_on(calibguide_service::serve(cfg))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let body = ErrorBody {
                code: "USAGE".into(),
                message: e.to_string().trim().to_string(),
            };
            eprintln!("{}", serde_json::to_string(&body).unwrap());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(body)) => {
            eprintln!("{}", serde_json::to_string(&body).unwrap());
            ExitCode::FAILURE
        }
    }
}
