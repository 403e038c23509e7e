//! Library side of the `tracepursuit` command. Predictor indices are
//! 1-based on the command line and in every report.

pub mod error;
pub mod ingest;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use trace_pursuit::{
    default_k_max, ftp_run, htp_run, run_experiment, slice_response, stp_run, trace_test,
    Algorithm, CenteredSample, Dataset, Generator, Method, Model, PredictorDist, SimDesign,
    StpConfig,
};

pub use error::CliError;
pub use ingest::{export_csv, ingest_csv, read_csv, write_csv};
use report::{BenchOut, DataSummary, Outcome, Record, ScreenOut, SelectOut, TestOut};

/// Responses with at most this many distinct values are sliced by value.
pub const DISCRETE_LIMIT: usize = 10;

#[derive(Parser, Debug)]
#[command(
    name = "tracepursuit",
    version,
    about = "Model-free variable selection by trace pursuit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Select predictors with HTP (default) or STP.
    Select {
        #[command(flatten)]
        opts: Options,
        #[arg(long, default_value = "htp", value_parser = parse_select_algorithm)]
        algorithm: Algorithm,
    },
    /// Forward screening path with BIC values and the chosen prefix.
    Screen {
        #[command(flatten)]
        opts: Options,
        /// Path length (default min(p, n - slices - 2)).
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Single conditional independence test of a candidate given a set.
    Test {
        #[command(flatten)]
        opts: Options,
        /// Comma-separated conditioning set, e.g. "1,4".
        #[arg(long, default_value = "")]
        set: String,
        #[arg(long)]
        candidate: usize,
    },
    /// Repeated simulation with UF/CF/OF/MS summaries.
    Bench {
        #[command(flatten)]
        opts: Options,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value = "htp")]
        algorithm: Algorithm,
    },
    /// Write one simulated dataset to CSV.
    Export {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_select_algorithm(s: &str) -> Result<Algorithm, String> {
    match s.parse::<Algorithm>() {
        Ok(Algorithm::Ftp) => {
            Err("select runs htp or stp; use `screen` for the forward path".into())
        }
        Ok(a) => Ok(a),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args, Debug, Clone)]
pub struct Options {
    #[arg(long, default_value = "dr")]
    pub method: Method,
    /// Test level (default 0.1 / p).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Slices for continuous responses.
    #[arg(long, default_value_t = 4)]
    pub slices: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file with a `y` column; without it data are simulated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add wall-clock timings to json-lines records.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SimArgs {
    /// Benchmark model: 1, 2 or 3.
    #[arg(long)]
    pub model: Option<Model>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// normal, uniform, exponential or geometric.
    #[arg(long)]
    pub dist: Option<PredictorDist>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
}

impl SimArgs {
    fn any(&self) -> bool {
        self.model.is_some()
            || self.n.is_some()
            || self.p.is_some()
            || self.rho.is_some()
            || self.dist.is_some()
            || self.sigma.is_some()
    }

    fn design(&self, seed: u64, h_count: usize) -> SimDesign {
        let mut d = SimDesign::new(
            self.model.unwrap_or(Model::I),
            self.n.unwrap_or(300),
            self.p.unwrap_or(10),
        )
        .with_rho(self.rho.unwrap_or(0.0))
        .with_dist(self.dist.unwrap_or(PredictorDist::Normal))
        .with_seed(seed);
        if let Some(s) = self.sigma {
            d.noise_sd = s;
        }
        d.h_count = h_count;
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Table,
    JsonLines,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Select,
    Screen,
    Test,
    Bench,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Csv(PathBuf),
    Simulated(SimDesign),
}

/// Fully resolved run configuration, echoed in json-lines records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub method: Method,
    pub source: Source,
    pub h_count: usize,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub format: Format,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub timings: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    /// 1-based conditioning set for `test`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<Vec<usize>>,
    /// 1-based candidate for `test`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<usize>,
}

/// What `main` should do after parsing.
#[derive(Debug)]
pub enum Plan {
    Run(Box<RunConfig>),
    Export { design: SimDesign, out: PathBuf },
}

fn parse_index_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .ok()
                .filter(|&v| v >= 1)
                .ok_or_else(|| CliError::Usage(format!("'{t}' is not a 1-based predictor index")))
        })
        .collect()
}

impl Plan {
    pub fn from_cli(cli: Cli) -> Result<Plan, CliError> {
        let (kind, opts, algorithm, reps, k_max, set, candidate) = match cli.command {
            Command::Export { sim, seed, out } => {
                let design = sim.design(seed, 4);
                design.validate()?;
                return Ok(Plan::Export { design, out });
            }
            Command::Select { opts, algorithm } => (
                CommandKind::Select,
                opts,
                Some(algorithm),
                None,
                None,
                None,
                None,
            ),
            Command::Screen { opts, k_max } => {
                (CommandKind::Screen, opts, None, None, k_max, None, None)
            }
            Command::Test {
                opts,
                set,
                candidate,
            } => {
                if candidate == 0 {
                    return Err(CliError::Usage("--candidate is 1-based".into()));
                }
                let set = parse_index_list(&set)?;
                let mut seen = set.clone();
                seen.sort_unstable();
                seen.dedup();
                if seen.len() != set.len() {
                    return Err(CliError::Usage("--set lists a predictor twice".into()));
                }
                if set.contains(&candidate) {
                    return Err(CliError::Usage(format!(
                        "candidate {candidate} is already in --set"
                    )));
                }
                (
                    CommandKind::Test,
                    opts,
                    None,
                    None,
                    None,
                    Some(set),
                    Some(candidate),
                )
            }
            Command::Bench {
                opts,
                reps,
                algorithm,
            } => (
                CommandKind::Bench,
                opts,
                Some(algorithm),
                Some(reps),
                None,
                None,
                None,
            ),
        };
        if let Some(a) = opts.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(CliError::Usage(format!(
                    "--alpha must lie in (0, 1), got {a}"
                )));
            }
        }
        let source = match (&opts.input, kind) {
            (Some(_), CommandKind::Bench) => {
                return Err(CliError::Usage(
                    "bench simulates its data; drop --input".into(),
                ))
            }
            (Some(_), _) if opts.sim.any() => {
                return Err(CliError::Usage(
                    "give either --input or simulation flags (--model, --n, ...), not both".into(),
                ))
            }
            (Some(path), _) => Source::Csv(path.clone()),
            (None, _) => {
                let d = opts.sim.design(opts.seed, opts.slices);
                d.validate()?;
                Source::Simulated(d)
            }
        };
        Ok(Plan::Run(Box::new(RunConfig {
            command: kind,
            method: opts.method,
            source,
            h_count: opts.slices,
            alpha: opts.alpha,
            seed: opts.seed,
            format: opts.format,
            out: opts.out,
            timings: opts.timings,
            algorithm,
            reps,
            k_max,
            set,
            candidate,
        })))
    }
}

/// Loads or simulates the dataset named by the configuration.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, DataSummary), CliError> {
    match &cfg.source {
        Source::Csv(path) => {
            let l = ingest_csv(path)?;
            let summary = DataSummary {
                n: l.data.n(),
                p: l.data.p(),
                names: l.names,
            };
            Ok((l.data, summary))
        }
        Source::Simulated(design) => {
            let d = Generator::new(design.clone())?.replicate(0);
            let summary = DataSummary {
                n: d.n(),
                p: d.p(),
                names: (1..=d.p()).map(|j| format!("x{j}")).collect(),
            };
            Ok((d, summary))
        }
    }
}

/// Continuous responses get `h_count` equal-frequency slices; responses with
/// at most [`DISCRETE_LIMIT`] distinct values get one slice per value.
pub fn prepare(data: &Dataset, h_count: usize) -> Result<CenteredSample, CliError> {
    let mut ys = data.y().to_vec();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let slices = if ys.len() <= DISCRETE_LIMIT {
        slice_response(data.y(), ys.len(), true)?
    } else {
        slice_response(data.y(), h_count, false)?
    };
    Ok(CenteredSample::new(data, slices)?)
}

fn execute(cfg: &RunConfig) -> Result<(Outcome, Option<DataSummary>), CliError> {
    if cfg.command == CommandKind::Bench {
        let Source::Simulated(design) = &cfg.source else {
            return Err(CliError::Usage("bench needs a simulated design".into()));
        };
        let algorithm = cfg.algorithm.unwrap_or(Algorithm::Htp);
        let reps = cfg.reps.unwrap_or(100);
        let r = run_experiment(design, algorithm, cfg.method, reps, cfg.alpha)?;
        return Ok((Outcome::Bench(BenchOut::new(&r, cfg.alpha)), None));
    }

    let (data, summary) = load_data(cfg)?;
    let sample = prepare(&data, cfg.h_count)?;
    let (n, p) = (data.n(), data.p());
    let h = sample.slices().h_count();
    let alpha = cfg.alpha.unwrap_or(0.1 / p as f64);
    let outcome = match cfg.command {
        CommandKind::Select => {
            let stp = StpConfig::new(cfg.method, n, p, h).with_alpha(alpha);
            let algorithm = cfg.algorithm.unwrap_or(Algorithm::Htp);
            let report = if algorithm == Algorithm::Stp {
                let universe: Vec<usize> = (0..p).collect();
                stp_run(&sample, &stp, &universe)?
            } else {
                htp_run(&sample, &stp)?.0
            };
            Outcome::Select(SelectOut::new(algorithm, alpha, &report))
        }
        CommandKind::Screen => {
            let k_max = cfg.k_max.unwrap_or_else(|| default_k_max(n, p, h));
            let path = ftp_run(&sample, cfg.method, k_max)?;
            Outcome::Screen(ScreenOut::new(&path))
        }
        CommandKind::Test => {
            let given = cfg.set.as_deref().unwrap_or(&[]);
            let candidate = cfg.candidate.unwrap_or(1);
            if let Some(&index) = given.iter().chain([&candidate]).find(|&&k| k > p) {
                return Err(CliError::IndexOutOfRange { index, p });
            }
            let set: Vec<usize> = given.iter().map(|j| j - 1).collect();
            let j = candidate - 1;
            let t = trace_test(cfg.method, &sample, &set, j, alpha)?;
            Outcome::Test(TestOut::new(&t, alpha))
        }
        CommandKind::Bench => unreachable!("handled above"),
    };
    Ok((outcome, Some(summary)))
}

/// Runs the configured command and writes its report to `out`.
pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let start = Instant::now();
    let (outcome, data) = execute(cfg)?;
    let elapsed = start.elapsed();
    let io = |e: std::io::Error| CliError::Io {
        path: "<output>".into(),
        message: e.to_string(),
    };
    match cfg.format {
        Format::JsonLines => {
            let rec = Record {
                schema_version: report::SCHEMA_VERSION,
                command: cfg.command,
                config: cfg,
                data: data.as_ref(),
                result: &outcome,
                timings_ms: cfg.timings.then_some(elapsed.as_secs_f64() * 1e3),
            };
            let line = serde_json::to_string(&rec).map_err(|e| CliError::Csv(e.to_string()))?;
            writeln!(out, "{line}").map_err(io)?;
        }
        Format::Table => report::write_table(&outcome, data.as_ref(), out).map_err(io)?,
        Format::Csv => report::write_csv(&outcome, out)?,
    }
    out.flush().map_err(io)
}

/// Machine-readable error record for json-lines output.
pub fn error_record(command: Option<CommandKind>, e: &CliError) -> String {
    serde_json::json!({
        "schema_version": report::SCHEMA_VERSION,
        "command": command,
        "error": {
            "category": e.category(),
            "message": e.to_string(),
            "hint": e.hint(),
        }
    })
    .to_string()
}
