use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dppsgd::dpp::{DppSampler, ProjectionKernel};
use dppsgd::experiments::config::ExperimentKind;
use dppsgd::experiments::pipeline::{kernel_points, load_data, prepare_kernel};
use dppsgd::experiments::report::{self, Metadata, Timing};
use dppsgd::experiments::{convergence_study_on, variance_study_on, version, VERSION, ExperimentConfig, OutputFormat};
use dppsgd::rng::master_rng;
use dppsgd::{Error, Result};

const VARIANCE_HELP: &str = "\
CSV output: comment lines (# key=value) with the version, seed and the effective
configuration, then two tables separated by a blank line.

Points table:
  estimator            poisson | dpp
  p                    batch size
  replicates           Monte Carlo draws
  trace_cov            mean of ‖Ξ_A − Ξ_N‖² at θ* (data part)
  trace_cov_stderr     its Monte Carlo standard error
  mean_sq_norm         mean of ‖Ξ_A‖² at θ* (data part)
  mean_sq_norm_stderr  its Monte Carlo standard error
  exact_trace_cov      closed-form trace-covariance for the same kernel / rate
  clipped              true if a negative closed-form value was clipped to 0
  saturation_gap       ‖K/N − P‖₂ between the restricted kernel and its
                       saturation (dpp rows only)

Slopes table (OLS of log trace_cov on log p over p >= p_min):
  estimator, p_min, slope, slope_stderr, intercept, points

JSON output mirrors the tables under \"report\" with a \"metadata\" envelope.
With --out, the wall-clock duration is written to <out>.timing.json.";

const SGD_HELP: &str = "\
CSV output: comment lines with the version, seed and configuration, then one row
per (estimator, p, recorded iteration):
  estimator, p, t, budget (= t·p),
  grad_norm_mean, grad_norm_sem          ‖Ξ_N(θ_t)‖ with ridge term
  dist_to_opt_mean, dist_to_opt_sem      ‖θ_t − θ*‖
  objective_mean, objective_sem          regularized empirical risk
  test_error_mean, test_error_sem        held-out error, empty without test data
*_sem is the standard deviation of the mean over replicates (0 for one replicate).

--trajectories writes raw runs with columns
  estimator, p, replicate, t, budget, grad_norm, dist_to_opt, objective.";

const KERNEL_HELP: &str = "\
Builds the projection kernel for the first batch size in the configuration (or
--p) and writes the text artifact: a '#' comment line, a line 'n,p', then n rows
of p factor entries followed by the inclusion marginal.";

const SAMPLE_HELP: &str = "\
Prints one minibatch per line: the sampled item indices in increasing order,
separated by spaces.";

#[derive(Parser)]
#[command(name = "dppsgd", version = VERSION, about = "DPP minibatch sampling for SGD: experiments and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Trace-covariance of the estimators at θ* against the batch size.
    #[command(after_long_help = VARIANCE_HELP)]
    VarianceStudy(Common),
    /// Replicated SGD runs; mean curves against the budget.
    #[command(after_long_help = SGD_HELP)]
    SgdRun {
        #[command(flatten)]
        common: Common,
        /// Also write every trajectory to this CSV file.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Builds and persists a projection kernel.
    #[command(after_long_help = KERNEL_HELP)]
    KernelBuild {
        #[command(flatten)]
        common: Common,
        /// Kernel rank; defaults to the first configured batch size.
        #[arg(long)]
        p: Option<usize>,
    },
    /// Draws minibatches from a persisted kernel.
    #[command(after_long_help = SAMPLE_HELP)]
    Sample {
        /// Kernel artifact written by kernel-build.
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(c: &Common, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&c.config)?;
    cfg.kind = kind;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    if let Some(f) = c.format {
        cfg.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish_timing(cfg: &ExperimentConfig, command: &str, start: Instant) -> Result<()> {
    let timing = Timing {
        command: command.into(),
        version: version(),
        seed: cfg.seed,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    match &cfg.out {
        Some(p) => {
            let mut name = p.as_os_str().to_owned();
            name.push(".timing.json");
            let f = File::create(PathBuf::from(name))?;
            serde_json::to_writer_pretty(f, &timing).map_err(io::Error::from)?;
        }
        None => eprintln!("wall-clock: {:.3} s", timing.wall_clock_seconds),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    match cli.command {
        Command::VarianceStudy(c) => {
            let cfg = load_config(&c, ExperimentKind::VarianceStudy)?;
            let data = load_data(&cfg)?;
            let rep = variance_study_on(&data.train, &cfg)?;
            let meta = Metadata::new("variance-study", &cfg);
            let mut w = open_out(cfg.out.as_deref())?;
            report::write_variance(&mut w, &meta, &rep, cfg.format)?;
            w.flush()?;
            finish_timing(&cfg, "variance-study", start)
        }
        Command::SgdRun { common, trajectories } => {
            let cfg = load_config(&common, ExperimentKind::SgdRun)?;
            let data = load_data(&cfg)?;
            let rep = convergence_study_on(&data.train, data.test.as_ref(), &cfg)?;
            let meta = Metadata::new("sgd-run", &cfg);
            let mut w = open_out(cfg.out.as_deref())?;
            report::write_convergence(&mut w, &meta, &rep, cfg.format)?;
            w.flush()?;
            if let Some(path) = trajectories {
                let mut t = BufWriter::new(File::create(path)?);
                report::write_trajectories(&mut t, &meta, &rep)?;
                t.flush()?;
            }
            finish_timing(&cfg, "sgd-run", start)
        }
        Command::KernelBuild { common, p } => {
            let cfg = load_config(&common, ExperimentKind::KernelBuild)?;
            let data = load_data(&cfg)?;
            let pts = kernel_points(&data.train, cfg.kernel_space);
            let (_, pk) = prepare_kernel(&pts, p.unwrap_or(cfg.batch_sizes[0]), &cfg)?;
            let mut w = open_out(cfg.out.as_deref())?;
            pk.write(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Sample { kernel, seed, count, out } => {
            let f = File::open(&kernel).map_err(|e| Error::Config(format!("cannot open {}: {e}", kernel.display())))?;
            let pk = ProjectionKernel::read(BufReader::new(f))?;
            let mut rng = master_rng(seed);
            let mut sampler = DppSampler::new(&pk);
            let mut w = open_out(out.as_deref())?;
            for _ in 0..count {
                let mut items = sampler.sample(&mut rng)?.items;
                items.sort_unstable();
                let line: Vec<String> = items.iter().map(usize::to_string).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
