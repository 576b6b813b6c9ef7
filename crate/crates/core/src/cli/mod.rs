//! The `rwpf` command line: `simulate | filter | psi-bench | oracle | qmc-dump`.
//!
//! Configs are JSON, bulk tables are CSV with shortest round-trip float
//! formatting. Every output is a function of (config, seed) only; the
//! `wall_time_s` field of the JSON summaries is the sole exception.

pub mod bench;
pub mod config;
pub mod simulate;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lowdisc::{self, Randomization};
use crate::oracles;
use crate::smc;

pub use bench::{run_psi_bench, BenchResult};
pub use config::{BenchConfig, OracleConfig, RunConfig};
pub use simulate::{simulate, Dataset};

#[derive(Debug, Parser)]
#[command(name = "rwpf", version, about = "Random-weight particle filtering for scalar diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; affects speed only.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a latent path and noisy observations.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the particle filter on a simulated dataset.
    Filter {
        #[arg(long)]
        config: PathBuf,
        /// Dataset produced by `simulate` (default: <out>/dataset.json).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Paired variance benchmark of the ψ estimators.
    PsiBench {
        #[arg(long)]
        config: PathBuf,
    },
    /// Reference values (brute-force ψ, grid filter, Kalman filter).
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Emit a (randomized) low-discrepancy point set as CSV.
    QmcDump {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value = "none")]
        scheme: String,
    },
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::config("--threads", "must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn out_dir(common: &CommonArgs) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path.display().to_string(), e))?;
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Error + '_ {
    move |e| Error::io(format!("writing {}", path.display()), e)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { config } => cmd_simulate(config, &cli.common),
        Command::Filter { config, data } => cmd_filter(config, data.as_deref(), &cli.common),
        Command::PsiBench { config } => cmd_psi_bench(config, &cli.common),
        Command::Oracle { config } => cmd_oracle(config, &cli.common),
        Command::QmcDump { dim, count, scheme } => cmd_qmc_dump(*dim, *count, scheme, &cli.common),
    }
}

fn cmd_simulate(config: &Path, common: &CommonArgs) -> Result<()> {
    let cfg: RunConfig = config::load(config)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let data = simulate(&cfg, seed)?;
    let dir = out_dir(common)?;
    write_json(&dir.join("dataset.json"), &data)
}

#[derive(Serialize)]
struct FilterSummary<'a> {
    total_log_likelihood: f64,
    n_observations: usize,
    seed: u64,
    data_hash: &'a str,
    config: &'a RunConfig,
    wall_time_s: f64,
}

pub const FILTER_CSV_HEADER: &str =
    "step,time,ess,loglik_inc,resampled,mean_kappa,post_mean,post_var";

pub fn write_filter_csv<W: Write>(mut w: W, reports: &[smc::FilterStepReport]) -> io::Result<()> {
    writeln!(w, "{FILTER_CSV_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{},{:?},{:?},{:?}",
            r.step,
            r.time,
            r.ess,
            r.log_likelihood_increment,
            r.resampled as u8,
            r.mean_kappa,
            r.posterior_mean,
            r.posterior_var
        )?;
    }
    Ok(())
}

fn cmd_filter(config: &Path, data: Option<&Path>, common: &CommonArgs) -> Result<()> {
    let started = Instant::now();
    let cfg: RunConfig = config::load(config)?;
    let (model, _) = cfg.validate()?;
    let dir = out_dir(common)?;
    let data_path = data.map(Path::to_path_buf).unwrap_or_else(|| dir.join("dataset.json"));
    let dataset: Dataset = config::load(&data_path)?;
    let times: Vec<f64> = dataset.observations.iter().map(|o| o.time).collect();
    let expected = cfg.data_hash(&times, dataset.seed);
    if expected != dataset.config_hash || times != cfg.observations.resolve()? {
        return Err(Error::config(
            "dataset",
            format!(
                "{} was not generated from this config (hash {} vs {})",
                data_path.display(),
                dataset.config_hash,
                expected
            ),
        ));
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    let fcfg = cfg.filter_config(seed)?;
    let run = smc::run_filter(&model, &dataset.observations, &fcfg)?;

    let csv_path = dir.join("filter_steps.csv");
    let mut w = create(&csv_path)?;
    write_filter_csv(&mut w, &run.reports).map_err(io_err(&csv_path))?;
    w.flush().map_err(io_err(&csv_path))?;
    let mut echoed = cfg.clone();
    echoed.seed = seed;
    write_json(
        &dir.join("filter_summary.json"),
        &FilterSummary {
            total_log_likelihood: run.total_log_likelihood,
            n_observations: run.reports.len(),
            seed,
            data_hash: &dataset.config_hash,
            config: &echoed,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    )
}

#[derive(Serialize)]
struct BenchSummary<'a> {
    config: &'a BenchConfig,
    config_hash: String,
    summaries: &'a [bench::ModeSummary],
    ratios: &'a [bench::RatioSummary],
    wall_time_s: f64,
}

pub const BENCH_CSV_HEADER: &str = "mode,M,rep,kappa,value,n_queries,seed";

fn cmd_psi_bench(config: &Path, common: &CommonArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg: BenchConfig = config::load(config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let result = run_psi_bench(&cfg)?;
    let dir = out_dir(common)?;
    let csv_path = dir.join("psi_bench.csv");
    let mut w = create(&csv_path)?;
    let werr = io_err(&csv_path);
    writeln!(w, "{BENCH_CSV_HEADER}").map_err(&werr)?;
    for r in &result.records {
        writeln!(
            w,
            "{},{},{},{},{:?},{},{}",
            r.mode, r.m, r.rep, r.kappa, r.value, r.n_queries, r.seed
        )
        .map_err(&werr)?;
    }
    w.flush().map_err(&werr)?;

    if let Some(rep) = cfg.dump_skeleton_rep {
        let model = cfg.validate()?;
        let m = cfg.inner_points[0];
        let seed = bench::replication_seed(cfg.seed, 0, rep);
        let runs = bench::run_replication(&cfg, &model, m, seed)?;
        let path = dir.join("skeleton.csv");
        let mut w = create(&path)?;
        runs[0].1.write_csv(&mut w).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))?;
    }

    write_json(
        &dir.join("psi_bench_summary.json"),
        &BenchSummary {
            config: &cfg,
            config_hash: config::sha256_json(&cfg),
            summaries: &result.summaries,
            ratios: &result.ratios,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct OracleOutput {
    pub value: f64,
    pub se: f64,
    pub settings: OracleConfig,
}

pub fn run_oracle(cfg: &OracleConfig) -> Result<OracleOutput> {
    let (value, se) = match cfg {
        OracleConfig::Psi {
            model,
            x_a,
            x_b,
            a,
            b,
            n_steps,
            n_paths,
            seed,
        } => {
            let m = model.build().map_err(|e| Error::config("model", e.to_string()))?;
            let r = oracles::psi_bruteforce(&m, *x_a, *x_b, *a, *b, *n_steps, *n_paths, *seed)?;
            (r.mean, r.se)
        }
        OracleConfig::GridFilter {
            model,
            x0,
            sigma,
            observations,
            grid,
        } => {
            let m = model.build().map_err(|e| Error::config("model", e.to_string()))?;
            let r = oracles::grid_filter(&m, *x0, observations, *sigma, grid)?;
            (r.total_log_likelihood, 0.0)
        }
        OracleConfig::Kalman {
            x0,
            sigma,
            observations,
        } => (oracles::kalman_filter(*x0, observations, *sigma)?.total_log_likelihood, 0.0),
    };
    Ok(OracleOutput {
        value,
        se,
        settings: cfg.clone(),
    })
}

fn cmd_oracle(config: &Path, common: &CommonArgs) -> Result<()> {
    let mut cfg: OracleConfig = config::load(config)?;
    if let (Some(s), OracleConfig::Psi { seed, .. }) = (common.seed, &mut cfg) {
        *seed = s;
    }
    let out = run_oracle(&cfg)?;
    let dir = out_dir(common)?;
    write_json(&dir.join("oracle.json"), &out)
}

fn cmd_qmc_dump(dim: usize, count: usize, scheme: &str, common: &CommonArgs) -> Result<()> {
    let scheme: Randomization = scheme.parse()?;
    let seed = common.seed.unwrap_or(0);
    let base = lowdisc::generate_base(dim, count)?;
    let ps = lowdisc::randomize(&base, scheme, seed)?;
    match &common.out {
        Some(_) => {
            let path = out_dir(common)?.join("qmc.csv");
            let mut w = create(&path)?;
            ps.write_csv(&mut w).map_err(io_err(&path))?;
            w.flush().map_err(io_err(&path))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            ps.write_csv(&mut lock)
                .map_err(|e| Error::io("writing stdout", e))
        }
    }
}
