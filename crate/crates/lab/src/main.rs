use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use lab::acceptance::{run_criterion, CRITERIA};
use lab::config::{ExperimentConfig, ExperimentId, FamilyGrid};
use lab::experiments::{run_experiment, verdict_rows, verdict_table};
use lab::report::{version, write_outputs, RunInfo};
use lab::thresholds::Thresholds;
use lab::{LabError, Result};
use nnwalk::classtest::TestId;

#[derive(Parser)]
#[command(name = "lab", version = env!("CARGO_PKG_VERSION"), about = "Run nnwalk experiments and the acceptance suite")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write <experiment>.csv, <experiment>.json and run_info.json.
    Run {
        experiment: ExperimentId,
        /// TOML config; missing keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides seed_base from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the acceptance suite, one PASS/FAIL line per criterion.
    Verify {
        /// Criterion numbers to run, e.g. --only 1,4,9.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        /// TOML threshold overrides.
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Print a verdict table for one boundary family as CSV.
    Classtable {
        /// sqrt_loglog, power_log, loglog, inverse_loglog, inverse_log_pow,
        /// or expr:<monotone>:<expression with {p}>.
        #[arg(long)]
        family: String,
        #[arg(long, value_delimiter = ',', required = true)]
        params: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [TestId::BesselUpper, TestId::WalkUpper])]
        test: Vec<TestId>,
        /// Bessel orders; walk tests use B = 2 nu + 1.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0])]
        nu: Vec<f64>,
    },
}

fn run(cmd: Cmd, threads: usize) -> Result<bool> {
    match cmd {
        Cmd::Run { experiment, config, seed, out } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::defaults(experiment),
            };
            if cfg.experiment != experiment {
                return Err(LabError::Config(format!("config is for {}, not {experiment}", cfg.experiment)));
            }
            if let Some(s) = seed {
                cfg.seed_base = s;
            }
            let start = Instant::now();
            let (report, table) = run_experiment(&cfg)?;
            let info = RunInfo { experiment, version: version(), runtime_seconds: start.elapsed().as_secs_f64(), threads };
            let files = write_outputs(&out, &report, &table, &info)?;
            for c in &report.checks {
                println!("{} {}: {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.condition);
            }
            println!("wrote {} and {}", files.csv.display(), files.json.display());
            Ok(report.pass)
        }
        Cmd::Verify { only, thresholds } => {
            let th = match thresholds {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|source| LabError::Io { path: p, source })?;
                    Thresholds::from_toml_str(&text)?
                }
                None => Thresholds::default(),
            };
            let ids: Vec<u32> = if only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { only };
            let mut all = true;
            for id in ids {
                let r = run_criterion(id, &th)?;
                all &= r.acceptable();
                println!("{}", r.line());
            }
            Ok(all)
        }
        Cmd::Classtable { family, params, test, nu } => {
            let rows = verdict_rows(&test, &[FamilyGrid { family, params }], &nu)?;
            print!("{}", verdict_table(&rows).to_csv()?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(k);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let threads = pool.current_num_threads();
    match pool.install(|| run(cli.cmd, threads)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
