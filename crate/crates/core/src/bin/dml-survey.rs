use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dml_survey::data::ObservedData;
use dml_survey::estimators::EstimatorId;
use dml_survey::harness::{estimate_external, nuisance_rate_probe, run_scenario, ProbeConfig, RunConfig};
use dml_survey::nuisance::{BoostParams, LearnerSpec};
use dml_survey::popgen::ScenarioSpec;
use dml_survey::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dml-survey",
    version,
    about = "Combine a cluster probability sample with a nonprobability sample"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Learner {
    Parametric,
    Boosted,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo study of one scenario.
    Simulate {
        /// Built-in scenario 1-6, or a TOML config file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated estimator ids, e.g. HT,DR1,DR2.gbm5.
        #[arg(long)]
        estimators: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Oracle errors of the nuisance learners as M grows.
    ProbeRates {
        #[arg(long)]
        scenario: u8,
        #[arg(long, value_delimiter = ',', default_value = "50,100,150,300")]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Learner::Parametric)]
        learner: Learner,
    },
    /// Apply the estimators to external samples.
    Estimate {
        #[arg(long)]
        sample_a: PathBuf,
        #[arg(long)]
        sample_b: PathBuf,
        /// TOML config; must set population_size.
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_scenario(arg: &str) -> Result<RunConfig> {
    match arg.parse::<u8>() {
        Ok(id) => RunConfig::preset(id),
        Err(_) => RunConfig::from_file(arg),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            reps,
            seed,
            out,
            estimators,
            k,
            delta,
            groups,
        } => {
            let mut cfg = load_scenario(&scenario)?;
            if let Some(v) = reps {
                cfg.reps = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = estimators {
                cfg.estimators = EstimatorId::parse_list(&v)?;
            }
            if let Some(v) = k {
                cfg.scenario.folds = v;
            }
            if let Some(v) = delta {
                cfg.scenario.delta = v;
            }
            if let Some(v) = groups {
                cfg.scenario.groups = v;
            }
            if out.is_some() {
                cfg.out = out;
            }
            let output = run_scenario(&cfg)?;
            print!("{}", dml_survey::harness::format_table(&output.summary));
            if !output.failures.is_empty() {
                eprintln!("{} of {} replications failed", output.failures.len(), cfg.reps);
            }
            if let Some(dir) = &cfg.out {
                output.write(dir)?;
                eprintln!("wrote {}", dir.display());
            }
        }
        Command::ProbeRates {
            scenario,
            grid,
            reps,
            seed,
            learner,
        } => {
            let learner = match learner {
                Learner::Parametric => LearnerSpec::parametric(),
                Learner::Boosted => LearnerSpec::boosted(BoostParams::default()),
            };
            let mut cfg = ProbeConfig::new(ScenarioSpec::preset(scenario)?, learner);
            cfg.grid = grid;
            cfg.reps = reps;
            cfg.seed = seed;
            print!("{}", nuisance_rate_probe(&cfg)?.to_table());
        }
        Command::Estimate {
            sample_a,
            sample_b,
            config,
        } => {
            let text =
                std::fs::read_to_string(&config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let file: dml_survey::harness::ConfigFile =
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let n = file
                .population_size
                .ok_or_else(|| Error::Config("estimate needs population_size in the config".into()))?;
            let cfg = file.into_config()?;
            let data = ObservedData::read_csv(&sample_a, &sample_b, n)?;
            let (results, _) = estimate_external(&data, &cfg)?;
            println!("estimator,point,se,lo,hi");
            for r in results {
                let (se, lo, hi) = match (r.se, r.ci()) {
                    (Some(s), Some((lo, hi))) => (s.to_string(), lo.to_string(), hi.to_string()),
                    _ => Default::default(),
                };
                println!("{},{},{se},{lo},{hi}", r.id, r.point);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
