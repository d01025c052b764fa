use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kanfc::checkpoint::Checkpoint;
use kanfc::data::{ingest_csv, write_csv, IngestOptions, PreparedData, Split, Target};
use kanfc::synth::{synthetic_weather, Climate};
use kanfc::train::evaluate_checkpoint;
use kanfc::ModelKind;
use kanfc_bench::config::{DatasetEntry, Training};
use kanfc_bench::report::{table_text, Units};
use kanfc_bench::{run_benchmark, BenchmarkConfig, CliOverrides};

#[derive(Parser)]
#[command(name = "kanfc", version, about = "Daily weather forecasting benchmark: KAN, TKAN and recurrent baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (city, target, model) job described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated model names, e.g. LSTM,KAN,TKAN-GELU.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        /// Comma-separated subset of T2M, PS, PREC.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Epoch budget for every model (patience is capped to it).
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write two synthetic city CSVs and a config that benchmarks them.
    Synth {
        #[arg(long, default_value = "synthetic")]
        out: PathBuf,
        #[arg(long, default_value_t = 5115)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a saved checkpoint on one split of a CSV file.
    Evaluate {
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "city")]
        city: String,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn parse_list<T: std::str::FromStr<Err = kanfc::Error>>(items: Option<Vec<String>>) -> kanfc::Result<Option<Vec<T>>> {
    items
        .map(|v| v.iter().map(|s| s.trim().parse()).collect())
        .transpose()
}

fn run(command: Command) -> kanfc::Result<bool> {
    match command {
        Command::Run {
            config,
            seed,
            models,
            targets,
            out,
            workers,
            epochs,
        } => {
            let mut cfg = BenchmarkConfig::load(&config)?;
            CliOverrides {
                seed,
                models: parse_list::<ModelKind>(models)?,
                targets: parse_list::<Target>(targets)?,
                out,
                workers,
                epochs,
            }
            .apply(&mut cfg);
            let summary = run_benchmark(&cfg)?;
            for path in summary.tables.iter().filter(|p| {
                p.extension().is_some_and(|e| e == "txt")
                    && !p.to_string_lossy().ends_with("_scaled.txt")
            }) {
                println!("{}", std::fs::read_to_string(path)?);
            }
            let failed = summary.failures();
            println!(
                "{} jobs, {failed} failed; results in {}",
                summary.jobs.len(),
                summary.out.display()
            );
            for job in summary.jobs.iter().filter(|j| j.status != "ok") {
                eprintln!("{} {} {}: {}", job.city, job.target, job.model, job.status);
            }
            Ok(failed == 0)
        }
        Command::Synth { out, days, seed } => {
            synth(&out, days, seed)?;
            println!("wrote {}", out.join("benchmark.json").display());
            Ok(true)
        }
        Command::Evaluate {
            checkpoint,
            data,
            city,
            split,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let series = ingest_csv(&data, &city, &IngestOptions::default())?;
            let c = &ckpt.config;
            let prepared = PreparedData::new(series, c.window, c.target, c.split, c.scaling)?;
            let eval = evaluate_checkpoint(&ckpt, &prepared, split.into())?;
            let title = format!("{} {city}", c.target);
            print!("{}", table_text(&title, std::slice::from_ref(&eval.report), Units::Physical));
            print!("{}", table_text(&title, std::slice::from_ref(&eval.report), Units::Scaled));
            Ok(true)
        }
    }
}

fn synth(out: &Path, days: usize, seed: u64) -> kanfc::Result<()> {
    std::fs::create_dir_all(out)?;
    let start = chrono_start();
    let cities = [
        (
            "Abidjan",
            Climate {
                mean_temp: 26.8,
                temp_amplitude: 1.8,
                mean_pressure: 100.9,
                rain_probability: 0.4,
            },
        ),
        (
            "Kigali",
            Climate {
                mean_temp: 20.6,
                temp_amplitude: 0.9,
                mean_pressure: 85.1,
                rain_probability: 0.25,
            },
        ),
    ];
    let mut datasets = Vec::new();
    for (i, (city, climate)) in cities.iter().enumerate() {
        let series = synthetic_weather(city, start, days, climate, seed + i as u64)?;
        let file = format!("{}.csv", city.to_lowercase());
        write_csv(&series, std::fs::File::create(out.join(&file))?)?;
        datasets.push(DatasetEntry {
            city: city.to_string(),
            path: PathBuf::from(file),
        });
    }
    let config = BenchmarkConfig {
        datasets,
        targets: Target::ALL.to_vec(),
        models: ModelKind::ALL.to_vec(),
        training: Training::default(),
        overrides: Default::default(),
        seed,
        out: PathBuf::from("results"),
        workers: None,
        missing: Default::default(),
        checkpoints: None,
    };
    std::fs::write(out.join("benchmark.json"), serde_json::to_string_pretty(&config)?)?;
    Ok(())
}

fn chrono_start() -> kanfc::data::NaiveDate {
    kanfc::data::NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
