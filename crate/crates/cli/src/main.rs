use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pfdisc_cli::benchmark::BenchmarkName;
use pfdisc_cli::output::{save_baseline, save_comparison};
use pfdisc_cli::pipeline::to_rows;
use pfdisc_cli::{compare_dirs, generate_benchmark, run_baseline, run_experiment, save_csv, save_results};
use pfdisc_cli::{CliError, ExperimentConfig, Result};

#[derive(Debug, Parser)]
#[command(name = "pfdisc", version, about = "Discover governing equations from trajectory data")]
struct Cli {
    /// Worker threads (affects speed only, never results).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic benchmark dataset and its true coefficients.
    Generate {
        #[arg(long, conflicts_with = "config")]
        benchmark: Option<BenchmarkName>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run push-forward discovery as configured.
    Discover {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit only the finite-difference STLSQ baseline.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the estimates in two result directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { benchmark, config, seed, out } => {
            let (name, seed) = match (benchmark, config) {
                (Some(b), _) => (b, seed.unwrap_or(0)),
                (None, Some(path)) => {
                    let cfg = load_config(&path, seed, None)?;
                    let name = cfg.benchmark.ok_or_else(|| CliError::Config("config names no benchmark".into()))?;
                    (name, cfg.sub_seed(pfdisc_cli::config::streams::BENCHMARK))
                }
                (None, None) => return Err(CliError::Config("pass --benchmark or --config".into())),
            };
            let b = generate_benchmark(name, seed)?;
            std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            save_csv(&b.dataset, &out.join("dataset.csv"))?;
            save_csv(&b.clean, &out.join("clean.csv"))?;
            let truth = serde_json::json!({
                "benchmark": name,
                "seed": seed,
                "variables": b.library.variable_names(),
                "terms": b.library.term_labels(),
                "equations": b.truth.equations(&b.library),
                "truth": to_rows(&b.truth),
                "path_coefficients": b.path_coefficients.iter().map(to_rows).collect::<Vec<_>>(),
            });
            let path = out.join("truth.json");
            std::fs::write(&path, serde_json::to_string_pretty(&truth).expect("json") + "\n")
                .map_err(|e| CliError::io(&path, e))?;
            println!("wrote {} paths to {}", b.dataset.count(), out.display());
        }
        Command::Discover { config, seed, out } => {
            let cfg = load_config(&config, seed, out)?;
            let bundle = run_experiment(&cfg)?;
            let manifest = save_results(&bundle, &cfg.output_dir)?;
            let r = &bundle.report;
            println!("accepted {} of {} samples ({:.2}%)", r.accepted, r.prior_samples, 100.0 * r.acceptance_rate);
            for eq in &r.selected_equations {
                println!("  {eq}");
            }
            if let Some(rmse) = &r.rmse {
                println!("RMSE posterior mean {:.5}, baseline {:.5}", rmse.posterior_mean, rmse.baseline);
            }
            println!("wrote {} files to {}", manifest.files.len() + 1, cfg.output_dir.display());
        }
        Command::Baseline { config, seed, out } => {
            let cfg = load_config(&config, seed, out)?;
            let report = run_baseline(&cfg)?;
            save_baseline(&report, &cfg.output_dir)?;
            for eq in &report.baseline.equations {
                println!("  {eq}");
            }
            if let Some(r) = report.baseline.rmse {
                println!("RMSE {r:.5}");
            }
        }
        Command::Compare { a, b, out } => {
            let cmp = compare_dirs(&a, &b)?;
            print!("{}", cmp.table());
            if let Some(dir) = out {
                save_comparison(&cmp, &dir)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
