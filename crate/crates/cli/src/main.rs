use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tabcluster::config::SyntheticSpec;
use tabcluster::manifest::write_csv_with_manifest;
use tabcluster::report::{accuracy_table_markdown, rank_table_markdown};
use tabcluster::{report, run_benchmark, BenchError, BenchmarkConfig, RunOptions, RunSummary};

#[derive(Parser)]
#[command(name = "tabcluster", version, about = "Five-fold clustering benchmark for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark from scratch.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Stop after this many run units.
        #[arg(long, hide = true)]
        max_units: Option<usize>,
    },
    /// Continue a benchmark, skipping units already done.
    Resume {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, hide = true)]
        max_units: Option<usize>,
    },
    /// Rebuild the tables of a results directory.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
    /// Write a synthetic blobs CSV and its manifest.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        k: usize,
        /// Minimum center distance in units of the blob std.
        #[arg(long, default_value_t = 20.0)]
        sep: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        name: Option<String>,
    },
    /// Check a config and its datasets without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn print_summary(s: &RunSummary) {
    println!(
        "{} of {} units run this time; results in {}",
        s.executed,
        s.total_units,
        s.output_dir.display()
    );
    print!("{}", accuracy_table_markdown(&s.grid));
    if let Ok(t) = s.grid.rank_table() {
        println!();
        print!("{}", rank_table_markdown(&t));
    }
}

fn finish(s: RunSummary) -> Result<(), BenchError> {
    print_summary(&s);
    if !s.failed.is_empty() {
        return Err(BenchError::Failed(format!("{} unit(s) failed:\n  {}", s.failed.len(), s.failed.join("\n  "))));
    }
    if !s.missing.is_empty() {
        return Err(BenchError::Failed(format!("incomplete results: missing {}", s.missing.join(", "))));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run { config, max_units } => {
            let cfg = BenchmarkConfig::read(&config)?;
            finish(run_benchmark(&cfg, &RunOptions { resume: false, max_units })?)
        }
        Command::Resume { config, max_units } => {
            let cfg = BenchmarkConfig::read(&config)?;
            finish(run_benchmark(&cfg, &RunOptions { resume: true, max_units })?)
        }
        Command::Report { results } => {
            let grid = report(&results)?;
            print!("{}", accuracy_table_markdown(&grid));
            let t = grid.rank_table()?;
            println!();
            print!("{}", rank_table_markdown(&t));
            Ok(())
        }
        Command::GenSynth {
            out,
            n,
            dim,
            k,
            sep,
            seed,
            name,
        } => {
            let name = name.unwrap_or_else(|| {
                out.file_stem().map_or_else(|| "synthetic".into(), |s| s.to_string_lossy().into_owned())
            });
            let spec = SyntheticSpec {
                name,
                n,
                dim,
                k,
                separation: sep,
                sigma: 1.0,
                seed,
            };
            let ds = spec.generate().map_err(|e| BenchError::Config(e.to_string()))?;
            let manifest = write_csv_with_manifest(&ds, &out).map_err(BenchError::io(&out))?;
            println!("wrote {} and {}", out.display(), manifest.display());
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = BenchmarkConfig::read(&config)?;
            let methods = cfg.validate()?;
            cfg.threads()?;
            let datasets = cfg.load_datasets()?;
            let grid = cfg.grid();
            let units: usize = methods
                .iter()
                .map(|&m| tabcluster_core::eval::candidate_count(m, &grid) * tabcluster_core::eval::N_FOLDS)
                .sum::<usize>()
                * datasets.len();
            for ds in &datasets {
                println!("{}: N={}, d={}, K={}", ds.name, ds.n(), ds.dim(), ds.k);
            }
            println!("config ok: {} dataset(s), {} method(s), {units} run units", datasets.len(), methods.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
