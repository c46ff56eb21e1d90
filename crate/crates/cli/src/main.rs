use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trials::data::{gen_synthetic_universe, save_price_table, CsvSchema, Period};
use trials::env::write_trajectory;
use trials::harness::{emit_summary, evaluate_snapshot, load_synthetic_spec, run_experiment, ExperimentConfig};
use trials::Result;

#[derive(Parser)]
#[command(name = "trials", version, about = "Joint pair selection and trading experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (subset, seed, method) cell of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write a synthetic price universe to CSV.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "long")]
        schema: CsvSchema,
    },
    /// Re-evaluate a saved snapshot on one period of a price panel.
    Eval {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        period: Period,
        #[arg(long, default_value = "long")]
        schema: CsvSchema,
        /// Optional trajectory CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Aggregate a results directory into summary.md and summary.csv.
    Report { dir: PathBuf },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, jobs } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = run_experiment(&cfg, jobs)?;
            println!("{}", dir.display());
        }
        Command::Synth { spec, out, schema } => {
            let spec = load_synthetic_spec(&spec)?;
            let table = gen_synthetic_universe(&spec)?;
            save_price_table(&table, &out, schema)?;
            log::info!("{} assets x {} days -> {}", table.n_assets(), table.n_days(), out.display());
        }
        Command::Eval {
            snapshot,
            data,
            period,
            schema,
            trajectory,
        } => {
            let report = evaluate_snapshot(&snapshot, &data, schema, period)?;
            if let Some(path) = trajectory {
                write_trajectory(&path, &report.trajectory)?;
            }
            let m = &report.metrics;
            println!(
                "pair=({},{}) prob={:.4} profit={:.6} sr={:.4} ar={:.4} mdd={:.4} av={:.4} ed={:.6}",
                report.pair.i, report.pair.j, report.option_prob, report.profit, m.sr, m.ar, m.mdd, m.av, m.ed
            );
        }
        Command::Report { dir } => {
            let (md, csv) = emit_summary(&dir)?;
            println!("{}\n{}", md.display(), csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
