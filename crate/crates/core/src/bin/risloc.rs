use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use risloc::harness::{
    mean_crb, run_batch, sweep, write_jsonl, write_sweep_csv, CycleRecord, DictionaryBank, Engine, ScenarioConfig,
    SweepAxis, SweepRow, RUN_TAG,
};

#[derive(Parser)]
#[command(name = "risloc", version, about = "Multi-RIS hybrid near/far-field localization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the base seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the number of trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Use the far-field-only dictionary.
    #[arg(long)]
    ff_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Snr,
    Cycles,
    NumRis,
}

#[derive(Subcommand)]
enum Command {
    /// Run one batch of trials and write the cycle trace.
    Run(Common),
    /// Run one batch per axis value and write a CSV table.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Parse and validate a scenario file.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Serialize)]
struct TraceLine<'a> {
    trial: usize,
    seed: u64,
    record: &'a CycleRecord,
}

fn load(common: &Common) -> risloc::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_path(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if common.ff_only {
        cfg.ff_only_mode = true;
    }
    Ok(cfg)
}

fn run(common: &Common) -> risloc::Result<()> {
    let cfg = load(common)?;
    let engine = Engine::new(cfg.build()?, &DictionaryBank::new())?;
    let out = run_batch(&engine, cfg.seed, RUN_TAG, true);
    fs::create_dir_all(&common.out)?;

    let records = out.records.as_deref().unwrap_or_default();
    let lines: Vec<TraceLine> = out
        .trials
        .iter()
        .zip(records)
        .flat_map(|(t, recs)| recs.iter().map(move |r| TraceLine { trial: t.trial, seed: t.seed, record: r }))
        .collect();
    write_jsonl(BufWriter::new(File::create(common.out.join("trace.jsonl"))?), &lines)?;

    let row = SweepRow {
        axis_value: cfg.snr_db,
        rmse_m: out.rmse(),
        mean_crb: mean_crb(&out.trials),
        trials: out.trials.len() - out.failures(),
        seed: cfg.seed,
    };
    write_sweep_csv(File::create(common.out.join("summary.csv"))?, std::slice::from_ref(&row))?;
    for t in out.trials.iter().filter(|t| !t.succeeded()) {
        eprintln!("trial {} (seed {}) failed: {}", t.trial, t.seed, t.failure.as_deref().unwrap_or(""));
    }
    match row.rmse_m {
        Some(r) => println!("rmse_m = {r:.6} over {} trials", row.trials),
        None => println!("no successful trials"),
    }
    Ok(())
}

fn run_sweep(common: &Common, axis: Axis, values: &[f64]) -> risloc::Result<()> {
    let cfg = load(common)?;
    let (axis, name) = match axis {
        Axis::Snr => (SweepAxis::Snr, "snr"),
        Axis::Cycles => (SweepAxis::Cycles, "cycles"),
        Axis::NumRis => (SweepAxis::NumRis, "num-ris"),
    };
    let rows = sweep(&cfg, axis, values, &DictionaryBank::new())?;
    fs::create_dir_all(&common.out)?;
    let path = common.out.join(format!("sweep_{name}.csv"));
    write_sweep_csv(File::create(&path)?, &rows)?;
    for r in &rows {
        println!("{name} = {}: rmse_m = {:?}", r.axis_value, r.rmse_m);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => run(c),
        Command::Sweep { common, axis, values } => run_sweep(common, *axis, values),
        Command::ValidateConfig { config } => ScenarioConfig::from_path(config).and_then(|c| c.build()).map(|s| {
            println!(
                "ok: {} RIS ({} active), {} users, {} cycles, {} trials",
                s.config.ris.len(),
                s.ris_count(),
                s.users.len(),
                s.config.cycles,
                s.config.trials
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
