use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use peakinf::field::stream_seed;
use peakinf::harness::{
    experiment_factor, preset, run_experiment, theory_summary, write_outputs, CellContext, ExperimentConfig,
};
use peakinf::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "peakinf", version, about = "Selective inference for peaks of smooth random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration; overrides the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed of every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of replicates per cell; disables adaptive stopping.
    #[arg(long, global = true)]
    reps: Option<u64>,
    /// Output directory (or file, for `simulate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump one simulated field of the first sweep cell as CSV.
    Simulate {
        #[arg(default_value = "exp1")]
        preset: String,
        /// Replicate index to draw.
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Run a Monte Carlo experiment and write pivots.csv, coverage.csv and rates.csv.
    Experiment { preset: String },
    /// Print closed-form quantities of every sweep cell.
    Theory {
        #[arg(default_value = "exp1")]
        preset: String,
    },
}

fn load(cli: &Cli, name: &str) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, name) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, "custom") => return Err(Error::Config("`custom` needs --config PATH".into())),
        (None, n) => preset(n)?,
    };
    if let Some(seed) = cli.seed {
        cfg.run.base_seed = seed;
    }
    if let Some(reps) = cli.reps {
        cfg.run.replicates = reps;
        cfg.run.target_conditioned = None;
        cfg.run.max_replicates = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cli: &Cli, name: &str, index: u64) -> Result<()> {
    let cfg = load(cli, name)?;
    let factor = experiment_factor(&cfg)?;
    let cell = cfg.cells()?.remove(0);
    let ctx = CellContext::new(&cfg, &factor, cell)?;
    let sample = ctx.simulator.sample(stream_seed(cfg.run.base_seed, index, peakinf::field::STREAM_NOISE))?;
    let csv = sample.to_csv();
    match &cli.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn experiment(cli: &Cli, name: &str) -> Result<()> {
    let cfg = load(cli, name)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.run.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    let result = run_experiment(&cfg)?;
    for path in write_outputs(&result, &out)? {
        println!("wrote {}", path.display());
    }
    let failed = result.failed_cells();
    if !failed.is_empty() {
        return Err(Error::RunFailed(format!("cells {failed:?} discarded more than 1% of replicates")));
    }
    Ok(())
}

fn theory(cli: &Cli, name: &str) -> Result<()> {
    let cfg = load(cli, name)?;
    for (cell, rows) in theory_summary(&cfg)? {
        for (key, value) in rows {
            println!("cell={cell} {key}={value:.12e}");
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let go = || match &cli.command {
        Command::Simulate { preset, index } => simulate(cli, preset, *index),
        Command::Experiment { preset } => experiment(cli, preset),
        Command::Theory { preset } => theory(cli, preset),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message={msg:?}", e.kind());
            ExitCode::FAILURE
        }
    }
}
