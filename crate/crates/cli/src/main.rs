use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use secirs::neuralphase::load_checkpoint;
use secirs_cli::commands::{gen_data, train_from_dir};
use secirs_cli::experiments::{timing_csv, validate_csv};
use secirs_cli::{bench_time, sweep, validate_mc, ExperimentConfig, Networks, SweepVar};

#[derive(Parser)]
#[command(name = "secirs", version, about = "Secrecy outage experiments for IRS-assisted MIMOME links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (CSV or checkpoint) or directory (gen-data).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    mc_draws: Option<u64>,
    /// Trained network; repeat for several IRS sizes.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training and validation datasets.
    GenData(Common),
    /// Train a phase network on a generated dataset directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
    },
    /// Outage versus IRS size.
    SweepNs(Common),
    /// Outage versus SNR.
    SweepSnr(Common),
    /// Outage versus secrecy rate.
    SweepRs(Common),
    /// Single-threaded solve times versus IRS size.
    BenchTime(Common),
    /// Closed-form outage against Monte Carlo.
    ValidateMc(Common),
}

fn load_config(common: &Common, default: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            if !text.lines().any(|l| l.trim_start().starts_with("sweep.variable")) {
                cfg.sweep_var = default.sweep_var;
                if !text.lines().any(|l| l.trim_start().starts_with("sweep.grid")) {
                    cfg.grid = default.grid;
                }
            }
            cfg
        }
        None => default,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(r) = common.realizations {
        cfg.realizations = r;
    }
    if let Some(d) = common.mc_draws {
        cfg.mc_draws = d;
        cfg.validate_mc_draws = d;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn networks(paths: &[PathBuf]) -> Result<Networks> {
    let mut nets = Networks::new();
    for p in paths {
        let ckpt = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
        nets.insert(ckpt.model);
    }
    Ok(nets)
}

fn emit(cfg: &ExperimentConfig, text: &str) -> Result<()> {
    match &cfg.output {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run_sweep(common: &Common, var: SweepVar) -> Result<()> {
    let cfg = load_config(common, ExperimentConfig::for_sweep(var))?;
    if cfg.sweep_var != var {
        bail!("config sweeps {} but the command sweeps {}", cfg.sweep_var.as_str(), var.as_str());
    }
    let rows = sweep(&cfg, &networks(&common.checkpoint)?)?;
    emit(&cfg, &secirs_cli::experiments::sweep_csv(&rows))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(common) => {
            let cfg = load_config(&common, ExperimentConfig::default())?;
            let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("data"));
            gen_data(&cfg, &dir)?;
            eprintln!(
                "wrote {} training and {} validation samples to {}",
                cfg.train.train_size,
                cfg.train.val_size,
                dir.display()
            );
        }
        Command::Train { common, data } => {
            let cfg = load_config(&common, ExperimentConfig::default())?;
            let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("model.irsn"));
            let outcome = train_from_dir(&cfg, &data, &out)?;
            let meta = &outcome.checkpoint.meta;
            eprintln!(
                "best validation loss {} at epoch {} of {}; saved {}",
                meta.best_val_loss,
                meta.best_epoch,
                meta.epochs_run,
                out.display()
            );
        }
        Command::SweepNs(common) => run_sweep(&common, SweepVar::Ns)?,
        Command::SweepSnr(common) => run_sweep(&common, SweepVar::SnrDb)?,
        Command::SweepRs(common) => run_sweep(&common, SweepVar::Rs)?,
        Command::BenchTime(common) => {
            let cfg = load_config(&common, ExperimentConfig::default())?;
            let rows = bench_time(&cfg, &networks(&common.checkpoint)?)?;
            emit(&cfg, &timing_csv(&rows))?;
        }
        Command::ValidateMc(common) => {
            let cfg = load_config(&common, ExperimentConfig::default())?;
            let rows = validate_mc(&cfg)?;
            emit(&cfg, &validate_csv(&rows))?;
            let failed = rows.iter().filter(|r| !r.pass()).count();
            if failed > 0 {
                bail!("{failed} of {} configurations outside the Monte Carlo band", rows.len());
            }
            eprintln!("all {} configurations within the Monte Carlo band", rows.len());
        }
    }
    Ok(())
}
