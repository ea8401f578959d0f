//! `pnrtomo`: simulate detector packets, process them into photon counts,
//! scan phase space and fit the measured Wigner surface.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use commands::ThresholdMode;
use config::ExperimentConfig;
use error::CliError;
use pnrtomo::tomography::{ScanMode, DEFAULT_OVERFLOW_LIMIT};

#[derive(Parser)]
#[command(name = "pnrtomo", version, about)]
struct Cli {
    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "PNRTOMO_OUT_DIR",
        default_value = "pnrtomo-out"
    )]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Analytic,
    MonteCarlo,
    FullTrace,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize detector packets from a configured source.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        packets: Option<usize>,
        /// One packet per scan point of a full_trace configuration.
        #[arg(long)]
        scan: bool,
    },
    /// Turn packet files into events, per-bin counts and histograms.
    Process {
        #[arg(required = true)]
        packets: Vec<PathBuf>,
        /// Pipeline settings are taken from `options.trace`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "linear")]
        thresholds: ThresholdMode,
        #[arg(long)]
        cutoff: Option<usize>,
    },
    /// Scan phase space and write the measured Wigner grid.
    Scan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// Counting bins per point in monte-carlo mode.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        cutoff: Option<usize>,
        /// Assemble the grid from `process` outputs of `simulate --scan`.
        #[arg(long)]
        from_counts: Option<PathBuf>,
        /// Also write a polar resampling, e.g. `80x120`.
        #[arg(long, value_parser = parse_surface)]
        surface: Option<(usize, usize)>,
    },
    /// Fit the Gaussian model to a grid.
    Fit {
        grid: PathBuf,
        #[arg(long)]
        weighted: bool,
        #[arg(long, default_value_t = DEFAULT_OVERFLOW_LIMIT)]
        overflow_limit: f64,
    },
    /// Fit a grid and compare with the closed-form surface of its source.
    Report {
        grid: PathBuf,
        /// Overrides the configuration stored in the grid manifest.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        weighted: bool,
    },
}

fn parse_surface(s: &str) -> Result<(usize, usize), String> {
    let (a, p) = s.split_once('x').ok_or("expected AMPxPHASE")?;
    let a: usize = a.parse().map_err(|_| "bad amplitude count")?;
    let p: usize = p.parse().map_err(|_| "bad phase count")?;
    if a < 2 || p < 1 {
        return Err("need at least 2 amplitudes and 1 phase".into());
    }
    Ok((a, p))
}

fn apply_mode(
    cfg: &mut ExperimentConfig,
    mode: Option<ModeArg>,
    seed: Option<u64>,
    bins: Option<usize>,
) {
    let current_seed = match cfg.mode {
        ScanMode::MonteCarlo { seed, .. } | ScanMode::FullTrace { seed } => seed,
        ScanMode::Analytic => 1,
    };
    let current_bins = match cfg.mode {
        ScanMode::MonteCarlo { bins, .. } => bins,
        _ => 8388,
    };
    let seed = seed.unwrap_or(current_seed);
    let bins = bins.unwrap_or(current_bins);
    cfg.mode = match (mode, cfg.mode) {
        (Some(ModeArg::Analytic), _) | (None, ScanMode::Analytic) => ScanMode::Analytic,
        (Some(ModeArg::MonteCarlo), _) | (None, ScanMode::MonteCarlo { .. }) => {
            ScanMode::MonteCarlo { bins, seed }
        }
        (Some(ModeArg::FullTrace), _) | (None, ScanMode::FullTrace { .. }) => {
            ScanMode::FullTrace { seed }
        }
    };
}

fn ensure_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli.out;
    match cli.command {
        Command::Simulate {
            config,
            seed,
            packets,
            scan,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                if scan {
                    apply_mode(&mut cfg, None, Some(s), None);
                } else {
                    cfg.simulate.seed = s;
                }
            }
            if let Some(n) = packets {
                cfg.simulate.packets = n;
            }
            cfg.validate()?;
            ensure_dir(&out)?;
            let m = commands::simulate(&cfg, &out, scan)?;
            let photons: u64 = m.packets.iter().map(|p| p.photons).sum();
            println!(
                "wrote {} packets ({photons} photons) to {}  config {}",
                m.packets.len(),
                out.display(),
                &m.config_hash[..12]
            );
        }
        Command::Process {
            packets,
            config,
            thresholds,
            cutoff,
        } => {
            let mut trace = match config {
                Some(p) => ExperimentConfig::load(&p)?.options.trace,
                None => Default::default(),
            };
            if let Some(c) = cutoff {
                trace.pipeline.cutoff = c;
            }
            ensure_dir(&out)?;
            let summaries = commands::process(&packets, &trace, thresholds, &out)?;
            for s in &summaries {
                println!(
                    "{}: {} events, {} photons in {} bins ({} overflow){}",
                    s.packet,
                    s.events,
                    s.photons,
                    s.bins,
                    s.overflow_bins,
                    s.true_photons
                        .map_or(String::new(), |t| format!(", truth {t}"))
                );
            }
        }
        Command::Scan {
            config,
            mode,
            seed,
            bins,
            cutoff,
            from_counts,
            surface,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_mode(&mut cfg, mode, seed, bins);
            if let Some(c) = cutoff {
                cfg.options.cutoff = c;
                cfg.options.trace.pipeline.cutoff = c;
            }
            cfg.validate()?;
            ensure_dir(&out)?;
            let m = commands::scan(&cfg, &out, from_counts.as_deref(), surface)?;
            println!(
                "wrote {} ({} points, {} flagged)  config {}",
                out.join("grid.csv").display(),
                m.scan.geometry.len(),
                m.scan.flagged_points,
                &m.config_hash[..12]
            );
        }
        Command::Fit {
            grid,
            weighted,
            overflow_limit,
        } => {
            ensure_dir(&out)?;
            let s = commands::fit(&grid, weighted, overflow_limit, &out)?;
            println!(
                "a {:.5}({:.5}) b {:.5}({:.5}) m {:.4}({:.4}) |beta0| {:.5}({:.5})  R2 {:.4}  {} points",
                s.model.a,
                s.errors.a,
                s.model.b,
                s.errors.b,
                s.model.m,
                s.errors.m,
                s.amplitude,
                s.errors.amplitude,
                s.r_squared,
                s.n_points
            );
        }
        Command::Report {
            grid,
            config,
            weighted,
        } => {
            let cfg = config.map(|p| ExperimentConfig::load(&p)).transpose()?;
            ensure_dir(&out)?;
            let r = commands::report(&grid, cfg, weighted, &out)?;
            print!("{}", commands::render_report(&r));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pnrtomo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
