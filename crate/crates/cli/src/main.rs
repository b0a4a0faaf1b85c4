//! `hfqc`: design, propagate, benchmark and validate state maps on the
//! 16-level hyperfine ground manifold.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use hfqc_core::benchmarking::DesignMode;

use crate::config::JobConfig;

#[derive(Parser, Debug)]
#[command(name = "hfqc", version, about = "Quantum control toolkit for the Cs hyperfine ground manifold")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Job file (TOML); flags override its values.
    #[arg(long, global = true)]
    job: Option<PathBuf>,
    /// Control parameter file (TOML); replaces the job file's [params].
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<DesignMode>,
}

fn parse_mode(s: &str) -> Result<DesignMode, String> {
    s.parse().map_err(|e: hfqc_core::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design a waveform for one state map.
    Design {
        /// Initial state: "F,m" or 16 amplitudes separated by ';'.
        #[arg(long)]
        initial: Option<String>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Evolve a state through a waveform file and emit per-segment snapshots.
    Propagate {
        #[arg(long)]
        waveform: PathBuf,
        #[arg(long)]
        initial: Option<String>,
        #[arg(long)]
        target: Option<String>,
    },
    /// Randomized benchmarking of designed state maps.
    Benchmark {
        #[arg(long)]
        progressions: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        sigma_omega0: Option<f64>,
        #[arg(long)]
        sigma_omega_uw: Option<f64>,
    },
    /// Benchmarking error against standard infidelity over a parameter grid.
    Correlate {
        #[arg(long)]
        progressions: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Comma-separated Omega0 offsets in Hz.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        omega0_offsets: Option<Vec<f64>>,
        /// Comma-separated Omega_uw offsets in Hz.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        omega_uw_offsets: Option<Vec<f64>>,
    },
    /// Run the numerical invariant suite.
    Validate {
        #[arg(long)]
        gradient_samples: Option<usize>,
        /// Test hook: adds an anti-Hermitian term to the checked Hamiltonians.
        #[arg(long, hide = true)]
        inject_non_hermitian: Option<f64>,
    },
}

fn resolve(common: &Common, command: &Command) -> Result<JobConfig> {
    let mut cfg = match &common.job {
        Some(path) => JobConfig::load(path)?,
        None => JobConfig::default(),
    };
    if let Some(path) = &common.params {
        cfg.params = hfqc_core::io::load_params(path)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = common.mode {
        cfg.mode = mode;
    }
    match command {
        Command::Design { initial, target, max_iterations, restarts } => {
            if let Some(s) = initial {
                cfg.design.initial = commands::state_arg(s)?;
            }
            if let Some(s) = target {
                cfg.design.target = commands::state_arg(s)?;
            }
            if let Some(n) = max_iterations {
                cfg.optimizer.max_iterations = *n;
            }
            if let Some(n) = restarts {
                cfg.optimizer.n_restarts = *n;
            }
        }
        Command::Propagate { initial, target, .. } => {
            if let Some(s) = initial {
                cfg.propagate.initial = Some(commands::state_arg(s)?);
            }
            if let Some(s) = target {
                cfg.propagate.target = Some(commands::state_arg(s)?);
            }
        }
        Command::Benchmark { progressions, max_len, shots, sigma_omega0, sigma_omega_uw } => {
            let b = &mut cfg.benchmark;
            b.progressions = progressions.unwrap_or(b.progressions);
            b.max_len = max_len.unwrap_or(b.max_len);
            b.noise.shots_per_point = shots.unwrap_or(b.noise.shots_per_point);
            b.noise.sigma_omega0_hz = sigma_omega0.unwrap_or(b.noise.sigma_omega0_hz);
            b.noise.sigma_omega_uw_hz = sigma_omega_uw.unwrap_or(b.noise.sigma_omega_uw_hz);
        }
        Command::Correlate { progressions, max_len, omega0_offsets, omega_uw_offsets } => {
            let c = &mut cfg.correlate;
            c.progressions = progressions.unwrap_or(c.progressions);
            c.max_len = max_len.unwrap_or(c.max_len);
            if let Some(v) = omega0_offsets {
                c.omega0_offsets_hz = v.clone();
            }
            if let Some(v) = omega_uw_offsets {
                c.omega_uw_offsets_hz = v.clone();
            }
        }
        Command::Validate { gradient_samples, inject_non_hermitian } => {
            let v = &mut cfg.validate;
            v.gradient_samples = gradient_samples.unwrap_or(v.gradient_samples);
            v.inject_non_hermitian = inject_non_hermitian.unwrap_or(v.inject_non_hermitian);
        }
    }
    cfg.resolve()
}

fn set_threads(jobs: Option<usize>) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    set_threads(cli.common.jobs)?;
    let cfg = resolve(&cli.common, &cli.command)?;
    std::fs::create_dir_all(&cli.common.out)?;
    let out = cli.common.out.as_path();
    match &cli.command {
        Command::Design { .. } => commands::design(&cfg, out),
        Command::Propagate { waveform, .. } => commands::propagate(&cfg, waveform, out),
        Command::Benchmark { .. } => commands::benchmark(&cfg, out),
        Command::Correlate { .. } => commands::correlate(&cfg, out),
        Command::Validate { .. } => commands::validate(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
