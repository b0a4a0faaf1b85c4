//! Command implementations. Each returns Ok(false) when it ran to completion
//! but the requested work did not succeed (design below floor, failed check).

use std::path::Path;

use anyhow::{bail, Context, Result};
use hfqc_core::benchmarking::{
    build_progressions, correlation_points, fit_decay, offset_grid, simulate_benchmark, DesignMode, FitResult,
    Progression,
};
use hfqc_core::io::{self, CsvTable, RunInfo, StateSpec, WaveformFile, WaveformMetadata};
use hfqc_core::optimizer::{
    ensemble_fidelity, optimize_robust, EnsembleSpec, RestartSummary,
};
use hfqc_core::propagator::{self, fidelity, PropagateOptions, QuantumState};
use hfqc_core::spin::BasisIndex;
use hfqc_core::validation::{run_all, CheckResult};
use hfqc_core::{rng, DIM};
use serde::Serialize;

use crate::config::JobConfig;

/// A state flag: a label or ';'-separated amplitudes, validated eagerly.
pub fn state_arg(text: &str) -> Result<StateSpec> {
    io::parse_state(text).with_context(|| format!("invalid state {text:?}"))?;
    Ok(StateSpec::Label(text.to_string()))
}

fn resolve_state(spec: &StateSpec, what: &str) -> Result<QuantumState> {
    spec.resolve().with_context(|| format!("invalid {what} state"))
}

fn design_ensemble(cfg: &JobConfig) -> Result<EnsembleSpec> {
    Ok(match cfg.mode {
        DesignMode::Plain => EnsembleSpec::single(cfg.params)?,
        DesignMode::Robust => EnsembleSpec::grid(&cfg.params, cfg.ensemble.d_omega0_hz, cfg.ensemble.d_omega_uw_hz)?,
    })
}

fn basis_labels() -> Vec<String> {
    BasisIndex::all().map(|b| format!("F{}_m{}", b.f(), b.m())).collect()
}

#[derive(Serialize)]
struct DesignReport<'a> {
    run: &'a RunInfo,
    mode: DesignMode,
    design_fidelity: f64,
    nominal_fidelity: f64,
    /// 3×3 grid at ±d_omega0_hz, ±d_omega_uw_hz.
    ensemble_fidelity: f64,
    /// 5×5 Gaussian-weighted grid at 0, ±σ, ±2σ.
    gaussian_fidelity: f64,
    floor_fidelity: f64,
    meets_floor: bool,
    converged: bool,
    iterations_used: usize,
    restart_index: usize,
    restarts: &'a [RestartSummary],
    ensemble_hash: String,
    history: &'a [f64],
}

pub fn design(cfg: &JobConfig, out: &Path) -> Result<bool> {
    let run = RunInfo::new("design", cfg.seed, cfg)?;
    let initial = resolve_state(&cfg.design.initial, "initial")?;
    let target = resolve_state(&cfg.design.target, "target")?;
    let ensemble = design_ensemble(cfg)?;
    let result = optimize_robust(&initial, &target, &cfg.optimizer, &ensemble)?;
    let w = &result.waveform;
    let grid = EnsembleSpec::grid(&cfg.params, cfg.ensemble.d_omega0_hz, cfg.ensemble.d_omega_uw_hz)?;
    let gauss = EnsembleSpec::gaussian_grid(&cfg.params, cfg.ensemble.sigma_omega0_hz, cfg.ensemble.sigma_omega_uw_hz)?;
    let nominal_fidelity = ensemble_fidelity(w, &initial, &target, &EnsembleSpec::single(cfg.params)?)?;
    let meets_floor = result.meets(cfg.optimizer.floor_fidelity);
    let report = DesignReport {
        run: &run,
        mode: cfg.mode,
        design_fidelity: result.design_fidelity,
        nominal_fidelity,
        ensemble_fidelity: ensemble_fidelity(w, &initial, &target, &grid)?,
        gaussian_fidelity: ensemble_fidelity(w, &initial, &target, &gauss)?,
        floor_fidelity: cfg.optimizer.floor_fidelity,
        meets_floor,
        converged: result.converged,
        iterations_used: result.iterations_used,
        restart_index: result.restart_index,
        restarts: &result.restarts,
        ensemble_hash: ensemble.hash(),
        history: &result.history,
    };
    let file = WaveformFile::new(
        w,
        WaveformMetadata {
            initial: io::state_to_pairs(&initial),
            target: io::state_to_pairs(&target),
            design_fidelity: result.design_fidelity,
            ensemble_hash: ensemble.hash(),
            mode: cfg.mode.to_string(),
            seed: cfg.seed,
            config: run.config.clone(),
        },
    );
    io::write_json(&out.join("waveform.json"), &file)?;
    io::write_json(&out.join("design_report.json"), &report)?;
    if !meets_floor {
        eprintln!(
            "error: design fidelity {:.6} is below the floor {} after {} restart(s)",
            result.design_fidelity,
            cfg.optimizer.floor_fidelity,
            result.restarts.len()
        );
    }
    Ok(meets_floor)
}

#[derive(Serialize)]
struct PropagateReport<'a> {
    run: &'a RunInfo,
    waveform: String,
    initial: Vec<[f64; 2]>,
    target: Vec<[f64; 2]>,
    final_amplitudes: Vec<[f64; 2]>,
    final_populations: Vec<f64>,
    final_fidelity: f64,
    snapshots: usize,
}

pub fn propagate(cfg: &JobConfig, waveform_path: &Path, out: &Path) -> Result<bool> {
    let file = WaveformFile::load(waveform_path)?;
    let waveform = file.waveform()?;
    let initial = match &cfg.propagate.initial {
        Some(s) => resolve_state(s, "initial")?,
        None => file.initial_state()?,
    };
    let target = match &cfg.propagate.target {
        Some(s) => resolve_state(s, "target")?,
        None => file.target_state()?,
    };
    // the waveform itself is an input: record it alongside the job config
    let run = RunInfo::new("propagate", cfg.seed, &serde_json::json!({ "job": cfg, "waveform": &file }))?;
    let opts = PropagateOptions { keep_unitary: false, keep_trace: true };
    let result = propagator::propagate(&initial, &waveform, &cfg.params, opts)?;
    let trace = result.trace.as_deref().unwrap_or_default();

    let labels = basis_labels();
    let mut cols = vec!["snapshot".to_string(), "t_s".to_string()];
    cols.extend(labels.iter().cloned());
    cols.push("sum".into());
    let mut pops = CsvTable::new(&run, &cols.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut coh = CsvTable::new(&run, &["snapshot", "t_s", "row", "col", "abs_rho"])?;
    for (k, (t, state)) in trace.iter().enumerate() {
        let p = state.populations();
        let sum: f64 = p.iter().sum();
        let mut row = vec![k.to_string(), io::fmt_f64(*t)];
        row.extend(p.iter().map(|&x| io::fmt_f64(x)));
        row.push(io::fmt_f64(sum));
        pops.row(row);
        let a = state.amplitudes();
        for i in 0..DIM {
            for j in 0..DIM {
                coh.row([k.to_string(), io::fmt_f64(*t), i.to_string(), j.to_string(), io::fmt_f64((a[i] * a[j].conj()).norm())]);
            }
        }
    }
    pops.write(&out.join("populations.csv"))?;
    coh.write(&out.join("coherences.csv"))?;
    let report = PropagateReport {
        run: &run,
        waveform: waveform_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        initial: io::state_to_pairs(&initial),
        target: io::state_to_pairs(&target),
        final_amplitudes: io::state_to_pairs(&result.final_state),
        final_populations: result.final_state.populations().to_vec(),
        final_fidelity: fidelity(&target, &result.final_state),
        snapshots: trace.len(),
    };
    io::write_json(&out.join("propagate_report.json"), &report)?;
    Ok(true)
}


#[derive(Serialize)]
struct LegStats {
    legs: usize,
    min_design_fidelity: f64,
    mean_design_fidelity: f64,
}

fn leg_stats(progressions: &[Progression]) -> LegStats {
    let fids: Vec<f64> = progressions.iter().flat_map(|p| p.legs()).map(|l| l.design.design_fidelity).collect();
    LegStats {
        legs: fids.len(),
        min_design_fidelity: fids.iter().copied().fold(f64::INFINITY, f64::min),
        mean_design_fidelity: fids.iter().sum::<f64>() / fids.len().max(1) as f64,
    }
}

#[derive(Serialize)]
struct FitSummary<'a> {
    #[serde(flatten)]
    fit: &'a FitResult,
    epsilon_stderr: f64,
    epsilon0_stderr: f64,
    fidelity_per_map: f64,
}

impl<'a> FitSummary<'a> {
    fn new(fit: &'a FitResult) -> Self {
        Self {
            fit,
            epsilon_stderr: fit.epsilon_stderr(),
            epsilon0_stderr: fit.epsilon0_stderr(),
            fidelity_per_map: fit.fidelity_per_map(),
        }
    }
}

#[derive(Serialize)]
struct BenchmarkSummary<'a> {
    run: &'a RunInfo,
    mode: DesignMode,
    design: LegStats,
    /// 1 − F(0); F(0) does not depend on ε.
    epsilon0_from_l0: f64,
    /// Absent when fewer than three sequence lengths were simulated.
    fit: Option<FitSummary<'a>>,
}

pub fn benchmark(cfg: &JobConfig, out: &Path) -> Result<bool> {
    let run = RunInfo::new("benchmark", cfg.seed, cfg)?;
    let b = &cfg.benchmark;
    if b.progressions == 0 {
        bail!("benchmark.progressions must be at least 1");
    }
    let ensemble = design_ensemble(cfg)?;
    let progressions = build_progressions(
        b.progressions,
        b.max_len,
        rng::derive_seed(cfg.seed, &[1]),
        &cfg.optimizer,
        cfg.mode,
        &ensemble,
        &cfg.params,
    )?;
    let data = simulate_benchmark(&progressions, &b.noise, b.max_len, &cfg.params, rng::derive_seed(cfg.seed, &[2]))?;
    let mut records =
        CsvTable::new(&run, &["progression", "l", "shot", "d_omega0_hz", "d_omega_uw_hz", "population"])?;
    for r in &data.records {
        records.row([
            r.progression.to_string(),
            r.l.to_string(),
            r.shot.to_string(),
            io::fmt_f64(r.d_omega0_hz),
            io::fmt_f64(r.d_omega_uw_hz),
            io::fmt_f64(r.population),
        ]);
    }
    records.write(&out.join("records.csv"))?;
    let mut curve = CsvTable::new(&run, &["l", "mean", "std", "stderr"])?;
    for c in &data.curve {
        curve.row([c.l.to_string(), io::fmt_f64(c.mean), io::fmt_f64(c.std), io::fmt_f64(c.stderr)]);
    }
    curve.write(&out.join("curve.csv"))?;
    let mut per = CsvTable::new(&run, &["progression", "l", "mean"])?;
    for (p, row) in data.per_progression.iter().enumerate() {
        for (l, v) in row.iter().enumerate() {
            per.row([p.to_string(), l.to_string(), io::fmt_f64(*v)]);
        }
    }
    per.write(&out.join("progressions.csv"))?;

    let fit = if b.max_len >= 2 {
        Some(fit_decay(&data.decay_points(), DIM).context("fitting the decay curve")?)
    } else {
        eprintln!("note: fewer than three sequence lengths; skipping the decay fit");
        None
    };
    let summary = BenchmarkSummary {
        run: &run,
        mode: cfg.mode,
        design: leg_stats(&progressions),
        epsilon0_from_l0: 1.0 - data.curve[0].mean,
        fit: fit.as_ref().map(FitSummary::new),
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    Ok(true)
}

#[derive(Serialize)]
struct CorrelationSummary<'a> {
    run: &'a RunInfo,
    mode: DesignMode,
    design: LegStats,
    points: usize,
    /// Fraction with 0.4·ε_B ≤ ε_S ≤ 1.3·ε_B.
    fraction_in_band: f64,
    /// Fraction with ε_S ≤ ε_B.
    fraction_below_line: f64,
}

pub fn correlate(cfg: &JobConfig, out: &Path) -> Result<bool> {
    let run = RunInfo::new("correlate", cfg.seed, cfg)?;
    let c = &cfg.correlate;
    if c.progressions == 0 {
        bail!("correlate.progressions must be at least 1");
    }
    let grid = offset_grid(&cfg.params, &c.omega0_offsets_hz, &c.omega_uw_offsets_hz);
    if grid.is_empty() {
        bail!("the correlation grid is empty");
    }
    let ensemble = design_ensemble(cfg)?;
    let progressions = build_progressions(
        c.progressions,
        c.max_len,
        rng::derive_seed(cfg.seed, &[1]),
        &cfg.optimizer,
        cfg.mode,
        &ensemble,
        &cfg.params,
    )?;
    let points = correlation_points(&progressions, &grid, c.max_len)?;
    let mut table = CsvTable::new(
        &run,
        &["label", "d_omega0_hz", "d_omega_uw_hz", "epsilon_b", "epsilon_b_stderr", "epsilon_s", "ratio"],
    )?;
    for p in &points {
        table.row([
            p.params_label.clone(),
            io::fmt_f64(p.d_omega0_hz),
            io::fmt_f64(p.d_omega_uw_hz),
            io::fmt_f64(p.epsilon_b),
            io::fmt_f64(p.epsilon_b_stderr),
            io::fmt_f64(p.epsilon_s),
            io::fmt_f64(p.epsilon_s / p.epsilon_b),
        ]);
    }
    table.write(&out.join("correlation.csv"))?;
    let n = points.len() as f64;
    let in_band = points.iter().filter(|p| 0.4 * p.epsilon_b <= p.epsilon_s && p.epsilon_s <= 1.3 * p.epsilon_b).count();
    let below = points.iter().filter(|p| p.epsilon_s <= p.epsilon_b).count();
    let summary = CorrelationSummary {
        run: &run,
        mode: cfg.mode,
        design: leg_stats(&progressions),
        points: points.len(),
        fraction_in_band: in_band as f64 / n,
        fraction_below_line: below as f64 / n,
    };
    io::write_json(&out.join("correlation_summary.json"), &summary)?;
    Ok(true)
}

#[derive(Serialize)]
struct ValidationFile<'a> {
    run: &'a RunInfo,
    all_passed: bool,
    checks: &'a [CheckResult],
}

pub fn validate(cfg: &JobConfig, out: &Path) -> Result<bool> {
    let run = RunInfo::new("validate", cfg.seed, cfg)?;
    let report = run_all(&cfg.params, &cfg.atom, &cfg.validate);
    let passed = report.all_passed();
    io::write_json(&out.join("validation.json"), &ValidationFile { run: &run, all_passed: passed, checks: &report.checks })?;
    for c in &report.checks {
        println!(
            "{} {:<24} residual {:.3e} (tolerance {:.0e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tolerance
        );
    }
    Ok(passed)
}
