//! Waveform design: gradient-based maximization of the state-map fidelity,
//! either at one parameter point or averaged over a weighted ensemble of
//! parameter realizations.
//!
//! The ascent is L-BFGS on the phase vector with a backtracking (Armijo) line
//! search, driven by the exact gradients from [`SystemModel`]. Each accepted
//! step strictly improves the objective.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::hamiltonian::ControlParameters;
use crate::propagator::{QuantumState, SystemModel, Waveform, WaveformShape};
use crate::{par, rng, Error, Ket, Result, TWO_PI};

/// One weighted parameter realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub params: ControlParameters,
    pub weight: f64,
}

/// Weighted set of parameter realizations. Weights are normalized to sum to
/// one and identical realizations are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    members: Vec<EnsembleMember>,
}

impl EnsembleSpec {
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidEnsemble("at least one member is required".into()));
        }
        let mut merged: Vec<EnsembleMember> = Vec::with_capacity(members.len());
        for m in members {
            if !(m.weight > 0.0 && m.weight.is_finite()) {
                return Err(Error::InvalidEnsemble(format!("weight must be positive, got {}", m.weight)));
            }
            m.params.validate()?;
            match merged.iter_mut().find(|e| e.params == m.params) {
                Some(e) => e.weight += m.weight,
                None => merged.push(m),
            }
        }
        let total: f64 = merged.iter().map(|m| m.weight).sum();
        for m in &mut merged {
            m.weight /= total;
        }
        Ok(Self { members: merged })
    }

    pub fn single(params: ControlParameters) -> Result<Self> {
        Self::new(vec![EnsembleMember { params, weight: 1.0 }])
    }

    /// Equal-weight 3×3 grid {Ω₀, Ω₀ ± δΩ₀} × {Ω_μw, Ω_μw ± δΩ_μw}. Shifts of
    /// Ω₀ are applied at fixed drive frequencies (see
    /// [`ControlParameters::perturbed`]).
    pub fn grid(nominal: &ControlParameters, d_omega0_hz: f64, d_omega_uw_hz: f64) -> Result<Self> {
        let mut members = Vec::with_capacity(9);
        for a in [-1.0, 0.0, 1.0] {
            for b in [-1.0, 0.0, 1.0] {
                members.push(EnsembleMember {
                    params: nominal.perturbed(a * d_omega0_hz, b * d_omega_uw_hz),
                    weight: 1.0 / 9.0,
                });
            }
        }
        Self::new(members)
    }

    /// The default robust-design ensemble: δΩ₀ = 100 Hz, δΩ_μw = 140 Hz.
    pub fn default_robust(nominal: &ControlParameters) -> Result<Self> {
        Self::grid(nominal, 100.0, 140.0)
    }

    /// Product grid at 0, ±1σ, ±2σ on each axis with Gaussian weights.
    pub fn gaussian_grid(nominal: &ControlParameters, sigma_omega0_hz: f64, sigma_omega_uw_hz: f64) -> Result<Self> {
        let ks = [-2.0f64, -1.0, 0.0, 1.0, 2.0];
        let mut members = Vec::with_capacity(25);
        for a in ks {
            for b in ks {
                members.push(EnsembleMember {
                    params: nominal.perturbed(a * sigma_omega0_hz, b * sigma_omega_uw_hz),
                    weight: (-0.5 * (a * a + b * b)).exp(),
                });
            }
        }
        Self::new(members)
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("ensemble serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Controls for a design run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationConfig {
    pub shape: WaveformShape,
    pub max_iterations: usize,
    /// Stop when ‖∇F‖∞ or the per-iteration objective change falls below this.
    pub convergence_tol: f64,
    /// Maximum number of random starts. A new start is only tried while the
    /// best design is still below `floor_fidelity`.
    pub n_restarts: usize,
    pub rng_seed: u64,
    pub target_fidelity: f64,
    pub floor_fidelity: f64,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            shape: WaveformShape::default(),
            max_iterations: 500,
            convergence_tol: 1e-10,
            n_restarts: 5,
            rng_seed: 0,
            target_fidelity: 0.999,
            floor_fidelity: 0.99,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if self.max_iterations == 0 || self.n_restarts == 0 {
            return Err(Error::InvalidConfig("iteration and restart counts must be positive".into()));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return Err(Error::InvalidConfig("convergence_tol must be positive".into()));
        }
        if !(self.target_fidelity > 0.0 && self.target_fidelity <= 1.0) {
            return Err(Error::InvalidConfig("target_fidelity must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.floor_fidelity) {
            return Err(Error::InvalidConfig("floor_fidelity must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Summary of one random start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub fidelity: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub waveform: Waveform,
    /// Point fidelity (plain) or ensemble-averaged fidelity (robust).
    pub design_fidelity: f64,
    pub iterations_used: usize,
    pub restart_index: usize,
    /// Reached the target fidelity or a stationary point.
    pub converged: bool,
    pub restarts: Vec<RestartSummary>,
    /// Accepted objective values of the winning run, starting point first.
    pub history: Vec<f64>,
}

impl DesignResult {
    pub fn meets(&self, floor: f64) -> bool {
        self.design_fidelity >= floor
    }
}

/// `n` phases uniform on [0, 2π), reproducible from `seed`.
pub fn random_phases(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[]);
    (0..n).map(|_| r.random_range(0.0..TWO_PI)).collect()
}

/// Weighted-average fidelity and gradient over compiled ensemble members.
struct EnsembleObjective {
    models: Vec<(SystemModel, f64)>,
    initial: Ket,
    target: Ket,
    shape: WaveformShape,
}

impl EnsembleObjective {
    fn new(ensemble: &EnsembleSpec, initial: &QuantumState, target: &QuantumState, shape: WaveformShape) -> Result<Self> {
        let models = ensemble
            .members()
            .iter()
            .map(|m| Ok((SystemModel::new(&m.params)?, m.weight)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { models, initial: *initial.amplitudes(), target: *target.amplitudes(), shape })
    }

    fn evaluate(&self, controls: &[f64]) -> Result<(f64, Vec<f64>)> {
        let waveform = self.shape.waveform(controls)?;
        if self.models.len() == 1 {
            return self.models[0].0.fidelity_and_gradient(&self.initial, &self.target, &waveform);
        }
        let parts = par::map(&self.models, |(model, _)| {
            model.fidelity_and_gradient(&self.initial, &self.target, &waveform)
        });
        let mut fid = 0.0;
        let mut grad = vec![0.0; controls.len()];
        for (part, (_, w)) in parts.into_iter().zip(&self.models) {
            let (f, g) = part?;
            fid += w * f;
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc += w * gi;
            }
        }
        Ok((fid, grad))
    }
}

struct AscentOutcome {
    controls: Vec<f64>,
    fidelity: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const MEMORY: usize = 12;
const ARMIJO: f64 = 1e-4;
const MAX_STEP_RAD: f64 = 1.0;

/// L-BFGS ascent on the fidelity; equivalently descent on 1 − F.
fn ascend(objective: &EnsembleObjective, start: Vec<f64>, config: &OptimizationConfig) -> Result<AscentOutcome> {
    let mut x = start;
    let (mut fid, mut grad) = objective.evaluate(&x)?;
    let mut history = vec![fid];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut stalls = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        if fid >= config.target_fidelity || inf_norm(&grad) < config.convergence_tol {
            converged = true;
            break;
        }
        // ascent direction from the two-loop recursion on −F
        let mut q: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if slope.is_nan() || slope <= 0.0 {
            memory.clear();
            dir = grad.clone();
            slope = dot(&grad, &dir);
        }
        let mut step = if memory.is_empty() { 0.1 / inf_norm(&dir) } else { 1.0 };
        step = step.min(MAX_STEP_RAD / inf_norm(&dir));

        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (f_new, g_new) = objective.evaluate(&trial)?;
            if f_new >= fid + ARMIJO * step * slope && f_new > fid {
                accepted = Some((trial, f_new, g_new));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((x_new, f_new, g_new)) = accepted else {
            // no ascent possible along any tried step: numerically stationary
            converged = inf_norm(&grad) < config.convergence_tol.sqrt();
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        // y for the minimization problem (−F): −(g_new − g)
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| b - a).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == MEMORY {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let gain = f_new - fid;
        x = x_new;
        fid = f_new;
        grad = g_new;
        history.push(fid);
        stalls = if gain < config.convergence_tol { stalls + 1 } else { 0 };
        if stalls >= 5 {
            converged = true;
            break;
        }
    }
    if fid >= config.target_fidelity {
        converged = true;
    }
    Ok(AscentOutcome { controls: x, fidelity: fid, iterations, converged, history })
}

fn run_design(
    objective: &EnsembleObjective,
    config: &OptimizationConfig,
    start: Option<&Waveform>,
) -> Result<DesignResult> {
    config.validate()?;
    let n = config.shape.n_controls();
    let mut best: Option<(usize, AscentOutcome)> = None;
    let mut restarts = Vec::new();
    let attempts = if start.is_some() { 1 } else { config.n_restarts };
    for r in 0..attempts {
        let x0 = match start {
            Some(w) => w.to_vector(),
            None => random_phases(n, rng::derive_seed(config.rng_seed, &[r as u64])),
        };
        let outcome = ascend(objective, x0, config)?;
        restarts.push(RestartSummary {
            index: r,
            fidelity: outcome.fidelity,
            iterations: outcome.iterations,
            converged: outcome.converged,
        });
        if best.as_ref().is_none_or(|(_, b)| outcome.fidelity > b.fidelity) {
            best = Some((r, outcome));
        }
        if best.as_ref().is_some_and(|(_, b)| b.fidelity >= config.floor_fidelity) {
            break;
        }
    }
    let (restart_index, out) = best.expect("at least one attempt");
    let waveform = config.shape.waveform(&out.controls)?.canonicalized();
    Ok(DesignResult {
        waveform,
        design_fidelity: out.fidelity.clamp(0.0, 1.0),
        iterations_used: out.iterations,
        restart_index,
        converged: out.converged,
        restarts,
        history: out.history,
    })
}

fn check_shape(start: Option<&Waveform>, config: &OptimizationConfig) -> Result<()> {
    if let Some(w) = start {
        if w.n_uw() != config.shape.n_uw || w.n_rf() != config.shape.n_rf {
            return Err(Error::InvalidConfig("starting waveform does not match the configured shape".into()));
        }
    }
    Ok(())
}

/// Maximizes |⟨target|ψ(T)⟩|² at a single parameter point.
pub fn optimize_state_map(
    initial: &QuantumState,
    target: &QuantumState,
    config: &OptimizationConfig,
    params: &ControlParameters,
) -> Result<DesignResult> {
    optimize_robust(initial, target, config, &EnsembleSpec::single(*params)?)
}

/// Maximizes the ensemble-averaged fidelity.
pub fn optimize_robust(
    initial: &QuantumState,
    target: &QuantumState,
    config: &OptimizationConfig,
    ensemble: &EnsembleSpec,
) -> Result<DesignResult> {
    let objective = EnsembleObjective::new(ensemble, initial, target, config.shape)?;
    run_design(&objective, config, None)
}

/// Runs a single ascent from a given waveform instead of random starts.
pub fn refine(
    start: &Waveform,
    initial: &QuantumState,
    target: &QuantumState,
    config: &OptimizationConfig,
    ensemble: &EnsembleSpec,
) -> Result<DesignResult> {
    check_shape(Some(start), config)?;
    let objective = EnsembleObjective::new(ensemble, initial, target, config.shape)?;
    run_design(&objective, config, Some(start))
}

/// Weighted average of the member fidelities of `waveform`.
pub fn ensemble_fidelity(
    waveform: &Waveform,
    initial: &QuantumState,
    target: &QuantumState,
    ensemble: &EnsembleSpec,
) -> Result<f64> {
    let fids = member_fidelities(waveform, initial, target, ensemble)?;
    Ok(fids.iter().zip(ensemble.members()).map(|(f, m)| f * m.weight).sum())
}

/// Fidelity of `waveform` for every ensemble member, in member order.
pub fn member_fidelities(
    waveform: &Waveform,
    initial: &QuantumState,
    target: &QuantumState,
    ensemble: &EnsembleSpec,
) -> Result<Vec<f64>> {
    par::map(ensemble.members(), |m| {
        let model = SystemModel::new(&m.params)?;
        let out = model.evolve(initial.amplitudes(), waveform)?;
        Ok(target.amplitudes().dotc(&out).norm_sqr())
    })
    .into_iter()
    .collect()
}
