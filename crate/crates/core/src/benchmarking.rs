//! Randomized benchmarking of state maps.
//!
//! A progression of length L draws Haar-random states ψ₀ … ψ_L and designs
//! the legs |4,4⟩ → ψ₀ → … → ψ_L together with a dedicated closing leg
//! ψ_l → |4,4⟩ for every truncation l ≤ L. The return population of
//! |4,4⟩ after l + 2 maps is fit to
//!
//! F(l) = 1/d + (d−1)/d · (1 − d ε₀/(d−1)) · (1 − d ε/(d−1))^l.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::hamiltonian::ControlParameters;
use crate::optimizer::{optimize_robust, DesignResult, EnsembleSpec, OptimizationConfig};
use crate::propagator::{QuantumState, SystemModel};
use crate::{par, rng, Error, Ket, Result, DIM};

/// Haar-random pure state: a normalized vector of i.i.d. complex Gaussians.
pub fn haar_random_state(seed: u64) -> QuantumState {
    let mut r = rng::stream(seed, &[]);
    loop {
        let v = Ket::from_fn(|_, _| Complex64::new(r.sample(StandardNormal), r.sample(StandardNormal)));
        if let Ok(s) = QuantumState::normalized(v) {
            return s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    Plain,
    Robust,
}

impl std::fmt::Display for DesignMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DesignMode::Plain => "plain",
            DesignMode::Robust => "robust",
        })
    }
}

impl std::str::FromStr for DesignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "robust" => Ok(Self::Robust),
            other => Err(Error::Parse(format!("unknown mode {other:?} (expected plain or robust)"))),
        }
    }
}

/// A designed state map.
#[derive(Debug, Clone)]
pub struct Leg {
    pub initial: QuantumState,
    pub target: QuantumState,
    pub design: DesignResult,
}

#[derive(Debug, Clone)]
pub struct Progression {
    /// ψ₀ … ψ_L
    pub states: Vec<QuantumState>,
    /// |4,4⟩ → ψ₀, then ψ_{i−1} → ψ_i
    pub forward: Vec<Leg>,
    /// closing[l]: ψ_l → |4,4⟩
    pub closing: Vec<Leg>,
}

impl Progression {
    /// Longest supported truncation L.
    pub fn max_len(&self) -> usize {
        self.states.len() - 1
    }

    /// The l + 2 legs of the length-l sequence, in application order.
    pub fn sequence(&self, l: usize) -> impl Iterator<Item = &Leg> {
        self.forward[..=l].iter().chain(std::iter::once(&self.closing[l]))
    }

    /// Every designed leg, forward legs first.
    pub fn legs(&self) -> impl Iterator<Item = &Leg> {
        self.forward.iter().chain(&self.closing)
    }
}

/// Designs a progression of length `max_len`. Leg seeds derive from `seed`.
pub fn build_progression(
    max_len: usize,
    seed: u64,
    config: &OptimizationConfig,
    mode: DesignMode,
    ensemble: &EnsembleSpec,
    nominal: &ControlParameters,
) -> Result<Progression> {
    let design_ensemble = match mode {
        DesignMode::Plain => EnsembleSpec::single(*nominal)?,
        DesignMode::Robust => ensemble.clone(),
    };
    let states: Vec<QuantumState> =
        (0..=max_len).map(|i| haar_random_state(rng::derive_seed(seed, &[0, i as u64]))).collect();
    let fiducial = QuantumState::fiducial();
    let mut tasks = Vec::with_capacity(2 * max_len + 2);
    for i in 0..=max_len {
        let from = if i == 0 { fiducial } else { states[i - 1] };
        tasks.push((format!("forward {i}"), from, states[i]));
    }
    for (l, s) in states.iter().enumerate() {
        tasks.push((format!("closing {l}"), *s, fiducial));
    }
    let designs = par::map_range(tasks.len(), |k| {
        let (name, from, to) = &tasks[k];
        let cfg = OptimizationConfig { rng_seed: rng::derive_seed(seed, &[1, k as u64]), ..*config };
        let leg_error = |reason: String| Error::LegDesign { leg: name.clone(), reason };
        let design = optimize_robust(from, to, &cfg, &design_ensemble).map_err(|e| leg_error(e.to_string()))?;
        if !design.meets(config.floor_fidelity) {
            return Err(leg_error(format!(
                "design fidelity {:.5} below floor {}",
                design.design_fidelity, config.floor_fidelity
            )));
        }
        Ok(Leg { initial: *from, target: *to, design })
    });
    let mut legs = designs.into_iter().collect::<Result<Vec<_>>>()?;
    let closing = legs.split_off(max_len + 1);
    Ok(Progression { states, forward: legs, closing })
}

/// Shot-to-shot parameter noise and readout model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of the bias Larmor frequency (applied at fixed
    /// drive frequencies).
    pub sigma_omega0_hz: f64,
    pub sigma_omega_uw_hz: f64,
    pub shots_per_point: usize,
    /// One draw per shot (true) or one per sequence (false).
    pub per_shot_draw: bool,
    /// Each shot is a single projective measurement instead of the exact
    /// return population.
    pub binomial_readout: bool,
    /// Extra preparation/readout error p → (1 − s)p + s/d.
    pub spam_error: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_omega0_hz: 100.0,
            sigma_omega_uw_hz: 140.0,
            shots_per_point: 100,
            per_shot_draw: true,
            binomial_readout: false,
            spam_error: 0.0,
        }
    }
}

impl NoiseModel {
    /// No parameter noise, exact populations, one shot per point.
    pub fn noiseless() -> Self {
        Self {
            sigma_omega0_hz: 0.0,
            sigma_omega_uw_hz: 0.0,
            shots_per_point: 1,
            per_shot_draw: true,
            binomial_readout: false,
            spam_error: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_omega0_hz >= 0.0 && self.sigma_omega_uw_hz >= 0.0) {
            return Err(Error::InvalidBenchmark("noise widths must be non-negative".into()));
        }
        if self.shots_per_point == 0 {
            return Err(Error::InvalidBenchmark("shots_per_point must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.spam_error) {
            return Err(Error::InvalidBenchmark("spam_error must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn is_deterministic(&self) -> bool {
        self.sigma_omega0_hz == 0.0 && self.sigma_omega_uw_hz == 0.0 && !self.binomial_readout
    }
}

/// One simulated shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub progression: usize,
    pub l: usize,
    pub shot: usize,
    pub d_omega0_hz: f64,
    pub d_omega_uw_hz: f64,
    pub population: f64,
}

/// Mean return population at one sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub l: usize,
    pub mean: f64,
    /// Standard deviation across progressions.
    pub std: f64,
    /// Standard error of the mean across progressions.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkData {
    pub curve: Vec<CurvePoint>,
    /// per_progression[p][l]: shot-averaged return population.
    pub per_progression: Vec<Vec<f64>>,
    pub records: Vec<ShotRecord>,
}

impl BenchmarkData {
    pub fn decay_points(&self) -> Vec<DecayPoint> {
        let n = self.per_progression.len();
        self.curve
            .iter()
            .map(|c| DecayPoint { l: c.l, f: c.mean, stderr: (n > 1 && c.stderr > 0.0).then_some(c.stderr) })
            .collect()
    }
}

/// Return population of |4,4⟩ after the length-l sequence under `model`.
fn return_population(progression: &Progression, l: usize, model: &SystemModel) -> Result<f64> {
    let mut psi = *QuantumState::fiducial().amplitudes();
    for leg in progression.sequence(l) {
        psi = model.evolve(&psi, &leg.design.waveform)?;
    }
    Ok(psi[0].norm_sqr())
}

/// Simulates the benchmarking experiment around the parameter point `params`.
pub fn simulate_benchmark(
    progressions: &[Progression],
    noise: &NoiseModel,
    max_l: usize,
    params: &ControlParameters,
    seed: u64,
) -> Result<BenchmarkData> {
    noise.validate()?;
    params.validate()?;
    if progressions.is_empty() {
        return Err(Error::InvalidBenchmark("no progressions".into()));
    }
    if let Some(p) = progressions.iter().find(|p| p.max_len() < max_l) {
        return Err(Error::InvalidBenchmark(format!(
            "max_l = {max_l} exceeds a progression of length {}",
            p.max_len()
        )));
    }
    let n_prog = progressions.len();
    let lengths = max_l + 1;
    let deterministic = noise.is_deterministic();
    let shots = noise.shots_per_point;
    let nominal_model = SystemModel::new(params)?;
    let d0 = Normal::new(0.0, noise.sigma_omega0_hz).map_err(|e| Error::InvalidBenchmark(e.to_string()))?;
    let duw = Normal::new(0.0, noise.sigma_omega_uw_hz).map_err(|e| Error::InvalidBenchmark(e.to_string()))?;

    // one task per (progression, l); shots run inside so every task owns its stream
    let tasks = n_prog * lengths;
    let results = par::map_range(tasks, |k| -> Result<Vec<ShotRecord>> {
        let (p, l) = (k / lengths, k % lengths);
        let prog = &progressions[p];
        if deterministic {
            let pop = return_population(prog, l, &nominal_model)?;
            let pop = (1.0 - noise.spam_error) * pop + noise.spam_error / DIM as f64;
            return Ok((0..shots)
                .map(|shot| ShotRecord { progression: p, l, shot, d_omega0_hz: 0.0, d_omega_uw_hz: 0.0, population: pop })
                .collect());
        }
        let mut r = rng::stream(seed, &[p as u64, l as u64]);
        let mut draw = (d0.sample(&mut r), duw.sample(&mut r));
        let mut out = Vec::with_capacity(shots);
        for shot in 0..shots {
            if noise.per_shot_draw && shot > 0 {
                draw = (d0.sample(&mut r), duw.sample(&mut r));
            }
            let model = SystemModel::new(&params.perturbed(draw.0, draw.1))?;
            let exact = return_population(prog, l, &model)?;
            let exact = (1.0 - noise.spam_error) * exact + noise.spam_error / DIM as f64;
            let population = if noise.binomial_readout {
                if r.random::<f64>() < exact { 1.0 } else { 0.0 }
            } else {
                exact
            };
            out.push(ShotRecord { progression: p, l, shot, d_omega0_hz: draw.0, d_omega_uw_hz: draw.1, population });
        }
        Ok(out)
    });

    let mut records = Vec::with_capacity(tasks * shots);
    let mut per_progression = vec![vec![0.0; lengths]; n_prog];
    for (k, res) in results.into_iter().enumerate() {
        let shots_k = res?;
        let mean = shots_k.iter().map(|s| s.population).sum::<f64>() / shots as f64;
        per_progression[k / lengths][k % lengths] = mean;
        records.extend(shots_k);
    }
    let curve = (0..lengths)
        .map(|l| {
            let vals: Vec<f64> = per_progression.iter().map(|row| row[l]).collect();
            let mean = vals.iter().sum::<f64>() / n_prog as f64;
            let var = if n_prog > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_prog - 1) as f64
            } else {
                0.0
            };
            CurvePoint { l, mean, std: var.sqrt(), stderr: (var / n_prog as f64).sqrt() }
        })
        .collect();
    Ok(BenchmarkData { curve, per_progression, records })
}

/// One input point for [`fit_decay`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub l: usize,
    pub f: f64,
    /// Standard error of `f`; when every point has one, the fit is weighted
    /// by inverse variances and the covariance is absolute.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub epsilon: f64,
    pub epsilon0: f64,
    /// Covariance of (ε, ε₀).
    pub covariance: [[f64; 2]; 2],
    pub residuals: Vec<f64>,
    pub weighted: bool,
    pub chi_squared: f64,
    pub iterations: usize,
}

impl FitResult {
    pub fn epsilon_stderr(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn epsilon0_stderr(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }

    /// Average fidelity per state map, 1 − ε.
    pub fn fidelity_per_map(&self) -> f64 {
        1.0 - self.epsilon
    }
}

/// The benchmarking decay model F(l).
pub fn decay_model(l: f64, epsilon: f64, epsilon0: f64, d: usize) -> f64 {
    let d = d as f64;
    let k = d / (d - 1.0);
    1.0 / d + (d - 1.0) / d * (1.0 - k * epsilon0) * (1.0 - k * epsilon).powf(l)
}

/// Model value and gradient with respect to (ε, ε₀).
fn model_and_jacobian(l: f64, eps: f64, eps0: f64, d: f64) -> (f64, [f64; 2]) {
    let k = d / (d - 1.0);
    let a = (d - 1.0) / d;
    let r = 1.0 - k * eps;
    let pow_l = r.powf(l);
    let pow_lm1 = if l == 0.0 { 0.0 } else { r.powf(l - 1.0) };
    let value = 1.0 / d + a * (1.0 - k * eps0) * pow_l;
    let d_eps = -a * (1.0 - k * eps0) * l * pow_lm1 * k;
    let d_eps0 = -pow_l;
    (value, [d_eps, d_eps0])
}

/// Least-squares fit of (ε, ε₀) by Levenberg-Marquardt, constrained to
/// ε, ε₀ ∈ [0, (d−1)/d].
pub fn fit_decay(data: &[DecayPoint], d: usize) -> Result<FitResult> {
    if d < 2 {
        return Err(Error::DegenerateData(format!("dimension must be at least 2, got {d}")));
    }
    let mut ls: Vec<usize> = data.iter().map(|p| p.l).collect();
    ls.sort_unstable();
    ls.dedup();
    if ls.len() < 3 {
        return Err(Error::DegenerateData(format!("need at least 3 distinct lengths, got {}", ls.len())));
    }
    if data.iter().any(|p| !p.f.is_finite()) {
        return Err(Error::DegenerateData("non-finite fidelity".into()));
    }
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.f), b.max(p.f)));
    if hi - lo <= 1e-15 {
        return Err(Error::DegenerateData("all fidelities are equal".into()));
    }
    let weighted = data.iter().all(|p| p.stderr.is_some_and(|s| s > 0.0));
    let weights: Vec<f64> =
        data.iter().map(|p| if weighted { 1.0 / p.stderr.unwrap().powi(2) } else { 1.0 }).collect();
    let df = d as f64;
    let upper = (df - 1.0) / df;
    let clamp = |v: f64| v.clamp(0.0, upper);

    // log-linear starting point on F − 1/d
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, w) in data.iter().zip(&weights) {
        let y = p.f - 1.0 / df;
        if y > 0.0 {
            let (x, y) = (p.l as f64, y.ln());
            sw += w;
            sx += w * x;
            sy += w * y;
            sxx += w * x * x;
            sxy += w * x * y;
        }
    }
    let denom = sw * sxx - sx * sx;
    let (slope, intercept) = if denom.abs() > 0.0 {
        let s = (sw * sxy - sx * sy) / denom;
        (s, (sy - s * sx) / sw)
    } else {
        (0.0, 0.0)
    };
    let k = df / (df - 1.0);
    let mut theta = [clamp((1.0 - slope.exp()) / k), clamp((1.0 - intercept.exp() / upper) / k)];

    let cost_of = |t: &[f64; 2]| -> f64 {
        data.iter()
            .zip(&weights)
            .map(|(p, w)| w * (p.f - decay_model(p.l as f64, t[0], t[1], d)).powi(2))
            .sum()
    };
    let normal_eq = |t: &[f64; 2]| -> ([[f64; 2]; 2], [f64; 2]) {
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for (p, w) in data.iter().zip(&weights) {
            let (v, j) = model_and_jacobian(p.l as f64, t[0], t[1], df);
            let r = p.f - v;
            for a in 0..2 {
                jtr[a] += w * j[a] * r;
                for b in 0..2 {
                    jtj[a][b] += w * j[a] * j[b];
                }
            }
        }
        (jtj, jtr)
    };

    let mut cost = cost_of(&theta);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 500 {
        iterations += 1;
        let (jtj, jtr) = normal_eq(&theta);
        let a = [[jtj[0][0] * (1.0 + lambda), jtj[0][1]], [jtj[1][0], jtj[1][1] * (1.0 + lambda)]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0.0 || !det.is_finite() {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
            continue;
        }
        let step = [(a[1][1] * jtr[0] - a[0][1] * jtr[1]) / det, (a[0][0] * jtr[1] - a[1][0] * jtr[0]) / det];
        let trial = [clamp(theta[0] + step[0]), clamp(theta[1] + step[1])];
        let moved = (trial[0] - theta[0]).abs().max((trial[1] - theta[1]).abs());
        let trial_cost = cost_of(&trial);
        if trial_cost <= cost {
            let gain = cost - trial_cost;
            theta = trial;
            cost = trial_cost;
            lambda = (lambda / 10.0).max(1e-15);
            if moved <= 1e-14 || gain <= 1e-30 + 1e-16 * cost {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 || moved <= 1e-15 {
                converged = moved <= 1e-12;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::FitNotConverged(iterations));
    }

    let (jtj, _) = normal_eq(&theta);
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    let mut covariance = if det.abs() > 0.0 {
        [[jtj[1][1] / det, -jtj[0][1] / det], [-jtj[1][0] / det, jtj[0][0] / det]]
    } else {
        [[f64::INFINITY, 0.0], [0.0, f64::INFINITY]]
    };
    if !weighted {
        let dof = data.len().saturating_sub(2).max(1) as f64;
        let s2 = cost / dof;
        covariance.iter_mut().flatten().for_each(|c| *c *= s2);
    }
    let residuals = data.iter().map(|p| p.f - decay_model(p.l as f64, theta[0], theta[1], d)).collect();
    Ok(FitResult {
        epsilon: theta[0],
        epsilon0: theta[1],
        covariance,
        residuals,
        weighted,
        chi_squared: cost,
        iterations,
    })
}

/// A labelled parameter realization for the correlation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    pub d_omega0_hz: f64,
    pub d_omega_uw_hz: f64,
    pub params: ControlParameters,
}

/// Product grid of offsets applied to `nominal` at fixed drive frequencies.
pub fn offset_grid(nominal: &ControlParameters, d_omega0_hz: &[f64], d_omega_uw_hz: &[f64]) -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(d_omega0_hz.len() * d_omega_uw_hz.len());
    for &a in d_omega0_hz {
        for &b in d_omega_uw_hz {
            out.push(GridPoint {
                label: format!("dOmega0={a:+}Hz/dOmega_uw={b:+}Hz"),
                d_omega0_hz: a,
                d_omega_uw_hz: b,
                params: nominal.perturbed(a, b),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    /// Error per map inferred from the benchmarking fit.
    pub epsilon_b: f64,
    pub epsilon_b_stderr: f64,
    /// Mean standard infidelity of the same maps.
    pub epsilon_s: f64,
    pub params_label: String,
    pub d_omega0_hz: f64,
    pub d_omega_uw_hz: f64,
}

/// (ε_B, ε_S) for every grid point, using waveforms already designed at the
/// nominal parameters.
pub fn correlation_points(progressions: &[Progression], grid: &[GridPoint], max_l: usize) -> Result<Vec<CorrelationPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidBenchmark("empty parameter grid".into()));
    }
    let noise = NoiseModel::noiseless();
    par::map(grid, |gp| {
        let data = simulate_benchmark(progressions, &noise, max_l, &gp.params, 0)?;
        let fit = fit_decay(&data.decay_points(), DIM)?;
        let model = SystemModel::new(&gp.params)?;
        let infidelities = par::map(&progressions.iter().flat_map(|p| p.legs()).collect::<Vec<_>>(), |leg| {
            let out = model.evolve(leg.initial.amplitudes(), &leg.design.waveform)?;
            Ok(1.0 - leg.target.amplitudes().dotc(&out).norm_sqr())
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        Ok(CorrelationPoint {
            epsilon_b: fit.epsilon,
            epsilon_b_stderr: fit.epsilon_stderr(),
            epsilon_s: infidelities.iter().sum::<f64>() / infidelities.len() as f64,
            params_label: gp.label.clone(),
            d_omega0_hz: gp.d_omega0_hz,
            d_omega_uw_hz: gp.d_omega_uw_hz,
        })
    })
    .into_iter()
    .collect()
}

/// Settings for [`correlation_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub progressions: usize,
    pub max_len: usize,
    pub seed: u64,
    pub mode: DesignMode,
    pub optimizer: OptimizationConfig,
    pub ensemble_d_omega0_hz: f64,
    pub ensemble_d_omega_uw_hz: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            progressions: 8,
            max_len: 4,
            seed: 0,
            mode: DesignMode::Robust,
            optimizer: OptimizationConfig::default(),
            ensemble_d_omega0_hz: 100.0,
            ensemble_d_omega_uw_hz: 140.0,
        }
    }
}

/// Designs progressions at `nominal` and evaluates them on every grid point.
pub fn correlation_study(
    nominal: &ControlParameters,
    grid: &[GridPoint],
    config: &CorrelationConfig,
) -> Result<(Vec<Progression>, Vec<CorrelationPoint>)> {
    if config.progressions == 0 {
        return Err(Error::InvalidBenchmark("progressions must be at least 1".into()));
    }
    let ensemble = EnsembleSpec::grid(nominal, config.ensemble_d_omega0_hz, config.ensemble_d_omega_uw_hz)?;
    let progressions = build_progressions(
        config.progressions,
        config.max_len,
        config.seed,
        &config.optimizer,
        config.mode,
        &ensemble,
        nominal,
    )?;
    let points = correlation_points(&progressions, grid, config.max_len)?;
    Ok((progressions, points))
}

/// `count` progressions with seeds derived from `seed`.
pub fn build_progressions(
    count: usize,
    max_len: usize,
    seed: u64,
    config: &OptimizationConfig,
    mode: DesignMode,
    ensemble: &EnsembleSpec,
    nominal: &ControlParameters,
) -> Result<Vec<Progression>> {
    par::map_range(count, |p| {
        build_progression(max_len, rng::derive_seed(seed, &[p as u64]), config, mode, ensemble, nominal)
            .map_err(|e| match e {
                Error::LegDesign { leg, reason } => Error::LegDesign { leg: format!("{leg} of progression {p}"), reason },
                other => other,
            })
    })
    .into_iter()
    .collect()
}
