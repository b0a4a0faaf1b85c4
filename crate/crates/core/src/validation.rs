//! Numerical invariant suite run by `hfqc validate`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::expm::unitarity_residual;
use crate::hamiltonian::{
    assemble, breit_rabi_energy, breit_rabi_second_order, AtomConstants, BreitRabiInput, ControlParameters,
    ControlPhases, StaticCoefficients,
};
use crate::propagator::{propagate, PropagateOptions, QuantumState, SystemModel, Waveform, WaveformShape};
use crate::spin::{hermiticity_residual, BasisIndex, F_LOWER, F_UPPER};
use crate::{rng, Ket, Result, DIM, TWO_PI};

pub const HERMITICITY_TOL: f64 = 1e-13;
pub const UNITARITY_TOL: f64 = 1e-10;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const BREIT_RABI_TOL: f64 = 1e-9;
pub const HALVING_RATIO_TOL: f64 = 0.1;
pub const PI_PULSE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationOptions {
    pub seed: u64,
    pub hermiticity_samples: usize,
    pub unitarity_samples: usize,
    pub gradient_samples: usize,
    pub finite_difference_step: f64,
    /// Test hook: adds this imaginary amount to one diagonal entry of every
    /// Hamiltonian checked for Hermiticity.
    pub inject_non_hermitian: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            hermiticity_samples: 100,
            unitarity_samples: 10,
            gradient_samples: 20,
            finite_difference_step: 1e-6,
            inject_non_hermitian: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn below(name: &str, residual: f64, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), passed: residual < tolerance, residual, tolerance, detail }
    }

    fn failed(name: &str, tolerance: f64, err: crate::Error) -> Self {
        Self { name: name.into(), passed: false, residual: f64::NAN, tolerance, detail: err.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn random_phases(r: &mut impl Rng) -> ControlPhases {
    ControlPhases::new(r.random_range(0.0..TWO_PI), r.random_range(0.0..TWO_PI), r.random_range(0.0..TWO_PI))
}

fn random_state(r: &mut impl Rng) -> QuantumState {
    loop {
        let v = Ket::from_fn(|_, _| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
        if let Ok(s) = QuantumState::normalized(v) {
            return s;
        }
    }
}

fn random_waveform(shape: &WaveformShape, r: &mut impl Rng) -> Result<Waveform> {
    let v: Vec<f64> = (0..shape.n_controls()).map(|_| r.random_range(0.0..TWO_PI)).collect();
    shape.waveform(&v)
}

/// Largest |H − H†| relative to the largest |H| entry over random phases.
pub fn check_hermiticity(params: &ControlParameters, options: &ValidationOptions) -> Result<CheckResult> {
    let mut r = rng::stream(options.seed, &[1]);
    let mut worst = 0.0f64;
    for _ in 0..options.hermiticity_samples {
        let mut h = assemble(params, &random_phases(&mut r))?;
        h[(0, 0)] += Complex64::new(0.0, options.inject_non_hermitian);
        let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        worst = worst.max(hermiticity_residual(&h) / scale);
    }
    Ok(CheckResult::below(
        "hermiticity",
        worst,
        HERMITICITY_TOL,
        format!("max |H - H^dagger| / max |H| over {} random phase triples", options.hermiticity_samples),
    ))
}

/// Largest |U†U − I| over propagations of random default-shape waveforms.
pub fn check_unitarity(params: &ControlParameters, options: &ValidationOptions) -> Result<CheckResult> {
    let mut r = rng::stream(options.seed, &[2]);
    let shape = WaveformShape::default();
    let mut worst = 0.0f64;
    for _ in 0..options.unitarity_samples {
        let w = random_waveform(&shape, &mut r)?;
        let opts = PropagateOptions { keep_unitary: true, keep_trace: false };
        let u = propagate(&QuantumState::fiducial(), &w, params, opts)?.total_unitary.expect("unitary requested");
        worst = worst.max(unitarity_residual(&u));
    }
    Ok(CheckResult::below(
        "unitarity",
        worst,
        UNITARITY_TOL,
        format!("max |U^dagger U - I| over {} random waveforms", options.unitarity_samples),
    ))
}

/// Analytic gradient against central differences, ‖g − g_fd‖∞ / ‖g_fd‖∞.
pub fn check_gradient(params: &ControlParameters, options: &ValidationOptions) -> Result<CheckResult> {
    let mut r = rng::stream(options.seed, &[3]);
    let shape = WaveformShape::default();
    let model = SystemModel::new(params)?;
    let h = options.finite_difference_step;
    let mut worst = 0.0f64;
    for _ in 0..options.gradient_samples {
        let w = random_waveform(&shape, &mut r)?;
        let (a, b) = (random_state(&mut r), random_state(&mut r));
        let (_, g) = model.fidelity_and_gradient(a.amplitudes(), b.amplitudes(), &w)?;
        let v = w.to_vector();
        let fid = |x: &[f64]| -> Result<f64> {
            let out = model.evolve(a.amplitudes(), &shape.waveform(x)?)?;
            Ok(b.amplitudes().dotc(&out).norm_sqr())
        };
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..v.len() {
            let mut x = v.clone();
            x[i] = v[i] + h;
            let fp = fid(&x)?;
            x[i] = v[i] - h;
            let fm = fid(&x)?;
            let fd = (fp - fm) / (2.0 * h);
            err = err.max((g[i] - fd).abs());
            scale = scale.max(fd.abs());
        }
        worst = worst.max(err / scale.max(f64::MIN_POSITIVE));
    }
    Ok(CheckResult::below(
        "gradient",
        worst,
        GRADIENT_TOL,
        format!("max relative infinity-norm error over {} random instances, step {h}", options.gradient_samples),
    ))
}

/// Compares the static rotating-frame diagonal, moved back to the lab frame,
/// with the second-order Breit-Rabi energies. The check builds its own
/// consistent g_rel from `constants`. Returns the largest mismatch relative
/// to the lab-frame energy of each sublevel, after removing one common offset.
pub fn breit_rabi_consistency(params: &ControlParameters, constants: &AtomConstants) -> Result<f64> {
    let p = static_only(params, constants);
    p.validate()?;
    lab_frame_mismatch(&p, constants, &StaticCoefficients::new(&p).diagonal())
}

fn static_only(params: &ControlParameters, constants: &AtomConstants) -> ControlParameters {
    ControlParameters {
        g_rel: constants.g_rel(),
        delta_rf_hz: 0.0,
        delta_uw_hz: 0.0,
        omega_x_hz: 0.0,
        omega_y_hz: 0.0,
        omega_uw_hz: 0.0,
        ..*params
    }
}

fn lab_frame_mismatch(p: &ControlParameters, constants: &AtomConstants, diagonal: &[f64; DIM]) -> Result<f64> {
    let hf = p.hyperfine_splitting_hz;
    let field = constants.field_for_larmor(p.omega0_hz);
    let lab = |f: i32, m: i32| -> Result<f64> {
        breit_rabi_second_order(&BreitRabiInput::from_field(f, m, field, constants, hf)?)
    };
    let omega_rf = p.omega0_hz;
    let omega_uw = lab(F_UPPER, F_UPPER)? - lab(F_LOWER, F_LOWER)?;
    let alpha = omega_uw - 7.0 * omega_rf;
    let mut exact = [0.0; DIM];
    let mut model = [0.0; DIM];
    for b in BasisIndex::all() {
        let sign = if b.f() == F_UPPER { 1.0 } else { -1.0 };
        exact[b.flat()] = lab(b.f(), b.m())?;
        model[b.flat()] = diagonal[b.flat()] / TWO_PI + sign * (alpha / 2.0 + omega_rf * b.m() as f64);
    }
    let offset = (0..DIM).map(|i| exact[i] - model[i]).sum::<f64>() / DIM as f64;
    Ok((0..DIM).map(|i| (exact[i] - offset - model[i]).abs() / exact[i].abs()).fold(0.0, f64::max))
}

pub fn check_breit_rabi(params: &ControlParameters, constants: &AtomConstants) -> Result<CheckResult> {
    let err = breit_rabi_consistency(params, constants)?;
    Ok(CheckResult::below(
        "breit_rabi_consistency",
        err,
        BREIT_RABI_TOL,
        "static diagonal vs second-order Breit-Rabi energies in the rotating frame".into(),
    ))
}

/// Error ratios E(x)/E(x/2) of the second-order expansion for a few
/// non-stretched sublevels. Each should be close to 8.
pub fn halving_ratios(constants: &AtomConstants, hyperfine_splitting_hz: f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (f, m) in [(4, 2), (4, -3), (3, 1), (3, -2)] {
        let err = |field: f64| -> Result<f64> {
            let input = BreitRabiInput::from_field(f, m, field, constants, hyperfine_splitting_hz)?;
            Ok(breit_rabi_energy(&input)? - breit_rabi_second_order(&input)?)
        };
        let mut field = 0.005 * hyperfine_splitting_hz;
        for _ in 0..3 {
            out.push(err(field)? / err(field / 2.0)?);
            field /= 2.0;
        }
    }
    Ok(out)
}

pub fn check_cubic_halving(params: &ControlParameters, constants: &AtomConstants) -> Result<CheckResult> {
    let ratios = halving_ratios(constants, params.hyperfine_splitting_hz)?;
    let worst = ratios.iter().fold(0.0f64, |m, r| m.max((r - 8.0).abs()));
    Ok(CheckResult::below(
        "cubic_halving",
        worst,
        HALVING_RATIO_TOL,
        format!("max |ratio - 8| over {} halvings of the expansion error", ratios.len()),
    ))
}

/// Microwave-only π pulse on the stretched pair against sin²(πΩt).
pub fn check_pi_pulse(params: &ControlParameters) -> Result<CheckResult> {
    let p = ControlParameters { omega_x_hz: 0.0, omega_y_hz: 0.0, delta_uw_hz: 0.0, ..*params };
    let t = 1.0 / (2.0 * p.omega_uw_hz);
    let w = Waveform::new(t, vec![0.0], vec![0.0], vec![0.0])?;
    let r = propagate(&QuantumState::fiducial(), &w, &p, PropagateOptions::default())?;
    let expected = (std::f64::consts::PI * p.omega_uw_hz * t).sin().powi(2);
    let err = (r.final_state.populations()[9] - expected).abs();
    Ok(CheckResult::below(
        "pi_pulse",
        err,
        PI_PULSE_TOL,
        format!("|4,4> -> |3,3> population after {:.3e} s vs closed-form Rabi solution", t),
    ))
}

/// Runs every check. A check that cannot be evaluated is reported as failed.
pub fn run_all(params: &ControlParameters, constants: &AtomConstants, options: &ValidationOptions) -> ValidationReport {
    let checks = vec![
        check_hermiticity(params, options).unwrap_or_else(|e| CheckResult::failed("hermiticity", HERMITICITY_TOL, e)),
        check_unitarity(params, options).unwrap_or_else(|e| CheckResult::failed("unitarity", UNITARITY_TOL, e)),
        check_gradient(params, options).unwrap_or_else(|e| CheckResult::failed("gradient", GRADIENT_TOL, e)),
        check_breit_rabi(params, constants)
            .unwrap_or_else(|e| CheckResult::failed("breit_rabi_consistency", BREIT_RABI_TOL, e)),
        check_cubic_halving(params, constants)
            .unwrap_or_else(|e| CheckResult::failed("cubic_halving", HALVING_RATIO_TOL, e)),
        check_pi_pulse(params).unwrap_or_else(|e| CheckResult::failed("pi_pulse", PI_PULSE_TOL, e)),
    ];
    ValidationReport { checks }
}
