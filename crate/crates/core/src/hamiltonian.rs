//! Rotating-frame control Hamiltonian H_C = H₀′ + H_rf(φx, φy) + H_μw(φ_μw)
//! and the exact Breit-Rabi sublevel energies used to validate its static
//! part.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spin::{BasisIndex, OperatorSet, F_UPPER};
use crate::{Error, Operator, Result, TWO_PI};

/// Upper bound on |Ω₀ / ΔE_HF| for the second-order Zeeman expansion.
pub const PERTURBATIVE_LIMIT: f64 = 0.01;

/// Physical parameter set Λ. All frequencies are linear frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParameters {
    /// Larmor frequency of F = 4 in the bias field.
    pub omega0_hz: f64,
    /// rf Larmor frequencies in the rotating frame.
    pub omega_x_hz: f64,
    pub omega_y_hz: f64,
    /// Microwave Rabi frequency on the stretched transition.
    pub omega_uw_hz: f64,
    pub delta_rf_hz: f64,
    pub delta_uw_hz: f64,
    /// g₃ / g₄.
    pub g_rel: f64,
    pub hyperfine_splitting_hz: f64,
}

impl Default for ControlParameters {
    fn default() -> Self {
        Self {
            omega0_hz: 1.0e6,
            omega_x_hz: 9.0e3,
            omega_y_hz: 9.0e3,
            omega_uw_hz: 27.5e3,
            delta_rf_hz: 0.0,
            delta_uw_hz: 0.0,
            g_rel: -1.0032,
            hyperfine_splitting_hz: 9.192_631_770e9,
        }
    }
}

impl ControlParameters {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.omega0_hz,
            self.omega_x_hz,
            self.omega_y_hz,
            self.omega_uw_hz,
            self.delta_rf_hz,
            self.delta_uw_hz,
            self.g_rel,
            self.hyperfine_splitting_hz,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite value".into()));
        }
        if self.omega0_hz <= 0.0 {
            return Err(Error::InvalidParameters("omega0_hz must be positive".into()));
        }
        if self.omega_x_hz < 0.0 || self.omega_y_hz < 0.0 || self.omega_uw_hz < 0.0 {
            return Err(Error::InvalidParameters("coupling strengths must be non-negative".into()));
        }
        if self.hyperfine_splitting_hz <= 0.0 {
            return Err(Error::InvalidParameters("hyperfine splitting must be positive".into()));
        }
        let ratio = (self.omega0_hz / self.hyperfine_splitting_hz).abs();
        if ratio >= PERTURBATIVE_LIMIT {
            return Err(Error::NotPerturbative { ratio, limit: PERTURBATIVE_LIMIT });
        }
        Ok(())
    }

    /// Stretched-transition frequency |4,4⟩ → |3,3⟩ minus ΔE_HF, in Hz.
    pub fn stretched_shift_hz(&self) -> f64 {
        let w0 = self.omega0_hz;
        -7.0 * self.g_rel * w0 * w0 / self.hyperfine_splitting_hz + (4.0 - 3.0 * self.g_rel) * w0
    }

    /// Parameters after the bias Larmor frequency moves by `d_omega0_hz` and
    /// the microwave Rabi frequency by `d_omega_uw_hz`, with the rf and μw
    /// drive frequencies held fixed. The rf detuning follows Ω₀ one-for-one
    /// and the μw detuning follows the shift of the stretched transition.
    pub fn perturbed(&self, d_omega0_hz: f64, d_omega_uw_hz: f64) -> Self {
        let mut out = *self;
        out.omega0_hz += d_omega0_hz;
        out.omega_uw_hz = (self.omega_uw_hz + d_omega_uw_hz).max(0.0);
        out.delta_rf_hz -= d_omega0_hz;
        out.delta_uw_hz -= out.stretched_shift_hz() - self.stretched_shift_hz();
        out
    }
}

/// Instantaneous control phases in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlPhases {
    pub phi_x: f64,
    pub phi_y: f64,
    pub phi_uw: f64,
}

impl ControlPhases {
    pub fn new(phi_x: f64, phi_y: f64, phi_uw: f64) -> Self {
        Self { phi_x, phi_y, phi_uw }
    }

    /// Representation with every phase in [0, 2π).
    pub fn canonical(&self) -> Self {
        Self {
            phi_x: canonical_angle(self.phi_x),
            phi_y: canonical_angle(self.phi_y),
            phi_uw: canonical_angle(self.phi_uw),
        }
    }
}

pub fn canonical_angle(phi: f64) -> f64 {
    let r = phi.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Angular-frequency coefficients of the static Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticCoefficients {
    /// multiplies P⁽⁴⁾ − P⁽³⁾
    pub manifold: f64,
    /// multiplies F_z⁽³⁾
    pub linear_lower: f64,
    /// multiplies (F_z⁽⁴⁾)² − (F_z⁽³⁾)²
    pub quadratic: f64,
    /// multiplies F_z⁽⁴⁾ − F_z⁽³⁾
    pub detuning: f64,
}

impl StaticCoefficients {
    pub fn new(params: &ControlParameters) -> Self {
        let w0 = TWO_PI * params.omega0_hz;
        let hf = TWO_PI * params.hyperfine_splitting_hz;
        let d_rf = TWO_PI * params.delta_rf_hz;
        let d_uw = TWO_PI * params.delta_uw_hz;
        let g = params.g_rel;
        let quadratic = g * w0 * w0 / hf;
        Self {
            manifold: 1.5 * w0 * (1.0 + g) - 12.5 * quadratic - 0.5 * (d_uw - 7.0 * d_rf),
            linear_lower: w0 * (1.0 + g),
            quadratic,
            detuning: -d_rf,
        }
    }

    /// Diagonal of H₀′ in the flat basis.
    pub fn diagonal(&self) -> [f64; crate::DIM] {
        let mut out = [0.0; crate::DIM];
        for b in BasisIndex::all() {
            let m = b.m() as f64;
            out[b.flat()] = if b.f() == F_UPPER {
                self.manifold + self.quadratic * m * m + self.detuning * m
            } else {
                -self.manifold + self.linear_lower * m - self.quadratic * m * m - self.detuning * m
            };
        }
        out
    }
}

/// Angular-frequency coefficients of the six coupling operators
/// (Fx⁽⁴⁾, Fy⁽⁴⁾, Fx⁽³⁾, Fy⁽³⁾, σx, σy) at the given phases, together with
/// their derivatives with respect to φx, φy and φ_μw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingCoefficients {
    pub values: [f64; 6],
    pub d_phi_x: [f64; 6],
    pub d_phi_y: [f64; 6],
    pub d_phi_uw: [f64; 6],
}

impl CouplingCoefficients {
    pub fn new(params: &ControlParameters, phases: &ControlPhases) -> Self {
        let ox = 0.5 * TWO_PI * params.omega_x_hz;
        let oy = 0.5 * TWO_PI * params.omega_y_hz;
        let ou = 0.5 * TWO_PI * params.omega_uw_hz;
        let g = params.g_rel;
        let (sx, cx) = phases.phi_x.sin_cos();
        let (sy, cy) = phases.phi_y.sin_cos();
        let (su, cu) = phases.phi_uw.sin_cos();
        Self {
            values: [
                ox * cx + oy * sy,
                -ox * sx + oy * cy,
                g * (ox * cx - oy * sy),
                g * (ox * sx + oy * cy),
                ou * cu,
                -ou * su,
            ],
            d_phi_x: [-ox * sx, -ox * cx, -g * ox * sx, g * ox * cx, 0.0, 0.0],
            d_phi_y: [oy * cy, -oy * sy, -g * oy * cy, -g * oy * sy, 0.0, 0.0],
            d_phi_uw: [0.0, 0.0, 0.0, 0.0, -ou * su, -ou * cu],
        }
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Static rotating-frame Hamiltonian H₀′.
pub fn build_static(params: &ControlParameters) -> Result<Operator> {
    params.validate()?;
    Ok(static_operator(params))
}

fn static_operator(params: &ControlParameters) -> Operator {
    let diag = StaticCoefficients::new(params).diagonal();
    Operator::from_diagonal(&nalgebra::SVector::from_fn(|i, _| real(diag[i])))
}

/// rf Hamiltonian H_rf⁽⁴⁾ + H_rf⁽³⁾ in the rotating-wave approximation.
pub fn build_rf(params: &ControlParameters, phi_x: f64, phi_y: f64) -> Operator {
    let ops = OperatorSet::new();
    let c = CouplingCoefficients::new(params, &ControlPhases::new(phi_x, phi_y, 0.0)).values;
    ops.fx4 * real(c[0]) + ops.fy4 * real(c[1]) + ops.fx3 * real(c[2]) + ops.fy3 * real(c[3])
}

/// Microwave Hamiltonian (Ω_μw/2)[cos φ σx − sin φ σy].
pub fn build_uw(params: &ControlParameters, phi_uw: f64) -> Operator {
    let ops = OperatorSet::new();
    let c = CouplingCoefficients::new(params, &ControlPhases::new(0.0, 0.0, phi_uw)).values;
    ops.sigma_x * real(c[4]) + ops.sigma_y * real(c[5])
}

/// Full control Hamiltonian H_C at the given phases.
pub fn assemble(params: &ControlParameters, phases: &ControlPhases) -> Result<Operator> {
    params.validate()?;
    let ops = OperatorSet::new();
    let c = CouplingCoefficients::new(params, phases).values;
    let mut h = static_operator(params);
    for (coef, op) in c.iter().zip(ops.couplings()) {
        h += op * real(*coef);
    }
    Ok(h)
}

/// Electron and nuclear g-factors needed only by the exact Breit-Rabi
/// energies. Defaults are the Cs 6S₁/₂ literature values (g_J, g_I).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomConstants {
    pub g_s: f64,
    pub g_i: f64,
}

impl Default for AtomConstants {
    fn default() -> Self {
        Self { g_s: 2.002_540_32, g_i: -0.000_398_853_95 }
    }
}

impl AtomConstants {
    /// μ_B·B (as a frequency) that produces the given F = 4 Larmor frequency,
    /// from Ω₀ = ΔE_HF·x/8 + x̄.
    pub fn field_for_larmor(&self, omega0_hz: f64) -> f64 {
        omega0_hz / ((self.g_s - self.g_i) / 8.0 + self.g_i)
    }

    /// g₃/g₄ implied by these constants.
    pub fn g_rel(&self) -> f64 {
        -(self.g_s - 9.0 * self.g_i) / (self.g_s + 7.0 * self.g_i)
    }
}

/// Arguments of the Breit-Rabi formula for one sublevel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreitRabiInput {
    pub f: i32,
    pub m: i32,
    /// (g_S − g_I) μ_B B / ΔE_HF
    pub x: f64,
    /// g_I μ_B B in Hz
    pub x_bar_hz: f64,
    pub hyperfine_splitting_hz: f64,
}

impl BreitRabiInput {
    /// Builds the Breit-Rabi variables from μ_B·B expressed in Hz.
    pub fn from_field(
        f: i32,
        m: i32,
        mu_b_field_hz: f64,
        constants: &AtomConstants,
        hyperfine_splitting_hz: f64,
    ) -> Result<Self> {
        BasisIndex::new(f, m)?;
        Ok(Self {
            f,
            m,
            x: mu_b_field_hz * (constants.g_s - constants.g_i) / hyperfine_splitting_hz,
            x_bar_hz: constants.g_i * mu_b_field_hz,
            hyperfine_splitting_hz,
        })
    }
}

/// Exact sublevel energy E(m±) in Hz.
pub fn breit_rabi_energy(input: &BreitRabiInput) -> Result<f64> {
    BasisIndex::new(input.f, input.m)?;
    let hf = input.hyperfine_splitting_hz;
    let m = input.m as f64;
    let x = input.x;
    let sign = if input.f == F_UPPER { 1.0 } else { -1.0 };
    let root = if input.m.abs() == F_UPPER {
        // stretched states: the radicand is the perfect square (1 ± x)²
        1.0 + m * x / 4.0
    } else {
        (1.0 + m * x / 2.0 + x * x).sqrt()
    };
    Ok(-hf / 16.0 + m * input.x_bar_hz + sign * 0.5 * hf * root)
}

/// Second-order expansion of [`breit_rabi_energy`] in x, in Hz.
pub fn breit_rabi_second_order(input: &BreitRabiInput) -> Result<f64> {
    BasisIndex::new(input.f, input.m)?;
    let hf = input.hyperfine_splitting_hz;
    let m = input.m as f64;
    let x = input.x;
    let xb = input.x_bar_hz;
    let body = if input.f == F_UPPER {
        (hf / 2.0 + hf * x * x / 4.0) + (hf * x / 8.0 + xb) * m - hf * x * x / 64.0 * m * m
    } else {
        -(hf / 2.0 + hf * x * x / 4.0) - (hf * x / 8.0 - xb) * m + hf * x * x / 64.0 * m * m
    };
    Ok(-hf / 16.0 + body)
}
