//! Piecewise-constant evolution under H_C, state-map fidelity, and exact
//! fidelity gradients with respect to every control phase.
//!
//! H_C couples each sublevel only to its m ± 1 neighbours inside a manifold,
//! plus the single microwave link |4,4⟩ ↔ |3,3⟩. In the chain ordering
//! |3,−3⟩ … |3,3⟩, |4,4⟩ … |4,−4⟩ it is therefore tridiagonal. A diagonal
//! gauge removes the link phases, leaving a real symmetric tridiagonal matrix
//! whose eigendecomposition gives each segment propagator exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::{
    canonical_angle, ControlParameters, ControlPhases, CouplingCoefficients, StaticCoefficients,
};
use crate::spin::{BasisIndex, OperatorSet};
use crate::tridiag::{self, TridiagEigen};
use crate::{Error, Ket, Operator, Result, DIM};

const NORM_TOL: f64 = 1e-12;
const NORM_DRIFT_TOL: f64 = 1e-10;

/// Normalized pure state in the flat basis ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumState(Ket);

impl QuantumState {
    /// Wraps amplitudes that are already normalized to within 1e−12.
    pub fn new(amplitudes: Ket) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL || !norm.is_finite() {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self(amplitudes))
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amplitudes: Ket) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self(amplitudes / Complex64::new(norm, 0.0)))
    }

    pub fn from_slice(amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != DIM {
            return Err(Error::Parse(format!("expected {DIM} amplitudes, got {}", amplitudes.len())));
        }
        Self::new(Ket::from_column_slice(amplitudes))
    }

    /// The sublevel |F, m⟩.
    pub fn basis(f: i32, m: i32) -> Result<Self> {
        let idx = BasisIndex::new(f, m)?;
        Ok(Self(Ket::from_fn(|i, _| {
            if i == idx.flat() {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })))
    }

    /// The fiducial state |4,4⟩.
    pub fn fiducial() -> Self {
        Self::basis(4, 4).expect("|4,4> exists")
    }

    pub fn amplitudes(&self) -> &Ket {
        &self.0
    }

    pub fn populations(&self) -> [f64; DIM] {
        std::array::from_fn(|i| self.0[i].norm_sqr())
    }

    /// ⟨self|other⟩
    pub fn overlap(&self, other: &QuantumState) -> Complex64 {
        self.0.dotc(&other.0)
    }
}

/// |⟨target|achieved⟩|², insensitive to either global phase.
pub fn fidelity(target: &QuantumState, achieved: &QuantumState) -> f64 {
    target.overlap(achieved).norm_sqr().min(1.0)
}

/// Duration and per-channel step counts of a waveform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformShape {
    /// Total duration in seconds; stored as integer nanoseconds to keep the
    /// shape hashable and exactly comparable.
    pub duration_ns: u64,
    pub n_uw: usize,
    pub n_rf: usize,
}

impl Default for WaveformShape {
    fn default() -> Self {
        Self { duration_ns: 300_000, n_uw: 30, n_rf: 15 }
    }
}

impl WaveformShape {
    pub fn duration_s(&self) -> f64 {
        self.duration_ns as f64 / 1e9
    }

    /// Number of real control variables, N_uw + 2·N_rf.
    pub fn n_controls(&self) -> usize {
        self.n_uw + 2 * self.n_rf
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_uw == 0 || self.n_rf == 0 {
            return Err(Error::InvalidWaveform("every channel needs at least one step".into()));
        }
        if self.duration_ns == 0 {
            return Err(Error::InvalidWaveform("duration must be positive".into()));
        }
        Ok(())
    }

    /// Waveform from a control vector laid out as [μw…, rf-x…, rf-y…].
    pub fn waveform(&self, controls: &[f64]) -> Result<Waveform> {
        if controls.len() != self.n_controls() {
            return Err(Error::InvalidWaveform(format!(
                "expected {} controls, got {}",
                self.n_controls(),
                controls.len()
            )));
        }
        let (uw, rf) = controls.split_at(self.n_uw);
        let (rfx, rfy) = rf.split_at(self.n_rf);
        Waveform::new(self.duration_s(), uw.to_vec(), rfx.to_vec(), rfy.to_vec())
    }
}

/// Piecewise-constant phase waveform. Each channel divides [0, T] into equal
/// steps of its own length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    duration_s: f64,
    uw_phases: Vec<f64>,
    rfx_phases: Vec<f64>,
    rfy_phases: Vec<f64>,
}

/// One interval of the merged channel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_s: f64,
    pub dt: f64,
    pub uw_index: usize,
    pub rf_index: usize,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Waveform {
    pub fn new(duration_s: f64, uw: Vec<f64>, rfx: Vec<f64>, rfy: Vec<f64>) -> Result<Self> {
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(Error::InvalidWaveform(format!("duration must be positive, got {duration_s}")));
        }
        if uw.is_empty() || rfx.is_empty() {
            return Err(Error::InvalidWaveform("every channel needs at least one step".into()));
        }
        if rfx.len() != rfy.len() {
            return Err(Error::InvalidWaveform(format!(
                "rf channels differ in length ({} vs {})",
                rfx.len(),
                rfy.len()
            )));
        }
        if uw.iter().chain(&rfx).chain(&rfy).any(|p| !p.is_finite()) {
            return Err(Error::InvalidWaveform("non-finite phase".into()));
        }
        Ok(Self { duration_s, uw_phases: uw, rfx_phases: rfx, rfy_phases: rfy })
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn uw_phases(&self) -> &[f64] {
        &self.uw_phases
    }

    pub fn rfx_phases(&self) -> &[f64] {
        &self.rfx_phases
    }

    pub fn rfy_phases(&self) -> &[f64] {
        &self.rfy_phases
    }

    pub fn n_uw(&self) -> usize {
        self.uw_phases.len()
    }

    pub fn n_rf(&self) -> usize {
        self.rfx_phases.len()
    }

    pub fn n_controls(&self) -> usize {
        self.n_uw() + 2 * self.n_rf()
    }

    /// Control vector laid out as [μw…, rf-x…, rf-y…].
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_controls());
        v.extend_from_slice(&self.uw_phases);
        v.extend_from_slice(&self.rfx_phases);
        v.extend_from_slice(&self.rfy_phases);
        v
    }

    /// Same waveform with every phase mapped into [0, 2π).
    pub fn canonicalized(&self) -> Self {
        let c = |v: &[f64]| v.iter().map(|&p| canonical_angle(p)).collect();
        Self {
            duration_s: self.duration_s,
            uw_phases: c(&self.uw_phases),
            rfx_phases: c(&self.rfx_phases),
            rfy_phases: c(&self.rfy_phases),
        }
    }

    pub fn phases_at(&self, segment: &Segment) -> ControlPhases {
        ControlPhases::new(
            self.rfx_phases[segment.rf_index],
            self.rfy_phases[segment.rf_index],
            self.uw_phases[segment.uw_index],
        )
    }

    /// Coarsest common refinement of the μw and rf step grids.
    pub fn segments(&self) -> Vec<Segment> {
        let (nu, nr) = (self.n_uw() as u64, self.n_rf() as u64);
        let lcm = nu / gcd(nu, nr) * nr;
        let (su, sr) = (lcm / nu, lcm / nr);
        let mut ticks: Vec<u64> = (0..=nu).map(|k| k * su).chain((0..=nr).map(|k| k * sr)).collect();
        ticks.sort_unstable();
        ticks.dedup();
        let t = self.duration_s;
        ticks
            .windows(2)
            .map(|w| Segment {
                start_s: t * w[0] as f64 / lcm as f64,
                dt: t * (w[1] - w[0]) as f64 / lcm as f64,
                uw_index: (w[0] / su) as usize,
                rf_index: (w[0] / sr) as usize,
            })
            .collect()
    }
}

/// Output of [`propagate`].
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub final_state: QuantumState,
    pub total_unitary: Option<Operator>,
    /// (time, state) at t = 0 and after every merged segment.
    pub trace: Option<Vec<(f64, QuantumState)>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PropagateOptions {
    pub keep_unitary: bool,
    pub keep_trace: bool,
}

/// Chain position → flat basis index.
pub const CHAIN_TO_FLAT: [usize; DIM] = [15, 14, 13, 12, 11, 10, 9, 0, 1, 2, 3, 4, 5, 6, 7, 8];

fn to_chain(psi: &Ket) -> [Complex64; DIM] {
    std::array::from_fn(|c| psi[CHAIN_TO_FLAT[c]])
}

fn from_chain(x: &[Complex64; DIM]) -> Ket {
    let mut out = Ket::zeros();
    for (c, &f) in CHAIN_TO_FLAT.iter().enumerate() {
        out[f] = x[c];
    }
    out
}

/// H_C for one parameter set, pre-arranged for fast segment evaluation.
#[derive(Debug, Clone)]
pub struct SystemModel {
    params: ControlParameters,
    diag: [f64; DIM],
    /// links[c][o]: entry (c, c+1) of coupling operator `o`, chain ordering.
    links: [[Complex64; 6]; DIM - 1],
}

/// Eigendecomposition of one segment Hamiltonian, H = (D Q) Λ (D Q)†.
#[derive(Debug, Clone)]
pub struct SegmentEigen {
    eig: TridiagEigen<DIM>,
    gauge: [Complex64; DIM],
}

impl SegmentEigen {
    pub fn values(&self) -> &[f64; DIM] {
        &self.eig.values
    }

    /// Eigenbasis coordinates Q^T D† x.
    fn eigen_coords(&self, x: &[Complex64; DIM]) -> [Complex64; DIM] {
        let y: [Complex64; DIM] = std::array::from_fn(|c| self.gauge[c].conj() * x[c]);
        std::array::from_fn(|j| {
            let q = &self.eig.vectors[j];
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..DIM {
                acc += y[c] * q[c];
            }
            acc
        })
    }

    fn chain_coords(&self, z: &[Complex64; DIM]) -> [Complex64; DIM] {
        let mut y = [Complex64::new(0.0, 0.0); DIM];
        for (zj, q) in z.iter().zip(&self.eig.vectors) {
            for c in 0..DIM {
                y[c] += *zj * q[c];
            }
        }
        std::array::from_fn(|c| self.gauge[c] * y[c])
    }

    /// exp(∓iHdt) x in chain coordinates (`backward` applies the adjoint).
    fn apply(&self, x: &[Complex64; DIM], dt: f64, backward: bool) -> [Complex64; DIM] {
        let sign = if backward { 1.0 } else { -1.0 };
        let mut z = self.eigen_coords(x);
        for (zj, lam) in z.iter_mut().zip(&self.eig.values) {
            *zj *= Complex64::from_polar(1.0, sign * lam * dt);
        }
        self.chain_coords(&z)
    }
}

impl SystemModel {
    pub fn new(params: &ControlParameters) -> Result<Self> {
        params.validate()?;
        let flat_diag = StaticCoefficients::new(params).diagonal();
        let ops = OperatorSet::new();
        let couplings = ops.couplings();
        let links = std::array::from_fn(|c| {
            let (p, q) = (CHAIN_TO_FLAT[c], CHAIN_TO_FLAT[c + 1]);
            std::array::from_fn(|o| couplings[o][(p, q)])
        });
        Ok(Self { params: *params, diag: std::array::from_fn(|c| flat_diag[CHAIN_TO_FLAT[c]]), links })
    }

    pub fn params(&self) -> &ControlParameters {
        &self.params
    }

    fn link_values(&self, coeffs: &[f64; 6]) -> [Complex64; DIM - 1] {
        std::array::from_fn(|c| {
            self.links[c].iter().zip(coeffs).map(|(l, k)| l * k).sum::<Complex64>()
        })
    }

    /// Dense H_C in the flat basis, rebuilt from the chain representation.
    pub fn hamiltonian(&self, phases: &ControlPhases) -> Operator {
        let coeffs = CouplingCoefficients::new(&self.params, phases);
        let h = self.link_values(&coeffs.values);
        let mut out = Operator::zeros();
        for c in 0..DIM {
            out[(CHAIN_TO_FLAT[c], CHAIN_TO_FLAT[c])] = Complex64::new(self.diag[c], 0.0);
            if c + 1 < DIM {
                let (p, q) = (CHAIN_TO_FLAT[c], CHAIN_TO_FLAT[c + 1]);
                out[(p, q)] = h[c];
                out[(q, p)] = h[c].conj();
            }
        }
        out
    }

    pub fn segment_eigen(&self, phases: &ControlPhases) -> Result<SegmentEigen> {
        let coeffs = CouplingCoefficients::new(&self.params, phases);
        let h = self.link_values(&coeffs.values);
        let mut gauge = [Complex64::new(1.0, 0.0); DIM];
        let mut off = [0.0; DIM];
        for c in 0..DIM - 1 {
            let r = h[c].norm();
            off[c] = r;
            gauge[c + 1] = if r > 0.0 { gauge[c] * h[c].conj() / r } else { gauge[c] };
        }
        let eig = tridiag::decompose(&self.diag, &off)?;
        Ok(SegmentEigen { eig, gauge })
    }

    /// Final state without bookkeeping; the hot path for simulation.
    pub fn evolve(&self, initial: &Ket, waveform: &Waveform) -> Result<Ket> {
        let mut x = to_chain(initial);
        for seg in waveform.segments() {
            let eig = self.segment_eigen(&waveform.phases_at(&seg))?;
            x = eig.apply(&x, seg.dt, false);
        }
        Ok(from_chain(&x))
    }

    /// Fidelity |⟨target|ψ(T)⟩|² and its gradient with respect to the control
    /// vector [μw…, rf-x…, rf-y…], by forward states and backward costates.
    pub fn fidelity_and_gradient(
        &self,
        initial: &Ket,
        target: &Ket,
        waveform: &Waveform,
    ) -> Result<(f64, Vec<f64>)> {
        let segments = waveform.segments();
        let mut eigs = Vec::with_capacity(segments.len());
        let mut forward = Vec::with_capacity(segments.len() + 1);
        forward.push(to_chain(initial));
        for seg in &segments {
            let eig = self.segment_eigen(&waveform.phases_at(seg))?;
            let next = eig.apply(forward.last().unwrap(), seg.dt, false);
            forward.push(next);
            eigs.push(eig);
        }
        let target_chain = to_chain(target);
        let final_chain = forward.last().unwrap();
        let overlap: Complex64 =
            target_chain.iter().zip(final_chain).map(|(t, x)| t.conj() * x).sum();
        let fid = overlap.norm_sqr();

        let (n_uw, n_rf) = (waveform.n_uw(), waveform.n_rf());
        let mut grad = vec![0.0; waveform.n_controls()];
        let mut costate = target_chain;
        for (k, seg) in segments.iter().enumerate().rev() {
            let eig = &eigs[k];
            let t = coupling_traces(eig, &forward[k], &costate, seg.dt, &self.links);
            let coeffs = CouplingCoefficients::new(&self.params, &waveform.phases_at(seg));
            let dir = |d: &[f64; 6]| {
                let s: Complex64 = d.iter().zip(&t).map(|(a, b)| b * a).sum();
                2.0 * (overlap.conj() * s).re
            };
            grad[seg.uw_index] += dir(&coeffs.d_phi_uw);
            grad[n_uw + seg.rf_index] += dir(&coeffs.d_phi_x);
            grad[n_uw + n_rf + seg.rf_index] += dir(&coeffs.d_phi_y);
            costate = eig.apply(&costate, seg.dt, true);
        }
        Ok((fid, grad))
    }
}

/// t_o = Σ_pq (∂H/∂c_o)_pq E_pq for the six coupling operators, where
/// ⟨b|∂U/∂θ|a⟩ = Σ_o (∂c_o/∂θ) t_o and U = exp(−iH dt).
fn coupling_traces(
    eig: &SegmentEigen,
    a: &[Complex64; DIM],
    b: &[Complex64; DIM],
    dt: f64,
    links: &[[Complex64; 6]; DIM - 1],
) -> [Complex64; 6] {
    let alpha = eig.eigen_coords(a);
    let beta = eig.eigen_coords(b);
    let lam = &eig.eig.values;
    let q = &eig.eig.vectors;
    // W = C Qᵀ with C_jk = conj(β_j) Γ_jk α_k, where
    // Γ_jk = −i dt e^{−i(λj+λk)dt/2} sinc((λj−λk)dt/2).
    let mut w = [[Complex64::new(0.0, 0.0); DIM]; DIM];
    for j in 0..DIM {
        let bj = beta[j].conj();
        let mut row = [Complex64::new(0.0, 0.0); DIM];
        for k in 0..DIM {
            let half = 0.5 * (lam[j] - lam[k]) * dt;
            let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
            let gamma = Complex64::from_polar(dt * sinc, -0.5 * (lam[j] + lam[k]) * dt - std::f64::consts::FRAC_PI_2);
            let ck = bj * gamma * alpha[k];
            for (r, qk) in row.iter_mut().zip(&q[k]) {
                *r += ck * qk;
            }
        }
        w[j] = row;
    }
    // G_pq = Σ_j Q_pj W_jq on the two off-diagonals, then E_pq = conj(u_p) u_q G_pq.
    let u = &eig.gauge;
    let mut out = [Complex64::new(0.0, 0.0); 6];
    for c in 0..DIM - 1 {
        let mut upper = Complex64::new(0.0, 0.0);
        let mut lower = Complex64::new(0.0, 0.0);
        for j in 0..DIM {
            upper += w[j][c + 1] * q[j][c];
            lower += w[j][c] * q[j][c + 1];
        }
        let e_up = u[c].conj() * u[c + 1] * upper;
        let e_lo = u[c + 1].conj() * u[c] * lower;
        for (o, l) in links[c].iter().enumerate() {
            if l.norm_sqr() > 0.0 {
                out[o] += l * e_up + l.conj() * e_lo;
            }
        }
    }
    out
}

/// Evolves `initial` through `waveform` under `params`.
pub fn propagate(
    initial: &QuantumState,
    waveform: &Waveform,
    params: &ControlParameters,
    options: PropagateOptions,
) -> Result<EvolutionResult> {
    let model = SystemModel::new(params)?;
    let segments = waveform.segments();
    let mut x = to_chain(initial.amplitudes());
    let mut columns: Option<Vec<[Complex64; DIM]>> = options.keep_unitary.then(|| {
        (0..DIM)
            .map(|i| {
                let mut e = Ket::zeros();
                e[i] = Complex64::new(1.0, 0.0);
                to_chain(&e)
            })
            .collect()
    });
    let mut trace = options.keep_trace.then(|| vec![(0.0, *initial)]);
    for seg in &segments {
        let eig = model.segment_eigen(&waveform.phases_at(seg))?;
        x = eig.apply(&x, seg.dt, false);
        if let Some(cols) = columns.as_mut() {
            for col in cols.iter_mut() {
                *col = eig.apply(col, seg.dt, false);
            }
        }
        if let Some(tr) = trace.as_mut() {
            let state = from_chain(&x);
            let norm = state.norm();
            tr.push((seg.start_s + seg.dt, QuantumState(state / Complex64::new(norm, 0.0))));
        }
    }
    let final_ket = from_chain(&x);
    let drift = (final_ket.norm() - 1.0).abs();
    if drift > NORM_DRIFT_TOL {
        return Err(Error::NormDrift(drift));
    }
    let total_unitary = columns.map(|cols| {
        let mut u = Operator::zeros();
        for (i, col) in cols.iter().enumerate() {
            u.set_column(i, &from_chain(col));
        }
        u
    });
    if let Some(tr) = trace.as_mut() {
        if let Some(last) = tr.last_mut() {
            last.0 = waveform.duration_s();
        }
    }
    Ok(EvolutionResult { final_state: QuantumState(final_ket), total_unitary, trace })
}

/// ∂F/∂φ for every control phase, laid out as [μw…, rf-x…, rf-y…].
pub fn fidelity_gradient(
    initial: &QuantumState,
    target: &QuantumState,
    waveform: &Waveform,
    params: &ControlParameters,
) -> Result<Vec<f64>> {
    let model = SystemModel::new(params)?;
    Ok(model.fidelity_and_gradient(initial.amplitudes(), target.amplitudes(), waveform)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expm::{expm_step, unitarity_residual};
    use crate::hamiltonian::assemble;
    use rand::Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn random_waveform(shape: &WaveformShape, seed: u64) -> Waveform {
        let mut rng = crate::rng::stream(seed, &[]);
        let v: Vec<f64> = (0..shape.n_controls()).map(|_| rng.random_range(0.0..crate::TWO_PI)).collect();
        shape.waveform(&v).unwrap()
    }

    fn random_state(seed: u64) -> QuantumState {
        let mut rng = crate::rng::stream(seed, &[7]);
        QuantumState::normalized(Ket::from_fn(|_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        }))
        .unwrap()
    }

    #[test]
    fn chain_ordering_is_a_permutation_and_tridiagonalizes() {
        let mut seen = [false; DIM];
        CHAIN_TO_FLAT.iter().for_each(|&f| seen[f] = true);
        assert!(seen.iter().all(|&s| s));
        let p = ControlParameters::default();
        let model = SystemModel::new(&p).unwrap();
        for k in 0..20 {
            let phases = ControlPhases::new(0.3 * k as f64, 1.1 * k as f64, 2.3 * k as f64);
            let dense = assemble(&p, &phases).unwrap();
            let chain = model.hamiltonian(&phases);
            let diff = (dense - chain).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-9, "diff {diff}");
            for (r, &pr) in CHAIN_TO_FLAT.iter().enumerate() {
                for (c, &pc) in CHAIN_TO_FLAT.iter().enumerate() {
                    if r.abs_diff(c) > 1 {
                        assert_eq!(dense[(pr, pc)].norm(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn segment_propagator_matches_dense_exponential() {
        let p = ControlParameters::default();
        let model = SystemModel::new(&p).unwrap();
        for k in 0..10 {
            let phases = ControlPhases::new(0.7 * k as f64, 2.0 - k as f64, 0.4 * k as f64);
            let dense = expm_step(&assemble(&p, &phases).unwrap(), 1e-5).unwrap();
            let eig = model.segment_eigen(&phases).unwrap();
            for i in 0..DIM {
                let mut e = Ket::zeros();
                e[i] = Complex64::new(1.0, 0.0);
                let col = from_chain(&eig.apply(&to_chain(&e), 1e-5, false));
                let diff = (col - dense.column(i)).norm();
                assert!(diff < 1e-12, "column {i}: {diff}");
            }
        }
    }

    #[test]
    fn merged_grid() {
        let shape = WaveformShape::default();
        let w = random_waveform(&shape, 1);
        let segs = w.segments();
        assert_eq!(segs.len(), 30);
        let total: f64 = segs.iter().map(|s| s.dt).sum();
        assert!((total - 300e-6).abs() < 1e-18);
        assert_eq!(segs[3].uw_index, 3);
        assert_eq!(segs[3].rf_index, 1);
        let odd = Waveform::new(1.0, vec![0.0; 3], vec![0.0; 2], vec![0.0; 2]).unwrap();
        let s = odd.segments();
        let idx: Vec<_> = s.iter().map(|s| (s.uw_index, s.rf_index)).collect();
        assert_eq!(idx, vec![(0, 0), (1, 0), (1, 1), (2, 1)]);
        assert!((s[1].dt - 1.0 / 6.0).abs() < 1e-15);
        assert!(Waveform::new(1.0, vec![], vec![0.0], vec![0.0]).is_err());
        assert!(Waveform::new(1.0, vec![0.0], vec![0.0], vec![]).is_err());
        assert!(Waveform::new(0.0, vec![0.0], vec![0.0], vec![0.0]).is_err());
        assert_eq!(shape.n_controls(), 60);
    }

    #[test]
    fn fidelity_examples() {
        let a = QuantumState::basis(4, 4).unwrap();
        let b = QuantumState::basis(3, 3).unwrap();
        assert_eq!(fidelity(&a, &a), 1.0);
        assert_eq!(fidelity(&a, &b), 0.0);
        let sup = QuantumState::normalized(a.amplitudes() + b.amplitudes()).unwrap();
        assert!((fidelity(&a, &sup) - 0.5).abs() < 1e-15);
        let phased = QuantumState::new(sup.amplitudes() * Complex64::from_polar(1.0, 0.83)).unwrap();
        assert_eq!(fidelity(&a, &phased), fidelity(&a, &sup));
        assert!(QuantumState::new(Ket::zeros()).is_err());
        assert!((FRAC_1_SQRT_2 * FRAC_1_SQRT_2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uncoupled_evolution_keeps_populations() {
        let p = ControlParameters { omega_x_hz: 0.0, omega_y_hz: 0.0, omega_uw_hz: 0.0, ..Default::default() };
        let w = random_waveform(&WaveformShape::default(), 2);
        let r = propagate(&QuantumState::fiducial(), &w, &p, PropagateOptions::default()).unwrap();
        assert!((r.final_state.populations()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn microwave_only_pi_pulse() {
        let p = ControlParameters { omega_x_hz: 0.0, omega_y_hz: 0.0, ..Default::default() };
        let t = 1.0 / (2.0 * p.omega_uw_hz);
        let w = Waveform::new(t, vec![0.0; 4], vec![0.0], vec![0.0]).unwrap();
        let r = propagate(&QuantumState::fiducial(), &w, &p, PropagateOptions::default()).unwrap();
        let pop = r.final_state.populations()[9];
        let expected = (2.0 * PI * p.omega_uw_hz * t / 2.0).sin().powi(2);
        assert!((pop - expected).abs() < 1e-10);
        assert!((pop - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unitary_trace_and_time_reversal() {
        let p = ControlParameters::default();
        let w = random_waveform(&WaveformShape::default(), 3);
        let psi0 = random_state(4);
        let opts = PropagateOptions { keep_unitary: true, keep_trace: true };
        let r = propagate(&psi0, &w, &p, opts).unwrap();
        let u = r.total_unitary.unwrap();
        assert!(unitarity_residual(&u) < 1e-10);
        assert!((u * psi0.amplitudes() - r.final_state.amplitudes()).norm() < 1e-12);
        let back = u.adjoint() * r.final_state.amplitudes();
        assert!((back - psi0.amplitudes()).norm() < 1e-9);
        let trace = r.trace.unwrap();
        assert_eq!(trace.len(), 31);
        assert_eq!(trace[0].0, 0.0);
        assert_eq!(trace[30].0, w.duration_s());
        assert!(trace.iter().all(|(_, s)| (s.amplitudes().norm() - 1.0).abs() < 1e-10));
    }

    #[test]
    fn composition_over_halves() {
        let p = ControlParameters::default();
        let shape = WaveformShape { duration_ns: 320_000, n_uw: 32, n_rf: 16 };
        let w = random_waveform(&shape, 5);
        let psi0 = random_state(6);
        let first = Waveform::new(160e-6, w.uw_phases()[..16].to_vec(), w.rfx_phases()[..8].to_vec(), w.rfy_phases()[..8].to_vec()).unwrap();
        let second = Waveform::new(160e-6, w.uw_phases()[16..].to_vec(), w.rfx_phases()[8..].to_vec(), w.rfy_phases()[8..].to_vec()).unwrap();
        let opts = PropagateOptions::default();
        let full = propagate(&psi0, &w, &p, opts).unwrap().final_state;
        let mid = propagate(&psi0, &first, &p, opts).unwrap().final_state;
        let split = propagate(&mid, &second, &p, opts).unwrap().final_state;
        assert!((full.amplitudes() - split.amplitudes()).norm() < 1e-11);
    }

    fn finite_difference(model: &SystemModel, a: &Ket, b: &Ket, w: &Waveform, h: f64) -> Vec<f64> {
        let shape = WaveformShape { duration_ns: (w.duration_s() * 1e9).round() as u64, n_uw: w.n_uw(), n_rf: w.n_rf() };
        let v = w.to_vector();
        (0..v.len())
            .map(|i| {
                let mut plus = v.clone();
                let mut minus = v.clone();
                plus[i] += h;
                minus[i] -= h;
                let fp = fidelity_of(model, a, b, &shape.waveform(&plus).unwrap());
                let fm = fidelity_of(model, a, b, &shape.waveform(&minus).unwrap());
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn fidelity_of(model: &SystemModel, a: &Ket, b: &Ket, w: &Waveform) -> f64 {
        b.dotc(&model.evolve(a, w).unwrap()).norm_sqr()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = ControlParameters::default();
        let model = SystemModel::new(&p).unwrap();
        for (k, shape) in [WaveformShape::default(), WaveformShape { duration_ns: 100_000, n_uw: 7, n_rf: 3 }]
            .iter()
            .enumerate()
        {
            let w = random_waveform(shape, 10 + k as u64);
            let (a, b) = (random_state(20 + k as u64), random_state(30 + k as u64));
            let (f, g) = model.fidelity_and_gradient(a.amplitudes(), b.amplitudes(), &w).unwrap();
            assert!((f - fidelity_of(&model, a.amplitudes(), b.amplitudes(), &w)).abs() < 1e-13);
            let fd = finite_difference(&model, a.amplitudes(), b.amplitudes(), &w, 1e-6);
            let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let err = g.iter().zip(&fd).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(err < 1e-6 * scale, "shape {k}: err {err}, scale {scale}");
        }
    }

    #[test]
    fn microwave_gradient_vanishes_without_coupling() {
        let p = ControlParameters { omega_uw_hz: 0.0, ..Default::default() };
        let w = random_waveform(&WaveformShape::default(), 40);
        let g = fidelity_gradient(&random_state(41), &random_state(42), &w, &p).unwrap();
        assert!(g[..30].iter().all(|&x| x == 0.0));
        assert!(g[30..].iter().any(|&x| x != 0.0));
    }
}
