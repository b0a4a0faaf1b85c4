use hfqc_core::hamiltonian::{assemble, build_static, ControlPhases};
use hfqc_core::propagator::{propagate, PropagateOptions, WaveformShape};
use hfqc_core::{ControlParameters, Ket, Operator, QuantumState, Waveform, DIM};
use num_complex::Complex64;
use rand::Rng;

/// exp(−iHt) by scaling and squaring a truncated Taylor series.
fn taylor_expm(h: &Operator, t: f64) -> Operator {
    let a = h * Complex64::new(0.0, -t);
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let a = a / Complex64::new(2f64.powi(squarings), 0.0);
    let mut term = Operator::identity();
    let mut sum = Operator::identity();
    for k in 1..30 {
        term = term * a / Complex64::new(k as f64, 0.0);
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

#[test]
fn propagation_matches_a_taylor_series_oracle() {
    let p = ControlParameters::default();
    let mut r = hfqc_core::rng::stream(1, &[]);
    let shape = WaveformShape { duration_ns: 60_000, n_uw: 6, n_rf: 3 };
    let phases: Vec<f64> = (0..shape.n_controls()).map(|_| r.random_range(0.0..std::f64::consts::TAU)).collect();
    let w = shape.waveform(&phases).unwrap();
    let psi0 = QuantumState::normalized(Ket::from_fn(|_, _| Complex64::new(r.random(), r.random()))).unwrap();

    let mut expected = *psi0.amplitudes();
    for seg in w.segments() {
        let h = assemble(&p, &w.phases_at(&seg)).unwrap();
        expected = taylor_expm(&h, seg.dt) * expected;
    }
    let got = propagate(&psi0, &w, &p, PropagateOptions::default()).unwrap().final_state;
    let err = (got.amplitudes() - expected).norm();
    assert!(err < 1e-9, "error {err}");
}

#[test]
fn detuned_rabi_oscillation() {
    for (detuning, frac) in [(5e3, 0.3), (-12e3, 0.8), (20e3, 1.7)] {
        let p = ControlParameters { omega_x_hz: 0.0, omega_y_hz: 0.0, delta_uw_hz: detuning, ..Default::default() };
        let t = frac / p.omega_uw_hz;
        let w = Waveform::new(t, vec![1.1], vec![0.0], vec![0.0]).unwrap();
        let pop = propagate(&QuantumState::fiducial(), &w, &p, PropagateOptions::default())
            .unwrap()
            .final_state
            .populations()[9];
        let generalized = (p.omega_uw_hz.powi(2) + detuning * detuning).sqrt();
        let expected = (p.omega_uw_hz / generalized).powi(2) * (std::f64::consts::PI * generalized * t).sin().powi(2);
        assert!((pop - expected).abs() < 1e-10, "detuning {detuning}: {pop} vs {expected}");
    }
}

#[test]
fn quadratic_zeeman_shift_of_the_static_term() {
    // q = g_rel Ω₀² / ΔE_HF = −1.0032 · 10¹² / 9.19263177·10⁹ Hz ≈ −109.13 Hz
    let p = ControlParameters::default();
    let h = build_static(&p).unwrap();
    let q_hz = -1.0032e12 / 9.192_631_770e9;
    // flat 1..=3 are |4,3⟩, |4,2⟩, |4,1⟩: second difference of q·m² is 2q
    let d = |i: usize| h[(i, i)].re / std::f64::consts::TAU;
    let second = d(1) - 2.0 * d(2) + d(3);
    assert!((second - 2.0 * q_hz).abs() < 1e-9 * q_hz.abs(), "{second}");
    assert!((q_hz + 109.13).abs() < 0.01);
}

#[test]
fn phase_shift_of_every_channel_is_a_frame_rotation() {
    // shifting all phases of one rf channel by 2π leaves the propagator unchanged
    let p = ControlParameters::default();
    let base = ControlPhases::new(0.4, 1.9, 2.2);
    let shifted = ControlPhases::new(0.4 + std::f64::consts::TAU, 1.9, 2.2 - std::f64::consts::TAU);
    let (a, b) = (assemble(&p, &base).unwrap(), assemble(&p, &shifted).unwrap());
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!((a - b).iter().all(|z| z.norm() < 1e-14 * scale));
    assert_eq!(a.nrows(), DIM);
}
