//! Exact propagator exp(−iHΔt) for a time-independent Hermitian H.

use nalgebra::SVector;
use num_complex::Complex64;

use crate::spin::hermiticity_residual;
use crate::{Error, Operator, Result};

/// Largest tolerated |H − H†| relative to the largest entry of H.
const HERMITIAN_TOL: f64 = 1e-12;

/// exp(−i H dt) through the Hermitian eigendecomposition of `h`.
pub fn expm_step(h: &Operator, dt: f64) -> Result<Operator> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidWaveform(format!("time step must be positive, got {dt}")));
    }
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let residual = hermiticity_residual(h);
    if residual > HERMITIAN_TOL * scale.max(1.0) {
        return Err(Error::NonHermitian(residual));
    }
    let eig = h.try_symmetric_eigen(f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    let phases = SVector::<Complex64, { crate::DIM }>::from_fn(|i, _| {
        Complex64::from_polar(1.0, -eig.eigenvalues[i] * dt)
    });
    let v = &eig.eigenvectors;
    Ok(v * Operator::from_diagonal(&phases) * v.adjoint())
}

/// Largest entry of |U†U − I|.
pub fn unitarity_residual(u: &Operator) -> f64 {
    (u.adjoint() * u - Operator::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
