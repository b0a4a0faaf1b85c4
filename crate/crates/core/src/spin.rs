//! Angular-momentum operators, manifold projectors and the stretched-state
//! pseudospin of the F = 4 ⊕ F = 3 ground manifold.
//!
//! The flat basis ordering is |4,4⟩, |4,3⟩, …, |4,−4⟩, |3,3⟩, …, |3,−3⟩.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Operator, Result, DIM};

/// Upper hyperfine manifold, F₊ = I + 1/2.
pub const F_UPPER: i32 = 4;
/// Lower hyperfine manifold, F₋ = I − 1/2.
pub const F_LOWER: i32 = 3;

/// A sublevel |F, m⟩ together with its position in the flat basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    f: i32,
    m: i32,
    flat: usize,
}

impl BasisIndex {
    pub fn new(f: i32, m: i32) -> Result<Self> {
        let flat = match f {
            F_UPPER if m.abs() <= F_UPPER => (F_UPPER - m) as usize,
            F_LOWER if m.abs() <= F_LOWER => (2 * F_UPPER + 1) as usize + (F_LOWER - m) as usize,
            F_UPPER | F_LOWER => return Err(Error::InvalidSublevel { f, m }),
            _ => return Err(Error::InvalidManifold(f)),
        };
        Ok(Self { f, m, flat })
    }

    pub fn from_flat(flat: usize) -> Result<Self> {
        let upper = (2 * F_UPPER + 1) as usize;
        match flat {
            i if i < upper => Ok(Self { f: F_UPPER, m: F_UPPER - i as i32, flat }),
            i if i < DIM => Ok(Self { f: F_LOWER, m: F_LOWER - (i - upper) as i32, flat }),
            _ => Err(Error::Parse(format!("flat index {flat} outside 0..{DIM}"))),
        }
    }

    pub fn f(&self) -> i32 {
        self.f
    }

    pub fn m(&self) -> i32 {
        self.m
    }

    pub fn flat(&self) -> usize {
        self.flat
    }

    /// All sixteen sublevels in flat order.
    pub fn all() -> impl Iterator<Item = BasisIndex> {
        (0..DIM).map(|i| Self::from_flat(i).expect("index in range"))
    }
}

impl std::fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "|{},{}>", self.f, self.m)
    }
}

/// Spin-F operators (Fx, Fy, Fz) in the descending-m basis |F,F⟩ … |F,−F⟩.
pub fn angular_momentum(f: i32) -> Result<[DMatrix<Complex64>; 3]> {
    if f != F_UPPER && f != F_LOWER {
        return Err(Error::InvalidManifold(f));
    }
    let n = (2 * f + 1) as usize;
    let ff = f as f64;
    let mut fx = DMatrix::zeros(n, n);
    let mut fy = DMatrix::zeros(n, n);
    let mut fz = DMatrix::zeros(n, n);
    for row in 0..n {
        let m = ff - row as f64;
        fz[(row, row)] = Complex64::new(m, 0.0);
        if row + 1 < n {
            // ⟨m|F₊|m−1⟩ with m − 1 one row further down
            let amp = (ff * (ff + 1.0) - m * (m - 1.0)).sqrt();
            fx[(row, row + 1)] = Complex64::new(0.5 * amp, 0.0);
            fx[(row + 1, row)] = Complex64::new(0.5 * amp, 0.0);
            fy[(row, row + 1)] = Complex64::new(0.0, -0.5 * amp);
            fy[(row + 1, row)] = Complex64::new(0.0, 0.5 * amp);
        }
    }
    Ok([fx, fy, fz])
}

/// Manifold-resolved operators embedded in the 16-dimensional space.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub fx4: Operator,
    pub fy4: Operator,
    pub fz4: Operator,
    pub fx3: Operator,
    pub fy3: Operator,
    pub fz3: Operator,
    pub p4: Operator,
    pub p3: Operator,
    /// |4,4⟩⟨3,3| + |3,3⟩⟨4,4|
    pub sigma_x: Operator,
    /// −i(|4,4⟩⟨3,3| − |3,3⟩⟨4,4|)
    pub sigma_y: Operator,
}

fn embed(block: &DMatrix<Complex64>, offset: usize) -> Operator {
    let mut out = Operator::zeros();
    out.view_mut((offset, offset), (block.nrows(), block.ncols())).copy_from(block);
    out
}

impl OperatorSet {
    pub fn new() -> Self {
        let [fx4, fy4, fz4] = angular_momentum(F_UPPER).expect("F = 4 is valid");
        let [fx3, fy3, fz3] = angular_momentum(F_LOWER).expect("F = 3 is valid");
        let lower = (2 * F_UPPER + 1) as usize;
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);

        let mut p4 = Operator::zeros();
        let mut p3 = Operator::zeros();
        for k in 0..DIM {
            if k < lower {
                p4[(k, k)] = one;
            } else {
                p3[(k, k)] = one;
            }
        }
        let s44 = BasisIndex::new(4, 4).unwrap().flat();
        let s33 = BasisIndex::new(3, 3).unwrap().flat();
        let mut sigma_x = Operator::zeros();
        sigma_x[(s44, s33)] = one;
        sigma_x[(s33, s44)] = one;
        let mut sigma_y = Operator::zeros();
        sigma_y[(s44, s33)] = -i;
        sigma_y[(s33, s44)] = i;

        Self {
            fx4: embed(&fx4, 0),
            fy4: embed(&fy4, 0),
            fz4: embed(&fz4, 0),
            fx3: embed(&fx3, lower),
            fy3: embed(&fy3, lower),
            fz3: embed(&fz3, lower),
            p4,
            p3,
            sigma_x,
            sigma_y,
        }
    }

    /// The six phase-dependent coupling operators in a fixed order:
    /// Fx⁽⁴⁾, Fy⁽⁴⁾, Fx⁽³⁾, Fy⁽³⁾, σx, σy.
    pub fn couplings(&self) -> [&Operator; 6] {
        [&self.fx4, &self.fy4, &self.fx3, &self.fy3, &self.sigma_x, &self.sigma_y]
    }
}

impl Default for OperatorSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Largest entry of |A − A†|.
pub fn hermiticity_residual(a: &Operator) -> f64 {
    (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
