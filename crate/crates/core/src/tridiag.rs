//! Eigendecomposition of real symmetric tridiagonal matrices by implicit QL
//! iterations with Wilkinson-type shifts (the classic `tql2` scheme).

use crate::{Error, Result};

/// Eigenvalues and orthonormal eigenvectors of a symmetric tridiagonal matrix.
///
/// `vectors[j]` is the eigenvector belonging to `values[j]`. Eigenvalues are
/// not sorted.
#[derive(Debug, Clone)]
pub struct TridiagEigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: [[f64; N]; N],
}

/// Decomposes the matrix with diagonal `diag` and off-diagonal `off`
/// (`off[i]` couples rows `i` and `i + 1`; the last entry is ignored).
pub fn decompose<const N: usize>(diag: &[f64; N], off: &[f64; N]) -> Result<TridiagEigen<N>> {
    let mut d = *diag;
    let mut e = *off;
    e[N - 1] = 0.0;
    let mut v = [[0.0; N]; N];
    for (i, col) in v.iter_mut().enumerate() {
        col[i] = 1.0;
    }

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..N {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < N - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::EigenFailure);
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = v.split_at_mut(i + 1);
                    let (vi, vi1) = (&mut lo[i], &mut hi[0]);
                    for k in 0..N {
                        let h = vi1[k];
                        vi1[k] = s * vi[k] + c * h;
                        vi[k] = c * vi[k] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(TridiagEigen { values: d, vectors: v })
}
