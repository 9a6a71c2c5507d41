//! Small dense Hermitian eigensolver.
//!
//! Cyclic Jacobi sweeps with complex Givens rotations. The matrices seen by the
//! solver are tiny (`n` is the size of the Friedrichs system), so the extra
//! flops of Jacobi over a tridiagonal QR do not matter, and Jacobi gives
//! eigenvectors that are orthonormal to machine precision.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

const MAX_SWEEPS: usize = 64;

/// Eigenvalues sorted in descending order with the matching unit eigenvectors
/// in the columns of `vectors`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// `max |M Ψ - Ψ Λ|` over all entries.
    pub fn residual(&self, m: &CMatrix) -> f64 {
        let n = self.values.len();
        let mut lambda = CMatrix::zeros(n, n);
        for (i, &v) in self.values.iter().enumerate() {
            lambda[(i, i)] = Complex64::new(v, 0.0);
        }
        max_abs(&(m * &self.vectors - &self.vectors * lambda))
    }

    /// `max |Ψ* Ψ - I|` over all entries.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.values.len();
        max_abs(&(self.vectors.adjoint() * &self.vectors - CMatrix::identity(n, n)))
    }

    pub fn reconstruct(&self) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            for i in 0..n {
                scaled[(i, j)] *= self.values[j];
            }
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Hermitian eigendecomposition by cyclic Jacobi.
///
/// Output ordering is descending by eigenvalue. Each eigenvector's phase is
/// fixed so that its largest-modulus component (the first one, on ties within
/// a relative `1e-12`) is real and positive. Identical input gives bitwise
/// identical output.
pub fn eig_hermitian(m: &CMatrix) -> Result<HermitianEigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigensolver needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = max_abs(m).max(1.0);
    let defect = hermitian_defect(m);
    if defect > 1e-12 * scale {
        return Err(Error::NotHermitian { residual: defect });
    }
    if n == 2 {
        let (values, vecs) = eig_hermitian_2x2([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]);
        let vectors = CMatrix::from_fn(2, 2, |i, j| vecs[i][j]);
        return Ok(HermitianEigen {
            values: values.to_vec(),
            vectors,
        });
    }

    let mut a = m.clone();
    // Symmetrize so rounding noise in the input cannot leak into the rotations.
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
    let mut v = CMatrix::identity(n, n);
    let frob = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * frob || off == 0.0 {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let b = apq.norm();
                if b == 0.0 {
                    continue;
                }
                let (c, s) = rotation(a[(p, p)].re, a[(q, q)].re, b);
                let phase = apq / b;
                let sp = phase * s;
                let spc = phase.conj() * s;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - spc * akq;
                    a[(k, q)] = sp * akp + akq * c;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - sp * aqk;
                    a[(q, k)] = spc * apk + aqk * c;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - spc * vkq;
                    v[(k, q)] = sp * vkp + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut column: Vec<Complex64> = (0..n).map(|r| v[(r, src)]).collect();
        fix_phase(&mut column);
        for (r, z) in column.into_iter().enumerate() {
            vectors[(r, col)] = z;
        }
    }
    Ok(HermitianEigen { values, vectors })
}

/// Cosine and sine of the real Jacobi rotation annihilating `b` in
/// `[[app, b], [b, aqq]]`, smaller-angle root.
fn rotation(app: f64, aqq: f64, b: f64) -> (f64, f64) {
    let tau = (aqq - app) / (2.0 * b);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    (c, t * c)
}

/// Rotates `v` so its dominant component is real and positive.
pub fn fix_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let idx = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .unwrap_or(0);
    let rot = v[idx].conj() / v[idx].norm();
    for z in v.iter_mut() {
        *z *= rot;
    }
    v[idx] = Complex64::new(v[idx].re, 0.0);
}

/// Allocation-free 2x2 path: one Jacobi rotation is exact.
///
/// Returns descending eigenvalues and the eigenvector matrix as rows
/// (`vecs[i][j]` is component `i` of eigenvector `j`), with the same phase
/// convention as [`eig_hermitian`].
pub fn eig_hermitian_2x2(m: [[Complex64; 2]; 2]) -> ([f64; 2], [[Complex64; 2]; 2]) {
    let app = m[0][0].re;
    let aqq = m[1][1].re;
    let apq = (m[0][1] + m[1][0].conj()) * 0.5;
    let b = apq.norm();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let (d0, d1, mut v0, mut v1) = if b == 0.0 {
        (app, aqq, [one, zero], [zero, one])
    } else {
        let (c, s) = rotation(app, aqq, b);
        let phase = apq / b;
        let t = s / c;
        // Columns of the rotation [[c, s e^{iφ}], [-s e^{-iφ}, c]].
        (
            app - t * b,
            aqq + t * b,
            [Complex64::new(c, 0.0), -phase.conj() * s],
            [phase * s, Complex64::new(c, 0.0)],
        )
    };
    fix_phase(&mut v0);
    fix_phase(&mut v1);
    if d0 >= d1 {
        ([d0, d1], [[v0[0], v1[0]], [v0[1], v1[1]]])
    } else {
        ([d1, d0], [[v1[0], v0[0]], [v1[1], v0[1]]])
    }
}
