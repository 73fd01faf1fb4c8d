//! Dense complex Hermitian matrices and their Cholesky factors.
//!
//! Storage is a column-major `nalgebra::DMatrix<Complex64>`. Every constructor
//! that is not checked explicitly symmetrizes, so `entries[i][j]` is exactly the
//! conjugate of `entries[j][i]` for any value of this type.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used when validating user-supplied matrices as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<C64>);

impl HermitianMatrix {
    /// Validates that `m` is square and Hermitian to [`HERMITIAN_TOL`] (scaled by
    /// the largest entry magnitude when that exceeds one), then symmetrizes.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidDimension(format!(
                "hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidDimension("empty matrix".into()));
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let n = m.nrows();
        for j in 0..n {
            for i in 0..=j {
                let r = (m[(i, j)] - m[(j, i)].conj()).norm();
                if !(r <= HERMITIAN_TOL * scale) {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not hermitian: residual {r:e} at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::hermitize(m))
    }

    /// Replaces `m` by `(m + mᴴ) / 2`. Panics if `m` is not square.
    pub fn hermitize(mut m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "hermitize needs a square matrix");
        let n = m.nrows();
        for j in 0..n {
            m[(j, j)] = C64::new(m[(j, j)].re, 0.0);
            for i in 0..j {
                let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                m[(i, j)] = avg;
                m[(j, i)] = avg.conj();
            }
        }
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        Self(DMatrix::from_diagonal_element(n, n, C64::new(scale, 0.0)))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// Real diagonal matrix.
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        Self(m)
    }

    /// Hermitian Toeplitz matrix with the given first column (`first_col[0]`
    /// must be real; its imaginary part is dropped).
    pub fn toeplitz_from_first_column(first_col: &[C64]) -> Self {
        let n = first_col.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] = if i >= j {
                    first_col[i - j]
                } else {
                    first_col[j - i].conj()
                };
            }
        }
        Self::hermitize(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.0)
    }

    /// Largest absolute deviation from hermitian symmetry.
    pub fn hermitian_residual(&self) -> f64 {
        hermitian_residual(&self.0)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(Self(&self.0 - &other.0))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty matrix")
    }

    pub fn factor(&self) -> Result<HermitianFactor> {
        HermitianFactor::new(self)
    }
}

pub(crate) fn check_same_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn frobenius(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn hermitian_residual(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Spectral norm of a real symmetric matrix (largest absolute eigenvalue).
/// The input is symmetrized first.
pub fn symmetric_spectral_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// Lower Cholesky factor `L` with `A = L Lᴴ`.
#[derive(Debug, Clone)]
pub struct HermitianFactor {
    lower: DMatrix<C64>,
}

impl HermitianFactor {
    pub fn new(a: &HermitianMatrix) -> Result<Self> {
        let mut lower = a.as_matrix().clone();
        cholesky_in_place(&mut lower)?;
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<C64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.lower[(i, i)].re.ln()).sum()
    }

    /// Overwrites `b` with `L⁻¹ b`.
    pub fn forward_solve_in_place(&self, b: &mut DMatrix<C64>) {
        forward_solve(&self.lower, b);
    }

    /// `L⁻¹`, lower triangular.
    pub fn lower_inverse(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut g = DMatrix::identity(n, n);
        forward_solve(&self.lower, &mut g);
        g
    }

    /// `A⁻¹ = L⁻ᴴ L⁻¹`.
    pub fn inverse(&self) -> HermitianMatrix {
        let g = self.lower_inverse();
        HermitianMatrix(gram_lower(&g))
    }

    /// Solves `A x = b` for every column of `b`.
    pub fn solve(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        let mut x = b.clone();
        forward_solve(&self.lower, &mut x);
        backward_solve_adjoint(&self.lower, &mut x);
        x
    }
}

/// In-place lower Cholesky. The strict upper triangle is zeroed.
fn cholesky_in_place(a: &mut DMatrix<C64>) -> Result<()> {
    let n = a.nrows();
    let data = a.as_mut_slice();
    for j in 0..n {
        let mut d = data[j + j * n].re;
        for k in 0..j {
            d -= data[j + k * n].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        data[j + j * n] = C64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = data[i + j * n];
            for k in 0..j {
                s -= data[i + k * n] * data[j + k * n].conj();
            }
            data[i + j * n] = s / ljj;
        }
        for i in 0..j {
            data[i + j * n] = C64::new(0.0, 0.0);
        }
    }
    Ok(())
}

/// Overwrites `b` with `L⁻¹ b` (column-oriented, contiguous inner loop).
pub(crate) fn forward_solve(l: &DMatrix<C64>, b: &mut DMatrix<C64>) {
    let n = l.nrows();
    let ld = l.as_slice();
    let cols = b.ncols();
    let bd = b.as_mut_slice();
    for c in 0..cols {
        let col = &mut bd[c * n..(c + 1) * n];
        for k in 0..n {
            if col[k] == C64::new(0.0, 0.0) {
                continue;
            }
            let yk = col[k] / ld[k + k * n].re;
            col[k] = yk;
            let lcol = &ld[k * n..(k + 1) * n];
            for i in (k + 1)..n {
                col[i] -= lcol[i] * yk;
            }
        }
    }
}

/// Overwrites `b` with `L⁻ᴴ b`.
fn backward_solve_adjoint(l: &DMatrix<C64>, b: &mut DMatrix<C64>) {
    let n = l.nrows();
    let ld = l.as_slice();
    let cols = b.ncols();
    let bd = b.as_mut_slice();
    for c in 0..cols {
        let col = &mut bd[c * n..(c + 1) * n];
        for i in (0..n).rev() {
            let lcol = &ld[i * n..(i + 1) * n];
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= lcol[k].conj() * col[k];
            }
            col[i] = s / lcol[i].re;
        }
    }
}

/// `Gᴴ G` for lower-triangular `G`, hermitian by construction.
pub(crate) fn gram_lower(g: &DMatrix<C64>) -> DMatrix<C64> {
    let n = g.nrows();
    let gd = g.as_slice();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let gj = &gd[j * n..(j + 1) * n];
        for i in 0..=j {
            let gi = &gd[i * n..(i + 1) * n];
            // column i is zero above row i, column j above row j (j >= i)
            let mut s = C64::new(0.0, 0.0);
            for k in j..n {
                s += gi[k].conj() * gj[k];
            }
            out[(i, j)] = s;
            out[(j, i)] = s.conj();
        }
        out[(j, j)] = C64::new(out[(j, j)].re, 0.0);
    }
    out
}
