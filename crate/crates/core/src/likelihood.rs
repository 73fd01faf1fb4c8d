//! Gaussian negative log-likelihood `tr(S Ĉ⁻¹) + log det Ĉ` and its closed-form
//! gradients with respect to raw amplitudes and frequencies.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{check_same_dim, gram_lower, HermitianMatrix, C64};
use crate::model::{assemble_covariance, softplus_chain, CaratheodoryModel};

/// Everything produced by one factorization of `Ĉ`.
#[derive(Debug, Clone)]
pub struct NllEvaluation {
    /// NLL up to an additive constant.
    pub value: f64,
    pub grad_a: Vec<f64>,
    pub grad_omega: Vec<f64>,
    pub c_hat: HermitianMatrix,
    pub c_inv: HermitianMatrix,
    /// `Ĉ⁻¹ (Ĉ − S) Ĉ⁻¹`
    pub e_matrix: HermitianMatrix,
}

impl NllEvaluation {
    pub fn grad_norm_a(&self) -> f64 {
        l2(&self.grad_a)
    }

    pub fn grad_norm_omega(&self) -> f64 {
        l2(&self.grad_omega)
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `tr(S Ĉ⁻¹) + log det Ĉ`, evaluated directly from the assembled covariance.
pub fn nll(s: &HermitianMatrix, m: &CaratheodoryModel) -> Result<f64> {
    check_same_dim(m.p(), s.dim())?;
    let c = assemble_covariance(m);
    let f = c.factor()?;
    let ci = f.inverse();
    Ok(trace_product(s, &ci) + f.log_det())
}

/// `Re tr(A B)` for hermitian `A`, `B`.
fn trace_product(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    let (a, b) = (a.as_matrix(), b.as_matrix());
    let n = a.nrows();
    let mut t = 0.0;
    for i in 0..n {
        for j in 0..n {
            t += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    t
}

/// `Ĉ⁻¹ − Ĉ⁻¹ S Ĉ⁻¹`.
pub fn e_matrix(s: &HermitianMatrix, c_hat: &HermitianMatrix) -> Result<HermitianMatrix> {
    check_same_dim(c_hat.dim(), s.dim())?;
    let ci = c_hat.factor()?.inverse();
    let w = ci.as_matrix() * s.as_matrix() * ci.as_matrix();
    Ok(HermitianMatrix::hermitize(ci.as_matrix() - w))
}

/// NLL value, `E`, and both gradient blocks from one factorization.
pub fn gradient(s: &HermitianMatrix, m: &CaratheodoryModel) -> Result<NllEvaluation> {
    Objective::new(s)?.evaluate(m)
}

/// `tr(Ĉ⁻¹ C) − P + log det Ĉ − log det C`.
pub fn kl_divergence(c_true: &HermitianMatrix, c_hat: &HermitianMatrix) -> Result<f64> {
    check_same_dim(c_true.dim(), c_hat.dim())?;
    let fh = c_hat.factor()?;
    let ft = c_true.factor()?;
    let ci = fh.inverse();
    Ok(trace_product(&ci, c_true) - c_true.dim() as f64 + fh.log_det() - ft.log_det())
}

/// The NLL for a fixed sample covariance, prepared for repeated evaluation.
///
/// `S` is stored as `R diag(σ) Rᴴ` with `σ = ±1` (eigen-square-root, negligible
/// eigenvalues dropped), so `tr(S Ĉ⁻¹) = Σ σ_c ‖L⁻¹ r_c‖²` costs one triangular
/// solve against the rank-`r` factor.
#[derive(Debug, Clone)]
pub struct Objective {
    s: HermitianMatrix,
    root: DMatrix<C64>,
    signs: Vec<f64>,
}

impl Objective {
    pub fn new(s: &HermitianMatrix) -> Result<Self> {
        let p = s.dim();
        let eig = s.as_matrix().clone().symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !scale.is_finite() {
            return Err(Error::InvalidParameter("sample covariance is not finite".into()));
        }
        let keep: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i].abs() > 1e-14 * scale).collect();
        let mut root = DMatrix::zeros(p, keep.len());
        let mut signs = Vec::with_capacity(keep.len());
        for (c, &i) in keep.iter().enumerate() {
            let lam = eig.eigenvalues[i];
            let w = lam.abs().sqrt();
            for r in 0..p {
                root[(r, c)] = eig.eigenvectors[(r, i)] * w;
            }
            signs.push(lam.signum());
        }
        Ok(Self {
            s: s.clone(),
            root,
            signs,
        })
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    pub fn sample_covariance(&self) -> &HermitianMatrix {
        &self.s
    }

    /// NLL only (no inverse, no gradient).
    pub fn value(&self, m: &CaratheodoryModel) -> Result<f64> {
        check_same_dim(self.dim(), m.p())?;
        let c = fast_covariance(m);
        let f = c.factor()?;
        let mut y = self.root.clone();
        f.forward_solve_in_place(&mut y);
        Ok(f.log_det() + self.weighted_col_norms(&y))
    }

    fn weighted_col_norms(&self, y: &DMatrix<C64>) -> f64 {
        y.column_iter()
            .zip(&self.signs)
            .map(|(col, sg)| sg * col.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn evaluate(&self, m: &CaratheodoryModel) -> Result<NllEvaluation> {
        check_same_dim(self.dim(), m.p())?;
        let p = self.dim();
        let c_hat = fast_covariance(m);
        let f = c_hat.factor()?;
        let mut y = self.root.clone();
        f.forward_solve_in_place(&mut y);
        let value = f.log_det() + self.weighted_col_norms(&y);

        let g = f.lower_inverse();
        let mut e = gram_lower(&g);
        let c_inv = HermitianMatrix::hermitize(e.clone());

        // Z = Gᴴ Y = Ĉ⁻¹ R, then E = Ĉ⁻¹ − Z diag(σ) Zᴴ.
        let r = y.ncols();
        let gd = g.as_slice();
        let mut z = DMatrix::<C64>::zeros(p, r);
        for c in 0..r {
            let yc = y.column(c);
            for i in 0..p {
                let gi = &gd[i * p..(i + 1) * p];
                let mut acc = C64::new(0.0, 0.0);
                for k in i..p {
                    acc += gi[k].conj() * yc[k];
                }
                z[(i, c)] = acc;
            }
        }
        for c in 0..r {
            let sg = self.signs[c];
            let zc = z.column(c);
            for j in 0..p {
                let zj = zc[j].conj() * sg;
                for i in 0..=j {
                    e[(i, j)] -= zc[i] * zj;
                }
            }
        }
        for j in 0..p {
            e[(j, j)].im = 0.0;
            for i in 0..j {
                e[(j, i)] = e[(i, j)].conj();
            }
        }
        let e_matrix = HermitianMatrix::hermitize(e);
        let (grad_a, grad_omega) = gradients_from_e(&e_matrix, m);

        Ok(NllEvaluation {
            value,
            grad_a,
            grad_omega,
            c_hat,
            c_inv,
            e_matrix,
        })
    }
}

/// Toeplitz covariance from a phasor recurrence (no per-entry trig calls).
fn fast_covariance(m: &CaratheodoryModel) -> HermitianMatrix {
    let p = m.p();
    let mut col = vec![C64::new(0.0, 0.0); p];
    for (&a, &w) in m.a_raw().iter().zip(m.omega()) {
        let amp = softplus_chain(a).value;
        let step = C64::from_polar(1.0, w);
        let mut ph = C64::new(amp, 0.0);
        for r in col.iter_mut() {
            *r += ph;
            ph *= step;
        }
    }
    col[0] += m.epsilon();
    HermitianMatrix::toeplitz_from_first_column(&col)
}

/// `∂ℒ/∂â_k = s′(â_k) v_kᴴ E v_k` and `∂ℒ/∂ω_k = 2 s(â_k) Im{v_kᴴ D E v_k}`.
///
/// Both quadratic forms only depend on diagonal sums of `E` (plain and weighted
/// by the row index, which is how `D` enters), so each component costs `O(P)`.
fn gradients_from_e(e: &HermitianMatrix, m: &CaratheodoryModel) -> (Vec<f64>, Vec<f64>) {
    let p = m.p();
    let em = e.as_matrix();
    // index d + (p - 1) holds the sum over entries with column − row = d
    let width = 2 * p - 1;
    let mut plain = vec![C64::new(0.0, 0.0); width];
    let mut weighted = vec![C64::new(0.0, 0.0); width];
    for col in 0..p {
        for row in 0..p {
            let idx = col + p - 1 - row;
            let v = em[(row, col)];
            plain[idx] += v;
            weighted[idx] += v * row as f64;
        }
    }
    let scale = plain.iter().map(|z| z.norm()).sum::<f64>().max(1.0);

    let k = m.k();
    let mut grad_a = Vec::with_capacity(k);
    let mut grad_w = Vec::with_capacity(k);
    let mut powers = vec![C64::new(0.0, 0.0); p];
    for (&a, &w) in m.a_raw().iter().zip(m.omega()) {
        let sp = softplus_chain(a);
        let step = C64::from_polar(1.0, w);
        let mut ph = C64::new(1.0, 0.0);
        for slot in powers.iter_mut() {
            *slot = ph;
            ph *= step;
        }
        let mut quad = plain[p - 1];
        let mut dquad = weighted[p - 1];
        for d in 1..p {
            let pos = powers[d];
            let neg = pos.conj();
            quad += plain[p - 1 + d] * pos + plain[p - 1 - d] * neg;
            dquad += weighted[p - 1 + d] * pos + weighted[p - 1 - d] * neg;
        }
        debug_assert!(
            quad.im.abs() <= 1e-10 * scale,
            "vᴴEv has imaginary residue {:e}",
            quad.im
        );
        grad_a.push(sp.first * quad.re);
        grad_w.push(2.0 * sp.value * dquad.im);
    }
    (grad_a, grad_w)
}
