//! Second-order structure of the NLL: derivatives of `Ĉ` and `E`, the diagonal
//! Hessian blocks `H_aa` and `H_ωω`, and the local Lipschitz constants that
//! motivate separate step sizes for amplitudes and frequencies.
//!
//! In `∂Ĉ/∂ω_j` and the diagonal of `H_ωω` the factor multiplying `D v` is the
//! imaginary unit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_same_dim, symmetric_spectral_norm, HermitianMatrix, C64};
use crate::model::{assemble_covariance, softplus_chain, steering_vector, CaratheodoryModel};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub struct HessianBlocks {
    pub h_aa: DMatrix<f64>,
    pub h_omega_omega: DMatrix<f64>,
    /// `‖H_aa‖₂`
    pub l_a_exact: f64,
    /// `‖H_ωω‖₂`
    pub l_w_exact: f64,
    pub l_a_approx: f64,
    pub l_w_approx: f64,
}

/// Closed-form Lipschitz approximations at a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzApprox {
    /// `P ‖Ĉ⁻¹‖₂`
    pub amplitude: f64,
    /// `P^1.5 ‖s‖₂² ‖Ĉ⁻¹‖₂^{3/2}`
    pub frequency: f64,
}

fn check_index(m: &CaratheodoryModel, j: usize) -> Result<()> {
    if j >= m.k() {
        return Err(Error::IndexOutOfRange { index: j, len: m.k() });
    }
    Ok(())
}

fn steering(m: &CaratheodoryModel, j: usize) -> DVector<C64> {
    DVector::from_vec(steering_vector(m.omega()[j], m.p()).expect("model has p >= 1"))
}

/// `∂Ĉ/∂â_j = s′(â_j) v_j v_jᴴ`.
pub fn dcov_da(m: &CaratheodoryModel, j: usize) -> Result<HermitianMatrix> {
    check_index(m, j)?;
    let v = steering(m, j);
    let ds = softplus_chain(m.a_raw()[j]).first;
    Ok(HermitianMatrix::hermitize(&v * v.adjoint() * C64::new(ds, 0.0)))
}

/// `∂Ĉ/∂ω_j = s(â_j) i (D v_j v_jᴴ − v_j (D v_j)ᴴ)`.
pub fn dcov_domega(m: &CaratheodoryModel, j: usize) -> Result<HermitianMatrix> {
    check_index(m, j)?;
    let v = steering(m, j);
    let s = softplus_chain(m.a_raw()[j]).value;
    // entry (r, c) is i s (r − c) v_r v̄_c, so the diagonal is exactly zero
    let raw = DMatrix::from_fn(m.p(), m.p(), |r, c| {
        I * (s * (r as f64 - c as f64)) * v[r] * v[c].conj()
    });
    Ok(HermitianMatrix::hermitize(raw))
}

/// Derivative of `E = Ĉ⁻¹ − Ĉ⁻¹ S Ĉ⁻¹` along a covariance perturbation `dc`.
pub fn de_dtheta(s: &HermitianMatrix, c_hat: &HermitianMatrix, dc: &HermitianMatrix) -> Result<HermitianMatrix> {
    check_same_dim(c_hat.dim(), s.dim())?;
    check_same_dim(c_hat.dim(), dc.dim())?;
    let ci = c_hat.factor()?.inverse();
    let w = ci.as_matrix() * s.as_matrix() * ci.as_matrix();
    Ok(HermitianMatrix::hermitize(de_with(ci.as_matrix(), &w, dc.as_matrix())))
}

/// `−Ĉ⁻¹ dC Ĉ⁻¹ + Ĉ⁻¹ dC W + W dC Ĉ⁻¹` with `W = Ĉ⁻¹ S Ĉ⁻¹`. The last term is
/// the adjoint of the middle one since all three factors are hermitian.
fn de_with(ci: &DMatrix<C64>, w: &DMatrix<C64>, dc: &DMatrix<C64>) -> DMatrix<C64> {
    let t = ci * dc;
    let mid = &t * w;
    &mid + mid.adjoint() - &t * ci
}

pub fn lipschitz_approx(m: &CaratheodoryModel) -> LipschitzApprox {
    let c = assemble_covariance(m);
    lipschitz_from_parts(m, 1.0 / c.min_eigenvalue())
}

fn lipschitz_from_parts(m: &CaratheodoryModel, inv_norm: f64) -> LipschitzApprox {
    let p = m.p() as f64;
    let s_sq: f64 = m.amplitudes().iter().map(|a| a * a).sum();
    LipschitzApprox {
        amplitude: p * inv_norm,
        frequency: p.powf(1.5) * s_sq * inv_norm.powf(1.5),
    }
}

pub fn hessian_blocks(s: &HermitianMatrix, m: &CaratheodoryModel) -> Result<HessianBlocks> {
    check_same_dim(m.p(), s.dim())?;
    let p = m.p();
    let k = m.k();
    let c_hat = assemble_covariance(m);
    let ci = c_hat.factor()?.inverse().into_inner();
    let w = &ci * s.as_matrix() * &ci;
    let e = &ci - &w;

    let vs = DMatrix::from_fn(p, k, |n, j| C64::from_polar(1.0, m.omega()[j] * n as f64));
    let dvs = DMatrix::from_fn(p, k, |n, j| vs[(n, j)] * n as f64);
    let chains: Vec<_> = m.a_raw().iter().map(|&a| softplus_chain(a)).collect();

    // vᵢᴴ M vᵢ and (D vᵢ)ᴴ M vᵢ for every component i
    let quad = |mat: &DMatrix<C64>| -> (Vec<C64>, Vec<C64>) {
        let mv = mat * &vs;
        let plain = (0..k).map(|i| vs.column(i).dotc(&mv.column(i))).collect();
        let weighted = (0..k).map(|i| dvs.column(i).dotc(&mv.column(i))).collect();
        (plain, weighted)
    };

    let (e_quad, _) = quad(&e);

    let mut h_aa = DMatrix::zeros(k, k);
    let mut h_ww = DMatrix::zeros(k, k);
    for j in 0..k {
        let vj = vs.column(j);
        let dvj = dvs.column(j);

        let dc_a = (vj * vj.adjoint()) * C64::new(chains[j].first, 0.0);
        let (qa, _) = quad(&de_with(&ci, &w, &dc_a));
        for i in 0..k {
            let mut h = chains[i].first * qa[i].re;
            if i == j {
                h += chains[i].second * e_quad[i].re;
            }
            h_aa[(i, j)] = h;
        }

        let dc_w = (dvj * vj.adjoint() - vj * dvj.adjoint()) * (I * chains[j].value);
        let (_, qw) = quad(&de_with(&ci, &w, &dc_w));
        for i in 0..k {
            let mut inner = qw[i];
            if i == j {
                // (i D vᵢ)ᴴ D E vᵢ + vᵢᴴ D E (i D vᵢ)
                let idv = dvs.column(i).map(|z| z * I);
                let ddv = DVector::from_fn(p, |n, _| idv[n] * n as f64);
                inner += ddv.dotc(&(&e * vs.column(i)));
                inner += dvs.column(i).dotc(&(&e * &idv));
            }
            h_ww[(i, j)] = 2.0 * chains[i].value * inner.im;
        }
    }
    let approx = lipschitz_from_parts(m, 1.0 / c_hat.min_eigenvalue());
    Ok(HessianBlocks {
        l_a_exact: symmetric_spectral_norm(&h_aa),
        l_w_exact: symmetric_spectral_norm(&h_ww),
        h_aa,
        h_omega_omega: h_ww,
        l_a_approx: approx.amplitude,
        l_w_approx: approx.frequency,
    })
}
