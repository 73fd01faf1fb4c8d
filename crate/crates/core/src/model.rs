//! Carathéodory parameterization of a positive definite Toeplitz covariance.
//!
//! The estimate is `Ĉ = Σ_k s(â_k) v(ω_k) v(ω_k)ᴴ + ε I`, with `s` the softplus
//! and `v(ω) = [1, e^{iω}, …, e^{iω(P-1)}]ᵀ`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, C64};

/// Steering vector `[1, e^{iω}, …, e^{iω(p-1)}]`.
pub fn steering_vector(omega: f64, p: usize) -> Result<Vec<C64>> {
    if p == 0 {
        return Err(Error::InvalidDimension("steering vector length must be >= 1".into()));
    }
    Ok((0..p).map(|n| C64::from_polar(1.0, omega * n as f64)).collect())
}

/// Softplus and its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Softplus {
    /// `ln(1 + eˣ)`
    pub value: f64,
    /// sigmoid
    pub first: f64,
    pub second: f64,
}

const SOFTPLUS_BRANCH: f64 = 30.0;

pub fn softplus_chain(x: f64) -> Softplus {
    let value = if x > SOFTPLUS_BRANCH {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    let first = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    Softplus {
        value,
        first,
        second: first * (1.0 - first),
    }
}

pub fn softplus(x: f64) -> f64 {
    softplus_chain(x).value
}

/// Inverse of the softplus, `ln(eʸ − 1)` for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > SOFTPLUS_BRANCH {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Raw amplitudes, frequencies, ridge and matrix dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct CaratheodoryModel {
    p: usize,
    a_raw: Vec<f64>,
    omega: Vec<f64>,
    epsilon: f64,
}

impl CaratheodoryModel {
    /// Frequencies are reduced into `[0, 2π)`.
    pub fn new(p: usize, a_raw: Vec<f64>, omega: Vec<f64>, epsilon: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidDimension("model dimension p must be >= 1".into()));
        }
        if a_raw.is_empty() {
            return Err(Error::InvalidParameter("model needs at least one component".into()));
        }
        if a_raw.len() != omega.len() {
            return Err(Error::DimensionMismatch {
                expected: a_raw.len(),
                actual: omega.len(),
            });
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if let Some(bad) = a_raw.iter().chain(&omega).find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite model parameter {bad}")));
        }
        let omega = omega.into_iter().map(wrap_frequency).collect();
        Ok(Self {
            p,
            a_raw,
            omega,
            epsilon,
        })
    }

    /// Builds a model from positive amplitudes rather than raw parameters.
    pub fn from_amplitudes(p: usize, amplitudes: &[f64], omega: Vec<f64>, epsilon: f64) -> Result<Self> {
        if let Some(bad) = amplitudes.iter().find(|a| !(**a > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "amplitude must be positive, got {bad}"
            )));
        }
        let a_raw = amplitudes.iter().map(|&a| softplus_inverse(a)).collect();
        Self::new(p, a_raw, omega, epsilon)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.a_raw.len()
    }

    pub fn a_raw(&self) -> &[f64] {
        &self.a_raw
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `s(â_k)` for every component.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.a_raw.iter().map(|&a| softplus(a)).collect()
    }

    /// Same dimension and ridge, new parameters. Used by the optimizers.
    pub fn with_params(&self, a_raw: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        Self::new(self.p, a_raw, omega, self.epsilon)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub(crate) fn wrap_frequency(w: f64) -> f64 {
    let r = w.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    p: usize,
    k: usize,
    epsilon: f64,
    a_raw: Vec<f64>,
    omega: Vec<f64>,
}

impl TryFrom<ModelRecord> for CaratheodoryModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        if r.k != r.a_raw.len() {
            return Err(Error::DimensionMismatch {
                expected: r.k,
                actual: r.a_raw.len(),
            });
        }
        CaratheodoryModel::new(r.p, r.a_raw, r.omega, r.epsilon)
    }
}

impl From<CaratheodoryModel> for ModelRecord {
    fn from(m: CaratheodoryModel) -> Self {
        ModelRecord {
            p: m.p,
            k: m.a_raw.len(),
            epsilon: m.epsilon,
            a_raw: m.a_raw,
            omega: m.omega,
        }
    }
}

/// First column `r_d = Σ_k w_k e^{iω_k d}`, `d = 0..p`, of the Toeplitz matrix
/// `Σ_k w_k v(ω_k) v(ω_k)ᴴ` (no ridge).
pub(crate) fn toeplitz_column(weights: &[f64], omega: &[f64], p: usize) -> Vec<C64> {
    let mut col = vec![C64::new(0.0, 0.0); p];
    for (&w, &om) in weights.iter().zip(omega) {
        for (d, r) in col.iter_mut().enumerate() {
            *r += C64::from_polar(w, om * d as f64);
        }
    }
    col
}

pub fn assemble_covariance(m: &CaratheodoryModel) -> HermitianMatrix {
    let mut col = toeplitz_column(&m.amplitudes(), &m.omega, m.p);
    col[0] += m.epsilon;
    HermitianMatrix::toeplitz_from_first_column(&col)
}

/// Largest spread of entries along any diagonal: for each diagonal the larger
/// of the real-part and imaginary-part ranges, maximized over diagonals.
/// Zero exactly when the matrix is Toeplitz.
pub fn toeplitz_deviation(c: &HermitianMatrix) -> f64 {
    let n = c.dim();
    let m = c.as_matrix();
    let mut worst = 0.0_f64;
    for offset in -(n as isize - 1)..(n as isize) {
        let (mut re_lo, mut re_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut im_lo, mut im_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let j = i as isize + offset;
            if j < 0 || j >= n as isize {
                continue;
            }
            let z = m[(i, j as usize)];
            re_lo = re_lo.min(z.re);
            re_hi = re_hi.max(z.re);
            im_lo = im_lo.min(z.im);
            im_hi = im_hi.max(z.im);
        }
        worst = worst.max(re_hi - re_lo).max(im_hi - im_lo);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn steering_examples() {
        let ones = steering_vector(0.0, 3).unwrap();
        assert!(ones.iter().all(|z| close(*z, C64::new(1.0, 0.0), 1e-15)));
        let alt = steering_vector(PI, 3).unwrap();
        let want = [1.0, -1.0, 1.0];
        for (z, w) in alt.iter().zip(want) {
            assert!(close(*z, C64::new(w, 0.0), 1e-15));
        }
        let quarter = steering_vector(PI / 2.0, 4).unwrap();
        let want = [
            C64::new(1.0, 0.0),
            C64::new(0.0, 1.0),
            C64::new(-1.0, 0.0),
            C64::new(0.0, -1.0),
        ];
        for (z, w) in quarter.iter().zip(want) {
            assert!(close(*z, w, 1e-15));
        }
        assert!(matches!(steering_vector(1.0, 0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn softplus_examples() {
        let s = softplus_chain(0.0);
        assert!((s.value - 2f64.ln()).abs() < 1e-15);
        assert_eq!(s.first, 0.5);
        assert_eq!(s.second, 0.25);

        let big = softplus_chain(100.0);
        assert!((big.value - 100.0).abs() < 1e-12);
        assert!((big.first - 1.0).abs() < 1e-15);
        assert!(big.second.abs() < 1e-15);

        let small = softplus_chain(-100.0);
        assert!(small.value > 0.0 && small.value < 1e-40);
        assert!(small.first < 1e-40);
        assert!(small.second < 1e-40);
    }

    #[test]
    fn softplus_inverse_round_trip() {
        for &y in &[1e-8, 0.3, 1.0, 29.0, 31.0, 500.0] {
            let x = softplus_inverse(y);
            assert!((softplus(x) - y).abs() <= 1e-12 * y.max(1.0), "y = {y}");
        }
    }

    #[test]
    fn assemble_rank_one_plus_ridge() {
        let a = (std::f64::consts::E - 1.0).ln();
        let m = CaratheodoryModel::new(2, vec![a], vec![0.0], 0.1).unwrap();
        let c = assemble_covariance(&m);
        let want = [[1.1, 1.0], [1.0, 1.1]];
        for (i, row) in want.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                assert!(close(c.get(i, j), C64::new(w, 0.0), 1e-12));
            }
        }
    }

    #[test]
    fn assemble_ridge_only() {
        let m = CaratheodoryModel::new(3, vec![-100.0], vec![1.3], 0.5).unwrap();
        let c = assemble_covariance(&m);
        let diff = c.sub(&HermitianMatrix::scaled_identity(3, 0.5)).unwrap();
        assert!(diff.frobenius_norm() < 1e-10);
    }

    #[test]
    fn constructor_validation() {
        assert!(CaratheodoryModel::new(0, vec![1.0], vec![0.0], 0.1).is_err());
        assert!(CaratheodoryModel::new(3, vec![], vec![], 0.1).is_err());
        assert!(CaratheodoryModel::new(3, vec![1.0], vec![0.0, 1.0], 0.1).is_err());
        assert!(CaratheodoryModel::new(3, vec![1.0], vec![0.0], 0.0).is_err());
        assert!(CaratheodoryModel::new(3, vec![f64::NAN], vec![0.0], 0.1).is_err());
    }

    #[test]
    fn frequencies_are_wrapped() {
        let m = CaratheodoryModel::new(2, vec![0.0, 0.0], vec![-0.5, 7.0], 0.1).unwrap();
        assert!((m.omega()[0] - (TAU - 0.5)).abs() < 1e-15);
        assert!((m.omega()[1] - (7.0 - TAU)).abs() < 1e-15);
        assert_eq!(wrap_frequency(-1e-300), 0.0);
    }

    #[test]
    fn toeplitz_deviation_examples() {
        assert_eq!(toeplitz_deviation(&HermitianMatrix::identity(3)), 0.0);
        assert_eq!(
            toeplitz_deviation(&HermitianMatrix::from_real_diagonal(&[1.0, 2.0])),
            1.0
        );
    }

    #[test]
    fn json_round_trip_is_flat() {
        let m = CaratheodoryModel::new(4, vec![0.5, -1.0], vec![0.1, 2.0], 0.01).unwrap();
        let text = m.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["k"], 2);
        assert_eq!(v["p"], 4);
        assert_eq!(CaratheodoryModel::from_json(&text).unwrap(), m);
        let bad = r#"{"p":4,"k":3,"epsilon":0.1,"a_raw":[1,2],"omega":[0,1]}"#;
        assert!(CaratheodoryModel::from_json(bad).is_err());
    }

    /// Entry-wise double loop over components, independent of the Toeplitz fill.
    fn direct_sum(m: &CaratheodoryModel) -> DMatrix<C64> {
        let p = m.p();
        let mut out = DMatrix::from_diagonal_element(p, p, C64::new(m.epsilon(), 0.0));
        for (a, w) in m.amplitudes().iter().zip(m.omega()) {
            for i in 0..p {
                for j in 0..p {
                    out[(i, j)] += C64::from_polar(*a, w * i as f64) * C64::from_polar(1.0, -w * j as f64);
                }
            }
        }
        out
    }

    fn arb_model() -> impl Strategy<Value = CaratheodoryModel> {
        (1usize..12, 1usize..20).prop_flat_map(|(p, k)| {
            (
                Just(p),
                prop::collection::vec(-6.0..8.0f64, k),
                prop::collection::vec(-10.0..10.0f64, k),
                1e-3..2.0f64,
            )
                .prop_map(|(p, a, w, eps)| CaratheodoryModel::new(p, a, w, eps).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn assembled_is_toeplitz_and_matches_direct_sum(m in arb_model()) {
            let c = assemble_covariance(&m);
            prop_assert!(toeplitz_deviation(&c) < 1e-10);
            let scale = m.amplitudes().iter().sum::<f64>().max(1.0);
            let diff = crate::linalg::frobenius(&(direct_sum(&m) - c.as_matrix()));
            prop_assert!(diff < 1e-10 * scale);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn assembled_is_pd_above_ridge(m in arb_model()) {
            let c = assemble_covariance(&m);
            prop_assert!(c.hermitian_residual() == 0.0);
            let scale = m.amplitudes().iter().sum::<f64>().max(1.0);
            prop_assert!(c.min_eigenvalue() >= m.epsilon() - 1e-12 * scale);
        }

        #[test]
        fn frequency_periodicity(m in arb_model(), idx in 0usize..20) {
            let j = idx % m.k();
            let mut w = m.omega().to_vec();
            w[j] += TAU;
            let shifted = m.with_params(m.a_raw().to_vec(), w).unwrap();
            let d = assemble_covariance(&m).sub(&assemble_covariance(&shifted)).unwrap();
            prop_assert!(d.as_matrix().iter().all(|z| z.norm() < 1e-10));
        }

        #[test]
        fn softplus_derivatives_match_central_differences(x in -25.0..25.0f64) {
            let h = 1e-5;
            let s = softplus_chain(x);
            let fd1 = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            let fd2 = (softplus_chain(x + h).first - softplus_chain(x - h).first) / (2.0 * h);
            prop_assert!((fd1 - s.first).abs() <= 1e-6 * s.first.abs().max(1e-12) + 1e-12);
            // s′ saturates at 1, so the difference quotient carries ~ulp(1)/h of rounding.
            prop_assert!((fd2 - s.second).abs() <= 1e-6 * s.second.abs() + 5e-11);
        }
    }
}
