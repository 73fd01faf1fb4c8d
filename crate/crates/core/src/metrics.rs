//! Accuracy metrics: first-row error, the Toeplitz Cramér–Rao bound and the
//! per-trial record written by the benchmark harness.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_same_dim, HermitianMatrix, C64};

/// `(1/P) Σ_i |Ĉ_{0i} − C_{0i}|²`.
pub fn first_row_mse(c_hat: &HermitianMatrix, c_true: &HermitianMatrix) -> Result<f64> {
    Ok(first_row_sq_error(c_hat, c_true)? / c_true.dim() as f64)
}

/// `Σ_i |Ĉ_{0i} − C_{0i}|²`, the unnormalized first-row error. Benchmark
/// tables report this sum; see [`CrbResult::first_row_bound`].
pub fn first_row_sq_error(c_hat: &HermitianMatrix, c_true: &HermitianMatrix) -> Result<f64> {
    check_same_dim(c_true.dim(), c_hat.dim())?;
    Ok((0..c_true.dim())
        .map(|i| (c_hat.get(0, i) - c_true.get(0, i)).norm_sqr())
        .sum())
}

#[derive(Debug, Clone)]
pub struct CrbResult {
    /// Fisher information over `θ = (c₀, Re c₁, Im c₁, …, Re c_{P−1}, Im c_{P−1})`.
    pub fisher: DMatrix<f64>,
    /// Diagonal of `F⁻¹`, in the order of `θ`.
    pub variances: Vec<f64>,
    /// `trace(F⁻¹)`: bound on the expected first-row squared error sum.
    pub first_row_bound: f64,
    /// `trace(F⁻¹) / P`: bound on [`first_row_mse`].
    pub per_entry_bound: f64,
    pub m_samples: usize,
}

/// Unit-weight derivative `∂C/∂θ_u` for the first-row parameterization.
pub fn toeplitz_basis(p: usize, u: usize) -> Result<HermitianMatrix> {
    if u >= 2 * p - 1 {
        return Err(Error::IndexOutOfRange {
            index: u,
            len: 2 * p - 1,
        });
    }
    if u == 0 {
        return Ok(HermitianMatrix::identity(p));
    }
    let lag = u.div_ceil(2);
    // c_lag sits on the first row, so it multiplies the lag-th superdiagonal.
    let upper = if u % 2 == 1 {
        C64::new(1.0, 0.0)
    } else {
        C64::new(0.0, 1.0)
    };
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p - lag {
        m[(i, i + lag)] = upper;
        m[(i + lag, i)] = upper.conj();
    }
    Ok(HermitianMatrix::hermitize(m))
}

/// Cramér–Rao bound for the Toeplitz first row under `M` circular complex
/// Gaussian observations: `F_uv = M tr(C⁻¹ ∂_u C C⁻¹ ∂_v C)`.
pub fn toeplitz_crb(c_true: &HermitianMatrix, m_samples: usize) -> Result<CrbResult> {
    if m_samples == 0 {
        return Err(Error::InvalidParameter("CRB needs at least one sample".into()));
    }
    let p = c_true.dim();
    let ci = c_true.factor()?.inverse();
    let n = 2 * p - 1;
    let products: Vec<DMatrix<C64>> = (0..n)
        .map(|u| Ok(ci.as_matrix() * toeplitz_basis(p, u)?.as_matrix()))
        .collect::<Result<_>>()?;
    // Invert the single-sample information and scale afterwards so the bound
    // is exactly proportional to 1/M.
    let unit = fisher_from_products(&products, 1.0);
    let m = m_samples as f64;
    let variances: Vec<f64> = invert_fisher(&unit)?.into_iter().map(|v| v / m).collect();
    let first_row_bound = variances.iter().sum::<f64>();
    let fisher = unit * m;
    Ok(CrbResult {
        fisher,
        variances,
        first_row_bound,
        per_entry_bound: first_row_bound / p as f64,
        m_samples,
    })
}

/// `F_uv = scale · tr(B_u B_v)` with `B_u = C⁻¹ ∂_u C`.
pub(crate) fn fisher_from_products(b: &[DMatrix<C64>], scale: f64) -> DMatrix<f64> {
    let n = b.len();
    let p = b.first().map_or(0, |m| m.nrows());
    let mut f = DMatrix::zeros(n, n);
    for u in 0..n {
        for v in u..n {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..p {
                for j in 0..p {
                    acc += b[u][(i, j)] * b[v][(j, i)];
                }
            }
            f[(u, v)] = scale * acc.re;
            f[(v, u)] = f[(u, v)];
        }
    }
    f
}

fn invert_fisher(f: &DMatrix<f64>) -> Result<Vec<f64>> {
    let as_complex = HermitianMatrix::hermitize(f.map(|x| C64::new(x, 0.0)));
    let factor = as_complex.factor().map_err(|e| match e {
        Error::NotPositiveDefinite { index, pivot } => Error::RankDeficient { index, pivot },
        other => other,
    })?;
    let inv = factor.inverse();
    Ok((0..f.nrows()).map(|i| inv.get(i, i).re).collect())
}

/// One Monte-Carlo trial. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: String,
    pub method: String,
    pub k_factor: u32,
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub rmse: f64,
    pub kl: f64,
    pub crb: f64,
    pub runtime_s: f64,
    pub iterations: usize,
    pub converged: bool,
    pub success: bool,
}

pub const TRIAL_CSV_HEADER: &str =
    "scenario,method,k_factor,m,trial,seed,rmse,kl,crb,runtime_s,iterations,converged,success";

pub const DEFAULT_SUCCESS_FACTOR: f64 = 10.0;

/// A trial succeeds when its fit converged and its error is within
/// `factor` times the bound.
pub fn classify_success(record: &TrialRecord, crb_scalar: f64, factor: f64) -> bool {
    record.converged && record.rmse.is_finite() && record.rmse <= factor * crb_scalar
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{atom_covariance, random_cara_covariance};
    use proptest::prelude::*;

    fn row(values: &[C64]) -> HermitianMatrix {
        HermitianMatrix::toeplitz_from_first_column(&values.iter().map(|z| z.conj()).collect::<Vec<_>>())
    }

    #[test]
    fn mse_examples() {
        let a = row(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let b = row(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        assert_eq!(first_row_mse(&a, &a).unwrap(), 0.0);
        assert!((first_row_mse(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!((first_row_sq_error(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!(first_row_mse(&a, &HermitianMatrix::identity(3)).is_err());
    }

    #[test]
    fn mse_ignores_other_rows() {
        let (c, _) = atom_covariance();
        let mut m = c.as_matrix().clone();
        m[(2, 2)] += C64::new(5.0, 0.0);
        let bumped = HermitianMatrix::new(m).unwrap();
        assert_eq!(first_row_mse(&bumped, &c).unwrap(), 0.0);
    }

    #[test]
    fn scalar_crb() {
        let c = HermitianMatrix::from_real_diagonal(&[1.0]);
        let r = toeplitz_crb(&c, 100).unwrap();
        assert!((r.per_entry_bound - 0.01).abs() < 1e-15);
        assert!((r.first_row_bound - 0.01).abs() < 1e-15);
        let c = HermitianMatrix::from_real_diagonal(&[3.0]);
        assert!((toeplitz_crb(&c, 10).unwrap().fisher[(0, 0)] - 10.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn crb_halves_with_double_samples() {
        let (c, _) = random_cara_covariance();
        let a = toeplitz_crb(&c, 40).unwrap();
        let b = toeplitz_crb(&c, 80).unwrap();
        assert_eq!(a.first_row_bound / 2.0, b.first_row_bound);
        assert_eq!(a.per_entry_bound / 2.0, b.per_entry_bound);
    }

    #[test]
    fn atom_anchor() {
        let (c, _) = atom_covariance();
        let r = toeplitz_crb(&c, 200).unwrap();
        assert!((r.first_row_bound / 106.5 - 1.0).abs() < 0.05, "{}", r.first_row_bound);
        assert_eq!(r.fisher.nrows(), 29);
        assert!(r.variances.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn fisher_matches_finite_difference_derivatives() {
        let (c, _) = random_cara_covariance();
        let p = c.dim();
        let theta_of = |c: &HermitianMatrix| -> Vec<f64> {
            let mut t = vec![c.get(0, 0).re];
            for k in 1..p {
                t.push(c.get(0, k).re);
                t.push(c.get(0, k).im);
            }
            t
        };
        let build = |t: &[f64]| -> DMatrix<C64> {
            let mut first_row = vec![C64::new(t[0], 0.0)];
            for k in 1..p {
                first_row.push(C64::new(t[2 * k - 1], t[2 * k]));
            }
            DMatrix::from_fn(p, p, |i, j| {
                if j >= i {
                    first_row[j - i]
                } else {
                    first_row[i - j].conj()
                }
            })
        };
        let theta = theta_of(&c);
        let ci = c.factor().unwrap().inverse();
        let h = 1e-3;
        let products: Vec<DMatrix<C64>> = (0..2 * p - 1)
            .map(|u| {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[u] += h;
                dn[u] -= h;
                let d = (build(&up) - build(&dn)) * C64::new(0.5 / h, 0.0);
                ci.as_matrix() * d
            })
            .collect();
        let oracle = fisher_from_products(&products, 50.0);
        let r = toeplitz_crb(&c, 50).unwrap();
        let scale = r.fisher.amax();
        assert!((oracle - &r.fisher).amax() < 1e-8 * scale.max(1.0));
    }

    #[test]
    fn sample_variance_attains_scalar_bound() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let (c0, m, trials) = (2.0_f64, 25usize, 10_000usize);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut sq = 0.0;
        for _ in 0..trials {
            let mut acc = 0.0;
            for _ in 0..m {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                acc += c0 * 0.5 * (re * re + im * im);
            }
            sq += (acc / m as f64 - c0).powi(2);
        }
        let empirical = sq / trials as f64;
        let bound = toeplitz_crb(&HermitianMatrix::from_real_diagonal(&[c0]), m)
            .unwrap()
            .per_entry_bound;
        assert!((empirical / bound - 1.0).abs() < 0.1, "{empirical} vs {bound}");
    }

    #[test]
    fn singular_fisher_is_reported() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(invert_fisher(&f), Err(Error::RankDeficient { .. })));
    }

    fn record(converged: bool, rmse: f64) -> TrialRecord {
        TrialRecord {
            scenario: "atom".into(),
            method: "gd2".into(),
            k_factor: 2,
            m: 10,
            trial: 0,
            seed: 1,
            rmse,
            kl: 0.0,
            crb: 1.0,
            runtime_s: 0.0,
            iterations: 1,
            converged,
            success: false,
        }
    }

    #[test]
    fn success_rule() {
        assert!(classify_success(&record(true, 1.0), 1.0, 10.0));
        assert!(!classify_success(&record(false, 1.0), 1.0, 10.0));
        assert!(!classify_success(&record(true, 50.0), 1.0, 10.0));
        assert!(!classify_success(&record(true, f64::NAN), 1.0, 10.0));
    }

    #[test]
    fn csv_header_matches_fields() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(record(true, 1.0)).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRIAL_CSV_HEADER);
    }

    proptest! {
        #[test]
        fn mse_is_symmetric(vals in proptest::collection::vec(-5.0f64..5.0, 8)) {
            let a = row(&[C64::new(vals[0].abs() + 1.0, 0.0), C64::new(vals[1], vals[2]), C64::new(vals[3], 0.0)]);
            let b = row(&[C64::new(vals[4].abs() + 1.0, 0.0), C64::new(vals[5], vals[6]), C64::new(vals[7], 0.0)]);
            prop_assert_eq!(first_row_mse(&a, &b).unwrap(), first_row_mse(&b, &a).unwrap());
        }
    }
}
