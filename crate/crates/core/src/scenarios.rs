//! Ground-truth Toeplitz covariances for the benchmark experiments and
//! circular complex Gaussian sampling from them.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, C64};
use crate::model::toeplitz_column;

// Literal tables from the published benchmark setups.

/// Structured benchmark: 15 sources with amplitudes 1..=15.
pub const ATOM_FREQUENCIES: [f64; 15] = [
    0.2167, 0.6500, 1.0833, 1.3, 1.5166, 1.9500, 2.3833, 2.8166, 3.2499, 3.6832, 4.1166, 4.5499, 4.9832, 5.4165, 5.8499,
];

/// Random Carathéodory draw, frequencies.
pub const RANDOM_CARA_FREQUENCIES: [f64; 15] = [
    0.1840, 1.7550, 1.9173, 2.4953, 2.5326, 2.7569, 2.9125, 3.2966, 3.5783, 4.0129, 4.2890, 4.6162, 4.7399, 4.7603,
    5.0257,
];

/// Random Carathéodory draw, amplitudes.
pub const RANDOM_CARA_AMPLITUDES: [f64; 15] = [
    0.0281, 0.4950, 0.7108, 0.7845, 0.8494, 1.0405, 1.1375, 1.2450, 1.3099, 1.4312, 1.6390, 1.9294, 1.9952, 2.0249,
    2.3427,
];

pub const RANDOM_CARA_NOISE_STD: f64 = 0.17;

pub const AR3_COEFFS: [f64; 3] = [0.5, 0.2, 0.05];
pub const AR3_INNOVATION_STD: f64 = 0.8;
pub const AR3_DEFAULT_P: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Atom,
    Ar3,
    RandomCara,
    Custom,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Atom => "atom",
            ScenarioKind::Ar3 => "ar3",
            ScenarioKind::RandomCara => "random-cara",
            ScenarioKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atom" => Ok(ScenarioKind::Atom),
            "ar3" => Ok(ScenarioKind::Ar3),
            "random-cara" | "random_cara" => Ok(ScenarioKind::RandomCara),
            "custom" => Ok(ScenarioKind::Custom),
            other => Err(Error::InvalidParameter(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Description of a ground-truth covariance. Carathéodory scenarios use
/// `amplitudes`, `frequencies` and `noise_variance`; the autoregressive one uses
/// `ar_coeffs` and `innovation_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub p: usize,
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub frequencies: Vec<f64>,
    #[serde(default)]
    pub noise_variance: f64,
    #[serde(default)]
    pub ar_coeffs: Vec<f64>,
    #[serde(default)]
    pub innovation_std: f64,
}

impl ScenarioSpec {
    pub fn atom() -> Self {
        Self {
            kind: ScenarioKind::Atom,
            p: 15,
            amplitudes: (1..=15).map(f64::from).collect(),
            frequencies: ATOM_FREQUENCIES.to_vec(),
            noise_variance: 0.0,
            ar_coeffs: Vec::new(),
            innovation_std: 0.0,
        }
    }

    pub fn random_cara() -> Self {
        Self {
            kind: ScenarioKind::RandomCara,
            p: 15,
            amplitudes: RANDOM_CARA_AMPLITUDES.to_vec(),
            frequencies: RANDOM_CARA_FREQUENCIES.to_vec(),
            noise_variance: RANDOM_CARA_NOISE_STD * RANDOM_CARA_NOISE_STD,
            ar_coeffs: Vec::new(),
            innovation_std: 0.0,
        }
    }

    pub fn ar3(p: usize) -> Self {
        Self {
            kind: ScenarioKind::Ar3,
            p,
            amplitudes: Vec::new(),
            frequencies: Vec::new(),
            noise_variance: 0.0,
            ar_coeffs: AR3_COEFFS.to_vec(),
            innovation_std: AR3_INNOVATION_STD,
        }
    }

    pub fn custom(p: usize, amplitudes: Vec<f64>, frequencies: Vec<f64>, noise_variance: f64) -> Self {
        Self {
            kind: ScenarioKind::Custom,
            p,
            amplitudes,
            frequencies,
            noise_variance,
            ar_coeffs: Vec::new(),
            innovation_std: 0.0,
        }
    }

    /// Named scenario with an optional dimension override (only the
    /// autoregressive scenario has a free dimension).
    pub fn named(kind: ScenarioKind, p: Option<usize>) -> Result<Self> {
        match kind {
            ScenarioKind::Atom => Ok(Self::atom()),
            ScenarioKind::RandomCara => Ok(Self::random_cara()),
            ScenarioKind::Ar3 => Ok(Self::ar3(p.unwrap_or(AR3_DEFAULT_P))),
            ScenarioKind::Custom => Err(Error::InvalidParameter(
                "custom scenarios need explicit amplitudes and frequencies".into(),
            )),
        }
    }

    pub fn id(&self) -> &'static str {
        self.kind.as_str()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidDimension("scenario dimension must be >= 1".into()));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::InvalidParameter("noise variance must be >= 0".into()));
        }
        match self.kind {
            ScenarioKind::Ar3 => {
                check_ar_stable(&self.ar_coeffs)?;
                if self.ar_coeffs.len() >= self.p {
                    return Err(Error::InvalidDimension(format!(
                        "AR order {} needs p > order, got p = {}",
                        self.ar_coeffs.len(),
                        self.p
                    )));
                }
                Ok(())
            }
            _ => {
                if self.amplitudes.len() != self.frequencies.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.amplitudes.len(),
                        actual: self.frequencies.len(),
                    });
                }
                if self.amplitudes.iter().any(|a| !(*a >= 0.0)) {
                    return Err(Error::InvalidParameter("amplitudes must be >= 0".into()));
                }
                Ok(())
            }
        }
    }

    pub fn covariance(&self) -> Result<HermitianMatrix> {
        self.validate()?;
        match self.kind {
            ScenarioKind::Ar3 => ar3_covariance(&self.ar_coeffs, self.innovation_std, self.p),
            _ => Ok(caratheodory_covariance(
                &self.amplitudes,
                &self.frequencies,
                self.noise_variance,
                self.p,
            )),
        }
    }
}

/// `Σ_k a_k v(ω_k) v(ω_k)ᴴ + σ² I`.
pub fn caratheodory_covariance(
    amplitudes: &[f64],
    frequencies: &[f64],
    noise_variance: f64,
    p: usize,
) -> HermitianMatrix {
    let mut col = toeplitz_column(amplitudes, frequencies, p);
    col[0] += noise_variance;
    HermitianMatrix::toeplitz_from_first_column(&col)
}

pub fn atom_covariance() -> (HermitianMatrix, ScenarioSpec) {
    let spec = ScenarioSpec::atom();
    let c = spec.covariance().expect("literal scenario is valid");
    (c, spec)
}

pub fn random_cara_covariance() -> (HermitianMatrix, ScenarioSpec) {
    let spec = ScenarioSpec::random_cara();
    let c = spec.covariance().expect("literal scenario is valid");
    (c, spec)
}

/// Roots of `z^q − φ₁ z^{q−1} − … − φ_q` must lie strictly inside the unit circle.
fn check_ar_stable(coeffs: &[f64]) -> Result<()> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::UnstableAr("non-finite coefficient".into()));
    }
    let q = coeffs.len();
    if q == 0 {
        return Ok(());
    }
    let mut companion = DMatrix::<f64>::zeros(q, q);
    for (i, &c) in coeffs.iter().enumerate() {
        companion[(0, i)] = c;
    }
    for i in 1..q {
        companion[(i, i - 1)] = 1.0;
    }
    let worst = companion
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if worst >= 1.0 {
        return Err(Error::UnstableAr(format!("root modulus {worst:.6} >= 1")));
    }
    Ok(())
}

/// Stationary AR covariance: the precision matrix is assembled with the
/// Gohberg–Semencul formula `(L₁L₁ᴴ − L₂L₂ᴴ)/σ²` and then inverted.
///
/// `L₁` is lower-triangular Toeplitz with first column `(1, −φ₁, …, −φ_q, 0, …)`
/// and `L₂` lower-triangular Toeplitz with first column
/// `(0, a_{P−1}, …, a₁)` where `a` is that same padded vector.
pub fn ar3_covariance(coeffs: &[f64], sigma: f64, p: usize) -> Result<HermitianMatrix> {
    check_ar_stable(coeffs)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "innovation std must be positive, got {sigma}"
        )));
    }
    if p <= coeffs.len() {
        return Err(Error::InvalidDimension(format!(
            "AR order {} needs p > order, got p = {p}",
            coeffs.len()
        )));
    }
    let precision = gohberg_semencul_precision(coeffs, sigma, p);
    Ok(precision.factor()?.inverse())
}

pub fn gohberg_semencul_precision(coeffs: &[f64], sigma: f64, p: usize) -> HermitianMatrix {
    let mut a = vec![0.0; p];
    a[0] = 1.0;
    for (slot, &c) in a[1..].iter_mut().zip(coeffs) {
        *slot = -c;
    }
    let mut a_rev = vec![0.0; p];
    for i in 1..p {
        a_rev[i] = a[p - i];
    }
    let lower_toeplitz = |col: &[f64]| DMatrix::from_fn(p, p, |i, j| if i >= j { col[i - j] } else { 0.0 });
    let l1 = lower_toeplitz(&a);
    let l2 = lower_toeplitz(&a_rev);
    let q = (&l1 * l1.transpose() - &l2 * l2.transpose()) / (sigma * sigma);
    HermitianMatrix::hermitize(q.map(|x| C64::new(x, 0.0)))
}

/// `m` observations of length `p`, observation-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub p: usize,
    pub seed: u64,
    data: Vec<C64>,
}

impl SampleBatch {
    pub fn from_data(p: usize, seed: u64, data: Vec<C64>) -> Result<Self> {
        if p == 0 || !data.len().is_multiple_of(p) {
            return Err(Error::InvalidDimension(format!(
                "batch of {} values does not split into vectors of length {p}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("batch contains non-finite values".into()));
        }
        Ok(Self { p, seed, data })
    }

    pub fn m(&self) -> usize {
        self.data.len() / self.p
    }

    pub fn observation(&self, t: usize) -> &[C64] {
        &self.data[t * self.p..(t + 1) * self.p]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    /// Observations of `self` followed by those of `other` (seed of `self`).
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.p != other.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: other.p,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            p: self.p,
            seed: self.seed,
            data,
        })
    }
}

/// Draws `x = L z` with `L Lᴴ = C` and `z` circular standard normal
/// (`E[zzᴴ] = I`, `E[zzᵀ] = 0`).
pub fn sample(c: &HermitianMatrix, m: usize, seed: u64) -> Result<SampleBatch> {
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let p = c.dim();
    let factor = c.factor()?;
    let l = factor.lower();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(m * p);
    let mut z = vec![C64::new(0.0, 0.0); p];
    for _ in 0..m {
        for zi in z.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *zi = C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2);
        }
        for i in 0..p {
            let mut acc = C64::new(0.0, 0.0);
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += l[(i, j)] * zj;
            }
            data.push(acc);
        }
    }
    Ok(SampleBatch { p, seed, data })
}

/// `S = (1/M) Σ x_m x_mᴴ`.
pub fn sample_covariance(batch: &SampleBatch) -> HermitianMatrix {
    let x = DMatrix::from_column_slice(batch.p, batch.m(), &batch.data);
    let s = &x * x.adjoint() * C64::new(1.0 / batch.m() as f64, 0.0);
    HermitianMatrix::hermitize(s)
}

/// Little-endian batch file: 32-byte header then interleaved `(re, im)` f64 pairs.
pub mod batch_file {
    use std::fs;
    use std::path::Path;

    use super::*;

    pub const MAGIC: &[u8; 8] = b"TPGBATCH";
    pub const VERSION: u32 = 1;
    pub const HEADER_LEN: usize = 32;

    pub fn to_bytes(batch: &SampleBatch) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * batch.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(batch.p as u32).to_le_bytes());
        out.extend_from_slice(&(batch.m() as u64).to_le_bytes());
        out.extend_from_slice(&batch.seed.to_le_bytes());
        for z in &batch.data {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SampleBatch> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::BatchFormat(format!(
                "file is {} bytes, header needs 32",
                bytes.len()
            )));
        }
        if &bytes[0..8] != MAGIC {
            return Err(Error::BatchFormat("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::BatchFormat(format!("unsupported version {version}")));
        }
        let p = u32_at(12) as usize;
        let m = u64_at(16) as usize;
        let seed = u64_at(24);
        let expected = m
            .checked_mul(p)
            .and_then(|n| n.checked_mul(16))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::BatchFormat("header sizes overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::BatchFormat(format!(
                "expected {expected} bytes for p = {p}, m = {m}, found {}",
                bytes.len()
            )));
        }
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let data = (0..m * p)
            .map(|i| {
                let o = HEADER_LEN + 16 * i;
                C64::new(f64_at(o), f64_at(o + 8))
            })
            .collect();
        SampleBatch::from_data(p, seed, data)
    }

    pub fn write(path: &Path, batch: &SampleBatch) -> Result<()> {
        fs::write(path, to_bytes(batch)).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<SampleBatch> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        from_bytes(&bytes)
    }
}
