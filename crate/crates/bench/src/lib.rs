//! Shared fixtures for the benchmarks.

use toepgrad::scenarios::{sample, sample_covariance};
use toepgrad::{HermitianMatrix, ScenarioKind, ScenarioSpec};

/// Sample covariance of `m` draws from a named scenario.
pub fn fixture(kind: ScenarioKind, m: usize, seed: u64) -> HermitianMatrix {
    let spec = ScenarioSpec::named(kind, None).expect("named scenario");
    let c = spec.covariance().expect("valid scenario");
    sample_covariance(&sample(&c, m, seed).expect("sampling"))
}
