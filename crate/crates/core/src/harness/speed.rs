use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::median;
use super::{
    batch_hash, init_seed, resolve_scenario, resolve_workers, sibling_path, thread_pool, trial_seed, write_csv_rows,
};
use crate::error::{Error, Result};
use crate::optimizer::{fit, Algorithm, OptimizerConfig};
use crate::scenarios::{sample, sample_covariance, ScenarioKind, ScenarioSpec};

/// Paired single- versus split-rate timing on identical data and starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedConfig {
    pub scenario: ScenarioKind,
    pub p: Option<usize>,
    pub custom: Option<ScenarioSpec>,
    pub m_values: Vec<usize>,
    pub k_factors: Vec<u32>,
    pub trials: usize,
    pub methods: Vec<Algorithm>,
    pub optimizer: OptimizerConfig,
    pub base_seed: u64,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub timing: bool,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::RandomCara,
            p: None,
            custom: None,
            m_values: vec![20, 60, 100],
            k_factors: vec![2],
            trials: 10,
            methods: vec![Algorithm::Gd1, Algorithm::Gd2],
            optimizer: OptimizerConfig::default(),
            base_seed: 0,
            output: None,
            workers: None,
            timing: true,
        }
    }
}

impl SpeedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.methods.contains(&Algorithm::Gd1) && self.methods.contains(&Algorithm::Gd2)) {
            return Err(Error::InvalidParameter(
                "speed comparison needs both gd1 and gd2".into(),
            ));
        }
        if self.trials < 1 || self.m_values.is_empty() || self.m_values.contains(&0) {
            return Err(Error::InvalidParameter("need trials >= 1 and sample sizes >= 1".into()));
        }
        if self.k_factors.is_empty() || self.k_factors.contains(&0) {
            return Err(Error::InvalidParameter("k_factors must be non-empty and >= 1".into()));
        }
        self.optimizer.validate()?;
        resolve_scenario(self.scenario, self.p, self.custom.as_ref())?.validate()
    }
}

/// One fit of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRun {
    pub method: String,
    pub m: usize,
    pub k_factor: u32,
    pub trial: usize,
    pub seed: u64,
    pub data_hash: String,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub converged: bool,
    pub final_nll: f64,
}

/// gd1 / gd2 ratios for one shared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub m: usize,
    pub k_factor: u32,
    pub trial: usize,
    pub seed: u64,
    pub iterations_gd1: usize,
    pub iterations_gd2: usize,
    pub iter_ratio: f64,
    pub wall_time_gd1: f64,
    pub wall_time_gd2: f64,
    pub time_ratio: f64,
    pub same_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSummaryRow {
    pub method: String,
    pub m: usize,
    pub k_factor: u32,
    pub median_iterations: f64,
    pub median_wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SpeedReport {
    pub runs: Vec<SpeedRun>,
    pub pairs: Vec<PairRow>,
    pub summary: Vec<SpeedSummaryRow>,
}

impl SpeedReport {
    pub fn median_iter_ratio(&self) -> Option<f64> {
        median(&self.pairs.iter().map(|p| p.iter_ratio).collect::<Vec<_>>())
    }

    pub fn median_time_ratio(&self) -> Option<f64> {
        median(&self.pairs.iter().map(|p| p.time_ratio).collect::<Vec<_>>())
    }
}

/// Each `(m, k_factor, trial)` draws one batch; every method is fitted on it
/// from the same starting point, back to back on the same worker.
pub fn run_speed_compare(cfg: &SpeedConfig) -> Result<SpeedReport> {
    cfg.validate()?;
    let spec = resolve_scenario(cfg.scenario, cfg.p, cfg.custom.as_ref())?;
    let c = spec.covariance()?;
    let mut cells = Vec::new();
    for &m in &cfg.m_values {
        for &k_factor in &cfg.k_factors {
            for trial in 0..cfg.trials {
                cells.push((m, k_factor, trial));
            }
        }
    }
    let pool = thread_pool(resolve_workers(cfg.workers)?)?;
    let nested: Vec<Vec<SpeedRun>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, k_factor, trial)| -> Result<Vec<SpeedRun>> {
                let seed = trial_seed(cfg.base_seed, m, trial);
                let batch = sample(&c, m, seed)?;
                let s = sample_covariance(&batch);
                let hash = batch_hash(&batch);
                cfg.methods
                    .iter()
                    .map(|&method| {
                        let r = fit(&s, k_factor as usize * spec.p, method, &cfg.optimizer, init_seed(seed))?;
                        Ok(SpeedRun {
                            method: method.to_string(),
                            m,
                            k_factor,
                            trial,
                            seed,
                            data_hash: hash.clone(),
                            iterations: r.iterations,
                            wall_time_s: if cfg.timing { r.wall_time } else { 0.0 },
                            converged: r.converged,
                            final_nll: r.trace.final_nll(),
                        })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let runs: Vec<SpeedRun> = nested.into_iter().flatten().collect();

    let mut by_cell: BTreeMap<(usize, u32, usize), BTreeMap<String, &SpeedRun>> = BTreeMap::new();
    for r in &runs {
        by_cell
            .entry((r.m, r.k_factor, r.trial))
            .or_default()
            .insert(r.method.clone(), r);
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
    let pairs: Vec<PairRow> = by_cell
        .iter()
        .map(|(&(m, k_factor, trial), runs)| {
            let (g1, g2) = (runs["gd1"], runs["gd2"]);
            PairRow {
                m,
                k_factor,
                trial,
                seed: g1.seed,
                iterations_gd1: g1.iterations,
                iterations_gd2: g2.iterations,
                iter_ratio: ratio(g1.iterations as f64, g2.iterations as f64),
                wall_time_gd1: g1.wall_time_s,
                wall_time_gd2: g2.wall_time_s,
                time_ratio: ratio(g1.wall_time_s, g2.wall_time_s),
                same_data: g1.data_hash == g2.data_hash,
            }
        })
        .collect();

    let mut groups: BTreeMap<(String, usize, u32), Vec<&SpeedRun>> = BTreeMap::new();
    for r in &runs {
        groups.entry((r.method.clone(), r.m, r.k_factor)).or_default().push(r);
    }
    let summary = groups
        .into_iter()
        .map(|((method, m, k_factor), rs)| SpeedSummaryRow {
            method,
            m,
            k_factor,
            median_iterations: median(&rs.iter().map(|r| r.iterations as f64).collect::<Vec<_>>()).unwrap_or(f64::NAN),
            median_wall_time_s: median(&rs.iter().map(|r| r.wall_time_s).collect::<Vec<_>>()).unwrap_or(f64::NAN),
        })
        .collect::<Vec<_>>();

    if let Some(path) = &cfg.output {
        write_csv_rows(
            path,
            &["method", "m", "k_factor", "median_iterations", "median_wall_time_s"],
            &summary,
        )?;
        write_csv_rows(
            &sibling_path(path, "runs"),
            &[
                "method",
                "m",
                "k_factor",
                "trial",
                "seed",
                "data_hash",
                "iterations",
                "wall_time_s",
                "converged",
                "final_nll",
            ],
            &runs,
        )?;
        write_csv_rows(
            &sibling_path(path, "pairs"),
            &[
                "m",
                "k_factor",
                "trial",
                "seed",
                "iterations_gd1",
                "iterations_gd2",
                "iter_ratio",
                "wall_time_gd1",
                "wall_time_gd2",
                "time_ratio",
                "same_data",
            ],
            &pairs,
        )?;
    }
    Ok(SpeedReport { runs, pairs, summary })
}
