use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::mean;
use super::{init_seed, resolve_scenario, resolve_workers, sibling_path, thread_pool, trial_seed, write_csv_rows};
use crate::error::{Error, Result};
use crate::likelihood::kl_divergence;
use crate::linalg::HermitianMatrix;
use crate::metrics::{
    classify_success, first_row_sq_error, toeplitz_crb, TrialRecord, DEFAULT_SUCCESS_FACTOR, TRIAL_CSV_HEADER,
};
use crate::optimizer::{fit, Algorithm, OptimizerConfig};
use crate::scenarios::{sample, sample_covariance, ScenarioKind, ScenarioSpec};

/// Accuracy sweep over sample sizes, methods and overparameterization factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub scenario: ScenarioKind,
    /// Dimension for scenarios that have a free one.
    pub p: Option<usize>,
    /// Full description, required for `custom`.
    pub custom: Option<ScenarioSpec>,
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<Algorithm>,
    pub k_factors: Vec<u32>,
    pub optimizer: OptimizerConfig,
    pub base_seed: u64,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub success_factor: f64,
    /// When false, `runtime_s` is written as 0 so reruns are byte-identical.
    pub timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Atom,
            p: None,
            custom: None,
            m_values: (1..=10).map(|i| 10 * i).collect(),
            trials: 100,
            methods: Algorithm::ALL.to_vec(),
            k_factors: vec![1, 2, 4],
            optimizer: OptimizerConfig::default(),
            base_seed: 0,
            output: None,
            workers: None,
            success_factor: DEFAULT_SUCCESS_FACTOR,
            timing: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.trials < 1 {
            return bad("trials must be >= 1");
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.k_factors.is_empty() || self.k_factors.contains(&0) {
            return bad("k_factors must be non-empty and >= 1");
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return bad("m_values must be non-empty and >= 1");
        }
        if !(self.success_factor > 0.0) {
            return bad("success_factor must be positive");
        }
        self.optimizer.validate()?;
        self.scenario_spec()?.validate()
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec> {
        resolve_scenario(self.scenario, self.p, self.custom.as_ref())
    }
}

/// Aggregate over one `(method, k_factor, m)` cell. Means over successful
/// trials only; `excluded` counts the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub k_factor: u32,
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub excluded: usize,
    pub success_rate: f64,
    pub mean_rmse: Option<f64>,
    pub mean_kl: Option<f64>,
    pub mean_rmse_all: Option<f64>,
    pub crb: f64,
    pub success_factor: f64,
}

const SUMMARY_HEADER: [&str; 13] = [
    "scenario",
    "method",
    "k_factor",
    "m",
    "trials",
    "successes",
    "excluded",
    "success_rate",
    "mean_rmse",
    "mean_kl",
    "mean_rmse_all",
    "crb",
    "success_factor",
];

#[derive(Debug, Clone)]
pub struct BenchReport {
    /// All rows, sorted by `(m, method, k_factor, trial)`.
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    /// Trials that raised an error (written as failed rows).
    pub failed_trials: usize,
    /// Rows reused from an existing output file.
    pub resumed: usize,
    pub summary_path: Option<PathBuf>,
}

/// One `(m, trial, method, k_factor)` cell; `seed` is the data seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialTask {
    pub m: usize,
    pub trial: usize,
    pub method: Algorithm,
    pub k_factor: u32,
    pub seed: u64,
}

impl TrialTask {
    pub fn new(base_seed: u64, m: usize, trial: usize, method: Algorithm, k_factor: u32) -> Self {
        Self {
            m,
            trial,
            method,
            k_factor,
            seed: trial_seed(base_seed, m, trial),
        }
    }
}

/// A scored trial plus the matrices behind it (absent when the trial errored).
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub sample_cov: Option<HermitianMatrix>,
    pub c_hat: Option<HermitianMatrix>,
    pub error: Option<String>,
}

type RowKey = (String, String, u32, usize, usize, u64);

fn row_key(r: &TrialRecord) -> RowKey {
    (r.scenario.clone(), r.method.clone(), r.k_factor, r.m, r.trial, r.seed)
}

fn sort_key(r: &TrialRecord) -> (String, usize, String, u32, usize, u64) {
    (r.scenario.clone(), r.m, r.method.clone(), r.k_factor, r.trial, r.seed)
}

/// Rows of an earlier (possibly interrupted) run; unparsable lines are dropped.
fn load_existing(path: &Path) -> Result<Vec<TrialRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header.is_empty() {
        return Ok(Vec::new());
    }
    if header != TRIAL_CSV_HEADER {
        return Err(Error::InvalidParameter(format!(
            "{} exists but is not a trial CSV (header '{header}')",
            path.display()
        )));
    }
    Ok(rdr.deserialize::<TrialRecord>().filter_map(|r| r.ok()).collect())
}

/// Draws the batch for `task`, fits, and scores against `c`. Errors are
/// captured in the outcome rather than returned.
pub fn evaluate_trial(
    spec: &ScenarioSpec,
    c: &HermitianMatrix,
    crb: f64,
    task: &TrialTask,
    optimizer: &OptimizerConfig,
    success_factor: f64,
    timing: bool,
) -> TrialOutcome {
    let mut rec = TrialRecord {
        scenario: spec.id().to_string(),
        method: task.method.to_string(),
        k_factor: task.k_factor,
        m: task.m,
        trial: task.trial,
        seed: task.seed,
        rmse: f64::NAN,
        kl: f64::NAN,
        crb,
        runtime_s: 0.0,
        iterations: 0,
        converged: false,
        success: false,
    };
    let mut sample_cov = None;
    let mut c_hat = None;
    let outcome = (|| -> Result<()> {
        let s = sample_covariance(&sample(c, task.m, task.seed)?);
        let k = task.k_factor as usize * spec.p;
        let fitted = fit(&s, k, task.method, optimizer, init_seed(task.seed))?;
        let est = fitted.covariance();
        rec.rmse = first_row_sq_error(&est, c)?;
        rec.kl = kl_divergence(c, &est)?;
        rec.iterations = fitted.iterations;
        rec.converged = fitted.converged;
        if timing {
            rec.runtime_s = fitted.wall_time;
        }
        sample_cov = Some(s);
        c_hat = Some(est);
        Ok(())
    })();
    rec.success = classify_success(&rec, crb, success_factor);
    TrialOutcome {
        record: rec,
        sample_cov,
        c_hat,
        error: outcome.err().map(|e| e.to_string()),
    }
}

/// Runs every `(m, trial, method, k_factor)` cell not already present in the
/// output file, then rewrites the file sorted and writes a summary alongside.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let spec = cfg.scenario_spec()?;
    let c = spec.covariance()?;
    let mut crb_by_m = BTreeMap::new();
    for &m in &cfg.m_values {
        crb_by_m.insert(m, toeplitz_crb(&c, m)?.first_row_bound);
    }

    let existing = match &cfg.output {
        Some(path) => load_existing(path)?,
        None => Vec::new(),
    };
    let mut seen: HashSet<RowKey> = HashSet::new();
    let mut kept: Vec<TrialRecord> = existing.into_iter().filter(|r| seen.insert(row_key(r))).collect();

    let mut tasks = Vec::new();
    for &m in &cfg.m_values {
        for trial in 0..cfg.trials {
            let seed = trial_seed(cfg.base_seed, m, trial);
            for &method in &cfg.methods {
                for &k_factor in &cfg.k_factors {
                    let key = (spec.id().to_string(), method.to_string(), k_factor, m, trial, seed);
                    if !seen.contains(&key) {
                        tasks.push(TrialTask::new(cfg.base_seed, m, trial, method, k_factor));
                    }
                }
            }
        }
    }
    let resumed = kept.len();

    // Start from a clean, sorted file so appends never follow a torn line.
    kept.sort_by_key(sort_key);
    if let Some(path) = &cfg.output {
        write_csv_rows(path, &TRIAL_CSV_HEADER.split(',').collect::<Vec<_>>(), &kept)?;
    }

    let workers = resolve_workers(cfg.workers)?;
    let pool = thread_pool(workers)?;
    let (tx, rx) = crossbeam_channel::unbounded::<(TrialRecord, bool)>();
    let sink_path = cfg.output.clone();
    let writer = std::thread::spawn(move || -> Result<(Vec<TrialRecord>, usize)> {
        let mut w = match &sink_path {
            Some(path) => {
                let file = OpenOptions::new()
                    .append(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?;
                Some(csv::WriterBuilder::new().has_headers(false).from_writer(file))
            }
            None => None,
        };
        let mut rows = Vec::new();
        let mut failures = 0;
        for (rec, failed) in rx {
            if let Some(w) = w.as_mut() {
                w.serialize(&rec)?;
                w.flush()
                    .map_err(|e| Error::io(sink_path.as_deref().unwrap_or(Path::new("")), e))?;
            }
            failures += usize::from(failed);
            rows.push(rec);
        }
        Ok((rows, failures))
    });
    pool.install(|| {
        tasks.par_iter().for_each_with(tx, |tx, task| {
            let out = evaluate_trial(
                &spec,
                &c,
                crb_by_m[&task.m],
                task,
                &cfg.optimizer,
                cfg.success_factor,
                cfg.timing,
            );
            let _ = tx.send((out.record, out.error.is_some()));
        });
    });
    let (fresh, failed_trials) = writer
        .join()
        .map_err(|_| Error::InvalidParameter("writer thread panicked".into()))??;

    let mut records = kept;
    records.extend(fresh);
    records.sort_by_key(sort_key);
    let summary = summarize(&records, cfg.success_factor);
    let mut summary_path = None;
    if let Some(path) = &cfg.output {
        write_csv_rows(path, &TRIAL_CSV_HEADER.split(',').collect::<Vec<_>>(), &records)?;
        let sp = sibling_path(path, "summary");
        write_csv_rows(&sp, &SUMMARY_HEADER, &summary)?;
        summary_path = Some(sp);
    }
    Ok(BenchReport {
        records,
        summary,
        failed_trials,
        resumed,
        summary_path,
    })
}

/// Per-cell aggregation; rows are grouped by `(scenario, method, k_factor, m)`.
pub fn summarize(records: &[TrialRecord], success_factor: f64) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(String, String, u32, usize), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.scenario.clone(), r.method.clone(), r.k_factor, r.m))
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|((scenario, method, k_factor, m), rows)| {
            let ok: Vec<&&TrialRecord> = rows.iter().filter(|r| r.success).collect();
            let all_rmse: Vec<f64> = rows.iter().map(|r| r.rmse).filter(|v| v.is_finite()).collect();
            SummaryRow {
                scenario,
                method,
                k_factor,
                m,
                trials: rows.len(),
                successes: ok.len(),
                excluded: rows.len() - ok.len(),
                success_rate: ok.len() as f64 / rows.len() as f64,
                mean_rmse: mean(&ok.iter().map(|r| r.rmse).collect::<Vec<_>>()),
                mean_kl: mean(&ok.iter().map(|r| r.kl).collect::<Vec<_>>()),
                mean_rmse_all: mean(&all_rmse),
                crb: rows[0].crb,
                success_factor,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tiny(dir: &Path) -> BenchConfig {
        BenchConfig {
            scenario: ScenarioKind::Ar3,
            p: Some(4),
            m_values: vec![8, 16],
            trials: 2,
            methods: vec![Algorithm::Gd2, Algorithm::Gda],
            k_factors: vec![1, 2],
            optimizer: OptimizerConfig {
                max_iters: 150,
                ..Default::default()
            },
            base_seed: 42,
            output: Some(dir.join("bench.csv")),
            workers: Some(1),
            timing: false,
            ..Default::default()
        }
    }

    #[test]
    fn writes_sorted_rows_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let report = run_bench(&cfg).unwrap();
        assert_eq!(report.records.len(), 2 * 2 * 2 * 2);
        assert_eq!(report.failed_trials, 0);
        let text = fs::read_to_string(cfg.output.as_ref().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRIAL_CSV_HEADER);
        assert_eq!(text.lines().count(), 17);
        assert_eq!(report.summary.len(), 2 * 2 * 2);
        for row in &report.summary {
            assert_eq!(row.trials, 2);
            assert_eq!(row.successes + row.excluded, 2);
        }
        let summary = fs::read_to_string(report.summary_path.unwrap()).unwrap();
        assert!(summary.starts_with("scenario,method,k_factor,m,trials,successes,excluded"));
        // Pairing: both methods see the same data seed per (m, trial).
        for r in &report.records {
            assert_eq!(r.seed, trial_seed(42, r.m, r.trial));
            assert!(!r.success || r.converged);
        }
    }

    #[test]
    fn resumes_without_recomputing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let first = run_bench(&cfg).unwrap();
        let bytes = fs::read(cfg.output.as_ref().unwrap()).unwrap();
        // Drop the last rows and tear the final line to simulate a crash.
        let text = String::from_utf8(bytes.clone()).unwrap();
        let keep: Vec<&str> = text.lines().take(10).collect();
        let torn = format!("{}\n{}", keep.join("\n"), "ar3,gd2,2,16,1,12");
        fs::write(cfg.output.as_ref().unwrap(), torn).unwrap();
        let second = run_bench(&cfg).unwrap();
        assert_eq!(second.resumed, 9);
        assert_eq!(second.records, first.records);
        assert_eq!(fs::read(cfg.output.as_ref().unwrap()).unwrap(), bytes);
        let third = run_bench(&cfg).unwrap();
        assert_eq!(third.resumed, 16);
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let one = tiny(a.path());
        let many = BenchConfig {
            workers: Some(3),
            ..tiny(b.path())
        };
        run_bench(&one).unwrap();
        run_bench(&many).unwrap();
        assert_eq!(
            fs::read(one.output.unwrap()).unwrap(),
            fs::read(many.output.unwrap()).unwrap()
        );
    }

    #[test]
    fn foreign_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        fs::write(cfg.output.as_ref().unwrap(), "a,b,c\n1,2,3\n").unwrap();
        assert!(run_bench(&cfg).is_err());
    }

    #[test]
    fn summary_excludes_failures() {
        let mk = |trial, rmse, success| TrialRecord {
            scenario: "atom".into(),
            method: "gd2".into(),
            k_factor: 2,
            m: 10,
            trial,
            seed: 0,
            rmse,
            kl: 1.0,
            crb: 2.0,
            runtime_s: 0.0,
            iterations: 1,
            converged: success,
            success,
        };
        let rows = summarize(&[mk(0, 1.0, true), mk(1, 3.0, true), mk(2, 500.0, false)], 10.0);
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!((r.trials, r.successes, r.excluded), (3, 2, 1));
        assert_eq!(r.mean_rmse, Some(2.0));
        assert_eq!(r.mean_rmse_all, Some(168.0));
    }

    #[test]
    fn config_json_defaults_and_validation() {
        let cfg: BenchConfig = serde_json::from_str(r#"{"scenario": "random-cara", "trials": 3}"#).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::RandomCara);
        assert_eq!(cfg.m_values, vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100]);
        assert_eq!(cfg.k_factors, vec![1, 2, 4]);
        cfg.validate().unwrap();
        assert!(BenchConfig {
            trials: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BenchConfig {
            methods: vec![],
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BenchConfig {
            m_values: vec![0],
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BenchConfig {
            scenario: ScenarioKind::Custom,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(serde_json::from_str::<BenchConfig>(r#"{"trails": 3}"#).is_err());
    }
}
