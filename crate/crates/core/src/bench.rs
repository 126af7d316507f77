//! Trial orchestration, metrics, variant switching, and aggregate suite
//! reports.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{run_sgpdt, FinalModel, ModelChain, RunTrace};
use crate::data::{split, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::expr::EvalCounter;

/// Which fitness function and function set a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Variant {
    /// Residual-variance fitness, full function set.
    #[serde(rename = "sgpdt")]
    Sgpdt,
    /// MSE fitness, full function set.
    #[serde(rename = "dt-em")]
    DtEm,
    /// Residual-variance fitness without Min/Max.
    #[serde(rename = "dt-nm")]
    DtNm,
}

/// All hyperparameters of a run plus the variant switch and RNG seed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub variant: Variant,
    pub pop_size: usize,
    pub n_ext: usize,
    pub n_int: usize,
    pub init_max_depth: usize,
    pub mutation_max_depth: usize,
    pub leaf_bias: f64,
    pub tournament_k: usize,
    pub rolling_window: usize,
    pub elite_size: usize,
    pub seed: u64,
    pub split: SplitSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::Sgpdt,
            pop_size: 1000,
            n_ext: 20,
            n_int: 50,
            init_max_depth: 4,
            mutation_max_depth: 5,
            leaf_bias: 0.70,
            tournament_k: 4,
            rolling_window: 20,
            elite_size: 1,
            seed: 0,
            split: SplitSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pop_size", self.pop_size),
            ("n_ext", self.n_ext),
            ("n_int", self.n_int),
            ("init_max_depth", self.init_max_depth),
            ("mutation_max_depth", self.mutation_max_depth),
            ("tournament_k", self.tournament_k),
            ("rolling_window", self.rolling_window),
            ("elite_size", self.elite_size),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.pop_size < 2 {
            return Err(Error::config("pop_size must be at least 2"));
        }
        if self.elite_size >= self.pop_size {
            return Err(Error::config("elite_size must be smaller than pop_size"));
        }
        if self.tournament_k > self.pop_size {
            return Err(Error::config("tournament_k cannot exceed pop_size"));
        }
        if !(0.0..=1.0).contains(&self.leaf_bias) {
            return Err(Error::config(format!(
                "leaf_bias must be in [0, 1], got {}",
                self.leaf_bias
            )));
        }
        self.split.validate()
    }
}

/// Metrics of one trial.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialReport {
    pub dataset: String,
    pub variant: Variant,
    pub seed: u64,
    pub test_rmse: f64,
    /// Total node operations, all phases.
    pub node_ops: u64,
    pub node_ops_train: u64,
    pub node_ops_validation: u64,
    pub node_ops_test: u64,
    pub final_model_size: usize,
    pub selected_chain_len: usize,
    pub wall_time_secs: f64,
}

/// Everything a trial produces: the report plus the model and diagnostics.
#[derive(Debug)]
pub struct TrialOutput {
    pub report: TrialReport,
    pub model: FinalModel,
    pub chain: ModelChain,
    pub trace: RunTrace,
}

/// Root mean square error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "length mismatch: predictions {} vs truth {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract("RMSE over zero cases"));
    }
    let mut sum = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        let d = p - t;
        sum += d * d;
    }
    Ok((sum / pred.len() as f64).sqrt())
}

/// Runs one complete trial: split, chain run, held-out RMSE.
pub fn run_trial(data: &Dataset, cfg: &RunConfig) -> Result<TrialOutput> {
    run_trial_counted(data, cfg, &EvalCounter::new())
}

/// As [`run_trial`], with a caller-supplied counter (useful for node-ops
/// reconciliation).
pub fn run_trial_counted(
    data: &Dataset,
    cfg: &RunConfig,
    counter: &EvalCounter,
) -> Result<TrialOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let ops_start = counter.total();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train, val, test) = split(data, &cfg.split, &mut rng)?;

    let (model, chain, trace) = run_sgpdt(
        &train.features,
        &train.targets,
        &val.features,
        &val.targets,
        cfg,
        &mut rng,
        counter,
    )?;

    let ops_before_test = counter.total();
    let test_pred = model.predict(&test.features, counter)?;
    let node_ops_test = counter.total() - ops_before_test;
    let test_rmse = rmse(&test_pred, &test.targets)?;

    let report = TrialReport {
        dataset: data.name.clone(),
        variant: cfg.variant,
        seed: cfg.seed,
        test_rmse,
        node_ops: counter.total() - ops_start,
        node_ops_train: trace.train_node_ops,
        node_ops_validation: trace.validation_node_ops,
        node_ops_test,
        final_model_size: model.size(),
        selected_chain_len: model.members.len(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(TrialOutput {
        report,
        model,
        chain,
        trace,
    })
}

/// Middle order statistic for odd counts, mean of the two middle values
/// for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Quartiles as medians of the lower/upper halves (middle element excluded
/// for odd counts). Returns (q1, median, q3).
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let med = median(&v);
    if n == 1 {
        return (v[0], med, v[0]);
    }
    let half = n / 2;
    let q1 = median(&v[..half]);
    let q3 = median(&v[n - half..]);
    (q1, med, q3)
}

/// Per-dataset aggregate over all trials.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub variant: Variant,
    pub trials: usize,
    pub rmse_q1: f64,
    pub rmse_median: f64,
    pub rmse_q3: f64,
    pub node_ops_median: f64,
    pub model_size_median: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialFailure {
    pub dataset: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub trials: Vec<TrialReport>,
    pub failures: Vec<TrialFailure>,
    pub aggregates: Vec<AggregateRow>,
}

/// Runs `trials` trials per dataset with seeds `cfg.seed + 0..trials`,
/// distributing independent trials over `jobs` worker threads. Individual
/// trial failures are recorded and the suite continues.
pub fn run_suite(
    datasets: &[Dataset],
    cfg_template: &RunConfig,
    trials: usize,
    jobs: usize,
) -> Result<SuiteReport> {
    if trials == 0 {
        return Err(Error::config("trials must be at least 1"));
    }
    cfg_template.validate()?;
    let jobs = jobs.max(1);

    let tasks: Vec<(usize, u64)> = (0..datasets.len())
        .flat_map(|d| (0..trials as u64).map(move |t| (d, t)))
        .collect();
    let next_task = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, u64, Result<TrialReport>)>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..jobs.min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next_task.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    break;
                }
                let (d, t) = tasks[i];
                let cfg = RunConfig {
                    seed: cfg_template.seed + t,
                    ..*cfg_template
                };
                let outcome = run_trial(&datasets[d], &cfg).map(|o| o.report);
                results.lock().unwrap().push((d, t, outcome));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(d, t, _)| (*d, *t));

    let mut trials_ok = Vec::new();
    let mut failures = Vec::new();
    for (d, t, res) in results {
        match res {
            Ok(report) => trials_ok.push(report),
            Err(e) => failures.push(TrialFailure {
                dataset: datasets[d].name.clone(),
                seed: cfg_template.seed + t,
                error: e.to_string(),
            }),
        }
    }

    let mut aggregates = Vec::new();
    for data in datasets {
        let rows: Vec<&TrialReport> = trials_ok
            .iter()
            .filter(|r| r.dataset == data.name)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let rmses: Vec<f64> = rows.iter().map(|r| r.test_rmse).collect();
        let ops: Vec<f64> = rows.iter().map(|r| r.node_ops as f64).collect();
        let sizes: Vec<f64> = rows.iter().map(|r| r.final_model_size as f64).collect();
        let (q1, med, q3) = quartiles(&rmses);
        aggregates.push(AggregateRow {
            dataset: data.name.clone(),
            variant: cfg_template.variant,
            trials: rows.len(),
            rmse_q1: q1,
            rmse_median: med,
            rmse_q3: q3,
            node_ops_median: median(&ops),
            model_size_median: median(&sizes),
        });
    }

    Ok(SuiteReport {
        trials: trials_ok,
        failures,
        aggregates,
    })
}

/// Human-readable aligned table of the suite aggregates.
pub fn format_suite_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>7} {:>12} {:>12} {:>12} {:>14} {:>10}\n",
        "dataset", "trials", "rmse_q1", "rmse_median", "rmse_q3", "node_ops_med", "size_med"
    ));
    for row in &report.aggregates {
        out.push_str(&format!(
            "{:<12} {:>7} {:>12.6} {:>12.6} {:>12.6} {:>14.3e} {:>10.0}\n",
            row.dataset,
            row.trials,
            row.rmse_q1,
            row.rmse_median,
            row.rmse_q3,
            row.node_ops_median,
            row.model_size_median
        ));
    }
    if !report.failures.is_empty() {
        out.push_str(&format!("failures: {}\n", report.failures.len()));
        for f in &report.failures {
            out.push_str(&format!("  {} seed {}: {}\n", f.dataset, f.seed, f.error));
        }
    }
    out
}
