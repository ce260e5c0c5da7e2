//! Size-sweep and baseline runner. Every emitted byte of `results.csv`,
//! `aggregate.csv`, and `curve.json` is a function of (config, dataset,
//! backend); wall times and other run-local facts go to `manifest.json`
//! only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{tokenize_set, ExperimentError};
use crate::baselines::{build_icl_template, evaluate_icl, threshold_sweep, AttributeScoreTable, DEFAULT_THRESHOLDS};
use crate::data::{sample_balanced, Dataset, Example, Split};
use crate::lm::{LmBackend, SoftPrompt, ToyLm};
use crate::metrics::{aggregate_seeds, Metric};
use crate::tuning::{init_prompt, tune, LabeledExample, TuneConfig};

pub const DEFAULT_SIZES: [usize; 9] = [10, 20, 50, 80, 100, 200, 500, 1000, 2000];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Training-subset sizes, strictly increasing.
    pub sizes: Vec<usize>,
    /// Seeds are named values, not positions; each (size, seed) is a cell.
    pub seeds: Vec<u64>,
    /// Template for every cell; the cell's seed replaces `tune.seed`.
    pub tune: TuneConfig,
    /// "roc_auc" or "f1".
    pub metric: String,
    /// Shot counts for the in-context baseline; empty disables it.
    pub icl_shots: Vec<usize>,
    /// JSONL attribute score table enabling the threshold baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_table: Option<PathBuf>,
    /// Run the tuned cells; `run_baselines` turns this off to emit
    /// baseline-only artifacts in the same formats.
    #[serde(default = "default_true")]
    pub include_tuned: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sizes: DEFAULT_SIZES.to_vec(),
            seeds: vec![1, 2, 3],
            tune: TuneConfig::default(),
            metric: "roc_auc".into(),
            icl_shots: vec![0, 6, 12],
            score_table: None,
            include_tuned: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<Metric, ExperimentError> {
        if self.include_tuned && self.sizes.is_empty() {
            return Err(ExperimentError::InvalidConfig("no sizes".into()));
        }
        if !self.sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(ExperimentError::InvalidConfig(
                "sizes must be strictly increasing".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::InvalidConfig("no seeds".into()));
        }
        self.tune.validate()?;
        Ok(Metric::from_name(&self.metric)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    /// Tuned cells carry the numeric size; baseline cells a label such as
    /// "icl:6", "icl_best", or "threshold".
    pub row: String,
    pub seed: u64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellFailure {
    pub row: String,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeSkip {
    pub size: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub cells: Vec<CellResult>,
    pub skips: Vec<SizeSkip>,
    pub failures: Vec<CellFailure>,
    /// (row label, mean, population std) in emission order.
    pub aggregates: Vec<(String, f64, f64)>,
}

impl SweepOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Serialize)]
struct RunManifestFile<'a> {
    library_version: &'a str,
    model_fingerprint: &'a str,
    config: &'a SweepConfig,
    skips: &'a [SizeSkip],
    failures: &'a [CellFailure],
    wall_time_s: BTreeMap<String, f64>,
}

fn metric_over(
    metric: Metric,
    scores: &[Option<f64>],
    labels: &[bool],
) -> Result<f64, ExperimentError> {
    let mut s = Vec::new();
    let mut l = Vec::new();
    for (score, &label) in scores.iter().zip(labels) {
        if let Some(v) = score {
            s.push(*v);
            l.push(label);
        }
    }
    Ok(metric.evaluate(&s, &l)?)
}

/// Run tuned cells for every feasible (size, seed), plus the configured
/// baselines, and write `results.csv`, `aggregate.csv`, `curve.json`, and
/// `manifest.json` into `out_dir`. Cell failures are recorded and surfaced
/// in the outcome instead of aborting the sweep.
pub fn run_sweep(
    backend: &ToyLm,
    dataset: &Dataset,
    config: &SweepConfig,
    out_dir: &Path,
) -> Result<SweepOutcome, ExperimentError> {
    let metric = config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let manifest = &dataset.manifest;
    let vocab = backend.vocab();
    let train: Vec<Example> = dataset.split(Split::Train).into_iter().cloned().collect();
    let val: Vec<Example> = dataset
        .split(Split::Validation)
        .into_iter()
        .cloned()
        .collect();
    let test: Vec<Example> = dataset.split(Split::Test).into_iter().cloned().collect();
    let val_tokens = tokenize_set(&val, manifest, vocab)?;
    let test_tokens = tokenize_set(&test, manifest, vocab)?;
    let val_labels: Vec<bool> = val
        .iter()
        .map(|e| e.label(&manifest.attribute) == Some(true))
        .collect();
    let test_labels: Vec<bool> = test
        .iter()
        .map(|e| e.label(&manifest.attribute) == Some(true))
        .collect();
    let positive = vocab.label_id(&manifest.label_words.0)?;
    let negative = vocab.label_id(&manifest.label_words.1)?;
    let score_set = |prompt: Option<&SoftPrompt>,
                     set: &[LabeledExample]|
     -> Result<Vec<Option<f64>>, ExperimentError> {
        set.iter()
            .map(|(ids, _)| Ok(Some(backend.score(prompt, ids, positive, negative)?)))
            .collect()
    };

    let train_positives = train
        .iter()
        .filter(|e| e.label(&manifest.attribute) == Some(true))
        .count();
    let train_negatives = train.len() - train_positives;

    let mut cells = Vec::new();
    let mut skips = Vec::new();
    let mut failures = Vec::new();
    let mut wall_times = BTreeMap::new();

    // tuned cells
    let tuned_sizes: &[usize] = if config.include_tuned { &config.sizes } else { &[] };
    for &size in tuned_sizes {
        if size % 2 != 0 {
            skips.push(SizeSkip {
                size,
                reason: "odd size under balanced sampling".into(),
            });
            continue;
        }
        let half = size / 2;
        if half > train_positives || half > train_negatives {
            skips.push(SizeSkip {
                size,
                reason: format!(
                    "needs {half} per class, train split has {train_positives} positive / {train_negatives} negative"
                ),
            });
            continue;
        }
        for &seed in &config.seeds {
            let row = size.to_string();
            let started = Instant::now();
            let outcome = (|| -> Result<f64, ExperimentError> {
                let subset = sample_balanced(&train, &manifest.attribute, size, seed)?;
                let subset_tokens = tokenize_set(&subset, manifest, vocab)?;
                let init = init_prompt(
                    &backend.bundle().weights.embedding,
                    vocab,
                    config.tune.prompt_length,
                    seed,
                )?;
                let mut tune_cfg = config.tune.clone();
                tune_cfg.seed = seed;
                let tuned = tune(backend, &subset_tokens, &val_tokens, init, &tune_cfg)?;
                let scores = score_set(Some(&tuned.best.prompt), &test_tokens)?;
                metric_over(metric, &scores, &test_labels)
            })();
            wall_times.insert(format!("{row}/{seed}"), started.elapsed().as_secs_f64());
            match outcome {
                Ok(value) => cells.push(CellResult { row, seed, value }),
                Err(e) => failures.push(CellFailure {
                    row,
                    seed,
                    reason: e.to_string(),
                }),
            }
        }
    }

    // in-context baselines: per seed, each k on the test set, plus the
    // validation-selected best k (earliest maximum over ascending k)
    for &seed in &config.seeds {
        let mut val_values: Vec<(usize, f64)> = Vec::new();
        let mut test_value_for_k: BTreeMap<usize, f64> = BTreeMap::new();
        for &k in &config.icl_shots {
            let row = format!("icl:{k}");
            let started = Instant::now();
            let outcome = (|| -> Result<(f64, f64), ExperimentError> {
                let template = build_icl_template(&train, manifest, k, seed)?;
                let val_eval = evaluate_icl(backend, &template, &val, manifest)?;
                let val_value = metric_over(metric, &val_eval.scores, &val_labels)?;
                let test_eval = evaluate_icl(backend, &template, &test, manifest)?;
                let test_value = metric_over(metric, &test_eval.scores, &test_labels)?;
                Ok((val_value, test_value))
            })();
            wall_times.insert(format!("{row}/{seed}"), started.elapsed().as_secs_f64());
            match outcome {
                Ok((val_value, test_value)) => {
                    cells.push(CellResult {
                        row,
                        seed,
                        value: test_value,
                    });
                    test_value_for_k.insert(k, test_value);
                    val_values.push((k, val_value));
                }
                Err(e) => failures.push(CellFailure {
                    row,
                    seed,
                    reason: e.to_string(),
                }),
            }
        }
        if let Some(k) = select_earliest_max(&val_values) {
            cells.push(CellResult {
                row: "icl_best".into(),
                seed,
                value: test_value_for_k[&k],
            });
        }
    }

    // threshold baseline over an external score table
    if let Some(table_path) = &config.score_table {
        let row = "threshold".to_string();
        let started = Instant::now();
        let outcome = (|| -> Result<f64, ExperimentError> {
            let table = AttributeScoreTable::load_jsonl(table_path)?;
            let labeled: Vec<(String, bool)> = test
                .iter()
                .map(|e| (e.id.clone(), e.label(&manifest.attribute) == Some(true)))
                .collect();
            let result = threshold_sweep(&table, &labeled, metric, &DEFAULT_THRESHOLDS)?;
            Ok(result.best.value)
        })();
        wall_times.insert(row.clone(), started.elapsed().as_secs_f64());
        match outcome {
            Ok(value) => cells.push(CellResult {
                row,
                seed: 0,
                value,
            }),
            Err(e) => failures.push(CellFailure {
                row,
                seed: 0,
                reason: e.to_string(),
            }),
        }
    }

    // aggregation: tuned sizes in configured order, then baselines in label
    // order; aggregates exist only for rows with at least one successful cell
    let mut aggregates: Vec<(String, f64, f64)> = Vec::new();
    let mut row_order: Vec<String> = config
        .sizes
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut baseline_rows: Vec<String> = cells
        .iter()
        .map(|c| c.row.clone())
        .filter(|r| r.parse::<usize>().is_err())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    row_order.append(&mut baseline_rows);
    for row in &row_order {
        let values: Vec<f64> = cells
            .iter()
            .filter(|c| &c.row == row)
            .map(|c| c.value)
            .collect();
        if !values.is_empty() {
            let (mean, std) = aggregate_seeds(&values)?;
            aggregates.push((row.clone(), mean, std));
        }
    }

    write_artifacts(backend, config, out_dir, &cells, &skips, &failures, &aggregates, &wall_times)?;

    Ok(SweepOutcome {
        cells,
        skips,
        failures,
        aggregates,
    })
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    backend: &ToyLm,
    config: &SweepConfig,
    out_dir: &Path,
    cells: &[CellResult],
    skips: &[SizeSkip],
    failures: &[CellFailure],
    aggregates: &[(String, f64, f64)],
    wall_times: &BTreeMap<String, f64>,
) -> Result<(), ExperimentError> {
    let io_err = |path: &Path| {
        let p = path.display().to_string();
        move |source: std::io::Error| ExperimentError::Io { path: p.clone(), source }
    };

    // results.csv: one row per successful cell
    let results_path = out_dir.join("results.csv");
    {
        let mut w = csv::Writer::from_path(&results_path)?;
        w.write_record(["size", "seed", "metric", "value"])?;
        for c in cells {
            w.write_record([
                c.row.as_str(),
                &c.seed.to_string(),
                &config.metric,
                &c.value.to_string(),
            ])?;
        }
        w.flush().map_err(io_err(&results_path))?;
    }

    // aggregate.csv
    let aggregate_path = out_dir.join("aggregate.csv");
    {
        let mut w = csv::Writer::from_path(&aggregate_path)?;
        w.write_record(["size", "mean", "std"])?;
        for (row, mean, std) in aggregates {
            w.write_record([row.as_str(), &mean.to_string(), &std.to_string()])?;
        }
        w.flush().map_err(io_err(&aggregate_path))?;
    }

    // curve.json: everything needed to redraw a Figure-1-style plot
    let mut sizes = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    let mut baselines = BTreeMap::new();
    for (row, mean, std) in aggregates {
        if let Ok(size) = row.parse::<usize>() {
            sizes.push(size);
            means.push(*mean);
            stds.push(*std);
        } else {
            baselines.insert(row.clone(), *mean);
        }
    }
    let curve = serde_json::json!({
        "metric": config.metric,
        "sizes": sizes,
        "mean": means,
        "std": stds,
        "baselines": baselines,
    });
    let curve_path = out_dir.join("curve.json");
    std::fs::write(&curve_path, serde_json::to_string_pretty(&curve)?)
        .map_err(io_err(&curve_path))?;

    // manifest.json: run-local facts (wall times live here, never in the
    // three deterministic files above)
    let manifest = RunManifestFile {
        library_version: crate::VERSION,
        model_fingerprint: backend.fingerprint(),
        config,
        skips,
        failures,
        wall_time_s: wall_times.clone(),
    };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(io_err(&manifest_path))?;
    Ok(())
}

/// Baseline-only run: in-context cells (and the threshold sweep when a
/// score table is configured) written in the same artifact formats, with no
/// tuned cells.
pub fn run_baselines(
    backend: &ToyLm,
    dataset: &Dataset,
    config: &SweepConfig,
    out_dir: &Path,
) -> Result<SweepOutcome, ExperimentError> {
    let mut config = config.clone();
    config.include_tuned = false;
    run_sweep(backend, dataset, &config, out_dir)
}

/// Best shot count on validation, ties to the earliest (smallest) k in the
/// evaluated order. `{0: 0.5, 6: 0.7, 12: 0.7}` -> 6.
pub(crate) fn select_earliest_max(val_values: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(k, v) in val_values {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}
