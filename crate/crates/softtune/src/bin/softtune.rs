//! Thin command-line front end over the `softtune` library.
//!
//! All behavior lives in the library; this binary only loads a JSON config,
//! applies flag overrides, dispatches to the library entry points, and maps
//! outcomes to exit status (0 only when every requested cell succeeded).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use softtune::baselines::{
    build_icl_template, evaluate_icl, threshold_sweep, AttributeScoreTable, DEFAULT_THRESHOLDS,
};
use softtune::data::{
    load_dataset, make_pretraining_corpus, make_synthetic_task, save_dataset, Dataset,
    DatasetManifest, Example, PretrainCorpusConfig, Split, SyntheticTaskConfig,
};
use softtune::experiment::{
    build_vocabulary, load_aggregate_rows, render_report, run_baselines, run_sweep, tokenize_set,
    ReportColumn, SweepConfig,
};
use softtune::lm::{pretrain_toy, LmBackend, ModelBundle, ModelConfig, PretrainConfig, ToyLm};
use softtune::metrics::Metric;
use softtune::tuning::{init_prompt, tune, PromptCheckpoint, RunManifest, TuneConfig};

type CliError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "softtune", version, about = "Soft-prompt tuning toolkit")]
struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (data generation, pretraining, tuning).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for models, checkpoints, and sweep artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Model backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum BackendKind {
    /// The pretrained toy transformer.
    Toy,
    /// A file-backed score table; valid only for threshold baselines.
    StubScores,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the toy model on the synthetic corpus and save the bundle.
    Pretrain,
    /// Tune a soft prompt on the train split and save a checkpoint.
    Tune {
        /// Balanced training subset size; omit to use the full train split.
        #[arg(long)]
        train_size: Option<usize>,
    },
    /// Evaluate an in-context-learning prompt on the test split.
    Icl {
        /// Number of shots (even, balanced).
        #[arg(long, default_value_t = 6)]
        shots: usize,
    },
    /// Run the full size-sweep × seeds protocol with baselines.
    Sweep,
    /// Run baselines only, in the same artifact formats.
    Baseline,
    /// Render a Table-2-shaped report from one or more sweep directories.
    Report {
        /// Sweep output directories (each holding an aggregate.csv).
        dirs: Vec<PathBuf>,
    },
    /// Convert a two-column CSV (text,label) into the dataset JSONL schema.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Attribute name the label column maps to.
        #[arg(long, default_value = "positive")]
        attribute: String,
        /// Split recorded on every converted example.
        #[arg(long, default_value = "train")]
        split: String,
    },
}

/// The single JSON config file. Every field has a default, so an absent or
/// partial file works; flags override whatever the file says.
#[derive(Serialize, Deserialize)]
#[serde(default)]
struct AppConfig {
    /// Model bundle location; relative paths resolve under `out_dir`.
    model_path: PathBuf,
    /// Real dataset (JSONL + manifest JSON); both unset means the synthetic
    /// marker task.
    dataset_path: Option<PathBuf>,
    dataset_manifest_path: Option<PathBuf>,
    /// Architecture override for `pretrain`; vocab_size is always replaced
    /// by the built vocabulary's size.
    model: Option<ModelConfig>,
    out_dir: PathBuf,
    backend: String,
    seed: u64,
    synthetic: SyntheticTaskConfig,
    corpus: PretrainCorpusConfig,
    pretrain: PretrainConfig,
    tune: TuneConfig,
    sweep: SweepConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            model_path: PathBuf::from("model.json"),
            dataset_path: None,
            dataset_manifest_path: None,
            model: None,
            out_dir: PathBuf::from("runs"),
            backend: "toy".into(),
            seed: 0,
            synthetic: SyntheticTaskConfig::default(),
            corpus: PretrainCorpusConfig::default(),
            pretrain: PretrainConfig::default(),
            tune: TuneConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl AppConfig {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                Ok(serde_json::from_str(&text)
                    .map_err(|e| format!("bad config {}: {e}", p.display()))?)
            }
            None => Ok(AppConfig::default()),
        }
    }

    fn apply_overrides(&mut self, cli: &Cli) {
        if let Some(seed) = cli.seed {
            self.seed = seed;
            self.pretrain.seed = seed;
            self.tune.seed = seed;
            self.sweep.tune.seed = seed;
        }
        if let Some(dir) = &cli.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(backend) = cli.backend {
            self.backend = match backend {
                BackendKind::Toy => "toy".into(),
                BackendKind::StubScores => "stub-scores".into(),
            };
        }
    }

    fn backend_kind(&self) -> Result<BackendKind, CliError> {
        match self.backend.as_str() {
            "toy" => Ok(BackendKind::Toy),
            "stub-scores" => Ok(BackendKind::StubScores),
            other => Err(format!("unknown backend `{other}` (toy | stub-scores)").into()),
        }
    }

    fn resolved_model_path(&self) -> PathBuf {
        if self.model_path.is_absolute() {
            self.model_path.clone()
        } else {
            self.out_dir.join(&self.model_path)
        }
    }

    fn dataset(&self) -> Result<Dataset, CliError> {
        match (&self.dataset_path, &self.dataset_manifest_path) {
            (Some(data), Some(manifest)) => {
                let text = std::fs::read_to_string(manifest)
                    .map_err(|e| format!("cannot read manifest {}: {e}", manifest.display()))?;
                let manifest: DatasetManifest = serde_json::from_str(&text)?;
                Ok(load_dataset(data, manifest)?)
            }
            (None, None) => Ok(make_synthetic_task(&self.synthetic, self.seed)?),
            _ => Err("dataset_path and dataset_manifest_path must be set together".into()),
        }
    }

    fn toy_backend(&self) -> Result<ToyLm, CliError> {
        if self.backend_kind()? != BackendKind::Toy {
            return Err(
                "this subcommand needs the toy backend; stub-scores only serves the \
                 threshold baseline"
                    .into(),
            );
        }
        let path = self.resolved_model_path();
        let bundle = ModelBundle::load(&path)
            .map_err(|e| format!("cannot load model {}: {e} (run `pretrain` first?)", path.display()))?;
        Ok(ToyLm::new(bundle)?)
    }
}

fn ensure_out_dir(config: &AppConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| format!("cannot create {}: {e}", config.out_dir.display()).into())
}

fn cmd_pretrain(config: &AppConfig) -> Result<ExitCode, CliError> {
    ensure_out_dir(config)?;
    let corpus = make_pretraining_corpus(&config.corpus, config.seed);
    let dataset = config.dataset()?;
    let vocab = build_vocabulary(&corpus, Some(&dataset))?;
    let mut model_config = config
        .model
        .clone()
        .unwrap_or_else(|| ModelConfig::toy(vocab.len()));
    model_config.vocab_size = vocab.len();
    let max = model_config.max_context;
    let token_corpus: Vec<Vec<_>> = corpus
        .iter()
        .map(|seq| {
            let mut ids = vocab.tokenize(seq)?;
            ids.truncate(max);
            Ok(ids)
        })
        .collect::<Result<_, softtune::lm::LmError>>()?;
    let outcome = pretrain_toy(&token_corpus, &model_config, &config.pretrain)?;
    let bundle = ModelBundle::new(config.pretrain.seed, vocab, outcome.weights)?;
    let path = config.resolved_model_path();
    bundle.save(&path)?;
    println!("model: {}", path.display());
    println!("fingerprint: {}", bundle.fingerprint());
    println!(
        "held-out perplexity: {:.4} (random init: {:.4})",
        outcome.heldout_perplexity, outcome.random_init_perplexity
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_tune(config: &AppConfig, train_size: Option<usize>) -> Result<ExitCode, CliError> {
    ensure_out_dir(config)?;
    let backend = config.toy_backend()?;
    let dataset = config.dataset()?;
    let manifest = &dataset.manifest;
    let vocab = backend.vocab();
    let train: Vec<Example> = match train_size {
        Some(n) => softtune::data::sample_balanced(
            &dataset.split(Split::Train).into_iter().cloned().collect::<Vec<_>>(),
            &manifest.attribute,
            n,
            config.seed,
        )?,
        None => dataset.split(Split::Train).into_iter().cloned().collect(),
    };
    let val: Vec<Example> = dataset
        .split(Split::Validation)
        .into_iter()
        .cloned()
        .collect();
    let train_tokens = tokenize_set(&train, manifest, vocab)?;
    let val_tokens = tokenize_set(&val, manifest, vocab)?;
    let init = init_prompt(
        &backend.bundle().weights.embedding,
        vocab,
        config.tune.prompt_length,
        config.seed,
    )?;
    let outcome = tune(&backend, &train_tokens, &val_tokens, init, &config.tune)?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    let ckpt =
        PromptCheckpoint::from_checkpoint(&outcome.best, backend.fingerprint(), config.seed);
    let prompt_path = config.out_dir.join("prompt.json");
    ckpt.save(&prompt_path)?;
    RunManifest::new(&config.tune, &outcome).save(&config.out_dir.join("tune_manifest.json"))?;
    println!("prompt: {}", prompt_path.display());
    println!(
        "best validation loss {:.6} at point {}",
        outcome.best.val_loss, outcome.best.index
    );

    // test-split metric with the tuned prompt
    let metric = Metric::from_name(&config.sweep.metric)?;
    let test: Vec<Example> = dataset.split(Split::Test).into_iter().cloned().collect();
    let test_tokens = tokenize_set(&test, manifest, vocab)?;
    let positive = vocab.label_id(&manifest.label_words.0)?;
    let negative = vocab.label_id(&manifest.label_words.1)?;
    let mut scores = Vec::with_capacity(test_tokens.len());
    let mut labels = Vec::with_capacity(test_tokens.len());
    for (example, (ids, _)) in test.iter().zip(&test_tokens) {
        scores.push(backend.score(Some(&ckpt.prompt), ids, positive, negative)?);
        labels.push(example.label(&manifest.attribute) == Some(true));
    }
    println!(
        "test {}: {:.4}",
        config.sweep.metric,
        metric.evaluate(&scores, &labels)?
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_icl(config: &AppConfig, shots: usize) -> Result<ExitCode, CliError> {
    let backend = config.toy_backend()?;
    let dataset = config.dataset()?;
    let manifest = &dataset.manifest;
    let train: Vec<Example> = dataset.split(Split::Train).into_iter().cloned().collect();
    let test: Vec<Example> = dataset.split(Split::Test).into_iter().cloned().collect();
    let template = build_icl_template(&train, manifest, shots, config.seed)?;
    let eval = evaluate_icl(&backend, &template, &test, manifest)?;
    let metric = Metric::from_name(&config.sweep.metric)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (example, score) in test.iter().zip(&eval.scores) {
        if let Some(s) = score {
            scores.push(*s);
            labels.push(example.label(&manifest.attribute) == Some(true));
        }
    }
    println!(
        "{shots}-shot test {}: {:.4} ({} scored, {} skipped)",
        config.sweep.metric,
        metric.evaluate(&scores, &labels)?,
        scores.len(),
        eval.failures.len()
    );
    for (index, reason) in &eval.failures {
        eprintln!("skipped example {index}: {reason}");
    }
    Ok(ExitCode::SUCCESS)
}

fn report_sweep_outcome(outcome: &softtune::experiment::SweepOutcome) -> ExitCode {
    for skip in &outcome.skips {
        eprintln!("skipped size {}: {}", skip.size, skip.reason);
    }
    for failure in &outcome.failures {
        eprintln!(
            "cell {} / seed {} failed: {}",
            failure.row, failure.seed, failure.reason
        );
    }
    for (row, mean, std) in &outcome.aggregates {
        println!("{row}: {mean:.4} \u{b1} {std:.4}");
    }
    if outcome.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn cmd_sweep(config: &AppConfig, baselines_only: bool) -> Result<ExitCode, CliError> {
    if config.backend_kind()? == BackendKind::StubScores {
        if !baselines_only {
            return Err("the stub-scores backend cannot tune; use `baseline`".into());
        }
        return cmd_threshold_only(config);
    }
    let backend = config.toy_backend()?;
    let dataset = config.dataset()?;
    let outcome = if baselines_only {
        run_baselines(&backend, &dataset, &config.sweep, &config.out_dir)?
    } else {
        run_sweep(&backend, &dataset, &config.sweep, &config.out_dir)?
    };
    println!("artifacts: {}", config.out_dir.display());
    Ok(report_sweep_outcome(&outcome))
}

/// Threshold baseline without a model: the stub-scores backend reads an
/// attribute score table and sweeps decision thresholds over the test split.
fn cmd_threshold_only(config: &AppConfig) -> Result<ExitCode, CliError> {
    let table_path = config
        .sweep
        .score_table
        .as_ref()
        .ok_or("stub-scores backend needs sweep.score_table in the config")?;
    let dataset = config.dataset()?;
    let table = AttributeScoreTable::load_jsonl(table_path)?;
    let labeled: Vec<(String, bool)> = dataset
        .split(Split::Test)
        .iter()
        .map(|e| (e.id.clone(), e.label(&dataset.manifest.attribute) == Some(true)))
        .collect();
    let metric = Metric::from_name(&config.sweep.metric)?;
    let result = threshold_sweep(&table, &labeled, metric, &DEFAULT_THRESHOLDS)?;
    ensure_out_dir(config)?;
    let out = config.out_dir.join("threshold.json");
    std::fs::write(&out, serde_json::to_string_pretty(&result.best)?)
        .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    println!(
        "threshold {}: best {} = {:.4} at {} >= {}",
        config.sweep.metric,
        config.sweep.metric,
        result.best.value,
        result.best.attribute,
        result.best.threshold
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(config: &AppConfig, dirs: &[PathBuf]) -> Result<ExitCode, CliError> {
    if dirs.is_empty() {
        return Err("report needs at least one sweep directory".into());
    }
    let mut columns = Vec::new();
    for dir in dirs {
        let rows = load_aggregate_rows(&dir.join("aggregate.csv"))?;
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        columns.push(ReportColumn { dataset: name, rows });
    }
    let output = render_report(&columns);
    print!("{}", output.text);
    ensure_out_dir(config)?;
    let json_path = config.out_dir.join("report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&output.json)?)
        .map_err(|e| format!("cannot write {}: {e}", json_path.display()))?;
    println!("\nreport json: {}", json_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_convert(
    input: &Path,
    output: &Path,
    attribute: &str,
    split: &str,
) -> Result<ExitCode, CliError> {
    let split = match split {
        "train" => Split::Train,
        "validation" => Split::Validation,
        "test" => Split::Test,
        other => return Err(format!("unknown split `{other}` (train | validation | test)").into()),
    };
    let mut reader = csv::Reader::from_path(input)?;
    let headers = reader.headers()?.clone();
    let text_col = headers
        .iter()
        .position(|h| h == "text")
        .ok_or("input CSV needs a `text` column")?;
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or("input CSV needs a `label` column")?;
    let mut examples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let label: u8 = record[label_col]
            .trim()
            .parse()
            .map_err(|_| format!("row {}: label `{}` is not 0/1", i + 1, &record[label_col]))?;
        if label > 1 {
            return Err(format!("row {}: label {label} is not binary", i + 1).into());
        }
        examples.push(Example {
            id: format!("row-{i}"),
            text: Some(record[text_col].to_string()),
            turns: None,
            labels: BTreeMap::from([(attribute.to_string(), label)]),
            annotator_labels: None,
            split,
        });
    }
    if examples.is_empty() {
        return Err("input CSV has no data rows".into());
    }
    let n = examples.len();
    let manifest = DatasetManifest {
        name: input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "converted".into()),
        attribute: attribute.to_string(),
        truncation_k: None,
        label_words: ("yes".into(), "no".into()),
        question_pattern: "is the text above {class} ?".into(),
        class_description: attribute.to_string(),
        split_sizes: BTreeMap::from([(split.to_string(), n)]),
    };
    save_dataset(output, &Dataset { manifest: manifest.clone(), examples })?;
    let manifest_path = output.with_extension("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| format!("cannot write {}: {e}", manifest_path.display()))?;
    println!("wrote {n} examples to {}", output.display());
    println!("manifest: {}", manifest_path.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let mut config = AppConfig::load(cli.config.as_deref())?;
    config.apply_overrides(cli);
    match &cli.command {
        Command::Pretrain => cmd_pretrain(&config),
        Command::Tune { train_size } => cmd_tune(&config, *train_size),
        Command::Icl { shots } => cmd_icl(&config, *shots),
        Command::Sweep => cmd_sweep(&config, false),
        Command::Baseline => cmd_sweep(&config, true),
        Command::Report { dirs } => cmd_report(&config, dirs),
        Command::Convert {
            input,
            output,
            attribute,
            split,
        } => cmd_convert(input, output, attribute, split),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
