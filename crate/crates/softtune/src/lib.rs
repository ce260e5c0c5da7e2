//! Desk-scale toolkit for agile text classification with soft prompts.
//!
//! The crate trains a small learnable prompt-embedding matrix against a
//! frozen toy language model and compares the result with in-context
//! learning and attribute-threshold baselines. Everything is seeded and
//! deterministic: equal seeds give bit-identical runs.
//!
//! The main pieces:
//!
//! * [`lm`] — a tiny decoder-only transformer with a word-level tokenizer,
//!   forward passes that accept a prepended soft prompt, and exact gradients
//!   of the classification loss with respect to the prompt only.
//! * [`tuning`] — vocabulary-sampled prompt initialization, Adam and
//!   Adafactor steps, and the epoch/step training loop with best-checkpoint
//!   selection on a sampled validation subset.
//! * [`baselines`] — zero/6/12-shot template construction and the
//!   file-backed attribute threshold sweep.
//! * [`metrics`] — ROC-AUC, binary F1, majority vote, human-agreement AUC,
//!   Krippendorff's alpha, Fleiss's kappa, and seed aggregation.
//! * [`data`] — the JSONL dataset schema, conversation truncation,
//!   balanced/stratified sampling, and synthetic marker-task generation.
//! * [`experiment`] — the size-sweep runner, baseline runner, and report
//!   rendering behind the `softtune` CLI.
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod baselines;
pub mod data;
pub mod experiment;
pub mod lm;
pub mod metrics;
pub mod tuning;

/// Library version recorded in run manifests and serialized artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
