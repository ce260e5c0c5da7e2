//! Few-shot template construction and evaluation. A template is built once
//! per (train set, k, seed) and reused verbatim for every test example.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use super::BaselineError;
use crate::data::{render_shot, render_target, sample_balanced, DatasetManifest, Example};
use crate::lm::{LmBackend, LmError};

#[derive(Debug, Clone, PartialEq)]
pub struct IclTemplate {
    pub k: usize,
    /// (shot text, label word), already truncated/rendered.
    pub shots: Vec<(String, String)>,
    /// Question with the class placeholder substituted.
    pub question: String,
    /// (positive word, negative word) for scoring.
    pub label_words: (String, String),
}

impl IclTemplate {
    /// Rendered prompt bytes for one target text: shots, then the target
    /// and question, ending at the label cursor.
    pub fn render(&self, target_text: &str) -> String {
        let mut out = String::new();
        for (text, label) in &self.shots {
            out.push_str(&render_shot(text, label));
        }
        out.push_str(&render_target(target_text, &self.question));
        out
    }
}

/// Build a k-shot template: k/2 examples per class, uniform without
/// replacement, interleaved positive/negative starting from a seeded coin.
pub fn build_icl_template(
    train: &[Example],
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
) -> Result<IclTemplate, BaselineError> {
    if !k.is_multiple_of(2) {
        return Err(BaselineError::OddShotCount { k });
    }
    let question = manifest.question();
    let mut shots = Vec::with_capacity(k);
    if k > 0 {
        let sampled = sample_balanced(train, &manifest.attribute, k, seed)?;
        // sample_balanced returns positives then negatives
        let (pos, neg) = sampled.split_at(k / 2);
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x49_43_4c); // "ICL"
        let positive_first = rng.random_bool(0.5);
        for i in 0..k / 2 {
            let pair = if positive_first {
                [(&pos[i], &manifest.label_words.0), (&neg[i], &manifest.label_words.1)]
            } else {
                [(&neg[i], &manifest.label_words.1), (&pos[i], &manifest.label_words.0)]
            };
            for (example, word) in pair {
                shots.push((example.rendered_text(manifest.truncation_k)?, word.clone()));
            }
        }
    }
    Ok(IclTemplate {
        k,
        shots,
        question,
        label_words: manifest.label_words.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct IclEvaluation {
    /// Positive-class score per test example; `None` where the example
    /// failed (see `failures`).
    pub scores: Vec<Option<f64>>,
    /// (test index, reason) for context overflows; the run continues.
    pub failures: Vec<(usize, String)>,
}

/// Score every test example with the fixed template. Context overflows are
/// recorded per example instead of aborting the run; any other backend
/// error propagates.
pub fn evaluate_icl(
    backend: &dyn LmBackend,
    template: &IclTemplate,
    test: &[Example],
    manifest: &DatasetManifest,
) -> Result<IclEvaluation, BaselineError> {
    let vocab = backend.vocab();
    let positive = vocab.label_id(&template.label_words.0)?;
    let negative = vocab.label_id(&template.label_words.1)?;
    let mut scores = Vec::with_capacity(test.len());
    let mut failures = Vec::new();
    for (i, example) in test.iter().enumerate() {
        let rendered = template.render(&example.rendered_text(manifest.truncation_k)?);
        let ids = vocab.tokenize(&rendered)?;
        match backend.score(None, &ids, positive, negative) {
            Ok(score) => scores.push(Some(score)),
            Err(e @ LmError::ContextOverflow { .. }) => {
                failures.push((i, e.to_string()));
                scores.push(None);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(IclEvaluation { scores, failures })
}
