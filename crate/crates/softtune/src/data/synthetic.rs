//! Synthetic marker task and its matching pretraining corpus.
//!
//! The task: a text is "marked" when it contains a marker word. The
//! pretraining corpus teaches the toy model three things that mirror what a
//! large pretrained model brings to prompt tuning:
//!
//! * cue episodes — a polarity cue word repeated a variable number of times
//!   before the text tells the model to answer the question from the marker
//!   (or its inverse). A tuned soft prompt sits exactly where the cue
//!   prefix sits, so tuning can recover cue-level accuracy.
//! * in-context episodes — labeled shots in front of the target, with the
//!   polarity chosen per sequence, so few-shot prompts work but only as
//!   well as the shots pin down the polarity.
//! * no-cue episodes — question without any cue gets a coin-flip answer,
//!   anchoring zero-shot performance at chance.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use super::{DataError, Dataset, DatasetManifest, Example, Split};

pub const LABEL_POSITIVE: &str = "yes";
pub const LABEL_NEGATIVE: &str = "no";
pub const QUESTION_PATTERN: &str = "is the text above {class} ?";
pub const CLASS_DESCRIPTION: &str = "marked";
pub const ATTRIBUTE: &str = "marked";

const MARKERS: [&str; 2] = ["zork", "blick"];
const CUE_NORMAL: &str = "alpha";
const CUE_INVERTED: &str = "beta";
const FILLERS: [&str; 16] = [
    "the", "a", "cat", "dog", "tree", "river", "stone", "cloud", "bird", "house", "road",
    "light", "wind", "leaf", "door", "hill",
];

pub fn render_question(class_description: &str) -> String {
    QUESTION_PATTERN.replace("{class}", class_description)
}

/// One few-shot demonstration.
pub fn render_shot(text: &str, label_word: &str) -> String {
    format!("text: {text}\nlabel: {label_word}\n\n")
}

/// The target slot: text, question, and the cursor the label token follows.
pub fn render_target(text: &str, question: &str) -> String {
    format!("text: {text}\n{question}\nlabel:")
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SyntheticTaskConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Share of examples labeled positive, strictly inside (0, 1).
    pub positive_rate: f64,
    /// Probability a positive example contains a marker word.
    pub marker_probability: f64,
    /// Probability a negative example contains a marker word anyway.
    pub negative_marker_rate: f64,
    /// Filler words per text.
    pub text_len: usize,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        SyntheticTaskConfig {
            n_train: 3000,
            n_validation: 600,
            n_test: 600,
            positive_rate: 0.5,
            marker_probability: 1.0,
            negative_marker_rate: 0.0,
            text_len: 6,
        }
    }
}

impl SyntheticTaskConfig {
    fn validate(&self) -> Result<(), DataError> {
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(DataError::InvalidPositiveRate(self.positive_rate));
        }
        for (name, value) in [
            ("marker_probability", self.marker_probability),
            ("negative_marker_rate", self.negative_marker_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(DataError::InvalidProbability { name, value });
            }
        }
        Ok(())
    }
}

/// ROC-AUC of the Bayes-optimal marker-presence detector (score 1 when a
/// marker is present, 0 otherwise), in closed form from the generation
/// mixture. Ties count one half.
pub fn bayes_optimal_auc(marker_probability: f64, negative_marker_rate: f64) -> f64 {
    let (mp, mn) = (marker_probability, negative_marker_rate);
    mp * (1.0 - mn) + 0.5 * (mp * mn + (1.0 - mp) * (1.0 - mn))
}

fn random_text(rng: &mut ChaCha12Rng, len: usize, with_marker: bool) -> String {
    let mut words: Vec<&str> = (0..len.max(1))
        .map(|_| FILLERS[rng.random_range(0..FILLERS.len())])
        .collect();
    if with_marker {
        let pos = rng.random_range(0..words.len());
        words[pos] = MARKERS[rng.random_range(0..MARKERS.len())];
    }
    words.join(" ")
}

/// Deterministic per seed; labels are exact by construction (an example is
/// positive exactly when its generating class was positive).
pub fn make_synthetic_task(
    config: &SyntheticTaskConfig,
    seed: u64,
) -> Result<Dataset, DataError> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    for (split, n) in [
        (Split::Train, config.n_train),
        (Split::Validation, config.n_validation),
        (Split::Test, config.n_test),
    ] {
        for i in 0..n {
            let positive = rng.random_bool(config.positive_rate);
            let with_marker = if positive {
                rng.random_bool(config.marker_probability)
            } else {
                rng.random_bool(config.negative_marker_rate)
            };
            examples.push(Example {
                id: format!("{split}-{i}"),
                text: Some(random_text(&mut rng, config.text_len, with_marker)),
                turns: None,
                labels: BTreeMap::from([(ATTRIBUTE.to_string(), u8::from(positive))]),
                annotator_labels: None,
                split,
            });
        }
    }
    let manifest = DatasetManifest {
        name: "synthetic-marker".into(),
        attribute: ATTRIBUTE.into(),
        truncation_k: None,
        label_words: (LABEL_POSITIVE.into(), LABEL_NEGATIVE.into()),
        question_pattern: QUESTION_PATTERN.into(),
        class_description: CLASS_DESCRIPTION.into(),
        split_sizes: BTreeMap::from([
            ("train".to_string(), config.n_train),
            ("validation".to_string(), config.n_validation),
            ("test".to_string(), config.n_test),
        ]),
    };
    Ok(Dataset { manifest, examples })
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PretrainCorpusConfig {
    pub n_sequences: usize,
    /// Fractions of cue / in-context / no-cue episodes; the remainder is
    /// plain filler text for vocabulary statistics.
    pub cue_fraction: f64,
    pub icl_fraction: f64,
    pub nocue_fraction: f64,
    /// Cue word repeats 1..=this many times.
    pub max_cue_repeat: usize,
    /// In-context episodes carry an even shot count in 2..=this.
    pub max_shots: usize,
    pub text_len: usize,
}

impl Default for PretrainCorpusConfig {
    fn default() -> Self {
        PretrainCorpusConfig {
            n_sequences: 3000,
            cue_fraction: 0.45,
            icl_fraction: 0.35,
            nocue_fraction: 0.1,
            max_cue_repeat: 12,
            max_shots: 6,
            text_len: 6,
        }
    }
}

/// Generate pretraining sequences (one string each) for the marker task.
/// The question text matches [`QUESTION_PATTERN`] exactly, so evaluation
/// inputs are in-distribution.
pub fn make_pretraining_corpus(config: &PretrainCorpusConfig, seed: u64) -> Vec<String> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let question = render_question(CLASS_DESCRIPTION);
    let label_for = |marked: bool, inverted: bool| {
        if marked != inverted {
            LABEL_POSITIVE
        } else {
            LABEL_NEGATIVE
        }
    };
    (0..config.n_sequences)
        .map(|_| {
            let roll: f64 = rng.random();
            if roll < config.cue_fraction {
                // cue prefix of variable length, then the standard target
                let inverted = rng.random_bool(0.5);
                let cue = if inverted { CUE_INVERTED } else { CUE_NORMAL };
                let repeats = rng.random_range(1..=config.max_cue_repeat);
                let marked = rng.random_bool(0.5);
                let text = random_text(&mut rng, config.text_len, marked);
                let prefix = vec![cue; repeats].join(" ");
                format!(
                    "{prefix} {} {}",
                    render_target(&text, &question),
                    label_for(marked, inverted)
                )
            } else if roll < config.cue_fraction + config.icl_fraction {
                // balanced shots under a per-sequence polarity, then target
                let inverted = rng.random_bool(0.5);
                let shots = 2 * rng.random_range(1..=config.max_shots / 2);
                let mut marked_flags: Vec<bool> = (0..shots).map(|i| i % 2 == 0).collect();
                marked_flags.shuffle(&mut rng);
                let mut s = String::new();
                for marked in marked_flags {
                    let text = random_text(&mut rng, config.text_len, marked);
                    s.push_str(&render_shot(&text, label_for(marked, inverted)));
                }
                let marked = rng.random_bool(0.5);
                let text = random_text(&mut rng, config.text_len, marked);
                s.push_str(&render_target(&text, &question));
                s.push(' ');
                s.push_str(label_for(marked, inverted));
                s
            } else if roll < config.cue_fraction + config.icl_fraction + config.nocue_fraction {
                // no cue, no shots: the answer is a coin flip
                let marked = rng.random_bool(0.5);
                let text = random_text(&mut rng, config.text_len, marked);
                let label = if rng.random_bool(0.5) {
                    LABEL_POSITIVE
                } else {
                    LABEL_NEGATIVE
                };
                format!("{} {label}", render_target(&text, &question))
            } else {
                let with_marker = rng.random_bool(0.2);
                random_text(&mut rng, 2 * config.text_len, with_marker)
            }
        })
        .collect()
}
