//! Few-shot in-context-learning baseline: build balanced prompt templates
//! at several shot counts and score the test split with each.
//!
//!     cargo run --example icl_baseline

use softtune::baselines::{build_icl_template, evaluate_icl};
use softtune::data::{
    make_pretraining_corpus, make_synthetic_task, PretrainCorpusConfig, Split, SyntheticTaskConfig,
};
use softtune::experiment::build_vocabulary;
use softtune::lm::{pretrain_toy, ModelBundle, ModelConfig, PretrainConfig, ToyLm};
use softtune::metrics::roc_auc;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = make_synthetic_task(
        &SyntheticTaskConfig {
            n_train: 400,
            n_validation: 100,
            n_test: 100,
            ..SyntheticTaskConfig::default()
        },
        0,
    )?;
    let corpus = make_pretraining_corpus(
        &PretrainCorpusConfig {
            n_sequences: 800,
            ..PretrainCorpusConfig::default()
        },
        0,
    );
    let vocab = build_vocabulary(&corpus, Some(&task))?;
    let model_config = ModelConfig {
        d_model: 32,
        n_layers: 2,
        n_heads: 4,
        d_ff: 64,
        vocab_size: vocab.len(),
        max_context: 256,
        dropout_rate: 0.0,
    };
    let token_corpus: Vec<Vec<_>> = corpus
        .iter()
        .map(|seq| vocab.tokenize(seq))
        .collect::<Result<_, _>>()?;
    let pretrained = pretrain_toy(
        &token_corpus,
        &model_config,
        &PretrainConfig {
            epochs: 4,
            seed: 0,
            ..PretrainConfig::default()
        },
    )?;
    let backend = ToyLm::new(ModelBundle::new(0, vocab, pretrained.weights)?)?;

    let train: Vec<_> = task.split(Split::Train).into_iter().cloned().collect();
    let test: Vec<_> = task.split(Split::Test).into_iter().cloned().collect();
    let labels: Vec<bool> = test
        .iter()
        .map(|e| e.label(&task.manifest.attribute) == Some(true))
        .collect();

    for k in [0usize, 2, 6] {
        let template = build_icl_template(&train, &task.manifest, k, 1)?;
        if k > 0 {
            println!(
                "{k}-shot template begins:\n{}",
                template.render("...").lines().take(3).collect::<Vec<_>>().join("\n")
            );
        }
        let eval = evaluate_icl(&backend, &template, &test, &task.manifest)?;
        let mut scores = Vec::new();
        let mut kept = Vec::new();
        for (score, &label) in eval.scores.iter().zip(&labels) {
            if let Some(s) = score {
                scores.push(*s);
                kept.push(label);
            }
        }
        println!(
            "{k}-shot: ROC-AUC {:.4} over {} examples ({} overflowed)\n",
            roc_auc(&scores, &kept)?,
            scores.len(),
            eval.failures.len()
        );
    }
    Ok(())
}
