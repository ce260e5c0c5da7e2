//! Tune a soft prompt against a frozen toy model and verify the frozen
//! weights are bit-identical afterwards.
//!
//!     cargo run --example tune_soft_prompt

use softtune::data::{
    make_pretraining_corpus, make_synthetic_task, sample_balanced, PretrainCorpusConfig, Split,
    SyntheticTaskConfig,
};
use softtune::experiment::{build_vocabulary, tokenize_set};
use softtune::lm::{pretrain_toy, LmBackend, ModelBundle, ModelConfig, PretrainConfig, ToyLm};
use softtune::metrics::roc_auc;
use softtune::tuning::{init_prompt, tune, Schedule, TuneConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 1. A frozen model: pretrained on the marker corpus.
    let task = make_synthetic_task(
        &SyntheticTaskConfig {
            n_train: 400,
            n_validation: 120,
            n_test: 120,
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
    let frozen_before = backend.fingerprint().to_string();

    // 2. A balanced 80-example training subset, Figure-1 style.
    let train_pool: Vec<_> = task.split(Split::Train).into_iter().cloned().collect();
    let subset = sample_balanced(&train_pool, &task.manifest.attribute, 80, 1)?;
    let train_tokens = tokenize_set(&subset, &task.manifest, backend.vocab())?;
    let val: Vec<_> = task.split(Split::Validation).into_iter().cloned().collect();
    let val_tokens = tokenize_set(&val, &task.manifest, backend.vocab())?;

    // 3. Tune: only the p x d prompt matrix trains.
    let config = TuneConfig {
        prompt_length: 10,
        schedule: Schedule::Epochs(20),
        ..TuneConfig::default()
    };
    let init = init_prompt(
        &backend.bundle().weights.embedding,
        backend.vocab(),
        config.prompt_length,
        1,
    )?;
    println!(
        "trainable parameters: {} ({} rows x {} dims)",
        init.param_count(),
        init.len(),
        init.dim()
    );
    let outcome = tune(&backend, &train_tokens, &val_tokens, init, &config)?;
    println!(
        "initial val loss {:.4}, best {:.4} at epoch {}",
        outcome.initial_val_loss.unwrap(),
        outcome.best.val_loss,
        outcome.best.index
    );

    // 4. The frozen model did not move.
    assert_eq!(backend.fingerprint(), frozen_before);
    println!("frozen model fingerprint unchanged: {frozen_before}");

    // 5. Score the test split with and without the tuned prompt.
    let test: Vec<_> = task.split(Split::Test).into_iter().cloned().collect();
    let test_tokens = tokenize_set(&test, &task.manifest, backend.vocab())?;
    let positive = backend.vocab().label_id(&task.manifest.label_words.0)?;
    let negative = backend.vocab().label_id(&task.manifest.label_words.1)?;
    let labels: Vec<bool> = test
        .iter()
        .map(|e| e.label(&task.manifest.attribute) == Some(true))
        .collect();
    for (name, prompt) in [("zero-shot", None), ("tuned", Some(&outcome.best.prompt))] {
        let scores: Vec<f64> = test_tokens
            .iter()
            .map(|(ids, _)| backend.score(prompt, ids, positive, negative))
            .collect::<Result<_, _>>()?;
        println!("{name} test ROC-AUC: {:.4}", roc_auc(&scores, &labels)?);
    }
    Ok(())
}
