//! Pretrain the toy transformer on the synthetic marker corpus and check
//! that the held-out perplexity beats seed-matched random initialization.
//!
//!     cargo run --example pretrain_toy

use softtune::data::{make_pretraining_corpus, PretrainCorpusConfig};
use softtune::experiment::build_vocabulary;
use softtune::lm::{pretrain_toy, ModelConfig, PretrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus_config = PretrainCorpusConfig {
        n_sequences: 800,
        ..PretrainCorpusConfig::default()
    };
    let corpus = make_pretraining_corpus(&corpus_config, 0);
    println!("corpus: {} sequences", corpus.len());
    println!("sample episode:\n---\n{}\n---", corpus[0]);

    let vocab = build_vocabulary(&corpus, None)?;
    println!("vocabulary: {} words", vocab.len());

    // Small architecture so the example finishes in seconds.
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

    let pretrain_config = PretrainConfig {
        epochs: 3,
        seed: 0,
        ..PretrainConfig::default()
    };
    let outcome = pretrain_toy(&token_corpus, &model_config, &pretrain_config)?;

    for (epoch, loss) in outcome.eval_losses.iter().enumerate() {
        println!("epoch {epoch}: eval loss {loss:.4}");
    }
    println!(
        "held-out perplexity: {:.3} (random init: {:.3})",
        outcome.heldout_perplexity, outcome.random_init_perplexity
    );
    assert!(outcome.heldout_perplexity < outcome.random_init_perplexity);
    Ok(())
}
