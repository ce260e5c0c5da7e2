//! Verify the analytic soft-prompt gradient against central finite
//! differences on a randomly initialized model — the correctness anchor the
//! whole tuner rests on.
//!
//!     cargo run --example gradient_check

use std::collections::BTreeMap;

use ndarray::Array2;
use softtune::lm::{class_loss_grad, ModelConfig, ModelWeights, SoftPrompt, Vocabulary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut counts = BTreeMap::new();
    for word in ["yes", "no", "alpha", "beta", "cat", "dog", "tree", "river"] {
        counts.insert(word.to_string(), 1u64);
    }
    let vocab = Vocabulary::from_counts(&counts, &[])?;
    let config = ModelConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_ff: 32,
        vocab_size: vocab.len(),
        max_context: 32,
        dropout_rate: 0.0,
    };
    let weights = ModelWeights::random_init(&config, 42)?;

    // A 3-row prompt and a 2-example batch.
    let prompt = SoftPrompt::new(Array2::from_shape_fn((3, config.d_model), |(i, j)| {
        0.05 * ((i * config.d_model + j) as f64).sin()
    }))?;
    let batch = vec![
        (vocab.tokenize("cat dog tree")?, vocab.label_id("yes")?),
        (vocab.tokenize("river alpha beta")?, vocab.label_id("no")?),
    ];

    let (loss, grad) = class_loss_grad(&weights, &prompt, &batch, None)?;
    println!("loss: {loss:.6}, gradient shape: {:?}", grad.dim());

    // Central finite differences at epsilon 1e-4, every coordinate.
    let eps = 1e-4;
    let mut max_rel = 0.0f64;
    for i in 0..prompt.len() {
        for j in 0..prompt.dim() {
            let probe = |delta: f64| -> Result<f64, softtune::lm::LmError> {
                let mut p = prompt.clone();
                p.rows_mut()[[i, j]] += delta;
                Ok(class_loss_grad(&weights, &p, &batch, None)?.0)
            };
            let numeric = (probe(eps)? - probe(-eps)?) / (2.0 * eps);
            let analytic = grad[[i, j]];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
            max_rel = max_rel.max(rel);
        }
    }
    println!(
        "max relative error over {} coordinates: {max_rel:.3e}",
        prompt.param_count()
    );
    assert!(max_rel <= 1e-4, "gradient mismatch: {max_rel:e}");
    println!("analytic gradient matches finite differences to 1e-4");
    Ok(())
}
