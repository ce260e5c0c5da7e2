//! Generate the synthetic marker task, inspect its class balance, and
//! exercise both sampling policies (balanced and stratified).
//!
//!     cargo run --example synthetic_dataset

use softtune::data::{
    bayes_optimal_auc, make_synthetic_task, sample_balanced, sample_stratified, Split,
    SyntheticTaskConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SyntheticTaskConfig {
        n_train: 1500,
        n_validation: 300,
        n_test: 300,
        positive_rate: 0.5,
        marker_probability: 0.9,
        negative_marker_rate: 0.05,
        ..SyntheticTaskConfig::default()
    };
    let task = make_synthetic_task(&config, 0)?;
    println!("dataset `{}`, attribute `{}`", task.manifest.name, task.manifest.attribute);
    println!("question: {:?}", task.manifest.question());

    for (split, row) in task.class_balance() {
        println!(
            "{split}: {} examples, {} positive ({:.1}%)",
            row.total,
            row.positives,
            100.0 * row.positive_share
        );
    }
    println!(
        "Bayes-optimal marker detector AUC at this noise level: {:.4}",
        bayes_optimal_auc(config.marker_probability, config.negative_marker_rate)
    );
    let sample = &task.examples[0];
    println!(
        "first example: id={} text={:?} label={:?}",
        sample.id,
        sample.text.as_deref().unwrap(),
        sample.label("marked")
    );

    // Balanced sampling: exactly n/2 per class, the prompt-tuning policy.
    let train: Vec<_> = task.split(Split::Train).into_iter().cloned().collect();
    let subset = sample_balanced(&train, "marked", 80, 1)?;
    let positives = subset.iter().filter(|e| e.label("marked") == Some(true)).count();
    println!("balanced sample of 80: {positives} positive / {} negative", 80 - positives);

    // Stratified sampling: largest-remainder allocation preserving the pool
    // proportions, the policy for imbalanced corpora.
    let stratified = sample_stratified(&train, 100, 1, |e| e.label("marked") == Some(true))?;
    let positives = stratified.iter().filter(|e| e.label("marked") == Some(true)).count();
    println!(
        "stratified sample of 100 from a {:.2}%-positive pool: {positives} positive / {} negative",
        100.0 * train.iter().filter(|e| e.label("marked") == Some(true)).count() as f64
            / train.len() as f64,
        100 - positives
    );
    Ok(())
}
