//! Threshold-sweep baseline over a precomputed attribute score table, the
//! way off-the-shelf toxicity scorers are calibrated against a labeled set.
//!
//!     cargo run --example threshold_sweep

use std::collections::BTreeMap;

use softtune::baselines::{threshold_sweep, AttributeScoreTable, DEFAULT_THRESHOLDS};
use softtune::metrics::Metric;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Three attributes scoring the same 200 items; "toxicity" is informative,
    // "insult" is noisy, "spam" is unrelated.
    let mut table = AttributeScoreTable::new();
    let mut labeled = Vec::new();
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = move || {
        // xorshift, plenty for example data
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..200 {
        let id = format!("item-{i}");
        let label = i % 2 == 0;
        let base = if label { 0.7 } else { 0.3 };
        table.insert(
            &id,
            BTreeMap::from([
                ("toxicity".to_string(), (base + 0.25 * (next() - 0.5)).clamp(0.0, 1.0)),
                ("insult".to_string(), (base + 0.9 * (next() - 0.5)).clamp(0.0, 1.0)),
                ("spam".to_string(), next()),
            ]),
        );
        labeled.push((id, label));
    }

    let result = threshold_sweep(&table, &labeled, Metric::F1, &DEFAULT_THRESHOLDS)?;
    println!(
        "grid: {} attributes x {} thresholds = {} cells",
        table.attributes().len(),
        DEFAULT_THRESHOLDS.len(),
        result.grid.len()
    );
    println!(
        "best: F1 {:.4} predicting positive when {} >= {}",
        result.best.value, result.best.attribute, result.best.threshold
    );

    // The informative attribute should win at some mid threshold.
    assert_eq!(result.best.attribute, "toxicity");

    // Show the toxicity slice of the grid.
    for cell in result.grid.iter().filter(|c| c.attribute == "toxicity") {
        println!("  toxicity >= {:.1}: F1 {:.4}", cell.threshold, cell.value);
    }
    Ok(())
}
