//! Inter-annotator agreement and the human-performance ceiling: majority
//! vote, Krippendorff's alpha, Fleiss' kappa, and mean annotator-vs-majority
//! ROC-AUC.
//!
//!     cargo run --example agreement_metrics

use softtune::metrics::{
    fleiss_kappa, human_auc, krippendorff_alpha, majority_vote, AnnotationMatrix,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Five annotators, twelve items, binary labels; one missing rating.
    let ratings: Vec<Vec<Option<u32>>> = vec![
        vec![Some(1), Some(1), Some(1), Some(1), Some(1)],
        vec![Some(1), Some(1), Some(1), Some(1), Some(0)],
        vec![Some(0), Some(0), Some(0), Some(0), Some(0)],
        vec![Some(0), Some(0), Some(1), Some(0), Some(0)],
        vec![Some(1), Some(1), Some(0), Some(1), Some(1)],
        vec![Some(0), Some(0), Some(0), Some(1), Some(0)],
        vec![Some(1), Some(0), Some(1), Some(1), Some(1)],
        vec![Some(0), Some(0), Some(0), Some(0), Some(1)],
        vec![Some(1), Some(1), Some(1), None, Some(1)],
        vec![Some(0), Some(1), Some(0), Some(0), Some(0)],
        vec![Some(1), Some(1), Some(1), Some(1), Some(1)],
        vec![Some(0), Some(0), Some(0), Some(0), Some(0)],
    ];
    let matrix = AnnotationMatrix::new(ratings.clone())?;
    println!(
        "{} items x {} annotators",
        matrix.n_items(),
        matrix.n_annotators()
    );

    // Majority vote per item; ties resolve to the configured default.
    for (i, row) in ratings.iter().enumerate().take(3) {
        let present: Vec<u32> = row.iter().flatten().copied().collect();
        let vote = majority_vote(&present, 0)?;
        println!(
            "item {i}: votes {:?} -> majority {}{}",
            present,
            vote.label,
            if vote.tie { " (tie, default applied)" } else { "" }
        );
    }

    let alpha = krippendorff_alpha(&matrix)?;
    println!("Krippendorff's alpha: {alpha:.4}");

    // Fleiss' kappa wants per-item category counts.
    let counts: Vec<Vec<u64>> = ratings
        .iter()
        .map(|row| {
            let ones = row.iter().flatten().filter(|&&v| v == 1).count() as u64;
            let zeros = row.iter().flatten().filter(|&&v| v == 0).count() as u64;
            vec![zeros, ones]
        })
        .filter(|c| c[0] + c[1] == 5) // Fleiss' kappa needs a constant rater count
        .collect();
    println!("Fleiss' kappa (complete items): {:.4}", fleiss_kappa(&counts)?);

    // Each annotator scored against the majority of the rest: the ceiling a
    // classifier is compared to.
    let ceiling = human_auc(&matrix, 0)?;
    println!(
        "human ROC-AUC ceiling: {:.4} +- {:.4} (per annotator: {:?})",
        ceiling.mean,
        ceiling.std,
        ceiling
            .per_annotator
            .iter()
            .map(|v| (v * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
    println!("note: {}", ceiling.note);

    // Perfect agreement pins both coefficients at 1.
    let unanimous = AnnotationMatrix::complete(vec![vec![1, 1, 1], vec![0, 0, 0], vec![1, 1, 1]])?;
    assert!((krippendorff_alpha(&unanimous)? - 1.0).abs() < 1e-12);
    println!("unanimous panel -> alpha = 1");
    Ok(())
}
