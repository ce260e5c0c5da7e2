//! Inter-annotator agreement statistics: majority vote, per-annotator AUC
//! against the majority, Krippendorff's alpha (nominal, missing ratings
//! allowed) and Fleiss's kappa (complete ratings required).

use std::collections::BTreeMap;

use super::roc_auc;

#[derive(Debug, thiserror::Error)]
pub enum AgreementError {
    #[error("annotation matrix needs at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("annotation matrix row {row} has {got} entries, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("no item carries two or more ratings; nothing is pairable")]
    NoPairableValues,
    #[error("empty rating row")]
    EmptyRow,
    #[error("majority labels contain a single class only; AUC is undefined")]
    MajoritySingleClass,
    #[error("item {item} has {got} ratings, expected {expected} (Fleiss's kappa needs equal totals)")]
    UnequalRatingTotals {
        item: usize,
        got: u64,
        expected: u64,
    },
    #[error("all ratings fall in one category; chance agreement is 1 and kappa is undefined")]
    DegenerateChanceAgreement,
    #[error("kappa needs at least 2 ratings per item, got {0}")]
    TooFewRatings(u64),
    #[error("annotator {0} rated a single class only; per-annotator AUC is undefined")]
    AnnotatorSingleClass(usize),
}

/// Items x annotators table of nominal labels. `None` marks a missing
/// rating; alpha tolerates missing entries, kappa and `human_auc` do not.
#[derive(Debug, Clone)]
pub struct AnnotationMatrix {
    ratings: Vec<Vec<Option<u32>>>,
    n_annotators: usize,
}

impl AnnotationMatrix {
    pub fn new(ratings: Vec<Vec<Option<u32>>>) -> Result<Self, AgreementError> {
        let n_annotators = ratings.first().map(|r| r.len()).unwrap_or(0);
        if n_annotators < 2 {
            return Err(AgreementError::TooFewAnnotators(n_annotators));
        }
        for (row, r) in ratings.iter().enumerate() {
            if r.len() != n_annotators {
                return Err(AgreementError::RaggedRow {
                    row,
                    got: r.len(),
                    expected: n_annotators,
                });
            }
        }
        if !ratings
            .iter()
            .any(|r| r.iter().filter(|v| v.is_some()).count() >= 2)
        {
            return Err(AgreementError::NoPairableValues);
        }
        Ok(AnnotationMatrix {
            ratings,
            n_annotators,
        })
    }

    /// Convenience constructor for fully observed matrices.
    pub fn complete(ratings: Vec<Vec<u32>>) -> Result<Self, AgreementError> {
        Self::new(
            ratings
                .into_iter()
                .map(|r| r.into_iter().map(Some).collect())
                .collect(),
        )
    }

    pub fn n_annotators(&self) -> usize {
        self.n_annotators
    }

    pub fn n_items(&self) -> usize {
        self.ratings.len()
    }

    pub fn rows(&self) -> &[Vec<Option<u32>>] {
        &self.ratings
    }
}

/// Result of a majority vote on one item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteOutcome {
    pub label: u32,
    /// Set when several labels tied for the mode and the configured default
    /// decided the outcome.
    pub tie: bool,
}

/// Modal label of one rating row. Ties resolve to `default` (when it is one
/// of the tied modes, or outright otherwise) with the tie flag set.
pub fn majority_vote(ratings: &[u32], default: u32) -> Result<VoteOutcome, AgreementError> {
    if ratings.is_empty() {
        return Err(AgreementError::EmptyRow);
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &r in ratings {
        *counts.entry(r).or_insert(0) += 1;
    }
    let max = *counts.values().max().expect("nonempty");
    let modes: Vec<u32> = counts
        .iter()
        .filter(|(_, &c)| c == max)
        .map(|(&l, _)| l)
        .collect();
    if modes.len() == 1 {
        Ok(VoteOutcome {
            label: modes[0],
            tie: false,
        })
    } else {
        Ok(VoteOutcome {
            label: default,
            tie: true,
        })
    }
}

/// Mean and population standard deviation of per-annotator AUC against the
/// majority-vote labels.
#[derive(Debug, Clone)]
pub struct HumanAuc {
    pub mean: f64,
    pub std: f64,
    pub per_annotator: Vec<f64>,
    /// Caveat carried into report metadata: each annotator contributes to
    /// the majority they are scored against.
    pub note: &'static str,
}

pub const HUMAN_AUC_NOTE: &str =
    "artificially high: the annotator contributes to the majority baseline";

/// Per-annotator AUC of their binary labels (taken as 0/1 scores) against
/// the per-item majority vote, averaged over annotators.
///
/// Ratings must be complete and binary (0/1). Even-rater ties resolve to
/// `tie_default`.
pub fn human_auc(matrix: &AnnotationMatrix, tie_default: u32) -> Result<HumanAuc, AgreementError> {
    let mut majority = Vec::with_capacity(matrix.n_items());
    for row in matrix.rows() {
        let present: Vec<u32> = row.iter().flatten().copied().collect();
        majority.push(majority_vote(&present, tie_default)?.label == 1);
    }
    if majority.iter().all(|&m| m) || majority.iter().all(|&m| !m) {
        return Err(AgreementError::MajoritySingleClass);
    }

    let mut per_annotator = Vec::with_capacity(matrix.n_annotators());
    for a in 0..matrix.n_annotators() {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for (row, &maj) in matrix.rows().iter().zip(&majority) {
            if let Some(r) = row[a] {
                scores.push(r as f64);
                labels.push(maj);
            }
        }
        let auc = roc_auc(&scores, &labels).map_err(|_| AgreementError::AnnotatorSingleClass(a))?;
        per_annotator.push(auc);
    }
    let n = per_annotator.len() as f64;
    let mean = per_annotator.iter().sum::<f64>() / n;
    let var = per_annotator
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    Ok(HumanAuc {
        mean,
        std: var.sqrt(),
        per_annotator,
        note: HUMAN_AUC_NOTE,
    })
}

/// Krippendorff's alpha with the nominal disagreement metric, computed from
/// the coincidence matrix. Missing ratings are allowed; items with fewer
/// than two ratings are skipped.
pub fn krippendorff_alpha(matrix: &AnnotationMatrix) -> Result<f64, AgreementError> {
    let mut coincidence: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for row in matrix.rows() {
        let present: Vec<u32> = row.iter().flatten().copied().collect();
        let m = present.len();
        if m < 2 {
            continue;
        }
        let weight = 1.0 / (m as f64 - 1.0);
        for (i, &c) in present.iter().enumerate() {
            for (j, &k) in present.iter().enumerate() {
                if i != j {
                    *coincidence.entry((c, k)).or_insert(0.0) += weight;
                }
            }
        }
    }
    if coincidence.is_empty() {
        return Err(AgreementError::NoPairableValues);
    }

    let mut marginals: BTreeMap<u32, f64> = BTreeMap::new();
    let mut disagreement = 0.0;
    let mut total = 0.0;
    for (&(c, k), &o) in &coincidence {
        *marginals.entry(c).or_insert(0.0) += o;
        total += o;
        if c != k {
            disagreement += o;
        }
    }
    let observed = disagreement / total;
    let expected = marginals
        .values()
        .map(|&nc| nc * (total - nc))
        .sum::<f64>()
        / (total * (total - 1.0));

    if observed == 0.0 {
        // Perfect agreement, including the all-one-category case where the
        // expected disagreement is also zero.
        return Ok(1.0);
    }
    Ok(1.0 - observed / expected)
}

/// Fleiss's kappa from an items x categories table of rating counts. Every
/// item must carry the same total number of ratings n >= 2.
pub fn fleiss_kappa(counts: &[Vec<u64>]) -> Result<f64, AgreementError> {
    if counts.is_empty() {
        return Err(AgreementError::NoPairableValues);
    }
    let n: u64 = counts[0].iter().sum();
    if n < 2 {
        return Err(AgreementError::TooFewRatings(n));
    }
    let n_categories = counts[0].len();
    let mut category_totals = vec![0u64; n_categories];
    let mut p_bar = 0.0;
    for (item, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total != n || row.len() != n_categories {
            return Err(AgreementError::UnequalRatingTotals {
                item,
                got: total,
                expected: n,
            });
        }
        let same_pairs: u64 = row.iter().map(|&c| c * c).sum::<u64>() - n;
        p_bar += same_pairs as f64 / (n * (n - 1)) as f64;
        for (slot, &c) in category_totals.iter_mut().zip(row) {
            *slot += c;
        }
    }
    let n_items = counts.len() as f64;
    p_bar /= n_items;
    let grand_total = (n_items as u64 * n) as f64;
    let p_e: f64 = category_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / grand_total;
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(AgreementError::DegenerateChanceAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::test_oracles::pair_counting_auc;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn fixture_5x3() -> AnnotationMatrix {
        AnnotationMatrix::new(vec![
            vec![Some(1), Some(1), Some(1)],
            vec![Some(1), Some(1), Some(0)],
            vec![Some(0), Some(0), Some(0)],
            vec![Some(0), Some(1), Some(0)],
            vec![Some(1), None, Some(1)],
        ])
        .unwrap()
    }

    /// From-definition alpha: enumerate rating pairs within each unit
    /// directly instead of building the coincidence matrix.
    fn alpha_by_pair_enumeration(matrix: &AnnotationMatrix) -> f64 {
        let mut marginals: BTreeMap<u32, f64> = BTreeMap::new();
        let mut disagreement = 0.0;
        let mut n = 0.0;
        for row in matrix.rows() {
            let present: Vec<u32> = row.iter().flatten().copied().collect();
            let m = present.len();
            if m < 2 {
                continue;
            }
            let w = 1.0 / (m as f64 - 1.0);
            for (i, &c) in present.iter().enumerate() {
                *marginals.entry(c).or_insert(0.0) += 1.0;
                n += 1.0;
                for (j, &k) in present.iter().enumerate() {
                    if i != j && c != k {
                        disagreement += w;
                    }
                }
            }
        }
        if disagreement == 0.0 {
            return 1.0;
        }
        let d_o = disagreement / n;
        let d_e = marginals.values().map(|&nc| nc * (n - nc)).sum::<f64>() / (n * (n - 1.0));
        1.0 - d_o / d_e
    }

    #[test]
    fn majority_vote_basic() {
        assert_eq!(
            majority_vote(&[1, 1, 0], 0).unwrap(),
            VoteOutcome {
                label: 1,
                tie: false
            }
        );
        assert_eq!(
            majority_vote(&[0, 0, 0], 1).unwrap(),
            VoteOutcome {
                label: 0,
                tie: false
            }
        );
        assert_eq!(
            majority_vote(&[1, 0], 0).unwrap(),
            VoteOutcome {
                label: 0,
                tie: true
            }
        );
        assert!(matches!(
            majority_vote(&[], 0),
            Err(AgreementError::EmptyRow)
        ));
    }

    #[test]
    fn alpha_perfect_agreement_is_one() {
        let m = AnnotationMatrix::complete(vec![vec![1, 1, 1], vec![0, 0, 0], vec![1, 1, 1]])
            .unwrap();
        assert_eq!(krippendorff_alpha(&m).unwrap(), 1.0);
    }

    #[test]
    fn alpha_hand_computed_fixture() {
        // Coincidence matrix by hand: o11=6, o00=4, o01=o10=2, n1=8, n0=6,
        // n=14. Do = 4/14, De = 96/182, alpha = 11/24.
        let alpha = krippendorff_alpha(&fixture_5x3()).unwrap();
        assert!((alpha - 11.0 / 24.0).abs() < 1e-9, "alpha = {alpha}");
        let oracle = alpha_by_pair_enumeration(&fixture_5x3());
        assert!((alpha - oracle).abs() < 1e-12);
    }

    #[test]
    fn alpha_matches_pair_enumeration_on_random_matrices() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..20 {
            let items = rng.random_range(3..40);
            let annotators = rng.random_range(2..6);
            let rows: Vec<Vec<Option<u32>>> = (0..items)
                .map(|_| {
                    (0..annotators)
                        .map(|_| rng.random_bool(0.85).then(|| rng.random_range(0..3)))
                        .collect()
                })
                .collect();
            let Ok(m) = AnnotationMatrix::new(rows) else {
                continue;
            };
            let Ok(alpha) = krippendorff_alpha(&m) else {
                continue;
            };
            let oracle = alpha_by_pair_enumeration(&m);
            assert!((alpha - oracle).abs() < 1e-12, "{alpha} vs {oracle}");
        }
    }

    #[test]
    fn alpha_systematic_disagreement_is_negative() {
        let m = AnnotationMatrix::complete(vec![
            vec![0, 1],
            vec![1, 0],
            vec![0, 1],
            vec![1, 0],
        ])
        .unwrap();
        assert!(krippendorff_alpha(&m).unwrap() < 0.0);
    }

    #[test]
    fn alpha_independent_uniform_is_near_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let rows: Vec<Vec<Option<u32>>> = (0..4000)
            .map(|_| vec![Some(rng.random_range(0..2)), Some(rng.random_range(0..2))])
            .collect();
        let m = AnnotationMatrix::new(rows).unwrap();
        let alpha = krippendorff_alpha(&m).unwrap();
        assert!(alpha.abs() < 0.05, "alpha = {alpha}");
    }

    #[test]
    fn alpha_no_pairable_values_errors() {
        assert!(matches!(
            AnnotationMatrix::new(vec![vec![Some(1), None], vec![None, Some(0)]]),
            Err(AgreementError::NoPairableValues)
        ));
    }

    #[test]
    fn kappa_perfect_agreement_is_one() {
        assert_eq!(fleiss_kappa(&[vec![2, 0], vec![0, 2]]).unwrap(), 1.0);
        assert_eq!(
            fleiss_kappa(&[vec![3, 0], vec![0, 3], vec![3, 0]]).unwrap(),
            1.0
        );
    }

    #[test]
    fn kappa_hand_computed_ten_item_fixture() {
        // P_i = 1 for unanimous items, 1/3 for 2-1 splits; six unanimous and
        // four split items give P_bar = 11/15; p1 = p2 = 0.5 gives Pe = 0.5;
        // kappa = (11/15 - 1/2)/(1/2) = 7/15.
        let counts = vec![
            vec![3, 0],
            vec![0, 3],
            vec![2, 1],
            vec![3, 0],
            vec![1, 2],
            vec![0, 3],
            vec![3, 0],
            vec![2, 1],
            vec![0, 3],
            vec![1, 2],
        ];
        let kappa = fleiss_kappa(&counts).unwrap();
        assert!((kappa - 7.0 / 15.0).abs() < 1e-9, "kappa = {kappa}");
    }

    #[test]
    fn kappa_unequal_totals_errors() {
        assert!(matches!(
            fleiss_kappa(&[vec![2, 1], vec![2, 0]]),
            Err(AgreementError::UnequalRatingTotals { item: 1, .. })
        ));
    }

    #[test]
    fn kappa_single_category_errors() {
        assert!(matches!(
            fleiss_kappa(&[vec![3, 0], vec![3, 0]]),
            Err(AgreementError::DegenerateChanceAgreement)
        ));
    }

    #[test]
    fn human_auc_identical_annotators() {
        let m = AnnotationMatrix::complete(vec![
            vec![1, 1, 1],
            vec![0, 0, 0],
            vec![1, 1, 1],
            vec![0, 0, 0],
        ])
        .unwrap();
        let h = human_auc(&m, 0).unwrap();
        assert_eq!(h.mean, 1.0);
        assert_eq!(h.std, 0.0);
    }

    #[test]
    fn human_auc_matches_pair_counting_per_annotator() {
        let m = AnnotationMatrix::complete(vec![
            vec![1, 1, 0],
            vec![0, 1, 0],
            vec![1, 0, 1],
            vec![0, 0, 0],
        ])
        .unwrap();
        // Majority: 1, 0, 1, 0.
        let majority = [true, false, true, false];
        let h = human_auc(&m, 0).unwrap();
        for (a, &auc) in h.per_annotator.iter().enumerate() {
            let scores: Vec<f64> = m.rows().iter().map(|r| r[a].unwrap() as f64).collect();
            let oracle = pair_counting_auc(&scores, &majority);
            assert!((auc - oracle).abs() < 1e-12);
        }
        assert_eq!(h.note, HUMAN_AUC_NOTE);
    }

    #[test]
    fn human_auc_single_class_majority_errors() {
        let m =
            AnnotationMatrix::complete(vec![vec![1, 1, 0], vec![1, 1, 1], vec![0, 1, 1]]).unwrap();
        assert!(matches!(
            human_auc(&m, 0),
            Err(AgreementError::MajoritySingleClass)
        ));
    }
}
