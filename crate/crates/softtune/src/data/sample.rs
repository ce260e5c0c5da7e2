//! Seeded subsampling policies: class-balanced and stratified
//! (largest-remainder allocation).

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use super::{DataError, Example};

/// Exactly n/2 positives and n/2 negatives for `attribute`, uniform without
/// replacement, deterministic per seed. Output order: sampled positives,
/// then sampled negatives (consumers shuffle as needed).
pub fn sample_balanced(
    pool: &[Example],
    attribute: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<Example>, DataError> {
    if !n.is_multiple_of(2) {
        return Err(DataError::OddSampleSize { n });
    }
    let half = n / 2;
    let positives: Vec<&Example> = pool
        .iter()
        .filter(|e| e.label(attribute) == Some(true))
        .collect();
    let negatives: Vec<&Example> = pool
        .iter()
        .filter(|e| e.label(attribute) == Some(false))
        .collect();
    for (class, have) in [("positive", positives.len()), ("negative", negatives.len())] {
        if have < half {
            return Err(DataError::InsufficientClass {
                class: class.to_string(),
                need: half,
                have,
            });
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for class in [&positives, &negatives] {
        for i in rand::seq::index::sample(&mut rng, class.len(), half) {
            out.push(class[i].clone());
        }
    }
    Ok(out)
}

/// Stratified sample of exactly `n` examples. Per-stratum quotas come from
/// largest-remainder rounding of `n * share`; remainder ties break by
/// stratum key order. Uniform without replacement within each stratum.
pub fn sample_stratified<K, F>(
    pool: &[Example],
    n: usize,
    seed: u64,
    stratum_key: F,
) -> Result<Vec<Example>, DataError>
where
    K: Ord + ToString,
    F: Fn(&Example) -> K,
{
    if n > pool.len() {
        return Err(DataError::SampleTooLarge {
            n,
            available: pool.len(),
        });
    }
    let mut strata: std::collections::BTreeMap<K, Vec<&Example>> = Default::default();
    for e in pool {
        strata.entry(stratum_key(e)).or_default().push(e);
    }
    // largest-remainder (Hamilton) allocation
    let total = pool.len() as f64;
    let mut quotas: Vec<(usize, f64)> = strata
        .values()
        .map(|members| {
            let exact = n as f64 * members.len() as f64 / total;
            (exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = quotas.iter().map(|(q, _)| q).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        quotas[b]
            .1
            .partial_cmp(&quotas[a].1)
            .expect("remainders are finite")
            .then(a.cmp(&b))
    });
    #[allow(clippy::explicit_counter_loop)] // `assigned` starts at the floor sum, not 0
    for &i in &order {
        if assigned == n {
            break;
        }
        quotas[i].0 += 1;
        assigned += 1;
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for ((key, members), (quota, _)) in strata.iter().zip(&quotas) {
        if *quota > members.len() {
            return Err(DataError::StratumOverflow {
                stratum: key.to_string(),
                need: *quota,
                have: members.len(),
            });
        }
        for i in rand::seq::index::sample(&mut rng, members.len(), *quota) {
            out.push(members[i].clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use std::collections::{BTreeMap, BTreeSet};

    fn pool(positives: usize, negatives: usize) -> Vec<Example> {
        (0..positives + negatives)
            .map(|i| Example {
                id: format!("e{i}"),
                text: Some("w".into()),
                turns: None,
                labels: BTreeMap::from([("attr".to_string(), u8::from(i < positives))]),
                annotator_labels: None,
                split: Split::Train,
            })
            .collect()
    }

    fn label_of(e: &Example) -> bool {
        e.label("attr").unwrap()
    }

    #[test]
    fn balanced_sample_has_exact_halves() {
        let pool = pool(1000, 1000);
        let out = sample_balanced(&pool, "attr", 80, 3).unwrap();
        assert_eq!(out.len(), 80);
        assert_eq!(out.iter().filter(|e| label_of(e)).count(), 40);
        let ids: BTreeSet<&str> = out.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids.len(), 80, "no duplicate ids");
    }

    #[test]
    fn balanced_sample_names_the_deficient_class() {
        let pool = pool(4, 100);
        match sample_balanced(&pool, "attr", 10, 0) {
            Err(DataError::InsufficientClass { class, need, have }) => {
                assert_eq!((class.as_str(), need, have), ("positive", 5, 4));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            sample_balanced(&pool, "attr", 7, 0),
            Err(DataError::OddSampleSize { n: 7 })
        ));
    }

    #[test]
    fn balanced_sample_is_seed_deterministic() {
        let pool = pool(50, 50);
        let a = sample_balanced(&pool, "attr", 20, 9).unwrap();
        let b = sample_balanced(&pool, "attr", 20, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_balanced(&pool, "attr", 20, 10).unwrap();
        assert_ne!(a, c, "different seeds should (overwhelmingly) differ");
    }

    #[test]
    fn stratified_quotas_follow_largest_remainder() {
        // 75% / 25%, n = 8 -> 6 / 2
        let pool = pool(75, 25);
        let out = sample_stratified(&pool, 8, 1, label_of).unwrap();
        assert_eq!(out.iter().filter(|e| label_of(e)).count(), 6);
        assert_eq!(out.len(), 8);
    }

    #[test]
    fn stratified_reproduces_the_neutral_stratum_split() {
        // 50.67% positive, n = 100 -> 51 / 49
        let pool = pool(5_067, 4_933);
        let out = sample_stratified(&pool, 100, 2, label_of).unwrap();
        assert_eq!(out.iter().filter(|e| label_of(e)).count(), 51);
        assert_eq!(out.iter().filter(|e| !label_of(e)).count(), 49);
    }

    #[test]
    fn stratified_full_size_returns_everything() {
        let pool = pool(7, 13);
        let out = sample_stratified(&pool, 20, 5, label_of).unwrap();
        let ids: BTreeSet<&str> = out.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids.len(), 20);
        assert!(matches!(
            sample_stratified(&pool, 21, 5, label_of),
            Err(DataError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn stratified_counts_stay_within_one_of_proportional() {
        let pool = pool(333, 667);
        for n in [10usize, 37, 100, 500] {
            let out = sample_stratified(&pool, n, 7, label_of).unwrap();
            assert_eq!(out.len(), n);
            let pos = out.iter().filter(|e| label_of(e)).count() as f64;
            let exact = n as f64 * 0.333;
            assert!((pos - exact).abs() <= 1.0, "n={n}: {pos} vs {exact}");
        }
    }

    #[test]
    fn stratified_is_seed_deterministic() {
        let pool = pool(40, 60);
        let a = sample_stratified(&pool, 30, 4, label_of).unwrap();
        let b = sample_stratified(&pool, 30, 4, label_of).unwrap();
        assert_eq!(a, b);
    }
}
