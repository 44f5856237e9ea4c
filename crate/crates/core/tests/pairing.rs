use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfbp_core::dataset::SignalDataset;
use rfbp_core::pairing::{build_pairs, pair_stats, Balance, PairRecord, NO_IDENTITY};
use rfbp_core::ErrorKind;

fn dataset(ids: Vec<usize>, beh: Vec<usize>) -> SignalDataset {
    let data = (0..ids.len()).map(|i| i as f32).collect();
    SignalDataset::new(vec![1], data, ids, beh).unwrap()
}

fn random_dataset(rng: &mut ChaCha8Rng) -> SignalDataset {
    let users = rng.random_range(2..=6);
    let behaviors = rng.random_range(2..=8);
    let n = rng.random_range(20..=150);
    let mut ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..users)).collect();
    let mut beh: Vec<usize> = (0..n).map(|_| rng.random_range(0..behaviors)).collect();
    // Guarantee one sample per cell of a 2x2 corner so both rules are satisfiable.
    ids[..4].copy_from_slice(&[0, 0, 1, 1]);
    beh[..4].copy_from_slice(&[0, 1, 0, 1]);
    dataset(ids, beh)
}

fn check_record(ds: &SignalDataset, r: &PairRecord) {
    let ids = ds.identity_labels();
    let beh = ds.behavior_labels();
    assert!(r.idx_a < ds.len() && r.idx_b < ds.len());
    match r.y_s {
        0 => {
            assert_eq!(ids[r.idx_a], ids[r.idx_b]);
            assert_ne!(beh[r.idx_a], beh[r.idx_b]);
            assert_eq!(r.id_label, ids[r.idx_a] as i64);
        }
        1 => {
            assert_ne!(ids[r.idx_a], ids[r.idx_b]);
            assert_eq!(beh[r.idx_a], beh[r.idx_b]);
            assert_eq!(r.id_label, NO_IDENTITY);
        }
        other => panic!("y_s = {other}"),
    }
}

#[test]
fn ten_thousand_pairs_over_fifty_datasets_obey_both_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut total = 0;
    for case in 0..50 {
        let ds = random_dataset(&mut rng);
        let balance = if case % 2 == 0 { Balance::None } else { Balance::Equal };
        let pairs = build_pairs(&ds, 200, case, balance, "random").unwrap();
        assert_eq!(pairs.len(), 200);
        for r in &pairs.records {
            check_record(&ds, r);
        }
        if balance == Balance::Equal {
            let stats = pair_stats(&pairs, &ds).unwrap();
            assert_eq!((stats.similar, stats.dissimilar), (100, 100));
        }
        total += pairs.len();
    }
    assert_eq!(total, 10_000);
}

#[test]
fn single_user_dataset_fails_cleanly() {
    let ds = dataset(vec![0; 6], vec![0, 1, 2, 0, 1, 2]);
    let err = build_pairs(&ds, 10, 1, Balance::None, "x").unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Stage);
    assert!(err.to_string().contains("rule 1"), "{err}");
}

#[test]
fn single_behavior_dataset_fails_cleanly() {
    let ds = dataset(vec![0, 1, 2, 0], vec![3; 4]);
    let err = build_pairs(&ds, 10, 1, Balance::None, "x").unwrap_err();
    assert!(err.to_string().contains("rule 0"), "{err}");
}

#[test]
fn balanced_pairing_needs_both_rules() {
    // Users never share a behavior: only rule 0 can match.
    let ds = dataset(vec![0, 0, 1, 1], vec![0, 1, 2, 3]);
    assert!(build_pairs(&ds, 10, 1, Balance::None, "x").is_ok());
    let err = build_pairs(&ds, 10, 1, Balance::Equal, "x").unwrap_err();
    assert!(err.to_string().contains("rule 1"), "{err}");
}

#[test]
fn pair_counts_per_identity_cover_every_similar_record() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ds = random_dataset(&mut rng);
    let pairs = build_pairs(&ds, 300, 3, Balance::None, "x").unwrap();
    let stats = pair_stats(&pairs, &ds).unwrap();
    let mut expect: BTreeMap<i64, usize> = BTreeMap::new();
    for r in &pairs.records {
        *expect.entry(r.id_label).or_insert(0) += 1;
    }
    assert_eq!(stats.per_identity, expect);
    let distinct: BTreeSet<(usize, usize)> = pairs
        .records
        .iter()
        .map(|r| (r.idx_a.min(r.idx_b), r.idx_a.max(r.idx_b)))
        .collect();
    assert!((stats.duplicate_rate - (1.0 - distinct.len() as f64 / 300.0)).abs() < 1e-12);
}

#[test]
fn pairs_are_reproducible_from_the_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ds = random_dataset(&mut rng);
    let a = build_pairs(&ds, 100, 42, Balance::Equal, "x").unwrap();
    let b = build_pairs(&ds, 100, 42, Balance::Equal, "x").unwrap();
    let c = build_pairs(&ds, 100, 43, Balance::Equal, "x").unwrap();
    assert_eq!(a.records, b.records);
    assert_ne!(a.records, c.records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_accepted_pair_obeys_its_rule(
        labels in prop::collection::vec((0usize..4, 0usize..4), 2..60),
        seed in any::<u64>(),
        target in 1usize..80,
    ) {
        let (ids, beh): (Vec<usize>, Vec<usize>) = labels.into_iter().unzip();
        let ds = dataset(ids.clone(), beh.clone());
        let users: BTreeSet<_> = ids.iter().collect();
        let behaviors: BTreeSet<_> = beh.iter().collect();
        let rule0 = (0..ids.len()).any(|i| (0..ids.len()).any(|j| ids[i] == ids[j] && beh[i] != beh[j]));
        let rule1 = (0..ids.len()).any(|i| (0..ids.len()).any(|j| ids[i] != ids[j] && beh[i] == beh[j]));
        match build_pairs(&ds, target, seed, Balance::None, "p") {
            Ok(pairs) => {
                prop_assert!(users.len() >= 2 && behaviors.len() >= 2 && (rule0 || rule1));
                prop_assert_eq!(pairs.len(), target);
                for r in &pairs.records {
                    check_record(&ds, r);
                }
            }
            Err(e) => {
                prop_assert!(users.len() < 2 || behaviors.len() < 2 || !(rule0 || rule1), "{}", e);
            }
        }
    }
}
