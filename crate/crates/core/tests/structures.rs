mod common;

use common::{arb_parents, random_subset};
use mso_workbench::structures::Meet;
use mso_workbench::{Error, FinStructure, Kind, Subset};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn json_roundtrip_keeps_fingerprint() {
    let t = FinStructure::tree(
        vec!["r".into(), "a".into(), "b".into()],
        &[("a".into(), "r".into()), ("b".into(), "r".into())],
    )
    .unwrap()
    .with_tuple(&[Subset::from_indices([0])])
    .unwrap();
    let back = FinStructure::from_json(&t.to_json()).unwrap();
    assert_eq!(back.fingerprint(), t.fingerprint());
    assert_eq!(back.to_json(), t.to_json());
}

#[test]
fn duplicate_ids_are_rejected() {
    assert!(matches!(FinStructure::set(vec!["a".into(), "a".into()]), Err(Error::InvalidStructure(_))));
}

#[test]
fn cyclic_parents_are_rejected() {
    let err = FinStructure::tree(
        vec!["a".into(), "b".into()],
        &[("a".into(), "b".into()), ("b".into(), "a".into())],
    );
    assert!(err.is_err());
}

#[test]
fn concat_places_right_after_left() {
    let c = FinStructure::chain(2).with_tuple(&[Subset::from_indices([1])]).unwrap();
    let d = FinStructure::chain(3).with_tuple(&[Subset::from_indices([0, 2])]).unwrap();
    let cd = c.concat(&d).unwrap();
    assert_eq!(cd.len(), 5);
    assert_eq!(cd.predicate_tuple(), vec![Subset::from_indices([1, 2, 4])]);
    assert!(matches!(FinStructure::pure_set(1).concat(&d), Err(Error::NotAChain(_))));
}

#[test]
fn segment_decomposition_on_a_fork() {
    // r -> a -> {b, c}; r -> d
    let t = FinStructure::tree_from_parents(&[None, Some(0), Some(1), Some(1), Some(0)]).unwrap();
    let a = Subset::from_indices([0, 1]);
    let dec = t.segment_decompose(&a).unwrap();
    assert_eq!(dec.classes, vec![Subset::from_indices([2]), Subset::from_indices([3])]);
    assert_eq!(dec.below, Subset::from_indices([0, 1, 4]));
    assert!(t.segment_decompose(&Subset::from_indices([1])).is_err());
}

#[test]
fn branch_decomposition_hangs_off_the_branch() {
    let t = FinStructure::tree_from_parents(&[None, Some(0), Some(1), Some(1), Some(0)]).unwrap();
    let b = Subset::from_indices([0, 1, 2]);
    let dec = t.branch_decompose(&b).unwrap();
    assert_eq!(dec.hangs[&1], Subset::from_indices([3]));
    assert_eq!(dec.hangs[&0], Subset::from_indices([4]));
    assert!(dec.detached.is_empty());
    assert!(t.branch_decompose(&Subset::from_indices([0, 1])).is_err());
}

#[test]
fn meets() {
    let t = FinStructure::tree_from_parents(&[None, Some(0), Some(0), None]).unwrap();
    assert_eq!(t.meet(1, 2), Meet::Element(0));
    assert_eq!(t.meet(0, 1), Meet::Element(0));
    assert_eq!(t.meet(1, 3), Meet::Segment(Vec::new()));
}

fn is_partial_order(t: &FinStructure) -> bool {
    let n = t.len();
    (0..n).all(|a| t.leq(a, a))
        && (0..n).all(|a| (0..n).all(|b| !(t.leq(a, b) && t.leq(b, a)) || a == b))
        && (0..n).all(|a| (0..n).all(|b| (0..n).all(|c| !(t.leq(a, b) && t.leq(b, c)) || t.leq(a, c))))
}

proptest! {
    #[test]
    fn trees_are_partial_orders_with_linear_downsets(parents in arb_parents(7)) {
        let t = FinStructure::tree_from_parents(&parents).unwrap();
        prop_assert!(is_partial_order(&t));
        for x in 0..t.len() {
            let down: Vec<usize> = (0..t.len()).filter(|&y| t.leq(y, x)).collect();
            for &a in &down {
                for &b in &down {
                    prop_assert!(t.comparable(a, b));
                }
            }
            prop_assert_eq!(t.ancestors(x).len(), t.depth(x));
        }
    }

    #[test]
    fn leftmost_branches_are_branches(parents in arb_parents(7), pick in any::<prop::sample::Index>()) {
        let t = FinStructure::tree_from_parents(&parents).unwrap();
        let b = t.leftmost_branch(pick.index(t.len()));
        prop_assert!(t.is_branch(&b));
        let dec = t.branch_decompose(&b).unwrap();
        let total: usize = dec.hangs.values().map(Subset::len).sum::<usize>() + dec.detached.len() + b.len();
        prop_assert_eq!(total, t.len());
    }

    #[test]
    fn induced_chain_keeps_order(len in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = FinStructure::chain(len);
        let keep = random_subset(&mut rng, len);
        let sub = c.induced(&keep);
        prop_assert_eq!(sub.kind(), Kind::Chain);
        let old: Vec<usize> = keep.iter().collect();
        for i in 0..sub.len() {
            for j in 0..sub.len() {
                prop_assert_eq!(sub.leq(i, j), c.leq(old[i], old[j]));
            }
        }
    }

    #[test]
    fn structure_json_roundtrip(parents in arb_parents(6), mask in any::<u64>()) {
        let t = FinStructure::tree_from_parents(&parents).unwrap();
        let p = Subset::from_mask(mask & ((1 << t.len()) - 1));
        let t = t.with_tuple(&[p]).unwrap();
        let back = FinStructure::from_json(&t.to_json()).unwrap();
        prop_assert_eq!(back.to_json(), t.to_json());
    }
}
