mod common;

use common::{arb_parents, complete_binary, lex_order, random_presentation, random_tree, rank_fixpoint};
use mso_workbench::synthesis::{
    classify, rank_map, synth_chain_wellorder, synth_tree_wellorder, verify_certificate, ChainPresentation, Scheme,
    TreeTerm, Verdict, WellOrderCertificate,
};
use mso_workbench::theory::parent_maps;
use mso_workbench::FinStructure;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ranks_match_fixpoint_up_to_five() {
    for n in 1..=5 {
        for p in parent_maps(n) {
            let t = FinStructure::tree_from_parents(&p).unwrap();
            assert_eq!(rank_map(&t).unwrap().0, rank_fixpoint(&t), "{p:?}");
        }
    }
}

#[test]
fn complete_binary_ranks() {
    for h in 0..=4 {
        let t = complete_binary(h);
        assert_eq!(rank_map(&t).unwrap().rank(0), h);
        assert_eq!(rank_fixpoint(&t)[0], h);
    }
}

#[test]
fn rank_needs_a_tree() {
    assert!(rank_map(&FinStructure::chain(3)).is_err());
}

#[test]
fn classifier_verdicts() {
    let c = |s: &str| classify(&TreeTerm::parse(s).unwrap());
    assert!(matches!(c("fullbinary"), Verdict::EmbedsBinary { .. }));
    assert_eq!(c("(gradedfan cn)").kind(), "wild(i)");
    assert_eq!(c("(spine (concat omega rational))").kind(), "wild(ii)");
    assert_eq!(c("(spine (graded cnstar))").kind(), "wild(iii)");
    assert!(matches!(c("(node leaf leaf leaf)"), Verdict::Tame { .. }));
    assert!(TreeTerm::parse("(node").is_err());
}

#[test]
fn finite_terms_classify_tame_with_fixpoint_rank() {
    let t = TreeTerm::parse("(node (node leaf leaf) (node leaf leaf) leaf)").unwrap();
    let s = t.materialize().unwrap();
    let r = rank_fixpoint(&s);
    match classify(&t) {
        Verdict::Tame { n_star, .. } => assert!(n_star >= *r.iter().max().unwrap()),
        v => panic!("{v:?}"),
    }
}

#[test]
fn chain_orders_match_lex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=4 {
        for _ in 0..40 {
            let p = random_presentation(&mut rng, n, 30);
            let cert = synth_chain_wellorder(&p, n).unwrap();
            assert_eq!(cert.parameters.len(), n - 1);
            let c = p.chain();
            assert_eq!(cert.evaluator(&c).unwrap().order().unwrap(), lex_order(&p), "{p:?}");
            assert!(verify_certificate(&c, &cert).accepted);
        }
    }
}

#[test]
fn catalog_presentations() {
    for n in 1..=3 {
        for starred in [false, true] {
            let p = ChainPresentation::catalog(n, starred, 3).unwrap();
            assert_eq!(p.degree().unwrap(), n);
            assert_eq!(p.size(), 3usize.pow(n as u32));
            let cert = synth_chain_wellorder(&p, n).unwrap();
            assert_eq!(cert.evaluator(&p.chain()).unwrap().order().unwrap(), lex_order(&p));
        }
    }
}

#[test]
fn certificate_json_roundtrip() {
    let t = FinStructure::tree_from_parents(&[None, Some(0), Some(0), Some(1), Some(1)]).unwrap();
    let cert = synth_tree_wellorder(&t).unwrap();
    assert_eq!(cert.scheme, Scheme::Tree);
    let back = WellOrderCertificate::from_json(&cert.to_json()).unwrap();
    assert_eq!(back, cert);
    let mut v: serde_json::Value = serde_json::from_str(&cert.to_json()).unwrap();
    v["surprise"] = serde_json::json!(1);
    assert!(WellOrderCertificate::from_json(&v.to_string()).is_err());
}

#[test]
fn foreign_parameters_are_rejected() {
    let t = FinStructure::tree_from_parents(&[None, Some(0), Some(0)]).unwrap();
    let mut cert = synth_tree_wellorder(&t).unwrap();
    cert.parameters.insert("D0".into(), vec!["nobody".into()]);
    let rep = verify_certificate(&t, &cert);
    assert!(!rep.accepted);
    assert_eq!(rep.violations[0].check, "parameters");
}

#[test]
fn random_forests_verify() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rand::Rng::gen_range(&mut rng, 1..=8);
        let t = random_tree(&mut rng, n, true);
        let cert = synth_tree_wellorder(&t).unwrap();
        let rep = verify_certificate(&t, &cert);
        assert!(rep.accepted, "{} {:?}", t.to_json(), rep.violations);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn rank_is_monotone_and_matches_fixpoint(parents in arb_parents(7)) {
        let t = FinStructure::tree_from_parents(&parents).unwrap();
        let r = rank_map(&t).unwrap();
        prop_assert_eq!(&r.0, &rank_fixpoint(&t));
        for x in 0..t.len() {
            if let Some(p) = t.parent(x) {
                prop_assert!(r.rank(p) >= r.rank(x));
            }
        }
    }

    #[test]
    fn tree_certificates_are_total_well_orders(parents in arb_parents(7)) {
        let t = FinStructure::tree_from_parents(&parents).unwrap();
        let cert = synth_tree_wellorder(&t).unwrap();
        let ev = cert.evaluator(&t).unwrap();
        let order = ev.order().unwrap();
        let mut sorted = order.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..t.len()).collect::<Vec<_>>());
        for w in order.windows(2) {
            prop_assert!(ev.less(w[0], w[1]) && !ev.less(w[1], w[0]));
        }
    }

    #[test]
    fn recoloring_into_the_parent_class_is_caught(parents in arb_parents(7)) {
        let t = FinStructure::tree_from_parents(&parents).unwrap();
        let cert = synth_tree_wellorder(&t).unwrap();
        let gamma = &cert.tree.as_ref().unwrap().gamma;
        for (i, e) in gamma.iter().enumerate() {
            if let Some(p) = e.parent {
                let mut bad = cert.clone();
                bad.recolor_branch(i, gamma[p].color).unwrap();
                prop_assert!(!verify_certificate(&t, &bad).accepted);
            }
        }
    }
}
