mod common;

use common::{naive_eval, naive_theory, random_subset, random_tree};
use mso_workbench::composition::coloring_of;
use mso_workbench::falsifier::{
    check_choice_function, find_indiscernible_pair, find_monochromatic, find_monochromatic_by, ChoiceFailure,
    ChoiceVerdict,
};
use mso_workbench::theory::all_tuples;
use mso_workbench::{Error, FinStructure, Formula, Subset};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn naive_pair(s: &FinStructure, params: &[Subset], n: usize) -> Option<(usize, usize)> {
    let th = |x: usize, set: &Subset| {
        let mut t = vec![Subset::singleton(x), set.clone()];
        t.extend(params.iter().cloned());
        naive_theory(s, &t, n)
    };
    (0..s.len())
        .flat_map(|x| (x + 1..s.len()).map(move |y| (x, y)))
        .find(|&(x, y)| {
            let set = Subset::from_indices([x, y]);
            th(x, &set) == th(y, &set)
        })
}

#[test]
fn pure_sets_above_the_threshold_always_have_pairs() {
    for l in 0..=2 {
        let size = (1 << l) + 1;
        let s = FinStructure::pure_set(size);
        for params in all_tuples(size, l) {
            assert!(find_indiscernible_pair(&s, &params, 2).unwrap().is_some(), "l={l} {params:?}");
        }
    }
}

#[test]
fn separating_tuples_exist_at_the_threshold() {
    for l in 0..=2usize {
        let size = 1 << l;
        let s = FinStructure::pure_set(size);
        let separating = all_tuples(size, l)
            .into_iter()
            .find(|p| find_indiscernible_pair(&s, p, 2).unwrap().is_none());
        assert!(separating.is_some() || size < 2, "l={l}");
    }
}

#[test]
fn unknown_parameters_are_rejected() {
    let s = FinStructure::pure_set(2);
    assert!(matches!(find_indiscernible_pair(&s, &[Subset::from_indices([5])], 1), Err(Error::UnknownElement(_))));
}

#[test]
fn choice_functions_on_chains_and_sets() {
    let min = Formula::parse(
        "(formula (x X) (and (member x X) (forall y (implies (member y X) (or (equal x y) (le x y))))))",
    )
    .unwrap();
    assert_eq!(check_choice_function(&FinStructure::chain(4), &min, &[]).unwrap(), ChoiceVerdict::Defines);
    match check_choice_function(&FinStructure::pure_set(2), &min, &[]).unwrap() {
        ChoiceVerdict::Fails { failure, set, .. } => {
            assert_eq!(failure, ChoiceFailure::NoneChosen);
            assert_eq!(set, Subset::from_indices([0, 1]));
        }
        v => panic!("{v:?}"),
    }
    let outside = Formula::parse("(formula (x X) (sing x))").unwrap();
    assert!(matches!(
        check_choice_function(&FinStructure::chain(1), &outside, &[]).unwrap(),
        ChoiceVerdict::Defines
    ));
    assert!(matches!(
        check_choice_function(&FinStructure::chain(2), &outside, &[]).unwrap(),
        ChoiceVerdict::Fails { failure: ChoiceFailure::ChosenOutside | ChoiceFailure::SeveralChosen, .. }
    ));
    assert!(matches!(check_choice_function(&FinStructure::chain(2), &min, &[Subset::new()]), Err(Error::ArityMismatch { .. })));
}

#[test]
fn choice_verdict_matches_naive_semantics() {
    let f = Formula::parse("(formula (x X P) (and (member x X) (or (member x P) (forall y (implies (member y X) (not (member y P)))))))").unwrap();
    for s in [FinStructure::chain(3), FinStructure::pure_set(3)] {
        for p in all_tuples(3, 1) {
            let got = check_choice_function(&s, &f, &p).unwrap();
            let mut expect = ChoiceVerdict::Defines;
            for mask in 1u64..8 {
                let set = Subset::from_mask(mask);
                let chosen: Subset =
                    (0..3).filter(|&x| naive_eval(&f, &s, &[Subset::singleton(x), set.clone(), p[0].clone()])).collect();
                if chosen.len() != 1 || !chosen.is_subset_of(&set) {
                    expect = got.clone();
                    assert!(matches!(got, ChoiceVerdict::Fails { set: ref fs, .. } if *fs == set));
                    break;
                }
            }
            assert_eq!(got, expect);
        }
    }
}

fn naive_mono(n: usize, k: usize, color: &dyn Fn(usize, usize) -> u8) -> bool {
    (0u64..1 << n).filter(|m| m.count_ones() as usize == k).any(|m| {
        let pts: Vec<usize> = (0..n).filter(|i| m >> i & 1 == 1).collect();
        let c0 = if k >= 2 { color(pts[0], pts[1]) } else { 0 };
        pts.iter().enumerate().all(|(i, &a)| pts[i + 1..].iter().all(|&b| color(a, b) == c0))
    })
}

#[test]
fn monochromatic_k_exceeding_points_is_an_error() {
    assert!(find_monochromatic_by(3, 4, &|_, _| 0u8).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_search_matches_brute_force(seed in any::<u64>(), n in 2usize..=4, l in 0usize..=1, depth in 0usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = match seed % 3 {
            0 => FinStructure::pure_set(n),
            1 => FinStructure::chain(n),
            _ => random_tree(&mut rng, n, true),
        };
        let params: Vec<Subset> = (0..l).map(|_| random_subset(&mut rng, n)).collect();
        let got = find_indiscernible_pair(&s, &params, depth).unwrap();
        prop_assert_eq!(got.as_ref().map(|w| (w.x, w.y)), naive_pair(&s, &params, depth));
        if let Some(w) = got {
            prop_assert!(w.recheck(&s, &params).unwrap());
        }
    }

    #[test]
    fn mono_search_matches_brute_force(table in proptest::collection::vec(0u8..3, 36), n in 2usize..=7, k in 2usize..=4) {
        prop_assume!(k <= n);
        let color = |a: usize, b: usize| table[(a * 6 + b) % 36];
        let got = find_monochromatic_by(n, k, &color).unwrap();
        prop_assert_eq!(got.is_some(), naive_mono(n, k, &color));
        if let Some(pts) = got {
            prop_assert_eq!(pts.len(), k);
            prop_assert!(pts.windows(2).all(|w| w[0] < w[1]));
            let c0 = color(pts[0], pts[1]);
            for (i, &a) in pts.iter().enumerate() {
                for &b in &pts[i + 1..] {
                    prop_assert_eq!(color(a, b), c0);
                }
            }
        }
    }

    #[test]
    fn colorings_of_periodic_chains_have_long_mono_runs(period in 1usize..=3, len in 4usize..=8) {
        let c = FinStructure::chain(len);
        let p: Subset = (0..len).filter(|i| i % period == 0).collect();
        let col = coloring_of(&c, &[p], 0).unwrap();
        prop_assert!(find_monochromatic(&col, 2).unwrap().is_some());
    }
}
