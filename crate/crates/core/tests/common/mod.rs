//! Brute-force oracles and shared generators for the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use mso_workbench::formula::Expr;
use mso_workbench::theory::{atom_count, atom_index, AtomKind};
use mso_workbench::{FinStructure, Formula, Kind, Subset, Theory};
use proptest::prelude::*;
use rand::Rng;

// ---------------------------------------------------------------------------
// Atoms and theories straight from the definitions
// ---------------------------------------------------------------------------

fn single(x: &Subset) -> Option<usize> {
    (x.len() == 1).then(|| x.as_slice()[0])
}

pub fn naive_atom(s: &FinStructure, kind: AtomKind, x: &Subset, y: &Subset) -> bool {
    match kind {
        AtomKind::Sing => x.len() == 1,
        AtomKind::Empty => x.is_empty(),
        AtomKind::Subset => x.is_subset_of(y),
        AtomKind::Equal => x == y,
        AtomKind::Member => single(x).is_some_and(|a| y.contains(a)),
        AtomKind::Le => match (single(x), single(y)) {
            (Some(a), Some(b)) => s.kind() != Kind::Set && s.leq(a, b),
            _ => false,
        },
    }
}

pub fn naive_atoms(s: &FinStructure, tuple: &[Subset]) -> Vec<bool> {
    let l = tuple.len();
    let mut atoms = vec![false; atom_count(l)];
    for i in 0..l {
        atoms[atom_index(AtomKind::Sing, i, 0, l)] = naive_atom(s, AtomKind::Sing, &tuple[i], &tuple[i]);
        atoms[atom_index(AtomKind::Empty, i, 0, l)] = naive_atom(s, AtomKind::Empty, &tuple[i], &tuple[i]);
        for j in 0..l {
            for k in [AtomKind::Subset, AtomKind::Equal, AtomKind::Member, AtomKind::Le] {
                atoms[atom_index(k, i, j, l)] = naive_atom(s, k, &tuple[i], &tuple[j]);
            }
        }
    }
    atoms
}

pub fn all_subsets(n: usize) -> Vec<Subset> {
    (0u64..1 << n).map(Subset::from_mask).collect()
}

/// `Th^0` is the atom vector, `Th^{n+1}` the set of `Th^n` over all extensions.
pub fn naive_theory(s: &FinStructure, tuple: &[Subset], n: usize) -> Theory {
    if n == 0 {
        return Theory::from_atoms(tuple.len(), &naive_atoms(s, tuple)).unwrap();
    }
    let members = all_subsets(s.len())
        .into_iter()
        .map(|b| {
            let mut ext = tuple.to_vec();
            ext.push(b);
            naive_theory(s, &ext, n - 1)
        })
        .collect();
    Theory::from_members(n, tuple.len(), members).unwrap()
}

/// Tarski semantics over explicit subsets.
pub fn naive_eval(f: &Formula, s: &FinStructure, assignment: &[Subset]) -> bool {
    let mut env: HashMap<String, Subset> = f.vars.iter().cloned().zip(assignment.iter().cloned()).collect();
    eval_expr(&f.body, s, &mut env)
}

fn eval_expr(e: &Expr, s: &FinStructure, env: &mut HashMap<String, Subset>) -> bool {
    match e {
        Expr::True => true,
        Expr::False => false,
        Expr::Unary(k, x) => naive_atom(s, *k, &env[x], &env[x]),
        Expr::Binary(k, x, y) => naive_atom(s, *k, &env[x], &env[y]),
        Expr::Not(a) => !eval_expr(a, s, env),
        Expr::And(es) => es.iter().all(|a| eval_expr(a, s, env)),
        Expr::Or(es) => es.iter().any(|a| eval_expr(a, s, env)),
        Expr::Exists(v, a) | Expr::Forall(v, a) => {
            let saved = env.get(v).cloned();
            let want = matches!(e, Expr::Exists(..));
            let mut result = !want;
            for b in all_subsets(s.len()) {
                env.insert(v.clone(), b);
                if eval_expr(a, s, env) == want {
                    result = want;
                    break;
                }
            }
            match saved {
                Some(old) => env.insert(v.clone(), old),
                None => env.remove(v),
            };
            result
        }
    }
}

// ---------------------------------------------------------------------------
// Ranks by fixpoint iteration of the level sets
// ---------------------------------------------------------------------------

/// `S_0` = all nodes, `S_{α+1}` = nodes with two incomparable strict
/// successors in `S_α`; the rank is the last level a node survives.
pub fn rank_fixpoint(t: &FinStructure) -> Vec<usize> {
    let n = t.len();
    let mut level: Vec<bool> = vec![true; n];
    let mut rank = vec![0; n];
    for alpha in 1..=n {
        let next: Vec<bool> = (0..n)
            .map(|e| {
                (0..n).any(|a| {
                    (0..n).any(|b| level[a] && level[b] && t.lt(e, a) && t.lt(e, b) && !t.comparable(a, b))
                })
            })
            .collect();
        if !next.iter().any(|&x| x) {
            break;
        }
        for e in 0..n {
            if next[e] {
                rank[e] = alpha;
            }
        }
        level = next;
    }
    rank
}

// ---------------------------------------------------------------------------
// Structures
// ---------------------------------------------------------------------------

pub fn random_tree<R: Rng>(rng: &mut R, n: usize, forests: bool) -> FinStructure {
    let parents: Vec<Option<usize>> = (0..n)
        .map(|i| if i == 0 || (forests && rng.gen_bool(0.15)) { None } else { Some(rng.gen_range(0..i)) })
        .collect();
    FinStructure::tree_from_parents(&parents).unwrap()
}

pub fn random_structure<R: Rng>(rng: &mut R, kind: Kind, n: usize) -> FinStructure {
    match kind {
        Kind::Chain => FinStructure::chain(n),
        Kind::Set => FinStructure::pure_set(n),
        Kind::Tree => random_tree(rng, n, true),
    }
}

pub fn random_subset<R: Rng>(rng: &mut R, n: usize) -> Subset {
    (0..n).filter(|_| rng.gen_bool(0.5)).collect()
}

pub fn complete_binary(height: usize) -> FinStructure {
    let size = (1usize << (height + 1)) - 1;
    let parents: Vec<Option<usize>> = (0..size).map(|i| if i == 0 { None } else { Some((i - 1) / 2) }).collect();
    FinStructure::tree_from_parents(&parents).unwrap()
}

/// A labelled tree from a parent vector in which parents precede children.
pub fn arb_parents(max: usize) -> impl Strategy<Value = Vec<Option<usize>>> {
    (1..=max).prop_flat_map(|n| {
        proptest::collection::vec(any::<proptest::sample::Index>(), n).prop_map(|ix| {
            ix.iter().enumerate().map(|(i, x)| if i == 0 { None } else { Some(x.index(i)) }).collect()
        })
    })
}

// ---------------------------------------------------------------------------
// Formulas
// ---------------------------------------------------------------------------

const SUITE: &[&str] = &[
    // sentences
    "(formula () (exists Z (sing Z)))",
    "(formula () (forall Z (forall W (implies (and (sing Z) (sing W)) (or (le Z W) (le W Z))))))",
    "(formula () (exists Z (exists W (and (sing Z) (sing W) (not (le Z W)) (not (le W Z))))))",
    // one free variable
    "(formula (X) (sing X))",
    "(formula (X) (empty X))",
    "(formula (X) (exists Z (and (subset Z X) (not (empty Z)) (not (equal Z X)))))",
    "(formula (X) (forall Z (implies (sing Z) (le X Z))))",
    "(formula (X) (exists Z (and (sing Z) (le Z X) (not (equal Z X)))))",
    "(formula (X) (forall Z (implies (member Z X) (forall W (implies (le W Z) (member W X))))))",
    "(formula (X) (forall Z (forall W (implies (and (member Z X) (member W X)) (or (le Z W) (le W Z))))))",
    "(formula (X) (exists Z (and (sing Z) (le X Z) (not (equal X Z)) (forall W (implies (sing W) (or (le W X) (le Z W)))))))",
    "(formula (X) (forall Z (implies (and (sing Z) (not (member Z X))) (exists W (and (member W X) (le Z W))))))",
    // two free variables
    "(formula (X Y) (subset X Y))",
    "(formula (X Y) (equal X Y))",
    "(formula (X Y) (member X Y))",
    "(formula (X Y) (le X Y))",
    "(formula (X Y) (and (sing X) (sing Y) (not (le X Y)) (not (le Y X))))",
    "(formula (X Y) (exists Z (and (sing Z) (le X Z) (le Z Y) (not (equal Z X)) (not (equal Z Y)))))",
    "(formula (X Y) (and (le X Y) (not (equal X Y)) (not (exists Z (and (sing Z) (le X Z) (le Z Y) (not (equal Z X)) (not (equal Z Y)))))))",
    "(formula (X Y) (exists Z (and (subset X Z) (not (subset Y Z)))))",
    "(formula (X Y) (exists Z (and (sing Z) (le X Z) (le Y Z))))",
    "(formula (X Y) (forall Z (implies (member Z X) (exists W (and (member W Y) (le W Z))))))",
    "(formula (X Y) (exists Z (and (subset Z Y) (forall W (implies (member W Z) (member W X))) (not (empty Z)))))",
    "(formula (X Y) (forall Z (implies (and (subset X Z) (subset Y Z)) (exists W (and (member W Z) (not (member W X)))))))",
    "(formula (X Y) (iff (exists Z (and (member Z X) (member Z Y))) (not (forall W (implies (member W X) (not (member W Y)))))))",
];

/// Formulas of quantifier depth ≤ 2 over at most two free variables.
pub fn suite() -> Vec<Formula> {
    SUITE.iter().map(|s| Formula::parse(s).unwrap()).collect()
}

fn arb_atom(vars: Vec<String>) -> BoxedStrategy<Expr> {
    let kinds = prop_oneof![
        Just(AtomKind::Subset),
        Just(AtomKind::Equal),
        Just(AtomKind::Member),
        Just(AtomKind::Le)
    ];
    let v = proptest::sample::select(vars);
    prop_oneof![
        Just(Expr::True),
        (prop_oneof![Just(AtomKind::Sing), Just(AtomKind::Empty)], v.clone()).prop_map(|(k, x)| Expr::Unary(k, x)),
        (kinds, v.clone(), v).prop_map(|(k, x, y)| Expr::Binary(k, x, y)),
    ]
    .boxed()
}

/// Random bodies over `vars` with at most `qd` nested quantifiers.
pub fn arb_expr(vars: Vec<String>, qd: usize) -> BoxedStrategy<Expr> {
    let leaf = arb_atom(vars.clone());
    if qd == 0 {
        return leaf
            .prop_recursive(2, 8, 3, |inner| {
                prop_oneof![
                    inner.clone().prop_map(|e| Expr::Not(Box::new(e))),
                    proptest::collection::vec(inner.clone(), 2..=3).prop_map(Expr::And),
                    proptest::collection::vec(inner, 2..=3).prop_map(Expr::Or),
                ]
            })
            .boxed();
    }
    let bound = format!("Q{qd}");
    let mut inner_vars = vars.clone();
    inner_vars.push(bound.clone());
    let quantified = arb_expr(inner_vars, qd - 1);
    let b2 = bound.clone();
    prop_oneof![
        arb_expr(vars.clone(), 0),
        quantified.clone().prop_map(move |e| Expr::Exists(bound.clone(), Box::new(e))),
        quantified.prop_map(move |e| Expr::Forall(b2.clone(), Box::new(e))),
        (arb_expr(vars.clone(), qd - 1), arb_expr(vars, qd - 1)).prop_map(|(a, b)| Expr::And(vec![a, Expr::Not(Box::new(b))])),
    ]
    .boxed()
}

// ---------------------------------------------------------------------------
// Nested-sum chain presentations
// ---------------------------------------------------------------------------

use mso_workbench::synthesis::{Block, ChainPresentation};

fn block_size(b: &Block) -> usize {
    match b {
        Block::Points(k) => *k,
        Block::Sum(parts) => parts.iter().map(block_size).sum(),
    }
}

/// For every chain position, its summand index at each level (top first),
/// counted in the order the sum enumerates its summands.
pub fn lex_keys(p: &ChainPresentation) -> Vec<Vec<usize>> {
    let n = p.directions.len();
    (0..block_size(&p.shape))
        .map(|mut pos| {
            let mut key = Vec::with_capacity(n);
            let mut b = &p.shape;
            let mut level = n;
            loop {
                let asc = p.directions[level - 1];
                match b {
                    Block::Points(k) => {
                        key.push(if asc { pos } else { k - 1 - pos });
                        break;
                    }
                    Block::Sum(parts) => {
                        let mut i = 0;
                        while pos >= block_size(&parts[i]) {
                            pos -= block_size(&parts[i]);
                            i += 1;
                        }
                        key.push(if asc { i } else { parts.len() - 1 - i });
                        b = &parts[i];
                        level -= 1;
                    }
                }
            }
            key
        })
        .collect()
}

/// Chain positions sorted by their lexicographic keys.
pub fn lex_order(p: &ChainPresentation) -> Vec<usize> {
    let keys = lex_keys(p);
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    order
}

fn random_block<R: Rng>(rng: &mut R, depth: usize) -> Block {
    if depth == 1 {
        Block::Points(rng.gen_range(1..=4))
    } else {
        Block::Sum((0..rng.gen_range(1..=3)).map(|_| random_block(rng, depth - 1)).collect())
    }
}

/// A random presentation of nesting depth `n` with at most `max` points.
pub fn random_presentation<R: Rng>(rng: &mut R, n: usize, max: usize) -> ChainPresentation {
    loop {
        let shape = random_block(rng, n);
        if block_size(&shape) <= max {
            let directions = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            return ChainPresentation { directions, shape };
        }
    }
}
