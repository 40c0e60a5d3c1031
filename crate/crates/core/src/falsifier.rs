//! Counterexample search: indiscernible pairs against definable choice,
//! direct choice-function checks, and monochromatic subsets of colourings.

use serde::Serialize;
use serde_json::{json, Value};

use crate::composition::AdditiveColoring;
use crate::error::{Error, Result};
use crate::formula::{eval_direct, Formula};
use crate::structures::{FinStructure, Subset};
use crate::theory::{compute_theory, Theory};

/// Two elements that no depth-`n` formula can tell apart inside `X = {x, y}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChoiceWitness {
    pub x: usize,
    pub y: usize,
    pub set: Subset,
    pub depth: usize,
    /// `Th^n(s; x, X, P̄)`, equal to the theory with `y` in place of `x`.
    pub theory: Theory,
}

impl ChoiceWitness {
    pub fn to_json(&self, s: &FinStructure, params: &[Subset]) -> Value {
        let ids = |a: &Subset| a.iter().map(|i| s.id(i).to_string()).collect::<Vec<_>>();
        json!({
            "fingerprint": s.fingerprint(),
            "x": s.id(self.x),
            "y": s.id(self.y),
            "set": ids(&self.set),
            "parameters": params.iter().map(ids).collect::<Vec<_>>(),
            "depth": self.depth,
            "theory_hash": self.theory.content_hash(),
        })
    }

    /// Recomputes both theories from scratch.
    pub fn recheck(&self, s: &FinStructure, params: &[Subset]) -> Result<bool> {
        let a = pair_theory(s, self.x, &self.set, params, self.depth)?;
        let b = pair_theory(s, self.y, &self.set, params, self.depth)?;
        Ok(a == b && a == self.theory)
    }
}

fn pair_theory(s: &FinStructure, x: usize, set: &Subset, params: &[Subset], n: usize) -> Result<Theory> {
    let mut tuple = vec![Subset::singleton(x), set.clone()];
    tuple.extend(params.iter().cloned());
    compute_theory(s, &tuple, n)
}

fn pair_search(
    s: &FinStructure,
    params: &[Subset],
    n: usize,
    pairs: impl Iterator<Item = (usize, usize)>,
) -> Result<Option<ChoiceWitness>> {
    for (x, y) in pairs {
        let set = Subset::from_indices([x, y]);
        let tx = pair_theory(s, x, &set, params, n)?;
        if tx == pair_theory(s, y, &set, params, n)? {
            return Ok(Some(ChoiceWitness { x, y, set, depth: n, theory: tx }));
        }
    }
    Ok(None)
}

/// First pair `x < y` (lexicographic on indices) with
/// `Th^n(s; x, {x,y}, P̄) = Th^n(s; y, {x,y}, P̄)`.
pub fn find_indiscernible_pair(s: &FinStructure, params: &[Subset], n: usize) -> Result<Option<ChoiceWitness>> {
    if let Some(bad) = params.iter().find(|p| p.iter().any(|i| i >= s.len())) {
        return Err(Error::UnknownElement(format!("parameter {bad:?} leaves the structure")));
    }
    let len = s.len();
    let forward = (0..len).flat_map(|x| (x + 1..len).map(move |y| (x, y)));
    let found = pair_search(s, params, n, forward)?;
    if found.is_none() {
        let backward = (0..len).rev().flat_map(|x| (x + 1..len).rev().map(move |y| (x, y)));
        if let Some(w) = pair_search(s, params, n, backward)? {
            return Err(Error::Internal(format!("reverse search found ({}, {}) after a forward miss", w.x, w.y)));
        }
    }
    Ok(found)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceFailure {
    NoneChosen,
    SeveralChosen,
    ChosenOutside,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChoiceVerdict {
    Defines,
    Fails { set: Subset, failure: ChoiceFailure, chosen: Subset },
}

impl ChoiceVerdict {
    pub fn to_json(&self, s: &FinStructure) -> Value {
        let ids = |a: &Subset| a.iter().map(|i| s.id(i).to_string()).collect::<Vec<_>>();
        match self {
            ChoiceVerdict::Defines => json!({ "verdict": "defines_choice" }),
            ChoiceVerdict::Fails { set, failure, chosen } => json!({
                "verdict": "fails",
                "failure": failure,
                "set": ids(set),
                "chosen": ids(chosen),
            }),
        }
    }
}

/// Whether `f(x, X, P̄)` picks exactly one member from every nonempty `X`.
/// Sets are visited in increasing bitmask order.
pub fn check_choice_function(s: &FinStructure, f: &Formula, params: &[Subset]) -> Result<ChoiceVerdict> {
    if f.arity() != 2 + params.len() {
        return Err(Error::ArityMismatch { expected: 2 + params.len(), got: f.arity() });
    }
    if s.len() > 16 {
        return Err(Error::BoundsExceeded(format!("{} elements; at most 16 subsets bits", s.len())));
    }
    for mask in 1u64..1 << s.len() {
        let set = Subset::from_mask(mask);
        let mut chosen = Subset::new();
        for x in 0..s.len() {
            let mut assignment = vec![Subset::singleton(x), set.clone()];
            assignment.extend(params.iter().cloned());
            if eval_direct(f, s, &assignment)? {
                chosen.insert(x);
            }
        }
        let failure = if chosen.is_empty() {
            Some(ChoiceFailure::NoneChosen)
        } else if !chosen.is_subset_of(&set) {
            Some(ChoiceFailure::ChosenOutside)
        } else if chosen.len() > 1 {
            Some(ChoiceFailure::SeveralChosen)
        } else {
            None
        };
        if let Some(failure) = failure {
            return Ok(ChoiceVerdict::Fails { set, failure, chosen });
        }
    }
    Ok(ChoiceVerdict::Defines)
}

fn mono_search<C: PartialEq>(
    order: &[usize],
    k: usize,
    color: &dyn Fn(usize, usize) -> C,
    picked: &mut Vec<usize>,
    from: usize,
    target: &mut Option<C>,
) -> bool {
    if picked.len() == k {
        return true;
    }
    for i in from..order.len() {
        let z = order[i];
        let set_target = target.is_none() && !picked.is_empty();
        if set_target {
            *target = Some(color(picked[0], z));
        }
        if picked.iter().all(|&p| target.as_ref().is_none_or(|t| color(p, z) == *t)) {
            picked.push(z);
            if mono_search(order, k, color, picked, i + 1, target) {
                return true;
            }
            picked.pop();
        }
        if set_target {
            *target = None;
        }
    }
    false
}

/// An increasing list of `k` points whose pairs all share one colour, by
/// backtracking over `0..n`; `color(a, b)` is queried with `a < b`.
pub fn find_monochromatic_by<C: PartialEq>(n: usize, k: usize, color: &dyn Fn(usize, usize) -> C) -> Result<Option<Vec<usize>>> {
    if k > n {
        return Err(Error::Precondition(format!("k = {k} exceeds the {n} points")));
    }
    let forward: Vec<usize> = (0..n).collect();
    let mut picked = Vec::new();
    if mono_search(&forward, k, color, &mut picked, 0, &mut None) {
        return Ok(Some(picked));
    }
    // independent pass from the other end, with the colour read back in order
    let backward: Vec<usize> = (0..n).rev().collect();
    let flipped = |a: usize, b: usize| if a < b { color(a, b) } else { color(b, a) };
    let mut picked = Vec::new();
    if mono_search(&backward, k, &flipped, &mut picked, 0, &mut None) {
        return Err(Error::Internal("reverse search found a monochromatic set after a forward miss".into()));
    }
    Ok(None)
}

/// Monochromatic `k`-subset of the chain positions of an additive colouring.
pub fn find_monochromatic(col: &AdditiveColoring, k: usize) -> Result<Option<Vec<usize>>> {
    find_monochromatic_by(col.len(), k, &|a, b| col.color(a, b).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::coloring_of;

    #[test]
    fn pure_set_pigeonhole() {
        let s = FinStructure::pure_set(3);
        let p = Subset::from_indices([0]);
        let w = find_indiscernible_pair(&s, &[p.clone()], 2).unwrap().unwrap();
        assert_eq!((w.x, w.y), (1, 2));
        assert!(w.recheck(&s, &[p]).unwrap());
    }

    #[test]
    fn two_element_chain() {
        let c = FinStructure::chain(2);
        assert!(find_indiscernible_pair(&c, &[], 0).unwrap().is_some());
        assert!(find_indiscernible_pair(&c, &[], 1).unwrap().is_none());
    }

    #[test]
    fn minimum_is_a_choice_function() {
        let c = FinStructure::chain(4);
        let min = Formula::parse("(formula (x X) (and (member x X) (forall y (implies (member y X) (or (equal x y) (le x y))))))").unwrap();
        assert_eq!(check_choice_function(&c, &min, &[]).unwrap(), ChoiceVerdict::Defines);
        let any = Formula::parse("(formula (x X) (member x X))").unwrap();
        assert!(matches!(
            check_choice_function(&c, &any, &[]).unwrap(),
            ChoiceVerdict::Fails { failure: ChoiceFailure::SeveralChosen, .. }
        ));
    }

    #[test]
    fn monochromatic_sets() {
        let c = FinStructure::chain(5);
        let col = coloring_of(&c, &[], 1).unwrap();
        let found = find_monochromatic(&col, 2).unwrap().unwrap();
        assert_eq!(found.len(), 2);
        assert_eq!(find_monochromatic_by(5, 3, &|a, b| (a, b)).unwrap(), None);
        assert_eq!(find_monochromatic_by(5, 4, &|_, _| 0).unwrap(), Some(vec![0, 1, 2, 3]));
    }
}
