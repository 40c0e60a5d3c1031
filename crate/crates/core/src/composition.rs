//! The theory-sum algebra for chains, restriction theories, additive
//! colourings, and sampling checks that the tree composition theorems hold as
//! functional dependencies on small instances.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::structures::{binary_fragment, EmbeddingFrame, FinStructure, Kind, StructureFile, Subset};
use crate::theory::{
    atom_count, atom_index, compute_theory, compute_theory_direct, empty_theory, parent_maps, point_theory,
    AtomKind, Theory,
};

// ---------------------------------------------------------------------------
// Sums
// ---------------------------------------------------------------------------

fn sum_atoms(c: &[bool], d: &[bool], l: usize) -> Vec<bool> {
    let mut out = vec![false; atom_count(l)];
    let idx = |k, i, j| atom_index(k, i, j, l);
    let sing = |v: &[bool], i| v[idx(AtomKind::Sing, i, 0)];
    let empty = |v: &[bool], i| v[idx(AtomKind::Empty, i, 0)];
    // singleton lives in C (resp. D)
    let in_c = |i| sing(c, i) && empty(d, i);
    let in_d = |i| empty(c, i) && sing(d, i);
    for i in 0..l {
        out[idx(AtomKind::Sing, i, 0)] = in_c(i) || in_d(i);
        out[idx(AtomKind::Empty, i, 0)] = empty(c, i) && empty(d, i);
        for j in 0..l {
            for k in [AtomKind::Subset, AtomKind::Equal] {
                out[idx(k, i, j)] = c[idx(k, i, j)] && d[idx(k, i, j)];
            }
            out[idx(AtomKind::Member, i, j)] = (in_c(i) && c[idx(AtomKind::Member, i, j)])
                || (in_d(i) && d[idx(AtomKind::Member, i, j)]);
            out[idx(AtomKind::Le, i, j)] = (in_c(i) && in_c(j) && c[idx(AtomKind::Le, i, j)])
                || (in_d(i) && in_d(j) && d[idx(AtomKind::Le, i, j)])
                || (in_c(i) && in_d(j));
        }
    }
    out
}

const SUM_CACHE_CAPACITY: usize = 1 << 16;

fn sum_cache() -> &'static Mutex<HashMap<(Theory, Theory), Theory>> {
    static CACHE: OnceLock<Mutex<HashMap<(Theory, Theory), Theory>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn sum_rec(t1: &Theory, t2: &Theory) -> Theory {
    let key = (t1.clone(), t2.clone());
    if let Some(t) = sum_cache().lock().expect("sum cache poisoned").get(&key) {
        return t.clone();
    }
    let out = if t1.rank() == 0 {
        let atoms = sum_atoms(&t1.atoms().expect("rank 0"), &t2.atoms().expect("rank 0"), t1.arity());
        Theory::from_atoms(t1.arity(), &atoms).expect("atom count preserved")
    } else {
        let mut members = Vec::with_capacity(t1.members().len() * t2.members().len());
        for a in t1.members() {
            for b in t2.members() {
                members.push(sum_rec(a, b));
            }
        }
        Theory::from_members(t1.rank(), t1.arity(), members).expect("members are well-typed")
    };
    let mut guard = sum_cache().lock().expect("sum cache poisoned");
    if guard.len() >= SUM_CACHE_CAPACITY {
        guard.clear();
    }
    guard.insert(key, out.clone());
    out
}

/// `t1 + t2`: the theory of the concatenation of any witnesses.
pub fn sum(t1: &Theory, t2: &Theory) -> Result<Theory> {
    if t1.rank() != t2.rank() {
        return Err(Error::RankMismatch(t1.rank(), t2.rank()));
    }
    if t1.arity() != t2.arity() {
        return Err(Error::ArityMismatch { expected: t1.arity(), got: t2.arity() });
    }
    Ok(sum_rec(t1, t2))
}

/// Left fold of [`sum`]; the empty list yields the empty-chain theory.
pub fn sigma(ts: &[Theory], arity: usize, rank: usize) -> Result<Theory> {
    let mut acc = empty_theory(arity, rank);
    for t in ts {
        acc = sum(&acc, t)?;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Restrictions and colourings
// ---------------------------------------------------------------------------

fn point_theories(c: &FinStructure, tuple: &[Subset], n: usize) -> Result<Vec<Theory>> {
    if c.kind() != Kind::Chain {
        return Err(Error::NotAChain(c.kind().name()));
    }
    c.chain_order()
        .iter()
        .map(|&e| point_theory(&tuple.iter().map(|x| x.contains(e)).collect::<Vec<_>>(), n))
        .collect()
}

/// `Th^n([a, b); P̄ ∩ [a, b))` where `a < b` are chain positions and
/// `b = |c|` denotes the top sentinel.
pub fn restriction_theory(c: &FinStructure, tuple: &[Subset], a: usize, b: usize, n: usize) -> Result<Theory> {
    if a >= b || b > c.len() {
        return Err(Error::Precondition(format!("need a < b ≤ {}, got [{a}, {b})", c.len())));
    }
    let points = point_theories(c, tuple, n)?;
    sigma(&points[a..b], tuple.len(), n)
}

/// A pair colouring of a finite chain by restriction theories.
#[derive(Clone, Debug)]
pub struct AdditiveColoring {
    len: usize,
    depth: usize,
    arity: usize,
    // colors[a][b - a - 1] = colour of [a, b)
    colors: Vec<Vec<Theory>>,
}

impl AdditiveColoring {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Colour of the positions `a < b`, i.e. the theory of `[a, b)`.
    pub fn color(&self, a: usize, b: usize) -> &Theory {
        assert!(a < b && b <= self.len, "colour of [{a}, {b}) out of range");
        &self.colors[a][b - a - 1]
    }

    /// First triple violating `f(x, z) = f(x, y) + f(y, z)`, if any.
    pub fn additivity_violation(&self) -> Option<(usize, usize, usize)> {
        for x in 0..self.len {
            for y in x + 1..self.len {
                for z in y + 1..=self.len {
                    if sum_rec(self.color(x, y), self.color(y, z)) != *self.color(x, z) {
                        return Some((x, y, z));
                    }
                }
            }
        }
        None
    }

    pub fn distinct_colors(&self) -> usize {
        let mut all: Vec<&Theory> = self.colors.iter().flatten().collect();
        all.sort();
        all.dedup();
        all.len()
    }
}

/// Colours every pair `a < b` of chain positions by `Th^m([a, b); P̄)`.
/// Pairs use the top sentinel `b = |c|` as well.
pub fn coloring_of(c: &FinStructure, tuple: &[Subset], m: usize) -> Result<AdditiveColoring> {
    if c.len() < 2 {
        return Err(Error::Precondition("a colouring needs at least two points".into()));
    }
    let points = point_theories(c, tuple, m)?;
    let mut colors = Vec::with_capacity(points.len());
    for a in 0..points.len() {
        let mut row = Vec::with_capacity(points.len() - a);
        let mut acc = points[a].clone();
        row.push(acc.clone());
        for p in &points[a + 1..] {
            acc = sum_rec(&acc, p);
            row.push(acc.clone());
        }
        colors.push(row);
    }
    let coloring = AdditiveColoring { len: c.len(), depth: m, arity: tuple.len(), colors };
    if let Some((x, y, z)) = coloring.additivity_violation() {
        return Err(Error::Internal(format!("colouring not additive at ({x}, {y}, {z})")));
    }
    Ok(coloring)
}

// ---------------------------------------------------------------------------
// Functional-dependency checks
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum FdTheorem {
    /// Concatenation of chains.
    Chains,
    /// Grafting onto a binary tree fragment.
    BinaryGrafts,
    /// Splitting a tree above an initial segment.
    Successors,
    /// Splitting a tree along a branch.
    Branches,
    /// Regions around an embedded binary tree.
    Embeddings,
}

impl FdTheorem {
    pub const ALL: [FdTheorem; 5] =
        [FdTheorem::Chains, FdTheorem::BinaryGrafts, FdTheorem::Successors, FdTheorem::Branches, FdTheorem::Embeddings];

    pub fn id(self) -> &'static str {
        match self {
            FdTheorem::Chains => "1.8",
            FdTheorem::BinaryGrafts => "1.11",
            FdTheorem::Successors => "1.12",
            FdTheorem::Branches => "1.13",
            FdTheorem::Embeddings => "1.15",
        }
    }
}

impl fmt::Display for FdTheorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for FdTheorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FdTheorem::ALL
            .into_iter()
            .find(|t| t.id() == s)
            .ok_or_else(|| Error::Parse(format!("unknown composition theorem `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub struct FdConfig {
    pub theorem: FdTheorem,
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub max_elements: usize,
}

impl FdConfig {
    /// Defaults to `m = n + 2`.
    pub fn new(theorem: FdTheorem, n: usize, trials: usize, seed: u64) -> Self {
        FdConfig { theorem, n, m: n + 2, trials, seed, max_elements: 6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FdViolation {
    pub trial: usize,
    pub first: Value,
    pub second: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct FdReport {
    pub theorem: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub trials: usize,
    /// Pairs whose antecedent data coincided, so the consequent was compared.
    pub comparable: usize,
    pub violations: Vec<FdViolation>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Antecedent data: component theories plus the label sets that are present.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Antecedent {
    parts: Vec<Theory>,
    labels: Vec<(u8, Vec<Theory>)>,
}

struct Evaluated {
    antecedent: Antecedent,
    consequent: Theory,
    record: Value,
}

/// Groups points by label: the present labels in sorted order and, for each,
/// the set of points carrying it.
fn label_tuple<L: Ord + Clone>(labels: &[L]) -> (Vec<L>, Vec<Subset>) {
    let mut by_label: BTreeMap<L, Subset> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_label.entry(l.clone()).or_default().insert(i);
    }
    by_label.into_iter().unzip()
}

/// A tree (or forest) by parent vector with a tuple of marked node sets.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Sample {
    parents: Vec<Option<usize>>,
    marks: Vec<Subset>,
}

impl Sample {
    fn structure(&self) -> FinStructure {
        FinStructure::tree_from_parents(&self.parents).expect("samples are acyclic")
    }

    fn len(&self) -> usize {
        self.parents.len()
    }

    fn subtree(&self, root: usize) -> Vec<usize> {
        let s = self.structure();
        (0..self.len()).filter(|&x| s.leq(root, x)).collect()
    }

    /// Removes `drop` and attaches `piece` with its roots under `at`.
    fn replace(&self, drop: &[usize], piece: &Sample, at: Option<usize>) -> Sample {
        let keep: Vec<usize> = (0..self.len()).filter(|x| !drop.contains(x)).collect();
        let new_of: HashMap<usize, usize> = keep.iter().enumerate().map(|(n, &o)| (o, n)).collect();
        let mut parents: Vec<Option<usize>> =
            keep.iter().map(|&o| self.parents[o].map(|p| new_of[&p])).collect();
        let offset = parents.len();
        let at = at.map(|a| new_of[&a]);
        parents.extend(piece.parents.iter().map(|p| match p {
            Some(p) => Some(p + offset),
            None => at,
        }));
        let marks = self
            .marks
            .iter()
            .zip(&piece.marks)
            .map(|(old, new)| {
                old.iter()
                    .filter_map(|o| new_of.get(&o).copied())
                    .chain(new.iter().map(|x| x + offset))
                    .collect()
            })
            .collect();
        Sample { parents, marks }
    }

    fn record(&self) -> Value {
        let s = self.structure();
        let file: StructureFile = s.to_file();
        let marks: Vec<Vec<&str>> = self.marks.iter().map(|m| m.iter().map(|i| s.id(i)).collect()).collect();
        json!({ "structure": file, "marks": marks })
    }
}

fn random_marks(rng: &mut ChaCha8Rng, n: usize, arity: usize) -> Vec<Subset> {
    (0..arity).map(|_| (0..n).filter(|_| rng.gen_bool(0.4)).collect()).collect()
}

fn random_tree(rng: &mut ChaCha8Rng, n: usize, arity: usize) -> Sample {
    let parents = (0..n).map(|c| if c == 0 { None } else { Some(rng.gen_range(0..c)) }).collect();
    Sample { parents, marks: random_marks(rng, n, arity) }
}

/// All marked rooted trees (or forests) with at most `max` nodes, bucketed by `Th^n`.
fn pool(max: usize, arity: usize, n: usize, forests: bool) -> Result<HashMap<Theory, Vec<Sample>>> {
    let mut out: HashMap<Theory, Vec<Sample>> = HashMap::new();
    for size in 0..=max {
        for parents in parent_maps(size) {
            let roots = parents.iter().filter(|p| p.is_none()).count();
            if !forests && roots != 1 {
                continue;
            }
            for marks in crate::theory::all_tuples(size, arity) {
                let s = Sample { parents: parents.clone(), marks };
                let t = compute_theory(&s.structure(), &s.marks, n)?;
                out.entry(t).or_default().push(s);
            }
        }
    }
    Ok(out)
}

fn theory_of(s: &FinStructure, keep: &Subset, tuple: &[Subset], n: usize) -> Result<Theory> {
    let sub = s.induced(keep);
    let restricted: Vec<Subset> = tuple.iter().map(|x| FinStructure::restrict_subset(keep, x)).collect();
    compute_theory(&sub, &restricted, n)
}

struct Checker {
    cfg: FdConfig,
    rooted: HashMap<Theory, Vec<Sample>>,
    forests: HashMap<Theory, Vec<Sample>>,
}

const MARK_ARITY: usize = 1;

impl Checker {
    fn new(cfg: FdConfig) -> Result<Self> {
        if cfg.max_elements > 6 || cfg.n > 1 || cfg.m > 3 {
            return Err(Error::BoundsExceeded(format!(
                "composition checks allow at most 6 elements, n ≤ 1 and m ≤ 3 (got {}, {}, {})",
                cfg.max_elements, cfg.n, cfg.m
            )));
        }
        let (rooted, forests) = match cfg.theorem {
            FdTheorem::Successors => (pool(3, MARK_ARITY, cfg.n, false)?, HashMap::new()),
            FdTheorem::Branches => (HashMap::new(), pool(3, MARK_ARITY, cfg.n, true)?),
            _ => (HashMap::new(), HashMap::new()),
        };
        Ok(Checker { cfg, rooted, forests })
    }

    fn pick_alternative<'a>(
        pools: &'a HashMap<Theory, Vec<Sample>>,
        rng: &mut ChaCha8Rng,
        t: &Theory,
        budget: usize,
    ) -> Option<&'a Sample> {
        let fits: Vec<&Sample> = pools.get(t)?.iter().filter(|s| s.len() <= budget).collect();
        fits.choose(rng).copied()
    }

    // ---- successors ------------------------------------------------------

    fn successors_eval(&self, s: &Sample, a: &Subset) -> Result<Evaluated> {
        let (n, m) = (self.cfg.n, self.cfg.m);
        let t = s.structure();
        let dec = t.segment_decompose(a)?;
        let class_theories =
            dec.classes.iter().map(|c| theory_of(&t, c, &s.marks, n)).collect::<Result<Vec<_>>>()?;
        let (present, label_sets) = label_tuple(&class_theories);
        let index_theory = compute_theory(&FinStructure::pure_set(dec.classes.len()), &label_sets, m)?;
        let mut lower_tuple = s.marks.clone();
        lower_tuple.push(a.clone());
        let lower = theory_of(&t, &dec.below, &lower_tuple, m)?;
        Ok(Evaluated {
            antecedent: Antecedent { parts: vec![lower, index_theory], labels: vec![(0, present)] },
            consequent: compute_theory(&t, &s.marks, n)?,
            record: json!({ "instance": s.record(), "segment": a.iter().map(|i| t.id(i)).collect::<Vec<_>>() }),
        })
    }

    fn successors_trial(&self, rng: &mut ChaCha8Rng) -> Result<Option<(Evaluated, Evaluated)>> {
        let size = rng.gen_range(1..=self.cfg.max_elements);
        let s = random_tree(rng, size, MARK_ARITY);
        let t = s.structure();
        let a: Subset = if rng.gen_bool(0.2) {
            Subset::new()
        } else {
            let v = rng.gen_range(0..size);
            let mut seg: Subset = t.ancestors(v).into_iter().collect();
            seg.insert(v);
            seg
        };
        let first = self.successors_eval(&s, &a)?;
        let dec = t.segment_decompose(&a)?;
        if dec.classes.is_empty() {
            return Ok(Some((first, self.successors_eval(&s, &a)?)));
        }
        let class = dec.classes.choose(rng).expect("nonempty").clone();
        let root = class.iter().find(|&x| t.parent(x).is_none_or(|p| a.contains(p))).expect("class root");
        let theory = theory_of(&t, &class, &s.marks, self.cfg.n)?;
        let budget = self.cfg.max_elements - (size - class.len());
        let Some(piece) = Self::pick_alternative(&self.rooted, rng, &theory, budget) else {
            return Ok(None);
        };
        let at = t.parent(root);
        let dropped: Vec<usize> = s.subtree(root);
        let s2 = s.replace(&dropped, piece, at);
        // the segment keeps its nodes; renumber through the kept order
        let kept: Vec<usize> = (0..s.len()).filter(|x| !dropped.contains(x)).collect();
        let a2: Subset = a.iter().map(|x| kept.iter().position(|&k| k == x).expect("segment kept")).collect();
        let second = self.successors_eval(&s2, &a2)?;
        Ok(Some((first, second)))
    }

    // ---- branches --------------------------------------------------------

    fn branches_eval(&self, s: &Sample, b: &Subset) -> Result<Evaluated> {
        let (n, m) = (self.cfg.n, self.cfg.m);
        let t = s.structure();
        let dec = t.branch_decompose(b)?;
        let mut hang_theories = Vec::new();
        for hang in dec.hangs.values() {
            hang_theories.push(theory_of(&t, hang, &s.marks, n)?);
        }
        let (present, mut tuple) = label_tuple(&hang_theories);
        let chain_ids: Vec<String> = {
            let mut v: Vec<usize> = b.iter().collect();
            v.sort_by_key(|&x| t.depth(x));
            // positions in the chain follow depth; hangs are keyed in canonical index order
            let pos: HashMap<usize, usize> = v.iter().enumerate().map(|(p, &x)| (x, p)).collect();
            let keys: Vec<usize> = dec.hangs.keys().copied().collect();
            tuple = tuple
                .iter()
                .map(|set| set.iter().map(|k| pos[&keys[k]]).collect())
                .collect();
            for mark in &s.marks {
                tuple.push(mark.iter().filter(|x| b.contains(*x)).map(|x| pos[&x]).collect());
            }
            v.iter().map(|&x| t.id(x).to_string()).collect()
        };
        let chain = FinStructure::chain(chain_ids.len());
        let branch_theory = compute_theory(&chain, &tuple, m)?;
        Ok(Evaluated {
            antecedent: Antecedent { parts: vec![branch_theory], labels: vec![(0, present)] },
            consequent: compute_theory(&t, &s.marks, n)?,
            record: json!({ "instance": s.record(), "branch": chain_ids }),
        })
    }

    fn random_branch(t: &FinStructure, rng: &mut ChaCha8Rng) -> Subset {
        let leaves: Vec<usize> = (0..t.len()).filter(|&x| t.children(x).is_empty()).collect();
        let leaf = *leaves.choose(rng).expect("nonempty tree has a leaf");
        let mut b: Subset = t.ancestors(leaf).into_iter().collect();
        b.insert(leaf);
        b
    }

    fn branches_trial(&self, rng: &mut ChaCha8Rng) -> Result<Option<(Evaluated, Evaluated)>> {
        let size = rng.gen_range(1..=self.cfg.max_elements);
        let s = random_tree(rng, size, MARK_ARITY);
        let t = s.structure();
        let b = Self::random_branch(&t, rng);
        let first = self.branches_eval(&s, &b)?;
        let dec = t.branch_decompose(&b)?;
        let (&eta, hang) = dec.hangs.iter().collect::<Vec<_>>().choose(rng).copied().expect("nonempty branch");
        let theory = theory_of(&t, hang, &s.marks, self.cfg.n)?;
        let budget = self.cfg.max_elements - (size - hang.len());
        let Some(piece) = Self::pick_alternative(&self.forests, rng, &theory, budget) else {
            return Ok(None);
        };
        let dropped: Vec<usize> = hang.iter().collect();
        let s2 = s.replace(&dropped, piece, Some(eta));
        let kept: Vec<usize> = (0..s.len()).filter(|x| !dropped.contains(x)).collect();
        let b2: Subset = b.iter().map(|x| kept.iter().position(|&k| k == x).expect("branch kept")).collect();
        let second = self.branches_eval(&s2, &b2)?;
        Ok(Some((first, second)))
    }

    // ---- chains ----------------------------------------------------------

    fn chains_all(&self) -> Result<(usize, usize, Vec<FdViolation>)> {
        let m = self.cfg.m;
        let mut checked = 0;
        let mut violations = Vec::new();
        for lc in 0..=3 {
            for ld in 0..=3 {
                for arity in 0..=1 {
                    let (c, d) = (FinStructure::chain(lc), FinStructure::chain(ld));
                    for ta in crate::theory::all_tuples(lc, arity) {
                        for tb in crate::theory::all_tuples(ld, arity) {
                            checked += 1;
                            let left = c.clone().with_tuple(&ta)?;
                            let joined = left.concat(&d.clone().with_tuple(&tb)?)?;
                            let whole = compute_theory_direct(&joined, &joined.predicate_tuple(), m)?;
                            let composed = sum(&compute_theory_direct(&c, &ta, m)?, &compute_theory_direct(&d, &tb, m)?)?;
                            if whole != composed {
                                violations.push(FdViolation {
                                    trial: checked,
                                    first: json!({ "left": lc, "right": ld, "tuple_left": masks(&ta), "tuple_right": masks(&tb) }),
                                    second: json!({ "whole": whole.content_hash(), "composed": composed.content_hash() }),
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok((checked, checked, violations))
    }

    // ---- binary grafts ---------------------------------------------------

    fn grafts_eval(&self, g: &GraftInstance) -> Result<Evaluated> {
        let (n, m) = (self.cfg.n, self.cfg.m);
        let words = g.spec_words();
        let tree = binary_fragment(&words)?;
        let marks: Vec<Subset> = g.marks_on(&tree)?;
        let base = binary_fragment(&g.base)?;
        let mut labels: Vec<Option<(u8, Theory)>> = vec![None; base.len()];
        let mut side_labels: Vec<Vec<Option<Theory>>> = vec![vec![None; base.len()]; 2];
        for ((x, d), graft) in &g.grafts {
            let th = graft.theory(n)?;
            let at = base.index_of(&format!("r{x}"))?;
            side_labels[*d as usize][at] = Some(th.clone());
            labels[at] = Some((*d, th));
        }
        let mut tuple: Vec<Subset> = g.base_marks().iter().map(|ws| word_subset(&base, ws)).collect::<Result<_>>()?;
        let mut present = Vec::new();
        for (side, lab) in side_labels.iter().enumerate() {
            let present_here: Vec<Theory> = {
                let mut v: Vec<Theory> = lab.iter().flatten().cloned().collect();
                v.sort();
                v.dedup();
                v
            };
            for th in &present_here {
                tuple.push((0..base.len()).filter(|&i| lab[i].as_ref() == Some(th)).collect());
            }
            present.push((side as u8, present_here));
        }
        let base_theory = compute_theory(&base, &tuple, m)?;
        Ok(Evaluated {
            antecedent: Antecedent { parts: vec![base_theory], labels: present },
            consequent: compute_theory(&tree, &marks, n)?,
            record: g.record(),
        })
    }

    fn grafts_trial(&self, rng: &mut ChaCha8Rng, pool: &HashMap<Theory, Vec<Graft>>) -> Result<Option<(Evaluated, Evaluated)>> {
        let g = GraftInstance::random(rng, self.cfg.max_elements);
        let first = self.grafts_eval(&g)?;
        if g.grafts.is_empty() {
            return Ok(Some((first, self.grafts_eval(&g)?)));
        }
        let keys: Vec<(String, u8)> = g.grafts.keys().cloned().collect();
        let key = keys.choose(rng).expect("nonempty").clone();
        let old = &g.grafts[&key];
        let th = old.theory(self.cfg.n)?;
        let budget = self.cfg.max_elements - (g.size() - old.words.len());
        let options: Vec<&Graft> = pool.get(&th).map(|v| v.iter().filter(|x| x.words.len() <= budget).collect()).unwrap_or_default();
        let Some(&replacement) = options.choose(rng) else { return Ok(None) };
        let mut g2 = g.clone();
        g2.grafts.insert(key, replacement.clone());
        Ok(Some((first, self.grafts_eval(&g2)?)))
    }

    // ---- embeddings ------------------------------------------------------

    fn embeddings_eval(&self, e: &EmbedInstance) -> Result<Evaluated> {
        let (n, m) = (self.cfg.n, self.cfg.m);
        let host = e.sample.structure();
        let frame = e.frame(&host)?;
        let bush = frame.bush_in_image(&e.antichain);
        let mut labels = Vec::new();
        for y in bush.iter() {
            let regions = frame.region_decompose(y)?;
            labels.push(regions.iter().map(|r| theory_of(&host, r, &e.sample.marks, n)).collect::<Result<Vec<_>>>()?);
        }
        let (present, label_sets) = label_tuple(&labels);
        let sub = host.induced(&bush);
        let mut tuple = vec![FinStructure::restrict_subset(&bush, &Subset::singleton(e.point))];
        tuple.extend(label_sets);
        let bush_theory = compute_theory(&sub, &tuple, m)?;
        let mut whole_tuple = vec![Subset::singleton(e.point), e.antichain.clone()];
        whole_tuple.extend(e.sample.marks.iter().cloned());
        Ok(Evaluated {
            antecedent: Antecedent {
                parts: vec![bush_theory],
                labels: present.into_iter().map(|l| (0, l)).collect(),
            },
            consequent: compute_theory(&host, &whole_tuple, n)?,
            record: e.record(&host),
        })
    }

    fn embeddings_trial(&self, rng: &mut ChaCha8Rng) -> Result<Option<(Evaluated, Evaluated)>> {
        let e = EmbedInstance::random(rng, self.cfg.max_elements);
        let first = self.embeddings_eval(&e)?;
        let second = match e.perturb(rng, self.cfg.max_elements) {
            Some(e2) => self.embeddings_eval(&e2)?,
            None => self.embeddings_eval(&e)?,
        };
        Ok(Some((first, second)))
    }
}

fn masks(t: &[Subset]) -> Vec<Vec<usize>> {
    t.iter().map(|s| s.as_slice().to_vec()).collect()
}

/// A graft: a binary tree fragment (containing the empty word) with marks.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Graft {
    words: std::collections::BTreeSet<String>,
    marks: Vec<Vec<String>>,
}

impl Graft {
    fn theory(&self, n: usize) -> Result<Theory> {
        let t = binary_fragment(&self.words)?;
        let marks: Vec<Subset> = self.marks.iter().map(|ws| word_subset(&t, ws)).collect::<Result<_>>()?;
        compute_theory(&t, &marks, n)
    }
}

/// Nodes of a binary fragment given by their words.
fn word_subset(t: &FinStructure, words: &[String]) -> Result<Subset> {
    let ids: Vec<String> = words.iter().map(|w| format!("r{w}")).collect();
    t.subset_of_ids(ids.iter().map(String::as_str))
}

fn prefix_closed_fragments(max: usize) -> Vec<std::collections::BTreeSet<String>> {
    let mut out = vec![[String::new()].into_iter().collect::<std::collections::BTreeSet<String>>()];
    let mut frontier = out.clone();
    while let Some(cur) = frontier.pop() {
        if cur.len() >= max {
            continue;
        }
        for w in cur.clone() {
            for d in ["0", "1"] {
                let c = format!("{w}{d}");
                if !cur.contains(&c) {
                    let mut next = cur.clone();
                    next.insert(c);
                    if !out.contains(&next) {
                        out.push(next.clone());
                        frontier.push(next);
                    }
                }
            }
        }
    }
    out
}

fn graft_pool(max: usize, n: usize) -> Result<HashMap<Theory, Vec<Graft>>> {
    let mut out: HashMap<Theory, Vec<Graft>> = HashMap::new();
    for words in prefix_closed_fragments(max) {
        let list: Vec<&String> = words.iter().collect();
        for mask in 0..1u64 << list.len() {
            let marks = vec![(0..list.len()).filter(|i| mask >> i & 1 == 1).map(|i| list[i].clone()).collect()];
            let g = Graft { words: words.clone(), marks };
            out.entry(g.theory(n)?).or_default().push(g);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
struct GraftInstance {
    base: std::collections::BTreeSet<String>,
    base_marks: Vec<Vec<String>>,
    grafts: BTreeMap<(String, u8), Graft>,
}

impl GraftInstance {
    fn random(rng: &mut ChaCha8Rng, max: usize) -> Self {
        let bases = prefix_closed_fragments(3);
        let base = bases.choose(rng).expect("nonempty").clone();
        let mut size = base.len();
        let mut grafts = BTreeMap::new();
        let frags = prefix_closed_fragments(2);
        for w in &base {
            for d in 0..2u8 {
                if base.contains(&format!("{w}{d}")) || !rng.gen_bool(0.5) {
                    continue;
                }
                let words = frags.choose(rng).expect("nonempty").clone();
                if size + words.len() > max {
                    continue;
                }
                size += words.len();
                let marks = vec![words.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect()];
                grafts.insert((w.clone(), d), Graft { words, marks });
            }
        }
        let base_marks = vec![base.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect()];
        GraftInstance { base, base_marks, grafts }
    }

    fn size(&self) -> usize {
        self.base.len() + self.grafts.values().map(|g| g.words.len()).sum::<usize>()
    }

    fn base_marks(&self) -> &[Vec<String>] {
        &self.base_marks
    }

    fn spec_words(&self) -> std::collections::BTreeSet<String> {
        let mut words = self.base.clone();
        for ((x, d), g) in &self.grafts {
            for y in &g.words {
                words.insert(format!("{x}{d}{y}"));
            }
        }
        words
    }

    fn marks_on(&self, tree: &FinStructure) -> Result<Vec<Subset>> {
        let mut words = self.base_marks[0].clone();
        for ((x, d), g) in &self.grafts {
            words.extend(g.marks[0].iter().map(|y| format!("{x}{d}{y}")));
        }
        Ok(vec![word_subset(tree, &words)?])
    }

    fn record(&self) -> Value {
        let grafts: Vec<Value> = self
            .grafts
            .iter()
            .map(|((x, d), g)| json!({ "node": x, "dir": d, "words": g.words, "marks": g.marks }))
            .collect();
        json!({ "base": self.base, "base_marks": self.base_marks, "grafts": grafts })
    }
}

#[derive(Clone, Debug)]
struct EmbedInstance {
    sample: Sample,
    // word -> host node
    frame_map: Vec<(String, usize)>,
    antichain: Subset,
    point: usize,
}

impl EmbedInstance {
    fn random(rng: &mut ChaCha8Rng, max: usize) -> Self {
        // image words: root alone, or a root with two children, optionally split again
        // every anchor must have frame children, as in a full binary embedding
        let mut words = vec![String::new(), "0".to_string(), "1".to_string()];
        {
            if max >= 5 && rng.gen_bool(0.4) {
                let w = if rng.gen_bool(0.5) { "0" } else { "1" };
                words.extend([format!("{w}0"), format!("{w}1")]);
            }
        }
        let mut parents: Vec<Option<usize>> = Vec::new();
        let mut frame_map = Vec::new();
        for w in &words {
            let p = if w.is_empty() {
                None
            } else {
                frame_map.iter().find(|(v, _)| *v == w[..w.len() - 1]).map(|(_, i)| *i)
            };
            parents.push(p);
            frame_map.push((w.clone(), parents.len() - 1));
        }
        let mut sample = Sample { parents, marks: vec![Subset::new()] };
        while sample.len() < max && rng.gen_bool(0.6) {
            sample = Self::grow(&sample, rng);
        }
        sample.marks = random_marks(rng, sample.len(), MARK_ARITY);
        let host = sample.structure();
        let internal: Vec<usize> = frame_map
            .iter()
            .filter(|(w, _)| frame_map.iter().any(|(v, _)| v.len() == w.len() + 1 && v.starts_with(w.as_str())))
            .map(|(_, i)| *i)
            .collect();
        let image = internal;
        let point = *image.choose(rng).expect("nonempty");
        let mut antichain = Subset::singleton(point);
        for &x in &image {
            if rng.gen_bool(0.5) && antichain.iter().all(|y| !host.comparable(x, y)) {
                antichain.insert(x);
            }
        }
        EmbedInstance { sample, frame_map, antichain, point }
    }

    /// Adds a pendant leaf or subdivides an edge; image nodes keep their indices.
    fn grow(s: &Sample, rng: &mut ChaCha8Rng) -> Sample {
        let mut parents = s.parents.clone();
        let new = parents.len();
        let target = rng.gen_range(0..new);
        if rng.gen_bool(0.5) || parents[target].is_none() {
            parents.push(Some(target));
        } else {
            parents.push(parents[target]);
            parents[target] = Some(new);
        }
        Sample { parents, marks: s.marks.clone() }
    }

    fn perturb(&self, rng: &mut ChaCha8Rng, max: usize) -> Option<EmbedInstance> {
        let mut e = self.clone();
        if e.sample.len() < max && rng.gen_bool(0.5) {
            let mut grown = Self::grow(&e.sample, rng);
            let extra = grown.len() - 1;
            grown.marks = e.sample.marks.clone();
            if rng.gen_bool(0.4) {
                grown.marks[0].insert(extra);
            }
            e.sample = grown;
        } else {
            let x = rng.gen_range(0..e.sample.len());
            let mut m = e.sample.marks[0].clone();
            if m.contains(x) {
                m = m.minus(&Subset::singleton(x));
            } else {
                m.insert(x);
            }
            e.sample.marks[0] = m;
        }
        Some(e)
    }

    fn frame(&self, host: &FinStructure) -> Result<EmbeddingFrame> {
        let pairs: Vec<(String, String)> =
            self.frame_map.iter().map(|(w, i)| (w.clone(), host.id(*i).to_string())).collect();
        EmbeddingFrame::new(host.clone(), &pairs)
    }

    fn record(&self, host: &FinStructure) -> Value {
        json!({
            "instance": self.sample.record(),
            "frame": self.frame_map.iter().map(|(w, i)| (w.clone(), host.id(*i).to_string())).collect::<BTreeMap<_, _>>(),
            "antichain": self.antichain.iter().map(|i| host.id(i)).collect::<Vec<_>>(),
            "point": host.id(self.point),
        })
    }
}

/// Samples instance pairs and records every pair whose antecedent data agree
/// while the depth-`n` theories of the whole structures differ.
pub fn verify_fd(cfg: &FdConfig) -> Result<FdReport> {
    let checker = Checker::new(cfg.clone())?;
    let mut report = FdReport {
        theorem: cfg.theorem.id().to_string(),
        n: cfg.n,
        m: cfg.m,
        seed: cfg.seed,
        trials: 0,
        comparable: 0,
        violations: Vec::new(),
    };
    if cfg.theorem == FdTheorem::Chains {
        let (trials, comparable, violations) = checker.chains_all()?;
        report.trials = trials;
        report.comparable = comparable;
        report.violations = violations;
        return Ok(report);
    }
    let grafts = if cfg.theorem == FdTheorem::BinaryGrafts { graft_pool(3, cfg.n)? } else { HashMap::new() };
    for trial in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(trial as u64));
        let pair = match cfg.theorem {
            FdTheorem::Successors => checker.successors_trial(&mut rng)?,
            FdTheorem::Branches => checker.branches_trial(&mut rng)?,
            FdTheorem::BinaryGrafts => checker.grafts_trial(&mut rng, &grafts)?,
            FdTheorem::Embeddings => checker.embeddings_trial(&mut rng)?,
            FdTheorem::Chains => unreachable!(),
        };
        report.trials += 1;
        let Some((a, b)) = pair else { continue };
        if a.antecedent == b.antecedent {
            report.comparable += 1;
            if a.consequent != b.consequent {
                report.violations.push(FdViolation { trial, first: a.record, second: b.record });
            }
        }
    }
    Ok(report)
}
