//! Tree ranks, tame/wild classification of symbolic trees, and definable
//! well orders: nested-sum chains and finite trees, each packaged as a
//! certificate that can be re-evaluated from its parameter sets alone.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scattered::{hdeg, realize_prefix, HdegTag, OrderTerm};
use crate::sexpr::{self, Sexp};
use crate::structures::{FinStructure, Kind, Subset};

// ---------------------------------------------------------------------------
// Ranks
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankMap(pub Vec<usize>);

impl RankMap {
    pub fn rank(&self, x: usize) -> usize {
        self.0[x]
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

/// `rk(η) ≥ α+1` iff two incomparable nodes above `η` both have rank `≥ α`.
/// On finite trees this is the larger of the children's ranks and one more
/// than the second largest.
pub fn rank_map(t: &FinStructure) -> Result<RankMap> {
    if t.kind() != Kind::Tree {
        return Err(Error::NotATree("ranks are defined on trees"));
    }
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by_key(|&x| std::cmp::Reverse(t.depth(x)));
    let mut rk = vec![0; t.len()];
    for x in order {
        let mut cs: Vec<usize> = t.children(x).iter().map(|&c| rk[c]).collect();
        cs.sort_unstable_by(|a, b| b.cmp(a));
        rk[x] = match cs.as_slice() {
            [] => 0,
            [a] => *a,
            [a, b, ..] => (*a).max(b + 1),
        };
    }
    Ok(RankMap(rk))
}

// ---------------------------------------------------------------------------
// Symbolic trees
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TreeTerm {
    Leaf,
    Node(Vec<TreeTerm>),
    /// A root with ω copies of the child.
    OmegaNode(Box<TreeTerm>),
    /// A chain of the given order type, with `hang` grafted above every point.
    Spine { spine: OrderTerm, hang: Option<Box<TreeTerm>> },
    /// A root whose ω successors start the catalog spines `C_1, C_2, ...`.
    GradedFan { starred: bool },
    /// The full binary tree.
    FullBinary,
}

impl TreeTerm {
    pub fn parse(src: &str) -> Result<TreeTerm> {
        tree_from_sexp(&sexpr::parse(src)?)
    }

    fn subterms(&self) -> Vec<&TreeTerm> {
        match self {
            TreeTerm::Node(ts) => ts.iter().collect(),
            TreeTerm::OmegaNode(t) => vec![t],
            TreeTerm::Spine { hang: Some(h), .. } => vec![h],
            _ => Vec::new(),
        }
    }

    pub fn subterm(&self, path: &[usize]) -> Option<&TreeTerm> {
        match path.split_first() {
            None => Some(self),
            Some((&i, rest)) => self.subterms().get(i)?.subterm(rest),
        }
    }

    /// Depth-first search for the first subterm satisfying `pred`.
    fn find(&self, pred: &dyn Fn(&TreeTerm) -> bool) -> Option<Vec<usize>> {
        if pred(self) {
            return Some(Vec::new());
        }
        for (i, s) in self.subterms().into_iter().enumerate() {
            if let Some(mut p) = s.find(pred) {
                p.insert(0, i);
                return Some(p);
            }
        }
        None
    }

    /// Materializes a finite term as a tree; spines must be finite.
    pub fn materialize(&self) -> Result<FinStructure> {
        let mut parents = Vec::new();
        self.build(None, &mut parents)?;
        FinStructure::tree_from_parents(&parents)
    }

    fn build(&self, parent: Option<usize>, parents: &mut Vec<Option<usize>>) -> Result<()> {
        let push = |p: Option<usize>, parents: &mut Vec<Option<usize>>| {
            parents.push(p);
            if parents.len() > 4096 {
                return Err(Error::BoundsExceeded("materialized tree over 4096 nodes".into()));
            }
            Ok(parents.len() - 1)
        };
        match self {
            TreeTerm::Leaf => {
                push(parent, parents)?;
            }
            TreeTerm::Node(ts) => {
                let me = push(parent, parents)?;
                for t in ts {
                    t.build(Some(me), parents)?;
                }
            }
            TreeTerm::Spine { spine: OrderTerm::Fin(k), hang } => {
                let mut below = parent;
                for _ in 0..*k {
                    let me = push(below, parents)?;
                    if let Some(h) = hang {
                        h.build(Some(me), parents)?;
                    }
                    below = Some(me);
                }
            }
            _ => return Err(Error::Precondition(format!("`{self}` is not finite"))),
        }
        Ok(())
    }
}

fn tree_from_sexp(s: &Sexp) -> Result<TreeTerm> {
    if let Some(a) = s.as_atom() {
        return match a {
            "leaf" => Ok(TreeTerm::Leaf),
            "fullbinary" => Ok(TreeTerm::FullBinary),
            _ => Err(Error::Parse(format!("unknown tree term `{a}`"))),
        };
    }
    let (head, args) = s.as_form().ok_or_else(|| Error::Parse(format!("malformed tree term `{s}`")))?;
    match (head, args) {
        ("node", ts) => Ok(TreeTerm::Node(ts.iter().map(tree_from_sexp).collect::<Result<_>>()?)),
        ("omeganode", [t]) => Ok(TreeTerm::OmegaNode(Box::new(tree_from_sexp(t)?))),
        ("spine", [o]) => Ok(TreeTerm::Spine { spine: OrderTerm::parse(&o.to_string())?, hang: None }),
        ("spine", [o, h]) => Ok(TreeTerm::Spine {
            spine: OrderTerm::parse(&o.to_string())?,
            hang: Some(Box::new(tree_from_sexp(h)?)),
        }),
        ("gradedfan", [Sexp::Atom(c)]) if c == "cn" => Ok(TreeTerm::GradedFan { starred: false }),
        ("gradedfan", [Sexp::Atom(c)]) if c == "cnstar" => Ok(TreeTerm::GradedFan { starred: true }),
        _ => Err(Error::Parse(format!("malformed tree term `{s}`"))),
    }
}

impl fmt::Display for TreeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeTerm::Leaf => f.write_str("leaf"),
            TreeTerm::FullBinary => f.write_str("fullbinary"),
            TreeTerm::Node(ts) => {
                f.write_str("(node")?;
                for t in ts {
                    write!(f, " {t}")?;
                }
                f.write_str(")")
            }
            TreeTerm::OmegaNode(t) => write!(f, "(omeganode {t})"),
            TreeTerm::Spine { spine, hang: None } => write!(f, "(spine {spine})"),
            TreeTerm::Spine { spine, hang: Some(h) } => write!(f, "(spine {spine} {h})"),
            TreeTerm::GradedFan { starred: false } => f.write_str("(gradedfan cn)"),
            TreeTerm::GradedFan { starred: true } => f.write_str("(gradedfan cnstar)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WildReason {
    /// Infinitely many `~¹` classes above some initial segment.
    I,
    /// A branch embeds the rationals.
    Ii,
    /// Scattered branches of unbounded Hausdorff degree.
    Iii,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Tame { n_star: usize, k_star: usize },
    Wild { reason: WildReason, witness: Vec<usize> },
    EmbedsBinary { witness: Vec<usize> },
}

impl Verdict {
    pub fn kind(&self) -> &'static str {
        match self {
            Verdict::Tame { .. } => "tame",
            Verdict::Wild { reason: WildReason::I, .. } => "wild(i)",
            Verdict::Wild { reason: WildReason::Ii, .. } => "wild(ii)",
            Verdict::Wild { reason: WildReason::Iii, .. } => "wild(iii)",
            Verdict::EmbedsBinary { .. } => "embeds_binary",
        }
    }

    pub fn witness(&self) -> Option<&[usize]> {
        match self {
            Verdict::Tame { .. } => None,
            Verdict::Wild { witness, .. } | Verdict::EmbedsBinary { witness } => Some(witness),
        }
    }
}

fn spine_tag(t: &TreeTerm) -> Option<HdegTag> {
    match t {
        TreeTerm::Spine { spine, .. } => Some(hdeg(spine)),
        _ => None,
    }
}

/// Sup of `|top(A)/~¹_A|` over initial segments, for terms without infinite fans.
fn class_sup(t: &TreeTerm) -> usize {
    match t {
        TreeTerm::Leaf | TreeTerm::FullBinary => 1,
        TreeTerm::Node(ts) => ts.iter().map(class_sup).chain([1, ts.len()]).max().unwrap_or(1),
        TreeTerm::Spine { spine, hang } => {
            let points = realize_prefix(spine, 2).len();
            match (points, hang) {
                (0, _) => 0,
                (_, None) => 1,
                (p, Some(h)) => class_sup(h).max(if p >= 2 { 2 } else { 1 }),
            }
        }
        TreeTerm::OmegaNode(_) | TreeTerm::GradedFan { .. } => usize::MAX,
    }
}

/// Order terms bounding every branch; exact except that infinite initial
/// segments of a hung spine are represented by the whole spine.
fn branch_terms(t: &TreeTerm) -> HashSet<OrderTerm> {
    let point = OrderTerm::Fin(1);
    match t {
        TreeTerm::Leaf | TreeTerm::FullBinary => [point].into(),
        TreeTerm::Node(ts) if ts.is_empty() => [point].into(),
        TreeTerm::Node(ts) => ts
            .iter()
            .flat_map(branch_terms)
            .map(|b| OrderTerm::Concat(vec![point.clone(), b]).normalize())
            .collect(),
        TreeTerm::Spine { spine, hang: None } => [spine.clone()].into(),
        TreeTerm::Spine { spine, hang: Some(h) } => {
            let mut out: HashSet<OrderTerm> = [spine.clone()].into();
            for b in branch_terms(h) {
                out.insert(OrderTerm::Concat(vec![spine.clone(), b.clone()]).normalize());
                out.insert(OrderTerm::Concat(vec![point.clone(), b]).normalize());
            }
            out
        }
        TreeTerm::OmegaNode(c) => branch_terms(c)
            .into_iter()
            .map(|b| OrderTerm::Concat(vec![point.clone(), b]).normalize())
            .collect(),
        TreeTerm::GradedFan { .. } => [OrderTerm::Graded { starred: false }].into(),
    }
}

pub fn classify(t: &TreeTerm) -> Verdict {
    if let Some(witness) = t.find(&|s| matches!(s, TreeTerm::FullBinary)) {
        return Verdict::EmbedsBinary { witness };
    }
    if let Some(witness) = t.find(&|s| matches!(s, TreeTerm::OmegaNode(_) | TreeTerm::GradedFan { .. })) {
        return Verdict::Wild { reason: WildReason::I, witness };
    }
    if let Some(witness) = t.find(&|s| spine_tag(s) == Some(HdegTag::NotScattered)) {
        return Verdict::Wild { reason: WildReason::Ii, witness };
    }
    if let Some(witness) = t.find(&|s| spine_tag(s) == Some(HdegTag::AtLeastOmega)) {
        return Verdict::Wild { reason: WildReason::Iii, witness };
    }
    let k_star = branch_terms(t)
        .iter()
        .map(|b| match hdeg(b) {
            HdegTag::Finite(d) => d,
            _ => unreachable!("non-finite spines are classified as wild"),
        })
        .max()
        .unwrap_or(0);
    Verdict::Tame { n_star: class_sup(t), k_star }
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "chain-3.3")]
    Chain,
    #[serde(rename = "tree-5.4")]
    Tree,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaEntry {
    pub word: Vec<usize>,
    pub parent: Option<usize>,
    pub branch: Vec<String>,
    /// Element of the parent branch the sub-branch breaks off from.
    pub break_point: Option<String>,
    /// Rank of the sub-branch's lowest element.
    pub gamma_rank: usize,
    pub color: usize,
    pub representative: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeTranscript {
    pub gamma: Vec<GammaEntry>,
    pub ranks: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainTranscript {
    /// Per element, its block index at each level, top level first, counted
    /// along the level's well order.
    pub paths: BTreeMap<String, Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellOrderCertificate {
    pub scheme: Scheme,
    /// Named parameter sets, as element ids.
    pub parameters: BTreeMap<String, Vec<String>>,
    /// Per level (level 1 first): whether the level's index order ascends.
    pub directions: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_star: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_star: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainTranscript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeTranscript>,
}

impl WellOrderCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(src: &str) -> Result<Self> {
        Ok(serde_json::from_str(src)?)
    }

    fn param(&self, t: &FinStructure, name: &str) -> Result<Subset> {
        let ids = self.parameters.get(name).ok_or_else(|| Error::Precondition(format!("missing parameter {name}")))?;
        t.subset_of_ids(ids.iter().map(String::as_str))
    }

    /// The synthesized order, evaluated from `t` and the parameter sets.
    pub fn evaluator<'a>(&'a self, t: &'a FinStructure) -> Result<Evaluator<'a>> {
        match self.scheme {
            Scheme::Chain => ChainEval::new(self, t).map(Evaluator::Chain),
            Scheme::Tree => TreeEval::new(self, t).map(Evaluator::Tree),
        }
    }

    /// Moves sub-branch `index` of the transcript into colour class `color`.
    pub fn recolor_branch(&mut self, index: usize, color: usize) -> Result<()> {
        let tr = self.tree.as_mut().ok_or_else(|| Error::Precondition("not a tree certificate".into()))?;
        let entry = tr.gamma.get_mut(index).ok_or_else(|| Error::Precondition(format!("no sub-branch {index}")))?;
        let old = entry.color;
        entry.color = color;
        let members: BTreeSet<String> = entry.branch.iter().cloned().collect();
        if let Some(d) = self.parameters.get_mut(&format!("D{old}")) {
            d.retain(|x| !members.contains(x));
        }
        let d = self.parameters.entry(format!("D{color}")).or_default();
        d.extend(members);
        d.sort();
        d.dedup();
        Ok(())
    }
}

pub enum Evaluator<'a> {
    Chain(ChainEval<'a>),
    Tree(TreeEval<'a>),
}

impl Evaluator<'_> {
    /// `x < y` in the synthesized order.
    pub fn less(&self, x: usize, y: usize) -> bool {
        match self {
            Evaluator::Chain(e) => e.less(x, y),
            Evaluator::Tree(e) => e.less(x, y),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Evaluator::Chain(e) => e.t.len(),
            Evaluator::Tree(e) => e.t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements sorted by the relation, when it is a strict total order.
    pub fn order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut below = vec![0usize; n];
        for x in 0..n {
            for y in 0..n {
                if x != y && self.less(y, x) {
                    below[x] += 1;
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&x| below[x]);
        let consistent = order.iter().enumerate().all(|(r, &x)| below[x] == r)
            && (0..n).all(|x| !self.less(x, x))
            && order.iter().enumerate().all(|(i, &x)| order[i + 1..].iter().all(|&y| self.less(x, y) && !self.less(y, x)));
        consistent.then_some(order)
    }
}

// ---------------------------------------------------------------------------
// Chains presented as nested sums
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Points(usize),
    Sum(Vec<Block>),
}

impl Block {
    fn depth(&self) -> Result<usize> {
        match self {
            Block::Points(k) if *k > 0 => Ok(1),
            Block::Points(_) => Err(Error::Precondition("empty block".into())),
            Block::Sum(parts) => {
                let ds: BTreeSet<usize> = parts.iter().map(Block::depth).collect::<Result<_>>()?;
                match ds.len() {
                    1 => Ok(1 + ds.into_iter().next().expect("one depth")),
                    0 => Err(Error::Precondition("empty sum".into())),
                    _ => Err(Error::Precondition("parts of a sum must share their nesting depth".into())),
                }
            }
        }
    }

    fn size(&self) -> usize {
        match self {
            Block::Points(k) => *k,
            Block::Sum(parts) => parts.iter().map(Block::size).sum(),
        }
    }
}

/// A finite chain given as a uniform nested sum with one direction per level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainPresentation {
    /// `directions[k - 1]`: whether level `k` sums ascend.
    pub directions: Vec<bool>,
    pub shape: Block,
}

impl ChainPresentation {
    /// The first `width` summands at every level of the catalog chain `C_n`
    /// (or `C_n*`).
    pub fn catalog(n: usize, starred: bool, width: usize) -> Result<ChainPresentation> {
        if n == 0 || width == 0 {
            return Err(Error::Precondition("need n ≥ 1 and width ≥ 1".into()));
        }
        if width.checked_pow(n as u32).is_none_or(|s| s > 1 << 16) {
            return Err(Error::BoundsExceeded(format!("{width}^{n} points")));
        }
        let mut shape = Block::Points(width);
        for _ in 1..n {
            shape = Block::Sum(vec![shape; width]);
        }
        // top level ascends for C_n; directions alternate downwards
        let directions = (1..=n).map(|k| ((n - k) % 2 == 0) != starred).collect();
        Ok(ChainPresentation { directions, shape })
    }

    pub fn degree(&self) -> Result<usize> {
        self.shape.depth()
    }

    pub fn size(&self) -> usize {
        self.shape.size()
    }

    pub fn chain(&self) -> FinStructure {
        FinStructure::chain(self.size())
    }

    /// Block index per level, top level first, in chain order of elements.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        fn walk(b: &Block, level: usize, dirs: &[bool], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            let asc = dirs[level - 1];
            match b {
                Block::Points(k) => {
                    for j in 0..*k {
                        let mut p = prefix.clone();
                        p.push(if asc { j } else { k - 1 - j });
                        out.push(p);
                    }
                }
                Block::Sum(parts) => {
                    for (i, part) in parts.iter().enumerate() {
                        prefix.push(if asc { i } else { parts.len() - 1 - i });
                        walk(part, level - 1, dirs, prefix, out);
                        prefix.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.shape, self.directions.len(), &self.directions, &mut Vec::new(), &mut out);
        out
    }
}

/// Well order of a nested-sum chain from `n - 1` parameter sets: `P_k` holds
/// the even-indexed level-`k` blocks.
pub fn synth_chain_wellorder(p: &ChainPresentation, n: usize) -> Result<WellOrderCertificate> {
    let depth = p.degree()?;
    if depth != n || p.directions.len() != n {
        return Err(Error::Precondition(format!(
            "declared degree {n} but the presentation nests {depth} levels with {} directions",
            p.directions.len()
        )));
    }
    let c = p.chain();
    let paths = p.paths();
    let mut parameters = BTreeMap::new();
    for k in 1..n {
        // paths are top level first: the level-(k+1) index sits at n - k - 1
        let members = (0..c.len()).filter(|&e| paths[e][n - k - 1] % 2 == 0).map(|e| c.id(e).to_string()).collect();
        parameters.insert(format!("P{k}"), members);
    }
    let paths = paths.into_iter().enumerate().map(|(e, path)| (c.id(e).to_string(), path)).collect();
    Ok(WellOrderCertificate {
        scheme: Scheme::Chain,
        parameters,
        directions: p.directions.clone(),
        n_star: None,
        k_star: None,
        chain: Some(ChainTranscript { paths }),
        tree: None,
    })
}

pub struct ChainEval<'a> {
    t: &'a FinStructure,
    dirs: &'a [bool],
    /// `params[k - 1][x]`: membership of `x` in `P_k`.
    params: Vec<Vec<bool>>,
    /// Elements in chain order and their positions.
    line: Vec<usize>,
    pos: Vec<usize>,
}

impl<'a> ChainEval<'a> {
    fn new(cert: &'a WellOrderCertificate, t: &'a FinStructure) -> Result<Self> {
        if t.kind() != Kind::Chain {
            return Err(Error::NotAChain("chain certificates evaluate on chains"));
        }
        let n = cert.directions.len();
        if n == 0 {
            return Err(Error::Precondition("a chain certificate needs at least one level".into()));
        }
        let params = (1..n)
            .map(|k| {
                let s = cert.param(t, &format!("P{k}"))?;
                Ok((0..t.len()).map(|x| s.contains(x)).collect())
            })
            .collect::<Result<_>>()?;
        let line = t.chain_order();
        let pos = (0..t.len()).map(|x| t.position(x)).collect();
        Ok(ChainEval { t, dirs: &cert.directions, params, line, pos })
    }

    /// The maximal run of `scope` (chain-ordered) around `x` with constant
    /// `P_k` membership.
    fn class(&self, scope: &[usize], k: usize, x: usize) -> Vec<usize> {
        let p = &self.params[k - 1];
        let i = scope.iter().position(|&e| e == x).expect("x in scope");
        let mut lo = i;
        while lo > 0 && p[scope[lo - 1]] == p[x] {
            lo -= 1;
        }
        let mut hi = i;
        while hi + 1 < scope.len() && p[scope[hi + 1]] == p[x] {
            hi += 1;
        }
        scope[lo..=hi].to_vec()
    }

    fn less(&self, x: usize, y: usize) -> bool {
        if x == y {
            return false;
        }
        let mut scope = self.line.clone();
        let mut level = self.dirs.len();
        while level > 1 {
            let cls = self.class(&scope, level - 1, x);
            if !cls.contains(&y) {
                break;
            }
            scope = cls;
            level -= 1;
        }
        (self.pos[x] < self.pos[y]) == self.dirs[level - 1]
    }
}

// ---------------------------------------------------------------------------
// Finite trees
// ---------------------------------------------------------------------------

struct GammaNode {
    word: Vec<usize>,
    parent: Option<usize>,
    region: Subset,
    branch: Vec<usize>,
    break_point: Option<usize>,
    color: usize,
}

/// Extends from `start` through a maximum-rank child, ties to the smaller index.
fn greedy_branch(t: &FinStructure, rk: &RankMap, start: usize) -> Vec<usize> {
    let mut b = vec![start];
    let mut cur = start;
    while let Some(&c) = t.children(cur).iter().max_by_key(|&&c| (rk.rank(c), std::cmp::Reverse(c))) {
        b.push(c);
        cur = c;
    }
    b
}

/// Partition into sub-branches indexed by a well-founded tree, colour classes
/// separating adjacent and same-place sibling sub-branches, and the
/// lexicographic order over it.
pub fn synth_tree_wellorder(t: &FinStructure) -> Result<WellOrderCertificate> {
    if t.kind() != Kind::Tree {
        return Err(Error::NotATree("tree synthesis needs a tree"));
    }
    let rk = rank_map(t)?;
    let mut gamma: Vec<GammaNode> = Vec::new();
    if !t.is_empty() {
        let first = *t.roots().iter().max_by_key(|&&r| (rk.rank(r), std::cmp::Reverse(r))).expect("nonempty");
        gamma.push(GammaNode {
            word: Vec::new(),
            parent: None,
            region: t.all(),
            branch: greedy_branch(t, &rk, first),
            break_point: None,
            color: 0,
        });
    }
    let mut next = 0;
    while next < gamma.len() {
        let (region, branch) = (gamma[next].region.clone(), gamma[next].branch.clone());
        let on_branch: Subset = branch.iter().copied().collect();
        let mut components: BTreeMap<usize, Subset> = BTreeMap::new();
        for x in region.iter().filter(|&x| !on_branch.contains(x)) {
            let mut root = x;
            while let Some(p) = t.parent(root) {
                if on_branch.contains(p) || !region.contains(p) {
                    break;
                }
                root = p;
            }
            components.entry(root).or_default().insert(x);
        }
        let depth_in = |r: usize| t.parent(r).filter(|p| on_branch.contains(*p)).map(|p| t.depth(p));
        let mut roots: Vec<usize> = components.keys().copied().collect();
        roots.sort_by_key(|&r| (depth_in(r), r));
        let parent_color = gamma[next].color;
        let mut used: BTreeMap<Option<usize>, usize> = BTreeMap::new();
        for (i, r) in roots.into_iter().enumerate() {
            let bp = t.parent(r).filter(|p| on_branch.contains(*p));
            // next free colour at this break point, skipping the parent's
            let slot = used.entry(bp).or_insert(0);
            let mut color = *slot;
            if color >= parent_color {
                color += 1;
            }
            *slot += 1;
            let mut word = gamma[next].word.clone();
            word.push(i);
            gamma.push(GammaNode {
                word,
                parent: Some(next),
                region: components.remove(&r).expect("component"),
                branch: greedy_branch(t, &rk, r),
                break_point: bp,
                color,
            });
        }
        next += 1;
    }
    let n_colors = gamma.iter().map(|g| g.color + 1).max().unwrap_or(1);
    let mut parameters: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for c in 0..n_colors {
        let mut d: Vec<String> =
            gamma.iter().filter(|g| g.color == c).flat_map(|g| g.branch.iter().map(|&x| t.id(x).to_string())).collect();
        d.sort();
        parameters.insert(format!("D{c}"), d);
    }
    let mut q: Vec<String> = gamma.iter().map(|g| t.id(g.branch[0]).to_string()).collect();
    q.sort();
    parameters.insert("Q".into(), q);
    parameters.insert("M".into(), gamma.first().map(|g| vec![t.id(g.branch[0]).to_string()]).unwrap_or_default());
    let transcript = TreeTranscript {
        gamma: gamma
            .iter()
            .map(|g| GammaEntry {
                word: g.word.clone(),
                parent: g.parent,
                branch: g.branch.iter().map(|&x| t.id(x).to_string()).collect(),
                break_point: g.break_point.map(|x| t.id(x).to_string()),
                gamma_rank: rk.rank(g.branch[0]),
                color: g.color,
                representative: t.id(g.branch[0]).to_string(),
            })
            .collect(),
        ranks: (0..t.len()).map(|x| (t.id(x).to_string(), rk.rank(x))).collect(),
    };
    let n_star = (0..t.len()).map(|x| t.children(x).len()).chain([t.roots().len()]).max().unwrap_or(0);
    Ok(WellOrderCertificate {
        scheme: Scheme::Tree,
        parameters,
        directions: vec![true],
        n_star: Some(n_star),
        k_star: Some(0),
        chain: None,
        tree: Some(transcript),
    })
}

/// Reconstructs sub-branches, their index tree and successor orders from
/// the colour classes `D_i`, the representatives `Q` and the marker `M`.
pub struct TreeEval<'a> {
    t: &'a FinStructure,
    /// Colour of each element; `None` if it lies in zero or several classes.
    color: Vec<Option<usize>>,
    /// Lowest element of each element's sub-branch.
    low: Vec<usize>,
    /// Index-tree path per sub-branch (keyed by lowest element), root first,
    /// each step carrying its successor-order key.
    path: BTreeMap<usize, Vec<(usize, (i64, usize))>>,
}

impl<'a> TreeEval<'a> {
    fn new(cert: &'a WellOrderCertificate, t: &'a FinStructure) -> Result<Self> {
        if t.kind() != Kind::Tree {
            return Err(Error::NotATree("tree certificates evaluate on trees"));
        }
        let mut color = vec![None; t.len()];
        let mut clash = vec![false; t.len()];
        for (name, ids) in &cert.parameters {
            let Some(c) = name.strip_prefix('D').and_then(|c| c.parse::<usize>().ok()) else { continue };
            for x in t.subset_of_ids(ids.iter().map(String::as_str))?.iter() {
                clash[x] |= color[x].is_some();
                color[x] = Some(c);
            }
        }
        for x in 0..t.len() {
            if clash[x] {
                color[x] = None;
            }
        }
        let q = cert.param(t, "Q")?;
        let m = cert.param(t, "M")?;
        // a sub-branch runs down while the colour stays constant
        let low: Vec<usize> = (0..t.len())
            .map(|x| {
                let mut z = x;
                while let Some(p) = t.parent(z) {
                    if color[p].is_none() || color[p] != color[x] {
                        break;
                    }
                    z = p;
                }
                z
            })
            .collect();
        let lows: BTreeSet<usize> = low.iter().copied().collect();
        let main = m.iter().next().map(|r| low[r]);
        let rep = |b: usize| -> Option<usize> {
            let mut reps = q.iter().filter(|&s| low[s] == b);
            let s = reps.next();
            if reps.next().is_some() { None } else { s }
        };
        let parent_of = |b: usize| -> Option<usize> {
            match t.parent(b) {
                Some(p) => Some(low[p]),
                None if Some(b) == main => None,
                None => main,
            }
        };
        let mut reps = BTreeMap::new();
        for &b in &lows {
            let s = rep(b).ok_or_else(|| {
                Error::Precondition(format!("Q needs exactly one element on the sub-branch starting at {}", t.id(b)))
            })?;
            reps.insert(b, s);
        }
        // successor key: depth of the break point (-1 for none), then colour
        let key = |b: usize, parent: usize| -> (i64, usize) {
            let s = reps[&b];
            let bp = t.ancestors(s).into_iter().find(|&a| low[a] == parent);
            (bp.map_or(-1, |a| t.depth(a) as i64), color[b].unwrap_or(usize::MAX))
        };
        let mut path = BTreeMap::new();
        for &b in &lows {
            let mut steps = Vec::new();
            let mut cur = b;
            let mut guard = 0;
            while let Some(p) = parent_of(cur) {
                steps.push((cur, key(cur, p)));
                cur = p;
                guard += 1;
                if guard > t.len() {
                    break;
                }
            }
            steps.push((cur, (-2, 0)));
            steps.reverse();
            path.insert(b, steps);
        }
        Ok(TreeEval { t, color, low, path })
    }

    fn less(&self, x: usize, y: usize) -> bool {
        if x == y {
            return false;
        }
        let (bx, by) = (self.low[x], self.low[y]);
        if bx == by {
            // clause (a): same sub-branch, ordered along it
            return self.t.lt(x, y);
        }
        let (px, py) = (&self.path[&bx], &self.path[&by]);
        let common = px.iter().zip(py).take_while(|(a, b)| a.0 == b.0).count();
        match (px.get(common), py.get(common)) {
            // clause (b): index of x below index of y
            (None, Some(_)) => true,
            (Some(_), None) => false,
            // clause (c): compare the successors of the meet
            (Some(a), Some(b)) => a.1 < b.1,
            (None, None) => false,
        }
    }

    pub fn same_branch(&self, x: usize, y: usize) -> bool {
        self.color[x].is_some() && self.low[x] == self.low[y]
    }
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub accepted: bool,
    pub violations: Vec<Violation>,
}

struct Checks(Vec<Violation>);

impl Checks {
    fn fail(&mut self, check: &str, detail: String) {
        self.0.push(Violation { check: check.into(), detail });
    }
}

pub fn verify_certificate(t: &FinStructure, c: &WellOrderCertificate) -> VerificationReport {
    let mut ck = Checks(Vec::new());
    for (name, ids) in &c.parameters {
        if let Some(bad) = ids.iter().find(|id| t.index_of(id).is_err()) {
            ck.fail("parameters", format!("{name} mentions unknown element {bad}"));
        }
    }
    if ck.0.is_empty() && !t.is_empty() {
        match c.evaluator(t) {
            Err(e) => ck.fail("evaluator", e.to_string()),
            Ok(ev) => {
                let order = ev.order();
                if order.is_none() {
                    ck.fail("total order", first_order_defect(&ev, t));
                }
                match (c.scheme, &c.chain, &c.tree) {
                    (Scheme::Chain, Some(tr), _) => verify_chain(t, c, tr, &ev, &mut ck),
                    (Scheme::Tree, _, Some(tr)) => {
                        if let Evaluator::Tree(te) = &ev {
                            verify_tree(t, c, tr, te, order.as_deref(), &mut ck);
                        }
                    }
                    _ => ck.fail("transcript", "missing transcript for the scheme".into()),
                }
            }
        }
    }
    VerificationReport { accepted: ck.0.is_empty(), violations: ck.0 }
}

fn first_order_defect(ev: &Evaluator<'_>, t: &FinStructure) -> String {
    let n = ev.len();
    for x in 0..n {
        if ev.less(x, x) {
            return format!("{} < {}", t.id(x), t.id(x));
        }
        for y in 0..n {
            if x != y && ev.less(x, y) == ev.less(y, x) {
                return format!("{} and {} are not strictly comparable", t.id(x), t.id(y));
            }
            for z in 0..n {
                if ev.less(x, y) && ev.less(y, z) && !ev.less(x, z) {
                    return format!("{} < {} < {} but not {} < {}", t.id(x), t.id(y), t.id(z), t.id(x), t.id(z));
                }
            }
        }
    }
    "relation is not a strict total order".into()
}

fn verify_chain(t: &FinStructure, c: &WellOrderCertificate, tr: &ChainTranscript, ev: &Evaluator<'_>, ck: &mut Checks) {
    let n = c.directions.len();
    if c.parameters.len() != n.saturating_sub(1) {
        ck.fail("parameter count", format!("{} sets for degree {n}", c.parameters.len()));
    }
    let mut paths = Vec::with_capacity(t.len());
    for x in 0..t.len() {
        match tr.paths.get(t.id(x)) {
            Some(p) if p.len() == n => paths.push(p.clone()),
            _ => {
                ck.fail("transcript", format!("no level path for {}", t.id(x)));
                return;
            }
        }
    }
    for x in 0..t.len() {
        for y in 0..t.len() {
            if x != y && ev.less(x, y) != (paths[x] < paths[y]) {
                ck.fail("block order", format!("{} vs {} disagrees with the presentation", t.id(x), t.id(y)));
                return;
            }
        }
    }
}

fn verify_tree(
    t: &FinStructure,
    c: &WellOrderCertificate,
    tr: &TreeTranscript,
    ev: &TreeEval<'_>,
    order: Option<&[usize]>,
    ck: &mut Checks,
) {
    let idx = |id: &str| t.index_of(id).ok();
    let rk = match rank_map(t) {
        Ok(r) => r,
        Err(e) => return ck.fail("ranks", e.to_string()),
    };
    let mut owner = vec![None; t.len()];
    let mut branches: Vec<Vec<usize>> = Vec::new();
    for (g, e) in tr.gamma.iter().enumerate() {
        let b: Option<Vec<usize>> = e.branch.iter().map(|id| idx(id)).collect();
        let Some(b) = b else { return ck.fail("transcript", format!("sub-branch {g} names unknown elements")) };
        for &x in &b {
            if owner[x].replace(g).is_some() {
                ck.fail("partition", format!("{} lies in two sub-branches", t.id(x)));
            }
        }
        if b.is_empty() || b.windows(2).any(|w| t.parent(w[1]) != Some(w[0])) {
            ck.fail("sub-branch", format!("sub-branch {g} is not a convex chain"));
        } else if !t.children(*b.last().expect("nonempty")).is_empty() {
            ck.fail("maximality", format!("sub-branch {g} stops below a leaf"));
        }
        branches.push(b);
    }
    if let Some(x) = (0..t.len()).find(|&x| owner[x].is_none()) {
        ck.fail("partition", format!("{} lies in no sub-branch", t.id(x)));
    }
    if !ck.0.is_empty() {
        return;
    }
    // index tree shape and the colouring constraints
    for (g, e) in tr.gamma.iter().enumerate() {
        let low = branches[g][0];
        if e.word.len() > t.len() {
            ck.fail("well-founded", format!("index of sub-branch {g} is longer than the tree"));
        }
        match e.parent {
            None if g != 0 => ck.fail("index tree", format!("sub-branch {g} has no parent index")),
            None => {
                if e.color != 0 {
                    ck.fail("colouring", "the first sub-branch must carry colour 0".into());
                }
            }
            Some(p) if p >= g => ck.fail("index tree", format!("sub-branch {g} precedes its parent")),
            Some(p) => {
                let expected = t.parent(low).filter(|&q| owner[q] == Some(p));
                if expected.is_none() && (p != 0 || t.parent(low).is_some()) {
                    ck.fail("index tree", format!("sub-branch {g} does not break off sub-branch {p}"));
                }
                if expected.map(|x| t.id(x).to_string()) != e.break_point {
                    ck.fail("break point", format!("sub-branch {g} records the wrong break point"));
                }
                if tr.gamma[p].color == e.color {
                    ck.fail("colouring", format!("sub-branch {g} shares its parent's colour {}", e.color));
                }
                if let Some(s) = tr.gamma[..g]
                    .iter()
                    .position(|o| o.parent == Some(p) && o.break_point == e.break_point && o.color == e.color)
                {
                    ck.fail("colouring", format!("sub-branches {s} and {g} break off at the same place with colour {}", e.color));
                }
                // the sub-branch holds every element of its region at the top rank
                let top = rk.rank(low);
                if e.gamma_rank != top {
                    ck.fail("proviso", format!("sub-branch {g} records rank {} instead of {top}", e.gamma_rank));
                }
                let region: Vec<usize> = t.subtree_at(low).iter().filter(|&x| owner[x].is_some_and(|o| o >= g)).collect();
                if let Some(&x) = region.iter().find(|&&x| rk.rank(x) == top && owner[x] != Some(g)) {
                    ck.fail("proviso", format!("{} has rank {top} but lies off sub-branch {g}", t.id(x)));
                }
                if p != 0 && top >= tr.gamma[p].gamma_rank {
                    ck.fail("proviso", format!("rank does not drop from sub-branch {p} to {g}"));
                }
            }
        }
        let key = format!("D{}", e.color);
        let class = c.parameters.get(&key).map(|d| d.iter().map(String::as_str).collect::<BTreeSet<_>>());
        if !class.is_some_and(|d| e.branch.iter().all(|x| d.contains(x.as_str()))) {
            ck.fail("colouring", format!("sub-branch {g} is not inside {key}"));
        }
        if idx(&e.representative).is_none_or(|s| owner[s] != Some(g)) {
            ck.fail("representatives", format!("representative of sub-branch {g} lies elsewhere"));
        }
        if g == 0 && c.parameters.get("M").is_none_or(|m| *m != [e.representative.clone()]) {
            ck.fail("marker", format!("M must hold exactly {}, the lowest element of the main branch", e.representative));
        }
        if !c.parameters.get("Q").is_some_and(|q| q.contains(&e.representative)) {
            ck.fail("representatives", format!("representative {} of sub-branch {g} is missing from Q", e.representative));
        }
    }
    // same-branch test agrees with the partition
    'pairs: for x in 0..t.len() {
        for y in x + 1..t.len() {
            if ev.same_branch(x, y) != (owner[x] == owner[y]) {
                ck.fail("same-branch test", format!("{} and {} are misclassified", t.id(x), t.id(y)));
                break 'pairs;
            }
        }
    }
    let Some(order) = order else { return };
    let mut pos = vec![0; t.len()];
    for (r, &x) in order.iter().enumerate() {
        pos[x] = r;
    }
    for (g, b) in branches.iter().enumerate() {
        let (lo, hi) = (b.iter().map(|&x| pos[x]).min().unwrap_or(0), b.iter().map(|&x| pos[x]).max().unwrap_or(0));
        if hi - lo + 1 != b.len() || b.windows(2).any(|w| pos[w[0]] > pos[w[1]]) {
            ck.fail("convexity", format!("sub-branch {g} is not a well-ordered interval"));
        }
    }
    let ancestor = |a: usize, mut b: usize| {
        while let Some(p) = tr.gamma[b].parent {
            if p == a {
                return true;
            }
            b = p;
        }
        false
    };
    for g in 0..branches.len() {
        for h in 0..branches.len() {
            if ancestor(g, h) && pos[branches[g][branches[g].len() - 1]] > pos[branches[h][0]] {
                ck.fail("clause (b)", format!("sub-branch {g} does not precede its descendant {h}"));
            }
        }
    }
    for (g, e) in tr.gamma.iter().enumerate() {
        for (h, f) in tr.gamma.iter().enumerate().skip(g + 1) {
            if e.parent.is_some() && e.parent == f.parent {
                let depth = |bp: &Option<String>| bp.as_deref().and_then(idx).map_or(-1, |x| t.depth(x) as i64);
                let before = (depth(&e.break_point), e.color) < (depth(&f.break_point), f.color);
                if (pos[branches[g][0]] < pos[branches[h][0]]) != before {
                    ck.fail("clause (c)", format!("sibling sub-branches {g} and {h} are out of successor order"));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_of_small_trees() {
        assert_eq!(rank_map(&FinStructure::tree_from_parents(&[None, Some(0), Some(1)]).unwrap()).unwrap().0, [0, 0, 0]);
        let star = FinStructure::tree_from_parents(&[None, Some(0), Some(0), Some(0)]).unwrap();
        assert_eq!(rank_map(&star).unwrap().rank(0), 1);
        let bin = FinStructure::tree_from_parents(&[None, Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)]).unwrap();
        assert_eq!(rank_map(&bin).unwrap().rank(0), 2);
    }

    #[test]
    fn classify_examples() {
        let c = |s: &str| classify(&TreeTerm::parse(s).unwrap());
        assert_eq!(c("fullbinary").kind(), "embeds_binary");
        assert_eq!(c("(spine rational)").kind(), "wild(ii)");
        assert_eq!(c("(omeganode leaf)").kind(), "wild(i)");
        assert_eq!(c("(node leaf leaf)"), Verdict::Tame { n_star: 2, k_star: 0 });
        assert_eq!(c("(spine (graded cn))").kind(), "wild(iii)");
        assert_eq!(c("(spine omega leaf)"), Verdict::Tame { n_star: 2, k_star: 1 });
        assert_eq!(c("(spine omegastar (spine omega))"), Verdict::Tame { n_star: 2, k_star: 2 });
        let v = c("(node leaf (node (spine rational)))");
        let w = v.witness().unwrap();
        assert_eq!(TreeTerm::parse("(node leaf (node (spine rational)))").unwrap().subterm(w).unwrap().to_string(), "(spine rational)");
    }

    #[test]
    fn chain_certificate_for_two_levels() {
        let p = ChainPresentation::catalog(2, false, 3).unwrap();
        let cert = synth_chain_wellorder(&p, 2).unwrap();
        assert_eq!(cert.parameters["P1"], ["c0", "c1", "c2", "c6", "c7", "c8"]);
        let c = p.chain();
        let order = cert.evaluator(&c).unwrap().order().unwrap();
        assert_eq!(order, [2, 1, 0, 5, 4, 3, 8, 7, 6]);
        assert!(verify_certificate(&c, &cert).accepted);
        assert!(synth_chain_wellorder(&p, 3).is_err());
    }

    #[test]
    fn tree_certificate_for_a_fork() {
        let t = FinStructure::tree_from_parents(&[None, Some(0), Some(0)]).unwrap();
        let cert = synth_tree_wellorder(&t).unwrap();
        assert_eq!(cert.tree.as_ref().unwrap().gamma.len(), 2);
        let order = cert.evaluator(&t).unwrap().order().unwrap();
        assert_eq!(order, [0, 1, 2]);
        let r = verify_certificate(&t, &cert);
        assert!(r.accepted, "{:?}", r.violations);
    }
}
