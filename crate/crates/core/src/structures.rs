//! Finite chains, trees and pure sets carrying a tuple of named subsets,
//! together with the structural decompositions the composition theorems use.
//!
//! Elements are opaque string ids. Internally every element is addressed by
//! its index in the lexicographically sorted id list, which fixes a canonical
//! element order for enumeration and serialization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Chain,
    Tree,
    Set,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Chain => "chain",
            Kind::Tree => "tree",
            Kind::Set => "set",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of element indices, kept sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new() -> Self {
        Subset(Vec::new())
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(it: I) -> Self {
        let mut v: Vec<usize> = it.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Subset(v)
    }

    pub fn from_mask(mask: u64) -> Self {
        Subset((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn singleton(i: usize) -> Self {
        Subset(vec![i])
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn insert(&mut self, i: usize) {
        if let Err(pos) = self.0.binary_search(&i) {
            self.0.insert(pos, i);
        }
    }

    pub fn union(&self, other: &Subset) -> Subset {
        Subset::from_indices(self.iter().chain(other.iter()))
    }

    pub fn intersect(&self, other: &Subset) -> Subset {
        Subset(self.iter().filter(|&i| other.contains(i)).collect())
    }

    pub fn minus(&self, other: &Subset) -> Subset {
        Subset(self.iter().filter(|&i| !other.contains(i)).collect())
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    /// Bitmask form; `None` if an index does not fit in 64 bits.
    pub fn mask(&self) -> Option<u64> {
        self.iter()
            .try_fold(0u64, |m, i| if i < 64 { Some(m | 1 << i) } else { None })
    }
}

impl FromIterator<usize> for Subset {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Subset::from_indices(iter)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub name: String,
    pub members: Subset,
}

/// A finite chain, tree or pure set with an ordered tuple of named subsets.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FinStructure {
    kind: Kind,
    ids: Vec<String>,
    // chain: position in the order; unused otherwise
    position: Vec<usize>,
    // tree: parent; chain: predecessor; set: always None
    parent: Vec<Option<usize>>,
    predicates: Vec<Predicate>,
}

/// The intersection `x ∧ y` of two tree elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Meet {
    Element(usize),
    /// Common initial segment of both ancestor chains, listed bottom-up.
    Segment(Vec<usize>),
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureFile {
    pub kind: Kind,
    pub elements: Vec<String>,
    #[serde(default)]
    pub order: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub predicates: Vec<PredicateFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateFile {
    pub name: String,
    pub members: Vec<String>,
}

fn padded_ids(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

impl FinStructure {
    fn from_parts(
        kind: Kind,
        ids: Vec<String>,
        position: Vec<usize>,
        parent: Vec<Option<usize>>,
    ) -> Self {
        FinStructure { kind, ids, position, parent, predicates: Vec::new() }
    }

    fn index_map(ids: &[String]) -> Result<HashMap<&str, usize>> {
        let mut map = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if map.insert(id.as_str(), i).is_some() {
                return Err(Error::InvalidStructure(format!("duplicate element `{id}`")));
            }
        }
        Ok(map)
    }

    /// A chain whose order is the order of `ids_in_order`.
    pub fn chain_from_ids(ids_in_order: Vec<String>) -> Result<Self> {
        let ranks: Vec<(String, usize)> =
            ids_in_order.into_iter().enumerate().map(|(r, id)| (id, r)).collect();
        Self::chain_with_ranks(&ranks)
    }

    /// The `n`-element chain `c0 < c1 < ...` with zero-padded ids.
    pub fn chain(n: usize) -> Self {
        Self::chain_from_ids(padded_ids("c", n)).expect("generated ids are distinct")
    }

    pub fn chain_with_ranks(ranks: &[(String, usize)]) -> Result<Self> {
        let mut ids: Vec<String> = ranks.iter().map(|(id, _)| id.clone()).collect();
        ids.sort();
        let index = Self::index_map(&ids)?;
        let mut by_rank: Vec<(usize, usize)> =
            ranks.iter().map(|(id, r)| (*r, index[id.as_str()])).collect();
        by_rank.sort();
        if by_rank.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidStructure("chain ranks must be distinct".into()));
        }
        let n = ids.len();
        let mut position = vec![0; n];
        let mut parent = vec![None; n];
        for (pos, &(_, idx)) in by_rank.iter().enumerate() {
            position[idx] = pos;
            if pos > 0 {
                parent[idx] = Some(by_rank[pos - 1].1);
            }
        }
        Ok(Self::from_parts(Kind::Chain, ids, position, parent))
    }

    /// A pure set (no order).
    pub fn set(ids: Vec<String>) -> Result<Self> {
        let mut ids = ids;
        ids.sort();
        Self::index_map(&ids)?;
        let n = ids.len();
        Ok(Self::from_parts(Kind::Set, ids, vec![0; n], vec![None; n]))
    }

    pub fn pure_set(n: usize) -> Self {
        Self::set(padded_ids("a", n)).expect("generated ids are distinct")
    }

    /// A tree given by `(child, parent)` pairs; elements absent as a child are roots.
    pub fn tree(ids: Vec<String>, edges: &[(String, String)]) -> Result<Self> {
        let mut ids = ids;
        ids.sort();
        let index = Self::index_map(&ids)?;
        let mut parent = vec![None; ids.len()];
        for (child, par) in edges {
            let c = *index.get(child.as_str()).ok_or_else(|| Error::UnknownElement(child.clone()))?;
            let p = *index.get(par.as_str()).ok_or_else(|| Error::UnknownElement(par.clone()))?;
            if parent[c].is_some() {
                return Err(Error::InvalidStructure(format!("`{child}` has two parents")));
            }
            parent[c] = Some(p);
        }
        for start in 0..ids.len() {
            let mut cur = parent[start];
            let mut steps = 0;
            while let Some(p) = cur {
                if p == start || steps > ids.len() {
                    return Err(Error::Cycle(ids[start].clone()));
                }
                steps += 1;
                cur = parent[p];
            }
        }
        let n = ids.len();
        Ok(Self::from_parts(Kind::Tree, ids, vec![0; n], parent))
    }

    /// A tree on `0..n` from a parent vector indexed by generated ids `t0, t1, ...`.
    pub fn tree_from_parents(parents: &[Option<usize>]) -> Result<Self> {
        let ids = padded_ids("t", parents.len());
        let edges: Vec<(String, String)> = parents
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (ids[c].clone(), ids[p].clone())))
            .collect();
        Self::tree(ids, &edges)
    }

    /// Parses and validates a structure file.
    pub fn from_file(file: &StructureFile) -> Result<Self> {
        let mut s = match file.kind {
            Kind::Chain => {
                let mut ranks = Vec::new();
                for id in &file.elements {
                    let v = file
                        .order
                        .get(id)
                        .ok_or_else(|| Error::InvalidStructure(format!("no rank for `{id}`")))?;
                    let r = v.as_u64().ok_or_else(|| {
                        Error::InvalidStructure(format!("rank of `{id}` must be a natural number"))
                    })?;
                    ranks.push((id.clone(), r as usize));
                }
                if let Some(k) = file.order.keys().find(|k| !file.elements.contains(k)) {
                    return Err(Error::UnknownElement(k.clone()));
                }
                Self::chain_with_ranks(&ranks)?
            }
            Kind::Tree => {
                let mut edges = Vec::new();
                for (child, par) in &file.order {
                    let p = par.as_str().ok_or_else(|| {
                        Error::InvalidStructure(format!("parent of `{child}` must be a string"))
                    })?;
                    edges.push((child.clone(), p.to_string()));
                }
                Self::tree(file.elements.clone(), &edges)?
            }
            Kind::Set => {
                if !file.order.is_empty() {
                    return Err(Error::InvalidStructure("a set carries no order".into()));
                }
                Self::set(file.elements.clone())?
            }
        };
        for p in &file.predicates {
            let members = s.subset_of_ids(p.members.iter().map(String::as_str))?;
            s.predicates.push(Predicate { name: p.name.clone(), members });
        }
        Ok(s)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let file: StructureFile = serde_json::from_str(src)?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> StructureFile {
        let order = match self.kind {
            Kind::Chain => self
                .ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), serde_json::Value::from(self.position[i])))
                .collect(),
            Kind::Tree => self
                .parent
                .iter()
                .enumerate()
                .filter_map(|(c, p)| {
                    p.map(|p| (self.ids[c].clone(), serde_json::Value::from(self.ids[p].clone())))
                })
                .collect(),
            Kind::Set => BTreeMap::new(),
        };
        StructureFile {
            kind: self.kind,
            elements: self.ids.clone(),
            order,
            predicates: self
                .predicates
                .iter()
                .map(|p| PredicateFile {
                    name: p.name.clone(),
                    members: p.members.iter().map(|i| self.ids[i].clone()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("structure files always serialize")
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }

    // -----------------------------------------------------------------------
    // Accessors
    // -----------------------------------------------------------------------

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .map_err(|_| Error::UnknownElement(id.to_string()))
    }

    pub fn subset_of_ids<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I) -> Result<Subset> {
        ids.into_iter().map(|id| self.index_of(id)).collect::<Result<Subset>>()
    }

    pub fn all(&self) -> Subset {
        Subset((0..self.len()).collect())
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn predicate_tuple(&self) -> Vec<Subset> {
        self.predicates.iter().map(|p| p.members.clone()).collect()
    }

    /// Replaces the predicate tuple. Members must be element indices.
    pub fn with_predicates(mut self, preds: Vec<(String, Subset)>) -> Result<Self> {
        for (name, members) in &preds {
            if members.iter().any(|i| i >= self.len()) {
                return Err(Error::InvalidStructure(format!("predicate `{name}` has foreign members")));
            }
        }
        self.predicates =
            preds.into_iter().map(|(name, members)| Predicate { name, members }).collect();
        Ok(self)
    }

    /// Convenience: predicates named `P0, P1, ...`.
    pub fn with_tuple(self, tuple: &[Subset]) -> Result<Self> {
        let preds = tuple.iter().enumerate().map(|(i, s)| (format!("P{i}"), s.clone())).collect();
        self.with_predicates(preds)
    }

    /// Immediate predecessor: tree parent or chain predecessor.
    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parent[c] == Some(i)).collect()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parent[c].is_none()).collect()
    }

    pub fn root(&self) -> Option<usize> {
        match self.roots().as_slice() {
            [r] => Some(*r),
            _ => None,
        }
    }

    /// Chain position; meaningful for chains only.
    pub fn position(&self, i: usize) -> usize {
        self.position[i]
    }

    /// Elements listed in chain order (chains) or canonical order (otherwise).
    pub fn chain_order(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.len()).collect();
        if self.kind == Kind::Chain {
            v.sort_by_key(|&i| self.position[i]);
        }
        v
    }

    /// Strict ancestors of `i`, bottom-up (root last).
    pub fn ancestors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.parent[i];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent[p];
        }
        out
    }

    pub fn depth(&self, i: usize) -> usize {
        self.ancestors(i).len()
    }

    /// The tree order `◁` read as "smaller than or equal".
    pub fn leq(&self, i: usize, j: usize) -> bool {
        match self.kind {
            Kind::Chain => self.position[i] <= self.position[j],
            Kind::Set => i == j,
            Kind::Tree => {
                if i == j {
                    return true;
                }
                let mut cur = self.parent[j];
                while let Some(p) = cur {
                    if p == i {
                        return true;
                    }
                    cur = self.parent[p];
                }
                false
            }
        }
    }

    pub fn lt(&self, i: usize, j: usize) -> bool {
        i != j && self.leq(i, j)
    }

    pub fn comparable(&self, i: usize, j: usize) -> bool {
        self.leq(i, j) || self.leq(j, i)
    }

    /// `T_{≥η}`.
    pub fn subtree_at(&self, i: usize) -> Subset {
        (0..self.len()).filter(|&j| self.leq(i, j)).collect()
    }

    /// The substructure induced on `keep`, with predicates intersected.
    /// Trees keep the induced order (parent = nearest kept ancestor).
    pub fn induced(&self, keep: &Subset) -> FinStructure {
        let old: Vec<usize> = keep.iter().collect();
        let new_index: HashMap<usize, usize> = old.iter().enumerate().map(|(n, &o)| (o, n)).collect();
        let ids: Vec<String> = old.iter().map(|&o| self.ids[o].clone()).collect();
        let n = ids.len();
        let mut out = match self.kind {
            Kind::Set => Self::from_parts(Kind::Set, ids, vec![0; n], vec![None; n]),
            Kind::Chain => {
                let mut by_pos: Vec<usize> = (0..n).collect();
                by_pos.sort_by_key(|&k| self.position[old[k]]);
                let mut position = vec![0; n];
                let mut parent = vec![None; n];
                for (pos, &k) in by_pos.iter().enumerate() {
                    position[k] = pos;
                    if pos > 0 {
                        parent[k] = Some(by_pos[pos - 1]);
                    }
                }
                Self::from_parts(Kind::Chain, ids, position, parent)
            }
            Kind::Tree => {
                let parent = old
                    .iter()
                    .map(|&o| self.ancestors(o).into_iter().find_map(|a| new_index.get(&a).copied()))
                    .collect();
                Self::from_parts(Kind::Tree, ids, vec![0; n], parent)
            }
        };
        out.predicates = self
            .predicates
            .iter()
            .map(|p| Predicate {
                name: p.name.clone(),
                members: p.members.iter().filter_map(|i| new_index.get(&i).copied()).collect(),
            })
            .collect();
        out
    }

    /// Restricts an arbitrary subset of `self` to the index space of `self.induced(keep)`.
    pub fn restrict_subset(keep: &Subset, s: &Subset) -> Subset {
        keep.iter().enumerate().filter(|&(_, o)| s.contains(o)).map(|(n, _)| n).collect()
    }

    /// Concatenation `self + other` of two chains, predicates unioned positionally.
    pub fn concat(&self, other: &FinStructure) -> Result<FinStructure> {
        if self.kind != Kind::Chain {
            return Err(Error::NotAChain(self.kind.name()));
        }
        if other.kind != Kind::Chain {
            return Err(Error::NotAChain(other.kind.name()));
        }
        if self.predicates.len() != other.predicates.len() {
            return Err(Error::ArityMismatch {
                expected: self.predicates.len(),
                got: other.predicates.len(),
            });
        }
        let total = self.len() + other.len();
        let ids = padded_ids("c", total);
        let left = self.chain_order();
        let right = other.chain_order();
        let mut out = FinStructure::chain_from_ids(ids)?;
        let mut preds = Vec::new();
        for (k, p) in self.predicates.iter().enumerate() {
            let mut members = Subset::new();
            for (pos, &e) in left.iter().enumerate() {
                if p.members.contains(e) {
                    members.insert(pos);
                }
            }
            for (pos, &e) in right.iter().enumerate() {
                if other.predicates[k].members.contains(e) {
                    members.insert(self.len() + pos);
                }
            }
            preds.push((p.name.clone(), members));
        }
        out = out.with_predicates(preds)?;
        Ok(out)
    }

    // -----------------------------------------------------------------------
    // Tree operations
    // -----------------------------------------------------------------------

    pub fn meet(&self, x: usize, y: usize) -> Meet {
        if self.leq(x, y) {
            return Meet::Element(x);
        }
        if self.leq(y, x) {
            return Meet::Element(y);
        }
        let ax = self.ancestors(x);
        let ay: BTreeSet<usize> = self.ancestors(y).into_iter().collect();
        match ax.iter().find(|a| ay.contains(a)) {
            Some(&m) => Meet::Element(m),
            None => Meet::Segment(Vec::new()),
        }
    }

    /// Downward closed and linearly ordered.
    pub fn check_initial_segment(&self, a: &Subset) -> Result<()> {
        if a.iter().any(|i| i >= self.len()) {
            return Err(Error::NotInitialSegment("foreign element".into()));
        }
        for x in a.iter() {
            for y in a.iter() {
                if !self.comparable(x, y) {
                    return Err(Error::NotInitialSegment(format!(
                        "`{}` and `{}` are incomparable",
                        self.ids[x], self.ids[y]
                    )));
                }
            }
            for z in 0..self.len() {
                if self.leq(z, x) && !a.contains(z) {
                    return Err(Error::NotInitialSegment(format!(
                        "`{}` lies below `{}` but is missing",
                        self.ids[z], self.ids[x]
                    )));
                }
            }
        }
        Ok(())
    }

    /// `x` is above `A`: `x ∉ A` and every element of `A` is below `x`.
    pub fn is_above(&self, a: &Subset, x: usize) -> bool {
        !a.contains(x) && a.iter().all(|t| self.leq(t, x))
    }

    /// For `x ∉ A` (A an initial segment), the lowest ancestor-or-self of `x`
    /// outside `A`; two elements are `~¹_A`-equivalent iff these coincide.
    pub fn one_class_root(&self, a: &Subset, x: usize) -> usize {
        let mut root = x;
        for anc in self.ancestors(x) {
            if a.contains(anc) {
                break;
            }
            root = anc;
        }
        root
    }

    /// The `~¹_A` classes of all of `T \ A`, keyed by class root, in canonical order.
    pub fn one_classes(&self, a: &Subset) -> BTreeMap<usize, Subset> {
        let mut classes: BTreeMap<usize, Subset> = BTreeMap::new();
        for x in (0..self.len()).filter(|&x| !a.contains(x)) {
            classes.entry(self.one_class_root(a, x)).or_default().insert(x);
        }
        classes
    }

    pub fn segment_decompose(&self, a: &Subset) -> Result<SegmentDecomposition> {
        self.check_initial_segment(a)?;
        let above: Vec<usize> = (0..self.len()).filter(|&x| self.is_above(a, x)).collect();
        let below: Subset = (0..self.len()).filter(|&x| !self.is_above(a, x)).collect();
        let mut by_root: BTreeMap<usize, Subset> = BTreeMap::new();
        for &x in &above {
            by_root.entry(self.one_class_root(a, x)).or_default().insert(x);
        }
        let classes: Vec<Subset> = by_root.into_values().collect();
        let mut class_index = BTreeMap::new();
        for (ci, c) in classes.iter().enumerate() {
            for x in c.iter() {
                class_index.insert(x, ci);
            }
        }
        Ok(SegmentDecomposition { segment: a.clone(), below, classes, class_index })
    }

    /// Convex and linearly ordered.
    pub fn is_sub_branch(&self, b: &Subset) -> bool {
        for x in b.iter() {
            for y in b.iter() {
                if !self.comparable(x, y) {
                    return false;
                }
                if self.lt(x, y) {
                    for z in 0..self.len() {
                        if self.lt(x, z) && self.lt(z, y) && !b.contains(z) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// A maximal sub-branch.
    pub fn is_branch(&self, b: &Subset) -> bool {
        if !self.is_sub_branch(b) || (b.is_empty() && !self.is_empty()) {
            return false;
        }
        (0..self.len()).filter(|&x| !b.contains(x)).all(|x| {
            let mut bigger = b.clone();
            bigger.insert(x);
            !self.is_sub_branch(&bigger)
        })
    }

    pub fn branch_decompose(&self, b: &Subset) -> Result<BranchDecomposition> {
        if !self.is_branch(b) {
            return Err(Error::NotABranch("not a maximal convex linearly ordered subset".into()));
        }
        let mut hangs: BTreeMap<usize, Subset> = b.iter().map(|e| (e, Subset::new())).collect();
        let mut detached = Subset::new();
        for x in (0..self.len()).filter(|&x| !b.contains(x)) {
            match self.ancestors(x).into_iter().find(|a| b.contains(*a)) {
                Some(at) => hangs.get_mut(&at).expect("branch node").insert(x),
                None => detached.insert(x),
            }
        }
        Ok(BranchDecomposition { branch: b.clone(), hangs, detached })
    }

    /// The branch obtained by always stepping to the first child in canonical order.
    pub fn leftmost_branch(&self, from: usize) -> Subset {
        let mut b: Subset = self.ancestors(from).into_iter().collect();
        let mut cur = from;
        b.insert(cur);
        while let Some(&c) = self.children(cur).first() {
            b.insert(c);
            cur = c;
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentDecomposition {
    pub segment: Subset,
    /// `T_{≤A}`: elements not above `A`.
    pub below: Subset,
    /// `~¹_A` classes of the elements above `A`, ordered by class root.
    pub classes: Vec<Subset>,
    pub class_index: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchDecomposition {
    /// On finite trees no gaps exist, so the filled branch equals the branch.
    pub branch: Subset,
    /// Elements whose highest branch ancestor is the key.
    pub hangs: BTreeMap<usize, Subset>,
    /// Elements with no ancestor on the branch (other components of a forest).
    pub detached: Subset,
}

// ---------------------------------------------------------------------------
// Embedding frames
// ---------------------------------------------------------------------------

/// An order embedding of a finite prefix of the full binary tree into a rooted host tree.
#[derive(Clone, Debug)]
pub struct EmbeddingFrame {
    host: FinStructure,
    word_to_elem: BTreeMap<String, usize>,
    elem_to_word: BTreeMap<usize, String>,
}

impl EmbeddingFrame {
    /// `pairs` maps binary words (`""` is the root) to host element ids. Every
    /// word in the domain has either both children or none.
    pub fn new(host: FinStructure, pairs: &[(String, String)]) -> Result<Self> {
        if host.kind() != Kind::Tree {
            return Err(Error::NotATree(host.kind().name()));
        }
        let root = host.root().ok_or(Error::NoRoot)?;
        let mut word_to_elem = BTreeMap::new();
        let mut elem_to_word = BTreeMap::new();
        for (w, id) in pairs {
            if !w.chars().all(|c| c == '0' || c == '1') {
                return Err(Error::InvalidFrame(format!("`{w}` is not a binary word")));
            }
            let e = host.index_of(id)?;
            if word_to_elem.insert(w.clone(), e).is_some() || elem_to_word.insert(e, w.clone()).is_some() {
                return Err(Error::InvalidFrame("map is not a bijection".into()));
            }
        }
        if word_to_elem.get("") != Some(&root) {
            return Err(Error::InvalidFrame("the empty word must map to the host root".into()));
        }
        for w in word_to_elem.keys() {
            if !w.is_empty() && !word_to_elem.contains_key(&w[..w.len() - 1]) {
                return Err(Error::InvalidFrame(format!("domain not prefix closed at `{w}`")));
            }
            let c0 = word_to_elem.contains_key(&format!("{w}0"));
            let c1 = word_to_elem.contains_key(&format!("{w}1"));
            if c0 != c1 {
                return Err(Error::InvalidFrame(format!("`{w}` has exactly one child")));
            }
        }
        for (v, &a) in &word_to_elem {
            for (u, &b) in &word_to_elem {
                if u.starts_with(v.as_str()) != host.leq(a, b) {
                    return Err(Error::InvalidFrame(format!(
                        "order not preserved between `{v}` and `{u}`"
                    )));
                }
            }
        }
        Ok(EmbeddingFrame { host, word_to_elem, elem_to_word })
    }

    pub fn host(&self) -> &FinStructure {
        &self.host
    }

    pub fn image(&self) -> Subset {
        self.elem_to_word.keys().copied().collect()
    }

    pub fn word(&self, y: usize) -> Option<&str> {
        self.elem_to_word.get(&y).map(String::as_str)
    }

    /// `y⁰` or `y¹`.
    pub fn child(&self, y: usize, dir: u8) -> Option<usize> {
        let w = self.elem_to_word.get(&y)?;
        self.word_to_elem.get(&format!("{w}{dir}")).copied()
    }

    /// `yⁱ = y⁰ ∧ y¹`, when `y` has children in the frame.
    pub fn split_point(&self, y: usize) -> Option<Meet> {
        Some(self.host.meet(self.child(y, 0)?, self.child(y, 1)?))
    }

    /// `Bush(Y)`: host elements below some member of the antichain `Y`.
    pub fn bush(&self, ys: &Subset) -> Subset {
        (0..self.host.len()).filter(|&x| ys.iter().any(|y| self.host.leq(x, y))).collect()
    }

    pub fn bush_in_image(&self, ys: &Subset) -> Subset {
        self.bush(ys).intersect(&self.image())
    }

    /// The eight regions `T₀(y) .. T₇(y)` split off around `y`, `yⁱ`, `y⁰`, `y¹`.
    /// For a leaf `y` of the frame only `T₀` and `T₂` (both `T_{≥y}`) are nonempty.
    pub fn region_decompose(&self, y: usize) -> Result<[Subset; 8]> {
        if !self.elem_to_word.contains_key(&y) {
            return Err(Error::InvalidFrame(format!("`{}` is not in the image", self.host.id(y))));
        }
        let t = &self.host;
        let n = t.len();
        let all = 0..n;
        let t0: Subset = t.subtree_at(y);
        let (y0, y1, yi) = match (self.child(y, 0), self.child(y, 1), self.split_point(y)) {
            (Some(a), Some(b), Some(m)) => (a, b, m),
            _ => {
                let empty = Subset::new;
                return Ok([t0.clone(), empty(), t0, empty(), empty(), empty(), empty(), empty()]);
            }
        };
        // predicates relative to yⁱ, honouring the initial-segment convention
        let below_yi = |z: usize| match &yi {
            Meet::Element(m) => t.leq(z, *m),
            Meet::Segment(seg) => seg.contains(&z),
        };
        let yi_below = |x: usize| match &yi {
            Meet::Element(m) => t.leq(*m, x),
            Meet::Segment(seg) => seg.iter().all(|&s| t.leq(s, x)),
        };
        let is_yi = |z: usize| matches!(&yi, Meet::Element(m) if *m == z);
        let t1 = all
            .clone()
            .filter(|&x| {
                !yi_below(x) && (0..n).any(|z| z != y && t.leq(z, x) && t.leq(y, z) && below_yi(z))
            })
            .collect();
        let t2 = all
            .clone()
            .filter(|&x| {
                t.leq(y, x) && (0..n).all(|z| !(below_yi(z) && t.leq(z, x)) || t.leq(z, y))
            })
            .collect();
        let split_region = |target: usize| -> Subset {
            (0..n)
                .filter(|&x| {
                    !t.leq(target, x)
                        && (0..n).any(|z| {
                            !is_yi(z) && t.leq(z, x) && yi_below(z) && t.leq(z, target)
                        })
                })
                .collect()
        };
        let t3 = split_region(y0);
        let t4 = split_region(y1);
        let t5 = all
            .clone()
            .filter(|&x| {
                yi_below(x)
                    && (0..n).all(|z| {
                        !(t.leq(z, x) && (t.leq(z, y0) || t.leq(z, y1))) || below_yi(z)
                    })
            })
            .collect();
        let t6 = t.subtree_at(y0);
        let t7 = t.subtree_at(y1);
        Ok([t0, t1, t2, t3, t4, t5, t6, t7])
    }
}

// ---------------------------------------------------------------------------
// Grafting
// ---------------------------------------------------------------------------

/// A finite binary-tree fragment `M` and a grafting function on it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraftSpec {
    pub base: BTreeSet<String>,
    pub graft_map: BTreeMap<(String, u8), BTreeSet<String>>,
}

fn check_words<'a, I: IntoIterator<Item = &'a String>>(words: I) -> Result<()> {
    for w in words {
        if !w.chars().all(|c| c == '0' || c == '1') {
            return Err(Error::InvalidStructure(format!("`{w}` is not a binary word")));
        }
    }
    Ok(())
}

/// The tree `(words, prefix order)` with ids `r<word>`.
pub fn binary_fragment(words: &BTreeSet<String>) -> Result<FinStructure> {
    check_words(words)?;
    let ids: Vec<String> = words.iter().map(|w| format!("r{w}")).collect();
    let mut edges = Vec::new();
    for w in words {
        let parent = (0..w.len()).rev().map(|k| &w[..k]).find(|p| words.contains(*p));
        if let Some(p) = parent {
            edges.push((format!("r{w}"), format!("r{p}")));
        }
    }
    FinStructure::tree(ids, &edges)
}

impl GraftSpec {
    pub fn validate(&self) -> Result<()> {
        check_words(&self.base)?;
        for ((x, d), tree) in &self.graft_map {
            check_words(tree)?;
            if !self.base.contains(x) || *d > 1 {
                return Err(Error::InvalidStructure(format!("graft slot ({x}, {d}) is not on M")));
            }
            if self.base.contains(&format!("{x}{d}")) {
                return Err(Error::OccupiedSlot { node: x.clone(), dir: *d });
            }
        }
        Ok(())
    }

    /// All words of the composed tree.
    pub fn composed_words(&self) -> Result<BTreeSet<String>> {
        self.validate()?;
        let mut words = self.base.clone();
        for ((x, d), tree) in &self.graft_map {
            for y in tree {
                let w = format!("{x}{d}{y}");
                if !words.insert(w) {
                    return Err(Error::OccupiedSlot { node: x.clone(), dir: *d });
                }
            }
        }
        Ok(words)
    }

    pub fn compose(&self) -> Result<FinStructure> {
        binary_fragment(&self.composed_words()?)
    }
}

pub fn graft_compose(spec: &GraftSpec) -> Result<FinStructure> {
    spec.compose()
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
