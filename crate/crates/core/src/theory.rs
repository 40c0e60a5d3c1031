//! Partial theories `Th^n(T; Ā)` as hereditarily finite values.
//!
//! A rank-0 theory is the truth vector of the atom set for its arity. A rank
//! `m + 1` theory is the sorted, deduplicated set of rank-`m` theories of all
//! one-set extensions of the tuple. Values are reference counted and carry a
//! precomputed hash, so equal subterms are cheap to compare and share.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, OnceLock};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::structures::{hex_digest, FinStructure, Kind, Subset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AtomKind {
    Sing,
    Empty,
    Subset,
    Equal,
    Member,
    Le,
}

pub fn atom_count(arity: usize) -> usize {
    2 * arity + 4 * arity * arity
}

/// Position of an atom in the rank-0 vector. Unary atoms ignore `j`.
pub fn atom_index(kind: AtomKind, i: usize, j: usize, arity: usize) -> usize {
    match kind {
        AtomKind::Sing => 2 * i,
        AtomKind::Empty => 2 * i + 1,
        _ => {
            let base = 2 * arity + 4 * (i * arity + j);
            base + match kind {
                AtomKind::Subset => 0,
                AtomKind::Equal => 1,
                AtomKind::Member => 2,
                AtomKind::Le => 3,
                AtomKind::Sing | AtomKind::Empty => unreachable!(),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Packed atom vectors
// ---------------------------------------------------------------------------

// Bit `i` sits at position `63 - i % 64` of word `i / 64`, so comparing
// words numerically is the lexicographic order on the 0/1 vector.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Bits {
    len: usize,
    words: Box<[u64]>,
}

impl Bits {
    fn zeros(len: usize) -> Self {
        Bits { len, words: vec![0u64; len.div_ceil(64)].into_boxed_slice() }
    }

    #[inline]
    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1u64 << (63 - i % 64);
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (63 - i % 64) & 1 == 1
    }
}

// ---------------------------------------------------------------------------
// Theory values
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum Payload {
    Atoms(Bits),
    Set(Box<[Theory]>),
}

#[derive(Debug)]
struct Node {
    rank: usize,
    arity: usize,
    hash: u64,
    payload: Payload,
}

#[derive(Clone)]
pub struct Theory(Arc<Node>);

fn mix(mut h: u64, v: u64) -> u64 {
    h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

impl Theory {
    fn from_bits(arity: usize, bits: Bits) -> Theory {
        let mut h = mix(0, arity as u64);
        for &w in bits.words.iter() {
            h = mix(h, w);
        }
        Theory(Arc::new(Node { rank: 0, arity, hash: h, payload: Payload::Atoms(bits) }))
    }

    /// A rank-0 theory from its atom truth vector.
    pub fn from_atoms(arity: usize, atoms: &[bool]) -> Result<Theory> {
        if atoms.len() != atom_count(arity) {
            return Err(Error::MalformedTheory(format!(
                "arity {arity} needs {} atoms, got {}",
                atom_count(arity),
                atoms.len()
            )));
        }
        let mut bits = Bits::zeros(atoms.len());
        for (i, &b) in atoms.iter().enumerate() {
            if b {
                bits.set(i);
            }
        }
        Ok(Theory::from_bits(arity, bits))
    }

    /// A rank `rank` theory over `arity` from members of rank `rank - 1`,
    /// arity `arity + 1`. Members are sorted and deduplicated.
    pub fn from_members(rank: usize, arity: usize, mut members: Vec<Theory>) -> Result<Theory> {
        if rank == 0 {
            return Err(Error::MalformedTheory("rank-0 theories have no members".into()));
        }
        for m in &members {
            if m.rank() != rank - 1 {
                return Err(Error::RankMismatch(rank - 1, m.rank()));
            }
            if m.arity() != arity + 1 {
                return Err(Error::ArityMismatch { expected: arity + 1, got: m.arity() });
            }
        }
        members.sort_unstable();
        members.dedup();
        Ok(Theory::set_unchecked(rank, arity, members))
    }

    // members already sorted, deduplicated and well-typed
    fn set_unchecked(rank: usize, arity: usize, members: Vec<Theory>) -> Theory {
        let mut h = mix(rank as u64, arity as u64);
        for m in &members {
            h = mix(h, m.0.hash);
        }
        Theory(Arc::new(Node { rank, arity, hash: h, payload: Payload::Set(members.into_boxed_slice()) }))
    }

    pub fn rank(&self) -> usize {
        self.0.rank
    }

    pub fn arity(&self) -> usize {
        self.0.arity
    }

    /// In-memory structural hash (not the serialized content hash).
    pub fn hash64(&self) -> u64 {
        self.0.hash
    }

    /// Members of a rank ≥ 1 theory; empty at rank 0.
    pub fn members(&self) -> &[Theory] {
        match &self.0.payload {
            Payload::Set(m) => m,
            Payload::Atoms(_) => &[],
        }
    }

    /// The atom truth vector of a rank-0 theory.
    pub fn atoms(&self) -> Option<Vec<bool>> {
        match &self.0.payload {
            Payload::Atoms(b) => Some((0..b.len).map(|i| b.get(i)).collect()),
            Payload::Set(_) => None,
        }
    }

    /// Reads one atom from the rank-0 projection of this theory.
    pub fn atom(&self, idx: usize) -> Result<bool> {
        let base = self.reduce_depth(0)?;
        match &base.0.payload {
            Payload::Atoms(b) if idx < b.len => Ok(b.get(idx)),
            _ => Err(Error::MalformedTheory(format!("atom {idx} out of range"))),
        }
    }

    pub fn contains(&self, member: &Theory) -> bool {
        self.members().binary_search(member).is_ok()
    }

    /// Number of distinct nodes in the hereditarily finite value.
    pub fn node_count(&self) -> usize {
        fn walk(t: &Theory, seen: &mut HashSet<Theory>) {
            if seen.insert(t.clone()) {
                for m in t.members() {
                    walk(m, seen);
                }
            }
        }
        let mut seen = HashSet::new();
        walk(self, &mut seen);
        seen.len()
    }

    /// `Th^n` from `Th^m` for `n ≤ m`, computed from the value alone.
    pub fn reduce_depth(&self, n: usize) -> Result<Theory> {
        if n > self.rank() {
            return Err(Error::DepthTooLarge { rank: self.rank(), depth: n });
        }
        let mut memo = HashMap::new();
        reduce_rec(self, n, &mut memo)
    }

    // -----------------------------------------------------------------------
    // Serialization
    // -----------------------------------------------------------------------

    pub fn payload_json(&self) -> Value {
        match &self.0.payload {
            Payload::Atoms(b) => Value::Array((0..b.len).map(|i| json!(b.get(i) as u8)).collect()),
            Payload::Set(m) => Value::Array(m.iter().map(Theory::payload_json).collect()),
        }
    }

    /// SHA-256 of the compact payload encoding.
    pub fn content_hash(&self) -> String {
        hex_digest(self.payload_json().to_string().as_bytes())
    }

    pub fn to_json_value(&self) -> Value {
        let payload = self.payload_json();
        json!({
            "rank": self.rank(),
            "arity": self.arity(),
            "hash": hex_digest(payload.to_string().as_bytes()),
            "payload": payload,
        })
    }

    pub fn to_json(&self) -> String {
        self.to_json_value().to_string()
    }

    pub fn from_json_value(v: &Value) -> Result<Theory> {
        let obj = v.as_object().ok_or_else(|| Error::MalformedTheory("expected an object".into()))?;
        for key in obj.keys() {
            if !matches!(key.as_str(), "rank" | "arity" | "hash" | "payload") {
                return Err(Error::MalformedTheory(format!("unknown field `{key}`")));
            }
        }
        let field = |k: &str| obj.get(k).ok_or_else(|| Error::MalformedTheory(format!("missing `{k}`")));
        let rank = field("rank")?.as_u64().ok_or_else(|| Error::MalformedTheory("bad rank".into()))? as usize;
        let arity =
            field("arity")?.as_u64().ok_or_else(|| Error::MalformedTheory("bad arity".into()))? as usize;
        let payload = field("payload")?;
        let t = parse_payload(payload, rank, arity)?;
        if let Some(h) = obj.get("hash") {
            let expected = hex_digest(payload.to_string().as_bytes());
            if h.as_str() != Some(expected.as_str()) {
                return Err(Error::MalformedTheory("content hash mismatch".into()));
            }
        }
        Ok(t)
    }

    pub fn from_json(src: &str) -> Result<Theory> {
        Theory::from_json_value(&serde_json::from_str(src)?)
    }
}

fn parse_payload(v: &Value, rank: usize, arity: usize) -> Result<Theory> {
    let items = v.as_array().ok_or_else(|| Error::MalformedTheory("payload must be an array".into()))?;
    if rank == 0 {
        let atoms = items
            .iter()
            .map(|x| match x.as_u64() {
                Some(0) => Ok(false),
                Some(1) => Ok(true),
                _ => Err(Error::MalformedTheory("atoms must be 0 or 1".into())),
            })
            .collect::<Result<Vec<bool>>>()?;
        return Theory::from_atoms(arity, &atoms);
    }
    let members =
        items.iter().map(|x| parse_payload(x, rank - 1, arity + 1)).collect::<Result<Vec<Theory>>>()?;
    if members.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::MalformedTheory("members not in canonical order".into()));
    }
    Ok(Theory::set_unchecked(rank, arity, members))
}

fn project_atoms(t: &Theory, arity: usize) -> Theory {
    let Payload::Atoms(src) = &t.0.payload else { unreachable!("projection of a set theory") };
    let from = t.arity();
    let mut bits = Bits::zeros(atom_count(arity));
    for i in 0..arity {
        for k in [AtomKind::Sing, AtomKind::Empty] {
            if src.get(atom_index(k, i, 0, from)) {
                bits.set(atom_index(k, i, 0, arity));
            }
        }
        for j in 0..arity {
            for k in [AtomKind::Subset, AtomKind::Equal, AtomKind::Member, AtomKind::Le] {
                if src.get(atom_index(k, i, j, from)) {
                    bits.set(atom_index(k, i, j, arity));
                }
            }
        }
    }
    Theory::from_bits(arity, bits)
}

fn reduce_rec(t: &Theory, n: usize, memo: &mut HashMap<(Theory, usize), Theory>) -> Result<Theory> {
    if n == t.rank() {
        return Ok(t.clone());
    }
    if let Some(r) = memo.get(&(t.clone(), n)) {
        return Ok(r.clone());
    }
    let out = if n == 0 {
        let first = t
            .members()
            .first()
            .ok_or_else(|| Error::MalformedTheory("empty theory has no atom block".into()))?;
        project_atoms(&reduce_rec(first, 0, memo)?, t.arity())
    } else {
        let members =
            t.members().iter().map(|m| reduce_rec(m, n - 1, memo)).collect::<Result<Vec<_>>>()?;
        Theory::from_members(n, t.arity(), members)?
    };
    memo.insert((t.clone(), n), out.clone());
    Ok(out)
}

impl PartialEq for Theory {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.hash == other.0.hash && self.cmp(other) == Ordering::Equal)
    }
}

impl Eq for Theory {}

impl Hash for Theory {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl Ord for Theory {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        (self.0.rank, self.0.arity).cmp(&(other.0.rank, other.0.arity)).then_with(|| {
            match (&self.0.payload, &other.0.payload) {
                (Payload::Atoms(a), Payload::Atoms(b)) => a.cmp(b),
                (Payload::Set(a), Payload::Set(b)) => a.iter().cmp(b.iter()),
                // unreachable for equal ranks
                (Payload::Atoms(_), Payload::Set(_)) => Ordering::Less,
                (Payload::Set(_), Payload::Atoms(_)) => Ordering::Greater,
            }
        })
    }
}

impl PartialOrd for Theory {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Theory(rank={}, arity={}, {:016x})", self.rank(), self.arity(), self.hash64())
    }
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.payload {
            Payload::Atoms(b) => {
                f.write_str("[")?;
                for i in 0..b.len {
                    f.write_str(if b.get(i) { "1" } else { "0" })?;
                }
                f.write_str("]")
            }
            Payload::Set(m) => {
                f.write_str("{")?;
                for (i, x) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("}")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Computation
// ---------------------------------------------------------------------------

/// Elements beyond which subset enumeration by bitmask is impossible.
pub const MAX_ENUM_ELEMENTS: usize = 63;
/// Upper bound on `elements * depth` for direct enumeration.
pub const MAX_DIRECT_WORK: usize = 26;

/// Order data of a structure as bitmasks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct Frame {
    pub kind: Kind,
    /// `up[i]`: elements `j` with `i ◁ j`.
    pub up: Vec<u64>,
}

impl Frame {
    pub fn of(s: &FinStructure) -> Result<Frame> {
        if s.len() > MAX_ENUM_ELEMENTS {
            return Err(Error::BoundsExceeded(format!("{} elements exceed the bitmask limit", s.len())));
        }
        let n = s.len();
        let up = (0..n)
            .map(|i| (0..n).filter(|&j| s.leq(i, j)).fold(0u64, |m, j| m | 1 << j))
            .collect();
        Ok(Frame { kind: s.kind(), up })
    }

    pub fn full(&self) -> u64 {
        let n = self.up.len();
        if n == 64 { u64::MAX } else { (1u64 << n) - 1 }
    }
}

pub(crate) fn atom_bits(frame: &Frame, tuple: &[u64]) -> Theory {
    let l = tuple.len();
    let mut bits = Bits::zeros(atom_count(l));
    let sing: Vec<bool> = tuple.iter().map(|t| t.count_ones() == 1).collect();
    for (i, &x) in tuple.iter().enumerate() {
        if sing[i] {
            bits.set(atom_index(AtomKind::Sing, i, 0, l));
        }
        if x == 0 {
            bits.set(atom_index(AtomKind::Empty, i, 0, l));
        }
    }
    for (i, &x) in tuple.iter().enumerate() {
        for (j, &y) in tuple.iter().enumerate() {
            if x & !y == 0 {
                bits.set(atom_index(AtomKind::Subset, i, j, l));
            }
            if x == y {
                bits.set(atom_index(AtomKind::Equal, i, j, l));
            }
            if sing[i] && x & y != 0 {
                bits.set(atom_index(AtomKind::Member, i, j, l));
            }
            if sing[i]
                && sing[j]
                && frame.kind != Kind::Set
                && frame.up[x.trailing_zeros() as usize] & y != 0
            {
                bits.set(atom_index(AtomKind::Le, i, j, l));
            }
        }
    }
    Theory::from_bits(l, bits)
}

struct Engine<'a> {
    frame: &'a Frame,
    interner: HashSet<Theory>,
}

impl Engine<'_> {
    fn intern(&mut self, t: Theory) -> Theory {
        if let Some(existing) = self.interner.get(&t) {
            return existing.clone();
        }
        self.interner.insert(t.clone());
        t
    }

    fn theory(&mut self, tuple: &mut Vec<u64>, depth: usize) -> Theory {
        if depth == 0 {
            let t = atom_bits(self.frame, tuple);
            return self.intern(t);
        }
        let full = self.frame.full();
        let mut members = Vec::new();
        let mut b = 0u64;
        loop {
            tuple.push(b);
            members.push(self.theory(tuple, depth - 1));
            tuple.pop();
            if b == full {
                break;
            }
            b += 1;
        }
        members.sort_unstable();
        members.dedup();
        let t = Theory::set_unchecked(depth, tuple.len(), members);
        self.intern(t)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    frame: Frame,
    tuple: Vec<u64>,
    depth: usize,
}

const CACHE_CAPACITY: usize = 1 << 14;

fn cache() -> &'static Mutex<HashMap<CacheKey, Theory>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Theory>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn tuple_masks(s: &FinStructure, tuple: &[Subset]) -> Result<Vec<u64>> {
    tuple
        .iter()
        .map(|x| {
            if x.iter().any(|i| i >= s.len()) {
                return Err(Error::UnknownElement(format!("index {:?}", x.as_slice().last())));
            }
            x.mask().ok_or_else(|| Error::BoundsExceeded("subset beyond bitmask range".into()))
        })
        .collect()
}

/// `Th^n(s; tuple)` by exhaustive subset enumeration.
pub fn compute_theory_direct(s: &FinStructure, tuple: &[Subset], n: usize) -> Result<Theory> {
    let frame = Frame::of(s)?;
    let masks = tuple_masks(s, tuple)?;
    if s.len() * n > MAX_DIRECT_WORK {
        return Err(Error::BoundsExceeded(format!(
            "{} elements at depth {n} is too many subsets to enumerate",
            s.len()
        )));
    }
    let key = CacheKey { frame, tuple: masks, depth: n };
    if let Some(t) = cache().lock().expect("theory cache poisoned").get(&key) {
        return Ok(t.clone());
    }
    let mut engine = Engine { frame: &key.frame, interner: HashSet::new() };
    let t = engine.theory(&mut key.tuple.clone(), n);
    let mut guard = cache().lock().expect("theory cache poisoned");
    if guard.len() >= CACHE_CAPACITY {
        guard.clear();
    }
    guard.insert(key, t.clone());
    Ok(t)
}

/// The theory of a one-element chain whose point lies in exactly the marked
/// tuple members.
pub fn point_theory(membership: &[bool], n: usize) -> Result<Theory> {
    let point = FinStructure::chain(1);
    let tuple: Vec<Subset> =
        membership.iter().map(|&b| if b { Subset::singleton(0) } else { Subset::new() }).collect();
    compute_theory_direct(&point, &tuple, n)
}

/// The theory of the empty chain with an `arity`-tuple of empty sets.
pub fn empty_theory(arity: usize, n: usize) -> Theory {
    compute_theory_direct(&FinStructure::chain(0), &vec![Subset::new(); arity], n)
        .expect("the empty chain is always enumerable")
}

/// `Th^n(s; tuple)`. Chains are folded from point theories with the theory
/// sum; other kinds are enumerated directly.
pub fn compute_theory(s: &FinStructure, tuple: &[Subset], n: usize) -> Result<Theory> {
    if let Some(x) = tuple.iter().flat_map(Subset::iter).find(|&i| i >= s.len()) {
        return Err(Error::UnknownElement(format!("index {x}")));
    }
    if s.kind() == Kind::Chain && s.len() * n > 12 {
        let order = s.chain_order();
        let points = order
            .iter()
            .map(|&e| point_theory(&tuple.iter().map(|x| x.contains(e)).collect::<Vec<_>>(), n))
            .collect::<Result<Vec<_>>>()?;
        return crate::composition::sigma(&points, tuple.len(), n);
    }
    compute_theory_direct(s, tuple, n)
}

/// All labelled trees on `n` nodes with each parent index below its child.
/// Every finite tree shape appears at least once.
pub fn parent_maps(n: usize) -> Vec<Vec<Option<usize>>> {
    let mut out = vec![Vec::new()];
    for child in 0..n {
        let mut next = Vec::new();
        for pm in &out {
            let mut with_root = pm.clone();
            with_root.push(None);
            next.push(with_root);
            for p in 0..child {
                let mut v = pm.clone();
                v.push(Some(p));
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Structures of the given kind with at most `size_bound` elements (trees up
/// to labelling, with repetitions).
pub fn structures_up_to(kind: Kind, size_bound: usize) -> Vec<FinStructure> {
    let mut out = Vec::new();
    for size in 0..=size_bound {
        match kind {
            Kind::Chain => out.push(FinStructure::chain(size)),
            Kind::Set => out.push(FinStructure::pure_set(size)),
            Kind::Tree => out.extend(
                parent_maps(size)
                    .iter()
                    .map(|p| FinStructure::tree_from_parents(p).expect("parent maps are acyclic")),
            ),
        }
    }
    out
}

/// Every tuple of `arity` subsets of an `n`-element universe.
pub fn all_tuples(n: usize, arity: usize) -> Vec<Vec<Subset>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        let mut next = Vec::new();
        for t in &out {
            for m in 0..1u64 << n {
                let mut v = t.clone();
                v.push(Subset::from_mask(m));
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Theories realized by structures of at most `size_bound` elements. This is
/// an under-approximation of the set of formally possible theories.
pub fn realized_theories(n: usize, arity: usize, size_bound: usize, kind: Kind) -> Result<BTreeSet<Theory>> {
    let mut out = BTreeSet::new();
    for s in structures_up_to(kind, size_bound) {
        for tuple in all_tuples(s.len(), arity) {
            out.insert(compute_theory(&s, &tuple, n)?);
        }
    }
    Ok(out)
}
