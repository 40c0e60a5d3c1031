//! Scattered order terms, their Hausdorff degree and finite realizations,
//! the lexicographic models `M^n`, and homogeneous thinning of an embedded
//! model down to a monochromatic two-sided sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};

use crate::composition::{coloring_of, sum, AdditiveColoring};
use crate::error::{Error, Result};
use crate::sexpr::{self, Sexp};
use crate::structures::{FinStructure, Subset};
use crate::theory::Theory;

// ---------------------------------------------------------------------------
// Terms
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum OrderTerm {
    Fin(usize),
    Concat(Vec<OrderTerm>),
    /// `Σ_{i∈ω} t`
    Omega(Box<OrderTerm>),
    /// `Σ_{i∈ω*} t`
    OmegaStar(Box<OrderTerm>),
    /// `Σ_{i∈ω} C_{i+1}` (or the starred catalog).
    Graded { starred: bool },
    /// The rationals.
    Rational,
}

impl OrderTerm {
    pub fn omega(t: OrderTerm) -> OrderTerm {
        OrderTerm::Omega(Box::new(t))
    }

    pub fn omega_star(t: OrderTerm) -> OrderTerm {
        OrderTerm::OmegaStar(Box::new(t))
    }

    pub fn parse(src: &str) -> Result<OrderTerm> {
        term_from_sexp(&sexpr::parse(src)?)
    }

    /// Nesting depth of infinite sums along the deepest path.
    pub fn depth(&self) -> usize {
        match self {
            OrderTerm::Fin(_) => 0,
            OrderTerm::Rational => 1,
            OrderTerm::Graded { .. } => 2,
            OrderTerm::Concat(ts) => ts.iter().map(OrderTerm::depth).max().unwrap_or(0),
            OrderTerm::Omega(t) | OrderTerm::OmegaStar(t) => 1 + t.depth(),
        }
    }

    pub fn contains_rational(&self) -> bool {
        match self {
            OrderTerm::Rational => true,
            OrderTerm::Fin(_) | OrderTerm::Graded { .. } => false,
            OrderTerm::Concat(ts) => ts.iter().any(OrderTerm::contains_rational),
            OrderTerm::Omega(t) | OrderTerm::OmegaStar(t) => t.contains_rational(),
        }
    }

    /// Flattens nested concatenations and drops empty parts.
    pub fn normalize(&self) -> OrderTerm {
        match self {
            OrderTerm::Concat(ts) => {
                let mut flat = Vec::new();
                for t in ts {
                    match t.normalize() {
                        OrderTerm::Concat(inner) => flat.extend(inner),
                        OrderTerm::Fin(0) => {}
                        other => flat.push(other),
                    }
                }
                match flat.len() {
                    0 => OrderTerm::Fin(0),
                    1 => flat.pop().expect("one part"),
                    _ => OrderTerm::Concat(flat),
                }
            }
            OrderTerm::Omega(t) => match t.normalize() {
                OrderTerm::Fin(0) => OrderTerm::Fin(0),
                inner => OrderTerm::omega(inner),
            },
            OrderTerm::OmegaStar(t) => match t.normalize() {
                OrderTerm::Fin(0) => OrderTerm::Fin(0),
                inner => OrderTerm::omega_star(inner),
            },
            other => other.clone(),
        }
    }
}

fn term_from_sexp(s: &Sexp) -> Result<OrderTerm> {
    if let Some(a) = s.as_atom() {
        return match a {
            "rational" => Ok(OrderTerm::Rational),
            "omega" => Ok(OrderTerm::omega(OrderTerm::Fin(1))),
            "omegastar" => Ok(OrderTerm::omega_star(OrderTerm::Fin(1))),
            _ => Err(Error::Parse(format!("unknown order term `{a}`"))),
        };
    }
    let (head, args) = s.as_form().ok_or_else(|| Error::Parse(format!("malformed order term `{s}`")))?;
    let one = || -> Result<OrderTerm> {
        match args {
            [t] => term_from_sexp(t),
            _ => Err(Error::Parse(format!("`{head}` takes one argument"))),
        }
    };
    let number = || -> Result<usize> {
        match args {
            [Sexp::Atom(k)] => k.parse().map_err(|_| Error::Parse(format!("`{k}` is not a natural number"))),
            _ => Err(Error::Parse(format!("`{head}` takes one number"))),
        }
    };
    match head {
        "fin" => Ok(OrderTerm::Fin(number()?)),
        "concat" => Ok(OrderTerm::Concat(args.iter().map(term_from_sexp).collect::<Result<_>>()?)),
        "omega" => Ok(OrderTerm::omega(one()?)),
        "omegastar" => Ok(OrderTerm::omega_star(one()?)),
        "rational" if args.is_empty() => Ok(OrderTerm::Rational),
        "graded" => match args {
            [Sexp::Atom(c)] if c == "cn" => Ok(OrderTerm::Graded { starred: false }),
            [Sexp::Atom(c)] if c == "cnstar" => Ok(OrderTerm::Graded { starred: true }),
            _ => Err(Error::Parse("`graded` takes `cn` or `cnstar`".into())),
        },
        "catalog" => catalog_term(number()?, false),
        "catalogstar" => catalog_term(number()?, true),
        other => Err(Error::Parse(format!("unknown order constructor `{other}`"))),
    }
}

impl fmt::Display for OrderTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderTerm::Fin(k) => write!(f, "(fin {k})"),
            OrderTerm::Concat(ts) => {
                f.write_str("(concat")?;
                for t in ts {
                    write!(f, " {t}")?;
                }
                f.write_str(")")
            }
            OrderTerm::Omega(t) => write!(f, "(omega {t})"),
            OrderTerm::OmegaStar(t) => write!(f, "(omegastar {t})"),
            OrderTerm::Graded { starred: false } => f.write_str("(graded cn)"),
            OrderTerm::Graded { starred: true } => f.write_str("(graded cnstar)"),
            OrderTerm::Rational => f.write_str("rational"),
        }
    }
}

/// `C_n` (or `C_n*`): `C_1 = ω`, `C_{n+1} = Σ_ω C_n*`, `C_{n+1}* = Σ_{ω*} C_n`.
pub fn catalog_term(n: usize, starred: bool) -> Result<OrderTerm> {
    if n == 0 {
        return Err(Error::Precondition("the catalog starts at n = 1".into()));
    }
    let mut plain = OrderTerm::omega(OrderTerm::Fin(1));
    let mut star = OrderTerm::omega_star(OrderTerm::Fin(1));
    for _ in 1..n {
        let next_plain = OrderTerm::omega(star.clone());
        let next_star = OrderTerm::omega_star(plain);
        plain = next_plain;
        star = next_star;
    }
    Ok(if starred { star } else { plain })
}

// ---------------------------------------------------------------------------
// Hausdorff degree
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HdegTag {
    Finite(usize),
    AtLeastOmega,
    NotScattered,
}

impl fmt::Display for HdegTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HdegTag::Finite(n) => write!(f, "{n}"),
            HdegTag::AtLeastOmega => f.write_str("≥ ω"),
            HdegTag::NotScattered => f.write_str("not scattered"),
        }
    }
}

impl Serialize for HdegTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HdegTag::Finite(n) => s.serialize_u64(*n as u64),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

/// Which index orders a degree-`d` decomposition can use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    Up,
    Down,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Empty,
    Deg(usize, Dir),
    Infinite,
    Dense,
}

fn shape(t: &OrderTerm) -> Shape {
    match t {
        OrderTerm::Fin(0) => Shape::Empty,
        OrderTerm::Fin(_) => Shape::Deg(0, Dir::Both),
        OrderTerm::Rational => Shape::Dense,
        OrderTerm::Graded { .. } => Shape::Infinite,
        OrderTerm::Concat(ts) => {
            let shapes: Vec<Shape> = ts.iter().map(shape).collect();
            if shapes.contains(&Shape::Dense) {
                return Shape::Dense;
            }
            if shapes.contains(&Shape::Infinite) {
                return Shape::Infinite;
            }
            let degs: Vec<(usize, Dir)> =
                shapes.iter().filter_map(|s| if let Shape::Deg(d, dir) = s { Some((*d, *dir)) } else { None }).collect();
            let Some(d) = degs.iter().map(|x| x.0).max() else { return Shape::Empty };
            if d == 0 {
                return Shape::Deg(0, Dir::Both);
            }
            let top: Vec<Dir> = degs.iter().filter(|x| x.0 == d).map(|x| x.1).collect();
            let up = top.iter().all(|&x| x != Dir::Down);
            let down = top.iter().all(|&x| x != Dir::Up);
            match (up, down) {
                (true, true) => Shape::Deg(d, Dir::Both),
                (true, false) => Shape::Deg(d, Dir::Up),
                (false, true) => Shape::Deg(d, Dir::Down),
                (false, false) => Shape::Deg(d + 1, Dir::Both),
            }
        }
        OrderTerm::Omega(inner) | OrderTerm::OmegaStar(inner) => {
            let (along, against) =
                if matches!(t, OrderTerm::Omega(_)) { (Dir::Up, Dir::Down) } else { (Dir::Down, Dir::Up) };
            match shape(inner) {
                Shape::Dense => Shape::Dense,
                Shape::Infinite => Shape::Infinite,
                Shape::Empty => Shape::Empty,
                Shape::Deg(0, _) => Shape::Deg(1, along),
                Shape::Deg(e, dir) if dir == against => Shape::Deg(e + 1, along),
                Shape::Deg(e, _) => Shape::Deg(e, along),
            }
        }
    }
}

/// Hausdorff degree of the order a term denotes.
pub fn hdeg(t: &OrderTerm) -> HdegTag {
    match shape(t) {
        Shape::Empty => HdegTag::Finite(0),
        Shape::Deg(d, _) => HdegTag::Finite(d),
        Shape::Infinite => HdegTag::AtLeastOmega,
        Shape::Dense => HdegTag::NotScattered,
    }
}

// ---------------------------------------------------------------------------
// Realizations
// ---------------------------------------------------------------------------

/// A finite suborder of a term's denotation; points are coordinate paths
/// compared lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Realization {
    pub budget: usize,
    pub points: Vec<Vec<i64>>,
}

impl Realization {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_chain(&self) -> FinStructure {
        FinStructure::chain(self.points.len())
    }

    /// The identity on coordinates is an order embedding into `other`.
    pub fn embeds_into(&self, other: &Realization) -> bool {
        let theirs: BTreeSet<&Vec<i64>> = other.points.iter().collect();
        self.points.iter().all(|p| theirs.contains(p))
    }

    /// Every adjacent pair of `self` has a point of `bigger` strictly between.
    pub fn gains_everywhere(&self, bigger: &Realization) -> bool {
        self.points.windows(2).all(|w| bigger.points.iter().any(|z| w[0] < *z && *z < w[1]))
    }

    pub fn to_json(&self) -> Value {
        json!({ "budget": self.budget, "size": self.len(), "points": self.points, "chain": self.to_chain().to_file() })
    }
}

fn iroot(b: usize, d: usize) -> usize {
    if d == 0 {
        return b;
    }
    let mut k = (b as f64).powf(1.0 / d as f64).round() as usize + 1;
    while k > 0 && k.checked_pow(d as u32).is_none_or(|p| p > b) {
        k -= 1;
    }
    k
}

const DYADIC_SCALE: u32 = 40;

fn realize_into(t: &OrderTerm, budget: usize, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
    let emit = |prefix: &mut Vec<i64>, c: i64, out: &mut Vec<Vec<i64>>| {
        prefix.push(c);
        out.push(prefix.clone());
        prefix.pop();
    };
    match t {
        OrderTerm::Fin(k) => {
            for i in 0..(*k).min(budget) {
                emit(prefix, i as i64, out);
            }
        }
        OrderTerm::Rational => {
            if budget == 0 {
                return;
            }
            let levels = (usize::BITS - 1 - budget.leading_zeros()).min(DYADIC_SCALE - 1);
            for level in 1..=levels {
                for i in 0..1i64 << (level - 1) {
                    emit(prefix, (2 * i + 1) << (DYADIC_SCALE - level), out);
                }
            }
        }
        OrderTerm::Concat(ts) => {
            if ts.is_empty() {
                return;
            }
            let share = budget / ts.len();
            for (j, part) in ts.iter().enumerate() {
                prefix.push(j as i64);
                realize_into(part, share, prefix, out);
                prefix.pop();
            }
        }
        OrderTerm::Omega(inner) | OrderTerm::OmegaStar(inner) => {
            let d = t.depth();
            let k = iroot(budget, d);
            let each = k.pow(d as u32 - 1);
            let star = matches!(t, OrderTerm::OmegaStar(_));
            for i in 0..k {
                prefix.push(if star { -(i as i64) - 1 } else { i as i64 });
                realize_into(inner, each, prefix, out);
                prefix.pop();
            }
        }
        OrderTerm::Graded { starred } => {
            let k = iroot(budget, 2);
            for i in 0..k {
                let summand = catalog_term(i + 1, *starred).expect("catalog index is positive");
                prefix.push(i as i64);
                realize_into(&summand, k, prefix, out);
                prefix.pop();
            }
        }
    }
}

/// A finite chain embedding into the term's denotation, with at most `budget`
/// points. Larger budgets give supersets of coordinates.
pub fn realize_prefix(t: &OrderTerm, budget: usize) -> Realization {
    let mut points = Vec::new();
    realize_into(t, budget, &mut Vec::new(), &mut points);
    points.sort();
    Realization { budget, points }
}

// ---------------------------------------------------------------------------
// Lexicographic models
// ---------------------------------------------------------------------------

/// The tree `{0..b-1}^{≤n}` ordered lexicographically, successors ascending at
/// even levels and descending at odd levels. A node sits before its
/// successors at ascending levels and after them at descending levels.
#[derive(Clone, Debug)]
pub struct LexModel {
    height: usize,
    branching: usize,
    flipped: bool,
    nodes: Vec<Vec<usize>>,
    index: BTreeMap<Vec<usize>, usize>,
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl LexModel {
    pub fn new(height: usize, branching: usize) -> Result<LexModel> {
        Self::with_parity(height, branching, false)
    }

    /// `flipped` swaps the roles of even and odd levels.
    pub fn with_parity(height: usize, branching: usize, flipped: bool) -> Result<LexModel> {
        if height == 0 || branching < 2 {
            return Err(Error::Precondition("need height ≥ 1 and branching ≥ 2".into()));
        }
        let total: usize = (0..=height).map(|l| branching.pow(l as u32)).sum();
        if total > 1 << 16 {
            return Err(Error::BoundsExceeded(format!("{total} nodes")));
        }
        let mut nodes = vec![Vec::new()];
        let mut frontier = vec![Vec::new()];
        for _ in 0..height {
            let mut next = Vec::new();
            for p in &frontier {
                for k in 0..branching {
                    let mut c: Vec<usize> = p.clone();
                    c.push(k);
                    next.push(c);
                }
            }
            nodes.extend(next.iter().cloned());
            frontier = next;
        }
        let index = nodes.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        let mut m = LexModel { height, branching, flipped, nodes, index, order: Vec::new(), rank: Vec::new() };
        let mut order: Vec<usize> = (0..m.nodes.len()).collect();
        order.sort_by(|&a, &b| m.compare(a, b));
        let mut rank = vec![0; order.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        m.order = order;
        m.rank = rank;
        Ok(m)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &[usize] {
        &self.nodes[i]
    }

    pub fn index_of(&self, seq: &[usize]) -> Option<usize> {
        self.index.get(seq).copied()
    }

    pub fn level(&self, i: usize) -> usize {
        self.nodes[i].len()
    }

    pub fn child(&self, i: usize, k: usize) -> Option<usize> {
        let mut seq = self.nodes[i].clone();
        seq.push(k);
        self.index_of(&seq)
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.branching).filter_map(|k| self.child(i, k)).collect()
    }

    pub fn ascending(&self, level: usize) -> bool {
        (level % 2 == 0) != self.flipped
    }

    pub fn name(&self, i: usize) -> String {
        if self.nodes[i].is_empty() {
            "e".into()
        } else {
            self.nodes[i].iter().map(|k| k.to_string()).collect::<Vec<_>>().join(".")
        }
    }

    fn compare(&self, a: usize, b: usize) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        let (x, y) = (&self.nodes[a], &self.nodes[b]);
        let common = x.iter().zip(y).take_while(|(p, q)| p == q).count();
        let asc = self.ascending(common);
        match (x.get(common), y.get(common)) {
            (None, None) => Equal,
            (None, Some(_)) => if asc { Less } else { Greater },
            (Some(_), None) => if asc { Greater } else { Less },
            (Some(p), Some(q)) => if asc { p.cmp(q) } else { q.cmp(p) },
        }
    }

    /// `a <^n b`.
    pub fn lt(&self, a: usize, b: usize) -> bool {
        self.rank[a] < self.rank[b]
    }

    /// Nodes in increasing `<^n` order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn rank_of(&self, i: usize) -> usize {
        self.rank[i]
    }

    /// Level of the longest common prefix.
    pub fn meet_level(&self, a: usize, b: usize) -> usize {
        self.nodes[a].iter().zip(&self.nodes[b]).take_while(|(p, q)| p == q).count()
    }
}

/// Order-preserving placement of the model into a chain of `chain_len`
/// points, evenly spaced; `None` if the chain is too short.
pub fn embed_lex(m: &LexModel, chain_len: usize) -> Option<Vec<usize>> {
    if chain_len < m.len() {
        return None;
    }
    let mut pos = vec![0; m.len()];
    for (r, &i) in m.order().iter().enumerate() {
        pos[i] = r * chain_len / m.len();
    }
    Some(pos)
}

// ---------------------------------------------------------------------------
// Thinning
// ---------------------------------------------------------------------------

/// Colour table of a thinned subtree: `(target level, meet level) → theory`.
type Table = BTreeMap<(usize, usize), Theory>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThinningMode {
    /// Colours read off canonical extensions only.
    Canonical,
    /// Colours of every surviving cross pair.
    Exact,
}

#[derive(Clone, Debug)]
pub struct ThinningResult {
    pub mode: ThinningMode,
    /// Surviving nodes of the model.
    pub survivors: Vec<usize>,
    /// Monochromatic successor indices per internal node.
    pub kept: BTreeMap<usize, Vec<usize>>,
    /// Second element of each kept set.
    pub second: BTreeMap<usize, usize>,
    /// `t_1 .. t_n`: the colour of same-level-`n` pairs meeting at level `n - k`.
    pub level_theories: Vec<Theory>,
    positions: Vec<usize>,
    coloring: AdditiveColoring,
}

struct Thinner<'a> {
    model: &'a LexModel,
    pos: &'a [usize],
    coloring: &'a AdditiveColoring,
    exact: bool,
    kept: BTreeMap<usize, Vec<usize>>,
    second: BTreeMap<usize, usize>,
    tables: BTreeMap<usize, Table>,
}

impl Thinner<'_> {
    fn color(&self, a: usize, b: usize) -> Theory {
        let (x, y) = if self.model.lt(a, b) { (a, b) } else { (b, a) };
        self.coloring.color(self.pos[x], self.pos[y]).clone()
    }

    fn surviving_children(&self, v: usize) -> Vec<usize> {
        match self.kept.get(&v) {
            None => Vec::new(),
            Some(ks) => {
                let k2 = self.second[&v];
                ks.iter().filter(|&&k| k >= k2).filter_map(|&k| self.model.child(v, k)).collect()
            }
        }
    }

    fn surviving_at(&self, v: usize, level: usize) -> Vec<usize> {
        let mut cur = vec![v];
        while cur.first().is_some_and(|&x| self.model.level(x) < level) {
            cur = cur.iter().flat_map(|&x| self.surviving_children(x)).collect();
        }
        cur
    }

    /// `ν ⌢ ⟨k_ν⟩ ⌢ ...` down to `level`.
    fn canonical(&self, mut v: usize, level: usize) -> usize {
        while self.model.level(v) < level {
            v = self.model.child(v, self.second[&v]).expect("second element is a child");
        }
        v
    }

    /// Colour vector of a sibling pair over the target levels, or `None` when
    /// exact mode finds it non-constant.
    fn pair_colors(&self, a: usize, b: usize, from: usize) -> Option<Vec<Theory>> {
        let mut out = Vec::new();
        for target in from..=self.model.height() {
            if self.exact {
                let mut seen: Option<Theory> = None;
                for x in self.surviving_at(a, target) {
                    for y in self.surviving_at(b, target) {
                        let c = self.color(x, y);
                        match &seen {
                            None => seen = Some(c),
                            Some(s) if *s != c => return None,
                            Some(_) => {}
                        }
                    }
                }
                out.push(seen?);
            } else {
                out.push(self.color(self.canonical(a, target), self.canonical(b, target)));
            }
        }
        Some(out)
    }

    fn thin_node(&mut self, v: usize) -> Result<()> {
        let level = self.model.level(v);
        let children = self.model.children(v);
        let b = children.len();
        let mut pair: Vec<Vec<Option<Vec<Theory>>>> = vec![vec![None; b]; b];
        for i in 0..b {
            for j in i + 1..b {
                pair[i][j] = self.pair_colors(children[i], children[j], level + 1);
            }
        }
        let tables: Vec<&Table> = children.iter().map(|c| &self.tables[c]).collect();
        // largest subset, ties broken towards smaller indices
        let mut best: Option<u32> = None;
        let mut masks: Vec<u32> = (1..1u32 << b).collect();
        masks.sort_by_key(|&m| (std::cmp::Reverse(m.count_ones()), m.reverse_bits()));
        'search: for mask in masks {
            if mask.count_ones() < 3 {
                break;
            }
            let members: Vec<usize> = (0..b).filter(|i| mask >> i & 1 == 1).collect();
            let t0 = tables[members[0]];
            if members.iter().any(|&i| tables[i] != t0) {
                continue;
            }
            let mut colour: Option<&Vec<Theory>> = None;
            for (x, &i) in members.iter().enumerate() {
                for &j in &members[x + 1..] {
                    match (&pair[i][j], colour) {
                        (None, _) => continue 'search,
                        (Some(c), None) => colour = Some(c),
                        (Some(c), Some(prev)) if c != prev => continue 'search,
                        _ => {}
                    }
                }
            }
            best = Some(mask);
            break;
        }
        let mask = best.ok_or_else(|| Error::InsufficientBranching {
            level,
            detail: format!("no monochromatic set of three successors below node {}", self.model.name(v)),
        })?;
        let ks: Vec<usize> = (0..b).filter(|i| mask >> i & 1 == 1).collect();
        let mut table = tables[ks[0]].clone();
        let colours = pair[ks[0]][ks[1]].clone().expect("checked above");
        for (off, c) in colours.into_iter().enumerate() {
            table.insert((level + 1 + off, level), c);
        }
        self.second.insert(v, ks[1]);
        self.kept.insert(v, ks);
        self.tables.insert(v, table);
        Ok(())
    }
}

/// Level-by-level pigeonhole thinning of an embedded model. `positions`
/// places model nodes into the chain `c`; colours are restriction theories
/// `Th^m([x, y); P̄)`.
pub fn thin_homogeneous(
    model: &LexModel,
    positions: &[usize],
    c: &FinStructure,
    tuple: &[Subset],
    m: usize,
) -> Result<ThinningResult> {
    if positions.len() != model.len() {
        return Err(Error::Precondition("one position per model node is required".into()));
    }
    for &i in model.order() {
        if positions[i] >= c.len() {
            return Err(Error::Precondition("position outside the chain".into()));
        }
    }
    if model.order().windows(2).any(|w| positions[w[0]] >= positions[w[1]]) {
        return Err(Error::Precondition("positions must be strictly order preserving".into()));
    }
    let coloring = coloring_of(c, tuple, m)?;
    let mut last_err = None;
    for exact in [false, true] {
        let mut th = Thinner {
            model,
            pos: positions,
            coloring: &coloring,
            exact,
            kept: BTreeMap::new(),
            second: BTreeMap::new(),
            tables: BTreeMap::new(),
        };
        for leaf in (0..model.len()).filter(|&i| model.level(i) == model.height()) {
            th.tables.insert(leaf, Table::new());
        }
        let mut failed = None;
        for level in (0..model.height()).rev() {
            for v in (0..model.len()).filter(|&i| model.level(i) == level) {
                if let Err(e) = th.thin_node(v) {
                    failed = Some(e);
                    break;
                }
            }
            if failed.is_some() {
                break;
            }
        }
        if let Some(e) = failed {
            last_err = Some(e);
            continue;
        }
        let root = model.index_of(&[]).expect("root exists");
        let mut survivors = Vec::new();
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            survivors.push(v);
            stack.extend(th.surviving_children(v));
        }
        survivors.sort_unstable();
        let n = model.height();
        let root_table = &th.tables[&root];
        let level_theories = (1..=n).map(|k| root_table[&(n, n - k)].clone()).collect();
        let result = ThinningResult {
            mode: if exact { ThinningMode::Exact } else { ThinningMode::Canonical },
            survivors,
            kept: th.kept,
            second: th.second,
            level_theories,
            positions: positions.to_vec(),
            coloring: coloring.clone(),
        };
        if result.homogeneity_violation(model).is_none() {
            return Ok(result);
        }
    }
    Err(last_err.unwrap_or_else(|| Error::InsufficientBranching {
        level: 0,
        detail: "no thinning satisfies the homogeneity property".into(),
    }))
}

impl ThinningResult {
    pub fn color_between(&self, model: &LexModel, a: usize, b: usize) -> &Theory {
        let (x, y) = if model.lt(a, b) { (a, b) } else { (b, a) };
        self.coloring.color(self.positions[x], self.positions[y])
    }

    /// First same-level pair whose colour differs from an earlier pair with the
    /// same level and meet level.
    pub fn homogeneity_violation(&self, model: &LexModel) -> Option<(usize, usize)> {
        let mut seen: BTreeMap<(usize, usize), &Theory> = BTreeMap::new();
        for (i, &a) in self.survivors.iter().enumerate() {
            for &b in &self.survivors[i + 1..] {
                if model.level(a) != model.level(b) {
                    continue;
                }
                let key = (model.level(a), model.meet_level(a, b));
                let c = self.color_between(model, a, b);
                match seen.get(&key) {
                    Some(prev) if *prev != c => return Some((a, b)),
                    Some(_) => {}
                    None => {
                        seen.insert(key, c);
                    }
                }
            }
        }
        None
    }

    fn canonical(&self, model: &LexModel, mut v: usize, level: usize) -> usize {
        while model.level(v) < level {
            v = model.child(v, self.second[&v]).expect("second element is a child");
        }
        v
    }

    fn surviving_children(&self, model: &LexModel, v: usize) -> Vec<usize> {
        match self.kept.get(&v) {
            None => Vec::new(),
            Some(ks) => {
                let k2 = self.second[&v];
                ks.iter().filter(|&&k| k >= k2).filter_map(|&k| model.child(v, k)).collect()
            }
        }
    }

    /// Smallest `j` with `t_j = t_{j+1}`, deriving it from a non-adjacent
    /// equality `t_k = t_l` through the two sum identities when needed.
    pub fn adjacent_equality(&self, k: usize, l: usize) -> Result<usize> {
        let n = self.level_theories.len();
        if !(1 <= k && k < l && l <= n) {
            return Err(Error::Precondition(format!("need 1 ≤ k < l ≤ {n}")));
        }
        let t = |i: usize| &self.level_theories[i - 1];
        if t(k) != t(l) {
            return Err(Error::Precondition(format!("t_{k} and t_{l} differ")));
        }
        if l == k + 1 {
            return Ok(k);
        }
        // t_k = t_{k+1} + t_k and t_{k+1} = t_{k+1} + t_k
        let s = sum(t(k + 1), t(k))?;
        if s == *t(k) && s == *t(k + 1) {
            Ok(k)
        } else {
            Err(Error::Internal(format!("sum identities fail for t_{} and t_{k}", k + 1)))
        }
    }
}

/// A monochromatic two-sided sequence of level-`n` nodes built from canonical
/// extensions around a node at level `n - j - 1`, where `t_j = t_{j+1}`.
#[derive(Clone, Debug)]
pub struct ZSet {
    pub level: usize,
    /// Nodes of the model, in chain order.
    pub nodes: Vec<usize>,
    /// Number of leading nodes that extend the other successors of the pivot.
    pub left_len: usize,
    pub theory: Theory,
}

pub fn build_z_set(model: &LexModel, r: &ThinningResult, k: usize, l: usize) -> Result<ZSet> {
    let j = r.adjacent_equality(k, l)?;
    let n = model.height();
    let pivot_level = n - j - 1;
    let eta = *r
        .survivors
        .iter()
        .find(|&&v| model.level(v) == pivot_level)
        .ok_or_else(|| Error::Internal("no surviving node at the pivot level".into()))?;
    let sigma = model.child(eta, r.second[&eta]).expect("second element is a child");
    let mut b1: Vec<usize> = r
        .surviving_children(model, eta)
        .into_iter()
        .filter(|&c| c != sigma)
        .map(|c| r.canonical(model, c, n))
        .collect();
    let mut b2: Vec<usize> =
        r.surviving_children(model, sigma).into_iter().map(|c| r.canonical(model, c, n)).collect();
    b1.sort_by_key(|&v| model.rank_of(v));
    b2.sort_by_key(|&v| model.rank_of(v));
    let mut nodes: Vec<usize> = b1.iter().chain(&b2).copied().collect();
    nodes.sort_by_key(|&v| model.rank_of(v));
    Ok(ZSet { level: j, nodes, left_len: b1.len(), theory: r.level_theories[j - 1].clone() })
}

impl ZSet {
    /// Every pair `x < y` of the sequence has the same restriction theory.
    pub fn is_monochromatic(&self, model: &LexModel, r: &ThinningResult) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, &a)| self.nodes[i + 1..].iter().all(|&b| *r.color_between(model, a, b) == self.theory))
    }
}
