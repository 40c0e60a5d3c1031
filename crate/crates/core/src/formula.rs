//! Monadic formulas over set variables and their two evaluators.
//!
//! Grammar (s-expressions):
//!
//! ```text
//! formula := (formula (VAR ...) body) | body
//! body    := true | false
//!          | (sing X) | (empty X)
//!          | (subset X Y) | (equal X Y) | (member X Y) | (le X Y)
//!          | (not body) | (and body ...) | (or body ...)
//!          | (implies body body) | (iff body body)
//!          | (exists X body) | (forall X body)
//! ```
//!
//! Without the `formula` wrapper the free variables are taken in order of
//! first occurrence. `(member X Y)` holds when `X` is a singleton `{x}` with
//! `x ∈ Y`; `(le X Y)` holds when both are singletons `{x}`, `{y}` with `x ◁ y`.

use std::fmt;

use crate::error::{Error, Result};
use crate::sexpr::{self, Sexp};
use crate::structures::{FinStructure, Kind, Subset};
use crate::theory::{atom_index, AtomKind, Frame, Theory};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    True,
    False,
    Unary(AtomKind, String),
    Binary(AtomKind, String, String),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Exists(String, Box<Expr>),
    Forall(String, Box<Expr>),
}

/// A formula with an explicit, ordered list of free variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Formula {
    pub vars: Vec<String>,
    pub body: Expr,
}

fn atom_name(k: AtomKind) -> &'static str {
    match k {
        AtomKind::Sing => "sing",
        AtomKind::Empty => "empty",
        AtomKind::Subset => "subset",
        AtomKind::Equal => "equal",
        AtomKind::Member => "member",
        AtomKind::Le => "le",
    }
}

const KEYWORDS: &[&str] = &[
    "true", "false", "sing", "empty", "subset", "equal", "member", "le", "not", "and", "or",
    "implies", "iff", "exists", "forall", "formula",
];

fn variable(s: &Sexp) -> Result<String> {
    match s.as_atom() {
        Some(a) if !KEYWORDS.contains(&a) => Ok(a.to_string()),
        _ => Err(Error::Parse(format!("expected a variable, got `{s}`"))),
    }
}

fn parse_expr(s: &Sexp) -> Result<Expr> {
    if let Some(a) = s.as_atom() {
        return match a {
            "true" => Ok(Expr::True),
            "false" => Ok(Expr::False),
            _ => Err(Error::Parse(format!("bare atom `{a}` is not a formula"))),
        };
    }
    let (head, args) = s.as_form().ok_or_else(|| Error::Parse(format!("malformed formula `{s}`")))?;
    let arity = |n: usize| -> Result<()> {
        if args.len() == n {
            Ok(())
        } else {
            Err(Error::Parse(format!("`{head}` takes {n} argument(s), got {}", args.len())))
        }
    };
    let unary = |k| -> Result<Expr> {
        arity(1)?;
        Ok(Expr::Unary(k, variable(&args[0])?))
    };
    let binary = |k| -> Result<Expr> {
        arity(2)?;
        Ok(Expr::Binary(k, variable(&args[0])?, variable(&args[1])?))
    };
    match head {
        "sing" => unary(AtomKind::Sing),
        "empty" => unary(AtomKind::Empty),
        "subset" => binary(AtomKind::Subset),
        "equal" => binary(AtomKind::Equal),
        "member" => binary(AtomKind::Member),
        "le" => binary(AtomKind::Le),
        "not" => {
            arity(1)?;
            Ok(Expr::Not(Box::new(parse_expr(&args[0])?)))
        }
        "and" => Ok(Expr::And(args.iter().map(parse_expr).collect::<Result<_>>()?)),
        "or" => Ok(Expr::Or(args.iter().map(parse_expr).collect::<Result<_>>()?)),
        "implies" => {
            arity(2)?;
            Ok(Expr::Or(vec![Expr::Not(Box::new(parse_expr(&args[0])?)), parse_expr(&args[1])?]))
        }
        "iff" => {
            arity(2)?;
            let (a, b) = (parse_expr(&args[0])?, parse_expr(&args[1])?);
            Ok(Expr::Or(vec![
                Expr::And(vec![a.clone(), b.clone()]),
                Expr::And(vec![Expr::Not(Box::new(a)), Expr::Not(Box::new(b))]),
            ]))
        }
        "exists" | "forall" => {
            arity(2)?;
            let v = variable(&args[0])?;
            let body = Box::new(parse_expr(&args[1])?);
            Ok(if head == "exists" { Expr::Exists(v, body) } else { Expr::Forall(v, body) })
        }
        other => Err(Error::Parse(format!("unknown connective `{other}`"))),
    }
}

impl Expr {
    pub fn sing(x: &str) -> Expr {
        Expr::Unary(AtomKind::Sing, x.into())
    }

    pub fn empty(x: &str) -> Expr {
        Expr::Unary(AtomKind::Empty, x.into())
    }

    pub fn binary(k: AtomKind, x: &str, y: &str) -> Expr {
        Expr::Binary(k, x.into(), y.into())
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn exists(x: &str, e: Expr) -> Expr {
        Expr::Exists(x.into(), Box::new(e))
    }

    pub fn forall(x: &str, e: Expr) -> Expr {
        Expr::Forall(x.into(), Box::new(e))
    }

    /// Quantifier depth.
    pub fn qd(&self) -> usize {
        match self {
            Expr::True | Expr::False | Expr::Unary(..) | Expr::Binary(..) => 0,
            Expr::Not(e) => e.qd(),
            Expr::And(es) | Expr::Or(es) => es.iter().map(Expr::qd).max().unwrap_or(0),
            Expr::Exists(_, e) | Expr::Forall(_, e) => 1 + e.qd(),
        }
    }

    fn free_into(&self, bound: &mut Vec<String>, out: &mut Vec<String>) {
        let mut note = |v: &String, bound: &Vec<String>| {
            if !bound.contains(v) && !out.contains(v) {
                out.push(v.clone());
            }
        };
        match self {
            Expr::True | Expr::False => {}
            Expr::Unary(_, x) => note(x, bound),
            Expr::Binary(_, x, y) => {
                note(x, bound);
                note(y, bound);
            }
            Expr::Not(e) => e.free_into(bound, out),
            Expr::And(es) | Expr::Or(es) => es.iter().for_each(|e| e.free_into(bound, out)),
            Expr::Exists(v, e) | Expr::Forall(v, e) => {
                bound.push(v.clone());
                e.free_into(bound, out);
                bound.pop();
            }
        }
    }

    /// Free variables in order of first occurrence.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.free_into(&mut Vec::new(), &mut out);
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::True => f.write_str("true"),
            Expr::False => f.write_str("false"),
            Expr::Unary(k, x) => write!(f, "({} {x})", atom_name(*k)),
            Expr::Binary(k, x, y) => write!(f, "({} {x} {y})", atom_name(*k)),
            Expr::Not(e) => write!(f, "(not {e})"),
            Expr::And(es) | Expr::Or(es) => {
                f.write_str(if matches!(self, Expr::And(_)) { "(and" } else { "(or" })?;
                for e in es {
                    write!(f, " {e}")?;
                }
                f.write_str(")")
            }
            Expr::Exists(v, e) => write!(f, "(exists {v} {e})"),
            Expr::Forall(v, e) => write!(f, "(forall {v} {e})"),
        }
    }
}

impl Formula {
    pub fn new(vars: Vec<String>, body: Expr) -> Result<Formula> {
        for v in body.free_vars() {
            if !vars.contains(&v) {
                return Err(Error::UnboundVariable(v));
            }
        }
        Ok(Formula { vars, body })
    }

    /// A formula whose free variables are those of `body` in occurrence order.
    pub fn from_body(body: Expr) -> Formula {
        Formula { vars: body.free_vars(), body }
    }

    pub fn parse(src: &str) -> Result<Formula> {
        let s = sexpr::parse(src)?;
        if let Some(("formula", args)) = s.as_form() {
            if args.len() != 2 {
                return Err(Error::Parse("`formula` takes a variable list and a body".into()));
            }
            let vars = match &args[0] {
                Sexp::List(vs) => vs.iter().map(variable).collect::<Result<Vec<_>>>()?,
                other => return Err(Error::Parse(format!("expected a variable list, got `{other}`"))),
            };
            return Formula::new(vars, parse_expr(&args[1])?);
        }
        Ok(Formula::from_body(parse_expr(&s)?))
    }

    pub fn qd(&self) -> usize {
        self.body.qd()
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(formula ({}) {})", self.vars.join(" "), self.body)
    }
}

fn lookup(env: &[String], v: &str) -> Result<usize> {
    env.iter().rposition(|x| x == v).ok_or_else(|| Error::UnboundVariable(v.to_string()))
}

// ---------------------------------------------------------------------------
// Standard semantics
// ---------------------------------------------------------------------------

struct Direct<'a> {
    frame: &'a Frame,
}

impl Direct<'_> {
    fn eval(&self, e: &Expr, names: &mut Vec<String>, vals: &mut Vec<u64>) -> Result<bool> {
        Ok(match e {
            Expr::True => true,
            Expr::False => false,
            Expr::Unary(k, x) => {
                let a = vals[lookup(names, x)?];
                match k {
                    AtomKind::Sing => a.count_ones() == 1,
                    _ => a == 0,
                }
            }
            Expr::Binary(k, x, y) => {
                let a = vals[lookup(names, x)?];
                let b = vals[lookup(names, y)?];
                match k {
                    AtomKind::Subset => a & !b == 0,
                    AtomKind::Equal => a == b,
                    AtomKind::Member => a.count_ones() == 1 && a & b != 0,
                    _ => {
                        self.frame.kind != Kind::Set
                            && a.count_ones() == 1
                            && b.count_ones() == 1
                            && self.frame.up[a.trailing_zeros() as usize] & b != 0
                    }
                }
            }
            Expr::Not(e) => !self.eval(e, names, vals)?,
            Expr::And(es) => {
                for e in es {
                    if !self.eval(e, names, vals)? {
                        return Ok(false);
                    }
                }
                true
            }
            Expr::Or(es) => {
                for e in es {
                    if self.eval(e, names, vals)? {
                        return Ok(true);
                    }
                }
                false
            }
            Expr::Exists(v, body) | Expr::Forall(v, body) => {
                let want = matches!(e, Expr::Exists(..));
                let full = self.frame.full();
                names.push(v.clone());
                let mut found = !want;
                let mut b = 0u64;
                loop {
                    vals.push(b);
                    let r = self.eval(body, names, vals);
                    vals.pop();
                    if r? == want {
                        found = want;
                        break;
                    }
                    if b == full {
                        break;
                    }
                    b += 1;
                }
                names.pop();
                found
            }
        })
    }
}

/// Truth of `f` in `(s, assignment)`; quantifiers range over all subsets.
pub fn eval_direct(f: &Formula, s: &FinStructure, assignment: &[Subset]) -> Result<bool> {
    if assignment.len() < f.arity() {
        return Err(Error::UnboundVariable(f.vars[assignment.len()].clone()));
    }
    if s.len() * f.qd() > 40 {
        return Err(Error::BoundsExceeded(format!(
            "{} elements under {} nested quantifiers",
            s.len(),
            f.qd()
        )));
    }
    let frame = Frame::of(s)?;
    let mut vals = assignment[..f.arity()]
        .iter()
        .map(|x| {
            if x.iter().any(|i| i >= s.len()) {
                return Err(Error::UnknownElement(format!("{:?}", x.as_slice())));
            }
            Ok(x.mask().expect("fits: structure has fewer than 64 elements"))
        })
        .collect::<Result<Vec<u64>>>()?;
    let mut names = f.vars.clone();
    Direct { frame: &frame }.eval(&f.body, &mut names, &mut vals)
}

// ---------------------------------------------------------------------------
// Evaluation from a theory
// ---------------------------------------------------------------------------

fn eval_theory(e: &Expr, t: &Theory, names: &mut Vec<String>) -> Result<bool> {
    let l = t.arity();
    Ok(match e {
        Expr::True => true,
        Expr::False => false,
        Expr::Unary(k, x) => t.atom(atom_index(*k, lookup(names, x)?, 0, l))?,
        Expr::Binary(k, x, y) => t.atom(atom_index(*k, lookup(names, x)?, lookup(names, y)?, l))?,
        Expr::Not(e) => !eval_theory(e, t, names)?,
        Expr::And(es) => {
            for e in es {
                if !eval_theory(e, t, names)? {
                    return Ok(false);
                }
            }
            true
        }
        Expr::Or(es) => {
            for e in es {
                if eval_theory(e, t, names)? {
                    return Ok(true);
                }
            }
            false
        }
        Expr::Exists(v, body) | Expr::Forall(v, body) => {
            let want = matches!(e, Expr::Exists(..));
            names.push(v.clone());
            let mut result = !want;
            for m in t.members() {
                match eval_theory(body, m, names) {
                    Ok(r) if r == want => {
                        result = want;
                        break;
                    }
                    Ok(_) => {}
                    Err(err) => {
                        names.pop();
                        return Err(err);
                    }
                }
            }
            names.pop();
            result
        }
    })
}

/// Decides `f` from a theory of sufficient rank, without any witness structure.
pub fn eval_on_theory(f: &Formula, t: &Theory) -> Result<bool> {
    if f.qd() > t.rank() {
        return Err(Error::DepthTooLarge { rank: t.rank(), depth: f.qd() });
    }
    if f.arity() != t.arity() {
        return Err(Error::ArityMismatch { expected: t.arity(), got: f.arity() });
    }
    let mut names = f.vars.clone();
    eval_theory(&f.body, t, &mut names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::compute_theory;

    #[test]
    fn parse_and_print() {
        let f = Formula::parse("(exists X (and (sing X) (member X P0)))").unwrap();
        assert_eq!(f.vars, vec!["P0".to_string()]);
        assert_eq!(f.qd(), 1);
        let again = Formula::parse(&f.to_string()).unwrap();
        assert_eq!(again, f);
    }

    #[test]
    fn wrapper_fixes_variable_order() {
        let f = Formula::parse("(formula (Y X) (subset X Y))").unwrap();
        assert_eq!(f.vars, vec!["Y".to_string(), "X".to_string()]);
        assert!(Formula::parse("(formula (X) (subset X Y))").is_err());
    }

    #[test]
    fn direct_semantics_basics() {
        let f = Formula::parse("(exists X (sing X))").unwrap();
        assert!(eval_direct(&f, &FinStructure::chain(2), &[]).unwrap());
        assert!(!eval_direct(&f, &FinStructure::chain(0), &[]).unwrap());
        let le = Formula::parse("(formula (x y) (le x y))").unwrap();
        let c = FinStructure::chain(2);
        let a = [Subset::singleton(0), Subset::singleton(1)];
        assert!(eval_direct(&le, &c, &a).unwrap());
        assert!(eval_direct(&le, &c, &[a[1].clone(), a[0].clone()]).map(|b| !b).unwrap());
    }

    #[test]
    fn theory_evaluation_matches_on_two_chain() {
        let f = Formula::parse("(exists X (and (not (sing X)) (not (empty X))))").unwrap();
        let t = compute_theory(&FinStructure::chain(2), &[], 1).unwrap();
        assert!(eval_on_theory(&f, &t).unwrap());
        let deep = Formula::parse("(exists X (exists Y (subset X Y)))").unwrap();
        assert!(matches!(eval_on_theory(&deep, &t), Err(Error::DepthTooLarge { .. })));
    }

    #[test]
    fn unbound_assignment_is_an_error() {
        let f = Formula::parse("(sing X)").unwrap();
        assert!(matches!(eval_direct(&f, &FinStructure::chain(1), &[]), Err(Error::UnboundVariable(_))));
    }
}
