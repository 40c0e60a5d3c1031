use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use mso_workbench::composition::{coloring_of, sum, verify_fd, FdConfig, FdTheorem};
use mso_workbench::falsifier::{check_choice_function, find_indiscernible_pair, find_monochromatic, ChoiceVerdict};
use mso_workbench::formula::{eval_direct, eval_on_theory};
use mso_workbench::report::{InputRef, Report, Status};
use mso_workbench::scattered::{
    build_z_set, catalog_term, embed_lex, hdeg, realize_prefix, thin_homogeneous, LexModel, OrderTerm,
};
use mso_workbench::synthesis::{
    classify, synth_chain_wellorder, synth_tree_wellorder, verify_certificate, ChainPresentation, TreeTerm,
    WellOrderCertificate,
};
use mso_workbench::theory::{compute_theory, realized_theories};
use mso_workbench::{Error, FinStructure, Formula, Kind, Result, Subset, Theory};

#[derive(Parser)]
#[command(name = "msow", version, about = "Partial theories, composition checks and definable choice on finite structures")]
struct Cli {
    /// Report destination; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only `json` is supported.
    #[arg(long, global = true, default_value = "json")]
    format: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute, add, reduce or enumerate partial theories.
    #[command(subcommand)]
    Theory(TheoryCmd),
    /// Evaluate a formula on a structure, directly and through its theory.
    Eval {
        #[arg(long)]
        structure: PathBuf,
        #[command(flatten)]
        formula: FormulaArg,
        #[command(flatten)]
        guard: Guard,
    },
    /// Functional-dependency checks of the composition theorems.
    #[command(subcommand)]
    Compose(ComposeCmd),
    /// Order terms: Hausdorff degree, catalog chains, finite realizations.
    #[command(subcommand)]
    Scattered(ScatteredCmd),
    /// Lexicographic models, homogeneous thinning and Z-sets.
    #[command(subcommand)]
    Lexmodel(LexCmd),
    /// Tame/wild classification of a tree term.
    Classify {
        #[command(flatten)]
        term: TermArg,
    },
    /// Synthesize a well-order certificate.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Check a well-order certificate against a structure.
    VerifyCert {
        #[arg(long)]
        structure: PathBuf,
        #[arg(long)]
        cert: PathBuf,
    },
    /// Counterexample search.
    #[command(subcommand)]
    Falsify(FalsifyCmd),
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// `Th^n` of a structure with its predicates as the tuple.
    Compute {
        #[arg(long)]
        structure: PathBuf,
        #[arg(long)]
        depth: usize,
        #[command(flatten)]
        guard: Guard,
    },
    /// Sum of two chain theories.
    Sum {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
    },
    /// Reduce a theory to a smaller depth.
    Reduce {
        #[arg(long)]
        theory: PathBuf,
        #[arg(long)]
        depth: usize,
    },
    /// Theories realized by structures up to a size bound.
    Realized {
        #[arg(long, value_parser = parse_kind)]
        kind: Kind,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        arity: usize,
        #[arg(long)]
        bound: usize,
        #[command(flatten)]
        guard: Guard,
    },
}

#[derive(Subcommand)]
enum ComposeCmd {
    Verify {
        #[arg(long)]
        theorem: FdTheorem,
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Defaults to n + 2.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        max_elements: usize,
    },
}

#[derive(Subcommand)]
enum ScatteredCmd {
    /// Hausdorff degree of an order term.
    Hdeg {
        #[command(flatten)]
        term: TermArg,
    },
    /// Catalog chain `C_n` (or its reverse).
    Catalog {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        starred: bool,
    },
    /// Finite prefix realization of an order term.
    Realize {
        #[command(flatten)]
        term: TermArg,
        #[arg(long)]
        budget: usize,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    height: usize,
    #[arg(long)]
    branching: usize,
    /// Swap ascending and descending levels.
    #[arg(long)]
    flipped: bool,
}

#[derive(Args)]
struct HostArgs {
    /// Order term of the host chain.
    #[arg(long)]
    host: String,
    #[arg(long)]
    budget: usize,
    #[arg(long)]
    depth: usize,
    /// Single predicate holding the positions divisible by this number.
    #[arg(long)]
    every: Option<usize>,
}

#[derive(Subcommand)]
enum LexCmd {
    Build {
        #[command(flatten)]
        model: ModelArgs,
    },
    Thin {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        host: HostArgs,
    },
    Zset {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        host: HostArgs,
        /// Use `t_k = t_l`; the first equal pair when absent.
        #[arg(long, requires = "l")]
        k: Option<usize>,
        #[arg(long, requires = "k")]
        l: Option<usize>,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Nested-sum chain, from a presentation file or a catalog prefix.
    Chain {
        #[arg(long, conflicts_with_all = ["catalog", "width", "starred"])]
        presentation: Option<PathBuf>,
        #[arg(long, requires = "width")]
        catalog: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        starred: bool,
        /// Declared degree; defaults to the nesting depth.
        #[arg(long)]
        degree: Option<usize>,
        /// Also write the presented chain as a structure file.
        #[arg(long)]
        chain_out: Option<PathBuf>,
    },
    /// Well-order certificate for a finite tree.
    Tree {
        #[arg(long)]
        structure: PathBuf,
    },
}

#[derive(Subcommand)]
enum FalsifyCmd {
    /// Indiscernible pair for the structure's predicates as parameters.
    Pair {
        #[arg(long)]
        structure: PathBuf,
        #[arg(long)]
        depth: usize,
        #[command(flatten)]
        guard: Guard,
    },
    /// Does `f(x, X, P̄)` define a choice function?
    Choice {
        #[arg(long)]
        structure: PathBuf,
        #[command(flatten)]
        formula: FormulaArg,
    },
    /// Monochromatic subset of the restriction-theory colouring of a chain.
    Mono {
        #[arg(long)]
        structure: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        k: usize,
    },
}

#[derive(Args)]
struct FormulaArg {
    /// File holding a formula s-expression.
    #[arg(long, conflicts_with = "expr")]
    formula: Option<PathBuf>,
    /// Inline formula s-expression.
    #[arg(long)]
    expr: Option<String>,
}

#[derive(Args)]
struct TermArg {
    #[arg(long, conflicts_with = "term_file")]
    term: Option<String>,
    #[arg(long)]
    term_file: Option<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct Guard {
    /// Lift the enumeration limits.
    #[arg(long)]
    force: bool,
}

impl Guard {
    fn check(self, elements: usize, depth: usize) -> Result<()> {
        let fine = match depth {
            0..=2 => elements <= 7,
            3 => elements <= 4,
            _ => false,
        };
        if fine || self.force {
            Ok(())
        } else {
            Err(Error::BoundsExceeded(format!(
                "{elements} elements at depth {depth}; limits are 7 elements up to depth 2 and 4 at depth 3 (use --force)"
            )))
        }
    }
}

fn parse_kind(s: &str) -> std::result::Result<Kind, String> {
    match s {
        "chain" => Ok(Kind::Chain),
        "tree" => Ok(Kind::Tree),
        "set" => Ok(Kind::Set),
        _ => Err(format!("unknown kind `{s}`")),
    }
}

struct Ctx {
    report: Report,
}

impl Ctx {
    fn read(&mut self, path: &Path) -> Result<String> {
        let (input, text) = InputRef::read(path)?;
        self.report.inputs.push(input);
        Ok(text)
    }

    fn structure(&mut self, path: &Path) -> Result<FinStructure> {
        let text = self.read(path)?;
        FinStructure::from_json(&text)
    }

    fn theory(&mut self, path: &Path) -> Result<Theory> {
        let text = self.read(path)?;
        let v: Value = serde_json::from_str(&text)?;
        // a bare theory, or the report of a previous `theory` command
        match v.get("result").and_then(|r| r.get("theory")) {
            Some(t) => Theory::from_json_value(t),
            None => Theory::from_json_value(&v),
        }
    }

    fn formula(&mut self, f: &FormulaArg) -> Result<Formula> {
        match (&f.formula, &f.expr) {
            (Some(p), _) => {
                let text = self.read(p)?;
                Formula::parse(&text)
            }
            (None, Some(e)) => Formula::parse(e),
            (None, None) => Err(Error::Precondition("give --formula or --expr".into())),
        }
    }

    fn text_arg(&mut self, inline: &Option<String>, file: &Option<PathBuf>) -> Result<String> {
        match (inline, file) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(p)) => self.read(p),
            (None, None) => Err(Error::Precondition("give --term or --term-file".into())),
        }
    }

    fn order_term(&mut self, t: &TermArg) -> Result<OrderTerm> {
        let text = self.text_arg(&t.term, &t.term_file)?;
        OrderTerm::parse(&text)
    }

    fn tree_term(&mut self, t: &TermArg) -> Result<TreeTerm> {
        let text = self.text_arg(&t.term, &t.term_file)?;
        TreeTerm::parse(&text)
    }
}

fn ids(s: &FinStructure, a: &Subset) -> Vec<String> {
    a.iter().map(|i| s.id(i).to_string()).collect()
}

fn model(m: &ModelArgs) -> Result<LexModel> {
    LexModel::with_parity(m.height, m.branching, m.flipped)
}

fn host_setup(h: &HostArgs, lm: &LexModel) -> Result<(FinStructure, Vec<usize>, Vec<Subset>)> {
    let term = OrderTerm::parse(&h.host)?;
    let chain = realize_prefix(&term, h.budget).to_chain();
    let pos = embed_lex(lm, chain.len()).ok_or_else(|| {
        Error::Precondition(format!("a realization with {} points cannot hold {} model nodes", chain.len(), lm.len()))
    })?;
    let tuple = match h.every {
        Some(0) => return Err(Error::Precondition("--every must be positive".into())),
        Some(k) => vec![(0..chain.len()).filter(|i| i % k == 0).collect()],
        None => Vec::new(),
    };
    Ok((chain, pos, tuple))
}

fn run(cli: &Cli) -> Result<Report> {
    if cli.format != "json" {
        return Err(Error::Precondition(format!("unsupported format `{}`", cli.format)));
    }
    let (name, args) = describe(&cli.cmd);
    let mut cx = Ctx { report: Report::new(&name, args) };
    let result = dispatch(&cli.cmd, &mut cx)?;
    cx.report.result = result;
    Ok(cx.report)
}

fn describe(cmd: &Cmd) -> (String, Value) {
    let name = match cmd {
        Cmd::Theory(TheoryCmd::Compute { .. }) => "theory compute",
        Cmd::Theory(TheoryCmd::Sum { .. }) => "theory sum",
        Cmd::Theory(TheoryCmd::Reduce { .. }) => "theory reduce",
        Cmd::Theory(TheoryCmd::Realized { .. }) => "theory realized",
        Cmd::Eval { .. } => "eval",
        Cmd::Compose(_) => "compose verify",
        Cmd::Scattered(ScatteredCmd::Hdeg { .. }) => "scattered hdeg",
        Cmd::Scattered(ScatteredCmd::Catalog { .. }) => "scattered catalog",
        Cmd::Scattered(ScatteredCmd::Realize { .. }) => "scattered realize",
        Cmd::Lexmodel(LexCmd::Build { .. }) => "lexmodel build",
        Cmd::Lexmodel(LexCmd::Thin { .. }) => "lexmodel thin",
        Cmd::Lexmodel(LexCmd::Zset { .. }) => "lexmodel zset",
        Cmd::Classify { .. } => "classify",
        Cmd::Synth(SynthCmd::Chain { .. }) => "synth chain",
        Cmd::Synth(SynthCmd::Tree { .. }) => "synth tree",
        Cmd::VerifyCert { .. } => "verify-cert",
        Cmd::Falsify(FalsifyCmd::Pair { .. }) => "falsify pair",
        Cmd::Falsify(FalsifyCmd::Choice { .. }) => "falsify choice",
        Cmd::Falsify(FalsifyCmd::Mono { .. }) => "falsify mono",
    };
    // the command line as given
    let argv: Vec<String> = std::env::args().skip(1).collect();
    (name.to_string(), json!(argv))
}

fn dispatch(cmd: &Cmd, cx: &mut Ctx) -> Result<Value> {
    match cmd {
        Cmd::Theory(TheoryCmd::Compute { structure, depth, guard }) => {
            let s = cx.structure(structure)?;
            guard.check(s.len(), *depth)?;
            let t = compute_theory(&s, &s.predicate_tuple(), *depth)?;
            Ok(json!({ "fingerprint": s.fingerprint(), "theory": t.to_json_value(), "hash": t.content_hash() }))
        }
        Cmd::Theory(TheoryCmd::Sum { left, right }) => {
            let (a, b) = (cx.theory(left)?, cx.theory(right)?);
            let t = sum(&a, &b)?;
            Ok(json!({ "theory": t.to_json_value(), "hash": t.content_hash() }))
        }
        Cmd::Theory(TheoryCmd::Reduce { theory, depth }) => {
            let t = cx.theory(theory)?.reduce_depth(*depth)?;
            Ok(json!({ "theory": t.to_json_value(), "hash": t.content_hash() }))
        }
        Cmd::Theory(TheoryCmd::Realized { kind, depth, arity, bound, guard }) => {
            guard.check(*bound, *depth)?;
            let ts = realized_theories(*depth, *arity, *bound, *kind)?;
            Ok(json!({
                "count": ts.len(),
                "count_is_lower_bound": true,
                "hashes": ts.iter().map(Theory::content_hash).collect::<Vec<_>>(),
            }))
        }
        Cmd::Eval { structure, formula, guard } => {
            let s = cx.structure(structure)?;
            let f = cx.formula(formula)?;
            guard.check(s.len(), f.qd())?;
            let tuple = s.predicate_tuple();
            let direct = eval_direct(&f, &s, &tuple)?;
            let via = eval_on_theory(&f, &compute_theory(&s, &tuple, f.qd())?)?;
            if direct != via {
                cx.report.status = Status::Flagged;
            }
            Ok(json!({ "fingerprint": s.fingerprint(), "direct": direct, "on_theory": via, "agree": direct == via }))
        }
        Cmd::Compose(ComposeCmd::Verify { theorem, n, m, trials, seed, max_elements }) => {
            let mut cfg = FdConfig::new(*theorem, *n, *trials, *seed);
            if let Some(m) = m {
                cfg.m = *m;
            }
            cfg.max_elements = *max_elements;
            let r = verify_fd(&cfg)?;
            if !r.passed() {
                cx.report.status = Status::Flagged;
            }
            Ok(serde_json::to_value(&r)?)
        }
        Cmd::Scattered(ScatteredCmd::Hdeg { term }) => {
            let t = cx.order_term(term)?;
            Ok(json!({ "term": t.to_string(), "hdeg": hdeg(&t) }))
        }
        Cmd::Scattered(ScatteredCmd::Catalog { n, starred }) => {
            let t = catalog_term(*n, *starred)?;
            Ok(json!({ "term": t.to_string(), "hdeg": hdeg(&t) }))
        }
        Cmd::Scattered(ScatteredCmd::Realize { term, budget }) => {
            let t = cx.order_term(term)?;
            let r = realize_prefix(&t, *budget);
            Ok(json!({ "term": t.to_string(), "realization": r.to_json() }))
        }
        Cmd::Lexmodel(LexCmd::Build { model: m }) => {
            let lm = model(m)?;
            let order: Vec<String> = lm.order().iter().map(|&i| lm.name(i)).collect();
            Ok(json!({ "height": lm.height(), "branching": lm.branching(), "size": lm.len(), "order": order }))
        }
        Cmd::Lexmodel(LexCmd::Thin { model: m, host }) => {
            let lm = model(m)?;
            let (chain, pos, tuple) = host_setup(host, &lm)?;
            let r = thin_homogeneous(&lm, &pos, &chain, &tuple, host.depth)?;
            let violation = r.homogeneity_violation(&lm);
            if violation.is_some() {
                cx.report.status = Status::Flagged;
            }
            Ok(json!({
                "host_size": chain.len(),
                "mode": r.mode,
                "survivors": r.survivors.iter().map(|&v| lm.name(v)).collect::<Vec<_>>(),
                "kept": r.kept.iter().map(|(&v, ks)| (lm.name(v), json!(ks))).collect::<serde_json::Map<_, _>>(),
                "level_theories": r.level_theories.iter().map(Theory::content_hash).collect::<Vec<_>>(),
                "homogeneous": violation.is_none(),
            }))
        }
        Cmd::Lexmodel(LexCmd::Zset { model: m, host, k, l }) => {
            let lm = model(m)?;
            let (chain, pos, tuple) = host_setup(host, &lm)?;
            let r = thin_homogeneous(&lm, &pos, &chain, &tuple, host.depth)?;
            let ts = &r.level_theories;
            let (k, l) = match (k, l) {
                (Some(k), Some(l)) => (*k, *l),
                _ => (1..=ts.len())
                    .flat_map(|k| (k + 1..=ts.len()).map(move |l| (k, l)))
                    .find(|&(k, l)| ts[k - 1] == ts[l - 1])
                    .ok_or_else(|| Error::Precondition("no two level theories coincide".into()))?,
            };
            let z = build_z_set(&lm, &r, k, l)?;
            let mono = z.is_monochromatic(&lm, &r);
            if !mono {
                cx.report.status = Status::Flagged;
            }
            Ok(json!({
                "k": k,
                "l": l,
                "level": z.level,
                "nodes": z.nodes.iter().map(|&v| lm.name(v)).collect::<Vec<_>>(),
                "positions": z.nodes.iter().map(|&v| pos[v]).collect::<Vec<_>>(),
                "left_len": z.left_len,
                "theory_hash": z.theory.content_hash(),
                "monochromatic": mono,
            }))
        }
        Cmd::Classify { term } => {
            let t = cx.tree_term(term)?;
            Ok(serde_json::to_value(classify(&t))?)
        }
        Cmd::Synth(SynthCmd::Chain { presentation, catalog, width, starred, degree, chain_out }) => {
            let p: ChainPresentation = match (presentation, catalog) {
                (Some(path), _) => serde_json::from_str(&cx.read(path)?)?,
                (None, Some(n)) => ChainPresentation::catalog(*n, *starred, width.unwrap_or(2))?,
                (None, None) => return Err(Error::Precondition("give --presentation or --catalog".into())),
            };
            let n = match degree {
                Some(d) => *d,
                None => p.degree()?,
            };
            let cert = synth_chain_wellorder(&p, n)?;
            if let Some(path) = chain_out {
                std::fs::write(path, p.chain().to_json())?;
            }
            Ok(serde_json::to_value(&cert)?)
        }
        Cmd::Synth(SynthCmd::Tree { structure }) => {
            let s = cx.structure(structure)?;
            Ok(serde_json::to_value(synth_tree_wellorder(&s)?)?)
        }
        Cmd::VerifyCert { structure, cert } => {
            let s = cx.structure(structure)?;
            let text = cx.read(cert)?;
            // certificates may be bare or wrapped in a report
            let v: Value = serde_json::from_str(&text)?;
            let c: WellOrderCertificate = serde_json::from_value(v.get("result").cloned().unwrap_or(v))?;
            let r = verify_certificate(&s, &c);
            if !r.accepted {
                cx.report.status = Status::Flagged;
            }
            Ok(json!({ "fingerprint": s.fingerprint(), "accepted": r.accepted, "violations": r.violations }))
        }
        Cmd::Falsify(FalsifyCmd::Pair { structure, depth, guard }) => {
            let s = cx.structure(structure)?;
            guard.check(s.len(), *depth)?;
            let params = s.predicate_tuple();
            match find_indiscernible_pair(&s, &params, *depth)? {
                Some(w) => {
                    cx.report.status = Status::Flagged;
                    Ok(json!({ "witness": w.to_json(&s, &params) }))
                }
                None => Ok(json!({ "fingerprint": s.fingerprint(), "witness": null })),
            }
        }
        Cmd::Falsify(FalsifyCmd::Choice { structure, formula }) => {
            let s = cx.structure(structure)?;
            let f = cx.formula(formula)?;
            let v = check_choice_function(&s, &f, &s.predicate_tuple())?;
            if v != ChoiceVerdict::Defines {
                cx.report.status = Status::Flagged;
            }
            Ok(json!({ "fingerprint": s.fingerprint(), "result": v.to_json(&s) }))
        }
        Cmd::Falsify(FalsifyCmd::Mono { structure, depth, k }) => {
            let s = cx.structure(structure)?;
            let col = coloring_of(&s, &s.predicate_tuple(), *depth)?;
            let found = find_monochromatic(&col, *k)?;
            if found.is_none() {
                cx.report.status = Status::Flagged;
            }
            let order = s.chain_order();
            Ok(json!({
                "fingerprint": s.fingerprint(),
                "distinct_colors": col.distinct_colors(),
                "subset": found.map(|ps| ids(&s, &ps.iter().map(|&p| order[p]).collect())),
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|r| r.emit(cli.out.as_deref()).map(|_| r.status)) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("msow: {e}");
            ExitCode::from(2)
        }
    }
}
