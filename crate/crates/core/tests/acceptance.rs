//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{complete_binary, lex_keys, random_presentation, random_subset, random_tree, rank_fixpoint, suite};
use mso_workbench::composition::{coloring_of, restriction_theory, sum, verify_fd, FdConfig, FdTheorem};
use mso_workbench::falsifier::find_indiscernible_pair;
use mso_workbench::formula::{eval_direct, eval_on_theory};
use mso_workbench::scattered::{
    build_z_set, catalog_term, embed_lex, hdeg, realize_prefix, thin_homogeneous, HdegTag, LexModel, OrderTerm,
};
use mso_workbench::synthesis::{rank_map, synth_chain_wellorder, synth_tree_wellorder, verify_certificate, WellOrderCertificate};
use mso_workbench::theory::{all_tuples, compute_theory, parent_maps, structures_up_to};
use mso_workbench::{FinStructure, Formula, Kind, Subset, Theory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: mso_workbench::Error) -> String {
    e.to_string()
}

// 1 ---------------------------------------------------------------------------

fn agreement_on(s: &FinStructure, tuple: &[Subset], formulas: &[Formula]) -> Result<usize, String> {
    let mut cache: Vec<Option<Theory>> = vec![None; 3 * 3];
    for f in formulas {
        let args = &tuple[..f.arity()];
        let slot = f.arity() * 3 + f.qd();
        if cache[slot].is_none() {
            cache[slot] = Some(compute_theory(s, args, f.qd()).map_err(err)?);
        }
        let via = eval_on_theory(f, cache[slot].as_ref().expect("filled")).map_err(err)?;
        let direct = eval_direct(f, s, args).map_err(err)?;
        ensure(via == direct, || format!("mismatch on {} with {:?}: {:?}", s.to_json(), args, f.vars))?;
    }
    Ok(formulas.len())
}

fn theory_semantics() -> Outcome {
    let formulas = suite();
    ensure(formulas.iter().all(|f| f.qd() <= 2 && f.arity() <= 2), || "suite exceeds bounds".into())?;
    let mut checks = 0;
    let mut structures = 0;
    for kind in [Kind::Set, Kind::Chain, Kind::Tree] {
        for s in structures_up_to(kind, 4) {
            structures += 1;
            for tuple in all_tuples(s.len(), 2) {
                checks += agreement_on(&s, &tuple, &formulas)?;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    for i in 0..300 {
        let s = match i % 3 {
            0 => FinStructure::pure_set(5),
            1 => FinStructure::chain(5),
            _ => random_tree(&mut rng, 5, true),
        };
        let tuple = vec![random_subset(&mut rng, 5), random_subset(&mut rng, 5)];
        checks += agreement_on(&s, &tuple, &formulas)?;
    }
    Ok(format!(
        "{} formulas, {structures} exhaustive structures + 300 samples at 5, {checks} evaluations, 0 mismatches",
        formulas.len()
    ))
}

// 2 ---------------------------------------------------------------------------

fn chain_sums() -> Outcome {
    let mut cases = 0;
    for m in 0..=2 {
        for arity in 0..=1 {
            for lc in 0..=3 {
                for ld in 0..=3 {
                    for a in all_tuples(lc, arity) {
                        for b in all_tuples(ld, arity) {
                            let c = FinStructure::chain(lc).with_tuple(&a).map_err(err)?;
                            let d = FinStructure::chain(ld).with_tuple(&b).map_err(err)?;
                            let cd = c.concat(&d).map_err(err)?;
                            let left = compute_theory(&c, &a, m).map_err(err)?;
                            let right = compute_theory(&d, &b, m).map_err(err)?;
                            let whole = compute_theory(&cd, &cd.predicate_tuple(), m).map_err(err)?;
                            ensure(sum(&left, &right).map_err(err)? == whole, || {
                                format!("m={m}: {a:?} + {b:?} differs from the concatenation")
                            })?;
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{cases} chain pairs, 0 violations"))
}

// 3 ---------------------------------------------------------------------------

fn indiscernible_pairs() -> Outcome {
    let mut parts = Vec::new();
    for l in 0..=2u32 {
        let above = (1usize << l) + 1;
        let s = FinStructure::pure_set(above);
        let tuples = all_tuples(above, l as usize);
        for p in &tuples {
            let w = find_indiscernible_pair(&s, p, 2).map_err(err)?;
            let w = w.ok_or_else(|| format!("l={l}: no pair on {above} elements for {p:?}"))?;
            ensure(w.recheck(&s, p).map_err(err)?, || format!("l={l}: witness fails recheck"))?;
        }
        let at = 1usize << l;
        let s = FinStructure::pure_set(at);
        let separating = all_tuples(at, l as usize)
            .into_iter()
            .filter(|p| matches!(find_indiscernible_pair(&s, p, 2), Ok(None)))
            .count();
        ensure(separating > 0, || format!("l={l}: every tuple on {at} elements has a pair"))?;
        parts.push(format!("l={l}: {}/{} found at {above}, {separating} separating at {at}", tuples.len(), tuples.len()));
    }
    Ok(parts.join("; "))
}

// 4 ---------------------------------------------------------------------------

fn hausdorff_catalog() -> Outcome {
    for n in 1..=5 {
        let got = hdeg(&catalog_term(n, false).map_err(err)?);
        ensure(got == HdegTag::Finite(n), || format!("hdeg(C_{n}) = {got}"))?;
    }
    let graded = hdeg(&OrderTerm::parse("(graded cn)").map_err(err)?);
    ensure(graded == HdegTag::AtLeastOmega, || format!("graded sum gives {graded}"))?;
    let q = hdeg(&OrderTerm::parse("(omega (concat (fin 1) rational))").map_err(err)?);
    ensure(q == HdegTag::NotScattered, || format!("rational term gives {q}"))?;
    Ok(format!("C_1..C_5 = 1..5, graded sum {graded}, rational term {q}"))
}

// 5 ---------------------------------------------------------------------------

fn rank_oracle() -> Outcome {
    let mut trees = 0;
    for n in 1..=6 {
        for p in parent_maps(n) {
            let t = FinStructure::tree_from_parents(&p).map_err(err)?;
            let got = rank_map(&t).map_err(err)?;
            ensure(got.0 == rank_fixpoint(&t), || format!("ranks differ on parents {p:?}"))?;
            trees += 1;
        }
    }
    for h in 0..=4 {
        let r = rank_map(&complete_binary(h)).map_err(err)?.rank(0);
        ensure(r == h, || format!("complete binary tree of height {h} has rank {r}"))?;
    }
    Ok(format!("{trees} labelled trees agree with the fixpoint; binary heights 0..4 exact"))
}

// 6 ---------------------------------------------------------------------------

/// Corrupts one aspect of a tree certificate; `None` when the certificate has
/// nothing of that kind to corrupt.
fn mutate(cert: &WellOrderCertificate, kind: usize, rng: &mut ChaCha8Rng) -> Option<(String, WellOrderCertificate)> {
    let mut bad = cert.clone();
    let gamma = &cert.tree.as_ref()?.gamma;
    match kind {
        0 => {
            let (i, e) = gamma.iter().enumerate().filter(|(_, e)| e.parent.is_some()).last()?;
            let pc = gamma[e.parent?].color;
            bad.recolor_branch(i, pc).ok()?;
            Some((format!("sub-branch {i} into its parent's colour {pc}"), bad))
        }
        1 => {
            let (name, ids) = bad.parameters.iter_mut().filter(|(k, v)| k.starts_with('D') && v.len() > 1).last()?;
            let gone = ids.remove(rng.gen_range(0..ids.len()));
            Some((format!("dropped {gone} from {name}"), bad))
        }
        2 => {
            let q = bad.parameters.get_mut("Q")?;
            let gone = q.pop()?;
            Some((format!("dropped {gone} from Q"), bad))
        }
        _ => {
            // prefer a marker off the main branch
            let all: Vec<String> = gamma.iter().rev().flat_map(|e| e.branch.clone()).collect();
            let m = bad.parameters.get_mut("M")?;
            let other = all.into_iter().find(|x| !m.contains(x))?;
            *m = vec![other.clone()];
            Some((format!("marker moved to {other}"), bad))
        }
    }
}

fn tree_synthesis() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut trees = Vec::new();
    for _ in 0..500 {
        let n = rng.gen_range(1..=7);
        let t = random_tree(&mut rng, n, true);
        let cert = synth_tree_wellorder(&t).map_err(err)?;
        let rep = verify_certificate(&t, &cert);
        ensure(rep.accepted, || format!("rejected {}: {:?}", t.to_json(), rep.violations))?;
        trees.push((t, cert));
    }
    let mut mutants = 0;
    let mut i = 0;
    while mutants < 50 {
        let (t, cert) = &trees[i % trees.len()];
        let kind = mutants % 4;
        i += 1;
        ensure(i < 10 * trees.len(), || format!("only {mutants} mutations applicable"))?;
        let Some((what, bad)) = mutate(cert, kind, &mut rng) else { continue };
        let rep = verify_certificate(t, &bad);
        ensure(!rep.accepted, || format!("mutation accepted on {}: {what}", t.to_json()))?;
        ensure(rep.violations.iter().all(|v| !v.check.is_empty() && !v.detail.is_empty()), || {
            format!("unlocated violation for {what}")
        })?;
        mutants += 1;
    }
    Ok("500/500 certificates accepted; 50/50 mutations rejected with located violations".into())
}

// 7 ---------------------------------------------------------------------------

fn chain_synthesis() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let mut cases = 0;
    for n in 1..=4 {
        for _ in 0..60 {
            let p = random_presentation(&mut rng, n, 30);
            let cert = synth_chain_wellorder(&p, n).map_err(err)?;
            ensure(cert.parameters.len() == n - 1, || format!("{} parameters at degree {n}", cert.parameters.len()))?;
            let c = p.chain();
            let ev = cert.evaluator(&c).map_err(err)?;
            let keys = lex_keys(&p);
            for x in 0..c.len() {
                for y in 0..c.len() {
                    ensure(ev.less(x, y) == (keys[x] < keys[y]), || {
                        format!("order differs at ({x}, {y}) for {}", serde_json::to_string(&p).unwrap())
                    })?;
                }
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} presentations of degree 1..4 (≤ 30 points) match the lexicographic oracle"))
}

// 8 ---------------------------------------------------------------------------

fn fd_checks() -> Outcome {
    let mut parts = Vec::new();
    for th in [FdTheorem::Successors, FdTheorem::Branches] {
        let mut cfg = FdConfig::new(th, 1, 200, 0x5eed_0008);
        cfg.m = 3;
        cfg.max_elements = 6;
        let rep = verify_fd(&cfg).map_err(err)?;
        if !rep.passed() {
            let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("fd-violations");
            std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            let path = dir.join(format!("{}.json", th.id()));
            std::fs::write(&path, serde_json::to_string_pretty(&rep).unwrap()).map_err(|e| e.to_string())?;
            return Err(format!("{}: {} violations, archived at {}", th.id(), rep.violations.len(), path.display()));
        }
        parts.push(format!("{}: 200 trials, {} comparable, 0 violations", th.id(), rep.comparable));
    }
    Ok(parts.join("; "))
}

// 9 ---------------------------------------------------------------------------

fn additivity() -> Outcome {
    let mut triples = 0usize;
    for len in 2..=6 {
        let c = FinStructure::chain(len);
        for m in 0..=2 {
            let mut tuples = all_tuples(len, 1);
            tuples.push(Vec::new());
            for tuple in tuples {
                let col = coloring_of(&c, &tuple, m).map_err(err)?;
                for x in 0..len {
                    for y in x + 1..len {
                        for z in y + 1..=len {
                            let s = sum(col.color(x, y), col.color(y, z)).map_err(err)?;
                            ensure(s == *col.color(x, z), || format!("len {len}, m {m}, {tuple:?}: ({x}, {y}, {z})"))?;
                            triples += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{triples} triples, all additive"))
}

// 10 --------------------------------------------------------------------------

fn thinning_scenario() -> Outcome {
    let model = LexModel::new(2, 8).map_err(err)?;
    let host = realize_prefix(&catalog_term(3, false).map_err(err)?, 512);
    let c = host.to_chain();
    let pos = embed_lex(&model, c.len()).ok_or("model does not fit the host")?;
    let p: Subset = (0..c.len()).filter(|i| i % 3 == 0).collect();
    let tuple = vec![p];
    let r = thin_homogeneous(&model, &pos, &c, &tuple, 1).map_err(err)?;
    if let Some((a, b)) = r.homogeneity_violation(&model) {
        return Err(format!("homogeneity fails at ({}, {})", model.name(a), model.name(b)));
    }
    let (k, l) = (1..=r.level_theories.len())
        .flat_map(|k| (k + 1..=r.level_theories.len()).map(move |l| (k, l)))
        .find(|&(k, l)| r.level_theories[k - 1] == r.level_theories[l - 1])
        .ok_or("no two level theories coincide")?;
    let z = build_z_set(&model, &r, k, l).map_err(err)?;
    let mut pairs = 0;
    for (i, &a) in z.nodes.iter().enumerate() {
        for &b in &z.nodes[i + 1..] {
            let (x, y) = (pos[a].min(pos[b]), pos[a].max(pos[b]));
            let t = restriction_theory(&c, &tuple, x, y, 1).map_err(err)?;
            ensure(t == z.theory, || format!("Z-set pair ({}, {}) has another colour", model.name(a), model.name(b)))?;
            pairs += 1;
        }
    }
    ensure(z.nodes.len() >= 2, || "Z-set too small".into())?;
    Ok(format!(
        "{:?} thinning, {} survivors, t_{k} = t_{l}; Z-set of {} nodes, {pairs} pairs recomputed",
        r.mode,
        r.survivors.len(),
        z.nodes.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("theory/semantics agreement", theory_semantics),
        ("chain sums", chain_sums),
        ("indiscernible pairs in pure sets", indiscernible_pairs),
        ("Hausdorff catalog", hausdorff_catalog),
        ("rank oracle", rank_oracle),
        ("tree well-order synthesis", tree_synthesis),
        ("chain well-order synthesis", chain_synthesis),
        ("functional dependencies", fd_checks),
        ("additivity", additivity),
        ("thinning and Z-set", thinning_scenario),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail} ({secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {why} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
