//! Shared helpers for integration tests: fixture paths, directory
//! snapshots, random generators and a second, independent evaluator.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

pub mod checks;
pub mod stub;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use specforge_core::logic::{ArithOp, CmpOp};
use specforge_core::planner::CallGraph;
use specforge_core::{Formula, Term};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(rel)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Every file under `dir` keyed by its relative path.
pub fn snapshot_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Names of files that differ between two snapshots.
pub fn dir_diff(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}

pub fn lines_of(rel: &str) -> Vec<String> {
    std::fs::read_to_string(fixture(rel))
        .unwrap()
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

// Second evaluator. Written against the documented semantics only:
// wrapping i64 arithmetic, truncating division, an atom with a zero
// divisor anywhere in it is false, uninterpreted predicates are false.

pub fn eval_term(t: &Term, env: &BTreeMap<String, i64>) -> Option<i64> {
    Some(match t {
        Term::Int(v) => *v,
        Term::Var(x) => *env.get(x)?,
        Term::Bin(op, a, b) => {
            let (x, y) = (eval_term(a, env)?, eval_term(b, env)?);
            match op {
                ArithOp::Add => x.wrapping_add(y),
                ArithOp::Sub => x.wrapping_sub(y),
                ArithOp::Mul => x.wrapping_mul(y),
                ArithOp::Div => {
                    if y == 0 {
                        return None;
                    }
                    x.wrapping_div(y)
                }
            }
        }
    })
}

pub fn eval_formula(f: &Formula, env: &BTreeMap<String, i64>) -> bool {
    match f {
        Formula::Bool(b) => *b,
        Formula::Cmp(op, a, b) => match (eval_term(a, env), eval_term(b, env)) {
            (Some(x), Some(y)) => match op {
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Eq => x == y,
                CmpOp::Ne => x != y,
                CmpOp::Ge => x >= y,
                CmpOp::Gt => x > y,
            },
            _ => false,
        },
        Formula::Pred(..) => false,
        Formula::Not(g) => !eval_formula(g, env),
        Formula::And(gs) => gs.iter().all(|g| eval_formula(g, env)),
        Formula::Or(gs) => gs.iter().any(|g| eval_formula(g, env)),
    }
}

/// Calls `visit` on every assignment of `vars` over [-bound, bound].
pub fn for_all_states(vars: &[String], bound: i64, mut visit: impl FnMut(&BTreeMap<String, i64>) -> bool) -> bool {
    let mut vals = vec![-bound; vars.len()];
    loop {
        let env: BTreeMap<String, i64> = vars.iter().cloned().zip(vals.iter().copied()).collect();
        if !visit(&env) {
            return false;
        }
        let mut i = 0;
        loop {
            if i == vals.len() {
                return true;
            }
            if vals[i] < bound {
                vals[i] += 1;
                break;
            }
            vals[i] = -bound;
            i += 1;
        }
    }
}

/// Brute-force `a ⊨ b` over the box.
pub fn entails(a: &Formula, b: &Formula, bound: i64) -> bool {
    let mut vars: BTreeSet<String> = a.vars();
    vars.extend(b.vars());
    let vars: Vec<String> = vars.into_iter().collect();
    for_all_states(&vars, bound, |env| !eval_formula(a, env) || eval_formula(b, env))
}

// Random structures.

pub fn random_term(r: &mut StdRng, vars: &[&str], depth: u32) -> Term {
    if depth == 0 || r.gen_bool(0.4) {
        return if r.gen_bool(0.6) {
            Term::var(vars[r.gen_range(0..vars.len())])
        } else {
            Term::Int(r.gen_range(-3..=3))
        };
    }
    let op = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div][r.gen_range(0..4)];
    Term::bin(op, random_term(r, vars, depth - 1), random_term(r, vars, depth - 1))
}

fn random_cmp(r: &mut StdRng) -> CmpOp {
    [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ne, CmpOp::Ge, CmpOp::Gt][r.gen_range(0..6)]
}

pub fn random_atom(r: &mut StdRng, vars: &[&str]) -> Formula {
    Formula::Cmp(random_cmp(r), random_term(r, vars, 1), random_term(r, vars, 1))
}

/// Predicate-free formula with up to `depth` levels of connectives.
pub fn random_formula(r: &mut StdRng, vars: &[&str], depth: u32) -> Formula {
    if depth == 0 || r.gen_bool(0.3) {
        return random_atom(r, vars);
    }
    match r.gen_range(0..3) {
        0 => Formula::Not(Box::new(random_formula(r, vars, depth - 1))),
        1 => Formula::And((0..r.gen_range(2..=3)).map(|_| random_formula(r, vars, depth - 1)).collect()),
        _ => Formula::Or((0..r.gen_range(2..=3)).map(|_| random_formula(r, vars, depth - 1)).collect()),
    }
}

/// `n` nodes named `f00`.., each edge present with probability `p`;
/// self-loops included.
pub fn random_call_graph(r: &mut StdRng, n: usize, p: f64) -> CallGraph {
    let names: Vec<String> = (0..n).map(|i| format!("f{i:02}")).collect();
    let mut edges = BTreeSet::new();
    for a in &names {
        for b in &names {
            if r.gen_bool(p) {
                edges.insert((a.clone(), b.clone()));
            }
        }
    }
    CallGraph {
        nodes: names.into_iter().collect(),
        edges,
    }
}

/// Reflexive-transitive reachability by BFS from every node.
pub fn reachability(g: &CallGraph) -> BTreeMap<String, BTreeSet<String>> {
    let succ = g.successors();
    g.nodes
        .iter()
        .map(|start| {
            let mut seen = BTreeSet::from([start.clone()]);
            let mut queue = VecDeque::from([start.as_str()]);
            while let Some(n) = queue.pop_front() {
                for &m in succ.get(n).into_iter().flatten() {
                    if seen.insert(m.to_string()) {
                        queue.push_back(m);
                    }
                }
            }
            (start.clone(), seen)
        })
        .collect()
}

/// Straight-line MiniLang body over `vars`: `len` random assignments.
pub fn random_program(r: &mut StdRng, vars: &[&str], len: usize) -> Vec<(String, Term)> {
    (0..len)
        .map(|_| (vars[r.gen_range(0..vars.len())].to_string(), random_term(r, vars, 2)))
        .collect()
}

pub fn program_source(name: &str, params: &[&str], stmts: &[(String, Term)]) -> String {
    let body: String = stmts.iter().map(|(v, e)| format!("{v} = {}; ", mini_expr(e))).collect();
    format!("fn {name}({}) {{ {body}return 0; }}", params.join(", "))
}

/// Fully parenthesized; negative literals written as `(0 - n)`.
pub fn mini_expr(t: &Term) -> String {
    match t {
        Term::Int(v) if *v < 0 => format!("(0 - {})", -v),
        Term::Int(v) => v.to_string(),
        Term::Var(x) => x.clone(),
        Term::Bin(op, a, b) => format!("({} {} {})", mini_expr(a), op.symbol(), mini_expr(b)),
    }
}

/// Concrete run; `None` on division by zero.
pub fn run_program(stmts: &[(String, Term)], mut env: BTreeMap<String, i64>) -> Option<BTreeMap<String, i64>> {
    for (v, e) in stmts {
        let x = eval_term(e, &env)?;
        env.insert(v.clone(), x);
    }
    Some(env)
}
