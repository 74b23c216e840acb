//! Syntactic Hoare-logic transformers over [`Formula`]: strongest
//! postconditions for assignments and calls, weakest preconditions for
//! loop-free code, variable projection and loop frames.
//!
//! SP introduces a ghost `x__N` for the pre-state value of an assigned
//! variable. When `x` was already assigned earlier on the same path and the
//! state carries a top-level definition `x = t`, the definition is
//! substituted away instead, so intermediate values are never confined to
//! the enumeration box. SP distributes over top-level disjunctions.

use std::collections::{BTreeMap, BTreeSet};

use crate::logic::{definedness, ArithOp, CmpOp, Formula, Term};
use crate::minilang::{Stmt, StmtKind};

/// Name of the entry snapshot of parameter `p`.
pub fn snapshot(p: &str) -> String {
    format!("{p}__in")
}

pub const RESULT: &str = "result";

/// Smallest `base__N` not in `avoid`.
pub fn fresh_ghost(base: &str, avoid: &BTreeSet<String>) -> String {
    (0..)
        .map(|n| format!("{base}__{n}"))
        .find(|g| !avoid.contains(g))
        .expect("unbounded search")
}

/// Index and defining term of a top-level conjunct `var = t` (or `t = var`)
/// with `var` not free in `t`.
pub fn find_definition(conjuncts: &[Formula], var: &str) -> Option<(usize, Term)> {
    conjuncts.iter().enumerate().find_map(|(i, c)| match c {
        Formula::Cmp(CmpOp::Eq, Term::Var(v), t) if v == var && !t.mentions(var) => Some((i, t.clone())),
        Formula::Cmp(CmpOp::Eq, t, Term::Var(v)) if v == var && !t.mentions(var) => Some((i, t.clone())),
        _ => None,
    })
}

fn subst_conjuncts(conjuncts: Vec<Formula>, var: &str, t: &Term) -> Vec<Formula> {
    conjuncts.into_iter().map(|c| c.subst_one(var, t)).collect()
}

/// Removes `var` from the disjunct's vocabulary ahead of a reassignment.
/// Returns the rewritten conjuncts and the term now denoting the old value.
fn release_var(conjuncts: Vec<Formula>, var: &str, assigned: &BTreeSet<String>, avoid: &BTreeSet<String>) -> (Vec<Formula>, Term) {
    if assigned.contains(var) {
        if let Some((idx, t)) = find_definition(&conjuncts, var) {
            let mut rest = conjuncts;
            rest.remove(idx);
            let mut out = subst_conjuncts(rest, var, &t);
            out.extend(definedness([&t]));
            return (out, t);
        }
    }
    let ghost = fresh_ghost(var, avoid);
    let g = Term::var(&ghost);
    (subst_conjuncts(conjuncts, var, &g), g)
}

fn disjunct_vars(d: &Formula, extra: &[&Term]) -> BTreeSet<String> {
    let mut vs = d.vars();
    for t in extra {
        t.collect_vars(&mut vs);
    }
    vs
}

/// sp(pre, var := expr).
pub fn sp_assign(pre: &Formula, var: &str, expr: &Term, assigned: &BTreeSet<String>) -> Formula {
    Formula::or(pre.disjuncts().into_iter().map(|d| {
        let avoid = disjunct_vars(&d, &[expr]);
        let mut guards = definedness([expr]);
        if !avoid.contains(var) {
            let mut parts = d.conjuncts();
            parts.append(&mut guards);
            parts.push(Formula::eq(Term::var(var), expr.clone()));
            return Formula::and(parts);
        }
        let (mut parts, old) = release_var(d.conjuncts(), var, assigned, &avoid);
        let e = expr.subst_one(var, &old);
        parts.extend(definedness([&e]));
        parts.push(Formula::eq(Term::var(var), e));
        Formula::and(parts)
    }))
}

/// Substitution instantiating a callee contract at a call site.
pub fn instantiate_contract(contract: &Formula, params: &[String], args: &[Term], result: Option<&Term>) -> Formula {
    let mut map: BTreeMap<String, Term> = params.iter().cloned().zip(args.iter().cloned()).collect();
    if let Some(r) = result {
        map.insert(RESULT.to_string(), r.clone());
    }
    contract.subst(&map)
}

/// sp(pre, target := callee(args)) assuming the callee's postcondition
/// `post` (over its parameters and `result`).
pub fn sp_call(
    pre: &Formula,
    target: Option<&str>,
    args: &[Term],
    params: &[String],
    post: &Formula,
    assigned: &BTreeSet<String>,
) -> Formula {
    Formula::or(pre.disjuncts().into_iter().map(|d| {
        let arg_refs: Vec<&Term> = args.iter().collect();
        let mut avoid = disjunct_vars(&d, &arg_refs);
        avoid.extend(post.vars());
        let (mut parts, args_now) = match target {
            Some(y) if avoid.contains(y) => {
                let (parts, old) = release_var(d.conjuncts(), y, assigned, &avoid);
                let args_now: Vec<Term> = args.iter().map(|a| a.subst_one(y, &old)).collect();
                (parts, args_now)
            }
            _ => (d.conjuncts(), args.to_vec()),
        };
        parts.extend(definedness(args_now.iter()));
        let result_term = match target {
            Some(y) => Term::var(y),
            None => {
                avoid.extend(parts.iter().flat_map(|p| p.vars()));
                Term::var(fresh_ghost("ret", &avoid))
            }
        };
        parts.push(instantiate_contract(post, params, &args_now, Some(&result_term)));
        Formula::and(parts)
    }))
}

/// pre ∧ cond with definedness guards, distributed over pre's disjuncts.
pub fn sp_assume(pre: &Formula, cond: &Formula) -> Formula {
    let guards = cond.divisors().into_iter().map(|d| Formula::cmp(CmpOp::Ne, d, Term::Int(0)));
    let guards: Vec<Formula> = guards.collect();
    Formula::or(pre.disjuncts().into_iter().map(|d| {
        let mut parts = d.conjuncts();
        parts.extend(guards.iter().cloned());
        parts.push(cond.clone());
        Formula::and(parts)
    }))
}

/// Conjuncts not mentioning any modified variable, per disjunct.
pub fn frame(pre: &Formula, modified: &BTreeSet<String>) -> Formula {
    Formula::or(pre.disjuncts().into_iter().map(|d| {
        Formula::and(d.conjuncts().into_iter().filter(|c| c.vars().is_disjoint(modified)))
    }))
}

/// Solves `side = other` for `v` when `v` occurs once, under `+`/`-` only.
fn solve(side: &Term, other: Term, v: &str) -> Option<Term> {
    match side {
        Term::Var(x) if x == v => Some(other),
        Term::Bin(ArithOp::Add, l, r) => {
            if l.mentions(v) && !r.mentions(v) {
                solve(l, Term::bin(ArithOp::Sub, other, (**r).clone()), v)
            } else if r.mentions(v) && !l.mentions(v) {
                solve(r, Term::bin(ArithOp::Sub, other, (**l).clone()), v)
            } else {
                None
            }
        }
        Term::Bin(ArithOp::Sub, l, r) => {
            if l.mentions(v) && !r.mentions(v) {
                solve(l, Term::bin(ArithOp::Add, other, (**r).clone()), v)
            } else if r.mentions(v) && !l.mentions(v) {
                solve(r, Term::bin(ArithOp::Sub, (**l).clone(), other), v)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// A definition of `v` derivable from conjunct `c` by `+`/`-` inversion.
pub fn solve_conjunct(c: &Formula, v: &str) -> Option<Term> {
    let Formula::Cmp(CmpOp::Eq, l, r) = c else { return None };
    if l.mentions(v) && !r.mentions(v) {
        solve(l, r.clone(), v)
    } else if r.mentions(v) && !l.mentions(v) {
        solve(r, l.clone(), v)
    } else {
        None
    }
}

/// Existentially eliminates every variable outside `keep`: solvable
/// definitions are substituted, remaining conjuncts that mention an
/// eliminated variable are dropped. The result is implied by `f`.
pub fn project(f: &Formula, keep: &BTreeSet<String>) -> Formula {
    Formula::or(f.disjuncts().into_iter().map(|d| project_conj(d.conjuncts(), keep, true)))
}

/// Like [`project`] but reports whether any conjunct had to be dropped.
pub fn project_exact(f: &Formula, keep: &BTreeSet<String>) -> (Formula, bool) {
    let mut exact = true;
    let out = Formula::or(f.disjuncts().into_iter().map(|d| {
        let p = project_conj(d.conjuncts(), keep, true);
        let strict = project_conj(d.conjuncts(), keep, false);
        if p != strict {
            exact = false;
        }
        p
    }));
    (out, exact)
}

fn project_conj(mut parts: Vec<Formula>, keep: &BTreeSet<String>, drop_rest: bool) -> Formula {
    loop {
        let mut progress = false;
        'search: for i in 0..parts.len() {
            let vars: Vec<String> = parts[i].vars().into_iter().filter(|v| !keep.contains(v)).collect();
            for v in vars {
                if let Some(t) = solve_conjunct(&parts[i], &v) {
                    parts.remove(i);
                    let mut next = subst_conjuncts(std::mem::take(&mut parts), &v, &t);
                    next.extend(definedness([&t]));
                    parts = Formula::and(next).conjuncts();
                    progress = true;
                    break 'search;
                }
            }
        }
        if !progress {
            break;
        }
    }
    if drop_rest {
        Formula::and(parts.into_iter().filter(|c| c.vars().is_subset(keep)))
    } else {
        Formula::and(parts)
    }
}

/// Weakest precondition of loop-free code. `Q_cont` is the postcondition on
/// falling out of `stmts`; `exit` is the function postcondition over
/// `result`, used at `return`. Returns `None` for loops and for calls whose
/// target the postcondition depends on.
pub fn wp_stmts(stmts: &[Stmt], q_cont: &Formula, exit: &Formula) -> Option<Formula> {
    let mut q = q_cont.clone();
    for s in stmts.iter().rev() {
        q = wp_stmt(s, &q, exit)?;
    }
    Some(q)
}

fn wp_stmt(s: &Stmt, q: &Formula, exit: &Formula) -> Option<Formula> {
    Some(match &s.kind {
        StmtKind::Assign { var, expr } => {
            let mut parts = definedness([expr]);
            parts.push(q.subst_one(var, expr));
            Formula::and(parts)
        }
        StmtKind::Return(e) => {
            let mut parts = definedness([e]);
            parts.push(exit.subst_one(RESULT, e));
            Formula::and(parts)
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            let a = wp_stmts(then_branch, q, exit)?;
            let b = wp_stmts(else_branch, q, exit)?;
            if a == b {
                a
            } else {
                Formula::and([
                    Formula::implies(cond.clone(), a),
                    Formula::implies(Formula::not(cond.clone()), b),
                ])
            }
        }
        StmtKind::While { .. } => return None,
        StmtKind::Call { target, .. } => match target {
            Some(y) if q.mentions(y) => return None,
            _ => q.clone(),
        },
        StmtKind::Seq(items) => wp_stmts(items, q, exit)?,
    })
}

/// Weakest precondition, w.r.t. `exit`, of everything that runs after the
/// call at `site` (fall-through returns 0). `None` when the call is inside a
/// loop or the continuation is not loop-free.
pub fn continuation_wp(body: &[Stmt], site: usize, exit: &Formula) -> Option<Formula> {
    let fall = exit.subst_one(RESULT, &Term::Int(0));
    cont_in(body, site, &fall, exit)?
}

fn contains_site(stmts: &[Stmt], site: usize) -> bool {
    let mut found = false;
    crate::minilang::walk(stmts, &mut |s| {
        if matches!(s.kind, StmtKind::Call { site: k, .. } if k == site) {
            found = true;
        }
    });
    found
}

/// `None`: the site is not in `stmts`; `Some(None)`: found but not computable.
fn cont_in(stmts: &[Stmt], site: usize, after: &Formula, exit: &Formula) -> Option<Option<Formula>> {
    for (i, s) in stmts.iter().enumerate() {
        if !contains_site(std::slice::from_ref(s), site) {
            continue;
        }
        let rest = wp_stmts(&stmts[i + 1..], after, exit);
        return Some(match &s.kind {
            StmtKind::Call { .. } => rest,
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                let Some(rest) = rest else { return Some(None) };
                cont_in(then_branch, site, &rest, exit).or_else(|| cont_in(else_branch, site, &rest, exit))?
            }
            StmtKind::Seq(items) => {
                let Some(rest) = rest else { return Some(None) };
                cont_in(items, site, &rest, exit)?
            }
            _ => None,
        });
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;
    use crate::minilang::parse_function;

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    #[test]
    fn assignment_to_fresh_variable_adds_definition() {
        let out = sp_assign(&f("x > 0"), "y", &Term::bin(ArithOp::Add, Term::var("x"), Term::Int(1)), &BTreeSet::new());
        assert_eq!(out, f("x > 0 and y = x + 1"));
    }

    #[test]
    fn reassignment_uses_ghost_then_eliminates_intermediates() {
        let x1 = Term::bin(ArithOp::Add, Term::var("x"), Term::Int(1));
        let mut assigned = BTreeSet::new();
        let s1 = sp_assign(&f("x > 0"), "x", &x1, &assigned);
        assert_eq!(s1, f("x__0 > 0 and x = x__0 + 1"));
        assigned.insert("x".to_string());
        let x2 = Term::bin(ArithOp::Mul, Term::var("x"), Term::Int(2));
        let s2 = sp_assign(&s1, "x", &x2, &assigned);
        assert_eq!(s2, f("x__0 > 0 and x = (x__0 + 1) * 2"));
    }

    #[test]
    fn division_adds_guard() {
        let e = Term::bin(ArithOp::Div, Term::var("a"), Term::var("b"));
        assert_eq!(sp_assign(&Formula::tt(), "q", &e, &BTreeSet::new()), f("b != 0 and q = a / b"));
    }

    #[test]
    fn call_assumes_instantiated_post() {
        let out = sp_call(
            &f("x > 0"),
            Some("y"),
            &[Term::var("x")],
            &["p".to_string()],
            &f("result = p + 1"),
            &BTreeSet::new(),
        );
        assert_eq!(out, f("x > 0 and y = x + 1"));
    }

    #[test]
    fn projection_inverts_offsets() {
        let g = f("x > 0 and p = x + 1 and z * z = x");
        let keep = BTreeSet::from(["p".to_string()]);
        assert_eq!(project(&g, &keep), f("p - 1 > 0"));
        let (_, exact) = project_exact(&g, &keep);
        assert!(!exact);
    }

    #[test]
    fn continuation_wp_through_branches() {
        let func = parse_function("fn f(c) { r = g(c); if (r > 0) { return r; } return 0 - r; }").unwrap();
        let wp = continuation_wp(&func.body, 0, &f("result >= 1")).unwrap();
        assert_eq!(wp, f("(not r > 0 or r >= 1) and (r > 0 or 0 - r >= 1)"));
        let looped = parse_function("fn f(c) { while (c > 0) { c = g(c); } return c; }").unwrap();
        assert!(continuation_wp(&looped.body, 0, &f("result = 0")).is_none());
    }

    #[test]
    fn frame_keeps_untouched_conjuncts() {
        let modified = BTreeSet::from(["i".to_string()]);
        assert_eq!(frame(&f("n >= 0 and i = 0 and s = 0"), &modified), f("n >= 0 and s = 0"));
    }
}
