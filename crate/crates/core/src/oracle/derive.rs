//! Specification derivation for the oracle backend: implementation-derived
//! contracts and caller-driven expected specifications.

use std::collections::{BTreeMap, BTreeSet};

use crate::codebase::Codebase;
use crate::hoare::{self, continuation_wp, project, snapshot, solve_conjunct, RESULT};
use crate::logic::{parse_formula, Formula, Term};
use crate::minilang::{assigned_vars, calls_in, Stmt, StmtKind};
use crate::spec::{Condition, ExpectedSpecification, Specification};

/// Caps the number of disjoint path states kept by the forward walk.
const MAX_STATES: usize = 32;

/// `requires`/`ensures` clauses found in domain-knowledge text, one per
/// line as `requires <fn>: <formula>` or `ensures <fn>: <formula>`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DomainContracts {
    pub requires: BTreeMap<String, Formula>,
    pub ensures: BTreeMap<String, Formula>,
}

pub fn domain_contracts(text: &str) -> DomainContracts {
    let mut out = DomainContracts::default();
    for line in text.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        let (target, rest) = if let Some(r) = line.strip_prefix("requires ") {
            (&mut out.requires, r)
        } else if let Some(r) = line.strip_prefix("ensures ") {
            (&mut out.ensures, r)
        } else {
            continue;
        };
        let Some((name, formula)) = rest.split_once(':') else { continue };
        let Ok(f) = parse_formula(formula.trim()) else { continue };
        let name = name.trim().to_string();
        let merged = match target.remove(&name) {
            Some(prev) => Formula::and([prev, f]),
            None => f,
        };
        target.insert(name, merged);
    }
    out
}

/// A function seen by the derivation code.
#[derive(Clone, Copy, Debug)]
pub struct FnView<'a> {
    pub name: &'a str,
    pub params: &'a [String],
    pub body: &'a [Stmt],
}

impl FnView<'_> {
    /// Parameters that the body reassigns; these get entry snapshots.
    pub fn snapshotted(&self) -> BTreeSet<String> {
        let assigned = assigned_vars(self.body);
        self.params.iter().filter(|p| assigned.contains(*p)).cloned().collect()
    }

    /// Entry state for `pre`: snapshot parameters are renamed in `pre` and
    /// tied to their current value.
    pub fn entry_state(&self, pre: &Formula) -> (Formula, BTreeSet<String>) {
        let snaps = self.snapshotted();
        let mut parts = vec![rename_to_snapshots(pre, &snaps)];
        for p in &snaps {
            parts.push(Formula::eq(Term::var(p), Term::var(snapshot(p))));
        }
        (Formula::and(parts), snaps)
    }
}

pub fn rename_to_snapshots(f: &Formula, snaps: &BTreeSet<String>) -> Formula {
    let map: BTreeMap<String, Term> = snaps.iter().map(|p| (p.clone(), Term::var(snapshot(p)))).collect();
    f.subst(&map)
}

pub fn rename_from_snapshots(f: &Formula, snaps: &BTreeSet<String>) -> Formula {
    let map: BTreeMap<String, Term> = snaps.iter().map(|p| (snapshot(p), Term::var(p))).collect();
    f.subst(&map)
}

#[derive(Clone, Debug)]
struct State {
    formula: Formula,
    assigned: BTreeSet<String>,
}

/// Callee contract lookup by `(call site, callee)`: parameters and post.
pub type ContractLookup<'a> = dyn Fn(usize, &str) -> Option<(Vec<String>, Formula)> + 'a;

#[derive(Default)]
struct Collect {
    at_site: BTreeMap<usize, Vec<State>>,
    in_loop: BTreeSet<usize>,
    exits: Vec<Formula>,
}

fn merge_states(mut states: Vec<State>) -> Vec<State> {
    states.retain(|s| s.formula != Formula::Bool(false));
    if states.len() <= MAX_STATES {
        return states;
    }
    let assigned = states.iter().flat_map(|s| s.assigned.iter().cloned()).collect();
    vec![State {
        formula: Formula::or(states.into_iter().map(|s| s.formula)),
        assigned,
    }]
}

fn forward(stmts: &[Stmt], mut states: Vec<State>, in_loop: bool, contracts: &ContractLookup, out: &mut Collect) -> Vec<State> {
    for s in stmts {
        if states.is_empty() {
            break;
        }
        states = match &s.kind {
            StmtKind::Assign { var, expr } => states
                .into_iter()
                .map(|st| {
                    let formula = hoare::sp_assign(&st.formula, var, expr, &st.assigned);
                    let mut assigned = st.assigned;
                    assigned.insert(var.clone());
                    State { formula, assigned }
                })
                .collect(),
            StmtKind::Return(e) => {
                for st in states {
                    out.exits.push(hoare::sp_assign(&st.formula, RESULT, e, &st.assigned));
                }
                Vec::new()
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let mut then_states = Vec::new();
                let mut else_states = Vec::new();
                for st in &states {
                    then_states.push(State {
                        formula: hoare::sp_assume(&st.formula, cond),
                        assigned: st.assigned.clone(),
                    });
                    else_states.push(State {
                        formula: hoare::sp_assume(&st.formula, &Formula::not(cond.clone())),
                        assigned: st.assigned.clone(),
                    });
                }
                let mut joined = forward(then_branch, then_states, in_loop, contracts, out);
                joined.extend(forward(else_branch, else_states, in_loop, contracts, out));
                joined
            }
            StmtKind::While { cond, body } => {
                let modified = assigned_vars(body);
                let pre = Formula::or(states.iter().map(|s| s.formula.clone()));
                let mut assigned: BTreeSet<String> = states.iter().flat_map(|s| s.assigned.iter().cloned()).collect();
                assigned.extend(modified.iter().cloned());
                let fr = hoare::frame(&pre, &modified);
                let inside = State {
                    formula: hoare::sp_assume(&fr, cond),
                    assigned: assigned.clone(),
                };
                forward(body, vec![inside], true, contracts, out);
                vec![State {
                    formula: hoare::sp_assume(&fr, &Formula::not(cond.clone())),
                    assigned,
                }]
            }
            StmtKind::Call {
                target,
                callee,
                args,
                site,
            } => {
                out.at_site.entry(*site).or_default().extend(states.iter().cloned());
                if in_loop {
                    out.in_loop.insert(*site);
                }
                let (params, post) = contracts(*site, callee).unwrap_or_else(|| (Vec::new(), Formula::tt()));
                states
                    .into_iter()
                    .map(|st| {
                        let formula = hoare::sp_call(&st.formula, target.as_deref(), args, &params, &post, &st.assigned);
                        let mut assigned = st.assigned;
                        if let Some(t) = target {
                            assigned.insert(t.clone());
                        }
                        State { formula, assigned }
                    })
                    .collect()
            }
            StmtKind::Seq(items) => forward(items, states, in_loop, contracts, out),
        };
        states = merge_states(states);
    }
    states
}

fn walk(view: &FnView, pre: &Formula, contracts: &ContractLookup) -> Collect {
    let (entry, snaps) = view.entry_state(pre);
    let mut out = Collect::default();
    let init = State {
        formula: entry,
        assigned: snaps,
    };
    let fell = forward(view.body, vec![init], false, contracts, &mut out);
    for st in fell {
        out.exits.push(hoare::sp_assign(&st.formula, RESULT, &Term::Int(0), &st.assigned));
    }
    out
}

/// Post over parameters and `result` implied by every exit path of the body
/// under `pre`, with callee results constrained by `contracts`.
pub fn implementation_post(view: &FnView, pre: &Formula, contracts: &ContractLookup) -> Formula {
    let snaps = view.snapshotted();
    let mut keep: BTreeSet<String> = view
        .params
        .iter()
        .map(|p| if snaps.contains(p) { snapshot(p) } else { p.clone() })
        .collect();
    keep.insert(RESULT.to_string());
    let collected = walk(view, pre, contracts);
    let post = Formula::or(collected.exits.iter().map(|e| project(e, &keep)));
    rename_from_snapshots(&post, &snaps)
}

/// Contracts derived bottom-up from bodies alone (pre `true`); members of
/// call cycles and opaque functions get `true` posts.
pub fn implementation_contracts(cb: &Codebase) -> BTreeMap<String, (Vec<String>, Formula)> {
    let mut memo: BTreeMap<String, (Vec<String>, Formula)> = BTreeMap::new();
    let mut visiting = BTreeSet::new();
    fn go(
        cb: &Codebase,
        name: &str,
        memo: &mut BTreeMap<String, (Vec<String>, Formula)>,
        visiting: &mut BTreeSet<String>,
    ) -> (Vec<String>, Formula) {
        if let Some(c) = memo.get(name) {
            return c.clone();
        }
        let Some(f) = cb.functions.get(name) else {
            return (Vec::new(), Formula::tt());
        };
        let params = f.param_names();
        let Some(body) = f.mini_body() else {
            return (params, Formula::tt());
        };
        if !visiting.insert(name.to_string()) {
            return (params, Formula::tt());
        }
        let mut callee_contracts = BTreeMap::new();
        for c in &f.callees {
            callee_contracts.insert(c.clone(), go(cb, c, memo, visiting));
        }
        visiting.remove(name);
        let lookup = |_site: usize, callee: &str| callee_contracts.get(callee).cloned();
        let view = FnView {
            name,
            params: &params,
            body,
        };
        let post = implementation_post(&view, &Formula::tt(), &lookup);
        let c = (params, post);
        // Results computed while a cycle member was on the stack may be weaker
        // than a fresh derivation; they are still sound.
        memo.insert(name.to_string(), c.clone());
        c
    }
    for name in cb.functions.keys() {
        go(cb, name, &mut memo, &mut visiting);
    }
    memo
}

fn arg_name(p: &str) -> String {
    format!("{p}__p")
}

/// Keeps the conjuncts of `goal` after rewriting every variable outside
/// `keep` through definitions found in `facts`. `None` if some goal conjunct
/// cannot be expressed over `keep`.
fn translate(facts: &[Formula], goal: &[Formula], keep: &BTreeSet<String>) -> Option<Formula> {
    let mut facts: Vec<Formula> = facts.to_vec();
    let mut goal: Vec<Formula> = goal.to_vec();
    loop {
        let stray: BTreeSet<String> = goal.iter().flat_map(|g| g.vars()).filter(|v| !keep.contains(v)).collect();
        if stray.is_empty() {
            return Some(Formula::and(goal));
        }
        let mut progress = false;
        'search: for v in &stray {
            for i in 0..facts.len() {
                if let Some(t) = solve_conjunct(&facts[i], v) {
                    facts.remove(i);
                    facts = facts.into_iter().map(|f| f.subst_one(v, &t)).collect();
                    goal = goal.into_iter().map(|g| g.subst_one(v, &t)).collect();
                    progress = true;
                    break 'search;
                }
            }
        }
        if !progress {
            return None;
        }
    }
}

fn unknown_expectation(caller: &str, site: usize, params: &[String]) -> Condition {
    let mut args: Vec<Term> = params.iter().map(Term::var).collect();
    args.push(Term::var(RESULT));
    Condition::new(
        format!("The value returned at call site {site} satisfies what {caller} relies on afterwards."),
        Some(Formula::Pred(format!("U_expect_{caller}_{site}"), args)),
    )
}

/// Expected pre/post for every call site in `view`, derived top-down from
/// the function's own specification.
pub fn derive_expectations(
    view: &FnView,
    spec: &Specification,
    callee_params: &BTreeMap<String, Vec<String>>,
    requires: &BTreeMap<String, Formula>,
) -> Vec<ExpectedSpecification> {
    let snaps = view.snapshotted();
    let pre = spec.pre.precise_formula().cloned();
    let exit = spec.post.precise_formula().map(|q| rename_to_snapshots(q, &snaps));
    let calls: Vec<(usize, Option<String>, String, Vec<Term>)> = calls_in(view.body)
        .into_iter()
        .filter_map(|s| match &s.kind {
            StmtKind::Call {
                target,
                callee,
                args,
                site,
            } => Some((*site, target.clone(), callee.clone(), args.clone())),
            _ => None,
        })
        .collect();
    let mut derived: BTreeMap<usize, Formula> = BTreeMap::new();
    let mut out = Vec::new();
    for (site, target, callee, args) in calls {
        let params = callee_params.get(&callee).cloned().unwrap_or_default();
        let collected = {
            let lookup = |s: usize, c: &str| -> Option<(Vec<String>, Formula)> {
                let f = derived.get(&s)?;
                Some((callee_params.get(c).cloned().unwrap_or_default(), f.clone()))
            };
            walk(view, pre.as_ref().unwrap_or(&Formula::tt()), &lookup)
        };
        let states: Vec<Formula> = collected
            .at_site
            .get(&site)
            .map(|v| v.iter().map(|s| s.formula.clone()).collect())
            .unwrap_or_default();
        let bindings: Vec<Formula> = params
            .iter()
            .zip(&args)
            .map(|(p, a)| Formula::eq(Term::var(arg_name(p)), a.clone()))
            .collect();
        let keep: BTreeSet<String> = params.iter().map(|p| arg_name(p)).collect();
        let back: BTreeMap<String, Term> = params.iter().map(|p| (arg_name(p), Term::var(p))).collect();

        // Expected pre: what the caller establishes, plus any documented requirement.
        let pre_cond = if pre.is_some() && params.len() == args.len() {
            let at = Formula::or(states.iter().cloned());
            let bound = Formula::or(at.disjuncts().into_iter().map(|d| {
                let mut parts = d.conjuncts();
                parts.extend(bindings.iter().cloned());
                Formula::and(parts)
            }));
            let mut f = project(&bound, &keep).subst(&back);
            if let Some(r) = requires.get(&callee) {
                f = Formula::and([f, r.clone()]);
            }
            Condition::formal(f)
        } else {
            Condition::text_only(format!("Whatever {} guarantees when it reaches call site {site}.", view.name))
        };

        // Expected post: the part of the continuation's weakest precondition
        // that constrains the returned value.
        let post_cond = match (&target, &exit) {
            (None, _) => Condition::tt(),
            (Some(_), _) if collected.in_loop.contains(&site) => unknown_expectation(view.name, site, &params),
            (Some(_), None) => unknown_expectation(view.name, site, &params),
            (Some(y), Some(q)) => match continuation_wp(view.body, site, q) {
                None => unknown_expectation(view.name, site, &params),
                Some(wp) => {
                    let relevant: Vec<Formula> = wp.conjuncts().into_iter().filter(|c| c.mentions(y)).collect();
                    if relevant.is_empty() {
                        Condition::tt()
                    } else {
                        let goal: Vec<Formula> =
                            relevant.iter().map(|c| c.rename(y, RESULT)).collect();
                        let mut keep_post = keep.clone();
                        keep_post.insert(RESULT.to_string());
                        let translations: Vec<Option<Formula>> = states
                            .iter()
                            .flat_map(|s| s.disjuncts())
                            .map(|d| {
                                let mut facts = d.conjuncts();
                                facts.extend(bindings.iter().cloned());
                                translate(&facts, &goal, &keep_post)
                            })
                            .collect();
                        let first = translations.first().cloned().flatten();
                        match first {
                            Some(t) if translations.iter().all(|x| x.as_ref() == Some(&t)) => {
                                Condition::formal(t.subst(&back))
                            }
                            _ => unknown_expectation(view.name, site, &params),
                        }
                    }
                }
            },
        };
        if let (Some(_), Some(f)) = (&target, post_cond.precise_formula()) {
            derived.insert(site, f.clone());
        }
        out.push(ExpectedSpecification {
            caller: view.name.to_string(),
            callee,
            params,
            pre: pre_cond,
            post: post_cond,
            call_site: site,
        });
    }
    out
}

/// Expectations that simply restate each callee's own contract.
pub fn contract_expectations(
    view: &FnView,
    contracts: &BTreeMap<String, (Vec<String>, Formula)>,
) -> Vec<ExpectedSpecification> {
    calls_in(view.body)
        .into_iter()
        .filter_map(|s| match &s.kind {
            StmtKind::Call { callee, site, .. } => {
                let post = contracts.get(callee).map_or_else(Formula::tt, |c| c.1.clone());
                Some(ExpectedSpecification {
                    caller: view.name.to_string(),
                    callee: callee.clone(),
                    params: contracts.get(callee).map(|c| c.0.clone()).unwrap_or_default(),
                    pre: Condition::tt(),
                    post: Condition::formal(post),
                    call_site: *site,
                })
            }
            _ => None,
        })
        .collect()
}
