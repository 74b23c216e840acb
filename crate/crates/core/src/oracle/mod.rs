//! Bounded-domain Hoare oracle for MiniLang.
//!
//! Entailment is decided by enumerating every assignment of the free
//! variables over `[-B, B]`. Top-level definitions `v = t` in the antecedent
//! are propagated instead of enumerated; since `v` must still land inside the
//! box this visits exactly the same models as plain enumeration.

pub mod derive;
pub mod phrases;

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::codebase::{Codebase, FunctionBody};
use crate::logic::{CmpOp, CompiledFormula, CompiledTerm, Formula, Term, Valuation};
use crate::minilang::{Stmt, StmtKind};

pub const DEFAULT_BOUND: i64 = 8;
pub const DEFAULT_ENUM_BUDGET: u64 = 2_000_000;
pub const DEFAULT_STEP_BUDGET: u64 = 100_000;
/// Nested calls deeper than this count as non-termination.
pub const MAX_CALL_DEPTH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundedDomain {
    pub bound: i64,
    pub budget: u64,
}

impl BoundedDomain {
    pub fn new(bound: i64) -> BoundedDomain {
        assert!(bound >= 1, "domain bound must be positive");
        BoundedDomain {
            bound,
            budget: DEFAULT_ENUM_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> BoundedDomain {
        self.budget = budget;
        self
    }

    pub fn contains(&self, v: i64) -> bool {
        (-self.bound..=self.bound).contains(&v)
    }

    pub fn width(&self) -> u64 {
        (2 * self.bound + 1) as u64
    }

    pub fn values(&self) -> std::ops::RangeInclusive<i64> {
        -self.bound..=self.bound
    }
}

impl Default for BoundedDomain {
    fn default() -> Self {
        BoundedDomain::new(DEFAULT_BOUND)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("enumeration needs {needed} assignments, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("condition is not precise: {0}")]
    NotPrecise(String),
    #[error("unsupported statement: {0}")]
    Unsupported(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{function}` takes {expected} arguments, got {given}")]
    Arity {
        function: String,
        expected: usize,
        given: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Entailment {
    Holds,
    Fails { counterexample: Valuation },
}

struct Model {
    vars: Vec<String>,
    free: Vec<usize>,
    defs: Vec<(usize, CompiledTerm)>,
    slots: BTreeMap<String, usize>,
}

fn reaches(deps: &BTreeMap<String, BTreeSet<String>>, from: &BTreeSet<String>, target: &str) -> bool {
    let mut stack: Vec<&str> = from.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    while let Some(v) = stack.pop() {
        if v == target {
            return true;
        }
        if seen.insert(v) {
            if let Some(ds) = deps.get(v) {
                stack.extend(ds.iter().map(String::as_str));
            }
        }
    }
    false
}

impl Model {
    fn new(defining: &Formula, vars: BTreeSet<String>) -> Model {
        let slots: BTreeMap<String, usize> = vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        let mut deps: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut terms: BTreeMap<String, Term> = BTreeMap::new();
        for c in defining.conjuncts() {
            if let Formula::Cmp(CmpOp::Eq, l, r) = &c {
                for (side, other) in [(l, r), (r, l)] {
                    if let Term::Var(v) = side {
                        let ovars = other.vars();
                        if terms.contains_key(v) || ovars.contains(v) || reaches(&deps, &ovars, v) {
                            continue;
                        }
                        deps.insert(v.clone(), ovars);
                        terms.insert(v.clone(), other.clone());
                        break;
                    }
                }
            }
        }
        // Topological order of definitions.
        let mut order: Vec<(usize, CompiledTerm)> = Vec::new();
        let mut done: BTreeSet<String> = vars.iter().filter(|v| !terms.contains_key(*v)).cloned().collect();
        while order.len() < terms.len() {
            let ready: Vec<String> = terms
                .keys()
                .filter(|v| !done.contains(*v) && deps[*v].iter().all(|d| done.contains(d)))
                .cloned()
                .collect();
            assert!(!ready.is_empty(), "definition graph is acyclic by construction");
            for v in ready {
                let ct = CompiledTerm::compile(&terms[&v], &slots).expect("all vars have slots");
                order.push((slots[&v], ct));
                done.insert(v);
            }
        }
        let free = vars
            .iter()
            .filter(|v| !terms.contains_key(*v))
            .map(|v| slots[v])
            .collect();
        Model {
            vars: vars.into_iter().collect(),
            free,
            defs: order,
            slots,
        }
    }

    fn valuation(&self, vals: &[i64]) -> Valuation {
        self.vars.iter().cloned().zip(vals.iter().copied()).collect()
    }
}

fn compile_precise(f: &Formula, slots: &BTreeMap<String, usize>) -> Result<CompiledFormula, OracleError> {
    CompiledFormula::compile(f, slots).ok_or_else(|| OracleError::NotPrecise(f.to_string()))
}

/// Calls `visit` for every assignment in the box, over `vars(f) ∪ extra`,
/// that satisfies `f`. Stops early when `visit` breaks.
pub fn for_each_model(
    f: &Formula,
    extra: &BTreeSet<String>,
    dom: &BoundedDomain,
    mut visit: impl FnMut(&[i64], &dyn Fn(&[i64]) -> Valuation, &BTreeMap<String, usize>) -> ControlFlow<()>,
) -> Result<(), OracleError> {
    let mut vars = f.vars();
    vars.extend(extra.iter().cloned());
    let model = Model::new(f, vars);
    let cf = compile_precise(f, &model.slots)?;
    let needed = (dom.width() as u128).saturating_pow(model.free.len() as u32);
    if needed > dom.budget as u128 {
        return Err(OracleError::BudgetExceeded {
            needed,
            budget: dom.budget,
        });
    }
    let mut vals = vec![-dom.bound; model.vars.len()];
    let to_val = |v: &[i64]| model.valuation(v);
    'outer: loop {
        let mut ok = true;
        for (slot, t) in &model.defs {
            match t.eval(&vals) {
                Some(v) if dom.contains(v) => vals[*slot] = v,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && cf.eval(&vals) && visit(&vals, &to_val, &model.slots).is_break() {
            return Ok(());
        }
        for &slot in &model.free {
            if vals[slot] < dom.bound {
                vals[slot] += 1;
                continue 'outer;
            }
            vals[slot] = -dom.bound;
        }
        return Ok(());
    }
}

/// Does every box assignment satisfying `antecedent` satisfy `consequent`?
pub fn check_entailment_bounded(
    antecedent: &Formula,
    consequent: &Formula,
    dom: &BoundedDomain,
) -> Result<Entailment, OracleError> {
    if consequent.has_uninterpreted() {
        return Err(OracleError::NotPrecise(consequent.to_string()));
    }
    let cons_vars = consequent.vars();
    let mut compiled: Option<CompiledFormula> = None;
    let mut found: Option<Valuation> = None;
    let mut err = None;
    for_each_model(antecedent, &cons_vars, dom, |vals, to_val, slots| {
        if compiled.is_none() {
            match compile_precise(consequent, slots) {
                Ok(c) => compiled = Some(c),
                Err(e) => {
                    err = Some(e);
                    return ControlFlow::Break(());
                }
            }
        }
        if compiled.as_ref().expect("compiled above").eval(vals) {
            ControlFlow::Continue(())
        } else {
            found = Some(to_val(vals));
            ControlFlow::Break(())
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(match found {
        Some(counterexample) => Entailment::Fails { counterexample },
        None => Entailment::Holds,
    })
}

/// Projections onto `keep` of all box models of `f` (every variable of `f`
/// and of `keep` ranges over the box).
pub fn satisfying_states(f: &Formula, keep: &[String], dom: &BoundedDomain) -> Result<BTreeSet<Vec<i64>>, OracleError> {
    let extra: BTreeSet<String> = keep.iter().cloned().collect();
    let mut out = BTreeSet::new();
    for_each_model(f, &extra, dom, |vals, _, slots| {
        out.insert(keep.iter().map(|k| vals[slots[k]]).collect());
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// A callee contract for nondeterministic execution: results are every box
/// value satisfying `post` (over `params` and `result`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    pub params: Vec<String>,
    pub pre: Formula,
    pub post: Formula,
}

pub type Contracts = BTreeMap<String, Contract>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum InvariantVerdict {
    Holds,
    Fails { obligation: u8, witness: Valuation },
}

/// Variables a statement list may read before writing them.
pub fn upward_exposed(stmts: &[Stmt]) -> BTreeSet<String> {
    fn go(stmts: &[Stmt], assigned: &mut BTreeSet<String>, out: &mut BTreeSet<String>) {
        let note = |vs: BTreeSet<String>, assigned: &BTreeSet<String>, out: &mut BTreeSet<String>| {
            out.extend(vs.into_iter().filter(|v| !assigned.contains(v)));
        };
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { var, expr } => {
                    note(expr.vars(), assigned, out);
                    assigned.insert(var.clone());
                }
                StmtKind::Call { target, args, .. } => {
                    for a in args {
                        note(a.vars(), assigned, out);
                    }
                    if let Some(t) = target {
                        assigned.insert(t.clone());
                    }
                }
                StmtKind::Return(e) => note(e.vars(), assigned, out),
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                } => {
                    note(cond.vars(), assigned, out);
                    let mut a = assigned.clone();
                    let mut b = assigned.clone();
                    go(then_branch, &mut a, out);
                    go(else_branch, &mut b, out);
                    *assigned = a.intersection(&b).cloned().collect();
                }
                StmtKind::While { cond, body } => {
                    note(cond.vars(), assigned, out);
                    let mut a = assigned.clone();
                    go(body, &mut a, out);
                }
                StmtKind::Seq(items) => go(items, assigned, out),
            }
        }
    }
    let mut out = BTreeSet::new();
    go(stmts, &mut BTreeSet::new(), &mut out);
    out
}

/// Nondeterministic executor used for invariant preservation: calls return
/// any box value allowed by the callee contract.
struct NdExec<'a> {
    contracts: &'a Contracts,
    dom: &'a BoundedDomain,
    steps: Cell<u64>,
    step_budget: u64,
    error: RefCell<Option<OracleError>>,
}

impl<'a> NdExec<'a> {
    fn tick(&self) -> bool {
        let n = self.steps.get() + 1;
        self.steps.set(n);
        n <= self.step_budget
    }

    /// Runs `stmts[i..]` from `env`, calling `k` on every fall-through state.
    /// Paths that return, fault or exhaust the step budget end silently.
    fn seq(&self, stmts: &[Stmt], i: usize, env: Valuation, k: &mut dyn FnMut(Valuation)) {
        if self.error.borrow().is_some() {
            return;
        }
        let Some(s) = stmts.get(i) else {
            k(env);
            return;
        };
        if !self.tick() {
            return;
        }
        match &s.kind {
            StmtKind::Assign { var, expr } => {
                if let Some(v) = expr.eval(&env) {
                    let mut env = env;
                    env.insert(var.clone(), v);
                    self.seq(stmts, i + 1, env, k);
                }
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if cond.divisors().iter().any(|d| d.eval(&env) == Some(0)) {
                    return;
                }
                let branch = if cond.eval(&env) { then_branch } else { else_branch };
                self.seq(branch, 0, env, &mut |e| self.seq(stmts, i + 1, e, k));
            }
            StmtKind::While { cond, body } => {
                self.looping(cond, body, env, &mut |e| self.seq(stmts, i + 1, e, k));
            }
            StmtKind::Call {
                target, callee, args, ..
            } => {
                let Some(contract) = self.contracts.get(callee) else {
                    *self.error.borrow_mut() = Some(OracleError::Unsupported(format!("call to `{callee}` without a contract")));
                    return;
                };
                let Some(argv) = args.iter().map(|a| a.eval(&env)).collect::<Option<Vec<i64>>>() else {
                    return;
                };
                let mut callee_env: Valuation = contract.params.iter().cloned().zip(argv).collect();
                for r in self.dom.values() {
                    callee_env.insert(crate::hoare::RESULT.into(), r);
                    if contract.post.eval(&callee_env) {
                        let mut env = env.clone();
                        if let Some(t) = target {
                            env.insert(t.clone(), r);
                        }
                        self.seq(stmts, i + 1, env, k);
                    }
                }
            }
            StmtKind::Return(_) => {}
            StmtKind::Seq(items) => self.seq(items, 0, env, &mut |e| self.seq(stmts, i + 1, e, k)),
        }
    }

    fn looping(&self, cond: &Formula, body: &[Stmt], env: Valuation, k: &mut dyn FnMut(Valuation)) {
        if !self.tick() || cond.divisors().iter().any(|d| d.eval(&env) == Some(0)) {
            return;
        }
        if !cond.eval(&env) {
            k(env);
            return;
        }
        self.seq(body, 0, env, &mut |e| self.looping(cond, body, e, k));
    }
}

/// Checks the three loop-rule obligations over the box:
/// (1) pre ⊨ inv, (2) inv ∧ cond, one body run ⊨ inv, (3) inv ∧ ¬cond ⊨ post.
pub fn check_invariant_bounded(
    inv: &Formula,
    loop_stmt: &Stmt,
    pre: &Formula,
    post: &Formula,
    dom: &BoundedDomain,
    contracts: &Contracts,
    step_budget: u64,
) -> Result<InvariantVerdict, OracleError> {
    let StmtKind::While { cond, body } = &loop_stmt.kind else {
        return Err(OracleError::Unsupported("not a while loop".into()));
    };
    if let Entailment::Fails { counterexample } = check_entailment_bounded(pre, inv, dom)? {
        return Ok(InvariantVerdict::Fails {
            obligation: 1,
            witness: counterexample,
        });
    }
    let entry = crate::hoare::sp_assume(inv, cond);
    let mut extra = upward_exposed(body);
    extra.extend(inv.vars());
    let inv_vars = inv.vars();
    let exec = NdExec {
        contracts,
        dom,
        steps: Cell::new(0),
        step_budget,
        error: RefCell::new(None),
    };
    let mut witness = None;
    for_each_model(&entry, &extra, dom, |vals, to_val, _| {
        let env = to_val(vals);
        exec.steps.set(0);
        let mut broken = false;
        exec.seq(body, 0, env.clone(), &mut |after| {
            if !broken && (!inv_vars.iter().all(|v| after.contains_key(v)) || !inv.eval(&after)) {
                broken = true;
            }
        });
        if exec.error.borrow().is_some() {
            return ControlFlow::Break(());
        }
        if broken {
            witness = Some(env);
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    if let Some(e) = exec.error.into_inner() {
        return Err(e);
    }
    if let Some(w) = witness {
        return Ok(InvariantVerdict::Fails {
            obligation: 2,
            witness: w,
        });
    }
    let exit = Formula::and([inv.clone(), Formula::not(cond.clone())]);
    if let Entailment::Fails { counterexample } = check_entailment_bounded(&exit, post, dom)? {
        return Ok(InvariantVerdict::Fails {
            obligation: 3,
            witness: counterexample,
        });
    }
    Ok(InvariantVerdict::Holds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeErrorKind {
    DivByZero,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "value", rename_all = "snake_case")]
pub enum ExecOutcome {
    Returned(i64),
    RuntimeError(RuntimeErrorKind),
    Nonterminated,
}

enum Flow {
    Normal,
    Return(i64),
    Error(RuntimeErrorKind),
    OutOfSteps,
}

/// Observer called before each call with the callee and its arguments.
type CallHook<'a> = &'a mut dyn FnMut(&str, &[i64]);

/// Deterministic big-step interpreter over a MiniLang codebase.
pub struct Interpreter<'a> {
    cb: &'a Codebase,
    steps: u64,
    step_budget: u64,
    depth: usize,
    hook: Option<CallHook<'a>>,
}

impl<'a> Interpreter<'a> {
    pub fn new(cb: &'a Codebase, step_budget: u64) -> Interpreter<'a> {
        Interpreter {
            cb,
            steps: 0,
            step_budget,
            depth: 0,
            hook: None,
        }
    }

    /// Observes every call as `(callee, argument values)`.
    pub fn with_hook(mut self, hook: &'a mut dyn FnMut(&str, &[i64])) -> Interpreter<'a> {
        self.hook = Some(hook);
        self
    }

    pub fn call(&mut self, name: &str, args: &[i64]) -> Result<ExecOutcome, OracleError> {
        let f = self
            .cb
            .functions
            .get(name)
            .ok_or_else(|| OracleError::UnknownFunction(name.to_string()))?;
        if f.params.len() != args.len() {
            return Err(OracleError::Arity {
                function: name.to_string(),
                expected: f.params.len(),
                given: args.len(),
            });
        }
        let FunctionBody::Mini(body) = &f.body else {
            return Err(OracleError::Unsupported(format!("`{name}` has no MiniLang body")));
        };
        if self.depth >= MAX_CALL_DEPTH {
            return Ok(ExecOutcome::Nonterminated);
        }
        let mut env: Valuation = f.params.iter().map(|p| p.name.clone()).zip(args.iter().copied()).collect();
        self.depth += 1;
        let flow = self.block(body, &mut env);
        self.depth -= 1;
        Ok(match flow? {
            Flow::Normal => ExecOutcome::Returned(0),
            Flow::Return(v) => ExecOutcome::Returned(v),
            Flow::Error(k) => ExecOutcome::RuntimeError(k),
            Flow::OutOfSteps => ExecOutcome::Nonterminated,
        })
    }

    fn eval(&self, t: &Term, env: &Valuation) -> Result<i64, RuntimeErrorKind> {
        t.eval(env).ok_or(RuntimeErrorKind::DivByZero)
    }

    fn test(&self, c: &Formula, env: &Valuation) -> Result<bool, RuntimeErrorKind> {
        for d in c.divisors() {
            if d.eval(env) == Some(0) {
                return Err(RuntimeErrorKind::DivByZero);
            }
        }
        Ok(c.eval(env))
    }

    fn block(&mut self, stmts: &[Stmt], env: &mut Valuation) -> Result<Flow, OracleError> {
        for s in stmts {
            self.steps += 1;
            if self.steps > self.step_budget {
                return Ok(Flow::OutOfSteps);
            }
            let flow = match &s.kind {
                StmtKind::Assign { var, expr } => match self.eval(expr, env) {
                    Ok(v) => {
                        env.insert(var.clone(), v);
                        Flow::Normal
                    }
                    Err(k) => Flow::Error(k),
                },
                StmtKind::Return(e) => match self.eval(e, env) {
                    Ok(v) => Flow::Return(v),
                    Err(k) => Flow::Error(k),
                },
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                } => match self.test(cond, env) {
                    Ok(true) => self.block(then_branch, env)?,
                    Ok(false) => self.block(else_branch, env)?,
                    Err(k) => Flow::Error(k),
                },
                StmtKind::While { cond, body } => loop {
                    self.steps += 1;
                    if self.steps > self.step_budget {
                        break Flow::OutOfSteps;
                    }
                    match self.test(cond, env) {
                        Ok(true) => match self.block(body, env)? {
                            Flow::Normal => continue,
                            other => break other,
                        },
                        Ok(false) => break Flow::Normal,
                        Err(k) => break Flow::Error(k),
                    }
                },
                StmtKind::Call {
                    target, callee, args, ..
                } => {
                    let mut vals = Vec::with_capacity(args.len());
                    let mut fault = None;
                    for a in args {
                        match self.eval(a, env) {
                            Ok(v) => vals.push(v),
                            Err(k) => {
                                fault = Some(k);
                                break;
                            }
                        }
                    }
                    if let Some(k) = fault {
                        Flow::Error(k)
                    } else {
                        if let Some(h) = self.hook.as_mut() {
                            h(callee, &vals);
                        }
                        match self.call(callee, &vals)? {
                            ExecOutcome::Returned(v) => {
                                if let Some(t) = target {
                                    env.insert(t.clone(), v);
                                }
                                Flow::Normal
                            }
                            ExecOutcome::RuntimeError(k) => Flow::Error(k),
                            ExecOutcome::Nonterminated => Flow::OutOfSteps,
                        }
                    }
                }
                StmtKind::Seq(items) => self.block(items, env)?,
            };
            if !matches!(flow, Flow::Normal) {
                return Ok(flow);
            }
        }
        Ok(Flow::Normal)
    }
}

/// Runs `name(args)` to completion or until `step_budget` statements ran.
pub fn eval_function(cb: &Codebase, name: &str, args: &[i64], step_budget: u64) -> Result<ExecOutcome, OracleError> {
    Interpreter::new(cb, step_budget).call(name, args)
}

/// Result of running a statement list outside any function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockOutcome {
    FellThrough(Valuation),
    Returned(i64, Valuation),
    RuntimeError,
    Nonterminated,
}

/// Runs call-free (or codebase-resolved) statements from `env`.
pub fn exec_block(cb: &Codebase, stmts: &[Stmt], mut env: Valuation, step_budget: u64) -> Result<BlockOutcome, OracleError> {
    let mut it = Interpreter::new(cb, step_budget);
    Ok(match it.block(stmts, &mut env)? {
        Flow::Normal => BlockOutcome::FellThrough(env),
        Flow::Return(v) => BlockOutcome::Returned(v, env),
        Flow::Error(_) => BlockOutcome::RuntimeError,
        Flow::OutOfSteps => BlockOutcome::Nonterminated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebase::parse_minilang_module;
    use crate::logic::parse_formula;
    use crate::minilang::parse_function;

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    fn dom() -> BoundedDomain {
        BoundedDomain::default()
    }

    #[test]
    fn entailment_basics() {
        assert_eq!(check_entailment_bounded(&f("x > 1"), &f("x > 0"), &dom()).unwrap(), Entailment::Holds);
        match check_entailment_bounded(&f("x > 0"), &f("x > 1"), &dom()).unwrap() {
            Entailment::Fails { counterexample } => assert_eq!(counterexample["x"], 1),
            other => panic!("{other:?}"),
        }
        match check_entailment_bounded(&f("x >= 0"), &f("x > 0"), &dom()).unwrap() {
            Entailment::Fails { counterexample } => assert_eq!(counterexample["x"], 0),
            other => panic!("{other:?}"),
        }
        let p = f("x + y > z and z != 2");
        assert_eq!(check_entailment_bounded(&p, &p, &dom()).unwrap(), Entailment::Holds);
    }

    #[test]
    fn hoare_example_entails_via_sp() {
        let pre = f("x > 0");
        let sp = crate::hoare::sp_assign(&pre, "y", &crate::logic::parse_term("x + 1").unwrap(), &BTreeSet::new());
        assert_eq!(check_entailment_bounded(&sp, &f("y > 1"), &dom()).unwrap(), Entailment::Holds);
    }

    #[test]
    fn definitions_respect_the_box() {
        // y = x + 5 is only satisfiable for x <= 3 inside [-8, 8].
        let states = satisfying_states(&f("y = x + 5"), &["x".to_string()], &dom()).unwrap();
        assert_eq!(states.len(), 12);
        assert!(!states.contains(&vec![4]));
    }

    #[test]
    fn budget_is_explicit() {
        let small = BoundedDomain::new(8).with_budget(100);
        assert!(matches!(
            check_entailment_bounded(&f("x > y"), &f("x > y - 1"), &small),
            Err(OracleError::BudgetExceeded { .. })
        ));
        assert!(matches!(
            check_entailment_bounded(&f("U_p(x)"), &f("x > 0"), &dom()),
            Err(OracleError::NotPrecise(_))
        ));
    }

    #[test]
    fn interpreter_outcomes() {
        let cb = parse_minilang_module(
            "fn id(x){ return x; } fn d(x){ return 10 / x; } fn spin(x){ while (true) { x = x + 1; } } fn fall(x){ y = x; }",
            "m",
        )
        .unwrap();
        assert_eq!(eval_function(&cb, "id", &[7], 1000).unwrap(), ExecOutcome::Returned(7));
        assert_eq!(
            eval_function(&cb, "d", &[0], 1000).unwrap(),
            ExecOutcome::RuntimeError(RuntimeErrorKind::DivByZero)
        );
        assert_eq!(eval_function(&cb, "spin", &[0], 1000).unwrap(), ExecOutcome::Nonterminated);
        assert_eq!(eval_function(&cb, "fall", &[3], 1000).unwrap(), ExecOutcome::Returned(0));
        assert!(matches!(eval_function(&cb, "id", &[], 10), Err(OracleError::Arity { .. })));
        assert!(matches!(eval_function(&cb, "nope", &[], 10), Err(OracleError::UnknownFunction(_))));
    }

    #[test]
    fn recursion_depth_is_nontermination() {
        let cb = parse_minilang_module("fn r(x){ return r(x); }", "m").unwrap();
        assert_eq!(eval_function(&cb, "r", &[1], 1_000_000).unwrap(), ExecOutcome::Nonterminated);
    }

    fn summation(cond: &str) -> Stmt {
        let src = format!("fn s(n) {{ i = 0; s = 0; while ({cond}) {{ s = s + i; i = i + 1; }} return s; }}");
        parse_function(&src).unwrap().body[2].clone()
    }

    #[test]
    fn summation_invariant_holds() {
        let verdict = check_invariant_bounded(
            &f("s = i * (i - 1) / 2 and 0 <= i and i <= n"),
            &summation("i < n"),
            &f("n >= 0 and i = 0 and s = 0"),
            &f("s = n * (n - 1) / 2"),
            &dom(),
            &Contracts::new(),
            DEFAULT_STEP_BUDGET,
        )
        .unwrap();
        assert_eq!(verdict, InvariantVerdict::Holds);
    }

    #[test]
    fn trivial_invariant_reduces_to_preservation() {
        let verdict = check_invariant_bounded(
            &Formula::tt(),
            &summation("i < n"),
            &Formula::tt(),
            &Formula::tt(),
            &dom(),
            &Contracts::new(),
            DEFAULT_STEP_BUDGET,
        )
        .unwrap();
        assert_eq!(verdict, InvariantVerdict::Holds);
    }

    #[test]
    fn calls_in_loop_bodies_use_contracts() {
        let body = parse_function("fn f(n) { i = 0; while (i < n) { i = inc(i); } return i; }").unwrap().body;
        let mut contracts = Contracts::new();
        contracts.insert(
            "inc".into(),
            Contract {
                params: vec!["x".into()],
                pre: Formula::tt(),
                post: f("result = x + 1"),
            },
        );
        let verdict = check_invariant_bounded(
            &f("0 <= i and i <= n"),
            &body[1],
            &f("n >= 0 and i = 0"),
            &f("i = n"),
            &dom(),
            &contracts,
            DEFAULT_STEP_BUDGET,
        )
        .unwrap();
        assert_eq!(verdict, InvariantVerdict::Holds);
        let err = check_invariant_bounded(
            &f("0 <= i and i <= n"),
            &body[1],
            &f("n >= 0 and i = 0"),
            &f("i = n"),
            &dom(),
            &Contracts::new(),
            DEFAULT_STEP_BUDGET,
        );
        assert!(matches!(err, Err(OracleError::Unsupported(_))));
    }
}
