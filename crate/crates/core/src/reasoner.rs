//! Per-function checking of a body against its specification by forward
//! propagation of conditions, one path state per exit.
//!
//! Only the SpecFile is read: callee behavior comes from the expectations it
//! carries, never from callee bodies.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{ReasoningBackend, ReasoningRequest, ResponseBody, Verdict};
use crate::fsutil::{run_pool, write_json};
use crate::hoare::{self, RESULT};
use crate::logic::{Formula, Term, Valuation};
use crate::minilang::{assigned_vars, calls_in, parse_function, render_stmts, walk, Stmt, StmtKind};
use crate::oracle::derive::{rename_to_snapshots, FnView};
use crate::oracle::{
    check_entailment_bounded, check_invariant_bounded, BoundedDomain, Contract, Contracts, Entailment, InvariantVerdict,
    DEFAULT_STEP_BUDGET,
};
use crate::spec::{Condition, ExpectedSpecification, SpecFile};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReasonerConfig {
    pub dom: BoundedDomain,
    pub step_budget: u64,
    /// Exit checks per function before analysis is truncated.
    pub max_paths: usize,
    pub invariant_attempts: u32,
    pub post_attempts: u32,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            dom: BoundedDomain::default(),
            step_budget: DEFAULT_STEP_BUDGET,
            max_paths: 64,
            invariant_attempts: 3,
            post_attempts: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSpan {
    pub file: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub span: CodeSpan,
    pub code: String,
    pub pre: Condition,
    pub post: Condition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    TextEntailment,
    FormulaEntailment,
    UnknownEntailment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BugStatus {
    Potential,
    Confirmed,
    Unconfirmed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Postcondition,
    CalleePrecondition { callee: String, call_site: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PotentialBug {
    pub id: String,
    pub function: String,
    pub params: Vec<String>,
    pub statement: CodeSpan,
    pub violated: Condition,
    pub violation: Violation,
    pub trace: Vec<TraceStep>,
    pub verdict_source: VerdictSource,
    pub status: BugStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Valuation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopSummary {
    pub line: usize,
    pub post: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<Condition>,
    pub validated: bool,
}

/// Everything learned about one function; written to `reports/<fn>.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionReport {
    pub function: String,
    pub bugs: Vec<PotentialBug>,
    #[serde(default)]
    pub loops: Vec<LoopSummary>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
    /// Set when the body could not be analyzed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningSummary {
    pub functions: usize,
    pub potential_bugs: usize,
    pub skipped: Vec<String>,
    pub truncated: Vec<String>,
    pub bugs_per_function: BTreeMap<String, usize>,
}

/// True when every step's pre is the previous step's post.
pub fn chain_ok(trace: &[TraceStep]) -> bool {
    trace.windows(2).all(|w| w[0].post == w[1].pre)
}

fn unknown_after(code: &str) -> Condition {
    let code = code.split_whitespace().collect::<Vec<_>>().join(" ");
    Condition::text_only(format!("Unknown state after `{code}`."))
}

/// Post of a branch- and loop-free statement run. Calls assume the callee
/// expectation found in `callees`.
pub fn infer_block_post(
    function: &str,
    pre: &Condition,
    block: &[Stmt],
    assigned: &BTreeSet<String>,
    callees: &[ExpectedSpecification],
    backend: &dyn ReasoningBackend,
) -> Condition {
    if block.is_empty() {
        return pre.clone();
    }
    let statements = render_stmts(block);
    let req = ReasoningRequest::InferPostcondition {
        function: function.to_string(),
        pre: pre.clone(),
        statements: statements.clone(),
        assigned: assigned.iter().cloned().collect(),
        callees: callees.to_vec(),
        hint: None,
        attempt: 0,
    };
    match backend.submit(&req).map(|r| r.body) {
        Ok(ResponseBody::Condition(c)) => c,
        Ok(other) => {
            log::debug!("block post for {function} unavailable: {other:?}");
            unknown_after(&statements)
        }
        Err(e) => {
            log::warn!("block post for {function} failed: {e}");
            unknown_after(&statements)
        }
    }
}

/// `pre ∧ cond`, at formula level when `pre` has a formula.
fn assume(pre: &Condition, cond: &Formula) -> Condition {
    match &pre.formula {
        Some(f) => Condition::formal(hoare::sp_assume(f, cond)),
        None => Condition::text_only(format!("{} Moreover, {cond} holds.", pre.text)),
    }
}

/// Disjunction of the two arm posts.
pub fn infer_branch_post(pre: &Condition, cond: &Formula, then_post: &Condition, else_post: Option<&Condition>) -> Condition {
    let assumed_else;
    let else_post = match else_post {
        Some(c) => c,
        None => {
            assumed_else = assume(pre, &Formula::not(cond.clone()));
            &assumed_else
        }
    };
    if then_post == else_post {
        return then_post.clone();
    }
    match (then_post.precise_formula(), else_post.precise_formula()) {
        (Some(a), Some(b)) => Condition::formal(Formula::or([a.clone(), b.clone()])),
        _ => Condition::new(
            format!("Either ({}) or ({}).", then_post.text, else_post.text),
            match (&then_post.formula, &else_post.formula) {
                (Some(a), Some(b)) => Some(Formula::or([a.clone(), b.clone()])),
                _ => None,
            },
        ),
    }
}

/// Attaches a formula from the backend when `c` has none.
pub fn formalize_condition(c: &Condition, backend: &dyn ReasoningBackend) -> Condition {
    if c.formula.is_some() {
        return c.clone();
    }
    let req = ReasoningRequest::FormalizeCondition { text: c.text.clone() };
    match backend.submit(&req).map(|r| r.body) {
        Ok(ResponseBody::Formalized(f)) if f.formula.is_some() => Condition::new(c.text.clone(), f.formula),
        _ => c.clone(),
    }
}

/// Entailment verdict: bounded formula check when both sides are precise,
/// the backend otherwise.
pub fn check_entails(
    ante: &Condition,
    cons: &Condition,
    dom: &BoundedDomain,
    backend: &dyn ReasoningBackend,
) -> (Verdict, VerdictSource, Option<Valuation>) {
    if let (Some(a), Some(c)) = (ante.precise_formula(), cons.precise_formula()) {
        match check_entailment_bounded(a, c, dom) {
            Ok(Entailment::Holds) => return (Verdict::Holds, VerdictSource::FormulaEntailment, None),
            Ok(Entailment::Fails { counterexample }) => {
                return (Verdict::Fails, VerdictSource::FormulaEntailment, Some(counterexample))
            }
            Err(e) => log::debug!("local entailment check gave up: {e}"),
        }
    }
    let req = ReasoningRequest::CheckEntailment {
        antecedent: ante.clone(),
        consequent: cons.clone(),
    };
    match backend.submit(&req).map(|r| r.body) {
        Ok(ResponseBody::Verdict {
            verdict,
            counterexample,
            ..
        }) => match verdict {
            Verdict::Unknown => (Verdict::Unknown, VerdictSource::UnknownEntailment, None),
            v => (v, VerdictSource::TextEntailment, counterexample),
        },
        _ => (Verdict::Unknown, VerdictSource::UnknownEntailment, None),
    }
}

#[derive(Clone, Debug)]
pub struct LoopResult {
    pub post: Condition,
    pub invariant: Option<Condition>,
    pub validated: bool,
}

fn loop_contracts(body: &[Stmt], callees: &[ExpectedSpecification]) -> Option<Contracts> {
    let mut out = Contracts::new();
    for s in calls_in(body) {
        let StmtKind::Call { callee, site, .. } = &s.kind else { continue };
        let e = callees.iter().find(|e| &e.callee == callee && e.call_site == *site)?;
        let contract = Contract {
            params: e.params.clone(),
            pre: e.pre.precise_formula()?.clone(),
            post: e.post.precise_formula()?.clone(),
        };
        if out.get(callee).is_some_and(|c| c != &contract) {
            return None;
        }
        out.insert(callee.clone(), contract);
    }
    Some(out)
}

fn holds(v: (Verdict, VerdictSource, Option<Valuation>)) -> bool {
    v.0 == Verdict::Holds
}

/// Checks the three loop obligations for `inv`: locally when everything is
/// precise, through the backend otherwise.
#[allow(clippy::too_many_arguments)]
fn invariant_holds(
    function: &str,
    inv: &Condition,
    loop_stmt: &Stmt,
    pre: &Condition,
    post: &Condition,
    assigned: &BTreeSet<String>,
    callees: &[ExpectedSpecification],
    cfg: &ReasonerConfig,
    backend: &dyn ReasoningBackend,
) -> bool {
    let StmtKind::While { cond, body } = &loop_stmt.kind else { return false };
    if let (Some(i), Some(p), Some(q), Some(contracts)) = (
        inv.precise_formula(),
        pre.precise_formula(),
        post.precise_formula(),
        loop_contracts(body, callees),
    ) {
        match check_invariant_bounded(i, loop_stmt, p, q, &cfg.dom, &contracts, cfg.step_budget) {
            Ok(InvariantVerdict::Holds) => return true,
            Ok(InvariantVerdict::Fails { obligation, witness }) => {
                log::debug!("invariant {i} fails obligation {obligation} at {witness:?}");
                return false;
            }
            Err(e) => log::debug!("local invariant check gave up: {e}"),
        }
    }
    if !holds(check_entails(pre, inv, &cfg.dom, backend)) {
        return false;
    }
    let entry = assume(inv, cond);
    let mut inner = assigned.clone();
    inner.extend(assigned_vars(body));
    let req = ReasoningRequest::InferPostcondition {
        function: function.to_string(),
        pre: entry,
        statements: render_stmts(body),
        assigned: inner.into_iter().collect(),
        callees: callees.to_vec(),
        hint: None,
        attempt: 0,
    };
    let after = match backend.submit(&req).map(|r| r.body) {
        Ok(ResponseBody::Condition(c)) => c,
        _ => return false,
    };
    if !holds(check_entails(&after, inv, &cfg.dom, backend)) {
        return false;
    }
    let exit = assume(inv, &Formula::not(cond.clone()));
    holds(check_entails(&exit, post, &cfg.dom, backend))
}

/// Postcondition-first loop handling: ask for a post, then search for an
/// invariant proving it; on exhaustion ask for another post.
#[allow(clippy::too_many_arguments)]
pub fn infer_loop_post(
    function: &str,
    pre: &Condition,
    loop_stmt: &Stmt,
    hint: Option<&Condition>,
    assigned: &BTreeSet<String>,
    callees: &[ExpectedSpecification],
    cfg: &ReasonerConfig,
    backend: &dyn ReasoningBackend,
) -> LoopResult {
    let StmtKind::While { cond, .. } = &loop_stmt.kind else {
        return LoopResult {
            post: unknown_after("non-loop"),
            invariant: None,
            validated: false,
        };
    };
    let negated = Formula::not(cond.clone());
    if let Some(p) = pre.precise_formula() {
        if let Ok(Entailment::Holds) = check_entailment_bounded(p, &negated, &cfg.dom) {
            return LoopResult {
                post: assume(pre, &negated),
                invariant: Some(pre.clone()),
                validated: true,
            };
        }
    }
    let loop_source = render_stmts(std::slice::from_ref(loop_stmt));
    let mut last = None;
    for post_attempt in 0..cfg.post_attempts {
        let req = ReasoningRequest::InferPostcondition {
            function: function.to_string(),
            pre: pre.clone(),
            statements: loop_source.clone(),
            assigned: assigned.iter().cloned().collect(),
            callees: callees.to_vec(),
            hint: hint.cloned(),
            attempt: post_attempt,
        };
        let post = match backend.submit(&req).map(|r| r.body) {
            Ok(ResponseBody::Condition(c)) => c,
            _ => continue,
        };
        for attempt in 0..cfg.invariant_attempts {
            let req = ReasoningRequest::ProposeInvariant {
                pre: pre.clone(),
                loop_source: loop_source.clone(),
                post: post.clone(),
                attempt,
                callees: callees.to_vec(),
            };
            let inv = match backend.submit(&req).map(|r| r.body) {
                Ok(ResponseBody::Invariant(c)) => c,
                _ => continue,
            };
            if invariant_holds(function, &inv, loop_stmt, pre, &post, assigned, callees, cfg, backend) {
                return LoopResult {
                    post,
                    invariant: Some(inv),
                    validated: true,
                };
            }
        }
        last = Some(post);
    }
    LoopResult {
        post: last.unwrap_or_else(|| unknown_after(&loop_source)),
        invariant: None,
        validated: false,
    }
}

#[derive(Clone, Debug)]
struct PathState {
    trace: Vec<TraceStep>,
    current: Condition,
    assigned: BTreeSet<String>,
}

impl PathState {
    fn step(&mut self, span: CodeSpan, code: String, post: Condition) {
        let pre = std::mem::replace(&mut self.current, post.clone());
        self.trace.push(TraceStep { span, code, pre, post });
    }
}

struct Walker<'a> {
    function: String,
    params: Vec<String>,
    file: String,
    base_line: usize,
    expectations: &'a [ExpectedSpecification],
    /// Spec post over entry snapshots, and its precise formula.
    exit: Condition,
    cfg: &'a ReasonerConfig,
    backend: &'a dyn ReasoningBackend,
    bugs: Vec<PotentialBug>,
    loops: Vec<LoopSummary>,
    diagnostics: Vec<String>,
    reported: BTreeSet<(usize, String)>,
    exits: usize,
    truncated: bool,
}

/// `None` marks a continuation that is not loop-free.
type Conts<'s> = Vec<Option<&'s [Stmt]>>;

fn head(s: &Stmt) -> String {
    match &s.kind {
        StmtKind::If { cond, .. } => format!("if ({cond})"),
        StmtKind::While { cond, .. } => format!("while ({cond})"),
        _ => render_stmts(std::slice::from_ref(s)).trim().to_string(),
    }
}

impl<'a> Walker<'a> {
    fn span(&self, line: usize) -> CodeSpan {
        CodeSpan {
            file: self.file.clone(),
            line: self.base_line + line.saturating_sub(1),
        }
    }

    fn expectation(&self, callee: &str, site: usize) -> Option<&'a ExpectedSpecification> {
        self.expectations.iter().find(|e| e.callee == callee && e.call_site == site)
    }

    fn report(
        &mut self,
        line: usize,
        violated: Condition,
        violation: Violation,
        trace: Vec<TraceStep>,
        source: VerdictSource,
        counterexample: Option<Valuation>,
    ) {
        let statement = self.span(line);
        if !self.reported.insert((statement.line, violated.text.clone())) {
            return;
        }
        let id = format!("{}-{}", self.function, self.bugs.len() + 1);
        self.bugs.push(PotentialBug {
            id,
            function: self.function.clone(),
            params: self.params.clone(),
            statement,
            violated,
            violation,
            trace,
            verdict_source: source,
            status: BugStatus::Potential,
            counterexample,
        });
    }

    /// Weakest precondition of the continuation w.r.t. the function postcondition.
    fn hint(&self, conts: &Conts, rest: &[Stmt]) -> Option<Condition> {
        let exit = self.exit.precise_formula()?;
        let mut q = exit.subst_one(RESULT, &Term::Int(0));
        for level in conts.iter() {
            q = hoare::wp_stmts((*level)?, &q, exit)?;
        }
        q = hoare::wp_stmts(rest, &q, exit)?;
        Some(Condition::formal(q))
    }

    fn check_exit(&mut self, st: &PathState, line: usize, value: &Term, code: String) {
        if self.exits >= self.cfg.max_paths {
            self.truncated = true;
            return;
        }
        self.exits += 1;
        let ante = match &st.current.formula {
            Some(f) => Condition::formal(hoare::sp_assign(f, RESULT, value, &st.assigned)),
            None => Condition::text_only(format!("{} The function returns {value}.", st.current.text)),
        };
        let mut trace = st.trace.clone();
        trace.push(TraceStep {
            span: self.span(line),
            code,
            pre: st.current.clone(),
            post: ante.clone(),
        });
        let (verdict, source, cex) = check_entails(&ante, &self.exit, &self.cfg.dom, self.backend);
        if verdict != Verdict::Holds {
            let violated = self.exit.clone();
            self.report(line, violated, Violation::Postcondition, trace, source, cex);
        }
    }

    fn check_call(&mut self, st: &PathState, s: &Stmt) {
        let StmtKind::Call { callee, args, site, .. } = &s.kind else { return };
        let Some(e) = self.expectation(callee, *site) else {
            self.diagnostics
                .push(format!("no expectation for the call to {callee} at site {site}; its precondition is not checked"));
            return;
        };
        let pre = formalize_condition(&e.pre, self.backend);
        let instantiated = Condition::new(
            format!(
                "{} (with {})",
                pre.text,
                e.params
                    .iter()
                    .zip(args)
                    .map(|(p, a)| format!("{p} = {a}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            pre.formula.as_ref().map(|f| hoare::instantiate_contract(f, &e.params, args, None)),
        );
        let (verdict, source, cex) = check_entails(&st.current, &instantiated, &self.cfg.dom, self.backend);
        if verdict != Verdict::Holds {
            self.report(
                s.line,
                e.pre.clone(),
                Violation::CalleePrecondition {
                    callee: callee.clone(),
                    call_site: *site,
                },
                st.trace.clone(),
                source,
                cex,
            );
        }
    }

    fn block(&mut self, mut st: PathState, block: &[Stmt]) -> PathState {
        if let Some(first) = block.first() {
            if matches!(first.kind, StmtKind::Call { .. }) {
                self.check_call(&st, first);
            }
        }
        let callees: Vec<ExpectedSpecification> = calls_in(block)
            .into_iter()
            .filter_map(|s| match &s.kind {
                StmtKind::Call { callee, site, .. } => self.expectation(callee, *site).cloned(),
                _ => None,
            })
            .collect();
        let post = infer_block_post(&self.function, &st.current, block, &st.assigned, &callees, self.backend);
        st.assigned.extend(assigned_vars(block));
        let code = render_stmts(block).trim().to_string();
        st.step(self.span(block[0].line), code, post);
        st
    }

    fn run<'s>(&mut self, stmts: &'s [Stmt], conts: &mut Conts<'s>, mut st: PathState) -> Option<PathState> {
        let mut i = 0;
        while i < stmts.len() {
            let s = &stmts[i];
            match &s.kind {
                StmtKind::Assign { .. } | StmtKind::Call { .. } => {
                    let mut j = i + 1;
                    while j < stmts.len() && matches!(stmts[j].kind, StmtKind::Assign { .. }) {
                        j += 1;
                    }
                    st = self.block(st, &stmts[i..j]);
                    i = j;
                    continue;
                }
                StmtKind::Return(e) => {
                    self.check_exit(&st, s.line, e, head(s));
                    return None;
                }
                StmtKind::Seq(items) => {
                    conts.push(Some(&stmts[i + 1..]));
                    let r = self.run(items, conts, st);
                    conts.pop();
                    st = r?;
                }
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                } => {
                    conts.push(Some(&stmts[i + 1..]));
                    let mut then_st = st.clone();
                    then_st.step(self.span(s.line), head(s), assume(&st.current, cond));
                    let a = self.run(then_branch, conts, then_st);
                    let mut else_st = st.clone();
                    else_st.step(self.span(s.line), format!("else of {}", head(s)), assume(&st.current, &Formula::not(cond.clone())));
                    let b = self.run(else_branch, conts, else_st);
                    conts.pop();
                    st = match (a, b) {
                        (None, None) => return None,
                        (Some(x), None) | (None, Some(x)) => x,
                        (Some(x), Some(y)) => {
                            let joined = infer_branch_post(&st.current, cond, &x.current, Some(&y.current));
                            let mut assigned = x.assigned;
                            assigned.extend(y.assigned);
                            let mut next = st;
                            next.assigned = assigned;
                            next.step(self.span(s.line), format!("join of {}", head(s)), joined);
                            next
                        }
                    };
                }
                StmtKind::While { cond, body } => {
                    st = self.run_loop(s, cond, body, &stmts[i + 1..], conts, st);
                }
            }
            i += 1;
        }
        Some(st)
    }

    fn run_loop<'s>(
        &mut self,
        s: &'s Stmt,
        cond: &Formula,
        body: &'s [Stmt],
        rest: &'s [Stmt],
        conts: &mut Conts<'s>,
        mut st: PathState,
    ) -> PathState {
        let hint = self.hint(conts, rest);
        let callees: Vec<ExpectedSpecification> = calls_in(body)
            .into_iter()
            .filter_map(|c| match &c.kind {
                StmtKind::Call { callee, site, .. } => self.expectation(callee, *site).cloned(),
                _ => None,
            })
            .collect();
        let r = infer_loop_post(
            &self.function,
            &st.current,
            s,
            hint.as_ref(),
            &st.assigned,
            &callees,
            self.cfg,
            self.backend,
        );
        let modified = assigned_vars(body);
        let negated = Formula::not(cond.clone());

        // Calls and returns inside the body are checked from a state every
        // iteration satisfies.
        let mut nested = false;
        walk(body, &mut |x| nested |= matches!(x.kind, StmtKind::Call { .. } | StmtKind::Return(_)));
        if nested {
            let entry = match (&r.invariant, &st.current.formula) {
                (Some(inv), _) => assume(inv, cond),
                (None, Some(f)) => Condition::formal(hoare::sp_assume(&hoare::frame(f, &modified), cond)),
                (None, None) => Condition::text_only(format!("Inside the loop `{}`; little is known.", head(s))),
            };
            let mut inner = st.clone();
            inner.assigned.extend(modified.iter().cloned());
            inner.step(self.span(s.line), format!("body of {}", head(s)), entry);
            conts.push(None);
            self.run(body, conts, inner);
            conts.pop();
        }

        let after = if r.validated {
            match (&r.post.formula, &st.current.formula) {
                (Some(q), Some(p)) => Condition::formal(Formula::and([q.clone(), negated, hoare::frame(p, &modified)])),
                _ => Condition::new(format!("{} The loop condition {cond} no longer holds.", r.post.text), None),
            }
        } else {
            self.diagnostics.push(format!(
                "loop at line {} has no validated postcondition",
                self.span(s.line).line
            ));
            Condition::text_only(format!(
                "Unknown: the loop at line {} was not shown to establish: {}",
                self.span(s.line).line,
                r.post.text
            ))
        };
        self.loops.push(LoopSummary {
            line: self.span(s.line).line,
            post: r.post.clone(),
            invariant: r.invariant.clone(),
            validated: r.validated,
        });
        st.assigned.extend(modified);
        st.step(self.span(s.line), head(s), after);
        st
    }
}

/// Checks one function against its SpecFile.
pub fn verify_function(sf: &SpecFile, backend: &dyn ReasoningBackend, cfg: &ReasonerConfig) -> FunctionReport {
    let name = sf.spec.function.clone();
    let skipped = |reason: String| FunctionReport {
        function: name.clone(),
        bugs: Vec::new(),
        loops: Vec::new(),
        diagnostics: Vec::new(),
        skipped: Some(reason),
    };
    let def = match parse_function(&sf.body) {
        Ok(d) if d.name == name => d,
        Ok(d) => return skipped(format!("body defines {} instead of {name}", d.name)),
        Err(e) => return skipped(format!("body is not analyzable: {e}")),
    };
    let view = FnView {
        name: &name,
        params: &def.params,
        body: &def.body,
    };
    let pre = formalize_condition(&sf.spec.pre, backend);
    let post = formalize_condition(&sf.spec.post, backend);
    let (entry, snaps) = match &pre.formula {
        Some(f) => {
            let (state, snaps) = view.entry_state(f);
            (Condition::formal(state), snaps)
        }
        None => (pre.clone(), view.snapshotted()),
    };
    let exit = match &post.formula {
        Some(f) => Condition::new(post.text.clone(), Some(rename_to_snapshots(f, &snaps))),
        None => post.clone(),
    };
    let mut w = Walker {
        function: name.clone(),
        params: def.params.clone(),
        file: sf.span.file.clone(),
        base_line: sf.span.start_line,
        expectations: &sf.callee_expectations,
        exit,
        cfg,
        backend,
        bugs: Vec::new(),
        loops: Vec::new(),
        diagnostics: Vec::new(),
        reported: BTreeSet::new(),
        exits: 0,
        truncated: false,
    };
    let st = PathState {
        trace: vec![TraceStep {
            span: w.span(1),
            code: format!("entry of {name}"),
            pre: pre.clone(),
            post: entry.clone(),
        }],
        current: entry,
        assigned: BTreeSet::new(),
    };
    let mut conts = Vec::new();
    if let Some(end) = w.run(&def.body, &mut conts, st) {
        let last = def.end_line.saturating_sub(def.start_line) + 1;
        w.check_exit(&end, last, &Term::Int(0), "end of function (returns 0)".to_string());
    }
    if w.truncated {
        w.diagnostics.push(format!(
            "analysis-truncated: more than {} exit paths; the rest were not checked",
            cfg.max_paths
        ));
    }
    FunctionReport {
        function: name,
        bugs: w.bugs,
        loops: w.loops,
        diagnostics: w.diagnostics,
        skipped: None,
    }
}

/// Verifies every SpecFile concurrently and writes `reports/`.
pub fn run_reasoning(
    specs: &[SpecFile],
    backend: &dyn ReasoningBackend,
    cfg: &ReasonerConfig,
    workers: usize,
    out_dir: &Path,
) -> std::io::Result<Vec<FunctionReport>> {
    let reports = run_pool(specs, workers, |sf| verify_function(sf, backend, cfg));
    let dir = out_dir.join("reports");
    std::fs::create_dir_all(&dir)?;
    let mut summary = ReasoningSummary {
        functions: reports.len(),
        ..ReasoningSummary::default()
    };
    for r in &reports {
        write_json(&dir.join(format!("{}.json", r.function)), r)?;
        summary.potential_bugs += r.bugs.len();
        summary.bugs_per_function.insert(r.function.clone(), r.bugs.len());
        if r.skipped.is_some() {
            summary.skipped.push(r.function.clone());
        }
        if r.diagnostics.iter().any(|d| d.starts_with("analysis-truncated")) {
            summary.truncated.push(r.function.clone());
        }
    }
    write_json(&dir.join("_summary.json"), &summary)?;
    Ok(reports)
}

/// Reads `reports/<fn>.json` files, in name order.
pub fn load_reports(out_dir: &Path) -> std::io::Result<Vec<FunctionReport>> {
    let dir = out_dir.join("reports");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json") && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('_'))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| crate::fsutil::read_json(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::OracleBackend;
    use crate::codebase::Span;
    use crate::logic::parse_formula;
    use crate::spec::{Provenance, Specification};

    fn oracle() -> OracleBackend {
        OracleBackend::new(BoundedDomain::new(6))
    }

    fn cfg() -> ReasonerConfig {
        ReasonerConfig {
            dom: BoundedDomain::new(6),
            ..ReasonerConfig::default()
        }
    }

    fn sf(src: &str, pre: &str, post: &str, exps: Vec<ExpectedSpecification>) -> SpecFile {
        let def = parse_function(src).unwrap();
        SpecFile::new(
            Specification {
                function: def.name.clone(),
                pre: Condition::formal(parse_formula(pre).unwrap()),
                post: Condition::formal(parse_formula(post).unwrap()),
                provenance: Provenance::Entry,
            },
            exps,
            src,
            "minilang",
            Span {
                file: "t.mini".into(),
                start_line: 10,
                end_line: 10 + src.lines().count() - 1,
            },
        )
    }

    #[test]
    fn exact_implementation_has_no_bugs() {
        let s = sf("fn f(x) {\n  y = x + 1;\n  return y * 2;\n}", "x >= 0", "result == 2 * x + 2", vec![]);
        let r = verify_function(&s, &oracle(), &cfg());
        assert!(r.bugs.is_empty(), "{:?}", r.bugs);
        assert!(r.skipped.is_none());
    }

    #[test]
    fn early_return_is_reported_with_a_chained_trace() {
        let src = "fn f(x) {\n  if (x > 3) {\n    return 0;\n  }\n  return x;\n}";
        let s = sf(src, "x >= 0", "result == x", vec![]);
        let r = verify_function(&s, &oracle(), &cfg());
        assert_eq!(r.bugs.len(), 1);
        let b = &r.bugs[0];
        assert_eq!(b.statement.line, 12);
        assert_eq!(b.verdict_source, VerdictSource::FormulaEntailment);
        assert_eq!(b.status, BugStatus::Potential);
        assert_eq!(b.id, "f-1");
        assert!(chain_ok(&b.trace));
        let cex = b.counterexample.as_ref().unwrap();
        assert!(cex["x"] > 3);
    }

    #[test]
    fn branch_post_is_the_disjunction() {
        let pre = Condition::formal(parse_formula("x >= -3").unwrap());
        let cond = parse_formula("x > 0").unwrap();
        let t = assume(&pre, &cond);
        let t = Condition::formal(Formula::and([t.formula.unwrap(), parse_formula("r == 1").unwrap()]));
        let e = assume(&pre, &Formula::not(cond.clone()));
        let e = Condition::formal(Formula::and([e.formula.unwrap(), parse_formula("r == 0").unwrap()]));
        let joined = infer_branch_post(&pre, &cond, &t, Some(&e));
        let want = parse_formula("x >= -3 && ((x > 0 && r == 1) || (x <= 0 && r == 0))").unwrap();
        let dom = BoundedDomain::new(4);
        let got = joined.formula.unwrap();
        assert_eq!(check_entailment_bounded(&got, &want, &dom).unwrap(), Entailment::Holds);
        assert_eq!(check_entailment_bounded(&want, &got, &dom).unwrap(), Entailment::Holds);
        assert_eq!(infer_branch_post(&pre, &cond, &t, Some(&t)), t);
    }

    #[test]
    fn callee_precondition_is_checked_at_the_call() {
        let src = "fn f(x) {\n  y = g(x - 1);\n  return y;\n}";
        let e = ExpectedSpecification {
            caller: "f".into(),
            callee: "g".into(),
            params: vec!["a".into()],
            pre: Condition::formal(parse_formula("a >= 0").unwrap()),
            post: Condition::formal(parse_formula("result == a").unwrap()),
            call_site: 0,
        };
        let s = sf(src, "x >= 0", "result == x - 1", vec![e]);
        let r = verify_function(&s, &oracle(), &cfg());
        assert_eq!(r.bugs.len(), 1);
        assert!(matches!(r.bugs[0].violation, Violation::CalleePrecondition { .. }));
        assert_eq!(r.bugs[0].statement.line, 11);
    }

    #[test]
    fn summation_loop_is_validated() {
        let src = "fn sum(n) {\n  i = 0;\n  s = 0;\n  while (i < n) {\n    s = s + i;\n    i = i + 1;\n  }\n  return s;\n}";
        let s = sf(src, "n >= 0", "result == n * (n - 1) / 2", vec![]);
        let r = verify_function(&s, &oracle(), &cfg());
        assert!(r.bugs.is_empty(), "{:?}", r.bugs);
        assert_eq!(r.loops.len(), 1);
        assert!(r.loops[0].validated);
    }

    #[test]
    fn off_by_one_loop_is_flagged() {
        let src = "fn sum(n) {\n  i = 0;\n  s = 0;\n  while (i <= n) {\n    s = s + i;\n    i = i + 1;\n  }\n  return s;\n}";
        let s = sf(src, "n >= 0", "result == n * (n - 1) / 2", vec![]);
        let r = verify_function(&s, &oracle(), &cfg());
        assert_eq!(r.bugs.len(), 1);
        assert_eq!(r.bugs[0].statement.line, 17);
    }

    #[test]
    fn zero_iteration_loop_keeps_pre_as_invariant() {
        let pre = Condition::formal(parse_formula("i == 5 && n == 2").unwrap());
        let def = parse_function("fn f(n) { i = 0; while (i < n) { i = i + 1; } return i; }").unwrap();
        let loop_stmt = &def.body[1];
        let r = infer_loop_post("f", &pre, loop_stmt, None, &BTreeSet::new(), &[], &cfg(), &oracle());
        assert!(r.validated);
        assert_eq!(r.invariant, Some(pre));
    }

    #[test]
    fn foreign_bodies_are_skipped() {
        let mut s = sf("fn f(x) {\n  return x;\n}", "true", "result == x", vec![]);
        s.body = "def f(x):\n    return x\n".into();
        let r = verify_function(&s, &oracle(), &cfg());
        assert!(r.skipped.is_some());
        assert!(r.bugs.is_empty());
    }
}
