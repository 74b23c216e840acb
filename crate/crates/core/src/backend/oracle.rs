//! Deterministic backend answering every request kind from the bounded
//! Hoare oracle, the phrase table and (for test generation) the interpreter.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use super::{
    BackendError, BugContext, Connective, EntryInfo, FunctionInfo, PartitionFunction, PartitionGroup,
    ReasoningBackend, ReasoningRequest, ReasoningResponse, ResponseBody, SignalClass, Verdict,
};
use crate::codebase::Codebase;
use crate::hoare::{self, find_definition, snapshot};
use crate::logic::{ArithOp, CmpOp, Formula, Term};
use crate::minilang::{assigned_vars, parse_block, parse_function, Stmt, StmtKind};
use crate::oracle::derive::{
    contract_expectations, derive_expectations, domain_contracts, implementation_contracts, implementation_post,
    FnView,
};
use crate::oracle::phrases::formalize;
use crate::oracle::{check_entailment_bounded, BoundedDomain, Entailment, ExecOutcome, Interpreter, OracleError};
use crate::spec::{Condition, ExpectedSpecification, Provenance, Specification};

/// How specifications are derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Derivation {
    /// From domain knowledge and caller expectations.
    TopDown,
    /// From bodies alone, bottom-up; caller evidence is ignored.
    ImplementationOnly,
}

type ContractMap = BTreeMap<String, (Vec<String>, Formula)>;

pub struct OracleBackend {
    pub dom: BoundedDomain,
    pub step_budget: u64,
    pub derivation: Derivation,
    system: Option<Arc<Codebase>>,
    impl_contracts: OnceLock<ContractMap>,
}

impl OracleBackend {
    pub fn new(dom: BoundedDomain) -> OracleBackend {
        OracleBackend {
            dom,
            step_budget: crate::oracle::DEFAULT_STEP_BUDGET,
            derivation: Derivation::TopDown,
            system: None,
            impl_contracts: OnceLock::new(),
        }
    }

    /// The system under test; needed for test-case generation and for
    /// implementation-only derivation.
    pub fn with_system(mut self, cb: Arc<Codebase>) -> OracleBackend {
        self.system = Some(cb);
        self
    }

    pub fn with_derivation(mut self, d: Derivation) -> OracleBackend {
        self.derivation = d;
        self
    }

    pub fn with_step_budget(mut self, steps: u64) -> OracleBackend {
        self.step_budget = steps;
        self
    }

    fn contracts(&self) -> Result<&ContractMap, BackendError> {
        let cb = self
            .system
            .as_ref()
            .ok_or_else(|| BackendError::Config("implementation-only derivation needs the codebase".into()))?;
        Ok(self.impl_contracts.get_or_init(|| implementation_contracts(cb)))
    }

    fn answer(&self, req: &ReasoningRequest) -> Result<ResponseBody, BackendError> {
        match req {
            ReasoningRequest::GenerateEntrySpec { function, domain } => self.specs(function, domain, None, true),
            ReasoningRequest::GenerateInternalSpec {
                function,
                combined,
                domain,
                ..
            } => self.specs(function, domain, combined.as_ref(), false),
            ReasoningRequest::InferPostcondition {
                pre,
                statements,
                assigned,
                callees,
                hint,
                attempt,
                ..
            } => self.infer_post(pre, statements, assigned, callees, hint.as_ref(), *attempt),
            ReasoningRequest::CheckEntailment { antecedent, consequent } => Ok(self.entails(antecedent, consequent)),
            ReasoningRequest::ProposeInvariant {
                pre,
                loop_source,
                post,
                attempt,
                ..
            } => propose_invariant(pre, loop_source, post, *attempt),
            ReasoningRequest::MergeConditions { conditions, connective } => Ok(merge(conditions, *connective)),
            ReasoningRequest::GenerateTestCase {
                bug,
                entry,
                prior_attempts,
                ..
            } => self.test_case(bug, entry, prior_attempts),
            ReasoningRequest::ProposePhasePartition { functions } => Ok(partition(functions)),
            ReasoningRequest::FormalizeCondition { text } => {
                Ok(ResponseBody::Formalized(Condition::new(text.clone(), formalize(text))))
            }
        }
    }

    fn specs(
        &self,
        function: &FunctionInfo,
        domain: &str,
        combined: Option<&Specification>,
        entry: bool,
    ) -> Result<ResponseBody, BackendError> {
        let Ok(def) = parse_function(&function.source) else {
            return Ok(opaque_specs(function, domain, combined, entry));
        };
        let view = FnView {
            name: &function.name,
            params: &def.params,
            body: &def.body,
        };
        let provenance = if entry {
            Provenance::Entry
        } else if combined.is_some() {
            Provenance::Combined
        } else {
            Provenance::Cycle
        };
        if self.derivation == Derivation::ImplementationOnly {
            let contracts = self.contracts()?;
            let post = contracts.get(&function.name).map_or_else(Formula::tt, |c| c.1.clone());
            return Ok(ResponseBody::Specs {
                spec: Specification {
                    function: function.name.clone(),
                    pre: Condition::tt(),
                    post: Condition::formal(post),
                    provenance,
                },
                expectations: contract_expectations(&view, contracts),
                notes: Vec::new(),
            });
        }
        let dk = domain_contracts(domain);
        let none = |_: usize, _: &str| None;
        let mut notes = Vec::new();
        let (pre, post) = match combined {
            Some(c) => {
                let post = match (dk.ensures.get(&function.name), &c.post.formula) {
                    (Some(e), Some(f)) => Condition::new(c.post.text.clone(), Some(Formula::and([f.clone(), e.clone()]))),
                    _ => c.post.clone(),
                };
                if let (Some(p), Some(q)) = (c.pre.precise_formula(), post.precise_formula()) {
                    let implemented = implementation_post(&view, p, &none);
                    let ante = Formula::and([p.clone(), implemented]);
                    if let Ok(Entailment::Fails { .. }) = check_entailment_bounded(&ante, q, &self.dom) {
                        notes.push(format!(
                            "disagreement: the implementation of {} does not establish what its callers expect",
                            function.name
                        ));
                    }
                }
                (c.pre.clone(), post)
            }
            None => {
                let pre = dk.requires.get(&function.name).cloned().unwrap_or_else(Formula::tt);
                let post = match dk.ensures.get(&function.name) {
                    Some(e) => e.clone(),
                    None => implementation_post(&view, &pre, &none),
                };
                (Condition::formal(pre), Condition::formal(post))
            }
        };
        let spec = Specification {
            function: function.name.clone(),
            pre,
            post,
            provenance,
        };
        let expectations = derive_expectations(&view, &spec, &function.callee_params, &dk.requires);
        Ok(ResponseBody::Specs {
            spec,
            expectations,
            notes,
        })
    }

    fn infer_post(
        &self,
        pre: &Condition,
        statements: &str,
        assigned: &[String],
        callees: &[ExpectedSpecification],
        hint: Option<&Condition>,
        attempt: u32,
    ) -> Result<ResponseBody, BackendError> {
        let stmts = parse_block(statements).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let formula = pre.formula.clone().or_else(|| formalize(&pre.text));
        let Some(mut f) = formula else {
            let code = statements.split_whitespace().collect::<Vec<_>>().join(" ");
            return Ok(ResponseBody::Condition(Condition::text_only(format!(
                "{} Afterwards `{code}` has run.",
                pre.text
            ))));
        };
        if let [Stmt {
            kind: StmtKind::While { cond, body },
            ..
        }] = stmts.as_slice()
        {
            if attempt == 0 {
                if let Some(h) = hint.and_then(|h| h.formula.clone()) {
                    return Ok(ResponseBody::Condition(Condition::formal(h)));
                }
            }
            let modified = assigned_vars(body);
            let post = hoare::sp_assume(&hoare::frame(&f, &modified), &Formula::not(cond.clone()));
            return Ok(ResponseBody::Condition(Condition::formal(post)));
        }
        let mut assigned: BTreeSet<String> = assigned.iter().cloned().collect();
        for s in &stmts {
            match &s.kind {
                StmtKind::Assign { var, expr } => {
                    f = hoare::sp_assign(&f, var, expr, &assigned);
                    assigned.insert(var.clone());
                }
                StmtKind::Call {
                    target, callee, args, ..
                } => {
                    let contract = callees.iter().find(|c| &c.callee == callee);
                    let (params, post) = match contract {
                        Some(c) => (
                            c.params.clone(),
                            c.post.formula.clone().or_else(|| formalize(&c.post.text)).unwrap_or_else(Formula::tt),
                        ),
                        None => (Vec::new(), Formula::tt()),
                    };
                    f = hoare::sp_call(&f, target.as_deref(), args, &params, &post, &assigned);
                    if let Some(t) = target {
                        assigned.insert(t.clone());
                    }
                }
                StmtKind::Seq(_) | StmtKind::If { .. } | StmtKind::While { .. } | StmtKind::Return(_) => {
                    return Err(BackendError::InvalidRequest(
                        "blocks may contain only assignments and calls".into(),
                    ))
                }
            }
        }
        Ok(ResponseBody::Condition(Condition::formal(f)))
    }

    fn entails(&self, antecedent: &Condition, consequent: &Condition) -> ResponseBody {
        let ante = antecedent.formula.clone().or_else(|| formalize(&antecedent.text));
        let cons = consequent.formula.clone().or_else(|| formalize(&consequent.text));
        let (Some(a), Some(c)) = (ante, cons) else {
            return ResponseBody::unknown_verdict();
        };
        if !a.has_uninterpreted() && !c.has_uninterpreted() {
            return match check_entailment_bounded(&a, &c, &self.dom) {
                Ok(Entailment::Holds) => verdict(Verdict::Holds, None),
                Ok(Entailment::Fails { counterexample }) => verdict(Verdict::Fails, Some(counterexample)),
                Err(_) => ResponseBody::unknown_verdict(),
            };
        }
        // Predicates are opaque: a predicate conjunct of the consequent must
        // appear verbatim in every disjunct of the antecedent, and the rest is
        // checked against the predicate-free part of the antecedent. Dropping
        // antecedent conjuncts only weakens it, so `holds` stays sound.
        let disjuncts = a.disjuncts();
        let (opaque, plain): (Vec<Formula>, Vec<Formula>) = c.conjuncts().into_iter().partition(|x| x.has_uninterpreted());
        let covered = opaque.iter().all(|p| disjuncts.iter().all(|d| d.conjuncts().contains(p)));
        if !covered {
            return ResponseBody::unknown_verdict();
        }
        let weakened = Formula::or(
            disjuncts
                .iter()
                .map(|d| Formula::and(d.conjuncts().into_iter().filter(|x| !x.has_uninterpreted()))),
        );
        match check_entailment_bounded(&weakened, &Formula::and(plain), &self.dom) {
            Ok(Entailment::Holds) => verdict(Verdict::Holds, None),
            _ => ResponseBody::unknown_verdict(),
        }
    }

    fn test_case(&self, bug: &BugContext, entry: &EntryInfo, prior: &[String]) -> Result<ResponseBody, BackendError> {
        let cb = self
            .system
            .as_ref()
            .ok_or_else(|| BackendError::Unsupported("GenerateTestCase without a system under test".into()))?;
        let arity = cb
            .functions
            .get(&entry.name)
            .ok_or_else(|| BackendError::InvalidRequest(format!("unknown entry `{}`", entry.name)))?
            .params
            .len();
        let wanted: Option<Vec<Option<i64>>> = bug.counterexample.as_ref().map(|cex| {
            bug.params
                .iter()
                .map(|p| cex.get(&snapshot(p)).or_else(|| cex.get(p)).copied())
                .collect()
        });
        let matches = |args: &[i64]| match &wanted {
            Some(w) => w.len() == args.len() && w.iter().zip(args).all(|(x, a)| x.is_none_or(|x| x == *a)),
            None => false,
        };
        let total = (self.dom.width() as u128).saturating_pow(arity as u32);
        if total > self.dom.budget as u128 {
            return Err(BackendError::InvalidRequest(format!("entry `{}` has too many parameters", entry.name)));
        }
        let order = value_order(self.dom.bound);
        let mut hit: Option<Vec<i64>> = None;
        let mut reaching: Option<Vec<i64>> = None;
        for idx in 0..total as u64 {
            let mut rest = idx;
            let args: Vec<i64> = (0..arity)
                .map(|_| {
                    let v = order[(rest % order.len() as u64) as usize];
                    rest /= order.len() as u64;
                    v
                })
                .collect();
            let input = render_input(&entry.name, &args);
            if prior.contains(&input) {
                continue;
            }
            let mut calls: Vec<Vec<i64>> = Vec::new();
            if entry.name == bug.function {
                calls.push(args.clone());
            }
            let mut hook = |callee: &str, a: &[i64]| {
                if callee == bug.function && calls.len() < 64 {
                    calls.push(a.to_vec());
                }
            };
            let outcome = Interpreter::new(cb, self.step_budget).with_hook(&mut hook).call(&entry.name, &args);
            if let Err(e @ (OracleError::UnknownFunction(_) | OracleError::Arity { .. })) = outcome {
                return Err(BackendError::InvalidRequest(e.to_string()));
            }
            if calls.is_empty() {
                continue;
            }
            if calls.iter().any(|c| matches(c)) {
                hit = Some(args);
                break;
            }
            if reaching.is_none() {
                reaching = Some(args);
                if wanted.is_none() {
                    break;
                }
            }
        }
        let Some(args) = hit.or(reaching) else {
            return Ok(ResponseBody::Unparsed {
                reason: format!("no untried entry input reaches {}", bug.function),
            });
        };
        let crashes = matches!(
            Interpreter::new(cb, self.step_budget).call(&entry.name, &args),
            Ok(ExecOutcome::RuntimeError(_))
        );
        let expected_signal = if crashes {
            SignalClass::Crash
        } else if entry.reference_available {
            SignalClass::DivergenceFromReference
        } else {
            SignalClass::SpecViolation
        };
        Ok(ResponseBody::TestCase {
            input: render_input(&entry.name, &args),
            expected_signal,
            rationale: format!("entry input reaching {} with the reported witness", bug.function),
        })
    }
}

impl ReasoningBackend for OracleBackend {
    fn submit(&self, req: &ReasoningRequest) -> Result<ReasoningResponse, BackendError> {
        let body = self.answer(req)?;
        let raw = serde_json::to_string(&body).unwrap_or_default();
        Ok(ReasoningResponse {
            body,
            raw,
            tokens_used: 0,
        })
    }
}

fn verdict(v: Verdict, counterexample: Option<crate::logic::Valuation>) -> ResponseBody {
    ResponseBody::Verdict {
        verdict: v,
        counterexample,
        obligation: None,
    }
}

/// `0, 1, -1, 2, -2, …` so small inputs come first.
fn value_order(bound: i64) -> Vec<i64> {
    let mut out = vec![0];
    for v in 1..=bound {
        out.push(v);
        out.push(-v);
    }
    out
}

pub(crate) fn render_input(entry: &str, args: &[i64]) -> String {
    let mut s = entry.to_string();
    for a in args {
        s.push(' ');
        s.push_str(&a.to_string());
    }
    s
}

fn opaque_specs(function: &FunctionInfo, domain: &str, combined: Option<&Specification>, entry: bool) -> ResponseBody {
    let dk = domain_contracts(domain);
    let (pre, post, provenance) = match combined {
        Some(c) => (c.pre.clone(), c.post.clone(), Provenance::Combined),
        None => (
            dk.requires
                .get(&function.name)
                .map_or_else(|| Condition::text_only("No requirement is documented."), |f| Condition::formal(f.clone())),
            dk.ensures
                .get(&function.name)
                .map_or_else(|| Condition::text_only("No guarantee is documented."), |f| Condition::formal(f.clone())),
            if entry { Provenance::Entry } else { Provenance::Cycle },
        ),
    };
    let expectations = function
        .callee_params
        .iter()
        .enumerate()
        .map(|(site, (callee, params))| ExpectedSpecification {
            caller: function.name.clone(),
            callee: callee.clone(),
            params: params.clone(),
            pre: dk.requires.get(callee).map_or_else(
                || Condition::text_only(format!("Whatever {} establishes before calling {callee}.", function.name)),
                |f| Condition::formal(f.clone()),
            ),
            post: Condition::text_only(format!("Whatever {} relies on after calling {callee}.", function.name)),
            call_site: site,
        })
        .collect();
    ResponseBody::Specs {
        spec: Specification {
            function: function.name.clone(),
            pre,
            post,
            provenance,
        },
        expectations,
        notes: vec!["body is not MiniLang; conditions are textual".into()],
    }
}

/// `i < n` style guards: the counter, its limit and whether the bound is
/// inclusive.
fn counter_guard(cond: &Formula, modified: &BTreeSet<String>) -> Option<(String, Term, bool)> {
    cond.conjuncts().into_iter().find_map(|c| {
        let Formula::Cmp(op, l, r) = c else { return None };
        let (i, lim, inclusive) = match (op, &l, &r) {
            (CmpOp::Lt, Term::Var(i), lim) | (CmpOp::Gt, lim, Term::Var(i)) => (i.clone(), lim.clone(), false),
            (CmpOp::Le, Term::Var(i), lim) | (CmpOp::Ge, lim, Term::Var(i)) => (i.clone(), lim.clone(), true),
            _ => return None,
        };
        (modified.contains(&i) && lim.vars().is_disjoint(modified)).then_some((i, lim, inclusive))
    })
}

fn propose_invariant(pre: &Condition, loop_source: &str, post: &Condition, attempt: u32) -> Result<ResponseBody, BackendError> {
    let stmts = parse_block(loop_source).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    let [Stmt {
        kind: StmtKind::While { cond, body },
        ..
    }] = stmts.as_slice()
    else {
        return Err(BackendError::InvalidRequest("expected a single while loop".into()));
    };
    let (Some(p), Some(q)) = (pre.formula.as_ref(), post.formula.as_ref()) else {
        return Ok(ResponseBody::Invariant(Condition::text_only(format!(
            "{} holds before every iteration",
            post.text
        ))));
    };
    let modified = assigned_vars(body);
    let fr = hoare::frame(p, &modified);
    let generalized = || -> Option<Formula> {
        let (i, lim, inclusive) = counter_guard(cond, &modified)?;
        let Term::Var(n) = &lim else { return None };
        let i_t = Term::var(&i);
        let (q_i, hi) = if inclusive {
            (
                q.subst_one(n, &Term::bin(ArithOp::Sub, i_t.clone(), Term::Int(1))),
                Term::bin(ArithOp::Add, lim.clone(), Term::Int(1)),
            )
        } else {
            (q.subst_one(n, &i_t), lim.clone())
        };
        let mut parts = vec![q_i];
        let first = p.disjuncts().into_iter().next()?;
        if let Some((_, lo)) = find_definition(&first.conjuncts(), &i) {
            if lo.vars().is_disjoint(&modified) {
                parts.push(Formula::cmp(CmpOp::Le, lo, i_t.clone()));
            }
        }
        parts.push(Formula::cmp(CmpOp::Le, i_t, hi));
        parts.push(fr.clone());
        Some(Formula::and(parts))
    };
    let inv = match attempt {
        0 => generalized().unwrap_or_else(|| Formula::and([q.clone(), fr.clone()])),
        1 => Formula::and([q.clone(), fr.clone()]),
        _ => fr,
    };
    Ok(ResponseBody::Invariant(Condition::formal(inv)))
}

fn merge(conditions: &[Condition], connective: Connective) -> ResponseBody {
    let word = match connective {
        Connective::And => " and ",
        Connective::Or => " or ",
    };
    let text = if conditions.len() == 1 {
        conditions[0].text.clone()
    } else {
        conditions.iter().map(|c| format!("({})", c.text)).collect::<Vec<_>>().join(word)
    };
    let formulas: Option<Vec<Formula>> = conditions
        .iter()
        .map(|c| c.formula.clone().or_else(|| formalize(&c.text)))
        .collect();
    let formula = formulas.map(|fs| match connective {
        Connective::And => Formula::and(fs),
        Connective::Or => Formula::or(fs),
    });
    ResponseBody::Merged(Condition::new(text, formula))
}

/// Weakly connected components of the call graph, labelled by their
/// smallest member.
fn partition(functions: &[PartitionFunction]) -> ResponseBody {
    let names: BTreeSet<&str> = functions.iter().map(|f| f.name.as_str()).collect();
    let mut parent: BTreeMap<&str, &str> = names.iter().map(|n| (*n, *n)).collect();
    fn root<'a>(parent: &BTreeMap<&'a str, &'a str>, mut x: &'a str) -> &'a str {
        while parent[x] != x {
            x = parent[x];
        }
        x
    }
    for f in functions {
        for c in &f.callees {
            if !names.contains(c.as_str()) {
                continue;
            }
            let (a, b) = (root(&parent, &f.name), root(&parent, c));
            if a != b {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent.insert(hi, lo);
            }
        }
    }
    let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for n in &names {
        groups.entry(root(&parent, n)).or_default().push(n.to_string());
    }
    ResponseBody::Partition {
        groups: groups
            .into_iter()
            .map(|(r, functions)| PartitionGroup {
                label: format!("component-{r}"),
                functions,
            })
            .collect(),
    }
}
