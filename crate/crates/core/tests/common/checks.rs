//! One function per acceptance property. Each returns `Err(reason)` on the
//! first discrepancy so both the proptests and the acceptance runner can
//! report it.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use specforge_core::backend::{BackendError, ReasoningBackend, ReasoningRequest, ReasoningResponse};
use specforge_core::codebase::load_minilang_file;
use specforge_core::hoare::sp_assign;
use specforge_core::minilang::{parse_function, Stmt, StmtKind};
use specforge_core::oracle::{check_invariant_bounded, eval_function, satisfying_states, Contracts, InvariantVerdict};
use specforge_core::planner::{find_sccs, layer_graph, CallGraph};
use specforge_core::reasoner::{load_reports, FunctionReport};
use specforge_core::spec::combine_expected_specs;
use specforge_core::validator::load_validation;
use specforge_core::{
    parse_formula, BoundedDomain, Condition, Derivation, ExecOutcome, ExpectedSpecification, Formula, OracleBackend,
    Pipeline, PotentialBug, RunConfig, ValidationOutcome,
};

use super::*;

pub const B: i64 = 8;

/// Layering soundness and SCC partition against pairwise reachability.
pub fn check_plan(g: &CallGraph) -> Result<(), String> {
    let plan = layer_graph(g).map_err(|e| e.to_string())?;
    let layer_of = plan.layer_of();
    if layer_of.len() != g.nodes.len() || plan.layers.iter().map(|l| l.len()).sum::<usize>() != g.nodes.len() {
        return Err("layers do not partition the nodes".into());
    }
    if plan.layers.iter().any(|l| l.is_empty()) {
        return Err("empty layer".into());
    }
    let reach = reachability(g);
    let mutual = |a: &String, b: &String| reach[a].contains(b) && reach[b].contains(a);
    for a in &g.nodes {
        for b in &g.nodes {
            if (plan.scc_of[a] == plan.scc_of[b]) != mutual(a, b) {
                return Err(format!("SCC disagreement on {a}, {b}"));
            }
        }
    }
    let sccs = find_sccs(g);
    let covered: usize = sccs.iter().map(|s| s.members.len()).sum();
    if covered != g.nodes.len() {
        return Err("find_sccs does not cover every node once".into());
    }
    for s in &sccs {
        let first = s.members.iter().next().unwrap();
        if s.members.iter().any(|m| !mutual(first, m)) {
            return Err(format!("SCC {} holds non-mutually-reachable nodes", s.id));
        }
    }
    for (a, b) in &g.edges {
        let (la, lb) = (layer_of[a], layer_of[b]);
        if plan.scc_of[a] == plan.scc_of[b] {
            if la != lb {
                return Err(format!("SCC split across layers: {a}, {b}"));
            }
        } else if la >= lb {
            return Err(format!("edge {a} -> {b} not downward ({la} -> {lb})"));
        }
    }
    // Kahn rounds: anything past layer 0 has its SCC called from one layer up.
    for (n, &l) in &layer_of {
        if l > 0 {
            let scc = plan.scc_of[n];
            let has = g
                .edges
                .iter()
                .any(|(a, b)| plan.scc_of[b] == scc && plan.scc_of[a] != scc && layer_of[a] == l - 1);
            if !has {
                return Err(format!("{n} sits in layer {l} with no caller in layer {}", l - 1));
            }
        }
    }
    Ok(())
}

pub fn random_plan_case(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.gen_range(1..=60);
    let p = [0.01, 0.03, 0.06, 0.12][r.gen_range(0..4)];
    check_plan(&random_call_graph(&mut r, n, p))
}

const PARAMS: [&str; 3] = ["a", "b", "c"];

/// Every Pi ⊨ pre and post ⊨ every Qi for a random precise set.
pub fn combination_case(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let k = r.gen_range(1..=3);
    let params: Vec<&str> = PARAMS[..k].to_vec();
    let mut post_vars = params.clone();
    post_vars.push("result");
    let n = r.gen_range(1..=4);
    let exps: Vec<ExpectedSpecification> = (0..n)
        .map(|i| ExpectedSpecification {
            caller: format!("c{i}"),
            callee: "g".into(),
            params: params.iter().map(|s| s.to_string()).collect(),
            pre: Condition::formal(random_formula(&mut r, &params, 2)),
            post: Condition::formal(random_formula(&mut r, &post_vars, 2)),
            call_site: 0,
        })
        .collect();
    let oracle = OracleBackend::new(BoundedDomain::new(B));
    let combined = combine_expected_specs(&exps, &oracle).map_err(|e| e.to_string())?;
    let pre = combined.spec.pre.precise_formula().ok_or("combined pre is not precise")?;
    let post = combined.spec.post.precise_formula().ok_or("combined post is not precise")?;
    for e in &exps {
        let pi = e.pre.formula.as_ref().unwrap();
        let qi = e.post.formula.as_ref().unwrap();
        if !entails(pi, pre, B) {
            return Err(format!("{pi} does not entail combined pre {pre}"));
        }
        if !entails(post, qi, B) {
            return Err(format!("combined post {post} does not entail {qi}"));
        }
    }
    Ok(())
}

/// SP of a random straight-line program versus its concrete image.
pub fn sp_case(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let k = r.gen_range(1..=3);
    let vars: Vec<&str> = ["x", "y", "z"][..k].to_vec();
    let len = r.gen_range(1..=6);
    let prog = random_program(&mut r, &vars, len);
    let src = program_source("p", &vars, &prog);
    let def = parse_function(&src).map_err(|e| format!("{src}: {e}"))?;
    let mut sp = Formula::tt();
    let mut assigned = BTreeSet::new();
    for Stmt { kind, .. } in &def.body {
        if let StmtKind::Assign { var, expr } = kind {
            sp = sp_assign(&sp, var, expr, &assigned);
            assigned.insert(var.clone());
        }
    }
    let keep: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
    let got = satisfying_states(&sp, &keep, &BoundedDomain::new(B)).map_err(|e| e.to_string())?;
    let mut want = BTreeSet::new();
    for_all_states(&keep, B, |env| {
        if let Some(out) = run_program(&prog, env.clone()) {
            let v: Vec<i64> = keep.iter().map(|x| out[x]).collect();
            if v.iter().all(|x| x.abs() <= B) {
                want.insert(v);
            }
        }
        true
    });
    if got != want {
        let extra: Vec<_> = got.difference(&want).take(3).collect();
        let missing: Vec<_> = want.difference(&got).take(3).collect();
        return Err(format!("{src}\n  sp = {sp}\n  extra {extra:?} missing {missing:?}"));
    }
    Ok(())
}

pub fn while_stmt(src: &str) -> Result<Stmt, String> {
    let def = parse_function(src).map_err(|e| e.to_string())?;
    def.body
        .into_iter()
        .find(|s| matches!(s.kind, StmtKind::While { .. }))
        .ok_or_else(|| "no while loop".to_string())
}

pub fn loop_verdict(src: &str, pre: &str, inv: &str, post: &str) -> Result<InvariantVerdict, String> {
    let f = |s: &str| parse_formula(s).map_err(|e| format!("{s}: {e}"));
    check_invariant_bounded(
        &f(inv)?,
        &while_stmt(src)?,
        &f(pre)?,
        &f(post)?,
        &BoundedDomain::new(B),
        &Contracts::new(),
        specforge_core::oracle::DEFAULT_STEP_BUDGET,
    )
    .map_err(|e| e.to_string())
}

pub const SUMMATION: &str = "fn sum(n) { i = 0; s = 0; while (i < n) { s = s + i; i = i + 1; } return s; }";
pub const SUMMATION_OFF_BY_ONE: &str = "fn sum(n) { i = 0; s = 0; while (i <= n) { s = s + i; i = i + 1; } return s; }";

#[derive(serde::Deserialize)]
pub struct LoopFixture {
    pub name: String,
    pub expect: String,
    pub source: String,
    pub pre: String,
    pub invariant: String,
    pub post: String,
}

pub fn loop_fixtures() -> Vec<LoopFixture> {
    serde_json::from_str(&std::fs::read_to_string(fixture("loops/loops.json")).unwrap()).unwrap()
}

/// Misclassified fixture names.
pub fn classify_loops() -> Result<usize, String> {
    let mut wrong = Vec::new();
    let all = loop_fixtures();
    for l in &all {
        let v = loop_verdict(&l.source, &l.pre, &l.invariant, &l.post).map_err(|e| format!("{}: {e}", l.name))?;
        let holds = v == InvariantVerdict::Holds;
        if holds != (l.expect == "holds") {
            wrong.push(format!("{} ({v:?})", l.name));
        }
    }
    if wrong.is_empty() {
        Ok(all.len())
    } else {
        Err(format!("misclassified: {}", wrong.join(", ")))
    }
}

// Corpus runs.

pub struct CorpusRun {
    pub reports: Vec<FunctionReport>,
    pub validated: Vec<(PotentialBug, ValidationOutcome)>,
    pub report: specforge_core::RunReport,
}

impl CorpusRun {
    pub fn flagged(&self) -> BTreeSet<String> {
        self.reports.iter().filter(|r| !r.bugs.is_empty()).map(|r| r.function.clone()).collect()
    }
}

pub fn corpus_config(dir: &str, out: &Path, derivation: Derivation) -> RunConfig {
    let mut cfg = RunConfig::new(fixture(&format!("{dir}/system.mini")), out);
    cfg.domain_knowledge = Some(fixture(&format!("{dir}/dk")));
    let reference = fixture(&format!("{dir}/reference.mini"));
    if reference.exists() {
        cfg.reference = Some(reference);
    }
    cfg.derivation = derivation;
    cfg
}

pub fn run_corpus(dir: &str, out: &Path, derivation: Derivation) -> Result<CorpusRun, String> {
    let p = Pipeline::new(corpus_config(dir, out, derivation)).map_err(|e| e.to_string())?;
    let report = p.run().map_err(|e| e.to_string())?;
    Ok(CorpusRun {
        reports: load_reports(out).map_err(|e| e.to_string())?,
        validated: load_validation(out).map_err(|e| e.to_string())?,
        report,
    })
}

/// Ground truth from execution alone: faulty targets disagree with the
/// reference on some in-contract input, correct ones never do.
pub fn corpus_ground_truth() -> Result<BTreeSet<String>, String> {
    let sys = load_minilang_file(&fixture("corpus/system.mini")).map_err(|e| e.to_string())?;
    let reference = load_minilang_file(&fixture("corpus/reference.mini")).map_err(|e| e.to_string())?;
    let mut faulty = BTreeSet::new();
    for f in sys.functions.values().filter(|f| !f.name.starts_with("use_")) {
        let params: Vec<String> = f.params.iter().map(|p| p.name.clone()).collect();
        let mut differs = false;
        for_all_states(&params, B, |env| {
            let args: Vec<i64> = params.iter().map(|p| env[p]).collect();
            let run = |cb| eval_function(cb, &f.name, &args, 100_000).ok();
            match (run(&sys), run(&reference)) {
                (Some(ExecOutcome::Returned(a)), Some(ExecOutcome::Returned(b))) if a != b => differs = true,
                _ => {}
            }
            !differs
        });
        if differs {
            faulty.insert(f.name.clone());
        }
    }
    Ok(faulty)
}

/// Passes everything through except test-case generation, which always fails.
pub struct NoTestCases<'a>(pub &'a dyn ReasoningBackend);

impl ReasoningBackend for NoTestCases<'_> {
    fn submit(&self, req: &ReasoningRequest) -> Result<ReasoningResponse, BackendError> {
        if matches!(req, ReasoningRequest::GenerateTestCase { .. }) {
            return Err(BackendError::Transport {
                attempts: 1,
                message: "injected failure".into(),
            });
        }
        self.0.submit(req)
    }
}

pub fn corpus_backend() -> (Arc<specforge_core::Codebase>, OracleBackend) {
    let sys = Arc::new(load_minilang_file(&fixture("corpus/system.mini")).unwrap());
    let o = OracleBackend::new(BoundedDomain::new(B)).with_system(sys.clone());
    (sys, o)
}

pub fn spec_map(out: &Path) -> BTreeMap<String, specforge_core::Specification> {
    specforge_core::generator::load_spec_files(out)
        .unwrap()
        .into_iter()
        .map(|(k, sf)| (k, sf.spec))
        .collect()
}
