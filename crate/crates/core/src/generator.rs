//! Top-down specification generation: callers first, callees from the
//! expectations their callers recorded.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, FunctionInfo, ReasoningBackend, ReasoningRequest, ResponseBody};
use crate::codebase::{Codebase, FunctionBody, FunctionRecord};
use crate::fsutil::{read_json, run_pool, write_atomic, write_json};
use crate::minilang::{calls_in, StmtKind};
use crate::planner::PlanFile;
use crate::spec::{
    combine_expected_specs, parse_spec_file, render_spec_file, route_domain_knowledge, CombineError, Condition,
    DomainKnowledge, ExpectedSpecification, SpecFile, Specification,
};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationState {
    pub specs: BTreeMap<String, Specification>,
    /// Keyed by callee, ordered by (caller, call site).
    pub expectations: BTreeMap<String, Vec<ExpectedSpecification>>,
    /// Layers (over all phases) whose functions all have a spec or a failure record.
    pub completed_layers: usize,
    /// Spec-failed functions and the reason.
    #[serde(default)]
    pub failed: BTreeMap<String, String>,
    /// Diagnostics recorded while generating each function.
    #[serde(default)]
    pub notes: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Dispatch,
    Complete,
    Failed,
    Resumed,
}

/// One line of `specs/_events.log`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationEvent {
    pub round: usize,
    pub event: EventKind,
    pub phase: String,
    pub function: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationConfig {
    /// Units (phase-local SCCs) per batch.
    pub batch_size: usize,
    pub workers: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            batch_size: 8,
            workers: 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("{0} is not an entry function")]
    NotEntry(String),
    #[error("{0} has neither caller expectations nor cycle callers")]
    NoEvidence(String),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("combining expectations failed: {0}")]
    Combine(#[from] CombineError),
    #[error("unusable backend response: {0}")]
    BadResponse(String),
    #[error("plan does not cover {0}")]
    Uncovered(String),
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("no unit can make progress; pending: {0:?}")]
    Stuck(Vec<String>),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GenerationError + '_ {
    move |source| GenerationError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A generated specification plus the expectations it places on callees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generated {
    pub spec: Specification,
    pub expectations: Vec<ExpectedSpecification>,
    pub notes: Vec<String>,
}

/// In-codebase call sites of `f` as (callee, site). Opaque bodies get one
/// site per distinct callee, numbered in name order.
pub fn call_sites(f: &FunctionRecord, cb: &Codebase) -> Vec<(String, usize)> {
    match &f.body {
        FunctionBody::Mini(body) => calls_in(body)
            .into_iter()
            .filter_map(|s| match &s.kind {
                StmtKind::Call { callee, site, .. } if cb.functions.contains_key(callee) => Some((callee.clone(), *site)),
                _ => None,
            })
            .collect(),
        FunctionBody::Opaque(_) => f.callees.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect(),
    }
}

/// Exactly one expectation per in-codebase call site: extras are dropped and
/// missing ones are filled with a text-only placeholder.
fn normalize_expectations(f: &FunctionRecord, cb: &Codebase, given: Vec<ExpectedSpecification>) -> Vec<ExpectedSpecification> {
    let mut out = Vec::new();
    for (callee, site) in call_sites(f, cb) {
        let params = cb.functions.get(&callee).map(FunctionRecord::param_names).unwrap_or_default();
        let found = given.iter().find(|e| e.callee == callee && e.call_site == site);
        out.push(match found {
            Some(e) => ExpectedSpecification {
                caller: f.name.clone(),
                callee: callee.clone(),
                params,
                pre: e.pre.clone(),
                post: e.post.clone(),
                call_site: site,
            },
            None => ExpectedSpecification {
                caller: f.name.clone(),
                callee: callee.clone(),
                params,
                pre: Condition::text_only(format!("No expectation was recorded for this call to {callee}.")),
                post: Condition::text_only(format!("No expectation was recorded for this call to {callee}.")),
                call_site: site,
            },
        });
    }
    out
}

fn finish(f: &FunctionRecord, cb: &Codebase, body: ResponseBody) -> Result<Generated, GenerationError> {
    match body {
        ResponseBody::Specs {
            mut spec,
            expectations,
            notes,
        } => {
            spec.function = f.name.clone();
            Ok(Generated {
                spec,
                expectations: normalize_expectations(f, cb, expectations),
                notes,
            })
        }
        ResponseBody::Unparsed { reason } => Err(GenerationError::BadResponse(reason)),
        other => Err(GenerationError::BadResponse(format!("unexpected response {other:?}"))),
    }
}

pub fn generate_entry_spec(
    f: &FunctionRecord,
    cb: &Codebase,
    dk_text: &str,
    backend: &dyn ReasoningBackend,
) -> Result<Generated, GenerationError> {
    if !f.is_entry {
        return Err(GenerationError::NotEntry(f.name.clone()));
    }
    let req = ReasoningRequest::GenerateEntrySpec {
        function: FunctionInfo::from_record(f, cb),
        domain: dk_text.to_string(),
    };
    finish(f, cb, backend.submit(&req)?.body)
}

/// Builds the internal request, combining expectations first. Returns the
/// request and the combination diagnostics.
fn internal_request(
    f: &FunctionRecord,
    cb: &Codebase,
    expectations: &[ExpectedSpecification],
    dk_text: &str,
    cycle_callers: &[&FunctionRecord],
    backend: &dyn ReasoningBackend,
) -> Result<(ReasoningRequest, Vec<String>), GenerationError> {
    if expectations.is_empty() && cycle_callers.is_empty() {
        return Err(GenerationError::NoEvidence(f.name.clone()));
    }
    let (combined, diagnostics) = if expectations.is_empty() {
        (None, Vec::new())
    } else {
        let c = combine_expected_specs(expectations, backend)?;
        (Some(c.spec), c.diagnostics)
    };
    let req = ReasoningRequest::GenerateInternalSpec {
        function: FunctionInfo::from_record(f, cb),
        expectations: expectations.to_vec(),
        combined,
        cycle_callers: cycle_callers.iter().map(|c| FunctionInfo::from_record(c, cb)).collect(),
        domain: dk_text.to_string(),
    };
    Ok((req, diagnostics))
}

pub fn generate_internal_spec(
    f: &FunctionRecord,
    cb: &Codebase,
    expectations: &[ExpectedSpecification],
    dk_text: &str,
    cycle_callers: &[&FunctionRecord],
    backend: &dyn ReasoningBackend,
) -> Result<Generated, GenerationError> {
    let (req, diagnostics) = internal_request(f, cb, expectations, dk_text, cycle_callers, backend)?;
    let mut g = finish(f, cb, backend.submit(&req)?.body)?;
    let mut notes = diagnostics;
    notes.append(&mut g.notes);
    g.notes = notes;
    Ok(g)
}

/// Callers of every function, in-codebase edges only.
fn callers_map(cb: &Codebase) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = cb.functions.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
    for f in cb.functions.values() {
        for c in &f.callees {
            if let Some(set) = out.get_mut(c) {
                set.insert(f.name.clone());
            }
        }
    }
    out
}

pub fn spec_path(out_dir: &Path, phase: &str, function: &str) -> PathBuf {
    out_dir.join("specs").join(phase).join(format!("{function}.md"))
}

pub fn language_name(cb: &Codebase) -> String {
    match cb.language {
        crate::codebase::Language::Minilang => "minilang".to_string(),
        crate::codebase::Language::Manifest => cb.source_language.clone(),
    }
}

/// Reads every SpecFile under `out_dir/specs`, keyed by function.
pub fn load_spec_files(out_dir: &Path) -> Result<BTreeMap<String, SpecFile>, GenerationError> {
    let root = out_dir.join("specs");
    let mut out = BTreeMap::new();
    let Ok(phases) = std::fs::read_dir(&root) else {
        return Ok(out);
    };
    let mut dirs: Vec<PathBuf> = phases.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    dirs.sort();
    for dir in dirs {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "md"))
            .collect();
        files.sort();
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            match parse_spec_file(&text) {
                Ok(sf) => {
                    out.insert(sf.spec.function.clone(), sf);
                }
                Err(e) => log::warn!("ignoring unreadable spec file {}: {e}", path.display()),
            }
        }
    }
    Ok(out)
}

pub fn read_events(out_dir: &Path) -> Result<Vec<GenerationEvent>, GenerationError> {
    let path = out_dir.join("specs").join("_events.log");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| GenerationError::BadResponse(format!("event log: {e}"))))
        .collect()
}

/// Checks that no function is dispatched before every caller outside its
/// SCC has completed, failed or been resumed.
pub fn check_top_down(events: &[GenerationEvent], cb: &Codebase, scc_of: &BTreeMap<String, usize>) -> Result<(), String> {
    let callers = callers_map(cb);
    let mut done = BTreeSet::new();
    for e in events {
        match e.event {
            EventKind::Dispatch => {
                for c in callers.get(&e.function).into_iter().flatten() {
                    if scc_of.get(c) != scc_of.get(&e.function) && !done.contains(c) {
                        return Err(format!("{} dispatched before its caller {c} finished", e.function));
                    }
                }
            }
            EventKind::Complete | EventKind::Failed | EventKind::Resumed => {
                done.insert(e.function.clone());
            }
        }
    }
    Ok(())
}

/// A phase-local SCC within one layer.
#[derive(Clone, Debug)]
struct Unit {
    phase: String,
    layer: usize,
    members: Vec<String>,
}

enum Task<'a> {
    Entry {
        f: &'a FunctionRecord,
        domain: String,
    },
    Internal {
        f: &'a FunctionRecord,
        expectations: Vec<ExpectedSpecification>,
        cycle_callers: Vec<&'a FunctionRecord>,
        domain: String,
    },
}

impl Task<'_> {
    fn function(&self) -> &FunctionRecord {
        match self {
            Task::Entry { f, .. } | Task::Internal { f, .. } => f,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Task::Entry { .. } => "GenerateEntrySpec",
            Task::Internal { .. } => "GenerateInternalSpec",
        }
    }
}

/// Runs one batch: combination per function, then one batched submission.
fn run_batch(tasks: &[Task], cb: &Codebase, backend: &dyn ReasoningBackend) -> Vec<Result<Generated, String>> {
    let mut prepared: Vec<Result<(ReasoningRequest, Vec<String>), String>> = Vec::new();
    for t in tasks {
        prepared.push(match t {
            Task::Entry { f, domain } => Ok((
                ReasoningRequest::GenerateEntrySpec {
                    function: FunctionInfo::from_record(f, cb),
                    domain: domain.clone(),
                },
                Vec::new(),
            )),
            Task::Internal {
                f,
                expectations,
                cycle_callers,
                domain,
            } => internal_request(f, cb, expectations, domain, cycle_callers, backend).map_err(|e| e.to_string()),
        });
    }
    let reqs: Vec<ReasoningRequest> = prepared.iter().filter_map(|p| p.as_ref().ok().map(|(r, _)| r.clone())).collect();
    let mut responses = backend.submit_batch(&reqs).into_iter();
    tasks
        .iter()
        .zip(prepared)
        .map(|(t, p)| {
            let (_, diagnostics) = p?;
            let resp = responses.next().ok_or("backend returned too few responses")?;
            let body = resp.map_err(|e| e.to_string())?.body;
            let mut g = finish(t.function(), cb, body).map_err(|e| e.to_string())?;
            let mut notes = diagnostics;
            notes.append(&mut g.notes);
            g.notes = notes;
            Ok(g)
        })
        .collect()
}

struct Coordinator<'a> {
    cb: &'a Codebase,
    phase_of: BTreeMap<String, String>,
    scc_of: &'a BTreeMap<String, usize>,
    callers: BTreeMap<String, BTreeSet<String>>,
    state: GenerationState,
    events: Vec<GenerationEvent>,
}

impl<'a> Coordinator<'a> {
    fn done(&self, f: &str) -> bool {
        self.state.specs.contains_key(f) || self.state.failed.contains_key(f)
    }

    fn outside_callers(&self, f: &str) -> Vec<&'a FunctionRecord> {
        let scc = self.scc_of.get(f);
        self.callers[f]
            .iter()
            .filter(|c| self.scc_of.get(*c) != scc)
            .map(|c| &self.cb.functions[c])
            .collect()
    }

    fn ready(&self, u: &Unit) -> bool {
        u.members
            .iter()
            .all(|m| self.outside_callers(m).iter().all(|c| self.done(&c.name)))
    }

    fn task(&self, name: &str, dk: &DomainKnowledge) -> Task<'a> {
        let f = &self.cb.functions[name];
        let domain = route_domain_knowledge(dk, f, &self.phase_of);
        if f.is_entry {
            return Task::Entry { f, domain };
        }
        let scc = self.scc_of.get(name);
        let mut cycle_callers = Vec::new();
        let mut expectations = Vec::new();
        for c in &self.callers[name] {
            let caller = &self.cb.functions[c];
            if self.scc_of.get(c) == scc || self.state.failed.contains_key(c) {
                cycle_callers.push(caller);
            }
        }
        for e in self.state.expectations.get(name).into_iter().flatten() {
            if self.scc_of.get(&e.caller) != scc {
                expectations.push(e.clone());
            }
        }
        Task::Internal {
            f,
            expectations,
            cycle_callers,
            domain,
        }
    }

    fn record(&mut self, sf_dir: &Path, name: &str, g: Generated) -> Result<(), GenerationError> {
        let f = &self.cb.functions[name];
        let sf = SpecFile::new(g.spec.clone(), g.expectations.clone(), &f.source, &language_name(self.cb), f.span.clone());
        let path = spec_path(sf_dir, &self.phase_of[name], name);
        write_atomic(&path, render_spec_file(&sf).as_bytes()).map_err(io_err(&path))?;
        self.absorb(name, g.spec, g.expectations);
        if !g.notes.is_empty() {
            self.state.notes.insert(name.to_string(), g.notes);
        }
        Ok(())
    }

    fn absorb(&mut self, name: &str, spec: Specification, expectations: Vec<ExpectedSpecification>) {
        self.state.specs.insert(name.to_string(), spec);
        self.state.failed.remove(name);
        for e in expectations {
            let list = self.state.expectations.entry(e.callee.clone()).or_default();
            list.push(e);
            list.sort_by(|a, b| (&a.caller, a.call_site).cmp(&(&b.caller, b.call_site)));
        }
    }

    fn event(&mut self, round: usize, event: EventKind, f: &str, request: Option<&str>, detail: Option<String>) {
        self.events.push(GenerationEvent {
            round,
            event,
            phase: self.phase_of[f].clone(),
            function: f.to_string(),
            request: request.map(str::to_string),
            detail,
        });
    }

    fn count_completed_layers(&mut self, plan: &PlanFile) {
        self.state.completed_layers = plan
            .phases
            .iter()
            .flat_map(|p| &p.layers)
            .filter(|l| l.iter().all(|f| self.done(f)))
            .count();
    }

    fn persist(&self, out_dir: &Path) -> Result<(), GenerationError> {
        let state_path = out_dir.join("specs").join("_state.json");
        write_json(&state_path, &self.state).map_err(io_err(&state_path))?;
        let log_path = out_dir.join("specs").join("_events.log");
        let mut log = String::new();
        for e in &self.events {
            log.push_str(&serde_json::to_string(e).expect("events serialize"));
            log.push('\n');
        }
        write_atomic(&log_path, log.as_bytes()).map_err(io_err(&log_path))
    }
}

/// Generates a SpecFile for every planned function not already present under
/// `out_dir/specs`. Phases advance independently; within a round every
/// dispatched batch runs on the worker pool and the coordinator alone
/// updates state.
pub fn run_generation(
    cb: &Codebase,
    plan: &PlanFile,
    dk: &DomainKnowledge,
    backend: &dyn ReasoningBackend,
    cfg: &GenerationConfig,
    out_dir: &Path,
) -> Result<GenerationState, GenerationError> {
    if cfg.batch_size == 0 {
        return Err(GenerationError::ZeroBatchSize);
    }
    let phase_of = plan.phase_of();
    if let Some(missing) = cb.functions.keys().find(|f| !phase_of.contains_key(*f)) {
        return Err(GenerationError::Uncovered(missing.clone()));
    }
    let mut co = Coordinator {
        cb,
        phase_of,
        scc_of: &plan.scc_of,
        callers: callers_map(cb),
        state: GenerationState::default(),
        events: Vec::new(),
    };

    let previous: Option<GenerationState> = read_json(&out_dir.join("specs").join("_state.json")).ok();
    for (name, sf) in load_spec_files(out_dir)? {
        if !cb.functions.contains_key(&name) {
            continue;
        }
        co.absorb(&name, sf.spec, sf.callee_expectations);
        if let Some(notes) = previous.as_ref().and_then(|p| p.notes.get(&name)) {
            co.state.notes.insert(name.clone(), notes.clone());
        }
        co.event(0, EventKind::Resumed, &name, None, None);
    }

    let mut pending: Vec<Unit> = Vec::new();
    for p in &plan.phases {
        for (li, layer) in p.layers.iter().enumerate() {
            let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
            for f in layer {
                if !co.done(f) {
                    groups.entry(plan.scc_of.get(f).copied().unwrap_or(usize::MAX)).or_default().push(f.clone());
                }
            }
            let mut units: Vec<Unit> = groups
                .into_values()
                .map(|members| Unit {
                    phase: p.label.clone(),
                    layer: li,
                    members,
                })
                .collect();
            units.sort_by(|a, b| a.members[0].cmp(&b.members[0]));
            pending.extend(units);
        }
    }

    let mut round = 0;
    co.count_completed_layers(plan);
    co.persist(out_dir)?;
    while !pending.is_empty() {
        round += 1;
        let current: BTreeMap<&str, usize> = pending.iter().fold(BTreeMap::new(), |mut m, u| {
            let e = m.entry(u.phase.as_str()).or_insert(u.layer);
            *e = (*e).min(u.layer);
            m
        });
        let at_current = |u: &Unit| current[u.phase.as_str()] == u.layer;
        let mut chosen: Vec<usize> = Vec::new();
        for (phase, layer) in &current {
            let idx: Vec<usize> = (0..pending.len())
                .filter(|&i| pending[i].phase == *phase && pending[i].layer == *layer)
                .collect();
            if idx.iter().all(|&i| co.ready(&pending[i])) {
                chosen.extend(idx);
            }
        }
        if chosen.is_empty() {
            // Cross-phase waits can block every whole layer; fall back to
            // whatever units are individually ready.
            chosen = (0..pending.len()).filter(|&i| at_current(&pending[i]) && co.ready(&pending[i])).collect();
        }
        if chosen.is_empty() {
            chosen = (0..pending.len()).filter(|&i| co.ready(&pending[i])).collect();
        }
        if chosen.is_empty() {
            return Err(GenerationError::Stuck(pending.iter().flat_map(|u| u.members.clone()).collect()));
        }
        chosen.sort_unstable();
        let units: Vec<Unit> = chosen.iter().map(|&i| pending[i].clone()).collect();
        for i in chosen.into_iter().rev() {
            pending.remove(i);
        }

        // Phase-fair order: the k-th batch of every phase before any (k+1)-th.
        let mut per_phase: BTreeMap<&str, Vec<Vec<&Unit>>> = BTreeMap::new();
        for u in &units {
            let batches = per_phase.entry(u.phase.as_str()).or_default();
            match batches.last_mut() {
                Some(b) if b.len() < cfg.batch_size => b.push(u),
                _ => batches.push(vec![u]),
            }
        }
        let depth = per_phase.values().map(Vec::len).max().unwrap_or(0);
        let mut batches: Vec<Vec<Task>> = Vec::new();
        for k in 0..depth {
            for bs in per_phase.values() {
                if let Some(b) = bs.get(k) {
                    batches.push(b.iter().flat_map(|u| &u.members).map(|m| co.task(m, dk)).collect());
                }
            }
        }

        let mut dispatched: Vec<(&str, &'static str)> =
            batches.iter().flatten().map(|t| (t.function().name.as_str(), t.kind())).collect();
        dispatched.sort();
        for (name, kind) in &dispatched {
            co.event(round, EventKind::Dispatch, name, Some(kind), None);
        }

        let results = run_pool(&batches, cfg.workers, |b| run_batch(b, cb, backend));
        let mut outcomes: Vec<(String, Result<Generated, String>)> = batches
            .iter()
            .zip(results)
            .flat_map(|(b, rs)| b.iter().map(|t| t.function().name.clone()).zip(rs))
            .collect();
        outcomes.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, outcome) in outcomes {
            match outcome {
                Ok(g) => {
                    co.record(out_dir, &name, g)?;
                    co.event(round, EventKind::Complete, &name, None, None);
                }
                Err(reason) => {
                    log::warn!("specification generation failed for {name}: {reason}");
                    co.state.failed.insert(name.clone(), reason.clone());
                    co.event(round, EventKind::Failed, &name, None, Some(reason));
                }
            }
        }
        co.count_completed_layers(plan);
        co.persist(out_dir)?;
    }
    Ok(co.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::OracleBackend;
    use crate::codebase::parse_minilang_module;
    use crate::oracle::BoundedDomain;
    use crate::planner::plan_codebase;
    use crate::spec::Provenance;

    fn oracle() -> OracleBackend {
        OracleBackend::new(BoundedDomain::new(4))
    }

    const DIAMOND: &str = "
fn f1(a) { x = f2(a); y = f3(a); return x + y; }
fn f2(b) { r = f5(b); return r; }
fn f3(c) { r = f5(c + 1); return r; }
fn f5(d) { return d * 2; }
";

    #[test]
    fn entry_without_calls_has_no_expectations() {
        let cb = parse_minilang_module("fn main(x) { return x + 1; }", "m.mini").unwrap();
        let g = generate_entry_spec(&cb.functions["main"], &cb, "", &oracle()).unwrap();
        assert!(g.expectations.is_empty());
        assert_eq!(g.spec.provenance, Provenance::Entry);
    }

    #[test]
    fn entry_expectations_cover_each_call_site() {
        let cb = parse_minilang_module(DIAMOND, "m.mini").unwrap();
        let g = generate_entry_spec(&cb.functions["f1"], &cb, "", &oracle()).unwrap();
        let sites: Vec<(String, usize)> = g.expectations.iter().map(|e| (e.callee.clone(), e.call_site)).collect();
        assert_eq!(sites, vec![("f2".to_string(), 0), ("f3".to_string(), 1)]);
        assert!(matches!(
            generate_entry_spec(&cb.functions["f2"], &cb, "", &oracle()),
            Err(GenerationError::NotEntry(_))
        ));
    }

    #[test]
    fn internal_needs_evidence() {
        let cb = parse_minilang_module(DIAMOND, "m.mini").unwrap();
        let r = generate_internal_spec(&cb.functions["f5"], &cb, &[], "", &[], &oracle());
        assert!(matches!(r, Err(GenerationError::NoEvidence(_))));
    }

    #[test]
    fn shared_callee_waits_for_both_callers() {
        let cb = parse_minilang_module(DIAMOND, "m.mini").unwrap();
        let backend = oracle();
        let (plan, _) = plan_codebase(&cb, &backend).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let state = run_generation(&cb, &plan, &DomainKnowledge::default(), &backend, &GenerationConfig::default(), dir.path()).unwrap();
        assert_eq!(state.specs.len(), 4);
        assert_eq!(state.expectations["f5"].len(), 2);
        assert_eq!(state.specs["f5"].provenance, Provenance::Combined);
        let events = read_events(dir.path()).unwrap();
        check_top_down(&events, &cb, &plan.scc_of).unwrap();
        let pos = |ev: EventKind, f: &str| events.iter().position(|e| e.event == ev && e.function == f).unwrap();
        assert!(pos(EventKind::Dispatch, "f5") > pos(EventKind::Complete, "f2"));
        assert!(pos(EventKind::Dispatch, "f5") > pos(EventKind::Complete, "f3"));
    }

    #[test]
    fn mutual_recursion_is_generated_together_as_cycle() {
        let src = "
fn even(n) { if (n <= 0) { return 1; } r = odd(n - 1); return r; }
fn odd(n) { if (n <= 0) { return 0; } r = even(n - 1); return r; }
";
        let cb = parse_minilang_module(src, "m.mini").unwrap();
        let backend = oracle();
        let (plan, _) = plan_codebase(&cb, &backend).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let state = run_generation(&cb, &plan, &DomainKnowledge::default(), &backend, &GenerationConfig::default(), dir.path()).unwrap();
        assert_eq!(state.specs["even"].provenance, Provenance::Cycle);
        assert_eq!(state.specs["odd"].provenance, Provenance::Cycle);
        let events = read_events(dir.path()).unwrap();
        let rounds: BTreeSet<usize> = events.iter().filter(|e| e.event == EventKind::Dispatch).map(|e| e.round).collect();
        assert_eq!(rounds.len(), 1);
    }

    #[test]
    fn resume_regenerates_only_missing_files() {
        let cb = parse_minilang_module(DIAMOND, "m.mini").unwrap();
        let backend = oracle();
        let (plan, _) = plan_codebase(&cb, &backend).unwrap();
        let dk = DomainKnowledge::default();
        let cfg = GenerationConfig::default();
        let full = tempfile::tempdir().unwrap();
        let fresh = run_generation(&cb, &plan, &dk, &backend, &cfg, full.path()).unwrap();

        let partial = tempfile::tempdir().unwrap();
        run_generation(&cb, &plan, &dk, &backend, &cfg, partial.path()).unwrap();
        std::fs::remove_file(spec_path(partial.path(), &plan.phase_of()["f5"], "f5")).unwrap();
        std::fs::remove_file(spec_path(partial.path(), &plan.phase_of()["f3"], "f3")).unwrap();
        let resumed = run_generation(&cb, &plan, &dk, &backend, &cfg, partial.path()).unwrap();
        assert_eq!(resumed, fresh);
        let events = read_events(partial.path()).unwrap();
        let dispatched: BTreeSet<&str> = events
            .iter()
            .filter(|e| e.event == EventKind::Dispatch)
            .map(|e| e.function.as_str())
            .collect();
        assert_eq!(dispatched, BTreeSet::from(["f3", "f5"]));
    }
}
