//! Confirms potential bugs by running generated system-entry test cases
//! against the system under test.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{BugContext, EntryInfo, ReasoningBackend, ReasoningRequest, ResponseBody, SignalClass, Verdict};
use crate::codebase::Codebase;
use crate::fsutil::{read_json, run_pool, write_atomic, write_json};
use crate::logic::{Formula, Term};
use crate::oracle::{ExecOutcome, Interpreter, DEFAULT_STEP_BUDGET};
use crate::reasoner::{BugStatus, PotentialBug};
use crate::spec::{Condition, Specification};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Shell command template; `{input_file}` and `{workdir}` are substituted.
    pub run_command: Option<String>,
    pub reference_command: Option<String>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    /// Parent directory for per-attempt scratch directories.
    pub workdir: Option<PathBuf>,
    /// Developer notes on the test environment, passed to the backend.
    pub guidance_file: Option<PathBuf>,
    /// Entry function test inputs target; inferred from the call graph when unset.
    pub entry: Option<String>,
    pub workers: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            run_command: None,
            reference_command: None,
            timeout_secs: 10,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            workdir: None,
            guidance_file: None,
            entry: None,
            workers: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error("harness misconfigured: {0}")]
    Misconfigured(String),
    #[error("harness i/o failure: {0}")]
    Io(String),
}

/// What the validator executes.
#[derive(Clone, Debug)]
pub enum SystemUnderTest {
    /// Interpreted MiniLang, optionally against a correct twin.
    MiniLang {
        system: Arc<Codebase>,
        reference: Option<Arc<Codebase>>,
        step_budget: u64,
    },
    /// External commands built from the harness templates.
    Command,
}

impl SystemUnderTest {
    pub fn minilang(system: Arc<Codebase>, reference: Option<Arc<Codebase>>) -> SystemUnderTest {
        SystemUnderTest::MiniLang {
            system,
            reference,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub bug_id: String,
    pub input: String,
    pub expected_signal: SignalClass,
    pub attempt: u32,
}

/// One run of one program on one input, recorded verbatim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_status: Option<i32>,
    pub crashed: bool,
    pub timed_out: bool,
    pub stdout: String,
    pub stderr: String,
}

impl Execution {
    fn same_behavior(&self, other: &Execution) -> bool {
        (self.crashed, self.timed_out, &self.stdout, self.exit_status)
            == (other.crashed, other.timed_out, &other.stdout, other.exit_status)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub system: Execution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Execution>,
    /// Every signal class the run exhibits.
    pub signals: Vec<SignalClass>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_case: Option<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<Observation>,
    /// Why the attempt produced no executable test case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub matched: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStatus {
    Confirmed,
    Unconfirmed,
    HarnessFailed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub bug_id: String,
    pub function: String,
    pub status: ValidationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triggering: Option<TestCase>,
    pub attempts: Vec<AttemptRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harness_error: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationTally {
    pub potential: usize,
    pub confirmed: usize,
    pub unconfirmed: usize,
    pub harness_failed: usize,
}

impl ValidationTally {
    pub fn of(outcomes: &[ValidationOutcome]) -> ValidationTally {
        let count = |s| outcomes.iter().filter(|o| o.status == s).count();
        ValidationTally {
            potential: outcomes.len(),
            confirmed: count(ValidationStatus::Confirmed),
            unconfirmed: count(ValidationStatus::Unconfirmed),
            harness_failed: count(ValidationStatus::HarnessFailed),
        }
    }

    pub fn balanced(&self) -> bool {
        self.potential == self.confirmed + self.unconfirmed + self.harness_failed
    }
}

/// Context shared by all validations of one run.
pub struct Validation<'a> {
    pub cb: &'a Codebase,
    pub specs: &'a BTreeMap<String, Specification>,
    pub sut: &'a SystemUnderTest,
    pub cfg: &'a HarnessConfig,
    pub backend: &'a dyn ReasoningBackend,
}

fn render_trace(bug: &PotentialBug) -> String {
    bug.trace
        .iter()
        .map(|s| format!("line {}: {}\n  before: {}\n  after: {}", s.span.line, s.code, s.pre, s.post))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Entry functions whose call graph reaches `target`, in name order.
fn entries_reaching(cb: &Codebase, target: &str) -> Vec<String> {
    let mut out = Vec::new();
    for f in cb.functions.values().filter(|f| f.is_entry) {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([f.name.clone()]);
        while let Some(n) = queue.pop_front() {
            if n == target {
                out.push(f.name.clone());
                break;
            }
            if seen.insert(n.clone()) {
                if let Some(g) = cb.functions.get(&n) {
                    queue.extend(g.callees.iter().cloned());
                }
            }
        }
    }
    out
}

impl Validation<'_> {
    pub fn entry_for(&self, bug: &PotentialBug) -> EntryInfo {
        let name = self.cfg.entry.clone().unwrap_or_else(|| {
            entries_reaching(self.cb, &bug.function)
                .into_iter()
                .next()
                .or_else(|| self.cb.functions.values().find(|f| f.is_entry).map(|f| f.name.clone()))
                .unwrap_or_else(|| bug.function.clone())
        });
        let params = self.cb.functions.get(&name).map(|f| f.param_names()).unwrap_or_default();
        let reference_available = match self.sut {
            SystemUnderTest::MiniLang { reference, .. } => reference.is_some(),
            SystemUnderTest::Command => self.cfg.reference_command.is_some(),
        };
        let guidance = self
            .cfg
            .guidance_file
            .as_ref()
            .and_then(|p| std::fs::read_to_string(p).ok())
            .unwrap_or_default();
        EntryInfo {
            post: self.specs.get(&name).map(|s| s.post.clone()),
            name,
            params,
            reference_available,
            guidance,
        }
    }

    pub fn generate_test_case(&self, bug: &PotentialBug, entry: &EntryInfo, prior: &[String], attempt: u32) -> Result<TestCase, String> {
        let req = ReasoningRequest::GenerateTestCase {
            bug: BugContext {
                id: bug.id.clone(),
                function: bug.function.clone(),
                params: bug.params.clone(),
                line: bug.statement.line,
                violated: bug.violated.clone(),
                trace: render_trace(bug),
                counterexample: bug.counterexample.clone(),
            },
            entry: entry.clone(),
            prior_attempts: prior.to_vec(),
            attempt,
        };
        match self.backend.submit(&req).map(|r| r.body) {
            Ok(ResponseBody::TestCase {
                input, expected_signal, ..
            }) => Ok(TestCase {
                id: format!("{}-t{attempt}", bug.id),
                bug_id: bug.id.clone(),
                input,
                expected_signal,
                attempt,
            }),
            Ok(ResponseBody::Unparsed { reason }) => Err(format!("no test case: {reason}")),
            Ok(other) => Err(format!("unexpected response: {other:?}")),
            Err(e) => Err(format!("backend failure: {e}")),
        }
    }

    /// Runs the test case on the system (and reference) and classifies the
    /// outcome. `Ok(None)` means the input is not valid for the entry.
    pub fn execute_test_case(&self, tc: &TestCase, entry: &EntryInfo) -> Result<Result<Observation, String>, HarnessError> {
        let (system, reference, args) = match self.sut {
            SystemUnderTest::MiniLang {
                system,
                reference,
                step_budget,
            } => {
                let args = match parse_entry_input(&tc.input, &entry.name, entry.params.len()) {
                    Ok(a) => a,
                    Err(e) => return Ok(Err(e)),
                };
                let sys = run_minilang(system, &entry.name, &args, *step_budget)?;
                let reference = match reference {
                    Some(r) => Some(run_minilang(r, &entry.name, &args, *step_budget)?),
                    None => None,
                };
                (sys, reference, Some(args))
            }
            SystemUnderTest::Command => {
                let run = self
                    .cfg
                    .run_command
                    .as_deref()
                    .filter(|c| !c.trim().is_empty())
                    .ok_or_else(|| HarnessError::Misconfigured("no run command".into()))?;
                let sys = run_command(run, &tc.input, self.cfg)?;
                let reference = match self.cfg.reference_command.as_deref() {
                    Some(r) => Some(run_command(r, &tc.input, self.cfg)?),
                    None => None,
                };
                (sys, reference, None)
            }
        };
        let mut signals = Vec::new();
        if system.crashed {
            signals.push(SignalClass::Crash);
        }
        if reference.as_ref().is_some_and(|r| !r.same_behavior(&system)) {
            signals.push(SignalClass::DivergenceFromReference);
        }
        if self.violates_entry_post(entry, args.as_deref(), &tc.input, &system) {
            signals.push(SignalClass::SpecViolation);
        }
        Ok(Ok(Observation {
            system,
            reference,
            signals,
        }))
    }

    /// Asks the backend whether the observed output contradicts the entry's
    /// postcondition.
    fn violates_entry_post(&self, entry: &EntryInfo, args: Option<&[i64]>, input: &str, run: &Execution) -> bool {
        let Some(post) = &entry.post else { return false };
        if run.crashed || run.timed_out {
            return false;
        }
        let antecedent = match (args, run.stdout.trim().parse::<i64>()) {
            (Some(args), Ok(v)) => {
                let mut parts: Vec<Formula> = entry
                    .params
                    .iter()
                    .zip(args)
                    .map(|(p, a)| Formula::eq(Term::var(p), Term::Int(*a)))
                    .collect();
                parts.push(Formula::eq(Term::var(crate::hoare::RESULT), Term::Int(v)));
                Condition::formal(Formula::and(parts))
            }
            _ => Condition::text_only(format!(
                "On input `{}` the system printed: {}",
                input.trim(),
                run.stdout.trim()
            )),
        };
        let req = ReasoningRequest::CheckEntailment {
            antecedent,
            consequent: post.clone(),
        };
        matches!(
            self.backend.submit(&req).map(|r| r.body),
            Ok(ResponseBody::Verdict {
                verdict: Verdict::Fails,
                ..
            })
        )
    }

    /// Up to `max_attempts` generate/execute rounds; stops at the first test
    /// case whose observed signals include the expected class.
    pub fn validate_bug(&self, bug: &PotentialBug) -> ValidationOutcome {
        let entry = self.entry_for(bug);
        let mut attempts = Vec::new();
        let mut prior: Vec<String> = Vec::new();
        let max = self.cfg.max_attempts.max(1);
        for attempt in 1..=max {
            let tc = match self.generate_test_case(bug, &entry, &prior, attempt) {
                Ok(tc) => tc,
                Err(failure) => {
                    attempts.push(AttemptRecord {
                        attempt,
                        test_case: None,
                        observed: None,
                        failure: Some(failure),
                        matched: false,
                    });
                    continue;
                }
            };
            prior.push(tc.input.clone());
            let observed = match self.execute_test_case(&tc, &entry) {
                Ok(Ok(o)) => o,
                Ok(Err(invalid)) => {
                    attempts.push(AttemptRecord {
                        attempt,
                        test_case: Some(tc),
                        observed: None,
                        failure: Some(invalid),
                        matched: false,
                    });
                    continue;
                }
                Err(e) => {
                    return ValidationOutcome {
                        bug_id: bug.id.clone(),
                        function: bug.function.clone(),
                        status: ValidationStatus::HarnessFailed,
                        triggering: None,
                        attempts,
                        harness_error: Some(e.to_string()),
                    }
                }
            };
            let matched = observed.signals.contains(&tc.expected_signal);
            attempts.push(AttemptRecord {
                attempt,
                test_case: Some(tc.clone()),
                observed: Some(observed),
                failure: None,
                matched,
            });
            if matched {
                return ValidationOutcome {
                    bug_id: bug.id.clone(),
                    function: bug.function.clone(),
                    status: ValidationStatus::Confirmed,
                    triggering: Some(tc),
                    attempts,
                    harness_error: None,
                };
            }
        }
        ValidationOutcome {
            bug_id: bug.id.clone(),
            function: bug.function.clone(),
            status: ValidationStatus::Unconfirmed,
            triggering: None,
            attempts,
            harness_error: None,
        }
    }
}

/// Parses `entry a b ...` (the entry name may be omitted).
pub fn parse_entry_input(input: &str, entry: &str, arity: usize) -> Result<Vec<i64>, String> {
    let mut toks: Vec<&str> = input.split_whitespace().collect();
    if toks.first().is_some_and(|t| t.parse::<i64>().is_err()) {
        if toks[0] != entry {
            return Err(format!("input targets `{}`, not the entry `{entry}`", toks[0]));
        }
        toks.remove(0);
    }
    let args: Vec<i64> = toks
        .iter()
        .map(|t| t.parse::<i64>().map_err(|_| format!("`{t}` is not an integer")))
        .collect::<Result<_, _>>()?;
    if args.len() != arity {
        return Err(format!("`{entry}` takes {arity} arguments, input has {}", args.len()));
    }
    Ok(args)
}

fn run_minilang(cb: &Codebase, entry: &str, args: &[i64], steps: u64) -> Result<Execution, HarnessError> {
    let outcome = Interpreter::new(cb, steps)
        .call(entry, args)
        .map_err(|e| HarnessError::Misconfigured(e.to_string()))?;
    Ok(match outcome {
        ExecOutcome::Returned(v) => Execution {
            exit_status: None,
            crashed: false,
            timed_out: false,
            stdout: v.to_string(),
            stderr: String::new(),
        },
        ExecOutcome::RuntimeError(k) => Execution {
            exit_status: None,
            crashed: true,
            timed_out: false,
            stdout: String::new(),
            stderr: format!("runtime error: {k:?}"),
        },
        ExecOutcome::Nonterminated => Execution {
            exit_status: None,
            crashed: false,
            timed_out: true,
            stdout: String::new(),
            stderr: "step budget exhausted".into(),
        },
    })
}

fn run_command(template: &str, input: &str, cfg: &HarnessConfig) -> Result<Execution, HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(e.to_string());
    let scratch = match &cfg.workdir {
        Some(parent) => {
            std::fs::create_dir_all(parent).map_err(io)?;
            tempfile::tempdir_in(parent).map_err(io)?
        }
        None => tempfile::tempdir().map_err(io)?,
    };
    let input_file = scratch.path().join("input.txt");
    write_atomic(&input_file, input.as_bytes()).map_err(io)?;
    let cmd = template
        .replace("{input_file}", &input_file.display().to_string())
        .replace("{workdir}", &scratch.path().display().to_string());
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .current_dir(scratch.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| HarnessError::Misconfigured(format!("cannot start `{cmd}`: {e}")))?;
    let drain = |r: Option<Box<dyn Read + Send>>| {
        std::thread::spawn(move || {
            let mut buf = Vec::new();
            if let Some(mut r) = r {
                let _ = r.read_to_end(&mut buf);
            }
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = drain(child.stdout.take().map(|s| Box::new(s) as Box<dyn Read + Send>));
    let err = drain(child.stderr.take().map(|s| Box::new(s) as Box<dyn Read + Send>));
    let deadline = Instant::now() + Duration::from_secs(cfg.timeout_secs.max(1));
    let (status, timed_out) = loop {
        if let Some(st) = child.try_wait().map_err(io)? {
            break (Some(st), false);
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            break (None, true);
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    let exit_status = status.and_then(|s| s.code());
    let crashed = !timed_out && exit_status != Some(0);
    Ok(Execution {
        exit_status,
        crashed,
        timed_out,
        stdout,
        stderr,
    })
}

/// Validates every bug concurrently and writes `validation/`.
pub fn run_validation(v: &Validation, bugs: &[PotentialBug], out_dir: &Path) -> std::io::Result<Vec<(PotentialBug, ValidationOutcome)>> {
    let outcomes = run_pool(bugs, v.cfg.workers, |b| v.validate_bug(b));
    let dir = out_dir.join("validation");
    std::fs::create_dir_all(&dir)?;
    let mut out = Vec::new();
    for (bug, o) in bugs.iter().zip(outcomes) {
        let mut log = String::new();
        for a in &o.attempts {
            log.push_str(&serde_json::to_string(a).map_err(std::io::Error::other)?);
            log.push('\n');
        }
        write_atomic(&dir.join(format!("{}.jsonl", bug.id)), log.as_bytes())?;
        let mut bug = bug.clone();
        bug.status = match o.status {
            ValidationStatus::Confirmed => BugStatus::Confirmed,
            ValidationStatus::Unconfirmed => BugStatus::Unconfirmed,
            ValidationStatus::HarnessFailed => BugStatus::Potential,
        };
        out.push((bug, o));
    }
    #[derive(Serialize)]
    struct Entry<'a> {
        bug: &'a PotentialBug,
        outcome: &'a ValidationOutcome,
    }
    let entries: Vec<Entry> = out.iter().map(|(bug, outcome)| Entry { bug, outcome }).collect();
    write_json(&dir.join("bugs.json"), &entries)?;
    Ok(out)
}

/// Reads back `validation/bugs.json`.
pub fn load_validation(out_dir: &Path) -> std::io::Result<Vec<(PotentialBug, ValidationOutcome)>> {
    #[derive(Deserialize)]
    struct Entry {
        bug: PotentialBug,
        outcome: ValidationOutcome,
    }
    let entries: Vec<Entry> = read_json(&out_dir.join("validation").join("bugs.json"))?;
    Ok(entries.into_iter().map(|e| (e.bug, e.outcome)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, OracleBackend, ReasoningResponse};
    use crate::codebase::parse_minilang_module;
    use crate::oracle::BoundedDomain;
    use crate::reasoner::{CodeSpan, VerdictSource, Violation};
    use crate::spec::Provenance;

    const BUGGY: &str = "fn main(x) { y = half(x); return y; }\nfn half(a) { if (a > 5) { return 0; } return a / 2; }";
    const FIXED: &str = "fn main(x) { y = half(x); return y; }\nfn half(a) { return a / 2; }";

    fn bug(cex: Option<i64>) -> PotentialBug {
        PotentialBug {
            id: "half-1".into(),
            function: "half".into(),
            params: vec!["a".into()],
            statement: CodeSpan {
                file: "m.mini".into(),
                line: 2,
            },
            violated: Condition::formal(crate::logic::parse_formula("result == a / 2").unwrap()),
            violation: Violation::Postcondition,
            trace: Vec::new(),
            verdict_source: VerdictSource::FormulaEntailment,
            status: BugStatus::Potential,
            counterexample: cex.map(|v| BTreeMap::from([("a".to_string(), v)])),
        }
    }

    fn specs() -> BTreeMap<String, Specification> {
        BTreeMap::from([(
            "main".to_string(),
            Specification {
                function: "main".into(),
                pre: Condition::tt(),
                post: Condition::formal(crate::logic::parse_formula("result == x / 2").unwrap()),
                provenance: Provenance::Entry,
            },
        )])
    }

    #[test]
    fn counterexample_guided_case_confirms_first_try() {
        let sys = Arc::new(parse_minilang_module(BUGGY, "m.mini").unwrap());
        let reference = Arc::new(parse_minilang_module(FIXED, "m.mini").unwrap());
        let backend = OracleBackend::new(BoundedDomain::new(8)).with_system(sys.clone());
        let sut = SystemUnderTest::minilang(sys.clone(), Some(reference));
        let cfg = HarnessConfig::default();
        let specs = specs();
        let v = Validation {
            cb: &sys,
            specs: &specs,
            sut: &sut,
            cfg: &cfg,
            backend: &backend,
        };
        let o = v.validate_bug(&bug(Some(7)));
        assert_eq!(o.status, ValidationStatus::Confirmed);
        assert_eq!(o.attempts.len(), 1);
        let tc = o.triggering.unwrap();
        assert_eq!(tc.input, "main 7");
        assert_eq!(tc.expected_signal, SignalClass::DivergenceFromReference);
    }

    #[test]
    fn correct_program_never_diverges_from_itself() {
        let sys = Arc::new(parse_minilang_module(FIXED, "m.mini").unwrap());
        let backend = OracleBackend::new(BoundedDomain::new(3)).with_system(sys.clone());
        let sut = SystemUnderTest::minilang(sys.clone(), Some(sys.clone()));
        let cfg = HarnessConfig {
            max_attempts: 4,
            ..HarnessConfig::default()
        };
        let specs = specs();
        let v = Validation {
            cb: &sys,
            specs: &specs,
            sut: &sut,
            cfg: &cfg,
            backend: &backend,
        };
        let o = v.validate_bug(&bug(None));
        assert_eq!(o.status, ValidationStatus::Unconfirmed);
        assert_eq!(o.attempts.len(), 4);
        let inputs: BTreeSet<_> = o.attempts.iter().map(|a| a.test_case.as_ref().unwrap().input.clone()).collect();
        assert_eq!(inputs.len(), 4);
    }

    struct Failing;
    impl ReasoningBackend for Failing {
        fn submit(&self, _: &ReasoningRequest) -> Result<ReasoningResponse, BackendError> {
            Err(BackendError::Transport {
                attempts: 1,
                message: "down".into(),
            })
        }
    }

    #[test]
    fn one_attempt_budget_with_failed_generation() {
        let sys = Arc::new(parse_minilang_module(BUGGY, "m.mini").unwrap());
        let sut = SystemUnderTest::minilang(sys.clone(), None);
        let cfg = HarnessConfig {
            max_attempts: 1,
            ..HarnessConfig::default()
        };
        let specs = specs();
        let v = Validation {
            cb: &sys,
            specs: &specs,
            sut: &sut,
            cfg: &cfg,
            backend: &Failing,
        };
        let o = v.validate_bug(&bug(Some(7)));
        assert_eq!(o.status, ValidationStatus::Unconfirmed);
        assert_eq!(o.attempts.len(), 1);
    }

    #[test]
    fn command_timeouts_and_crashes() {
        let cfg = HarnessConfig {
            timeout_secs: 1,
            ..HarnessConfig::default()
        };
        let t = run_command("while true; do :; done", "x", &cfg).unwrap();
        assert!(t.timed_out && !t.crashed);
        let c = run_command("cat {input_file}; exit 3", "hello", &cfg).unwrap();
        assert!(c.crashed);
        assert_eq!(c.exit_status, Some(3));
        assert_eq!(c.stdout, "hello");
    }

    #[test]
    fn missing_run_command_is_a_harness_failure() {
        let sys = Arc::new(parse_minilang_module(BUGGY, "m.mini").unwrap());
        let backend = OracleBackend::new(BoundedDomain::new(8)).with_system(sys.clone());
        let sut = SystemUnderTest::Command;
        let cfg = HarnessConfig::default();
        let specs = specs();
        let v = Validation {
            cb: &sys,
            specs: &specs,
            sut: &sut,
            cfg: &cfg,
            backend: &backend,
        };
        let o = v.validate_bug(&bug(Some(7)));
        assert_eq!(o.status, ValidationStatus::HarnessFailed);
        assert!(o.harness_error.unwrap().contains("no run command"));
    }

    #[test]
    fn entry_input_parsing() {
        assert_eq!(parse_entry_input("main 1 -2", "main", 2), Ok(vec![1, -2]));
        assert_eq!(parse_entry_input("3", "main", 1), Ok(vec![3]));
        assert!(parse_entry_input("other 3", "main", 1).is_err());
        assert!(parse_entry_input("main", "main", 1).is_err());
    }
}
