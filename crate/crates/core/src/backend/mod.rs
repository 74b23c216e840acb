//! The reasoning interface every stage talks to, plus its implementations:
//! the deterministic oracle, a chat-completion client and a cache replayer.

mod oracle;
mod prompt;
mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codebase::{Codebase, FunctionRecord};
use crate::logic::Valuation;
use crate::spec::{Condition, ExpectedSpecification, Specification};

pub use oracle::{Derivation, OracleBackend};
pub use prompt::{decode_response, render_prompt};
pub use remote::{BackendConfig, RemoteBackend, ReplayBackend, TranscriptCache, TranscriptEntry};

/// What a backend needs to know about a function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionInfo {
    pub name: String,
    pub params: Vec<String>,
    pub source: String,
    pub language: String,
    pub file: String,
    pub start_line: usize,
    /// Parameter names of every in-codebase callee.
    pub callee_params: BTreeMap<String, Vec<String>>,
}

impl FunctionInfo {
    pub fn from_record(f: &FunctionRecord, cb: &Codebase) -> FunctionInfo {
        let callee_params = f
            .callees
            .iter()
            .filter_map(|c| cb.functions.get(c).map(|g| (c.clone(), g.param_names())))
            .collect();
        FunctionInfo {
            name: f.name.clone(),
            params: f.param_names(),
            source: f.source.clone(),
            language: match cb.language {
                crate::codebase::Language::Minilang => "minilang".to_string(),
                crate::codebase::Language::Manifest => cb.source_language.clone(),
            },
            file: f.span.file.clone(),
            start_line: f.span.start_line,
            callee_params,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connective {
    And,
    Or,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionFunction {
    pub name: String,
    pub callees: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionGroup {
    pub label: String,
    pub functions: Vec<String>,
}

/// The suspected bug a test case should trigger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugContext {
    pub id: String,
    pub function: String,
    pub params: Vec<String>,
    pub line: usize,
    pub violated: Condition,
    /// Rendered reasoning trace, one step per line.
    pub trace: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Valuation>,
}

/// The system entry point test inputs are written for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryInfo {
    pub name: String,
    pub params: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<Condition>,
    pub reference_available: bool,
    /// Environment notes written by developers.
    #[serde(default)]
    pub guidance: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ReasoningRequest {
    GenerateEntrySpec {
        function: FunctionInfo,
        domain: String,
    },
    GenerateInternalSpec {
        function: FunctionInfo,
        expectations: Vec<ExpectedSpecification>,
        /// Result of combining `expectations`, when there are any.
        combined: Option<Specification>,
        cycle_callers: Vec<FunctionInfo>,
        domain: String,
    },
    InferPostcondition {
        function: String,
        pre: Condition,
        /// Statement list in MiniLang syntax (or the foreign body text).
        statements: String,
        /// Variables already written on this path; their old values need
        /// not be kept.
        assigned: Vec<String>,
        callees: Vec<ExpectedSpecification>,
        hint: Option<Condition>,
        attempt: u32,
    },
    CheckEntailment {
        antecedent: Condition,
        consequent: Condition,
    },
    ProposeInvariant {
        pre: Condition,
        loop_source: String,
        post: Condition,
        attempt: u32,
        callees: Vec<ExpectedSpecification>,
    },
    MergeConditions {
        conditions: Vec<Condition>,
        connective: Connective,
    },
    GenerateTestCase {
        bug: BugContext,
        entry: EntryInfo,
        prior_attempts: Vec<String>,
        attempt: u32,
    },
    ProposePhasePartition {
        functions: Vec<PartitionFunction>,
    },
    FormalizeCondition {
        text: String,
    },
}

impl ReasoningRequest {
    pub fn kind(&self) -> &'static str {
        match self {
            ReasoningRequest::GenerateEntrySpec { .. } => "GenerateEntrySpec",
            ReasoningRequest::GenerateInternalSpec { .. } => "GenerateInternalSpec",
            ReasoningRequest::InferPostcondition { .. } => "InferPostcondition",
            ReasoningRequest::CheckEntailment { .. } => "CheckEntailment",
            ReasoningRequest::ProposeInvariant { .. } => "ProposeInvariant",
            ReasoningRequest::MergeConditions { .. } => "MergeConditions",
            ReasoningRequest::GenerateTestCase { .. } => "GenerateTestCase",
            ReasoningRequest::ProposePhasePartition { .. } => "ProposePhasePartition",
            ReasoningRequest::FormalizeCondition { .. } => "FormalizeCondition",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalClass {
    Crash,
    DivergenceFromReference,
    SpecViolation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResponseBody {
    Specs {
        spec: Specification,
        expectations: Vec<ExpectedSpecification>,
        #[serde(default)]
        notes: Vec<String>,
    },
    Condition(Condition),
    Verdict {
        verdict: Verdict,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        counterexample: Option<Valuation>,
        /// Which proof obligation a failed check refers to, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        obligation: Option<u8>,
    },
    Invariant(Condition),
    Merged(Condition),
    TestCase {
        input: String,
        expected_signal: SignalClass,
        #[serde(default)]
        rationale: String,
    },
    Partition {
        groups: Vec<PartitionGroup>,
    },
    Formalized(Condition),
    /// The model's output could not be decoded.
    Unparsed {
        reason: String,
    },
}

impl ResponseBody {
    pub fn unknown_verdict() -> ResponseBody {
        ResponseBody::Verdict {
            verdict: Verdict::Unknown,
            counterexample: None,
            obligation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningResponse {
    pub body: ResponseBody,
    pub raw: String,
    pub tokens_used: u64,
}

impl ReasoningResponse {
    pub fn local(body: ResponseBody) -> ReasoningResponse {
        ReasoningResponse {
            body,
            raw: String::new(),
            tokens_used: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("request kind {0} is not supported by this backend")]
    Unsupported(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no cached transcript for request {0}")]
    CacheMiss(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// A semantic-reasoning service. Implementations are shared across worker
/// threads.
pub trait ReasoningBackend: Send + Sync {
    fn submit(&self, req: &ReasoningRequest) -> Result<ReasoningResponse, BackendError>;

    /// Positionally aligned results; one failing item never fails the rest.
    fn submit_batch(&self, reqs: &[ReasoningRequest]) -> Vec<Result<ReasoningResponse, BackendError>> {
        reqs.iter().map(|r| self.submit(r)).collect()
    }
}

impl<T: ReasoningBackend + ?Sized> ReasoningBackend for std::sync::Arc<T> {
    fn submit(&self, req: &ReasoningRequest) -> Result<ReasoningResponse, BackendError> {
        (**self).submit(req)
    }

    fn submit_batch(&self, reqs: &[ReasoningRequest]) -> Vec<Result<ReasoningResponse, BackendError>> {
        (**self).submit_batch(reqs)
    }
}

/// Sums `tokens_used` over every response passing through it.
pub struct Metered<'a> {
    inner: &'a dyn ReasoningBackend,
    tokens: std::sync::atomic::AtomicU64,
}

impl<'a> Metered<'a> {
    pub fn new(inner: &'a dyn ReasoningBackend) -> Metered<'a> {
        Metered {
            inner,
            tokens: std::sync::atomic::AtomicU64::new(0),
        }
    }

    pub fn tokens(&self) -> u64 {
        self.tokens.load(std::sync::atomic::Ordering::SeqCst)
    }

    fn add(&self, r: &Result<ReasoningResponse, BackendError>) {
        if let Ok(r) = r {
            self.tokens.fetch_add(r.tokens_used, std::sync::atomic::Ordering::SeqCst);
        }
    }
}

impl ReasoningBackend for Metered<'_> {
    fn submit(&self, req: &ReasoningRequest) -> Result<ReasoningResponse, BackendError> {
        let r = self.inner.submit(req);
        self.add(&r);
        r
    }

    fn submit_batch(&self, reqs: &[ReasoningRequest]) -> Vec<Result<ReasoningResponse, BackendError>> {
        let rs = self.inner.submit_batch(reqs);
        rs.iter().for_each(|r| self.add(r));
        rs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;

    #[test]
    fn requests_serialize_with_a_kind_tag() {
        let req = ReasoningRequest::CheckEntailment {
            antecedent: Condition::formal(parse_formula("x > 1").unwrap()),
            consequent: Condition::formal(parse_formula("x > 0").unwrap()),
        };
        let json = serde_json::to_value(&req).unwrap();
        assert_eq!(json["kind"], "CheckEntailment");
        assert_eq!(req.kind(), "CheckEntailment");
        let back: ReasoningRequest = serde_json::from_value(json).unwrap();
        assert_eq!(back, req);
    }
}
