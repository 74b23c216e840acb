//! Caller-driven specification generation and compositional Hoare-style
//! checking over a codebase's call graph.
//!
//! The stages are [`planner`] (call-graph layering), [`generator`]
//! (top-down specifications), [`reasoner`] (per-function checking) and
//! [`validator`] (test-based confirmation), driven by [`pipeline`]. All
//! semantic questions go through a [`backend::ReasoningBackend`].

pub mod backend;
pub mod codebase;
mod fsutil;
pub mod generator;
pub mod hoare;
pub mod logic;
pub mod minilang;
pub mod oracle;
pub mod pipeline;
pub mod planner;
pub mod reasoner;
pub mod spec;
pub mod validator;

pub use backend::{
    BackendConfig, BackendError, Derivation, OracleBackend, ReasoningBackend, ReasoningRequest, ReasoningResponse,
    RemoteBackend, ReplayBackend, ResponseBody, Verdict,
};
pub use generator::{GenerationConfig, GenerationState};
pub use pipeline::{BackendKind, Pipeline, PipelineError, RunConfig, RunReport, Stage};
pub use reasoner::{BugStatus, FunctionReport, PotentialBug, ReasonerConfig, VerdictSource};
pub use validator::{HarnessConfig, SystemUnderTest, ValidationOutcome, ValidationStatus, ValidationTally};
pub use codebase::{Codebase, CodebaseError, FunctionRecord, Language};
pub use logic::{parse_formula, Formula, Term, Valuation};
pub use oracle::{BoundedDomain, Entailment, ExecOutcome};
pub use planner::{LayerPlan, PlanFile};
pub use spec::{Condition, ExpectedSpecification, Precision, Provenance, SpecFile, Specification};
