//! Stage orchestration: ingest, plan, specgen, reason, validate. Every
//! stage reads and writes plain files under the output directory, so stages
//! can run one at a time or all together with the same result.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, BackendError, Derivation, Metered, OracleBackend, ReasoningBackend, RemoteBackend, ReplayBackend};
use crate::codebase::{load_callgraph_manifest, load_domain_docs, load_minilang_file, Codebase, CodebaseError, Language};
use crate::fsutil::{read_json, write_json};
use crate::generator::{load_spec_files, run_generation, GenerationConfig, GenerationError, GenerationState};
use crate::oracle::BoundedDomain;
use crate::planner::{plan_codebase, PlanError, PlanFile};
use crate::reasoner::{load_reports, run_reasoning, PotentialBug, ReasonerConfig};
use crate::spec::DomainKnowledge;
use crate::validator::{load_validation, run_validation, HarnessConfig, SystemUnderTest, Validation, ValidationOutcome, ValidationTally};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Oracle,
    Remote,
    Replay,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(BackendKind::Oracle),
            "remote" => Ok(BackendKind::Remote),
            "replay" => Ok(BackendKind::Replay),
            other => Err(format!("unknown backend `{other}` (expected oracle, remote or replay)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub input: PathBuf,
    /// Input is a call-graph manifest rather than a MiniLang module.
    pub manifest: bool,
    pub backend: BackendKind,
    pub backend_config: BackendConfig,
    pub harness: HarnessConfig,
    pub workers: usize,
    pub batch_size: usize,
    pub out_dir: PathBuf,
    /// Function name to phase label, applied before planning.
    pub phase_overrides: BTreeMap<String, String>,
    pub domain_knowledge: Option<PathBuf>,
    pub bound: i64,
    /// Correct twin of a MiniLang input, used as the validation reference.
    pub reference: Option<PathBuf>,
    /// Record wall-clock time per stage (makes outputs run-dependent).
    pub timings: bool,
    /// Oracle only: how specifications are derived.
    pub derivation: Derivation,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            input: input.into(),
            manifest: false,
            backend: BackendKind::Oracle,
            backend_config: BackendConfig::default(),
            harness: HarnessConfig::default(),
            workers: 8,
            batch_size: 8,
            out_dir: out_dir.into(),
            phase_overrides: BTreeMap::new(),
            domain_knowledge: None,
            bound: crate::oracle::DEFAULT_BOUND,
            reference: None,
            timings: false,
            derivation: Derivation::TopDown,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Plan,
    Specgen,
    Reason,
    Validate,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Plan, Stage::Specgen, Stage::Reason, Stage::Validate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Plan => "plan",
            Stage::Specgen => "specgen",
            Stage::Reason => "reason",
            Stage::Validate => "validate",
        }
    }
}

/// Written to `stages/<stage>.json` once the stage's artifacts are on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub tokens_used: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub label: String,
    /// Functions per layer.
    pub layers: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub functions: usize,
    pub phases: Vec<PhaseCounts>,
    pub stages: Vec<StageRecord>,
    pub tokens_used: u64,
    pub tallies: ValidationTally,
    /// Per-item failures that did not stop the run.
    pub failure_ledger: Vec<String>,
}

impl RunReport {
    pub fn summary(&self) -> String {
        let mut out = format!(
            "functions: {}\nphases: {}\ntokens used: {}\npotential bugs: {}\nconfirmed: {}\nunconfirmed: {}\nharness failures: {}\n",
            self.functions,
            self.phases.len(),
            self.tokens_used,
            self.tallies.potential,
            self.tallies.confirmed,
            self.tallies.unconfirmed,
            self.tallies.harness_failed
        );
        for s in &self.stages {
            if let Some(ms) = s.wall_ms {
                out.push_str(&format!("{}: {ms} ms\n", s.stage.name()));
            }
        }
        if !self.failure_ledger.is_empty() {
            out.push_str(&format!("failures: {}\n", self.failure_ledger.len()));
            for f in &self.failure_ledger {
                out.push_str(&format!("  {f}\n"));
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("cannot load input: {0}")]
    Input(CodebaseError),
    #[error("backend setup failed: {0}")]
    Backend(BackendError),
    #[error("planning failed: {0}")]
    Plan(PlanError),
    #[error("specification generation failed: {0}")]
    Generation(GenerationError),
    #[error("missing prerequisite artifact {path}; run `{stage}` first")]
    MissingArtifact { path: String, stage: &'static str },
    #[error("i/o error: {0}")]
    Io(std::io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

// Messages already embed the inner error, so no `source` link is kept;
// otherwise chained reporters print it twice.
macro_rules! wrap {
    ($($v:ident($t:ty)),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::$v(e)
            }
        }
    )*};
}
wrap!(Input(CodebaseError), Backend(BackendError), Plan(PlanError), Generation(GenerationError), Io(std::io::Error));

pub struct Pipeline {
    cfg: RunConfig,
    cb: Arc<Codebase>,
    backend: Arc<dyn ReasoningBackend>,
}

fn apply_overrides(cb: &mut Codebase, overrides: &BTreeMap<String, String>) -> Result<(), PipelineError> {
    for (f, phase) in overrides {
        let rec = cb
            .functions
            .get_mut(f)
            .ok_or_else(|| PipelineError::Config(format!("phase override names unknown function `{f}`")))?;
        rec.phase = Some(phase.clone());
    }
    Ok(())
}

pub fn load_input(cfg: &RunConfig) -> Result<Codebase, PipelineError> {
    let mut cb = if cfg.manifest {
        load_callgraph_manifest(&cfg.input)?
    } else {
        load_minilang_file(&cfg.input)?
    };
    apply_overrides(&mut cb, &cfg.phase_overrides)?;
    Ok(cb)
}

impl Pipeline {
    /// Loads the input and builds the configured backend.
    pub fn new(cfg: RunConfig) -> Result<Pipeline, PipelineError> {
        let cb = Arc::new(load_input(&cfg)?);
        let backend: Arc<dyn ReasoningBackend> = match cfg.backend {
            BackendKind::Oracle => Arc::new(
                OracleBackend::new(BoundedDomain::new(cfg.bound))
                    .with_system(cb.clone())
                    .with_derivation(cfg.derivation),
            ),
            BackendKind::Remote => Arc::new(RemoteBackend::new(cfg.backend_config.clone())?),
            BackendKind::Replay => {
                let dir = cfg
                    .backend_config
                    .cache_dir
                    .clone()
                    .ok_or_else(|| PipelineError::Config("replay needs a transcript cache directory".into()))?;
                Arc::new(ReplayBackend::new(dir, &cfg.backend_config.model, cfg.backend_config.batch_size)?)
            }
        };
        Ok(Pipeline { cfg, cb, backend })
    }

    /// Uses `backend` instead of the configured one.
    pub fn with_backend(cfg: RunConfig, backend: Arc<dyn ReasoningBackend>) -> Result<Pipeline, PipelineError> {
        let cb = Arc::new(load_input(&cfg)?);
        Ok(Pipeline { cfg, cb, backend })
    }

    pub fn codebase(&self) -> &Codebase {
        &self.cb
    }

    fn out(&self) -> &Path {
        &self.cfg.out_dir
    }

    fn marker(&self, stage: Stage) -> PathBuf {
        self.out().join("stages").join(format!("{}.json", stage.name()))
    }

    fn require(&self, path: PathBuf, stage: &'static str) -> Result<PathBuf, PipelineError> {
        if path.exists() {
            Ok(path)
        } else {
            Err(PipelineError::MissingArtifact {
                path: path.display().to_string(),
                stage,
            })
        }
    }

    fn domain_knowledge(&self) -> Result<DomainKnowledge, PipelineError> {
        let mut docs = self.cb.domain_docs.clone();
        if let Some(dir) = &self.cfg.domain_knowledge {
            docs.extend(load_domain_docs(dir)?);
        }
        Ok(DomainKnowledge::from_docs(&docs))
    }

    fn plan(&self, backend: &dyn ReasoningBackend) -> Result<(), PipelineError> {
        let (plan, _) = plan_codebase(&self.cb, backend)?;
        write_json(&self.out().join("plan.json"), &plan)?;
        Ok(())
    }

    fn specgen(&self, backend: &dyn ReasoningBackend) -> Result<(), PipelineError> {
        let path = self.require(self.out().join("plan.json"), "plan")?;
        let plan: PlanFile = read_json(&path)?;
        let cfg = GenerationConfig {
            batch_size: self.cfg.batch_size.max(1),
            workers: self.cfg.workers.max(1),
        };
        run_generation(&self.cb, &plan, &self.domain_knowledge()?, backend, &cfg, self.out())?;
        Ok(())
    }

    fn reason(&self, backend: &dyn ReasoningBackend) -> Result<(), PipelineError> {
        self.require(self.out().join("specs").join("_state.json"), "specgen")?;
        let specs: Vec<_> = load_spec_files(self.out())?.into_values().collect();
        let cfg = ReasonerConfig {
            dom: BoundedDomain::new(self.cfg.bound),
            ..ReasonerConfig::default()
        };
        run_reasoning(&specs, backend, &cfg, self.cfg.workers.max(1), self.out())?;
        Ok(())
    }

    fn validate(&self, backend: &dyn ReasoningBackend) -> Result<(), PipelineError> {
        self.require(self.out().join("reports").join("_summary.json"), "reason")?;
        let bugs: Vec<PotentialBug> = load_reports(self.out())?.into_iter().flat_map(|r| r.bugs).collect();
        let specs = load_spec_files(self.out())?.into_iter().map(|(k, sf)| (k, sf.spec)).collect();
        let sut = if self.cfg.harness.run_command.is_some() || self.cb.language != Language::Minilang {
            SystemUnderTest::Command
        } else {
            let reference = match &self.cfg.reference {
                Some(p) => Some(Arc::new(load_minilang_file(p)?)),
                None => None,
            };
            SystemUnderTest::minilang(self.cb.clone(), reference)
        };
        let mut harness = self.cfg.harness.clone();
        harness.workers = self.cfg.workers.max(1);
        let v = Validation {
            cb: &self.cb,
            specs: &specs,
            sut: &sut,
            cfg: &harness,
            backend,
        };
        run_validation(&v, &bugs, self.out())?;
        Ok(())
    }

    /// Runs one stage over the artifacts of the previous ones, then
    /// refreshes `report.json`.
    pub fn run_stage(&self, stage: Stage) -> Result<StageRecord, PipelineError> {
        std::fs::create_dir_all(self.out())?;
        let metered = Metered::new(self.backend.as_ref());
        let start = Instant::now();
        match stage {
            Stage::Plan => self.plan(&metered)?,
            Stage::Specgen => self.specgen(&metered)?,
            Stage::Reason => self.reason(&metered)?,
            Stage::Validate => self.validate(&metered)?,
        }
        let record = StageRecord {
            stage,
            tokens_used: metered.tokens(),
            wall_ms: self.cfg.timings.then(|| start.elapsed().as_millis() as u64),
        };
        write_json(&self.marker(stage), &record)?;
        self.write_report()?;
        Ok(record)
    }

    /// Runs every stage whose completion marker is absent.
    pub fn run(&self) -> Result<RunReport, PipelineError> {
        for stage in Stage::ALL {
            if self.marker(stage).exists() {
                log::info!("stage {} already complete; skipping", stage.name());
                continue;
            }
            self.run_stage(stage)?;
        }
        self.write_report()
    }

    /// Assembles the run report from whatever artifacts exist.
    pub fn report(&self) -> Result<RunReport, PipelineError> {
        let mut report = RunReport {
            functions: self.cb.len(),
            ..RunReport::default()
        };
        if let Ok(plan) = read_json::<PlanFile>(&self.out().join("plan.json")) {
            report.phases = plan
                .phases
                .iter()
                .map(|p| PhaseCounts {
                    label: p.label.clone(),
                    layers: p.layers.iter().map(Vec::len).collect(),
                })
                .collect();
        }
        for stage in Stage::ALL {
            if let Ok(r) = read_json::<StageRecord>(&self.marker(stage)) {
                report.tokens_used += r.tokens_used;
                report.stages.push(r);
            }
        }
        if let Ok(state) = read_json::<GenerationState>(&self.out().join("specs").join("_state.json")) {
            for (f, reason) in &state.failed {
                report.failure_ledger.push(format!("spec-failed {f}: {reason}"));
            }
        }
        if let Ok(reports) = load_reports(self.out()) {
            for r in &reports {
                if let Some(why) = &r.skipped {
                    report.failure_ledger.push(format!("analysis-skipped {}: {why}", r.function));
                }
                for d in r.diagnostics.iter().filter(|d| d.starts_with("analysis-truncated")) {
                    report.failure_ledger.push(format!("{}: {d}", r.function));
                }
            }
            report.tallies.potential = reports.iter().map(|r| r.bugs.len()).sum();
        }
        if let Ok(entries) = load_validation(self.out()) {
            let outcomes: Vec<ValidationOutcome> = entries.into_iter().map(|e| e.1).collect();
            report.tallies = ValidationTally::of(&outcomes);
            for o in outcomes.iter().filter(|o| o.harness_error.is_some()) {
                report.failure_ledger.push(format!(
                    "harness-failed {}: {}",
                    o.bug_id,
                    o.harness_error.as_deref().unwrap_or_default()
                ));
            }
        }
        Ok(report)
    }

    fn write_report(&self) -> Result<RunReport, PipelineError> {
        let report = self.report()?;
        write_json(&self.out().join("report.json"), &report)?;
        Ok(report)
    }
}

/// Loads a finished run's report.
pub fn read_report(out_dir: &Path) -> std::io::Result<RunReport> {
    read_json(&out_dir.join("report.json"))
}
