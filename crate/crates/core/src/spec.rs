//! Conditions, function specifications, caller expectations and the
//! three-part spec file.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::backend::{BackendError, Connective, ReasoningBackend, ReasoningRequest, ResponseBody, Verdict};
use crate::codebase::{FunctionRecord, Span};
use crate::logic::{parse_formula, Formula};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Precise,
    Ambiguous,
}

/// A pre- or post-condition: prose plus an optional formula.
///
/// Precision is derived, never stored: a condition is precise exactly when it
/// has a formula free of uninterpreted predicates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Condition {
    pub text: String,
    pub formula: Option<Formula>,
}

impl Condition {
    pub fn new(text: impl Into<String>, formula: Option<Formula>) -> Condition {
        let text = text.into().trim().to_string();
        let formula = formula.map(canonical);
        let text = if text.is_empty() {
            formula.as_ref().map_or_else(|| "unspecified".to_string(), Formula::to_string)
        } else {
            text
        };
        Condition { text, formula }
    }

    /// A condition whose prose is the formula itself.
    pub fn formal(formula: Formula) -> Condition {
        let formula = canonical(formula);
        Condition {
            text: formula.to_string(),
            formula: Some(formula),
        }
    }

    pub fn text_only(text: impl Into<String>) -> Condition {
        Condition::new(text, None)
    }

    pub fn tt() -> Condition {
        Condition::formal(Formula::tt())
    }

    pub fn precision(&self) -> Precision {
        match &self.formula {
            Some(f) if !f.has_uninterpreted() => Precision::Precise,
            _ => Precision::Ambiguous,
        }
    }

    pub fn is_precise(&self) -> bool {
        self.precision() == Precision::Precise
    }

    /// The formula when the condition is precise.
    pub fn precise_formula(&self) -> Option<&Formula> {
        self.formula.as_ref().filter(|f| !f.has_uninterpreted())
    }
}

fn canonical(f: Formula) -> Formula {
    parse_formula(&f.to_string()).unwrap_or(f)
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)?;
        if let Some(formula) = &self.formula {
            if formula.to_string() != self.text {
                write!(f, " [{formula}]")?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ConditionWire {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    formula: Option<Formula>,
    #[serde(default, skip_deserializing)]
    precision: Option<Precision>,
}

impl Serialize for Condition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ConditionWire {
            text: self.text.clone(),
            formula: self.formula.clone(),
            precision: Some(self.precision()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let w = ConditionWire::deserialize(deserializer)?;
        Ok(Condition::new(w.text, w.formula))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Entry,
    Combined,
    Cycle,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Entry => "entry",
            Provenance::Combined => "combined",
            Provenance::Cycle => "cycle",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specification {
    pub function: String,
    pub pre: Condition,
    pub post: Condition,
    pub provenance: Provenance,
}

/// What `caller` demands of `callee` at one call site.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedSpecification {
    pub caller: String,
    pub callee: String,
    /// The callee's parameter names; `pre` and `post` range over these.
    #[serde(default)]
    pub params: Vec<String>,
    pub pre: Condition,
    pub post: Condition,
    pub call_site: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecFile {
    pub spec: Specification,
    pub callee_expectations: Vec<ExpectedSpecification>,
    pub body: String,
    pub language: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecFileError {
    #[error("missing section header `{0}`")]
    MissingHeader(String),
    #[error("malformed formula block: {0}")]
    BadFormula(String),
    #[error("malformed spec file: {0}")]
    Malformed(String),
}

fn escape_line(line: &str) -> String {
    if line.starts_with('#') || line.starts_with("```") || line.starts_with('\\') {
        format!("\\{line}")
    } else {
        line.to_string()
    }
}

fn render_condition(out: &mut String, heading: &str, c: &Condition) {
    out.push_str(heading);
    out.push_str("\n\n");
    for line in c.text.lines() {
        out.push_str(&escape_line(line));
        out.push('\n');
    }
    out.push('\n');
    if let Some(f) = &c.formula {
        out.push_str("```formula\n");
        out.push_str(&f.to_string());
        out.push_str("\n```\n\n");
    }
}

fn fence_for(body: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for ch in body.chars() {
        if ch == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat((longest + 1).max(3))
}

pub fn render_spec_file(sf: &SpecFile) -> String {
    let mut out = format!("# {}\n\n## Specification\n\nProvenance: {}\n\n", sf.spec.function, sf.spec.provenance);
    render_condition(&mut out, "### Pre", &sf.spec.pre);
    render_condition(&mut out, "### Post", &sf.spec.post);
    out.push_str("## Expected Callee Specifications\n\n");
    for e in &sf.callee_expectations {
        out.push_str(&format!("### {}@{}\n\nParameters: {}\n\n", e.callee, e.call_site, e.params.join(", ")));
        render_condition(&mut out, "#### Pre", &e.pre);
        render_condition(&mut out, "#### Post", &e.post);
    }
    out.push_str("## Function Body\n\n");
    let fence = fence_for(&sf.body);
    out.push_str(&format!(
        "{fence}{} {}:{}-{}\n",
        sf.language, sf.span.file, sf.span.start_line, sf.span.end_line
    ));
    out.push_str(&sf.body);
    if !sf.body.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(&fence);
    out.push('\n');
    out
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn skip_blank(&mut self) {
        while matches!(self.peek(), Some(l) if l.trim().is_empty()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, header: &str) -> Result<(), SpecFileError> {
        self.skip_blank();
        if self.peek() == Some(header) {
            self.pos += 1;
            Ok(())
        } else {
            Err(SpecFileError::MissingHeader(header.to_string()))
        }
    }

    fn condition(&mut self, header: &str) -> Result<Condition, SpecFileError> {
        self.expect(header)?;
        let mut text_lines = Vec::new();
        let mut formula = None;
        while let Some(line) = self.peek() {
            if line.starts_with('#') {
                break;
            }
            if line == "```formula" {
                self.pos += 1;
                let mut body = Vec::new();
                loop {
                    match self.peek() {
                        Some("```") => {
                            self.pos += 1;
                            break;
                        }
                        Some(l) => {
                            body.push(l);
                            self.pos += 1;
                        }
                        None => return Err(SpecFileError::BadFormula("unterminated formula block".into())),
                    }
                }
                let text = body.join("\n");
                formula =
                    Some(parse_formula(text.trim()).map_err(|e| SpecFileError::BadFormula(format!("{text}: {e}")))?);
                continue;
            }
            let unescaped = line.strip_prefix('\\').unwrap_or(line);
            if formula.is_some() && !line.trim().is_empty() {
                return Err(SpecFileError::Malformed(format!("text after formula block: {line}")));
            }
            text_lines.push(unescaped);
            self.pos += 1;
        }
        let text = text_lines.join("\n").trim().to_string();
        Ok(Condition::new(text, formula))
    }
}

pub fn parse_spec_file(text: &str) -> Result<SpecFile, SpecFileError> {
    let mut ls = Lines {
        lines: text.lines().collect(),
        pos: 0,
    };
    ls.skip_blank();
    let function = ls
        .peek()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| SpecFileError::MissingHeader("# <function>".into()))?
        .trim()
        .to_string();
    ls.pos += 1;
    ls.expect("## Specification")?;
    ls.skip_blank();
    let provenance = match ls.peek().and_then(|l| l.strip_prefix("Provenance: ")) {
        Some("entry") => Provenance::Entry,
        Some("combined") => Provenance::Combined,
        Some("cycle") => Provenance::Cycle,
        _ => return Err(SpecFileError::Malformed("missing or unknown provenance line".into())),
    };
    ls.pos += 1;
    let pre = ls.condition("### Pre")?;
    let post = ls.condition("### Post")?;
    ls.expect("## Expected Callee Specifications")?;
    let mut callee_expectations = Vec::new();
    loop {
        ls.skip_blank();
        let Some(line) = ls.peek() else { break };
        let Some(head) = line.strip_prefix("### ") else { break };
        let (callee, site) = head
            .rsplit_once('@')
            .ok_or_else(|| SpecFileError::Malformed(format!("expectation header `{line}`")))?;
        let call_site = site
            .parse()
            .map_err(|_| SpecFileError::Malformed(format!("call site in `{line}`")))?;
        let callee = callee.to_string();
        ls.pos += 1;
        ls.skip_blank();
        let params = match ls.peek().and_then(|l| l.strip_prefix("Parameters:")) {
            Some(list) => list
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(str::to_string)
                .collect(),
            None => return Err(SpecFileError::Malformed(format!("missing parameter line for `{head}`"))),
        };
        ls.pos += 1;
        let pre = ls.condition("#### Pre")?;
        let post = ls.condition("#### Post")?;
        callee_expectations.push(ExpectedSpecification {
            caller: function.clone(),
            callee,
            params,
            pre,
            post,
            call_site,
        });
    }
    ls.expect("## Function Body")?;
    ls.skip_blank();
    let open = ls.peek().ok_or_else(|| SpecFileError::Malformed("missing body fence".into()))?;
    let fence_len = open.chars().take_while(|&c| c == '`').count();
    if fence_len < 3 {
        return Err(SpecFileError::Malformed("missing body fence".into()));
    }
    let fence = &open[..fence_len];
    let info = &open[fence_len..];
    let (language, loc) = info
        .split_once(' ')
        .ok_or_else(|| SpecFileError::Malformed(format!("body fence info `{info}`")))?;
    let (file, lines) = loc
        .rsplit_once(':')
        .ok_or_else(|| SpecFileError::Malformed(format!("body location `{loc}`")))?;
    let (start, end) = lines
        .split_once('-')
        .ok_or_else(|| SpecFileError::Malformed(format!("body line range `{lines}`")))?;
    let span = Span {
        file: file.to_string(),
        start_line: start.parse().map_err(|_| SpecFileError::Malformed("start line".into()))?,
        end_line: end.parse().map_err(|_| SpecFileError::Malformed("end line".into()))?,
    };
    ls.pos += 1;
    let mut body_lines = Vec::new();
    loop {
        match ls.peek() {
            Some(l) if l == fence => break,
            Some(l) => {
                body_lines.push(l);
                ls.pos += 1;
            }
            None => return Err(SpecFileError::Malformed("unterminated body fence".into())),
        }
    }
    let mut body = body_lines.join("\n");
    body.push('\n');
    Ok(SpecFile {
        spec: Specification {
            function,
            pre,
            post,
            provenance,
        },
        callee_expectations,
        body,
        language: language.to_string(),
        span,
    })
}

impl SpecFile {
    /// Normalizes the body so that render/parse is the identity.
    pub fn new(
        spec: Specification,
        callee_expectations: Vec<ExpectedSpecification>,
        body: &str,
        language: &str,
        span: Span,
    ) -> SpecFile {
        let mut body = body.trim_end_matches('\n').to_string();
        body.push('\n');
        SpecFile {
            spec,
            callee_expectations,
            body,
            language: language.to_string(),
            span,
        }
    }
}

/// Domain knowledge split by component (phase) label.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainKnowledge {
    pub shards: BTreeMap<String, String>,
}

impl DomainKnowledge {
    /// Builds shards from `(label, text)` documents, dropping empty texts and
    /// concatenating documents that share a label.
    pub fn from_docs(docs: &[(String, String)]) -> DomainKnowledge {
        let mut shards: BTreeMap<String, String> = BTreeMap::new();
        for (label, text) in docs {
            if text.trim().is_empty() {
                continue;
            }
            let entry = shards.entry(label.clone()).or_default();
            if !entry.is_empty() {
                entry.push('\n');
            }
            entry.push_str(text.trim_end());
        }
        DomainKnowledge { shards }
    }
}

/// The shard for the function's phase, or empty text.
pub fn route_domain_knowledge(dk: &DomainKnowledge, f: &FunctionRecord, phases: &BTreeMap<String, String>) -> String {
    let phase = f.phase.as_ref().or_else(|| phases.get(&f.name));
    phase.and_then(|p| dk.shards.get(p)).cloned().unwrap_or_default()
}

#[derive(Debug, thiserror::Error)]
pub enum CombineError {
    #[error("no expectations to combine")]
    Empty,
    #[error("expectations target different callees: {0} and {1}")]
    MixedCallees(String, String),
    #[error("merge failed: {0}")]
    Backend(#[from] BackendError),
    #[error("backend returned an unexpected response to a merge request")]
    BadResponse,
}

/// Result of combining caller expectations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Combined {
    pub spec: Specification,
    pub diagnostics: Vec<String>,
}

fn join_texts(parts: &[&Condition], word: &str) -> String {
    if parts.len() == 1 {
        return parts[0].text.clone();
    }
    parts
        .iter()
        .map(|c| format!("({})", c.text))
        .collect::<Vec<_>>()
        .join(&format!(" {word} "))
}

/// Pre = P1 ∨ … ∨ Pn, post = Q1 ∧ … ∧ Qn. Precise inputs are combined
/// literally; otherwise the backend merges the texts and the formula-level
/// contract is checked when formulas exist.
pub fn combine_expected_specs(
    expectations: &[ExpectedSpecification],
    backend: &dyn ReasoningBackend,
) -> Result<Combined, CombineError> {
    let first = expectations.first().ok_or(CombineError::Empty)?;
    if let Some(other) = expectations.iter().find(|e| e.callee != first.callee) {
        return Err(CombineError::MixedCallees(first.callee.clone(), other.callee.clone()));
    }
    let pres: Vec<&Condition> = expectations.iter().map(|e| &e.pre).collect();
    let posts: Vec<&Condition> = expectations.iter().map(|e| &e.post).collect();
    let mut diagnostics = Vec::new();
    let pre = merge(&pres, Connective::Or, backend, &mut diagnostics)?;
    let post = merge(&posts, Connective::And, backend, &mut diagnostics)?;
    if let Some(pf) = post.precise_formula() {
        if expectations.len() > 1 && pf != &Formula::Bool(false) {
            let req = ReasoningRequest::CheckEntailment {
                antecedent: post.clone(),
                consequent: Condition::formal(Formula::Bool(false)),
            };
            if let Ok(resp) = backend.submit(&req) {
                if let ResponseBody::Verdict { verdict: Verdict::Holds, .. } = resp.body {
                    diagnostics.push(format!(
                        "spec-conflict: caller postconditions for {} are jointly unsatisfiable",
                        first.callee
                    ));
                }
            }
        }
    }
    Ok(Combined {
        spec: Specification {
            function: first.callee.clone(),
            pre,
            post,
            provenance: Provenance::Combined,
        },
        diagnostics,
    })
}

fn merge(
    parts: &[&Condition],
    connective: Connective,
    backend: &dyn ReasoningBackend,
    diagnostics: &mut Vec<String>,
) -> Result<Condition, CombineError> {
    let word = match connective {
        Connective::And => "and",
        Connective::Or => "or",
    };
    if parts.len() == 1 {
        return Ok(parts[0].clone());
    }
    if parts.iter().all(|c| c.is_precise()) {
        let fs = parts.iter().map(|c| c.formula.clone().expect("precise"));
        let f = match connective {
            Connective::And => Formula::and(fs),
            Connective::Or => Formula::or(fs),
        };
        return Ok(Condition::new(join_texts(parts, word), Some(f)));
    }
    let req = ReasoningRequest::MergeConditions {
        conditions: parts.iter().map(|c| (*c).clone()).collect(),
        connective,
    };
    let resp = backend.submit(&req)?;
    let ResponseBody::Merged(merged) = resp.body else {
        return Err(CombineError::BadResponse);
    };
    // Contract: each Pi entails the merged pre; the merged post entails each Qi.
    let mut checked = merged.is_precise();
    for c in parts {
        if !(checked && c.is_precise()) {
            checked = false;
            break;
        }
        let (ante, cons) = match connective {
            Connective::Or => ((*c).clone(), merged.clone()),
            Connective::And => (merged.clone(), (*c).clone()),
        };
        let verdict = backend.submit(&ReasoningRequest::CheckEntailment {
            antecedent: ante,
            consequent: cons,
        })?;
        if let ResponseBody::Verdict { verdict: v, .. } = verdict.body {
            if v != Verdict::Holds {
                diagnostics.push(format!("merge-contract-violated: {word}-merge does not respect {}", c.text));
            }
        }
    }
    if !checked {
        diagnostics.push(format!("merge-unchecked: {word}-merge of imprecise conditions"));
    }
    Ok(merged)
}
