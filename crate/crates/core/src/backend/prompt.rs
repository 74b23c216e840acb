//! Prompt assembly from the templates under `prompts/`, and decoding of the
//! single fenced JSON block a model answers with.

use serde::Deserialize;

use super::{ReasoningRequest, ResponseBody, SignalClass, Verdict};
use crate::logic::Valuation;
use crate::spec::{Condition, ExpectedSpecification, Provenance, Specification};

pub const SYSTEM: &str = include_str!("../../prompts/system.txt");
const USER: &str = include_str!("../../prompts/user.txt");
const BATCH: &str = include_str!("../../prompts/batch.txt");

fn instruction(req: &ReasoningRequest) -> &'static str {
    match req {
        ReasoningRequest::GenerateEntrySpec { .. } => include_str!("../../prompts/kinds/GenerateEntrySpec.txt"),
        ReasoningRequest::GenerateInternalSpec { .. } => include_str!("../../prompts/kinds/GenerateInternalSpec.txt"),
        ReasoningRequest::InferPostcondition { .. } => include_str!("../../prompts/kinds/InferPostcondition.txt"),
        ReasoningRequest::CheckEntailment { .. } => include_str!("../../prompts/kinds/CheckEntailment.txt"),
        ReasoningRequest::ProposeInvariant { .. } => include_str!("../../prompts/kinds/ProposeInvariant.txt"),
        ReasoningRequest::MergeConditions { .. } => include_str!("../../prompts/kinds/MergeConditions.txt"),
        ReasoningRequest::GenerateTestCase { .. } => include_str!("../../prompts/kinds/GenerateTestCase.txt"),
        ReasoningRequest::ProposePhasePartition { .. } => {
            include_str!("../../prompts/kinds/ProposePhasePartition.txt")
        }
        ReasoningRequest::FormalizeCondition { .. } => include_str!("../../prompts/kinds/FormalizeCondition.txt"),
    }
}

fn or_none(s: String) -> String {
    if s.trim().is_empty() {
        "(none)".to_string()
    } else {
        s
    }
}

fn sections(req: &ReasoningRequest) -> (String, String, String) {
    let expectations = |es: &[ExpectedSpecification]| {
        es.iter()
            .map(|e| format!("- {} at call site {} of {}: pre {}; post {}", e.callee, e.call_site, e.caller, e.pre, e.post))
            .collect::<Vec<_>>()
            .join("\n")
    };
    match req {
        ReasoningRequest::GenerateEntrySpec { function, domain } => {
            (domain.clone(), String::new(), function.source.clone())
        }
        ReasoningRequest::GenerateInternalSpec {
            function,
            expectations: es,
            cycle_callers,
            domain,
            ..
        } => {
            let mut code = function.source.clone();
            for c in cycle_callers {
                code.push_str("\n\n// caller in the same cycle\n");
                code.push_str(&c.source);
            }
            (domain.clone(), expectations(es), code)
        }
        ReasoningRequest::InferPostcondition {
            statements, callees, ..
        } => (String::new(), expectations(callees), statements.clone()),
        ReasoningRequest::ProposeInvariant {
            loop_source, callees, ..
        } => (String::new(), expectations(callees), loop_source.clone()),
        ReasoningRequest::GenerateTestCase { entry, bug, .. } => {
            (entry.guidance.clone(), String::new(), format!("{}\n\n{}", bug.trace, bug.violated))
        }
        _ => (String::new(), String::new(), String::new()),
    }
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in pairs {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

/// The user message for one request: domain text, expectations,
/// implementation, then the task and the request itself.
pub fn render_prompt(req: &ReasoningRequest) -> String {
    let (domain, expectations, implementation) = sections(req);
    let request = serde_json::to_string_pretty(req).expect("requests serialize");
    fill(
        USER,
        &[
            ("domain", &or_none(domain)),
            ("expectations", &or_none(expectations)),
            ("implementation", &or_none(implementation)),
            ("instruction", instruction(req).trim_end()),
            ("request", &request),
        ],
    )
}

pub(crate) fn render_batch_prompt(reqs: &[ReasoningRequest]) -> String {
    let items = reqs
        .iter()
        .enumerate()
        .map(|(i, r)| format!("# Request {}\n\n{}", i + 1, render_prompt(r)))
        .collect::<Vec<_>>()
        .join("\n\n");
    fill(BATCH, &[("items", &items)])
}

/// The contents of the single ```json block in `content`.
fn json_block(content: &str) -> Result<&str, String> {
    let mut blocks = Vec::new();
    let mut rest = content;
    while let Some(start) = rest.find("```json") {
        let after = &rest[start + 7..];
        let end = after.find("```").ok_or("unterminated json block")?;
        blocks.push(&after[..end]);
        rest = &after[end + 3..];
    }
    match blocks.as_slice() {
        [one] => Ok(one.trim()),
        [] => Err("no json block".into()),
        _ => Err(format!("{} json blocks", blocks.len())),
    }
}

#[derive(Deserialize)]
struct WireExpectation {
    callee: String,
    call_site: usize,
    pre: Condition,
    post: Condition,
}

#[derive(Deserialize)]
struct WireSpecs {
    pre: Condition,
    post: Condition,
    #[serde(default)]
    expectations: Vec<WireExpectation>,
    #[serde(default)]
    notes: Vec<String>,
}

#[derive(Deserialize)]
struct WireVerdict {
    verdict: Verdict,
    #[serde(default)]
    counterexample: Option<Valuation>,
}

#[derive(Deserialize)]
struct WireTestCase {
    input: String,
    expected_signal: SignalClass,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct WirePartition {
    groups: Vec<super::PartitionGroup>,
}

fn decode_value(req: &ReasoningRequest, v: serde_json::Value) -> Result<ResponseBody, String> {
    let err = |e: serde_json::Error| e.to_string();
    Ok(match req {
        ReasoningRequest::GenerateEntrySpec { function, .. } | ReasoningRequest::GenerateInternalSpec { function, .. } => {
            let w: WireSpecs = serde_json::from_value(v).map_err(err)?;
            let provenance = match req {
                ReasoningRequest::GenerateEntrySpec { .. } => Provenance::Entry,
                ReasoningRequest::GenerateInternalSpec { combined: Some(_), .. } => Provenance::Combined,
                _ => Provenance::Cycle,
            };
            ResponseBody::Specs {
                spec: Specification {
                    function: function.name.clone(),
                    pre: w.pre,
                    post: w.post,
                    provenance,
                },
                expectations: w
                    .expectations
                    .into_iter()
                    .map(|e| ExpectedSpecification {
                        caller: function.name.clone(),
                        params: function.callee_params.get(&e.callee).cloned().unwrap_or_default(),
                        callee: e.callee,
                        pre: e.pre,
                        post: e.post,
                        call_site: e.call_site,
                    })
                    .collect(),
                notes: w.notes,
            }
        }
        ReasoningRequest::InferPostcondition { .. } => ResponseBody::Condition(serde_json::from_value(v).map_err(err)?),
        ReasoningRequest::CheckEntailment { .. } => {
            let w: WireVerdict = serde_json::from_value(v).map_err(err)?;
            ResponseBody::Verdict {
                verdict: w.verdict,
                counterexample: w.counterexample.filter(|_| w.verdict == Verdict::Fails),
                obligation: None,
            }
        }
        ReasoningRequest::ProposeInvariant { .. } => ResponseBody::Invariant(serde_json::from_value(v).map_err(err)?),
        ReasoningRequest::MergeConditions { .. } => ResponseBody::Merged(serde_json::from_value(v).map_err(err)?),
        ReasoningRequest::GenerateTestCase { .. } => {
            let w: WireTestCase = serde_json::from_value(v).map_err(err)?;
            ResponseBody::TestCase {
                input: w.input,
                expected_signal: w.expected_signal,
                rationale: w.rationale,
            }
        }
        ReasoningRequest::ProposePhasePartition { .. } => {
            let w: WirePartition = serde_json::from_value(v).map_err(err)?;
            ResponseBody::Partition { groups: w.groups }
        }
        ReasoningRequest::FormalizeCondition { .. } => {
            ResponseBody::Formalized(serde_json::from_value(v).map_err(err)?)
        }
    })
}

fn degrade(req: &ReasoningRequest, reason: String) -> ResponseBody {
    log::warn!("undecodable {} response: {reason}", req.kind());
    match req {
        ReasoningRequest::CheckEntailment { .. } => ResponseBody::unknown_verdict(),
        _ => ResponseBody::Unparsed { reason },
    }
}

/// Decodes a model reply. Malformed output never fails: entailment checks
/// degrade to `unknown`, everything else to [`ResponseBody::Unparsed`].
pub fn decode_response(req: &ReasoningRequest, content: &str) -> ResponseBody {
    let parsed = json_block(content)
        .and_then(|b| serde_json::from_str::<serde_json::Value>(b).map_err(|e| e.to_string()))
        .and_then(|v| decode_value(req, v));
    parsed.unwrap_or_else(|reason| degrade(req, reason))
}

/// Decodes a batched reply holding `{"items": [...]}`, one item per request.
pub(crate) fn decode_batch(reqs: &[ReasoningRequest], content: &str) -> Vec<ResponseBody> {
    let items = json_block(content)
        .and_then(|b| serde_json::from_str::<serde_json::Value>(b).map_err(|e| e.to_string()))
        .and_then(|v| match v.get("items").and_then(|i| i.as_array()) {
            Some(items) => Ok(items.clone()),
            None => Err("missing items array".to_string()),
        });
    match items {
        Ok(items) => reqs
            .iter()
            .enumerate()
            .map(|(i, r)| match items.get(i) {
                Some(v) => decode_value(r, v.clone()).unwrap_or_else(|e| degrade(r, e)),
                None => degrade(r, format!("batch reply has no item {i}")),
            })
            .collect(),
        Err(reason) => reqs.iter().map(|r| degrade(r, reason.clone())).collect(),
    }
}
