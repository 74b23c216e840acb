//! The system under analysis: a parsed MiniLang module or a call-graph
//! manifest for code in another language.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::minilang::{self, calls_in, MiniError, Stmt, StmtKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Int,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ScalarKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FunctionBody {
    Mini(Vec<Stmt>),
    Opaque(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub file: String,
    pub start_line: usize,
    pub end_line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionRecord {
    pub name: String,
    pub params: Vec<Param>,
    pub body: FunctionBody,
    /// Source text of the whole definition.
    pub source: String,
    /// In-codebase callees.
    pub callees: BTreeSet<String>,
    /// Callees outside the codebase (library calls, unresolved indirect calls).
    pub external_callees: BTreeSet<String>,
    pub is_entry: bool,
    pub phase: Option<String>,
    pub span: Span,
}

impl FunctionRecord {
    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn mini_body(&self) -> Option<&[Stmt]> {
        match &self.body {
            FunctionBody::Mini(b) => Some(b),
            FunctionBody::Opaque(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Minilang,
    Manifest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codebase {
    pub functions: BTreeMap<String, FunctionRecord>,
    pub language: Language,
    /// Language name reported by a manifest (`minilang` for parsed modules).
    pub source_language: String,
    pub domain_docs: Vec<(String, String)>,
}

#[derive(Debug, thiserror::Error)]
pub enum CodebaseError {
    #[error(transparent)]
    Mini(#[from] MiniError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("function `{function}` lists callee `{callee}` which is neither defined nor marked external")]
    DanglingCallee { function: String, callee: String },
    #[error("duplicate function name `{0}`")]
    Duplicate(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

impl Codebase {
    pub fn empty(language: Language) -> Codebase {
        Codebase {
            functions: BTreeMap::new(),
            language,
            source_language: "minilang".into(),
            domain_docs: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&FunctionRecord, CodebaseError> {
        self.functions
            .get(name)
            .ok_or_else(|| CodebaseError::UnknownFunction(name.to_string()))
    }

    pub fn callees_of(&self, name: &str) -> Result<&BTreeSet<String>, CodebaseError> {
        Ok(&self.get(name)?.callees)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Recomputes `is_entry` from the in-codebase call edges.
    fn mark_entries(&mut self) {
        let called: BTreeSet<String> = self.functions.values().flat_map(|f| f.callees.iter().cloned()).collect();
        for f in self.functions.values_mut() {
            f.is_entry = !called.contains(&f.name);
        }
    }
}

pub fn callees_of<'a>(cb: &'a Codebase, name: &str) -> Result<&'a BTreeSet<String>, CodebaseError> {
    cb.callees_of(name)
}

/// Parses a MiniLang module. `file` is recorded in every span.
pub fn parse_minilang_module(source: &str, file: &str) -> Result<Codebase, CodebaseError> {
    let defs = minilang::parse_functions(source)?;
    let mut arity = BTreeMap::new();
    for d in &defs {
        if arity.insert(d.name.clone(), d.params.len()).is_some() {
            return Err(MiniError::DuplicateFunction(d.name.clone()).into());
        }
    }
    let mut cb = Codebase::empty(Language::Minilang);
    for d in defs {
        let mut callees = BTreeSet::new();
        for call in calls_in(&d.body) {
            if let StmtKind::Call { callee, args, .. } = &call.kind {
                let expected = *arity.get(callee).ok_or_else(|| MiniError::UndefinedFunction {
                    function: d.name.clone(),
                    callee: callee.clone(),
                    line: call.line,
                })?;
                if expected != args.len() {
                    return Err(MiniError::Arity {
                        callee: callee.clone(),
                        given: args.len(),
                        expected,
                        line: call.line,
                    }
                    .into());
                }
                callees.insert(callee.clone());
            }
        }
        let record = FunctionRecord {
            name: d.name.clone(),
            params: d
                .params
                .iter()
                .map(|p| Param {
                    name: p.clone(),
                    kind: ScalarKind::Int,
                })
                .collect(),
            body: FunctionBody::Mini(d.body),
            source: d.source,
            callees,
            external_callees: BTreeSet::new(),
            is_entry: false,
            phase: d.phase,
            span: Span {
                file: file.to_string(),
                start_line: d.start_line,
                end_line: d.end_line,
            },
        };
        cb.functions.insert(d.name, record);
    }
    cb.mark_entries();
    Ok(cb)
}

pub fn load_minilang_file(path: &Path) -> Result<Codebase, CodebaseError> {
    let text = read(path)?;
    let file = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    parse_minilang_module(&text, &file)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub language: String,
    pub functions: Vec<ManifestFunction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFunction {
    pub name: String,
    pub file: String,
    pub start_line: usize,
    pub end_line: usize,
    pub body: String,
    #[serde(default)]
    pub callees: Vec<String>,
    #[serde(default)]
    pub external_callees: Vec<String>,
    #[serde(default)]
    pub phase: Option<String>,
}

fn read(path: &Path) -> Result<String, CodebaseError> {
    std::fs::read_to_string(path).map_err(|source| CodebaseError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Builds a codebase from manifest JSON text.
pub fn parse_callgraph_manifest(text: &str) -> Result<Codebase, CodebaseError> {
    let manifest: Manifest = serde_json::from_str(text)?;
    let mut cb = Codebase::empty(Language::Manifest);
    cb.source_language = manifest.language.clone();
    let names: BTreeSet<&str> = manifest.functions.iter().map(|f| f.name.as_str()).collect();
    for mf in &manifest.functions {
        let external: BTreeSet<String> = mf.external_callees.iter().cloned().collect();
        let mut callees = BTreeSet::new();
        for c in &mf.callees {
            if names.contains(c.as_str()) {
                callees.insert(c.clone());
            } else if !external.contains(c) {
                return Err(CodebaseError::DanglingCallee {
                    function: mf.name.clone(),
                    callee: c.clone(),
                });
            }
        }
        let record = FunctionRecord {
            name: mf.name.clone(),
            params: Vec::new(),
            body: FunctionBody::Opaque(mf.body.clone()),
            source: mf.body.clone(),
            callees,
            external_callees: external,
            is_entry: false,
            phase: mf.phase.clone(),
            span: Span {
                file: mf.file.clone(),
                start_line: mf.start_line,
                end_line: mf.end_line,
            },
        };
        if cb.functions.insert(mf.name.clone(), record).is_some() {
            return Err(CodebaseError::Duplicate(mf.name.clone()));
        }
    }
    cb.mark_entries();
    Ok(cb)
}

pub fn load_callgraph_manifest(path: &Path) -> Result<Codebase, CodebaseError> {
    parse_callgraph_manifest(&read(path)?)
}

/// Serializes any codebase in manifest form (bodies become their source text).
pub fn to_manifest(cb: &Codebase) -> Manifest {
    Manifest {
        language: cb.source_language.clone(),
        functions: cb
            .functions
            .values()
            .map(|f| ManifestFunction {
                name: f.name.clone(),
                file: f.span.file.clone(),
                start_line: f.span.start_line,
                end_line: f.span.end_line,
                body: f.source.clone(),
                callees: f.callees.iter().chain(f.external_callees.iter()).cloned().collect(),
                external_callees: f.external_callees.iter().cloned().collect(),
                phase: f.phase.clone(),
            })
            .collect(),
    }
}

/// Loads a domain-knowledge directory: every regular file becomes one
/// document keyed by its file stem, in name order.
pub fn load_domain_docs(dir: &Path) -> Result<Vec<(String, String)>, CodebaseError> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|source| CodebaseError::Io {
            path: dir.display().to_string(),
            source,
        })?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut out = Vec::new();
    for p in entries {
        let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.push((id, read(&p)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_main_is_entry() {
        let cb = parse_minilang_module("fn main(){ return 0; }", "m.mini").unwrap();
        assert_eq!(cb.len(), 1);
        assert!(cb.functions["main"].is_entry);
    }

    #[test]
    fn callee_edges_and_entries() {
        let cb = parse_minilang_module("fn f(x){ return g(x); } fn g(y){ return y; }", "m.mini").unwrap();
        assert_eq!(cb.callees_of("f").unwrap(), &BTreeSet::from(["g".to_string()]));
        assert!(!cb.functions["g"].is_entry);
        assert!(cb.callees_of("g").unwrap().is_empty());
        assert!(matches!(cb.callees_of("nope"), Err(CodebaseError::UnknownFunction(_))));
    }

    #[test]
    fn module_level_errors() {
        assert!(matches!(
            parse_minilang_module("fn f(){ return 0; } fn f(){ return 1; }", "m"),
            Err(CodebaseError::Mini(MiniError::DuplicateFunction(_)))
        ));
        assert!(matches!(
            parse_minilang_module("fn f(){ return g(); }", "m"),
            Err(CodebaseError::Mini(MiniError::UndefinedFunction { .. }))
        ));
        assert!(matches!(
            parse_minilang_module("fn f(){ return g(1); } fn g(a, b){ return a; }", "m"),
            Err(CodebaseError::Mini(MiniError::Arity { .. }))
        ));
    }

    #[test]
    fn self_recursion_keeps_self_edge() {
        let cb = parse_minilang_module("fn f(n){ if (n > 0) { return f(n - 1); } return 0; }", "m").unwrap();
        assert!(cb.callees_of("f").unwrap().contains("f"));
        assert!(!cb.functions["f"].is_entry);
    }

    #[test]
    fn manifest_entries_and_errors() {
        let cb = parse_callgraph_manifest(r#"{"language":"c","functions":[]}"#).unwrap();
        assert!(cb.is_empty());
        let text = r#"{"language":"c","functions":[
            {"name":"f","file":"a.c","start_line":1,"end_line":3,"body":"f()","callees":["g","printf"],"external_callees":["printf"],"phase":null},
            {"name":"g","file":"a.c","start_line":4,"end_line":6,"body":"g()","callees":[],"external_callees":[],"phase":null}]}"#;
        let cb = parse_callgraph_manifest(text).unwrap();
        assert!(cb.functions["f"].is_entry);
        assert!(!cb.functions["g"].is_entry);
        assert_eq!(cb.functions["f"].external_callees, BTreeSet::from(["printf".to_string()]));
        let dangling = text.replace(r#""external_callees":["printf"]"#, r#""external_callees":[]"#);
        assert!(matches!(
            parse_callgraph_manifest(&dangling),
            Err(CodebaseError::DanglingCallee { .. })
        ));
        assert!(matches!(parse_callgraph_manifest("{"), Err(CodebaseError::Json(_))));
    }
}
