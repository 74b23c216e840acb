//! MiniLang: integer-only functions with assignment, `if`, `while`, calls
//! and `return`.
//!
//! ```text
//! module := fndef*
//! fndef  := ("// phase: " label)? "fn" ident "(" params? ")" block
//! stmt   := ident "=" expr ";" | ident "=" ident "(" args? ")" ";"
//!         | ident "(" args? ")" ";" | "return" expr ";"
//!         | "return" ident "(" args? ")" ";"
//!         | "if" "(" cond ")" block ("else" (block | if))?
//!         | "while" "(" cond ")" block
//! ```
//!
//! `return g(x);` is sugar for a call into a fresh temporary followed by a
//! return of that temporary. Falling off the end of a body returns 0.

use std::collections::BTreeSet;
use std::fmt;

use crate::logic::{ArithOp, CmpOp, Formula, Term};

/// Expressions are integer terms.
pub type MiniExpr = Term;
/// Conditions are predicate-free formulas.
pub type MiniCond = Formula;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    /// 1-based source line of the statement's first token.
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Assign {
        var: String,
        expr: MiniExpr,
    },
    If {
        cond: MiniCond,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
    While {
        cond: MiniCond,
        body: Vec<Stmt>,
    },
    Call {
        target: Option<String>,
        callee: String,
        args: Vec<MiniExpr>,
        /// Pre-order ordinal of this call within its function.
        site: usize,
    },
    Return(MiniExpr),
    Seq(Vec<Stmt>),
}

impl Stmt {
    pub fn new(kind: StmtKind, line: usize) -> Stmt {
        Stmt { kind, line }
    }
}

/// Name of the temporary that receives the value of `return g(..);`.
pub fn return_temp(site: usize) -> String {
    format!("ret__s{site}")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub phase: Option<String>,
    pub start_line: usize,
    pub end_line: usize,
    /// Exact source text from `fn` to the closing brace.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MiniError {
    #[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: variable `{var}` in function `{function}` may be read before assignment")]
    UseBeforeAssign { function: String, var: String, line: usize },
    #[error("duplicate function name `{0}`")]
    DuplicateFunction(String),
    #[error("line {line}: `{function}` calls undefined function `{callee}`")]
    UndefinedFunction { function: String, callee: String, line: usize },
    #[error("line {line}: call to `{callee}` passes {given} arguments, expected {expected}")]
    Arity {
        callee: String,
        given: usize,
        expected: usize,
        line: usize,
    },
    #[error("line {line}: identifier `{name}` is reserved")]
    Reserved { name: String, line: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokKind {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    Phase(String),
    Eof,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Ident(s) => write!(f, "`{s}`"),
            TokKind::Int(v) => write!(f, "`{v}`"),
            TokKind::Punct(p) => write!(f, "`{p}`"),
            TokKind::Phase(p) => write!(f, "phase pragma `{p}`"),
            TokKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub line: usize,
    pub col: usize,
    pub offset: usize,
}

const PUNCTS: [&str; 21] = [
    "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", ",", ";", "=", "<", ">", "+", "-", "*", "/", "!", ":",
];

const KEYWORDS: [&str; 7] = ["fn", "if", "else", "while", "return", "true", "false"];

/// Splits source text into tokens. `// phase: <label>` comments become
/// [`TokKind::Phase`]; other comments are dropped.
pub fn tokenize(source: &str) -> Result<Vec<Token>, MiniError> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut line_start) = (0usize, 1usize, 0usize);
    while i < bytes.len() {
        let c = bytes[i];
        let col = i - line_start + 1;
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if source[i..].starts_with("//") {
            let end = source[i..].find('\n').map_or(bytes.len(), |n| i + n);
            let body = source[i + 2..end].trim();
            if let Some(label) = body.strip_prefix("phase:") {
                let label = label.trim();
                if !label.is_empty() {
                    out.push(Token {
                        kind: TokKind::Phase(label.to_string()),
                        line,
                        col,
                        offset: i,
                    });
                }
            }
            i = end;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let value = source[start..i].parse::<i64>().map_err(|_| MiniError::Syntax {
                line,
                col,
                expected: "integer literal that fits in 64 bits".into(),
                found: source[start..i].to_string(),
            })?;
            out.push(Token {
                kind: TokKind::Int(value),
                line,
                col,
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokKind::Ident(source[start..i].to_string()),
                line,
                col,
                offset: start,
            });
            continue;
        }
        match PUNCTS.iter().find(|p| source[i..].starts_with(**p)) {
            Some(p) => {
                i += p.len();
                out.push(Token {
                    kind: TokKind::Punct(p),
                    line,
                    col,
                    offset: start,
                });
            }
            None => {
                let ch = source[i..].chars().next().unwrap_or('?');
                return Err(MiniError::Syntax {
                    line,
                    col,
                    expected: "a token".into(),
                    found: format!("`{ch}`"),
                });
            }
        }
    }
    let col = bytes.len() - line_start + 1;
    out.push(Token {
        kind: TokKind::Eof,
        line,
        col,
        offset: bytes.len(),
    });
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    site: usize,
    allow_reserved: bool,
}

type PResult<T> = Result<T, MiniError>;

impl<'a> Parser<'a> {
    fn tok(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn kind_at(&self, ahead: usize) -> &TokKind {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn fail<T>(&self, expected: &str) -> PResult<T> {
        let t = self.tok();
        Err(MiniError::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.to_string(),
            found: t.kind.to_string(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.tok().kind, TokKind::Punct(q) if q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.tok().kind, TokKind::Ident(s) if s == kw)
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.is_punct(p) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(&format!("`{p}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match &self.tok().kind {
            TokKind::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                let line = self.tok().line;
                if !self.allow_reserved && (s == "result" || s.contains("__")) {
                    return Err(MiniError::Reserved { name: s, line });
                }
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail(what),
        }
    }

    fn function(&mut self) -> PResult<FunctionDef> {
        let mut phase = None;
        while let TokKind::Phase(label) = &self.tok().kind {
            phase = Some(label.clone());
            self.pos += 1;
        }
        let start = self.tok().clone();
        self.expect_kw("fn")?;
        let name = self.ident("function name")?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                params.push(self.ident("parameter name")?);
                if self.is_punct(":") {
                    self.pos += 1;
                    self.expect_kw("int").or_else(|_| self.fail("scalar kind `int`"))?;
                }
                if self.is_punct(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        self.site = 0;
        let body = self.block()?;
        let end = &self.toks[self.pos - 1];
        let source = self.src[start.offset..end.offset + 1].to_string();
        Ok(FunctionDef {
            name,
            params,
            body,
            phase,
            start_line: start.line,
            end_line: end.line,
            source,
        })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.is_punct("}") {
            if matches!(self.tok().kind, TokKind::Eof) {
                return self.fail("`}`");
            }
            out.extend(self.stmt()?);
        }
        self.pos += 1;
        Ok(out)
    }

    fn args(&mut self) -> PResult<Vec<Term>> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.is_punct(")") {
            loop {
                args.push(self.expr()?);
                if self.is_punct(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn next_site(&mut self) -> usize {
        let s = self.site;
        self.site += 1;
        s
    }

    fn stmt(&mut self) -> PResult<Vec<Stmt>> {
        let line = self.tok().line;
        if self.is_kw("if") {
            return Ok(vec![self.if_stmt()?]);
        }
        if self.is_kw("while") {
            self.pos += 1;
            self.expect_punct("(")?;
            let cond = self.cond()?;
            self.expect_punct(")")?;
            let body = self.block()?;
            return Ok(vec![Stmt::new(StmtKind::While { cond, body }, line)]);
        }
        if self.is_kw("return") {
            self.pos += 1;
            let is_call = matches!(self.kind_at(0), TokKind::Ident(s) if !KEYWORDS.contains(&s.as_str()))
                && matches!(self.kind_at(1), TokKind::Punct("("));
            if is_call {
                let callee = self.ident("function name")?;
                let args = self.args()?;
                self.expect_punct(";")?;
                let site = self.next_site();
                let tmp = return_temp(site);
                return Ok(vec![
                    Stmt::new(
                        StmtKind::Call {
                            target: Some(tmp.clone()),
                            callee,
                            args,
                            site,
                        },
                        line,
                    ),
                    Stmt::new(StmtKind::Return(Term::Var(tmp)), line),
                ]);
            }
            let e = self.expr()?;
            self.expect_punct(";")?;
            return Ok(vec![Stmt::new(StmtKind::Return(e), line)]);
        }
        let name = self.ident("statement")?;
        if self.is_punct("(") {
            let args = self.args()?;
            self.expect_punct(";")?;
            let site = self.next_site();
            return Ok(vec![Stmt::new(
                StmtKind::Call {
                    target: None,
                    callee: name,
                    args,
                    site,
                },
                line,
            )]);
        }
        self.expect_punct("=")?;
        let is_call = matches!(self.kind_at(0), TokKind::Ident(s) if !KEYWORDS.contains(&s.as_str()))
            && matches!(self.kind_at(1), TokKind::Punct("("));
        if is_call {
            let callee = self.ident("function name")?;
            let args = self.args()?;
            self.expect_punct(";")?;
            let site = self.next_site();
            return Ok(vec![Stmt::new(
                StmtKind::Call {
                    target: Some(name),
                    callee,
                    args,
                    site,
                },
                line,
            )]);
        }
        let expr = self.expr()?;
        self.expect_punct(";")?;
        Ok(vec![Stmt::new(StmtKind::Assign { var: name, expr }, line)])
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let line = self.tok().line;
        self.expect_kw("if")?;
        self.expect_punct("(")?;
        let cond = self.cond()?;
        self.expect_punct(")")?;
        let then_branch = self.block()?;
        let else_branch = if self.is_kw("else") {
            self.pos += 1;
            if self.is_kw("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::new(
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            },
            line,
        ))
    }

    fn cond(&mut self) -> PResult<Formula> {
        let mut parts = vec![self.cond_and()?];
        while self.is_punct("||") {
            self.pos += 1;
            parts.push(self.cond_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::Or(parts) })
    }

    fn cond_and(&mut self) -> PResult<Formula> {
        let mut parts = vec![self.cond_not()?];
        while self.is_punct("&&") {
            self.pos += 1;
            parts.push(self.cond_not()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::And(parts) })
    }

    fn cond_not(&mut self) -> PResult<Formula> {
        if self.is_punct("!") {
            self.pos += 1;
            return Ok(Formula::Not(Box::new(self.cond_not()?)));
        }
        if self.is_kw("true") {
            self.pos += 1;
            return Ok(Formula::Bool(true));
        }
        if self.is_kw("false") {
            self.pos += 1;
            return Ok(Formula::Bool(false));
        }
        let save = self.pos;
        match self.comparison() {
            Ok(f) => Ok(f),
            Err(e) => {
                self.pos = save;
                if !self.is_punct("(") {
                    return Err(e);
                }
                self.pos += 1;
                let inner = self.cond()?;
                self.expect_punct(")")?;
                Ok(inner)
            }
        }
    }

    fn comparison(&mut self) -> PResult<Formula> {
        let lhs = self.expr()?;
        let op = match self.tok().kind {
            TokKind::Punct("<") => CmpOp::Lt,
            TokKind::Punct("<=") => CmpOp::Le,
            TokKind::Punct("==") => CmpOp::Eq,
            TokKind::Punct("!=") => CmpOp::Ne,
            TokKind::Punct(">=") => CmpOp::Ge,
            TokKind::Punct(">") => CmpOp::Gt,
            _ => return self.fail("comparison operator"),
        };
        self.pos += 1;
        let rhs = self.expr()?;
        Ok(Formula::Cmp(op, lhs, rhs))
    }

    fn expr(&mut self) -> PResult<Term> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.tok().kind {
                TokKind::Punct("+") => ArithOp::Add,
                TokKind::Punct("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Term::bin(op, lhs, self.product()?);
        }
    }

    fn product(&mut self) -> PResult<Term> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.tok().kind {
                TokKind::Punct("*") => ArithOp::Mul,
                TokKind::Punct("/") => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Term::bin(op, lhs, self.factor()?);
        }
    }

    fn factor(&mut self) -> PResult<Term> {
        match self.tok().kind.clone() {
            TokKind::Int(v) => {
                self.pos += 1;
                Ok(Term::Int(v))
            }
            TokKind::Punct("-") => {
                self.pos += 1;
                if let TokKind::Int(v) = self.tok().kind {
                    self.pos += 1;
                    return Ok(Term::Int(v.wrapping_neg()));
                }
                Ok(Term::bin(ArithOp::Mul, Term::Int(-1), self.factor()?))
            }
            TokKind::Punct("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            TokKind::Ident(_) => Ok(Term::Var(self.ident("expression")?)),
            _ => self.fail("expression"),
        }
    }
}

/// Parses every function definition in `source`, in source order, and runs
/// the definite-assignment check on each. Callee resolution is left to the
/// caller.
pub fn parse_functions(source: &str) -> Result<Vec<FunctionDef>, MiniError> {
    let mut p = Parser {
        src: source,
        toks: tokenize(source)?,
        pos: 0,
        site: 0,
        allow_reserved: false,
    };
    let mut out = Vec::new();
    loop {
        // A trailing phase pragma without a function is ignored.
        while matches!(p.tok().kind, TokKind::Phase(_)) && matches!(p.kind_at(1), TokKind::Eof | TokKind::Phase(_)) {
            p.pos += 1;
        }
        if matches!(p.tok().kind, TokKind::Eof) {
            break;
        }
        let f = p.function()?;
        check_definite_assignment(&f)?;
        out.push(f);
    }
    Ok(out)
}

/// Parses a single function definition (trailing text is an error).
pub fn parse_function(source: &str) -> Result<FunctionDef, MiniError> {
    let mut fns = parse_functions(source)?;
    if fns.len() != 1 {
        return Err(MiniError::Syntax {
            line: 1,
            col: 1,
            expected: "exactly one function definition".into(),
            found: format!("{} definitions", fns.len()),
        });
    }
    Ok(fns.pop().unwrap())
}

/// Parses a bare statement list, as produced by [`render_stmts`]. Internal
/// temporaries are accepted and no definite-assignment check is made.
pub fn parse_block(source: &str) -> Result<Vec<Stmt>, MiniError> {
    let mut p = Parser {
        src: source,
        toks: tokenize(source)?,
        pos: 0,
        site: 0,
        allow_reserved: true,
    };
    let mut out = Vec::new();
    while !matches!(p.tok().kind, TokKind::Eof) {
        out.extend(p.stmt()?);
    }
    Ok(out)
}

/// `None` marks an unreachable point (every variable counts as assigned).
type Assigned = Option<BTreeSet<String>>;

fn check_definite_assignment(f: &FunctionDef) -> Result<(), MiniError> {
    let init: BTreeSet<String> = f.params.iter().cloned().collect();
    da_seq(&f.name, &f.body, Some(init)).map(|_| ())
}

fn da_reads(function: &str, vars: BTreeSet<String>, assigned: &Assigned, line: usize) -> Result<(), MiniError> {
    if let Some(set) = assigned {
        if let Some(v) = vars.into_iter().find(|v| !set.contains(v)) {
            return Err(MiniError::UseBeforeAssign {
                function: function.to_string(),
                var: v,
                line,
            });
        }
    }
    Ok(())
}

fn da_seq(function: &str, stmts: &[Stmt], mut assigned: Assigned) -> Result<Assigned, MiniError> {
    for s in stmts {
        assigned = da_stmt(function, s, assigned)?;
    }
    Ok(assigned)
}

fn da_stmt(function: &str, s: &Stmt, assigned: Assigned) -> Result<Assigned, MiniError> {
    match &s.kind {
        StmtKind::Assign { var, expr } => {
            da_reads(function, expr.vars(), &assigned, s.line)?;
            Ok(assigned.map(|mut a| {
                a.insert(var.clone());
                a
            }))
        }
        StmtKind::Call { target, args, .. } => {
            for a in args {
                da_reads(function, a.vars(), &assigned, s.line)?;
            }
            Ok(assigned.map(|mut a| {
                if let Some(t) = target {
                    a.insert(t.clone());
                }
                a
            }))
        }
        StmtKind::Return(e) => {
            da_reads(function, e.vars(), &assigned, s.line)?;
            Ok(None)
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            da_reads(function, cond.vars(), &assigned, s.line)?;
            let t = da_seq(function, then_branch, assigned.clone())?;
            let e = da_seq(function, else_branch, assigned)?;
            Ok(match (t, e) {
                (None, x) | (x, None) => x,
                (Some(a), Some(b)) => Some(a.intersection(&b).cloned().collect()),
            })
        }
        StmtKind::While { cond, body } => {
            da_reads(function, cond.vars(), &assigned, s.line)?;
            da_seq(function, body, assigned.clone())?;
            if cond == &Formula::Bool(true) {
                // Only a return can leave `while (true)`.
                return Ok(None);
            }
            Ok(assigned)
        }
        StmtKind::Seq(items) => da_seq(function, items, assigned),
    }
}

/// Every call statement in `stmts`, in pre-order.
pub fn calls_in(stmts: &[Stmt]) -> Vec<&Stmt> {
    let mut out = Vec::new();
    walk(stmts, &mut |s| {
        if matches!(s.kind, StmtKind::Call { .. }) {
            out.push(s);
        }
    });
    out
}

/// Visits statements in pre-order.
pub fn walk<'a>(stmts: &'a [Stmt], visit: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        visit(s);
        match &s.kind {
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                walk(then_branch, visit);
                walk(else_branch, visit);
            }
            StmtKind::While { body, .. } => walk(body, visit),
            StmtKind::Seq(items) => walk(items, visit),
            _ => {}
        }
    }
}

/// Variables assigned anywhere in `stmts` (including call targets).
pub fn assigned_vars(stmts: &[Stmt]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    walk(stmts, &mut |s| match &s.kind {
        StmtKind::Assign { var, .. } => {
            out.insert(var.clone());
        }
        StmtKind::Call { target: Some(t), .. } => {
            out.insert(t.clone());
        }
        _ => {}
    });
    out
}

fn cond_source(c: &Formula) -> String {
    match c {
        Formula::Bool(b) => b.to_string(),
        Formula::Cmp(op, l, r) => {
            let sym = if *op == CmpOp::Eq { "==" } else { op.symbol() };
            format!("{l} {sym} {r}")
        }
        Formula::Not(inner) => format!("!({})", cond_source(inner)),
        Formula::And(items) => items.iter().map(|i| format!("({})", cond_source(i))).collect::<Vec<_>>().join(" && "),
        Formula::Or(items) => items.iter().map(|i| format!("({})", cond_source(i))).collect::<Vec<_>>().join(" || "),
        Formula::Pred(..) => "false".into(),
    }
}

fn render_into(stmts: &[Stmt], depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { var, expr } => out.push_str(&format!("{pad}{var} = {expr};\n")),
            StmtKind::Call {
                target, callee, args, ..
            } => {
                let args = args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ");
                match target {
                    Some(t) => out.push_str(&format!("{pad}{t} = {callee}({args});\n")),
                    None => out.push_str(&format!("{pad}{callee}({args});\n")),
                }
            }
            StmtKind::Return(e) => out.push_str(&format!("{pad}return {e};\n")),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                out.push_str(&format!("{pad}if ({}) {{\n", cond_source(cond)));
                render_into(then_branch, depth + 1, out);
                if else_branch.is_empty() {
                    out.push_str(&format!("{pad}}}\n"));
                } else {
                    out.push_str(&format!("{pad}}} else {{\n"));
                    render_into(else_branch, depth + 1, out);
                    out.push_str(&format!("{pad}}}\n"));
                }
            }
            StmtKind::While { cond, body } => {
                out.push_str(&format!("{pad}while ({}) {{\n", cond_source(cond)));
                render_into(body, depth + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
            StmtKind::Seq(items) => render_into(items, depth, out),
        }
    }
}

/// Renders statements as MiniLang source, one statement per line.
pub fn render_stmts(stmts: &[Stmt]) -> String {
    let mut out = String::new();
    render_into(stmts, 0, &mut out);
    out
}

/// Renders a function definition as MiniLang source. Internal temporaries
/// (`return g(..)` desugaring) are not re-sugared, so this is intended for
/// generated programs that never use them.
pub fn render_function(name: &str, params: &[String], body: &[Stmt]) -> String {
    let mut out = format!("fn {name}({}) {{\n", params.join(", "));
    render_into(body, 1, &mut out);
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_calls_returns_and_sites() {
        let fns = parse_functions(
            "// phase: lex\nfn f(x) {\n  y = g(x + 1);\n  h(y);\n  if (y > 0 && !(x == 2)) { return g(y); }\n  return y;\n}",
        )
        .unwrap();
        let f = &fns[0];
        assert_eq!(f.phase.as_deref(), Some("lex"));
        assert_eq!(f.start_line, 2);
        assert_eq!(f.end_line, 7);
        let calls = calls_in(&f.body);
        let sites: Vec<usize> = calls
            .iter()
            .map(|s| match &s.kind {
                StmtKind::Call { site, .. } => *site,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(sites, vec![0, 1, 2]);
        assert!(f.source.starts_with("fn f(x)") && f.source.ends_with('}'));
    }

    #[test]
    fn syntax_errors_report_position_and_expectation() {
        let err = parse_functions("fn f(x) {\n  y = x +;\n}").unwrap_err();
        match err {
            MiniError::Syntax { line, col, expected, .. } => {
                assert_eq!((line, col), (2, 10));
                assert_eq!(expected, "expression");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn definite_assignment_is_path_sensitive() {
        assert!(parse_functions("fn f(x) { if (x > 0) { y = 1; } else { y = 2; } return y; }").is_ok());
        assert!(parse_functions("fn f(x) { if (x > 0) { return 1; } else { y = 2; } return y; }").is_ok());
        let err = parse_functions("fn f(x) { if (x > 0) { y = 1; } return y; }").unwrap_err();
        assert!(matches!(err, MiniError::UseBeforeAssign { ref var, .. } if var == "y"));
        let err = parse_functions("fn f(x) { while (x > 0) { z = 1; x = x - 1; } return z; }").unwrap_err();
        assert!(matches!(err, MiniError::UseBeforeAssign { .. }));
    }

    #[test]
    fn reserved_identifiers_are_rejected() {
        assert!(matches!(
            parse_functions("fn f(result) { return 0; }").unwrap_err(),
            MiniError::Reserved { .. }
        ));
        assert!(matches!(
            parse_functions("fn f(x) { a__1 = x; return a__1; }").unwrap_err(),
            MiniError::Reserved { .. }
        ));
    }

    #[test]
    fn blocks_keep_internal_temporaries() {
        let f = parse_function("fn f(x) { y = x + 1; return g(y); }").unwrap();
        let text = render_stmts(&f.body);
        assert!(text.contains("ret__s0 = g(y);"));
        assert_eq!(parse_block(&text).unwrap().len(), 3);
    }

    #[test]
    fn render_then_parse_is_stable() {
        let src = "fn f(a, b) { c = a * (b - 1); if (c >= 2 || a != b) { c = c / 2; } else { g(c); } while (c > 0) { c = c - 1; } return -c; }";
        let f = parse_function(src).unwrap();
        let again = parse_function(&render_function(&f.name, &f.params, &f.body)).unwrap();
        let strip = |s: &[Stmt]| format!("{:?}", s).replace(char::is_numeric, "");
        assert_eq!(strip(&f.body), strip(&again.body));
    }
}
