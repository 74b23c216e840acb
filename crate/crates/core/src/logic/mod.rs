//! Integer terms and quantifier-free formulas.
//!
//! The same term language is used for MiniLang expressions and for the
//! formal half of a [`Condition`](crate::spec::Condition). Arithmetic wraps
//! on overflow; division truncates toward zero and is undefined for a zero
//! divisor. An atom whose operands are undefined evaluates to `false`.

mod compile;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use compile::{CompiledFormula, CompiledTerm};
pub use parse::{parse_formula, parse_term, FormulaParseError};

/// A variable assignment.
pub type Valuation = BTreeMap<String, i64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub fn apply(self, lhs: i64, rhs: i64) -> Option<i64> {
        match self {
            ArithOp::Add => Some(lhs.wrapping_add(rhs)),
            ArithOp::Sub => Some(lhs.wrapping_sub(rhs)),
            ArithOp::Mul => Some(lhs.wrapping_mul(rhs)),
            ArithOp::Div => {
                if rhs == 0 {
                    None
                } else {
                    Some(lhs.wrapping_div(rhs))
                }
            }
        }
    }

    fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Gt => CmpOp::Le,
        }
    }
}

/// Integer-valued term: literal, variable or binary arithmetic.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Int(i64),
    Var(String),
    Bin(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn bin(op: ArithOp, lhs: Term, rhs: Term) -> Term {
        Term::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn eval(&self, env: &Valuation) -> Option<i64> {
        match self {
            Term::Int(v) => Some(*v),
            Term::Var(name) => env.get(name).copied(),
            Term::Bin(op, lhs, rhs) => op.apply(lhs.eval(env)?, rhs.eval(env)?),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Int(_) => {}
            Term::Var(name) => {
                out.insert(name.clone());
            }
            Term::Bin(_, lhs, rhs) => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn mentions(&self, var: &str) -> bool {
        match self {
            Term::Int(_) => false,
            Term::Var(name) => name == var,
            Term::Bin(_, lhs, rhs) => lhs.mentions(var) || rhs.mentions(var),
        }
    }

    /// Simultaneous substitution of variables by terms.
    pub fn subst(&self, map: &BTreeMap<String, Term>) -> Term {
        match self {
            Term::Int(_) => self.clone(),
            Term::Var(name) => map.get(name).cloned().unwrap_or_else(|| self.clone()),
            Term::Bin(op, lhs, rhs) => Term::bin(*op, lhs.subst(map), rhs.subst(map)),
        }
    }

    pub fn subst_one(&self, var: &str, term: &Term) -> Term {
        let mut map = BTreeMap::new();
        map.insert(var.to_string(), term.clone());
        self.subst(&map)
    }

    pub fn rename(&self, from: &str, to: &str) -> Term {
        self.subst_one(from, &Term::var(to))
    }

    /// Every right operand of a division, outermost first.
    pub fn divisors(&self) -> Vec<Term> {
        let mut out = Vec::new();
        self.collect_divisors(&mut out);
        out
    }

    fn collect_divisors(&self, out: &mut Vec<Term>) {
        if let Term::Bin(op, lhs, rhs) = self {
            if *op == ArithOp::Div && !matches!(**rhs, Term::Int(v) if v != 0) {
                out.push((**rhs).clone());
            }
            lhs.collect_divisors(out);
            rhs.collect_divisors(out);
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_prec: u8, right_of_same: bool) -> fmt::Result {
        match self {
            Term::Int(v) => write!(f, "{v}"),
            Term::Var(name) => f.write_str(name),
            Term::Bin(op, lhs, rhs) => {
                let prec = op.precedence();
                let parens = prec < min_prec || (prec == min_prec && right_of_same);
                if parens {
                    f.write_str("(")?;
                }
                lhs.fmt_prec(f, prec, false)?;
                write!(f, " {} ", op.symbol())?;
                rhs.fmt_prec(f, prec, true)?;
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0, false)
    }
}

/// Quantifier-free formula over integer terms.
///
/// `Pred` is an uninterpreted predicate standing in for a concept that has no
/// arithmetic definition; any formula containing one is imprecise.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Bool(bool),
    Cmp(CmpOp, Term, Term),
    Pred(String, Vec<Term>),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn tt() -> Formula {
        Formula::Bool(true)
    }

    pub fn cmp(op: CmpOp, lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(op, lhs, rhs)
    }

    pub fn eq(lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(CmpOp::Eq, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::Bool(b) => Formula::Bool(!b),
            Formula::Not(inner) => *inner,
            other => Formula::Not(Box::new(other)),
        }
    }

    /// Conjunction with flattening, unit elimination and duplicate removal.
    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out: Vec<Formula> = Vec::new();
        for part in parts {
            let items = match part {
                Formula::And(items) => items,
                other => vec![other],
            };
            for item in items {
                match item {
                    Formula::Bool(true) => {}
                    Formula::Bool(false) => return Formula::Bool(false),
                    other => {
                        if !out.contains(&other) {
                            out.push(other);
                        }
                    }
                }
            }
        }
        match out.len() {
            0 => Formula::Bool(true),
            1 => out.pop().expect("one element"),
            _ => Formula::And(out),
        }
    }

    /// Disjunction with flattening, unit elimination and duplicate removal.
    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out: Vec<Formula> = Vec::new();
        for part in parts {
            let items = match part {
                Formula::Or(items) => items,
                other => vec![other],
            };
            for item in items {
                match item {
                    Formula::Bool(false) => {}
                    Formula::Bool(true) => return Formula::Bool(true),
                    other => {
                        if !out.contains(&other) {
                            out.push(other);
                        }
                    }
                }
            }
        }
        match out.len() {
            0 => Formula::Bool(false),
            1 => out.pop().expect("one element"),
            _ => Formula::Or(out),
        }
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Formula {
        Formula::or([Formula::not(lhs), rhs])
    }

    /// Top-level conjuncts (a non-conjunction is its own single conjunct).
    pub fn conjuncts(&self) -> Vec<Formula> {
        match self {
            Formula::And(items) => items.clone(),
            Formula::Bool(true) => Vec::new(),
            other => vec![other.clone()],
        }
    }

    /// Top-level disjuncts (a non-disjunction is its own single disjunct).
    pub fn disjuncts(&self) -> Vec<Formula> {
        match self {
            Formula::Or(items) => items.clone(),
            Formula::Bool(false) => Vec::new(),
            other => vec![other.clone()],
        }
    }

    pub fn eval(&self, env: &Valuation) -> bool {
        match self {
            Formula::Bool(b) => *b,
            Formula::Cmp(op, lhs, rhs) => match (lhs.eval(env), rhs.eval(env)) {
                (Some(l), Some(r)) => op.holds(l, r),
                _ => false,
            },
            Formula::Pred(..) => false,
            Formula::Not(inner) => !inner.eval(env),
            Formula::And(items) => items.iter().all(|f| f.eval(env)),
            Formula::Or(items) => items.iter().any(|f| f.eval(env)),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Bool(_) => {}
            Formula::Cmp(_, lhs, rhs) => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Formula::Pred(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Formula::Not(inner) => inner.collect_vars(out),
            Formula::And(items) | Formula::Or(items) => items.iter().for_each(|f| f.collect_vars(out)),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn mentions(&self, var: &str) -> bool {
        match self {
            Formula::Bool(_) => false,
            Formula::Cmp(_, lhs, rhs) => lhs.mentions(var) || rhs.mentions(var),
            Formula::Pred(_, args) => args.iter().any(|a| a.mentions(var)),
            Formula::Not(inner) => inner.mentions(var),
            Formula::And(items) | Formula::Or(items) => items.iter().any(|f| f.mentions(var)),
        }
    }

    /// True when the formula contains an uninterpreted predicate.
    pub fn has_uninterpreted(&self) -> bool {
        match self {
            Formula::Pred(..) => true,
            Formula::Bool(_) | Formula::Cmp(..) => false,
            Formula::Not(inner) => inner.has_uninterpreted(),
            Formula::And(items) | Formula::Or(items) => items.iter().any(Formula::has_uninterpreted),
        }
    }

    pub fn subst(&self, map: &BTreeMap<String, Term>) -> Formula {
        match self {
            Formula::Bool(_) => self.clone(),
            Formula::Cmp(op, lhs, rhs) => Formula::Cmp(*op, lhs.subst(map), rhs.subst(map)),
            Formula::Pred(name, args) => Formula::Pred(name.clone(), args.iter().map(|a| a.subst(map)).collect()),
            Formula::Not(inner) => Formula::not(inner.subst(map)),
            Formula::And(items) => Formula::and(items.iter().map(|f| f.subst(map))),
            Formula::Or(items) => Formula::or(items.iter().map(|f| f.subst(map))),
        }
    }

    pub fn subst_one(&self, var: &str, term: &Term) -> Formula {
        let mut map = BTreeMap::new();
        map.insert(var.to_string(), term.clone());
        self.subst(&map)
    }

    pub fn rename(&self, from: &str, to: &str) -> Formula {
        self.subst_one(from, &Term::var(to))
    }

    /// Divisors appearing anywhere in the formula's atoms.
    pub fn divisors(&self) -> Vec<Term> {
        let mut out = Vec::new();
        self.collect_divisors(&mut out);
        out
    }

    fn collect_divisors(&self, out: &mut Vec<Term>) {
        match self {
            Formula::Bool(_) => {}
            Formula::Cmp(_, lhs, rhs) => {
                out.extend(lhs.divisors());
                out.extend(rhs.divisors());
            }
            Formula::Pred(_, args) => args.iter().for_each(|a| out.extend(a.divisors())),
            Formula::Not(inner) => inner.collect_divisors(out),
            Formula::And(items) | Formula::Or(items) => items.iter().for_each(|f| f.collect_divisors(out)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Or(_) => 1,
            Formula::And(_) => 2,
            Formula::Not(_) => 3,
            _ => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parent_prec: u8) -> fmt::Result {
        if self.precedence() <= parent_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Guard conjuncts `d != 0` for every divisor in the given terms.
pub fn definedness<'a>(terms: impl IntoIterator<Item = &'a Term>) -> Vec<Formula> {
    let mut out = Vec::new();
    for term in terms {
        for d in term.divisors() {
            let guard = Formula::cmp(CmpOp::Ne, d, Term::Int(0));
            if !out.contains(&guard) {
                out.push(guard);
            }
        }
    }
    out
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Bool(b) => write!(f, "{b}"),
            Formula::Cmp(op, lhs, rhs) => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Formula::Pred(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Formula::Not(inner) => {
                f.write_str("not ")?;
                inner.fmt_child(f, 2)
            }
            Formula::And(items) | Formula::Or(items) => {
                let (sep, prec) = if matches!(self, Formula::And(_)) { (" and ", 2) } else { (" or ", 1) };
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    item.fmt_child(f, prec)?;
                }
                Ok(())
            }
        }
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_formula(&text).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_term(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(text: &str) -> Formula {
        parse_formula(text).unwrap()
    }

    #[test]
    fn smart_constructors_flatten_and_dedupe() {
        let a = f("x > 0");
        let b = f("y < 3");
        let nested = Formula::and([a.clone(), Formula::and([b.clone(), a.clone()]), Formula::tt()]);
        assert_eq!(nested, Formula::And(vec![a.clone(), b.clone()]));
        assert_eq!(Formula::or([a.clone(), a.clone()]), a);
        assert_eq!(Formula::and([a.clone(), Formula::Bool(false)]), Formula::Bool(false));
        assert_eq!(Formula::or(Vec::new()), Formula::Bool(false));
    }

    #[test]
    fn division_truncates_and_zero_divisor_falsifies_atoms() {
        let mut env = Valuation::new();
        env.insert("a".into(), -7);
        env.insert("b".into(), 2);
        assert_eq!(parse_term("a / b").unwrap().eval(&env), Some(-3));
        env.insert("b".into(), 0);
        assert!(!f("a / b = 0").eval(&env));
        assert!(f("not (a / b = 0)").eval(&env));
    }

    #[test]
    fn rendering_keeps_needed_parentheses() {
        let t = Term::bin(ArithOp::Sub, Term::var("a"), Term::bin(ArithOp::Sub, Term::var("b"), Term::var("c")));
        assert_eq!(t.to_string(), "a - (b - c)");
        let g = Formula::and([Formula::or([f("x > 0"), f("y > 0")]), f("z = 1")]);
        assert_eq!(g.to_string(), "(x > 0 or y > 0) and z = 1");
        assert_eq!(Formula::not(g.clone()).to_string(), "not ((x > 0 or y > 0) and z = 1)");
    }

    #[test]
    fn uninterpreted_predicates_are_detected() {
        assert!(f("U_is_keyword(s) and s > 0").has_uninterpreted());
        assert!(!f("s > 0").has_uninterpreted());
    }
}
