//! Slot-indexed evaluation for tight enumeration loops.

use std::collections::BTreeMap;

use super::{ArithOp, CmpOp, Formula, Term};

#[derive(Clone, Debug)]
pub enum CompiledTerm {
    Int(i64),
    Slot(usize),
    Bin(ArithOp, Box<CompiledTerm>, Box<CompiledTerm>),
}

impl CompiledTerm {
    pub fn compile(term: &Term, slots: &BTreeMap<String, usize>) -> Option<CompiledTerm> {
        Some(match term {
            Term::Int(v) => CompiledTerm::Int(*v),
            Term::Var(name) => CompiledTerm::Slot(*slots.get(name)?),
            Term::Bin(op, l, r) => CompiledTerm::Bin(
                *op,
                Box::new(CompiledTerm::compile(l, slots)?),
                Box::new(CompiledTerm::compile(r, slots)?),
            ),
        })
    }

    #[inline]
    pub fn eval(&self, vals: &[i64]) -> Option<i64> {
        match self {
            CompiledTerm::Int(v) => Some(*v),
            CompiledTerm::Slot(i) => Some(vals[*i]),
            CompiledTerm::Bin(op, l, r) => op.apply(l.eval(vals)?, r.eval(vals)?),
        }
    }
}

#[derive(Clone, Debug)]
pub enum CompiledFormula {
    Bool(bool),
    Cmp(CmpOp, CompiledTerm, CompiledTerm),
    Not(Box<CompiledFormula>),
    And(Vec<CompiledFormula>),
    Or(Vec<CompiledFormula>),
}

impl CompiledFormula {
    /// Returns `None` when the formula mentions a variable without a slot or
    /// contains an uninterpreted predicate.
    pub fn compile(f: &Formula, slots: &BTreeMap<String, usize>) -> Option<CompiledFormula> {
        Some(match f {
            Formula::Bool(b) => CompiledFormula::Bool(*b),
            Formula::Cmp(op, l, r) => {
                CompiledFormula::Cmp(*op, CompiledTerm::compile(l, slots)?, CompiledTerm::compile(r, slots)?)
            }
            Formula::Pred(..) => return None,
            Formula::Not(inner) => CompiledFormula::Not(Box::new(CompiledFormula::compile(inner, slots)?)),
            Formula::And(items) => CompiledFormula::And(
                items
                    .iter()
                    .map(|i| CompiledFormula::compile(i, slots))
                    .collect::<Option<Vec<_>>>()?,
            ),
            Formula::Or(items) => CompiledFormula::Or(
                items
                    .iter()
                    .map(|i| CompiledFormula::compile(i, slots))
                    .collect::<Option<Vec<_>>>()?,
            ),
        })
    }

    #[inline]
    pub fn eval(&self, vals: &[i64]) -> bool {
        match self {
            CompiledFormula::Bool(b) => *b,
            CompiledFormula::Cmp(op, l, r) => match (l.eval(vals), r.eval(vals)) {
                (Some(a), Some(b)) => op.holds(a, b),
                _ => false,
            },
            CompiledFormula::Not(inner) => !inner.eval(vals),
            CompiledFormula::And(items) => items.iter().all(|i| i.eval(vals)),
            CompiledFormula::Or(items) => items.iter().any(|i| i.eval(vals)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_formula, Valuation};

    #[test]
    fn compiled_matches_tree_evaluation() {
        let f = parse_formula("x / y > 1 or not (x * 2 = y + 3)").unwrap();
        let mut slots = BTreeMap::new();
        slots.insert("x".to_string(), 0);
        slots.insert("y".to_string(), 1);
        let c = CompiledFormula::compile(&f, &slots).unwrap();
        for x in -4..=4 {
            for y in -4..=4 {
                let mut env = Valuation::new();
                env.insert("x".into(), x);
                env.insert("y".into(), y);
                assert_eq!(c.eval(&[x, y]), f.eval(&env));
            }
        }
    }
}
