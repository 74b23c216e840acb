//! Text syntax for terms and formulas.
//!
//! Connectives are `and`/`or`/`not` (also `&&`, `||`, `!`); comparisons are
//! `< <= = != >= >` with `==` accepted for `=`. Uninterpreted predicates are
//! written `U_name(args)`.

use super::{ArithOp, CmpOp, Formula, Term};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("formula syntax error at offset {offset}: expected {expected}")]
pub struct FormulaParseError {
    pub offset: usize,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(i128),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, FormulaParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let value: i128 = text[start..i].parse().map_err(|_| FormulaParseError {
                offset: start,
                expected: "integer literal in range".into(),
            })?;
            out.push((Tok::Int(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
            continue;
        }
        let two = if i + 1 < bytes.len() { &text[i..i + 2] } else { "" };
        let op2 = match two {
            "<=" => Some("<="),
            ">=" => Some(">="),
            "==" => Some("="),
            "!=" => Some("!="),
            "&&" => Some("and"),
            "||" => Some("or"),
            _ => None,
        };
        if let Some(op) = op2 {
            out.push((Tok::Op(op), start));
            i += 2;
            continue;
        }
        let tok = match c {
            b'<' => Tok::Op("<"),
            b'>' => Tok::Op(">"),
            b'=' => Tok::Op("="),
            b'+' => Tok::Op("+"),
            b'-' => Tok::Op("-"),
            b'*' => Tok::Op("*"),
            b'/' => Tok::Op("/"),
            b'!' => Tok::Op("not"),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                return Err(FormulaParseError {
                    offset: start,
                    expected: "a term, comparison or connective".into(),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    furthest: Option<FormulaParseError>,
}

type PResult<T> = Result<T, FormulaParseError>;

const KEYWORDS: [&str; 5] = ["and", "or", "not", "true", "false"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn err<T>(&mut self, expected: &str) -> PResult<T> {
        let e = FormulaParseError {
            offset: self.offset(),
            expected: expected.to_string(),
        };
        if self.furthest.as_ref().is_none_or(|f| f.offset <= e.offset) {
            self.furthest = Some(e.clone());
        }
        Err(e)
    }

    fn is_word(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == word) || matches!(self.peek(), Tok::Op(op) if *op == word)
    }

    fn formula(&mut self) -> PResult<Formula> {
        let mut parts = vec![self.conjunction()?];
        while self.is_word("or") {
            self.pos += 1;
            parts.push(self.conjunction()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::Or(parts) })
    }

    fn conjunction(&mut self) -> PResult<Formula> {
        let mut parts = vec![self.unary()?];
        while self.is_word("and") {
            self.pos += 1;
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::And(parts) })
    }

    fn unary(&mut self) -> PResult<Formula> {
        if self.is_word("not") {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Formula::Not(Box::new(inner)));
        }
        if self.is_word("true") {
            self.pos += 1;
            return Ok(Formula::Bool(true));
        }
        if self.is_word("false") {
            self.pos += 1;
            return Ok(Formula::Bool(false));
        }
        if let Tok::Ident(name) = self.peek().clone() {
            if name.starts_with("U_") && self.toks[self.pos + 1].0 == Tok::LParen {
                self.pos += 2;
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    loop {
                        args.push(self.term()?);
                        if *self.peek() == Tok::Comma {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                if *self.peek() != Tok::RParen {
                    return self.err("')' closing predicate arguments");
                }
                self.pos += 1;
                return Ok(Formula::Pred(name, args));
            }
        }
        let save = self.pos;
        match self.atom() {
            Ok(f) => Ok(f),
            Err(atom_err) => {
                self.pos = save;
                if *self.peek() == Tok::LParen {
                    self.pos += 1;
                    let inner = self.formula()?;
                    if *self.peek() != Tok::RParen {
                        return self.err("')'");
                    }
                    self.pos += 1;
                    Ok(inner)
                } else {
                    Err(atom_err)
                }
            }
        }
    }

    fn atom(&mut self) -> PResult<Formula> {
        let lhs = self.term()?;
        let op = match self.peek() {
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op("=") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            Tok::Op(">=") => CmpOp::Ge,
            Tok::Op(">") => CmpOp::Gt,
            _ => return self.err("comparison operator"),
        };
        self.pos += 1;
        let rhs = self.term()?;
        Ok(Formula::Cmp(op, lhs, rhs))
    }

    fn term(&mut self) -> PResult<Term> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => ArithOp::Add,
                Tok::Op("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Term::bin(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> PResult<Term> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => ArithOp::Mul,
                Tok::Op("/") => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Term::bin(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.pos += 1;
                match i64::try_from(v) {
                    Ok(v) => Ok(Term::Int(v)),
                    Err(_) => self.err("integer literal in range"),
                }
            }
            Tok::Op("-") => {
                self.pos += 1;
                if let Tok::Int(v) = *self.peek() {
                    self.pos += 1;
                    return match i64::try_from(-v) {
                        Ok(v) => Ok(Term::Int(v)),
                        Err(_) => self.err("integer literal in range"),
                    };
                }
                let inner = self.factor()?;
                Ok(Term::bin(ArithOp::Mul, Term::Int(-1), inner))
            }
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.pos += 1;
                Ok(Term::Var(name))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.term()?;
                if *self.peek() != Tok::RParen {
                    return self.err("')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => self.err("integer, variable or '('"),
        }
    }
}

pub fn parse_formula(text: &str) -> Result<Formula, FormulaParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        furthest: None,
    };
    match p.formula() {
        Ok(f) if *p.peek() == Tok::End => Ok(f),
        Ok(_) => {
            let _ = p.err::<()>("end of formula");
            Err(p.furthest.unwrap())
        }
        Err(e) => Err(p.furthest.unwrap_or(e)),
    }
}

pub fn parse_term(text: &str) -> Result<Term, FormulaParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        furthest: None,
    };
    let t = p.term()?;
    if *p.peek() != Tok::End {
        return p.err("end of term");
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_parenthesized_terms_and_formulas() {
        let f = parse_formula("(x + 1) * 2 > y and (a = 1 or b = 2)").unwrap();
        assert_eq!(f.to_string(), "(x + 1) * 2 > y and (a = 1 or b = 2)");
        let g = parse_formula("!(x == 1) && y != 2 || true").unwrap();
        assert_eq!(g.to_string(), "not x = 1 and y != 2 or true");
    }

    #[test]
    fn negative_literals_round_trip() {
        for text in ["x = -5", "a - -3 < 0", "-1 * x >= 2", "x__1 = x__in / -2"] {
            let f = parse_formula(text).unwrap();
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f, "{text}");
        }
    }

    #[test]
    fn reports_error_offset() {
        let e = parse_formula("x > ").unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(parse_formula("x + 1").is_err());
        assert!(parse_formula("U_p(x").is_err());
        assert!(parse_formula("x > 1 y").is_err());
    }

    #[test]
    fn predicates_parse_with_arguments() {
        let f = parse_formula("U_is_keyword(s) or U_empty()").unwrap();
        assert_eq!(f.to_string(), "U_is_keyword(s) or U_empty()");
    }
}
