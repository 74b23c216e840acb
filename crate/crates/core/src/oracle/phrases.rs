//! Canonical phrase table turning simple English conditions into formulas.
//!
//! Phrases the table does not recognize map to nothing; unknown concepts
//! (`"s is a keyword"`) map to an uninterpreted predicate.

use std::sync::OnceLock;

use regex::Regex;

use crate::logic::{parse_formula, Formula};

struct Rule {
    re: Regex,
    template: &'static str,
}

const TERM: &str = r"(-?\d+|[A-Za-z_][A-Za-z0-9_]*)";

fn rules() -> &'static [Rule] {
    static RULES: OnceLock<Vec<Rule>> = OnceLock::new();
    RULES.get_or_init(|| {
        let table: &[(&str, &str)] = &[
            (r"^{T} is positive$", "$1 > 0"),
            (r"^{T} is negative$", "$1 < 0"),
            (r"^{T} is non-?negative$", "$1 >= 0"),
            (r"^{T} is non-?positive$", "$1 <= 0"),
            (r"^{T} is zero$", "$1 = 0"),
            (r"^{T} is non-?zero$", "$1 != 0"),
            (r"^{T} is not zero$", "$1 != 0"),
            (r"^{T} is even$", "$1 / 2 * 2 = $1"),
            (r"^{T} is odd$", "$1 / 2 * 2 != $1"),
            (r"^{T} (?:is )?equals? {T}$", "$1 = $2"),
            (r"^{T} is equal to {T}$", "$1 = $2"),
            (r"^{T} is not equal to {T}$", "$1 != $2"),
            (r"^{T} differs from {T}$", "$1 != $2"),
            (r"^{T} is (?:greater|larger) than {T}$", "$1 > $2"),
            (r"^{T} exceeds {T}$", "$1 > $2"),
            (r"^{T} is (?:less|smaller) than {T}$", "$1 < $2"),
            (r"^{T} is at least {T}$", "$1 >= $2"),
            (r"^{T} is at most {T}$", "$1 <= $2"),
            (r"^{T} is (?:greater|larger) than or equal to {T}$", "$1 >= $2"),
            (r"^{T} is (?:less|smaller) than or equal to {T}$", "$1 <= $2"),
            (r"^{T} is between {T} and {T}(?: inclusive)?$", "$2 <= $1 and $1 <= $3"),
            (r"^{T} lies in \[{T}, ?{T}\]$", "$2 <= $1 and $1 <= $3"),
            (r"^the (?:function )?return value is {T}$", "result = $1"),
            (r"^the function returns {T}$", "result = $1"),
            (r"^the result is {T}$", "result = $1"),
            (r"^the result is positive$", "result > 0"),
            (r"^the result is negative$", "result < 0"),
            (r"^the result is non-?negative$", "result >= 0"),
            (r"^the result is at least {T}$", "result >= $1"),
            (r"^the result is at most {T}$", "result <= $1"),
            (r"^the result equals {T} plus {T}$", "result = $1 + $2"),
            (r"^the result equals {T} minus {T}$", "result = $1 - $2"),
            (r"^the result equals {T} times {T}$", "result = $1 * $2"),
            (r"^{T} is the sum of {T} and {T}$", "$1 = $2 + $3"),
            (r"^{T} is the product of {T} and {T}$", "$1 = $2 * $3"),
            (r"^{T} is the difference of {T} and {T}$", "$1 = $2 - $3"),
            (r"^{T} is one more than {T}$", "$1 = $2 + 1"),
            (r"^{T} is one less than {T}$", "$1 = $2 - 1"),
            (r"^{T} is twice {T}$", "$1 = 2 * $2"),
            (r"^{T} is the maximum of {T} and {T}$", "$1 >= $2 and $1 >= $3 and ($1 = $2 or $1 = $3)"),
            (r"^{T} is the minimum of {T} and {T}$", "$1 <= $2 and $1 <= $3 and ($1 = $2 or $1 = $3)"),
            (r"^{T} is the absolute value of {T}$", "$1 >= 0 and ($1 = $2 or $1 = 0 - $2)"),
            (r"^there is no constraint$", "true"),
            (r"^nothing is required$", "true"),
            (r"^this never happens$", "false"),
        ];
        table
            .iter()
            .map(|(pat, template)| Rule {
                re: Regex::new(&format!("(?i){}", pat.replace("{T}", TERM))).expect("phrase regex"),
                template,
            })
            .collect()
    })
}

fn concept_rule() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\W*([A-Za-z_][A-Za-z0-9_]*)\W* is (?:an? |the )?([a-z][a-z ]*[a-z])$").expect("concept regex")
    })
}

fn normalize(sentence: &str) -> String {
    sentence
        .trim()
        .trim_end_matches('.')
        .replace(['"', '`', '\''], "")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn formalize_sentence(sentence: &str) -> Option<Formula> {
    let s = normalize(sentence);
    if s.is_empty() {
        return None;
    }
    if let Ok(f) = parse_formula(&s) {
        return Some(f);
    }
    for r in rules() {
        if let Some(caps) = r.re.captures(&s) {
            let mut text = String::new();
            caps.expand(r.template, &mut text);
            return parse_formula(&text).ok();
        }
    }
    let caps = concept_rule().captures(&s)?;
    let concept = caps[2].to_lowercase().replace(' ', "_");
    let var = caps[1].to_string();
    parse_formula(&format!("U_is_{concept}({var})")).ok()
}

/// Formalizes a condition text: sentences and `and`-joined clauses are
/// formalized one by one and conjoined. `None` if any part is unrecognized.
pub fn formalize(text: &str) -> Option<Formula> {
    let mut parts = Vec::new();
    for sentence in text.split(['.', ';', '\n']).map(str::trim).filter(|s| !s.is_empty()) {
        if let Some(f) = formalize_sentence(sentence) {
            parts.push(f);
            continue;
        }
        for clause in sentence.split(" and ") {
            parts.push(formalize_sentence(clause)?);
        }
    }
    if parts.is_empty() {
        return None;
    }
    Some(Formula::and(parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    #[test]
    fn canonical_phrases() {
        assert_eq!(formalize("x is positive"), Some(f("x > 0")));
        assert_eq!(formalize("The function return value is 0."), Some(f("result = 0")));
        assert_eq!(formalize("n is at least 1 and n is at most 8"), Some(f("n >= 1 and n <= 8")));
        assert_eq!(formalize("y > x + 1"), Some(f("y > x + 1")));
    }

    #[test]
    fn unknown_concepts_become_predicates() {
        let g = formalize("s is a keyword").unwrap();
        assert_eq!(g, f("U_is_keyword(s)"));
        assert!(g.has_uninterpreted());
        assert_eq!(formalize("the moon is made of cheese and more"), None);
    }
}
