mod common;

use common::checks::*;
use specforge_core::oracle::InvariantVerdict;

const INV: &str = "s = i * (i - 1) / 2 and 0 <= i and i <= n";
const PRE: &str = "n >= 0 and i = 0 and s = 0";
const POST: &str = "s = n * (n - 1) / 2";

#[test]
fn summation_holds() {
    assert_eq!(loop_verdict(SUMMATION, PRE, INV, POST), Ok(InvariantVerdict::Holds));
}

#[test]
fn off_by_one_fails_exit_obligation() {
    // The mutant's own invariant admits i = n + 1 on exit.
    let inv = "s = i * (i - 1) / 2 and 0 <= i and i <= n + 1";
    match loop_verdict(SUMMATION_OFF_BY_ONE, PRE, inv, POST).unwrap() {
        InvariantVerdict::Fails { obligation: 3, witness } => {
            let (n, i, s) = (witness["n"], witness["i"], witness["s"]);
            assert_eq!(i, n + 1);
            assert_eq!(s, i * (i - 1) / 2);
            assert_ne!(s, n * (n - 1) / 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn off_by_one_with_the_original_invariant_breaks_preservation() {
    assert!(matches!(
        loop_verdict(SUMMATION_OFF_BY_ONE, PRE, INV, POST),
        Ok(InvariantVerdict::Fails { obligation: 2, .. })
    ));
}

#[test]
fn loop_fixtures_are_classified() {
    assert_eq!(classify_loops(), Ok(20));
    let all = loop_fixtures();
    assert_eq!(all.iter().filter(|l| l.expect == "holds").count(), 10);
}
