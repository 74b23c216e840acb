mod common;

use std::collections::BTreeSet;

use common::checks::*;
use common::*;
use specforge_core::validator::{HarnessConfig, SystemUnderTest, Validation};
use specforge_core::{Derivation, Pipeline, Stage, ValidationStatus};

fn faulty() -> BTreeSet<String> {
    lines_of("corpus/faulty.txt").into_iter().collect()
}

#[test]
fn ground_truth_matches_execution() {
    assert_eq!(corpus_ground_truth().unwrap(), faulty());
}

#[test]
fn seeded_faults_are_flagged_and_confirmed() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_corpus("corpus", dir.path(), Derivation::TopDown).unwrap();
    assert_eq!(run.flagged(), faulty());
    let confirmed: BTreeSet<String> = run
        .validated
        .iter()
        .filter(|(_, o)| o.status == ValidationStatus::Confirmed)
        .map(|(b, _)| b.function.clone())
        .collect();
    assert_eq!(confirmed, faulty());
    assert!(run.validated.iter().all(|(_, o)| o.attempts.len() <= 10));
    let first_try = run.validated.iter().filter(|(_, o)| o.attempts.len() == 1).count();
    assert!(first_try >= 9, "{first_try}");
    let t = run.report.tallies;
    assert_eq!((t.potential, t.confirmed, t.unconfirmed, t.harness_failed), (10, 10, 0, 0));
    assert!(t.balanced());
}

#[test]
fn caller_expectations_catch_what_bodies_hide() {
    let targets: BTreeSet<String> = lines_of("keyword/targets.txt").into_iter().collect();
    let dir = tempfile::tempdir().unwrap();
    let top = run_corpus("keyword", &dir.path().join("top"), Derivation::TopDown).unwrap();
    assert_eq!(top.flagged(), targets);
    let bottom = run_corpus("keyword", &dir.path().join("impl"), Derivation::ImplementationOnly).unwrap();
    assert_eq!(bottom.flagged(), BTreeSet::new());
}

#[test]
fn failing_generation_spends_exactly_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_corpus("corpus", dir.path(), Derivation::TopDown).unwrap();
    let (sys, oracle) = corpus_backend();
    let specs = spec_map(dir.path());
    let sut = SystemUnderTest::minilang(sys.clone(), None);
    for n in [1u32, 3, 10] {
        let cfg = HarnessConfig {
            max_attempts: n,
            ..HarnessConfig::default()
        };
        let backend = NoTestCases(&oracle);
        let v = Validation {
            cb: &sys,
            specs: &specs,
            sut: &sut,
            cfg: &cfg,
            backend: &backend,
        };
        let (bug, _) = &run.validated[0];
        let o = v.validate_bug(bug);
        assert_eq!(o.status, ValidationStatus::Unconfirmed);
        assert_eq!(o.attempts.len(), n as usize);
        assert!(o.attempts.iter().all(|a| a.failure.is_some() && !a.matched));
    }
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_corpus("corpus", &a, Derivation::TopDown).unwrap();
    run_corpus("corpus", &b, Derivation::TopDown).unwrap();
    assert_eq!(dir_diff(&snapshot_dir(&a), &snapshot_dir(&b)), Vec::<String>::new());
}

#[test]
fn resume_after_specgen_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let (whole, resumed) = (dir.path().join("whole"), dir.path().join("resumed"));
    run_corpus("corpus", &whole, Derivation::TopDown).unwrap();
    let cfg = corpus_config("corpus", &resumed, Derivation::TopDown);
    let p = Pipeline::new(cfg.clone()).unwrap();
    p.run_stage(Stage::Plan).unwrap();
    p.run_stage(Stage::Specgen).unwrap();
    drop(p);
    Pipeline::new(cfg).unwrap().run().unwrap();
    assert_eq!(dir_diff(&snapshot_dir(&whole), &snapshot_dir(&resumed)), Vec::<String>::new());
}

#[test]
fn resume_mid_specgen_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let (whole, resumed) = (dir.path().join("whole"), dir.path().join("resumed"));
    run_corpus("corpus", &whole, Derivation::TopDown).unwrap();
    let cfg = corpus_config("corpus", &resumed, Derivation::TopDown);
    let p = Pipeline::new(cfg.clone()).unwrap();
    p.run_stage(Stage::Plan).unwrap();
    p.run_stage(Stage::Specgen).unwrap();
    // Simulate a crash part-way through: drop the marker and some specs.
    std::fs::remove_file(resumed.join("stages/specgen.json")).unwrap();
    for f in ["abs", "max3", "sum_to"] {
        std::fs::remove_file(resumed.join(format!("specs/corpus/{f}.md"))).unwrap();
    }
    Pipeline::new(cfg).unwrap().run().unwrap();
    let (a, b) = (snapshot_dir(&whole), snapshot_dir(&resumed));
    let diff: Vec<String> = dir_diff(&a, &b).into_iter().filter(|f| f != "specs/_events.log").collect();
    assert_eq!(diff, Vec::<String>::new());
}
