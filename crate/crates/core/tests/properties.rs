mod common;

use common::checks::*;
use common::*;
use proptest::prelude::*;
use specforge_core::oracle::{check_entailment_bounded, Entailment};
use specforge_core::BoundedDomain;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layering_is_sound_and_sccs_match_reachability(seed in any::<u64>()) {
        prop_assert_eq!(random_plan_case(seed), Ok(()));
    }

    #[test]
    fn combination_is_sound(seed in any::<u64>()) {
        prop_assert_eq!(combination_case(seed), Ok(()));
    }

    #[test]
    fn strongest_post_equals_execution_image(seed in any::<u64>()) {
        prop_assert_eq!(sp_case(seed), Ok(()));
    }

    #[test]
    fn bounded_entailment_agrees_with_brute_force(seed in any::<u64>()) {
        let mut r = rng(seed);
        let vars = ["x", "y"];
        let a = random_formula(&mut r, &vars, 2);
        let b = random_formula(&mut r, &vars, 2);
        let got = check_entailment_bounded(&a, &b, &BoundedDomain::new(4)).unwrap();
        prop_assert_eq!(matches!(got, Entailment::Holds), entails(&a, &b, 4), "{} |= {}", a, b);
        if let Entailment::Fails { counterexample } = got {
            let mut env = counterexample.clone();
            for v in a.vars().union(&b.vars()) {
                env.entry(v.clone()).or_insert(0);
            }
            prop_assert!(eval_formula(&a, &env) && !eval_formula(&b, &env), "bad witness {:?}", counterexample);
        }
    }

    #[test]
    fn evaluators_agree(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_formula(&mut r, &["x", "y", "z"], 3);
        let ok = for_all_states(&["x".into(), "y".into(), "z".into()], 3, |env| f.eval(env) == eval_formula(&f, env));
        prop_assert!(ok, "{}", f);
    }
}

