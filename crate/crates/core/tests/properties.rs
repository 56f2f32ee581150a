use proptest::prelude::*;

use crossover_core::covmodels::{markov_case, CovSpec, Family, Kernel, MarkovScenario, ProportionalScenario};
use crossover_core::designs::Design;
use crossover_core::efficiency::upper_bound_u;
use crossover_core::infomat::{
    check_info_invariants, info_markov, info_markov_noperiod, info_markov_noperiod_brute, info_proportional,
    Method, Representation, TraceEvaluator,
};
use crossover_core::matlib::{from_rows, loewner_leq, max_abs, Matrix, Tolerance};

// aliased designs have C = 0, so compare on an absolute floor too
fn close(a: &Matrix, b: &Matrix) -> bool {
    max_abs(&(a - b)) <= 1e-8 * max_abs(a).max(max_abs(b)).max(1.0)
}

fn binary_design(t: usize, n: usize) -> impl Strategy<Value = Design> {
    let col = Just((0..t).collect::<Vec<usize>>()).prop_shuffle();
    proptest::collection::vec(col, n).prop_map(move |cols| Design::from_columns(t, &cols).unwrap())
}

fn sized_design() -> impl Strategy<Value = Design> {
    prop_oneof![binary_design(3, 3), binary_design(3, 6), binary_design(4, 4), binary_design(4, 6)]
}

fn markov() -> impl Strategy<Value = MarkovScenario> {
    (1usize..=7, 0.05f64..0.95, 0.3f64..3.0, 0.3f64..3.0, prop_oneof![-0.95f64..-0.02, 0.02f64..0.95])
        .prop_map(|(c, r, a, b, rho)| markov_case(c, r, a, b, rho).unwrap())
}

fn proportional() -> impl Strategy<Value = ProportionalScenario> {
    (0usize..3, 0.05f64..0.95, 0.3f64..3.0, 0.3f64..3.0, -0.9f64..0.9).prop_map(|(f, r, a, b, c)| {
        let off = c * (a * b).sqrt();
        ProportionalScenario::new(
            from_rows(&[&[a, off], &[off, b]]),
            CovSpec::Kernel(Kernel::new(Family::ALL[f], r).unwrap()),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn markov_paths_agree(d in sized_design(), s in markov()) {
        let tol = Tolerance::default();
        let b = info_markov(&d, &s, Method::Brute, Representation::Z43, tol).unwrap().matrix;
        let c = info_markov(&d, &s, Method::Closed, Representation::Z43, tol).unwrap().matrix;
        prop_assert!(close(&b, &c));
        prop_assert!(check_info_invariants(&c, d.t(), tol));
        let fast = TraceEvaluator::markov(&s, d.t(), d.n(), d.p(), tol).unwrap().info(&d).unwrap();
        prop_assert!(close(&fast, &c));
    }

    #[test]
    fn proportional_paths_agree(d in sized_design(), s in proportional()) {
        let tol = Tolerance::default();
        let b = info_proportional(&d, &s, Method::Brute, tol).unwrap().matrix;
        let c = info_proportional(&d, &s, Method::Closed, tol).unwrap().matrix;
        prop_assert!(close(&b, &c));
        let fast = TraceEvaluator::proportional(&s, d.t(), d.n(), d.p(), tol).unwrap().trace(&d).unwrap();
        prop_assert!((fast - c.trace()).abs() <= 1e-8 * c.trace().abs().max(1.0));
    }

    #[test]
    fn noperiod_dominates(d in sized_design(), s in markov()) {
        let tol = Tolerance::default();
        let c = info_markov(&d, &s, Method::Closed, Representation::Z43, tol).unwrap().matrix;
        let ct = info_markov_noperiod(&d, &s, tol).unwrap().matrix;
        let ctb = info_markov_noperiod_brute(&d, &s, tol).unwrap().matrix;
        prop_assert!(close(&ct, &ctb));
        prop_assert!(loewner_leq(&c, &ct, tol).unwrap());
    }

    #[test]
    fn square_binary_designs_respect_bound(d in (3usize..=4).prop_flat_map(|t| binary_design(t, 2 * t)), s in markov()) {
        let tr = info_markov(&d, &s, Method::Closed, Representation::Z43, Tolerance::default()).unwrap().trace();
        let u = upper_bound_u(&s, d.t(), d.n(), d.p()).unwrap();
        prop_assert!(tr <= u * (1.0 + 1e-8));
    }
}
