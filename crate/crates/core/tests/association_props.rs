use proptest::prelude::*;
use rmmht::association::{build_lp, check_prop2, solve_ip, solve_lp, FEAS_TOL};
use rmmht::oracle::{prop2_problem, random_problem, InstanceShape};
use rmmht::simulation::rng_for;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn relaxation_bounds_the_integer_optimum(seed in any::<u64>(), targets in 1usize..5) {
        let shape = InstanceShape { targets, ..InstanceShape::two_scan() };
        let problem = random_problem(&mut rng_for(seed, 0), &shape);
        let lp = build_lp(&problem).unwrap();
        let relaxed = solve_lp(&lp).unwrap();
        let exact = solve_ip(&lp).unwrap();
        prop_assert!(relaxed.objective <= exact.objective + 1e-9);
        prop_assert!(relaxed.max_residual(&lp) <= FEAS_TOL);
        prop_assert!(exact.max_residual(&lp) <= FEAS_TOL);
        if check_prop2(&problem, &exact) {
            prop_assert!((relaxed.objective - exact.objective).abs() <= 1e-9);
        }
    }

    #[test]
    fn constructed_optimum_is_shared(seed in any::<u64>()) {
        let (problem, delta) = prop2_problem(&mut rng_for(seed, 0), &InstanceShape::two_scan());
        let lp = build_lp(&problem).unwrap();
        let value: f64 = delta.iter().zip(&lp.costs).map(|(d, c)| d * c).sum();
        let relaxed = solve_lp(&lp).unwrap();
        let exact = solve_ip(&lp).unwrap();
        prop_assert!((relaxed.objective - value).abs() <= 1e-9);
        prop_assert!((exact.objective - value).abs() <= 1e-9);
    }

    #[test]
    fn single_scan_relaxation_is_integral(seed in any::<u64>(), targets in 1usize..6) {
        let shape = InstanceShape { targets, ..InstanceShape::single_scan() };
        let problem = random_problem(&mut rng_for(seed, 0), &shape);
        let s = solve_lp(&build_lp(&problem).unwrap()).unwrap();
        prop_assert!(s.is_integral, "{:?}", s.probs);
    }

    #[test]
    fn solving_is_deterministic(seed in any::<u64>()) {
        let problem = random_problem(&mut rng_for(seed, 0), &InstanceShape::two_scan());
        let lp = build_lp(&problem).unwrap();
        prop_assert_eq!(solve_lp(&lp).unwrap(), solve_lp(&lp).unwrap());
        prop_assert_eq!(solve_ip(&lp).unwrap(), solve_ip(&lp).unwrap());
    }
}
