mod common;

use bivirus::dynamics::{
    integrate, lyapunov_distance, rhs_bivirus, rhs_controlled_single, rhs_single, simulate_bivirus,
    ControlGains, Domain, EpidemicState, IntegratorConfig, SingleVirusField, Termination,
};
use bivirus::equilibria::single_virus_equilibrium;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_stay_in_domain(seed: u64, n in 1usize..=8) {
        let mut rng = common::rng(seed);
        let sys = common::random_bivirus(&mut rng, n);
        let x0 = common::random_state(&mut rng, n);
        let cfg = IntegratorConfig { dt: 0.05, t_max: 60.0, sample_interval: 0.05, ..IntegratorConfig::default() };
        let traj = simulate_bivirus(&sys, &x0, &cfg).unwrap();
        prop_assert_ne!(traj.termination, Termination::Diverged);
        prop_assert!(traj.max_correction <= cfg.clamp_tol);
        for s in &traj.states {
            prop_assert_eq!(Domain::PairedSimplex.violation(s), 0.0);
        }
    }

    #[test]
    fn bivirus_reduces_to_single_virus(seed: u64, n in 1usize..=8) {
        let mut rng = common::rng(seed);
        let sys = common::random_bivirus(&mut rng, n);
        let x1 = common::random_fractions(&mut rng, n, 0.0, 1.0);
        let state = EpidemicState::new(x1.clone(), DVector::zeros(n)).unwrap();
        let (dx1, dx2) = rhs_bivirus(&sys, &state).unwrap();
        let single = rhs_single(sys.d1(), sys.b1(), &x1).unwrap();
        prop_assert!((dx1 - single).amax() <= 1e-15);
        prop_assert_eq!(dx2.amax(), 0.0);
    }

    #[test]
    fn controlled_rhs_is_substituted_sis(seed: u64, n in 1usize..=8) {
        let mut rng = common::rng(seed);
        let b = common::random_infection(&mut rng, n);
        let k = ControlGains::new(common::random_fractions(&mut rng, n, 0.1, 3.0)).unwrap();
        let kb = b.with_added_diagonal(k.as_vector()).unwrap();
        let kmat = DMatrix::from_diagonal(k.as_vector());
        for _ in 0..20 {
            let x = common::random_fractions(&mut rng, n, 0.0, 1.0);
            let xmat = DMatrix::from_diagonal(&x);
            let matrix_form = (-&kmat + kb.matrix() - &xmat * kb.matrix()) * &x;
            let direct = rhs_controlled_single(&k, &b, &x).unwrap();
            prop_assert!((matrix_form - direct).amax() <= 1e-12);
        }
    }

    #[test]
    fn lyapunov_distance_never_increases(seed: u64, n in 1usize..=6) {
        let mut rng = common::rng(seed);
        let (d, b) = common::supercritical(&mut rng, n);
        let x_star = single_virus_equilibrium(&d, &b).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let cfg = IntegratorConfig { dt: 0.01, t_max: 30.0, sample_interval: 0.1, ..IntegratorConfig::default() };
        let traj = integrate(&SingleVirusField { d: &d, b: &b }, &x0, &cfg).unwrap();
        let v: Vec<f64> = traj.states.iter().map(|s| lyapunov_distance(s, x_star.as_slice()).unwrap()).collect();
        for w in v.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn sample_count_follows_interval() {
    let mut rng = common::rng(7);
    let (d, b) = common::supercritical(&mut rng, 3);
    let cfg = IntegratorConfig { dt: 0.01, t_max: 5.0, convergence_tol: 1e-300, ..IntegratorConfig::default() };
    let traj = integrate(&SingleVirusField { d: &d, b: &b }, &[0.1, 0.2, 0.3], &cfg).unwrap();
    assert_eq!(traj.termination, Termination::Horizon);
    assert_eq!(traj.times.len(), 6);
    assert_eq!(traj.final_time(), 5.0);
    assert!(common::inf_norm(traj.final_state()) > 0.0);
}
