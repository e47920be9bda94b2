use cci_lab::mdp::{
    discounted_visitation, evaluate_policy, max_entropy_return, occupancy_return, random_mdp, shape_reward,
    TabularMdp, TabularPolicy, DEFAULT_TOL,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> TabularPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = Array2::from_shape_fn((n_states, n_actions), |_| rng.random_range(-2.0..2.0));
    TabularPolicy::from_logits(logits).unwrap()
}

/// Standard values by summing the discounted series `Σ_t γ^t P_π^t r_π`.
fn series_values(mdp: &TabularMdp, policy: &TabularPolicy) -> Array1<f64> {
    let n = mdp.n_states();
    let r_pi = Array1::from_shape_fn(n, |s| policy.row(s).dot(&mdp.reward().row(s)));
    let p = mdp.state_kernel(policy);
    let mut term = r_pi.clone();
    let mut total = r_pi;
    loop {
        term = p.dot(&term) * mdp.gamma();
        total += &term;
        if term.iter().all(|x| x.abs() < 1e-15) {
            return total;
        }
    }
}

#[test]
fn return_forms_agree_on_100_random_mdps() {
    let gammas = [0.5, 0.9, 0.99];
    for seed in 0..100u64 {
        let n_states = 1 + (seed as usize % 8);
        let n_actions = 1 + (seed as usize / 8 % 4);
        let mdp = random_mdp(n_states, n_actions, gammas[seed as usize % 3], seed);
        let policy = random_policy(n_states, n_actions, seed + 1000);
        let j = max_entropy_return(&mdp, &policy, 0.1).unwrap();
        let j_occ = occupancy_return(&mdp, &policy, 0.1).unwrap();
        assert!((j - j_occ).abs() < 1e-8, "seed {seed}: {j} vs {j_occ}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bellman_residual_below_tolerance(seed in 0u64..10_000, ns in 1usize..=8, na in 1usize..=4, alpha in 0.0f64..1.0) {
        let mdp = random_mdp(ns, na, 0.9, seed);
        let policy = random_policy(ns, na, seed);
        let values = evaluate_policy(&mdp, &policy, alpha, DEFAULT_TOL).unwrap();
        prop_assert!(values.residual(&mdp, &policy) < DEFAULT_TOL);
    }

    #[test]
    fn visitation_is_a_distribution_solving_its_equation(seed in 0u64..10_000, ns in 1usize..=8, na in 1usize..=4) {
        let mdp = random_mdp(ns, na, 0.95, seed);
        let policy = random_policy(ns, na, seed);
        let d = discounted_visitation(&mdp, &policy).unwrap();
        prop_assert!((d.sum() - 1.0).abs() < 1e-10);
        prop_assert!(d.iter().all(|x| *x >= 0.0));
        let p = mdp.state_kernel(&policy);
        let lhs = &d - &(p.t().dot(&d) * mdp.gamma());
        let rhs = mdp.initial_dist() * (1.0 - mdp.gamma());
        prop_assert!((&lhs - &rhs).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn standard_evaluation_matches_series(seed in 0u64..10_000, ns in 1usize..=6, na in 1usize..=3) {
        let mdp = random_mdp(ns, na, 0.9, seed);
        let policy = random_policy(ns, na, seed);
        let exact = evaluate_policy(&mdp, &policy, 0.0, DEFAULT_TOL).unwrap().v;
        let series = series_values(&mdp, &policy);
        prop_assert!((&exact - &series).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn soft_values_are_linear_in_reward(seed in 0u64..10_000, ns in 1usize..=6, na in 1usize..=3, alpha in 0.01f64..1.0) {
        let mdp = random_mdp(ns, na, 0.9, seed);
        let policy = random_policy(ns, na, seed);
        let behavior = random_policy(ns, na, seed + 1);
        let shaped = shape_reward(&mdp, &behavior, alpha, None).unwrap();
        let shaping_only = mdp.with_reward(shaped.reward() - mdp.reward()).unwrap();
        let combined = evaluate_policy(&shaped, &policy, alpha, DEFAULT_TOL).unwrap();
        let base = evaluate_policy(&mdp, &policy, alpha, DEFAULT_TOL).unwrap();
        let extra = evaluate_policy(&shaping_only, &policy, 0.0, DEFAULT_TOL).unwrap();
        prop_assert!((&combined.q - &(&base.q + &extra.q)).iter().all(|x| x.abs() < 1e-9));
    }
}

#[test]
fn json_document_round_trips() {
    let mdp = random_mdp(4, 3, 0.9, 17);
    let json = serde_json::to_string(&mdp).unwrap();
    assert_eq!(serde_json::from_str::<TabularMdp>(&json).unwrap(), mdp);
    let bad = json.replacen("\"gamma\"", "\"gama\"", 1);
    assert!(serde_json::from_str::<TabularMdp>(&bad).is_err());
}
