use cci_lab::cci::{
    cci_weight, closed_form_policy, constraint_derivative, log_normalizer, state_constraint, CciParams,
};
use cci_lab::mdp::TabularPolicy;
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;

fn unclipped(alpha: f64, lambda: f64) -> CciParams {
    CciParams { alpha, lambda, weight_clip: f64::MAX, ..Default::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn row_strategy(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        proptest::collection::vec(-1.0f64..1.0, n),
        proptest::collection::vec(0.05f64..1.0, n),
    )
        .prop_map(|(adv, raw)| {
            let total: f64 = raw.iter().sum();
            (adv, raw.into_iter().map(|x| x / total).collect())
        })
}

proptest! {
    #[test]
    fn special_case_weights(adv in -2.0f64..2.0, log_pb in -10.0f64..0.0, alpha in 0.05f64..2.0) {
        let kl = cci_weight(adv, log_pb, &unclipped(alpha, alpha));
        prop_assert!(rel(kl, (adv / alpha).exp()) < 1e-12);
        let support = cci_weight(adv, log_pb, &unclipped(alpha, 0.0));
        prop_assert!(rel(support, (adv / alpha - log_pb).exp()) < 1e-12);
    }

    #[test]
    fn closed_form_rows_normalize((adv, beta) in row_strategy(4), alpha in 0.05f64..2.0, lambda in 0.0f64..10.0) {
        let params = unclipped(alpha, lambda);
        let behavior = TabularPolicy::from_probs(Array2::from_shape_vec((1, 4), beta.clone()).unwrap()).unwrap();
        let a = Array2::from_shape_vec((1, 4), adv.clone()).unwrap();
        let pi = closed_form_policy(&a, &behavior, &params).unwrap();
        prop_assert!((pi.row(0).sum() - 1.0).abs() < 1e-10);

        // exp((Q − Z_λ)/α) π_β^{λ/α} sums to one, with Q = A here.
        let z = log_normalizer(Array1::from(adv.clone()).view(), behavior.row(0), &params).unwrap();
        let mass: f64 = adv.iter().zip(&beta).map(|(q, b)| ((q - z) / alpha).exp() * b.powf(lambda / alpha)).sum();
        prop_assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constraint_is_monotone_in_lambda((adv, beta) in row_strategy(3), alpha in 0.1f64..2.0) {
        let a = Array1::from(adv);
        let b = Array1::from(beta);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=100 {
            let lambda = 0.1 * k as f64;
            let g = state_constraint(a.view(), b.view(), &unclipped(alpha, lambda)).unwrap();
            prop_assert!(g >= prev - 1e-12, "g dropped at λ = {lambda}");
            prev = g;
            prop_assert!(constraint_derivative(a.view(), b.view(), &unclipped(alpha, lambda)).unwrap() >= 0.0);
        }
    }

    #[test]
    fn derivative_matches_central_difference((adv, beta) in row_strategy(3), alpha in 0.5f64..2.0, lambda in 0.01f64..10.0) {
        let a = Array1::from(adv);
        let b = Array1::from(beta);
        let h = 1e-4;
        let g = |l: f64| state_constraint(a.view(), b.view(), &unclipped(alpha, l)).unwrap();
        let fd = (g(lambda + h) - g(lambda - h)) / (2.0 * h);
        let exact = constraint_derivative(a.view(), b.view(), &unclipped(alpha, lambda)).unwrap();
        prop_assert!((fd - exact).abs() < 1e-5);
    }
}

#[test]
fn zero_behavior_mass_stays_zero() {
    let behavior = TabularPolicy::from_probs(array![[0.6, 0.4, 0.0]]).unwrap();
    let adv = array![[0.0, 0.0, 5.0]];
    for lambda in [0.0, 0.05, 0.1, 1.0] {
        let pi = closed_form_policy(&adv, &behavior, &unclipped(0.1, lambda)).unwrap();
        assert_eq!(pi.prob(0, 2), 0.0, "λ = {lambda}");
    }
}
