use cci_lab::data::{dataset_state_distribution, fit_behavior_mle, generate_dataset, MleOptions, OfflineDataset};
use cci_lab::mdp::{discounted_visitation, random_mdp, TabularPolicy};
use cci_lab::prob::total_variation;
use proptest::prelude::*;

fn serialize(data: &OfflineDataset) -> Vec<u8> {
    let mut out = Vec::new();
    data.write_jsonl(&mut out).unwrap();
    out
}

#[test]
fn same_seed_gives_identical_bytes() {
    let mdp = random_mdp(5, 3, 0.9, 1);
    let behavior = TabularPolicy::uniform(5, 3);
    let a = generate_dataset(&mdp, &behavior, 3000, 40, 9).unwrap();
    let b = generate_dataset(&mdp, &behavior, 3000, 40, 9).unwrap();
    assert_eq!(serialize(&a), serialize(&b));
    let c = generate_dataset(&mdp, &behavior, 3000, 40, 10).unwrap();
    assert_ne!(serialize(&a), serialize(&c));
}

#[test]
fn file_round_trip() {
    let mdp = random_mdp(3, 2, 0.9, 2);
    let data = generate_dataset(&mdp, &TabularPolicy::uniform(3, 2), 200, 10, 2).unwrap().with_ids("random:3x2", "uniform");
    let bytes = serialize(&data);
    let back = OfflineDataset::read_jsonl(bytes.as_slice()).unwrap();
    assert_eq!(back, data);
    assert_eq!(bytes.iter().filter(|b| **b == b'\n').count(), 201);
}

#[test]
fn dataset_states_track_behavior_visitation() {
    // Long episodes with a discount that matches the mean episode length:
    // truncation at horizon H weights steps uniformly, so compare against
    // γ = 1 − 1/H as a loose proxy.
    let horizon = 200;
    let mdp = random_mdp(6, 3, 1.0 - 1.0 / horizon as f64, 4);
    let behavior = TabularPolicy::uniform(6, 3);
    let data = generate_dataset(&mdp, &behavior, 200_000, horizon, 4).unwrap();
    let empirical = dataset_state_distribution(&data).unwrap();
    let d_beta = discounted_visitation(&mdp, &behavior).unwrap();
    let tv = total_variation(empirical.as_slice().unwrap(), d_beta.as_slice().unwrap());
    assert!(tv < 0.1, "TV {tv}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mle_rows_sum_to_one(seed in 0u64..1000, n in 0usize..300, smoothing in 0.0f64..2.0) {
        let mdp = random_mdp(4, 3, 0.9, seed);
        let data = generate_dataset(&mdp, &TabularPolicy::uniform(4, 3), n, 20, seed).unwrap();
        let fit = fit_behavior_mle(&data, 4, 3, MleOptions { smoothing, strict: false }).unwrap();
        for s in 0..4 {
            prop_assert!((fit.row(s).sum() - 1.0).abs() < 1e-12);
        }
    }
}
