mod common;

use common::*;
use gwmv_core::gw::random_coupling;
use gwmv_core::matrix::Matrix;
use gwmv_core::relational::{
    euclidean_distances, uniform_measure, validate_distance_matrix, DiscreteMeasure,
    DistanceMatrix, Embedding, MultiViewDataset, TransportPlan,
};
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(
    value: &T,
) -> serde_json::Value {
    let text = serde_json::to_string(value).unwrap();
    let back: T = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, value);
    serde_json::from_str(&text).unwrap()
}

proptest! {
    #[test]
    fn embeddings_give_valid_distance_matrices(n in 1usize..12, dim in 1usize..5, seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let y = random_points(n, dim, &mut rng(seed)).scale(scale);
        let d = euclidean_distances(&y).unwrap();
        prop_assert!(validate_distance_matrix(d.matrix().clone()).is_ok());
    }

    #[test]
    fn every_type_round_trips_through_json(n in 1usize..8, m in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_distance(n, &mut r);
        let keys = round_trip(&d);
        prop_assert!(keys.get("size").is_some() && keys.get("values").is_some());

        let mu = uniform_measure(n).unwrap();
        prop_assert!(round_trip(&mu).get("weights").is_some());

        let t = random_coupling(&mu, &uniform_measure(m).unwrap(), &mut r);
        prop_assert!(round_trip(&t).get("mass").is_some());

        let y = Embedding::new(random_points(n, m, &mut r)).unwrap();
        let keys = round_trip(&y);
        prop_assert!(keys.get("points").is_some() && keys.get("dim").is_some());

        let labels: Vec<i64> = (0..n as i64).map(|i| i % 3 - 1).collect();
        let ds = MultiViewDataset::new(vec![d.clone(), d], Some(labels)).unwrap();
        let keys = round_trip(&ds);
        prop_assert!(keys.get("views").is_some() && keys.get("labels").is_some());
    }
}

#[test]
fn round_trips_are_bit_exact_for_awkward_doubles() {
    let m = Matrix::from_rows(&[
        vec![0.0, 1.0 / 3.0, 5e-324],
        vec![1.0 / 3.0, 0.0, 1.7976931348623157e308],
        vec![5e-324, 1.7976931348623157e308, 0.0],
    ])
    .unwrap();
    let d = validate_distance_matrix(m).unwrap();
    round_trip(&d);
    let y = Embedding::new(Matrix::from_rows(&[vec![-0.1, 2.5e-300], vec![1e300, 0.7]]).unwrap())
        .unwrap();
    round_trip(&y);
}

#[test]
fn invalid_json_is_rejected_on_load() {
    let bad_distance = r#"{"size": 2, "values": [[0.0, 1.0], [2.0, 0.0]]}"#;
    assert!(serde_json::from_str::<DistanceMatrix>(bad_distance).is_err());
    let bad_measure = r#"{"weights": [0.5, 0.6]}"#;
    assert!(serde_json::from_str::<DiscreteMeasure>(bad_measure).is_err());
    let bad_plan = r#"{"mass": [[0.5, -0.1], [0.1, 0.5]]}"#;
    assert!(serde_json::from_str::<TransportPlan>(bad_plan).is_err());
}
