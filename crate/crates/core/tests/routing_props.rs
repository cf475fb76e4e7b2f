//! Property tests for top-k routing.

use moe_lab::layers::{Router, RouterForm};
use moe_lab::linalg::DenseMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #[test]
    fn gate_weights_form_a_distribution(
        r in matrix(8, 4),
        x in prop::collection::vec(-3.0f64..3.0, 4),
        k in 1usize..=8,
        beta in 0.0f64..5.0,
    ) {
        let router = Router::new(RouterForm::Full(r), 8, k, beta).unwrap();
        let g = router.gate(&x, None).unwrap();
        prop_assert_eq!(g.indices.len(), k);
        prop_assert!(g.indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(g.weights.iter().all(|&w| w >= 0.0));
        prop_assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn selection_is_invariant_to_positive_scaling(
        r in matrix(8, 4),
        x in prop::collection::vec(-3.0f64..3.0, 4),
        k in 1usize..=8,
        c in 0.01f64..100.0,
    ) {
        let router = Router::new(RouterForm::Full(r), 8, k, 1.0).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let (s, _) = router.scores(&x).unwrap();
        // exact ties can flip under rounding; only compare well-separated cases
        prop_assume!(moe_lab::layers::top_k_margin(&s, k) > 1e-9);
        prop_assert_eq!(
            router.gate(&x, None).unwrap().indices,
            router.gate(&scaled, None).unwrap().indices
        );
    }

    #[test]
    fn low_rank_factors_match_their_product(
        r1 in matrix(8, 3),
        r2 in matrix(3, 5),
        x in prop::collection::vec(-3.0f64..3.0, 5),
        k in 1usize..=8,
    ) {
        let full = Router::new(RouterForm::Full(r1.matmul(&r2).unwrap()), 8, k, 1.0).unwrap();
        let low = Router::new(RouterForm::LowRank { r1, r2 }, 8, k, 1.0).unwrap();
        let (s, _) = full.scores(&x).unwrap();
        prop_assume!(moe_lab::layers::top_k_margin(&s, k) > 1e-9);
        let a = full.gate(&x, None).unwrap();
        let b = low.gate(&x, None).unwrap();
        prop_assert_eq!(&a.indices, &b.indices);
        for (u, v) in a.weights.iter().zip(&b.weights) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }
}
