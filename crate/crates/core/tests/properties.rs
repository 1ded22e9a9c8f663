use fst24_core::matrix::{Layout, Matrix};
use fst24_core::optim::{flip_rate, flip_ratio, masked_decay_gradient, sampling_window};
use fst24_core::oracle;
use fst24_core::sparsity::{
    enumerate_patterns, inclusion_probabilities, mvue_prune, prune_2of4, retained_l1, transposable_search_conv,
    transposable_search_greedy, BinaryMask, Direction, WarmSearch,
};
use fst24_core::spmm::{compress, decompress, spmm};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, Layout::RowMajor, v).unwrap())
}

fn blocky() -> impl Strategy<Value = Matrix> {
    (1usize..4, 1usize..4).prop_flat_map(|(r, c)| matrix(4 * r, 4 * c))
}

fn mask_bits(len: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pruning_is_idempotent(w in blocky()) {
        for direction in [Direction::RowWise, Direction::ColWise] {
            let once = prune_2of4(&w, direction).unwrap();
            let twice = prune_2of4(&once.values, direction).unwrap();
            prop_assert!(once.values.bitwise_eq(&twice.values));
            prop_assert!(once.mask.validate().is_ok());
        }
    }

    #[test]
    fn search_ignores_sign_and_power_of_two_scale(w in blocky(), k in -8i32..8) {
        let table = enumerate_patterns();
        let base = transposable_search_conv(&w, &table).unwrap();
        let scaled = w.scale(-(2.0f64).powi(k));
        prop_assert_eq!(transposable_search_conv(&scaled, &table).unwrap(), base.clone());
        prop_assert_eq!(transposable_search_greedy(&scaled).unwrap(), transposable_search_greedy(&w).unwrap());
    }

    #[test]
    fn conv_dominates_greedy_which_is_half_optimal(w in blocky()) {
        let table = enumerate_patterns();
        let conv = transposable_search_conv(&w, &table).unwrap();
        let greedy = transposable_search_greedy(&w).unwrap();
        prop_assert!(conv.validate().is_ok() && greedy.validate().is_ok());
        let opt: f64 = (0..w.rows() / 4)
            .flat_map(|br| (0..w.cols() / 4).map(move |bc| (br, bc)))
            .map(|(br, bc)| oracle::optimal_retained(&oracle::block(&w, br, bc)))
            .sum();
        let c = retained_l1(&w, &conv).unwrap();
        let g = retained_l1(&w, &greedy).unwrap();
        prop_assert!(c >= g);
        prop_assert!(g >= 0.5 * opt - 1e-9);
        prop_assert!((c - opt).abs() <= 1e-9 * opt.max(1.0));
        // The transposed weight is served by the transposed mask.
        prop_assert_eq!(transposable_search_conv(&w.clone().transpose(), &table).unwrap(), conv.transpose());
    }

    #[test]
    fn compress_roundtrip_and_spmm_exact(w in blocky(), b in matrix(12, 5), seed in any::<u64>()) {
        let a = mvue_prune(&w, Direction::RowWise, seed).unwrap();
        let c = compress(&a).unwrap();
        let dense = decompress(&c).unwrap();
        prop_assert!(dense.bitwise_eq(&a.values));
        prop_assert_eq!(c.mask().unwrap(), a.mask.clone());
        if w.cols() == 12 {
            prop_assert!(spmm(&c, &b).unwrap().bitwise_eq(&oracle::naive_matmul(&dense, &b)));
        }
    }

    #[test]
    fn inclusion_probabilities_are_a_distribution(x in prop::array::uniform4(-5.0f64..5.0)) {
        let pi = inclusion_probabilities(x);
        prop_assert!((pi.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        for (p, q) in pi.iter().zip(oracle::water_fill(x)) {
            prop_assert!((0.0..=1.0).contains(p));
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn flip_rate_is_a_symmetric_distance(a in mask_bits(32), b in mask_bits(32)) {
        let ab = flip_rate(&a, &b).unwrap();
        prop_assert_eq!(ab, flip_rate(&b, &a).unwrap());
        prop_assert_eq!(ab == 0.0, a == b);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn mu_ignores_common_scale(
        sparse in prop::collection::vec(0.0f64..1.0, 50),
        dense in prop::collection::vec(0.01f64..1.0, 50),
        scale in 1e-3f64..1e3,
    ) {
        let w = sampling_window(50);
        let mu = flip_ratio(&sparse, &dense, w.clone()).unwrap();
        let s: Vec<f64> = sparse.iter().map(|r| r * scale).collect();
        let d: Vec<f64> = dense.iter().map(|r| r * scale).collect();
        prop_assert!((flip_ratio(&s, &d, w).unwrap() - mu).abs() <= 1e-12 * mu.max(1.0));
    }

    #[test]
    fn masked_decay_leaves_kept_gradients(
        g in prop::collection::vec(-1.0f64..1.0, 16),
        w in prop::collection::vec(-1.0f64..1.0, 16),
        m in mask_bits(16),
        lambda in 0.0f64..1.0,
    ) {
        let out = masked_decay_gradient(&g, &w, &m, lambda).unwrap();
        for k in 0..16 {
            if m[k] {
                prop_assert_eq!(out[k].to_bits(), g[k].to_bits());
            } else {
                prop_assert_eq!(out[k], g[k] + lambda * w[k]);
            }
        }
    }

    #[test]
    fn warm_search_equals_full_search(
        w in matrix(8, 8),
        steps in prop::collection::vec(matrix(8, 8), 1..6),
        size in prop::sample::select(vec![1e-4, 1e-2, 1.0]),
    ) {
        let table = enumerate_patterns();
        let mut cur = w;
        let mut warm = WarmSearch::new(&cur, &table).unwrap();
        for s in steps {
            cur = cur.zip_map(&s, |a, b| a + size * b).unwrap();
            let tracked = warm.update(&cur).unwrap();
            prop_assert_eq!(&tracked, &transposable_search_conv(&cur, &table).unwrap());
            prop_assert_eq!(tracked.count_ones() * 2, tracked.shape().0 * tracked.shape().1);
        }
    }
}
