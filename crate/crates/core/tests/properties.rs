use proptest::prelude::*;

use relrank::trainer::{grad_check, random_instance, split_validation, InstanceShape};
use relrank::{
    ensemble_mean, evaluate_retrieval, generate_dataset, relevance_matrix, train, DirectionWeights,
    LossConfig, Matrix, OptimizerConfig, RelevanceMode, SynthConfig, TrainConfig,
};

#[test]
fn gradients_match_finite_differences_on_all_directions() {
    let shape = InstanceShape::default();
    for cfg in [
        LossConfig::fixed(0.2),
        LossConfig::relevance_margin(),
        LossConfig::ranp(0.15, 0.2),
        LossConfig::ranp(0.4, 0.25),
    ] {
        for weights in [DirectionWeights::cross_modal(), DirectionWeights::all()] {
            for seed in 100..120 {
                let (model, batch) = random_instance(seed, &shape, &cfg, &weights).unwrap();
                let err = grad_check(&model, &batch, &cfg, &weights, 1e-4).unwrap();
                assert!(err <= 1e-4, "{:?} seed {seed}: {err:e}", cfg.variant);
            }
        }
    }
}

#[test]
fn training_loss_trends_down() {
    let data = generate_dataset::<f32>(&SynthConfig {
        n_items: 256,
        d_video: 32,
        d_text: 32,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 32,
        embedding_dim: 32,
        optimizer: OptimizerConfig::adam(1e-3),
        ..TrainConfig::default()
    };
    let (_, history) = train(&data, &cfg, None).unwrap();
    let losses = history.losses();
    let windows: Vec<f64> = losses[5..]
        .chunks_exact(10)
        .map(|w| w.iter().sum::<f64>() / 10.0)
        .collect();
    let violations = windows.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(violations <= 2, "{windows:?}");
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn trained_model_beats_initialization() {
    let data = generate_dataset::<f32>(&SynthConfig {
        n_items: 256,
        d_video: 32,
        d_text: 32,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let (tr, te) = split_validation(data.len(), 0.2, 5).unwrap();
    let (train_set, test_set) = (data.subset(&tr), data.subset(&te));
    let rel = relevance_matrix(&test_set.annotations, &test_set.annotations, RelevanceMode::Full).unwrap();
    let score = |epochs| {
        let cfg = TrainConfig {
            epochs,
            batch_size: 32,
            embedding_dim: 32,
            optimizer: OptimizerConfig::adam(3e-3),
            ..TrainConfig::default()
        };
        let (model, _) = train(&train_set, &cfg, None).unwrap();
        let sim = model.similarity_matrix(&test_set.video, &test_set.text).unwrap();
        evaluate_retrieval(&sim, &rel, 0.0).unwrap().ndcg_avg
    };
    let (early, late) = (score(1), score(30));
    assert!(late > early + 0.05, "{early} -> {late}");
}

fn matrices(k: usize, rows: usize, cols: usize) -> impl Strategy<Value = Vec<Matrix<f32>>> {
    prop::collection::vec(prop::collection::vec(-1.0f32..=1.0, rows * cols), k)
        .prop_map(move |vs| vs.into_iter().map(|v| Matrix::from_vec(rows, cols, v).unwrap()).collect())
}

proptest! {
    #[test]
    fn ensemble_is_bounded_by_inputs(ms in (1usize..6, 1usize..5, 1usize..5).prop_flat_map(|(k, r, c)| matrices(k, r, c))) {
        let mean = ensemble_mean(&ms).unwrap();
        for idx in 0..mean.as_slice().len() {
            let vals: Vec<f32> = ms.iter().map(|m| m.as_slice()[idx]).collect();
            let lo = vals.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let v = mean.as_slice()[idx];
            prop_assert!(lo <= v && v <= hi, "{v} not in [{lo}, {hi}]");
        }
    }

    #[test]
    fn ensemble_commutes_with_shift(
        ms in (1usize..6, 1usize..5, 1usize..5).prop_flat_map(|(k, r, c)| matrices(k, r, c)),
        c in -0.5f64..0.5,
    ) {
        let as64: Vec<Matrix<f64>> = ms.iter().map(|m| m.map(f64::from)).collect();
        let shifted: Vec<Matrix<f64>> = as64.iter().map(|m| m.map(|x| x + c)).collect();
        let a = ensemble_mean(&shifted).unwrap();
        let b = ensemble_mean(&as64).unwrap().map(|x| x + c);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn report_is_invariant_to_consistent_permutation(
        seed in any::<u64>(),
        n in 2usize..25,
        rot in 1usize..25,
    ) {
        let data = generate_dataset::<f32>(&SynthConfig { n_items: n, d_video: 4, d_text: 4, seed, ..SynthConfig::default() }).unwrap();
        let sim = data.video.matmul_transposed(&data.text).unwrap();
        let rel = relevance_matrix(&data.annotations, &data.annotations, RelevanceMode::Full).unwrap();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let sim_p = Matrix::from_fn(n, n, |i, j| sim.get(perm[i], perm[j]));
        let rel_p = Matrix::from_fn(n, n, |i, j| rel.get(perm[i], perm[j]));
        prop_assert_eq!(
            evaluate_retrieval(&sim, &rel, 0.0).unwrap(),
            evaluate_retrieval(&sim_p, &rel_p, 0.0).unwrap()
        );
    }
}
