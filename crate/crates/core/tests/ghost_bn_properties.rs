use proptest::prelude::*;
use sdl_core::network::{GhostBatchNormState, Mlp, MlpSpec, Norm};
use sdl_core::numerics::{gaussian, Rng, Tensor};

fn column_stats(x: &Tensor, lo: usize, hi: usize, j: usize) -> (f64, f64) {
    let n = (hi - lo) as f64;
    let mean = (lo..hi).map(|r| x.row(r)[j]).sum::<f64>() / n;
    let var = (lo..hi).map(|r| (x.row(r)[j] - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chunks_are_standardized(seed in any::<u64>(), chunks in 1usize..5, ghost in 2usize..9, dim in 1usize..5) {
        let rows = chunks * ghost;
        let mut rng = Rng::new(seed, 0);
        let x = gaussian(&mut rng, &[rows, dim], 3.0, 2.0).unwrap();
        let mut state = GhostBatchNormState::new(dim, ghost, 0.1, 0.0).unwrap();
        state.gamma = (0..dim).map(|j| 0.5 + j as f64).collect();
        state.beta = (0..dim).map(|j| -1.0 + 0.3 * j as f64).collect();
        let y = state.forward_train(&x).unwrap();
        for c in 0..chunks {
            for j in 0..dim {
                let (m, s) = column_stats(&y, c * ghost, (c + 1) * ghost, j);
                prop_assert!((m - state.beta[j]).abs() < 1e-10);
                prop_assert!((s - state.gamma[j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn eval_rows_are_independent(seed in any::<u64>(), rows in 2usize..12) {
        let mut rng = Rng::new(seed, 1);
        let mut state = GhostBatchNormState::new(3, 4, 0.1, 1e-5).unwrap();
        state.forward_train(&gaussian(&mut rng, &[16, 3], 1.0, 1.5).unwrap()).unwrap();
        let x = gaussian(&mut rng, &[rows, 3], 0.0, 1.0).unwrap();
        let together = state.forward_eval(&x).unwrap();
        let mut order: Vec<usize> = (0..rows).collect();
        rng.shuffle(&mut order);
        let permuted = state.forward_eval(&x.select_rows(&order).unwrap()).unwrap();
        for (k, &r) in order.iter().enumerate() {
            let alone = state.forward_eval(&x.select_rows(&[r]).unwrap()).unwrap();
            prop_assert_eq!(alone.row(0), together.row(r));
            prop_assert_eq!(permuted.row(k), together.row(r));
        }
    }

    #[test]
    fn ghost_equal_to_batch_is_batch_norm(seed in any::<u64>(), rows in 2usize..20) {
        let mut rng = Rng::new(seed, 2);
        let x = gaussian(&mut rng, &[rows, 4], 0.0, 1.0).unwrap();
        let labels: Vec<usize> = (0..rows).map(|i| i % 3).collect();
        let mut bn = Mlp::new(MlpSpec::new(vec![4, 6, 3], Norm::Batch), &mut Rng::new(seed, 3)).unwrap();
        let mut gbn = Mlp::new(MlpSpec::new(vec![4, 6, 3], Norm::Ghost(rows)), &mut Rng::new(seed, 3)).unwrap();
        let (ga, la) = bn.loss_and_gradient(&x, &labels, None).unwrap();
        let (gb, lb) = gbn.loss_and_gradient(&x, &labels, None).unwrap();
        prop_assert_eq!(ga.data(), gb.data());
        prop_assert_eq!(la.value.to_bits(), lb.value.to_bits());
        prop_assert_eq!(bn.running_stats(), gbn.running_stats());
    }

    #[test]
    fn layer_views_alias_the_flat_vector(seed in any::<u64>(), layer in 0usize..4, delta in -2.0f64..2.0) {
        let mut a = Mlp::new(MlpSpec::new(vec![3, 5, 4, 2], Norm::Batch), &mut Rng::new(seed, 4)).unwrap();
        let mut b = a.clone();
        let layer = [0usize, 1, 3, 4][layer];
        let start = a.layer_params(0).as_ptr() as usize;
        let offset = (a.layer_params(layer).as_ptr() as usize - start) / std::mem::size_of::<f64>();
        a.layer_params_mut(layer)[0] += delta;
        b.params_mut().w_mut()[offset] += delta;
        prop_assert_eq!(a.params().w(), b.params().w());
        prop_assert_eq!(a.weight_distance().to_bits(), b.weight_distance().to_bits());
        prop_assert!((a.weight_distance() - delta.abs()).abs() < 1e-15);
    }
}
