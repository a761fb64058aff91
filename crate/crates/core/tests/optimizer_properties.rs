use proptest::prelude::*;
use sdl_core::optimizer::{sqrt_lr_scale, SgdMomentum};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scale_identity_is_bitwise(
        grads in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..12),
        lr in 1e-3f64..1.0,
        exponent in -6i32..7,
    ) {
        let c = 2f64.powi(exponent);
        let mut a = SgdMomentum::new(lr, 0.0, 4).unwrap();
        let mut b = SgdMomentum::new(lr / c, 0.0, 4).unwrap();
        let (mut wa, mut wb) = (vec![0.5; 4], vec![0.5; 4]);
        for g in &grads {
            let scaled: Vec<f64> = g.iter().map(|v| v * c).collect();
            a.step(&mut wa, g).unwrap();
            b.step(&mut wb, &scaled).unwrap();
            prop_assert_eq!(&wa, &wb);
        }
    }

    #[test]
    fn velocity_is_geometric(g in prop::collection::vec(-5.0f64..5.0, 3), m in 0.0f64..0.99, k in 1usize..60) {
        let mut opt = SgdMomentum::new(0.1, m, 3).unwrap();
        let mut w = vec![0.0; 3];
        for _ in 0..k {
            opt.step(&mut w, &g).unwrap();
        }
        let factor = (1.0 - m.powi(k as i32)) / (1.0 - m);
        for (v, gi) in opt.velocity().iter().zip(&g) {
            prop_assert!((v - gi * factor).abs() <= 1e-12 * (1.0 + (gi * factor).abs()));
        }
    }

    #[test]
    fn sqrt_rule_preserves_lr_squared_over_batch(lr in 1e-3f64..1.0, small in 1usize..512, ratio in 1usize..64) {
        let large = small * ratio;
        let lr_large = sqrt_lr_scale(lr, small, large).unwrap();
        let lhs = lr_large * lr_large / large as f64;
        let rhs = lr * lr / small as f64;
        prop_assert!((lhs - rhs).abs() <= 1e-15 * rhs);
    }
}
