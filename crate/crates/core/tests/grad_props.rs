//! Property tests for the autodiff core: analytic gradients of every layer
//! primitive match central finite differences on random shapes and seeds.

use objnav_core::grad::{grad_check, ParamSet, Tensor};
use objnav_core::rng::Rng;
use proptest::prelude::*;

fn random_tensor(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols).map(|_| rng.uniform(-1.5, 1.5)).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// linear -> tanh -> sum against finite differences.
    #[test]
    fn linear_tanh_chain_matches_fd(seed in 0u64..1_000_000, r in 1usize..4, i in 1usize..5, o in 1usize..5) {
        let mut rng = Rng::new(seed);
        let x = random_tensor(&mut rng, r, i);
        let mut params = ParamSet::new();
        params.register("w", random_tensor(&mut rng, i, o)).unwrap();
        params.register("b", random_tensor(&mut rng, 1, o)).unwrap();
        let report = grad_check(&params, 1e-5, 0, &mut rng, |_, tape, ids| {
            let xi = tape.constant(x.clone())?;
            let lin = tape.linear(xi, ids[0], ids[1])?;
            let act = tape.tanh(lin)?;
            tape.sum_all(act)
        }).unwrap();
        prop_assert!(report.max_rel_err <= 1e-6, "rel err {}", report.max_rel_err);
    }

    /// softmax / log-softmax / gather composite against finite differences.
    #[test]
    fn softmax_pick_matches_fd(seed in 0u64..1_000_000, n in 2usize..7) {
        let mut rng = Rng::new(seed ^ 0xABCD);
        let mut params = ParamSet::new();
        params.register("v", random_tensor(&mut rng, 1, n)).unwrap();
        let idx = rng.usize_below(n);
        let report = grad_check(&params, 1e-5, 0, &mut rng, |_, tape, ids| {
            let sm = tape.softmax_row(ids[0])?;
            let lsm = tape.log_softmax_row(ids[0])?;
            let a = tape.gather(sm, idx)?;
            let b = tape.gather(lsm, (idx + 1) % n)?;
            tape.add(a, b)
        }).unwrap();
        prop_assert!(report.max_rel_err <= 1e-6, "rel err {}", report.max_rel_err);
    }

    /// Elementwise stack (sigmoid, relu shifted off the kink, abs, mul)
    /// against finite differences.
    #[test]
    fn elementwise_stack_matches_fd(seed in 0u64..1_000_000, n in 1usize..6) {
        let mut rng = Rng::new(seed ^ 0x77);
        let mut params = ParamSet::new();
        // Keep magnitudes well away from relu/abs kinks so FD is well posed.
        let data: Vec<f64> = (0..n)
            .map(|_| {
                let v = rng.uniform(0.2, 1.5);
                if rng.chance(0.5) { v } else { -v }
            })
            .collect();
        params.register("v", Tensor::row(data)).unwrap();
        let report = grad_check(&params, 1e-6, 0, &mut rng, |_, tape, ids| {
            let s = tape.sigmoid(ids[0])?;
            let r = tape.relu(ids[0])?;
            let a = tape.abs(ids[0])?;
            let m = tape.mul(s, r)?;
            let m2 = tape.mul(m, a)?;
            tape.sum_all(m2)
        }).unwrap();
        prop_assert!(report.max_rel_err <= 1e-5, "rel err {}", report.max_rel_err);
    }

    /// Matmul in both orientations against finite differences.
    #[test]
    fn matmul_orientations_match_fd(seed in 0u64..1_000_000, r in 1usize..4, k in 1usize..4, c in 1usize..4) {
        let mut rng = Rng::new(seed ^ 0xBEE);
        let mut params = ParamSet::new();
        params.register("a", random_tensor(&mut rng, r, k)).unwrap();
        params.register("b", random_tensor(&mut rng, k, c)).unwrap();
        params.register("bt", random_tensor(&mut rng, c, k)).unwrap();
        let report = grad_check(&params, 1e-5, 0, &mut rng, |_, tape, ids| {
            let m1 = tape.matmul(ids[0], ids[1])?;
            let m2 = tape.matmul_nt(ids[0], ids[2])?;
            let s1 = tape.sum_all(m1)?;
            let s2 = tape.sum_all(m2)?;
            let p = tape.mul(s1, s2)?;
            tape.sum_all(p)
        }).unwrap();
        prop_assert!(report.max_rel_err <= 1e-6, "rel err {}", report.max_rel_err);
    }

    /// Softmax output sums to one and is shift invariant.
    #[test]
    fn softmax_normalization(seed in 0u64..1_000_000, n in 1usize..9, shift in -20.0f64..20.0) {
        let mut rng = Rng::new(seed ^ 0x50F7);
        let v: Vec<f64> = (0..n).map(|_| rng.uniform(-30.0, 30.0)).collect();
        let s = objnav_core::grad::softmax_value(&Tensor::row(v.clone())).unwrap();
        let sum: f64 = s.data().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        let shifted = objnav_core::grad::softmax_value(
            &Tensor::row(v.iter().map(|x| x + shift).collect()),
        ).unwrap();
        for (a, b) in s.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
