mod oracle;

use oracle::*;
use proptest::prelude::*;
use specfilter_core::filter::Decomposition;
use specfilter_core::{build_branches, cfg_combine, ScheduleConfig};

#[test]
fn constructed_key_branches() {
    let mut r = rng(8);
    let us = orthonormal(&mut r, 7, 2);
    let vs = orthonormal(&mut r, 5, 2);
    let k = sum_of_outer(&[5.0, 0.5], &us, &vs);
    let v = sum_of_outer(&[3.0, 0.25], &orthonormal(&mut r, 7, 2), &orthonormal(&mut r, 5, 2));
    let sched = ScheduleConfig { variant: specfilter_core::ScheduleVariant::Fixed, alpha0: 0.8, ..Default::default() };
    let b = build_branches(&[(k.clone(), v)], 1, &sched, 3, 5.0).unwrap();

    let tail = sum_of_outer(&[0.5], &us[1..], &vs[1..]);
    assert!(frobenius_distance(&b.uncond_kv[0].0, &tail) <= 1e-9);

    // cond + (1 - e^{-α σ}) · uncond restores the original key
    let restored = b.cond_kv[0].0.add(&b.uncond_kv[0].0.scale(1.0 - (-0.8f64 * 0.5).exp()).unwrap()).unwrap();
    assert!(frobenius_distance(&restored, &k) <= 1e-9);
}

#[test]
fn zero_tail_is_exact_zero_negative() {
    let mut r = rng(4);
    let us = orthonormal(&mut r, 6, 1);
    let vs = orthonormal(&mut r, 4, 1);
    let k = sum_of_outer(&[2.0], &us, &vs);
    let b = build_branches(&[(k.clone(), k.clone())], 1, &ScheduleConfig::default(), 0, 5.0).unwrap();
    let zero = specfilter_core::Matrix::zeros(6, 4);
    for m in [&b.uncond_kv[0].0, &b.uncond_kv[0].1] {
        assert!(m.data().iter().zip(zero.data()).all(|(a, z)| a.to_bits() == z.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cfg_identities(seed in any::<u64>(), omega in -10.0f64..10.0) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, 3, 4);
        let b = random_matrix(&mut r, 3, 4);
        let c = random_matrix(&mut r, 3, 4);
        let self_g = cfg_combine(&a, &a, omega).unwrap();
        prop_assert!(frobenius_distance(&self_g, &a) <= 1e-12 * a.frobenius_norm().max(1.0) * omega.abs().max(1.0));
        // linear in the conditional argument
        let lhs = cfg_combine(&a.add(&c).unwrap(), &b.add(&b).unwrap(), omega).unwrap();
        let rhs = cfg_combine(&a, &b, omega).unwrap().add(&cfg_combine(&c, &b, omega).unwrap()).unwrap();
        prop_assert!(frobenius_distance(&lhs, &rhs) <= 1e-12 * 10.0 * omega.abs().max(1.0));
    }

    #[test]
    fn tail_is_orthogonal_to_main(seed in any::<u64>(), k in 0usize..4, case in 0usize..6) {
        let mut r = rng(seed);
        let x = matrix_family(&mut r, case, 7, 5);
        let d = Decomposition::new(&x).unwrap();
        let main = d.main(k).unwrap();
        let tail = d.tail(k).unwrap();
        let fro2 = x.frobenius_norm().powi(2);
        prop_assert!(tail.frobenius_norm() <= x.frobenius_norm() * (1.0 + 1e-12));
        prop_assert!(main.frobenius_inner(&tail).unwrap().abs() <= 1e-9 * fro2.max(1e-300));
    }
}
