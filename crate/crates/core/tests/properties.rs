use std::sync::Arc;

use proptest::prelude::*;

use opsys_core::conic::{max_lambda_min, min_linear, ConeProblem};
use opsys_core::cpmaps::{choi_matrix, map_from_choi, random_ucp};
use opsys_core::matcore::{eig_herm, orthonormalize, HermMatrix};
use opsys_core::opsys::{cone_member, wn_quotient_system, SystemElement};
use opsys_core::random::{random_hermitian, seeded, trial_rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigen_reconstructs(seed in any::<u64>(), n in 1usize..=8) {
        let a = random_hermitian(&mut seeded(seed), n);
        let e = eig_herm(&a).unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(e.reconstruct().sub(&a).frob_norm() < 1e-11 * (1.0 + a.frob_norm()));
    }

    #[test]
    fn choi_roundtrip(seed in any::<u64>(), n in 1usize..=4, d in 1usize..=4) {
        let f = random_ucp(n, d, d, &mut seeded(seed)).unwrap();
        let back = map_from_choi(n, d, &choi_matrix(&f).unwrap()).unwrap();
        for (a, b) in f.images().iter().zip(back.images()) {
            prop_assert!((a - b).max_abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_basis(seed in any::<u64>(), n in 2usize..=4, k in 1usize..=6) {
        let mut rng = seeded(seed);
        let mut v: Vec<HermMatrix> = (0..k).map(|_| random_hermitian(&mut rng, n)).collect();
        // a dependent vector and a rounding-level one are both dropped
        v.push(v[0].add(&v[k - 1]));
        v.push(v[0].scale(1e-17));
        let (basis, kept) = orthonormalize(&v);
        prop_assert_eq!(basis.len(), k.min(n * n));
        prop_assert!(kept.iter().all(|&i| i < k));
        for (s, a) in basis.iter().enumerate() {
            for (t, b) in basis.iter().enumerate() {
                let want = if s == t { 1.0 } else { 0.0 };
                prop_assert!((a.inner(b) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn density_slice_minimum_is_lambda_min(seed in any::<u64>(), n in 1usize..=6) {
        let a = random_hermitian(&mut seeded(seed), n);
        let c = min_linear(&ConeProblem::new(n).with_objective(a.clone()), (HermMatrix::identity(n), 1.0)).unwrap();
        let exact = eig_herm(&a).unwrap().min();
        prop_assert!((c.lower_bound.unwrap() - exact).abs() < 1e-6);
        prop_assert!(c.objective_value.unwrap() >= c.lower_bound.unwrap() - 1e-9);
    }

    #[test]
    fn lambda_max_brackets(seed in any::<u64>(), n in 2usize..=5, k in 0usize..=3) {
        let mut rng = seeded(seed);
        let x0 = random_hermitian(&mut rng, n);
        // traceless directions keep the supremum finite
        let dirs: Vec<HermMatrix> = (0..k).map(|_| {
            let d = random_hermitian(&mut rng, n);
            d.shift(-d.trace() / n as f64)
        }).collect();
        let r = max_lambda_min(&x0, &dirs).unwrap();
        prop_assert!(!r.unbounded);
        prop_assert!(r.value >= eig_herm(&x0).unwrap().min() - 1e-9);
        prop_assert!(r.value <= r.upper + 1e-9);
        let mut m = x0.clone();
        for (c, d) in r.coeffs.iter().zip(&dirs) {
            m.axpy(*c, d);
        }
        prop_assert!((eig_herm(&m).unwrap().min() - r.value).abs() < 1e-9);
    }

    #[test]
    fn adding_the_unit_keeps_positivity(seed in any::<u64>(), s in 0.0f64..2.0) {
        let w1 = Arc::new(wn_quotient_system(1).unwrap().0);
        let lift = random_hermitian(&mut seeded(seed), 2).into_matrix();
        let x = SystemElement::from_ambient(w1, 1, &lift).unwrap();
        let c = cone_member(&x, 0.0).unwrap();
        let margin = c.lower_bound.unwrap();
        let shifted = cone_member(&x.add_unit(s), 0.0).unwrap();
        prop_assert!((shifted.lower_bound.unwrap() - (margin + s)).abs() < 1e-7);
    }

    #[test]
    fn trial_streams_are_reproducible(seed in any::<u64>(), index in any::<u64>()) {
        let a = random_hermitian(&mut trial_rng(seed, index), 3);
        let b = random_hermitian(&mut trial_rng(seed, index), 3);
        prop_assert_eq!(a, b);
    }
}
