use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdc_core::fixtures::{random_nilpotent, random_regular_pencil, random_singular_pencil, well_conditioned};
use sdc_core::linalg::{block_diag, matrix_power, C64, Mat};
use sdc_core::pencil::{check_regularity, drazin_inverse, index_of, solvability_rank_test, weierstrass_decompose};
use sdc_core::polynomial::pencil_polynomials;
use sdc_core::system::{transfer_from_polynomials, transfer_function_eval};
use sdc_core::{DescriptorSystem, Tolerances};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn regular_constructions_pass_both_tests(seed in any::<u64>(), n in 1usize..=5) {
        let tol = Tolerances::default();
        let c = random_regular_pencil(&mut rng(seed), n, 50.0);
        prop_assert!(check_regularity(&c.sys, tol.regularity).regular);
        prop_assert!(solvability_rank_test(&c.sys, tol.rank));
    }

    #[test]
    fn singular_constructions_fail_both_tests(seed in any::<u64>(), n in 2usize..=5) {
        let tol = Tolerances::default();
        let sys = random_singular_pencil(&mut rng(seed), n, 50.0);
        prop_assert!(!check_regularity(&sys, tol.regularity).regular);
        prop_assert!(!solvability_rank_test(&sys, tol.rank));
    }

    #[test]
    fn determinant_degree_is_slow_dimension(seed in any::<u64>(), n in 1usize..=5) {
        let c = random_regular_pencil(&mut rng(seed), n, 50.0);
        let reg = check_regularity(&c.sys, Tolerances::default().regularity);
        prop_assert_eq!(reg.m.degree(), Some(c.n1));
    }

    #[test]
    fn weierstrass_form_recovers_construction(seed in any::<u64>(), n in 1usize..=5) {
        let c = random_regular_pencil(&mut rng(seed), n, 50.0);
        let wf = weierstrass_decompose(&c.sys, &Tolerances::default()).unwrap();
        prop_assert_eq!(wf.n1, c.n1);
        prop_assert_eq!(wf.ell, c.ell);
        prop_assert!(wf.residual_e <= 1e-8 && wf.residual_a <= 1e-8, "{} {}", wf.residual_e, wf.residual_a);
        if wf.n2 > 0 {
            prop_assert!(matrix_power(&wf.nil, wf.ell).amax() <= 1e-8);
        }
        // W is similar to the constructed slow block: equal characteristic polynomials
        if c.n1 > 0 {
            let mut a = c.w.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect::<Vec<_>>();
            let mut b = wf.w.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect::<Vec<_>>();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.0 - y.0).abs() + (x.1 - y.1).abs() < 1e-6, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn index_of_e_matches_under_similarity(seed in any::<u64>(), n1 in 0usize..=3, n2 in 1usize..=3) {
        let mut r = rng(seed);
        let ell = r.random_range(1..=n2);
        let nil = random_nilpotent(&mut r, n2, ell);
        let t = well_conditioned(&mut r, n1 + n2, 20.0);
        let t_inv = t.clone().try_inverse().unwrap();
        let e = &t * block_diag(&Mat::identity(n1, n1), &nil) * &t_inv;
        prop_assert_eq!(index_of(&e, 1e-10), ell);
    }

    #[test]
    fn drazin_inverse_identities(seed in any::<u64>(), n in 1usize..=5) {
        let c = random_regular_pencil(&mut rng(seed), n, 50.0);
        let e = &c.sys.e;
        let k = index_of(e, 1e-10);
        let d = drazin_inverse(e, 1e-10);
        let scale = 1.0 + d.amax() * d.amax() * e.amax();
        prop_assert!((&d * e * &d - &d).amax() <= 1e-7 * scale);
        prop_assert!((e * &d - &d * e).amax() <= 1e-7 * scale);
        let ek = matrix_power(e, k);
        prop_assert!((&ek * e * &d - &ek).amax() <= 1e-7 * scale);
    }

    #[test]
    fn transfer_formulas_agree(seed in any::<u64>(), n in 1usize..=4) {
        let mut r = rng(seed);
        let c = random_regular_pencil(&mut r, n, 20.0);
        let tol = Tolerances::default();
        let wf = weierstrass_decompose(&c.sys, &tol).unwrap();
        let pp = pencil_polynomials(&c.sys, tol.regularity).unwrap();
        for _ in 0..5 {
            let s = C64::new(r.random_range(0.2..2.0), r.random_range(-3.0..3.0));
            let Ok(tv) = transfer_function_eval(&c.sys, &wf, s, &tol) else { continue };
            prop_assert!(tv.relative_gap() <= 1e-7, "gap {}", tv.relative_gap());
            let g = transfer_from_polynomials(&pp, c.sys.h, s).unwrap();
            let rel = (g - tv.value()).norm() / tv.value().norm().max(1e-12);
            prop_assert!(rel <= 1e-6, "polynomial form off by {rel}");
        }
    }
}

#[test]
fn zero_pencil_is_singular() {
    let z = Mat::zeros(2, 2);
    let v = sdc_core::linalg::Vector::zeros(2);
    let sys = DescriptorSystem::new(z.clone(), z, v.clone(), v.clone(), v, 1.0).unwrap();
    assert!(!check_regularity(&sys, 1e-9).regular);
    assert!(!solvability_rank_test(&sys, 1e-10));
}
