use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdc_core::linalg::{Mat, C64};
use sdc_core::polynomial::{
    delay_stability_margin_with, solve_diophantine, sylvester_system, MarginOptions, Polynomial,
};
use sdc_core::Error;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn random_poly(rng: &mut ChaCha8Rng, degree: usize, monic: bool) -> Polynomial {
    let mut c: Vec<f64> = (0..=degree).map(|_| rng.random_range(-2.0..2.0)).collect();
    if monic {
        c[degree] = 1.0;
    } else if c[degree].abs() < 0.2 {
        c[degree] = 0.5;
    }
    Polynomial::new(c)
}

/// Monic with all roots in `[-hi, -lo]` (real) or as complex pairs with that real part.
fn stable_poly(rng: &mut ChaCha8Rng, degree: usize, lo: f64, hi: f64) -> Polynomial {
    let mut roots = Vec::new();
    while roots.len() < degree {
        let re = -rng.random_range(lo..hi);
        if degree - roots.len() >= 2 && rng.random_bool(0.4) {
            let im = rng.random_range(0.2..3.0);
            roots.push(C64::new(re, im));
            roots.push(C64::new(re, -im));
        } else {
            roots.push(C64::new(re, 0.0));
        }
    }
    Polynomial::from_roots(&roots)
}

fn dense_grid_max(
    m0: &Polynomial,
    m1: &Polynomial,
    num: &Polynomial,
    h: f64,
    sigma: f64,
    omega_max: f64,
    points: usize,
) -> f64 {
    (0..=points)
        .map(|i| {
            let s = C64::new(sigma, omega_max * i as f64 / points as f64);
            let den = m0.eval_complex(s) + m1.eval_complex(s) * (-h * s).exp();
            num.eval_complex(s).norm() / ((2.0 * h * sigma).exp() * den.norm())
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn diophantine_solution_is_exact_and_unique(seed in any::<u64>(), na in 1usize..=4, nb_off in 0usize..=1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_poly(&mut rng, na, true);
        let b = random_poly(&mut rng, na - nb_off.min(na), false);
        let c = random_poly(&mut rng, 2 * na - 1, false);
        let deg = Some(na - 1);
        let sol = match solve_diophantine(&a, &b, &c, deg, deg) {
            Ok(s) => s,
            // random pairs are coprime with probability one, but the draw may be close to a common root
            Err(Error::SingularSylvester) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        let lhs = &(&a * &sol.x) + &(&b * &sol.y);
        let res = (&lhs - &c).norm_inf() / (1.0 + c.norm_inf());
        prop_assert!(res <= 1e-9, "residual {res}");

        // uniqueness: solve the permuted square system by LU and compare
        let (m, rhs) = sylvester_system(&a, &b, &c, deg, deg);
        prop_assert_eq!(m.nrows(), m.ncols());
        let n = m.ncols();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pm = Mat::from_fn(n, n, |i, j| m[(perm[i], perm[n - 1 - j])]);
        let prhs = Mat::from_fn(n, 1, |i, _| rhs[perm[i]]);
        let z = pm.lu().solve(&prhs).unwrap();
        let mut unknowns = vec![0.0; n];
        for j in 0..n {
            unknowns[perm[n - 1 - j]] = z[j];
        }
        for k in 0..na {
            prop_assert!((unknowns[k] - sol.x.coeff(k)).abs() <= 1e-7 * (1.0 + sol.x.norm_inf()));
            prop_assert!((unknowns[na + k] - sol.y.coeff(k)).abs() <= 1e-7 * (1.0 + sol.y.norm_inf()));
        }
    }

    #[test]
    fn common_root_makes_sylvester_singular(seed in any::<u64>(), na in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let root = Polynomial::new(vec![-rng.random_range(-3.0..3.0), 1.0]);
        let a = &root * &random_poly(&mut rng, na, true);
        let b = &root * &random_poly(&mut rng, na, false);
        let c = random_poly(&mut rng, 2 * na + 1, false);
        let deg = Some(na);
        prop_assert!(matches!(solve_diophantine(&a, &b, &c, deg, deg), Err(Error::SingularSylvester)));
    }

    #[test]
    fn margin_matches_dense_grid(seed in any::<u64>(), m in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m0 = stable_poly(&mut rng, m, 0.8, 4.0);
        let m1 = random_poly(&mut rng, m - 2, false).scale(0.1);
        let num = random_poly(&mut rng, m - 1, false).scale(0.2);
        let h = rng.random_range(0.2..2.0);
        let v1 = rng.random_range(0.05..0.3);
        let rep = delay_stability_margin_with(&m0, &m1, &num, h, v1, &MarginOptions::default()).unwrap();
        // roots lie within |s| < 6, so the peak is well inside [0, 40]
        let grid = dense_grid_max(&m0, &m1, &num, h, -v1, 40.0, 40_000);
        prop_assert!(rep.supremum >= grid * (1.0 - 1e-9), "certificate {} below grid {}", rep.supremum, grid);
        prop_assert!((rep.supremum - grid).abs() <= 1e-3 * rep.supremum.max(1e-12), "{} vs {}", rep.supremum, grid);
    }

    #[test]
    fn margin_is_linear_in_numerator(seed in any::<u64>(), k in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m0 = stable_poly(&mut rng, 3, 1.0, 3.0);
        let num = random_poly(&mut rng, 1, false);
        let opts = MarginOptions::default();
        let a = delay_stability_margin_with(&m0, &Polynomial::zero(), &num, 1.0, 0.2, &opts).unwrap().supremum;
        let b = delay_stability_margin_with(&m0, &Polynomial::zero(), &num.scale(k), 1.0, 0.2, &opts).unwrap().supremum;
        prop_assert!((b - k * a).abs() <= 1e-9 * b.max(1e-300));
    }

    #[test]
    fn product_roots_are_union(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = stable_poly(&mut rng, 2, 0.5, 3.0);
        let q = stable_poly(&mut rng, 2, 0.5, 3.0);
        let pq = &p * &q;
        for r in p.roots().unwrap().into_iter().chain(q.roots().unwrap()) {
            prop_assert!(pq.eval_complex(r).norm() <= 1e-8 * (1.0 + pq.norm_inf()));
        }
    }
}

#[test]
fn sequential_and_parallel_margins_agree() {
    use sdc_core::par::Execution;
    let m0 = Polynomial::from_real_roots(&[-1.5, -4.0, -5.0]);
    let num = Polynomial::new(vec![0.8, 0.3]);
    let run = |execution| {
        let opts = MarginOptions { execution, ..MarginOptions::default() };
        delay_stability_margin_with(&m0, &Polynomial::zero(), &num, 1.0, 0.25, &opts).unwrap()
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

