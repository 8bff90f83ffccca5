//! Reference plants and randomized pencil constructions.
//!
//! Used by the test suites, the benches and the command-line examples. The
//! random constructors take an explicit RNG so that every sweep is
//! reproducible from a seed.

use nalgebra::linalg::QR;
use rand::Rng;

use crate::adaptive::{EstimatorConfig, ParameterLayout};
use crate::controller::{synthesize_pole_placement, PlacementTargets};
use crate::linalg::{block_diag, Mat, Vector};
use crate::pencil::DescriptorSystem;
use crate::polynomial::{pencil_polynomials, LineSide, Polynomial};
use crate::sim::{Control, EstimatorSetup, Scenario, SignalSpec};

fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, v)
}

fn v(x: &[f64]) -> Vector {
    Vector::from_vec(x.to_vec())
}

/// `E = diag(1, 0)`, `A = diag(-1, 1)`, `b = c = (1, 1)`, no delayed input, `h = 1`.
pub fn s2() -> DescriptorSystem {
    DescriptorSystem::new(
        m(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        m(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
        v(&[1.0, 1.0]),
        v(&[0.0, 0.0]),
        v(&[1.0, 1.0]),
        1.0,
    )
    .expect("valid fixture")
}

/// `E = diag(1, 0)`, `A = diag(-1, 1)`, `b = (k, -1)`, `d = (delta, 0)`, `c = (1, 1)`, `h = 1`.
///
/// `M = s + 1`, `Delta0 = s + 1 + k`, `Delta1 = delta`.
pub fn s2_class(k: f64, delta: f64) -> DescriptorSystem {
    DescriptorSystem::new(
        m(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        m(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
        v(&[k, -1.0]),
        v(&[delta, 0.0]),
        v(&[1.0, 1.0]),
        1.0,
    )
    .expect("valid fixture")
}

/// One slow state and a nilpotent chain of length two (`ell = 2`).
pub fn index_two() -> DescriptorSystem {
    DescriptorSystem::new(
        m(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
        m(3, 3, &[-2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        v(&[1.0, 0.5, 1.0]),
        v(&[0.3, 0.0, 0.0]),
        v(&[1.0, 1.0, 0.5]),
        0.5,
    )
    .expect("valid fixture")
}

/// Two slow states mixed by a non-diagonal `E` and one algebraic state.
pub fn coupled_three() -> DescriptorSystem {
    DescriptorSystem::new(
        m(3, 3, &[1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 1.0, 0.5, 0.0]),
        m(3, 3, &[-1.0, 1.0, 0.0, -2.0, -3.0, 0.0, -1.0, 1.0, 1.0]),
        v(&[0.0, 1.0, 1.0]),
        v(&[0.2, 0.1, 0.0]),
        v(&[1.0, 0.0, 1.0]),
        1.0,
    )
    .expect("valid fixture")
}

/// Named fixtures used for transfer-function and analysis checks.
pub fn named_fixtures() -> Vec<(&'static str, DescriptorSystem)> {
    vec![
        ("s2", s2()),
        ("s2_delayed", s2_class(5.0, 0.5)),
        ("index_two", index_two()),
        ("coupled_three", coupled_three()),
    ]
}

/// Pole-placement targets for the [`s2_class`] plants:
/// `F0 = s + 2`, `M0* = (s + 1.5)(s + 4)(s + 5)`, `M1* = 0`.
pub fn s2_targets() -> PlacementTargets {
    PlacementTargets {
        f: None,
        f0: Polynomial::new(vec![2.0, 1.0]),
        m0_star: Polynomial::from_real_roots(&[-1.5, -4.0, -5.0]),
        m1_star: Polynomial::zero(),
        t: None,
        l: None,
        h: 1.0,
        v: 0.5,
        v1: 0.25,
        ell: 1,
        line: LineSide::Left,
    }
}

/// Adaptive loop on `s2_class(5, 0)` with filter `F = s + 2`, a multi-sine
/// reference, a small slow-state disturbance and estimates started 20% off.
/// With `biased = false` the estimates start at the true parameters and the
/// disturbance is zero.
pub fn adaptive_s2_scenario(t_end: f64, dt: f64, biased: bool) -> Scenario {
    let sys = s2_class(5.0, 0.0);
    let pp = pencil_polynomials(&sys, 1e-9).and_then(|pp| pp.normalized()).expect("regular fixture");
    let base = synthesize_pole_placement(&pp, &s2_targets()).expect("certified fixture");
    let f = Polynomial::new(vec![2.0, 1.0]);
    let truth = ParameterLayout { p: 1 }.pack(&pp, &f).expect("monic fixture");
    let noise = |amplitude, components, seed| {
        SignalSpec::Noise { amplitude, components, omega_max: 3.0, seed: Some(seed) }.build(0).expect("valid signal")
    };
    let mut sc = Scenario::new(sys, Control::Adaptive(base), t_end, dt);
    sc.reference = noise(1.0, 8, 3);
    let theta0 = if biased {
        sc.eta1 = vec![noise(0.002, 6, 11)];
        truth.iter().map(|v| 1.2 * v).collect()
    } else {
        truth
    };
    let config = EstimatorConfig { alpha1: 20.0, p0: 100.0, eps1: 1e-3, eps2: 1e-4, ..EstimatorConfig::default() };
    sc.estimator = Some(EstimatorSetup { f, theta0: Some(theta0), omega: None, config, k_syn: 10 });
    sc
}

/// Random orthogonal factor times log-uniform singular values in `[cond^-1/2, cond^1/2]`,
/// so the condition number is at most `cond`.
pub fn well_conditioned<R: Rng>(rng: &mut R, n: usize, cond: f64) -> Mat {
    let orth = |rng: &mut R| {
        let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        QR::new(g).q()
    };
    let u = orth(rng);
    let w = orth(rng);
    let half = 0.5 * cond.ln();
    let s = Mat::from_diagonal(&Vector::from_fn(n, |_, _| rng.random_range(-half..=half).exp()));
    u * s * w.transpose()
}

/// Nilpotent matrix of order `n` with index exactly `ell` (`1 <= ell <= n`),
/// built from random Jordan chains and a well-conditioned similarity.
pub fn random_nilpotent<R: Rng>(rng: &mut R, n: usize, ell: usize) -> Mat {
    assert!(ell >= 1 && ell <= n.max(1));
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let mut j = Mat::zeros(n, n);
    let mut start = 0;
    let mut first = true;
    while start < n {
        let size = if first { ell } else { rng.random_range(1..=ell.min(n - start)) };
        first = false;
        for i in start..start + size - 1 {
            let mag = rng.random_range(0.5..1.0);
            j[(i, i + 1)] = if rng.random_bool(0.5) { mag } else { -mag };
        }
        start += size;
    }
    let s = well_conditioned(rng, n, 2.0);
    let s_inv = s.clone().try_inverse().expect("well-conditioned");
    s * j * s_inv
}

fn random_vector<R: Rng>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Regular pair in known canonical coordinates.
#[derive(Debug, Clone)]
pub struct ConstructedPencil {
    pub sys: DescriptorSystem,
    pub n1: usize,
    pub ell: usize,
    pub w: Mat,
    pub nil: Mat,
}

/// `E = Q^-1 diag(I, N) P^-1`, `A = Q^-1 diag(W, I) P^-1` with random `W`, nilpotent `N`
/// and `cond(P), cond(Q) <= cond`.
pub fn random_regular_pencil<R: Rng>(rng: &mut R, n: usize, cond: f64) -> ConstructedPencil {
    let n1 = rng.random_range(0..=n);
    let n2 = n - n1;
    let ell = if n2 == 0 { 0 } else { rng.random_range(1..=n2) };
    let w = Mat::from_fn(n1, n1, |_, _| rng.random_range(-2.0..2.0));
    let nil = if n2 == 0 { Mat::zeros(0, 0) } else { random_nilpotent(rng, n2, ell) };
    let e0 = block_diag(&Mat::identity(n1, n1), &nil);
    let a0 = block_diag(&w, &Mat::identity(n2, n2));
    let sys = transformed(rng, &e0, &a0, cond);
    ConstructedPencil { sys, n1, ell, w, nil }
}

fn transformed<R: Rng>(rng: &mut R, e0: &Mat, a0: &Mat, cond: f64) -> DescriptorSystem {
    let n = e0.nrows();
    let p_inv = well_conditioned(rng, n, cond);
    let q_inv = well_conditioned(rng, n, cond);
    let e = &q_inv * e0 * &p_inv;
    let a = &q_inv * a0 * &p_inv;
    let (b, d, c) = (random_vector(rng, n), random_vector(rng, n), random_vector(rng, n));
    DescriptorSystem::new(e, a, b, d, c, 1.0).expect("square random pair")
}

/// Singular pair: a shared kernel vector, a shared left kernel vector, or a
/// Kronecker structure `L_eps (+) L_eta^T` padded with a regular block.
pub fn random_singular_pencil<R: Rng>(rng: &mut R, n: usize, cond: f64) -> DescriptorSystem {
    assert!(n >= 2);
    let kind = if n >= 3 { rng.random_range(0..3) } else { rng.random_range(0..2) };
    let (e0, a0) = match kind {
        0 | 1 => {
            let mut e0 = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let mut a0 = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let k = rng.random_range(0..n);
            if kind == 0 {
                e0.column_mut(k).fill(0.0);
                a0.column_mut(k).fill(0.0);
            } else {
                e0.row_mut(k).fill(0.0);
                a0.row_mut(k).fill(0.0);
            }
            (e0, a0)
        }
        _ => {
            let eps = rng.random_range(1..=n - 2);
            let eta = rng.random_range(1..=n - 1 - eps);
            let rest = n - eps - eta - 1;
            let mut e0 = Mat::zeros(n, n);
            let mut a0 = Mat::zeros(n, n);
            // L_eps: eps x (eps + 1), E = [I 0], A = [0 I]
            for i in 0..eps {
                e0[(i, i)] = 1.0;
                a0[(i, i + 1)] = 1.0;
            }
            // L_eta^T: (eta + 1) x eta, rows eps.., columns eps+1..
            for i in 0..eta {
                e0[(eps + i, eps + 1 + i)] = 1.0;
                a0[(eps + i + 1, eps + 1 + i)] = 1.0;
            }
            let off = eps + eta + 1;
            for i in 0..rest {
                e0[(off + i, off + i)] = 1.0;
                for k in 0..rest {
                    a0[(off + i, off + k)] = rng.random_range(-2.0..2.0);
                }
            }
            (e0, a0)
        }
    };
    transformed(rng, &e0, &a0, cond)
}

/// Mixed sweep of `count` pairs with `n` drawn from `sizes`; the flag is the constructed regularity.
pub fn random_pencil_sweep<R: Rng>(rng: &mut R, count: usize, sizes: std::ops::RangeInclusive<usize>) -> Vec<(DescriptorSystem, bool)> {
    (0..count)
        .map(|_| {
            let n = rng.random_range(sizes.clone());
            if rng.random_bool(0.5) {
                (random_regular_pencil(rng, n, 50.0).sys, true)
            } else {
                (random_singular_pencil(rng, n, 50.0), false)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{condition_number, matrix_power};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conditioning_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=5 {
            let p = well_conditioned(&mut rng, n, 50.0);
            assert!(condition_number(&p) <= 50.0 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn nilpotent_index_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for ell in 1..=4 {
            let n = random_nilpotent(&mut rng, 4, ell);
            assert!(matrix_power(&n, ell).amax() < 1e-10);
            if ell > 1 {
                assert!(matrix_power(&n, ell - 1).amax() > 1e-3);
            }
        }
    }
}
