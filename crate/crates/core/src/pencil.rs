//! Structural analysis of the matrix pair `(E, A)`.
//!
//! Regularity, the block-rank solvability test, the index of `E`, its Drazin
//! inverse, impulse-freeness and the Weierstrass decomposition
//!
//! ```text
//! Q E P = diag(I, N),   Q A P = diag(W, I)
//! ```
//!
//! with `N` nilpotent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::par::Execution;
use crate::polynomial::Polynomial;

/// Numerical thresholds shared by the analysis routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative singular-value threshold for numerical rank.
    pub rank: f64,
    /// Accepted residual of the canonical form, relative to `1 + ||E||_F` (resp. `||A||_F`).
    pub decomp: f64,
    /// Largest accepted condition number of `P` and `Q`.
    pub cond_max: f64,
    /// Relative threshold on `sigma_min / sigma_max` of `sE - A` at the sample points.
    pub regularity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rank: 1e-10, decomp: 1e-8, cond_max: 1e8, regularity: 1e-9 }
    }
}

/// `E x' = A x + b u(t) + d u(t - h)`, `y = c^T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSystem {
    pub e: Mat,
    pub a: Mat,
    pub b: Vector,
    pub d: Vector,
    pub c: Vector,
    pub h: f64,
}

impl DescriptorSystem {
    pub fn new(e: Mat, a: Mat, b: Vector, d: Vector, c: Vector, h: f64) -> Result<Self> {
        let n = e.nrows();
        if e.ncols() != n || a.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "E is {}x{}, A is {}x{}; both must be square of the same size",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        for (name, v) in [("b", &b), ("d", &d), ("c", &c)] {
            if v.len() != n {
                return Err(Error::DimensionMismatch(format!("{name} has length {}, expected {n}", v.len())));
            }
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!("delay h must be positive and finite, got {h}")));
        }
        let finite = e.iter().chain(a.iter()).chain(b.iter()).chain(d.iter()).chain(c.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite entry in system matrices".into()));
        }
        Ok(DescriptorSystem { e, a, b, d, c, h })
    }

    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    /// `sE - A`.
    pub fn pencil_at(&self, s: f64) -> Mat {
        &self.e * s - &self.a
    }

    /// Absolute coefficient threshold used to decide `det(sE - A) == 0`.
    pub fn regularity_threshold(&self, tol: f64) -> f64 {
        let scale = (linalg::frobenius(&self.e) + linalg::frobenius(&self.a)).max(1.0);
        tol * scale.powi(self.n() as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regularity {
    pub regular: bool,
    /// `det(sE - A)`, small leading coefficients removed.
    pub m: Polynomial,
}

/// Chebyshev points of the first kind on `[-1, 1]`.
fn chebyshev_nodes(k: usize) -> Vec<f64> {
    (0..k).map(|i| ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * k) as f64).cos()).collect()
}

/// `det(sE - A)` by sampling at `n + 1` Chebyshev points and interpolating.
///
/// Both decisions are relative to each sample's own scale, so they do not
/// change under `(E, A) -> (PEQ, PAQ)` with moderately conditioned `P`, `Q`.
/// A sample counts as nonsingular when `sigma_min / sigma_max > tol`; a
/// coefficient is dropped when it is below `tol` times the rounding scale
/// `sigma_max * sigma_1 * ... * sigma_{n-1}` of the samples.
pub fn check_regularity(sys: &DescriptorSystem, tol: f64) -> Regularity {
    let n = sys.n();
    if n == 0 {
        return Regularity { regular: true, m: Polynomial::one() };
    }
    let xs = chebyshev_nodes(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    let mut floor = 0.0f64;
    let mut nonsingular = false;
    for &s in &xs {
        let p = sys.pencil_at(s);
        let sv = linalg::singular_values(&p);
        let smax = sv[0];
        if smax > 0.0 && sv[n - 1] > tol * smax {
            nonsingular = true;
        }
        floor = floor.max(smax * sv[..n - 1].iter().product::<f64>());
        ys.push(linalg::determinant(&p));
    }
    let raw = Polynomial::fit(&xs, &ys, n);
    let threshold = tol * floor;
    let mut coeffs = raw.coeffs().to_vec();
    while coeffs.last().is_some_and(|c| c.abs() <= threshold) {
        coeffs.pop();
    }
    let m = Polynomial::new_untrimmed(coeffs);
    Regularity { regular: nonsingular && !m.is_zero(), m }
}

/// The `(n+1)n x n^2` block matrix with `E` on the block diagonal and `A` on the
/// block subdiagonal.
pub fn solvability_matrix(sys: &DescriptorSystem) -> Mat {
    let n = sys.n();
    let mut m = Mat::zeros((n + 1) * n, n * n);
    for j in 0..n {
        m.view_mut((j * n, j * n), (n, n)).copy_from(&sys.e);
        m.view_mut(((j + 1) * n, j * n), (n, n)).copy_from(&sys.a);
    }
    m
}

/// Regular iff the block matrix has full column rank `n^2`.
pub fn solvability_rank_test(sys: &DescriptorSystem, tol_rank: f64) -> bool {
    let n = sys.n();
    if n == 0 {
        return true;
    }
    linalg::numerical_rank(&solvability_matrix(sys), tol_rank) == n * n
}

/// Outcome of both regularity tests on one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PencilVerdict {
    pub determinant: bool,
    pub rank: bool,
}

impl PencilVerdict {
    pub fn agree(&self) -> bool {
        self.determinant == self.rank
    }
}

/// Runs both regularity tests over a batch of pairs.
pub fn classify_pencils(systems: &[DescriptorSystem], tol: &Tolerances, execution: Execution) -> Vec<PencilVerdict> {
    execution.map(systems, |sys| PencilVerdict {
        determinant: check_regularity(sys, tol.regularity).regular,
        rank: solvability_rank_test(sys, tol.rank),
    })
}

/// Smallest `k` with `rank(E^k) = rank(E^{k+1})`.
pub fn index_of(e: &Mat, tol_rank: f64) -> usize {
    linalg::core_nilpotent_split(e, tol_rank).index
}

/// Drazin inverse through the core-nilpotent splitting `E = T diag(E0, Nil) T^{-1}`.
pub fn drazin_inverse(e: &Mat, tol_rank: f64) -> Mat {
    let n = e.nrows();
    let split = linalg::core_nilpotent_split(e, tol_rank);
    let r = split.core_basis.ncols();
    if r == 0 {
        return Mat::zeros(n, n);
    }
    let t = linalg::hstack(&split.core_basis, &split.nilpotent_basis);
    let Some(t_inv) = linalg::try_inverse(&t) else {
        return Mat::zeros(n, n);
    };
    let j = &t_inv * e * &t;
    let core = j.view((0, 0), (r, r)).into_owned();
    let core_inv = linalg::try_inverse(&core).unwrap_or_else(|| Mat::zeros(r, r));
    let mut inner = Mat::zeros(n, n);
    inner.view_mut((0, 0), (r, r)).copy_from(&core_inv);
    &t * inner * t_inv
}

/// Weierstrass canonical form together with the transformed input/output maps.
#[derive(Debug, Clone, PartialEq)]
pub struct WeierstrassForm {
    pub p: Mat,
    pub q: Mat,
    pub w: Mat,
    pub nil: Mat,
    pub alpha1: Vector,
    pub alpha2: Vector,
    pub beta1: Vector,
    pub beta2: Vector,
    pub gamma1: Vector,
    pub gamma2: Vector,
    pub n1: usize,
    pub n2: usize,
    /// Nilpotency index of `N`.
    pub ell: usize,
    /// `||QEP - diag(I, N)||_F`.
    pub residual_e: f64,
    /// `||QAP - diag(W, I)||_F`.
    pub residual_a: f64,
    pub slow_block_invertible: bool,
}

impl WeierstrassForm {
    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    /// `diag(W, N)`.
    pub fn block_matrix(&self) -> Mat {
        linalg::block_diag(&self.w, &self.nil)
    }

    pub fn gamma(&self) -> Vector {
        stack(&self.gamma1, &self.gamma2)
    }

    /// `N^k`.
    pub fn nil_power(&self, k: usize) -> Mat {
        linalg::matrix_power(&self.nil, k)
    }

    /// Impulse-free through the fast block: `N = 0`.
    pub fn nilpotent_is_zero(&self, tol: f64) -> bool {
        self.nil.iter().all(|x| x.abs() <= tol)
    }
}

pub(crate) fn stack(a: &Vector, b: &Vector) -> Vector {
    Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

const SHIFT_CANDIDATES: [f64; 7] = [0.0, 1.0, -1.0, 2.0, -2.0, 0.5, -0.5];

/// Computes `P, Q` with `QEP = diag(I, N)`, `QAP = diag(W, I)`.
///
/// With `c` chosen so that `cE - A` is well invertible, `Ehat = (cE - A)^{-1} E`
/// splits into an invertible part and a nilpotent part. Taking `P` from the bases
/// of those two invariant subspaces block-diagonalizes `Ehat = diag(J1, J2)`, and
/// then `W = cI - J1^{-1}`, `N = (cJ2 - I)^{-1} J2`. `Q` is the least-squares
/// solution of `Q [EP, AP] = [diag(I, N), diag(W, I)]`.
pub fn weierstrass_decompose(sys: &DescriptorSystem, tol: &Tolerances) -> Result<WeierstrassForm> {
    let reg = check_regularity(sys, tol.regularity);
    if !reg.regular {
        return Err(Error::NotRegular);
    }
    let n = sys.n();
    let (shift, _) = SHIFT_CANDIDATES
        .iter()
        .map(|&c| (c, linalg::determinant(&sys.pencil_at(c)).abs()))
        .fold((0.0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best });
    let k = linalg::try_inverse(&sys.pencil_at(shift)).ok_or(Error::NotRegular)?;
    let e_hat = &k * &sys.e;
    let split = linalg::core_nilpotent_split(&e_hat, tol.rank);
    let n1 = split.core_basis.ncols();
    let n2 = n - n1;
    let expected = reg.m.degree().unwrap_or(0);
    if n1 != expected {
        log::warn!("slow block dimension {n1} differs from deg det(sE - A) = {expected}");
        return Err(Error::IllConditioned { what: "slow/fast subspace split", cond: f64::INFINITY });
    }
    let p = linalg::hstack(&split.core_basis, &split.nilpotent_basis);
    let cond_p = linalg::condition_number(&p);
    if cond_p > tol.cond_max {
        return Err(Error::IllConditioned { what: "P", cond: cond_p });
    }
    let p_inv = linalg::try_inverse(&p).ok_or(Error::IllConditioned { what: "P", cond: cond_p })?;
    let j = &p_inv * &e_hat * &p;
    let j1 = j.view((0, 0), (n1, n1)).into_owned();
    let j2 = j.view((n1, n1), (n2, n2)).into_owned();
    let j1_inv = linalg::try_inverse(&j1).ok_or(Error::IllConditioned { what: "slow block", cond: f64::INFINITY })?;
    let w = Mat::identity(n1, n1) * shift - j1_inv;
    let fast = &j2 * shift - Mat::identity(n2, n2);
    let nil = linalg::try_inverse(&fast)
        .ok_or(Error::IllConditioned { what: "fast block", cond: f64::INFINITY })?
        * &j2;

    let target_e = linalg::block_diag(&Mat::identity(n1, n1), &nil);
    let target_a = linalg::block_diag(&w, &Mat::identity(n2, n2));
    let ep = &sys.e * &p;
    let ap = &sys.a * &p;
    let lhs = linalg::hstack(&ep, &ap);
    let rhs = linalg::hstack(&target_e, &target_a);
    let q = linalg::least_squares(&lhs.transpose(), &rhs.transpose()).transpose();
    let cond_q = linalg::condition_number(&q);
    if cond_q > tol.cond_max {
        return Err(Error::IllConditioned { what: "Q", cond: cond_q });
    }
    let residual_e = linalg::frobenius(&(&q * &ep - &target_e));
    let residual_a = linalg::frobenius(&(&q * &ap - &target_a));
    if residual_e > tol.decomp * (1.0 + linalg::frobenius(&sys.e))
        || residual_a > tol.decomp * (1.0 + linalg::frobenius(&sys.a))
    {
        return Err(Error::IllConditioned { what: "canonical form residual", cond: cond_p.max(cond_q) });
    }

    let qb = &q * &sys.b;
    let qd = &q * &sys.d;
    let gamma = p.transpose() * &sys.c;
    let ell = if n2 == 0 { 0 } else { split.index };
    let slow_block_invertible = n1 == 0 || {
        let s = linalg::singular_values(&w);
        s[n1 - 1] > tol.rank * s[0].max(1.0)
    };
    Ok(WeierstrassForm {
        alpha1: qb.rows(0, n1).into_owned(),
        alpha2: qb.rows(n1, n2).into_owned(),
        beta1: qd.rows(0, n1).into_owned(),
        beta2: qd.rows(n1, n2).into_owned(),
        gamma1: gamma.rows(0, n1).into_owned(),
        gamma2: gamma.rows(n1, n2).into_owned(),
        p,
        q,
        w,
        nil,
        n1,
        n2,
        ell,
        residual_e,
        residual_a,
        slow_block_invertible,
    })
}

/// `rank(E) == deg det(sE - A)`.
pub fn is_impulse_free(sys: &DescriptorSystem, tol: &Tolerances) -> Result<bool> {
    let reg = check_regularity(sys, tol.regularity);
    if !reg.regular {
        return Err(Error::NotRegular);
    }
    let rank = linalg::numerical_rank(&sys.e, tol.rank);
    Ok(rank == reg.m.degree().unwrap_or(0))
}
