//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! Everything here works on `DMatrix<f64>`; sizes in this crate are tiny
//! (state dimensions of a handful), so clarity wins over blocking.

use nalgebra::{Complex, DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type C64 = Complex<f64>;

/// Singular values sorted in decreasing order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    sorted_svd(m).s
}

pub fn spectral_norm(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Number of singular values strictly above `threshold`.
pub fn rank_above(m: &Mat, threshold: f64) -> usize {
    singular_values(m).into_iter().filter(|&s| s > threshold).count()
}

/// Numerical rank with the relative rule `sigma_i > tol * sigma_max`.
pub fn numerical_rank(m: &Mat, tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > tol * smax).count(),
        _ => 0,
    }
}

/// Ratio of extreme singular values; infinite for singular or empty-but-rectangular input.
pub fn condition_number(m: &Mat) -> f64 {
    if m.nrows() == 0 && m.ncols() == 0 {
        return 1.0;
    }
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Full SVD with factors ordered by decreasing singular value.
/// Wide matrices are padded with zero rows so that `V` is square.
struct SortedSvd {
    u: Mat,
    s: Vec<f64>,
    v: Mat,
}

/// One-sided Jacobi SVD.
///
/// The LAPACK-free SVD in nalgebra 0.35 loses accuracy on rank-deficient
/// input, and every rank decision here depends on it. Jacobi rotations keep
/// high relative accuracy and the matrices in this crate are tiny.
fn sorted_svd(m: &Mat) -> SortedSvd {
    let (r, c) = m.shape();
    let rows = r.max(c);
    let mut u = Mat::zeros(rows, c);
    u.view_mut((0, 0), (r, c)).copy_from(m);
    let mut v = Mat::identity(c, c);
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut u, &mut v] {
                    for i in 0..mat.nrows() {
                        let a = mat[(i, p)];
                        let b = mat[(i, q)];
                        mat[(i, p)] = cs * a - sn * b;
                        mat[(i, q)] = sn * a + cs * b;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..c).map(|j| u.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let smax = norms.iter().copied().fold(0.0, f64::max);
    let mut us = Mat::zeros(rows, c);
    let mut vs = Mat::zeros(c, c);
    let mut s = Vec::with_capacity(c);
    for (dst, &src) in order.iter().enumerate() {
        vs.set_column(dst, &v.column(src));
        s.push(norms[src]);
        if norms[src] > smax * f64::EPSILON * rows as f64 && norms[src] > 0.0 {
            us.set_column(dst, &(u.column(src) / norms[src]));
        }
    }
    complete_orthonormal(&mut us, &s, smax * f64::EPSILON * rows as f64);
    let us = if r < c { us.rows(0, r).into_owned() } else { us };
    SortedSvd { u: us, s, v: vs }
}

/// Replaces the columns of `u` whose singular value is at most `cut` with
/// unit vectors orthogonal to all previous columns.
fn complete_orthonormal(u: &mut Mat, s: &[f64], cut: f64) {
    let n = u.nrows();
    for j in 0..u.ncols() {
        if s[j] > cut && s[j] > 0.0 {
            continue;
        }
        for k in 0..n {
            let mut cand = Vector::zeros(n);
            cand[k] = 1.0;
            for _ in 0..2 {
                for i in 0..j {
                    let proj = u.column(i).dot(&cand);
                    cand -= u.column(i) * proj;
                }
            }
            let norm = cand.norm();
            if norm > 0.5 {
                u.set_column(j, &(cand / norm));
                break;
            }
        }
    }
}

/// Orthonormal basis of the null space, deciding zero singular values with an absolute threshold.
pub fn null_space(m: &Mat, threshold: f64) -> Mat {
    let n = m.ncols();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return Mat::identity(n, n);
    }
    let svd = sorted_svd(m);
    let nz = svd.s.iter().filter(|&&x| x > threshold).count();
    svd.v.columns(nz, n - nz).into_owned()
}

/// Orthonormal basis of the dominant `k`-dimensional column space.
pub fn dominant_range(m: &Mat, k: usize) -> Mat {
    if k == 0 {
        return Mat::zeros(m.nrows(), 0);
    }
    let svd = sorted_svd(m);
    svd.u.columns(0, k).into_owned()
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Mat::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn try_inverse(m: &Mat) -> Option<Mat> {
    if m.nrows() == 0 {
        return Some(m.clone());
    }
    m.clone().try_inverse()
}

pub fn determinant(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant()
}

/// Determinant of a complex matrix via LU.
pub fn complex_determinant(m: &DMatrix<C64>) -> C64 {
    if m.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

pub fn to_complex(m: &Mat) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Least-squares solution of `m x = rhs` (column by column) through the pseudo-inverse.
pub fn least_squares(m: &Mat, rhs: &Mat) -> Mat {
    let svd = sorted_svd(m);
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let mut x = Mat::zeros(m.ncols(), rhs.ncols());
    for (i, &s) in svd.s.iter().enumerate() {
        if s <= smax * 1e-14 || i >= m.ncols() {
            continue;
        }
        let ui = svd.u.column(i);
        let vi = svd.v.column(i);
        let coeffs = ui.transpose() * rhs / s;
        x += vi * coeffs;
    }
    x
}

/// Splitting `R^n = range(M^k) (+) ker(M^k)` for `k = ind(M)`.
#[derive(Debug, Clone)]
pub struct CoreNilpotentSplit {
    /// Smallest `k` with `ker(M^k) = ker(M^{k+1})`.
    pub index: usize,
    /// Orthonormal basis of `range(M^index)` (the core part).
    pub core_basis: Mat,
    /// Orthonormal basis of `ker(M^index)` (the nilpotent part).
    pub nilpotent_basis: Mat,
    /// `dim ker(M^k)` for `k = 0..=index`.
    pub kernel_dims: Vec<usize>,
}

/// Computes the core-nilpotent splitting without forming matrix powers.
///
/// Kernels grow as `K_{j+1} = { x : M x in K_j }`, obtained as the null space of
/// `(I - Pi_{K_j}) M`; ranges shrink as `R_{j+1} = M R_j`. Both recursions keep
/// every rank decision at the scale of `||M||` so small nonzero eigenvalues are
/// not swamped the way they are in `M^k`.
pub fn core_nilpotent_split(m: &Mat, tol_rank: f64) -> CoreNilpotentSplit {
    let n = m.nrows();
    let scale = spectral_norm(m);
    let threshold = tol_rank * scale.max(f64::MIN_POSITIVE);
    let mut kernel = Mat::zeros(n, 0);
    let mut kernel_dims = vec![0];
    if scale == 0.0 {
        // zero matrix: everything is nilpotent after one step (or nothing to do when n = 0)
        let index = usize::from(n > 0);
        if n > 0 {
            kernel_dims.push(n);
        }
        return CoreNilpotentSplit {
            index,
            core_basis: Mat::zeros(n, 0),
            nilpotent_basis: Mat::identity(n, n),
            kernel_dims,
        };
    }
    loop {
        let proj = Mat::identity(n, n) - &kernel * kernel.transpose();
        let next = null_space(&(proj * m), threshold);
        if next.ncols() <= kernel.ncols() {
            break;
        }
        kernel = next;
        kernel_dims.push(kernel.ncols());
        if kernel.ncols() == n {
            break;
        }
    }
    let index = kernel_dims.len() - 1;
    let mut range = Mat::identity(n, n);
    for &dim in kernel_dims.iter().skip(1) {
        range = dominant_range(&(m * &range), n - dim);
    }
    CoreNilpotentSplit { index, core_basis: range, nilpotent_basis: kernel, kernel_dims }
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    Mat::from_fn(r, c, |i, j| rows[i][j])
}

pub fn matrix_power(m: &Mat, k: usize) -> Mat {
    let mut out = Mat::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}
