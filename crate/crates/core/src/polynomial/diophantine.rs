//! `A X + B Y = C` through a Sylvester-type linear system.

use super::Polynomial;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Relative smallest-singular-value threshold for declaring the Sylvester matrix singular.
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineSolution {
    pub x: Polynomial,
    pub y: Polynomial,
    /// `||A X + B Y - C||_inf / (1 + ||C||_inf)`.
    pub residual: f64,
}

fn unknown_count(deg: Option<usize>) -> usize {
    deg.map_or(0, |d| d + 1)
}

/// Sylvester-type matrix and right-hand side for `A X + B Y = C`.
///
/// Columns hold the shifted coefficients of `A` (one per coefficient of `X`,
/// ascending) followed by those of `B` (one per coefficient of `Y`). Rows are
/// the coefficients of `s^0, s^1, ...` of the product.
pub fn sylvester_system(
    a: &Polynomial,
    b: &Polynomial,
    c: &Polynomial,
    deg_x: Option<usize>,
    deg_y: Option<usize>,
) -> (Mat, Vec<f64>) {
    let nx = unknown_count(deg_x);
    let ny = unknown_count(deg_y);
    let span = |p: &Polynomial, n: usize| match (p.degree(), n) {
        (Some(d), n) if n > 0 => d + n,
        _ => 0,
    };
    let rows = span(a, nx).max(span(b, ny)).max(c.coeffs().len()).max(1);
    let mut m = Mat::zeros(rows, nx + ny);
    for j in 0..nx {
        for (k, &ak) in a.coeffs().iter().enumerate() {
            m[(j + k, j)] = ak;
        }
    }
    for j in 0..ny {
        for (k, &bk) in b.coeffs().iter().enumerate() {
            m[(j + k, nx + j)] = bk;
        }
    }
    let mut rhs = vec![0.0; rows];
    for (k, &ck) in c.coeffs().iter().enumerate() {
        rhs[k] = ck;
    }
    (m, rhs)
}

/// Solves `A X + B Y = C` with `deg X <= deg_x`, `deg Y <= deg_y` (`None` drops the term).
///
/// The equation is divided by the leading coefficient of `A` first; when `A` and
/// `C` are monic with `deg C = deg A + deg_x` this makes `X` monic. A rank
/// deficient system is reported as [`Error::SingularSylvester`]; an
/// overdetermined but inconsistent one as [`Error::NoExactSolution`].
pub fn solve_diophantine(
    a: &Polynomial,
    b: &Polynomial,
    c: &Polynomial,
    deg_x: Option<usize>,
    deg_y: Option<usize>,
) -> Result<DiophantineSolution> {
    let lead = if a.is_zero() { 1.0 } else { a.leading() };
    let an = a.scale(1.0 / lead);
    let bn = b.scale(1.0 / lead);
    let cn = c.scale(1.0 / lead);
    let (m, rhs) = sylvester_system(&an, &bn, &cn, deg_x, deg_y);
    let cols = m.ncols();
    if cols == 0 {
        return finish(a, b, c, Polynomial::zero(), Polynomial::zero());
    }
    if m.nrows() < cols {
        return Err(Error::SingularSylvester);
    }
    let s = linalg::singular_values(&m);
    let smax = s[0];
    if smax == 0.0 || s[cols - 1] <= SINGULAR_TOL * smax {
        return Err(Error::SingularSylvester);
    }
    let sol = linalg::least_squares(&m, &Mat::from_column_slice(rhs.len(), 1, &rhs));
    let nx = unknown_count(deg_x);
    let x = Polynomial::new(sol.column(0).rows(0, nx).iter().copied().collect());
    let y = Polynomial::new(sol.column(0).rows(nx, cols - nx).iter().copied().collect());
    finish(a, b, c, x, y)
}

fn finish(
    a: &Polynomial,
    b: &Polynomial,
    c: &Polynomial,
    x: Polynomial,
    y: Polynomial,
) -> Result<DiophantineSolution> {
    let lhs = &(a * &x) + &(b * &y);
    let residual = (&lhs - c).norm_inf() / (1.0 + c.norm_inf());
    if residual > 1e-9 {
        return Err(Error::NoExactSolution { residual });
    }
    Ok(DiophantineSolution { x, y, residual })
}

/// Determinant of the square Sylvester matrix of `(A, B)` for the given degrees,
/// after scaling `A` to be monic. Returns `None` when the system is not square.
pub fn sylvester_determinant(
    a: &Polynomial,
    b: &Polynomial,
    deg_x: Option<usize>,
    deg_y: Option<usize>,
) -> Option<f64> {
    let lead = if a.is_zero() { 1.0 } else { a.leading() };
    let (m, _) =
        sylvester_system(&a.scale(1.0 / lead), &b.scale(1.0 / lead), &Polynomial::zero(), deg_x, deg_y);
    (m.nrows() == m.ncols()).then(|| linalg::determinant(&m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec())
    }

    #[test]
    fn factorization_example() {
        let a = Polynomial::from_real_roots(&[-1.0, -2.0]);
        let c = Polynomial::from_real_roots(&[-1.0, -2.0, -3.0]);
        let sol = solve_diophantine(&a, &p(&[1.0]), &c, Some(1), Some(0)).unwrap();
        assert!((&sol.x - &p(&[3.0, 1.0])).norm_inf() < 1e-12);
        assert!(sol.y.norm_inf() < 1e-12);
    }

    #[test]
    fn constant_example() {
        let sol = solve_diophantine(&p(&[0.0, 1.0]), &p(&[1.0]), &p(&[1.0]), Some(0), Some(0)).unwrap();
        assert!(sol.x.norm_inf() < 1e-12);
        assert!((&sol.y - &p(&[1.0])).norm_inf() < 1e-12);
    }

    #[test]
    fn common_factor_is_singular() {
        let r = solve_diophantine(&p(&[1.0, 1.0]), &p(&[1.0, 1.0]), &p(&[1.0]), Some(0), Some(0));
        assert_eq!(r, Err(Error::SingularSylvester));
    }

    #[test]
    fn inconsistent_overdetermined_system() {
        // (s+2)(s+1) X + 1 * Y = s^3 with deg X = 1, deg Y = -inf: 4 equations, 2 unknowns
        let a = Polynomial::from_real_roots(&[-1.0, -2.0]);
        let r = solve_diophantine(&a, &p(&[1.0]), &p(&[0.0, 0.0, 0.0, 1.0]), Some(1), None);
        assert!(matches!(r, Err(Error::NoExactSolution { .. })));
    }

    #[test]
    fn determinant_vanishes_for_common_root() {
        let a = p(&[2.0, 3.0, 1.0]);
        let b = p(&[1.0, 1.0]);
        let d = sylvester_determinant(&a, &b, Some(0), Some(1)).unwrap();
        assert!(d.abs() < 1e-12);
        let d2 = sylvester_determinant(&a, &p(&[3.0, 1.0]), Some(0), Some(1)).unwrap();
        assert!(d2.abs() > 1e-3);
    }
}
