//! `M(s) = det(sE - A)` and the numerator polynomials of `c^T Adj(sE - A)`.

use super::Polynomial;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::pencil::{check_regularity, DescriptorSystem};

#[derive(Debug, Clone, PartialEq)]
pub struct PencilPolynomials {
    /// `det(sE - A)`.
    pub m: Polynomial,
    /// `c^T Adj(sE - A) b`.
    pub delta0: Polynomial,
    /// `c^T Adj(sE - A) d`.
    pub delta1: Polynomial,
    /// Entries of `c^T Adj(sE - A)`.
    pub delta2: Vec<Polynomial>,
}

impl PencilPolynomials {
    /// Divides everything by the leading coefficient of `M`, so `M` becomes monic.
    pub fn normalized(&self) -> Result<PencilPolynomials> {
        if self.m.is_zero() {
            return Err(Error::ZeroPolynomial);
        }
        let k = 1.0 / self.m.leading();
        Ok(PencilPolynomials {
            m: self.m.scale(k),
            delta0: self.delta0.scale(k),
            delta1: self.delta1.scale(k),
            delta2: self.delta2.iter().map(|p| p.scale(k)).collect(),
        })
    }
}

/// Evaluates `c^T Adj(s_i E - A) = det(s_i E - A) c^T (s_i E - A)^{-1}` at sample
/// points away from the zeros of `M` and interpolates each entry.
pub fn pencil_polynomials(sys: &DescriptorSystem, tol: f64) -> Result<PencilPolynomials> {
    let reg = check_regularity(sys, tol);
    if !reg.regular {
        return Err(Error::NotRegular);
    }
    let n = sys.n();
    if n == 0 {
        return Ok(PencilPolynomials {
            m: reg.m,
            delta0: Polynomial::zero(),
            delta1: Polynomial::zero(),
            delta2: Vec::new(),
        });
    }
    // offset nodes so that integer-valued eigenvalues are never hit exactly
    let candidates: Vec<f64> = (0..4 * n)
        .map(|i| 2.0 * ((2 * i + 1) as f64 * std::f64::consts::PI / (8 * n) as f64).cos() + 0.0123)
        .collect();
    let dets: Vec<f64> = candidates.iter().map(|&s| linalg::determinant(&sys.pencil_at(s))).collect();
    let biggest = dets.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let cut = 1e-8 * biggest;
    let mut xs = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (&s, &det) in candidates.iter().zip(&dets) {
        if det.abs() <= cut {
            continue;
        }
        let Some(inv_t) = linalg::try_inverse(&sys.pencil_at(s).transpose()) else { continue };
        let row = inv_t * &sys.c * det;
        xs.push(s);
        rows.push(row.iter().copied().collect());
    }
    if xs.len() < n {
        return Err(Error::SamplePointFailure { needed: n });
    }
    let delta2: Vec<Polynomial> = (0..n)
        .map(|j| {
            let ys: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            Polynomial::fit(&xs, &ys, n - 1)
        })
        .collect();
    let combine = |v: &crate::linalg::Vector| {
        delta2.iter().zip(v.iter()).fold(Polynomial::zero(), |acc, (p, &w)| &acc + &p.scale(w))
    };
    let delta0 = clean(combine(&sys.b));
    let delta1 = clean(combine(&sys.d));
    Ok(PencilPolynomials { m: reg.m, delta0, delta1, delta2 })
}

/// Drops coefficients that are rounding noise relative to the largest one.
fn clean(p: Polynomial) -> Polynomial {
    let max = p.norm_inf();
    Polynomial::new(p.coeffs().iter().map(|&c| if c.abs() <= 1e-12 * max { 0.0 } else { c }).collect())
}

/// Brute-force `c^T (sE - A)^{-1} v * det(sE - A)` at a single point.
pub fn adjugate_product_at(sys: &DescriptorSystem, s: f64, v: &crate::linalg::Vector) -> Option<f64> {
    let pencil: Mat = sys.pencil_at(s);
    let det = linalg::determinant(&pencil);
    let x = pencil.lu().solve(v)?;
    Some(sys.c.dot(&x) * det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;

    fn close(p: &Polynomial, c: &[f64]) -> bool {
        (p - &Polynomial::new(c.to_vec())).norm_inf() < 1e-9
    }

    #[test]
    fn standard_second_order() {
        let sys = DescriptorSystem::new(
            Mat::identity(2, 2),
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]),
            Vector::from_vec(vec![0.0, 1.0]),
            Vector::zeros(2),
            Vector::from_vec(vec![1.0, 0.0]),
            1.0,
        )
        .unwrap();
        let pp = pencil_polynomials(&sys, 1e-9).unwrap();
        assert!(close(&pp.m, &[2.0, 3.0, 1.0]));
        assert!(close(&pp.delta0, &[1.0]));
        assert!(pp.delta1.is_zero());
    }

    #[test]
    fn singular_diagonal_example() {
        let sys = DescriptorSystem::new(
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
            Vector::from_vec(vec![1.0, 1.0]),
            Vector::zeros(2),
            Vector::from_vec(vec![1.0, 1.0]),
            1.0,
        )
        .unwrap();
        let pp = pencil_polynomials(&sys, 1e-9).unwrap();
        assert!(close(&pp.m, &[-1.0, -1.0]));
        assert!(close(&pp.delta0, &[0.0, 1.0]));
        for s in [0.3, 1.7, -2.5] {
            let brute = adjugate_product_at(&sys, s, &sys.b).unwrap();
            assert!((pp.delta0.eval(s) - brute).abs() < 1e-9);
        }
        let norm = pp.normalized().unwrap();
        assert!(close(&norm.m, &[1.0, 1.0]) && close(&norm.delta0, &[0.0, -1.0]));
    }
}
