//! Real polynomials, delay quasi-polynomials and the algebra built on them.

mod diophantine;
mod margin;
mod pencil_polys;

pub use diophantine::{solve_diophantine, sylvester_determinant, sylvester_system, DiophantineSolution};
pub use margin::{delay_stability_margin, delay_stability_margin_with, LineSide, MarginOptions, MarginReport};
pub use pencil_polys::{adjugate_product_at, pencil_polynomials, PencilPolynomials};

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, C64};

/// Relative threshold below which trailing coefficients are dropped.
pub const TRIM_TOL: f64 = 1e-12;

/// Real polynomial with coefficients in ascending degree order.
///
/// Trailing coefficients below `TRIM_TOL * max|c_k|` are removed on
/// construction; the zero polynomial has no coefficients and `degree() == None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Polynomial {
    fn from(coeffs: Vec<f64>) -> Self {
        Polynomial::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let cut = TRIM_TOL * max;
        while let Some(&last) = coeffs.last() {
            if last == 0.0 || last.abs() <= cut {
                coeffs.pop();
            } else {
                break;
            }
        }
        Polynomial { coeffs }
    }

    /// Builds a polynomial without relative trimming (exact zeros are still removed).
    pub fn new_untrimmed(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Polynomial::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `s^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Polynomial { coeffs: c }
    }

    /// Monic polynomial with the given roots; complex roots must come in conjugate pairs.
    pub fn from_roots(roots: &[C64]) -> Self {
        let mut c = vec![C64::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
            for (k, &ck) in c.iter().enumerate() {
                next[k + 1] += ck;
                next[k] -= ck * r;
            }
            c = next;
        }
        Polynomial::new(c.into_iter().map(|z| z.re).collect())
    }

    pub fn from_real_roots(roots: &[f64]) -> Self {
        let r: Vec<C64> = roots.iter().map(|&x| C64::new(x, 0.0)).collect();
        Polynomial::from_roots(&r)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `s^k` (zero beyond the degree).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn is_monic(&self, tol: f64) -> bool {
        !self.is_zero() && (self.leading() - 1.0).abs() <= tol
    }

    pub fn monic(&self) -> Result<Polynomial> {
        if self.is_zero() {
            return Err(Error::ZeroPolynomial);
        }
        Ok(self.scale(1.0 / self.leading()))
    }

    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, s: C64) -> C64 {
        self.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        Polynomial::new_untrimmed(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new_untrimmed(
            self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect(),
        )
    }

    pub fn pow(&self, k: usize) -> Polynomial {
        (0..k).fold(Polynomial::one(), |acc, _| &acc * self)
    }

    /// Roots as eigenvalues of the companion matrix.
    pub fn roots(&self) -> Result<Vec<C64>> {
        let deg = self.degree().ok_or(Error::ZeroPolynomial)?;
        if deg == 0 {
            return Ok(Vec::new());
        }
        let lead = self.leading();
        let mut comp = Mat::zeros(deg, deg);
        for i in 1..deg {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..deg {
            comp[(i, deg - 1)] = -self.coeffs[i] / lead;
        }
        Ok(comp.complex_eigenvalues().iter().copied().collect())
    }

    /// Interpolating polynomial of degree `<= degree` through `(xs, ys)` in the least-squares sense.
    pub fn fit(xs: &[f64], ys: &[f64], degree: usize) -> Polynomial {
        let v = Mat::from_fn(xs.len(), degree + 1, |i, j| xs[i].powi(j as i32));
        let rhs = Mat::from_column_slice(ys.len(), 1, ys);
        let sol = crate::linalg::least_squares(&v, &rhs);
        Polynomial::new(sol.column(0).iter().copied().collect())
    }

    /// Maximum real part over the roots (`-inf` for constants).
    pub fn spectral_abscissa(&self) -> Result<f64> {
        Ok(self.roots()?.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.re)))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            } else if c < 0.0 {
                write!(f, "-")?;
            }
            first = false;
            match k {
                0 => write!(f, "{}", c.abs())?,
                1 => write!(f, "{}s", c.abs())?,
                _ => write!(f, "{}s^{}", c.abs(), k)?,
            }
        }
        Ok(())
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new_untrimmed(out)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Hurwitz test with margin: every root satisfies `Re(root) <= -margin`.
pub fn is_hurwitz(p: &Polynomial, margin: f64) -> Result<bool> {
    let roots = p.roots()?;
    Ok(roots.iter().all(|r| r.re <= -margin))
}

/// `sum_k p_k(s) e^{-k h s}` with nonnegative integer delay multiples `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiPolynomial {
    pub h: f64,
    pub terms: BTreeMap<usize, Polynomial>,
}

impl QuasiPolynomial {
    pub fn new(h: f64, terms: impl IntoIterator<Item = (usize, Polynomial)>) -> Self {
        let terms = terms.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        QuasiPolynomial { h, terms }
    }

    pub fn from_polynomial(h: f64, p: Polynomial) -> Self {
        QuasiPolynomial::new(h, [(0, p)])
    }

    pub fn term(&self, k: usize) -> Polynomial {
        self.terms.get(&k).cloned().unwrap_or_default()
    }

    pub fn max_delay_multiple(&self) -> usize {
        self.terms.keys().next_back().copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, s: C64) -> C64 {
        self.terms.iter().fold(C64::new(0.0, 0.0), |acc, (&k, p)| {
            acc + p.eval_complex(s) * (-(k as f64) * self.h * s).exp()
        })
    }

    pub fn mul(&self, other: &QuasiPolynomial) -> QuasiPolynomial {
        let mut terms: BTreeMap<usize, Polynomial> = BTreeMap::new();
        for (&i, p) in &self.terms {
            for (&j, q) in &other.terms {
                let entry = terms.entry(i + j).or_default();
                *entry = &*entry + &(p * q);
            }
        }
        QuasiPolynomial::new(self.h, terms)
    }

    pub fn add(&self, other: &QuasiPolynomial) -> QuasiPolynomial {
        let mut terms = self.terms.clone();
        for (&k, q) in &other.terms {
            let entry = terms.entry(k).or_default();
            *entry = &*entry + q;
        }
        QuasiPolynomial::new(self.h, terms)
    }
}
