//! State-space realizations: the input filters `1/F` and a generic
//! delay-transfer realization used for the control law, the compensator and
//! reference models.

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::polynomial::{is_hurwitz, Polynomial};

/// Controllable-canonical realization of `1/F(s)`; state `j` is the `j`-th
/// derivative of the filtered signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRealization {
    pub a: Mat,
    pub b: Vector,
    pub c: Vector,
    pub state: Vector,
    pub f: Polynomial,
}

/// Builds the realization of `1/F` for a monic Hurwitz `F` of degree at least one.
pub fn make_filter(f: &Polynomial) -> Result<FilterRealization> {
    let n = match f.degree() {
        Some(d) if d >= 1 => d,
        _ => return Err(Error::DegreeViolation("filter polynomial must have degree >= 1".into())),
    };
    if !f.is_monic(1e-12) {
        return Err(Error::NotMonic(f.leading()));
    }
    if !is_hurwitz(f, 0.0)? {
        return Err(Error::NotHurwitz { margin: 0.0 });
    }
    let mut a = Mat::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -f.coeff(j);
    }
    let mut b = Vector::zeros(n);
    b[n - 1] = 1.0;
    let mut c = Vector::zeros(n);
    c[0] = 1.0;
    Ok(FilterRealization { a, b, c, state: Vector::zeros(n), f: f.clone() })
}

impl FilterRealization {
    pub fn order(&self) -> usize {
        self.b.len()
    }

    pub fn derivative(&self, state: &Vector, input: f64) -> Vector {
        &self.a * state + &self.b * input
    }

    /// `D^{n_F} w_f = w - sum_j f_j D^j w_f`.
    pub fn top_derivative(&self, state: &Vector, input: f64) -> f64 {
        input - (0..self.order()).map(|j| self.f.coeff(j) * state[j]).sum::<f64>()
    }

    /// One RK4 step with the input held constant.
    pub fn step(&mut self, input: f64, dt: f64) {
        let x = self.state.clone();
        let k1 = self.derivative(&x, input);
        let k2 = self.derivative(&(&x + &k1 * (0.5 * dt)), input);
        let k3 = self.derivative(&(&x + &k2 * (0.5 * dt)), input);
        let k4 = self.derivative(&(&x + &k3 * dt), input);
        self.state = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }

    pub fn output(&self) -> f64 {
        self.c.dot(&self.state)
    }
}

/// Observer-canonical realization of
///
/// ```text
/// D(p) w = sum_j P_j(p) sigma_j
/// ```
///
/// with `D` of degree `m` and every `deg P_j <= m`. Channels may be arbitrary
/// signals, including delayed copies of `w` itself; a channel with
/// `deg P_j = m` contributes a direct feedthrough.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayRealization {
    a: Mat,
    /// Column `j` is the state input vector of channel `j`.
    b: Mat,
    feedthrough: Vec<f64>,
}

impl DelayRealization {
    pub fn new(den: &Polynomial, numerators: &[Polynomial]) -> Result<Self> {
        let m = den.degree().ok_or(Error::ZeroPolynomial)?;
        let lead = den.leading();
        let a_coef: Vec<f64> = (0..m).map(|k| den.coeff(k) / lead).collect();
        let mut a = Mat::zeros(m, m);
        for i in 0..m {
            a[(i, 0)] = -a_coef[m - 1 - i];
            if i + 1 < m {
                a[(i, i + 1)] = 1.0;
            }
        }
        let mut b = Mat::zeros(m, numerators.len());
        let mut feedthrough = vec![0.0; numerators.len()];
        for (j, p) in numerators.iter().enumerate() {
            if p.degree().is_some_and(|d| d > m) {
                return Err(Error::DegreeViolation(format!(
                    "channel {j} numerator degree {} exceeds denominator degree {m}",
                    p.degree().unwrap_or(0)
                )));
            }
            let d = p.coeff(m) / lead;
            feedthrough[j] = d;
            for i in 0..m {
                let k = m - 1 - i;
                let coef = p.coeff(k) / lead;
                b[(i, j)] = if d == 0.0 { coef } else { coef - d * a_coef[k] };
            }
        }
        Ok(DelayRealization { a, b, feedthrough })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn channels(&self) -> usize {
        self.feedthrough.len()
    }

    pub fn feedthrough(&self, channel: usize) -> f64 {
        self.feedthrough[channel]
    }

    pub fn output(&self, x: &[f64], sigma: &[f64]) -> f64 {
        let xs = x.first().copied().unwrap_or(0.0);
        xs + self.feedthrough.iter().zip(sigma).map(|(d, s)| d * s).sum::<f64>()
    }

    pub fn derivative(&self, x: &[f64], sigma: &[f64], out: &mut [f64]) {
        let m = self.order();
        for i in 0..m {
            let mut v = self.a[(i, 0)] * x[0];
            if i + 1 < m {
                v += x[i + 1];
            }
            for (j, s) in sigma.iter().enumerate() {
                v += self.b[(i, j)] * s;
            }
            out[i] = v;
        }
    }

    /// One RK4 step with the channel values held constant.
    pub fn step_held(&self, x: &mut [f64], sigma: &[f64], dt: f64) {
        let m = self.order();
        let f = |x: &[f64]| {
            let mut out = vec![0.0; m];
            self.derivative(x, sigma, &mut out);
            out
        };
        let add = |a: &[f64], b: &[f64], k: f64| a.iter().zip(b).map(|(p, q)| p + k * q).collect::<Vec<_>>();
        let k1 = f(x);
        let k2 = f(&add(x, &k1, 0.5 * dt));
        let k3 = f(&add(x, &k2, 0.5 * dt));
        let k4 = f(&add(x, &k3, dt));
        for i in 0..m {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// `w^{(order)}` from the state and the channel derivatives.
    ///
    /// `sigma(j, k)` is only queried where the corresponding coefficient is
    /// nonzero, so channels of high relative degree need no derivatives at all.
    pub fn output_derivative(
        &self,
        x: &[f64],
        order: usize,
        sigma: &mut dyn FnMut(usize, usize) -> Result<f64>,
    ) -> Result<f64> {
        let m = self.order();
        let xv = Vector::from_column_slice(x);
        // row_k = e1^T A^k
        let mut rows = Vec::with_capacity(order + 1);
        let mut row = Vector::zeros(m);
        if m > 0 {
            row[0] = 1.0;
        }
        for _ in 0..=order {
            rows.push(row.clone());
            row = self.a.tr_mul(&row);
        }
        let mut value = if m > 0 { rows[order].dot(&xv) } else { 0.0 };
        for j in 0..self.channels() {
            for k in 0..order {
                let coef = if m > 0 { rows[order - 1 - k].dot(&self.b.column(j)) } else { 0.0 };
                if coef != 0.0 {
                    value += coef * sigma(j, k)?;
                }
            }
            if self.feedthrough[j] != 0.0 {
                value += self.feedthrough[j] * sigma(j, order)?;
            }
        }
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec())
    }

    #[test]
    fn first_order_filter_step_response() {
        let mut f = make_filter(&p(&[1.0, 1.0])).unwrap();
        let dt = 1e-3;
        for _ in 0..1000 {
            f.step(1.0, dt);
        }
        assert!((f.output() - (1.0 - (-1.0f64).exp())).abs() < 1e-6);
    }

    #[test]
    fn companion_layout() {
        let f = make_filter(&p(&[2.0, 3.0, 1.0])).unwrap();
        assert_eq!(f.a, Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]));
        assert_eq!(f.c, Vector::from_vec(vec![1.0, 0.0]));
        let mut z = f.clone();
        z.step(0.0, 0.1);
        assert!(z.state.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn filter_rejects_bad_polynomials() {
        assert!(matches!(make_filter(&p(&[1.0, 2.0])), Err(Error::NotMonic(_))));
        assert!(matches!(make_filter(&p(&[-1.0, 1.0])), Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn realization_matches_transfer_function() {
        // (s^2 + 3s + 2) w = (s + 5) sigma0 + (2 s^2 + 1) sigma1
        let den = p(&[2.0, 3.0, 1.0]);
        let r = DelayRealization::new(&den, &[p(&[5.0, 1.0]), p(&[1.0, 0.0, 2.0])]).unwrap();
        assert_eq!(r.feedthrough(1), 2.0);
        // transfer of channel j at s: c (sI - A)^{-1} b_j + d_j
        for s in [0.3, 1.1, -0.4] {
            let res = (Mat::identity(2, 2) * s - &r.a).try_inverse().unwrap();
            let g0 = (res.row(0) * r.b.column(0))[(0, 0)];
            let g1 = (res.row(0) * r.b.column(1))[(0, 0)] + r.feedthrough(1);
            assert!((g0 - (s + 5.0) / den.eval(s)).abs() < 1e-12);
            assert!((g1 - (2.0 * s * s + 1.0) / den.eval(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn output_derivative_skips_zero_coefficients() {
        // strictly proper with relative degree 2: w' = e1^T A x exactly
        let r = DelayRealization::new(&p(&[2.0, 3.0, 1.0]), &[p(&[1.0])]).unwrap();
        let x = [0.4, -0.7];
        let mut never = |_: usize, _: usize| -> Result<f64> { panic!("no channel derivative needed") };
        let d1 = r.output_derivative(&x, 1, &mut never).unwrap();
        let mut dx = [0.0; 2];
        r.derivative(&x, &[0.0], &mut dx);
        assert!((d1 - dx[0]).abs() < 1e-15);
    }
}
