//! Rouché-type certificate for the delayed closed-loop characteristic equation.
//!
//! Evaluates
//!
//! ```text
//! sup over Re s = sigma of |N(s)| / |M0(s) e^{2hs} + M1(s) e^{hs}|
//! ```
//!
//! on a vertical line. A value below one certifies that adding `N(s) e^{-2hs}`
//! to `M0(s) + M1(s) e^{-hs}` does not move zeros across the contour.

use super::Polynomial;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::par::Execution;

/// Which vertical line the supremum is taken on, given `v1 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LineSide {
    /// `Re s = -v1`, the contour enclosing the region right of `-v1`.
    #[default]
    Left,
    /// `Re s = +v1`, kept for comparison.
    Right,
}

#[derive(Debug, Clone, Copy)]
pub struct MarginOptions {
    pub line: LineSide,
    /// Uniform grid points on `[0, omega_cut]` (a log-spaced grid of the same size is added).
    pub grid_points: usize,
    /// The frequency range stops growing once the analytic tail bound drops below this
    /// fraction of the running maximum.
    pub tail_ratio: f64,
    pub execution: Execution,
}

impl Default for MarginOptions {
    fn default() -> Self {
        MarginOptions { line: LineSide::Left, grid_points: 2048, tail_ratio: 1e-3, execution: Execution::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginReport {
    pub supremum: f64,
    pub argmax_omega: f64,
    pub omega_cut: f64,
}

struct Ratio<'a> {
    m0: &'a Polynomial,
    m1: &'a Polynomial,
    num: &'a Polynomial,
    h: f64,
    sigma: f64,
}

impl Ratio<'_> {
    fn at(&self, omega: f64) -> f64 {
        let s = C64::new(self.sigma, omega);
        let den = self.m0.eval_complex(s) + self.m1.eval_complex(s) * (-self.h * s).exp();
        let scale = (2.0 * self.h * self.sigma).exp();
        self.num.eval_complex(s).norm() / (scale * den.norm())
    }

    /// Upper bound of the ratio over `|Im s| >= omega`, or `None` if the bound is not yet valid.
    fn tail_bound(&self, omega: f64) -> Option<f64> {
        let r = (self.sigma * self.sigma + omega * omega).sqrt();
        let m = self.m0.degree()?;
        let rel = |p: &Polynomial, skip_top: bool| -> f64 {
            p.coeffs()
                .iter()
                .enumerate()
                .filter(|(k, _)| !(skip_top && *k == m))
                .map(|(k, c)| c.abs() * r.powi(k as i32 - m as i32))
                .sum()
        };
        let lower = self.m0.leading().abs()
            - rel(self.m0, true)
            - (-self.h * self.sigma).exp() * rel(self.m1, false);
        (lower > 0.0).then(|| rel(self.num, false) / ((2.0 * self.h * self.sigma).exp() * lower))
    }
}

/// Supremum with default options (`Re s = -v1`).
pub fn delay_stability_margin(
    m0: &Polynomial,
    m1: &Polynomial,
    num: &Polynomial,
    h: f64,
    v1: f64,
) -> Result<f64> {
    delay_stability_margin_with(m0, m1, num, h, v1, &MarginOptions::default()).map(|r| r.supremum)
}

pub fn delay_stability_margin_with(
    m0: &Polynomial,
    m1: &Polynomial,
    num: &Polynomial,
    h: f64,
    v1: f64,
    opts: &MarginOptions,
) -> Result<MarginReport> {
    let m = m0.degree().ok_or(Error::ZeroPolynomial)?;
    if !(v1 > 0.0) || !(h >= 0.0) {
        return Err(Error::InvalidInput(format!("need v1 > 0 and h >= 0 (v1 = {v1}, h = {h})")));
    }
    if num.is_zero() {
        return Ok(MarginReport { supremum: 0.0, argmax_omega: 0.0, omega_cut: 0.0 });
    }
    if num.degree().is_some_and(|d| d >= m) {
        return Err(Error::DegreeViolation(format!(
            "numerator degree {} >= denominator degree {m}; the ratio does not decay",
            num.degree().unwrap_or(0)
        )));
    }
    if m1.degree().is_some_and(|d| d >= m) {
        return Err(Error::DegreeViolation(format!(
            "delayed denominator term has degree {} >= {m}",
            m1.degree().unwrap_or(0)
        )));
    }
    let sigma = match opts.line {
        LineSide::Left => -v1,
        LineSide::Right => v1,
    };
    let ratio = Ratio { m0, m1, num, h, sigma };

    let mut running = ratio.at(0.0);
    let mut omega_cut = 1.0;
    loop {
        for k in 1..=16 {
            running = running.max(ratio.at(omega_cut * k as f64 / 16.0));
        }
        let done = ratio.tail_bound(omega_cut).is_some_and(|b| b <= opts.tail_ratio * running);
        if done || omega_cut > 1e9 {
            break;
        }
        omega_cut *= 2.0;
    }

    let n = opts.grid_points.max(16);
    let mut grid: Vec<f64> = (0..=n).map(|i| omega_cut * i as f64 / n as f64).collect();
    let lo = (omega_cut * 1e-4).ln();
    let hi = omega_cut.ln();
    grid.extend((0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let values = opts.execution.map(&grid, |&w| ratio.at(w));

    let mut best = (values[0], grid[0]);
    let mut brackets = Vec::new();
    for i in 0..values.len() {
        let left = if i > 0 { values[i - 1] } else { f64::NEG_INFINITY };
        let right = values.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if values[i] >= left && values[i] >= right {
            let a = if i > 0 { grid[i - 1] } else { grid[0] };
            let b = grid.get(i + 1).copied().unwrap_or(grid[i]);
            brackets.push((a, b));
        }
        if values[i] > best.0 {
            best = (values[i], grid[i]);
        }
    }
    let refined = opts.execution.map(&brackets, |&(a, b)| golden_max(&ratio, a, b));
    for (v, w) in refined {
        if v > best.0 {
            best = (v, w);
        }
    }
    Ok(MarginReport { supremum: best.0, argmax_omega: best.1, omega_cut })
}

fn golden_max(r: &Ratio<'_>, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = r.at(c);
    let mut fd = r.at(d);
    for _ in 0..80 {
        if (b - a).abs() <= 1e-12 * (1.0 + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = r.at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = r.at(d);
        }
    }
    let ends = [(r.at(a), a), (r.at(b), b), (fc, c), (fd, d)];
    ends.into_iter().fold((f64::NEG_INFINITY, a), |best, x| if x.0 > best.0 { x } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec())
    }

    #[test]
    fn zero_numerator_gives_zero() {
        let m0 = Polynomial::from_real_roots(&[-1.0, -1.0, -1.0]);
        assert_eq!(delay_stability_margin(&m0, &Polynomial::zero(), &Polynomial::zero(), 1.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn cubic_example_closed_form() {
        // min over the line Re s = -0.5 of |s+1|^3 is 0.5^3 at omega = 0
        let m0 = Polynomial::from_real_roots(&[-1.0, -1.0, -1.0]);
        let v = delay_stability_margin(&m0, &Polynomial::zero(), &p(&[0.1]), 1.0, 0.5).unwrap();
        let expected = 0.1 * 1f64.exp() / 0.125;
        assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
    }

    #[test]
    fn numerator_scaling_is_linear() {
        let m0 = Polynomial::from_real_roots(&[-1.0, -2.0, -3.0]);
        let m1 = p(&[0.2, 0.1]);
        let n1 = p(&[0.3, 0.05]);
        let a = delay_stability_margin(&m0, &m1, &n1, 0.7, 0.4).unwrap();
        let b = delay_stability_margin(&m0, &m1, &n1.scale(2.0), 0.7, 0.4).unwrap();
        assert!((b - 2.0 * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn degree_violation() {
        let m0 = p(&[1.0, 1.0]);
        let r = delay_stability_margin(&m0, &Polynomial::zero(), &p(&[0.0, 1.0]), 1.0, 0.5);
        assert!(matches!(r, Err(Error::DegreeViolation(_))));
    }

    #[test]
    fn right_line_is_smaller_for_stable_denominator() {
        let m0 = Polynomial::from_real_roots(&[-1.0, -2.0]);
        let num = p(&[0.5]);
        let left = delay_stability_margin(&m0, &Polynomial::zero(), &num, 0.5, 0.3).unwrap();
        let opts = MarginOptions { line: LineSide::Right, ..MarginOptions::default() };
        let right = delay_stability_margin_with(&m0, &Polynomial::zero(), &num, 0.5, 0.3, &opts).unwrap();
        assert!(right.supremum < left);
    }
}
