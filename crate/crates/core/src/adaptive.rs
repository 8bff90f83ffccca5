//! Filtered-regressor estimation with a relative dead zone, projected
//! least-squares updates and controller resynthesis from the estimates.
//!
//! The plant is written in the linear regression form
//!
//! ```text
//! y = (F - M) y_f + Delta0 u_f + Delta1 u_f(t-h) + gamma0
//! ```
//!
//! where `y_f = y / F`, `u_f = u / F` and `F` is monic of degree `p = deg M`.

use serde::{Deserialize, Serialize};

use crate::controller::{solve_placement, ControllerParams, FilterRealization};
use crate::error::{Error, Result};
use crate::io::{csv_text, fmt_num};
use crate::linalg::{Mat, Vector};
use crate::polynomial::{sylvester_determinant, PencilPolynomials, Polynomial};

/// Smallest admissible |Sylvester determinant| during resynthesis.
pub const SYLV_MIN: f64 = 1e-8;

/// Block layout of the parameter vector for model order `p`:
/// `[F - M (p, degrees p-1..0), Delta0 (p+1, degrees p..0), Delta1 (p+1, degrees p..0)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterLayout {
    pub p: usize,
}

/// Plant polynomials recovered from a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedModel {
    pub m: Polynomial,
    pub delta0: Polynomial,
    pub delta1: Polynomial,
}

impl EstimatedModel {
    pub fn pencil_polynomials(&self) -> PencilPolynomials {
        PencilPolynomials {
            m: self.m.clone(),
            delta0: self.delta0.clone(),
            delta1: self.delta1.clone(),
            delta2: Vec::new(),
        }
    }
}

impl ParameterLayout {
    pub fn n_theta(&self) -> usize {
        3 * self.p + 2
    }

    fn descending(p: &Polynomial, top: usize) -> Vec<f64> {
        (0..=top).rev().map(|k| p.coeff(k)).collect()
    }

    fn ascending(block: &[f64]) -> Polynomial {
        Polynomial::new(block.iter().rev().copied().collect())
    }

    fn check_filter(&self, f: &Polynomial) -> Result<()> {
        if f.degree() != Some(self.p) || !f.is_monic(1e-12) {
            return Err(Error::DegreeViolation(format!("estimation filter must be monic of degree {}", self.p)));
        }
        Ok(())
    }

    /// Parameter vector of a plant with monic `M` of degree `p`.
    pub fn pack(&self, pp: &PencilPolynomials, f: &Polynomial) -> Result<Vec<f64>> {
        self.check_filter(f)?;
        if pp.m.degree() != Some(self.p) || !pp.m.is_monic(1e-9) {
            return Err(Error::DegreeViolation(format!("M must be monic of degree {}", self.p)));
        }
        for (name, d) in [("Delta0", &pp.delta0), ("Delta1", &pp.delta1)] {
            if d.degree().is_some_and(|k| k > self.p) {
                return Err(Error::DegreeViolation(format!("deg {name} exceeds {}", self.p)));
            }
        }
        let fm = f - &pp.m;
        let mut theta = if self.p == 0 { Vec::new() } else { Self::descending(&fm, self.p - 1) };
        theta.extend(Self::descending(&pp.delta0, self.p));
        theta.extend(Self::descending(&pp.delta1, self.p));
        Ok(theta)
    }

    /// `M = F - (F - M)` with the first block read as `F - M`.
    pub fn unpack(&self, theta: &[f64], f: &Polynomial) -> Result<EstimatedModel> {
        self.check_filter(f)?;
        if theta.len() != self.n_theta() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, expected {}",
                theta.len(),
                self.n_theta()
            )));
        }
        let p = self.p;
        let fm = Self::ascending(&theta[..p]);
        Ok(EstimatedModel {
            m: f - &fm,
            delta0: Self::ascending(&theta[p..2 * p + 1]),
            delta1: Self::ascending(&theta[2 * p + 1..]),
        })
    }

    /// `[D^{p-1} y_f..y_f, D^p u_f..u_f, D^p u_f(t-h)..u_f(t-h)]`.
    ///
    /// The filter states hold `D^j` of the filtered signal for `j < deg F`; the
    /// top derivative comes from the filter equation, so `deg F >= p` suffices.
    pub fn regressor(&self, filter: &FilterRealization, y_f: &[f64], u_f: &[f64], u: f64, u_f_h: &[f64], u_h: f64) -> Vec<f64> {
        let mut phi = Vec::with_capacity(self.n_theta());
        phi.extend((0..self.p).rev().map(|k| filtered_derivative(filter, y_f, 0.0, k)));
        phi.extend((0..=self.p).rev().map(|k| filtered_derivative(filter, u_f, u, k)));
        phi.extend((0..=self.p).rev().map(|k| filtered_derivative(filter, u_f_h, u_h, k)));
        phi
    }
}

/// `D^k w_f` from the filter state and the filter input.
fn filtered_derivative(filter: &FilterRealization, state: &[f64], input: f64, k: usize) -> f64 {
    let n = filter.order();
    if k < n {
        state[k]
    } else {
        input - (0..n).map(|j| filter.f.coeff(j) * state[j]).sum::<f64>()
    }
}

/// Componentwise box for the parameter estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl OmegaBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch("Omega bounds have different lengths".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidInput("Omega lower bound exceeds upper bound".into()));
        }
        Ok(OmegaBox { lo, hi })
    }

    /// `theta_i +- max(rel |theta_i|, abs_min)`.
    pub fn around(theta: &[f64], rel: f64, abs_min: f64) -> Self {
        let pad: Vec<f64> = theta.iter().map(|t| (rel * t.abs()).max(abs_min)).collect();
        OmegaBox {
            lo: theta.iter().zip(&pad).map(|(t, p)| t - p).collect(),
            hi: theta.iter().zip(&pad).map(|(t, p)| t + p).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (l, h))| l <= t && t <= h)
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (t, (l, h)) in theta.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *t = t.clamp(*l, *h);
        }
    }
}

fn default_alpha1() -> f64 {
    1.0
}
fn default_g() -> f64 {
    2.0
}
fn default_rho0() -> f64 {
    0.5
}
fn default_eps1() -> f64 {
    1e-3
}
fn default_eps2() -> f64 {
    1e-4
}
fn default_p0() -> f64 {
    10.0
}
fn default_p_min() -> f64 {
    1e-8
}

/// Adaptation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_alpha1")]
    pub alpha1: f64,
    /// Dead-zone factor, greater than one.
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default = "default_eps2")]
    pub eps2: f64,
    /// `P(0) = p0 I`.
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default = "default_p_min")]
    pub p_min: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            alpha1: default_alpha1(),
            g: default_g(),
            rho0: default_rho0(),
            eps1: default_eps1(),
            eps2: default_eps2(),
            p0: default_p0(),
            p_min: default_p_min(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        if !(self.alpha1 > 0.0) {
            return bad("alpha1 must be positive");
        }
        if !(self.g > 1.0) {
            return bad("dead-zone factor g must exceed 1");
        }
        if !(self.rho0 > 0.0) {
            return bad("rho0 must be positive");
        }
        if !(self.eps1 >= 0.0 && self.eps2 >= 0.0) {
            return bad("eps1 and eps2 must be nonnegative");
        }
        if !(self.p0 > 0.0 && self.p_min > 0.0) {
            return bad("p0 and p_min must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub theta: Vec<f64>,
    pub p: Mat,
    pub omega: OmegaBox,
    /// Decayed supremum of `||phi||^2`.
    pub gamma_sup: f64,
    /// Number of steps in which the covariance eigenvalue floor was applied.
    pub floor_events: usize,
}

impl EstimatorState {
    pub fn new(theta0: Vec<f64>, omega: OmegaBox, p0: f64) -> Result<Self> {
        if omega.dim() != theta0.len() {
            return Err(Error::DimensionMismatch(format!(
                "Omega has dimension {}, parameter vector {}",
                omega.dim(),
                theta0.len()
            )));
        }
        if !omega.contains(&theta0) {
            return Err(Error::InvalidInput("initial estimate lies outside Omega".into()));
        }
        if !(p0 > 0.0) {
            return Err(Error::InvalidInput("initial covariance must be positive".into()));
        }
        let n = theta0.len();
        Ok(EstimatorState { theta: theta0, p: Mat::identity(n, n) * p0, omega, gamma_sup: 0.0, floor_events: 0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub y_hat: f64,
    pub e: f64,
}

pub fn predict_and_error(theta: &[f64], phi: &[f64], y: f64) -> Prediction {
    let y_hat = theta.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
    Prediction { y_hat, e: y - y_hat }
}

/// Advances the decayed supremum and returns `gamma = eps1 * sup + eps2`.
pub fn disturbance_bound_update(state: &mut EstimatorState, cfg: &EstimatorConfig, phi: &[f64], dt: f64) -> f64 {
    let norm2 = phi.iter().map(|x| x * x).sum::<f64>();
    state.gamma_sup = (state.gamma_sup * (-2.0 * cfg.rho0 * dt).exp()).max(norm2);
    cfg.eps1 * state.gamma_sup + cfg.eps2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub s: f64,
    pub b: f64,
}

/// Relative dead zone: `s = 0` inside `|e| <= g sqrt(gamma)`, `b = alpha1 s / (1 + phi^T P phi)`.
pub fn dead_zone_gate(e: f64, gamma: f64, g: f64, alpha1: f64, p: &Mat, phi: &[f64]) -> Gate {
    let threshold = g * gamma.max(0.0).sqrt();
    if e.abs() <= threshold {
        return Gate { s: 0.0, b: 0.0 };
    }
    let s = 1.0 - threshold / e.abs();
    let v = Vector::from_column_slice(phi);
    let quad = v.dot(&(p * &v));
    Gate { s, b: alpha1 * s / (1.0 + quad) }
}

/// One Euler step of the covariance and parameter updates. Returns `false` and
/// leaves the state untouched when `b = 0`.
pub fn estimator_step(state: &mut EstimatorState, cfg: &EstimatorConfig, phi: &[f64], e: f64, b: f64, dt: f64) -> bool {
    if b == 0.0 {
        return false;
    }
    let v = Vector::from_column_slice(phi);
    let pphi = &state.p * &v;
    for (t, g) in state.theta.iter_mut().zip(pphi.iter()) {
        *t += dt * b * g * e;
    }
    state.omega.clamp(&mut state.theta);
    let mut p = &state.p - &pphi * pphi.transpose() * (dt * b);
    p = (&p + p.transpose()) * 0.5;
    let eig = p.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < cfg.p_min) {
        let floored = eig.eigenvalues.map(|l| l.max(cfg.p_min));
        p = &eig.eigenvectors * Mat::from_diagonal(&floored) * eig.eigenvectors.transpose();
        p = (&p + p.transpose()) * 0.5;
        state.floor_events += 1;
    }
    state.p = p;
    true
}

/// Re-solves the placement equations with the estimated plant; `T`, `L`, `F0`,
/// `M0*` and `M1*` are kept from `base`.
pub fn adaptive_resynthesis(
    theta: &[f64],
    layout: ParameterLayout,
    f: &Polynomial,
    base: &ControllerParams,
) -> Result<ControllerParams> {
    let est = layout.unpack(theta, f)?;
    let a = &base.f0 * &est.m;
    let deg = crate::controller::controller_degree(base.f0.degree().unwrap_or(0), layout.p);
    let det = sylvester_determinant(&a, &est.delta0, Some(deg), Some(deg)).unwrap_or(0.0);
    if !(det.abs() >= SYLV_MIN) {
        return Err(Error::ControllabilityLost { det });
    }
    let pl = solve_placement(&est.pencil_polynomials(), &base.f0, &base.m0_star, &base.m1_star)
        .map_err(|e| match e {
            Error::NotCoprime(_) | Error::SingularSylvester => Error::ControllabilityLost { det },
            other => other,
        })?;
    Ok(ControllerParams { r0: pl.r0, s0: pl.s0, r1: pl.r1, s1: pl.s1, ..base.clone() })
}

/// One row of the estimator trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub e: f64,
    pub s: f64,
    pub b: f64,
    pub gamma: f64,
    pub theta: Vec<f64>,
    pub frozen: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorTrace {
    pub rows: Vec<TraceRow>,
}

impl EstimatorTrace {
    /// `t, e, s, b, gamma, theta_1.., frozen` with a header row.
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.theta.len());
        let mut header: Vec<String> = ["t", "e", "s", "b", "gamma"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=n).map(|i| format!("theta_{i}")));
        header.push("frozen".into());
        let rows = self.rows.iter().map(|r| {
            let mut cells: Vec<String> = [r.t, r.e, r.s, r.b, r.gamma].iter().map(|&x| fmt_num(x)).collect();
            cells.extend(r.theta.iter().map(|&x| fmt_num(x)));
            cells.push(if r.frozen { "1" } else { "0" }.into());
            cells.join(",")
        });
        csv_text(&header, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{make_filter, synthesize_pole_placement, PlacementTargets};
    use crate::polynomial::LineSide;

    fn p(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec())
    }

    fn plant() -> PencilPolynomials {
        PencilPolynomials { m: p(&[1.0, 1.0]), delta0: p(&[6.0, 1.0]), delta1: Polynomial::zero(), delta2: vec![] }
    }

    #[test]
    fn pack_unpack_round_trip() {
        let layout = ParameterLayout { p: 1 };
        let f = p(&[2.0, 1.0]);
        let theta = layout.pack(&plant(), &f).unwrap();
        assert_eq!(theta, vec![1.0, 1.0, 6.0, 0.0, 0.0]);
        let est = layout.unpack(&theta, &f).unwrap();
        assert_eq!(est.m, plant().m);
        assert_eq!(est.delta0, plant().delta0);
        assert!(est.delta1.is_zero());
    }

    #[test]
    fn regressor_of_critically_damped_filter() {
        // u = 1, y = 0, F = (s + 1)^2: u_f = 1 - (1 + t) e^{-t}, D u_f = t e^{-t}
        let filter = make_filter(&p(&[1.0, 2.0, 1.0])).unwrap();
        let mut fu = filter.clone();
        let dt = 1e-3;
        for _ in 0..1000 {
            fu.step(1.0, dt);
        }
        let layout = ParameterLayout { p: 1 };
        let x: Vec<f64> = fu.state.iter().copied().collect();
        let phi = layout.regressor(&filter, &[0.0, 0.0], &x, 1.0, &[0.0, 0.0], 0.0);
        let e1 = (-1.0f64).exp();
        assert!((phi[1] - e1).abs() < 1e-6 && (phi[2] - (1.0 - 2.0 * e1)).abs() < 1e-6);
        assert_eq!(phi[0], 0.0);
        assert_eq!(&phi[3..], &[0.0, 0.0]);
        assert!(layout.regressor(&filter, &[0.0; 2], &[0.0; 2], 0.0, &[0.0; 2], 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prediction_error_examples() {
        let theta = [1.0, 2.0, -0.5];
        let phi = [0.3, -1.0, 2.0];
        let y = predict_and_error(&theta, &phi, 0.0).y_hat;
        assert_eq!(predict_and_error(&theta, &phi, y).e, 0.0);
        assert_eq!(predict_and_error(&[0.0; 3], &phi, 4.0), Prediction { y_hat: 0.0, e: 4.0 });
        let mut perturbed = theta;
        perturbed[1] += 0.25;
        assert!((predict_and_error(&perturbed, &phi, y).e + 0.25 * phi[1]).abs() < 1e-15);
    }

    #[test]
    fn bound_decays_geometrically() {
        let cfg = EstimatorConfig { rho0: 1.0, eps1: 1.0, eps2: 0.0, ..EstimatorConfig::default() };
        let mut st = EstimatorState::new(vec![0.0, 0.0], OmegaBox::around(&[0.0, 0.0], 0.5, 1.0), 1.0).unwrap();
        disturbance_bound_update(&mut st, &cfg, &[2.0, 0.0], 0.5);
        disturbance_bound_update(&mut st, &cfg, &[0.0, 0.0], 0.5);
        let g = disturbance_bound_update(&mut st, &cfg, &[0.0, 0.0], 0.5);
        assert!((g - 4.0 * (-2.0f64).exp()).abs() < 1e-12);

        let quiet = EstimatorConfig { eps1: 0.0, eps2: 0.3, ..cfg };
        assert_eq!(disturbance_bound_update(&mut st, &quiet, &[5.0, 5.0], 0.5), 0.3);
    }

    #[test]
    fn dead_zone_examples() {
        let p1 = Mat::identity(1, 1);
        assert_eq!(dead_zone_gate(0.5, 1.0, 2.0, 1.0, &p1, &[1.0]), Gate { s: 0.0, b: 0.0 });
        let g = dead_zone_gate(4.0, 1.0, 2.0, 1.0, &p1, &[1.0]);
        assert_eq!(g.s, 0.5);
        assert_eq!(g.b, 0.25);
        assert_eq!(dead_zone_gate(-1e-3, 0.0, 2.0, 1.0, &p1, &[0.0]).s, 1.0);
    }

    #[test]
    fn scalar_update_arithmetic() {
        let cfg = EstimatorConfig::default();
        let mut st = EstimatorState::new(vec![0.5], OmegaBox::new(vec![-10.0], vec![10.0]).unwrap(), 1.0).unwrap();
        assert!(estimator_step(&mut st, &cfg, &[1.0], 1.0, 1.0, 0.01));
        assert!((st.p[(0, 0)] - 0.99).abs() < 1e-15);
        assert!((st.theta[0] - 0.51).abs() < 1e-15);
    }

    #[test]
    fn frozen_step_is_bitwise_identity() {
        let cfg = EstimatorConfig::default();
        let mut st = EstimatorState::new(vec![0.1, -0.2], OmegaBox::around(&[0.0, 0.0], 0.5, 1.0), 3.0).unwrap();
        let before = st.clone();
        assert!(!estimator_step(&mut st, &cfg, &[1.0, 2.0], 5.0, 0.0, 0.01));
        assert_eq!(st, before);
    }

    #[test]
    fn projection_clamps_to_bound() {
        let cfg = EstimatorConfig::default();
        let mut st = EstimatorState::new(vec![0.9], OmegaBox::new(vec![-1.0], vec![1.0]).unwrap(), 100.0).unwrap();
        estimator_step(&mut st, &cfg, &[1.0], 10.0, 1.0, 0.1);
        assert_eq!(st.theta[0], 1.0);
    }

    fn base() -> ControllerParams {
        let tg = PlacementTargets {
            f: Some(p(&[2.0, 1.0])),
            f0: p(&[1.0, 1.0]),
            m0_star: Polynomial::from_real_roots(&[-1.5, -4.0, -5.0]),
            m1_star: Polynomial::zero(),
            t: None,
            l: None,
            h: 1.0,
            v: 0.5,
            v1: 0.25,
            ell: 1,
            line: LineSide::Left,
        };
        synthesize_pole_placement(&plant(), &tg).unwrap()
    }

    #[test]
    fn resynthesis_at_truth_reproduces_design() {
        let layout = ParameterLayout { p: 1 };
        let f = p(&[2.0, 1.0]);
        let theta = layout.pack(&plant(), &f).unwrap();
        let c = adaptive_resynthesis(&theta, layout, &f, &base()).unwrap();
        let b = base();
        for (x, y) in [(&c.r0, &b.r0), (&c.s0, &b.s0), (&c.r1, &b.r1), (&c.s1, &b.s1)] {
            assert!((x - y).norm_inf() < 1e-12);
        }
    }

    #[test]
    fn resynthesis_is_continuous() {
        let layout = ParameterLayout { p: 1 };
        let f = p(&[2.0, 1.0]);
        let theta = layout.pack(&plant(), &f).unwrap();
        let c0 = adaptive_resynthesis(&theta, layout, &f, &base()).unwrap();
        for j in 0..theta.len() {
            let mut t = theta.clone();
            t[j] += 1e-9;
            let c = adaptive_resynthesis(&t, layout, &f, &base()).unwrap();
            assert!((&c.r0 - &c0.r0).norm_inf() < 1e-6 && (&c.s0 - &c0.s0).norm_inf() < 1e-6);
        }
    }

    #[test]
    fn common_root_loses_controllability() {
        let layout = ParameterLayout { p: 1 };
        let f = p(&[2.0, 1.0]);
        // Delta0 = s + 1 shares the root of F0 M
        let theta = [1.0, 1.0, 1.0, 0.0, 0.0];
        let r = adaptive_resynthesis(&theta, layout, &f, &base());
        assert!(matches!(r, Err(Error::ControllabilityLost { .. })));
    }

    #[test]
    fn trace_csv_layout() {
        let trace = EstimatorTrace {
            rows: vec![TraceRow { t: 0.0, e: 1.0, s: 0.0, b: 0.0, gamma: 0.5, theta: vec![2.0], frozen: true }],
        };
        let csv = trace.to_csv();
        assert!(csv.starts_with("t,e,s,b,gamma,theta_1,frozen\n"));
        assert!(csv.trim_end().ends_with(",1"));
    }
}
