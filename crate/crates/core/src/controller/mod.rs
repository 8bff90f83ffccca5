//! Pole-placement synthesis, model matching, the control law and the
//! disturbance compensator.
//!
//! The control law is
//!
//! ```text
//! F0 (R0 u + R1 u(t-h)) = T u_c - S0 y - S1 y(t-h) + L u0
//! ```
//!
//! and with the plant `M y = Delta0 u + Delta1 u(t-h)` the closed loop obeys
//!
//! ```text
//! (M0* + M1* e^{-hs} + Delta1 S1 e^{-2hs}) y = Delta T u_c + Delta L u0
//! ```
//!
//! where `F0 M R0 + Delta0 S0 = M0*` and `F0 M R1 + Delta0 S1 = M1* - Delta1 S0`.

mod compensator;
mod realization;

pub use compensator::{certify_delta, CompensatorRealization};
pub use realization::{make_filter, DelayRealization, FilterRealization};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polynomial::{
    delay_stability_margin_with, is_hurwitz, solve_diophantine, LineSide, MarginOptions, PencilPolynomials,
    Polynomial,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    FullDelay,
    DelayFree,
    ModelMatching,
}

/// Controller polynomials. Serialized with the conventional capitalized names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    pub mode: ControlMode,
    #[serde(rename = "F")]
    pub f: Polynomial,
    #[serde(rename = "F0")]
    pub f0: Polynomial,
    #[serde(rename = "T")]
    pub t: Polynomial,
    #[serde(rename = "L")]
    pub l: Polynomial,
    #[serde(rename = "R0")]
    pub r0: Polynomial,
    #[serde(rename = "R1")]
    pub r1: Polynomial,
    #[serde(rename = "S0")]
    pub s0: Polynomial,
    #[serde(rename = "S1")]
    pub s1: Polynomial,
    #[serde(rename = "M0star")]
    pub m0_star: Polynomial,
    #[serde(rename = "M1star")]
    pub m1_star: Polynomial,
    pub h: f64,
    pub v: f64,
    /// Supremum of the delay certificate for the `Delta1 S1 e^{-2hs}` term.
    #[serde(default)]
    pub margin: f64,
    /// Reference-model denominator in model-matching mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_den: Option<Polynomial>,
    /// Reference-model numerator in model-matching mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_num: Option<Polynomial>,
}

impl ControllerParams {
    /// `F0 R0` and `F0 R1`.
    pub fn denominators(&self) -> (Polynomial, Polynomial) {
        (&self.f0 * &self.r0, &self.f0 * &self.r1)
    }

    /// Channels `[u_c(t), y(t), y(t-h), u0(t), u(t-h)]`.
    pub fn realization(&self) -> Result<DelayRealization> {
        let (den, den1) = self.denominators();
        let m = den.degree().ok_or(Error::ZeroPolynomial)?;
        if self.s0.degree().is_some_and(|d| d >= m) {
            return Err(Error::DegreeViolation(format!(
                "controller is not strictly proper from y: deg S0 = {} >= deg F0 R0 = {m}",
                self.s0.degree().unwrap_or(0)
            )));
        }
        DelayRealization::new(&den, &[self.t.clone(), -&self.s0, -&self.s1, self.l.clone(), -&den1])
    }
}

/// Channel positions of [`ControllerParams::realization`].
pub mod channel {
    pub const REFERENCE: usize = 0;
    pub const OUTPUT: usize = 1;
    pub const OUTPUT_DELAYED: usize = 2;
    pub const COMPENSATOR: usize = 3;
    pub const INPUT_DELAYED: usize = 4;
    pub const COUNT: usize = 5;
}

/// Design data for [`synthesize_pole_placement`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementTargets {
    pub f: Option<Polynomial>,
    pub f0: Polynomial,
    pub m0_star: Polynomial,
    pub m1_star: Polynomial,
    pub t: Option<Polynomial>,
    pub l: Option<Polynomial>,
    pub h: f64,
    pub v: f64,
    pub v1: f64,
    /// Index of the plant, used in the degree condition on `F0`.
    pub ell: usize,
    pub line: LineSide,
}

/// Tolerance for treating two roots as common.
pub const COMMON_ROOT_TOL: f64 = 1e-6;

fn common_roots(a: &Polynomial, b: &Polynomial) -> Result<Vec<crate::linalg::C64>> {
    if a.degree().unwrap_or(0) == 0 || b.is_zero() {
        return Ok(Vec::new());
    }
    let scale = |p: &Polynomial, r: crate::linalg::C64| {
        p.coeffs().iter().enumerate().map(|(k, c)| c.abs() * r.norm().max(1.0).powi(k as i32)).sum::<f64>()
    };
    Ok(a.roots()?
        .into_iter()
        .filter(|&r| b.eval_complex(r).norm() <= COMMON_ROOT_TOL * scale(b, r).max(f64::MIN_POSITIVE))
        .collect())
}

fn check_filter(f0: &Polynomial) -> Result<()> {
    if !f0.is_monic(1e-12) {
        return Err(Error::NotMonic(f0.leading()));
    }
    if !is_hurwitz(f0, 0.0)? {
        return Err(Error::NotHurwitz { margin: 0.0 });
    }
    Ok(())
}

fn map_singular(e: Error, what: &str) -> Error {
    match e {
        Error::SingularSylvester => Error::NotCoprime(what.to_string()),
        other => other,
    }
}

/// Smallest power of `F0` of degree at least `n_min` (`1` when `n_min = 0`).
pub fn default_l(f0: &Polynomial, n_min: usize) -> Polynomial {
    let d = f0.degree().unwrap_or(0).max(1);
    f0.pow(n_min.div_ceil(d))
}

/// Unit DC gain: `(M0*(0) + M1*(0) + Delta1(0) S1(0)) / Delta(0)`, or `1` if `Delta(0)` vanishes.
pub fn default_t(pp: &PencilPolynomials, m0: &Polynomial, m1: &Polynomial, s1: &Polynomial) -> Polynomial {
    let delta_dc = pp.delta0.eval(0.0) + pp.delta1.eval(0.0);
    if delta_dc.abs() < 1e-9 {
        return Polynomial::one();
    }
    Polynomial::constant((m0.eval(0.0) + m1.eval(0.0) + pp.delta1.eval(0.0) * s1.eval(0.0)) / delta_dc)
}

/// Degree of the controller polynomials `R_i`, `S_i`.
pub fn controller_degree(n_f0: usize, n_m: usize) -> usize {
    (n_f0 + n_m).saturating_sub(1)
}

/// Solves the two Diophantine equations and certifies the delayed closed loop.
///
/// `pp` is normalized internally so that `M` is monic.
pub fn synthesize_pole_placement(pp: &PencilPolynomials, tg: &PlacementTargets) -> Result<ControllerParams> {
    let params = synthesize_uncertified(pp, tg)?;
    if params.margin >= 1.0 {
        return Err(Error::StabilityMarginFailed { supremum: params.margin });
    }
    Ok(params)
}

/// As [`synthesize_pole_placement`] but returns the parameters even when the
/// certificate for the `e^{-2hs}` term fails; `margin` carries the supremum.
pub fn synthesize_uncertified(pp: &PencilPolynomials, tg: &PlacementTargets) -> Result<ControllerParams> {
    let pp = pp.normalized()?;
    check_filter(&tg.f0)?;
    let n_m = pp.m.degree().unwrap_or(0);
    let n_f0 = tg.f0.degree().unwrap_or(0);
    let expected = 2 * (n_f0 + n_m) - 1;
    if tg.m0_star.degree() != Some(expected) {
        return Err(Error::DegreeConstraintViolated(format!(
            "deg M0* = {:?}, required 2(n_F0 + n_M) - 1 = {expected}",
            tg.m0_star.degree()
        )));
    }
    if !tg.m0_star.is_monic(1e-9) {
        return Err(Error::NotMonic(tg.m0_star.leading()));
    }
    if tg.m1_star.degree().is_some_and(|d| d >= expected) {
        return Err(Error::DegreeConstraintViolated(format!(
            "deg M1* = {} must be below deg M0* = {expected}",
            tg.m1_star.degree().unwrap_or(0)
        )));
    }
    if !is_hurwitz(&tg.m0_star, tg.v)? {
        return Err(Error::NotHurwitz { margin: tg.v });
    }
    let opts = MarginOptions { line: tg.line, ..MarginOptions::default() };
    if !tg.m1_star.is_zero() {
        // M0* + M1* e^{-hs}: certificate with half the delay gives sup |M1* e^{-hs} / M0*|
        let rep = delay_stability_margin_with(&tg.m0_star, &Polynomial::zero(), &tg.m1_star, tg.h / 2.0, tg.v1, &opts)?;
        if rep.supremum >= 1.0 {
            return Err(Error::StabilityMarginFailed { supremum: rep.supremum });
        }
    }
    for (name, d) in [("Delta0", &pp.delta0), ("Delta1", &pp.delta1)] {
        let common = common_roots(&tg.f0, d)?;
        if !common.is_empty() {
            return Err(Error::NotCoprime(format!("F0 and {name} share the root {}", common[0])));
        }
    }

    let Placement { r0, s0, r1, s1 } = solve_placement(&pp, &tg.f0, &tg.m0_star, &tg.m1_star)?;

    let d1s1 = &pp.delta1 * &s1;
    let margin = if d1s1.is_zero() {
        0.0
    } else {
        delay_stability_margin_with(&tg.m0_star, &tg.m1_star, &d1s1, tg.h, tg.v1, &opts)?.supremum
    };
    let t = tg.t.clone().unwrap_or_else(|| default_t(&pp, &tg.m0_star, &tg.m1_star, &s1));
    let n_l_min = (n_f0 + n_m).saturating_sub(2);
    let l = tg.l.clone().unwrap_or_else(|| default_l(&tg.f0, n_l_min));
    check_degrees(&l, &t, n_f0, n_m, tg.ell)?;
    let mode = if pp.delta1.is_zero() && tg.m1_star.is_zero() { ControlMode::DelayFree } else { ControlMode::FullDelay };
    Ok(ControllerParams {
        mode,
        f: tg.f.clone().unwrap_or_else(|| tg.f0.clone()),
        f0: tg.f0.clone(),
        t,
        l,
        r0,
        r1,
        s0,
        s1,
        m0_star: tg.m0_star.clone(),
        m1_star: tg.m1_star.clone(),
        h: tg.h,
        v: tg.v,
        margin,
        model_den: None,
        model_num: None,
    })
}

/// Controller polynomials from the two Diophantine equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub r0: Polynomial,
    pub s0: Polynomial,
    pub r1: Polynomial,
    pub s1: Polynomial,
}

/// Solves `F0 M R0 + Delta0 S0 = M0*` and `F0 M R1 + Delta0 S1 = M1* - Delta1 S0`
/// for a monic `M`, without any stability checks.
pub fn solve_placement(
    pp: &PencilPolynomials,
    f0: &Polynomial,
    m0_star: &Polynomial,
    m1_star: &Polynomial,
) -> Result<Placement> {
    let deg = controller_degree(f0.degree().unwrap_or(0), pp.m.degree().unwrap_or(0));
    let a = f0 * &pp.m;
    let first = solve_diophantine(&a, &pp.delta0, m0_star, Some(deg), Some(deg))
        .map_err(|e| map_singular(e, "F0 M and Delta0 are not coprime"))?;
    let rhs = m1_star - &(&pp.delta1 * &first.y);
    let second = solve_diophantine(&a, &pp.delta0, &rhs, Some(deg), Some(deg))
        .map_err(|e| map_singular(e, "F0 M and Delta0 are not coprime"))?;
    Ok(Placement { r0: first.x, s0: first.y, r1: second.x, s1: second.y })
}

/// `n_L >= max(0, n_F0 + n_M - 2)` and `2 n_F0 >= n_T + ell - n_M`.
pub fn check_degrees(l: &Polynomial, t: &Polynomial, n_f0: usize, n_m: usize, ell: usize) -> Result<()> {
    let n_l = l.degree().unwrap_or(0);
    if n_l < (n_f0 + n_m).saturating_sub(2) {
        return Err(Error::DegreeConstraintViolated(format!("n_L = {n_l} < n_F0 + n_M - 2")));
    }
    let n_t = t.degree().unwrap_or(0);
    if 2 * n_f0 + n_m < n_t + ell {
        return Err(Error::DegreeConstraintViolated(format!(
            "n_F0 = {n_f0} < (n_T + ell - n_M) / 2 with n_T = {n_t}, ell = {ell}, n_M = {n_m}"
        )));
    }
    Ok(())
}

/// Boundary band on real parts: roots this close to `-v` stay uncancelled.
pub const SPLIT_TOL: f64 = 1e-7;

/// `Delta0 = Delta0+ Delta0-` with the monic factor `Delta0+` collecting roots
/// with real part below `-v`.
pub fn split_delta0(delta0: &Polynomial, v: f64) -> Result<(Polynomial, Polynomial)> {
    if delta0.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let roots = delta0.roots()?;
    let (plus, minus): (Vec<_>, Vec<_>) = roots.into_iter().partition(|r| r.re < -v - SPLIT_TOL);
    Ok((Polynomial::from_roots(&plus), Polynomial::from_roots(&minus).scale(delta0.leading())))
}

/// Model-following design: cancels the stable zeros `Delta0+` and places the
/// remaining closed-loop poles at the roots of `Mm`.
pub fn model_matching_synthesis(
    pp: &PencilPolynomials,
    f0: &Polynomial,
    mm: &Polynomial,
    v: f64,
    dm_prime: Option<Polynomial>,
    h: f64,
) -> Result<ControllerParams> {
    let pp = pp.normalized()?;
    if !pp.delta1.is_zero() {
        return Err(Error::InvalidInput("model matching requires a plant without delayed input (Delta1 = 0)".into()));
    }
    check_filter(f0)?;
    if !mm.is_monic(1e-9) {
        return Err(Error::NotMonic(mm.leading()));
    }
    if !is_hurwitz(mm, 0.0)? {
        return Err(Error::NotHurwitz { margin: 0.0 });
    }
    let (plus, minus) = split_delta0(&pp.delta0, v)?;
    let n_m = pp.m.degree().unwrap_or(0);
    let n_f0 = f0.degree().unwrap_or(0);
    let n_minus = minus.degree().unwrap_or(0);
    let deg_r = (n_f0 + n_m).checked_sub(n_minus + 1).ok_or_else(|| {
        Error::DegreeConstraintViolated(format!("n_F0 + n_M = {} leaves no room for R0'", n_f0 + n_m))
    })?;
    let expected = n_f0 + n_m + deg_r;
    if mm.degree() != Some(expected) {
        return Err(Error::DegreeConstraintViolated(format!(
            "deg Mm = {:?}, required n_F0 + n_M + deg R0' = {expected}",
            mm.degree()
        )));
    }
    let common = common_roots(f0, &pp.delta0)?;
    if !common.is_empty() {
        return Err(Error::NotCoprime(format!("F0 and Delta0 share the root {}", common[0])));
    }
    let a = f0 * &pp.m;
    let sol = solve_diophantine(&a, &minus, mm, Some(deg_r), Some(controller_degree(n_f0, n_m)))
        .map_err(|e| map_singular(e, "F0 M and Delta0- are not coprime"))?;
    let t = dm_prime.unwrap_or_else(|| {
        let dc = minus.eval(0.0);
        if dc.abs() < 1e-9 { Polynomial::one() } else { Polynomial::constant(mm.eval(0.0) / dc) }
    });
    let l = default_l(f0, (n_f0 + n_m).saturating_sub(2));
    Ok(ControllerParams {
        mode: ControlMode::ModelMatching,
        f: f0.clone(),
        f0: f0.clone(),
        r0: &plus * &sol.x,
        r1: Polynomial::zero(),
        s0: sol.y,
        s1: Polynomial::zero(),
        m0_star: &plus * mm,
        m1_star: Polynomial::zero(),
        model_num: Some(&minus * &t),
        model_den: Some(mm.clone()),
        t,
        l,
        h,
        v,
        margin: 0.0,
    })
}

/// Discrete-time stepper for the control law with inputs held over each step.
#[derive(Debug, Clone)]
pub struct ControlLaw {
    realization: DelayRealization,
    state: Vec<f64>,
    delay_steps: usize,
    u_history: std::collections::VecDeque<f64>,
    y_history: std::collections::VecDeque<f64>,
    last_u: f64,
}

impl ControlLaw {
    /// `dt` must divide `h`; past values of `u` and `y` start at zero.
    pub fn new(params: &ControllerParams, dt: f64) -> Result<Self> {
        let realization = params.realization()?;
        let delay_steps = crate::system::steps_per_delay(params.h, dt)?;
        Ok(ControlLaw {
            state: vec![0.0; realization.order()],
            realization,
            delay_steps,
            u_history: std::iter::repeat_n(0.0, delay_steps).collect(),
            y_history: std::iter::repeat_n(0.0, delay_steps).collect(),
            last_u: 0.0,
        })
    }

    pub fn output(&self) -> f64 {
        self.last_u
    }

    /// Advances one step of length `dt` and returns `u` at the end of the step.
    pub fn step(&mut self, u_c: f64, y: f64, u0: f64, dt: f64) -> f64 {
        let u_del = self.u_history.front().copied().unwrap_or(0.0);
        let y_del = self.y_history.front().copied().unwrap_or(0.0);
        let sigma = [u_c, y, y_del, u0, u_del];
        self.realization.step_held(&mut self.state, &sigma, dt);
        self.u_history.push_back(self.last_u);
        self.y_history.push_back(y);
        while self.u_history.len() > self.delay_steps {
            self.u_history.pop_front();
            self.y_history.pop_front();
        }
        self.last_u = self.realization.output(&self.state, &sigma);
        self.last_u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec())
    }

    fn plant(m: &[f64], d0: &[f64], d1: &[f64]) -> PencilPolynomials {
        PencilPolynomials { m: p(m), delta0: p(d0), delta1: p(d1), delta2: vec![] }
    }

    fn targets(f0: &[f64], m0: Polynomial) -> PlacementTargets {
        PlacementTargets {
            f: None,
            f0: p(f0),
            m0_star: m0,
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

    fn close(a: &Polynomial, c: &[f64]) -> bool {
        (a - &p(c)).norm_inf() < 1e-9
    }

    #[test]
    fn factorization_example() {
        let pp = plant(&[1.0, 1.0], &[1.0], &[]);
        let m0 = Polynomial::from_real_roots(&[-1.0, -2.0, -3.0]);
        let c = synthesize_pole_placement(&pp, &targets(&[2.0, 1.0], m0)).unwrap();
        assert!(close(&c.r0, &[3.0, 1.0]) && c.s0.norm_inf() < 1e-9);
        assert!(c.r1.is_zero() && c.s1.is_zero() && c.margin == 0.0);
        assert_eq!(c.mode, ControlMode::DelayFree);
    }

    #[test]
    fn constant_correction_example() {
        let pp = plant(&[1.0, 1.0], &[2.0], &[]);
        let c = synthesize_pole_placement(&pp, &targets(&[2.0, 1.0], p(&[7.0, 11.0, 6.0, 1.0]))).unwrap();
        assert!(close(&c.r0, &[3.0, 1.0]) && close(&c.s0, &[0.5]));
    }

    #[test]
    fn wrong_target_degree_is_rejected() {
        let pp = plant(&[1.0, 1.0], &[2.0], &[]);
        let r = synthesize_pole_placement(&pp, &targets(&[2.0, 1.0], p(&[1.0, 1.0])));
        assert!(matches!(r, Err(Error::DegreeConstraintViolated(_))));
    }

    #[test]
    fn shared_factor_is_not_coprime() {
        let pp = plant(&[1.0, 1.0], &[1.0, 1.0], &[]);
        let m0 = Polynomial::from_real_roots(&[-1.0, -2.0, -3.0]);
        let r = synthesize_pole_placement(&pp, &targets(&[2.0, 1.0], m0));
        assert!(matches!(r, Err(Error::NotCoprime(_))));
    }

    #[test]
    fn large_delayed_gain_fails_certificate() {
        let pp = plant(&[1.0, 1.0], &[6.0, 1.0], &[8.0]);
        let m0 = Polynomial::from_real_roots(&[-1.5, -4.0, -5.0]);
        let r = synthesize_pole_placement(&pp, &targets(&[1.0, 1.0], m0));
        assert!(matches!(r, Err(Error::StabilityMarginFailed { supremum }) if supremum >= 1.0));
    }

    #[test]
    fn default_t_gives_unit_dc_gain() {
        let pp = plant(&[1.0, 1.0], &[6.0, 1.0], &[]);
        let m0 = Polynomial::from_real_roots(&[-1.5, -4.0, -5.0]);
        let c = synthesize_pole_placement(&pp, &targets(&[1.0, 1.0], m0.clone())).unwrap();
        assert!((c.t.eval(0.0) * 6.0 / m0.eval(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_examples() {
        let (plus, minus) = split_delta0(&p(&[3.0, 1.0]), 1.0).unwrap();
        assert!(close(&plus, &[3.0, 1.0]) && close(&minus, &[1.0]));
        let (plus, minus) = split_delta0(&p(&[-1.0, 1.0]), 1.0).unwrap();
        assert!(close(&plus, &[1.0]) && close(&minus, &[-1.0, 1.0]));
        let (plus, minus) = split_delta0(&p(&[2.5]), 1.0).unwrap();
        assert!(close(&plus, &[1.0]) && close(&minus, &[2.5]));
    }

    #[test]
    fn matching_places_model_poles() {
        let pp = plant(&[1.0, 1.0], &[6.0, 1.0], &[]);
        let mm = Polynomial::from_real_roots(&[-2.0, -3.0, -4.0]);
        let c = model_matching_synthesis(&pp, &p(&[1.0, 1.0]), &mm, 1.0, None, 1.0).unwrap();
        let char_poly = &(&(&c.f0 * &pp.m) * &c.r0) + &(&pp.delta0 * &c.s0);
        assert!((&char_poly - &(&p(&[6.0, 1.0]) * &mm)).norm_inf() < 1e-9);
        assert!(close(c.model_num.as_ref().unwrap(), &[24.0]));
    }

    #[test]
    fn control_law_examples() {
        let mut params = ControllerParams {
            mode: ControlMode::DelayFree,
            f: p(&[1.0, 1.0]),
            f0: p(&[1.0, 1.0]),
            t: p(&[1.0]),
            l: Polynomial::zero(),
            r0: p(&[1.0]),
            r1: Polynomial::zero(),
            s0: Polynomial::zero(),
            s1: Polynomial::zero(),
            m0_star: p(&[1.0, 1.0]),
            m1_star: Polynomial::zero(),
            h: 1.0,
            v: 0.5,
            margin: 0.0,
            model_den: None,
            model_num: None,
        };
        let dt = 1e-3;
        let mut law = ControlLaw::new(&params, dt).unwrap();
        for _ in 0..1000 {
            law.step(1.0, 0.0, 0.0, dt);
        }
        assert!((law.output() - (1.0 - (-1.0f64).exp())).abs() < 1e-6);

        let mut idle = ControlLaw::new(&params, dt).unwrap();
        for _ in 0..100 {
            assert_eq!(idle.step(0.0, 0.0, 0.0, dt), 0.0);
        }

        params.t = Polynomial::zero();
        params.s0 = p(&[1.0]);
        let mut fb = ControlLaw::new(&params, 0.01).unwrap();
        for _ in 0..2000 {
            fb.step(0.0, 1.0, 0.0, 0.01);
        }
        assert!((fb.output() + 1.0).abs() < 1e-6);
    }
}
