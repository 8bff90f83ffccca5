//! Open-loop trajectories of the Weierstrass form, admissible initial data,
//! structural tests and transfer-function evaluation.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::{csv_row, csv_text};
use crate::linalg::{self, Mat, Vector, C64};
use crate::pencil::{DescriptorSystem, Tolerances, WeierstrassForm};
use crate::polynomial::{pencil_polynomials, PencilPolynomials};

type SignalFn = dyn Fn(f64, usize) -> f64 + Send + Sync;

/// Scalar signal with analytically available derivatives up to `max_order`.
#[derive(Clone)]
pub struct SmoothSignal {
    f: Arc<SignalFn>,
    max_order: usize,
}

impl fmt::Debug for SmoothSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothSignal").field("max_order", &self.max_order).finish_non_exhaustive()
    }
}

impl SmoothSignal {
    /// `f(t, k)` must return the `k`-th derivative at `t` for every `k <= max_order`.
    pub fn new(max_order: usize, f: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        SmoothSignal { f: Arc::new(f), max_order }
    }

    pub fn zero() -> Self {
        SmoothSignal::new(usize::MAX, |_, _| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        SmoothSignal::new(usize::MAX, move |_, k| if k == 0 { c } else { 0.0 })
    }

    /// `amplitude * sin(omega t + phase)`.
    pub fn sinusoid(amplitude: f64, omega: f64, phase: f64) -> Self {
        SmoothSignal::new(usize::MAX, move |t, k| {
            amplitude * omega.powi(k as i32) * (omega * t + phase + k as f64 * std::f64::consts::FRAC_PI_2).sin()
        })
    }

    /// `amplitude * exp(rate t)`.
    pub fn exponential(amplitude: f64, rate: f64) -> Self {
        SmoothSignal::new(usize::MAX, move |t, k| amplitude * rate.powi(k as i32) * (rate * t).exp())
    }

    /// Piecewise-continuous signal without derivative information.
    pub fn piecewise(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SmoothSignal::new(0, move |t, _| f(t))
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn eval(&self, t: f64, order: usize) -> Result<f64> {
        if order > self.max_order {
            return Err(Error::InsufficientSmoothness { required: order, available: self.max_order });
        }
        Ok((self.f)(t, order))
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.f)(t, 0)
    }

    pub fn require(&self, order: usize) -> Result<()> {
        if order > self.max_order {
            return Err(Error::InsufficientSmoothness { required: order, available: self.max_order });
        }
        Ok(())
    }
}

/// Initial data on `[-h, 0]` in Weierstrass coordinates.
#[derive(Debug, Clone)]
pub struct AdmissibleData {
    pub z10: Vector,
    /// Control on `[-h, 0]`.
    pub psi: SmoothSignal,
    /// Fast-block disturbance on `[-h, 0]`.
    pub psi_v02: Vec<SmoothSignal>,
    pub z20: Vector,
}

impl AdmissibleData {
    /// Completes `z10` with the unique consistent `z20`, using `u^{(i)}(0)` from `u`.
    pub fn new(
        wf: &WeierstrassForm,
        z10: Vector,
        psi: SmoothSignal,
        psi_v02: Vec<SmoothSignal>,
        u: &SmoothSignal,
        h: f64,
    ) -> Result<Self> {
        if z10.len() != wf.n1 {
            return Err(Error::DimensionMismatch(format!("z10 has length {}, expected {}", z10.len(), wf.n1)));
        }
        let derivs = (0..wf.ell).map(|i| u.eval(0.0, i)).collect::<Result<Vec<_>>>()?;
        let z20 = admissible_initial_state(wf, &psi, &psi_v02, &derivs, h)?;
        Ok(AdmissibleData { z10, psi, psi_v02, z20 })
    }
}

fn vector_signal_at(signals: &[SmoothSignal], n: usize, t: f64, order: usize) -> Result<Vector> {
    if signals.is_empty() {
        return Ok(Vector::zeros(n));
    }
    if signals.len() != n {
        return Err(Error::DimensionMismatch(format!("vector signal has {} channels, expected {n}", signals.len())));
    }
    let v = signals.iter().map(|s| s.eval(t, order)).collect::<Result<Vec<_>>>()?;
    Ok(Vector::from_vec(v))
}

/// `z2(0) = -sum_{i<ell} N^i [alpha2 u^{(i)}(0) + beta2 Psi^{(i)}(-h) + Psi_v02^{(i)}(0)]`.
pub fn admissible_initial_state(
    wf: &WeierstrassForm,
    psi: &SmoothSignal,
    psi_v02: &[SmoothSignal],
    u0_derivs: &[f64],
    h: f64,
) -> Result<Vector> {
    let mut z20 = Vector::zeros(wf.n2);
    if wf.n2 == 0 {
        return Ok(z20);
    }
    if u0_derivs.len() < wf.ell {
        return Err(Error::InsufficientSmoothness {
            required: wf.ell.saturating_sub(1),
            available: u0_derivs.len().saturating_sub(1),
        });
    }
    let mut n_pow = Mat::identity(wf.n2, wf.n2);
    for (i, &ui) in u0_derivs.iter().enumerate().take(wf.ell) {
        let forcing = &wf.alpha2 * ui + &wf.beta2 * psi.eval(-h, i)? + vector_signal_at(psi_v02, wf.n2, 0.0, i)?;
        z20 -= &n_pow * forcing;
        n_pow = &n_pow * &wf.nil;
    }
    Ok(z20)
}

/// Sampled open-loop solution on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub z1: Vec<Vec<f64>>,
    pub z2: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `t, y, u, z1_1.., z2_1..` with a header row.
    pub fn to_csv(&self) -> String {
        let n1 = self.z1.first().map_or(0, Vec::len);
        let n2 = self.z2.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string(), "y".into(), "u".into()];
        header.extend((1..=n1).map(|i| format!("z1_{i}")));
        header.extend((1..=n2).map(|i| format!("z2_{i}")));
        let rows = (0..self.len()).map(|k| {
            let mut r = vec![self.t[k], self.y[k], self.u[k]];
            r.extend_from_slice(&self.z1[k]);
            r.extend_from_slice(&self.z2[k]);
            csv_row(&r)
        });
        csv_text(&header, rows)
    }
}

/// Number of steps of size `dt` in `h`, if it is an integer.
pub fn steps_per_delay(h: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || dt > h {
        return Err(Error::StepTooLarge { dt, h });
    }
    let k = h / dt;
    let r = k.round();
    if (k - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::StepTooLarge { dt, h });
    }
    Ok(r as usize)
}

struct OpenLoopInput<'a> {
    u: &'a SmoothSignal,
    psi: &'a SmoothSignal,
    h: f64,
}

impl OpenLoopInput<'_> {
    fn at(&self, t: f64, order: usize) -> Result<f64> {
        self.u.eval(t, order)
    }

    fn delayed(&self, t: f64, order: usize) -> Result<f64> {
        let s = t - self.h;
        if s < 0.0 {
            self.psi.eval(s, order)
        } else {
            self.u.eval(s, order)
        }
    }
}

/// Integrates `z1' = W z1 + alpha1 u(t) + beta1 u(t-h) + eta1(t)` by RK4 and evaluates
/// `z2 = -sum_{i<ell} N^i d^i/dt^i [alpha2 u(t) + beta2 u(t-h) + eta2(t)]` pointwise.
#[allow(clippy::too_many_arguments)]
pub fn simulate_weierstrass(
    wf: &WeierstrassForm,
    data: &AdmissibleData,
    u: &SmoothSignal,
    eta1: &[SmoothSignal],
    eta2: &[SmoothSignal],
    h: f64,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    steps_per_delay(h, dt)?;
    let need = wf.ell.saturating_sub(1);
    if wf.ell > 0 {
        u.require(need)?;
        data.psi.require(need)?;
        for s in eta2.iter().chain(data.psi_v02.iter()) {
            s.require(need)?;
        }
    }
    if data.z10.len() != wf.n1 {
        return Err(Error::DimensionMismatch(format!("z10 has length {}, expected {}", data.z10.len(), wf.n1)));
    }
    let input = OpenLoopInput { u, psi: &data.psi, h };
    let fast = |t: f64| -> Result<Vector> {
        let mut z2 = Vector::zeros(wf.n2);
        let mut n_pow = Mat::identity(wf.n2, wf.n2);
        for i in 0..wf.ell {
            let forcing = &wf.alpha2 * input.at(t, i)?
                + &wf.beta2 * input.delayed(t, i)?
                + vector_signal_at(eta2, wf.n2, t, i)?;
            z2 -= &n_pow * forcing;
            n_pow = &n_pow * &wf.nil;
        }
        Ok(z2)
    };
    let z20 = fast(0.0)?;
    if wf.n2 > 0 && (&z20 - &data.z20).amax() > 1e-9 * (1.0 + z20.amax()) {
        return Err(Error::InvalidInput("initial fast state is not admissible for the given data".into()));
    }
    let slow = |t: f64, z: &Vector| -> Result<Vector> {
        Ok(&wf.w * z
            + &wf.alpha1 * input.at(t, 0)?
            + &wf.beta1 * input.delayed(t, 0)?
            + vector_signal_at(eta1, wf.n1, t, 0)?)
    };

    let steps = (t_end / dt).round() as usize;
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        z1: Vec::with_capacity(steps + 1),
        z2: Vec::with_capacity(steps + 1),
    };
    let mut z1 = data.z10.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let z2 = if k == 0 { z20.clone() } else { fast(t)? };
        traj.t.push(t);
        traj.y.push(wf.gamma1.dot(&z1) + wf.gamma2.dot(&z2));
        traj.u.push(u.value(t));
        traj.z1.push(z1.iter().copied().collect());
        traj.z2.push(z2.iter().copied().collect());
        if k == steps {
            break;
        }
        let k1 = slow(t, &z1)?;
        let k2 = slow(t + 0.5 * dt, &(&z1 + &k1 * (0.5 * dt)))?;
        let k3 = slow(t + 0.5 * dt, &(&z1 + &k2 * (0.5 * dt)))?;
        let k4 = slow(t + dt, &(&z1 + &k3 * dt))?;
        z1 += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityReport {
    pub controllable: bool,
    /// Krylov rank conditions on both blocks.
    pub kalman: bool,
    /// Rank conditions at each eigenvalue of `W` and on `[N, alpha2, beta2]`.
    pub eigen: bool,
    pub failures: Vec<String>,
}

fn krylov(m: &Mat, vectors: &[&Vector]) -> Mat {
    let n = m.nrows();
    let mut cols = Vec::new();
    for v in vectors {
        let mut x = (*v).clone();
        for _ in 0..n {
            cols.push(x.clone());
            x = m * x;
        }
    }
    if cols.is_empty() {
        return Mat::zeros(n, 0);
    }
    Mat::from_columns(&cols)
}

fn complex_rank(m: &DMatrix<C64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    // [[Re, -Im], [Im, Re]] carries every singular value twice
    let (r, c) = m.shape();
    let re = m.map(|z| z.re);
    let im = m.map(|z| z.im);
    let mut real = Mat::zeros(2 * r, 2 * c);
    real.view_mut((0, 0), (r, c)).copy_from(&re);
    real.view_mut((0, c), (r, c)).copy_from(&(-&im));
    real.view_mut((r, 0), (r, c)).copy_from(&im);
    real.view_mut((r, c), (r, c)).copy_from(&re);
    let s = linalg::singular_values(&real);
    let smax = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > tol * smax.max(1.0)).count() / 2
}

fn rank_or_empty(m: &Mat, tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let s = linalg::singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > tol * smax.max(1.0)).count()
}

fn eigenvalues(m: &Mat) -> Vec<C64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

pub fn controllability_test(wf: &WeierstrassForm, tol: f64) -> ControllabilityReport {
    let (n1, n2) = (wf.n1, wf.n2);
    let mut failures = Vec::new();
    let slow_kalman = rank_or_empty(&krylov(&wf.w, &[&wf.alpha1, &wf.beta1]), tol) == n1;
    let fast_kalman = rank_or_empty(&krylov(&wf.nil, &[&wf.alpha2, &wf.beta2]), tol) == n2;

    let mut eigen = true;
    for lambda in eigenvalues(&wf.w) {
        let mut m = DMatrix::<C64>::zeros(n1, n1 + 2);
        m.view_mut((0, 0), (n1, n1)).copy_from(&(DMatrix::<C64>::identity(n1, n1) * lambda - linalg::to_complex(&wf.w)));
        m.set_column(n1, &linalg::to_complex(&Mat::from_column_slice(n1, 1, wf.alpha1.as_slice())).column(0));
        m.set_column(n1 + 1, &linalg::to_complex(&Mat::from_column_slice(n1, 1, wf.beta1.as_slice())).column(0));
        if complex_rank(&m, tol) < n1 {
            eigen = false;
            failures.push(format!("slow block loses rank at eigenvalue {lambda}"));
        }
    }
    if n2 > 0 {
        let fast = linalg::hstack(&wf.nil, &Mat::from_columns(&[wf.alpha2.clone(), wf.beta2.clone()]));
        if rank_or_empty(&fast, tol) < n2 {
            eigen = false;
            failures.push("fast block: rank [N, alpha2, beta2] < n2".to_string());
        }
    }
    if !slow_kalman {
        failures.push("slow block: Krylov rank of (W; alpha1, beta1) < n1".to_string());
    }
    if !fast_kalman {
        failures.push("fast block: Krylov rank of (N; alpha2, beta2) < n2".to_string());
    }
    let kalman = slow_kalman && fast_kalman;
    if kalman != eigen {
        log::warn!("controllability routes disagree (Krylov {kalman}, eigenvalue {eigen})");
    }
    ControllabilityReport { controllable: kalman && eigen, kalman, eigen, failures }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservabilityReport {
    pub observable: bool,
    pub kalman: bool,
    pub eigen: bool,
}

/// Observability of `(diag(W, N), gamma)` by the Krylov rank of
/// `[gamma, Wbar^T gamma, ...]` and by the rank of `[lambda I - Wbar; gamma^T]` on its spectrum.
pub fn observability_test(wf: &WeierstrassForm, tol: f64) -> ObservabilityReport {
    let wbar = wf.block_matrix();
    let n = wf.n();
    let gamma = wf.gamma();
    let kalman = rank_or_empty(&krylov(&wbar.transpose(), &[&gamma]), tol) == n;
    let mut spectrum = eigenvalues(&wf.w);
    if wf.n2 > 0 {
        spectrum.push(C64::new(0.0, 0.0));
    }
    let wc = linalg::to_complex(&wbar);
    let eigen = spectrum.iter().all(|&lambda| {
        let mut m = DMatrix::<C64>::zeros(n + 1, n);
        m.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::<C64>::identity(n, n) * lambda - &wc));
        for j in 0..n {
            m[(n, j)] = C64::new(gamma[j], 0.0);
        }
        complex_rank(&m, tol) == n
    });
    if kalman != eigen {
        log::warn!("observability routes disagree (Krylov {kalman}, eigenvalue {eigen})");
    }
    ObservabilityReport { observable: kalman && eigen, kalman, eigen }
}

/// `G(s)` evaluated from the pencil resolvent and from the Weierstrass blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferValue {
    pub resolvent: C64,
    pub weierstrass: C64,
}

impl TransferValue {
    pub fn value(&self) -> C64 {
        self.resolvent
    }

    pub fn relative_gap(&self) -> f64 {
        (self.resolvent - self.weierstrass).norm() / self.resolvent.norm().max(self.weierstrass.norm()).max(1e-300)
    }
}

/// `c^T (sE - A)^{-1}(b + d e^{-hs})` and
/// `gamma1^T (sI - W)^{-1}(alpha1 + beta1 e^{-hs}) - sum_i gamma2^T N^i (alpha2 + beta2 e^{-hs}) s^i`.
pub fn transfer_function_eval(
    sys: &DescriptorSystem,
    wf: &WeierstrassForm,
    s: C64,
    tol: &Tolerances,
) -> Result<TransferValue> {
    let pencil = linalg::to_complex(&sys.e) * s - linalg::to_complex(&sys.a);
    let det = linalg::complex_determinant(&pencil);
    if det.norm() < sys.regularity_threshold(tol.regularity) {
        return Err(Error::PoleEvaluation { modulus: det.norm() });
    }
    let delay = (-sys.h * s).exp();
    let forcing = (linalg::to_complex(&Mat::from_column_slice(sys.n(), 1, sys.b.as_slice()))
        + linalg::to_complex(&Mat::from_column_slice(sys.n(), 1, sys.d.as_slice())) * delay)
        .column(0)
        .into_owned();
    let x = pencil.lu().solve(&forcing).ok_or(Error::PoleEvaluation { modulus: det.norm() })?;
    let resolvent = sys.c.iter().zip(x.iter()).fold(C64::new(0.0, 0.0), |acc, (&c, &xi)| acc + xi * c);

    let mut weierstrass = C64::new(0.0, 0.0);
    if wf.n1 > 0 {
        let slow = DMatrix::<C64>::identity(wf.n1, wf.n1) * s - linalg::to_complex(&wf.w);
        let rhs = wf.alpha1.map(|a| C64::new(a, 0.0)) + wf.beta1.map(|b| C64::new(b, 0.0)) * delay;
        let z = slow.lu().solve(&rhs).ok_or(Error::PoleEvaluation { modulus: det.norm() })?;
        weierstrass += wf.gamma1.iter().zip(z.iter()).fold(C64::new(0.0, 0.0), |acc, (&g, &zi)| acc + zi * g);
    }
    let mut n_pow = Mat::identity(wf.n2, wf.n2);
    let mut s_pow = C64::new(1.0, 0.0);
    for _ in 0..wf.ell {
        let ta = wf.gamma2.dot(&(&n_pow * &wf.alpha2));
        let tb = wf.gamma2.dot(&(&n_pow * &wf.beta2));
        weierstrass -= (C64::new(ta, 0.0) + delay * tb) * s_pow;
        n_pow = &n_pow * &wf.nil;
        s_pow *= s;
    }
    Ok(TransferValue { resolvent, weierstrass })
}

/// `(Delta0(s) + Delta1(s) e^{-hs}) / M(s)`.
pub fn transfer_from_polynomials(pp: &PencilPolynomials, h: f64, s: C64) -> Result<C64> {
    let m = pp.m.eval_complex(s);
    if m.norm() == 0.0 {
        return Err(Error::PoleEvaluation { modulus: 0.0 });
    }
    Ok((pp.delta0.eval_complex(s) + pp.delta1.eval_complex(s) * (-h * s).exp()) / m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub minimal: bool,
    pub controllable: bool,
    pub observable: bool,
    /// Roots of `M` at which both `Delta0` and `Delta1` vanish.
    pub cancellations: Vec<C64>,
}

/// Relative tolerance for a numerator to count as vanishing at a root of `M`.
const CANCELLATION_TOL: f64 = 1e-6;

pub fn minimality_check(sys: &DescriptorSystem, wf: &WeierstrassForm, tol: &Tolerances) -> Result<MinimalityReport> {
    let ctrl = controllability_test(wf, 1e-9);
    let obs = observability_test(wf, 1e-9);
    let pp = pencil_polynomials(sys, tol.regularity)?;
    let vanishes = |p: &crate::polynomial::Polynomial, r: C64| {
        let scale = p.coeffs().iter().enumerate().map(|(k, c)| c.abs() * r.norm().max(1.0).powi(k as i32)).sum::<f64>();
        p.is_zero() || p.eval_complex(r).norm() <= CANCELLATION_TOL * scale.max(f64::MIN_POSITIVE)
    };
    let mut cancellations = Vec::new();
    if pp.m.degree().is_some_and(|d| d > 0) {
        for r in pp.m.roots()? {
            if vanishes(&pp.delta0, r) && vanishes(&pp.delta1, r) {
                cancellations.push(r);
            }
        }
    }
    let deg_ok = pp.m.degree().unwrap_or(0) <= sys.n();
    Ok(MinimalityReport {
        minimal: ctrl.controllable && obs.observable && deg_ok,
        controllable: ctrl.controllable,
        observable: obs.observable,
        cancellations,
    })
}
