//! Closed-loop simulation.
//!
//! Plant slow block, control law, compensator and the estimation filters form
//! one state vector integrated by RK4. The fast block and every output are
//! evaluated pointwise from that state. Delayed values come from a history of
//! half-step slots; midpoint slots are filled by cubic Hermite interpolation
//! of the state once the following step is known.

mod history;
mod reference;
mod signal;

pub use reference::run_reference_model;
pub use signal::SignalSpec;

use std::cell::Cell;
use std::ops::Range;

use serde::Serialize;

use crate::adaptive::{
    adaptive_resynthesis, dead_zone_gate, disturbance_bound_update, estimator_step, predict_and_error,
    EstimatorConfig, EstimatorState, EstimatorTrace, OmegaBox, ParameterLayout, TraceRow,
};
use crate::controller::{channel, make_filter, CompensatorRealization, ControllerParams, DelayRealization, FilterRealization};
use crate::error::{Error, Result};
use crate::io::{csv_row, csv_text};
use crate::linalg::{self, Mat, Vector};
use crate::pencil::{weierstrass_decompose, DescriptorSystem, Tolerances, WeierstrassForm};
use crate::polynomial::{pencil_polynomials, Polynomial};
use crate::system::{steps_per_delay, SmoothSignal, Trajectory};
use history::{History, Sample};

/// State norm beyond which a run is stopped as unstable.
pub const BLOWUP_NORM: f64 = 1e9;

/// Guard against closed loops whose derivative requests never terminate.
const MAX_RECURSION: usize = 64;

#[derive(Debug, Clone)]
pub enum Control {
    /// The reference drives the plant input directly.
    OpenLoop,
    Fixed(ControllerParams),
    /// Initial design; `R_i`, `S_i` are re-solved from the estimates.
    Adaptive(ControllerParams),
}

#[derive(Debug, Clone)]
pub struct EstimatorSetup {
    /// Monic Hurwitz filter of degree `deg M`.
    pub f: Polynomial,
    /// Defaults to the true parameters.
    pub theta0: Option<Vec<f64>>,
    /// Defaults to the true parameters padded by `max(0.5 |theta|, 0.1)`.
    pub omega: Option<OmegaBox>,
    pub config: EstimatorConfig,
    /// Resynthesis period in steps.
    pub k_syn: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub sys: DescriptorSystem,
    pub tolerances: Tolerances,
    pub reference: SmoothSignal,
    /// Control input on `[-h, 0]`.
    pub psi: SmoothSignal,
    /// Initial slow state in Weierstrass coordinates (zero if absent).
    pub z10: Option<Vector>,
    /// Disturbance in Weierstrass coordinates; empty means zero.
    pub eta1: Vec<SmoothSignal>,
    pub eta2: Vec<SmoothSignal>,
    /// Run the disturbance compensator (fixed controllers only).
    pub compensate: bool,
    pub control: Control,
    pub estimator: Option<EstimatorSetup>,
    pub t_end: f64,
    pub dt: f64,
    /// Record every `output_stride`-th step.
    pub output_stride: usize,
}

impl Scenario {
    pub fn new(sys: DescriptorSystem, control: Control, t_end: f64, dt: f64) -> Self {
        Scenario {
            sys,
            tolerances: Tolerances::default(),
            reference: SmoothSignal::zero(),
            psi: SmoothSignal::zero(),
            z10: None,
            eta1: Vec::new(),
            eta2: Vec::new(),
            compensate: true,
            control,
            estimator: None,
            t_end,
            dt,
            output_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Blowup {
    pub step: usize,
    pub t: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorDiagnostics {
    pub frozen_steps: usize,
    pub updated_steps: usize,
    pub resyntheses: usize,
    pub resynthesis_failures: usize,
    pub covariance_floor_events: usize,
    pub theta_in_omega: bool,
    pub theta_sup_norm: f64,
    /// `sum b max(0, e^2 - g^2 gamma) dt`.
    pub weighted_error_sum: f64,
    pub final_theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub t_final: f64,
    pub blowup: Option<Blowup>,
    pub max_abs_y: f64,
    pub max_abs_u: f64,
    pub max_state_norm: f64,
    /// Supremum of the certificate for the `Delta1 S1 e^{-2hs}` term.
    pub margin: Option<f64>,
    pub decomposition_residual: f64,
    pub estimator: Option<EstimatorDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub reference: Vec<f64>,
    pub u0: Vec<f64>,
    pub estimator: Option<EstimatorTrace>,
    pub diagnostics: Diagnostics,
    /// Controller in effect at the end of the run.
    pub params: Option<ControllerParams>,
}

impl RunResult {
    /// `t, y, u, u_c, u0, z1_.., z2_..` with a header row.
    pub fn trajectory_csv(&self) -> String {
        let tr = &self.trajectory;
        let n1 = tr.z1.first().map_or(0, Vec::len);
        let n2 = tr.z2.first().map_or(0, Vec::len);
        let mut header: Vec<String> = ["t", "y", "u", "u_c", "u0"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=n1).map(|i| format!("z1_{i}")));
        header.extend((1..=n2).map(|i| format!("z2_{i}")));
        let rows = (0..tr.len()).map(|k| {
            let mut r = vec![tr.t[k], tr.y[k], tr.u[k], self.reference[k], self.u0[k]];
            r.extend_from_slice(&tr.z1[k]);
            r.extend_from_slice(&tr.z2[k]);
            csv_row(&r)
        });
        csv_text(&header, rows)
    }

    /// `Err(NumericalBlowup)` if the run was stopped early.
    pub fn status(&self) -> Result<()> {
        match &self.diagnostics.blowup {
            Some(b) => Err(Error::NumericalBlowup { step: b.step, t: b.t, norm: b.norm }),
            None => Ok(()),
        }
    }
}

pub(crate) fn axpy(x: &[f64], k: &[f64], a: f64) -> Vec<f64> {
    x.iter().zip(k).map(|(x, k)| x + a * k).collect()
}

/// Cubic Hermite value at the middle of a step from end values and slopes.
pub(crate) fn hermite_midpoint(x0: &[f64], x1: &[f64], f0: &[f64], f1: &[f64], dt: f64) -> Vec<f64> {
    (0..x0.len()).map(|i| 0.5 * (x0[i] + x1[i]) + dt / 8.0 * (f0[i] - f1[i])).collect()
}

/// `x' = A x + b w` for the companion realization of `1/F`.
fn filter_derivative(f: &FilterRealization, x: &[f64], input: f64, out: &mut [f64]) {
    let n = f.order();
    for j in 0..n.saturating_sub(1) {
        out[j] = x[j + 1];
    }
    if n > 0 {
        out[n - 1] = input - (0..n).map(|j| f.f.coeff(j) * x[j]).sum::<f64>();
    }
}

#[derive(Debug, Clone)]
struct Segments {
    z1: Range<usize>,
    xc: Range<usize>,
    xk: Range<usize>,
    uf: Range<usize>,
    yf: Range<usize>,
    len: usize,
}

impl Segments {
    fn new(sizes: [usize; 5]) -> Self {
        let mut start = 0;
        let mut next = |n: usize| {
            let r = start..start + n;
            start += n;
            r
        };
        let (z1, xc, xk, uf, yf) = (next(sizes[0]), next(sizes[1]), next(sizes[2]), next(sizes[3]), next(sizes[4]));
        Segments { z1, xc, xk, uf, yf, len: start }
    }
}

struct Ctx<'a> {
    wf: &'a WeierstrassForm,
    seg: Segments,
    reference: &'a SmoothSignal,
    eta1: &'a [SmoothSignal],
    eta2: &'a [SmoothSignal],
    q_inv: Mat,
    controller: Option<DelayRealization>,
    compensator: Option<CompensatorRealization>,
    filter: Option<FilterRealization>,
    /// Number of derivative orders kept in history samples.
    orders: usize,
    h: f64,
}

struct Eval {
    uc: f64,
    u: f64,
    y: f64,
    u0: f64,
    z2: Vec<f64>,
    dx: Vec<f64>,
    sample: Sample,
}

/// Evaluation of every signal at one time and state.
struct Point<'c, 'a> {
    ctx: &'c Ctx<'a>,
    t: f64,
    x: &'c [f64],
    d_h: &'c Sample,
    d_2h: &'c Sample,
    depth: Cell<usize>,
}

fn stacked(signals: &[SmoothSignal], n: usize, t: f64, order: usize) -> Result<Vector> {
    if signals.is_empty() {
        return Ok(Vector::zeros(n));
    }
    let v = signals.iter().map(|s| s.eval(t, order)).collect::<Result<Vec<_>>>()?;
    Ok(Vector::from_vec(v))
}

impl Point<'_, '_> {
    fn nested<T>(&self, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let d = self.depth.get() + 1;
        if d > MAX_RECURSION {
            return Err(Error::DegreeViolation(
                "closed loop is not well posed: output derivatives depend on themselves".into(),
            ));
        }
        self.depth.set(d);
        let r = f();
        self.depth.set(d - 1);
        r
    }

    fn u_h(&self, k: usize) -> Result<f64> {
        Sample::read(&self.d_h.u, k)
    }

    fn v0(&self, t: f64, k: usize) -> Result<Vector> {
        let wf = self.ctx.wf;
        let e1 = stacked(self.ctx.eta1, wf.n1, t, k)?;
        let e2 = stacked(self.ctx.eta2, wf.n2, t, k)?;
        let eta = Vector::from_iterator(wf.n1 + wf.n2, e1.iter().chain(e2.iter()).copied());
        Ok(&self.ctx.q_inv * eta)
    }

    fn u(&self, i: usize) -> Result<f64> {
        let Some(c) = &self.ctx.controller else {
            return self.ctx.reference.eval(self.t, i);
        };
        self.nested(|| {
            let xc = &self.x[self.ctx.seg.xc.clone()];
            if i == 0 {
                let sigma = [
                    self.ctx.reference.eval(self.t, 0)?,
                    0.0,
                    Sample::read(&self.d_h.y, 0)?,
                    self.u0(0)?,
                    self.u_h(0)?,
                ];
                Ok(c.output(xc, &sigma))
            } else {
                c.output_derivative(xc, i, &mut |j, k| match j {
                    channel::REFERENCE => self.ctx.reference.eval(self.t, k),
                    channel::OUTPUT => self.y(k),
                    channel::OUTPUT_DELAYED => Sample::read(&self.d_h.y, k),
                    channel::COMPENSATOR => self.u0(k),
                    _ => self.u_h(k),
                })
            }
        })
    }

    fn u0(&self, i: usize) -> Result<f64> {
        let Some(comp) = &self.ctx.compensator else { return Ok(0.0) };
        self.nested(|| {
            let xk = &self.x[self.ctx.seg.xk.clone()];
            let nd = comp.n_disturbance;
            if i == 0 {
                let (v, vh) = if nd > 0 {
                    (self.v0(self.t, 0)?, self.v0(self.t - self.ctx.h, 0)?)
                } else {
                    (Vector::zeros(0), Vector::zeros(0))
                };
                let sigma = comp.sigma(
                    Sample::read(&self.d_2h.y, 0)?,
                    Sample::read(&self.d_h.u0, 0)?,
                    v.as_slice(),
                    vh.as_slice(),
                );
                Ok(comp.realization.output(xk, &sigma))
            } else {
                comp.realization.output_derivative(xk, i, &mut |j, k| match j {
                    CompensatorRealization::OUTPUT_2H => Sample::read(&self.d_2h.y, k),
                    CompensatorRealization::SELF_DELAYED => Sample::read(&self.d_h.u0, k),
                    j if j < 2 + nd => Ok(self.v0(self.t, k)?[j - 2]),
                    j => Ok(self.v0(self.t - self.ctx.h, k)?[j - 2 - nd]),
                })
            }
        })
    }

    /// `z1^{(k)}` from the slow-block equation.
    fn z1d(&self, k: usize) -> Result<Vector> {
        let wf = self.ctx.wf;
        let mut z = Vector::from_column_slice(&self.x[self.ctx.seg.z1.clone()]);
        for j in 0..k {
            let mut next = &wf.w * &z;
            if wf.alpha1.amax() > 0.0 {
                next += &wf.alpha1 * self.u(j)?;
            }
            if wf.beta1.amax() > 0.0 {
                next += &wf.beta1 * self.u_h(j)?;
            }
            if !self.ctx.eta1.is_empty() {
                next += stacked(self.ctx.eta1, wf.n1, self.t, j)?;
            }
            z = next;
        }
        Ok(z)
    }

    /// `z2^{(k)} = -sum_{i<ell} N^i (alpha2 u^{(i+k)} + beta2 u^{(i+k)}(t-h) + eta2^{(i+k)})`.
    fn z2d(&self, k: usize) -> Result<Vector> {
        let wf = self.ctx.wf;
        let mut z = Vector::zeros(wf.n2);
        let mut n_pow = Mat::identity(wf.n2, wf.n2);
        for i in 0..wf.ell {
            let a = &n_pow * &wf.alpha2;
            let b = &n_pow * &wf.beta2;
            if a.amax() > 0.0 {
                z -= a * self.u(i + k)?;
            }
            if b.amax() > 0.0 {
                z -= b * self.u_h(i + k)?;
            }
            if !self.ctx.eta2.is_empty() {
                z -= &n_pow * stacked(self.ctx.eta2, wf.n2, self.t, i + k)?;
            }
            n_pow = &n_pow * &wf.nil;
        }
        Ok(z)
    }

    fn y(&self, k: usize) -> Result<f64> {
        self.nested(|| {
            let wf = self.ctx.wf;
            let mut v = wf.gamma1.dot(&self.z1d(k)?);
            if wf.n2 > 0 {
                v += wf.gamma2.dot(&self.z2d(k)?);
            }
            Ok(v)
        })
    }

    fn series(&self, f: impl Fn(usize) -> Result<f64>) -> Result<Vec<f64>> {
        let mut out = vec![f(0)?];
        out.extend((1..self.ctx.orders).map(|k| f(k).unwrap_or(f64::NAN)));
        Ok(out)
    }

    fn eval(&self) -> Result<Eval> {
        let ctx = self.ctx;
        let seg = &ctx.seg;
        let uc = ctx.reference.eval(self.t, 0)?;
        let u = self.u(0)?;
        let y = self.y(0)?;
        let u0 = self.u0(0)?;
        let z2 = self.z2d(0)?;
        let mut dx = vec![0.0; seg.len];
        let z1dot = self.z1d(1)?;
        dx[seg.z1.clone()].copy_from_slice(z1dot.as_slice());
        if let Some(c) = &ctx.controller {
            let sigma = [uc, y, Sample::read(&self.d_h.y, 0)?, u0, self.u_h(0)?];
            c.derivative(&self.x[seg.xc.clone()], &sigma, &mut dx[seg.xc.clone()]);
        }
        if let Some(comp) = &ctx.compensator {
            let nd = comp.n_disturbance;
            let (v, vh) = if nd > 0 {
                (self.v0(self.t, 0)?, self.v0(self.t - ctx.h, 0)?)
            } else {
                (Vector::zeros(0), Vector::zeros(0))
            };
            let sigma =
                comp.sigma(Sample::read(&self.d_2h.y, 0)?, Sample::read(&self.d_h.u0, 0)?, v.as_slice(), vh.as_slice());
            comp.realization.derivative(&self.x[seg.xk.clone()], &sigma, &mut dx[seg.xk.clone()]);
        }
        if let Some(f) = &ctx.filter {
            filter_derivative(f, &self.x[seg.uf.clone()], u, &mut dx[seg.uf.clone()]);
            filter_derivative(f, &self.x[seg.yf.clone()], y, &mut dx[seg.yf.clone()]);
        }
        let sample = Sample {
            u: self.series(|k| if k == 0 { Ok(u) } else { self.u(k) })?,
            y: self.series(|k| if k == 0 { Ok(y) } else { self.y(k) })?,
            u0: self.series(|k| if k == 0 { Ok(u0) } else { self.u0(k) })?,
            state: self.x.to_vec(),
        };
        Ok(Eval { uc, u, y, u0, z2: z2.iter().copied().collect(), dx, sample })
    }
}

struct Engine<'a> {
    ctx: Ctx<'a>,
    history: History,
    per_delay: i64,
    dt: f64,
}

impl Engine<'_> {
    fn eval(&self, slot: i64, x: &[f64]) -> Result<Eval> {
        let t = slot as f64 * self.dt * 0.5;
        let d_h = self.history.get(slot - 2 * self.per_delay, t - self.ctx.h)?;
        let d_2h = self.history.get(slot - 4 * self.per_delay, t - 2.0 * self.ctx.h)?;
        Point { ctx: &self.ctx, t, x, d_h, d_2h, depth: Cell::new(0) }.eval()
    }
}

struct Estimation {
    layout: ParameterLayout,
    filter_poly: Polynomial,
    state: EstimatorState,
    config: EstimatorConfig,
    k_syn: usize,
    trace: EstimatorTrace,
    diag: EstimatorDiagnostics,
    synthesized_at: Vec<f64>,
}

/// Runs a scenario from `t = 0` to `t_end`.
///
/// Numerical blowup stops the run and is reported in the diagnostics; the
/// samples up to that point are returned.
pub fn run_closed_loop(sc: &Scenario) -> Result<RunResult> {
    let h = sc.sys.h;
    let dt = sc.dt;
    let per_delay = steps_per_delay(h, dt)? as i64;
    if !(sc.t_end >= 2.0 * h) {
        return Err(Error::InvalidInput(format!("t_end = {} must be at least 2h = {}", sc.t_end, 2.0 * h)));
    }
    let wf = weierstrass_decompose(&sc.sys, &sc.tolerances)?;
    let pp = pencil_polynomials(&sc.sys, sc.tolerances.regularity)?.normalized()?;
    for (name, sig, n) in [("eta1", &sc.eta1, wf.n1), ("eta2", &sc.eta2, wf.n2)] {
        if !sig.is_empty() && sig.len() != n {
            return Err(Error::DimensionMismatch(format!("{name} has {} channels, expected {n}", sig.len())));
        }
    }
    let z10 = sc.z10.clone().unwrap_or_else(|| Vector::zeros(wf.n1));
    if z10.len() != wf.n1 {
        return Err(Error::DimensionMismatch(format!("z10 has length {}, expected {}", z10.len(), wf.n1)));
    }

    let mut estimation = match &sc.estimator {
        Some(setup) => {
            setup.config.validate()?;
            if setup.k_syn == 0 {
                return Err(Error::InvalidInput("k_syn must be at least 1".into()));
            }
            let p = pp.m.degree().unwrap_or(0);
            if p == 0 {
                return Err(Error::InvalidInput("estimation needs a plant with dynamics (deg M >= 1)".into()));
            }
            let layout = ParameterLayout { p };
            let truth = layout.pack(&pp, &setup.f)?;
            let theta0 = setup.theta0.clone().unwrap_or_else(|| truth.clone());
            let omega = setup.omega.clone().unwrap_or_else(|| OmegaBox::around(&truth, 0.5, 0.1));
            let state = EstimatorState::new(theta0.clone(), omega, setup.config.p0)?;
            Some(Estimation {
                layout,
                filter_poly: setup.f.clone(),
                state,
                config: setup.config,
                k_syn: setup.k_syn,
                trace: EstimatorTrace::default(),
                diag: EstimatorDiagnostics {
                    frozen_steps: 0,
                    updated_steps: 0,
                    resyntheses: 0,
                    resynthesis_failures: 0,
                    covariance_floor_events: 0,
                    theta_in_omega: true,
                    theta_sup_norm: 0.0,
                    weighted_error_sum: 0.0,
                    final_theta: Vec::new(),
                },
                synthesized_at: theta0,
            })
        }
        None => None,
    };
    let filter = match &estimation {
        Some(est) => Some(make_filter(&est.filter_poly)?),
        None => None,
    };

    let (base, adaptive) = match &sc.control {
        Control::OpenLoop => (None, false),
        Control::Fixed(p) => (Some(p.clone()), false),
        Control::Adaptive(p) => (Some(p.clone()), true),
    };
    let mut params = base.clone();
    if adaptive {
        let est = estimation.as_ref().ok_or_else(|| Error::InvalidInput("adaptive control needs an estimator".into()))?;
        params = Some(adaptive_resynthesis(&est.state.theta, est.layout, &est.filter_poly, base.as_ref().unwrap())?);
        if sc.compensate {
            log::warn!("disturbance compensation is not used in adaptive mode");
        }
    }
    let controller = params.as_ref().map(ControllerParams::realization).transpose()?;
    let compensator = match (&params, sc.compensate && !adaptive) {
        (Some(p), true) => {
            let with_disturbance = !sc.eta1.is_empty() || !sc.eta2.is_empty();
            if pp.delta1.is_zero() && !with_disturbance {
                None
            } else {
                Some(CompensatorRealization::new(p, &pp, with_disturbance)?)
            }
        }
        _ => None,
    };
    let q_inv = linalg::try_inverse(&wf.q)
        .ok_or(Error::IllConditioned { what: "Q", cond: f64::INFINITY })?;

    let p_f = filter.as_ref().map_or(0, FilterRealization::order);
    let seg = Segments::new([
        wf.n1,
        controller.as_ref().map_or(0, DelayRealization::order),
        compensator.as_ref().map_or(0, |c| c.realization.order()),
        p_f,
        p_f,
    ]);
    let ctx = Ctx {
        wf: &wf,
        seg,
        reference: &sc.reference,
        eta1: &sc.eta1,
        eta2: &sc.eta2,
        q_inv,
        controller,
        compensator,
        filter,
        orders: wf.ell.max(1),
        h,
    };

    // history before t = 0: u = Psi, y = u0 = 0, input filter driven by Psi from -h
    let len = ctx.seg.len;
    let mut history = History::new(-4 * per_delay, (4 * per_delay + 4) as usize);
    let mut uf_pre: Vec<Vec<f64>> = Vec::with_capacity(2 * per_delay as usize + 1);
    if let Some(f) = &ctx.filter {
        let n = f.order();
        let rhs = |t: f64, x: &[f64]| {
            let mut out = vec![0.0; n];
            filter_derivative(f, x, sc.psi.value(t), &mut out);
            out
        };
        let mut x = vec![0.0; n];
        uf_pre.push(x.clone());
        for k in 0..per_delay {
            let t = -h + k as f64 * dt;
            let k1 = rhs(t, &x);
            let k2 = rhs(t + 0.5 * dt, &axpy(&x, &k1, 0.5 * dt));
            let k3 = rhs(t + 0.5 * dt, &axpy(&x, &k2, 0.5 * dt));
            let k4 = rhs(t + dt, &axpy(&x, &k3, dt));
            let next: Vec<f64> = (0..n).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
            let f1 = rhs(t + dt, &next);
            uf_pre.push(hermite_midpoint(&x, &next, &k1, &f1, dt));
            uf_pre.push(next.clone());
            x = next;
        }
    }
    for slot in -4 * per_delay..0 {
        let t = slot as f64 * dt * 0.5;
        let mut state = vec![0.0; len];
        let pre = slot + 2 * per_delay;
        if pre >= 0 && !uf_pre.is_empty() {
            state[ctx.seg.uf.clone()].copy_from_slice(&uf_pre[pre as usize]);
        }
        let u = (0..ctx.orders).map(|k| sc.psi.eval(t, k).unwrap_or(f64::NAN)).collect();
        history.push(Sample { u, y: vec![0.0; ctx.orders], u0: vec![0.0; ctx.orders], state });
    }

    let mut x = vec![0.0; len];
    x[ctx.seg.z1.clone()].copy_from_slice(z10.as_slice());
    if let Some(last) = uf_pre.last() {
        x[ctx.seg.uf.clone()].copy_from_slice(last);
    }
    let mut engine = Engine { ctx, history, per_delay, dt };
    let at = |n: usize, e: Error| Error::AtStep { step: n, t: n as f64 * dt, source: Box::new(e) };

    let steps = (sc.t_end / dt).round() as usize;
    let stride = sc.output_stride.max(1);
    let mut traj = Trajectory { t: vec![], y: vec![], u: vec![], z1: vec![], z2: vec![] };
    let mut reference = Vec::new();
    let mut u0_series = Vec::new();
    let mut diag = Diagnostics {
        steps: 0,
        t_final: 0.0,
        blowup: None,
        max_abs_y: 0.0,
        max_abs_u: 0.0,
        max_state_norm: 0.0,
        margin: params.as_ref().map(|p| p.margin),
        decomposition_residual: wf.residual_e.max(wf.residual_a),
        estimator: None,
    };

    let mut sig = engine.eval(0, &x).map_err(|e| at(0, e))?;
    engine.history.push(sig.sample.clone());
    for n in 0..=steps {
        let t = n as f64 * dt;
        let norm = x.iter().fold(sig.y.abs().max(sig.u.abs()), |m, v| m.max(v.abs()));
        diag.steps = n;
        diag.t_final = t;
        if n % stride == 0 || n == steps {
            traj.t.push(t);
            traj.y.push(sig.y);
            traj.u.push(sig.u);
            traj.z1.push(x[engine.ctx.seg.z1.clone()].to_vec());
            traj.z2.push(sig.z2.clone());
            reference.push(sig.uc);
            u0_series.push(sig.u0);
        }
        if !norm.is_finite() || norm > BLOWUP_NORM {
            log::warn!("numerical blowup at step {n} (t = {t}), state norm {norm:.3e}");
            diag.blowup = Some(Blowup { step: n, t, norm });
            break;
        }
        diag.max_abs_y = diag.max_abs_y.max(sig.y.abs());
        diag.max_abs_u = diag.max_abs_u.max(sig.u.abs());
        diag.max_state_norm = diag.max_state_norm.max(norm);

        if let Some(est) = estimation.as_mut() {
            let filter = engine.ctx.filter.as_ref().expect("filter exists with estimator");
            let seg = &engine.ctx.seg;
            let delayed = engine.history.get(2 * n as i64 - 2 * per_delay, t - h).map_err(|e| at(n, e))?;
            let phi = est.layout.regressor(
                filter,
                &x[seg.yf.clone()],
                &x[seg.uf.clone()],
                sig.u,
                &delayed.state[seg.uf.clone()],
                delayed.u[0],
            );
            let pred = predict_and_error(&est.state.theta, &phi, sig.y);
            let gamma = disturbance_bound_update(&mut est.state, &est.config, &phi, dt);
            let gate = dead_zone_gate(pred.e, gamma, est.config.g, est.config.alpha1, &est.state.p, &phi);
            if n % stride == 0 || n == steps {
                est.trace.rows.push(TraceRow {
                    t,
                    e: pred.e,
                    s: gate.s,
                    b: gate.b,
                    gamma,
                    theta: est.state.theta.clone(),
                    frozen: gate.b == 0.0,
                });
            }
            est.diag.weighted_error_sum +=
                gate.b * (pred.e * pred.e - est.config.g * est.config.g * gamma).max(0.0) * dt;
            if estimator_step(&mut est.state, &est.config, &phi, pred.e, gate.b, dt) {
                est.diag.updated_steps += 1;
            } else {
                est.diag.frozen_steps += 1;
            }
            est.diag.theta_in_omega &= est.state.omega.contains(&est.state.theta);
            let norm = est.state.theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            est.diag.theta_sup_norm = est.diag.theta_sup_norm.max(norm);

            if adaptive && n < steps && (n + 1) % est.k_syn == 0 && est.state.theta != est.synthesized_at {
                est.synthesized_at = est.state.theta.clone();
                let next = adaptive_resynthesis(&est.state.theta, est.layout, &est.filter_poly, base.as_ref().unwrap())
                    .and_then(|p| p.realization().map(|r| (p, r)));
                match next {
                    Ok((p, r)) => {
                        est.diag.resyntheses += 1;
                        params = Some(p);
                        engine.ctx.controller = Some(r);
                        sig = engine.eval(2 * n as i64, &x).map_err(|e| at(n, e))?;
                        engine.history.replace_last(sig.sample.clone());
                    }
                    Err(e) => {
                        log::debug!("resynthesis at step {n} kept the previous controller: {e}");
                        est.diag.resynthesis_failures += 1;
                    }
                }
            }
        }
        if n == steps {
            break;
        }

        let s = 2 * n as i64;
        let k1 = sig.dx.clone();
        let step = |engine: &Engine, slot: i64, x: &[f64]| engine.eval(slot, x).map(|e| e.dx).map_err(|e| at(n, e));
        let k2 = step(&engine, s + 1, &axpy(&x, &k1, 0.5 * dt))?;
        let k3 = step(&engine, s + 1, &axpy(&x, &k2, 0.5 * dt))?;
        let k4 = step(&engine, s + 2, &axpy(&x, &k3, dt))?;
        let next: Vec<f64> = (0..len).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        let sig_next = engine.eval(s + 2, &next).map_err(|e| at(n + 1, e))?;
        let mid = hermite_midpoint(&x, &next, &k1, &sig_next.dx, dt);
        let sig_mid = engine.eval(s + 1, &mid).map_err(|e| at(n, e))?;
        engine.history.push(sig_mid.sample);
        engine.history.push(sig_next.sample.clone());
        x = next;
        sig = sig_next;
    }

    let estimator = estimation.map(|mut est| {
        est.diag.covariance_floor_events = est.state.floor_events;
        est.diag.final_theta = est.state.theta.clone();
        diag.estimator = Some(est.diag);
        est.trace
    });
    Ok(RunResult { trajectory: traj, reference, u0: u0_series, estimator, diagnostics: diag, params })
}
