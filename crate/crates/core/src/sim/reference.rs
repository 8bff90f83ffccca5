//! Delay-differential reference model
//! `(Mm0 + Mm1 e^{-hs} + D1S1 e^{-2hs}) y_m = N(s, e^{-hs}) u_c`.

use crate::controller::DelayRealization;
use crate::error::{Error, Result};
use crate::polynomial::{delay_stability_margin, is_hurwitz, Polynomial, QuasiPolynomial};
use crate::system::{steps_per_delay, SmoothSignal, Trajectory};

use super::{axpy, hermite_midpoint};

/// Distance of the certification line from the imaginary axis.
const CERT_LINE: f64 = 1e-3;

fn certify(mm0: &Polynomial, mm1: &Polynomial, d1s1: &Polynomial, h: f64) -> Result<()> {
    if mm0.is_zero() || !is_hurwitz(mm0, 0.0)? {
        return Err(Error::NotStable);
    }
    if !mm1.is_zero() && delay_stability_margin(mm0, &Polynomial::zero(), mm1, h / 2.0, CERT_LINE)? >= 1.0 {
        return Err(Error::NotStable);
    }
    if !d1s1.is_zero() && delay_stability_margin(mm0, mm1, d1s1, h, CERT_LINE)? >= 1.0 {
        return Err(Error::NotStable);
    }
    Ok(())
}

/// Method-of-steps RK4 solution with zero initial state and `y_m = 0` before `t = 0`.
#[allow(clippy::too_many_arguments)]
pub fn run_reference_model(
    mm0: &Polynomial,
    mm1: &Polynomial,
    d1s1: &Polynomial,
    numerator: &QuasiPolynomial,
    h: f64,
    u_c: &SmoothSignal,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let per_delay = steps_per_delay(h, dt)? as i64;
    certify(mm0, mm1, d1s1, h)?;
    let delays: Vec<usize> = numerator.terms.keys().copied().collect();
    let mut nums: Vec<Polynomial> = numerator.terms.values().cloned().collect();
    nums.push(-mm1);
    nums.push(-d1s1);
    let real = DelayRealization::new(mm0, &nums)?;
    let order = real.order();
    let n_in = delays.len();

    // y at half-step slots, slot j <-> t = j dt / 2, starting at -2h
    let first = -4 * per_delay;
    let mut y_hist: Vec<f64> = vec![0.0; (4 * per_delay) as usize];
    let y_at = |hist: &[f64], slot: i64| hist[(slot - first) as usize];
    let slot_time = |slot: i64| slot as f64 * dt * 0.5;

    let eval = |hist: &[f64], slot: i64, x: &[f64]| -> (f64, Vec<f64>) {
        let t = slot_time(slot);
        let mut sigma: Vec<f64> = delays.iter().map(|&k| u_c.value(t - k as f64 * h)).collect();
        sigma.push(y_at(hist, slot - 2 * per_delay));
        sigma.push(y_at(hist, slot - 4 * per_delay));
        let mut dx = vec![0.0; order];
        real.derivative(x, &sigma, &mut dx);
        (real.output(x, &sigma), dx)
    };
    debug_assert_eq!(nums.len(), n_in + 2);

    let steps = (t_end / dt).round() as usize;
    let mut traj = Trajectory { t: vec![], y: vec![], u: vec![], z1: vec![], z2: vec![] };
    let mut x = vec![0.0; order];
    let (y0, mut f) = eval(&y_hist, 0, &x);
    y_hist.push(y0);
    let mut y = y0;
    for n in 0..=steps {
        let t = n as f64 * dt;
        traj.t.push(t);
        traj.y.push(y);
        traj.u.push(u_c.value(t));
        traj.z1.push(x.clone());
        traj.z2.push(Vec::new());
        if n == steps {
            break;
        }
        let s = 2 * n as i64;
        let k1 = f.clone();
        let k2 = eval(&y_hist, s + 1, &axpy(&x, &k1, 0.5 * dt)).1;
        let k3 = eval(&y_hist, s + 1, &axpy(&x, &k2, 0.5 * dt)).1;
        let k4 = eval(&y_hist, s + 2, &axpy(&x, &k3, dt)).1;
        let next: Vec<f64> =
            (0..order).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        let (y_next, f_next) = eval(&y_hist, s + 2, &next);
        let mid = hermite_midpoint(&x, &next, &k1, &f_next, dt);
        let y_mid = eval(&y_hist, s + 1, &mid).0;
        y_hist.push(y_mid);
        y_hist.push(y_next);
        x = next;
        f = f_next;
        y = y_next;
    }
    Ok(traj)
}
