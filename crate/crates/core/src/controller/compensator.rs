//! Disturbance-compensating input `u0`.
//!
//! `u0` solves
//!
//! ```text
//! L (Delta0 u0 + Delta1 u0(t-h)) = Delta1 S1 y(t-2h) - F0 (R0 Delta2^T v0 + R1 Delta2^T v0(t-h))
//! ```
//!
//! which removes the `e^{-2hs}` term and the disturbance from the closed-loop
//! output equation.

use super::{ControllerParams, DelayRealization};
use crate::error::{Error, Result};
use crate::polynomial::{delay_stability_margin, is_hurwitz, PencilPolynomials, Polynomial};

/// Distance of the certification line from the imaginary axis.
const DELTA_LINE: f64 = 1e-3;

/// Certifies that `Delta0(s) + Delta1(s) e^{-hs}` has no zeros in the closed right half-plane.
pub fn certify_delta(pp: &PencilPolynomials, h: f64) -> Result<()> {
    if pp.delta0.is_zero() || !is_hurwitz(&pp.delta0, 0.0)? {
        return Err(Error::DeltaNotStable);
    }
    if pp.delta1.is_zero() {
        return Ok(());
    }
    // half delay: the certificate then bounds |Delta1 e^{-hs} / Delta0|
    match delay_stability_margin(&pp.delta0, &Polynomial::zero(), &pp.delta1, h / 2.0, DELTA_LINE) {
        Ok(sup) if sup < 1.0 => Ok(()),
        _ => Err(Error::DeltaNotStable),
    }
}

/// Realization of `u0` with channels `[y(t-2h), u0(t-h), v0(t) (n), v0(t-h) (n)]`.
#[derive(Debug, Clone)]
pub struct CompensatorRealization {
    pub realization: DelayRealization,
    /// Number of disturbance channels (zero when the disturbance is not compensated).
    pub n_disturbance: usize,
}

impl CompensatorRealization {
    pub const OUTPUT_2H: usize = 0;
    pub const SELF_DELAYED: usize = 1;

    /// `pp` must be the normalized pencil polynomials the controller was designed for.
    pub fn new(params: &ControllerParams, pp: &PencilPolynomials, with_disturbance: bool) -> Result<Self> {
        certify_delta(pp, params.h)?;
        let den = &params.l * &pp.delta0;
        let m = den.degree().ok_or(Error::ZeroPolynomial)?;
        let mut nums = vec![&pp.delta1 * &params.s1, -&(&params.l * &pp.delta1)];
        let n_disturbance = if with_disturbance { pp.delta2.len() } else { 0 };
        if with_disturbance {
            let (f0r0, f0r1) = params.denominators();
            nums.extend(pp.delta2.iter().map(|d2| -&(&f0r0 * d2)));
            nums.extend(pp.delta2.iter().map(|d2| -&(&f0r1 * d2)));
        }
        if let Some(bad) = nums.iter().filter_map(Polynomial::degree).find(|&d| d > m) {
            return Err(Error::NonProperCompensator(format!(
                "numerator degree {bad} exceeds deg(L Delta0) = {m}; raise the degree of L"
            )));
        }
        Ok(CompensatorRealization { realization: DelayRealization::new(&den, &nums)?, n_disturbance })
    }

    pub fn channels(&self) -> usize {
        2 + 2 * self.n_disturbance
    }

    /// Packs channel values in realization order.
    pub fn sigma(&self, y_2h: f64, u0_h: f64, v0: &[f64], v0_h: &[f64]) -> Vec<f64> {
        let mut s = vec![y_2h, u0_h];
        if self.n_disturbance > 0 {
            s.extend_from_slice(v0);
            s.extend_from_slice(v0_h);
        }
        s
    }
}
