//! Serializable signal descriptions.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::SmoothSignal;

fn default_components() -> usize {
    8
}
fn default_omega_max() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude` for `t >= 0`, zero before. No derivative information.
    Step {
        amplitude: f64,
    },
    /// `amplitude (1 - e^{-rate t} (1 + rate t))` for `t >= 0`, zero before.
    SmoothStep {
        amplitude: f64,
        rate: f64,
    },
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Seeded sum of sinusoids with random frequencies in `(0, omega_max]`,
    /// bounded by `amplitude` in absolute value.
    Noise {
        amplitude: f64,
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default = "default_omega_max")]
        omega_max: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl SignalSpec {
    /// `seed` is used by noise signals that do not carry their own.
    pub fn build(&self, seed: u64) -> Result<SmoothSignal> {
        Ok(match *self {
            SignalSpec::Zero => SmoothSignal::zero(),
            SignalSpec::Constant { value } => SmoothSignal::constant(value),
            SignalSpec::Step { amplitude } => SmoothSignal::piecewise(move |t| if t >= 0.0 { amplitude } else { 0.0 }),
            SignalSpec::SmoothStep { amplitude, rate } => {
                if !(rate > 0.0) {
                    return Err(Error::InvalidInput("smooth step rate must be positive".into()));
                }
                smooth_step(amplitude, rate)
            }
            SignalSpec::Sinusoid { amplitude, omega, phase } => SmoothSignal::sinusoid(amplitude, omega, phase),
            SignalSpec::Noise { amplitude, components, omega_max, seed: own } => {
                if components == 0 || !(omega_max > 0.0) {
                    return Err(Error::InvalidInput("noise needs at least one component and omega_max > 0".into()));
                }
                multi_sine(amplitude, components, omega_max, own.unwrap_or(seed))
            }
        })
    }
}

fn smooth_step(amplitude: f64, rate: f64) -> SmoothSignal {
    // continuously differentiable across t = 0
    SmoothSignal::new(1, move |t, k| {
        if t < 0.0 {
            return 0.0;
        }
        let decay = (-rate * t).exp();
        match k {
            0 => amplitude * (1.0 - decay * (1.0 + rate * t)),
            _ => amplitude * rate * rate * t * decay,
        }
    })
}

fn multi_sine(amplitude: f64, components: usize, omega_max: f64, seed: u64) -> SmoothSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms: Vec<(f64, f64, f64)> = (0..components)
        .map(|_| {
            let w = rng.random_range(0.5..1.0);
            let omega = omega_max * rng.random_range(0.05..=1.0);
            let phase = rng.random_range(0.0..TAU);
            (w, omega, phase)
        })
        .collect();
    let total: f64 = terms.iter().map(|t| t.0).sum();
    for t in &mut terms {
        t.0 *= amplitude / total;
    }
    SmoothSignal::new(usize::MAX, move |t, k| {
        terms
            .iter()
            .map(|&(a, w, ph)| a * w.powi(k as i32) * (w * t + ph + k as f64 * FRAC_PI_2).sin())
            .sum()
    })
}
