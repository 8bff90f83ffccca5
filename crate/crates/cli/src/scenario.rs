//! JSON scenario files.
//!
//! Matrices are arrays of rows, polynomials are coefficient arrays in
//! ascending powers, signals use the tagged `SignalSpec` form
//! (`{"kind": "sinusoid", "amplitude": 1, "omega": 2}`). Unknown keys are
//! rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use sdc_core::adaptive::{EstimatorConfig, OmegaBox};
use sdc_core::controller::ControllerParams;
use sdc_core::linalg::{Mat, Vector};
use sdc_core::polynomial::LineSide;
use sdc_core::sim::SignalSpec;
use sdc_core::{DescriptorSystem, Polynomial, Tolerances};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub system: SystemSpec,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    #[serde(default = "zero_signal")]
    pub reference: SignalSpec,
    /// Input history on `[-h, 0]`.
    #[serde(default = "zero_signal")]
    pub psi: SignalSpec,
    /// Initial slow state in canonical coordinates.
    #[serde(default)]
    pub z10: Option<Vec<f64>>,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub estimator: Option<EstimatorSpec>,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn zero_signal() -> SignalSpec {
    SignalSpec::Zero
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Delayed-input vector; zero when omitted.
    #[serde(default)]
    pub d: Option<Vec<f64>>,
    pub c: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    #[serde(default)]
    pub eta1: Vec<SignalSpec>,
    #[serde(default)]
    pub eta2: Vec<SignalSpec>,
    #[serde(default = "yes")]
    pub compensate: bool,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        DisturbanceSpec { eta1: Vec::new(), eta2: Vec::new(), compensate: true }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    OpenLoop,
    /// Pole placement with the true plant polynomials.
    Known,
    Matching,
    /// Pole placement re-solved from the running estimates.
    Adaptive,
    /// Use the `params` object as is.
    Params,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Line {
    #[default]
    Left,
    Right,
}

impl From<Line> for LineSide {
    fn from(l: Line) -> Self {
        match l {
            Line::Left => LineSide::Left,
            Line::Right => LineSide::Right,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default)]
    pub mode: Mode,
    /// Reject designs whose delay certificate fails.
    #[serde(default = "yes")]
    pub certify: bool,
    #[serde(rename = "F0", default)]
    pub f0: Option<Polynomial>,
    #[serde(rename = "M0star", default)]
    pub m0_star: Option<Polynomial>,
    #[serde(rename = "M1star", default)]
    pub m1_star: Option<Polynomial>,
    #[serde(rename = "T", default)]
    pub t: Option<Polynomial>,
    #[serde(rename = "L", default)]
    pub l: Option<Polynomial>,
    /// Reference-model denominator for `matching`.
    #[serde(rename = "Mm", default)]
    pub mm: Option<Polynomial>,
    #[serde(rename = "Dm_prime", default)]
    pub dm_prime: Option<Polynomial>,
    #[serde(default)]
    pub v: Option<f64>,
    #[serde(default)]
    pub v1: Option<f64>,
    #[serde(default)]
    pub margin_line: Line,
    #[serde(default)]
    pub params: Option<ControllerParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    /// Monic Hurwitz filter with degree `deg M`.
    #[serde(rename = "F")]
    pub f: Polynomial,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(rename = "Omega", default)]
    pub omega: Option<OmegaBox>,
    #[serde(default)]
    pub config: EstimatorConfig,
    #[serde(default = "default_k_syn")]
    pub k_syn: usize,
}

fn default_k_syn() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Seed for noise signals that do not carry their own.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

fn default_t_end() -> f64 {
    10.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_stride() -> usize {
    1
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec { t_end: default_t_end(), dt: default_dt(), seed: 0, output_stride: default_stride() }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Mat> {
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(CliError::Invalid(format!("{name} must be square: row {i} has {} entries, expected {n}", r.len())));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

impl SystemSpec {
    pub fn to_system(&self) -> Result<DescriptorSystem> {
        let e = matrix("E", &self.e)?;
        let a = matrix("A", &self.a)?;
        let d = self.d.clone().unwrap_or_else(|| vec![0.0; self.b.len()]);
        let sys = DescriptorSystem::new(
            e,
            a,
            Vector::from_vec(self.b.clone()),
            Vector::from_vec(d),
            Vector::from_vec(self.c.clone()),
            self.h,
        )?;
        Ok(sys)
    }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
        let sc: ScenarioFile =
            serde_json::from_str(&text).map_err(|source| CliError::Parse { path: path.into(), source })?;
        sc.validate()?;
        Ok(sc)
    }

    /// Shape checks that do not need any numerical work.
    pub fn validate(&self) -> Result<()> {
        let sys = self.system.to_system()?;
        if let Some(z) = &self.z10 {
            if z.len() > sys.n() {
                return Err(CliError::Invalid(format!("z10 has {} entries for a system of order {}", z.len(), sys.n())));
            }
        }
        if !(self.sim.t_end > 0.0) || !(self.sim.dt > 0.0) {
            return Err(CliError::Invalid("sim.t_end and sim.dt must be positive".into()));
        }
        if self.sim.output_stride == 0 {
            return Err(CliError::Invalid("sim.output_stride must be at least 1".into()));
        }
        let c = &self.controller;
        match c.mode {
            Mode::Known | Mode::Adaptive if c.f0.is_none() || c.m0_star.is_none() => {
                return Err(CliError::Invalid("controller needs F0 and M0star".into()));
            }
            Mode::Matching if c.f0.is_none() || c.mm.is_none() => {
                return Err(CliError::Invalid("matching controller needs F0 and Mm".into()));
            }
            Mode::Params if c.params.is_none() => {
                return Err(CliError::Invalid("controller mode params needs a params object".into()));
            }
            Mode::Adaptive if self.estimator.is_none() => {
                return Err(CliError::Invalid("adaptive controller needs an estimator section".into()));
            }
            _ => {}
        }
        if let Some(est) = &self.estimator {
            est.config.validate()?;
            if est.k_syn == 0 {
                return Err(CliError::Invalid("estimator.k_syn must be at least 1".into()));
            }
        }
        Ok(())
    }
}
