use std::path::{Path, PathBuf};

use serde::Serialize;

use sdc_core::controller::{model_matching_synthesis, synthesize_pole_placement, synthesize_uncertified, ControllerParams, PlacementTargets};
use sdc_core::linalg::Vector;
use sdc_core::pencil::{check_regularity, is_impulse_free, solvability_rank_test, weierstrass_decompose};
use sdc_core::polynomial::{pencil_polynomials, PencilPolynomials};
use sdc_core::sim::{run_closed_loop, Control, EstimatorSetup, RunResult, Scenario};
use sdc_core::system::minimality_check;
use sdc_core::{DescriptorSystem, Error, Polynomial, Tolerances, WeierstrassForm};

use crate::error::{CliError, Result};
use crate::scenario::{Line, Mode, ScenarioFile};

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol_rank: Option<f64>,
    pub tol_decomp: Option<f64>,
    pub margin_line: Option<Line>,
    pub k_syn: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, sc: &mut ScenarioFile) {
        if let Some(t) = self.tol_rank {
            sc.tolerances.rank = t;
        }
        if let Some(t) = self.tol_decomp {
            sc.tolerances.decomp = t;
        }
        if let Some(l) = self.margin_line {
            sc.controller.margin_line = l;
        }
        if let (Some(k), Some(est)) = (self.k_syn, sc.estimator.as_mut()) {
            est.k_syn = k;
        }
        if let Some(s) = self.seed {
            sc.sim.seed = s;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub regular: bool,
    /// Verdict of the rank test on the block solvability matrix.
    pub rank_test_regular: bool,
    pub index: Option<usize>,
    pub impulse_free: Option<bool>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub controllable: Option<bool>,
    pub observable: Option<bool>,
    pub minimal: Option<bool>,
    /// Roots of `M` cancelled by both numerators, as `[re, im]`.
    pub cancellations: Vec<[f64; 2]>,
    #[serde(rename = "M")]
    pub m: Option<Polynomial>,
    #[serde(rename = "Delta0")]
    pub delta0: Option<Polynomial>,
    #[serde(rename = "Delta1")]
    pub delta1: Option<Polynomial>,
    pub residual_e: Option<f64>,
    pub residual_a: Option<f64>,
}

pub fn analyze(sc: &ScenarioFile) -> Result<AnalysisReport> {
    let tol = sc.tolerances;
    let sys = sc.system.to_system()?;
    let reg = check_regularity(&sys, tol.regularity);
    let mut report = AnalysisReport {
        n: sys.n(),
        regular: reg.regular,
        rank_test_regular: solvability_rank_test(&sys, tol.rank),
        index: None,
        impulse_free: None,
        n1: None,
        n2: None,
        controllable: None,
        observable: None,
        minimal: None,
        cancellations: Vec::new(),
        m: None,
        delta0: None,
        delta1: None,
        residual_e: None,
        residual_a: None,
    };
    if !reg.regular {
        return Ok(report);
    }
    let wf = weierstrass_decompose(&sys, &tol)?;
    let min = minimality_check(&sys, &wf, &tol)?;
    let pp = pencil_polynomials(&sys, tol.regularity)?.normalized()?;
    report.index = Some(wf.ell);
    report.impulse_free = Some(is_impulse_free(&sys, &tol)?);
    report.n1 = Some(wf.n1);
    report.n2 = Some(wf.n2);
    report.controllable = Some(min.controllable);
    report.observable = Some(min.observable);
    report.minimal = Some(min.minimal);
    report.cancellations = min.cancellations.iter().map(|z| [z.re, z.im]).collect();
    report.m = Some(pp.m);
    report.delta0 = Some(pp.delta0);
    report.delta1 = Some(pp.delta1);
    report.residual_e = Some(wf.residual_e);
    report.residual_a = Some(wf.residual_a);
    Ok(report)
}

struct Plant {
    sys: DescriptorSystem,
    wf: WeierstrassForm,
    pp: PencilPolynomials,
}

fn minimal_plant(sc: &ScenarioFile) -> Result<Plant> {
    let tol: Tolerances = sc.tolerances;
    let sys = sc.system.to_system()?;
    let wf = weierstrass_decompose(&sys, &tol)?;
    if !minimality_check(&sys, &wf, &tol)?.minimal {
        return Err(Error::NotMinimal.into());
    }
    let pp = pencil_polynomials(&sys, tol.regularity)?.normalized()?;
    Ok(Plant { sys, wf, pp })
}

/// Controller parameters for the scenario's `controller` section.
pub fn synthesize(sc: &ScenarioFile) -> Result<ControllerParams> {
    let c = &sc.controller;
    if c.mode == Mode::Params {
        return Ok(c.params.clone().expect("validated"));
    }
    if c.mode == Mode::OpenLoop {
        return Err(CliError::Invalid("open-loop scenario has no controller to synthesize".into()));
    }
    let plant = minimal_plant(sc)?;
    let v = c.v.unwrap_or(0.5);
    let f0 = c.f0.clone().expect("validated");
    if c.mode == Mode::Matching {
        let mm = c.mm.clone().expect("validated");
        return Ok(model_matching_synthesis(&plant.pp, &f0, &mm, v, c.dm_prime.clone(), plant.sys.h)?);
    }
    let targets = PlacementTargets {
        f: sc.estimator.as_ref().map(|e| e.f.clone()),
        f0,
        m0_star: c.m0_star.clone().expect("validated"),
        m1_star: c.m1_star.clone().unwrap_or_else(Polynomial::zero),
        t: c.t.clone(),
        l: c.l.clone(),
        h: plant.sys.h,
        v,
        v1: c.v1.unwrap_or(0.5 * v),
        ell: plant.wf.ell,
        line: c.margin_line.into(),
    };
    let params = if c.certify {
        synthesize_pole_placement(&plant.pp, &targets)?
    } else {
        synthesize_uncertified(&plant.pp, &targets)?
    };
    log::info!("synthesized controller, certificate supremum {:.6}", params.margin);
    Ok(params)
}

pub fn load_params(path: &Path) -> Result<ControllerParams> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse { path: path.into(), source })
}

fn build_scenario(sc: &ScenarioFile, control: Control) -> Result<Scenario> {
    let sys = sc.system.to_system()?;
    let seed = sc.sim.seed;
    let mut out = Scenario::new(sys, control, sc.sim.t_end, sc.sim.dt);
    out.tolerances = sc.tolerances;
    out.reference = sc.reference.build(seed)?;
    out.psi = sc.psi.build(seed.wrapping_add(1))?;
    out.z10 = sc.z10.as_ref().map(|z| Vector::from_vec(z.clone()));
    let signals = |specs: &[sdc_core::sim::SignalSpec], base: u64| -> Result<Vec<_>> {
        specs.iter().enumerate().map(|(i, s)| Ok(s.build(seed.wrapping_add(base + i as u64))?)).collect()
    };
    out.eta1 = signals(&sc.disturbance.eta1, 100)?;
    out.eta2 = signals(&sc.disturbance.eta2, 200)?;
    out.compensate = sc.disturbance.compensate;
    out.output_stride = sc.sim.output_stride;
    out.estimator = sc.estimator.as_ref().map(|e| EstimatorSetup {
        f: e.f.clone(),
        theta0: e.theta0.clone(),
        omega: e.omega.clone(),
        config: e.config,
        k_syn: e.k_syn,
    });
    Ok(out)
}

/// Closed-loop run. `params` replaces the synthesized design when given.
pub fn simulate(sc: &ScenarioFile, params: Option<ControllerParams>) -> Result<RunResult> {
    let design = match params {
        Some(p) => Some(p),
        None if sc.controller.mode == Mode::OpenLoop => None,
        None => Some(synthesize(sc)?),
    };
    let control = match (design, sc.controller.mode) {
        (None, _) => Control::OpenLoop,
        (Some(p), Mode::Adaptive) => Control::Adaptive(p),
        (Some(p), _) => Control::Fixed(p),
    };
    Ok(run_closed_loop(&build_scenario(sc, control)?)?)
}

/// Plant driven open loop by the reference with the estimator running.
pub fn estimate(sc: &ScenarioFile) -> Result<RunResult> {
    if sc.estimator.is_none() {
        return Err(CliError::Invalid("estimate needs an estimator section".into()));
    }
    let mut scenario = build_scenario(sc, Control::OpenLoop)?;
    scenario.compensate = false;
    Ok(run_closed_loop(&scenario)?)
}

/// Files written for a run.
pub fn write_outputs(result: &RunResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.into(), source })?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| CliError::Write { path: path.clone(), source })?;
        written.push(path);
        Ok(())
    };
    put("trajectory.csv", result.trajectory_csv())?;
    if let Some(trace) = &result.estimator {
        put("estimator.csv", trace.to_csv())?;
    }
    put("diagnostics.json", to_json_text(&result.diagnostics))?;
    Ok(written)
}

pub fn to_json_text<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}
