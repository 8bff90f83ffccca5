use sdc_core::controller::{model_matching_synthesis, synthesize_pole_placement, synthesize_uncertified};
use sdc_core::fixtures::{s2, s2_class, s2_targets};
use sdc_core::linalg::Vector;
use sdc_core::pencil::weierstrass_decompose;
use sdc_core::polynomial::{pencil_polynomials, Polynomial};
use sdc_core::sim::{run_closed_loop, run_reference_model, Control, Scenario, SignalSpec};
use sdc_core::system::{simulate_weierstrass, AdmissibleData};
use sdc_core::{Error, QuasiPolynomial, SmoothSignal, Tolerances};

fn fixed_s2c(delta: f64) -> Control {
    let pp = pencil_polynomials(&s2_class(5.0, delta), 1e-9).unwrap();
    Control::Fixed(synthesize_pole_placement(&pp, &s2_targets()).unwrap())
}

fn final_y(sc: &Scenario) -> f64 {
    *run_closed_loop(sc).unwrap().trajectory.y.last().unwrap()
}

/// `log2` of successive final-value differences under step halving.
fn observed_order(mut make: impl FnMut(f64) -> Scenario, dt0: f64) -> f64 {
    let y: Vec<f64> = (0..4).map(|k| final_y(&make(dt0 / 2f64.powi(k)))).collect();
    let r1 = (y[0] - y[1]).abs() / (y[1] - y[2]).abs();
    let r2 = (y[1] - y[2]).abs() / (y[2] - y[3]).abs();
    r1.min(r2).log2()
}

#[test]
fn open_loop_step_matches_closed_form() {
    let mut sc = Scenario::new(s2(), Control::OpenLoop, 5.0, 0.02);
    sc.reference = SmoothSignal::constant(1.0);
    let r = run_closed_loop(&sc).unwrap();
    let err = r.trajectory.t.iter().zip(&r.trajectory.y).map(|(t, y)| (y + (-t).exp()).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6, "max error {err}");
}

#[test]
fn open_loop_integration_is_fourth_order() {
    let order = observed_order(
        |dt| {
            let mut sc = Scenario::new(s2_class(2.0, 0.7), Control::OpenLoop, 4.0, dt);
            sc.reference = SmoothSignal::sinusoid(1.0, 1.3, 0.2);
            sc.psi = SmoothSignal::sinusoid(1.0, 1.3, 0.2);
            sc.z10 = Some(Vector::from_vec(vec![0.5]));
            sc
        },
        0.1,
    );
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn closed_loop_integration_is_fourth_order() {
    let order = observed_order(
        |dt| {
            let mut sc = Scenario::new(s2_class(5.0, 0.5), fixed_s2c(0.5), 6.0, dt);
            sc.reference = SmoothSignal::sinusoid(1.0, 0.8, 0.0);
            sc.z10 = Some(Vector::from_vec(vec![1.0]));
            sc
        },
        0.1,
    );
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn zero_input_gives_zero_output() {
    let sc = Scenario::new(s2_class(5.0, 0.5), fixed_s2c(0.5), 5.0, 0.05);
    let r = run_closed_loop(&sc).unwrap();
    assert!(r.trajectory.y.iter().chain(&r.trajectory.u).chain(&r.u0).all(|&x| x == 0.0));
    assert!(r.trajectory.z1.iter().chain(&r.trajectory.z2).flatten().all(|&x| x == 0.0));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let make = || {
        let mut sc = Scenario::new(s2_class(5.0, 0.5), fixed_s2c(0.5), 8.0, 0.02);
        sc.reference = SignalSpec::Noise { amplitude: 1.0, components: 6, omega_max: 2.0, seed: Some(4) }.build(0).unwrap();
        sc.eta1 = vec![SignalSpec::Sinusoid { amplitude: 0.1, omega: 0.7, phase: 0.0 }.build(0).unwrap()];
        sc.compensate = false;
        sc
    };
    let a = run_closed_loop(&make()).unwrap().trajectory_csv();
    let b = run_closed_loop(&make()).unwrap().trajectory_csv();
    assert_eq!(a, b);
}

#[test]
fn open_loop_agrees_with_weierstrass_simulation() {
    let sys = s2_class(2.0, 0.7);
    let wf = weierstrass_decompose(&sys, &Tolerances::default()).unwrap();
    let u = SmoothSignal::sinusoid(1.0, 1.1, 0.0);
    let psi = SmoothSignal::sinusoid(1.0, 1.1, 0.0);
    let z10 = Vector::from_vec(vec![0.3]);
    let data = AdmissibleData::new(&wf, z10.clone(), psi.clone(), vec![], &u, sys.h).unwrap();
    let reference = simulate_weierstrass(&wf, &data, &u, &[], &[], sys.h, 5.0, 0.01).unwrap();
    let mut sc = Scenario::new(sys, Control::OpenLoop, 5.0, 0.01);
    sc.reference = u;
    sc.psi = psi;
    sc.z10 = Some(z10);
    let r = run_closed_loop(&sc).unwrap();
    for (a, b) in r.trajectory.y.iter().zip(&reference.y) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn pole_placement_tracks_and_decays() {
    let mut sc = Scenario::new(s2_class(5.0, 0.0), fixed_s2c(0.0), 12.0, 0.02);
    sc.reference = SmoothSignal::constant(1.0);
    let y = run_closed_loop(&sc).unwrap().trajectory.y;
    assert!((y.last().unwrap() - 1.0).abs() <= 0.02);

    let mut sc = Scenario::new(s2_class(5.0, 0.0), fixed_s2c(0.0), 12.0, 0.02);
    sc.z10 = Some(Vector::from_vec(vec![1.0]));
    let y = run_closed_loop(&sc).unwrap().trajectory.y;
    // samples 6 and 10 seconds in: only the slowest mode -1.5 is left
    let rate = (y[500].abs().ln() - y[300].abs().ln()) / 4.0;
    assert!((rate + 1.5).abs() <= 0.15, "decay rate {rate}");
}

#[test]
fn model_matching_is_exact_from_rest() {
    let pp = pencil_polynomials(&s2_class(5.0, 0.0), 1e-9).unwrap();
    let mm = Polynomial::from_real_roots(&[-2.0, -3.0, -4.0]);
    let params = model_matching_synthesis(&pp, &Polynomial::new(vec![2.0, 1.0]), &mm, 1.0, None, 1.0).unwrap();
    let u = SignalSpec::SmoothStep { amplitude: 1.0, rate: 2.0 }.build(0).unwrap();
    let mut sc = Scenario::new(s2_class(5.0, 0.0), Control::Fixed(params.clone()), 10.0, 0.01);
    sc.reference = u.clone();
    let y = run_closed_loop(&sc).unwrap().trajectory.y;
    let num = QuasiPolynomial::from_polynomial(1.0, params.model_num.clone().unwrap());
    let ym = run_reference_model(&mm, &Polynomial::zero(), &Polynomial::zero(), &num, 1.0, &u, 10.0, 0.01).unwrap().y;
    let scale = ym.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = y.iter().zip(&ym).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6 * scale, "{err}");
}

#[test]
fn failing_certificate_loop_grows() {
    let sys = s2_class(5.0, 8.0);
    let pp = pencil_polynomials(&sys, 1e-9).unwrap();
    let params = synthesize_uncertified(&pp, &s2_targets()).unwrap();
    assert!(params.margin >= 1.0);
    assert!(matches!(synthesize_pole_placement(&pp, &s2_targets()), Err(Error::StabilityMarginFailed { .. })));
    let mut sc = Scenario::new(sys, Control::Fixed(params), 40.0, 0.02);
    sc.compensate = false;
    sc.z10 = Some(Vector::from_vec(vec![1.0]));
    let y = run_closed_loop(&sc).unwrap().trajectory.y;
    let window = |a: usize, b: usize| y[a..b].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(window(1500, 2000) > 2.0 * window(500, 1000));
}

#[test]
fn stride_keeps_every_kth_sample() {
    let make = |stride| {
        let mut sc = Scenario::new(s2_class(5.0, 0.5), fixed_s2c(0.5), 4.0, 0.02);
        sc.reference = SmoothSignal::sinusoid(1.0, 1.0, 0.0);
        sc.output_stride = stride;
        run_closed_loop(&sc).unwrap().trajectory
    };
    let full = make(1);
    let thin = make(5);
    assert_eq!(thin.len(), 41);
    for (k, y) in thin.y.iter().enumerate() {
        assert_eq!(*y, full.y[5 * k]);
    }
}

#[test]
fn step_must_divide_delay() {
    let sc = Scenario::new(s2(), Control::OpenLoop, 4.0, 0.03);
    assert!(matches!(run_closed_loop(&sc), Err(Error::StepTooLarge { .. })));
    let sc = Scenario::new(s2(), Control::OpenLoop, 1.0, 0.01);
    assert!(matches!(run_closed_loop(&sc), Err(Error::InvalidInput(_))));
}
