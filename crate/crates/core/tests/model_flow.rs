mod common;

use std::f64::consts::E;

use common::{dv, hopfield, integrator, model};
use nalgebra::{DMatrix, DVector};
use nlgram::flow::{
    flow_jacobian, integrate_controlled, integrate_flow, linearized_transition, ControlGrid,
};
use nlgram::model::{build_model, hopfield_rates, validate_bounds, ControlSystem, StateBox};
use nlgram::Error;
use serde_json::json;

fn scalar(drift: &str, lambda1: f64) -> nlgram::model::SystemModel {
    model(json!({
        "dimension": 1, "inputs": 1, "t0": 0.0, "T": 1.0,
        "drift": [drift], "input_matrix": [["1"]],
        "bounds": {"lambda1": lambda1, "lambda2": 0.0}
    }))
}

#[test]
fn hopfield_block_expands_to_its_drift() {
    let h = hopfield(
        &[1.0, 1.0],
        &[vec![0.0, 1.0], vec![1.0, 0.0]],
        &[vec![1.0], vec![0.0]],
        1.0,
    );
    let explicit = model(json!({
        "dimension": 2, "inputs": 1, "t0": 0.0, "T": 1.0,
        "drift": ["-x1 + tanh(x2)", "-x2 + tanh(x1)"],
        "input_matrix": [[1.0], [0.0]],
        "bounds": {"lambda1": 2.0, "lambda2": 1.0}
    }));
    for x in [[0.3, -0.7], [1.5, 2.0], [-0.1, 0.0]] {
        assert_eq!(h.drift(0.2, &x).unwrap(), explicit.drift(0.2, &x).unwrap());
    }
}

#[test]
fn input_matrix_shape_is_checked() {
    let cfg = serde_json::from_value(json!({
        "dimension": 1, "inputs": 2, "t0": 0.0, "T": 1.0,
        "drift": ["0"], "input_matrix": [["1"]],
        "bounds": {"lambda1": 0.0, "lambda2": 0.0}
    }))
    .unwrap();
    assert!(matches!(
        build_model(&cfg),
        Err(Error::InconsistentDimensions(_))
    ));
}

#[test]
fn hopfield_rate_values() {
    let r = hopfield_rates(&[1.0], &DMatrix::zeros(1, 1));
    assert_eq!(
        (r.gamma, r.gamma1, r.gamma2, r.sigma_prime_sup),
        (-1.0, 1.0, 0.0, 0.0)
    );

    let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let r = hopfield_rates(&[1.0, 2.0], &swap);
    // max over u in (-1, 1) of 2u(1 - u^2), sampled independently
    let tanh2 = (0..=200_000)
        .map(|i| {
            let u = -1.0 + 2.0 * i as f64 / 200_000.0;
            (2.0 * u * (1.0 - u * u)).abs()
        })
        .fold(0.0, f64::max);
    assert!(r.gamma.abs() < 1e-12);
    assert!((r.gamma1 - 3.0).abs() < 1e-12);
    assert!((r.gamma2 - tanh2).abs() < 1e-9);
    assert!((r.gamma2 - 0.7698).abs() < 1e-4);

    let r = hopfield_rates(&[1.0, 1.0], &DMatrix::identity(2, 2));
    assert!(r.gamma.abs() < 1e-12 && (r.gamma1 - 2.0).abs() < 1e-12);
}

#[test]
fn bound_sampling() {
    let region = StateBox::symmetric(1, 2.0);
    let lin = scalar("-0.7*x1", 0.7);
    let rep = validate_bounds(&lin, &region, 200, 1).unwrap();
    assert!(!rep.violated);
    assert!((rep.checks[0].observed - 0.7).abs() < 1e-12);

    let quad = scalar("x1^2", 1.0);
    let rep = validate_bounds(&quad, &region, 2000, 1).unwrap();
    let lam = rep.checks.iter().find(|c| c.name == "lambda1").unwrap();
    assert!(rep.violated && lam.violated);
    assert!(
        lam.observed > 3.9 && lam.observed <= 4.0,
        "{}",
        lam.observed
    );

    let h = hopfield(
        &[1.0, 1.0],
        &[vec![0.5, 1.0], vec![1.0, -0.3]],
        &[vec![1.0], vec![0.0]],
        1.0,
    );
    let rep = validate_bounds(&h, &StateBox::symmetric(2, 3.0), 500, 2).unwrap();
    assert!(!rep.violated, "{:?}", rep.checks);
}

#[test]
fn flows() {
    let zero = integrator(1.0);
    assert_eq!(
        integrate_flow(&zero, 0.0, 1.0, &dv(&[0.4]), 1e-2).unwrap()[0],
        0.4
    );

    let grow = scalar("x1", 1.0);
    let e = integrate_flow(&grow, 0.0, 1.0, &dv(&[1.0]), 1e-3).unwrap()[0];
    assert!((e - E).abs() < 1e-8);

    let (_, j) = flow_jacobian(&zero, 0.0, 1.0, &dv(&[2.0]), 1e-2).unwrap();
    assert_eq!(j[(0, 0)], 1.0);
    let (x, j) = flow_jacobian(&scalar("tanh(x1)", 1.0), 0.0, 1.0, &dv(&[0.0]), 1e-3).unwrap();
    assert_eq!(x[0], 0.0);
    assert!((j[(0, 0)] - E).abs() < 1e-8);
}

#[test]
fn controlled_trajectories() {
    let ones = ControlGrid::from_fn(0.0, 1.0, 11, 1, |_| dv(&[1.0]));
    let x = integrate_controlled(&integrator(1.0), &ones, &dv(&[0.0]), 0.01).unwrap();
    assert!((x.endpoint()[0] - 1.0).abs() < 1e-15);

    let grow = scalar("x1", 1.0);
    let x = integrate_controlled(&grow, &ones, &dv(&[0.0]), 1e-3).unwrap();
    assert!((x.endpoint()[0] - (E - 1.0)).abs() < 1e-8);

    let h = hopfield(
        &[1.0, 1.0],
        &[vec![0.0, 1.0], vec![1.0, 0.0]],
        &[vec![1.0], vec![0.0]],
        1.0,
    );
    let zeros = ControlGrid::zeros(0.0, 1.0, 11, 1);
    let x0 = dv(&[0.5, -0.2]);
    let x = integrate_controlled(&h, &zeros, &x0, 1e-3).unwrap();
    for (t, s) in x.times.iter().zip(&x.states) {
        let f = integrate_flow(&h, 0.0, *t, &x0, 1e-3).unwrap();
        assert!((s - f).amax() < 1e-10);
    }
}

#[test]
fn ltv_transition_is_the_matrix_exponential() {
    let rot = model(json!({
        "dimension": 2, "inputs": 1, "t0": 0.0, "T": 2.0,
        "drift": ["x2", "-x1"], "input_matrix": [["0"], ["1"]],
        "bounds": {"lambda1": 1.0, "lambda2": 0.0}
    }));
    let u = ControlGrid::from_fn(0.0, 2.0, 21, 1, |t| dv(&[t.sin()]));
    let traj = integrate_controlled(&rot, &u, &dv(&[0.3, 0.1]), 1e-3).unwrap();
    let (ta, tb) = (0.4, 1.7);
    let r = linearized_transition(&rot, &u, &traj, ta, tb, 1e-3).unwrap();
    let s = tb - ta;
    let exact = DMatrix::from_row_slice(2, 2, &[s.cos(), s.sin(), -s.sin(), s.cos()]);
    assert!((r - exact).amax() < 1e-8);

    let same = linearized_transition(&rot, &u, &traj, ta, ta, 1e-3).unwrap();
    assert_eq!(same, DMatrix::identity(2, 2));
}

#[test]
fn transition_along_zero_control_is_the_flow_jacobian() {
    let h = hopfield(
        &[1.0, 0.8],
        &[vec![0.4, 1.0], vec![-0.9, 0.2]],
        &[vec![1.0], vec![0.2]],
        1.0,
    );
    let u = ControlGrid::zeros(0.0, 1.0, 11, 1);
    let x0 = dv(&[0.2, 0.4]);
    let traj = integrate_controlled(&h, &u, &x0, 1e-3).unwrap();
    let r = linearized_transition(&h, &u, &traj, 0.3, 0.9, 1e-3).unwrap();
    let xs: DVector<f64> = traj.state_at(0.3);
    let (_, j) = flow_jacobian(&h, 0.3, 0.9, &xs, 1e-3).unwrap();
    assert!((r - j).amax() < 1e-7);
}
