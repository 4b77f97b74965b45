#![allow(dead_code)]

use nalgebra::DVector;
use nlgram::flow::ControlGrid;
use nlgram::model::{build_model, SystemModel};
use rand::Rng;
use serde_json::{json, Value};

pub fn model(v: Value) -> SystemModel {
    build_model(&serde_json::from_value(v).expect("model config")).expect("model")
}

pub fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// `x1' = x2, x2' = u` on `[0, 1]`.
pub fn double_integrator() -> SystemModel {
    model(json!({
        "dimension": 2, "inputs": 1, "t0": 0.0, "T": 1.0,
        "drift": ["x2", "0"],
        "input_matrix": [["0"], ["1"]],
        "bounds": {"lambda1": 1.0, "lambda2": 0.0}
    }))
}

/// `x' = u` on `[0, t]`.
pub fn integrator(t: f64) -> SystemModel {
    model(json!({
        "dimension": 1, "inputs": 1, "t0": 0.0, "T": t,
        "drift": ["0"],
        "input_matrix": [["1"]],
        "bounds": {"lambda1": 0.0, "lambda2": 0.0}
    }))
}

pub fn hopfield(d: &[f64], w: &[Vec<f64>], b: &[Vec<f64>], t: f64) -> SystemModel {
    model(json!({
        "dimension": d.len(), "inputs": b[0].len(), "t0": 0.0, "T": t,
        "input_matrix": b,
        "hopfield": {"D": d, "W": w}
    }))
}

/// Two neurons, one input on the first; `|w21| >= 0.2` keeps the second
/// neuron reachable.
pub fn random_hopfield<R: Rng>(rng: &mut R) -> SystemModel {
    let d = [rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5)];
    let mut w: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    if w[1][0].abs() < 0.2 {
        w[1][0] = 0.2f64.copysign(w[1][0]) + w[1][0];
    }
    let b = vec![vec![1.0], vec![rng.gen_range(-0.3..0.3)]];
    hopfield(&d, &w, &b, 1.0)
}

/// Composite Simpson weights with a closing 3/8 panel for an odd
/// interval count.
pub fn simpson(nodes: usize, h: f64) -> Vec<f64> {
    let n = nodes - 1;
    let mut w = vec![0.0; nodes];
    let even = if n.is_multiple_of(2) { n } else { n - 3 };
    let mut i = 0;
    while i < even {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
        i += 2;
    }
    if even < n {
        for (o, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[even + o] += 3.0 * h / 8.0 * c;
        }
    }
    w
}

/// Weighted `L^2` norm of the node values.
pub fn l2(u: &ControlGrid) -> f64 {
    let w = simpson(u.nodes(), u.spacing());
    u.values
        .row_iter()
        .zip(&w)
        .map(|(r, wj)| wj * r.norm_squared())
        .sum::<f64>()
        .sqrt()
}

pub fn random_control<R: Rng>(
    rng: &mut R,
    nodes: usize,
    inputs: usize,
    t1: f64,
    amp: f64,
) -> ControlGrid {
    let a: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-amp..amp)).collect();
    let b: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-amp..amp)).collect();
    ControlGrid::from_fn(0.0, t1, nodes, inputs, |t| {
        let s = (2.0 * std::f64::consts::PI * t / t1).sin();
        DVector::from_fn(inputs, |i, _| a[i] + b[i] * s)
    })
}
