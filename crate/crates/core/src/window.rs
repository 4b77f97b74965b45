//! Windowed synthesis: the horizon is split into equal windows, each steered
//! toward a waypoint on the straight line from `x0` to `x1`, starting from
//! the endpoint actually reached by the previous window.

use nalgebra::DVector;
use serde::Serialize;

use crate::certify::{zero_reference_certificate, Certificate};
use crate::error::{Error, Result};
use crate::flow::aligned_step;
use crate::gramian::{Anchor, Discretization};
use crate::model::SystemModel;
use crate::synthesis::{
    picard_synthesize, target_displacement, SynthesisOptions, SynthesisResult, TargetSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOptions {
    pub windows: usize,
    pub anchor: Anchor,
    pub theta: f64,
    /// Synthesize even when a window is not certified.
    pub force: bool,
    pub synthesis: SynthesisOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowOutcome {
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    pub start: Vec<f64>,
    pub waypoint: Vec<f64>,
    pub certificate: Certificate,
    pub synthesis: SynthesisResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowResult {
    pub windows: Vec<WindowOutcome>,
    pub total_energy: f64,
    pub endpoint: Vec<f64>,
    pub endpoint_residual: f64,
    pub certified: bool,
}

fn window_error(index: usize, e: Error) -> Error {
    Error::Window {
        index,
        source: Box::new(e),
    }
}

/// Each window uses `disc` as its own grid, so `n = 1` reproduces a single
/// synthesis on the full horizon.
pub fn window_synthesize(
    model: &SystemModel,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    disc: &Discretization,
    opts: &WindowOptions,
) -> Result<WindowResult> {
    let n = opts.windows;
    if n == 0 {
        return Err(Error::Schema("window count must be at least 1".into()));
    }
    disc.validate()?;
    let (t0, t1) = (model.t0, model.t_final);
    let mut start = x0.clone();
    let mut out = Vec::with_capacity(n);
    let mut total_energy = 0.0;
    let mut certified = true;
    for i in 0..n {
        let ta = t0 + (t1 - t0) * i as f64 / n as f64;
        let tb = if i + 1 == n {
            t1
        } else {
            t0 + (t1 - t0) * (i + 1) as f64 / n as f64
        };
        let s = (i + 1) as f64 / n as f64;
        let waypoint = if i + 1 == n {
            x1.clone()
        } else {
            x0 + (x1 - x0) * s
        };
        let sub = model.with_horizon(ta, tb);
        let spec = TargetSpec::new(start.clone(), waypoint.clone(), opts.anchor);
        let step = aligned_step(disc.zero_control(&sub).spacing(), disc.step);
        let y = target_displacement(&sub, &spec, step).map_err(|e| window_error(i, e))?;
        let certificate =
            zero_reference_certificate(&sub, &start, &y, opts.anchor, opts.theta, disc)
                .map_err(|e| window_error(i, e))?;
        if certificate.admissible != Some(true) {
            certified = false;
            if !opts.force {
                let reason = certificate.reason.clone().unwrap_or_default();
                return Err(window_error(i, Error::NotAdmissible(reason)));
            }
        }
        let synthesis = picard_synthesize(&sub, &spec, disc, &opts.synthesis)
            .map_err(|e| window_error(i, e))?;
        total_energy += synthesis.energy;
        let reached = synthesis.trajectory.endpoint().clone();
        out.push(WindowOutcome {
            index: i,
            t0: ta,
            t1: tb,
            start: start.iter().copied().collect(),
            waypoint: waypoint.iter().copied().collect(),
            certificate,
            synthesis,
        });
        start = reached;
    }
    Ok(WindowResult {
        windows: out,
        total_energy,
        endpoint_residual: (&start - x1).norm(),
        endpoint: start.iter().copied().collect(),
        certified,
    })
}
