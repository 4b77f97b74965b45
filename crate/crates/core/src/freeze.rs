//! Freezing for modulated systems `x' = A(t,x) N_t(x) + B(t,x) u`.
//!
//! Along a reference trajectory `z` the state-dependent coefficients are
//! evaluated at `z(t)`, which leaves a control-affine system with drift
//! `A(t,z(t)) N_t(x)` and input matrix `B(t,z(t))`. Synthesis on the frozen
//! system, re-simulation of the modulated system and relaxation of `z` are
//! repeated until the trajectory stops moving.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{aligned_step, integrate_controlled, ControlGrid, Trajectory};
use crate::gramian::{Anchor, Discretization};
use crate::model::{ControlSystem, ModelBounds, SystemModel};
use crate::synthesis::{picard_synthesize, SynthesisOptions, SynthesisResult, TargetSpec};

/// The modulated model with `A` and `B` evaluated along `z`.
#[derive(Debug, Clone)]
pub struct FrozenModel<'a> {
    model: &'a SystemModel,
    z: Trajectory,
    bounds: ModelBounds,
}

impl<'a> FrozenModel<'a> {
    pub fn new(model: &'a SystemModel, z: Trajectory) -> Result<Self> {
        if !model.is_general() {
            return Err(Error::NotGeneralModel);
        }
        let a_sup = match model.bounds.a_sup {
            Some(a) => a,
            None => sampled_a_sup(model, &z)?,
        };
        let bounds = ModelBounds {
            lambda1: model.bounds.lambda1 * a_sup,
            lambda2: model.bounds.lambda2 * a_sup,
            l_b: 0.0,
            b_sup: model.bounds.b_sup,
            a_sup: Some(a_sup),
        };
        Ok(Self { model, z, bounds })
    }

    pub fn reference(&self) -> &Trajectory {
        &self.z
    }

    fn frozen_state(&self, t: f64) -> DVector<f64> {
        self.z.state_at(t)
    }

    fn modulation(&self, t: f64) -> Result<DMatrix<f64>> {
        let z = self.frozen_state(t);
        Ok(self
            .model
            .modulation_matrix(t, z.as_slice())?
            .expect("frozen model is general"))
    }
}

/// Spectral norm of `A` along `z`, at nodes and midpoints.
fn sampled_a_sup(model: &SystemModel, z: &Trajectory) -> Result<f64> {
    let mut sup = 0.0f64;
    for w in z.times.windows(2) {
        for t in [w[0], 0.5 * (w[0] + w[1]), w[1]] {
            if let Some(a) = model.modulation_matrix(t, z.state_at(t).as_slice())? {
                sup = sup.max(crate::linalg::spectral_norm(&a));
            }
        }
    }
    Ok(sup)
}

impl ControlSystem for FrozenModel<'_> {
    fn dimension(&self) -> usize {
        self.model.dimension
    }
    fn inputs(&self) -> usize {
        self.model.inputs
    }
    fn horizon(&self) -> (f64, f64) {
        (self.model.t0, self.model.t_final)
    }
    fn bounds(&self) -> &ModelBounds {
        &self.bounds
    }
    fn drift(&self, t: f64, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.modulation(t)? * self.model.drift(t, x)?)
    }
    fn drift_jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.modulation(t)? * self.model.drift_jacobian(t, x)?)
    }
    fn drift_second(&self, t: f64, x: &[f64], h: &[f64], w: &[f64]) -> Result<DVector<f64>> {
        Ok(self.modulation(t)? * self.model.drift_second(t, x, h, w)?)
    }
    fn input_matrix(&self, t: f64, _x: &[f64]) -> Result<DMatrix<f64>> {
        let z = self.frozen_state(t);
        self.model.input_matrix(t, z.as_slice())
    }
    fn input_derivative(&self, _t: f64, _x: &[f64], _dir: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.model.dimension, self.model.inputs))
    }
    fn input_depends_on_state(&self) -> bool {
        false
    }
}

/// Trajectory of the modulated system under `u`.
pub fn general_trajectory(
    model: &SystemModel,
    u: &ControlGrid,
    x0: &DVector<f64>,
    disc: &Discretization,
) -> Result<Trajectory> {
    let gen = model.general()?;
    integrate_controlled(&gen, u, x0, aligned_step(u.spacing(), disc.step))
}

/// One synthesis on the system frozen along `z`, anchored at the final time.
pub fn freeze_step(
    model: &SystemModel,
    z: &Trajectory,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    disc: &Discretization,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    let frozen = FrozenModel::new(model, z.clone())?;
    let spec = TargetSpec::new(x0.clone(), x1.clone(), Anchor::Final);
    picard_synthesize(&frozen, &spec, disc, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreezeOptions {
    pub max_outer: usize,
    /// Stop once the re-simulated trajectory is within this sup distance of
    /// the frozen one.
    pub tol_outer: f64,
    pub inner: SynthesisOptions,
}

impl Default for FreezeOptions {
    fn default() -> Self {
        Self {
            max_outer: 50,
            tol_outer: 1e-8,
            inner: SynthesisOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FreezeResult {
    #[serde(skip)]
    pub control: ControlGrid,
    /// Frozen trajectory of the last outer iteration.
    #[serde(skip)]
    pub z: Trajectory,
    /// Trajectory of the modulated system under `control`.
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub outer_iterations: usize,
    /// Sup distance between frozen and re-simulated trajectories.
    pub residuals: Vec<f64>,
    pub damping: f64,
    pub general_endpoint: Vec<f64>,
    pub general_endpoint_residual: f64,
    /// Outer iteration settled and the modulated system meets the endpoint
    /// tolerance.
    pub converged: bool,
    pub inner: SynthesisResult,
}

const STALL_LIMIT: usize = 10;

/// Outer freezing loop starting from the uncontrolled modulated trajectory.
pub fn freeze_iterate(
    model: &SystemModel,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    disc: &Discretization,
    opts: &FreezeOptions,
) -> Result<FreezeResult> {
    disc.validate()?;
    let zero = disc.zero_control(model);
    let mut z = general_trajectory(model, &zero, x0, disc)?;
    let mut residuals: Vec<f64> = Vec::new();
    let mut damping = 1.0;
    let mut stalled = 0usize;
    for iteration in 0..opts.max_outer {
        let outer = |e: Error| Error::Outer {
            iteration,
            z: z.states
                .iter()
                .map(|s| s.iter().copied().collect())
                .collect(),
            source: Box::new(e),
        };
        let inner = freeze_step(model, &z, x0, x1, disc, &opts.inner).map_err(outer)?;
        let actual = general_trajectory(model, &inner.control, x0, disc).map_err(outer)?;
        let residual = actual.sup_distance(&z);
        if let Some(&prev) = residuals.last() {
            if residual >= prev {
                stalled += 1;
                if stalled >= STALL_LIMIT {
                    damping = 0.5;
                }
            } else {
                stalled = 0;
            }
        }
        residuals.push(residual);
        if residual <= opts.tol_outer {
            let general_endpoint = actual.endpoint().clone();
            let general_endpoint_residual = (&general_endpoint - x1).norm();
            let tol_endpoint = opts.inner.tol_endpoint.unwrap_or(1e-6 * (1.0 + x1.norm()));
            return Ok(FreezeResult {
                converged: general_endpoint_residual <= tol_endpoint,
                control: inner.control.clone(),
                z,
                outer_iterations: iteration + 1,
                residuals,
                damping,
                general_endpoint_residual,
                general_endpoint: general_endpoint.iter().copied().collect(),
                trajectory: actual,
                inner,
            });
        }
        for (zs, a) in z.states.iter_mut().zip(&actual.states) {
            *zs = &*zs + (a - &*zs) * damping;
        }
    }
    Err(Error::MaxOuterIterations {
        iterations: residuals.len(),
        last_residual: residuals.last().copied().unwrap_or(f64::NAN),
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, tests::cfg};

    #[test]
    fn plain_model_is_rejected() {
        let m = build_model(&cfg(&["x2", "-x1"], &[&["0"], &["1"]])).unwrap();
        let z = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![DVector::zeros(2), DVector::zeros(2)],
        };
        assert!(matches!(
            FrozenModel::new(&m, z),
            Err(Error::NotGeneralModel)
        ));
    }
}
