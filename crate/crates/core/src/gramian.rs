//! Trajectory Gramians, the input-to-endpoint operator `L` and its adjoint.
//!
//! With factors `K_j = D Phi_{t_j,tau}(x_u(t_j)) B(t_j, x_u(t_j))` and
//! quadrature weights `w_j`, the discrete operator is `L v = sum w_j K_j v_j`,
//! its adjoint in the weighted inner product is `(L* y)_j = K_j^T y`, and the
//! Gramian is `L L* = sum w_j K_j K_j^T`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::flow::{
    aligned_step, check_system_grid, flow_jacobian, integrate_controlled, jacobians_along,
    linearized_transition, rk4, substeps, ControlGrid, FlowJacobianSet, Trajectory,
};
use crate::linalg::{sym_eigen, SymEigen};
use crate::model::ControlSystem;

/// Relative eigenvalue cut used for ranks and pseudo-inverses.
pub const RANK_TOL: f64 = 1e-12;

/// Which end of the horizon the flow Jacobians are anchored at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    /// `tau = t0`
    Initial,
    /// `tau = T`
    Final,
}

impl Anchor {
    pub fn from_which(which: u8) -> Result<Self> {
        match which {
            1 => Ok(Anchor::Initial),
            2 => Ok(Anchor::Final),
            w => Err(Error::Schema(format!("which must be 1 or 2, got {w}"))),
        }
    }

    pub fn which(self) -> u8 {
        match self {
            Anchor::Initial => 1,
            Anchor::Final => 2,
        }
    }

    pub fn tau(self, t0: f64, t1: f64) -> f64 {
        match self {
            Anchor::Initial => t0,
            Anchor::Final => t1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// Composite Simpson; a 3/8 panel closes an odd interval count.
    #[default]
    Simpson,
    Trapezoid,
}

impl Quadrature {
    pub fn weights(self, nodes: usize, spacing: f64) -> Vec<f64> {
        let m = nodes;
        let mut w = vec![0.0; m];
        let intervals = m - 1;
        if self == Quadrature::Trapezoid || intervals < 2 {
            for (j, wj) in w.iter_mut().enumerate() {
                *wj = if j == 0 || j == m - 1 {
                    0.5 * spacing
                } else {
                    spacing
                };
            }
            return w;
        }
        let simpson_intervals = if intervals.is_multiple_of(2) {
            intervals
        } else {
            intervals - 3
        };
        for p in (0..simpson_intervals).step_by(2) {
            w[p] += spacing / 3.0;
            w[p + 1] += 4.0 * spacing / 3.0;
            w[p + 2] += spacing / 3.0;
        }
        if simpson_intervals < intervals {
            let s = simpson_intervals;
            let c = 3.0 * spacing / 8.0;
            w[s] += c;
            w[s + 1] += 3.0 * c;
            w[s + 2] += 3.0 * c;
            w[s + 3] += c;
        }
        w
    }
}

/// Grid size, integrator step and quadrature rule shared by all operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub nodes: usize,
    pub step: f64,
    #[serde(default)]
    pub quadrature: Quadrature,
}

impl Discretization {
    pub fn new(nodes: usize, step: f64) -> Self {
        Self {
            nodes,
            step,
            quadrature: Quadrature::Simpson,
        }
    }

    pub fn zero_control<S: ControlSystem + ?Sized>(&self, sys: &S) -> ControlGrid {
        let (t0, t1) = sys.horizon();
        ControlGrid::zeros(t0, t1, self.nodes, sys.inputs())
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::Schema("grid.nodes must be at least 2".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Schema(
                "grid.integrator_step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Weighted `L^2` energy `sum w_j |u_j|^2`.
pub fn energy(u: &ControlGrid, quadrature: Quadrature) -> f64 {
    let w = quadrature.weights(u.nodes(), u.spacing());
    u.values
        .row_iter()
        .zip(&w)
        .map(|(r, wj)| wj * r.norm_squared())
        .sum()
}

/// Weighted `L^2` norm of a control.
pub fn l2_norm(u: &ControlGrid, quadrature: Quadrature) -> f64 {
    energy(u, quadrature).sqrt()
}

pub(crate) fn serialize_matrix<S: Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureInfo {
    pub rule: Quadrature,
    pub nodes: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramianReport {
    pub label: String,
    pub which: Option<u8>,
    #[serde(serialize_with = "serialize_matrix")]
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Smallest eigenvalue above the rank cut.
    pub lambda_min_nonzero: Option<f64>,
    pub rank: usize,
    pub quadrature: QuadratureInfo,
    /// Smallest `C` with `lambda_min >= 1 / C`, when positive definite.
    pub coercive_for: Option<f64>,
    #[serde(skip)]
    eigen: Option<SymEigen>,
}

impl GramianReport {
    pub fn from_matrix(
        label: &str,
        which: Option<u8>,
        matrix: DMatrix<f64>,
        quadrature: QuadratureInfo,
    ) -> Self {
        let eig = sym_eigen(&matrix);
        let lmax = eig.max();
        let cut = RANK_TOL * lmax.max(0.0);
        let nonzero: Vec<f64> = eig
            .values
            .iter()
            .copied()
            .filter(|&l| l > cut && l > 0.0)
            .collect();
        let lmin = eig.min();
        Self {
            label: label.to_string(),
            which,
            matrix,
            eigenvalues: eig.values.clone(),
            lambda_min: lmin,
            lambda_max: lmax,
            lambda_min_nonzero: nonzero.first().copied(),
            rank: nonzero.len(),
            quadrature,
            coercive_for: (lmin > cut && lmin > 0.0).then(|| 1.0 / lmin),
            eigen: Some(eig),
        }
    }

    pub fn is_invertible(&self) -> bool {
        self.coercive_for.is_some()
    }

    fn eigen(&self) -> SymEigen {
        self.eigen
            .clone()
            .unwrap_or_else(|| sym_eigen(&self.matrix))
    }

    /// `N^+ y` with the rank cut applied.
    pub fn pinv_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        self.eigen().pinv_apply(y, RANK_TOL)
    }

    /// `N^{-1}`, failing when the matrix is numerically singular.
    pub fn solve_matrix(&self) -> Result<DMatrix<f64>> {
        if !self.is_invertible() {
            return Err(Error::SingularGramian {
                lambda_min: self.lambda_min,
                lambda_max: self.lambda_max,
            });
        }
        Ok(self.eigen().inverse())
    }

    /// `N^{-1} y`, failing when the matrix is numerically singular.
    pub fn solve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.is_invertible() {
            return Err(Error::SingularGramian {
                lambda_min: self.lambda_min,
                lambda_max: self.lambda_max,
            });
        }
        Ok(self.eigen().pinv_apply(y, 0.0))
    }
}

/// Everything needed to apply `L`, `L*` and the synthesis map at one
/// control.
#[derive(Debug, Clone)]
pub struct OperatorData {
    pub anchor: Anchor,
    pub tau: f64,
    pub step: f64,
    pub quadrature: Quadrature,
    pub trajectory: Trajectory,
    pub jacobians: FlowJacobianSet,
    pub input_matrices: Vec<DMatrix<f64>>,
    pub factors: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
    layout: ControlGrid,
}

impl OperatorData {
    pub fn layout(&self) -> &ControlGrid {
        &self.layout
    }

    /// `d x kM` matrix of `L` acting on stacked node values.
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.factors[0].nrows();
        let k = self.factors[0].ncols();
        let m = self.factors.len();
        let mut out = DMatrix::zeros(d, k * m);
        for (j, kj) in self.factors.iter().enumerate() {
            out.view_mut((0, j * k), (d, k))
                .copy_from(&(kj * self.weights[j]));
        }
        out
    }

    pub fn gramian_matrix(&self) -> DMatrix<f64> {
        let d = self.factors[0].nrows();
        let mut n = DMatrix::zeros(d, d);
        for (kj, wj) in self.factors.iter().zip(&self.weights) {
            n += (kj * kj.transpose()) * *wj;
        }
        n
    }

    pub fn gramian(&self) -> GramianReport {
        let label = format!("N{}", self.anchor.which());
        GramianReport::from_matrix(
            &label,
            Some(self.anchor.which()),
            self.gramian_matrix(),
            QuadratureInfo {
                rule: self.quadrature,
                nodes: self.factors.len(),
                step: self.step,
            },
        )
    }
}

/// Trajectory, per-node flow Jacobians and factors at control `u`.
pub fn assemble_operator<S: ControlSystem + ?Sized>(
    sys: &S,
    u: &ControlGrid,
    x0: &DVector<f64>,
    anchor: Anchor,
    disc: &Discretization,
) -> Result<OperatorData> {
    check_system_grid(sys, u)?;
    let step = aligned_step(u.spacing(), disc.step);
    let trajectory = integrate_controlled(sys, u, x0, step)?;
    let tau = anchor.tau(u.t0, u.t1);
    let jacobians = jacobians_along(sys, &trajectory, tau, step)?;
    let input_matrices = trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(&t, x)| sys.input_matrix(t, x.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let factors = jacobians
        .jacobians
        .iter()
        .zip(&input_matrices)
        .map(|(j, b)| j * b)
        .collect();
    Ok(OperatorData {
        anchor,
        tau,
        step,
        quadrature: disc.quadrature,
        trajectory,
        jacobians,
        input_matrices,
        factors,
        weights: disc.quadrature.weights(u.nodes(), u.spacing()),
        layout: ControlGrid::zeros(u.t0, u.t1, u.nodes(), u.inputs()),
    })
}

/// `N_i(u)` together with the operator data it was built from.
pub fn assemble_gramian<S: ControlSystem + ?Sized>(
    sys: &S,
    u: &ControlGrid,
    x0: &DVector<f64>,
    anchor: Anchor,
    disc: &Discretization,
) -> Result<(GramianReport, OperatorData)> {
    let op = assemble_operator(sys, u, x0, anchor, disc)?;
    Ok((op.gramian(), op))
}

/// `W_i(T) = N_i(0)`.
pub fn zero_reference_gramian<S: ControlSystem + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    anchor: Anchor,
    disc: &Discretization,
) -> Result<(GramianReport, OperatorData)> {
    let (mut rep, op) = assemble_gramian(sys, &disc.zero_control(sys), x0, anchor, disc)?;
    rep.label = format!("W{}", anchor.which());
    Ok((rep, op))
}

/// `W_2(T)` from the matrix ODE `W' = B B^T + DN W + W DN^T`, `W(t0) = 0`,
/// along the uncontrolled flow.
pub fn lyapunov_w2<S: ControlSystem + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>> {
    let d = sys.dimension();
    let (t0, t1) = sys.horizon();
    let mut y0 = DVector::zeros(d + d * d);
    y0.rows_mut(0, d).copy_from(x0);
    let y = rk4(
        |t, y| {
            let x = &y.as_slice()[..d];
            let w = DMatrix::from_column_slice(d, d, &y.as_slice()[d..]);
            let a = sys.drift_jacobian(t, x)?;
            let b = sys.input_matrix(t, x)?;
            let dw = &b * b.transpose() + &a * &w + &w * a.transpose();
            let mut out = DVector::zeros(d + d * d);
            out.rows_mut(0, d).copy_from(&sys.drift(t, x)?);
            out.rows_mut(d, d * d).copy_from_slice(dw.as_slice());
            Ok(out)
        },
        t0,
        t1,
        y0,
        substeps(t1 - t0, step),
    )?;
    Ok(DMatrix::from_column_slice(d, d, &y.as_slice()[d..]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CongruenceReport {
    #[serde(serialize_with = "serialize_matrix")]
    pub w1: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub w2: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub transport: DMatrix<f64>,
    /// `|W2 - S W1 S^T| / |W2|` in the Frobenius norm.
    pub residual: f64,
}

/// Check `W_2 = S W_1 S^T` with `S = D Phi_{t0,T}(x0)`.
pub fn congruence_check<S: ControlSystem + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    disc: &Discretization,
) -> Result<CongruenceReport> {
    let (w1, _) = zero_reference_gramian(sys, x0, Anchor::Initial, disc)?;
    let (w2, op) = zero_reference_gramian(sys, x0, Anchor::Final, disc)?;
    let (t0, t1) = sys.horizon();
    let (_, s) = flow_jacobian(sys, t0, t1, x0, op.step)?;
    let pushed = &s * &w1.matrix * s.transpose();
    let residual = (&w2.matrix - &pushed).norm() / w2.matrix.norm().max(f64::MIN_POSITIVE);
    Ok(CongruenceReport {
        w1: w1.matrix,
        w2: w2.matrix,
        transport: s,
        residual,
    })
}

pub fn apply_l(op: &OperatorData, v: &ControlGrid) -> Result<DVector<f64>> {
    op.layout.check_layout(v)?;
    let d = op.factors[0].nrows();
    let mut out = DVector::zeros(d);
    for (j, (kj, wj)) in op.factors.iter().zip(&op.weights).enumerate() {
        out += kj * v.node(j) * *wj;
    }
    Ok(out)
}

pub fn apply_l_adjoint(op: &OperatorData, y: &DVector<f64>) -> Result<ControlGrid> {
    let d = op.factors[0].nrows();
    if y.len() != d {
        return Err(Error::GridMismatch(format!(
            "vector of length {} for dimension {d}",
            y.len()
        )));
    }
    let mut v = op.layout.clone();
    for (j, kj) in op.factors.iter().enumerate() {
        v.values.set_row(j, &(kj.transpose() * y).transpose());
    }
    Ok(v)
}

/// Minimum-norm solution of `L v = y`: `v = L* N^+ y`.
pub fn min_norm_control(
    op: &OperatorData,
    gramian: &GramianReport,
    y: &DVector<f64>,
) -> Result<ControlGrid> {
    let v = apply_l_adjoint(op, &gramian.pinv_apply(y))?;
    let residual = (apply_l(op, &v)? - y).norm();
    if residual > 1e-6 * (1.0 + y.norm()) {
        return Err(Error::NotInRange { residual });
    }
    Ok(v)
}

/// Gramian of the linearization about `x_u`: `int R_u(T,t) B B^T R_u(T,t)^T dt`.
pub fn hcm_gramian<S: ControlSystem + ?Sized>(
    sys: &S,
    u: &ControlGrid,
    x0: &DVector<f64>,
    disc: &Discretization,
) -> Result<GramianReport> {
    check_system_grid(sys, u)?;
    let step = aligned_step(u.spacing(), disc.step);
    let traj = integrate_controlled(sys, u, x0, step)?;
    let weights = disc.quadrature.weights(u.nodes(), u.spacing());
    let d = sys.dimension();
    let mut m = DMatrix::zeros(d, d);
    for (j, (&t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        let r = linearized_transition(sys, u, &traj, t, u.t1, step)?;
        let kj = r * sys.input_matrix(t, x.as_slice())?;
        m += (&kj * kj.transpose()) * weights[j];
    }
    Ok(GramianReport::from_matrix(
        "M",
        None,
        m,
        QuadratureInfo {
            rule: disc.quadrature,
            nodes: u.nodes(),
            step,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_weights_integrate_polynomials() {
        for m in [3usize, 4, 5, 8, 11] {
            let h = 1.0 / (m - 1) as f64;
            let w = Quadrature::Simpson.weights(m, h);
            let cubic: f64 = (0..m).map(|j| w[j] * (j as f64 * h).powi(3)).sum();
            assert!((cubic - 0.25).abs() < 1e-14, "m={m}");
        }
        let w = Quadrature::Trapezoid.weights(3, 0.5);
        assert_eq!(w, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn anchors() {
        assert_eq!(Anchor::from_which(1).unwrap(), Anchor::Initial);
        assert!(Anchor::from_which(3).is_err());
        assert_eq!(Anchor::Final.tau(0.0, 2.0), 2.0);
    }
}
