//! Fixed-point synthesis of steering controls.
//!
//! The synthesis map is `S(u)(t) = B^T D Phi_{t,tau}(x_u(t))^T N(u)^{-1} y`;
//! its fixed points steer `x0` to `x1` and satisfy the energy identity
//! `|u|^2 = y^T N(u)^{-1} y`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{
    aligned_step, control_sensitivity, flow_jacobian, flow_second, integrate_controlled,
    integrate_flow, ControlGrid, Trajectory,
};
use crate::gramian::{
    apply_l_adjoint, assemble_operator, energy, Anchor, Discretization, GramianReport,
    OperatorData, RANK_TOL,
};
use crate::model::{ControlSystem, ModelBounds};

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub x0: DVector<f64>,
    pub x1: DVector<f64>,
    pub anchor: Anchor,
}

impl TargetSpec {
    pub fn new(x0: DVector<f64>, x1: DVector<f64>, anchor: Anchor) -> Self {
        Self { x0, x1, anchor }
    }
}

/// `y1 = Phi_{T,t0}(x1) - x0` or `y2 = x1 - Phi_{t0,T}(x0)`.
pub fn target_displacement<S: ControlSystem + ?Sized>(
    sys: &S,
    spec: &TargetSpec,
    step: f64,
) -> Result<DVector<f64>> {
    let d = sys.dimension();
    if spec.x0.len() != d || spec.x1.len() != d {
        return Err(Error::InconsistentDimensions(format!(
            "states must have length {d}"
        )));
    }
    let (t0, t1) = sys.horizon();
    Ok(match spec.anchor {
        Anchor::Initial => integrate_flow(sys, t1, t0, &spec.x1, step)? - &spec.x0,
        Anchor::Final => &spec.x1 - integrate_flow(sys, t0, t1, &spec.x0, step)?,
    })
}

/// One application of the synthesis map.
pub fn synthesis_step<S: ControlSystem + ?Sized>(
    sys: &S,
    u: &ControlGrid,
    spec: &TargetSpec,
    y: &DVector<f64>,
    disc: &Discretization,
) -> Result<(ControlGrid, OperatorData, GramianReport)> {
    let op = assemble_operator(sys, u, &spec.x0, spec.anchor, disc)?;
    let g = op.gramian();
    if !(g.lambda_min > RANK_TOL * g.lambda_max && g.lambda_min > 0.0) {
        return Err(Error::SingularGramian {
            lambda_min: g.lambda_min,
            lambda_max: g.lambda_max,
        });
    }
    let lam = g.solve(y)?;
    let next = apply_l_adjoint(&op, &lam)?;
    Ok((next, op, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub max_iter: usize,
    /// Stop once successive iterates differ by at most this in sup norm.
    pub tol_fp: f64,
    /// Defaults to `1e-6 (1 + |x1|)`.
    pub tol_endpoint: Option<f64>,
    /// Defaults to the minimum-norm control at the zero reference.
    pub u_init: Option<ControlGrid>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_fp: 1e-10,
            tol_endpoint: None,
            u_init: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisResult {
    pub which: u8,
    #[serde(skip)]
    pub control: ControlGrid,
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub displacement: Vec<f64>,
    pub iterations: usize,
    pub deltas: Vec<f64>,
    pub endpoint: Vec<f64>,
    pub endpoint_residual: f64,
    pub energy: f64,
    /// `|energy - y^T N^{-1} y| / (y^T N^{-1} y)`.
    pub energy_identity_residual: f64,
    pub gramian: GramianReport,
    pub converged: bool,
}

/// Picard iteration `u <- S(u)`.
pub fn picard_synthesize<S: ControlSystem + ?Sized>(
    sys: &S,
    spec: &TargetSpec,
    disc: &Discretization,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    disc.validate()?;
    let zero = disc.zero_control(sys);
    let y = target_displacement(sys, spec, aligned_step(zero.spacing(), disc.step))?;
    let mut u = match &opts.u_init {
        Some(u0) => {
            zero.check_layout(u0)?;
            u0.clone()
        }
        None => synthesis_step(sys, &zero, spec, &y, disc)?.0,
    };
    let mut deltas = Vec::new();
    let mut settled = false;
    for _ in 0..opts.max_iter {
        let (next, _, _) = synthesis_step(sys, &u, spec, &y, disc)?;
        let delta = next.sub(&u).sup_norm();
        deltas.push(delta);
        u = next;
        if delta <= opts.tol_fp {
            settled = true;
            break;
        }
    }
    if !settled {
        return Err(Error::MaxIterations {
            iterations: deltas.len(),
            last_delta: deltas.last().copied().unwrap_or(f64::NAN),
            deltas,
        });
    }
    let op = assemble_operator(sys, &u, &spec.x0, spec.anchor, disc)?;
    let gramian = op.gramian();
    let endpoint = op.trajectory.endpoint().clone();
    let endpoint_residual = (&endpoint - &spec.x1).norm();
    let e = energy(&u, disc.quadrature);
    let predicted = y.dot(&gramian.solve(&y)?);
    let energy_identity_residual = (e - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE);
    let tol_endpoint = opts.tol_endpoint.unwrap_or(1e-6 * (1.0 + spec.x1.norm()));
    Ok(SynthesisResult {
        which: spec.anchor.which(),
        control: u,
        trajectory: op.trajectory,
        displacement: y.iter().copied().collect(),
        iterations: deltas.len(),
        deltas,
        endpoint: endpoint.iter().copied().collect(),
        endpoint_residual,
        energy: e,
        energy_identity_residual,
        gramian,
        converged: endpoint_residual <= tol_endpoint,
    })
}

/// `x_u(T)`.
pub fn endpoint<S: ControlSystem + ?Sized>(
    sys: &S,
    u: &ControlGrid,
    x0: &DVector<f64>,
    step: f64,
) -> Result<DVector<f64>> {
    Ok(
        integrate_controlled(sys, u, x0, aligned_step(u.spacing(), step))?
            .endpoint()
            .clone(),
    )
}

/// `(e^{a s} - 1) / a`, continuous at `a = 0`.
pub(crate) fn exp_ratio(a: f64, s: f64) -> f64 {
    if (a * s).abs() < 1e-8 {
        s * (1.0 + 0.5 * a * s)
    } else {
        (a * s).exp_m1() / a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionEstimate {
    pub e0: f64,
    pub e1: f64,
    /// `Lambda2 * E2 / Lambda1`, continuous at `Lambda1 = 0`.
    pub lambda2_e2_over_lambda1: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub k: f64,
    /// `K^m / m!` for `m = 1..=5`.
    pub rho: Vec<f64>,
}

/// Constants of the Volterra-type estimate
/// `|S^m(u) - S^m(v)| <= K^m / m! |u - v|` on the feasibility ball.
pub fn contraction_constant(
    bounds: &ModelBounds,
    dt: f64,
    c: f64,
    y_norm: f64,
    zeta: f64,
) -> ContractionEstimate {
    let (l1, l2, lb, b) = (bounds.lambda1, bounds.lambda2, bounds.l_b, bounds.b_sup);
    let e0 = (lb * zeta * dt).exp();
    let e1 = (l1 * dt).exp();
    // sup_s (e^{2 l1 s} - e^{l1 s}) / l1 sits at s = dt for l1 >= 0
    let q = l2 * e1 * exp_ratio(l1, dt);
    let bracket = q * b + lb * e1;
    let alpha1 = 2.0 * e0 * c * c * b.powi(3) * e1 * e1 * bracket * y_norm;
    let alpha2 = e0 * c * b * e1 * bracket * y_norm;
    let k = dt * (alpha1 * dt + alpha2);
    let mut rho = Vec::with_capacity(5);
    let mut term = 1.0;
    for m in 1..=5 {
        term *= k / m as f64;
        rho.push(term);
    }
    ContractionEstimate {
        e0,
        e1,
        lambda2_e2_over_lambda1: q,
        alpha1,
        alpha2,
        k,
        rho,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignmentOptions {
    /// Defaults to `1e-5 (1 + |y|)`.
    pub tolerance: Option<f64>,
    /// Defaults to `1e-5 (1 + |u|_inf)`.
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub rank: usize,
    pub kernel_dimension: usize,
    /// `max |K h|` over an orthonormal basis of `ker L`.
    pub k_on_kernel: f64,
    /// `max |<N^{-1} y, (I + K L* N^{-1})^{-1} K h>|` over the same basis.
    pub orthogonality_residual: f64,
    pub fixed_point_residual: f64,
    pub tolerance: f64,
    pub fd_step: f64,
    pub passed: bool,
}

fn unit_control(layout: &ControlGrid, node: usize, input: usize, scale: f64) -> ControlGrid {
    let mut h = layout.clone();
    h.values.fill(0.0);
    h.values[(node, input)] = scale;
    h
}

/// The nonlinear remainder `K = DG - L` of the discretized operator as a
/// `d x kM` matrix acting on stacked node values, by central finite
/// differences: state differences of each factor `K_j` and control
/// differences of the trajectory, joined by the chain rule.
pub fn remainder_fd<S: ControlSystem + ?Sized>(
    sys: &S,
    op: &OperatorData,
    u: &ControlGrid,
    x0: &DVector<f64>,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    let d = sys.dimension();
    let k = sys.inputs();
    let m = u.nodes();
    let step = op.step;
    let factor = |t: f64, x: &DVector<f64>| -> Result<DMatrix<f64>> {
        let (_, j) = flow_jacobian(sys, t, op.tau, x, step)?;
        Ok(j * sys.input_matrix(t, x.as_slice())?)
    };
    // P_j delta = D_x [K_j(x)] [delta] u_j
    let mut p = Vec::with_capacity(m);
    for (j, (&t, x)) in op
        .trajectory
        .times
        .iter()
        .zip(&op.trajectory.states)
        .enumerate()
    {
        let uj = u.node(j);
        let mut pj = DMatrix::zeros(d, d);
        if uj.iter().any(|&v| v != 0.0) {
            let eps = 1e-5 * (1.0 + x.norm());
            for c in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += eps;
                xm[c] -= eps;
                let col = (factor(t, &xp)? - factor(t, &xm)?) * &uj / (2.0 * eps);
                pj.set_column(c, &col);
            }
        }
        p.push(pj);
    }
    let mut out = DMatrix::zeros(d, k * m);
    for l in 0..m {
        for i in 0..k {
            let h = unit_control(u, l, i, fd_step);
            let plus = integrate_controlled(sys, &add(u, &h, 1.0), x0, step)?;
            let minus = integrate_controlled(sys, &add(u, &h, -1.0), x0, step)?;
            let mut col = DVector::zeros(d);
            for (j, pj) in p.iter().enumerate().skip(1) {
                let dx = (&plus.states[j] - &minus.states[j]) / (2.0 * fd_step);
                col += pj * dx * op.weights[j];
            }
            out.set_column(l * k + i, &col);
        }
    }
    Ok(out)
}

/// Same remainder from the linearized equations: second variational
/// equation for `D^2 Phi` and the linearized controlled equation for the
/// state response.
pub fn remainder_linearized<S: ControlSystem + ?Sized>(
    sys: &S,
    op: &OperatorData,
    u: &ControlGrid,
    x0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let d = sys.dimension();
    let k = sys.inputs();
    let m = u.nodes();
    let step = op.step;
    let mut p = Vec::with_capacity(m);
    for (j, (&t, x)) in op
        .trajectory
        .times
        .iter()
        .zip(&op.trajectory.states)
        .enumerate()
    {
        let uj = u.node(j);
        let b = &op.input_matrices[j] * &uj;
        let (jac, z) = flow_second(sys, t, op.tau, x, &b, step)?;
        let mut pj = z;
        if sys.input_depends_on_state() {
            let mut e = vec![0.0; d];
            for c in 0..d {
                e[c] = 1.0;
                let extra = &jac * (sys.input_derivative(t, x.as_slice(), &e)? * &uj);
                pj.set_column(c, &(pj.column(c) + extra));
                e[c] = 0.0;
            }
        }
        p.push(pj);
    }
    let mut out = DMatrix::zeros(d, k * m);
    for l in 0..m {
        for i in 0..k {
            let h = unit_control(u, l, i, 1.0);
            let dx = control_sensitivity(sys, u, &h, x0, step)?;
            let mut col = DVector::zeros(d);
            for j in 1..m {
                col += &p[j] * &dx[j] * op.weights[j];
            }
            out.set_column(l * k + i, &col);
        }
    }
    Ok(out)
}

fn add(u: &ControlGrid, h: &ControlGrid, s: f64) -> ControlGrid {
    ControlGrid {
        t0: u.t0,
        t1: u.t1,
        values: &u.values + &h.values * s,
    }
}

/// Scale stacked node columns by `1/sqrt(w_j)`, mapping node coordinates to
/// an orthonormal frame of the weighted inner product.
pub fn to_weighted_frame(m: &DMatrix<f64>, weights: &[f64], inputs: usize) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, w) in weights.iter().enumerate() {
        for i in 0..inputs {
            let c = j * inputs + i;
            out.set_column(c, &(out.column(c) / w.sqrt()));
        }
    }
    out
}

/// Orthonormal basis of `ker L` in the weighted frame, with the rank of `L`.
pub fn kernel_basis(op: &OperatorData) -> (usize, DMatrix<f64>) {
    let k = op.factors[0].ncols();
    let lt = to_weighted_frame(&op.matrix(), &op.weights, k).transpose();
    let svd = lt.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let u = svd.u.expect("left singular vectors");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-6 * smax && svd.singular_values[i] > 0.0)
        .collect();
    let range = DMatrix::from_fn(lt.nrows(), keep.len(), |r, c| u[(r, keep[c])]);
    (keep.len(), orthogonal_complement(&range))
}

/// Householder completion of orthonormal columns to a basis of the
/// complement.
fn orthogonal_complement(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let r = a.ncols();
    let mut a = a.clone();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(r);
    for c in 0..r {
        let x = a.view((c, c), (n - c, 1)).into_owned();
        let alpha = x.norm();
        let mut v = DVector::zeros(n);
        v.rows_mut(c, n - c).copy_from(&x.column(0));
        v[c] += if x[0] >= 0.0 { alpha } else { -alpha };
        let vn = v.norm();
        if vn > 0.0 {
            v /= vn;
        }
        let proj = v.transpose() * &a;
        a -= &v * proj * 2.0;
        reflectors.push(v);
    }
    let mut q = DMatrix::zeros(n, n - r);
    for i in 0..n - r {
        q[(r + i, i)] = 1.0;
    }
    for v in reflectors.iter().rev() {
        let proj = v.transpose() * &q;
        q -= v * proj * 2.0;
    }
    q
}

/// Test whether a fixed point `u` satisfies the kernel alignment
/// `K(ker L) = 0` and the weaker orthogonality condition.
pub fn alignment_check<S: ControlSystem + ?Sized>(
    sys: &S,
    u: &ControlGrid,
    spec: &TargetSpec,
    disc: &Discretization,
    opts: &AlignmentOptions,
) -> Result<AlignmentReport> {
    let op = assemble_operator(sys, u, &spec.x0, spec.anchor, disc)?;
    let y = target_displacement(sys, spec, op.step)?;
    let g = op.gramian();
    let lam = g.solve(&y)?;
    let s_u = apply_l_adjoint(&op, &lam)?;
    let fixed_point_residual = s_u.sub(u).sup_norm();
    if fixed_point_residual > 1e-7 * (1.0 + u.sup_norm()) {
        return Err(Error::NotConverged(format!(
            "control is not a fixed point of the synthesis map (|S(u) - u| = {fixed_point_residual:.3e})"
        )));
    }
    let fd_step = opts.fd_step.unwrap_or(1e-5 * (1.0 + u.sup_norm()));
    let tolerance = opts.tolerance.unwrap_or(1e-5 * (1.0 + y.norm()));
    let k = sys.inputs();
    let d = sys.dimension();
    let kmat = remainder_fd(sys, &op, u, &spec.x0, fd_step)?;
    let (rank, basis) = kernel_basis(&op);
    let kw = to_weighted_frame(&kmat, &op.weights, k);
    let k_basis = &kw * &basis;
    let k_on_kernel = k_basis.column_iter().map(|c| c.norm()).fold(0.0, f64::max);

    // A = K L* N^{-1}
    let ninv = g.solve_matrix()?;
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let r = apply_l_adjoint(&op, &ninv.column(i).into_owned())?;
        a.set_column(i, &(&kmat * stack(&r)));
    }
    let orthogonality_residual = match (DMatrix::identity(d, d) + a).try_inverse() {
        Some(inv) => (lam.transpose() * inv * &k_basis).abs().max(),
        None => f64::INFINITY,
    };
    let orthogonality_residual = if k_basis.ncols() == 0 {
        0.0
    } else {
        orthogonality_residual
    };
    Ok(AlignmentReport {
        rank,
        kernel_dimension: basis.ncols(),
        k_on_kernel,
        orthogonality_residual,
        fixed_point_residual,
        tolerance,
        fd_step,
        passed: k_on_kernel <= tolerance && orthogonality_residual <= tolerance,
    })
}

/// Stack node values row by row into one vector of length `kM`.
pub fn stack(u: &ControlGrid) -> DVector<f64> {
    DVector::from_iterator(
        u.values.len(),
        (0..u.nodes()).flat_map(|j| u.values.row(j).iter().copied().collect::<Vec<_>>()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_ratio_limit() {
        assert!((exp_ratio(0.0, 2.0) - 2.0).abs() < 1e-15);
        assert!((exp_ratio(1.0, 1.0) - (1f64.exp() - 1.0)).abs() < 1e-15);
        assert!((exp_ratio(1e-10, 1.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn complement_is_orthonormal() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0 / 3f64.sqrt(); 3]);
        let q = orthogonal_complement(&a);
        assert_eq!(q.ncols(), 2);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).norm() < 1e-14);
        assert!((a.transpose() * &q).norm() < 1e-14);
    }

    #[test]
    fn linear_case_has_zero_constant() {
        let b = ModelBounds {
            lambda1: 1.0,
            lambda2: 0.0,
            l_b: 0.0,
            b_sup: 1.0,
            a_sup: None,
        };
        let c = contraction_constant(&b, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(c.k, 0.0);
    }
}
