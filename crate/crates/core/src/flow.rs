//! Flows, flow Jacobians and controlled trajectories by classical RK4.
//!
//! Every integration uses uniform substeps no longer than the requested
//! step. Controlled integrations nest their substeps inside control
//! intervals so the piecewise-linear control is smooth on every step.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ControlSystem;

/// Piecewise-linear control on `M` uniform nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    pub t0: f64,
    pub t1: f64,
    /// `M x k`, one row per node.
    pub values: DMatrix<f64>,
}

impl ControlGrid {
    pub fn new(t0: f64, t1: f64, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::Schema(
                "a control grid needs at least two nodes".into(),
            ));
        }
        if !(t1 > t0) {
            return Err(Error::Schema(
                "control grid horizon must be increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control grid value".into()));
        }
        Ok(Self { t0, t1, values })
    }

    pub fn zeros(t0: f64, t1: f64, nodes: usize, inputs: usize) -> Self {
        Self {
            t0,
            t1,
            values: DMatrix::zeros(nodes.max(2), inputs),
        }
    }

    pub fn from_fn(
        t0: f64,
        t1: f64,
        nodes: usize,
        inputs: usize,
        mut f: impl FnMut(f64) -> DVector<f64>,
    ) -> Self {
        let mut g = Self::zeros(t0, t1, nodes, inputs);
        for j in 0..g.nodes() {
            let v = f(g.time(j));
            g.values.set_row(j, &v.transpose());
        }
        g
    }

    pub fn nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.values.ncols()
    }

    pub fn spacing(&self) -> f64 {
        (self.t1 - self.t0) / (self.nodes() - 1) as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        if j + 1 == self.nodes() {
            self.t1
        } else {
            self.t0 + j as f64 * self.spacing()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nodes()).map(|j| self.time(j)).collect()
    }

    pub fn node(&self, j: usize) -> DVector<f64> {
        self.values.row(j).transpose()
    }

    /// Interval index containing `t`, clamped to the grid.
    fn interval(&self, t: f64) -> usize {
        let s = ((t - self.t0) / self.spacing()).floor();
        (s.max(0.0) as usize).min(self.nodes() - 2)
    }

    /// Linear interpolation on interval `j`.
    fn eval_on(&self, j: usize, t: f64) -> DVector<f64> {
        let ta = self.time(j);
        let tb = self.time(j + 1);
        let s = (t - ta) / (tb - ta);
        self.values.row(j).transpose() * (1.0 - s) + self.values.row(j + 1).transpose() * s
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        self.eval_on(self.interval(t), t)
    }

    /// Maximum over nodes of the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        crate::linalg::max_row_norm(&self.values)
    }

    pub fn same_layout(&self, other: &ControlGrid) -> bool {
        self.nodes() == other.nodes()
            && self.inputs() == other.inputs()
            && self.t0 == other.t0
            && self.t1 == other.t1
    }

    pub fn check_layout(&self, other: &ControlGrid) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{} nodes x {} inputs on [{}, {}] vs {} x {} on [{}, {}]",
                self.nodes(),
                self.inputs(),
                self.t0,
                self.t1,
                other.nodes(),
                other.inputs(),
                other.t0,
                other.t1
            )))
        }
    }

    pub fn sub(&self, other: &ControlGrid) -> ControlGrid {
        ControlGrid {
            t0: self.t0,
            t1: self.t1,
            values: &self.values - &other.values,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.inputs()).map(|i| format!("u{i}")).collect();
        let rows =
            (0..self.nodes()).map(|j| (self.time(j), self.values.row(j).iter().copied().collect()));
        write_table(w, &header, rows)
    }

    /// Read a control written by [`ControlGrid::write_csv`]; node times must
    /// match a uniform grid on `[t0, t1]`.
    pub fn read_csv<R: BufRead>(r: R, t0: f64, t1: f64, inputs: usize) -> Result<Self> {
        let rows = read_table(r, "u", inputs)?;
        let m = rows.len();
        if m < 2 {
            return Err(Error::Schema("control csv needs at least two rows".into()));
        }
        let grid = ControlGrid::zeros(t0, t1, m, inputs);
        let tol = 1e-9 * (1.0 + t0.abs().max(t1.abs()));
        let mut values = DMatrix::zeros(m, inputs);
        for (j, (t, v)) in rows.into_iter().enumerate() {
            if (t - grid.time(j)).abs() > tol {
                return Err(Error::Schema(format!(
                    "csv row {}: time {t} is not node {} of a uniform grid on [{t0}, {t1}]",
                    j + 1,
                    grid.time(j)
                )));
            }
            for (c, x) in v.into_iter().enumerate() {
                values[(j, c)] = x;
            }
        }
        ControlGrid::new(t0, t1, values)
    }
}

/// States at the nodes of a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &DVector<f64> {
        self.states.last().expect("empty trajectory")
    }

    /// Piecewise-linear interpolation between nodes, clamped at the ends.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let h = (self.times[n - 1] - self.times[0]) / (n - 1) as f64;
        let j = (((t - self.times[0]) / h).floor() as usize).min(n - 2);
        let s = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        &self.states[j] * (1.0 - s) + &self.states[j + 1] * s
    }

    /// Maximum node-wise Euclidean distance.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.states.first().map_or(0, |s| s.len());
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        let rows = self
            .times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| (t, s.iter().copied().collect()));
        write_table(w, &header, rows)
    }
}

fn write_table<W: Write>(
    w: W,
    header: &[String],
    rows: impl Iterator<Item = (f64, Vec<f64>)>,
) -> Result<()> {
    let io = |e: csv::Error| Error::Schema(format!("csv write: {e}"));
    let mut wr = csv::Writer::from_writer(w);
    let mut h = vec!["t".to_string()];
    h.extend(header.iter().cloned());
    wr.write_record(&h).map_err(io)?;
    for (t, v) in rows {
        let mut rec = vec![format!("{t:.16e}")];
        rec.extend(v.iter().map(|x| format!("{x:.16e}")));
        wr.write_record(&rec).map_err(io)?;
    }
    wr.flush()
        .map_err(|e| Error::Schema(format!("csv write: {e}")))
}

fn read_table<R: BufRead>(r: R, prefix: &str, width: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = rd
        .headers()
        .map_err(|e| Error::Schema(format!("csv header: {e}")))?
        .clone();
    let mut want = vec!["t".to_string()];
    want.extend((1..=width).map(|i| format!("{prefix}{i}")));
    if header.iter().collect::<Vec<_>>() != want.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Schema(format!(
            "csv header must be `{}`",
            want.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Schema(format!("csv row {row}: {e}")))?;
        if rec.len() != width + 1 {
            return Err(Error::Schema(format!(
                "csv row {row}: expected {} fields, found {}",
                width + 1,
                rec.len()
            )));
        }
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Schema(format!("csv row {row}: malformed number")))?;
        out.push((vals[0], vals[1..].to_vec()));
    }
    Ok(out)
}

/// Number of uniform substeps covering `span` with steps of at most `step`.
pub fn substeps(span: f64, step: f64) -> usize {
    if span == 0.0 {
        0
    } else {
        ((span.abs() / step) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

/// Step that divides each control interval evenly and does not exceed
/// `step`; integrations between nodes then land on node times.
pub fn aligned_step(spacing: f64, step: f64) -> f64 {
    spacing / substeps(spacing, step) as f64
}

/// Classical RK4 with `n` uniform steps from `ta` to `tb`.
pub(crate) fn rk4<F>(
    mut f: F,
    ta: f64,
    tb: f64,
    mut y: DVector<f64>,
    n: usize,
) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    if n == 0 {
        return Ok(y);
    }
    let h = (tb - ta) / n as f64;
    for s in 0..n {
        let t = ta + s as f64 * h;
        let k1 = f(t, &y)?;
        let k2 = f(t + 0.5 * h, &(&y + &k1 * (0.5 * h)))?;
        let k3 = f(t + 0.5 * h, &(&y + &k2 * (0.5 * h)))?;
        let k4 = f(t + h, &(&y + &k3 * h))?;
        y += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "state diverged integrating to t={tb}"
        )));
    }
    Ok(y)
}

/// `Phi_{ta,tb}(xa)` for the uncontrolled drift; `tb < ta` integrates
/// backward.
pub fn integrate_flow<S: ControlSystem + ?Sized>(
    sys: &S,
    ta: f64,
    tb: f64,
    xa: &DVector<f64>,
    step: f64,
) -> Result<DVector<f64>> {
    rk4(
        |t, x| sys.drift(t, x.as_slice()),
        ta,
        tb,
        xa.clone(),
        substeps(tb - ta, step),
    )
}

fn pack(x: &DVector<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    let d = x.len();
    let mut y = DVector::zeros(d + m.len());
    y.rows_mut(0, d).copy_from(x);
    y.rows_mut(d, m.len()).copy_from_slice(m.as_slice());
    y
}

fn unpack(y: &DVector<f64>, d: usize, cols: usize) -> (DVector<f64>, DMatrix<f64>) {
    let x = y.rows(0, d).into_owned();
    let m = DMatrix::from_column_slice(d, cols, &y.as_slice()[d..d + d * cols]);
    (x, m)
}

/// Flow endpoint and Jacobian `D Phi_{ta,tb}(xa)` from the variational
/// equation `J' = DN J`, integrated alongside the state.
pub fn flow_jacobian<S: ControlSystem + ?Sized>(
    sys: &S,
    ta: f64,
    tb: f64,
    xa: &DVector<f64>,
    step: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = xa.len();
    let y0 = pack(xa, &DMatrix::identity(d, d));
    let y = rk4(
        |t, y| {
            let (x, j) = unpack(y, d, d);
            let f = sys.drift(t, x.as_slice())?;
            let a = sys.drift_jacobian(t, x.as_slice())?;
            Ok(pack(&f, &(a * j)))
        },
        ta,
        tb,
        y0,
        substeps(tb - ta, step),
    )?;
    Ok(unpack(&y, d, d))
}

/// `D Phi_{ta,tb}(xa)` together with `Z` where `Z h = D^2 Phi_{ta,tb}(xa)[h, b]`.
pub fn flow_second<S: ControlSystem + ?Sized>(
    sys: &S,
    ta: f64,
    tb: f64,
    xa: &DVector<f64>,
    b: &DVector<f64>,
    step: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = xa.len();
    // layout: x | J (d x d) | q = J b | Z (d x d)
    let mut y0 = DVector::zeros(d + d * d + d + d * d);
    y0.rows_mut(0, d).copy_from(xa);
    for i in 0..d {
        y0[d + i * d + i] = 1.0;
    }
    y0.rows_mut(d + d * d, d).copy_from(b);
    let y = rk4(
        |t, y| {
            let s = y.as_slice();
            let x = &s[..d];
            let j = DMatrix::from_column_slice(d, d, &s[d..d + d * d]);
            let q = DVector::from_column_slice(&s[d + d * d..2 * d + d * d]);
            let z = DMatrix::from_column_slice(d, d, &s[2 * d + d * d..]);
            let a = sys.drift_jacobian(t, x)?;
            let mut dz = &a * z;
            for m in 0..d {
                let p = j.column(m).into_owned();
                dz.set_column(
                    m,
                    &(dz.column(m) + sys.drift_second(t, x, p.as_slice(), q.as_slice())?),
                );
            }
            let mut out = DVector::zeros(y.len());
            out.rows_mut(0, d).copy_from(&sys.drift(t, x)?);
            out.rows_mut(d, d * d).copy_from_slice((&a * &j).as_slice());
            out.rows_mut(d + d * d, d).copy_from(&(&a * &q));
            out.rows_mut(2 * d + d * d, d * d)
                .copy_from_slice(dz.as_slice());
            Ok(out)
        },
        ta,
        tb,
        y0,
        substeps(tb - ta, step),
    )?;
    let s = y.as_slice();
    Ok((
        DMatrix::from_column_slice(d, d, &s[d..d + d * d]),
        DMatrix::from_column_slice(d, d, &s[2 * d + d * d..]),
    ))
}

/// Integrate an augmented system whose first `d` entries are the controlled
/// state, splitting `[ta, tb]` at control nodes. `rhs` receives the time,
/// the augmented vector and the control value.
pub(crate) fn integrate_with_control<F>(
    u: &ControlGrid,
    ta: f64,
    tb: f64,
    y0: DVector<f64>,
    step: f64,
    mut rhs: F,
) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut y = y0;
    if ta == tb {
        return Ok(y);
    }
    let forward = tb > ta;
    let h = u.spacing();
    // node indices strictly between ta and tb, in travel order
    let mut cuts = vec![ta];
    for j in 0..u.nodes() {
        let tj = u.time(j);
        let inside = if forward {
            tj > ta && tj < tb
        } else {
            tj < ta && tj > tb
        };
        if inside && (tj - ta).abs() > 1e-12 * h && (tj - tb).abs() > 1e-12 * h {
            cuts.push(tj);
        }
    }
    if !forward {
        cuts[1..].reverse();
    }
    cuts.push(tb);
    for w in cuts.windows(2) {
        let (sa, sb) = (w[0], w[1]);
        let mid = 0.5 * (sa + sb);
        let j = u.interval(mid);
        let n = substeps(sb - sa, step);
        y = rk4(|t, y| rhs(t, y, &u.eval_on(j, t)), sa, sb, y, n)?;
    }
    Ok(y)
}

/// Controlled state `x_u` sampled at the control nodes.
pub fn integrate_controlled<S: ControlSystem + ?Sized>(
    sys: &S,
    u: &ControlGrid,
    x0: &DVector<f64>,
    step: f64,
) -> Result<Trajectory> {
    check_system_grid(sys, u)?;
    let mut states = Vec::with_capacity(u.nodes());
    let mut x = x0.clone();
    states.push(x.clone());
    for j in 0..u.nodes() - 1 {
        x = integrate_with_control(u, u.time(j), u.time(j + 1), x, step, |t, x, uv| {
            Ok(sys.drift(t, x.as_slice())? + sys.input_matrix(t, x.as_slice())? * uv)
        })?;
        states.push(x.clone());
    }
    Ok(Trajectory {
        times: u.times(),
        states,
    })
}

pub(crate) fn check_system_grid<S: ControlSystem + ?Sized>(sys: &S, u: &ControlGrid) -> Result<()> {
    let (t0, t1) = sys.horizon();
    if u.inputs() != sys.inputs() || u.t0 != t0 || u.t1 != t1 {
        return Err(Error::GridMismatch(format!(
            "control has {} inputs on [{}, {}], model has {} on [{t0}, {t1}]",
            u.inputs(),
            u.t0,
            u.t1,
            sys.inputs()
        )));
    }
    Ok(())
}

/// Flow Jacobians `D Phi_{t_j,tau}(x(t_j))` at every node of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowJacobianSet {
    pub tau: f64,
    pub jacobians: Vec<DMatrix<f64>>,
}

/// One fresh variational integration per node, from `t_j` to `tau`.
pub fn jacobians_along<S: ControlSystem + ?Sized>(
    sys: &S,
    traj: &Trajectory,
    tau: f64,
    step: f64,
) -> Result<FlowJacobianSet> {
    let jacobians = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, x)| flow_jacobian(sys, t, tau, x, step).map(|(_, j)| j))
        .collect::<Result<Vec<_>>>()?;
    Ok(FlowJacobianSet { tau, jacobians })
}

/// Coefficient `DN_t(x) + D_x B(t,x)[u, .]` of the linearized controlled
/// equation.
pub fn linearized_coefficient<S: ControlSystem + ?Sized>(
    sys: &S,
    t: f64,
    x: &[f64],
    u: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let mut a = sys.drift_jacobian(t, x)?;
    if sys.input_depends_on_state() {
        let d = x.len();
        let mut e = vec![0.0; d];
        for m in 0..d {
            e[m] = 1.0;
            let col = sys.input_derivative(t, x, &e)? * u;
            a.set_column(m, &(a.column(m) + col));
            e[m] = 0.0;
        }
    }
    Ok(a)
}

/// Transition matrix `R_u(tb, ta)` of the linearized controlled equation.
/// `ta` must be a node of `u`; `x_u(ta)` is taken from `traj`.
pub fn linearized_transition<S: ControlSystem + ?Sized>(
    sys: &S,
    u: &ControlGrid,
    traj: &Trajectory,
    ta: f64,
    tb: f64,
    step: f64,
) -> Result<DMatrix<f64>> {
    let j = traj
        .times
        .iter()
        .position(|&t| (t - ta).abs() <= 1e-12 * (1.0 + ta.abs()))
        .ok_or_else(|| Error::GridMismatch(format!("t={ta} is not a control node")))?;
    let d = sys.dimension();
    let y0 = pack(&traj.states[j], &DMatrix::identity(d, d));
    let y = integrate_with_control(u, ta, tb, y0, step, |t, y, uv| {
        let (x, r) = unpack(y, d, d);
        let xs = x.as_slice();
        let f = sys.drift(t, xs)? + sys.input_matrix(t, xs)? * uv;
        let a = linearized_coefficient(sys, t, xs, uv)?;
        Ok(pack(&f, &(a * r)))
    })?;
    Ok(unpack(&y, d, d).1)
}

/// Linearized response `delta x` at the nodes to a control perturbation `h`,
/// starting from `delta x(t0) = 0`.
pub fn control_sensitivity<S: ControlSystem + ?Sized>(
    sys: &S,
    u: &ControlGrid,
    h: &ControlGrid,
    x0: &DVector<f64>,
    step: f64,
) -> Result<Vec<DVector<f64>>> {
    u.check_layout(h)?;
    let d = sys.dimension();
    let mut y = DVector::zeros(2 * d);
    y.rows_mut(0, d).copy_from(x0);
    let mut out = vec![DVector::zeros(d)];
    for j in 0..u.nodes() - 1 {
        let (ta, tb) = (u.time(j), u.time(j + 1));
        y = integrate_with_control(u, ta, tb, y, step, |t, y, uv| {
            let x = y.rows(0, d).into_owned();
            let dx = y.rows(d, d).into_owned();
            let xs = x.as_slice();
            let b = sys.input_matrix(t, xs)?;
            let hv = h.eval_on(j, t);
            let f = sys.drift(t, xs)? + &b * uv;
            let g = linearized_coefficient(sys, t, xs, uv)? * dx + b * hv;
            let mut o = DVector::zeros(2 * d);
            o.rows_mut(0, d).copy_from(&f);
            o.rows_mut(d, d).copy_from(&g);
            Ok(o)
        })?;
        out.push(y.rows(d, d).into_owned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, BoundsConfig, Entry, ModelConfig};

    fn linear(a: &str) -> crate::model::SystemModel {
        build_model(&ModelConfig {
            dimension: 1,
            inputs: 1,
            t0: 0.0,
            t_final: 1.0,
            drift: vec![Entry::Text(a.into())],
            input_matrix: vec![vec![Entry::Number(1.0)]],
            modulation: None,
            bounds: BoundsConfig {
                lambda1: Some(1.0),
                lambda2: Some(0.0),
                ..Default::default()
            },
            hopfield: None,
            params: Default::default(),
        })
        .unwrap()
    }

    #[test]
    fn exponential_growth() {
        let m = linear("x1");
        let x = integrate_flow(&m, 0.0, 1.0, &DVector::from_element(1, 1.0), 1e-3).unwrap();
        assert!((x[0] - 1f64.exp()).abs() < 1e-8);
        let (_, j) = flow_jacobian(&m, 0.0, 1.0, &DVector::from_element(1, 1.0), 1e-3).unwrap();
        assert!((j[(0, 0)] - 1f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn constant_input() {
        let m = linear("x1");
        let u = ControlGrid::from_fn(0.0, 1.0, 11, 1, |_| DVector::from_element(1, 1.0));
        let tr = integrate_controlled(&m, &u, &DVector::zeros(1), 1e-3).unwrap();
        assert!((tr.endpoint()[0] - (1f64.exp() - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn substep_count() {
        assert_eq!(substeps(1.0, 1e-3), 1000);
        assert_eq!(substeps(-0.5, 0.3), 2);
        assert_eq!(substeps(0.0, 0.1), 0);
        assert!((aligned_step(0.01, 3e-3) - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn grid_interpolation() {
        let u = ControlGrid::from_fn(0.0, 1.0, 3, 1, |t| DVector::from_element(1, t * t));
        assert!((u.eval(0.25)[0] - 0.125).abs() < 1e-15);
        assert!((u.eval(1.0)[0] - 1.0).abs() < 1e-15);
    }
}
