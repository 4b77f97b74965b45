//! Model configuration, the built symbolic system and its bound checks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_with_params, DualValue, Expr};
use crate::linalg::spectral_norm;

/// A matrix or vector entry: either a literal number or an expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Number(f64),
    Text(String),
}

impl Entry {
    fn text(&self) -> String {
        match self {
            Entry::Number(v) => format!("{v}"),
            Entry::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub l_b: Option<f64>,
    pub b_sup: Option<f64>,
    pub a_sup: Option<f64>,
    pub b_lower: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfieldConfig {
    /// Diagonal of the positive decay matrix.
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dimension: usize,
    pub inputs: usize,
    pub t0: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default)]
    pub drift: Vec<Entry>,
    pub input_matrix: Vec<Vec<Entry>>,
    #[serde(default)]
    pub modulation: Option<Vec<Vec<Entry>>>,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub hopfield: Option<HopfieldConfig>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Declared global bounds used by certificates and contraction estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBounds {
    pub lambda1: f64,
    pub lambda2: f64,
    pub l_b: f64,
    pub b_sup: f64,
    pub a_sup: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfieldRates {
    pub gamma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub sigma_prime_sup: f64,
}

/// Rates for `N(x) = -D x + W tanh(x)` with `D` diagonal positive.
pub fn hopfield_rates(d: &[f64], w: &DMatrix<f64>) -> HopfieldRates {
    let wn = spectral_norm(w);
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // sup |tanh''| = 4 / (3 sqrt 3)
    let tanh2 = 4.0 / (3.0 * 3.0_f64.sqrt());
    HopfieldRates {
        gamma: -dmin + wn,
        gamma1: dmax + wn,
        gamma2: wn * tanh2,
        sigma_prime_sup: wn,
    }
}

/// Interface shared by the baseline model, its general (modulated) form and
/// frozen surrogates.
pub trait ControlSystem {
    fn dimension(&self) -> usize;
    fn inputs(&self) -> usize;
    fn horizon(&self) -> (f64, f64);
    fn bounds(&self) -> &ModelBounds;
    fn drift(&self, t: f64, x: &[f64]) -> Result<DVector<f64>>;
    fn drift_jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>>;
    fn drift_second(&self, t: f64, x: &[f64], h: &[f64], w: &[f64]) -> Result<DVector<f64>>;
    fn input_matrix(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>>;
    /// `D_x B(t, x)[dir]` as a `d x k` matrix.
    fn input_derivative(&self, t: f64, x: &[f64], dir: &[f64]) -> Result<DMatrix<f64>>;
    fn input_depends_on_state(&self) -> bool;
    fn hopfield(&self) -> Option<HopfieldRates> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub dimension: usize,
    pub inputs: usize,
    pub t0: f64,
    pub t_final: f64,
    drift: Vec<Expr>,
    /// Row-major `d x k`.
    input: Vec<Expr>,
    /// Row-major `d x d`.
    modulation: Option<Vec<Expr>>,
    pub bounds: ModelBounds,
    pub hopfield: Option<(Vec<f64>, DMatrix<f64>)>,
    pub b_lower: Option<Expr>,
    input_state_dependent: bool,
}

fn hopfield_drift(d: &[f64], w: &DMatrix<f64>) -> Vec<String> {
    (0..d.len())
        .map(|i| {
            let mut s = if d[i] == 1.0 {
                format!("-x{}", i + 1)
            } else {
                format!("-{}*x{}", d[i], i + 1)
            };
            for j in 0..d.len() {
                let wij = w[(i, j)];
                if wij == 0.0 {
                    continue;
                }
                let sign = if wij < 0.0 { '-' } else { '+' };
                if wij.abs() == 1.0 {
                    s.push_str(&format!(" {sign} tanh(x{})", j + 1));
                } else {
                    s.push_str(&format!(" {sign} {}*tanh(x{})", wij.abs(), j + 1));
                }
            }
            s
        })
        .collect()
}

fn constant_matrix(exprs: &[Expr], rows: usize, cols: usize) -> Option<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    for (k, e) in exprs.iter().enumerate() {
        m[(k / cols, k % cols)] = e.constant_value()?;
    }
    Some(m)
}

/// Parse and validate a model configuration.
pub fn build_model(cfg: &ModelConfig) -> Result<SystemModel> {
    let d = cfg.dimension;
    let k = cfg.inputs;
    if d == 0 || k == 0 {
        return Err(Error::Schema(
            "dimension and inputs must be positive".into(),
        ));
    }
    if !(cfg.t0.is_finite() && cfg.t_final.is_finite() && cfg.t_final > cfg.t0) {
        return Err(Error::Schema(format!(
            "horizon [{}, {}] must be finite and increasing",
            cfg.t0, cfg.t_final
        )));
    }
    let params = &cfg.params;
    for name in params.keys() {
        let reserved = name == "t"
            || name == "pi"
            || (name.starts_with('x')
                && name[1..].chars().all(|c| c.is_ascii_digit())
                && name.len() > 1);
        if reserved {
            return Err(Error::Schema(format!(
                "parameter name `{name}` is reserved"
            )));
        }
    }

    let mut hopfield = None;
    let drift_text: Vec<String> = match &cfg.hopfield {
        Some(h) => {
            if !cfg.drift.is_empty() {
                return Err(Error::Schema(
                    "give either `drift` or `hopfield`, not both".into(),
                ));
            }
            if h.d.len() != d || h.w.len() != d || h.w.iter().any(|r| r.len() != d) {
                return Err(Error::InconsistentDimensions(format!(
                    "hopfield D and W must be {d} and {d}x{d}"
                )));
            }
            if h.d.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Schema("hopfield D must be positive".into()));
            }
            let w = DMatrix::from_fn(d, d, |i, j| h.w[i][j]);
            let text = hopfield_drift(&h.d, &w);
            hopfield = Some((h.d.clone(), w));
            text
        }
        None => cfg.drift.iter().map(Entry::text).collect(),
    };
    if drift_text.len() != d {
        return Err(Error::InconsistentDimensions(format!(
            "drift has {} entries, dimension is {d}",
            drift_text.len()
        )));
    }
    let drift = drift_text
        .iter()
        .map(|s| parse_with_params(s, d, params))
        .collect::<Result<Vec<_>>>()?;

    if cfg.input_matrix.len() != d || cfg.input_matrix.iter().any(|r| r.len() != k) {
        return Err(Error::InconsistentDimensions(format!(
            "input_matrix must be {d}x{k}"
        )));
    }
    let input = cfg
        .input_matrix
        .iter()
        .flatten()
        .map(|e| parse_with_params(&e.text(), d, params))
        .collect::<Result<Vec<_>>>()?;

    let modulation = match &cfg.modulation {
        None => None,
        Some(rows) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::InconsistentDimensions(format!(
                    "modulation must be {d}x{d}"
                )));
            }
            Some(
                rows.iter()
                    .flatten()
                    .map(|e| parse_with_params(&e.text(), d, params))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };

    let input_state_dependent = input.iter().any(Expr::depends_on_state);
    let b = &cfg.bounds;
    let rates = hopfield.as_ref().map(|(dd, w)| hopfield_rates(dd, w));
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::Schema(format!("bounds.{name} is required for this model")))
    };
    let (lambda1, lambda2) = match rates {
        Some(r) => (r.gamma1, r.gamma2),
        None => (need(b.lambda1, "lambda1")?, need(b.lambda2, "lambda2")?),
    };
    let l_b = match b.l_b {
        Some(v) => v,
        None if !input_state_dependent => 0.0,
        None => need(None, "l_b")?,
    };
    let b_sup = match (b.b_sup, constant_matrix(&input, d, k)) {
        (Some(v), _) => v,
        (None, Some(m)) => spectral_norm(&m),
        (None, None) => need(None, "b_sup")?,
    };
    let a_sup = match (&modulation, b.a_sup) {
        (_, Some(v)) => Some(v),
        (Some(m), None) => constant_matrix(m, d, d).map(|m| spectral_norm(&m)),
        (None, None) => None,
    };
    for (name, v) in [
        ("lambda1", lambda1),
        ("lambda2", lambda2),
        ("l_b", l_b),
        ("b_sup", b_sup),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Schema(format!(
                "bounds.{name} must be finite and non-negative"
            )));
        }
    }
    let b_lower = match &b.b_lower {
        Some(s) => {
            let e = parse_with_params(s, d, params)?;
            if e.depends_on_state() {
                return Err(Error::Schema("bounds.b_lower may depend on t only".into()));
            }
            Some(e)
        }
        None => None,
    };

    Ok(SystemModel {
        dimension: d,
        inputs: k,
        t0: cfg.t0,
        t_final: cfg.t_final,
        drift,
        input,
        modulation,
        bounds: ModelBounds {
            lambda1,
            lambda2,
            l_b,
            b_sup,
            a_sup,
        },
        hopfield,
        b_lower,
        input_state_dependent,
    })
}

impl SystemModel {
    pub fn drift_exprs(&self) -> &[Expr] {
        &self.drift
    }

    pub fn is_general(&self) -> bool {
        self.modulation.is_some()
    }

    /// Same model on a different time window.
    pub fn with_horizon(&self, t0: f64, t_final: f64) -> SystemModel {
        let mut m = self.clone();
        m.t0 = t0;
        m.t_final = t_final;
        m
    }

    pub fn modulation_matrix(&self, t: f64, x: &[f64]) -> Result<Option<DMatrix<f64>>> {
        let d = self.dimension;
        match &self.modulation {
            None => Ok(None),
            Some(m) => {
                let mut out = DMatrix::zeros(d, d);
                for (idx, e) in m.iter().enumerate() {
                    out[(idx / d, idx % d)] = e.eval(t, x)?;
                }
                Ok(Some(out))
            }
        }
    }

    fn dual_seed(x: &[f64], dir: &[f64]) -> Vec<DualValue> {
        x.iter()
            .zip(dir)
            .map(|(&v, &s)| DualValue::variable(v, s))
            .collect()
    }

    fn drift_dual(&self, t: f64, x: &[DualValue], general: bool) -> Result<Vec<DualValue>> {
        let n: Vec<DualValue> = self
            .drift
            .iter()
            .map(|e| e.eval(t, x))
            .collect::<Result<_>>()?;
        match (&self.modulation, general) {
            (Some(a), true) => {
                let d = self.dimension;
                let mut out = vec![DualValue::default(); d];
                for (i, o) in out.iter_mut().enumerate() {
                    for (kk, nk) in n.iter().enumerate() {
                        *o = *o + a[i * d + kk].eval(t, x)? * *nk;
                    }
                }
                Ok(out)
            }
            _ => Ok(n),
        }
    }

    fn drift_value(&self, t: f64, x: &[f64], general: bool) -> Result<DVector<f64>> {
        let n: Vec<f64> = self
            .drift
            .iter()
            .map(|e| e.eval(t, x))
            .collect::<Result<_>>()?;
        let n = DVector::from_vec(n);
        match (self.modulation_matrix(t, x)?, general) {
            (Some(a), true) => Ok(a * n),
            _ => Ok(n),
        }
    }

    fn drift_jacobian_impl(&self, t: f64, x: &[f64], general: bool) -> Result<DMatrix<f64>> {
        let d = self.dimension;
        let mut jac = DMatrix::zeros(d, d);
        let mut dir = vec![0.0; d];
        for j in 0..d {
            dir[j] = 1.0;
            let vals = self.drift_dual(t, &Self::dual_seed(x, &dir), general)?;
            for (i, v) in vals.iter().enumerate() {
                jac[(i, j)] = v.first;
            }
            dir[j] = 0.0;
        }
        Ok(jac)
    }

    fn drift_second_impl(
        &self,
        t: f64,
        x: &[f64],
        h: &[f64],
        w: &[f64],
        general: bool,
    ) -> Result<DVector<f64>> {
        let plus: Vec<f64> = h.iter().zip(w).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = h.iter().zip(w).map(|(a, b)| a - b).collect();
        let p = self.drift_dual(t, &Self::dual_seed(x, &plus), general)?;
        let m = self.drift_dual(t, &Self::dual_seed(x, &minus), general)?;
        Ok(DVector::from_iterator(
            p.len(),
            p.iter().zip(&m).map(|(a, b)| 0.25 * (a.second - b.second)),
        ))
    }

    /// View of the model including its modulation matrix.
    pub fn general(&self) -> Result<GeneralSystem<'_>> {
        if self.modulation.is_none() {
            return Err(Error::NotGeneralModel);
        }
        Ok(GeneralSystem(self))
    }
}

impl ControlSystem for SystemModel {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn inputs(&self) -> usize {
        self.inputs
    }
    fn horizon(&self) -> (f64, f64) {
        (self.t0, self.t_final)
    }
    fn bounds(&self) -> &ModelBounds {
        &self.bounds
    }
    fn drift(&self, t: f64, x: &[f64]) -> Result<DVector<f64>> {
        self.drift_value(t, x, false)
    }
    fn drift_jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        self.drift_jacobian_impl(t, x, false)
    }
    fn drift_second(&self, t: f64, x: &[f64], h: &[f64], w: &[f64]) -> Result<DVector<f64>> {
        self.drift_second_impl(t, x, h, w, false)
    }
    fn input_matrix(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let k = self.inputs;
        let mut out = DMatrix::zeros(self.dimension, k);
        for (idx, e) in self.input.iter().enumerate() {
            out[(idx / k, idx % k)] = e.eval(t, x)?;
        }
        Ok(out)
    }
    fn input_derivative(&self, t: f64, x: &[f64], dir: &[f64]) -> Result<DMatrix<f64>> {
        let k = self.inputs;
        let mut out = DMatrix::zeros(self.dimension, k);
        if !self.input_state_dependent {
            return Ok(out);
        }
        let seed = Self::dual_seed(x, dir);
        for (idx, e) in self.input.iter().enumerate() {
            out[(idx / k, idx % k)] = e.eval(t, &seed)?.first;
        }
        Ok(out)
    }
    fn input_depends_on_state(&self) -> bool {
        self.input_state_dependent
    }
    fn hopfield(&self) -> Option<HopfieldRates> {
        self.hopfield.as_ref().map(|(d, w)| hopfield_rates(d, w))
    }
}

/// The modulated system `x' = A(t,x) N_t(x) + B(t,x) u`.
#[derive(Debug, Clone, Copy)]
pub struct GeneralSystem<'a>(pub &'a SystemModel);

impl ControlSystem for GeneralSystem<'_> {
    fn dimension(&self) -> usize {
        self.0.dimension
    }
    fn inputs(&self) -> usize {
        self.0.inputs
    }
    fn horizon(&self) -> (f64, f64) {
        (self.0.t0, self.0.t_final)
    }
    fn bounds(&self) -> &ModelBounds {
        &self.0.bounds
    }
    fn drift(&self, t: f64, x: &[f64]) -> Result<DVector<f64>> {
        self.0.drift_value(t, x, true)
    }
    fn drift_jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        self.0.drift_jacobian_impl(t, x, true)
    }
    fn drift_second(&self, t: f64, x: &[f64], h: &[f64], w: &[f64]) -> Result<DVector<f64>> {
        self.0.drift_second_impl(t, x, h, w, true)
    }
    fn input_matrix(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        self.0.input_matrix(t, x)
    }
    fn input_derivative(&self, t: f64, x: &[f64], dir: &[f64]) -> Result<DMatrix<f64>> {
        self.0.input_derivative(t, x, dir)
    }
    fn input_depends_on_state(&self) -> bool {
        self.0.input_state_dependent
    }
}

/// Axis-aligned sampling region for bound checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StateBox {
    pub fn symmetric(dimension: usize, half_width: f64) -> Self {
        Self {
            lower: vec![-half_width; dimension],
            upper: vec![half_width; dimension],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub declared: f64,
    pub observed: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<BoundCheck>,
    pub violated: bool,
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / n).collect()
}

/// Falsification check of the declared bounds by seeded uniform sampling.
/// Observed values are lower estimates of the true suprema.
pub fn validate_bounds<S: ControlSystem>(
    sys: &S,
    region: &StateBox,
    samples: usize,
    seed: u64,
) -> Result<BoundsReport> {
    let d = sys.dimension();
    if region.lower.len() != d || region.upper.len() != d {
        return Err(Error::InconsistentDimensions("state box dimension".into()));
    }
    let (t0, t1) = sys.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = [0.0_f64; 4];
    let random_unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        unit((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    for _ in 0..samples {
        let t = rng.gen_range(t0..=t1);
        let x: Vec<f64> = (0..d)
            .map(|i| rng.gen_range(region.lower[i]..=region.upper[i]))
            .collect();
        obs[0] = obs[0].max(spectral_norm(&sys.drift_jacobian(t, &x)?));
        obs[3] = obs[3].max(spectral_norm(&sys.input_matrix(t, &x)?));
        let mut probes: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect();
        probes.push(random_unit(&mut rng));
        probes.push(random_unit(&mut rng));
        for h in &probes {
            let mut m = DMatrix::zeros(d, d);
            for j in 0..d {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                m.set_column(j, &sys.drift_second(t, &x, h, &e)?);
            }
            obs[1] = obs[1].max(spectral_norm(&m));
            if sys.input_depends_on_state() {
                obs[2] = obs[2].max(spectral_norm(&sys.input_derivative(t, &x, h)?));
            }
        }
    }
    let b = sys.bounds();
    let declared = [b.lambda1, b.lambda2, b.l_b, b.b_sup];
    let names = ["lambda1", "lambda2", "l_b", "b_sup"];
    let checks: Vec<BoundCheck> = (0..4)
        .map(|i| BoundCheck {
            name: names[i].to_string(),
            declared: declared[i],
            observed: obs[i],
            violated: obs[i] > declared[i] * (1.0 + 1e-9),
        })
        .collect();
    let violated = checks.iter().any(|c| c.violated);
    Ok(BoundsReport {
        samples,
        seed,
        checks,
        violated,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn cfg(drift: &[&str], input: &[&[&str]]) -> ModelConfig {
        ModelConfig {
            dimension: drift.len(),
            inputs: input[0].len(),
            t0: 0.0,
            t_final: 1.0,
            drift: drift.iter().map(|s| Entry::Text(s.to_string())).collect(),
            input_matrix: input
                .iter()
                .map(|r| r.iter().map(|s| Entry::Text(s.to_string())).collect())
                .collect(),
            modulation: None,
            bounds: BoundsConfig {
                lambda1: Some(1.0),
                lambda2: Some(0.0),
                ..Default::default()
            },
            hopfield: None,
            params: BTreeMap::new(),
        }
    }

    #[test]
    fn hopfield_expansion() {
        let mut c = cfg(&[], &[&["1"], &["0"]]);
        c.dimension = 2;
        c.hopfield = Some(HopfieldConfig {
            d: vec![1.0, 1.0],
            w: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        });
        let m = build_model(&c).unwrap();
        let want = [
            parse_with_params("-x1+tanh(x2)", 2, &BTreeMap::new()).unwrap(),
            parse_with_params("-x2+tanh(x1)", 2, &BTreeMap::new()).unwrap(),
        ];
        assert_eq!(m.drift_exprs(), &want);
        assert_eq!(m.bounds.lambda1, 2.0);
    }

    #[test]
    fn dimension_mismatch() {
        let c = cfg(&["x1", "x2"], &[&["1"]]);
        assert!(matches!(
            build_model(&c),
            Err(Error::InconsistentDimensions(_))
        ));
    }

    #[test]
    fn rates() {
        let r = hopfield_rates(&[1.0], &DMatrix::zeros(1, 1));
        assert_eq!(
            (r.gamma, r.gamma1, r.gamma2, r.sigma_prime_sup),
            (-1.0, 1.0, 0.0, 0.0)
        );
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = hopfield_rates(&[1.0, 2.0], &w);
        assert!(r.gamma.abs() < 1e-15);
        assert!((r.gamma1 - 3.0).abs() < 1e-15);
        assert!((r.gamma2 - 0.769800358919501).abs() < 1e-12);
    }

    #[test]
    fn bound_violation_detected() {
        let c = cfg(&["x1^2"], &[&["1"]]);
        let m = build_model(&c).unwrap();
        let rep = validate_bounds(&m, &StateBox::symmetric(1, 2.0), 2000, 7).unwrap();
        assert!(rep.violated);
        assert!((rep.checks[0].observed - 4.0).abs() < 0.05);
    }

    #[test]
    fn general_view_needs_modulation() {
        let m = build_model(&cfg(&["x1"], &[&["1"]])).unwrap();
        assert!(matches!(m.general(), Err(Error::NotGeneralModel)));
    }
}
