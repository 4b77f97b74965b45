//! Lipschitz constants of the Gramian map, admissible radii and the
//! reference-control search.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::flow::ControlGrid;
use crate::gramian::{assemble_operator, Anchor, Discretization};
use crate::linalg::sym_eigen;
use crate::model::{ControlSystem, HopfieldRates, ModelBounds, StateBox, SystemModel};
use crate::synthesis::{exp_ratio, stack};

pub const DEFAULT_THETA: f64 = 0.5;

/// `(e^{a s} - e^{b s}) / (a - b)`, continuous across `a = b`.
fn exp_divided(a: f64, b: f64, s: f64) -> f64 {
    (b * s).exp() * exp_ratio(a - b, s)
}

/// Lipschitz constant of `u -> N_i(u)` from the global bounds. With
/// `l_b = 0` the simplified closed forms apply; otherwise the general
/// formulas depend on the ball radius `zeta` and divide by `Lambda1`.
pub fn generic_lipschitz(bounds: &ModelBounds, dt: f64, zeta: f64, anchor: Anchor) -> Result<f64> {
    let (l1, l2, lb, b) = (bounds.lambda1, bounds.lambda2, bounds.l_b, bounds.b_sup);
    if lb == 0.0 {
        let r3 = exp_ratio(l1, dt).powi(3);
        return Ok(match anchor {
            Anchor::Initial => l2 * b.powi(3) / 6.0 * (3.0 * (l1 * dt).exp() + 1.0) * r3,
            Anchor::Final => l2 * b.powi(3) / 3.0 * r3,
        });
    }
    if l1 == 0.0 {
        return Err(Error::UndefinedBound(
            "the bound with l_b > 0 divides by lambda1 = 0".into(),
        ));
    }
    let lz = lb * zeta;
    let e = (l1 * dt).exp();
    let dd = |a: f64, c: f64| exp_divided(a, c, dt);
    let pre1 = lb * b * b * e / l1;
    let pre2 = 2.0 * b.powi(3) * l2 * e / (l1 * (l1 + lz));
    Ok(match anchor {
        Anchor::Final => {
            pre1 * (dd(l1, lz) - dd(lz, -l1))
                + pre2 * (dd(2.0 * l1, lz) + dd(l1, lz) + dd(l1, -l1) - dd(2.0 * l1, -l1))
        }
        Anchor::Initial => {
            pre1 * (dd(2.0 * l1 + lz, l1) + dd(2.0 * l1 + lz, -l1))
                + pre2
                    * (dd(3.0 * l1 + lz, -l1) - dd(2.0 * l1 + lz, -l1) + dd(l1, -l1)
                        - dd(2.0 * l1, -l1))
        }
    })
}

/// Refined constant for Hopfield drifts with constant input matrix.
pub fn hopfield_lipschitz(rates: &HopfieldRates, b_sup: f64, dt: f64, anchor: Anchor) -> f64 {
    let b3 = b_sup.powi(3);
    match anchor {
        Anchor::Initial => {
            rates.gamma2 * b3 / 6.0
                * (3.0 * (rates.gamma1 * dt).exp() + 1.0)
                * exp_ratio(rates.gamma1, dt).powi(3)
        }
        Anchor::Final => rates.gamma2 * b3 / 3.0 * exp_ratio(rates.gamma, dt).powi(3),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LipschitzSource {
    Hopfield,
    Simplified,
    Generic,
}

fn lipschitz_for<S: ControlSystem + ?Sized>(
    sys: &S,
    anchor: Anchor,
    dt: f64,
    zeta: f64,
) -> Result<(f64, LipschitzSource)> {
    let b = sys.bounds();
    if let Some(r) = sys.hopfield() {
        if !sys.input_depends_on_state() {
            return Ok((
                hopfield_lipschitz(&r, b.b_sup, dt, anchor),
                LipschitzSource::Hopfield,
            ));
        }
    }
    let src = if b.l_b == 0.0 {
        LipschitzSource::Simplified
    } else {
        LipschitzSource::Generic
    };
    Ok((generic_lipschitz(b, dt, zeta, anchor)?, src))
}

fn serialize_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub which: u8,
    pub theta: f64,
    pub lambda_min: f64,
    /// `(1 + theta) / lambda_min`
    pub c_const: f64,
    pub lipschitz: f64,
    pub lipschitz_source: LipschitzSource,
    pub zeta: Option<f64>,
    pub reference_sup_norm: f64,
    /// Admissible displacement radius; `+inf` when the Gramian map is
    /// constant.
    #[serde(serialize_with = "serialize_extended")]
    pub radius: f64,
    pub target_norm: Option<f64>,
    pub admissible: Option<bool>,
    pub energy_bound: Option<f64>,
    pub reason: Option<String>,
    pub horizon: f64,
    pub lambda1: f64,
    pub b_sup: f64,
}

/// Admissible radius around a reference control `u_ref`. With a target
/// displacement the ball radius `zeta` follows from `|y|`; without one and
/// a `zeta`-dependent constant, the self-consistent radius is found by
/// bisection.
pub fn admissible_radius<S: ControlSystem + ?Sized>(
    sys: &S,
    reference: &ControlGrid,
    x0: &DVector<f64>,
    anchor: Anchor,
    theta: f64,
    disc: &Discretization,
    target: Option<&DVector<f64>>,
) -> Result<Certificate> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Schema(format!(
            "theta must be positive, got {theta}"
        )));
    }
    let op = assemble_operator(sys, reference, x0, anchor, disc)?;
    let g = op.gramian();
    if !g.is_invertible() {
        return Err(Error::SingularGramian {
            lambda_min: g.lambda_min,
            lambda_max: g.lambda_max,
        });
    }
    let lam = g.lambda_min;
    let (t0, t1) = sys.horizon();
    let dt = t1 - t0;
    let bounds = sys.bounds().clone();
    let e1 = (bounds.lambda1 * dt).exp();
    let b = bounds.b_sup;
    let c_const = (1.0 + theta) / lam;
    let u_sup = reference.sup_norm();
    let radius_for = |l: f64| -> f64 {
        if l == 0.0 {
            f64::INFINITY
        } else {
            lam / ((1.0 + theta) * b * e1) * (theta * lam / ((1.0 + theta) * l) - u_sup)
        }
    };
    let zeta_of = |r: f64| c_const * b * e1 * r;
    let target_norm = target.map(|y| y.norm());

    let (_, source) = lipschitz_for(sys, anchor, dt, 0.0)?;
    let (lipschitz, zeta, mut radius) = match (source, target_norm) {
        (LipschitzSource::Generic, Some(yn)) => {
            let z = zeta_of(yn);
            let l = lipschitz_for(sys, anchor, dt, z)?.0;
            (l, Some(z), radius_for(l))
        }
        (LipschitzSource::Generic, None) => {
            let l0 = lipschitz_for(sys, anchor, dt, 0.0)?.0;
            let hi0 = radius_for(l0);
            if hi0 <= 0.0 {
                (l0, Some(0.0), hi0)
            } else {
                let f = |r: f64| -> Result<f64> {
                    Ok(radius_for(lipschitz_for(sys, anchor, dt, zeta_of(r))?.0) - r)
                };
                let (mut lo, mut hi) = (0.0, hi0);
                for _ in 0..64 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid)? >= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let z = zeta_of(lo);
                (lipschitz_for(sys, anchor, dt, z)?.0, Some(z), lo)
            }
        }
        (_, yn) => {
            let l = lipschitz_for(sys, anchor, dt, 0.0)?.0;
            (l, yn.map(zeta_of), radius_for(l))
        }
    };
    let mut reason = None;
    if radius <= 0.0 {
        reason = Some(format!(
            "reference sup norm {u_sup:.3e} exceeds theta lambda_min / ((1 + theta) L) = {:.3e}",
            theta * lam / ((1.0 + theta) * lipschitz)
        ));
        radius = 0.0;
    }
    let admissible = target_norm.map(|yn| yn <= radius);
    let energy_bound = match (target_norm, u_sup == 0.0) {
        (Some(yn), true) => Some((1.0 + theta) * yn * yn / lam),
        _ => None,
    };
    if admissible == Some(false) && reason.is_none() {
        reason = Some(format!(
            "|y| = {:.3e} exceeds the admissible radius {radius:.3e}",
            target_norm.unwrap_or(0.0)
        ));
    }
    Ok(Certificate {
        which: anchor.which(),
        theta,
        lambda_min: lam,
        c_const,
        lipschitz,
        lipschitz_source: source,
        zeta,
        reference_sup_norm: u_sup,
        radius,
        target_norm,
        admissible,
        energy_bound,
        reason,
        horizon: dt,
        lambda1: bounds.lambda1,
        b_sup: b,
    })
}

/// Certificate around the zero control, with the energy bound
/// `(1 + theta) |y|^2 / lambda_min(W_i)`.
pub fn zero_reference_certificate<S: ControlSystem + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    y: &DVector<f64>,
    anchor: Anchor,
    theta: f64,
    disc: &Discretization,
) -> Result<Certificate> {
    admissible_radius(
        sys,
        &disc.zero_control(sys),
        x0,
        anchor,
        theta,
        disc,
        Some(y),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityResult {
    pub constant: Option<f64>,
    pub b_l1: Option<f64>,
    pub failing_probe: Option<Probe>,
    pub reason: Option<String>,
}

/// Uniform coercivity constant `C = dt e^{2 Lambda1 dt} / |b|_1^2` for
/// square systems whose declared lower profile `b(t)` satisfies
/// `|B(t,x)^T y| >= b(t) |y|` on every probe.
pub fn uniform_coercivity(
    model: &SystemModel,
    region: &StateBox,
    probes: usize,
    seed: u64,
) -> Result<CoercivityResult> {
    let fail = |reason: &str| CoercivityResult {
        constant: None,
        b_l1: None,
        failing_probe: None,
        reason: Some(reason.to_string()),
    };
    if model.dimension != model.inputs {
        return Ok(fail("needs as many inputs as states"));
    }
    let Some(profile) = &model.b_lower else {
        return Ok(fail("no lower profile b_lower declared"));
    };
    let (t0, t1) = (model.t0, model.t_final);
    let d = model.dimension;
    let n = 2000;
    let h = (t1 - t0) / n as f64;
    let mut b_l1 = 0.0;
    for j in 0..=n {
        let w = if j == 0 || j == n {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        b_l1 += w * profile.eval::<f64>(t0 + j as f64 * h, &vec![0.0; d])?.abs();
    }
    b_l1 *= h / 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probes {
        let t = rng.gen_range(t0..=t1);
        let x: Vec<f64> = (0..d)
            .map(|i| rng.gen_range(region.lower[i]..=region.upper[i]))
            .collect();
        let y = DVector::from_iterator(d, (0..d).map(|_| rng.gen_range(-1.0..1.0)));
        let bt = model.input_matrix(t, &x)?.transpose();
        let lower = profile.eval::<f64>(t, &x)?;
        if (bt * &y).norm() < lower * y.norm() * (1.0 - 1e-12) {
            return Ok(CoercivityResult {
                constant: None,
                b_l1: Some(b_l1),
                failing_probe: Some(Probe {
                    t,
                    x,
                    y: y.iter().copied().collect(),
                }),
                reason: Some("lower profile violated".into()),
            });
        }
    }
    if b_l1 <= 0.0 {
        return Ok(fail("lower profile has zero L1 norm"));
    }
    let dt = t1 - t0;
    Ok(CoercivityResult {
        constant: Some(dt * (2.0 * model.bounds.lambda1 * dt).exp() / (b_l1 * b_l1)),
        b_l1: Some(b_l1),
        failing_probe: None,
        reason: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSearchSpec {
    pub basis: Vec<ControlGrid>,
    /// Coefficients are searched in `[-bound, bound]`.
    pub bound: f64,
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceOutcome {
    pub certificate: Certificate,
    pub coefficients: Vec<f64>,
    pub evaluations: usize,
    #[serde(skip)]
    pub reference: ControlGrid,
}

fn combine(basis: &[ControlGrid], c: &[f64]) -> ControlGrid {
    let mut u = basis[0].clone();
    u.values.fill(0.0);
    for (phi, ci) in basis.iter().zip(c) {
        u.values += &phi.values * *ci;
    }
    u
}

/// Search the span of a basis for the reference control with the largest
/// target-free admissible radius, by a seeded Nelder-Mead whose initial
/// simplex contains the zero control.
pub fn optimize_reference<S: ControlSystem + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    search: &ReferenceSearchSpec,
    anchor: Anchor,
    theta: f64,
    disc: &Discretization,
) -> Result<ReferenceOutcome> {
    let n = search.basis.len();
    if n == 0 {
        return Err(Error::Schema("reference basis is empty".into()));
    }
    let zero = disc.zero_control(sys);
    for phi in &search.basis {
        zero.check_layout(phi)?;
    }
    let stacked = DMatrix::from_columns(&search.basis.iter().map(stack).collect::<Vec<_>>());
    let gram = sym_eigen(&(stacked.transpose() * &stacked));
    if !(gram.min() > 1e-12 * gram.max()) {
        return Err(Error::Schema(
            "reference basis is linearly dependent".into(),
        ));
    }

    let evaluations = Cell::new(0usize);
    let mut best: Option<(f64, Vec<f64>, Certificate)> = None;
    let mut objective = |c: &[f64]| -> Result<f64> {
        evaluations.set(evaluations.get() + 1);
        let u = combine(&search.basis, c);
        match admissible_radius(sys, &u, x0, anchor, theta, disc, None) {
            Ok(cert) => {
                let r = cert.radius;
                if best.as_ref().is_none_or(|(b, _, _)| r > *b) {
                    best = Some((r, c.to_vec(), cert));
                }
                Ok(-r)
            }
            Err(Error::SingularGramian { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut simplex: Vec<Vec<f64>> = vec![vec![0.0; n]];
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = search.bound * rng.gen_range(0.2..0.5);
        simplex.push(v);
    }
    let clamp = |v: Vec<f64>| -> Vec<f64> {
        v.into_iter()
            .map(|x| x.clamp(-search.bound, search.bound))
            .collect()
    };
    let mut values = Vec::with_capacity(n + 1);
    for v in &simplex {
        values.push(objective(v)?);
        if values.last() == Some(&f64::NEG_INFINITY) {
            break;
        }
    }
    let unbounded = values.contains(&f64::NEG_INFINITY);
    while !unbounded && evaluations.get() < search.budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() <= 1e-12 * values[0].abs().max(1e-300)
            && values[0].is_finite()
        {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|v| v[i]).sum::<f64>() / n as f64)
            .collect();
        let towards = |s: f64, p: &[f64]| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(p)
                    .map(|(c, x)| c + s * (x - c))
                    .collect(),
            )
        };
        let xr = towards(-1.0, &simplex[n]);
        let fr = objective(&xr)?;
        if fr < values[0] {
            let xe = towards(-2.0, &simplex[n]);
            let fe = objective(&xe)?;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let xc = if fr < values[n] {
                towards(-0.5, &simplex[n])
            } else {
                towards(0.5, &simplex[n])
            };
            let fc = objective(&xc)?;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(a, b)| a + 0.5 * (b - a))
                        .collect();
                    simplex[i] = shrunk;
                    values[i] = objective(&simplex[i])?;
                }
            }
        }
    }

    let evaluations = evaluations.get();
    match best {
        Some((r, c, certificate)) if r > 0.0 => Ok(ReferenceOutcome {
            reference: combine(&search.basis, &c),
            certificate,
            coefficients: c,
            evaluations,
        }),
        _ => Err(Error::EmptyAdmissibleSet(format!(
            "no probe among {evaluations} had an invertible Gramian and a positive radius"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds(l_b: f64) -> ModelBounds {
        ModelBounds {
            lambda1: 1.0,
            lambda2: 1.0,
            l_b,
            b_sup: 1.0,
            a_sup: None,
        }
    }

    #[test]
    fn simplified_constants() {
        let e = 1f64.exp();
        let l2 = generic_lipschitz(&unit_bounds(0.0), 1.0, 0.0, Anchor::Final).unwrap();
        assert!((l2 - (e - 1.0).powi(3) / 3.0).abs() < 1e-14);
        let l1 = generic_lipschitz(&unit_bounds(0.0), 1.0, 0.0, Anchor::Initial).unwrap();
        assert!((l1 - (3.0 * e + 1.0) * (e - 1.0).powi(3) / 6.0).abs() < 1e-13);
    }

    #[test]
    fn undefined_without_lambda1() {
        let mut b = unit_bounds(1.0);
        b.lambda1 = 0.0;
        assert!(matches!(
            generic_lipschitz(&b, 1.0, 0.1, Anchor::Final),
            Err(Error::UndefinedBound(_))
        ));
    }

    #[test]
    fn removable_singularity_is_continuous() {
        // lambda1 = l_b * zeta makes a denominator vanish
        let b = unit_bounds(1.0);
        let at = generic_lipschitz(&b, 1.0, 1.0, Anchor::Final).unwrap();
        let near = generic_lipschitz(&b, 1.0, 1.0 + 1e-7, Anchor::Final).unwrap();
        assert!(at.is_finite());
        assert!((at - near).abs() < 1e-5 * at);
    }

    #[test]
    fn hopfield_zero_rate() {
        let r = HopfieldRates {
            gamma: 0.0,
            gamma1: 2.0,
            gamma2: 4.0 / (3.0 * 3f64.sqrt()),
            sigma_prime_sup: 1.0,
        };
        let l = hopfield_lipschitz(&r, 1.0, 1.0, Anchor::Final);
        assert!((l - r.gamma2 / 3.0).abs() < 1e-15);
    }
}
