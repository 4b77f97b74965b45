use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use nlgram::flow::ControlGrid;
use nlgram::gramian::{Discretization, Quadrature};
use nlgram::model::{build_model, ModelConfig, StateBox, SystemModel};
use nlgram::{expr, Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: usize,
    pub integrator_step: f64,
    #[serde(default)]
    pub quadrature: Quadrature,
}

/// One basis function of the reference search: a single expression in `t`
/// for scalar inputs, or one expression per input.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BasisEntry {
    Scalar(String),
    Vector(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsCheckConfig {
    pub samples: usize,
    /// Half-width of the symmetric sampling box.
    pub half_width: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub x0: Option<Vec<f64>>,
    pub x1: Option<Vec<f64>>,
    pub which: Option<u8>,
    pub theta: Option<f64>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub tol_fp: Option<f64>,
    pub tol_endpoint: Option<f64>,
    pub max_outer: Option<usize>,
    pub tol_outer: Option<f64>,
    pub windows: Option<usize>,
    #[serde(default)]
    pub basis: Vec<BasisEntry>,
    pub coefficient_bound: Option<f64>,
    pub budget: Option<usize>,
    pub bounds_check: Option<BoundsCheckConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub run: RunBlock,
}

/// Parsed configuration with its model and the SHA-256 of the raw bytes.
pub struct Loaded {
    pub config: RunConfig,
    pub model: SystemModel,
    pub disc: Discretization,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
    let hash = hex::encode(Sha256::digest(&bytes));
    let config: RunConfig =
        serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("config: {e}")))?;
    let model = build_model(&config.model)?;
    let disc = Discretization {
        nodes: config.grid.nodes,
        step: config.grid.integrator_step,
        quadrature: config.grid.quadrature,
    };
    disc.validate()?;
    for (name, v) in [
        ("run.theta", config.run.theta),
        ("run.tol_fp", config.run.tol_fp),
        ("run.tol_endpoint", config.run.tol_endpoint),
        ("run.tol_outer", config.run.tol_outer),
        ("run.coefficient_bound", config.run.coefficient_bound),
    ] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Schema(format!("{name} must be positive")));
            }
        }
    }
    Ok(Loaded {
        config,
        model,
        disc,
        hash,
    })
}

pub fn state(v: &[f64], d: usize, name: &str) -> Result<DVector<f64>> {
    if v.len() != d {
        return Err(Error::InconsistentDimensions(format!(
            "{name} has {} entries, dimension is {d}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Schema(format!("{name} must be finite")));
    }
    Ok(DVector::from_column_slice(v))
}

/// Comma-separated list of numbers, as given to `--target`.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Schema(format!("`{s}` is not a number")))
        })
        .collect()
}

pub fn read_control(
    path: &Path,
    model: &SystemModel,
    disc: &Discretization,
) -> Result<ControlGrid> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Schema(format!("cannot open {}: {e}", path.display())))?;
    let u = ControlGrid::read_csv(
        std::io::BufReader::new(file),
        model.t0,
        model.t_final,
        model.inputs,
    )?;
    let layout = ControlGrid::zeros(model.t0, model.t_final, disc.nodes, model.inputs);
    layout.check_layout(&u)?;
    Ok(u)
}

/// Sample each basis entry on the control grid.
pub fn basis(
    entries: &[BasisEntry],
    model: &SystemModel,
    disc: &Discretization,
) -> Result<Vec<ControlGrid>> {
    let k = model.inputs;
    let params = BTreeMap::new();
    entries
        .iter()
        .map(|entry| {
            let texts = match entry {
                BasisEntry::Scalar(s) if k == 1 => vec![s.clone()],
                BasisEntry::Vector(v) if v.len() == k => v.clone(),
                _ => {
                    return Err(Error::InconsistentDimensions(format!(
                        "each basis entry needs {k} component(s)"
                    )))
                }
            };
            let exprs = texts
                .iter()
                .map(|s| expr::parse_with_params(s, 0, &params))
                .collect::<Result<Vec<_>>>()?;
            let mut g = ControlGrid::zeros(model.t0, model.t_final, disc.nodes, k);
            for j in 0..g.nodes() {
                let t = g.time(j);
                for (i, e) in exprs.iter().enumerate() {
                    g.values[(j, i)] = e.eval::<f64>(t, &[])?;
                }
            }
            Ok(g)
        })
        .collect()
}

pub fn sampling_box(cfg: &BoundsCheckConfig, d: usize) -> Result<StateBox> {
    if !(cfg.half_width > 0.0 && cfg.half_width.is_finite()) || cfg.samples == 0 {
        return Err(Error::Schema(
            "run.bounds_check needs samples >= 1 and a positive half_width".into(),
        ));
    }
    Ok(StateBox::symmetric(d, cfg.half_width))
}
