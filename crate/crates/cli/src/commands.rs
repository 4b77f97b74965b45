use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use nlgram::certify::{
    admissible_radius, optimize_reference, uniform_coercivity, zero_reference_certificate,
    Certificate, ReferenceSearchSpec,
};
use nlgram::flow::{aligned_step, integrate_controlled, ControlGrid, Trajectory};
use nlgram::freeze::{freeze_iterate, general_trajectory, FreezeOptions, FrozenModel};
use nlgram::gramian::{
    assemble_gramian, congruence_check, lyapunov_w2, zero_reference_gramian, Anchor, Discretization,
};
use nlgram::model::{validate_bounds, ControlSystem, SystemModel};
use nlgram::synthesis::{picard_synthesize, target_displacement, SynthesisOptions, TargetSpec};
use nlgram::window::{window_synthesize, WindowOptions};
use nlgram::{Error, ErrorKind, Result};

use crate::config::{self, Loaded};
use crate::{Common, Failure};

const DEFAULT_THETA: f64 = 0.5;
const DEFAULT_SEED: u64 = 0;

type Outcome = std::result::Result<u8, Failure>;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Schema(format!("cannot write {}: {e}", path.display()))
}

/// Output sink: the report always goes to stdout; with `--out-dir` it is
/// also written there along with any CSV signals.
struct Output<'a> {
    command: &'static str,
    hash: &'a str,
    dir: Option<&'a Path>,
}

impl<'a> Output<'a> {
    fn new(command: &'static str, loaded: &'a Loaded, common: &'a Common) -> Result<Self> {
        if let Some(dir) = &common.out_dir {
            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
        Ok(Self {
            command,
            hash: &loaded.hash,
            dir: common.out_dir.as_deref(),
        })
    }

    fn csv(&self, name: &str, write: impl FnOnce(&mut std::fs::File) -> Result<()>) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        write(&mut f)
    }

    fn control(&self, u: &ControlGrid) -> Result<()> {
        self.csv("control.csv", |f| u.write_csv(f))
    }

    fn trajectory(&self, x: &Trajectory) -> Result<()> {
        self.csv("trajectory.csv", |f| x.write_csv(f))
    }

    fn report(&self, result: Value) -> Result<()> {
        let report = json!({
            "command": self.command,
            "config_hash": self.hash,
            "result": result,
        });
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        println!("{text}");
        if let Some(dir) = self.dir {
            let path = dir.join("report.json");
            std::fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
        }
        Ok(())
    }
}

struct Settings {
    anchor: Anchor,
    theta: f64,
    seed: u64,
}

fn settings(loaded: &Loaded, common: &Common) -> Result<Settings> {
    let run = &loaded.config.run;
    let which = common.which.or(run.which).unwrap_or(2);
    let theta = common.theta.or(run.theta).unwrap_or(DEFAULT_THETA);
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Schema(format!(
            "theta must be positive, got {theta}"
        )));
    }
    Ok(Settings {
        anchor: Anchor::from_which(which)?,
        theta,
        seed: common.seed.or(run.seed).unwrap_or(DEFAULT_SEED),
    })
}

fn initial_state(loaded: &Loaded) -> Result<DVector<f64>> {
    let d = loaded.model.dimension;
    match &loaded.config.run.x0 {
        Some(v) => config::state(v, d, "run.x0"),
        None => Ok(DVector::zeros(d)),
    }
}

fn endpoints(loaded: &Loaded, target: Option<&str>) -> Result<(DVector<f64>, DVector<f64>)> {
    let run = &loaded.config.run;
    let d = loaded.model.dimension;
    let x0 = initial_state(loaded)?;
    let x1 = match (target, &run.x1) {
        (Some(text), _) => config::state(&config::parse_list(text)?, d, "--target")?,
        (None, Some(v)) => config::state(v, d, "run.x1")?,
        (None, None) => {
            return Err(Error::Schema(
                "no target: set run.x1 or pass --target".into(),
            ))
        }
    };
    Ok((x0, x1))
}

fn synthesis_options(loaded: &Loaded) -> SynthesisOptions {
    let run = &loaded.config.run;
    let mut o = SynthesisOptions::default();
    if let Some(v) = run.max_iter {
        o.max_iter = v;
    }
    if let Some(v) = run.tol_fp {
        o.tol_fp = v;
    }
    o.tol_endpoint = run.tol_endpoint;
    o
}

fn displacement<S: ControlSystem + ?Sized>(
    sys: &S,
    spec: &TargetSpec,
    disc: &Discretization,
) -> Result<DVector<f64>> {
    let spacing = (sys.horizon().1 - sys.horizon().0) / (disc.nodes - 1) as f64;
    target_displacement(sys, spec, aligned_step(spacing, disc.step))
}

/// Stop with exit code 4 unless the certificate admits the target.
fn require_admissible(cert: &Certificate, force: bool) -> std::result::Result<(), Failure> {
    if force || cert.admissible == Some(true) {
        return Ok(());
    }
    Err(Failure {
        error: Error::NotAdmissible(format!(
            "|y| = {} exceeds radius {}{}",
            cert.target_norm.unwrap_or(f64::NAN),
            cert.radius,
            cert.reason
                .as_deref()
                .map(|r| format!(" ({r})"))
                .unwrap_or_default()
        )),
        details: Some(json!({ "certificate": to_value(cert) })),
    })
}

fn not_converged_code(converged: bool) -> u8 {
    if converged {
        0
    } else {
        crate::exit_code(ErrorKind::NotConverged)
    }
}

fn state_norms(x: &Trajectory) -> Value {
    let sup = x.states.iter().map(|s| s.amax()).fold(0.0, f64::max);
    json!({ "endpoint": x.endpoint().as_slice(), "state_sup_norm": sup })
}

pub fn simulate(path: &Path, control: Option<&Path>, common: &Common) -> Outcome {
    let loaded = config::load(path)?;
    let out = Output::new("simulate", &loaded, common)?;
    let (model, disc) = (&loaded.model, &loaded.disc);
    let x0 = initial_state(&loaded)?;
    let u = match control {
        Some(p) => config::read_control(p, model, disc)?,
        None => disc.zero_control(model),
    };
    let step = aligned_step(u.spacing(), disc.step);
    let x = if model.is_general() {
        integrate_controlled(&model.general()?, &u, &x0, step)?
    } else {
        integrate_controlled(model, &u, &x0, step)?
    };
    out.trajectory(&x)?;
    let mut result = state_norms(&x);
    result["x0"] = json!(x0.as_slice());
    result["control_sup_norm"] = json!(u.sup_norm());
    result["general"] = json!(model.is_general());
    out.report(result)?;
    Ok(0)
}

pub fn gramian(path: &Path, control: Option<&Path>, common: &Common) -> Outcome {
    let loaded = config::load(path)?;
    let out = Output::new("gramian", &loaded, common)?;
    let s = settings(&loaded, common)?;
    let (model, disc) = (&loaded.model, &loaded.disc);
    let x0 = initial_state(&loaded)?;
    let u = match control {
        Some(p) => config::read_control(p, model, disc)?,
        None => disc.zero_control(model),
    };
    let (report, op) = match control {
        Some(_) => assemble_gramian(model, &u, &x0, s.anchor, disc)?,
        None => zero_reference_gramian(model, &x0, s.anchor, disc)?,
    };
    out.trajectory(&op.trajectory)?;
    let mut result = json!({ "gramian": to_value(&report) });
    if control.is_none() {
        let c = congruence_check(model, &x0, disc)?;
        result["congruence_residual"] = json!(c.residual);
        if s.anchor == Anchor::Final {
            let w = lyapunov_w2(model, &x0, op.step)?;
            let diff = (&w - &report.matrix).norm() / w.norm().max(f64::MIN_POSITIVE);
            result["lyapunov_relative_difference"] = json!(diff);
        }
    }
    out.report(result)?;
    Ok(0)
}

fn certificate_for(
    loaded: &Loaded,
    s: &Settings,
    x0: &DVector<f64>,
    y: &DVector<f64>,
    reference: Option<&Path>,
) -> Result<Certificate> {
    let (model, disc) = (&loaded.model, &loaded.disc);
    match reference {
        Some(p) => {
            let u = config::read_control(p, model, disc)?;
            admissible_radius(model, &u, x0, s.anchor, s.theta, disc, Some(y))
        }
        None => zero_reference_certificate(model, x0, y, s.anchor, s.theta, disc),
    }
}

pub fn synthesize(
    path: &Path,
    target: Option<&str>,
    reference: Option<&Path>,
    force: bool,
    common: &Common,
) -> Outcome {
    let loaded = config::load(path)?;
    let out = Output::new("synthesize", &loaded, common)?;
    let s = settings(&loaded, common)?;
    let (model, disc) = (&loaded.model, &loaded.disc);
    let (x0, x1) = endpoints(&loaded, target)?;
    let spec = TargetSpec::new(x0.clone(), x1, s.anchor);
    let y = displacement(model, &spec, disc)?;
    let cert = certificate_for(&loaded, &s, &x0, &y, reference)?;
    require_admissible(&cert, force)?;
    let r = picard_synthesize(model, &spec, disc, &synthesis_options(&loaded))?;
    out.control(&r.control)?;
    out.trajectory(&r.trajectory)?;
    out.report(json!({
        "certified": cert.admissible == Some(true),
        "certificate": to_value(&cert),
        "synthesis": to_value(&r),
    }))?;
    Ok(not_converged_code(r.converged))
}

pub fn certify(
    path: &Path,
    target: Option<&str>,
    reference: Option<&Path>,
    optimize: bool,
    common: &Common,
) -> Outcome {
    let loaded = config::load(path)?;
    let out = Output::new("certify", &loaded, common)?;
    let s = settings(&loaded, common)?;
    let (model, disc) = (&loaded.model, &loaded.disc);
    let run = &loaded.config.run;
    let x0 = initial_state(&loaded)?;
    let y = match (target, &run.x1) {
        (None, None) => None,
        _ => {
            let (_, x1) = endpoints(&loaded, target)?;
            Some(displacement(
                model,
                &TargetSpec::new(x0.clone(), x1, s.anchor),
                disc,
            )?)
        }
    };
    let mut result = json!({});
    if optimize {
        let search = ReferenceSearchSpec {
            basis: config::basis(&run.basis, model, disc)?,
            bound: run.coefficient_bound.unwrap_or(1.0),
            budget: run.budget.unwrap_or(200),
            seed: s.seed,
        };
        let best = optimize_reference(model, &x0, &search, s.anchor, s.theta, disc)?;
        let zero = admissible_radius(
            model,
            &disc.zero_control(model),
            &x0,
            s.anchor,
            s.theta,
            disc,
            y.as_ref(),
        )?;
        out.control(&best.reference)?;
        result["zero_reference"] = to_value(&zero);
        let cert = match &y {
            Some(y) => admissible_radius(
                model,
                &best.reference,
                &x0,
                s.anchor,
                s.theta,
                disc,
                Some(y),
            )?,
            None => best.certificate.clone(),
        };
        result["optimized"] = to_value(&best);
        result["certificate"] = to_value(&cert);
    } else {
        let u = match reference {
            Some(p) => config::read_control(p, model, disc)?,
            None => disc.zero_control(model),
        };
        let cert = admissible_radius(model, &u, &x0, s.anchor, s.theta, disc, y.as_ref())?;
        result["certificate"] = to_value(&cert);
    }
    if model.b_lower.is_some() {
        if let Some(cfg) = &run.bounds_check {
            let region = config::sampling_box(cfg, model.dimension)?;
            result["coercivity"] =
                to_value(&uniform_coercivity(model, &region, cfg.samples, s.seed)?);
        }
    }
    out.report(result)?;
    Ok(0)
}

pub fn freeze(path: &Path, target: Option<&str>, common: &Common) -> Outcome {
    let loaded = config::load(path)?;
    let out = Output::new("freeze", &loaded, common)?;
    let s = settings(&loaded, common)?;
    let (model, disc) = (&loaded.model, &loaded.disc);
    if !model.is_general() {
        return Err(Error::NotGeneralModel.into());
    }
    let (x0, x1) = endpoints(&loaded, target)?;
    // The freezing loop always anchors at the final time.
    let z0 = general_trajectory(model, &disc.zero_control(model), &x0, disc)?;
    let frozen = FrozenModel::new(model, z0)?;
    let spec = TargetSpec::new(x0.clone(), x1.clone(), Anchor::Final);
    let y = displacement(&frozen, &spec, disc)?;
    // Reported only: the outer loop has its own convergence test, and a
    // singular first iterate is reported by it with its index.
    let cert = match zero_reference_certificate(&frozen, &x0, &y, Anchor::Final, s.theta, disc) {
        Ok(c) => to_value(&c),
        Err(e) if e.kind() == ErrorKind::Numeric => json!({ "error": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    let run = &loaded.config.run;
    let mut opts = FreezeOptions {
        inner: synthesis_options(&loaded),
        ..FreezeOptions::default()
    };
    if let Some(v) = run.max_outer {
        opts.max_outer = v;
    }
    if let Some(v) = run.tol_outer {
        opts.tol_outer = v;
    }
    let r = freeze_iterate(model, &x0, &x1, disc, &opts)?;
    out.control(&r.control)?;
    out.trajectory(&r.trajectory)?;
    out.report(json!({
        "certified": cert["admissible"] == true,
        "certificate": cert,
        "freeze": to_value(&r),
    }))?;
    Ok(not_converged_code(r.converged))
}

pub fn window(
    path: &Path,
    target: Option<&str>,
    windows: Option<usize>,
    force: bool,
    common: &Common,
) -> Outcome {
    let loaded = config::load(path)?;
    let out = Output::new("window", &loaded, common)?;
    let s = settings(&loaded, common)?;
    let (model, disc) = (&loaded.model, &loaded.disc);
    let (x0, x1) = endpoints(&loaded, target)?;
    let opts = WindowOptions {
        windows: windows.or(loaded.config.run.windows).unwrap_or(1),
        anchor: s.anchor,
        theta: s.theta,
        force,
        synthesis: synthesis_options(&loaded),
    };
    let r = window_synthesize(model, &x0, &x1, disc, &opts)?;
    out.csv("control.csv", |f| write_concatenated(f, &r.windows))?;
    out.csv("trajectory.csv", |f| {
        for (i, w) in r.windows.iter().enumerate() {
            let mut x = w.synthesis.trajectory.clone();
            if i > 0 {
                x.times.remove(0);
                x.states.remove(0);
                write_rows(f, &x)?;
            } else {
                x.write_csv(&mut *f)?;
            }
        }
        Ok(())
    })?;
    let converged = r.windows.iter().all(|w| w.synthesis.converged);
    out.report(to_value(&r))?;
    Ok(not_converged_code(converged))
}

/// Window controls joined on the full horizon; shared boundary nodes are
/// written once, with the later window's value.
fn write_concatenated(
    f: &mut std::fs::File,
    windows: &[nlgram::window::WindowOutcome],
) -> Result<()> {
    use std::io::Write;
    let k = windows.first().map_or(0, |w| w.synthesis.control.inputs());
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("u{i}")));
    let err = |e: std::io::Error| Error::Schema(format!("cannot write control: {e}"));
    writeln!(f, "{}", header.join(",")).map_err(err)?;
    for (i, w) in windows.iter().enumerate() {
        let u = &w.synthesis.control;
        let last = if i + 1 == windows.len() {
            u.nodes()
        } else {
            u.nodes() - 1
        };
        for j in 0..last {
            let row: Vec<String> = std::iter::once(u.time(j))
                .chain(u.node(j).iter().copied())
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(f, "{}", row.join(",")).map_err(err)?;
        }
    }
    Ok(())
}

fn write_rows(f: &mut std::fs::File, x: &Trajectory) -> Result<()> {
    use std::io::Write;
    let err = |e: std::io::Error| Error::Schema(format!("cannot write trajectory: {e}"));
    for (t, s) in x.times.iter().zip(&x.states) {
        let row: Vec<String> = std::iter::once(*t)
            .chain(s.iter().copied())
            .map(|v| format!("{v:.16e}"))
            .collect();
        writeln!(f, "{}", row.join(",")).map_err(err)?;
    }
    Ok(())
}

pub fn bounds(path: &Path, common: &Common) -> Outcome {
    let loaded = config::load(path)?;
    let out = Output::new("bounds", &loaded, common)?;
    let s = settings(&loaded, common)?;
    let model: &SystemModel = &loaded.model;
    let Some(cfg) = &loaded.config.run.bounds_check else {
        return Err(Error::Schema("run.bounds_check is required".into()).into());
    };
    let region = config::sampling_box(cfg, model.dimension)?;
    let report = validate_bounds(model, &region, cfg.samples, s.seed)?;
    out.report(to_value(&report))?;
    Ok(0)
}
