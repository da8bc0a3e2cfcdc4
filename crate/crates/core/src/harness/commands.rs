//! Subcommand implementations. Each returns the JSON document it wrote.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use serde_json::{json, Value};

use super::config::ExperimentConfig;
use super::content_hash;
use super::converge::{run_convergence, ConvergeSettings};
use crate::error::{Error, Result};
use crate::estimators::{hierarchical_mle, staged_posterior, ParameterSpace};
use crate::fbm::FbmIncrementModel;
use crate::field::{FieldRegistry, ParametricVectorField};
use crate::flow::respond;
use crate::fou::{fou_mle, DiffusionStats};
use crate::grid::{IncrementSet, ObservationSet, PiecewiseLinearPath};
use crate::inverse::{invert_dataset, jacobian_log_det, CoordinateSplit, NewtonOptions};
use crate::likelihood::{
    log_likelihood, log_likelihood_marginal, MarginalOptions, ScaledLogLik,
};

pub const OBSERVATIONS_CSV: &str = "observations.csv";
pub const DRIVER_CSV: &str = "driver.csv";

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_path(dir: &Path, name: &str, path: &PiecewiseLinearPath, prefix: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let mut buf = Vec::new();
    path.write_csv(&mut buf, prefix)?;
    fs::write(&target, buf)?;
    Ok(target)
}

struct Input {
    obs: ObservationSet,
    hash: String,
    path: PathBuf,
}

fn read_path(path: &Path, prefix: &str) -> Result<(PiecewiseLinearPath, String)> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let parsed = PiecewiseLinearPath::read_csv(bytes.as_slice(), prefix)?;
    Ok((parsed, content_hash(&bytes)))
}

fn load_input(cfg: &ExperimentConfig) -> Result<Input> {
    let path = cfg
        .input
        .clone()
        .ok_or_else(|| Error::Config("an observation CSV is required (input)".into()))?;
    let (obs, hash) = read_path(&path, "y")?;
    Ok(Input { obs, hash, path })
}

fn provenance(cfg: &ExperimentConfig, command: &str, input: Option<&Input>) -> Value {
    let mut v = json!({
        "command": command,
        "config": cfg,
    });
    if let Some(i) = input {
        v["input"] = json!({"path": i.path, "sha1": i.hash});
    }
    v
}

fn check_dims(field: &dyn ParametricVectorField, obs: &ObservationSet) -> Result<()> {
    if obs.dim() != field.state_dim() {
        return Err(Error::Dimension(format!(
            "observations have dimension {}, model '{}' has state dimension {}",
            obs.dim(),
            field.param_names().join(","),
            field.state_dim()
        )));
    }
    Ok(())
}

/// Samples a driver, responds through the field, writes both paths.
pub fn cmd_simulate(cfg: &ExperimentConfig, registry: &FieldRegistry) -> Result<Value> {
    let field = cfg.validate(registry)?;
    let partition = cfg.partition()?;
    let m = field.driver_dim();
    let seed = cfg.seed()?;
    let increments = if cfg.noise.zero {
        IncrementSet::new(partition.clone(), vec![DVector::zeros(m); partition.intervals()])?
    } else {
        FbmIncrementModel::new(cfg.noise.h, partition.clone())?.sample(m, seed)
    };
    let driver = increments.cumsum(&DVector::zeros(m))?;
    let y0 = cfg.initial_state(field.state_dim())?;
    let obs = respond(field.as_ref(), &y0, &driver, &cfg.model.theta, cfg.steps)?;
    let obs_path = write_path(&cfg.out, OBSERVATIONS_CSV, &obs, "y")?;
    let drv_path = write_path(&cfg.out, DRIVER_CSV, &driver, "x")?;
    let mut v = provenance(cfg, "simulate", None);
    v["outputs"] = json!({
        "observations": {"path": obs_path, "sha1": content_hash(&fs::read(&obs_path)?)},
        "driver": {"path": drv_path, "sha1": content_hash(&fs::read(&drv_path)?)},
    });
    v["intervals"] = json!(partition.intervals());
    write_json(&cfg.out, "simulate.json", &v)?;
    Ok(v)
}

pub fn cmd_invert(cfg: &ExperimentConfig, registry: &FieldRegistry) -> Result<Value> {
    let field = cfg.validate(registry)?;
    let input = load_input(cfg)?;
    check_dims(field.as_ref(), &input.obs)?;
    let opts = NewtonOptions::with_steps(cfg.steps);
    let inv = invert_dataset(&input.obs, &cfg.model.theta, field.as_ref(), &opts)?;
    let log_det = jacobian_log_det(&inv)?;
    let mut v = provenance(cfg, "invert", Some(&input));
    v["increments"] = json!(inv.increments.raw().iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>());
    v["z_dets"] = json!(inv.z_dets);
    v["newton_iters"] = json!(inv.newton_iters);
    v["residuals"] = json!(inv.residuals);
    v["jacobian_log_det"] = json!(log_det);
    if let Some(driver) = &cfg.driver {
        let (path, hash) = read_path(driver, "x")?;
        let truth = path.increments();
        if truth.len() != inv.increments.len() || truth.dim() != inv.increments.dim() {
            return Err(Error::Dimension("reference driver does not match the observations".into()));
        }
        let err = truth
            .raw()
            .iter()
            .zip(inv.increments.raw())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        v["driver"] = json!({"path": driver, "sha1": hash});
        v["max_abs_error"] = json!(err);
    }
    write_json(&cfg.out, "invert.json", &v)?;
    Ok(v)
}

fn noise_for(cfg: &ExperimentConfig, obs: &ObservationSet) -> Result<FbmIncrementModel> {
    FbmIncrementModel::new(cfg.noise.h, obs.partition().clone())
}

fn split_for(cfg: &ExperimentConfig, field: &dyn ParametricVectorField) -> Result<CoordinateSplit> {
    match &cfg.split {
        Some(s) => CoordinateSplit::new(s.clone(), field.driver_dim()),
        None => CoordinateSplit::leading(field.state_dim(), field.driver_dim()),
    }
}

/// Full log-likelihood (Case I) or its Monte-Carlo marginal (Case II).
fn evaluate(
    cfg: &ExperimentConfig,
    field: &dyn ParametricVectorField,
    obs: &ObservationSet,
    noise: &FbmIncrementModel,
    theta: &[f64],
) -> Result<Value> {
    let opts = NewtonOptions::with_steps(cfg.steps);
    if field.driver_dim() == field.state_dim() {
        Ok(serde_json::to_value(log_likelihood(obs, theta, field, noise, &opts)?)?)
    } else {
        let m = log_likelihood_marginal(
            obs,
            theta,
            field,
            noise,
            &MarginalOptions {
                samples: cfg.mc_samples,
                seed: cfg.seed()?,
                split: split_for(cfg, field)?,
                newton: opts,
            },
        )?;
        Ok(json!({"theta": theta, "loglik": m.value, "mc_stderr": m.mc_stderr,
                  "samples": m.samples, "failures": m.failures, "warning": m.warning}))
    }
}

pub fn cmd_loglik(cfg: &ExperimentConfig, registry: &FieldRegistry) -> Result<Value> {
    let field = cfg.validate(registry)?;
    let input = load_input(cfg)?;
    check_dims(field.as_ref(), &input.obs)?;
    let noise = noise_for(cfg, &input.obs)?;
    let mut v = provenance(cfg, "loglik", Some(&input));
    if cfg.theta_grid.is_some() {
        let axes = cfg.theta_grid(field.param_names().len())?;
        let space = ParameterSpace::new(field.param_names(), axes)?;
        let results = space
            .points()
            .iter()
            .map(|t| evaluate(cfg, field.as_ref(), &input.obs, &noise, t))
            .collect::<Result<Vec<_>>>()?;
        v["results"] = json!(results);
    } else {
        v["result"] = evaluate(cfg, field.as_ref(), &input.obs, &noise, &cfg.model.theta)?;
    }
    write_json(&cfg.out, "loglik.json", &v)?;
    Ok(v)
}

fn uses_fou_components(cfg: &ExperimentConfig) -> bool {
    cfg.model.id == "fou" && cfg.noise.h == 0.5
}

/// Scale components for the estimators: analytic for fOU with Brownian
/// noise, otherwise the full likelihood as a single order-0 component.
fn components(
    cfg: &ExperimentConfig,
    field: Arc<dyn ParametricVectorField>,
    obs: &ObservationSet,
) -> Result<ScaledLogLik> {
    if uses_fou_components(cfg) {
        return Ok(ScaledLogLik::fou(DiffusionStats::from_path(obs)?));
    }
    let noise = noise_for(cfg, obs)?;
    let cfg = cfg.clone();
    let obs = obs.clone();
    ScaledLogLik::new(
        vec![0.0],
        vec![Box::new(move |theta: &[f64]| {
            evaluate(&cfg, field.as_ref(), &obs, &noise, theta)
                .ok()
                .and_then(|v| v["loglik"].as_f64())
                .unwrap_or(f64::NEG_INFINITY)
        })],
        1.0,
    )
}

fn space_for(cfg: &ExperimentConfig, field: &dyn ParametricVectorField) -> Result<ParameterSpace> {
    if cfg.theta_grid.is_none() {
        return Err(Error::Config("a parameter grid is required (theta_grid)".into()));
    }
    ParameterSpace::new(field.param_names(), cfg.theta_grid(field.param_names().len())?)
}

pub fn cmd_mle(cfg: &ExperimentConfig, registry: &FieldRegistry) -> Result<Value> {
    let field = cfg.validate(registry)?;
    let input = load_input(cfg)?;
    check_dims(field.as_ref(), &input.obs)?;
    let space = space_for(cfg, field.as_ref())?;
    let comp = components(cfg, field.clone(), &input.obs)?;
    let mle = hierarchical_mle(&comp, &space)?;
    let mut v = provenance(cfg, "mle", Some(&input));
    v["method"] = json!(if uses_fou_components(cfg) { "scale_hierarchy" } else { "full_likelihood" });
    v["theta"] = json!(mle.theta);
    v["estimates"] = json!(mle.estimates);
    if uses_fou_components(cfg) {
        let (sigma2, lambda) = fou_mle(&input.obs)?;
        v["reference"] = json!({"sigma2": sigma2, "lambda": lambda});
        v["sigma2_hat"] = json!(mle.theta[1] * mle.theta[1]);
        v["lambda_hat"] = json!(mle.theta[0]);
    }
    write_json(&cfg.out, "mle.json", &v)?;
    Ok(v)
}

pub fn cmd_posterior(cfg: &ExperimentConfig, registry: &FieldRegistry) -> Result<Value> {
    let field = cfg.validate(registry)?;
    let input = load_input(cfg)?;
    check_dims(field.as_ref(), &input.obs)?;
    let space = space_for(cfg, field.as_ref())?;
    let comp = components(cfg, field.clone(), &input.obs)?;
    let prior = vec![1.0 / space.size() as f64; space.size()];
    let post = staged_posterior(&comp, &space, &prior)?;

    fs::create_dir_all(&cfg.out)?;
    let csv_path = cfg.out.join("posterior.csv");
    let mut wtr = csv::Writer::from_path(&csv_path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut header: Vec<String> = space.names().to_vec();
    header.extend((0..post.stages.len()).map(|s| format!("stage{s}")));
    wtr.write_record(&header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for (i, p) in post.points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        row.extend(post.stages.iter().map(|s| s[i].to_string()));
        wtr.write_record(&row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    drop(wtr);

    let mut v = provenance(cfg, "posterior", Some(&input));
    v["stages"] = json!(post.stages.len());
    v["mode"] = json!(post.mode());
    v["detected_orders"] = json!(post.detected_orders(&space));
    v["posterior_csv"] = json!({"path": csv_path, "sha1": content_hash(&fs::read(&csv_path)?)});
    write_json(&cfg.out, "posterior.json", &v)?;
    Ok(v)
}

pub fn cmd_converge(cfg: &ExperimentConfig, registry: &FieldRegistry) -> Result<Value> {
    let field = cfg.validate(registry)?;
    let levels = cfg.level_range()?;
    let max = *levels.last().expect("nonempty range");
    let settings = ConvergeSettings {
        n_ref: cfg.n_ref.unwrap_or(max + 4),
        levels,
        t_end: cfg.grid.t_end,
        h: cfg.noise.h,
        seed: cfg.seed()?,
        theta: cfg.model.theta.clone(),
        thetas: space_for(cfg, field.as_ref())?.points(),
        y0: cfg.initial_state(field.state_dim())?,
        steps: cfg.steps,
        p: cfg.p.unwrap_or(1.0 / cfg.noise.h + 0.5),
    };
    let report = run_convergence(field.as_ref(), &settings)?;
    fs::create_dir_all(&cfg.out)?;
    let plot = cfg.out.join("converge_plot.csv");
    report.write_plot_csv(fs::File::create(&plot)?)?;
    let mut v = provenance(cfg, "converge", None);
    v["report"] = serde_json::to_value(&report)?;
    v["strictly_decreasing"] = json!(report.strictly_decreasing());
    v["plot_csv"] = json!(plot);
    write_json(&cfg.out, "converge.json", &v)?;
    Ok(v)
}
