//! Subcommands. Each writes into its own output directory and finishes
//! with a `manifest.json` holding the config it ran with.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gwmv_core::executor::Executor;
use gwmv_core::geometry::{generate_manifold, views_from_coordinates};
use gwmv_core::matrix::Matrix;
use gwmv_core::metrics::{distance_correlation, evaluate_clustering};
use gwmv_core::pipelines::{
    average_mds, bary_gwmds_on, labels_as_i64, mean_gwmds_c_on, MeanGwmdsConfig,
};
use gwmv_core::relational::{euclidean_distances, Embedding};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{resolve_alias, EmbedMethod, ExperimentConfig, SweepCommand};
use crate::dataset::{load_dataset, Dataset};
use crate::error::CliError;
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Embed,
    Cluster,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Generate => "generate",
            Self::Embed => "embed",
            Self::Cluster => "cluster",
            Self::Sweep => "sweep",
        }
    }
}

/// Runs independent work on a rayon pool; results keep input order, so
/// output does not depend on the thread count.
pub struct PoolExecutor {
    pool: rayon::ThreadPool,
}

impl PoolExecutor {
    /// `threads = 0` uses one thread per core.
    pub fn new(threads: usize) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {threads} threads: {e}")))?;
        Ok(Self { pool })
    }
}

impl Executor for PoolExecutor {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}

/// What a command reports. A strict-mode failure still leaves its output
/// files and manifest behind.
struct Outcome {
    summary: Value,
    failure: Option<CliError>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Self {
            summary,
            failure: None,
        }
    }
}

/// Runs `command` with `cfg` into `cfg.output_dir` and writes the manifest.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let exec = PoolExecutor::new(cfg.threads)?;
    run_with(command, cfg, &exec)
}

fn run_with(
    command: Command,
    cfg: &ExperimentConfig,
    exec: &PoolExecutor,
) -> Result<Value, CliError> {
    if cfg.restarts == 0 {
        return Err(CliError::Config("restarts must be at least 1".into()));
    }
    let start = Instant::now();
    let out = cfg.output_dir.as_path();
    let mut resolved = cfg.clone();
    resolved.resolve_seeds();
    let outcome = match command {
        Command::Generate => generate(&resolved, out)?,
        Command::Embed => embed(&resolved, exec, out)?,
        Command::Cluster => cluster(&resolved, exec, out)?,
        Command::Sweep => sweep(cfg, exec, out)?,
    };
    let manifest = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.to_value(),
        "summary": outcome.summary,
        "runtime_seconds": start.elapsed().as_secs_f64(),
    });
    io::write_json(&out.join("manifest.json"), &manifest)?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.cols(), |i, j| m[(rows[i], j)])
}

fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let g = &cfg.generate;
    if g.transforms.is_empty() {
        return Err(CliError::Config("generate.transforms is empty".into()));
    }
    // Everything is computed before the first file is written, so a bad
    // neighbourhood size leaves no partial dataset behind.
    let sample = generate_manifold(&g.manifold_spec(cfg.manifold_seed()))?;
    let clouds = g
        .transforms
        .iter()
        .map(|t| t.apply(&sample.points))
        .collect::<Result<Vec<_>, _>>()?;
    let built = views_from_coordinates(&clouds, &g.view_metric(), sample.labels.as_deref())?;
    if built.kept.len() < g.n {
        log::warn!(
            "kept {} of {} samples connected in every view",
            built.kept.len(),
            g.n
        );
    }

    create_dir(out)?;
    let header: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    io::write_matrix(
        &out.join("points.csv"),
        &select_rows(&sample.points, &built.kept),
        Some(&header),
    )?;
    io::write_matrix(
        &out.join("params.csv"),
        &select_rows(&sample.latent, &built.kept),
        Some(&sample.latent_names),
    )?;
    let mut files = vec!["points.csv".to_string(), "params.csv".to_string()];
    for (s, v) in built.dataset.views().iter().enumerate() {
        let name = format!("view_{}.csv", s + 1);
        io::write_matrix(&out.join(&name), v.matrix(), None)?;
        files.push(name);
    }
    if let Some(labels) = built.dataset.labels() {
        io::write_labels(&out.join("labels.csv"), labels)?;
        files.push("labels.csv".into());
    }
    Ok(Outcome::ok(json!({
        "n": built.kept.len(),
        "dropped": g.n - built.kept.len(),
        "views": built.dataset.num_views(),
        "files": files,
    })))
}

fn dataset_for(
    dataset: Option<&PathBuf>,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<Dataset, CliError> {
    let dir = dataset.ok_or_else(|| CliError::Config("no dataset directory given".into()))?;
    if let (Ok(a), Ok(b)) = (dir.canonicalize(), out.canonicalize()) {
        if a == b {
            return Err(CliError::Config(
                "output directory must differ from the dataset directory".into(),
            ));
        }
    }
    load_dataset(dir, &cfg.views)
}

fn write_kept(out: &Path, ds: &Dataset) -> Result<(), CliError> {
    if ds.kept.len() < ds.original_size {
        let kept: Vec<i64> = ds.kept.iter().map(|&i| i as i64).collect();
        io::write_labels(&out.join("kept.csv"), &kept)?;
    }
    Ok(())
}

/// Per-view Pearson correlations between embedding and view distances,
/// keyed `view_1`, `view_2`, ... plus their `mean`.
fn correlations(embedding: &Embedding, ds: &Dataset) -> Result<Map<String, Value>, CliError> {
    let de = euclidean_distances(embedding.matrix())?;
    let mut m = Map::new();
    let mut sum = 0.0;
    for (s, v) in ds.views.views().iter().enumerate() {
        let c = distance_correlation(&de, v)?;
        sum += c;
        m.insert(format!("view_{}", s + 1), json!(c));
    }
    m.insert("mean".into(), json!(sum / ds.views.num_views() as f64));
    Ok(m)
}

fn embed(cfg: &ExperimentConfig, exec: &PoolExecutor, out: &Path) -> Result<Outcome, CliError> {
    let ds = dataset_for(cfg.embed.dataset.as_ref(), cfg, out)?;
    let e = &cfg.embed;
    let (embedding, mut summary, converged) = match e.method {
        EmbedMethod::BaryGwmds => {
            let r = bary_gwmds_on(exec, &ds.views, &e.barycenter, &e.mds, cfg.restarts)?;
            create_dir(out)?;
            io::write_matrix(
                &out.join("barycenter.csv"),
                r.barycenter.barycenter.matrix(),
                None,
            )?;
            io::write_matrix(
                &out.join("support_embedding.csv"),
                r.support.matrix(),
                Some(&io::numbered_header("y", r.support.dim())),
            )?;
            io::write_trace(&out.join("trace.csv"), &r.mds.trace)?;
            let bary_objective = r.barycenter.objective_trace.last().copied();
            let summary = json!({
                "barycenter_objective": bary_objective,
                "barycenter_iterations": r.barycenter.iterations,
                "barycenter_converged": r.barycenter.converged,
                "gw_cost": r.mds.cost,
                "mds_outer_iterations": r.mds.outer_iterations,
                "mds_converged": r.mds.converged,
                "mds_stalled": r.mds.stalled,
            });
            let converged = r.barycenter.converged && r.mds.converged;
            (r.embedding, summary, converged)
        }
        EmbedMethod::BaselineAvgMds => {
            let y = average_mds(&ds.views, e.mds.dim)?;
            create_dir(out)?;
            io::write_trace(&out.join("trace.csv"), &[])?;
            (y, json!({}), true)
        }
    };
    io::write_matrix(
        &out.join("embedding.csv"),
        embedding.matrix(),
        Some(&io::numbered_header("y", embedding.dim())),
    )?;
    write_kept(out, &ds)?;
    let mut metrics = correlations(&embedding, &ds)?;
    metrics.insert(
        "method".into(),
        serde_json::to_value(e.method).expect("enum serialises"),
    );
    io::write_json(&out.join("metrics.json"), &metrics)?;

    let obj = summary.as_object_mut().expect("summary is an object");
    obj.insert("n".into(), json!(ds.views.n()));
    obj.insert("metrics".into(), Value::Object(metrics));
    let failure = (cfg.strict && !converged)
        .then(|| CliError::Numerical("embedding did not converge".into()));
    Ok(Outcome { summary, failure })
}

fn cluster(cfg: &ExperimentConfig, exec: &PoolExecutor, out: &Path) -> Result<Outcome, CliError> {
    let ds = dataset_for(cfg.cluster.dataset.as_ref(), cfg, out)?;
    let c = &cfg.cluster;
    let mcfg = MeanGwmdsConfig {
        mds: c.mds.clone(),
        normalize_views: c.normalize_views,
        restarts: cfg.restarts,
    };
    let r = mean_gwmds_c_on(exec, &ds.views, c.k, &mcfg)?;
    let cl = &r.clusters;

    create_dir(out)?;
    let predicted = labels_as_i64(&cl.hard_labels);
    io::write_labels(&out.join("labels.csv"), &predicted)?;
    io::write_matrix(
        &out.join("prototypes.csv"),
        cl.prototypes.matrix(),
        Some(&io::numbered_header("y", cl.prototypes.dim())),
    )?;
    let k_header = io::numbered_header("c", c.k);
    io::write_matrix(&out.join("plan.csv"), cl.plan.matrix(), Some(&k_header))?;
    io::write_matrix(
        &out.join("soft_assignments.csv"),
        &cl.soft_assignments,
        Some(&k_header),
    )?;
    io::write_trace(&out.join("trace.csv"), &r.mds.trace)?;
    write_kept(out, &ds)?;

    let mut metrics = Map::new();
    match ds.views.labels() {
        Some(truth) => {
            let ev = evaluate_clustering(truth, &predicted)?;
            metrics.insert("nmi".into(), json!(ev.nmi));
            metrics.insert("ari".into(), json!(ev.ari));
        }
        None => {
            log::warn!("dataset has no labels.csv; skipping NMI and ARI");
            metrics.insert("no_ground_truth".into(), json!(true));
        }
    }
    metrics.insert("cluster_mass".into(), json!(cl.cluster_mass));
    io::write_json(&out.join("metrics.json"), &metrics)?;

    let summary = json!({
        "n": ds.views.n(),
        "k": c.k,
        "srgw_cost": cl.cost,
        "mds_outer_iterations": r.mds.outer_iterations,
        "mds_converged": r.mds.converged,
        "mds_stalled": r.mds.stalled,
        "metrics": metrics,
    });
    let failure = (cfg.strict && !r.mds.converged)
        .then(|| CliError::Numerical("clustering did not converge".into()));
    Ok(Outcome { summary, failure })
}

fn run_dir_name(index: usize, parameter: &str, value: &Value) -> String {
    let raw = match value {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    };
    let clean: String = format!("{parameter}_{raw}")
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("run_{:03}_{clean}", index + 1)
}

fn value_cell(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

fn metric_cell(metrics: &Value, key: &str) -> String {
    metrics
        .get(key)
        .and_then(Value::as_f64)
        .map(io::format_number)
        .unwrap_or_default()
}

/// One run per axis value, each axis varied on its own from the base
/// config.
fn sweep(base: &ExperimentConfig, exec: &PoolExecutor, out: &Path) -> Result<Outcome, CliError> {
    let command = base.sweep.command;
    if base.sweep.axes.is_empty() {
        return Err(CliError::InvalidSweepParameter("sweep has no axes".into()));
    }
    let mut points = Vec::new();
    for axis in &base.sweep.axes {
        if axis.values.is_empty() {
            return Err(CliError::InvalidSweepParameter(format!(
                "{}: no values",
                axis.parameter
            )));
        }
        for value in &axis.values {
            let mut cfg = base.with_parameter(command, &axis.parameter, value)?;
            if resolve_alias(command, &axis.parameter).starts_with("views.") {
                cfg.views.rebuild = true;
            }
            cfg.output_dir = out.join(run_dir_name(points.len(), &axis.parameter, value));
            cfg.sweep = Default::default();
            points.push((axis.parameter.clone(), value.clone(), cfg));
        }
    }
    create_dir(out)?;
    let sub = match command {
        SweepCommand::Embed => Command::Embed,
        SweepCommand::Cluster => Command::Cluster,
    };
    let results = exec.map(points, |(parameter, value, cfg)| {
        let start = Instant::now();
        let manifest = run_with(sub, &cfg, exec);
        (
            parameter,
            value,
            cfg,
            manifest,
            start.elapsed().as_secs_f64(),
        )
    });

    let mut rows = Vec::new();
    let mut views = 0;
    let mut done = Vec::new();
    for (parameter, value, cfg, manifest, seconds) in results {
        let manifest = manifest?;
        let metrics = manifest["summary"]["metrics"].clone();
        views = views.max(
            (1..)
                .take_while(|s| metrics.get(format!("view_{s}")).is_some())
                .count(),
        );
        done.push(json!({
            "parameter": parameter,
            "value": value,
            "dir": cfg.output_dir.file_name().map(|s| s.to_string_lossy().into_owned()),
        }));
        rows.push((parameter, value, metrics, seconds));
    }

    let metric_keys: Vec<String> = match command {
        SweepCommand::Cluster => vec!["nmi".into(), "ari".into()],
        SweepCommand::Embed => (1..=views)
            .map(|s| format!("view_{s}"))
            .chain(["mean".to_string()])
            .collect(),
    };
    let mut header = vec!["parameter".to_string(), "value".to_string()];
    header.extend(metric_keys.iter().cloned());
    header.push("runtime_seconds".into());
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|(parameter, value, metrics, seconds)| {
            let mut r = vec![parameter.clone(), value_cell(value)];
            r.extend(metric_keys.iter().map(|k| metric_cell(metrics, k)));
            r.push(seconds.to_string());
            r
        })
        .collect();
    io::write_rows(&out.join("sweep.csv"), &header, &table)?;
    Ok(Outcome::ok(json!({ "runs": done })))
}
