use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gwmv::commands::{self, Command};
use gwmv::config::{EmbedMethod, ExperimentConfig, Manifold, SweepAxis, SweepCommand};
use gwmv::error::CliError;
use gwmv_core::geometry::{KnnGraphConfig, ViewMetric};
use serde_json::Value;

/// Gromov-Wasserstein multi-view embedding and clustering.
#[derive(Debug, Parser)]
#[command(name = "gwmv", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Root seed for every random component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restarts of each non-convex stage.
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// JSON config file, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 4 when an optimizer does not converge.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Sample a synthetic manifold and write its distance views.
    Generate {
        #[arg(long, value_enum)]
        manifold: Option<ManifoldArg>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        /// Geodesic views on a k-NN graph with this many neighbours.
        #[arg(long)]
        k_neighbors: Option<usize>,
    },
    /// Embed a multi-view dataset.
    Embed {
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<EmbedMethod>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Cluster a multi-view dataset with k prototypes.
    Cluster {
        dataset: Option<PathBuf>,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Scale each view to unit mean distance before averaging.
        #[arg(long)]
        normalize_views: bool,
    },
    /// Rerun embed or cluster over a list of parameter values.
    Sweep {
        #[arg(long = "command", value_enum)]
        sweep_command: Option<SweepCommand>,
        /// Dataset for every run.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Parameter path, e.g. `dim`, `k_neighbors`, `cluster.mds.lr`.
        #[arg(long, requires = "values")]
        param: Option<String>,
        /// Comma-separated values; each is read as JSON when it parses.
        #[arg(long, value_delimiter = ',', requires = "param")]
        values: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ManifoldArg {
    SwissRoll,
    SCurve,
    Moebius,
    Blobs,
}

impl From<ManifoldArg> for Manifold {
    fn from(m: ManifoldArg) -> Self {
        match m {
            ManifoldArg::SwissRoll => Manifold::SwissRoll,
            ManifoldArg::SCurve => Manifold::SCurve,
            ManifoldArg::Moebius => Manifold::Moebius,
            ManifoldArg::Blobs => Manifold::Blobs,
        }
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn build_config(cli: &Cli) -> Result<(Command, ExperimentConfig), CliError> {
    let mut cfg = match &cli.global.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let g = &cli.global;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(r) = g.restarts {
        cfg.restarts = r;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    cfg.strict |= g.strict;

    let command = match &cli.command {
        Sub::Generate {
            manifold,
            n,
            noise,
            k_neighbors,
        } => {
            let gen = &mut cfg.generate;
            if let Some(m) = manifold {
                gen.manifold = (*m).into();
            }
            if let Some(n) = n {
                gen.n = *n;
            }
            if let Some(x) = noise {
                gen.noise = *x;
            }
            if let Some(k) = k_neighbors {
                let base = match gen.metric {
                    Some(ViewMetric::Geodesic(c)) => c,
                    _ => KnnGraphConfig::default(),
                };
                gen.metric = Some(ViewMetric::Geodesic(KnnGraphConfig {
                    k_neighbors: *k,
                    ..base
                }));
            }
            Command::Generate
        }
        Sub::Embed {
            dataset,
            method,
            dim,
        } => {
            let e = &mut cfg.embed;
            if let Some(d) = dataset {
                e.dataset = Some(d.clone());
            }
            if let Some(m) = method {
                e.method = *m;
            }
            if let Some(d) = dim {
                e.mds.dim = *d;
            }
            Command::Embed
        }
        Sub::Cluster {
            dataset,
            k,
            dim,
            normalize_views,
        } => {
            let c = &mut cfg.cluster;
            if let Some(d) = dataset {
                c.dataset = Some(d.clone());
            }
            if let Some(k) = k {
                c.k = *k;
            }
            if let Some(d) = dim {
                c.mds.dim = *d;
            }
            c.normalize_views |= normalize_views;
            Command::Cluster
        }
        Sub::Sweep {
            sweep_command,
            dataset,
            param,
            values,
        } => {
            if let Some(c) = sweep_command {
                cfg.sweep.command = *c;
            }
            if let Some(d) = dataset {
                cfg.embed.dataset = Some(d.clone());
                cfg.cluster.dataset = Some(d.clone());
            }
            if let Some(p) = param {
                cfg.sweep.axes = vec![SweepAxis {
                    parameter: p.clone(),
                    values: values.iter().map(|v| parse_value(v.trim())).collect(),
                }];
            }
            Command::Sweep
        }
    };
    Ok((command, cfg))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = build_config(&cli).and_then(|(command, cfg)| commands::run(command, &cfg));
    match result {
        Ok(manifest) => {
            log::info!("wrote {}", manifest["config"]["output_dir"]);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gwmv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
