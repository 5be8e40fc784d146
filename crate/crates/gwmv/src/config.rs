//! Experiment configuration: one JSON document covering every subcommand.

use std::path::{Path, PathBuf};

use gwmv_core::barycenter::{BarycenterConfig, BarycenterInit};
use gwmv_core::embedding::{EmbeddingInit, GwMdsConfig};
use gwmv_core::geometry::{
    blob_centers, KnnGraphConfig, ManifoldKind, ManifoldSpec, ViewMetric, ViewTransform,
};
use gwmv_core::pipelines::MeanGwmdsConfig;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Manifold {
    SwissRoll,
    SCurve,
    Moebius,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobsConfig {
    pub count: usize,
    /// Distance between blob centers, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self {
            count: 4,
            separation: 10.0,
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub manifold: Manifold,
    pub n: usize,
    pub noise: f64,
    pub blobs: BlobsConfig,
    pub transforms: Vec<ViewTransform>,
    /// `None` picks geodesics for manifolds and Euclidean distances for
    /// blobs, whose k-NN graph falls apart into one piece per blob.
    pub metric: Option<ViewMetric>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            manifold: Manifold::SwissRoll,
            n: 500,
            noise: 0.0,
            blobs: BlobsConfig::default(),
            transforms: vec![
                ViewTransform::default_rotation(),
                ViewTransform::default_deformation(),
            ],
            metric: None,
        }
    }
}

impl GenerateConfig {
    pub fn manifold_spec(&self, seed: u64) -> ManifoldSpec {
        let kind = match self.manifold {
            Manifold::SwissRoll => ManifoldKind::SwissRoll,
            Manifold::SCurve => ManifoldKind::SCurve,
            Manifold::Moebius => ManifoldKind::Moebius,
            Manifold::Blobs => ManifoldKind::GaussianBlobs {
                centers: blob_centers(self.blobs.count, self.blobs.separation * self.blobs.sigma),
                sigma: self.blobs.sigma,
            },
        };
        ManifoldSpec {
            kind,
            n: self.n,
            seed,
            noise: self.noise,
        }
    }

    pub fn view_metric(&self) -> ViewMetric {
        self.metric.unwrap_or(match self.manifold {
            Manifold::Blobs => ViewMetric::Euclidean,
            _ => ViewMetric::default(),
        })
    }
}

/// How coordinate data becomes distance views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewsConfig {
    /// Recompute views from coordinates even when distance files exist.
    pub rebuild: bool,
    pub metric: ViewMetric,
}

impl Default for ViewsConfig {
    fn default() -> Self {
        Self {
            rebuild: false,
            metric: ViewMetric::Geodesic(KnnGraphConfig::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedMethod {
    BaryGwmds,
    BaselineAvgMds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub dataset: Option<PathBuf>,
    pub method: EmbedMethod,
    pub barycenter: BarycenterConfig,
    pub mds: GwMdsConfig,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            method: EmbedMethod::BaryGwmds,
            barycenter: BarycenterConfig::default(),
            mds: GwMdsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub dataset: Option<PathBuf>,
    pub k: usize,
    pub normalize_views: bool,
    pub mds: GwMdsConfig,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            k: 4,
            normalize_views: false,
            mds: MeanGwmdsConfig::default().mds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepCommand {
    Embed,
    Cluster,
}

/// One swept parameter. `parameter` is a dotted path into the config
/// (`cluster.mds.dim`) or one of the aliases `dim`, `k`, `k_neighbors`,
/// `restarts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub command: SweepCommand,
    pub axes: Vec<SweepAxis>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            command: SweepCommand::Cluster,
            axes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every random component gets its own stream from it.
    pub seed: u64,
    pub restarts: usize,
    pub output_dir: PathBuf,
    /// Worker threads for restarts and sweep points; 0 uses all cores.
    pub threads: usize,
    /// Treat non-convergence as a failure.
    pub strict: bool,
    pub generate: GenerateConfig,
    pub views: ViewsConfig,
    pub embed: EmbedConfig,
    pub cluster: ClusterConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 3,
            output_dir: PathBuf::from("out"),
            threads: 0,
            strict: false,
            generate: GenerateConfig::default(),
            views: ViewsConfig::default(),
            embed: EmbedConfig::default(),
            cluster: ClusterConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Seed streams handed out from the root seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum SeedStream {
    Manifold = 1,
    Barycenter = 2,
    BarycenterInner = 3,
    Embedding = 4,
    EmbeddingPlan = 5,
    Clustering = 6,
    ClusteringPlan = 7,
}

pub fn derive_seed(root: u64, stream: SeedStream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

fn reseed_mds(mds: &mut GwMdsConfig, seed: u64, plan_seed: u64) {
    mds.init = match &mds.init {
        EmbeddingInit::RandomGaussian { scale, .. } => EmbeddingInit::RandomGaussian {
            seed,
            scale: *scale,
        },
        given => given.clone(),
    };
    mds.plan_restarts.seed = plan_seed;
}

impl ExperimentConfig {
    /// Reads a config file. A run manifest is accepted too: its `config`
    /// member is used.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let value = match value {
            Value::Object(mut m) if m.contains_key("command") && m.contains_key("config") => {
                m.remove("config").expect("checked above")
            }
            v => v,
        };
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, CliError> {
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    /// Overwrites every component seed with a stream of the root seed.
    pub fn resolve_seeds(&mut self) {
        let root = self.seed;
        if let BarycenterInit::RandomSymmetric { .. } = self.embed.barycenter.init {
            self.embed.barycenter.init = BarycenterInit::RandomSymmetric {
                seed: derive_seed(root, SeedStream::Barycenter),
            };
        }
        self.embed.barycenter.inner_restarts.seed = derive_seed(root, SeedStream::BarycenterInner);
        reseed_mds(
            &mut self.embed.mds,
            derive_seed(root, SeedStream::Embedding),
            derive_seed(root, SeedStream::EmbeddingPlan),
        );
        reseed_mds(
            &mut self.cluster.mds,
            derive_seed(root, SeedStream::Clustering),
            derive_seed(root, SeedStream::ClusteringPlan),
        );
    }

    pub fn manifold_seed(&self) -> u64 {
        derive_seed(self.seed, SeedStream::Manifold)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }

    /// Sets a dotted path (or alias) to `value`, type-checked by
    /// re-parsing the whole config.
    pub fn with_parameter(
        &self,
        command: SweepCommand,
        parameter: &str,
        value: &Value,
    ) -> Result<Self, CliError> {
        let path = resolve_alias(command, parameter);
        let mut root = self.to_value();
        let (parent, last) = match path.rsplit_once('.') {
            Some((head, last)) => (format!("/{}", head.replace('.', "/")), last),
            None => (String::new(), path.as_str()),
        };
        let obj = root
            .pointer_mut(&parent)
            .and_then(Value::as_object_mut)
            .ok_or_else(|| invalid_sweep(parameter, "unknown field"))?;
        if !obj.contains_key(last) {
            return Err(invalid_sweep(parameter, "unknown field"));
        }
        obj.insert(last.to_string(), value.clone());
        serde_json::from_value(root)
            .map_err(|e| CliError::InvalidSweepParameter(format!("{parameter} = {value}: {e}")))
    }
}

fn invalid_sweep(parameter: &str, why: &str) -> CliError {
    CliError::InvalidSweepParameter(format!("{parameter}: {why}"))
}

/// Expands the sweep aliases `dim`, `k` and `k_neighbors` to config paths.
pub fn resolve_alias(command: SweepCommand, parameter: &str) -> String {
    let section = match command {
        SweepCommand::Embed => "embed",
        SweepCommand::Cluster => "cluster",
    };
    match parameter {
        "dim" => format!("{section}.mds.dim"),
        "k" => "cluster.k".to_string(),
        "k_neighbors" => "views.metric.k_neighbors".to_string(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_value(cfg.to_value()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let v: Value = serde_json::json!({"seed": 1, "bogus": 2});
        assert!(matches!(
            ExperimentConfig::from_value(v),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn sweep_paths_type_check() {
        let cfg = ExperimentConfig::default();
        let c = cfg
            .with_parameter(SweepCommand::Cluster, "dim", &serde_json::json!(8))
            .unwrap();
        assert_eq!(c.cluster.mds.dim, 8);
        let c = cfg
            .with_parameter(SweepCommand::Cluster, "k_neighbors", &serde_json::json!(5))
            .unwrap();
        assert_eq!(
            c.views.metric,
            ViewMetric::Geodesic(KnnGraphConfig {
                k_neighbors: 5,
                ..Default::default()
            })
        );
        assert!(matches!(
            cfg.with_parameter(SweepCommand::Cluster, "dim", &serde_json::json!("two")),
            Err(CliError::InvalidSweepParameter(_))
        ));
        assert!(matches!(
            cfg.with_parameter(SweepCommand::Cluster, "cluster.nope", &serde_json::json!(1)),
            Err(CliError::InvalidSweepParameter(_))
        ));
    }

    #[test]
    fn seed_streams_differ() {
        assert_ne!(
            derive_seed(0, SeedStream::Barycenter),
            derive_seed(0, SeedStream::Embedding)
        );
        assert_eq!(
            derive_seed(9, SeedStream::Manifold),
            derive_seed(9, SeedStream::Manifold)
        );
    }
}
