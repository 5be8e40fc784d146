//! Dataset directories.
//!
//! A dataset directory holds either precomputed distance views
//! (`view_1.csv`, `view_2.csv`, ...) or per-view coordinates
//! (`features_1.csv`, ...), plus an optional `labels.csv`. A features
//! file may instead carry labels in its last column under a `# labels`
//! row. Directories written by `generate` also keep `points.csv` and a
//! manifest, so their views can be rebuilt with other neighbourhood
//! settings.

use std::path::{Path, PathBuf};

use gwmv_core::geometry::{views_from_coordinates, ViewTransform};
use gwmv_core::matrix::Matrix;
use gwmv_core::relational::{validate_distance_matrix, MultiViewDataset};
use serde_json::Value;

use crate::config::{ExperimentConfig, ViewsConfig};
use crate::error::CliError;
use crate::io;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub views: MultiViewDataset,
    /// Indices into the files' rows of the samples kept in every view.
    pub kept: Vec<usize>,
    pub original_size: usize,
}

fn numbered_files(dir: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for s in 1.. {
        let p = dir.join(format!("{prefix}_{s}.csv"));
        if !p.is_file() {
            break;
        }
        files.push(p);
    }
    files
}

fn read_optional_labels(dir: &Path) -> Result<Option<Vec<i64>>, CliError> {
    let p = dir.join("labels.csv");
    if p.is_file() {
        Ok(Some(io::read_labels(&p)?))
    } else {
        Ok(None)
    }
}

/// Transforms recorded by `generate` in the dataset manifest.
fn generated_transforms(dir: &Path) -> Result<Option<Vec<ViewTransform>>, CliError> {
    let p = dir.join("manifest.json");
    if !p.is_file() || !dir.join("points.csv").is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    if v.get("command").and_then(Value::as_str) != Some("generate") {
        return Ok(None);
    }
    let cfg = ExperimentConfig::from_value(v["config"].clone())?;
    Ok(Some(cfg.generate.transforms))
}

pub fn load_dataset(dir: &Path, views_cfg: &ViewsConfig) -> Result<Dataset, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!(
            "dataset directory {} not found",
            dir.display()
        )));
    }
    let mut labels = read_optional_labels(dir)?;
    let distance_files = numbered_files(dir, "view");
    if !views_cfg.rebuild && !distance_files.is_empty() {
        let views = distance_files
            .iter()
            .map(|p| {
                let m = io::read_matrix(p)?;
                validate_distance_matrix(m)
                    .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n = views[0].size();
        let views = MultiViewDataset::new(views, labels)?;
        return Ok(Dataset {
            views,
            kept: (0..n).collect(),
            original_size: n,
        });
    }

    let feature_files = numbered_files(dir, "features");
    let clouds: Vec<Matrix> = if !feature_files.is_empty() {
        let mut clouds = Vec::with_capacity(feature_files.len());
        for p in &feature_files {
            let (m, file_labels) = io::read_coordinates(p)?;
            if labels.is_none() {
                labels = file_labels;
            }
            clouds.push(m);
        }
        clouds
    } else if let Some(transforms) = generated_transforms(dir)? {
        let points = io::read_matrix(&dir.join("points.csv"))?;
        transforms
            .iter()
            .map(|t| t.apply(&points))
            .collect::<Result<_, _>>()?
    } else {
        return Err(CliError::Data(format!(
            "{} has no view_*.csv, features_*.csv or generated points",
            dir.display()
        )));
    };
    let original_size = clouds[0].rows();
    let built = views_from_coordinates(&clouds, &views_cfg.metric, labels.as_deref())?;
    if built.kept.len() < original_size {
        log::warn!(
            "kept {} of {original_size} samples present in every view's largest component",
            built.kept.len()
        );
    }
    Ok(Dataset {
        views: built.dataset,
        kept: built.kept,
        original_size,
    })
}
