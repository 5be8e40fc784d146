//! End-to-end methods: Bary-GWMDS embedding and Mean-GWMDS-C clustering.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::barycenter::{gw_barycenter_multistart_on, BarycenterConfig, BarycenterResult};
use crate::embedding::{gwmds_embed_multistart_on, GwMdsConfig, GwMdsResult, PlanSolver};
use crate::error::{Error, Result};
use crate::executor::{Executor, Sequential};
use crate::gw::Restarts;
use crate::matrix::Matrix;
use crate::relational::{
    uniform_measure, DiscreteMeasure, DistanceMatrix, Embedding, MultiViewDataset, TransportPlan,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaryGwmdsResult {
    /// One point per sample, carried from the support through the view-1
    /// and embedding plans.
    pub embedding: Embedding,
    /// Embedding of the barycenter support points.
    pub support: Embedding,
    pub barycenter: BarycenterResult,
    pub mds: GwMdsResult,
}

/// Bary-GWMDS: GW barycenter of the views, then GW-MDS of the barycenter.
/// Both stages run `restarts` starts and keep their best objective.
pub fn bary_gwmds(
    views: &MultiViewDataset,
    bary_cfg: &BarycenterConfig,
    mds_cfg: &GwMdsConfig,
    restarts: usize,
) -> Result<BaryGwmdsResult> {
    bary_gwmds_on(&Sequential, views, bary_cfg, mds_cfg, restarts)
}

/// [`bary_gwmds`] with restarts run by `exec`.
pub fn bary_gwmds_on<E: Executor>(
    exec: &E,
    views: &MultiViewDataset,
    bary_cfg: &BarycenterConfig,
    mds_cfg: &GwMdsConfig,
    restarts: usize,
) -> Result<BaryGwmdsResult> {
    let n = views.n();
    let cfg = BarycenterConfig {
        support_size: Some(n),
        ..bary_cfg.clone()
    };
    let mu = uniform_measure(n)?;
    let barycenter = gw_barycenter_multistart_on(exec, views, &mu, &cfg, restarts)?;
    let mds = gwmds_embed_multistart_on(
        exec,
        &barycenter.barycenter,
        &mu,
        &mu,
        mds_cfg,
        PlanSolver::Full,
        restarts,
    )?;
    let embedding = align_to_samples(&barycenter.plans[0], &mds)?;
    Ok(BaryGwmdsResult {
        embedding,
        support: mds.embedding.clone(),
        barycenter,
        mds,
    })
}

/// Barycentric projection of the embedded support onto the samples through
/// the composite plan `T_view · T_mds`.
pub fn align_to_samples(view_plan: &TransportPlan, mds: &GwMdsResult) -> Result<Embedding> {
    if view_plan.cols() != mds.plan.rows() {
        return Err(Error::ShapeMismatch {
            expected: mds.plan.rows(),
            found: view_plan.cols(),
        });
    }
    let composite = view_plan.matrix().matmul(mds.plan.matrix());
    let mut points = composite.matmul(mds.embedding.matrix());
    for (i, w) in composite.row_sums().into_iter().enumerate() {
        if w > 0.0 {
            points.row_mut(i).iter_mut().for_each(|x| *x /= w);
        }
    }
    Embedding::new(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub hard_labels: Vec<usize>,
    /// Row `i` is the plan row divided by `μ_i`.
    pub soft_assignments: Matrix,
    pub cluster_mass: Vec<f64>,
}

/// Reads clusters off an `n × k` plan; argmax ties go to the lowest index.
pub fn extract_clusters(plan: &TransportPlan, mu: &DiscreteMeasure) -> Result<ClusterAssignment> {
    if plan.rows() != mu.len() {
        return Err(Error::ShapeMismatch {
            expected: mu.len(),
            found: plan.rows(),
        });
    }
    let t = plan.matrix();
    let k = plan.cols();
    let mut hard = Vec::with_capacity(plan.rows());
    let mut soft = Matrix::zeros(plan.rows(), k);
    for (i, &m) in mu.weights().iter().enumerate() {
        let row = t.row(i);
        let best = (1..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        hard.push(best);
        if m > 0.0 {
            for (s, &x) in soft.row_mut(i).iter_mut().zip(row) {
                *s = x / m;
            }
        } else {
            soft[(i, best)] = 1.0;
        }
    }
    Ok(ClusterAssignment {
        hard_labels: hard,
        soft_assignments: soft,
        cluster_mass: t.col_sums(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    /// `k × d` prototype coordinates.
    pub prototypes: Embedding,
    /// `n × k` semi-relaxed plan.
    pub plan: TransportPlan,
    pub hard_labels: Vec<usize>,
    pub soft_assignments: Matrix,
    pub cluster_mass: Vec<f64>,
    /// srGW objective of `plan`.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanGwmdsConfig {
    pub mds: GwMdsConfig,
    /// Divide each view by its mean off-diagonal distance before averaging.
    pub normalize_views: bool,
    pub restarts: usize,
}

impl Default for MeanGwmdsConfig {
    fn default() -> Self {
        Self {
            // With two prototypes the product plan is an exact saddle of the
            // semi-relaxed problem, so the first solve also tries random plans.
            mds: GwMdsConfig {
                plan_restarts: Restarts::default(),
                ..GwMdsConfig::default()
            },
            normalize_views: false,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanGwmdsResult {
    pub clusters: ClusteringResult,
    /// The averaged view matrix the prototypes were fit to.
    pub mean: DistanceMatrix,
    pub mds: GwMdsResult,
}

/// Entrywise mean of the views, optionally after scaling each to unit mean
/// off-diagonal distance.
pub fn mean_view(views: &MultiViewDataset, normalize: bool) -> Result<DistanceMatrix> {
    if !normalize {
        return DistanceMatrix::mean_of(views.views());
    }
    let scaled = views
        .views()
        .iter()
        .map(|v| {
            let m = v.off_diagonal_mean();
            if m > 0.0 {
                v.scaled(1.0 / m)
            } else {
                Ok(v.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    DistanceMatrix::mean_of(&scaled)
}

/// Mean-GWMDS-C with `k` prototypes.
pub fn mean_gwmds_c(
    views: &MultiViewDataset,
    k: usize,
    cfg: &MeanGwmdsConfig,
) -> Result<MeanGwmdsResult> {
    mean_gwmds_c_on(&Sequential, views, k, cfg)
}

/// [`mean_gwmds_c`] with restarts run by `exec`.
pub fn mean_gwmds_c_on<E: Executor>(
    exec: &E,
    views: &MultiViewDataset,
    k: usize,
    cfg: &MeanGwmdsConfig,
) -> Result<MeanGwmdsResult> {
    let n = views.n();
    if k == 0 || k > n {
        return Err(Error::PrototypeCountExceedsSamples { k, n });
    }
    let mean = mean_view(views, cfg.normalize_views)?;
    let mu = uniform_measure(n)?;
    let nu = uniform_measure(k)?;
    let mds = gwmds_embed_multistart_on(
        exec,
        &mean,
        &mu,
        &nu,
        &cfg.mds,
        PlanSolver::SemiRelaxed,
        cfg.restarts,
    )?;
    let assignment = extract_clusters(&mds.plan, &mu)?;
    let clusters = ClusteringResult {
        prototypes: mds.embedding.clone(),
        plan: mds.plan.clone(),
        hard_labels: assignment.hard_labels,
        soft_assignments: assignment.soft_assignments,
        cluster_mass: assignment.cluster_mass,
        cost: mds.cost,
    };
    Ok(MeanGwmdsResult {
        clusters,
        mean,
        mds,
    })
}

/// Baseline: classical MDS of the averaged views.
pub fn average_mds(views: &MultiViewDataset, dim: usize) -> Result<Embedding> {
    crate::embedding::classical_mds(&DistanceMatrix::mean_of(views.views())?, dim)
}

/// Labels as signed integers, for metric functions.
pub fn labels_as_i64(labels: &[usize]) -> Vec<i64> {
    labels.iter().map(|&l| l as i64).collect()
}
