//! GW-MDS: coordinates whose Euclidean distances match a target metric
//! under the GW objective.
//!
//! Alternates a plan solve against the current embedding distances with a
//! block of backtracking gradient steps on the coordinates. With the plan
//! `T` fixed (column marginal `q`, `K = Tᵀ D T`), the objective in `Y` is
//!
//! ```text
//! F(Y) = Σ_ik D_ik² p_i p_k + Σ_jl E_jl² q_j q_l − 2 Σ_jl E_jl K_jl
//! ```
//!
//! where `E_jl = sqrt(|y_j − y_l|² + eps)` off the diagonal.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{Executor, Sequential};
use crate::gw::{self, GwResult, GwSolveConfig, PlanInit, Restarts};
use crate::matrix::Matrix;
use crate::relational::{
    pairwise_norms, DiscreteMeasure, DistanceMatrix, Embedding, TransportPlan,
};

const ARMIJO_C1: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingInit {
    /// i.i.d. Gaussian coordinates; `scale: None` uses `mean(D) / sqrt(d)`.
    RandomGaussian {
        seed: u64,
        scale: Option<f64>,
    },
    Given(Embedding),
}

impl Default for EmbeddingInit {
    fn default() -> Self {
        Self::RandomGaussian {
            seed: 0,
            scale: None,
        }
    }
}

/// Which transport problem couples the target to the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSolver {
    #[default]
    Full,
    SemiRelaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GwMdsConfig {
    pub dim: usize,
    /// Initial trial step; it doubles after an accepted step and halves on
    /// a rejected one.
    pub lr: f64,
    /// Backtracking gives up below this step.
    pub min_step: f64,
    pub outer_iters: usize,
    pub grad_steps_per_plan: usize,
    /// Relative objective change between outer iterations.
    pub tol: f64,
    pub init: EmbeddingInit,
    pub norm_smoothing_eps: f64,
    /// Inner plan solver settings; its `init` is ignored.
    pub plan: GwSolveConfig,
    /// Start each plan solve from the previous plan.
    pub warm_start: bool,
    /// Extra random starts for the first plan solve.
    pub plan_restarts: Restarts,
}

impl Default for GwMdsConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            lr: 0.01,
            min_step: 1e-8,
            outer_iters: 300,
            grad_steps_per_plan: 10,
            tol: 1e-8,
            init: EmbeddingInit::default(),
            norm_smoothing_eps: 1e-12,
            plan: GwSolveConfig::default(),
            warm_start: true,
            plan_restarts: Restarts::none(),
        }
    }
}

impl GwMdsConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig("lr must be positive"));
        }
        if !(self.min_step > 0.0) {
            return Err(Error::InvalidConfig("min_step must be positive"));
        }
        if self.outer_iters == 0 {
            return Err(Error::InvalidConfig("outer_iters must be at least 1"));
        }
        if !(self.norm_smoothing_eps >= 0.0) {
            return Err(Error::InvalidConfig(
                "norm_smoothing_eps must be nonnegative",
            ));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidConfig("tol must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdsTraceRow {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwMdsResult {
    pub embedding: Embedding,
    /// Plan re-solved against the final embedding.
    pub plan: TransportPlan,
    /// GW objective of `plan` against the final embedding distances.
    pub cost: f64,
    /// Fixed-plan objective after every plan solve and accepted step.
    pub objective_trace: Vec<f64>,
    /// One row per accepted gradient step.
    pub trace: Vec<MdsTraceRow>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Backtracking found no decreasing step above `min_step`.
    pub stalled: bool,
}

/// Plan-dependent pieces of the fixed-plan objective.
struct FixedPlan {
    k: Matrix,
    q: Vec<f64>,
    constant: f64,
}

impl FixedPlan {
    fn new(d: &DistanceMatrix, t: &Matrix) -> Self {
        let p = t.row_sums();
        let q = t.col_sums();
        let dt = d.matrix().matmul(t);
        let k = t.t_matmul(&dt);
        let d_sq = d.matrix().map(|x| x * x);
        let constant = d_sq.mul_vec(&p).iter().zip(&p).map(|(a, b)| a * b).sum();
        Self { k, q, constant }
    }

    fn objective(&self, y: &Matrix, eps: f64) -> f64 {
        let n = y.rows();
        let mut s = 0.0;
        for j in 0..n {
            let yj = y.row(j);
            let krow = self.k.row(j);
            for l in (j + 1)..n {
                let e = smoothed_norm(yj, y.row(l), eps);
                s += e * (e * self.q[j] * self.q[l] - 2.0 * krow[l]);
            }
        }
        self.constant + 2.0 * s
    }

    fn objective_and_gradient(&self, y: &Matrix, eps: f64) -> (f64, Matrix) {
        let (n, dim) = (y.rows(), y.cols());
        let mut grad = Matrix::zeros(n, dim);
        let mut s = 0.0;
        let mut diff = vec![0.0; dim];
        for j in 0..n {
            let krow = self.k.row(j);
            for l in (j + 1)..n {
                let mut sq = 0.0;
                for ((dv, a), b) in diff.iter_mut().zip(y.row(j)).zip(y.row(l)) {
                    *dv = a - b;
                    sq += *dv * *dv;
                }
                let e = libm::sqrt(sq + eps);
                let qq = self.q[j] * self.q[l];
                s += e * (e * qq - 2.0 * krow[l]);
                if e > 0.0 {
                    let w = 4.0 * (e * qq - 0.5 * (krow[l] + self.k[(l, j)])) / e;
                    for (c, &dv) in diff.iter().enumerate() {
                        grad[(j, c)] += w * dv;
                        grad[(l, c)] -= w * dv;
                    }
                }
            }
        }
        (self.constant + 2.0 * s, grad)
    }
}

#[inline]
fn smoothed_norm(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    libm::sqrt(sq + eps)
}

fn check_embedding_plan(d: &DistanceMatrix, y: &Embedding, t: &TransportPlan) -> Result<()> {
    if t.rows() != d.size() {
        return Err(Error::ShapeMismatch {
            expected: d.size(),
            found: t.rows(),
        });
    }
    if t.cols() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: y.len(),
            found: t.cols(),
        });
    }
    Ok(())
}

/// Gradient of `Σ_ijkl (D_ik − ‖y_j − y_l‖_eps)² T_ij T_kl` in `Y`.
pub fn gw_embedding_gradient(
    d: &DistanceMatrix,
    y: &Embedding,
    t: &TransportPlan,
    eps: f64,
) -> Result<Matrix> {
    check_embedding_plan(d, y, t)?;
    Ok(FixedPlan::new(d, t.matrix())
        .objective_and_gradient(y.matrix(), eps)
        .1)
}

/// The fixed-plan objective that [`gw_embedding_gradient`] differentiates.
pub fn gw_embedding_objective(
    d: &DistanceMatrix,
    y: &Embedding,
    t: &TransportPlan,
    eps: f64,
) -> Result<f64> {
    check_embedding_plan(d, y, t)?;
    Ok(FixedPlan::new(d, t.matrix()).objective(y.matrix(), eps))
}

fn initial_points(d: &DistanceMatrix, m: usize, cfg: &GwMdsConfig) -> Result<Matrix> {
    match &cfg.init {
        EmbeddingInit::Given(e) => {
            if e.len() != m {
                return Err(Error::ShapeMismatch {
                    expected: m,
                    found: e.len(),
                });
            }
            if e.dim() != cfg.dim {
                return Err(Error::ShapeMismatch {
                    expected: cfg.dim,
                    found: e.dim(),
                });
            }
            Ok(e.matrix().clone())
        }
        EmbeddingInit::RandomGaussian { seed, scale } => {
            let scale = match scale {
                Some(s) if *s > 0.0 && s.is_finite() => *s,
                Some(_) => return Err(Error::InvalidConfig("init scale must be positive")),
                None => {
                    let s = d.off_diagonal_mean() / libm::sqrt(cfg.dim as f64);
                    if s > 0.0 {
                        s
                    } else {
                        1.0
                    }
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(Matrix::from_fn(m, cfg.dim, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            }))
        }
    }
}

fn solve_plan(
    solver: PlanSolver,
    d: &DistanceMatrix,
    mu: &DiscreteMeasure,
    dy: &DistanceMatrix,
    nu: &DiscreteMeasure,
    cfg: &GwSolveConfig,
    restarts: &Restarts,
) -> Result<GwResult> {
    match solver {
        PlanSolver::Full => gw::solve_gw_multistart(d, mu, dy, nu, cfg, restarts),
        PlanSolver::SemiRelaxed => gw::solve_srgw_multistart(d, mu, dy, cfg, restarts),
    }
}

/// GW-MDS with full GW plans between `(D, mu)` and the embedding with
/// measure `nu`.
pub fn gwmds_embed(
    d: &DistanceMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &GwMdsConfig,
) -> Result<GwMdsResult> {
    gwmds_embed_with(d, mu, nu, cfg, PlanSolver::Full)
}

/// GW-MDS with an explicit plan solver. For [`PlanSolver::SemiRelaxed`]
/// `nu` only shapes the first starting plan `mu nuᵀ`.
pub fn gwmds_embed_with(
    d: &DistanceMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &GwMdsConfig,
    solver: PlanSolver,
) -> Result<GwMdsResult> {
    cfg.validate()?;
    if mu.len() != d.size() {
        return Err(Error::ShapeMismatch {
            expected: d.size(),
            found: mu.len(),
        });
    }
    let m = nu.len();
    let eps = cfg.norm_smoothing_eps;
    let mut y = initial_points(d, m, cfg)?;

    let mut plan = TransportPlan::product(mu, nu);
    let mut objective_trace = Vec::new();
    let mut trace = Vec::new();
    let mut step = cfg.lr;
    let mut prev_outer: Option<f64> = None;
    let mut converged = false;
    let mut stalled = false;
    let mut outer = 0;

    while outer < cfg.outer_iters {
        outer += 1;
        let dy = DistanceMatrix::from_trusted(pairwise_norms(&y, 0.0));
        let init = if outer == 1 || cfg.warm_start {
            PlanInit::Given(plan.clone())
        } else {
            PlanInit::Given(TransportPlan::product(mu, nu))
        };
        let restarts = if outer == 1 {
            cfg.plan_restarts
        } else {
            Restarts::none()
        };
        plan = solve_plan(solver, d, mu, &dy, nu, &cfg.plan.with_init(init), &restarts)?.plan;

        let fixed = FixedPlan::new(d, plan.matrix());
        let (mut obj, mut grad) = fixed.objective_and_gradient(&y, eps);
        objective_trace.push(obj);
        let floor = 1e-14 * fixed.constant.max(f64::MIN_POSITIVE);

        for _ in 0..cfg.grad_steps_per_plan {
            let gn2 = grad.dot(&grad);
            if gn2 == 0.0 || obj <= floor {
                break;
            }
            let mut eta = step;
            let accepted = loop {
                let mut trial = y.clone();
                trial.axpy(-eta, &grad);
                let f = fixed.objective(&trial, eps);
                if f <= obj - ARMIJO_C1 * eta * gn2 {
                    break Some((trial, f));
                }
                eta *= 0.5;
                if eta < cfg.min_step {
                    break None;
                }
            };
            match accepted {
                Some((trial, f)) => {
                    y = trial;
                    let (f2, g2) = fixed.objective_and_gradient(&y, eps);
                    obj = f.min(f2);
                    grad = g2;
                    objective_trace.push(obj);
                    trace.push(MdsTraceRow {
                        iter: trace.len() + 1,
                        cost: obj,
                        grad_norm: libm::sqrt(gn2),
                        step_size: eta,
                    });
                    step = 2.0 * eta;
                }
                None => {
                    stalled = true;
                    step = cfg.lr;
                    break;
                }
            }
        }
        if stalled {
            break;
        }
        if obj <= floor {
            converged = true;
            break;
        }
        if let Some(prev) = prev_outer {
            if (prev - obj).abs() <= cfg.tol * prev.abs() {
                converged = true;
                break;
            }
        }
        prev_outer = Some(obj);
    }

    // Refresh the plan so it is optimal for the returned coordinates.
    let dy = DistanceMatrix::from_trusted(pairwise_norms(&y, 0.0));
    let final_solve = solve_plan(
        solver,
        d,
        mu,
        &dy,
        nu,
        &cfg.plan.with_init(PlanInit::Given(plan)),
        &Restarts::none(),
    )?;
    let embedding = Embedding::new(y)?;
    Ok(GwMdsResult {
        embedding,
        plan: final_solve.plan,
        cost: final_solve.cost,
        objective_trace,
        trace,
        outer_iterations: outer,
        converged: converged && !stalled,
        stalled,
    })
}

/// Configurations for `count` restarts: random inits get seeds
/// `seed, seed + 1, ...`; a given init is run once.
pub fn restart_configs(cfg: &GwMdsConfig, count: usize) -> Vec<GwMdsConfig> {
    match &cfg.init {
        EmbeddingInit::Given(_) => vec![cfg.clone()],
        EmbeddingInit::RandomGaussian { seed, scale } => (0..count.max(1) as u64)
            .map(|r| GwMdsConfig {
                init: EmbeddingInit::RandomGaussian {
                    seed: seed.wrapping_add(r),
                    scale: *scale,
                },
                ..cfg.clone()
            })
            .collect(),
    }
}

/// Lowest cost wins; ties go to the earliest run.
pub fn best_embedding(results: Vec<GwMdsResult>) -> Option<GwMdsResult> {
    let mut best: Option<GwMdsResult> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| r.cost < b.cost) {
            best = Some(r);
        }
    }
    best
}

/// [`gwmds_embed_with`] over [`restart_configs`], keeping the best.
pub fn gwmds_embed_multistart(
    d: &DistanceMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &GwMdsConfig,
    solver: PlanSolver,
    restarts: usize,
) -> Result<GwMdsResult> {
    gwmds_embed_multistart_on(&Sequential, d, mu, nu, cfg, solver, restarts)
}

/// [`gwmds_embed_multistart`] with the restarts run by `exec`.
pub fn gwmds_embed_multistart_on<E: Executor>(
    exec: &E,
    d: &DistanceMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &GwMdsConfig,
    solver: PlanSolver,
    restarts: usize,
) -> Result<GwMdsResult> {
    let results = exec
        .map(restart_configs(cfg, restarts), |c| {
            gwmds_embed_with(d, mu, nu, &c, solver)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(best_embedding(results).expect("at least one restart"))
}

/// Classical (Torgerson) MDS: top eigenvectors of the double-centred
/// squared distances. Each axis is signed so its largest-magnitude
/// coordinate is positive.
pub fn classical_mds(d: &DistanceMatrix, dim: usize) -> Result<Embedding> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dim must be at least 1"));
    }
    let n = d.size();
    let sq = d.matrix().map(|x| x * x);
    let row_means: Vec<f64> = sq.row_sums().iter().map(|s| s / n as f64).collect();
    let total = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + total)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));

    let mut points = Matrix::zeros(n, dim);
    for (axis, &k) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        let s = libm::sqrt(lambda);
        let v = eig.eigenvectors.column(k);
        let pivot = (0..n).fold(
            0,
            |best, i| if v[i].abs() > v[best].abs() { i } else { best },
        );
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            points[(i, axis)] = sign * s * v[i];
        }
    }
    Embedding::new(points)
}
