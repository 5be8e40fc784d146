//! Gromov-Wasserstein barycenters of several distance matrices.
//!
//! Block-coordinate descent: with the barycenter fixed, each view's plan is
//! re-solved (warm-started from the previous outer iteration); with the
//! plans fixed, the squared-loss barycenter has the closed form
//! `D̄ = (Σ_s λ_s T_sᵀ D_s T_s) ⊘ (p pᵀ)`.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{Executor, Sequential};
use crate::gw::{self, GwSolveConfig, PlanInit, Restarts};
use crate::matrix::Matrix;
use crate::relational::{
    uniform_measure, DiscreteMeasure, DistanceMatrix, MultiViewDataset, TransportPlan, MARGINAL_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarycenterInit {
    /// |N(0,1)| entries rescaled to the average view distance, zero diagonal.
    RandomSymmetric {
        seed: u64,
    },
    /// Start from the first view; plans start at the identity coupling when
    /// the supports line up.
    FirstView,
    Given(DistanceMatrix),
}

impl Default for BarycenterInit {
    fn default() -> Self {
        Self::RandomSymmetric { seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarycenterConfig {
    /// Support size of the barycenter; `None` uses the sample count.
    pub support_size: Option<usize>,
    /// View weights λ; `None` means uniform `1/S`.
    pub weights: Option<Vec<f64>>,
    pub outer_iters: usize,
    /// Relative Frobenius change of D̄ below which iteration stops.
    pub tol: f64,
    pub inner: GwSolveConfig,
    pub init: BarycenterInit,
    /// Extra random starts for the inner solves of the first outer
    /// iteration (later iterations are warm-started).
    pub inner_restarts: Restarts,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        Self {
            support_size: None,
            weights: None,
            outer_iters: 50,
            tol: 1e-7,
            inner: GwSolveConfig::default(),
            init: BarycenterInit::default(),
            inner_restarts: Restarts::none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycenterResult {
    pub barycenter: DistanceMatrix,
    /// One `n × n_b` plan per view.
    pub plans: Vec<TransportPlan>,
    /// Weighted objective after every completed outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn view_weights(cfg: &BarycenterConfig, s: usize) -> Result<Vec<f64>> {
    match &cfg.weights {
        None => Ok(alloc::vec![1.0 / s as f64; s]),
        Some(w) => {
            if w.len() != s {
                return Err(Error::ShapeMismatch {
                    expected: s,
                    found: w.len(),
                });
            }
            if w.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::InvalidConfig("view weights must be nonnegative"));
            }
            if (w.iter().sum::<f64>() - 1.0).abs() > MARGINAL_TOL {
                return Err(Error::InvalidConfig("view weights must sum to 1"));
            }
            Ok(w.clone())
        }
    }
}

/// GW barycenter with uniform sample measures on every view.
pub fn gw_barycenter(
    views: &MultiViewDataset,
    p: &DiscreteMeasure,
    cfg: &BarycenterConfig,
) -> Result<BarycenterResult> {
    let mu = uniform_measure(views.n())?;
    gw_barycenter_with_measure(views, &mu, p, cfg)
}

/// GW barycenter where every view carries the sample measure `mu`.
pub fn gw_barycenter_with_measure(
    views: &MultiViewDataset,
    mu: &DiscreteMeasure,
    p: &DiscreteMeasure,
    cfg: &BarycenterConfig,
) -> Result<BarycenterResult> {
    let n = views.n();
    let nb = cfg.support_size.unwrap_or(n);
    if nb != p.len() {
        return Err(Error::ShapeMismatch {
            expected: nb,
            found: p.len(),
        });
    }
    if mu.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            found: mu.len(),
        });
    }
    if cfg.outer_iters == 0 {
        return Err(Error::InvalidConfig("outer_iters must be at least 1"));
    }
    let lambda = view_weights(cfg, views.num_views())?;
    let pw = p.weights();
    for i in 0..nb {
        for j in 0..nb {
            if i != j && pw[i] * pw[j] < 1e-15 {
                return Err(Error::DegenerateSupportWeight(i, j));
            }
        }
    }

    let aligned = nb == n && mu.weights() == p.weights();
    let (mut dbar, start) = match &cfg.init {
        BarycenterInit::FirstView => {
            if nb != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    found: nb,
                });
            }
            let start = if aligned {
                TransportPlan::identity(mu)
            } else {
                TransportPlan::product(mu, p)
            };
            (views.views()[0].clone(), start)
        }
        BarycenterInit::Given(d) => {
            if d.size() != nb {
                return Err(Error::ShapeMismatch {
                    expected: nb,
                    found: d.size(),
                });
            }
            (d.clone(), TransportPlan::product(mu, p))
        }
        BarycenterInit::RandomSymmetric { seed } => {
            let target = views
                .views()
                .iter()
                .map(DistanceMatrix::off_diagonal_mean)
                .sum::<f64>()
                / views.num_views() as f64;
            (
                random_symmetric(nb, target, *seed),
                TransportPlan::product(mu, p),
            )
        }
    };
    let mut plans: Vec<TransportPlan> = views.views().iter().map(|_| start.clone()).collect();

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.outer_iters {
        iterations += 1;
        let mut new_plans = Vec::with_capacity(plans.len());
        for (s, view) in views.views().iter().enumerate() {
            let inner = cfg.inner.with_init(PlanInit::Given(plans[s].clone()));
            let res = if iterations == 1 && cfg.inner_restarts.extra > 0 {
                let r = Restarts {
                    extra: cfg.inner_restarts.extra,
                    seed: cfg.inner_restarts.seed.wrapping_add(s as u64),
                };
                gw::solve_gw_multistart(view, mu, &dbar, p, &inner, &r)?
            } else {
                gw::solve_gw(view, mu, &dbar, p, &inner)?
            };
            new_plans.push(res.plan);
        }
        let new_dbar = update_barycenter(views.views(), &lambda, &new_plans, pw);
        let objective = weighted_cost(views.views(), &lambda, &new_dbar, &new_plans)?;

        if let Some(&prev) = trace.last() {
            if objective > prev + 1e-12 * prev.abs().max(1e-300) {
                // Zeroing the diagonal can raise the objective; keep the
                // previous iterate.
                converged = true;
                iterations -= 1;
                break;
            }
        }
        trace.push(objective);

        let scale = dbar.matrix().frobenius_norm().max(f64::MIN_POSITIVE);
        let mut diff = new_dbar.matrix().clone();
        diff.axpy(-1.0, dbar.matrix());
        let rel = diff.frobenius_norm() / scale;
        dbar = new_dbar;
        plans = new_plans;
        if rel < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(BarycenterResult {
        barycenter: dbar,
        plans,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Starting points for a multi-start barycenter: the configured init, then
/// the first view, then further random seeds.
pub fn barycenter_starts(init: &BarycenterInit, count: usize) -> Vec<BarycenterInit> {
    let base_seed = match init {
        BarycenterInit::RandomSymmetric { seed } => *seed,
        _ => 0,
    };
    let mut starts = alloc::vec![init.clone()];
    let mut next = 1u64;
    while starts.len() < count.max(1) {
        let candidate = if starts.contains(&BarycenterInit::FirstView) {
            let c = BarycenterInit::RandomSymmetric {
                seed: base_seed.wrapping_add(next),
            };
            next += 1;
            c
        } else {
            BarycenterInit::FirstView
        };
        if !starts.contains(&candidate) {
            starts.push(candidate);
        }
    }
    starts
}

/// Lowest final objective wins; ties go to the earliest run.
pub fn best_barycenter(results: Vec<BarycenterResult>) -> Option<BarycenterResult> {
    let last = |r: &BarycenterResult| r.objective_trace.last().copied().unwrap_or(f64::INFINITY);
    let mut best: Option<BarycenterResult> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| last(&r) < last(b)) {
            best = Some(r);
        }
    }
    best
}

/// [`gw_barycenter`] from each of [`barycenter_starts`]`(cfg.init, count)`.
pub fn gw_barycenter_multistart(
    views: &MultiViewDataset,
    p: &DiscreteMeasure,
    cfg: &BarycenterConfig,
    count: usize,
) -> Result<BarycenterResult> {
    gw_barycenter_multistart_on(&Sequential, views, p, cfg, count)
}

/// [`gw_barycenter_multistart`] with the starts run by `exec`.
pub fn gw_barycenter_multistart_on<E: Executor>(
    exec: &E,
    views: &MultiViewDataset,
    p: &DiscreteMeasure,
    cfg: &BarycenterConfig,
    count: usize,
) -> Result<BarycenterResult> {
    let results = exec
        .map(barycenter_starts(&cfg.init, count), |init| {
            gw_barycenter(
                views,
                p,
                &BarycenterConfig {
                    init,
                    ..cfg.clone()
                },
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(best_barycenter(results).expect("at least one start"))
}

/// Closed-form squared-loss update, symmetrised with a zero diagonal.
fn update_barycenter(
    views: &[DistanceMatrix],
    lambda: &[f64],
    plans: &[TransportPlan],
    p: &[f64],
) -> DistanceMatrix {
    let nb = p.len();
    let mut acc = Matrix::zeros(nb, nb);
    for ((view, &l), plan) in views.iter().zip(lambda).zip(plans) {
        if l == 0.0 {
            continue;
        }
        let t = plan.matrix();
        let dt = view.matrix().matmul(t);
        crate::matrix::gemm(l, t, true, &dt, false, 1.0, &mut acc);
    }
    let mut out = Matrix::zeros(nb, nb);
    for i in 0..nb {
        for j in (i + 1)..nb {
            let v = 0.5 * (acc[(i, j)] + acc[(j, i)]) / (p[i] * p[j]);
            let v = v.max(0.0);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    DistanceMatrix::from_trusted(out)
}

fn weighted_cost(
    views: &[DistanceMatrix],
    lambda: &[f64],
    dbar: &DistanceMatrix,
    plans: &[TransportPlan],
) -> Result<f64> {
    let mut total = 0.0;
    for ((view, &l), plan) in views.iter().zip(lambda).zip(plans) {
        if l > 0.0 {
            total += l * gw::gw_cost(view, dbar, plan)?;
        }
    }
    Ok(total)
}

fn random_symmetric(n: usize, target_mean: f64, seed: u64) -> DistanceMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(n, n);
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = StandardNormal.sample(&mut rng);
            let v = v.abs();
            m[(i, j)] = v;
            m[(j, i)] = v;
            sum += 2.0 * v;
        }
    }
    if n > 1 && sum > 0.0 {
        let mean = sum / (n * (n - 1)) as f64;
        m = m.scale(target_mean / mean);
    }
    DistanceMatrix::from_trusted(m)
}

/// `Σ_s λ_s GW²(D_s, D̄)`, each term from a fresh multi-start solve with
/// uniform sample measures.
pub fn barycenter_objective(
    views: &MultiViewDataset,
    weights: &[f64],
    dbar: &DistanceMatrix,
    p: &DiscreteMeasure,
    cfg: &GwSolveConfig,
    restarts: &Restarts,
) -> Result<f64> {
    if weights.len() != views.num_views() {
        return Err(Error::ShapeMismatch {
            expected: views.num_views(),
            found: weights.len(),
        });
    }
    if dbar.size() != p.len() {
        return Err(Error::ShapeMismatch {
            expected: dbar.size(),
            found: p.len(),
        });
    }
    let mu = uniform_measure(views.n())?;
    let mut total = 0.0;
    for (view, &l) in views.views().iter().zip(weights) {
        if l == 0.0 {
            continue;
        }
        total += l * gw::solve_gw_multistart(view, &mu, dbar, p, cfg, restarts)?.cost;
    }
    Ok(total)
}
