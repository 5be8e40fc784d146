//! Gromov-Wasserstein and semi-relaxed Gromov-Wasserstein solvers.
//!
//! Both problems minimise the quadratic form
//! `Σ_{ijkl} (Dx_ik − Dy_jl)² T_ij T_kl` over a transport polytope by
//! conditional gradient (Frank–Wolfe) with exact line search. The
//! four-index sum is never formed: with `p`, `q` the marginals of `T`,
//!
//! ```text
//! cost(T) = pᵀ Dx² p + qᵀ Dy² q − 2 <Dx T Dy, T>
//! ∇cost(T) = 2 (c − 2 Dx T Dy),   c_ij = (Dx² p)_i + (Dy² q)_j
//! ```
//!
//! (squares taken entrywise). Full GW solves the linearised step as an
//! exact transport LP; srGW only fixes the row marginal, so its linearised
//! step sends each row's mass to the cheapest column.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ot;
use crate::relational::{uniform_measure, DiscreteMeasure, DistanceMatrix, TransportPlan};

/// Starting point of the conditional-gradient loop.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanInit {
    /// `mu nuᵀ`; for srGW the column measure is uniform.
    #[default]
    ProductCoupling,
    Given(TransportPlan),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GwSolveConfig {
    pub max_iters: usize,
    /// Relative objective change below which the loop stops.
    pub tol: f64,
    pub init: PlanInit,
}

impl Default for GwSolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-9,
            init: PlanInit::ProductCoupling,
        }
    }
}

impl GwSolveConfig {
    pub fn with_init(&self, init: PlanInit) -> Self {
        Self {
            init,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidConfig("tol must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwResult {
    pub plan: TransportPlan,
    /// Squared GW objective at `plan`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective before the first step and after every accepted step.
    pub objective_trace: Vec<f64>,
}

/// Extra seeded random starting plans on top of the configured one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restarts {
    pub extra: usize,
    pub seed: u64,
}

impl Default for Restarts {
    fn default() -> Self {
        Self { extra: 2, seed: 0 }
    }
}

impl Restarts {
    pub fn none() -> Self {
        Self { extra: 0, seed: 0 }
    }
}

fn check_size(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

fn plan_shape(dx: &DistanceMatrix, dy: &DistanceMatrix, t: &TransportPlan) -> Result<()> {
    check_size(dx.size(), t.rows())?;
    check_size(dy.size(), t.cols())
}

/// GW objective of `t`, through the tensor decomposition.
pub fn gw_cost(dx: &DistanceMatrix, dy: &DistanceMatrix, t: &TransportPlan) -> Result<f64> {
    plan_shape(dx, dy, t)?;
    let tm = t.matrix();
    let p = tm.row_sums();
    let q = tm.col_sums();
    let dx_sq = dx.matrix().map(|x| x * x);
    let dy_sq = dy.matrix().map(|x| x * x);
    let cross = dx.matrix().matmul(&tm.matmul(dy.matrix()));
    Ok(objective(
        &dx_sq.mul_vec(&p),
        &p,
        &dy_sq.mul_vec(&q),
        &q,
        &cross,
        tm,
    ))
}

/// Gradient of [`gw_cost`] with respect to the entries of `t`.
pub fn gw_gradient_wrt_plan(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    t: &TransportPlan,
) -> Result<Matrix> {
    plan_shape(dx, dy, t)?;
    let tm = t.matrix();
    let dx_sq = dx.matrix().map(|x| x * x);
    let dy_sq = dy.matrix().map(|x| x * x);
    let cx = dx_sq.mul_vec(&tm.row_sums());
    let cy = dy_sq.mul_vec(&tm.col_sums());
    let cross = dx.matrix().matmul(&tm.matmul(dy.matrix()));
    Ok(gradient(&cx, &cy, &cross))
}

#[inline]
fn objective(cx: &[f64], p: &[f64], cy: &[f64], q: &[f64], cross: &Matrix, t: &Matrix) -> f64 {
    let a: f64 = cx.iter().zip(p).map(|(c, w)| c * w).sum();
    let b: f64 = cy.iter().zip(q).map(|(c, w)| c * w).sum();
    a + b - 2.0 * cross.dot(t)
}

fn gradient(cx: &[f64], cy: &[f64], cross: &Matrix) -> Matrix {
    Matrix::from_fn(cx.len(), cy.len(), |i, j| {
        2.0 * (cx[i] + cy[j] - 2.0 * cross[(i, j)])
    })
}

/// Minimiser of `a γ² + b γ` on `[0, 1]`.
pub(crate) fn exact_step(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    } else if a + b < 0.0 {
        1.0
    } else {
        0.0
    }
}

enum Polytope<'a> {
    Coupling(&'a DiscreteMeasure),
    SemiRelaxed,
}

/// Solves GW between `(dx, mu)` and `(dy, nu)`.
pub fn solve_gw(
    dx: &DistanceMatrix,
    mu: &DiscreteMeasure,
    dy: &DistanceMatrix,
    nu: &DiscreteMeasure,
    cfg: &GwSolveConfig,
) -> Result<GwResult> {
    check_size(dx.size(), mu.len())?;
    check_size(dy.size(), nu.len())?;
    conditional_gradient(dx, mu, dy, Polytope::Coupling(nu), cfg)
}

/// Solves semi-relaxed GW: the row marginal is `mu`, columns are free.
pub fn solve_srgw(
    dx: &DistanceMatrix,
    mu: &DiscreteMeasure,
    dy: &DistanceMatrix,
    cfg: &GwSolveConfig,
) -> Result<GwResult> {
    check_size(dx.size(), mu.len())?;
    conditional_gradient(dx, mu, dy, Polytope::SemiRelaxed, cfg)
}

fn conditional_gradient(
    dx: &DistanceMatrix,
    mu: &DiscreteMeasure,
    dy: &DistanceMatrix,
    polytope: Polytope<'_>,
    cfg: &GwSolveConfig,
) -> Result<GwResult> {
    cfg.validate()?;
    let (n, m) = (dx.size(), dy.size());
    let p = mu.weights();

    let mut t = match (&cfg.init, &polytope) {
        (PlanInit::ProductCoupling, Polytope::Coupling(nu)) => TransportPlan::product(mu, nu),
        (PlanInit::ProductCoupling, Polytope::SemiRelaxed) => {
            TransportPlan::product(mu, &uniform_measure(m)?)
        }
        (PlanInit::Given(plan), polytope) => {
            check_size(n, plan.rows())?;
            check_size(m, plan.cols())?;
            let nu = match polytope {
                Polytope::Coupling(nu) => Some(*nu),
                Polytope::SemiRelaxed => None,
            };
            let err = plan.marginal_error(mu, nu)?;
            if err > crate::relational::MARGINAL_TOL {
                return Err(Error::InvalidInitialPlan(err));
            }
            plan.clone()
        }
    }
    .into_matrix();

    let dxm = dx.matrix();
    let dym = dy.matrix();
    let dx_sq = dxm.map(|x| x * x);
    let dy_sq = dym.map(|x| x * x);
    let cx = dx_sq.mul_vec(p);

    let mut cross = dxm.matmul(&t.matmul(dym));
    let mut q = t.col_sums();
    let mut cy = dy_sq.mul_vec(&q);
    let mut cost = objective(&cx, p, &cy, &q, &cross, &t);
    let mut trace = vec![cost.max(0.0)];
    let mut converged = false;
    let mut iterations = 0;
    let mut z = Matrix::zeros(n, m);
    let mut cross_x = Matrix::zeros(n, m);

    while iterations < cfg.max_iters {
        iterations += 1;
        let grad = gradient(&cx, &cy, &cross);

        let direction: Vec<(usize, usize, f64)> = match &polytope {
            Polytope::Coupling(nu) => ot::emd(p, nu.weights(), &grad)?.support,
            Polytope::SemiRelaxed => (0..n)
                .filter(|&i| p[i] > 0.0)
                .map(|i| (i, argmin(grad.row(i)), p[i]))
                .collect(),
        };

        // Slope b = <G, X − T> and curvature a of the objective on the segment.
        let g_x: f64 = direction.iter().map(|&(i, j, x)| grad[(i, j)] * x).sum();
        let slope = g_x - grad.dot(&t);

        z.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        for &(i, j, x) in &direction {
            for (zv, dv) in z.row_mut(i).iter_mut().zip(dym.row(j)) {
                *zv += x * dv;
            }
        }
        crate::matrix::gemm(1.0, dxm, false, &z, false, 0.0, &mut cross_x);
        let nx_x: f64 = direction.iter().map(|&(i, j, x)| cross_x[(i, j)] * x).sum();
        let m_x: f64 = direction.iter().map(|&(i, j, x)| cross[(i, j)] * x).sum();
        let m_t = cross.dot(&t);
        let mut q_dir = vec![0.0; m];
        for &(_, j, x) in &direction {
            q_dir[j] += x;
        }
        let dq: Vec<f64> = q_dir.iter().zip(&q).map(|(a, b)| a - b).collect();
        let dq_quad: f64 = dy_sq.mul_vec(&dq).iter().zip(&dq).map(|(a, b)| a * b).sum();
        let curvature = dq_quad - 2.0 * (nx_x - 2.0 * m_x + m_t);

        // Exact minimiser on the segment. A zero slope with negative
        // curvature still moves: the product coupling can be a saddle.
        let gamma = exact_step(curvature, slope);
        if gamma <= 0.0 {
            converged = true;
            break;
        }

        // T ← T + γ(X − T), and the same affine update for Dx T Dy and q.
        let keep = 1.0 - gamma;
        t.as_mut_slice().iter_mut().for_each(|v| *v *= keep);
        for &(i, j, x) in &direction {
            t[(i, j)] += gamma * x;
        }
        for (c, cxv) in cross.as_mut_slice().iter_mut().zip(cross_x.as_slice()) {
            *c = keep * *c + gamma * cxv;
        }
        if iterations % 64 == 0 {
            cross = dxm.matmul(&t.matmul(dym));
        }
        q = t.col_sums();
        cy = dy_sq.mul_vec(&q);

        let new_cost = objective(&cx, p, &cy, &q, &cross, &t);
        trace.push(new_cost.max(0.0));
        let change = (cost - new_cost).abs();
        let stop = change <= cfg.tol * cost.abs() || new_cost <= 0.0;
        cost = new_cost;
        if stop {
            converged = true;
            break;
        }
    }

    Ok(GwResult {
        plan: TransportPlan::from_trusted(t),
        cost: cost.max(0.0),
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Index of the smallest entry; ties go to the lowest index.
fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v < row[best] {
            best = j;
        }
    }
    best
}

/// Random full coupling of `mu` and `nu`: a random positive matrix
/// rescaled by alternating row/column normalisation.
pub fn random_coupling(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rng: &mut impl Rng,
) -> TransportPlan {
    let (a, b) = (mu.weights(), nu.weights());
    let mut k = Matrix::from_fn(a.len(), b.len(), |_, _| rng.random_range(0.05..1.0));
    for _ in 0..10_000 {
        for i in 0..a.len() {
            let s: f64 = k.row(i).iter().sum();
            let f = if s > 0.0 { a[i] / s } else { 0.0 };
            k.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        let cs = k.col_sums();
        let col_err = cs
            .iter()
            .zip(b)
            .fold(0.0f64, |e, (c, w)| e.max((c - w).abs()));
        if col_err < 1e-14 {
            break;
        }
        let scale: Vec<f64> = cs
            .iter()
            .zip(b)
            .map(|(&c, &w)| if c > 0.0 { w / c } else { 0.0 })
            .collect();
        for i in 0..a.len() {
            for (v, s) in k.row_mut(i).iter_mut().zip(&scale) {
                *v *= s;
            }
        }
    }
    TransportPlan::from_trusted(k)
}

/// Random plan with row marginal `mu` over `m` columns.
pub fn random_semi_relaxed(mu: &DiscreteMeasure, m: usize, rng: &mut impl Rng) -> TransportPlan {
    let a = mu.weights();
    let mut k = Matrix::from_fn(a.len(), m, |_, _| rng.random_range(0.05..1.0));
    for (i, &w) in a.iter().enumerate() {
        let s: f64 = k.row(i).iter().sum();
        k.row_mut(i).iter_mut().for_each(|v| *v *= w / s);
    }
    TransportPlan::from_trusted(k)
}

/// Lowest cost wins; ties go to the earliest run.
pub fn best_result(results: Vec<GwResult>) -> Option<GwResult> {
    let mut best: Option<GwResult> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| r.cost < b.cost) {
            best = Some(r);
        }
    }
    best
}

/// Starting plans for a multi-start GW solve: the configured one first,
/// then `restarts.extra` seeded random couplings.
pub fn gw_start_plans(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &GwSolveConfig,
    restarts: &Restarts,
) -> Vec<PlanInit> {
    let mut rng = ChaCha8Rng::seed_from_u64(restarts.seed);
    let mut inits = vec![cfg.init.clone()];
    for _ in 0..restarts.extra {
        inits.push(PlanInit::Given(random_coupling(mu, nu, &mut rng)));
    }
    inits
}

/// [`solve_gw`] from several starting plans, keeping the best.
pub fn solve_gw_multistart(
    dx: &DistanceMatrix,
    mu: &DiscreteMeasure,
    dy: &DistanceMatrix,
    nu: &DiscreteMeasure,
    cfg: &GwSolveConfig,
    restarts: &Restarts,
) -> Result<GwResult> {
    check_size(dx.size(), mu.len())?;
    check_size(dy.size(), nu.len())?;
    let results = gw_start_plans(mu, nu, cfg, restarts)
        .into_iter()
        .map(|init| solve_gw(dx, mu, dy, nu, &cfg.with_init(init)))
        .collect::<Result<Vec<_>>>()?;
    Ok(best_result(results).expect("at least one start"))
}

/// [`solve_srgw`] from several starting plans, keeping the best.
pub fn solve_srgw_multistart(
    dx: &DistanceMatrix,
    mu: &DiscreteMeasure,
    dy: &DistanceMatrix,
    cfg: &GwSolveConfig,
    restarts: &Restarts,
) -> Result<GwResult> {
    check_size(dx.size(), mu.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(restarts.seed);
    let mut results = vec![solve_srgw(dx, mu, dy, cfg)?];
    for _ in 0..restarts.extra {
        let init = PlanInit::Given(random_semi_relaxed(mu, dy.size(), &mut rng));
        results.push(solve_srgw(dx, mu, dy, &cfg.with_init(init))?);
    }
    Ok(best_result(results).expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relational::validate_distance_rows;
    use alloc::vec::Vec;

    fn dm(rows: &[&[f64]]) -> DistanceMatrix {
        validate_distance_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Direct four-index evaluation, independent of the decomposition.
    fn naive_cost(dx: &DistanceMatrix, dy: &DistanceMatrix, t: &Matrix) -> f64 {
        let (n, m) = (dx.size(), dy.size());
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..m {
                for k in 0..n {
                    for l in 0..m {
                        let d = dx.get(i, k) - dy.get(j, l);
                        s += d * d * t[(i, j)] * t[(k, l)];
                    }
                }
            }
        }
        s
    }

    fn plan(rows: &[&[f64]]) -> TransportPlan {
        TransportPlan::new(
            Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_cost_examples() {
        let dx = dm(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let dy = dm(&[&[0.0, 2.0], &[2.0, 0.0]]);
        let diag = plan(&[&[0.5, 0.0], &[0.0, 0.5]]);
        let prod = plan(&[&[0.25, 0.25], &[0.25, 0.25]]);
        assert_eq!(gw_cost(&dx, &dx, &diag).unwrap(), 0.0);
        // Oracle values from the four-index sum: cost = 0.5 + 16ab on the
        // family [[a, b], [b, a]], so 1.5 at the product coupling.
        assert!((naive_cost(&dx, &dy, prod.matrix()) - 1.5).abs() < 1e-12);
        assert!((naive_cost(&dx, &dy, diag.matrix()) - 0.5).abs() < 1e-12);
        assert!((gw_cost(&dx, &dy, &prod).unwrap() - 1.5).abs() < 1e-12);
        assert!((gw_cost(&dx, &dy, &diag).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let dx = dm(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let dy = dm(&[&[0.0]]);
        let p = plan(&[&[0.5, 0.0], &[0.0, 0.5]]);
        assert!(matches!(
            gw_cost(&dx, &dy, &p),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(gw_gradient_wrt_plan(&dx, &dy, &p).is_err());
        let mu = uniform_measure(3).unwrap();
        let nu = uniform_measure(2).unwrap();
        assert!(solve_gw(&dx, &mu, &dx, &nu, &GwSolveConfig::default()).is_err());
    }

    #[test]
    fn exact_step_cases() {
        assert_eq!(exact_step(1.0, -1.0), 0.5);
        assert_eq!(exact_step(1.0, -4.0), 1.0);
        assert_eq!(exact_step(-1.0, -0.5), 1.0);
        assert_eq!(exact_step(-1.0, 0.5), 1.0);
        assert_eq!(exact_step(0.0, 0.5), 0.0);
        assert_eq!(exact_step(2.0, 1.0), 0.0);
    }

    #[test]
    fn two_point_solve_reaches_half() {
        let dx = dm(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let dy = dm(&[&[0.0, 2.0], &[2.0, 0.0]]);
        let u = uniform_measure(2).unwrap();
        let r = solve_gw(&dx, &u, &dy, &u, &GwSolveConfig::default()).unwrap();
        assert!((r.cost - 0.5).abs() < 1e-12, "{}", r.cost);
        assert!(r.converged);
    }

    #[test]
    fn identical_spaces_from_identity_stay_at_zero() {
        let d = dm(&[&[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0], &[2.0, 1.0, 0.0]]);
        let u = uniform_measure(3).unwrap();
        let cfg = GwSolveConfig {
            init: PlanInit::Given(TransportPlan::identity(&u)),
            ..Default::default()
        };
        let r = solve_gw(&d, &u, &d, &u, &cfg).unwrap();
        assert_eq!(r.cost, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn srgw_single_prototype_is_forced() {
        let dx = dm(&[&[0.0, 1.0, 3.0], &[1.0, 0.0, 2.5], &[3.0, 2.5, 0.0]]);
        let mu = DiscreteMeasure::new(vec![0.2, 0.3, 0.5]).unwrap();
        let dy = dm(&[&[0.0]]);
        let r = solve_srgw(&dx, &mu, &dy, &GwSolveConfig::default()).unwrap();
        let expected: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |k| (i, k)))
            .map(|(i, k)| dx.get(i, k).powi(2) * mu.weights()[i] * mu.weights()[k])
            .sum();
        assert!((r.cost - expected).abs() < 1e-12);
        assert_eq!(r.plan.matrix().col_sums(), vec![1.0]);
    }

    #[test]
    fn srgw_row_direction_breaks_ties_low() {
        assert_eq!(argmin(&[1.0, 0.5, 0.5]), 1);
        assert_eq!(argmin(&[0.0, 0.0]), 0);
    }

    #[test]
    fn random_couplings_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mu = DiscreteMeasure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let nu = uniform_measure(3).unwrap();
        let p = random_coupling(&mu, &nu, &mut rng);
        assert!(p.marginal_error(&mu, Some(&nu)).unwrap() < 1e-12);
        let s = random_semi_relaxed(&mu, 5, &mut rng);
        assert!(s.marginal_error(&mu, None).unwrap() < 1e-15);
    }
}
