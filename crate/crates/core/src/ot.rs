//! Exact discrete optimal transport by the primal network simplex method.
//!
//! The transportation problem between `n` sources and `m` sinks is solved
//! on the complete bipartite graph plus an artificial root. The spanning
//! tree is stored with parent/thread/successor-count arrays so that every
//! pivot only touches the subtree that moves. Pricing uses block search and
//! leaving arcs are chosen to keep the tree strongly feasible, which rules
//! out cycling on degenerate (e.g. assignment) instances.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Optimal plan of a linear transport problem together with a dual
/// certificate.
#[derive(Debug, Clone)]
pub struct LinearOtSolution {
    /// Dense `n × m` optimal coupling.
    pub plan: Matrix,
    /// Nonzero entries `(i, j, mass)` of `plan`, in row-major order.
    pub support: Vec<(usize, usize, f64)>,
    /// `Σ cost ⊙ plan`.
    pub cost: f64,
    /// Row potentials `u` with `u_i + v_j <= cost_ij` at optimality.
    pub row_potentials: Vec<f64>,
    /// Column potentials `v`.
    pub col_potentials: Vec<f64>,
    pub pivots: usize,
}

/// Solves `min <cost, X>` over couplings of `a` and `b`.
///
/// `a` and `b` must be nonnegative with (numerically) equal totals; a
/// residual imbalance of rounding size stays on the artificial arcs.
pub fn emd(a: &[f64], b: &[f64], cost: &Matrix) -> Result<LinearOtSolution> {
    let (n, m) = (a.len(), b.len());
    if cost.rows() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            found: cost.rows(),
        });
    }
    if cost.cols() != m {
        return Err(Error::ShapeMismatch {
            expected: m,
            found: cost.cols(),
        });
    }
    if n == 0 || m == 0 {
        return Err(Error::ZeroSize);
    }
    if !cost.is_finite() || a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if a.iter().chain(b).any(|&x| x < 0.0) {
        return Err(Error::LinearOtFailure("negative marginal weight"));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
        return Err(Error::LinearOtFailure(
            "marginals have different total mass",
        ));
    }
    let mut ns = NetworkSimplex::new(a, b, cost);
    ns.run()?;
    Ok(ns.into_solution(cost))
}

struct NetworkSimplex {
    n: usize,
    m: usize,
    node_num: usize,
    arc_num: usize,
    root: usize,

    cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    art_source: Vec<usize>,
    art_target: Vec<usize>,

    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,

    block_size: usize,
    next_arc: usize,
    eps: f64,
    pivots: usize,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl NetworkSimplex {
    fn new(a: &[f64], b: &[f64], cost: &Matrix) -> Self {
        let (n, m) = (a.len(), b.len());
        let node_num = n + m;
        let arc_num = n * m;
        let root = node_num;
        let max_cost = cost.max_abs();
        let art_cost = (max_cost + 1.0) * node_num as f64;

        let mut costs = Vec::with_capacity(arc_num + node_num);
        costs.extend_from_slice(cost.as_slice());
        costs.resize(arc_num + node_num, 0.0);

        let mut ns = Self {
            n,
            m,
            node_num,
            arc_num,
            root,
            cost: costs,
            flow: vec![0.0; arc_num + node_num],
            state: vec![STATE_LOWER; arc_num + node_num],
            art_source: vec![0; node_num],
            art_target: vec![0; node_num],
            pi: vec![0.0; node_num + 1],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![0; node_num + 1],
            dirty_revs: Vec::new(),
            block_size: (libm::sqrt(arc_num as f64) as usize).max(10),
            next_arc: 0,
            eps: 64.0 * f64::EPSILON * (max_cost + 1.0),
            pivots: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };

        ns.thread[root] = 0;
        ns.rev_thread[0] = root;
        ns.succ_num[root] = node_num + 1;
        ns.last_succ[root] = root - 1;
        for u in 0..node_num {
            let supply = if u < n { a[u] } else { -b[u - n] };
            let e = arc_num + u;
            ns.parent[u] = root;
            ns.pred[u] = e;
            ns.thread[u] = u + 1;
            ns.rev_thread[u + 1] = u;
            ns.succ_num[u] = 1;
            ns.last_succ[u] = u;
            ns.state[e] = STATE_TREE;
            if supply >= 0.0 {
                ns.pred_dir[u] = DIR_UP;
                ns.pi[u] = 0.0;
                ns.art_source[u] = u;
                ns.art_target[u] = root;
                ns.flow[e] = supply;
                ns.cost[e] = 0.0;
            } else {
                ns.pred_dir[u] = DIR_DOWN;
                ns.pi[u] = art_cost;
                ns.art_source[u] = root;
                ns.art_target[u] = u;
                ns.flow[e] = -supply;
                ns.cost[e] = art_cost;
            }
        }
        ns
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.arc_num {
            e / self.m
        } else {
            self.art_source[e - self.arc_num]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.arc_num {
            self.n + e % self.m
        } else {
            self.art_target[e - self.arc_num]
        }
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        let (i, j) = (e / self.m, self.n + e % self.m);
        self.cost[e] + self.pi[i] - self.pi[j]
    }

    /// Block-search pricing over the real arcs.
    fn find_entering_arc(&mut self) -> bool {
        let mut min = 0.0;
        let mut cnt = self.block_size;
        let mut found = NONE;
        let start = self.next_arc;
        let mut e = start;
        for _ in 0..self.arc_num {
            if self.state[e] == STATE_LOWER {
                let c = self.reduced_cost(e);
                if c < min {
                    min = c;
                    found = e;
                }
            }
            e += 1;
            if e == self.arc_num {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if min < -self.eps {
                    self.in_arc = found;
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if min < -self.eps {
            self.in_arc = found;
            self.next_arc = e;
            return true;
        }
        false
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Picks the blocking arc that comes last along the cycle orientation.
    fn find_leaving_arc(&mut self) -> bool {
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0.0 {
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let in_arc = self.in_arc;

        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // Re-hang the stem u_in .. u_out under v_in, reversing parents.
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in {
            join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in]
            - self.pi[u_in]
            - self.pred_dir[u_in] as f64 * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> Result<()> {
        // Far beyond what nondegenerate instances need; guards against
        // pathological floating-point stalls.
        let max_pivots = 100 * (self.arc_num + self.node_num) + 10_000;
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(Error::LinearOtFailure("unbounded cycle"));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            self.pivots += 1;
            if self.pivots > max_pivots {
                return Err(Error::LinearOtFailure("pivot limit exceeded"));
            }
        }
        let _ = self.root;
        Ok(())
    }

    fn into_solution(self, cost: &Matrix) -> LinearOtSolution {
        let (n, m) = (self.n, self.m);
        let mut plan = Matrix::zeros(n, m);
        let mut support = Vec::with_capacity(n + m);
        let mut total = 0.0;
        for e in 0..self.arc_num {
            let f = self.flow[e];
            if f > 0.0 {
                let (i, j) = (e / m, e % m);
                plan[(i, j)] = f;
                support.push((i, j, f));
                total += f * cost[(i, j)];
            }
        }
        LinearOtSolution {
            plan,
            support,
            cost: total,
            row_potentials: self.pi[..n].iter().map(|p| -p).collect(),
            col_potentials: self.pi[n..n + m].to_vec(),
            pivots: self.pivots,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn check_certificate(a: &[f64], b: &[f64], cost: &Matrix, sol: &LinearOtSolution) {
        let tol = 1e-9 * (cost.max_abs() + 1.0);
        for i in 0..a.len() {
            let r: f64 = sol.plan.row(i).iter().sum();
            assert!((r - a[i]).abs() < 1e-12, "row {i}: {r} vs {}", a[i]);
        }
        for (j, c) in sol.plan.col_sums().iter().enumerate() {
            assert!((c - b[j]).abs() < 1e-12, "col {j}: {c} vs {}", b[j]);
        }
        for i in 0..a.len() {
            for j in 0..b.len() {
                let rc = cost[(i, j)] - sol.row_potentials[i] - sol.col_potentials[j];
                assert!(rc > -tol, "dual infeasible at ({i},{j}): {rc}");
                if sol.plan[(i, j)] > 0.0 {
                    assert!(rc.abs() < tol, "complementary slackness at ({i},{j}): {rc}");
                }
            }
        }
    }

    #[test]
    fn two_by_two_prefers_diagonal() {
        let c = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let sol = emd(&[0.5, 0.5], &[0.5, 0.5], &c).unwrap();
        assert_eq!(sol.plan.to_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn assignment_matches_permutation_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            let perms = permutations(n);
            for _ in 0..30 {
                let c = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let w = vec![1.0 / n as f64; n];
                let sol = emd(&w, &w, &c).unwrap();
                let best = perms
                    .iter()
                    .map(|p| p.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum::<f64>() / n as f64)
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    (sol.cost - best).abs() < 1e-12,
                    "n={n}: {} vs {best}",
                    sol.cost
                );
                check_certificate(&w, &w, &c, &sol);
            }
        }
    }

    #[test]
    fn rectangular_instances_satisfy_dual_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let m = rng.random_range(1..12);
            let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            if n > 1 && rng.random_bool(0.3) {
                a[0] = 0.0;
            }
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            a.iter_mut().for_each(|x| *x /= sa);
            b.iter_mut().for_each(|x| *x /= sb);
            let c = Matrix::from_fn(n, m, |_, _| rng.random_range(0.0..10.0));
            let sol = emd(&a, &b, &c).unwrap();
            check_certificate(&a, &b, &c, &sol);
            assert!(sol.support.len() <= n + m - 1);
        }
    }

    #[test]
    fn degenerate_assignment_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 120;
        let pts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let c = Matrix::from_fn(n, n, |i, j| (pts[i] - pts[j]) * (pts[i] - pts[j]));
        let w = vec![1.0 / n as f64; n];
        let sol = emd(&w, &w, &c).unwrap();
        check_certificate(&w, &w, &c, &sol);
        assert!(sol.cost.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let c = Matrix::zeros(2, 2);
        assert!(emd(&[0.5, 0.5], &[0.5], &c).is_err());
        assert!(emd(&[0.5, 0.5], &[0.9, 0.5], &c).is_err());
        assert!(emd(&[-0.5, 1.5], &[0.5, 0.5], &c).is_err());
    }
}
