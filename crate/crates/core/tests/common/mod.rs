#![allow(dead_code)]

use gwmv_core::matrix::Matrix;
use gwmv_core::relational::{
    euclidean_distances, validate_distance_rows, DistanceMatrix, TransportPlan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric with zero diagonal, off-diagonal entries uniform on (0, 1].
pub fn random_distance(n: usize, r: &mut ChaCha8Rng) -> DistanceMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 1.0 - r.random::<f64>();
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    validate_distance_rows(&rows).unwrap()
}

pub fn random_points(n: usize, dim: usize, r: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(n, dim, |_, _| r.random_range(-1.0..1.0))
}

pub fn planar_distance(n: usize, r: &mut ChaCha8Rng) -> DistanceMatrix {
    euclidean_distances(&random_points(n, 2, r)).unwrap()
}

pub fn rows(rows: &[&[f64]]) -> DistanceMatrix {
    validate_distance_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

pub fn path3() -> DistanceMatrix {
    rows(&[&[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0], &[2.0, 1.0, 0.0]])
}

/// `Σ_ijkl (Dx_ik − Dy_jl)² T_ij T_kl`, term by term.
pub fn naive_gw_cost(dx: &DistanceMatrix, dy: &DistanceMatrix, t: &TransportPlan) -> f64 {
    let (n, m) = (dx.size(), dy.size());
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..m {
            for k in 0..n {
                for l in 0..m {
                    let d = dx.get(i, k) - dy.get(j, l);
                    s += d * d * t.get(i, j) * t.get(k, l);
                }
            }
        }
    }
    s
}

pub fn is_monotone(trace: &[f64], slack: f64) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + slack)
}

pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let r = m.row(i);
            (0..r.len()).fold(0, |b, j| if r[j] > r[b] { j } else { b })
        })
        .collect()
}
