mod common;

use common::*;
use gwmv_core::geometry::{
    generate_manifold, knn_geodesic_distances, make_views, KnnGraphConfig, ManifoldKind,
    ManifoldSpec, ViewMetric, ViewTransform,
};
use gwmv_core::matrix::Matrix;
use gwmv_core::relational::euclidean_distances;
use proptest::prelude::*;
use rand::Rng;

fn knn(k: usize) -> KnnGraphConfig {
    KnnGraphConfig {
        k_neighbors: k,
        ..Default::default()
    }
}

fn swiss_roll(n: usize, seed: u64) -> Matrix {
    generate_manifold(&ManifoldSpec {
        kind: ManifoldKind::SwissRoll,
        n,
        seed,
        noise: 0.0,
    })
    .unwrap()
    .points
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn geodesics_are_metric_and_dominate_straight_lines(n in 10usize..40, k in 4usize..9, seed in any::<u64>()) {
        let mut r = rng(seed);
        let pts = random_points(n, 3, &mut r);
        let cfg = KnnGraphConfig { k_neighbors: k, on_disconnect: gwmv_core::geometry::OnDisconnect::Error, ..Default::default() };
        let Ok(g) = knn_geodesic_distances(&pts, &cfg) else { return Ok(()) };
        let e = euclidean_distances(&pts).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!(g.get(i, j) >= e.get(i, j) - 1e-9);
            }
        }
        for _ in 0..200 {
            let (i, j, l) = (r.random_range(0..n), r.random_range(0..n), r.random_range(0..n));
            prop_assert!(g.get(i, j) <= g.get(i, l) + g.get(l, j) + 1e-9);
        }
    }

    #[test]
    fn more_neighbours_never_lengthen_paths(seed in any::<u64>()) {
        let pts = swiss_roll(120, seed);
        let mut prev = knn_geodesic_distances(&pts, &knn(6)).unwrap();
        for k in [8, 12, 20] {
            let next = knn_geodesic_distances(&pts, &knn(k)).unwrap();
            for i in 0..pts.rows() {
                for j in 0..pts.rows() {
                    prop_assert!(next.get(i, j) <= prev.get(i, j) + 1e-12);
                }
            }
            prev = next;
        }
    }
}

#[test]
fn collinear_points_with_one_neighbour() {
    let pts = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
    let g = knn_geodesic_distances(&pts, &knn(1)).unwrap();
    assert_eq!(g.get(0, 2), 2.0);
}

#[test]
fn rotation_preserves_and_shear_changes_the_view() {
    let pts = swiss_roll(300, 1);
    let base = knn_geodesic_distances(&pts, &KnnGraphConfig::default()).unwrap();
    let metric = ViewMetric::default();
    let transforms = [
        ViewTransform::default_rotation(),
        ViewTransform::LinearDeformation {
            scale: [1.0, 1.0, 1.0],
            shear: 0.0,
        },
        ViewTransform::LinearDeformation {
            scale: [1.0, 1.0, 1.0],
            shear: 0.5,
        },
    ];
    let views = make_views(&pts, &transforms, &metric, None).unwrap();
    assert_eq!(views.kept.len(), 300);
    let v = views.dataset.views();
    let mut rot = v[0].matrix().clone();
    rot.axpy(-1.0, base.matrix());
    assert!(
        rot.max_abs() <= 1e-9,
        "rotation moved a geodesic by {}",
        rot.max_abs()
    );
    assert_eq!(v[1], base);
    let mut shear = v[2].matrix().clone();
    shear.axpy(-1.0, base.matrix());
    assert!(shear.frobenius_norm() > 0.0);
}

#[test]
fn default_transforms_are_well_formed() {
    let r = ViewTransform::default_rotation().matrix().unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() <= 1e-12);
        }
    }
    let d = ViewTransform::default_deformation().matrix().unwrap();
    let det = d[0][0] * (d[1][1] * d[2][2] - d[1][2] * d[2][1])
        - d[0][1] * (d[1][0] * d[2][2] - d[1][2] * d[2][0])
        + d[0][2] * (d[1][0] * d[2][1] - d[1][1] * d[2][0]);
    assert!(det.abs() > 1e-6);
}

#[test]
fn manifolds_are_reproducible() {
    for kind in [
        ManifoldKind::SwissRoll,
        ManifoldKind::SCurve,
        ManifoldKind::Moebius,
    ] {
        let spec = ManifoldSpec {
            kind,
            n: 100,
            seed: 9,
            noise: 0.05,
        };
        let a = generate_manifold(&spec).unwrap();
        assert_eq!(a, generate_manifold(&spec).unwrap());
        assert_eq!(a.points.rows(), 100);
        assert!(a.points.is_finite());
    }
}
