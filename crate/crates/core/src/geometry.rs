//! k-NN geodesic distances, synthetic manifolds and view transforms.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::relational::{euclidean_distances, DistanceMatrix, MultiViewDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnDisconnect {
    Error,
    #[default]
    LargestComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnGraphConfig {
    pub k_neighbors: usize,
    /// Keep an edge when either endpoint lists the other; otherwise both must.
    pub symmetrize: bool,
    pub on_disconnect: OnDisconnect,
}

impl Default for KnnGraphConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 10,
            symmetrize: true,
            on_disconnect: OnDisconnect::LargestComponent,
        }
    }
}

/// Geodesic distances over the samples in `kept` (original indices, sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct Geodesics {
    pub distances: DistanceMatrix,
    pub kept: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, then on node index.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn row_distance(points: &Matrix, i: usize, j: usize) -> f64 {
    let sq: f64 = points
        .row(i)
        .iter()
        .zip(points.row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    libm::sqrt(sq)
}

/// Weighted adjacency lists of the k-NN graph.
pub fn knn_graph(points: &Matrix, cfg: &KnnGraphConfig) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = points.rows();
    if n == 0 {
        return Err(Error::ZeroSize);
    }
    if !points.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let k = cfg.k_neighbors;
    if k == 0 || k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut lists: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        cand.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (row_distance(points, i, j), j)),
        );
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        cand.select_nth_unstable_by(k - 1, by_key);
        let mut nearest: Vec<usize> = cand[..k].iter().map(|c| c.1).collect();
        nearest.sort_unstable();
        lists.push(nearest);
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in &lists[i] {
            let mutual = lists[j].binary_search(&i).is_ok();
            let keep = if cfg.symmetrize { true } else { mutual };
            // Add each undirected edge once: from i when j does not list i
            // back, otherwise from the smaller endpoint.
            if keep && (!mutual || i < j) {
                let w = row_distance(points, i, j);
                adj[i].push((j, w));
                adj[j].push((i, w));
            }
        }
    }
    for a in &mut adj {
        a.sort_by(|x, y| x.0.cmp(&y.0));
    }
    Ok(adj)
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize, dist: &mut [f64]) {
    dist.iter_mut().for_each(|d| *d = f64::INFINITY);
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(HeapEntry {
                    dist: nd,
                    node: next,
                });
            }
        }
    }
}

/// Connected components, labelled in order of their smallest member.
fn components(adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = adj.len();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Members of the largest component; ties go to the one with the smallest
/// member. `None` when the graph is connected.
fn largest_component(adj: &[Vec<(usize, f64)>]) -> (usize, Option<Vec<usize>>) {
    let comp = components(adj);
    let count = comp.iter().max().map_or(0, |m| m + 1);
    if count <= 1 {
        return (count, None);
    }
    let mut sizes = vec![0usize; count];
    for &c in &comp {
        sizes[c] += 1;
    }
    let best = (0..count).fold(0, |b, c| if sizes[c] > sizes[b] { c } else { b });
    let members = (0..comp.len()).filter(|&i| comp[i] == best).collect();
    (count, Some(members))
}

fn all_pairs(adj: &[Vec<(usize, f64)>], members: &[usize]) -> DistanceMatrix {
    let m = members.len();
    let mut out = Matrix::zeros(m, m);
    let mut dist = vec![0.0; adj.len()];
    for (a, &s) in members.iter().enumerate() {
        dijkstra(adj, s, &mut dist);
        for (b, &t) in members.iter().enumerate() {
            out[(a, b)] = dist[t];
        }
    }
    // Path sums can differ in the last bit between directions.
    for a in 0..m {
        out[(a, a)] = 0.0;
        for b in (a + 1)..m {
            let v = out[(a, b)].min(out[(b, a)]);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    DistanceMatrix::from_trusted(out)
}

/// Shortest-path distances on the k-NN graph of `points`. With
/// [`OnDisconnect::LargestComponent`] the result covers only the largest
/// component, listed in `kept`.
pub fn knn_geodesics(points: &Matrix, cfg: &KnnGraphConfig) -> Result<Geodesics> {
    let adj = knn_graph(points, cfg)?;
    let n = adj.len();
    let kept = match largest_component(&adj) {
        (_, None) => (0..n).collect(),
        (count, Some(members)) => match cfg.on_disconnect {
            OnDisconnect::Error => return Err(Error::GraphDisconnected { components: count }),
            OnDisconnect::LargestComponent => {
                log::warn!(
                    "k-NN graph has {count} components; keeping {} of {n} samples",
                    members.len()
                );
                members
            }
        },
    };
    Ok(Geodesics {
        distances: all_pairs(&adj, &kept),
        kept,
    })
}

/// [`knn_geodesics`] without the index report.
pub fn knn_geodesic_distances(points: &Matrix, cfg: &KnnGraphConfig) -> Result<DistanceMatrix> {
    Ok(knn_geodesics(points, cfg)?.distances)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    SwissRoll,
    SCurve,
    Moebius,
    /// Samples are assigned to centers round-robin.
    GaussianBlobs {
        centers: Vec<[f64; 3]>,
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub n: usize,
    pub seed: u64,
    /// Standard deviation of ambient Gaussian noise.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSample {
    /// `n × 3` ambient coordinates.
    pub points: Matrix,
    /// Latent parameters per sample: `(t, h)` for the Swiss roll and
    /// S-curve, `(θ, w)` for the Möbius strip, the blob index for blobs.
    pub latent: Matrix,
    pub latent_names: Vec<String>,
    pub labels: Option<Vec<i64>>,
}

/// `count` blob centers with every pair at least `separation` apart:
/// regular tetrahedron vertices up to four, a circle beyond that.
pub fn blob_centers(count: usize, separation: f64) -> Vec<[f64; 3]> {
    const TETRA: [[f64; 3]; 4] = [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    if count <= 4 {
        let s = separation / (2.0 * core::f64::consts::SQRT_2);
        return TETRA[..count]
            .iter()
            .map(|v| [s * v[0], s * v[1], s * v[2]])
            .collect();
    }
    let radius = separation / (2.0 * libm::sin(PI / count as f64));
    (0..count)
        .map(|c| {
            let a = 2.0 * PI * c as f64 / count as f64;
            [radius * libm::cos(a), radius * libm::sin(a), 0.0]
        })
        .collect()
}

pub fn generate_manifold(spec: &ManifoldSpec) -> Result<ManifoldSample> {
    if spec.n < 10 {
        return Err(Error::InvalidConfig("manifolds need at least 10 samples"));
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(Error::InvalidConfig("noise must be a nonnegative real"));
    }
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Matrix::zeros(n, 3);
    let (latent, names, labels) = match &spec.kind {
        ManifoldKind::SwissRoll => {
            let mut latent = Matrix::zeros(n, 2);
            for i in 0..n {
                let t = rng.random_range(1.5 * PI..=4.5 * PI);
                let h = rng.random_range(0.0..=21.0);
                points.row_mut(i).copy_from_slice(&swiss_roll_point(t, h));
                latent.row_mut(i).copy_from_slice(&[t, h]);
            }
            (latent, vec!["t", "h"], None)
        }
        ManifoldKind::SCurve => {
            let mut latent = Matrix::zeros(n, 2);
            for i in 0..n {
                let t = rng.random_range(-1.5 * PI..=1.5 * PI);
                let h = rng.random_range(0.0..=2.0);
                let sign = if t < 0.0 { -1.0 } else { 1.0 };
                points
                    .row_mut(i)
                    .copy_from_slice(&[libm::sin(t), h, sign * (libm::cos(t) - 1.0)]);
                latent.row_mut(i).copy_from_slice(&[t, h]);
            }
            (latent, vec!["t", "h"], None)
        }
        ManifoldKind::Moebius => {
            let mut latent = Matrix::zeros(n, 2);
            for i in 0..n {
                let theta = rng.random_range(0.0..2.0 * PI);
                let w = rng.random_range(-1.0..=1.0);
                let r = 1.0 + 0.5 * w * libm::cos(0.5 * theta);
                points.row_mut(i).copy_from_slice(&[
                    r * libm::cos(theta),
                    r * libm::sin(theta),
                    0.5 * w * libm::sin(0.5 * theta),
                ]);
                latent.row_mut(i).copy_from_slice(&[theta, w]);
            }
            (latent, vec!["theta", "w"], None)
        }
        ManifoldKind::GaussianBlobs { centers, sigma } => {
            if centers.is_empty() {
                return Err(Error::InvalidConfig("blobs need at least one center"));
            }
            if !(*sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidConfig("sigma must be a nonnegative real"));
            }
            let mut latent = Matrix::zeros(n, 1);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % centers.len();
                for (a, x) in points.row_mut(i).iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x = centers[c][a] + sigma * z;
                }
                latent[(i, 0)] = c as f64;
                labels.push(c as i64);
            }
            (latent, vec!["blob"], Some(labels))
        }
    };
    if spec.noise > 0.0 {
        for x in points.as_mut_slice() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x += spec.noise * z;
        }
    }
    Ok(ManifoldSample {
        points,
        latent,
        latent_names: names.into_iter().map(String::from).collect(),
        labels,
    })
}

/// `(t cos t, h, t sin t)`.
pub fn swiss_roll_point(t: f64, h: f64) -> [f64; 3] {
    [t * libm::cos(t), h, t * libm::sin(t)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewTransform {
    /// Rotation by `angle` radians about `axis` (normalised internally).
    Rotation { axis: [f64; 3], angle: f64 },
    /// Shear `x += shear · z`, then per-axis scaling.
    LinearDeformation { scale: [f64; 3], shear: f64 },
}

impl ViewTransform {
    /// Rotation about y by π/4.
    pub fn default_rotation() -> Self {
        Self::Rotation {
            axis: [0.0, 1.0, 0.0],
            angle: PI / 4.0,
        }
    }

    /// Scale (1.5, 1.0, 0.6) with shear 0.4 in the xz-plane.
    pub fn default_deformation() -> Self {
        Self::LinearDeformation {
            scale: [1.5, 1.0, 0.6],
            shear: 0.4,
        }
    }

    pub fn matrix(&self) -> Result<[[f64; 3]; 3]> {
        match *self {
            Self::Rotation { axis, angle } => {
                let norm = libm::sqrt(axis.iter().map(|a| a * a).sum());
                if !(norm > 0.0) || !norm.is_finite() || !angle.is_finite() {
                    return Err(Error::InvalidConfig(
                        "rotation axis must be a nonzero vector",
                    ));
                }
                let [x, y, z] = axis.map(|a| a / norm);
                let (s, c) = (libm::sin(angle), libm::cos(angle));
                let t = 1.0 - c;
                Ok([
                    [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
                    [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
                    [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
                ])
            }
            Self::LinearDeformation { scale, shear } => {
                if scale.iter().any(|s| *s == 0.0 || !s.is_finite()) || !shear.is_finite() {
                    return Err(Error::InvalidConfig("deformation must be nonsingular"));
                }
                Ok([
                    [scale[0], 0.0, scale[0] * shear],
                    [0.0, scale[1], 0.0],
                    [0.0, 0.0, scale[2]],
                ])
            }
        }
    }

    /// Applies the transform to every row of an `n × 3` matrix.
    pub fn apply(&self, points: &Matrix) -> Result<Matrix> {
        if points.cols() != 3 {
            return Err(Error::ShapeMismatch {
                expected: 3,
                found: points.cols(),
            });
        }
        let m = self.matrix()?;
        Ok(Matrix::from_fn(points.rows(), 3, |i, a| {
            let p = points.row(i);
            m[a][0] * p[0] + m[a][1] * p[1] + m[a][2] * p[2]
        }))
    }
}

/// How a transformed point cloud becomes a distance view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewMetric {
    Geodesic(KnnGraphConfig),
    Euclidean,
}

impl Default for ViewMetric {
    fn default() -> Self {
        Self::Geodesic(KnnGraphConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Views {
    pub dataset: MultiViewDataset,
    /// Original indices of the samples present in every view.
    pub kept: Vec<usize>,
}

/// One view per transform over the common sample set. Samples dropped
/// from any view's largest component are dropped from all views.
pub fn make_views(
    points: &Matrix,
    transforms: &[ViewTransform],
    metric: &ViewMetric,
    labels: Option<&[i64]>,
) -> Result<Views> {
    if transforms.is_empty() {
        return Err(Error::EmptyViews);
    }
    let clouds = transforms
        .iter()
        .map(|t| t.apply(points))
        .collect::<Result<Vec<_>>>()?;
    views_from_coordinates(&clouds, metric, labels)
}

/// Distance views from per-view coordinates of one sample set; each cloud
/// may have its own dimension.
pub fn views_from_coordinates(
    clouds: &[Matrix],
    metric: &ViewMetric,
    labels: Option<&[i64]>,
) -> Result<Views> {
    let n = clouds.first().ok_or(Error::EmptyViews)?.rows();
    if let Some(c) = clouds.iter().find(|c| c.rows() != n) {
        return Err(Error::ShapeMismatch {
            expected: n,
            found: c.rows(),
        });
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::LengthMismatch(n, l.len()));
        }
    }
    let mut per_view = Vec::with_capacity(clouds.len());
    for cloud in clouds {
        let g = match metric {
            ViewMetric::Euclidean => Geodesics {
                distances: euclidean_distances(cloud)?,
                kept: (0..n).collect(),
            },
            ViewMetric::Geodesic(cfg) => knn_geodesics(cloud, cfg)?,
        };
        per_view.push(g);
    }
    let mut in_all = vec![true; n];
    for g in &per_view {
        let mut present = vec![false; n];
        for &i in &g.kept {
            present[i] = true;
        }
        for (a, p) in in_all.iter_mut().zip(present) {
            *a &= p;
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&i| in_all[i]).collect();
    if kept.len() < 2 {
        return Err(Error::GraphDisconnected {
            components: per_view.len(),
        });
    }
    let views = per_view
        .into_iter()
        .map(|g| {
            if g.kept.len() == kept.len() {
                return Ok(g.distances);
            }
            let local: Vec<usize> = kept
                .iter()
                .map(|i| {
                    g.kept
                        .binary_search(i)
                        .expect("kept sample is in every view")
                })
                .collect();
            g.distances.submatrix(&local)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = labels.map(|l| kept.iter().map(|&i| l[i]).collect());
    Ok(Views {
        dataset: MultiViewDataset::new(views, labels)?,
        kept,
    })
}
