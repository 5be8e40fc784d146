//! Core relational types: distance matrices, discrete measures, transport
//! plans, embeddings and multi-view datasets.
//!
//! Every type validates on construction and is immutable afterwards.
//! Serde representations use nested rows so JSON files stay readable
//! (`size`/`values`, `weights`, `rows`/`cols`/`mass`, `points`/`dim`,
//! `n`/`views`/`labels`); deserialisation re-runs validation.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest asymmetry or diagonal magnitude that is silently repaired.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Tolerance on measure totals and plan marginals.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Symmetric, nonnegative pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistanceMatrixRepr", into = "DistanceMatrixRepr")]
pub struct DistanceMatrix {
    values: Matrix,
}

#[derive(Serialize, Deserialize)]
struct DistanceMatrixRepr {
    size: usize,
    values: Vec<Vec<f64>>,
}

impl TryFrom<DistanceMatrixRepr> for DistanceMatrix {
    type Error = Error;

    fn try_from(repr: DistanceMatrixRepr) -> Result<Self> {
        if repr.values.len() != repr.size {
            return Err(Error::ShapeMismatch {
                expected: repr.size,
                found: repr.values.len(),
            });
        }
        validate_distance_rows(&repr.values)
    }
}

impl From<DistanceMatrix> for DistanceMatrixRepr {
    fn from(d: DistanceMatrix) -> Self {
        Self {
            size: d.size(),
            values: d.values.to_rows(),
        }
    }
}

/// Validates a square array as a distance matrix.
///
/// Asymmetry up to [`SYMMETRY_TOL`] is repaired by averaging with the
/// transpose and diagonal entries up to the same tolerance are zeroed.
pub fn validate_distance_matrix(values: Matrix) -> Result<DistanceMatrix> {
    let n = values.rows();
    if values.cols() != n {
        return Err(Error::NonSquare {
            rows: n,
            cols: values.cols(),
        });
    }
    if n == 0 {
        return Err(Error::ZeroSize);
    }
    if !values.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    for i in 0..n {
        for j in 0..n {
            let v = values[(i, j)];
            if v < 0.0 {
                return Err(Error::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    for i in 0..n {
        let v = values[(i, i)];
        if v > SYMMETRY_TOL {
            return Err(Error::NonzeroDiagonal { index: i, value: v });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (values[(i, j)] - values[(j, i)]).abs();
            if gap > SYMMETRY_TOL {
                return Err(Error::AsymmetryTooLarge {
                    row: i,
                    col: j,
                    gap,
                });
            }
        }
    }
    let mut values = values;
    for i in 0..n {
        values[(i, i)] = 0.0;
        for j in (i + 1)..n {
            let a = values[(i, j)];
            let b = values[(j, i)];
            if a != b {
                let m = 0.5 * (a + b);
                values[(i, j)] = m;
                values[(j, i)] = m;
            }
        }
    }
    Ok(DistanceMatrix { values })
}

/// Nested-row variant of [`validate_distance_matrix`].
pub fn validate_distance_rows(rows: &[Vec<f64>]) -> Result<DistanceMatrix> {
    let n = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::NonSquare {
            rows: n,
            cols: bad.len(),
        });
    }
    let m = Matrix::from_rows(rows).ok_or(Error::NonSquare { rows: n, cols: 0 })?;
    validate_distance_matrix(m)
}

impl DistanceMatrix {
    #[inline]
    pub fn size(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix {
        self.values
    }

    /// Multiplies every entry by `s >= 0`.
    pub fn scaled(&self, s: f64) -> Result<DistanceMatrix> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidConfig(
                "scale factor must be finite and nonnegative",
            ));
        }
        Ok(DistanceMatrix {
            values: self.values.scale(s),
        })
    }

    /// Mean of the off-diagonal entries (0 for a single point).
    pub fn off_diagonal_mean(&self) -> f64 {
        let n = self.size();
        if n < 2 {
            return 0.0;
        }
        self.values.sum() / (n * (n - 1)) as f64
    }

    /// Relabels points: entry `(i, j)` of the result is `self[perm[i], perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<DistanceMatrix> {
        let n = self.size();
        check_permutation(perm, n)?;
        Ok(DistanceMatrix {
            values: Matrix::from_fn(n, n, |i, j| self.values[(perm[i], perm[j])]),
        })
    }

    /// Restriction to the listed points, in the given order.
    pub fn submatrix(&self, keep: &[usize]) -> Result<DistanceMatrix> {
        if keep.is_empty() {
            return Err(Error::ZeroSize);
        }
        if let Some(&bad) = keep.iter().find(|&&k| k >= self.size()) {
            return Err(Error::ShapeMismatch {
                expected: self.size(),
                found: bad,
            });
        }
        Ok(DistanceMatrix {
            values: Matrix::from_fn(keep.len(), keep.len(), |i, j| {
                self.values[(keep[i], keep[j])]
            }),
        })
    }

    /// Entrywise mean of equally sized matrices. Each entry sums its values
    /// in sorted order, so the result does not depend on the input order.
    pub fn mean_of(mats: &[DistanceMatrix]) -> Result<DistanceMatrix> {
        let first = mats.first().ok_or(Error::EmptyViews)?;
        let n = first.size();
        if let Some(d) = mats.iter().find(|d| d.size() != n) {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: d.size(),
            });
        }
        let inv = 1.0 / mats.len() as f64;
        let mut vals = Vec::with_capacity(mats.len());
        let values = Matrix::from_fn(n, n, |i, j| {
            vals.clear();
            vals.extend(mats.iter().map(|d| d.values[(i, j)]));
            vals.sort_by(f64::total_cmp);
            vals.iter().sum::<f64>() * inv
        });
        Ok(DistanceMatrix { values })
    }

    /// Trusted constructor for matrices that are symmetric, nonnegative and
    /// zero-diagonal by construction.
    pub(crate) fn from_trusted(values: Matrix) -> Self {
        debug_assert_eq!(values.rows(), values.cols());
        Self { values }
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            found: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidConfig("not a permutation"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Probability vector on a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    weights: Vec<f64>,
}

impl TryFrom<MeasureRepr> for DiscreteMeasure {
    type Error = Error;

    fn try_from(repr: MeasureRepr) -> Result<Self> {
        DiscreteMeasure::new(repr.weights)
    }
}

impl From<DiscreteMeasure> for MeasureRepr {
    fn from(m: DiscreteMeasure) -> Self {
        Self { weights: m.weights }
    }
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ZeroSize);
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidMeasure("negative weight"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MARGINAL_TOL {
            return Err(Error::InvalidMeasure("weights do not sum to 1"));
        }
        Ok(Self { weights })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }
}

/// Uniform weights `1/n` on `n` points.
pub fn uniform_measure(n: usize) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::ZeroSize);
    }
    Ok(DiscreteMeasure {
        weights: vec![1.0 / n as f64; n],
    })
}

/// Nonnegative coupling matrix of total mass one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr", into = "PlanRepr")]
pub struct TransportPlan {
    mass: Matrix,
}

#[derive(Serialize, Deserialize)]
struct PlanRepr {
    rows: usize,
    cols: usize,
    mass: Vec<Vec<f64>>,
}

impl TryFrom<PlanRepr> for TransportPlan {
    type Error = Error;

    fn try_from(repr: PlanRepr) -> Result<Self> {
        let m = Matrix::from_rows(&repr.mass).ok_or(Error::ShapeMismatch {
            expected: repr.cols,
            found: 0,
        })?;
        if m.rows() != repr.rows || (m.cols() != repr.cols && repr.rows > 0) {
            return Err(Error::ShapeMismatch {
                expected: repr.rows * repr.cols,
                found: m.rows() * m.cols(),
            });
        }
        TransportPlan::new(m)
    }
}

impl From<TransportPlan> for PlanRepr {
    fn from(p: TransportPlan) -> Self {
        Self {
            rows: p.rows(),
            cols: p.cols(),
            mass: p.mass.to_rows(),
        }
    }
}

impl TransportPlan {
    /// Any nonnegative, finite matrix with unit total mass.
    pub fn new(mass: Matrix) -> Result<Self> {
        if mass.rows() == 0 || mass.cols() == 0 {
            return Err(Error::ZeroSize);
        }
        if !mass.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        if mass.as_slice().iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidMeasure("negative transported mass"));
        }
        if (mass.sum() - 1.0).abs() > MARGINAL_TOL {
            return Err(Error::InvalidMeasure("plan mass does not sum to 1"));
        }
        Ok(Self { mass })
    }

    /// A full coupling: both marginals must match within [`MARGINAL_TOL`].
    pub fn coupling(mass: Matrix, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        let plan = Self::new(mass)?;
        let err = plan.marginal_error(mu, Some(nu))?;
        if err > MARGINAL_TOL {
            return Err(Error::InvalidInitialPlan(err));
        }
        Ok(plan)
    }

    /// A semi-relaxed coupling: only the row marginal is constrained.
    pub fn semi_relaxed(mass: Matrix, mu: &DiscreteMeasure) -> Result<Self> {
        let plan = Self::new(mass)?;
        let err = plan.marginal_error(mu, None)?;
        if err > MARGINAL_TOL {
            return Err(Error::InvalidInitialPlan(err));
        }
        Ok(plan)
    }

    /// Product coupling `mu nuᵀ`.
    pub fn product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let (a, b) = (mu.weights(), nu.weights());
        Self {
            mass: Matrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j]),
        }
    }

    /// `diag(mu)`: each point keeps its own mass.
    pub fn identity(mu: &DiscreteMeasure) -> Self {
        let w = mu.weights();
        Self {
            mass: Matrix::from_fn(w.len(), w.len(), |i, j| if i == j { w[i] } else { 0.0 }),
        }
    }

    pub(crate) fn from_trusted(mass: Matrix) -> Self {
        Self { mass }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.mass.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.mass.cols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[(i, j)]
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.mass
    }

    pub fn into_matrix(self) -> Matrix {
        self.mass
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.mass.row_sums()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        self.mass.col_sums()
    }

    /// ∞-norm deviation of the row sums from `mu` and, when given, of the
    /// column sums from `nu`.
    pub fn marginal_error(
        &self,
        mu: &DiscreteMeasure,
        nu: Option<&DiscreteMeasure>,
    ) -> Result<f64> {
        if mu.len() != self.rows() {
            return Err(Error::ShapeMismatch {
                expected: self.rows(),
                found: mu.len(),
            });
        }
        let mut err = max_abs_diff(&self.row_marginal(), mu.weights());
        if let Some(nu) = nu {
            if nu.len() != self.cols() {
                return Err(Error::ShapeMismatch {
                    expected: self.cols(),
                    found: nu.len(),
                });
            }
            err = err.max(max_abs_diff(&self.col_marginal(), nu.weights()));
        }
        Ok(err)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Point coordinates, one row per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmbeddingRepr", into = "EmbeddingRepr")]
pub struct Embedding {
    points: Matrix,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRepr {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl TryFrom<EmbeddingRepr> for Embedding {
    type Error = Error;

    fn try_from(repr: EmbeddingRepr) -> Result<Self> {
        if repr.points.iter().any(|p| p.len() != repr.dim) {
            return Err(Error::ShapeMismatch {
                expected: repr.dim,
                found: repr
                    .points
                    .iter()
                    .map(Vec::len)
                    .find(|&l| l != repr.dim)
                    .unwrap_or(0),
            });
        }
        let data = repr.points.iter().flat_map(|r| r.iter().copied()).collect();
        Embedding::new(Matrix::from_vec(repr.points.len(), repr.dim, data))
    }
}

impl From<Embedding> for EmbeddingRepr {
    fn from(e: Embedding) -> Self {
        Self {
            dim: e.dim(),
            points: e.points.to_rows(),
        }
    }
}

impl Embedding {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.rows() == 0 || points.cols() == 0 {
            return Err(Error::ZeroSize);
        }
        if !points.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { points })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.points
    }

    pub fn into_matrix(self) -> Matrix {
        self.points
    }
}

/// Pairwise Euclidean distances between the rows of `points`.
pub fn euclidean_distances(points: &Matrix) -> Result<DistanceMatrix> {
    if points.rows() == 0 {
        return Err(Error::ZeroSize);
    }
    if !points.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(DistanceMatrix::from_trusted(pairwise_norms(points, 0.0)))
}

/// `sqrt(|y_i - y_j|² + eps)` off the diagonal, zero on it.
pub(crate) fn pairwise_norms(points: &Matrix, eps: f64) -> Matrix {
    let n = points.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let yi = points.row(i);
        for j in (i + 1)..n {
            let sq: f64 = yi
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let d = libm::sqrt(sq + eps);
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

/// `S` distance views over one common set of `n` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct MultiViewDataset {
    views: Vec<DistanceMatrix>,
    labels: Option<Vec<i64>>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    n: usize,
    views: Vec<DistanceMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<i64>>,
}

impl TryFrom<DatasetRepr> for MultiViewDataset {
    type Error = Error;

    fn try_from(repr: DatasetRepr) -> Result<Self> {
        let ds = MultiViewDataset::new(repr.views, repr.labels)?;
        if ds.n() != repr.n {
            return Err(Error::ShapeMismatch {
                expected: repr.n,
                found: ds.n(),
            });
        }
        Ok(ds)
    }
}

impl From<MultiViewDataset> for DatasetRepr {
    fn from(d: MultiViewDataset) -> Self {
        Self {
            n: d.n(),
            views: d.views,
            labels: d.labels,
        }
    }
}

impl MultiViewDataset {
    pub fn new(views: Vec<DistanceMatrix>, labels: Option<Vec<i64>>) -> Result<Self> {
        let n = views.first().ok_or(Error::EmptyViews)?.size();
        if let Some(v) = views.iter().find(|v| v.size() != n) {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: v.size(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    found: l.len(),
                });
            }
        }
        Ok(Self { views, labels })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.views[0].size()
    }

    #[inline]
    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    #[inline]
    pub fn views(&self) -> &[DistanceMatrix] {
        &self.views
    }

    #[inline]
    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Same views in a different order.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.views.len())?;
        Ok(Self {
            views: order.iter().map(|&i| self.views[i].clone()).collect(),
            labels: self.labels.clone(),
        })
    }

    /// Every view multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Ok(Self {
            views: self
                .views
                .iter()
                .map(|v| v.scaled(s))
                .collect::<Result<_>>()?,
            labels: self.labels.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn smallest_metric_is_valid() {
        let d = validate_distance_matrix(m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert_eq!(d.size(), 2);
        assert_eq!(d.get(0, 1), 1.0);
    }

    #[test]
    fn asymmetry_by_one_is_rejected() {
        let err = validate_distance_matrix(m(&[&[0.0, 1.0], &[2.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::AsymmetryTooLarge { .. }));
    }

    #[test]
    fn negative_entries_are_rejected() {
        let err = validate_distance_matrix(m(&[&[0.0, -1.0], &[-1.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::NegativeEntry { .. }));
    }

    #[test]
    fn non_square_and_diagonal_errors() {
        assert!(matches!(
            validate_distance_matrix(Matrix::zeros(2, 3)),
            Err(Error::NonSquare { rows: 2, cols: 3 })
        ));
        assert!(matches!(
            validate_distance_matrix(m(&[&[0.5, 1.0], &[1.0, 0.0]])),
            Err(Error::NonzeroDiagonal { index: 0, .. })
        ));
    }

    #[test]
    fn tiny_asymmetry_is_averaged_away() {
        let d = validate_distance_matrix(m(&[&[1e-12, 1.0], &[1.0 + 1e-10, 0.0]])).unwrap();
        assert_eq!(d.get(0, 1), d.get(1, 0));
        assert!((d.get(0, 1) - (1.0 + 0.5e-10)).abs() < 1e-15);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn uniform_measures() {
        assert_eq!(uniform_measure(4).unwrap().weights(), &[0.25; 4]);
        assert_eq!(uniform_measure(1).unwrap().weights(), &[1.0]);
        let w = uniform_measure(3).unwrap();
        assert!(w.weights().iter().all(|&x| x == 1.0 / 3.0));
        assert_eq!(uniform_measure(0), Err(Error::ZeroSize));
    }

    #[test]
    fn euclidean_examples() {
        let d = euclidean_distances(&m(&[&[0.0], &[3.0]])).unwrap();
        assert_eq!(d.matrix().to_rows(), vec![vec![0.0, 3.0], vec![3.0, 0.0]]);
        let d = euclidean_distances(&m(&[&[0.0, 0.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        let d = euclidean_distances(&m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(d.matrix().to_rows(), vec![vec![0.0; 2]; 2]);
        assert_eq!(
            euclidean_distances(&m(&[&[f64::NAN, 0.0]])),
            Err(Error::NonFiniteInput)
        );
    }

    #[test]
    fn plan_contracts() {
        let mu = uniform_measure(2).unwrap();
        let nu = DiscreteMeasure::new(vec![0.25, 0.75]).unwrap();
        let p = TransportPlan::product(&mu, &nu);
        assert!(p.marginal_error(&mu, Some(&nu)).unwrap() <= 1e-15);
        let bad = m(&[&[0.5, 0.0], &[0.0, 0.5]]);
        assert!(TransportPlan::coupling(bad.clone(), &mu, &nu).is_err());
        assert!(TransportPlan::semi_relaxed(bad, &mu).is_ok());
    }

    #[test]
    fn dataset_requires_common_size() {
        let a = validate_distance_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let b = validate_distance_rows(&[vec![0.0]]).unwrap();
        assert!(MultiViewDataset::new(vec![a.clone(), b], None).is_err());
        assert_eq!(MultiViewDataset::new(vec![], None), Err(Error::EmptyViews));
        assert!(MultiViewDataset::new(vec![a], Some(vec![0, 1])).is_ok());
    }
}
