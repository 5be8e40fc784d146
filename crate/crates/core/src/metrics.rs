//! Evaluation metrics: distance correlation, NMI and ARI.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relational::DistanceMatrix;

/// Pearson correlation between the strict upper triangles of `a` and `b`.
pub fn distance_correlation(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<f64> {
    if a.size() != b.size() {
        return Err(Error::ShapeMismatch {
            expected: a.size(),
            found: b.size(),
        });
    }
    let n = a.size();
    let pairs = n * n.saturating_sub(1) / 2;
    if pairs == 0 {
        return Err(Error::ZeroVariance);
    }
    let (mut ma, mut mb) = (0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            ma += a.get(i, j);
            mb += b.get(i, j);
        }
    }
    ma /= pairs as f64;
    mb /= pairs as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let x = a.get(i, j) - ma;
            let y = b.get(i, j) - mb;
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEvaluation {
    pub nmi: f64,
    pub ari: f64,
    /// Rows follow sorted true labels, columns sorted predicted labels.
    pub contingency: Vec<Vec<u64>>,
}

struct Contingency {
    table: Vec<Vec<u64>>,
    rows: Vec<u64>,
    cols: Vec<u64>,
    n: u64,
}

fn relabel(labels: &[i64]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        ids.entry(l).or_insert(0usize);
    }
    for (k, v) in ids.values_mut().enumerate() {
        *v = k;
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

fn contingency(truth: &[i64], pred: &[i64]) -> Result<Contingency> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty);
    }
    let (t, kt) = relabel(truth);
    let (p, kp) = relabel(pred);
    let mut table = vec![vec![0u64; kp]; kt];
    for (&a, &b) in t.iter().zip(&p) {
        table[a][b] += 1;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kp).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    Ok(Contingency {
        table,
        rows,
        cols,
        n: truth.len() as u64,
    })
}

/// Same partition up to label names.
fn identical_partitions(c: &Contingency) -> bool {
    c.rows.len() == c.cols.len()
        && c.table
            .iter()
            .all(|r| r.iter().filter(|&&x| x > 0).count() == 1)
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum()
}

/// Mutual information normalised by the arithmetic mean of the entropies.
pub fn nmi(labels_true: &[i64], labels_pred: &[i64]) -> Result<f64> {
    let c = contingency(labels_true, labels_pred)?;
    let n = c.n as f64;
    let ht = entropy(&c.rows, n);
    let hp = entropy(&c.cols, n);
    let denom = 0.5 * (ht + hp);
    if denom <= 0.0 {
        return Ok(if identical_partitions(&c) { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * libm::log(n * nij / (c.rows[i] as f64 * c.cols[j] as f64));
            }
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index by pair counting.
pub fn ari(labels_true: &[i64], labels_pred: &[i64]) -> Result<f64> {
    let c = contingency(labels_true, labels_pred)?;
    let index: f64 = c.table.iter().flatten().map(|&x| pairs(x)).sum();
    let a: f64 = c.rows.iter().map(|&x| pairs(x)).sum();
    let b: f64 = c.cols.iter().map(|&x| pairs(x)).sum();
    let total = pairs(c.n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = 0.5 * (a + b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(if identical_partitions(&c) { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

pub fn evaluate_clustering(labels_true: &[i64], labels_pred: &[i64]) -> Result<ClusterEvaluation> {
    Ok(ClusterEvaluation {
        nmi: nmi(labels_true, labels_pred)?,
        ari: ari(labels_true, labels_pred)?,
        contingency: contingency(labels_true, labels_pred)?.table,
    })
}
