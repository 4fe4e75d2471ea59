//! External clustering quality: F1 under an optimal cluster-to-class
//! matching, and adjusted mutual information.

use std::collections::BTreeMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Co-occurrence counts of predicted clusters (rows) and true classes
/// (columns). Label values are compacted to dense indices in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        ids.entry(l).or_insert(0usize);
    }
    for (rank, v) in ids.values_mut().enumerate() {
        *v = rank;
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: pred.len(),
                right: truth.len(),
            });
        }
        if pred.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (p, r) = compact(pred);
        let (t, c) = compact(truth);
        let mut counts = vec![vec![0u64; c]; r];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        let row_sums = counts.iter().map(|row| row.iter().sum()).collect();
        let col_sums = (0..c).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: pred.len() as u64,
        })
    }

    pub fn rows(&self) -> usize {
        self.counts.len()
    }

    pub fn cols(&self) -> usize {
        self.col_sums.len()
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i][j]
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Cluster-to-class pairs of a matching that maximizes the total matched
    /// count; at most `min(rows, cols)` pairs.
    pub fn optimal_matching(&self) -> Vec<(usize, usize)> {
        let size = self.rows().max(self.cols());
        let weights = Matrix::from_fn(size, size, |(i, j)| {
            if i < self.rows() && j < self.cols() {
                self.counts[i][j] as i64
            } else {
                0
            }
        });
        let (_, assignment) = kuhn_munkres(&weights);
        assignment
            .into_iter()
            .enumerate()
            .filter(|&(i, j)| i < self.rows() && j < self.cols())
            .collect()
    }
}

/// Per-class precision, recall and F1 under the optimal matching.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassF1 {
    /// Dense class index (ascending order of the original class label).
    pub class: usize,
    /// Matched cluster, if any.
    pub cluster: Option<usize>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    /// Micro-average over points: matched points over all points.
    pub micro: f64,
    pub per_class: Vec<ClassF1>,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// F1 with matched points as true positives, micro-averaged over all points.
/// Points in unmatched clusters are false positives and points of unmatched
/// classes are false negatives.
pub fn f1_report(pred: &[usize], truth: &[usize]) -> Result<F1Report> {
    let table = ContingencyTable::new(pred, truth)?;
    let matching = table.optimal_matching();
    let tp: u64 = matching.iter().map(|&(i, j)| table.count(i, j)).sum();
    // Every point is predicted into some cluster and belongs to some class,
    // so TP + FP = TP + FN = n.
    let precision = tp as f64 / table.n() as f64;
    let micro = harmonic(precision, precision);
    let per_class = (0..table.cols())
        .map(|j| {
            let cluster = matching.iter().find(|m| m.1 == j).map(|m| m.0);
            let (p, r) = match cluster {
                Some(i) => {
                    let hit = table.count(i, j) as f64;
                    (hit / table.row_sums()[i] as f64, hit / table.col_sums()[j] as f64)
                }
                None => (0.0, 0.0),
            };
            ClassF1 {
                class: j,
                cluster,
                precision: p,
                recall: r,
                f1: harmonic(p, r),
            }
        })
        .collect();
    Ok(F1Report { micro, per_class })
}

/// Micro-averaged F1 under the optimal one-to-one matching.
pub fn f1_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(f1_report(pred, truth)?.micro)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&a| a > 0)
        .map(|&a| {
            let p = a as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information (natural log) of a contingency table.
pub fn mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.n() as f64;
    let mut mi = 0.0;
    for i in 0..table.rows() {
        for j in 0..table.cols() {
            let nij = table.count(i, j);
            if nij > 0 {
                let nij = nij as f64;
                let a = table.row_sums()[i] as f64;
                let b = table.col_sums()[j] as f64;
                mi += nij / n * (n * nij / (a * b)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Expected mutual information under the hypergeometric permutation model.
pub fn expected_mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.n();
    let nf = n as f64;
    let lf = |x: u64| ln_gamma(x as f64 + 1.0);
    let ln_n_fact = lf(n);
    let mut emi = 0.0;
    for &a in table.row_sums() {
        for &b in table.col_sums() {
            let fixed = lf(a) + lf(b) + lf(n - a) + lf(n - b) - ln_n_fact;
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                let ln_p = fixed - lf(nij) - lf(a - nij) - lf(b - nij) - lf(n + nij - a - b);
                emi += term * ln_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with max normalization.
pub fn ami_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.rows() == table.cols() && table.rows() <= 1 {
        return Ok(1.0);
    }
    let n = table.n() as f64;
    let mi = mutual_information(&table);
    let emi = expected_mutual_information(&table);
    let h = entropy(table.row_sums(), n).max(entropy(table.col_sums(), n));
    let mut denom = h - emi;
    // Guard against a vanishing denominator, keeping its sign.
    if denom < 0.0 {
        denom = denom.min(-f64::EPSILON);
    } else {
        denom = denom.max(f64::EPSILON);
    }
    Ok((mi - emi) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_scores_one() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let pred = [5, 5, 3, 3, 9, 9, 9];
        assert_eq!(f1_score(&pred, &truth).unwrap(), 1.0);
        assert!((ami_score(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_cluster_for_two_classes() {
        let truth = [0, 0, 1, 1];
        let pred = [0, 0, 0, 0];
        let r = f1_report(&pred, &truth).unwrap();
        let matched: Vec<_> = r.per_class.iter().filter(|c| c.cluster.is_some()).collect();
        assert_eq!(matched.len(), 1);
        assert!((matched[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(matched[0].precision, 0.5);
        assert_eq!(matched[0].recall, 1.0);
        // The unmatched class's two points are false negatives.
        assert!((r.micro - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matching_prefers_larger_overlap() {
        let truth = [0, 0, 0, 1, 1, 2];
        let pred = [1, 1, 0, 0, 0, 0];
        let t = ContingencyTable::new(&pred, &truth).unwrap();
        let m = t.optimal_matching();
        let total: u64 = m.iter().map(|&(i, j)| t.count(i, j)).sum();
        assert_eq!(total, 4);
        assert!((f1_score(&pred, &truth).unwrap() - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn single_partition_both_sides() {
        assert_eq!(ami_score(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(f1_score(&[0, 1], &[0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(ami_score(&[0], &[0, 1]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn ami_is_symmetric() {
        let a = [0, 0, 1, 1, 2, 2, 0, 1, 2, 2];
        let b = [1, 0, 1, 1, 0, 2, 0, 0, 2, 1];
        let ab = ami_score(&a, &b).unwrap();
        let ba = ami_score(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 1.0);
    }
}
