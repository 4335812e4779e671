//! Contrast vectors, the span `E` of the tested contrasts and the projectors
//! `P_E`, `P_1` and `P_2 = I − P_E − P_1`.
//!
//! Projectors are never formed as `n × n` matrices. `P_E` is applied through
//! an orthonormal basis of `E`, `P_1` through per-cluster centring.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{ClusterPartition, DataMatrix};
use crate::error::{Error, Result};
use crate::selection::SelectionRule;

/// The set `V` of cluster pairs under test (0-based, `k < k'`), together with
/// the rule that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pairs: Vec<(usize, usize)>,
    rule: SelectionRule,
    k: usize,
}

impl PairSet {
    pub fn new(pairs: Vec<(usize, usize)>, rule: SelectionRule, k: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("pair set is empty".into()));
        }
        for (idx, &(a, b)) in pairs.iter().enumerate() {
            if a >= b || b >= k {
                return Err(Error::InvalidInput(format!("pair ({a}, {b}) invalid for K = {k}")));
            }
            if pairs[..idx].contains(&(a, b)) {
                return Err(Error::InvalidInput(format!("pair ({a}, {b}) listed twice")));
            }
        }
        Ok(PairSet { pairs, rule, k })
    }

    /// A pre-specified pair set.
    pub fn fixed(pairs: Vec<(usize, usize)>, k: usize) -> Result<Self> {
        Self::new(pairs.clone(), SelectionRule::Fixed(pairs), k)
    }

    /// Every pair `k < k'`.
    pub fn all(k: usize) -> Self {
        let pairs = all_pairs(k);
        PairSet { rule: SelectionRule::Fixed(pairs.clone()), pairs, k }
    }

    /// Consecutive pairs `(k, k+1)`.
    pub fn chain(k: usize) -> Self {
        let pairs: Vec<_> = (0..k - 1).map(|a| (a, a + 1)).collect();
        PairSet { rule: SelectionRule::Fixed(pairs.clone()), pairs, k }
    }

    /// Pairs `(0, k)` for every other cluster.
    pub fn star(k: usize) -> Self {
        let pairs: Vec<_> = (1..k).map(|b| (0, b)).collect();
        PairSet { rule: SelectionRule::Fixed(pairs.clone()), pairs, k }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn rule(&self) -> &SelectionRule {
        &self.rule
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_all(&self) -> bool {
        self.pairs.len() == self.k * (self.k - 1) / 2
    }

    /// Sorted cluster indices that appear in some pair.
    pub fn touched(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        t.sort_unstable();
        t.dedup();
        t
    }
}

pub fn all_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect()
}

/// `v_{k,k'} = 1_{C_k}/|C_k| − 1_{C_k'}/|C_k'|`.
pub fn contrast_vector(part: &ClusterPartition, k: usize, k2: usize) -> Vec<f64> {
    let (wk, wk2) = (1.0 / part.size(k) as f64, 1.0 / part.size(k2) as f64);
    part.labels()
        .iter()
        .map(|&l| {
            if l == k {
                wk
            } else if l == k2 {
                -wk2
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBundle {
    n: usize,
    q: usize,
    /// Orthonormal columns spanning `E`, each of length `n`.
    basis: Vec<Vec<f64>>,
    touched: Vec<usize>,
    d: usize,
    within_dof: usize,
}

impl ProjectionBundle {
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// `dim(E)`.
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    /// Numerator degrees of freedom `d = q·dim(E)`.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Within-cluster degrees of freedom `d* = q(Σ_{k touched}|C_k| − |touched|)`.
    pub fn within_dof(&self) -> usize {
        self.within_dof
    }

    pub fn dof_ratio(&self) -> f64 {
        self.within_dof as f64 / self.d as f64
    }

    /// Errors unless there are within-cluster degrees of freedom.
    pub fn require_within(&self) -> Result<()> {
        if self.within_dof == 0 {
            Err(Error::DegenerateWithin)
        } else {
            Ok(())
        }
    }

    fn check_rows(&self, a: &DataMatrix) {
        assert_eq!(a.rows(), self.n, "matrix rows do not match the projection");
    }

    /// `P_E A`.
    pub fn apply_pe(&self, a: &DataMatrix) -> DataMatrix {
        self.check_rows(a);
        let mut out = DataMatrix::zeros(self.n, a.cols());
        for u in &self.basis {
            let coef = a.t_mul_vec(u);
            for (i, &ui) in u.iter().enumerate() {
                if ui != 0.0 {
                    for (o, c) in out.row_mut(i).iter_mut().zip(&coef) {
                        *o += ui * c;
                    }
                }
            }
        }
        out
    }

    /// `P_E^⊥ A = A − P_E A`.
    pub fn apply_pe_perp(&self, a: &DataMatrix) -> DataMatrix {
        a.combine(1.0, &self.apply_pe(a), -1.0)
    }

    /// `P_1 A`, centring the rows of touched clusters.
    pub fn apply_p1(&self, part: &ClusterPartition, a: &DataMatrix) -> DataMatrix {
        apply_p1(part, &self.touched, a)
    }

    /// `P_2 A = A − P_E A − P_1 A`.
    pub fn apply_p2(&self, part: &ClusterPartition, a: &DataMatrix) -> DataMatrix {
        let pe = self.apply_pe(a);
        let p1 = self.apply_p1(part, a);
        let values = a.values().iter().zip(pe.values()).zip(p1.values()).map(|((x, e), w)| x - e - w).collect();
        DataMatrix::raw(a.rows(), a.cols(), values)
    }
}

/// Row `i` becomes `A_i − mean of its cluster` when the cluster is touched, else zero.
pub fn apply_p1(part: &ClusterPartition, touched: &[usize], a: &DataMatrix) -> DataMatrix {
    let means = part.means(a);
    let mut out = DataMatrix::zeros(a.rows(), a.cols());
    for (i, &l) in part.labels().iter().enumerate() {
        if touched.contains(&l) {
            for ((o, x), m) in out.row_mut(i).iter_mut().zip(a.row(i)).zip(&means[l]) {
                *o = x - m;
            }
        }
    }
    out
}

/// Builds the basis of `E = span{v_{k,k'} : (k,k') ∈ V}` and the degrees of
/// freedom. With every pair present the chain `v_{k,k+1}` is orthonormalised
/// directly (rank exactly `K − 1`); otherwise the rank is read off an SVD.
pub fn build_projection(part: &ClusterPartition, pairs: &PairSet, q: usize) -> Result<ProjectionBundle> {
    if pairs.k() != part.k() {
        return Err(Error::InvalidInput(format!("pair set is for K = {}, partition has K = {}", pairs.k(), part.k())));
    }
    let n = part.n();
    let basis = if pairs.is_all() {
        let chain: Vec<Vec<f64>> = (0..part.k() - 1).map(|a| contrast_vector(part, a, a + 1)).collect();
        gram_schmidt(chain)
    } else {
        svd_basis(part, pairs.pairs())
    };
    let touched = pairs.touched();
    let within: usize = touched.iter().map(|&k| part.size(k) - 1).sum();
    Ok(ProjectionBundle { n, q, d: q * basis.len(), within_dof: q * within, basis, touched })
}

/// Modified Gram–Schmidt with re-orthogonalisation.
fn gram_schmidt(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        for _ in 0..2 {
            for u in &out {
                let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    out
}

fn svd_basis(part: &ClusterPartition, pairs: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let n = part.n();
    let cols: Vec<Vec<f64>> = pairs.iter().map(|&(a, b)| contrast_vector(part, a, b)).collect();
    let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let largest = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let threshold = n.max(pairs.len()) as f64 * f64::EPSILON * largest;
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(j, _)| u.column(j).iter().cloned().collect())
        .collect()
}
