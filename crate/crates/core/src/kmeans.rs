//! Lloyd's algorithm with a full per-iteration record.
//!
//! The selective tests condition on every assignment the algorithm makes, not
//! only the final one, so [`run_kmeans`] keeps the whole sequence
//! `c^(0), …, c^(J)` together with the rows used as initial centres.
//! [`replay_matches`] re-runs the algorithm on another matrix from the same
//! initial row indices and reports whether it reproduces that sequence.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClusterPartition, DataMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// `K` distinct rows drawn uniformly without replacement from the seed.
    SeededRandomRows,
    /// Rows used as initial centres, one per cluster in label order.
    ExplicitIndices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub init: Init,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig { k, max_iter: 50, seed, init: Init::SeededRandomRows }
    }

    pub fn with_init(mut self, rows: Vec<usize>) -> Self {
        self.init = Init::ExplicitIndices(rows);
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansTrace {
    k: usize,
    init_indices: Vec<usize>,
    /// Row `j` holds `c^(j)`; there are `J + 1` rows.
    assignments: Vec<Vec<usize>>,
    converged: bool,
}

impl KMeansTrace {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignments[0].len()
    }

    pub fn init_indices(&self) -> &[usize] {
        &self.init_indices
    }

    /// `J`, the number of update steps after initialisation.
    pub fn iterations(&self) -> usize {
        self.assignments.len() - 1
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn step(&self, j: usize) -> &[usize] {
        &self.assignments[j]
    }

    pub fn final_labels(&self) -> &[usize] {
        self.assignments.last().expect("trace has at least one step")
    }

    pub fn final_partition(&self) -> ClusterPartition {
        ClusterPartition::new(self.final_labels().to_vec(), self.k)
            .expect("non-degenerate traces have K non-empty clusters")
    }

    /// Averaging weights `w_{l,s}^(j−1)` over observations `s`.
    pub fn weights(&self, l: usize, j: usize) -> Result<Vec<f64>> {
        self.check_step(l, j)?;
        let labels = &self.assignments[j - 1];
        let size = labels.iter().filter(|&&c| c == l).count();
        if size == 0 {
            return Err(Error::Degenerate { step: j - 1, cluster: l });
        }
        Ok(labels.iter().map(|&c| if c == l { 1.0 / size as f64 } else { 0.0 }).collect())
    }

    /// Means `M_l^(j−1)(A)` of every cluster `l`, clusters taken from step `j − 1`.
    pub fn step_means(&self, a: &DataMatrix, j: usize) -> Result<Vec<Vec<f64>>> {
        self.check_step(0, j)?;
        if a.rows() != self.n() {
            return Err(Error::InvalidInput(format!("matrix has {} rows, trace has {}", a.rows(), self.n())));
        }
        let (means, counts) = cluster_means(a, &self.assignments[j - 1], self.k);
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Degenerate { step: j - 1, cluster: empty });
        }
        Ok(means)
    }

    fn check_step(&self, l: usize, j: usize) -> Result<()> {
        if l >= self.k {
            return Err(Error::InvalidInput(format!("cluster {l} out of range for K = {}", self.k)));
        }
        if j == 0 || j > self.iterations() {
            return Err(Error::InvalidInput(format!(
                "step {j} outside 1..={} for centroid computation",
                self.iterations()
            )));
        }
        Ok(())
    }
}

/// Mean of the rows of `a` whose label at step `j − 1` is `l`.
pub fn centroid_of(a: &DataMatrix, trace: &KMeansTrace, l: usize, j: usize) -> Result<Vec<f64>> {
    let w = trace.weights(l, j)?;
    if a.rows() != w.len() {
        return Err(Error::InvalidInput(format!("matrix has {} rows, trace has {}", a.rows(), w.len())));
    }
    Ok(a.t_mul_vec(&w))
}

pub fn run_kmeans(x: &DataMatrix, cfg: &KMeansConfig) -> Result<KMeansTrace> {
    let n = x.rows();
    if cfg.k < 2 || cfg.k > n {
        return Err(Error::InvalidInput(format!("K = {} must lie in 2..={n}", cfg.k)));
    }
    if cfg.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    let init_indices = match &cfg.init {
        Init::SeededRandomRows => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            sample(&mut rng, n, cfg.k).into_vec()
        }
        Init::ExplicitIndices(rows) => {
            if rows.len() != cfg.k {
                return Err(Error::InvalidInput(format!("{} initial rows given for K = {}", rows.len(), cfg.k)));
            }
            let mut seen = vec![false; n];
            for &r in rows {
                if r >= n || seen[r] {
                    return Err(Error::InvalidInput(format!("initial row {r} is out of range or repeated")));
                }
                seen[r] = true;
            }
            rows.clone()
        }
    };

    let centres: Vec<Vec<f64>> = init_indices.iter().map(|&r| x.row(r).to_vec()).collect();
    let first = assign(x, &centres);
    check_nonempty(&first, cfg.k, 0)?;
    let mut assignments = vec![first];
    let mut converged = false;
    for j in 1..=cfg.max_iter {
        let (centres, _) = cluster_means(x, &assignments[j - 1], cfg.k);
        let next = assign(x, &centres);
        check_nonempty(&next, cfg.k, j)?;
        let repeat = next == assignments[j - 1];
        assignments.push(next);
        if repeat {
            converged = true;
            break;
        }
    }
    Ok(KMeansTrace { k: cfg.k, init_indices, assignments, converged })
}

/// Whether Lloyd's algorithm on `a`, started from the rows of `a` at the
/// trace's initial indices, reproduces every recorded assignment.
pub fn replay_matches(a: &DataMatrix, trace: &KMeansTrace) -> bool {
    if a.rows() != trace.n() {
        return false;
    }
    let centres: Vec<Vec<f64>> = trace.init_indices.iter().map(|&r| a.row(r).to_vec()).collect();
    if assign(a, &centres) != trace.assignments[0] {
        return false;
    }
    for j in 1..=trace.iterations() {
        // Step j−1 already matched, so these are the traced clusters.
        let (centres, _) = cluster_means(a, &trace.assignments[j - 1], trace.k);
        if assign(a, &centres) != trace.assignments[j] {
            return false;
        }
    }
    true
}

/// Within-cluster sum of squares of `labels` around its own cluster means.
pub fn within_ss(x: &DataMatrix, labels: &[usize], k: usize) -> f64 {
    let (means, _) = cluster_means(x, labels, k);
    labels.iter().enumerate().map(|(i, &l)| sq_dist(x.row(i), &means[l])).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centre per row; ties go to the lower cluster index.
fn assign(x: &DataMatrix, centres: &[Vec<f64>]) -> Vec<usize> {
    (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (l, c) in centres.iter().enumerate() {
                let d = sq_dist(row, c);
                if d < best_d {
                    best = l;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

fn cluster_means(x: &DataMatrix, labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; x.cols()]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

fn check_nonempty(labels: &[usize], k: usize, step: usize) -> Result<()> {
    let mut seen = vec![false; k];
    labels.iter().for_each(|&l| seen[l] = true);
    match seen.iter().position(|&s| !s) {
        Some(cluster) => Err(Error::Degenerate { step, cluster }),
        None => Ok(()),
    }
}
