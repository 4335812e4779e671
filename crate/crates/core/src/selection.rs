//! Rules that choose which cluster pairs to test from the between-centre
//! distances `‖Aᵀv_{k,k'}‖₂`.

use serde::{Deserialize, Serialize};

use crate::data::{ClusterPartition, DataMatrix};
use crate::error::{Error, Result};
use crate::projection::{all_pairs, PairSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectionRule {
    /// Pairs chosen before seeing the data.
    Fixed(Vec<(usize, usize)>),
    /// Pairs whose centres are among the `g` farthest apart.
    TopG(usize),
    /// Pairs whose centres are among the `g` closest.
    BottomG(usize),
    /// Pairs whose centre distance is at most the threshold.
    ThresholdBelow(f64),
    /// Pairs whose centre distance is at least the threshold.
    ThresholdAbove(f64),
}

impl SelectionRule {
    pub fn is_fixed(&self) -> bool {
        matches!(self, SelectionRule::Fixed(_))
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let max_g = k * (k - 1) / 2;
        match *self {
            SelectionRule::Fixed(ref pairs) => PairSet::new(pairs.clone(), self.clone(), k).map(|_| ()),
            SelectionRule::TopG(g) | SelectionRule::BottomG(g) if g == 0 || g > max_g => {
                Err(Error::InvalidInput(format!("g = {g} must lie in 1..={max_g}")))
            }
            SelectionRule::ThresholdBelow(t) | SelectionRule::ThresholdAbove(t) if !(t > 0.0 && t.is_finite()) => {
                Err(Error::InvalidInput(format!("threshold {t} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// `(pair, ‖Aᵀv‖²)` for every pair `k < k'` in lexicographic order.
pub fn pair_sq_distances(a: &DataMatrix, part: &ClusterPartition) -> Vec<((usize, usize), f64)> {
    let means = part.means(a);
    all_pairs(part.k())
        .into_iter()
        .map(|(k, k2)| {
            let d = means[k].iter().zip(&means[k2]).map(|(x, y)| (x - y) * (x - y)).sum();
            ((k, k2), d)
        })
        .collect()
}

/// Applies `rule` to the centres of `part` computed on `a`. Rank rules keep
/// every pair tied with the `g`-th value.
pub fn select_pairs(a: &DataMatrix, part: &ClusterPartition, rule: &SelectionRule) -> Result<PairSet> {
    let k = part.k();
    rule.validate(k)?;
    if let SelectionRule::Fixed(pairs) = rule {
        return PairSet::new(pairs.clone(), rule.clone(), k);
    }
    let dists = pair_sq_distances(a, part);
    let selected: Vec<(usize, usize)> = match *rule {
        SelectionRule::TopG(g) => {
            let cut = nth_value(&dists, g, true);
            dists.iter().filter(|(_, d)| *d >= cut).map(|(p, _)| *p).collect()
        }
        SelectionRule::BottomG(g) => {
            let cut = nth_value(&dists, g, false);
            dists.iter().filter(|(_, d)| *d <= cut).map(|(p, _)| *p).collect()
        }
        SelectionRule::ThresholdBelow(t) => dists.iter().filter(|(_, d)| *d <= t * t).map(|(p, _)| *p).collect(),
        SelectionRule::ThresholdAbove(t) => dists.iter().filter(|(_, d)| *d >= t * t).map(|(p, _)| *p).collect(),
        SelectionRule::Fixed(_) => unreachable!(),
    };
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    PairSet::new(selected, rule.clone(), k)
}

/// The `g`-th largest (or smallest) squared distance.
fn nth_value(dists: &[((usize, usize), f64)], g: usize, largest: bool) -> f64 {
    let mut v: Vec<f64> = dists.iter().map(|(_, d)| *d).collect();
    v.sort_by(|a, b| if largest { b.total_cmp(a) } else { a.total_cmp(b) });
    v[g - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_centres() -> (DataMatrix, ClusterPartition) {
        let x = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![10.0]]).unwrap();
        (x, ClusterPartition::new(vec![0, 1, 2], 3).unwrap())
    }

    #[test]
    fn rank_and_threshold_examples() {
        let (x, part) = line_centres();
        assert_eq!(select_pairs(&x, &part, &SelectionRule::TopG(1)).unwrap().pairs(), &[(0, 2)]);
        assert_eq!(select_pairs(&x, &part, &SelectionRule::BottomG(1)).unwrap().pairs(), &[(0, 1)]);
        assert_eq!(select_pairs(&x, &part, &SelectionRule::ThresholdBelow(2.0)).unwrap().pairs(), &[(0, 1)]);
        assert_eq!(select_pairs(&x, &part, &SelectionRule::ThresholdAbove(9.5)).unwrap().pairs(), &[(0, 2)]);
        assert_eq!(select_pairs(&x, &part, &SelectionRule::TopG(3)).unwrap().pairs(), all_pairs(3).as_slice());
    }

    #[test]
    fn empty_threshold_selection() {
        let (x, part) = line_centres();
        assert_eq!(select_pairs(&x, &part, &SelectionRule::ThresholdAbove(100.0)), Err(Error::EmptySelection));
        assert_eq!(select_pairs(&x, &part, &SelectionRule::ThresholdBelow(0.5)), Err(Error::EmptySelection));
    }

    #[test]
    fn invalid_rules() {
        let (x, part) = line_centres();
        assert!(select_pairs(&x, &part, &SelectionRule::TopG(0)).is_err());
        assert!(select_pairs(&x, &part, &SelectionRule::TopG(4)).is_err());
        assert!(select_pairs(&x, &part, &SelectionRule::ThresholdBelow(-1.0)).is_err());
        assert!(select_pairs(&x, &part, &SelectionRule::Fixed(vec![(1, 0)])).is_err());
    }

    #[test]
    fn ties_are_all_included() {
        let x = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let part = ClusterPartition::new(vec![0, 1, 2], 3).unwrap();
        assert_eq!(select_pairs(&x, &part, &SelectionRule::BottomG(1)).unwrap().len(), 2);
    }

    #[test]
    fn rank_rules_are_scale_free_and_complementary() {
        let x =
            DataMatrix::from_rows(&[vec![0.0, 1.0], vec![3.0, 0.2], vec![1.5, 7.0], vec![-2.0, -4.0], vec![6.0, 6.5]])
                .unwrap();
        let part = ClusterPartition::new(vec![0, 1, 2, 3, 4], 5).unwrap();
        for g in 1..10 {
            let top = select_pairs(&x, &part, &SelectionRule::TopG(g)).unwrap();
            let top_scaled = select_pairs(&x.scale(3.7), &part, &SelectionRule::TopG(g)).unwrap();
            assert_eq!(top.pairs(), top_scaled.pairs());
            let bottom = select_pairs(&x, &part, &SelectionRule::BottomG(10 - g)).unwrap();
            let mut union: Vec<_> = top.pairs().iter().chain(bottom.pairs()).cloned().collect();
            union.sort_unstable();
            assert_eq!(union, all_pairs(5));
        }
    }
}
