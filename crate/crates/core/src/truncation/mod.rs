//! Truncation sets: the values of the perturbation parameter `ψ` for which the
//! perturbed data reproduce the observed clustering (and, optionally, the
//! observed choice of pairs).
//!
//! The perturbed data are linear in a few fixed component matrices, so every
//! comparison made by Lloyd's algorithm or by a selection rule is a function of
//! `ψ` of a known shape ([`QuadCoeffs`] with known variance, [`SqrtCoeffs`]
//! without). Each comparison is solved exactly and the results intersected.

mod solve;

pub use solve::{solve_quad_leq, solve_sqrt_leq, LevelSet, QuadCoeffs, SqrtCoeffs};

use crate::data::{ClusterPartition, DataMatrix};
use crate::error::{Error, Result};
use crate::interval::IntervalUnion;
use crate::kmeans::KMeansTrace;
use crate::projection::{all_pairs, ProjectionBundle};
use crate::selection::{select_pairs, SelectionRule};

/// `x(ψ) = ψ·D + E` with `D = σ·P_E X/‖P_E X‖_F` and `E = P_E^⊥ X`.
#[derive(Debug, Clone)]
pub struct KnownSigmaPath {
    direction: DataMatrix,
    residual: DataMatrix,
    statistic: f64,
}

impl KnownSigmaPath {
    pub fn new(x: &DataMatrix, bundle: &ProjectionBundle, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        let pe = bundle.apply_pe(x);
        let norm = pe.frobenius();
        if !(norm > 1e-13 * x.frobenius()) {
            return Err(Error::ZeroProjection("P_E X"));
        }
        Ok(KnownSigmaPath {
            direction: pe.scale(sigma / norm),
            residual: x.combine(1.0, &pe, -1.0),
            statistic: norm / sigma,
        })
    }

    /// `‖P_E X‖_F / σ`; `x(statistic)` is the observed data.
    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    pub fn at(&self, pos: f64) -> DataMatrix {
        self.direction.combine(pos, &self.residual, 1.0)
    }

    fn components(&self) -> [&DataMatrix; 2] {
        [&self.direction, &self.residual]
    }
}

fn quad_of(parts: &[&[f64]]) -> QuadCoeffs {
    QuadCoeffs::norm_sq(parts[0], parts[1])
}

/// `x(ψ) = √S·(√(ψ/(ψ+r))·A + √(r/(ψ+r))·B + C)` with `A`, `B` the unit-norm
/// projections onto `E` and the within-cluster space, `C = P_2 X/√S` and
/// `S = ‖P_E X‖² + ‖P_1 X‖²`.
#[derive(Debug, Clone)]
pub struct UnknownSigmaPath {
    between: DataMatrix,
    within: DataMatrix,
    rest: DataMatrix,
    total: f64,
    shift: f64,
    statistic: f64,
}

impl UnknownSigmaPath {
    pub fn new(x: &DataMatrix, part: &ClusterPartition, bundle: &ProjectionBundle) -> Result<Self> {
        bundle.require_within()?;
        let pe = bundle.apply_pe(x);
        let p1 = bundle.apply_p1(part, x);
        let scale = x.frobenius();
        let (ne, n1) = (pe.frobenius(), p1.frobenius());
        if !(ne > 1e-13 * scale) {
            return Err(Error::ZeroProjection("P_E X"));
        }
        if !(n1 > 1e-13 * scale) {
            return Err(Error::ZeroProjection("P_1 X"));
        }
        let total = ne * ne + n1 * n1;
        let p2 = bundle.apply_p2(part, x);
        let shift = bundle.dof_ratio();
        Ok(UnknownSigmaPath {
            between: pe.scale(1.0 / ne),
            within: p1.scale(1.0 / n1),
            rest: p2.scale(1.0 / total.sqrt()),
            total,
            shift,
            statistic: shift * ne * ne / (n1 * n1),
        })
    }

    /// `(‖P_E X‖²/d) / (‖P_1 X‖²/d*)`; `x(statistic)` is the observed data.
    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    /// `r* = d*/d`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `‖P_E X‖² + ‖P_1 X‖²`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn at(&self, pos: f64) -> DataMatrix {
        let u = (pos / (pos + self.shift)).sqrt();
        let w = (self.shift / (pos + self.shift)).sqrt();
        let s = self.total.sqrt();
        self.between.combine(s * u, &self.within, s * w).combine(1.0, &self.rest, s)
    }

    fn components(&self) -> [&DataMatrix; 3] {
        [&self.between, &self.within, &self.rest]
    }

    fn sqrt_of(&self) -> impl Fn(&[&[f64]]) -> SqrtCoeffs + '_ {
        move |parts: &[&[f64]]| SqrtCoeffs::scaled_norm_sq(parts[0], parts[1], parts[2], self.shift)
    }
}

/// Intersects, over every assignment decision recorded in `trace`, the set of
/// `ψ` on which the perturbed data make the same decision. `coeffs` turns the
/// per-component differences `row_i − centre` into the function of `ψ` giving
/// the squared distance.
fn trace_truncation<C: LevelSet>(
    components: &[&DataMatrix],
    trace: &KMeansTrace,
    coeffs: impl Fn(&[&[f64]]) -> C,
) -> Result<IntervalUnion> {
    let n = trace.n();
    let k = trace.k();
    let m = components.len();
    let q = components[0].cols();
    let mut acc = IntervalUnion::full();
    let mut diffs = vec![vec![0.0; q]; m];
    for j in 0..=trace.iterations() {
        // centres[c][l]: centre l of component c at this step.
        let centres: Vec<Vec<Vec<f64>>> = if j == 0 {
            components.iter().map(|a| trace.init_indices().iter().map(|&r| a.row(r).to_vec()).collect()).collect()
        } else {
            components.iter().map(|a| trace.step_means(a, j)).collect::<Result<_>>()?
        };
        let labels = trace.step(j);
        for i in 0..n {
            let fill = |diffs: &mut Vec<Vec<f64>>, l: usize| {
                for (c, d) in diffs.iter_mut().enumerate() {
                    for ((o, x), y) in d.iter_mut().zip(components[c].row(i)).zip(&centres[c][l]) {
                        *o = x - y;
                    }
                }
            };
            let assigned = labels[i];
            fill(&mut diffs, assigned);
            let own = coeffs(&diffs.iter().map(Vec::as_slice).collect::<Vec<_>>());
            for l in 0..k {
                if l == assigned {
                    continue;
                }
                fill(&mut diffs, l);
                let other = coeffs(&diffs.iter().map(Vec::as_slice).collect::<Vec<_>>());
                // Ties go to the lower index, so beating a lower-indexed centre must be strict.
                let piece = if l < assigned { (own - other).solve_lt() } else { (own - other).solve_leq() };
                if !piece.is_full() {
                    acc = acc.intersect(&piece);
                }
            }
        }
    }
    Ok(acc)
}

/// Intersects the comparisons of between-centre distances that reproduce the
/// observed selection. `threshold` gives the function of `ψ` to compare with
/// for threshold rules.
fn selection_truncation<C: LevelSet>(
    components: &[&DataMatrix],
    x: &DataMatrix,
    part: &ClusterPartition,
    rule: &SelectionRule,
    coeffs: impl Fn(&[&[f64]]) -> C,
    threshold: impl Fn(f64) -> C,
) -> Result<IntervalUnion> {
    if rule.is_fixed() {
        return Ok(IntervalUnion::full());
    }
    let observed = select_pairs(x, part, rule)?;
    let means: Vec<Vec<Vec<f64>>> = components.iter().map(|a| part.means(a)).collect();
    let pairs = all_pairs(part.k());
    let dist: Vec<C> = pairs
        .iter()
        .map(|&(a, b)| {
            let diffs: Vec<Vec<f64>> =
                means.iter().map(|mc| mc[a].iter().zip(&mc[b]).map(|(u, v)| u - v).collect()).collect();
            coeffs(&diffs.iter().map(Vec::as_slice).collect::<Vec<_>>())
        })
        .collect();
    let chosen: Vec<bool> = pairs.iter().map(|p| observed.pairs().contains(p)).collect();
    let inside = || (0..pairs.len()).filter(|&i| chosen[i]);
    let outside = || (0..pairs.len()).filter(|&i| !chosen[i]);

    let mut acc = IntervalUnion::full();
    let mut add = |piece: IntervalUnion| {
        if !piece.is_full() {
            acc = acc.intersect(&piece);
        }
    };
    match *rule {
        SelectionRule::TopG(_) => {
            for v in inside() {
                for w in outside() {
                    add((dist[w] - dist[v]).solve_lt());
                }
            }
        }
        SelectionRule::BottomG(_) => {
            for v in inside() {
                for w in outside() {
                    add((dist[v] - dist[w]).solve_lt());
                }
            }
        }
        SelectionRule::ThresholdBelow(t) => {
            let level = threshold(t * t);
            inside().for_each(|v| add((dist[v] - level).solve_leq()));
            outside().for_each(|w| add((level - dist[w]).solve_lt()));
        }
        SelectionRule::ThresholdAbove(t) => {
            let level = threshold(t * t);
            inside().for_each(|v| add((level - dist[v]).solve_leq()));
            outside().for_each(|w| add((dist[w] - level).solve_lt()));
        }
        SelectionRule::Fixed(_) => unreachable!(),
    }
    Ok(acc)
}

/// The set of `ψ ≥ 0` for which `ψ·D + E` reproduces every step of `trace`.
pub fn known_sigma_truncation(
    x: &DataMatrix,
    trace: &KMeansTrace,
    bundle: &ProjectionBundle,
    sigma: f64,
) -> Result<IntervalUnion> {
    let path = KnownSigmaPath::new(x, bundle, sigma)?;
    trace_truncation(&path.components(), trace, quad_of)
}

/// The set of `ψ ≥ 0` for which `ψ·D + E` leads `rule` to the pairs it picks
/// on `x`, with the clusters held at `part`. Fixed rules impose no
/// constraint.
pub fn selection_truncation_known(
    x: &DataMatrix,
    part: &ClusterPartition,
    bundle: &ProjectionBundle,
    sigma: f64,
    rule: &SelectionRule,
) -> Result<IntervalUnion> {
    let path = KnownSigmaPath::new(x, bundle, sigma)?;
    selection_truncation(&path.components(), x, part, rule, quad_of, |t2| QuadCoeffs::new(0.0, 0.0, t2))
}

/// The unknown-variance analogue of [`known_sigma_truncation`].
pub fn unknown_sigma_truncation(
    x: &DataMatrix,
    trace: &KMeansTrace,
    part: &ClusterPartition,
    bundle: &ProjectionBundle,
) -> Result<IntervalUnion> {
    let path = UnknownSigmaPath::new(x, part, bundle)?;
    trace_truncation(&path.components(), trace, path.sqrt_of())
}

/// The unknown-variance analogue of [`selection_truncation_known`]. Threshold
/// comparisons use the affine function `(ψ + r*)·t²/S`.
pub fn selection_truncation_unknown(
    x: &DataMatrix,
    part: &ClusterPartition,
    bundle: &ProjectionBundle,
    rule: &SelectionRule,
) -> Result<IntervalUnion> {
    let path = UnknownSigmaPath::new(x, part, bundle)?;
    let (total, shift) = (path.total(), path.shift());
    selection_truncation(&path.components(), x, part, rule, path.sqrt_of(), |t2| {
        SqrtCoeffs::affine(t2 / total, shift * t2 / total, shift)
    })
}
