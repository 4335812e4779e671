//! The selective tests: statistic, truncation set and truncated tail
//! probability assembled into a [`PValueResult`].
//!
//! Every test clusters `req.data` with `req.kmeans`, chooses the pairs with
//! `req.rule` and conditions on the whole Lloyd trace. Conditions that leave no
//! p-value (an empty cluster, an empty selection, a set without mass) come back
//! as errors for which [`Error::is_not_available`] holds; [`run_test`] turns
//! them into a degenerate [`PValueResult`].

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::distributions::{truncated_tail, Family, TruncatedDistSpec};
use crate::error::{Error, Result};
use crate::kmeans::{run_kmeans, KMeansConfig, KMeansTrace};
use crate::projection::{build_projection, PairSet};
use crate::result::{Diagnostics, Method, PValueResult};
use crate::selection::{select_pairs, SelectionRule};
use crate::special::chisq1_median;
use crate::truncation::{
    known_sigma_truncation, selection_truncation_known, selection_truncation_unknown, unknown_sigma_truncation,
    KnownSigmaPath, UnknownSigmaPath,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSpec {
    Known(f64),
    /// Plug in [`sigma_hat_sample`].
    PlugInSample,
    /// Plug in [`sigma_hat_med`].
    PlugInMedian,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRequest {
    pub data: DataMatrix,
    pub kmeans: KMeansConfig,
    pub rule: SelectionRule,
    pub variance: VarianceSpec,
    /// Also condition on the selected pairs. Ignored for fixed rules.
    pub account_selection: bool,
}

impl TestRequest {
    pub fn new(data: DataMatrix, kmeans: KMeansConfig, rule: SelectionRule, variance: VarianceSpec) -> Self {
        TestRequest { data, kmeans, rule, variance, account_selection: false }
    }

    pub fn with_selection(mut self, account: bool) -> Self {
        self.account_selection = account;
        self
    }

    fn selected(&self) -> bool {
        self.account_selection && !self.rule.is_fixed()
    }

    fn sigma(&self) -> Result<(f64, bool)> {
        let (sigma, estimated) = match self.variance {
            VarianceSpec::Known(s) => (s, false),
            VarianceSpec::PlugInSample => (sigma_hat_sample(&self.data), true),
            VarianceSpec::PlugInMedian => (sigma_hat_med(&self.data), true),
            VarianceSpec::Unknown => {
                return Err(Error::InvalidInput("known-variance test requested with unknown variance".into()))
            }
        };
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("noise level must be positive, got {sigma}")));
        }
        Ok((sigma, estimated))
    }
}

/// Runs Lloyd's algorithm as configured in `req`.
pub fn cluster(req: &TestRequest) -> Result<KMeansTrace> {
    run_kmeans(&req.data, &req.kmeans)
}

/// `p_σ`, or `p_{σ,J}` when selection is accounted for.
pub fn test_known_sigma(req: &TestRequest) -> Result<PValueResult> {
    let trace = cluster(req)?;
    known_sigma_with_trace(req, &trace)
}

/// [`test_known_sigma`] on an existing trace of `req.data`.
pub fn known_sigma_with_trace(req: &TestRequest, trace: &KMeansTrace) -> Result<PValueResult> {
    let method = if req.selected() { Method::KnownSigmaSelected } else { Method::KnownSigma };
    known_sigma_inner(req, trace, &req.rule, req.selected(), method)
}

fn known_sigma_inner(
    req: &TestRequest,
    trace: &KMeansTrace,
    rule: &SelectionRule,
    selected: bool,
    method: Method,
) -> Result<PValueResult> {
    let (sigma, estimated) = req.sigma()?;
    let x = &req.data;
    let part = trace.final_partition();
    let pairs = select_pairs(x, &part, rule)?;
    let bundle = build_projection(&part, &pairs, x.cols())?;
    let path = KnownSigmaPath::new(x, &bundle, sigma)?;
    let mut set = known_sigma_truncation(x, trace, &bundle, sigma)?;
    if selected {
        set = set.intersect(&selection_truncation_known(x, &part, &bundle, sigma, rule)?);
    }
    let tail = truncated_tail(path.statistic(), &TruncatedDistSpec::new(Family::Chi(bundle.d()), set.clone()))?;
    let diagnostics = Diagnostics {
        asymptotic_only: estimated,
        sigma: Some(sigma),
        pairs: pairs.pairs().to_vec(),
        iterations: Some(trace.iterations()),
        ..Diagnostics::default()
    };
    Ok(PValueResult::from_tail(path.statistic(), (bundle.d(), None), set, tail, method, diagnostics))
}

/// The single-pair test for clusters `k < k2` (0-based).
pub fn test_pairwise_known(req: &TestRequest, k: usize, k2: usize) -> Result<PValueResult> {
    let trace = cluster(req)?;
    pairwise_known_with_trace(req, &trace, k, k2)
}

pub fn pairwise_known_with_trace(req: &TestRequest, trace: &KMeansTrace, k: usize, k2: usize) -> Result<PValueResult> {
    let rule = SelectionRule::Fixed(vec![(k, k2)]);
    known_sigma_inner(req, trace, &rule, false, Method::PairwiseKnown)
}

/// `min(|V|·min p_{k,k'}, 1)` over the pairs of a fixed rule.
pub fn test_bonferroni(req: &TestRequest) -> Result<PValueResult> {
    let trace = cluster(req)?;
    bonferroni_with_trace(req, &trace)
}

pub fn bonferroni_with_trace(req: &TestRequest, trace: &KMeansTrace) -> Result<PValueResult> {
    let SelectionRule::Fixed(pairs) = &req.rule else {
        return Err(Error::InvalidInput("Bonferroni combination needs a fixed pair set".into()));
    };
    PairSet::fixed(pairs.clone(), trace.k())?;
    let mut best: Option<PValueResult> = None;
    for &(k, k2) in pairs {
        let r = pairwise_known_with_trace(req, trace, k, k2)?;
        if best.as_ref().is_none_or(|b| r.p_value < b.p_value) {
            best = Some(r);
        }
    }
    let mut out = best.expect("fixed pair sets are non-empty");
    out.p_value = bonferroni(&[out.p_value], pairs.len());
    out.method = Method::Bonferroni;
    out.diagnostics.contributing_pair = out.diagnostics.pairs.first().copied();
    out.diagnostics.pairs = pairs.clone();
    Ok(out)
}

/// `min(m·min(p), 1)` for `m` tests.
pub fn bonferroni(p: &[f64], m: usize) -> f64 {
    let lowest = p.iter().copied().fold(f64::INFINITY, f64::min);
    (m as f64 * lowest).min(1.0)
}

/// `p*`, or `p*_J` when selection is accounted for.
pub fn test_unknown_sigma(req: &TestRequest) -> Result<PValueResult> {
    let trace = cluster(req)?;
    unknown_sigma_with_trace(req, &trace)
}

pub fn unknown_sigma_with_trace(req: &TestRequest, trace: &KMeansTrace) -> Result<PValueResult> {
    let selected = req.selected();
    let method = if selected { Method::UnknownSigmaSelected } else { Method::UnknownSigma };
    let x = &req.data;
    let part = trace.final_partition();
    let pairs = select_pairs(x, &part, &req.rule)?;
    let bundle = build_projection(&part, &pairs, x.cols())?;
    let path = UnknownSigmaPath::new(x, &part, &bundle)?;
    let mut set = unknown_sigma_truncation(x, trace, &part, &bundle)?;
    if selected {
        set = set.intersect(&selection_truncation_unknown(x, &part, &bundle, &req.rule)?);
    }
    let family = Family::FisherF(bundle.d(), bundle.within_dof());
    let tail = truncated_tail(path.statistic(), &TruncatedDistSpec::new(family, set.clone()))?;
    let diagnostics =
        Diagnostics { pairs: pairs.pairs().to_vec(), iterations: Some(trace.iterations()), ..Diagnostics::default() };
    let df = (bundle.d(), Some(bundle.within_dof()));
    Ok(PValueResult::from_tail(path.statistic(), df, set, tail, method, diagnostics))
}

/// Dispatches on `req.variance`; not-available outcomes become degenerate
/// results instead of errors.
pub fn run_test(req: &TestRequest) -> Result<PValueResult> {
    let unknown = req.variance == VarianceSpec::Unknown;
    let outcome = if unknown { test_unknown_sigma(req) } else { test_known_sigma(req) };
    match outcome {
        Err(e) if e.is_not_available() => {
            let method = match (unknown, req.selected()) {
                (false, false) => Method::KnownSigma,
                (false, true) => Method::KnownSigmaSelected,
                (true, false) => Method::UnknownSigma,
                (true, true) => Method::UnknownSigmaSelected,
            };
            Ok(PValueResult::not_available(method, &e))
        }
        other => other,
    }
}

/// `√(Σᵢ‖Xᵢ − X̄‖² / ((n − 1)q))`.
pub fn sigma_hat_sample(x: &DataMatrix) -> f64 {
    let (n, q) = (x.rows(), x.cols());
    let mut ss = 0.0;
    for j in 0..q {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        ss += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    (ss / ((n - 1) * q) as f64).sqrt()
}

/// `√(median of (X_ij − median_j)² / median(χ²₁))`.
pub fn sigma_hat_med(x: &DataMatrix) -> f64 {
    let mut dev = Vec::with_capacity(x.rows() * x.cols());
    for j in 0..x.cols() {
        let mut col = x.column(j);
        let m = median(&mut col);
        dev.extend(col.iter().map(|v| (v - m) * (v - m)));
    }
    (median(&mut dev) / chisq1_median()).sqrt()
}

/// Sample median; the mean of the two middle values for even lengths.
pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
