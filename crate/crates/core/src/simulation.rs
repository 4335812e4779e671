//! Monte Carlo studies: type I error under the global null and power under
//! structured alternatives.
//!
//! Replicate `i` draws its data and its K-means initialisation from a seed
//! derived from `(master_seed, i)` only, so results do not depend on thread
//! count or scheduling. Power curves reuse the same replicate seeds for every
//! signal strength.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::inference::{bonferroni_with_trace, cluster, run_test, TestRequest, VarianceSpec};
use crate::kmeans::KMeansConfig;
use crate::result::{Method, PValueResult};
use crate::selection::SelectionRule;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "CLUSTER_SIEVE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuKind {
    Null,
    /// Group `k` centred at `(k·δ, 0, …, 0)`.
    Horizontal(f64),
    /// Group `k` centred at `(δ·cos(2πk/K), δ·sin(2πk/K), 0, …, 0)`.
    KGon(f64),
}

impl MuKind {
    pub fn with_delta(self, delta: f64) -> MuKind {
        match self {
            MuKind::Null => MuKind::Null,
            MuKind::Horizontal(_) => MuKind::Horizontal(delta),
            MuKind::KGon(_) => MuKind::KGon(delta),
        }
    }
}

/// The test run on every replicate. `K` comes from [`SimConfig::k`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestTemplate {
    pub rule: SelectionRule,
    pub variance: VarianceSpec,
    pub account_selection: bool,
    /// Combine pairwise p-values with Bonferroni instead (fixed rules, known σ).
    pub bonferroni: bool,
    pub max_iter: usize,
    /// K-means initialisations per replicate; p-values are averaged.
    pub restarts: usize,
}

impl TestTemplate {
    pub fn new(rule: SelectionRule, variance: VarianceSpec) -> Self {
        TestTemplate { rule, variance, account_selection: false, bonferroni: false, max_iter: 50, restarts: 1 }
    }

    pub fn with_selection(mut self, account: bool) -> Self {
        self.account_selection = account;
        self
    }

    pub fn with_bonferroni(mut self, on: bool) -> Self {
        self.bonferroni = on;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub q: usize,
    pub k: usize,
    pub sigma: f64,
    pub mu_kind: MuKind,
    pub replicates: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub test: TestTemplate,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n < 2 || self.q < 1 {
            return bad(format!("need n ≥ 2 and q ≥ 1, got n = {}, q = {}", self.n, self.q));
        }
        if self.k < 2 || self.k > self.n {
            return bad(format!("K = {} must lie in 2..={}", self.k, self.n));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.test.max_iter == 0 || self.test.restarts == 0 {
            return bad("max_iter and restarts must be at least 1".into());
        }
        if self.test.bonferroni && (!self.test.rule.is_fixed() || self.test.variance == VarianceSpec::Unknown) {
            return bad("Bonferroni needs fixed pairs and a known or estimated sigma".into());
        }
        self.test.rule.validate(self.k)?;
        match self.mu_kind {
            MuKind::Null => Ok(()),
            MuKind::Horizontal(d) | MuKind::KGon(d) => {
                if !(d >= 0.0 && d.is_finite()) {
                    return bad(format!("delta must be non-negative, got {d}"));
                }
                if !self.n.is_multiple_of(self.k) {
                    return bad(format!("K = {} must divide n = {} for structured means", self.k, self.n));
                }
                if matches!(self.mu_kind, MuKind::KGon(_)) && self.q < 2 {
                    return bad("K-gon means need q ≥ 2".into());
                }
                Ok(())
            }
        }
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for replicate `idx`.
pub fn replicate_seed(master: u64, idx: u64) -> u64 {
    mix(mix(master) ^ idx)
}

/// K-means seed for restart `r` of `restarts` on one data set.
pub fn restart_seed(seed: u64, r: usize, restarts: usize) -> u64 {
    if restarts == 1 {
        seed
    } else {
        replicate_seed(seed, r as u64)
    }
}

/// Row means: `n/K` consecutive rows per group for structured designs.
pub fn mean_matrix(cfg: &SimConfig) -> DataMatrix {
    let (n, q, k) = (cfg.n, cfg.q, cfg.k);
    let mut values = vec![0.0; n * q];
    let block = n / k;
    for i in 0..n {
        let g = (i / block.max(1)).min(k - 1) as f64;
        let row = &mut values[i * q..(i + 1) * q];
        match cfg.mu_kind {
            MuKind::Null => {}
            MuKind::Horizontal(d) => row[0] = g * d,
            MuKind::KGon(d) => {
                let angle = 2.0 * PI * g / k as f64;
                row[0] = d * angle.cos();
                row[1] = d * angle.sin();
            }
        }
    }
    DataMatrix::new(n, q, values).expect("finite means")
}

/// Means plus `N(0, σ²)` noise drawn from `seed`.
pub fn gen_data(cfg: &SimConfig, seed: u64) -> Result<DataMatrix> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = mean_matrix(cfg);
    let values = mean.values().iter().map(|m| m + cfg.sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    DataMatrix::new(cfg.n, cfg.q, values)
}

/// Average of the available p-values over `restarts` K-means initialisations
/// of the same data, seeded from `seed`. `None` when every restart is
/// not-available.
pub fn restart_average(
    data: &DataMatrix,
    template: &TestTemplate,
    k: usize,
    seed: u64,
) -> Result<(Option<f64>, Vec<PValueResult>)> {
    let mut results = Vec::with_capacity(template.restarts);
    for r in 0..template.restarts {
        let init_seed = restart_seed(seed, r, template.restarts);
        let req = TestRequest::new(
            data.clone(),
            KMeansConfig::new(k, init_seed).with_max_iter(template.max_iter),
            template.rule.clone(),
            template.variance,
        )
        .with_selection(template.account_selection);
        let res = if template.bonferroni {
            match cluster(&req).and_then(|t| bonferroni_with_trace(&req, &t)) {
                Err(e) if e.is_not_available() => PValueResult::not_available(Method::Bonferroni, &e),
                other => other?,
            }
        } else {
            run_test(&req)?
        };
        results.push(res);
    }
    let ps: Vec<f64> = results.iter().filter_map(PValueResult::p).collect();
    let mean = (!ps.is_empty()).then(|| ps.iter().sum::<f64>() / ps.len() as f64);
    Ok((mean, results))
}

/// The p-value for replicate `idx`, or `None` when not available.
pub fn run_replicate(cfg: &SimConfig, idx: usize) -> Result<Option<f64>> {
    let seed = replicate_seed(cfg.master_seed, idx as u64);
    let data = gen_data(cfg, seed)?;
    restart_average(&data, &cfg.test, cfg.k, mix(seed)).map(|(p, _)| p)
}

fn pool() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

/// Per-replicate p-values in replicate order.
pub fn replicate_pvalues(cfg: &SimConfig) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    pool().install(|| (0..cfg.replicates).into_par_iter().map(|i| run_replicate(cfg, i)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type1Summary {
    /// Replicate index and p-value, `None` when not available.
    pub per_replicate: Vec<(usize, Option<f64>)>,
    /// Available p-values, sorted.
    pub pvalues: Vec<f64>,
    pub ks_stat: f64,
    pub ks_pvalue: f64,
    pub na_count: usize,
    /// Share of available p-values at or below `alpha`.
    pub rejection_rate: f64,
}

impl Type1Summary {
    /// `(i − ½)/m` against the `i`-th smallest p-value.
    pub fn qq_points(&self) -> Vec<(f64, f64)> {
        qq_uniform(&self.pvalues)
    }
}

pub fn run_type1(cfg: &SimConfig) -> Result<Type1Summary> {
    if cfg.mu_kind != MuKind::Null {
        return Err(Error::InvalidInput("type I error studies need null means".into()));
    }
    let per: Vec<Option<f64>> = replicate_pvalues(cfg)?;
    Ok(summarize_type1(per, cfg.alpha))
}

pub fn summarize_type1(per: Vec<Option<f64>>, alpha: f64) -> Type1Summary {
    let mut pvalues: Vec<f64> = per.iter().flatten().copied().collect();
    pvalues.sort_by(f64::total_cmp);
    let na_count = per.len() - pvalues.len();
    let ks_stat = ks_uniform(&pvalues);
    Type1Summary {
        per_replicate: per.into_iter().enumerate().collect(),
        ks_pvalue: kolmogorov_pvalue(ks_stat, pvalues.len()),
        rejection_rate: rejection_rate(&pvalues, alpha),
        ks_stat,
        na_count,
        pvalues,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub delta: f64,
    pub power: f64,
    /// Binomial standard error `√(power(1 − power)/m)` over available p-values.
    pub stderr: f64,
    pub na_count: usize,
}

pub fn run_power(cfg: &SimConfig, deltas: &[f64]) -> Result<Vec<PowerRow>> {
    if cfg.mu_kind == MuKind::Null {
        return Err(Error::InvalidInput("power studies need structured means".into()));
    }
    deltas
        .iter()
        .map(|&delta| {
            let c = SimConfig { mu_kind: cfg.mu_kind.with_delta(delta), ..cfg.clone() };
            let per = replicate_pvalues(&c)?;
            let ps: Vec<f64> = per.iter().flatten().copied().collect();
            let power = rejection_rate(&ps, cfg.alpha);
            let m = ps.len().max(1) as f64;
            Ok(PowerRow { delta, power, stderr: (power * (1.0 - power) / m).sqrt(), na_count: per.len() - ps.len() })
        })
        .collect()
}

pub fn rejection_rate(p: &[f64], alpha: f64) -> f64 {
    if p.is_empty() {
        return f64::NAN;
    }
    p.iter().filter(|&&v| v <= alpha).count() as f64 / p.len() as f64
}

pub fn qq_uniform(sorted: &[f64]) -> Vec<(f64, f64)> {
    let m = sorted.len() as f64;
    sorted.iter().enumerate().map(|(i, &p)| ((i as f64 + 0.5) / m, p)).collect()
}

/// One-sample Kolmogorov–Smirnov distance of `sample` from `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).max((i as f64 + 1.0) / m - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_uniform(sample: &[f64]) -> f64 {
    ks_statistic(sample, |x| x.clamp(0.0, 1.0))
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Asymptotic p-value of a KS distance `d` from `m` observations, with the
/// usual small-sample correction `λ = (√m + 0.12 + 0.11/√m)·d`.
pub fn kolmogorov_pvalue(d: f64, m: usize) -> f64 {
    if m == 0 {
        return f64::NAN;
    }
    let sm = (m as f64).sqrt();
    let lambda = (sm + 0.12 + 0.11 / sm) * d;
    kolmogorov_sf(lambda)
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
