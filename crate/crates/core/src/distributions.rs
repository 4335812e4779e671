//! Tail probabilities of the χ, χ² and F distributions, plain and truncated to
//! an [`IntervalUnion`].
//!
//! Set masses are accumulated in log space. Each interval's mass is taken from
//! whichever tail (lower or upper) is smaller at that interval, and intervals
//! that are too narrow for a difference of tails are integrated directly.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::interval::IntervalUnion;
use crate::special::{ln_add_exp, ln_beta, ln_beta_inc, ln_gamma_inc, ln_one_minus_exp};

const LN_HALF: f64 = -std::f64::consts::LN_2;
/// A tail difference smaller than this fraction of the tail is integrated.
const NARROW: f64 = 1e-3;
const GL_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Chi(usize),
    ChiSq(usize),
    FisherF(usize, usize),
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Chi(d) | Family::ChiSq(d) => d >= 1,
            Family::FisherF(d1, d2) => d1 >= 1 && d2 >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("degrees of freedom must be positive: {self:?}")))
        }
    }

    /// `(ln F(t), ln S(t))`: log CDF and log survival.
    pub fn ln_tails(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return (f64::NEG_INFINITY, 0.0);
        }
        if t == f64::INFINITY {
            return (0.0, f64::NEG_INFINITY);
        }
        match *self {
            Family::Chi(d) => ln_gamma_inc(d as f64 / 2.0, t * t / 2.0),
            Family::ChiSq(d) => ln_gamma_inc(d as f64 / 2.0, t / 2.0),
            Family::FisherF(d1, d2) => {
                let (a, b) = (d1 as f64, d2 as f64);
                let denom = b + a * t;
                let (ln_s, ln_c) = ln_beta_inc(b / 2.0, a / 2.0, b / denom, a * t / denom);
                (ln_c, ln_s)
            }
        }
    }

    pub fn ln_sf(&self, t: f64) -> f64 {
        self.ln_tails(t).1
    }

    pub fn ln_cdf(&self, t: f64) -> f64 {
        self.ln_tails(t).0
    }

    pub fn sf(&self, t: f64) -> f64 {
        self.ln_sf(t).exp()
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        if t < 0.0 || t == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        // `power * ln t` with the convention 0·ln 0 = 0.
        let xlogt = |power: f64| if power == 0.0 { 0.0 } else { power * t.ln() };
        match *self {
            Family::Chi(d) => {
                let k = d as f64;
                xlogt(k - 1.0) - t * t / 2.0 - (k / 2.0 - 1.0) * std::f64::consts::LN_2 - ln_gamma(k / 2.0)
            }
            Family::ChiSq(d) => {
                let h = d as f64 / 2.0;
                xlogt(h - 1.0) - t / 2.0 - h * std::f64::consts::LN_2 - ln_gamma(h)
            }
            Family::FisherF(d1, d2) => {
                let (a, b) = (d1 as f64, d2 as f64);
                (a / 2.0) * (a / b).ln() + xlogt(a / 2.0 - 1.0)
                    - ((a + b) / 2.0) * (a * t / b).ln_1p()
                    - ln_beta(a / 2.0, b / 2.0)
            }
        }
    }

    /// Log of the probability of `[lo, hi]`.
    pub fn ln_interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return f64::NEG_INFINITY;
        }
        let (lc_lo, ls_lo) = self.ln_tails(lo);
        let (lc_hi, ls_hi) = self.ln_tails(hi);
        let narrow_ok = lo > 0.0 && hi.is_finite();
        if ls_lo <= LN_HALF {
            let delta = ls_hi - ls_lo;
            if narrow_ok && delta > -NARROW {
                return self.ln_integral(lo, hi);
            }
            ls_lo + ln_one_minus_exp(delta)
        } else if lc_hi <= LN_HALF {
            let delta = lc_lo - lc_hi;
            if narrow_ok && delta > -NARROW {
                return self.ln_integral(lo, hi);
            }
            lc_hi + ln_one_minus_exp(delta)
        } else {
            let mass = 1.0 - lc_lo.exp() - ls_hi.exp();
            if narrow_ok && mass < NARROW {
                return self.ln_integral(lo, hi);
            }
            mass.ln()
        }
    }

    /// Gauss–Legendre integral of the density over a short interval, in logs.
    fn ln_integral(&self, lo: f64, hi: f64) -> f64 {
        let (nodes, weights) = gauss_legendre();
        let half = (hi - lo) / 2.0;
        let mid = (hi + lo) / 2.0;
        let reference = self.ln_pdf(mid);
        if reference == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let sum: f64 =
            nodes.iter().zip(weights).map(|(x, w)| w * (self.ln_pdf(mid + half * x) - reference).exp()).sum();
        reference + (sum * half).ln()
    }
}

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut deriv = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                deriv = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / deriv;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * deriv * deriv);
        }
        (nodes, weights)
    })
}

/// `P(χ_d ≥ t)`.
pub fn chi_survival(t: f64, d: usize) -> f64 {
    Family::Chi(d).sf(t)
}

pub fn ln_chi_survival(t: f64, d: usize) -> f64 {
    Family::Chi(d).ln_sf(t)
}

/// `P(χ²_d ≥ x)`.
pub fn chisq_survival(x: f64, d: usize) -> f64 {
    Family::ChiSq(d).sf(x)
}

/// `P(F_{d1,d2} ≥ t)`.
pub fn f_survival(t: f64, d1: usize, d2: usize) -> f64 {
    Family::FisherF(d1, d2).sf(t)
}

pub fn ln_f_survival(t: f64, d1: usize, d2: usize) -> f64 {
    Family::FisherF(d1, d2).ln_sf(t)
}

/// Log probability of a union of intervals.
pub fn ln_set_mass(family: Family, set: &IntervalUnion) -> f64 {
    set.intervals().iter().map(|i| family.ln_interval_mass(i.lo, i.hi)).fold(f64::NEG_INFINITY, ln_add_exp)
}

/// A distribution restricted to a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedDistSpec {
    pub family: Family,
    pub set: IntervalUnion,
}

impl TruncatedDistSpec {
    pub fn new(family: Family, set: IntervalUnion) -> Self {
        TruncatedDistSpec { family, set }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPath {
    Exact,
    ChiSquareApprox,
}

/// A truncated upper-tail probability together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    /// The probability clamped to `[0, 1]`.
    pub p: f64,
    /// The ratio before clamping.
    pub raw: f64,
    /// Log mass of the truncation set under the family used.
    pub ln_set_mass: f64,
    pub path: EvalPath,
}

/// `P(T ≥ t | T ∈ set)` for the family in `spec`.
pub fn truncated_survival(t: f64, spec: &TruncatedDistSpec) -> Result<f64> {
    truncated_tail(t, spec).map(|e| e.p)
}

/// As [`truncated_survival`], falling back to the χ² approximation for F
/// families when the exact set mass is not representable.
pub fn truncated_tail(t: f64, spec: &TruncatedDistSpec) -> Result<TailEstimate> {
    spec.family.validate()?;
    if let Some(est) = exact_tail(t, spec.family, &spec.set) {
        return Ok(est);
    }
    match spec.family {
        Family::FisherF(d1, d2) => {
            let (g, mapped) = chisq_image(t, d1, d2, &spec.set);
            exact_tail(g, Family::ChiSq(d1), &mapped)
                .map(|e| TailEstimate { path: EvalPath::ChiSquareApprox, ..e })
                .ok_or(Error::ZeroMassSet)
        }
        _ => Err(Error::ZeroMassSet),
    }
}

fn exact_tail(t: f64, family: Family, set: &IntervalUnion) -> Option<TailEstimate> {
    let ln_den = ln_set_mass(family, set);
    if !ln_den.is_finite() {
        return None;
    }
    let ln_num = ln_set_mass(family, &set.above(t));
    let raw = (ln_num - ln_den).exp();
    if raw.is_nan() {
        return None;
    }
    Some(TailEstimate { p: raw.clamp(0.0, 1.0), raw, ln_set_mass: ln_den, path: EvalPath::Exact })
}

/// The increasing map taking an `F_{d1,d2}` quantile to the matching `χ²_{d1}`
/// quantile under the moment-matching approximation.
pub fn f_to_chisq_scale(x: f64, d1: usize, d2: usize) -> f64 {
    let (m, n) = (d1 as f64, d2 as f64);
    if x == f64::INFINITY {
        return f64::INFINITY;
    }
    m * x * (2.0 * n + m * x / 3.0 + m - 2.0) / (2.0 * n + 4.0 * m * x / 3.0)
}

fn chisq_image(t: f64, d1: usize, d2: usize, set: &IntervalUnion) -> (f64, IntervalUnion) {
    let map = |x| f_to_chisq_scale(x, d1, d2);
    (map(t), set.mapped_increasing(map))
}

/// Truncated F upper tail approximated through a truncated `χ²_{d1}` tail.
pub fn f_to_chisq_approx(t: f64, d1: usize, d2: usize, set: &IntervalUnion) -> Result<f64> {
    Family::FisherF(d1, d2).validate()?;
    let (g, mapped) = chisq_image(t, d1, d2, set);
    exact_tail(g, Family::ChiSq(d1), &mapped).map(|e| e.p).ok_or(Error::ZeroMassSet)
}

#[cfg(test)]
#[path = "../tests/common/quadrature.rs"]
mod quadrature;
