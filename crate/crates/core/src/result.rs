//! The record every test returns.

use serde::{Deserialize, Serialize};

use crate::distributions::{EvalPath, TailEstimate};
use crate::error::Error;
use crate::interval::IntervalUnion;

/// Raw p-values further than this outside `[0, 1]` are flagged.
pub const CLAMP_FLAG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KnownSigma,
    KnownSigmaSelected,
    Bonferroni,
    UnknownSigma,
    UnknownSigmaSelected,
    PairwiseKnown,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// How the tail probability was evaluated.
    pub eval_path: Option<EvalPath>,
    /// Log mass of the truncation set.
    pub ln_set_mass: Option<f64>,
    /// The unclamped ratio strayed outside `[0, 1]` by more than [`CLAMP_FLAG_TOL`].
    pub clamped: bool,
    /// The noise level was estimated, so validity is only asymptotic.
    pub asymptotic_only: bool,
    /// Noise level used by known-variance tests.
    pub sigma: Option<f64>,
    /// Pairs tested (0-based cluster labels).
    pub pairs: Vec<(usize, usize)>,
    /// For Bonferroni: the pair with the smallest p-value.
    pub contributing_pair: Option<(usize, usize)>,
    /// Lloyd iterations in the conditioning trace.
    pub iterations: Option<usize>,
    /// Why no p-value is available.
    pub na_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueResult {
    pub statistic: f64,
    pub df_num: usize,
    pub df_den: Option<usize>,
    pub truncation: IntervalUnion,
    /// `NaN` (serialised as `null`) when `degenerate`.
    pub p_value: f64,
    pub method: Method,
    pub degenerate: bool,
    pub diagnostics: Diagnostics,
}

impl PValueResult {
    pub(crate) fn from_tail(
        statistic: f64,
        df: (usize, Option<usize>),
        truncation: IntervalUnion,
        tail: TailEstimate,
        method: Method,
        mut diagnostics: Diagnostics,
    ) -> Self {
        diagnostics.eval_path = Some(tail.path);
        diagnostics.ln_set_mass = Some(tail.ln_set_mass);
        diagnostics.clamped = tail.raw < -CLAMP_FLAG_TOL || tail.raw > 1.0 + CLAMP_FLAG_TOL;
        PValueResult {
            statistic,
            df_num: df.0,
            df_den: df.1,
            truncation,
            p_value: tail.p,
            method,
            degenerate: false,
            diagnostics,
        }
    }

    /// A not-available result carrying the reason.
    pub fn not_available(method: Method, reason: &Error) -> Self {
        PValueResult {
            statistic: f64::NAN,
            df_num: 0,
            df_den: None,
            truncation: IntervalUnion::empty(),
            p_value: f64::NAN,
            method,
            degenerate: true,
            diagnostics: Diagnostics { na_reason: Some(reason.to_string()), ..Diagnostics::default() },
        }
    }

    pub fn p(&self) -> Option<f64> {
        (!self.degenerate).then_some(self.p_value)
    }
}
