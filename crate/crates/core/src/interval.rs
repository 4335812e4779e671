//! Finite unions of disjoint intervals on `[0, ∞)`.
//!
//! Every truncation set in this crate is an [`IntervalUnion`]. Unions are kept
//! in canonical form: sorted, pairwise disjoint, and with neighbours whose gap
//! is below [`MERGE_GAP`] fused together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two intervals closer than this are merged during canonicalization.
pub const MERGE_GAP: f64 = 1e-12;

/// One interval with explicit endpoint closedness. `hi` may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    #[serde(with = "infinite_as_null")]
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: true, hi_closed: hi.is_finite() }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: false, hi_closed: false }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A canonical finite union of disjoint intervals contained in `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalUnion {
    intervals: Vec<Interval>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        IntervalUnion { intervals: Vec::new() }
    }

    /// `[0, ∞)`.
    pub fn full() -> Self {
        IntervalUnion { intervals: vec![Interval { lo: 0.0, hi: f64::INFINITY, lo_closed: true, hi_closed: false }] }
    }

    /// `[lo, hi]` (right-open when `hi` is infinite), clipped to `[0, ∞)`.
    pub fn closed(lo: f64, hi: f64) -> Result<Self> {
        Self::from_intervals(vec![Interval::closed(lo, hi)])
    }

    /// Builds a canonical union from arbitrary (possibly overlapping) pieces.
    /// Pieces reaching below zero are clipped; pieces with `lo > hi` or NaN
    /// endpoints are rejected.
    pub fn from_intervals(pieces: Vec<Interval>) -> Result<Self> {
        for p in &pieces {
            if p.lo.is_nan() || p.hi.is_nan() || p.lo > p.hi || p.lo == f64::INFINITY {
                return Err(Error::InvalidInterval { lo: p.lo, hi: p.hi });
            }
        }
        Ok(Self::canonical(pieces))
    }

    pub(crate) fn canonical(mut pieces: Vec<Interval>) -> Self {
        for p in pieces.iter_mut() {
            if p.lo < 0.0 {
                p.lo = 0.0;
                p.lo_closed = true;
            }
            if p.hi == f64::INFINITY {
                p.hi_closed = false;
            }
        }
        pieces.retain(|p| !p.is_empty());
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(b.lo_closed.cmp(&a.lo_closed)));

        let mut out: Vec<Interval> = Vec::with_capacity(pieces.len());
        for p in pieces {
            match out.last_mut() {
                Some(last) if p.lo - last.hi < MERGE_GAP => {
                    if p.hi > last.hi {
                        last.hi = p.hi;
                        last.hi_closed = p.hi_closed;
                    } else if p.hi == last.hi {
                        last.hi_closed |= p.hi_closed;
                    }
                }
                _ => out.push(p),
            }
        }
        IntervalUnion { intervals: out }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_full(&self) -> bool {
        matches!(self.intervals.as_slice(), [i] if i.lo == 0.0 && i.hi == f64::INFINITY)
    }

    /// Greatest lower bound, `None` when empty.
    pub fn inf(&self) -> Option<f64> {
        self.intervals.first().map(|i| i.lo)
    }

    pub fn sup(&self) -> Option<f64> {
        self.intervals.last().map(|i| i.hi)
    }

    /// Finite endpoints of all intervals, in increasing order.
    pub fn endpoints(&self) -> Vec<f64> {
        self.intervals.iter().flat_map(|i| [i.lo, i.hi]).filter(|x| x.is_finite()).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        // Intervals are sorted, so the candidate is the last one starting at or before x.
        let idx = self.intervals.partition_point(|i| i.lo <= x);
        idx > 0 && self.intervals[idx - 1].contains(x)
    }

    /// Distance from `x` to the nearest finite endpoint (∞ when there is none).
    pub fn distance_to_boundary(&self, x: f64) -> f64 {
        self.endpoints().into_iter().map(|e| (e - x).abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn intersect(&self, other: &IntervalUnion) -> IntervalUnion {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let (x, y) = (a[i], b[j]);
            let (lo, lo_closed) = match x.lo.total_cmp(&y.lo) {
                std::cmp::Ordering::Greater => (x.lo, x.lo_closed),
                std::cmp::Ordering::Less => (y.lo, y.lo_closed),
                std::cmp::Ordering::Equal => (x.lo, x.lo_closed && y.lo_closed),
            };
            let (hi, hi_closed) = match x.hi.total_cmp(&y.hi) {
                std::cmp::Ordering::Less => (x.hi, x.hi_closed),
                std::cmp::Ordering::Greater => (y.hi, y.hi_closed),
                std::cmp::Ordering::Equal => (x.hi, x.hi_closed && y.hi_closed),
            };
            let piece = Interval { lo, hi, lo_closed, hi_closed };
            if !piece.is_empty() {
                out.push(piece);
            }
            if x.hi < y.hi || (x.hi == y.hi && !x.hi_closed) {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalUnion::canonical(out)
    }

    pub fn union(&self, other: &IntervalUnion) -> IntervalUnion {
        let mut pieces = self.intervals.clone();
        pieces.extend_from_slice(&other.intervals);
        IntervalUnion::canonical(pieces)
    }

    /// Complement relative to `[0, ∞)`, with endpoint closedness flipped.
    pub fn complement(&self) -> IntervalUnion {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut cursor = 0.0;
        let mut cursor_closed = true;
        for i in &self.intervals {
            out.push(Interval { lo: cursor, hi: i.lo, lo_closed: cursor_closed, hi_closed: !i.lo_closed });
            cursor = i.hi;
            cursor_closed = !i.hi_closed;
        }
        if cursor < f64::INFINITY {
            out.push(Interval { lo: cursor, hi: f64::INFINITY, lo_closed: cursor_closed, hi_closed: false });
        }
        // Gaps around degenerate point intervals close up again here.
        IntervalUnion::canonical(out)
    }

    /// Restriction to `[t, ∞)`.
    pub fn above(&self, t: f64) -> IntervalUnion {
        self.intersect(&IntervalUnion {
            intervals: vec![Interval { lo: t.max(0.0), hi: f64::INFINITY, lo_closed: true, hi_closed: false }],
        })
    }

    /// The image under `x ↦ c·x` for `c > 0`.
    pub fn scaled(&self, c: f64) -> IntervalUnion {
        let pieces = self.intervals.iter().map(|i| Interval { lo: i.lo * c, hi: i.hi * c, ..*i }).collect();
        IntervalUnion::canonical(pieces)
    }

    /// The image under an increasing map with `f(∞) = ∞`.
    pub fn mapped_increasing(&self, f: impl Fn(f64) -> f64) -> IntervalUnion {
        let pieces = self
            .intervals
            .iter()
            .map(|i| Interval { lo: f(i.lo), hi: if i.hi.is_finite() { f(i.hi) } else { f64::INFINITY }, ..*i })
            .collect();
        IntervalUnion::canonical(pieces)
    }

    /// Probability mass of the union under a distribution given by its
    /// (decreasing) survival function: Σ s(lo) − s(hi), clamped to `[0, 1]`.
    pub fn measure_under(&self, survival: impl Fn(f64) -> f64) -> Result<f64> {
        let mut total = 0.0;
        for i in &self.intervals {
            if i.lo > i.hi {
                return Err(Error::InvalidInterval { lo: i.lo, hi: i.hi });
            }
            let upper = if i.hi.is_finite() { survival(i.hi) } else { 0.0 };
            total += survival(i.lo) - upper;
        }
        Ok(total.clamp(0.0, 1.0))
    }
}

impl std::fmt::Display for IntervalUnion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.intervals.is_empty() {
            return write!(f, "∅");
        }
        for (k, i) in self.intervals.iter().enumerate() {
            if k > 0 {
                write!(f, " ∪ ")?;
            }
            let open = if i.lo_closed { '[' } else { '(' };
            let close = if i.hi_closed { ']' } else { ')' };
            if i.hi.is_finite() {
                write!(f, "{open}{}, {}{close}", i.lo, i.hi)?;
            } else {
                write!(f, "{open}{}, ∞)", i.lo)?;
            }
        }
        Ok(())
    }
}

/// JSON has no infinity, so an unbounded upper endpoint is written as `null`.
mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
