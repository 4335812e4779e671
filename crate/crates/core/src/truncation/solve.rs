//! Sub-level sets `{ψ ≥ 0 : g(ψ) ≤ 0}` for the two function shapes that
//! truncation sets are built from.

use std::ops::{Neg, Sub};

use nalgebra::{DMatrix, Schur};
use serde::{Deserialize, Serialize};

use crate::interval::{Interval, IntervalUnion};

/// `a2·ψ² + a1·ψ + a0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadCoeffs {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl QuadCoeffs {
    pub fn new(a2: f64, a1: f64, a0: f64) -> Self {
        QuadCoeffs { a2, a1, a0 }
    }

    /// `‖ψ·d + e‖²`.
    pub fn norm_sq(d: &[f64], e: &[f64]) -> Self {
        let (mut dd, mut de, mut ee) = (0.0, 0.0, 0.0);
        for (x, y) in d.iter().zip(e) {
            dd += x * x;
            de += x * y;
            ee += y * y;
        }
        QuadCoeffs { a2: dd, a1: 2.0 * de, a0: ee }
    }

    pub fn eval(&self, pos: f64) -> f64 {
        (self.a2 * pos + self.a1) * pos + self.a0
    }
}

impl Sub for QuadCoeffs {
    type Output = QuadCoeffs;
    fn sub(self, o: QuadCoeffs) -> QuadCoeffs {
        QuadCoeffs { a2: self.a2 - o.a2, a1: self.a1 - o.a1, a0: self.a0 - o.a0 }
    }
}

impl Neg for QuadCoeffs {
    type Output = QuadCoeffs;
    fn neg(self) -> QuadCoeffs {
        QuadCoeffs { a2: -self.a2, a1: -self.a1, a0: -self.a0 }
    }
}

/// `pos·ψ + sqrt_pos·√ψ + sqrt_prod·√ψ·√(ψ+shift) + sqrt_shift·√(ψ+shift) + constant`
/// with `shift > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqrtCoeffs {
    pub pos: f64,
    pub sqrt_pos: f64,
    pub sqrt_prod: f64,
    pub sqrt_shift: f64,
    pub constant: f64,
    pub shift: f64,
}

impl SqrtCoeffs {
    pub fn new(coefs: [f64; 5], shift: f64) -> Self {
        let [pos, sqrt_pos, sqrt_prod, sqrt_shift, constant] = coefs;
        SqrtCoeffs { pos, sqrt_pos, sqrt_prod, sqrt_shift, constant, shift }
    }

    /// `(ψ + r)·‖√(ψ/(ψ+r))·a + √(r/(ψ+r))·b + c‖²` written in this basis.
    pub fn scaled_norm_sq(a: &[f64], b: &[f64], c: &[f64], shift: f64) -> Self {
        let (mut aa, mut bb, mut cc, mut ab, mut ac, mut bc) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for ((x, y), z) in a.iter().zip(b).zip(c) {
            aa += x * x;
            bb += y * y;
            cc += z * z;
            ab += x * y;
            ac += x * z;
            bc += y * z;
        }
        let rs = shift.sqrt();
        SqrtCoeffs::new([aa + cc, 2.0 * ab * rs, 2.0 * ac, 2.0 * bc * rs, (bb + cc) * shift], shift)
    }

    /// `γ1·ψ + γ2`.
    pub fn affine(slope: f64, intercept: f64, shift: f64) -> Self {
        SqrtCoeffs::new([slope, 0.0, 0.0, 0.0, intercept], shift)
    }

    fn coefs(&self) -> [f64; 5] {
        [self.pos, self.sqrt_pos, self.sqrt_prod, self.sqrt_shift, self.constant]
    }

    pub fn eval(&self, pos: f64) -> f64 {
        let y = pos.sqrt();
        let s = (pos + self.shift).sqrt();
        self.pos * pos + self.sqrt_pos * y + self.sqrt_prod * y * s + self.sqrt_shift * s + self.constant
    }
}

impl Sub for SqrtCoeffs {
    type Output = SqrtCoeffs;
    fn sub(self, o: SqrtCoeffs) -> SqrtCoeffs {
        debug_assert_eq!(self.shift, o.shift);
        let (x, y) = (self.coefs(), o.coefs());
        SqrtCoeffs::new(std::array::from_fn(|k| x[k] - y[k]), self.shift)
    }
}

impl Neg for SqrtCoeffs {
    type Output = SqrtCoeffs;
    fn neg(self) -> SqrtCoeffs {
        SqrtCoeffs::new(self.coefs().map(|c| -c), self.shift)
    }
}

/// A function of `ψ` whose sub-level set at zero can be solved exactly.
pub trait LevelSet: Copy + Sub<Output = Self> + Neg<Output = Self> {
    /// `{ψ ≥ 0 : g(ψ) ≤ 0}`.
    fn solve_leq(self) -> IntervalUnion;

    /// `{ψ ≥ 0 : g(ψ) < 0}`.
    fn solve_lt(self) -> IntervalUnion {
        (-self).solve_leq().complement()
    }
}

impl LevelSet for QuadCoeffs {
    fn solve_leq(self) -> IntervalUnion {
        solve_quad_leq(&self)
    }
}

impl LevelSet for SqrtCoeffs {
    fn solve_leq(self) -> IntervalUnion {
        solve_sqrt_leq(&self)
    }
}

/// Power of two near `m`, so rescaling by it is exact.
fn pow2_scale(m: f64) -> f64 {
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m.log2().floor().exp2()
}

fn closed(lo: f64, hi: f64) -> IntervalUnion {
    IntervalUnion::canonical(vec![Interval::closed(lo.max(0.0), hi)])
}

/// `{ψ ≥ 0 : a2ψ² + a1ψ + a0 ≤ 0}`.
pub fn solve_quad_leq(c: &QuadCoeffs) -> IntervalUnion {
    let scale = pow2_scale(c.a2.abs().max(c.a1.abs()).max(c.a0.abs()));
    if scale == 0.0 {
        return IntervalUnion::full();
    }
    let (a, b, k) = (c.a2 / scale, c.a1 / scale, c.a0 / scale);
    if a == 0.0 {
        return if b > 0.0 {
            let root = -k / b;
            if root < 0.0 {
                IntervalUnion::empty()
            } else {
                closed(0.0, root)
            }
        } else if b < 0.0 {
            closed(-k / b, f64::INFINITY)
        } else if k <= 0.0 {
            IntervalUnion::full()
        } else {
            IntervalUnion::empty()
        };
    }
    let disc = b * b - 4.0 * a * k;
    if disc < 0.0 {
        return if a > 0.0 { IntervalUnion::empty() } else { IntervalUnion::full() };
    }
    // Cancellation-free pair of roots.
    let sign = if b < 0.0 { -1.0 } else { 1.0 };
    let q = -0.5 * (b + sign * disc.sqrt());
    let (mut r1, mut r2) = (q / a, if q != 0.0 { k / q } else { 0.0 });
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    if a > 0.0 {
        if r2 < 0.0 {
            IntervalUnion::empty()
        } else {
            closed(r1, r2)
        }
    } else {
        let mut pieces = Vec::with_capacity(2);
        if r1 >= 0.0 {
            pieces.push(Interval::closed(0.0, r1));
        }
        pieces.push(Interval::closed(r2.max(0.0), f64::INFINITY));
        IntervalUnion::canonical(pieces)
    }
}

/// Candidate roots closer than this are treated as one.
const ROOT_COLLAPSE: f64 = 1e-30;

/// `{ψ ≥ 0 : g(ψ) ≤ 0}` for a [`SqrtCoeffs`] function `g`.
///
/// With `y = √ψ` the roots of `g` are among the roots of a quartic in `y`
/// (squaring both sides of `(c3·y + c4)·√(y²+r) = −(c1·y² + c2·y + c5)`).
/// Candidate roots (quartic roots, zeros of either side, a geometric ladder)
/// partition `[0, ∞)`, the sign of `g` is read at each piece's midpoint, and
/// each sign change is then located by bisection on `g` itself.
pub fn solve_sqrt_leq(c: &SqrtCoeffs) -> IntervalUnion {
    let r = c.shift;
    let raw = c.coefs();
    let scale = pow2_scale(raw.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    if scale == 0.0 {
        return IntervalUnion::full();
    }
    let [l1, l2, l3, l4, l5] = raw.map(|v| v / scale);
    let holds = |y: f64| {
        let s = (y * y + r).sqrt();
        let terms = [l1 * y * y, l2 * y, l3 * y * s, l4 * s, l5];
        let value: f64 = terms.iter().sum();
        let slack = 64.0 * f64::EPSILON * terms.iter().map(|t| t.abs()).sum::<f64>();
        value <= slack
    };

    let quartic = [
        l4 * l4 * r - l5 * l5,
        2.0 * (l3 * l4 * r - l2 * l5),
        l4 * l4 + l3 * l3 * r - l2 * l2 - 2.0 * l1 * l5,
        2.0 * (l3 * l4 - l1 * l2),
        l3 * l3 - l1 * l1,
    ];
    let mut cuts = vec![0.0];
    push_candidates(&mut cuts, &quartic);
    // Zeros of the two sides of the squared equation refine the partition further.
    push_candidates(&mut cuts, &[l5, l2, l1]);
    if l3 != 0.0 {
        cuts.push(-l4 / l3);
    }
    // Rounding noise in nearly constant functions can put roots far out where
    // the candidates above are unreliable; a geometric ladder keeps every
    // probed piece within a factor of 16.
    let base = r.sqrt();
    cuts.extend((-15..=25).map(|k| base * 16f64.powi(k)));
    cuts.retain(|y| y.is_finite() && *y >= 0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|b, a| (*b - *a).abs() <= ROOT_COLLAPSE);

    let probes: Vec<f64> =
        cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])).chain(std::iter::once(2.0 * cuts[cuts.len() - 1] + 1.0)).collect();
    let states: Vec<bool> = probes.iter().map(|&y| holds(y)).collect();

    let mut pieces = Vec::new();
    let mut start = if states[0] { Some(0.0) } else { None };
    for k in 1..states.len() {
        if states[k] == states[k - 1] {
            continue;
        }
        let edge = bisect(&holds, probes[k - 1], probes[k], states[k - 1]);
        match start.take() {
            Some(lo) => pieces.push(Interval::closed(lo * lo, edge * edge)),
            None => start = Some(edge),
        }
    }
    if let Some(lo) = start {
        pieces.push(Interval::closed(lo * lo, f64::INFINITY));
    }
    IntervalUnion::canonical(pieces)
}

/// Real parts of the roots of `coefs` (low order first), plus `re ± |im|` for
/// complex ones. Roots are taken from the polynomial with negligible leading
/// terms trimmed, from the untrimmed polynomial, and as reciprocals of the
/// roots of the reversed polynomial, which resolves very large roots.
fn push_candidates(cuts: &mut Vec<f64>, coefs: &[f64]) {
    let mut push = |(re, im): (f64, f64)| {
        cuts.push(re);
        if im != 0.0 {
            cuts.push(re - im.abs());
            cuts.push(re + im.abs());
        }
    };
    poly_roots(coefs, 1e-13).into_iter().for_each(&mut push);
    poly_roots(coefs, 0.0).into_iter().for_each(&mut push);
    let reversed: Vec<f64> = coefs.iter().rev().copied().collect();
    for (re, im) in poly_roots(&reversed, 1e-13) {
        let m = re * re + im * im;
        if m > 0.0 {
            push((re / m, -im / m));
        }
    }
}

/// Point where `holds` switches away from `left_state` between `lo` and `hi`.
fn bisect(holds: &impl Fn(f64) -> bool, mut lo: f64, mut hi: f64, left_state: bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid) == left_state {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Roots `(re, im)` of `Σ coefs[k]·yᵏ`. Leading coefficients at most `trim`
/// times the largest one are dropped, which discards roots of enormous modulus.
pub(crate) fn poly_roots(coefs: &[f64], trim: f64) -> Vec<(f64, f64)> {
    let biggest = coefs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if biggest == 0.0 || !biggest.is_finite() {
        return Vec::new();
    }
    let mut degree = coefs.len() - 1;
    while degree > 0 && coefs[degree].abs() <= trim * biggest {
        degree -= 1;
    }
    match degree {
        0 => Vec::new(),
        1 => vec![(-coefs[0] / coefs[1], 0.0)],
        _ => {
            let lead = coefs[degree];
            let mut companion = DMatrix::<f64>::zeros(degree, degree);
            for k in 0..degree {
                companion[(0, k)] = -coefs[degree - 1 - k] / lead;
            }
            for k in 1..degree {
                companion[(k, k - 1)] = 1.0;
            }
            match Schur::try_new(companion, f64::EPSILON, 10_000) {
                Some(schur) => schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect(),
                None => Vec::new(),
            }
        }
    }
}
