//! Double-exponential quadrature of χ, χ² and F densities, written directly
//! from the density formulas. Used as an oracle for the tail functions.

#![allow(dead_code)]

use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone, Copy)]
pub enum Density {
    Chi(usize),
    ChiSq(usize),
    F(usize, usize),
}

impl Density {
    pub fn pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return 0.0;
        }
        let ln2 = std::f64::consts::LN_2;
        let ln = match *self {
            Density::Chi(k) => {
                let k = k as f64;
                (k - 1.0) * x.ln() - x * x / 2.0 - (k / 2.0 - 1.0) * ln2 - ln_gamma(k / 2.0)
            }
            Density::ChiSq(k) => {
                let h = k as f64 / 2.0;
                (h - 1.0) * x.ln() - x / 2.0 - h * ln2 - ln_gamma(h)
            }
            Density::F(m, n) => {
                let (m, n) = (m as f64, n as f64);
                let ln_b = ln_gamma(m / 2.0) + ln_gamma(n / 2.0) - ln_gamma((m + n) / 2.0);
                (m / 2.0) * (m / n).ln() + (m / 2.0 - 1.0) * x.ln() - ((m + n) / 2.0) * (1.0 + m * x / n).ln() - ln_b
            }
        };
        ln.exp()
    }
}

/// Tanh–sinh rule on `[a, b]`; tolerates integrable endpoint singularities.
pub fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = (b - a) / 2.0;
    let centre = (a + b) / 2.0;
    let pi2 = std::f64::consts::FRAC_PI_2;
    // Sum of weight·(f(left) + f(right)) at abscissa parameter t > 0.
    let pair = |t: f64| -> f64 {
        let u = pi2 * t.sinh();
        let gap = 2.0 / ((2.0 * u).exp() + 1.0);
        let cu = u.cosh();
        let w = pi2 * t.cosh() / (cu * cu);
        if gap == 0.0 || !w.is_finite() || w == 0.0 {
            return 0.0;
        }
        let off = half * gap;
        w * (f(a + off) + f(b - off))
    };
    let t_max = 4.0;
    let mut step = 0.5;
    let mut sum = pi2 * f(centre);
    let mut t = step;
    while t <= t_max {
        sum += pair(t);
        t += step;
    }
    let mut estimate = half * step * sum;
    for level in 0..14 {
        step /= 2.0;
        let mut t = step;
        while t <= t_max {
            sum += pair(t);
            t += 2.0 * step;
        }
        let next = half * step * sum;
        let done = level >= 3 && (next - estimate).abs() <= 1e-15 * next.abs().max(1e-300);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// `∫_lo^hi pdf`, with `hi` possibly infinite.
pub fn density_mass(d: &Density, lo: f64, hi: f64) -> f64 {
    if hi == f64::INFINITY {
        let g = |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let f = d.pdf(lo + s / (1.0 - s));
            if f == 0.0 {
                0.0
            } else {
                f / ((1.0 - s) * (1.0 - s))
            }
        };
        return tanh_sinh(&g, 0.0, 1.0);
    }
    let panels = ((hi - lo).ceil() as usize).clamp(1, 64);
    let w = (hi - lo) / panels as f64;
    (0..panels)
        .map(|k| {
            let a = lo + w * k as f64;
            let b = if k + 1 == panels { hi } else { a + w };
            tanh_sinh(&|x| d.pdf(x), a, b)
        })
        .sum()
}

/// Truncated upper tail `P(T ≥ t | T ∈ ∪[lo, hi])` by quadrature.
pub fn truncated_tail(d: &Density, pieces: &[(f64, f64)], t: f64) -> f64 {
    let den: f64 = pieces.iter().map(|&(a, b)| density_mass(d, a, b)).sum();
    let num: f64 = pieces.iter().filter(|&&(_, b)| b > t).map(|&(a, b)| density_mass(d, a.max(t), b)).sum();
    num / den
}
