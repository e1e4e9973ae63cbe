//! Young-function algebra.
//!
//! A Young function here is an increasing convex `G` with `G(0) = 0` and
//! derivative `g = G'`. The module evaluates the pair `(g, G)`, estimates the
//! growth indices (the inf/sup of `t g'(t)/g(t)`), computes the Young
//! conjugate by scalar maximization, inverts `G` by bisection, builds the
//! Sobolev conjugate transform, and measures doubling constants.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Default sample range for index estimation: six decades on each side.
pub const INDEX_SAMPLE_RANGE: (f64, f64) = (1e-6, 1e6);
/// Default sample count for index estimation.
pub const INDEX_SAMPLE_COUNT: usize = 4096;

const E: f64 = core::f64::consts::E;

/// 15-point Gauss-Legendre rule on [-1, 1]: (abscissa, weight), symmetric.
const GL15: [(f64, f64); 8] = [
    (0.0, 0.2025782419255613),
    (0.2011940939974345, 0.1984314853271116),
    (0.3941513470775634, 0.1861610000155622),
    (0.5709721726085388, 0.1662692058169939),
    (0.7244177313601701, 0.1395706779261543),
    (0.8482065834104272, 0.1071592204671719),
    (0.9372733924007060, 0.0703660474881081),
    (0.9879925180204854, 0.0307532419961173),
];

fn gl15<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = GL15[0].1 * f(mid);
    for &(x, w) in &GL15[1..] {
        acc += w * (f(mid + half * x) + f(mid - half * x));
    }
    acc * half
}

/// Which member of the pair `(g, G)` an operation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexLevel {
    /// The derivative `g`.
    SmallG,
    /// The primitive `G`.
    BigG,
}

/// Numerical inf/sup of `t F'(t)/F(t)` over a log-spaced grid.
#[derive(Clone, Debug)]
pub struct IndexPair {
    pub i_lower: f64,
    pub s_upper: f64,
    pub sample_range: (f64, f64),
    pub sample_count: usize,
    /// Sample point where the inf was attained.
    pub argmin: f64,
    /// Sample point where the sup was attained.
    pub argmax: f64,
}

#[derive(Clone, Debug)]
enum Kind {
    /// `G(t) = scale * t^p`, `g(t) = scale * p * t^(p-1)`.
    Power { p: f64, scale: f64 },
    /// `G(t) = t^p log^alpha(e + t)`.
    Zygmund { p: f64, alpha: f64 },
    /// `g` given by a sample table, monotone cubic in log-log coordinates.
    Tabulated(Table),
}

/// A modular function: the pair `(g, G)` with `G' = g`, `G(0) = 0`.
#[derive(Clone, Debug)]
pub struct YoungFunction {
    kind: Kind,
}

impl YoungFunction {
    /// `G(t) = t^p`. Rejects `p <= 1`.
    pub fn power(p: f64) -> Result<Self> {
        Self::power_scaled(p, 1.0)
    }

    /// `G(t) = t^p / p`, so that `g(t) = t^(p-1)` matches the p-Laplace flux
    /// literally. Rejects `p <= 1`.
    pub fn plaplace(p: f64) -> Result<Self> {
        Self::power_scaled(p, 1.0 / p)
    }

    fn power_scaled(p: f64, scale: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "power exponent must satisfy p > 1, got {p}"
            )));
        }
        let f = YoungFunction { kind: Kind::Power { p, scale } };
        f.check_pair()?;
        Ok(f)
    }

    /// `G(t) = t^p log^alpha(e + t)`. Rejects `p <= 1` and `alpha < 0`.
    pub fn zygmund(p: f64, alpha: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "zygmund exponent must satisfy p > 1, got {p}"
            )));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "zygmund log exponent must satisfy alpha >= 0, got {alpha}"
            )));
        }
        let f = YoungFunction { kind: Kind::Zygmund { p, alpha } };
        f.check_pair()?;
        Ok(f)
    }

    /// Build from a sample table of `g`: pairs `(t, g(t))` with strictly
    /// increasing positive `t` and positive nondecreasing `g`.
    pub fn from_table(points: &[(f64, f64)]) -> Result<Self> {
        let table = Table::new(points)?;
        let f = YoungFunction { kind: Kind::Tabulated(table) };
        f.check_pair()?;
        Ok(f)
    }

    /// Derivative `g(t) = G'(t)`.
    pub fn g(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match &self.kind {
            Kind::Power { p, scale } => scale * p * math::pow(t, p - 1.0),
            Kind::Zygmund { p, alpha } => {
                if t == 0.0 {
                    return 0.0;
                }
                let l = math::ln(E + t);
                let base = math::pow(t, *p - 1.0) * math::pow(l, *alpha - 1.0);
                base * (p * l + alpha * t / (E + t))
            }
            Kind::Tabulated(tab) => tab.g(t),
        }
    }

    /// Primitive `G(t)` with `G(0) = 0`.
    pub fn big_g(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match &self.kind {
            Kind::Power { p, scale } => scale * math::pow(t, *p),
            Kind::Zygmund { p, alpha } => {
                if t == 0.0 {
                    return 0.0;
                }
                math::pow(t, *p) * math::pow(math::ln(E + t), *alpha)
            }
            Kind::Tabulated(tab) => tab.big_g(t),
        }
    }

    /// Whether the closed-form power branch applies.
    pub fn is_power(&self) -> bool {
        matches!(self.kind, Kind::Power { .. })
    }

    /// One-line summary used in reports.
    pub fn describe(&self) -> String {
        match &self.kind {
            Kind::Power { p, scale } if (*scale - 1.0).abs() < 1e-15 => format!("power:p={p}"),
            Kind::Power { p, .. } => format!("plaplace:p={p}"),
            Kind::Zygmund { p, alpha } => format!("zygmund:p={p},alpha={alpha}"),
            Kind::Tabulated(tab) => format!("table:{}pts", tab.ts.len()),
        }
    }

    /// Verify `G' = g` by central differences on a coarse log grid.
    fn check_pair(&self) -> Result<()> {
        // For tabulated input, verify inside the table's span only; the
        // power-law continuation outside is exact by construction.
        let (lo, hi) = match &self.kind {
            Kind::Tabulated(tab) => {
                let t0 = tab.ts[0] * 1.05;
                let t1 = tab.ts[tab.ts.len() - 1] * 0.95;
                (math::fmax(t0, 1e-300), math::fmax(t1, t0 * 2.0))
            }
            _ => (1e-3, 1e3),
        };
        let count = 64;
        let delta = 1e-4f64;
        for k in 0..count {
            let t = log_point(lo, hi, k, count);
            let diff = |d: f64| {
                (self.big_g(t * math::exp(d)) - self.big_g(t * math::exp(-d))) / (t * 2.0 * sinh(d))
            };
            // Richardson-extrapolated central difference; stays accurate even
            // for steep tabulated input.
            let num = (4.0 * diff(delta / 2.0) - diff(delta)) / 3.0;
            let g = self.g(t);
            if !num.is_finite() || !g.is_finite() {
                return Err(Error::DegenerateSample(format!(
                    "non-finite derivative sample at t = {t}"
                )));
            }
            let scale = math::fmax(g.abs(), 1e-300);
            if (num - g).abs() / scale > 1e-6 {
                return Err(Error::DegenerateSample(format!(
                    "G' and g disagree at t = {t}: {num} vs {g}"
                )));
            }
        }
        Ok(())
    }

    /// Inf and sup of `t F'(t)/F(t)` on the default log grid.
    pub fn estimate_indices(&self, level: IndexLevel) -> Result<IndexPair> {
        self.estimate_indices_on(level, INDEX_SAMPLE_RANGE, INDEX_SAMPLE_COUNT)
    }

    /// Inf and sup of `t F'(t)/F(t)` over `count` log-spaced points of
    /// `range`, with `F'` by central differences in log coordinates.
    pub fn estimate_indices_on(
        &self,
        level: IndexLevel,
        range: (f64, f64),
        count: usize,
    ) -> Result<IndexPair> {
        let (lo, hi) = range;
        if !(lo > 0.0 && hi > lo) || count < 2 {
            return Err(Error::InvalidParameter(format!(
                "index sample range must satisfy 0 < lo < hi, got ({lo}, {hi})"
            )));
        }
        if math::ln(hi / lo) < 6.0 * core::f64::consts::LN_10 {
            return Err(Error::InvalidParameter(
                "index sample range must span at least six decades".into(),
            ));
        }
        let eval = |t: f64| match level {
            IndexLevel::SmallG => self.g(t),
            IndexLevel::BigG => self.big_g(t),
        };
        let delta = 1e-4f64;
        let mut i_lower = f64::INFINITY;
        let mut s_upper = f64::NEG_INFINITY;
        let mut argmin = lo;
        let mut argmax = lo;
        for k in 0..count {
            let t = log_point(lo, hi, k, count);
            let f0 = eval(t);
            let quot = (eval(t * math::exp(delta)) - eval(t * math::exp(-delta)))
                / (f0 * 2.0 * sinh(delta));
            if !quot.is_finite() {
                return Err(Error::DegenerateSample(format!(
                    "index quotient non-finite at t = {t}"
                )));
            }
            if quot < i_lower {
                i_lower = quot;
                argmin = t;
            }
            if quot > s_upper {
                s_upper = quot;
                argmax = t;
            }
        }
        Ok(IndexPair { i_lower, s_upper, sample_range: range, sample_count: count, argmin, argmax })
    }

    /// Young conjugate value `sup_s (s t - G(s))`.
    ///
    /// Power kinds use the closed form; otherwise the concave objective is
    /// maximized by golden section.
    pub fn conjugate_value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("conjugate argument must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        if let Kind::Power { p, scale } = self.kind {
            // sup_s (s t - a s^p) attained at s = (t/(a p))^(1/(p-1)).
            let s = math::pow(t / (scale * p), 1.0 / (p - 1.0));
            return Ok((p - 1.0) / p * t * s);
        }
        let objective = |s: f64| s * t - self.big_g(s);
        golden_max(objective, 1.0).map(|(_, v)| math::fmax(v, 0.0))
    }

    /// Inverse of the conjugate by monotone bisection.
    pub fn conjugate_inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::InvalidParameter(format!("inverse argument must be >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        bisect_increasing(|t| self.conjugate_value(t).unwrap_or(f64::NAN), y)
    }

    /// Biconjugate `sup_s (s t - conj(s))`, evaluated numerically end to end.
    /// Reproduces `G` for the closed convex functions handled here.
    pub fn biconjugate_value(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let objective = |s: f64| match self.conjugate_value(s) {
            Ok(v) => s * t - v,
            Err(_) => f64::NEG_INFINITY,
        };
        golden_max(objective, 1.0).map(|(_, v)| math::fmax(v, 0.0))
    }

    /// `G^{-1}(y)` by monotone bisection to relative tolerance 1e-12.
    pub fn inverse_value(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::InvalidParameter(format!("inverse argument must be >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        bisect_increasing(|t| self.big_g(t), y)
    }

    /// Sobolev conjugate `B_n(t)`; see [`SobolevTransform`] for reuse across
    /// many evaluations.
    pub fn sobolev_conjugate(&self, n: usize, t: f64) -> Result<f64> {
        SobolevTransform::new(self, n)?.value(t)
    }

    /// Sup of `G(2t)/G(t)` over the default sample grid. Returns `+inf` for
    /// non-doubling input.
    pub fn delta2_constant(&self) -> f64 {
        let (lo, hi) = INDEX_SAMPLE_RANGE;
        let count = INDEX_SAMPLE_COUNT;
        let mut sup = 0.0f64;
        for k in 0..count {
            let t = log_point(lo, hi, k, count);
            let denom = self.big_g(t);
            let ratio = if denom > 0.0 { self.big_g(2.0 * t) / denom } else { f64::INFINITY };
            if !ratio.is_finite() {
                return f64::INFINITY;
            }
            sup = math::fmax(sup, ratio);
        }
        sup
    }

    /// Doubling-style growth bound: `g(lam t) <= s_G lam^(s_G - 1) g(t)`,
    /// with `s_G` estimated on the default grid.
    pub fn growth_scaling_check(&self, lam: f64, t: f64) -> bool {
        match self.estimate_indices(IndexLevel::BigG) {
            Ok(pair) => self.growth_scaling_check_with(pair.s_upper, lam, t),
            Err(_) => false,
        }
    }

    /// Same as [`growth_scaling_check`](Self::growth_scaling_check) with a
    /// precomputed upper index.
    pub fn growth_scaling_check_with(&self, s_big_g: f64, lam: f64, t: f64) -> bool {
        if !(lam > 1.0 && t > 0.0) {
            return false;
        }
        let lhs = self.g(lam * t);
        let rhs = s_big_g * math::pow(lam, s_big_g - 1.0) * self.g(t);
        lhs <= rhs * (1.0 + 1e-9)
    }

    /// Empirical constant of the conjugate pairing `conj(G(t)/t) <= c G(t)`.
    pub fn young_pair_ratio(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter("young_pair_ratio needs t > 0".into()));
        }
        let gt = self.big_g(t);
        if gt == 0.0 {
            return Err(Error::DegenerateSample(format!("G({t}) = 0")));
        }
        Ok(self.conjugate_value(gt / t)? / gt)
    }

    /// Diagnostic evaluator `S(t) = G(t)^((n-1)/n) t^(1/n)`.
    pub fn diag_s(&self, n: usize, t: f64) -> f64 {
        let nn = n as f64;
        math::pow(self.big_g(t), (nn - 1.0) / nn) * math::pow(t, 1.0 / nn)
    }

    /// Diagnostic evaluator `C(t) = S(t^n)`.
    pub fn diag_c(&self, n: usize, t: f64) -> f64 {
        self.diag_s(n, math::pow(t, n as f64))
    }
}

/// The Sobolev conjugate transform of a Young function in dimension `n`:
/// `H_n(s) = (int_0^s (tau/G(tau))^(1/(n-1)) dtau)^((n-1)/n)` and
/// `B_n(t) = G(H_n^{-1}(t))`.
///
/// Construction verifies convergence of the defining integral near zero;
/// quadrature uses geometric panels toward the singular end.
#[derive(Debug)]
pub struct SobolevTransform<'a> {
    f: &'a YoungFunction,
    n: usize,
    /// Cached integral over (0, 1].
    head: f64,
}

impl<'a> SobolevTransform<'a> {
    pub fn new(f: &'a YoungFunction, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {n}")));
        }
        let mut head = 0.0;
        let mut upper = 1.0f64;
        let mut prev = f64::INFINITY;
        let mut stalled = 0;
        for k in 0..4096 {
            let lower = upper * 0.5;
            let piece = gl15(lower, upper, |t| integrand(f, n, t));
            if !piece.is_finite() {
                return Err(Error::DivergentIntegral(
                    "Sobolev transform integrand non-finite near zero".into(),
                ));
            }
            head += piece;
            if piece >= prev * (1.0 - 1e-6) {
                stalled += 1;
                if stalled > 12 && k > 24 {
                    return Err(Error::DivergentIntegral(
                        "defining integral of the Sobolev conjugate diverges near zero".into(),
                    ));
                }
            } else {
                stalled = 0;
            }
            prev = piece;
            upper = lower;
            if piece <= 1e-14 * head && k > 4 {
                break;
            }
        }
        Ok(SobolevTransform { f, n, head })
    }

    /// `H_n(s)`.
    pub fn h(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let nn = self.n as f64;
        let base = if s >= 1.0 {
            self.head + dyadic_up(1.0, s, |t| integrand(self.f, self.n, t))
        } else {
            // head minus the tail (s, 1], integrated away from the singularity
            self.head - dyadic_up(s, 1.0, |t| integrand(self.f, self.n, t))
        };
        math::pow(math::fmax(base, 0.0), (nn - 1.0) / nn)
    }

    /// `H_n^{-1}(y)` by bisection; errors when the fast-growth branch makes
    /// `H_n` bounded below `y`.
    pub fn h_inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::InvalidParameter("H inverse needs y >= 0".into()));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0f64;
        let mut h_hi = self.h(hi);
        let mut guard = 0;
        while h_hi < y {
            let next = hi * 2.0;
            let h_next = self.h(next);
            if h_next - h_hi <= 1e-13 * math::fmax(h_next, 1e-300) || next > 1e250 {
                return Err(Error::OutOfRange(format!(
                    "H_n saturates near {h_next}; requested {y} is beyond the fast-growth range"
                )));
            }
            hi = next;
            h_hi = h_next;
            guard += 1;
            if guard > 2000 {
                return Err(Error::NonConvergence("H_n inverse bracketing".into()));
            }
        }
        let mut lo = 0.0f64;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.h(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `B_n(t) = G(H_n^{-1}(t))`.
    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter("Sobolev conjugate needs t >= 0".into()));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(self.f.big_g(self.h_inverse(t)?))
    }
}

fn integrand(f: &YoungFunction, n: usize, t: f64) -> f64 {
    let big = f.big_g(t);
    if big <= 0.0 {
        return f64::INFINITY;
    }
    math::pow(t / big, 1.0 / (n as f64 - 1.0))
}

/// Integrate a smooth positive function over [a, b] by dyadic panels.
fn dyadic_up<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    debug_assert!(a > 0.0 && b >= a);
    let mut acc = 0.0;
    let mut lo = a;
    while lo < b {
        let hi = math::fmin(lo * 2.0, b);
        acc += gl15(lo, hi, &f);
        lo = hi;
    }
    acc
}

fn sinh(x: f64) -> f64 {
    0.5 * (math::exp(x) - math::exp(-x))
}

/// k-th of `count` log-spaced points on [lo, hi].
pub(crate) fn log_point(lo: f64, hi: f64, k: usize, count: usize) -> f64 {
    let frac = k as f64 / (count - 1) as f64;
    lo * math::exp(frac * math::ln(hi / lo))
}

/// Maximize a concave function on [0, inf): bracket by doubling, then golden
/// section. Returns (argmax, max).
fn golden_max<F: Fn(f64) -> f64>(f: F, seed: f64) -> Result<(f64, f64)> {
    let mut s = math::fmax(seed, 1e-300);
    // Walk down first in case the maximizer sits below the seed.
    let mut guard = 0;
    while f(s) < f(s * 0.5) {
        s *= 0.5;
        guard += 1;
        if s < 1e-280 {
            // Maximum pinned at the origin.
            return Ok((0.0, math::fmax(f(0.0), 0.0)));
        }
        if guard > 2000 {
            return Err(Error::NonConvergence("bracketing a concave maximum (down)".into()));
        }
    }
    let mut hi = s * 2.0;
    guard = 0;
    while f(hi) > f(hi * 0.5) {
        hi *= 2.0;
        guard += 1;
        if hi > 1e280 {
            return Err(Error::OutOfRange("concave maximizer beyond representable range".into()));
        }
        if guard > 2000 {
            return Err(Error::NonConvergence("bracketing a concave maximum (up)".into()));
        }
    }
    // Maximum lies in [0, hi]; golden-section search.
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut a = 0.0;
    let mut b = hi;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..220 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if b - a <= 1e-13 * math::fmax(b, 1.0) {
            let m = 0.5 * (a + b);
            return Ok((m, f(m)));
        }
    }
    let m = 0.5 * (a + b);
    Ok((m, f(m)))
}

/// Invert an increasing function through 0 by doubling + bisection to
/// relative tolerance 1e-12.
pub(crate) fn invert_increasing<F: Fn(f64) -> f64>(f: F, y: f64) -> Result<f64> {
    bisect_increasing(f, y)
}

fn bisect_increasing<F: Fn(f64) -> f64>(f: F, y: f64) -> Result<f64> {
    let mut hi = 1.0f64;
    let mut guard = 0;
    while f(hi) < y {
        hi *= 2.0;
        guard += 1;
        if hi > 1e300 || guard > 2000 {
            return Err(Error::OutOfRange(format!(
                "value {y} exceeds the representable range of the function"
            )));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if !v.is_finite() {
            return Err(Error::NonConvergence("bisection hit a non-finite value".into()));
        }
        if v < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * math::fmax(hi.abs(), 1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sample table of `g`, interpolated by a monotone (PCHIP) cubic in log-log
/// coordinates and continued by power laws beyond the table.
#[derive(Clone, Debug)]
struct Table {
    ts: Vec<f64>,
    /// ln t
    xs: Vec<f64>,
    /// ln g
    ys: Vec<f64>,
    /// PCHIP tangents in log-log coordinates.
    ms: Vec<f64>,
    /// Cumulative integral of g up to each knot, with `cum[0] = int_0^{t_0} g`.
    cum: Vec<f64>,
    slope_lo: f64,
    slope_hi: f64,
}

impl Table {
    fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidParameter("table needs at least 4 points".into()));
        }
        let mut ts = Vec::with_capacity(points.len());
        let mut gs = Vec::with_capacity(points.len());
        for &(t, g) in points {
            if !(t > 0.0 && g > 0.0) || !t.is_finite() || !g.is_finite() {
                return Err(Error::DegenerateSample(format!("bad table entry ({t}, {g})")));
            }
            if let Some(&last) = ts.last() {
                if t <= last {
                    return Err(Error::DegenerateSample(
                        "table abscissae must be strictly increasing".into(),
                    ));
                }
            }
            if let Some(&lastg) = gs.last() {
                if g < lastg {
                    return Err(Error::DegenerateSample("table values must be nondecreasing".into()));
                }
            }
            ts.push(t);
            gs.push(g);
        }
        let xs: Vec<f64> = ts.iter().map(|&t| math::ln(t)).collect();
        let ys: Vec<f64> = gs.iter().map(|&g| math::ln(g)).collect();
        let m = xs.len();
        let mut secants = Vec::with_capacity(m - 1);
        for k in 0..m - 1 {
            secants.push((ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]));
        }
        let mut ms = alloc::vec![0.0f64; m];
        ms[0] = secants[0];
        ms[m - 1] = secants[m - 2];
        for k in 1..m - 1 {
            let (d0, d1) = (secants[k - 1], secants[k]);
            if d0 * d1 <= 0.0 {
                ms[k] = 0.0;
            } else {
                let h0 = xs[k] - xs[k - 1];
                let h1 = xs[k + 1] - xs[k];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                ms[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
        }
        let slope_lo = secants[0];
        let slope_hi = secants[m - 2];
        if slope_lo <= -1.0 {
            return Err(Error::DivergentIntegral(
                "table decays too fast near zero for the primitive to exist".into(),
            ));
        }
        let mut table = Table { ts, xs, ys, ms, cum: Vec::new(), slope_lo, slope_hi };
        // int_0^{t_0} g with the power-law continuation g = g_0 (t/t_0)^slope.
        let head = table.g_at_knot(0) * table.ts[0] / (slope_lo + 1.0);
        let mut cum = Vec::with_capacity(m);
        cum.push(head);
        for k in 0..m - 1 {
            let piece = gl15(table.ts[k], table.ts[k + 1], |t| table.g(t));
            let prev = cum[k];
            cum.push(prev + piece);
        }
        table.cum = cum;
        Ok(table)
    }

    fn g_at_knot(&self, k: usize) -> f64 {
        math::exp(self.ys[k])
    }

    fn g(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let x = math::ln(t);
        let m = self.xs.len();
        if x <= self.xs[0] {
            return math::exp(self.ys[0] + self.slope_lo * (x - self.xs[0]));
        }
        if x >= self.xs[m - 1] {
            return math::exp(self.ys[m - 1] + self.slope_hi * (x - self.xs[m - 1]));
        }
        let k = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            idx => idx - 1,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let s = (x - self.xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.ms[k] * h, self.ms[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let val = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        math::exp(val)
    }

    fn big_g(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let m = self.ts.len();
        if t <= self.ts[0] {
            // Power continuation below the table.
            return self.g(t) * t / (self.slope_lo + 1.0);
        }
        if t >= self.ts[m - 1] {
            let tail = if self.slope_hi > -1.0 {
                let ratio = t / self.ts[m - 1];
                self.g_at_knot(m - 1) * self.ts[m - 1]
                    * (math::pow(ratio, self.slope_hi + 1.0) - 1.0)
                    / (self.slope_hi + 1.0)
            } else {
                0.0
            };
            return self.cum[m - 1] + tail;
        }
        let k = match self.ts.partition_point(|&v| v <= t) {
            0 => 0,
            idx => idx - 1,
        };
        self.cum[k] + gl15(self.ts[k], t, |s| self.g(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, rel: f64, what: &str) {
        let scale = a.abs().max(b.abs()).max(1e-300);
        assert!(
            (a - b).abs() / scale <= rel,
            "{what}: {a} vs {b} (rel err {})",
            (a - b).abs() / scale
        );
    }

    #[test]
    fn power_evaluation_matches_closed_form() {
        let f = YoungFunction::power(2.0).unwrap();
        assert_close(f.big_g(3.0), 9.0, 1e-15, "G(3) for t^2");
        assert_close(f.g(3.0), 6.0, 1e-15, "g(3) for t^2");
        let pl = YoungFunction::plaplace(3.0).unwrap();
        assert_close(pl.g(2.0), 4.0, 1e-15, "g(2) = 2^2 for plaplace(3)");
        assert_close(pl.big_g(2.0), 8.0 / 3.0, 1e-15, "G(2) = 2^3/3 for plaplace(3)");
    }

    #[test]
    fn zygmund_evaluation_matches_closed_form() {
        let f = YoungFunction::zygmund(2.0, 1.0).unwrap();
        let expect = 25.0 * (core::f64::consts::E + 5.0).ln();
        assert_close(f.big_g(5.0), expect, 1e-14, "G(5) for t^2 log(e+t)");
    }

    #[test]
    fn admissibility_is_enforced() {
        assert!(YoungFunction::power(1.0).is_err());
        assert!(YoungFunction::power(0.5).is_err());
        assert!(YoungFunction::zygmund(2.0, -0.5).is_err());
    }

    #[test]
    fn indices_of_powers_are_exact() {
        for &p in &[2.0, 2.5, 3.0, 4.0] {
            let f = YoungFunction::power(p).unwrap();
            let big = f.estimate_indices(IndexLevel::BigG).unwrap();
            assert_close(big.i_lower, p, 1e-6, "i_G of power");
            assert_close(big.s_upper, p, 1e-6, "s_G of power");
            let small = f.estimate_indices(IndexLevel::SmallG).unwrap();
            assert_close(small.i_lower, p - 1.0, 1e-6, "i_g of power");
            assert_close(small.s_upper, p - 1.0, 1e-6, "s_g of power");
        }
    }

    #[test]
    fn zygmund_indices_match_the_correction_term() {
        let f = YoungFunction::zygmund(2.0, 1.0).unwrap();
        let pair = f.estimate_indices(IndexLevel::BigG).unwrap();
        assert!((pair.i_lower - 2.0).abs() < 1e-4, "i_G = 2, got {}", pair.i_lower);
        // s_G = 2 + max_t t / ((e+t) log(e+t)), located numerically.
        let mut best = 0.0f64;
        for k in 0..20_000 {
            let t = log_point(1e-6, 1e6, k, 20_000);
            let corr = t / ((core::f64::consts::E + t) * (core::f64::consts::E + t).ln());
            best = best.max(corr);
        }
        assert_close(pair.s_upper, 2.0 + best, 1e-4, "s_G of zygmund(2,1)");
        assert!(pair.argmax > 1e-2 && pair.argmax < 1e2, "maximizer located in the interior");
    }

    #[test]
    fn conjugate_of_square_is_quarter_square() {
        let f = YoungFunction::power(2.0).unwrap();
        assert_close(f.conjugate_value(2.0).unwrap(), 1.0, 1e-12, "conj(2) of t^2");
        for &t in &[0.01, 1.0, 100.0] {
            assert_close(f.conjugate_value(t).unwrap(), t * t / 4.0, 1e-12, "conj of t^2");
        }
    }

    #[test]
    fn plaplace_conjugate_is_dual_power() {
        // G = t^p/p has conjugate t^{p'}/p'.
        let p = 3.0;
        let pp = p / (p - 1.0);
        let f = YoungFunction::plaplace(p).unwrap();
        for &t in &[0.3, 1.0, 7.0] {
            assert_close(
                f.conjugate_value(t).unwrap(),
                t.powf(pp) / pp,
                1e-12,
                "conjugate of t^p/p",
            );
        }
    }

    #[test]
    fn conjugate_duality_bracket_holds() {
        // t <= G^{-1}(t) conj^{-1}(t) <= 2t on [1e-3, 1e3].
        let slack = 1e-9;
        for f in [
            YoungFunction::power(2.0).unwrap(),
            YoungFunction::power(3.0).unwrap(),
            YoungFunction::zygmund(2.0, 1.0).unwrap(),
        ] {
            for k in 0..64 {
                let t = log_point(1e-3, 1e3, k, 64);
                let prod = f.inverse_value(t).unwrap() * f.conjugate_inverse(t).unwrap();
                assert!(
                    prod >= t * (1.0 - slack) && prod <= 2.0 * t * (1.0 + slack),
                    "duality bracket violated at t = {t}: {prod} ({})",
                    f.describe()
                );
            }
        }
    }

    #[test]
    fn young_pair_bound_is_finite_and_stable() {
        for f in [YoungFunction::power(2.5).unwrap(), YoungFunction::zygmund(2.0, 1.0).unwrap()] {
            let mut cmax = 0.0f64;
            for k in 0..64 {
                let t = log_point(1e-3, 1e3, k, 64);
                let c = f.young_pair_ratio(t).unwrap();
                assert!(c.is_finite() && c > 0.0);
                cmax = cmax.max(c);
            }
            // The conjugate pairing constant stays modest for doubling models.
            assert!(cmax < 4.0, "pairing constant too large: {cmax}");
        }
    }

    #[test]
    fn inverse_round_trips() {
        let f = YoungFunction::power(2.0).unwrap();
        assert_close(f.inverse_value(9.0).unwrap(), 3.0, 1e-12, "sqrt via inverse");
        assert_eq!(f.inverse_value(0.0).unwrap(), 0.0);
        let z = YoungFunction::zygmund(2.0, 1.0).unwrap();
        let y = 25.0 * (core::f64::consts::E + 5.0).ln();
        assert_close(z.inverse_value(y).unwrap(), 5.0, 1e-11, "zygmund inverse round trip");
        for k in 0..32 {
            let y = log_point(1e-4, 1e4, k, 32);
            let t = z.inverse_value(y).unwrap();
            assert_close(z.big_g(t), y, 1e-9, "monotone round trip");
        }
    }

    #[test]
    fn double_conjugation_recovers_g() {
        for f in [YoungFunction::power(2.0).unwrap(), YoungFunction::zygmund(2.0, 1.0).unwrap()] {
            for k in 0..24 {
                let t = log_point(1e-2, 1e2, k, 24);
                let back = f.biconjugate_value(t).unwrap();
                assert_close(back, f.big_g(t), 1e-6, "biconjugate");
            }
        }
    }

    #[test]
    fn power_comparison_monotonicity() {
        // G(t)/t^{i_G} nondecreasing, G(t)/t^{s_G} nonincreasing.
        for f in [YoungFunction::power(2.5).unwrap(), YoungFunction::zygmund(2.0, 0.5).unwrap()] {
            let pair = f.estimate_indices(IndexLevel::BigG).unwrap();
            let mut prev_lo = f64::NEG_INFINITY;
            let mut prev_hi = f64::INFINITY;
            for k in 0..256 {
                let t = log_point(1e-5, 1e5, k, 256);
                let lo = f.big_g(t) / t.powf(pair.i_lower);
                let hi = f.big_g(t) / t.powf(pair.s_upper);
                assert!(lo >= prev_lo * (1.0 - 1e-6), "G/t^i must be nondecreasing");
                assert!(hi <= prev_hi * (1.0 + 1e-6), "G/t^s must be nonincreasing");
                prev_lo = lo;
                prev_hi = hi;
            }
        }
    }

    #[test]
    fn sobolev_conjugate_power_slope() {
        // For G = t^p with p < n the conjugate is a power with exponent
        // np/(n-p); n=3, p=2 gives 6.
        let f = YoungFunction::power(2.0).unwrap();
        let transform = SobolevTransform::new(&f, 3).unwrap();
        assert_eq!(transform.value(0.0).unwrap(), 0.0);
        let mut pts = alloc::vec::Vec::new();
        for k in 0..24 {
            let t = log_point(1e-2, 1e2, k, 24);
            let b = transform.value(t).unwrap();
            pts.push((t.ln(), b.ln()));
        }
        let slope = fit_slope(&pts);
        assert_close(slope, 6.0, 1e-4, "log-log slope of B_n for p=2, n=3");
    }

    #[test]
    fn sobolev_conjugate_closed_form_check() {
        // H_n(s) = c s^{(n-p)/n} exactly for powers; check the inverse
        // round trip at one point.
        let f = YoungFunction::power(2.0).unwrap();
        let tr = SobolevTransform::new(&f, 3).unwrap();
        // integrand (t/t^2)^{1/2} = t^{-1/2}; int_0^s = 2 sqrt(s);
        // H_3(s) = (2 sqrt(s))^{2/3}.
        for &s in &[0.25f64, 1.0, 9.0] {
            let expect = (2.0 * s.sqrt()).powf(2.0 / 3.0);
            assert_close(tr.h(s), expect, 1e-10, "H_3 of t^2");
        }
    }

    #[test]
    fn fast_growth_branch_is_signaled() {
        // g = t near zero but t^9 at infinity: integrable at the origin while
        // the integral at infinity converges, so H_n saturates.
        let mut pts = alloc::vec::Vec::new();
        for k in 0..256 {
            let t = log_point(1e-3, 1e3, k, 256);
            pts.push((t, t * t.max(1.0).powf(8.0)));
        }
        let f = YoungFunction::from_table(&pts).unwrap();
        let tr = SobolevTransform::new(&f, 3).unwrap();
        // H_n is bounded; far beyond the bound the inverse must fail.
        let h_large = tr.h(1e12);
        assert!(tr.h_inverse(h_large * 10.0).is_err());
    }

    #[test]
    fn divergence_near_zero_is_signaled() {
        // G ~ t^10 near the origin fails the zero-integrability condition
        // in dimension 3.
        let mut pts = alloc::vec::Vec::new();
        for k in 0..64 {
            let t = log_point(1e-3, 1e3, k, 64);
            pts.push((t, t.powf(9.0)));
        }
        let f = YoungFunction::from_table(&pts).unwrap();
        match SobolevTransform::new(&f, 3) {
            Err(Error::DivergentIntegral(_)) => {}
            other => panic!("expected divergence near zero, got {other:?}"),
        }
    }

    #[test]
    fn delta2_constants() {
        for &p in &[2.0, 3.0] {
            let f = YoungFunction::power(p).unwrap();
            assert_close(f.delta2_constant(), 2f64.powf(p), 1e-12, "delta2 of power");
        }
        let z = YoungFunction::zygmund(2.0, 1.0).unwrap();
        let c = z.delta2_constant();
        assert!(c >= 4.0 && c <= 8.0, "zygmund doubling constant {c} outside [4, 8]");
        let pair = z.estimate_indices(IndexLevel::BigG).unwrap();
        assert!(c <= 2f64.powf(pair.s_upper) * (1.0 + 1e-9), "2^s_G envelope");
    }

    #[test]
    fn non_doubling_table_yields_infinite_sentinel() {
        // g = e^t - 1 sampled; the primitive grows like e^t which fails
        // doubling over the sample range.
        let mut pts = alloc::vec::Vec::new();
        for k in 0..96 {
            let t = 1e-3 + 600.0 * k as f64 / 95.0;
            pts.push((t, t.exp() - 1.0));
        }
        let f = YoungFunction::from_table(&pts).unwrap();
        assert_eq!(f.delta2_constant(), f64::INFINITY);
    }

    #[test]
    fn growth_scaling_examples() {
        let f2 = YoungFunction::power(2.0).unwrap();
        assert!(f2.growth_scaling_check(3.0, 1.0));
        let f3 = YoungFunction::power(3.0).unwrap();
        for &(lam, t) in &[(2.0, 0.1), (10.0, 1.0), (1.5, 30.0)] {
            assert!(f3.growth_scaling_check(lam, t), "homogeneous case lam={lam} t={t}");
        }
        let z = YoungFunction::zygmund(2.0, 1.0).unwrap();
        let pair = z.estimate_indices(IndexLevel::BigG).unwrap();
        for k in 0..64 {
            let t = log_point(1e-4, 1e4, k, 64);
            assert!(z.growth_scaling_check_with(pair.s_upper, 10.0, t));
        }
        assert!(!f2.growth_scaling_check(0.5, 1.0), "lam must exceed 1");
    }

    #[test]
    fn tabulated_tracks_its_source() {
        let src = YoungFunction::zygmund(2.0, 1.0).unwrap();
        let mut pts = alloc::vec::Vec::new();
        for k in 0..1024 {
            let t = log_point(1e-7, 1e7, k, 1024);
            pts.push((t, src.g(t)));
        }
        let tab = YoungFunction::from_table(&pts).unwrap();
        for k in 0..40 {
            let t = log_point(1e-3, 1e3, k, 40);
            assert_close(tab.g(t), src.g(t), 1e-6, "tabulated g");
            assert_close(tab.big_g(t), src.big_g(t), 1e-5, "tabulated G");
        }
        let pair = tab.estimate_indices(IndexLevel::BigG).unwrap();
        assert!((pair.i_lower - 2.0).abs() < 1e-3);
    }

    #[test]
    fn degenerate_tables_are_rejected() {
        assert!(YoungFunction::from_table(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(
            YoungFunction::from_table(&[(1.0, 1.0), (2.0, 0.5), (3.0, 2.0), (4.0, 3.0)]).is_err()
        );
        assert!(
            YoungFunction::from_table(&[(1.0, 1.0), (1.0, 2.0), (3.0, 2.0), (4.0, 3.0)]).is_err()
        );
    }

    fn fit_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }
}
