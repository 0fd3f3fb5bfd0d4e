//! Numerical integration.
//!
//! Three tools, used for different jobs:
//!
//! * [`adaptive`]: globally adaptive Gauss–Kronrod (G10/K21) on a finite
//!   interval, for smooth or mildly singular integrands.
//! * [`shells`]: dyadic shells toward an endpoint (finite or infinite), each
//!   shell integrated with [`adaptive`]. Detects divergence, so it backs every
//!   finiteness check in the crate.
//! * [`tanh_sinh`] / [`exp_sinh`]: double-exponential rules for the inner
//!   levels of nested integrals whose finiteness is already known.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Partial sums beyond this magnitude are treated as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Values an integrand may return: reals and complex numbers.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Default
{
    fn magnitude(self) -> f64;
    fn is_finite_value(self) -> bool;
    fn infinite() -> Self;
}

impl QuadValue for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
    fn infinite() -> Self {
        f64::INFINITY
    }
}

impl QuadValue for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite_value(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn infinite() -> Self {
        Complex64::new(f64::INFINITY, 0.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge on [{a}, {b}]: achieved error {achieved:e}, requested {requested:e}")]
    NonConvergence {
        a: f64,
        b: f64,
        achieved: f64,
        requested: f64,
    },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("integral diverges ({0})")]
    Divergent(Divergence),
}

/// Requested accuracy: stop once `error <= max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Tol {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evals: usize,
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// One G10/K21 panel with the QUADPACK error heuristic.
fn gk21<T, F>(f: &mut F, a: f64, b: f64) -> Result<(T, f64), QuadError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();

    let fc = f(center);
    if !fc.is_finite_value() {
        return Err(QuadError::NonFinite { x: center });
    }
    let mut res_k = fc * WGK[10];
    let mut res_g = T::default();
    let mut res_abs = fc.magnitude() * WGK[10];
    let mut fv1 = [T::default(); 10];
    let mut fv2 = [T::default(); 10];

    for j in 0..10 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let f1 = f(x1);
        let f2 = f(x2);
        if !f1.is_finite_value() {
            return Err(QuadError::NonFinite { x: x1 });
        }
        if !f2.is_finite_value() {
            return Err(QuadError::NonFinite { x: x2 });
        }
        fv1[j] = f1;
        fv2[j] = f2;
        let sum = f1 + f2;
        res_k = res_k + sum * WGK[j];
        res_abs += WGK[j] * (f1.magnitude() + f2.magnitude());
        if j % 2 == 1 {
            res_g = res_g + sum * WG[j / 2];
        }
    }

    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).magnitude();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude());
    }

    let result = res_k * half;
    res_abs *= abs_half;
    res_asc *= abs_half;
    let mut err = ((res_k - res_g) * half).magnitude();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok((result, err))
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Default panel budget for [`adaptive`].
pub const MAX_PANELS: usize = 2000;

/// Globally adaptive G10/K21 quadrature on `[a, b]`.
pub fn adaptive<T, F>(mut f: F, a: f64, b: f64, tol: Tol) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    adaptive_with_budget(&mut f, a, b, tol, MAX_PANELS)
}

pub fn adaptive_with_budget<T, F>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: Tol,
    max_panels: usize,
) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    adaptive_breaks(f, &[a, b], tol, max_panels)
}

/// Globally adaptive quadrature over `[breaks[0], breaks[last]]`, starting
/// from one panel per pair of consecutive break points. The tolerance
/// applies to the whole integral.
pub fn adaptive_breaks<T, F>(f: &mut F, breaks: &[f64], tol: Tol, max_panels: usize) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let (a, b) = match breaks {
        [first, .., last] => (*first, *last),
        _ => (0.0, 0.0),
    };
    let mut total = T::default();
    let mut total_err = 0.0;
    let mut evals = 0;
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2).filter(|w| w[0] != w[1]) {
        let (value, error) = gk21(f, w[0], w[1])?;
        evals += 21;
        total = total + value;
        total_err += error;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    if heap.is_empty() {
        return Ok(Estimate {
            value: T::default(),
            error: 0.0,
            evals: 0,
        });
    }
    let max_panels = max_panels.max(heap.len() + 1);

    while total_err > tol.target(total.magnitude()) {
        if heap.len() >= max_panels {
            return Err(QuadError::NonConvergence {
                a,
                b,
                achieved: total_err,
                requested: tol.target(total.magnitude()),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // interval exhausted at machine resolution
            heap.push(worst);
            return Err(QuadError::NonConvergence {
                a,
                b,
                achieved: total_err,
                requested: tol.target(total.magnitude()),
            });
        }
        let (v1, e1) = gk21(f, worst.a, mid)?;
        let (v2, e2) = gk21(f, mid, worst.b)?;
        evals += 42;
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }

    // re-sum to shed the drift of the running updates
    let mut value = T::default();
    let mut error = 0.0;
    for p in heap.iter() {
        value = value + p.value;
        error += p.error;
    }
    Ok(Estimate {
        value,
        error,
        evals,
    })
}

/// Why a shell sum was declared divergent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    /// partial sum exceeded [`DIVERGENCE_BOUND`]
    Bound { partial: f64 },
    /// shell contributions stopped decaying
    NoDecay { partial: f64, ratio: f64 },
    /// integrand blew up near the endpoint
    NonFinite { x: f64 },
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Divergence::Bound { partial } => {
                write!(f, "partial sum {partial:e} exceeds {DIVERGENCE_BOUND:e}")
            }
            Divergence::NoDecay { partial, ratio } => write!(
                f,
                "dyadic shell contributions do not decay (ratio {ratio:.4}, partial sum {partial:e})"
            ),
            Divergence::NonFinite { x } => write!(f, "integrand not finite at x = {x}"),
        }
    }
}

/// Outcome of an integral whose finiteness is in question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integral {
    Finite { value: f64, error: f64 },
    Divergent(Divergence),
}

impl Integral {
    pub fn is_finite(&self) -> bool {
        matches!(self, Integral::Finite { .. })
    }

    /// Value, or `+inf` when divergent.
    pub fn value_or_inf(&self) -> f64 {
        match self {
            Integral::Finite { value, .. } => *value,
            Integral::Divergent(_) => f64::INFINITY,
        }
    }

    pub fn into_result(self) -> Result<f64, QuadError> {
        match self {
            Integral::Finite { value, .. } => Ok(value),
            Integral::Divergent(d) => Err(QuadError::Divergent(d)),
        }
    }

    pub(crate) fn add(self, other: Integral) -> Integral {
        match (self, other) {
            (
                Integral::Finite { value: v1, error: e1 },
                Integral::Finite { value: v2, error: e2 },
            ) => Integral::Finite {
                value: v1 + v2,
                error: e1 + e2,
            },
            (Integral::Divergent(d), _) | (_, Integral::Divergent(d)) => Integral::Divergent(d),
        }
    }
}

const MAX_SHELLS: usize = 1100;
const NO_DECAY_RUN: usize = 8;
/// Shells closer than this (relative) to a nonzero finite end are not
/// resolved in floating point; the remainder is extrapolated.
const RESOLUTION: f64 = 1e-12;
const NO_DECAY_RATIO: f64 = 0.999;

/// Integrates `f` from `start` toward `end` over dyadic shells.
///
/// For a finite `end` the shells are `[end - d/2^k, end - d/2^(k+1)]` with
/// `d = end - start`; for an infinite `end` they are
/// `[start + s(2^k - 1), start + s(2^(k+1) - 1)]` with `s = scale`.
pub fn shells<F>(mut f: F, start: f64, end: f64, scale: f64, tol: Tol) -> Integral
where
    F: FnMut(f64) -> f64,
{
    if start == end {
        return Integral::Finite {
            value: 0.0,
            error: 0.0,
        };
    }
    let shell_tol = Tol::new(tol.abs * 1e-3, tol.rel * 1e-2);
    let mut sum = 0.0;
    let mut err_sum = 0.0;
    let mut mags: Vec<f64> = Vec::new();
    let mut growing_run = 0usize;
    let mut last_signed = 0.0;

    for k in 0..MAX_SHELLS {
        let (lo, hi) = if end.is_finite() {
            let d = end - start;
            let p = 0.5f64.powi(k as i32);
            (end - d * p, end - d * p * 0.5)
        } else {
            let s = scale.abs().max(f64::MIN_POSITIVE) * end.signum();
            let p = 2f64.powi(k as i32);
            (start + s * (p - 1.0), start + s * (2.0 * p - 1.0))
        };
        if !lo.is_finite() || !hi.is_finite() {
            break;
        }
        let unresolved = end.is_finite() && end != 0.0 && (hi - end).abs() < RESOLUTION * end.abs();
        if lo == hi || hi == end || unresolved {
            // shells collapsed onto the endpoint at machine resolution; close
            // with the geometric tail of the last shells when they decay
            let n = mags.len();
            if n >= 2 && mags[n - 2] > 0.0 {
                let rho = mags[n - 1] / mags[n - 2];
                if rho < 0.95 {
                    let tail = last_signed * rho / (1.0 - rho);
                    sum += tail;
                    err_sum += tail.abs() * 1e-3;
                }
            }
            break;
        }
        let shell = match adaptive_with_budget(&mut f, lo, hi, shell_tol, 400) {
            Ok(e) => e,
            Err(QuadError::NonFinite { x }) => return Integral::Divergent(Divergence::NonFinite { x }),
            Err(QuadError::NonConvergence { .. }) => {
                // a non-converging shell is itself a divergence signal; use the
                // coarse panel value so the growth tests below can decide
                match gk21::<f64, _>(&mut f, lo, hi) {
                    Ok((v, e)) => Estimate {
                        value: v,
                        error: e,
                        evals: 21,
                    },
                    Err(_) => {
                        return Integral::Divergent(Divergence::NonFinite { x: hi });
                    }
                }
            }
            Err(e @ QuadError::Divergent(_)) => unreachable!("{e}"),
        };
        let c = shell.value;
        last_signed = c;
        if !c.is_finite() {
            return Integral::Divergent(Divergence::NonFinite { x: hi });
        }
        sum += c;
        err_sum += shell.error;
        if sum.abs() > DIVERGENCE_BOUND {
            return Integral::Divergent(Divergence::Bound { partial: sum });
        }
        let m = c.abs();
        if let Some(&prev) = mags.last() {
            if m > 0.0 && m >= NO_DECAY_RATIO * prev {
                growing_run += 1;
            } else {
                growing_run = 0;
            }
            if growing_run >= NO_DECAY_RUN {
                return Integral::Divergent(Divergence::NoDecay {
                    partial: sum,
                    ratio: m / prev,
                });
            }
        }
        mags.push(m);

        let n = mags.len();
        if n >= 3 {
            let (m0, m1, m2) = (mags[n - 3], mags[n - 2], mags[n - 1]);
            if m2 == 0.0 && m1 == 0.0 {
                break;
            }
            if m1 > 0.0 && m0 > 0.0 {
                let rho = (m2 / m1).max(m1 / m0);
                if rho < 0.95 {
                    let tail = m2 * rho / (1.0 - rho);
                    if tail <= tol.target(sum) {
                        err_sum += tail;
                        break;
                    }
                }
            }
        }
    }
    Integral::Finite {
        value: sum,
        error: err_sum,
    }
}

/// Integrates over `(lo, hi)` (either may be infinite) by shells toward both
/// ends from the interior point `mid`.
pub fn shells_two_sided<F>(mut f: F, lo: f64, hi: f64, mid: f64, scale: f64, tol: Tol) -> Integral
where
    F: FnMut(f64) -> f64,
{
    debug_assert!(lo < hi && mid > lo && mid < hi);
    let left = shells(|x| f(x), mid, lo, scale, tol);
    if !left.is_finite() {
        return left;
    }
    // shells toward lo run from mid downward, so the sign flips
    let left = match left {
        Integral::Finite { value, error } => Integral::Finite {
            value: -value,
            error,
        },
        d => d,
    };
    let right = shells(|x| f(x), mid, hi, scale, tol);
    left.add(right)
}

const DE_MAX_LEVEL: usize = 12;
const DE_T_MAX: f64 = 6.5;

/// Tanh–sinh rule on the finite interval `(a, b)`; endpoints are never
/// evaluated, so integrable endpoint singularities are fine.
pub fn tanh_sinh<T, F>(mut f: F, a: f64, b: f64, tol: Tol) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    if a == b {
        return Ok(Estimate {
            value: T::default(),
            error: 0.0,
            evals: 0,
        });
    }
    let (a, b, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let mut evals = 0usize;

    // sum of w*f over the nodes t = j*step with j odd (or all j at level 0)
    let mut level_sum = |step: f64, odd_only: bool, evals: &mut usize| -> Result<T, QuadError> {
        let mut acc = T::default();
        if !odd_only {
            let fc = f(center);
            *evals += 1;
            if !fc.is_finite_value() {
                return Err(QuadError::NonFinite { x: center });
            }
            acc = acc + fc * (half * pi2);
        }
        let mut j = 1usize;
        loop {
            let t = j as f64 * step;
            if t > DE_T_MAX {
                break;
            }
            let u = pi2 * t.sinh();
            let e = (-2.0 * u).exp();
            // 1 - tanh(u), computed without cancellation
            let delta = 2.0 * e / (1.0 + e);
            let ch = u.cosh();
            let w = half * pi2 * t.cosh() / (ch * ch);
            let xl = a + half * delta;
            let xr = b - half * delta;
            let left_ok = xl > a;
            let right_ok = xr < b;
            if w == 0.0 || !(left_ok || right_ok) {
                break;
            }
            // each side stops independently once it reaches its endpoint
            for (ok, x) in [(left_ok, xl), (right_ok, xr)] {
                if ok {
                    let v = f(x);
                    *evals += 1;
                    if !v.is_finite_value() {
                        return Err(QuadError::NonFinite { x });
                    }
                    acc = acc + v * w;
                }
            }
            j += if odd_only { 2 } else { 1 };
        }
        Ok(acc)
    };

    let mut step = 1.0;
    let mut raw = level_sum(step, false, &mut evals)?;
    let mut estimate = raw * step;
    for level in 1..=DE_MAX_LEVEL {
        step *= 0.5;
        raw = raw + level_sum(step, true, &mut evals)?;
        let next = raw * step;
        let diff = (next - estimate).magnitude();
        estimate = next;
        if level >= 3 && diff <= tol.target(estimate.magnitude()) {
            return Ok(Estimate {
                value: estimate * sign,
                error: diff,
                evals,
            });
        }
        if level == DE_MAX_LEVEL {
            return Err(QuadError::NonConvergence {
                a,
                b,
                achieved: diff,
                requested: tol.target(estimate.magnitude()),
            });
        }
    }
    unreachable!()
}

/// Exp–sinh rule on `(a, inf)`, nodes `a + scale * exp(pi/2 sinh t)`.
pub fn exp_sinh<T, F>(mut f: F, a: f64, scale: f64, tol: Tol) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let pi2 = std::f64::consts::FRAC_PI_2;
    let mut evals = 0usize;

    let mut node = |t: f64, evals: &mut usize| -> Result<Option<T>, QuadError> {
        let e = (pi2 * t.sinh()).exp();
        let off = scale * e;
        let x = a + off;
        let w = scale * pi2 * t.cosh() * e;
        if !x.is_finite() || !w.is_finite() || x == a || w == 0.0 {
            return Ok(None);
        }
        let v = f(x);
        *evals += 1;
        if !v.is_finite_value() {
            return Err(QuadError::NonFinite { x });
        }
        Ok(Some(v * w))
    };

    // one direction of nodes t = sgn*j*step (j odd when refining)
    let mut sweep = |step: f64, odd_only: bool, evals: &mut usize| -> Result<T, QuadError> {
        let mut acc = T::default();
        if !odd_only {
            if let Some(v) = node(0.0, evals)? {
                acc = acc + v;
            }
        }
        for sgn in [1.0, -1.0] {
            let mut j = 1usize;
            let mut quiet = 0;
            loop {
                let t = sgn * j as f64 * step;
                if t.abs() > DE_T_MAX {
                    break;
                }
                match node(t, evals)? {
                    None => break,
                    Some(v) => {
                        let small = v.magnitude() <= 1e-18 * acc.magnitude().max(f64::MIN_POSITIVE);
                        acc = acc + v;
                        if small {
                            quiet += 1;
                            if quiet >= 4 {
                                break;
                            }
                        } else {
                            quiet = 0;
                        }
                    }
                }
                j += if odd_only { 2 } else { 1 };
            }
        }
        Ok(acc)
    };

    let mut step = 1.0;
    let mut raw = sweep(step, false, &mut evals)?;
    let mut estimate = raw * step;
    for level in 1..=DE_MAX_LEVEL {
        step *= 0.5;
        raw = raw + sweep(step, true, &mut evals)?;
        let next = raw * step;
        let diff = (next - estimate).magnitude();
        estimate = next;
        if level >= 3 && diff <= tol.target(estimate.magnitude()) {
            return Ok(Estimate {
                value: estimate,
                error: diff,
                evals,
            });
        }
        if level == DE_MAX_LEVEL {
            return Err(QuadError::NonConvergence {
                a,
                b: f64::INFINITY,
                achieved: diff,
                requested: tol.target(estimate.magnitude()),
            });
        }
    }
    unreachable!()
}

/// Integrates a function that decays (possibly while oscillating) on
/// `[start, inf)` chunk by chunk, stopping once three consecutive chunks are
/// negligible or the chunk budget is spent.
pub fn decaying<T, F>(
    mut f: F,
    start: f64,
    width: f64,
    tol: Tol,
    max_chunks: usize,
) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let mut total = T::default();
    let mut error = 0.0;
    let mut evals = 0;
    let mut quiet = 0;
    let chunk_tol = Tol::new(tol.abs * 0.1, tol.rel * 0.1);
    for j in 0..max_chunks {
        let lo = start + j as f64 * width;
        let hi = lo + width;
        let est = adaptive_with_budget(&mut f, lo, hi, chunk_tol, 500)?;
        total = total + est.value;
        error += est.error;
        evals += est.evals;
        if est.value.magnitude() <= tol.target(total.magnitude()) * 1e-2 {
            quiet += 1;
            if quiet >= 3 {
                return Ok(Estimate {
                    value: total,
                    error,
                    evals,
                });
            }
        } else {
            quiet = 0;
        }
    }
    Err(QuadError::NonConvergence {
        a: start,
        b: f64::INFINITY,
        achieved: f64::INFINITY,
        requested: tol.target(total.magnitude()),
    })
}
