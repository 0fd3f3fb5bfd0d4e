//! Mixing laws and the existence conditions they must satisfy.
//!
//! Each process type randomizes its CAR(2) parameters with a probability
//! measure: `ρ` on `a ∈ (0,∞)` for type I, `π_{λ,θ}` on `(0,∞)×(0,1)` for
//! type II and `π_{r,ψ}` on `(0,∞)×(π/2,π)` for type III. Pair laws are
//! either products of one-dimensional laws or finitely many joint atoms.
//!
//! Finiteness checks integrate over dyadic shells toward the singular ends
//! and report divergence instead of a number (see [`crate::quad::shells`]).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, Open01};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::quad::{self, Integral, Tol};

const MASS_TOL: f64 = 1e-12;
const INT_TOL: Tol = Tol::new(1e-14, 1e-12);
const DENSITY_NODES: usize = 1024;

/// A probability density on a finite interval, given by a callable.
///
/// The callable need not be normalized; its mass is computed once and
/// divided out. A cumulative table on a uniform grid backs `cdf`, `quantile`
/// and sampling.
#[derive(Clone)]
pub struct DensityLaw {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lo: f64,
    hi: f64,
    norm: f64,
    cum: Vec<f64>,
}

/// Serialized form of a [`DensityLaw`]: a piecewise-linear pdf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedPdf {
    pub x: Vec<f64>,
    pub pdf: Vec<f64>,
}

impl DensityLaw {
    pub fn new<F>(f: F, lo: f64, hi: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "density domain must be a finite interval (got [{lo}, {hi}])"
            )));
        }
        let f: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(f);
        let h = (hi - lo) / DENSITY_NODES as f64;
        let mut cum = Vec::with_capacity(DENSITY_NODES + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 0..DENSITY_NODES {
            let a = lo + i as f64 * h;
            let b = if i + 1 == DENSITY_NODES { hi } else { a + h };
            // end cells may hold integrable singularities
            let piece = if i == 0 || i + 1 == DENSITY_NODES {
                quad::tanh_sinh(|x| f(x), a, b, INT_TOL)
            } else {
                quad::adaptive(|x| f(x), a, b, INT_TOL)
            }
            .map_err(|e| Error::quad("normalizing density", e))?;
            if piece.value < -1e-14 {
                return Err(Error::InvalidParameter("density takes negative values".into()));
            }
            acc += piece.value.max(0.0);
            cum.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::InvalidParameter(format!("density has mass {acc}")));
        }
        let norm = acc;
        for c in cum.iter_mut() {
            *c /= norm;
        }
        Ok(Self { f, lo, hi, norm, cum })
    }

    /// Piecewise-linear pdf through `(x_i, pdf_i)`.
    pub fn tabulated(table: TabulatedPdf) -> Result<Self> {
        let TabulatedPdf { x, pdf } = table;
        if x.len() < 2 || x.len() != pdf.len() {
            return Err(Error::InvalidParameter(
                "tabulated density needs at least two points and equal-length x/pdf".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tabulated x must be finite and strictly increasing".into()));
        }
        if pdf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter("tabulated pdf values must be finite and nonnegative".into()));
        }
        let (lo, hi) = (x[0], x[x.len() - 1]);
        let interp = move |t: f64| {
            if t < x[0] || t > x[x.len() - 1] {
                return 0.0;
            }
            let i = x.partition_point(|&v| v <= t).clamp(1, x.len() - 1);
            let w = (t - x[i - 1]) / (x[i] - x[i - 1]);
            pdf[i - 1] + w * (pdf[i] - pdf[i - 1])
        };
        Self::new(interp, lo, hi)
    }

    /// Normalizing constant divided out of the callable.
    pub fn raw_mass(&self) -> f64 {
        self.norm
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            0.0
        } else {
            (self.f)(x) / self.norm
        }
    }

    fn cell(&self) -> f64 {
        (self.hi - self.lo) / DENSITY_NODES as f64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let i = (((x - self.lo) / self.cell()) as usize).min(DENSITY_NODES - 1);
        let a = self.lo + i as f64 * self.cell();
        let part = quad::tanh_sinh(|t| self.pdf(t), a, x, INT_TOL)
            .map(|e| e.value)
            .unwrap_or_else(|_| (x - a) * self.pdf(0.5 * (a + x)));
        (self.cum[i] + part).clamp(0.0, 1.0)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c < u).clamp(1, DENSITY_NODES);
        let mut a = self.lo + (i - 1) as f64 * self.cell();
        let mut b = (a + self.cell()).min(self.hi);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.cdf(m) < u {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-15 * (1.0 + m.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    }

    fn to_table(&self) -> TabulatedPdf {
        let h = self.cell();
        let x: Vec<f64> = (0..=DENSITY_NODES).map(|i| self.lo + i as f64 * h).collect();
        let pdf = x.iter().map(|&t| self.pdf(t)).collect();
        TabulatedPdf { x, pdf }
    }
}

impl fmt::Debug for DensityLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityLaw")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("raw_mass", &self.norm)
            .finish_non_exhaustive()
    }
}

impl TryFrom<TabulatedPdf> for DensityLaw {
    type Error = Error;
    fn try_from(t: TabulatedPdf) -> Result<Self> {
        DensityLaw::tabulated(t)
    }
}

impl From<DensityLaw> for TabulatedPdf {
    fn from(d: DensityLaw) -> Self {
        d.to_table()
    }
}

impl Serialize for DensityLaw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_table().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityLaw {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let t = TabulatedPdf::deserialize(d)?;
        DensityLaw::tabulated(t).map_err(serde::de::Error::custom)
    }
}

/// A probability law on the real line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Measure1D {
    Dirac { x: f64 },
    Gamma { shape: f64, rate: f64 },
    Beta { b0: f64, b1: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Atoms `(x, mass)`; masses sum to one.
    Discrete { atoms: Vec<(f64, f64)> },
    Density(DensityLaw),
    /// Density `−sin 2ψ` on `(π/2, π)`.
    Sin2,
}

impl Measure1D {
    pub fn dirac(x: f64) -> Self {
        Measure1D::Dirac { x }
    }

    pub fn gamma(shape: f64, rate: f64) -> Self {
        Measure1D::Gamma { shape, rate }
    }

    pub fn beta(b0: f64, b1: f64) -> Self {
        Measure1D::Beta { b0, b1 }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Measure1D::Uniform { lo, hi }
    }

    /// Parameter sanity, independent of the domain it is used on.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            Measure1D::Dirac { x } if !x.is_finite() => bad(format!("dirac at non-finite {x}")),
            Measure1D::Gamma { shape, rate } if !(*shape > 0.0 && *rate > 0.0 && shape.is_finite() && rate.is_finite()) => {
                bad(format!("gamma law needs shape, rate > 0 (got {shape}, {rate})"))
            }
            Measure1D::Beta { b0, b1 } if !(*b0 > 0.0 && *b1 > 0.0 && b0.is_finite() && b1.is_finite()) => {
                bad(format!("beta law needs b0, b1 > 0 (got {b0}, {b1})"))
            }
            Measure1D::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                bad(format!("uniform law needs lo < hi (got {lo}, {hi})"))
            }
            Measure1D::Discrete { atoms } => {
                if atoms.is_empty() {
                    return bad("discrete law has no atoms".into());
                }
                if atoms.iter().any(|(x, m)| !x.is_finite() || !(*m > 0.0 && m.is_finite())) {
                    return bad("discrete atoms need finite locations and positive masses".into());
                }
                let total: f64 = atoms.iter().map(|(_, m)| m).sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return bad(format!("discrete masses sum to {total}, not 1"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Closed hull of the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Measure1D::Dirac { x } => (*x, *x),
            Measure1D::Gamma { .. } => (0.0, f64::INFINITY),
            Measure1D::Beta { .. } => (0.0, 1.0),
            Measure1D::Uniform { lo, hi } => (*lo, *hi),
            Measure1D::Discrete { atoms } => atoms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| {
                (a.min(*x), b.max(*x))
            }),
            Measure1D::Density(d) => (d.lo, d.hi),
            Measure1D::Sin2 => (FRAC_PI_2, PI),
        }
    }

    /// Atoms of a purely atomic law.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Measure1D::Dirac { x } => Some(vec![(*x, 1.0)]),
            Measure1D::Discrete { atoms } => Some(atoms.clone()),
            _ => None,
        }
    }

    /// Checks that the law lives on the open interval `(lo, hi)`: atoms
    /// strictly inside, continuous supports inside the closure.
    pub fn check_domain(&self, lo: f64, hi: f64, what: &str) -> Result<()> {
        self.validate()?;
        let ok = match self.atoms() {
            Some(atoms) => atoms.iter().all(|(x, _)| *x > lo && *x < hi),
            None => {
                let (a, b) = self.support();
                a >= lo && b <= hi
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{what} law must live on ({lo}, {hi}); support is {:?}",
                self.support()
            )))
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Measure1D::Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    ((shape - 1.0) * x.ln() - rate * x + shape * rate.ln() - ln_gamma(*shape)).exp()
                }
            }
            Measure1D::Beta { b0, b1 } => {
                if x <= 0.0 || x >= 1.0 {
                    0.0
                } else {
                    ((b0 - 1.0) * x.ln() + (b1 - 1.0) * (-x).ln_1p() - ln_beta(*b0, *b1)).exp()
                }
            }
            Measure1D::Uniform { lo, hi } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            Measure1D::Density(d) => d.pdf(x),
            Measure1D::Sin2 => {
                if x <= FRAC_PI_2 || x >= PI {
                    0.0
                } else {
                    -(2.0 * x).sin()
                }
            }
            Measure1D::Dirac { .. } | Measure1D::Discrete { .. } => 0.0,
        }
    }

    /// `π((−∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Measure1D::Dirac { x: a } => (x >= *a) as u8 as f64,
            Measure1D::Discrete { atoms } => atoms.iter().filter(|(a, _)| *a <= x).map(|(_, m)| m).sum::<f64>().min(1.0),
            Measure1D::Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(*shape, rate * x)
                }
            }
            Measure1D::Beta { b0, b1 } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(*b0, *b1, x)
                }
            }
            Measure1D::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Measure1D::Density(d) => d.cdf(x),
            Measure1D::Sin2 => {
                if x <= FRAC_PI_2 {
                    0.0
                } else if x >= PI {
                    1.0
                } else {
                    x.cos().powi(2)
                }
            }
        }
    }

    /// Smallest `x` with `cdf(x) ≥ u`, for `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Measure1D::Dirac { x } => *x,
            Measure1D::Discrete { atoms } => {
                let mut sorted = atoms.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut acc = 0.0;
                for (x, m) in &sorted {
                    acc += m;
                    if acc >= u {
                        return *x;
                    }
                }
                sorted[sorted.len() - 1].0
            }
            Measure1D::Uniform { lo, hi } => lo + u * (hi - lo),
            Measure1D::Sin2 => PI - 0.5 * (2.0 * u - 1.0).clamp(-1.0, 1.0).acos(),
            Measure1D::Density(d) => d.quantile(u),
            Measure1D::Gamma { shape, rate } => {
                let mean = shape / rate;
                let sd = shape.sqrt() / rate;
                let mut hi = mean + 10.0 * sd;
                while self.cdf(hi) < u {
                    hi *= 2.0;
                }
                bisect(|x| self.cdf(x) - u, 0.0, hi)
            }
            Measure1D::Beta { .. } => bisect(|x| self.cdf(x) - u, 0.0, 1.0),
        }
    }

    /// `m_p = ∫ a^p π(da)`, `+inf` when divergent.
    pub fn m_p(&self, p: f64) -> f64 {
        match self {
            Measure1D::Dirac { x } => x.powf(p),
            Measure1D::Discrete { atoms } => atoms.iter().map(|(x, m)| m * x.powf(p)).sum(),
            Measure1D::Gamma { shape, rate } => {
                if shape + p <= 0.0 {
                    f64::INFINITY
                } else {
                    (ln_gamma(shape + p) - ln_gamma(*shape) - p * rate.ln()).exp()
                }
            }
            Measure1D::Beta { b0, b1 } => {
                if b0 + p <= 0.0 {
                    f64::INFINITY
                } else {
                    (ln_beta(b0 + p, *b1) - ln_beta(*b0, *b1)).exp()
                }
            }
            Measure1D::Uniform { lo, hi } => {
                if *lo <= 0.0 && p <= -1.0 {
                    f64::INFINITY
                } else if (p + 1.0).abs() < 1e-14 {
                    (hi / lo).ln() / (hi - lo)
                } else {
                    (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / ((p + 1.0) * (hi - lo))
                }
            }
            Measure1D::Density(_) | Measure1D::Sin2 => self.integrate(|a| a.powf(p)).value_or_inf(),
        }
    }

    /// `∫ h dπ` over the whole support, with divergence detection.
    pub fn integrate<H: Fn(f64) -> f64>(&self, h: H) -> Integral {
        let (lo, hi) = self.support();
        if self.atoms().is_some() {
            return self.integrate_on(h, f64::NEG_INFINITY, hi);
        }
        self.integrate_on(h, lo, hi)
    }

    /// `∫_{(lo, hi]} h dπ` for atomic laws, `∫_lo^hi h dπ` otherwise.
    pub fn integrate_on<H: Fn(f64) -> f64>(&self, h: H, lo: f64, hi: f64) -> Integral {
        if let Some(atoms) = self.atoms() {
            let mut s = 0.0;
            for (x, m) in atoms {
                if x > lo && x <= hi {
                    let v = h(x);
                    if !v.is_finite() {
                        return Integral::Divergent(quad::Divergence::NonFinite { x });
                    }
                    s += m * v;
                }
            }
            return Integral::Finite { value: s, error: 0.0 };
        }
        let (slo, shi) = self.support();
        let (lo, hi) = (lo.max(slo), hi.min(shi));
        if !(lo < hi) {
            return Integral::Finite { value: 0.0, error: 0.0 };
        }
        let g = |x: f64| {
            let w = self.pdf(x);
            if w == 0.0 {
                0.0
            } else {
                h(x) * w
            }
        };
        if let Measure1D::Beta { b0, b1 } = *self {
            if b1 < 1.0 && hi > 0.5 {
                return self.integrate_beta_upper(&h, lo, hi, b0, b1);
            }
        }
        let (mid, scale) = match self {
            Measure1D::Gamma { shape, rate } => {
                let m = (shape / rate).max(lo + 1e-3 / rate);
                let m = if hi.is_finite() { 0.5 * (lo + hi) } else { m };
                (m, shape.sqrt().max(1.0) / rate)
            }
            _ => (0.5 * (lo + hi), 1.0),
        };
        quad::shells_two_sided(g, lo, hi, mid, scale, INT_TOL)
    }

    /// Beta law with `b1 < 1`: above `1/2` substitute `θ = 1 − w^{1/b1}`,
    /// which removes the `(1−θ)^{b1−1}` singularity.
    fn integrate_beta_upper<H: Fn(f64) -> f64>(&self, h: &H, lo: f64, hi: f64, b0: f64, b1: f64) -> Integral {
        let m = lo.max(0.5);
        let lower = if lo < m {
            let f = |x: f64| {
                let w = self.pdf(x);
                if w == 0.0 {
                    0.0
                } else {
                    h(x) * w
                }
            };
            quad::shells_two_sided(f, lo, m, 0.5 * (lo + m), 1.0, INT_TOL)
        } else {
            Integral::Finite { value: 0.0, error: 0.0 }
        };
        let c = 1.0 / (b1 * ln_beta(b0, b1).exp());
        let top_w = (1.0 - m).powf(b1);
        let theta = |w: f64| (1.0 - w.powf(1.0 / b1)).min(1.0 - f64::EPSILON / 2.0);
        let g = |w: f64| c * h(theta(w)) * theta(w).powf(b0 - 1.0);
        let upper = if hi >= 1.0 {
            match quad::shells(g, top_w, 0.0, 1.0, INT_TOL) {
                Integral::Finite { value, error } => Integral::Finite { value: -value, error },
                d => d,
            }
        } else {
            let bot_w = (1.0 - hi).powf(b1);
            match quad::adaptive(g, bot_w, top_w, INT_TOL) {
                Ok(e) => Integral::Finite { value: e.value, error: e.error },
                Err(_) => Integral::Divergent(quad::Divergence::NonFinite { x: hi }),
            }
        };
        lower.add(upper)
    }

    /// `∫ h dπ`, for integrands known to be integrable.
    pub fn expect<H: Fn(f64) -> f64>(&self, h: H, what: &str) -> Result<f64> {
        self.integrate(h)
            .into_result()
            .map_err(|e| Error::quad(what.to_string(), e))
    }

    /// [`Measure1D::integrate_on`] for integrands known to be integrable.
    pub fn expect_on<H: Fn(f64) -> f64>(&self, h: H, lo: f64, hi: f64) -> Result<f64> {
        self.integrate_on(h, lo, hi)
            .into_result()
            .map_err(|e| Error::quad(format!("integral over ({lo}, {hi})"), e))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Measure1D::Dirac { x } => *x,
            Measure1D::Gamma { shape, rate } => GammaDist::new(*shape, 1.0 / rate).expect("validated").sample(rng),
            Measure1D::Beta { b0, b1 } => {
                // keep draws inside the open interval
                loop {
                    let v = BetaDist::new(*b0, *b1).expect("validated").sample(rng);
                    if v > 0.0 && v < 1.0 {
                        return v;
                    }
                }
            }
            Measure1D::Uniform { lo, hi } => {
                let u: f64 = Open01.sample(rng);
                lo + u * (hi - lo)
            }
            Measure1D::Discrete { atoms } => {
                let mut u: f64 = rng.random::<f64>();
                for (x, m) in atoms {
                    if u < *m {
                        return *x;
                    }
                    u -= m;
                }
                atoms[atoms.len() - 1].0
            }
            Measure1D::Sin2 | Measure1D::Density(_) => {
                let u: f64 = Open01.sample(rng);
                self.quantile(u)
            }
        }
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 4.0 * f64::EPSILON * m.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    0.5 * (a + b)
}

/// A law on a parameter pair.
#[derive(Debug, Clone)]
pub enum PairLaw {
    Product { first: Measure1D, second: Measure1D },
    /// Atoms `((v1, v2), mass)`; masses sum to one.
    Joint { atoms: Vec<((f64, f64), f64)> },
}

impl PairLaw {
    /// `∫∫ h(v1, v2) π(dv1, dv2)`, nested for products.
    pub fn integrate<H: Fn(f64, f64) -> f64>(&self, h: H) -> Integral {
        match self {
            PairLaw::Joint { atoms } => {
                let mut s = 0.0;
                for &((a, b), m) in atoms {
                    let v = h(a, b);
                    if !v.is_finite() {
                        return Integral::Divergent(quad::Divergence::NonFinite { x: a });
                    }
                    s += m * v;
                }
                Integral::Finite { value: s, error: 0.0 }
            }
            PairLaw::Product { first, second } => {
                let failure = std::cell::Cell::new(None);
                let outer = first.integrate(|a| match second.integrate(|b| h(a, b)) {
                    Integral::Finite { value, .. } => value,
                    Integral::Divergent(d) => {
                        failure.set(Some(d));
                        f64::NAN
                    }
                });
                match failure.get() {
                    Some(d) => Integral::Divergent(d),
                    None => outer,
                }
            }
        }
    }

    /// `∫ h1(v1) h2(v2) dπ`; factorizes for products.
    pub fn integrate_separable<H1, H2>(&self, h1: H1, h2: H2) -> Integral
    where
        H1: Fn(f64) -> f64,
        H2: Fn(f64) -> f64,
    {
        match self {
            PairLaw::Product { first, second } => {
                let a = first.integrate(h1);
                let b = second.integrate(h2);
                match (a, b) {
                    (Integral::Finite { value: va, error: ea }, Integral::Finite { value: vb, error: eb }) => {
                        Integral::Finite {
                            value: va * vb,
                            error: ea * vb.abs() + eb * va.abs(),
                        }
                    }
                    (Integral::Divergent(d), _) | (_, Integral::Divergent(d)) => Integral::Divergent(d),
                }
            }
            PairLaw::Joint { .. } => self.integrate(|a, b| h1(a) * h2(b)),
        }
    }

    /// Integral against the marginal law of the second coordinate.
    pub fn integrate_second<H: Fn(f64) -> f64>(&self, h: H) -> Integral {
        match self {
            PairLaw::Product { second, .. } => second.integrate(h),
            PairLaw::Joint { .. } => self.integrate(|_, b| h(b)),
        }
    }

    fn validate(&self, d1: (f64, f64), d2: (f64, f64), names: (&str, &str)) -> Result<()> {
        match self {
            PairLaw::Product { first, second } => {
                first.check_domain(d1.0, d1.1, names.0)?;
                second.check_domain(d2.0, d2.1, names.1)
            }
            PairLaw::Joint { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidParameter("joint law has no atoms".into()));
                }
                let mut total = 0.0;
                for &((a, b), m) in atoms {
                    if !(a > d1.0 && a < d1.1 && b > d2.0 && b < d2.1) {
                        return Err(Error::InvalidParameter(format!(
                            "joint atom ({a}, {b}) outside ({}, {}) × ({}, {})",
                            d1.0, d1.1, d2.0, d2.1
                        )));
                    }
                    if !(m > 0.0 && m.is_finite()) {
                        return Err(Error::InvalidParameter(format!("joint atom mass {m} not positive")));
                    }
                    total += m;
                }
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(Error::InvalidParameter(format!("joint masses sum to {total}, not 1")));
                }
                Ok(())
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            PairLaw::Product { first, second } => (first.sample(rng), second.sample(rng)),
            PairLaw::Joint { atoms } => {
                let mut u: f64 = rng.random::<f64>();
                for &(v, m) in atoms {
                    if u < m {
                        return v;
                    }
                    u -= m;
                }
                atoms[atoms.len() - 1].0
            }
        }
    }
}

/// Process type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeTag {
    I,
    II,
    III,
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TypeTag::I => "I",
            TypeTag::II => "II",
            TypeTag::III => "III",
        })
    }
}

/// Mixing law of a supCAR(2) process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MixingJson", into = "MixingJson")]
pub enum MixingSpec {
    /// `ρ` on `a ∈ (0, ∞)`.
    TypeI { rho: Measure1D },
    /// Law of `(λ, θ)` on `(0, ∞) × (0, 1)`.
    TypeII(PairLaw),
    /// Law of `(r, ψ)` on `(0, ∞) × (π/2, π)`.
    TypeIII(PairLaw),
}

/// JSON layout of [`MixingSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixingJson {
    #[serde(rename = "type")]
    type_tag: TypeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<Measure1D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<Measure1D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<Measure1D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<Measure1D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    psi: Option<Measure1D>,
    /// `[v1, v2, mass]` triples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joint: Option<Vec<[f64; 3]>>,
}

impl TryFrom<MixingJson> for MixingSpec {
    type Error = Error;
    fn try_from(j: MixingJson) -> Result<Self> {
        let pair = |a: Option<Measure1D>, b: Option<Measure1D>, joint: Option<Vec<[f64; 3]>>, names: &str| {
            match (a, b, joint) {
                (Some(first), Some(second), None) => Ok(PairLaw::Product { first, second }),
                (None, None, Some(atoms)) => Ok(PairLaw::Joint {
                    atoms: atoms.into_iter().map(|[x, y, m]| ((x, y), m)).collect(),
                }),
                _ => Err(Error::InvalidParameter(format!("expected either both of {names} or \"joint\""))),
            }
        };
        let spec = match j.type_tag {
            TypeTag::I => {
                if j.lambda.is_some() || j.theta.is_some() || j.r.is_some() || j.psi.is_some() || j.joint.is_some() {
                    return Err(Error::InvalidParameter("type I mixing takes only \"rho\"".into()));
                }
                MixingSpec::TypeI {
                    rho: j.rho.ok_or_else(|| Error::InvalidParameter("type I mixing needs \"rho\"".into()))?,
                }
            }
            TypeTag::II => {
                if j.rho.is_some() || j.r.is_some() || j.psi.is_some() {
                    return Err(Error::InvalidParameter("type II mixing takes \"lambda\"/\"theta\" or \"joint\"".into()));
                }
                MixingSpec::TypeII(pair(j.lambda, j.theta, j.joint, "\"lambda\"/\"theta\"")?)
            }
            TypeTag::III => {
                if j.rho.is_some() || j.lambda.is_some() || j.theta.is_some() {
                    return Err(Error::InvalidParameter("type III mixing takes \"r\"/\"psi\" or \"joint\"".into()));
                }
                MixingSpec::TypeIII(pair(j.r, j.psi, j.joint, "\"r\"/\"psi\"")?)
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<MixingSpec> for MixingJson {
    fn from(m: MixingSpec) -> Self {
        let mut j = MixingJson {
            type_tag: m.type_tag(),
            rho: None,
            lambda: None,
            theta: None,
            r: None,
            psi: None,
            joint: None,
        };
        let split = |p: PairLaw| match p {
            PairLaw::Product { first, second } => (Some(first), Some(second), None),
            PairLaw::Joint { atoms } => (None, None, Some(atoms.into_iter().map(|((x, y), m)| [x, y, m]).collect())),
        };
        match m {
            MixingSpec::TypeI { rho } => j.rho = Some(rho),
            MixingSpec::TypeII(p) => (j.lambda, j.theta, j.joint) = split(p),
            MixingSpec::TypeIII(p) => (j.r, j.psi, j.joint) = split(p),
        }
        j
    }
}

/// One draw of the CAR(2) parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParamPoint {
    I { a: f64 },
    II { lambda: f64, theta: f64 },
    III { r: f64, psi: f64 },
}

impl ParamPoint {
    /// Decay rate `c` of the kernel envelope `e^{−cu}`.
    pub fn decay_rate(&self) -> f64 {
        match *self {
            ParamPoint::I { a } => 0.5 * a,
            ParamPoint::II { lambda, theta } => lambda * theta,
            ParamPoint::III { r, psi } => -r * psi.cos(),
        }
    }
}

/// One line of a [`ConditionReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub name: String,
    /// Integral value, `+inf` when divergent.
    pub value: f64,
    pub finite: bool,
    /// Whether the condition counts toward `pass`.
    pub required: bool,
}

/// Per-condition values of an existence check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub pass: bool,
    pub conditions: Vec<Condition>,
    pub diagnostics: Vec<String>,
}

impl ConditionReport {
    pub fn new() -> Self {
        Self {
            pass: true,
            conditions: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, integral: Integral, required: bool) {
        let name = name.into();
        if let Integral::Divergent(d) = integral {
            self.diagnostics.push(format!("{name}: {d}"));
        }
        let finite = integral.is_finite();
        if required && !finite {
            self.pass = false;
        }
        self.conditions.push(Condition {
            name,
            value: integral.value_or_inf(),
            finite,
            required,
        });
    }

    pub fn extend(&mut self, other: ConditionReport) {
        self.pass &= other.pass;
        self.conditions.extend(other.conditions);
        self.diagnostics.extend(other.diagnostics);
    }

    pub fn get(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// Names of the required conditions that failed.
    pub fn failures(&self) -> Vec<&str> {
        self.conditions
            .iter()
            .filter(|c| c.required && !c.finite)
            .map(|c| c.name.as_str())
            .collect()
    }
}

impl Default for ConditionReport {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.conditions {
            let status = match (c.finite, c.required) {
                (true, _) => "pass",
                (false, true) => "FAIL",
                (false, false) => "info",
            };
            writeln!(f, "  [{status}] {} = {}", c.name, c.value)?;
        }
        for d in &self.diagnostics {
            writeln!(f, "  note: {d}")?;
        }
        write!(f, "  overall: {}", if self.pass { "pass" } else { "FAIL" })
    }
}

fn finite_value(v: f64) -> Integral {
    if v.is_finite() {
        Integral::Finite { value: v, error: 0.0 }
    } else {
        Integral::Divergent(quad::Divergence::Bound { partial: v })
    }
}

pub const COND_I: &str = "∫ a^-3 ρ(da)";
pub const COND_II_LAMBDA: &str = "∫ λ^-3 π_λ(dλ)";
pub const COND_II_THETA: &str = "∫ θ^-1 π_θ(dθ)";
pub const COND_II_LOG: &str = "∫_(1/2,1) |log(1-θ)| π_θ(dθ)";
pub const COND_II_JOINT_1: &str = "joint: ∫ λ^-3 θ^-1 dπ";
pub const COND_II_JOINT_2: &str = "joint: ∫ |log(1-θ)| λ^-1 dπ";
pub const COND_III_R: &str = "∫ r^-3 π_r(dr)";
pub const COND_III_COS: &str = "∫ |cos ψ|^-1 π_ψ(dψ)";
pub const COND_III_LOG: &str = "∫ log(sin ψ)/cos ψ π_ψ(dψ)";
pub const COND_III_JOINT_1: &str = "joint: ∫ r^-3 |cos ψ|^-1 dπ";
pub const COND_III_JOINT_2: &str = "joint: ∫ log(sin ψ) r^-1 (cos ψ)^-1 dπ";

/// `∫ a^{−3} ρ(da) < ∞`.
pub fn check_type1(rho: &Measure1D) -> ConditionReport {
    let mut rep = ConditionReport::new();
    let v = match rho {
        Measure1D::Gamma { .. } | Measure1D::Beta { .. } | Measure1D::Uniform { .. } | Measure1D::Dirac { .. } | Measure1D::Discrete { .. } => {
            finite_value(rho.m_p(-3.0))
        }
        _ => rho.integrate(|a| a.powi(-3)),
    };
    rep.push(COND_I, v, true);
    rep
}

fn log_one_minus(t: f64) -> f64 {
    (-t).ln_1p().abs()
}

/// Type II conditions. Products report the reduced conditions (required)
/// and the joint integrals (informational); joint laws report the joint
/// integrals together with the θ-marginal condition.
pub fn check_type2(law: &PairLaw) -> ConditionReport {
    let mut rep = ConditionReport::new();
    match law {
        PairLaw::Product { first, second } => {
            let lam = closed_or_quad(first, -3.0);
            let theta = closed_or_quad(second, -1.0);
            let log = second.integrate_on(log_one_minus, 0.5, 1.0);
            rep.push(COND_II_LAMBDA, lam, true);
            rep.push(COND_II_THETA, theta, true);
            rep.push(COND_II_LOG, log, true);
        }
        PairLaw::Joint { .. } => {
            rep.push(COND_II_THETA, law.integrate_second(|t| 1.0 / t), true);
        }
    }
    let j1 = law.integrate_separable(|l| l.powi(-3), |t| 1.0 / t);
    let j2 = law.integrate_separable(|l| 1.0 / l, log_one_minus);
    let required = matches!(law, PairLaw::Joint { .. });
    rep.push(COND_II_JOINT_1, j1, required);
    rep.push(COND_II_JOINT_2, j2, required);
    rep
}

fn log_sin_over_cos(psi: f64) -> f64 {
    psi.sin().ln() / psi.cos()
}

/// Type III conditions, laid out like [`check_type2`].
pub fn check_type3(law: &PairLaw) -> ConditionReport {
    let mut rep = ConditionReport::new();
    match law {
        PairLaw::Product { first, second } => {
            rep.push(COND_III_R, closed_or_quad(first, -3.0), true);
            rep.push(COND_III_COS, second.integrate(|p| 1.0 / p.cos().abs()), true);
            rep.push(COND_III_LOG, second.integrate(log_sin_over_cos), true);
        }
        PairLaw::Joint { .. } => {
            rep.push(COND_III_COS, law.integrate_second(|p| 1.0 / p.cos().abs()), true);
        }
    }
    let j1 = law.integrate_separable(|r| r.powi(-3), |p| 1.0 / p.cos().abs());
    let j2 = law.integrate_separable(|r| 1.0 / r, log_sin_over_cos);
    let required = matches!(law, PairLaw::Joint { .. });
    rep.push(COND_III_JOINT_1, j1, required);
    rep.push(COND_III_JOINT_2, j2, required);
    rep
}

fn closed_or_quad(m: &Measure1D, p: f64) -> Integral {
    match m {
        Measure1D::Density(_) | Measure1D::Sin2 => m.integrate(|a| a.powf(p)),
        _ => finite_value(m.m_p(p)),
    }
}

impl MixingSpec {
    pub fn type_tag(&self) -> TypeTag {
        match self {
            MixingSpec::TypeI { .. } => TypeTag::I,
            MixingSpec::TypeII(_) => TypeTag::II,
            MixingSpec::TypeIII(_) => TypeTag::III,
        }
    }

    pub fn type1(rho: Measure1D) -> Result<Self> {
        let m = MixingSpec::TypeI { rho };
        m.validate()?;
        Ok(m)
    }

    pub fn type2(lambda: Measure1D, theta: Measure1D) -> Result<Self> {
        let m = MixingSpec::TypeII(PairLaw::Product {
            first: lambda,
            second: theta,
        });
        m.validate()?;
        Ok(m)
    }

    pub fn type3(r: Measure1D, psi: Measure1D) -> Result<Self> {
        let m = MixingSpec::TypeIII(PairLaw::Product { first: r, second: psi });
        m.validate()?;
        Ok(m)
    }

    pub fn joint(tag: TypeTag, atoms: Vec<((f64, f64), f64)>) -> Result<Self> {
        let m = match tag {
            TypeTag::II => MixingSpec::TypeII(PairLaw::Joint { atoms }),
            TypeTag::III => MixingSpec::TypeIII(PairLaw::Joint { atoms }),
            TypeTag::I => return Err(Error::InvalidParameter("type I has no joint form".into())),
        };
        m.validate()?;
        Ok(m)
    }

    /// Domains are open: atoms on `θ = 1` or `ψ = π/2` are rejected.
    pub fn validate(&self) -> Result<()> {
        match self {
            MixingSpec::TypeI { rho } => rho.check_domain(0.0, f64::INFINITY, "a"),
            MixingSpec::TypeII(p) => p.validate((0.0, f64::INFINITY), (0.0, 1.0), ("λ", "θ")),
            MixingSpec::TypeIII(p) => p.validate((0.0, f64::INFINITY), (FRAC_PI_2, PI), ("r", "ψ")),
        }
    }

    /// Existence conditions of the matching type.
    pub fn check(&self) -> ConditionReport {
        match self {
            MixingSpec::TypeI { rho } => check_type1(rho),
            MixingSpec::TypeII(p) => check_type2(p),
            MixingSpec::TypeIII(p) => check_type3(p),
        }
    }

    /// Mixing side of the condition for `E|X(0)|^p < ∞`.
    pub fn moment_integral(&self, p: f64) -> Integral {
        match self {
            MixingSpec::TypeI { rho } => {
                if p <= 2.0 {
                    Integral::Finite { value: 0.0, error: 0.0 }
                } else {
                    closed_or_quad(rho, -(p + 1.0))
                }
            }
            MixingSpec::TypeII(law) => law.integrate_separable(|l| l.powf(-(p + 1.0)), |t| 1.0 / t),
            MixingSpec::TypeIII(law) => law.integrate_separable(|r| r.powf(-(p + 1.0)), |s| 1.0 / s.cos().abs()),
        }
    }

    /// Canonical form of a parameter pair for this type.
    pub fn point(&self, v1: f64, v2: f64) -> ParamPoint {
        match self {
            MixingSpec::TypeI { .. } => ParamPoint::I { a: v1 },
            MixingSpec::TypeII(_) => ParamPoint::II { lambda: v1, theta: v2 },
            MixingSpec::TypeIII(_) => ParamPoint::III { r: v1, psi: v2 },
        }
    }
}

/// `moment_condition`: whether the mixing law allows `E|X(0)|^p < ∞`.
pub fn moment_condition(mix: &MixingSpec, p: f64) -> bool {
    mix.moment_integral(p).is_finite()
}

/// One draw from the mixing law.
pub fn sample_params<R: Rng + ?Sized>(mix: &MixingSpec, rng: &mut R) -> ParamPoint {
    match mix {
        MixingSpec::TypeI { rho } => ParamPoint::I { a: rho.sample(rng) },
        MixingSpec::TypeII(p) => {
            let (lambda, theta) = p.sample(rng);
            ParamPoint::II { lambda, theta }
        }
        MixingSpec::TypeIII(p) => {
            let (r, psi) = p.sample(rng);
            ParamPoint::III { r, psi }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_noise::rng_stream;
    use proptest::prelude::*;

    #[test]
    fn m_p_examples() {
        assert_eq!(Measure1D::dirac(2.0).m_p(-3.0), 0.125);
        assert!((Measure1D::gamma(4.0, 1.0).m_p(-3.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!(Measure1D::gamma(2.0, 1.0).m_p(-3.0).is_infinite());
        // the quadrature path agrees on divergence
        let q = Measure1D::gamma(2.0, 1.0).integrate(|a| a.powi(-3));
        assert!(!q.is_finite(), "{q:?}");
    }

    #[test]
    fn type1_examples() {
        let r = check_type1(&Measure1D::gamma(4.0, 1.0));
        assert!(r.pass);
        assert!((r.conditions[0].value - 1.0 / 6.0).abs() < 1e-15);
        let r = check_type1(&Measure1D::dirac(1.7));
        assert!(r.pass && (r.conditions[0].value - 1.7f64.powi(-3)).abs() < 1e-15);
        assert!(!check_type1(&Measure1D::gamma(2.0, 1.0)).pass);
    }

    #[test]
    fn type2_examples() {
        let law = PairLaw::Product {
            first: Measure1D::gamma(4.0, 1.0),
            second: Measure1D::beta(2.0, 1.0),
        };
        let r = check_type2(&law);
        assert!(r.pass, "{r}");
        assert!((r.get(COND_II_THETA).unwrap().value - 2.0).abs() < 1e-12);

        let law = PairLaw::Product {
            first: Measure1D::gamma(4.0, 1.0),
            second: Measure1D::beta(1.0, 1.0),
        };
        let r = check_type2(&law);
        assert!(!r.pass);
        assert!(!r.get(COND_II_THETA).unwrap().finite);

        let law = PairLaw::Product {
            first: Measure1D::dirac(1.0),
            second: Measure1D::dirac(0.5),
        };
        let r = check_type2(&law);
        assert!(r.pass);
        let vals: Vec<f64> = [COND_II_LAMBDA, COND_II_THETA, COND_II_LOG]
            .iter()
            .map(|n| r.get(n).unwrap().value)
            .collect();
        assert_eq!(vals, vec![1.0, 2.0, 0.0]);
    }

    #[test]
    fn uniform_theta_fails_by_quadrature() {
        let law = PairLaw::Product {
            first: Measure1D::dirac(1.0),
            second: Measure1D::Density(DensityLaw::new(|_| 1.0, 0.0, 1.0).unwrap()),
        };
        assert!(!check_type2(&law).pass);
    }

    #[test]
    fn type3_examples() {
        let law = PairLaw::Product {
            first: Measure1D::gamma(4.0, 1.0),
            second: Measure1D::Sin2,
        };
        let r = check_type3(&law);
        assert!(r.pass);
        assert!((r.get(COND_III_COS).unwrap().value - 2.0).abs() < 1e-10);
        assert!((r.get(COND_III_LOG).unwrap().value - (2.0 - 4f64.ln())).abs() < 1e-10);

        let law = PairLaw::Product {
            first: Measure1D::dirac(1.0),
            second: Measure1D::dirac(0.75 * PI),
        };
        let r = check_type3(&law);
        assert!(r.pass);
        assert!((r.get(COND_III_COS).unwrap().value - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn psi_near_right_angle_fails() {
        // density ∝ 1 on (π/2, π/2 + 0.5): ∫ |cos ψ|^-1 diverges at π/2
        let law = PairLaw::Product {
            first: Measure1D::dirac(1.0),
            second: Measure1D::uniform(FRAC_PI_2, FRAC_PI_2 + 0.5),
        };
        let r = check_type3(&law);
        assert!(!r.pass);
        assert!(!r.get(COND_III_COS).unwrap().finite);
    }

    #[test]
    fn moment_condition_examples() {
        let m = MixingSpec::type1(Measure1D::gamma(4.0, 1.0)).unwrap();
        assert!(moment_condition(&m, 2.0));
        assert!(!moment_condition(&m, 4.0));
        let m = MixingSpec::type3(Measure1D::dirac(1.0), Measure1D::dirac(0.75 * PI)).unwrap();
        assert!(moment_condition(&m, 10.0));
    }

    #[test]
    fn boundary_atoms_rejected() {
        assert!(MixingSpec::type2(Measure1D::dirac(1.0), Measure1D::dirac(1.0)).is_err());
        assert!(MixingSpec::type3(Measure1D::dirac(1.0), Measure1D::dirac(FRAC_PI_2)).is_err());
        assert!(MixingSpec::type1(Measure1D::dirac(0.0)).is_err());
        assert!(MixingSpec::type2(Measure1D::gamma(4.0, 1.0), Measure1D::gamma(2.0, 1.0)).is_err());
        assert!(MixingSpec::joint(TypeTag::II, vec![((1.0, 0.5), 0.5), ((2.0, 0.2), 0.4)]).is_err());
    }

    #[test]
    fn sin2_sampler_matches_cdf() {
        let m = Measure1D::Sin2;
        for u in [0.01, 0.2, 0.5, 0.9, 0.999] {
            let x = m.quantile(u);
            assert!((m.cdf(x) - u).abs() < 1e-12);
            let q = m.integrate_on(|_| 1.0, FRAC_PI_2, x).value_or_inf();
            assert!((q - u).abs() < 1e-10, "{u}: {q}");
        }
    }

    #[test]
    fn quantiles_invert_cdfs() {
        let laws = [
            Measure1D::gamma(4.0, 1.0),
            Measure1D::gamma(0.5, 2.0),
            Measure1D::beta(2.0, 0.7),
            Measure1D::uniform(0.2, 0.9),
            Measure1D::Density(DensityLaw::new(|x| x * (1.0 - x), 0.0, 1.0).unwrap()),
        ];
        for m in &laws {
            for u in [0.001, 0.125, 0.5, 0.875, 0.999] {
                let x = m.quantile(u);
                assert!((m.cdf(x) - u).abs() < 1e-10, "{m:?} u={u} x={x} cdf={}", m.cdf(x));
            }
        }
    }

    #[test]
    fn density_normalized_and_serializable() {
        let t = TabulatedPdf {
            x: vec![0.0, 0.5, 1.0],
            pdf: vec![0.0, 3.0, 0.0],
        };
        let d = DensityLaw::tabulated(t).unwrap();
        assert!((d.raw_mass() - 1.5).abs() < 1e-12);
        let m = Measure1D::Density(d);
        let mass = m.integrate(|_| 1.0).value_or_inf();
        assert!((mass - 1.0).abs() < 1e-12);
        let json = r#"{"kind":"density","x":[0.0,0.5,1.0],"pdf":[0.0,2.0,0.0]}"#;
        let m2: Measure1D = serde_json::from_str(json).unwrap();
        assert!((m2.m_p(1.0) - 0.5).abs() < 1e-10);
        let back = serde_json::to_string(&m2).unwrap();
        let m3: Measure1D = serde_json::from_str(&back).unwrap();
        assert!((m3.m_p(1.0) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn mixing_json() {
        let json = r#"{"type":"III","r":{"kind":"gamma","shape":4.0,"rate":1.0},"psi":{"kind":"sin2"}}"#;
        let m: MixingSpec = serde_json::from_str(json).unwrap();
        assert_eq!(m.type_tag(), TypeTag::III);
        let back = serde_json::to_string(&m).unwrap();
        assert!(serde_json::from_str::<MixingSpec>(&back).is_ok());
        let joint = r#"{"type":"II","joint":[[1.0,0.5,0.25],[2.0,0.3,0.75]]}"#;
        assert!(serde_json::from_str::<MixingSpec>(joint).is_ok());
        let bad = r#"{"type":"I","rho":{"kind":"gamma","shape":4.0,"rate":1.0},"extra":1}"#;
        assert!(serde_json::from_str::<MixingSpec>(bad).is_err());
        let bad = r#"{"type":"I","rho":{"kind":"gamma","shape":4.0,"rate":1.0,"scale":1}}"#;
        assert!(serde_json::from_str::<MixingSpec>(bad).is_err());
        let bad = r#"{"type":"II","lambda":{"kind":"dirac","x":1.0}}"#;
        assert!(serde_json::from_str::<MixingSpec>(bad).is_err());
    }

    #[test]
    fn sampling_means() {
        let n = 1_000_000;
        let mut rng = rng_stream(5, 0);
        assert!((0..10).all(|_| Measure1D::dirac(2.0).sample(&mut rng) == 2.0));
        let g = Measure1D::gamma(4.0, 1.0);
        let mean = (0..n).map(|_| g.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 4.0).abs() < 0.008, "{mean}");
        let b = Measure1D::beta(2.0, 1.0);
        let mean = (0..n).map(|_| b.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.001, "{mean}");
    }

    #[test]
    fn type1_grid_passes() {
        for k in 1..=50 {
            let alpha = 0.1 * k as f64;
            assert!(check_type1(&Measure1D::gamma(alpha + 3.0, 1.0)).pass, "alpha={alpha}");
        }
    }

    fn report_values(r: &ConditionReport) -> Vec<(String, f64)> {
        r.conditions
            .iter()
            .filter(|c| c.name.starts_with("joint:") || c.name == COND_II_THETA || c.name == COND_III_COS)
            .map(|c| (c.name.clone(), c.value))
            .collect()
    }

    proptest! {
        #[test]
        fn closed_moments_match_quadrature(shape in 0.5f64..8.0, rate in 0.2f64..5.0, b1 in 0.3f64..4.0, p in -2.0f64..3.0) {
            let cases = [Measure1D::gamma(shape, rate), Measure1D::beta(shape, b1), Measure1D::uniform(rate, rate + b1)];
            for m in &cases {
                let closed = m.m_p(p);
                let quad = m.integrate(|a| a.powf(p)).value_or_inf();
                if closed.is_finite() && quad.is_finite() {
                    prop_assert!((closed - quad).abs() <= 1e-8 * closed.abs(), "{:?} p={} {} vs {}", m, p, closed, quad);
                }
            }
        }

        #[test]
        fn joint_and_product_discrete_agree(
            l in prop::collection::vec(0.2f64..5.0, 1..4),
            t in prop::collection::vec(0.05f64..0.95, 1..4),
            psi in prop::collection::vec(1.6f64..3.1, 1..4),
        ) {
            let uniform_atoms = |xs: &[f64]| xs.iter().map(|&x| (x, 1.0 / xs.len() as f64)).collect::<Vec<_>>();
            let product = |a: &[f64], b: &[f64]| PairLaw::Product {
                first: Measure1D::Discrete { atoms: uniform_atoms(a) },
                second: Measure1D::Discrete { atoms: uniform_atoms(b) },
            };
            let joint = |a: &[f64], b: &[f64]| PairLaw::Joint {
                atoms: a.iter().flat_map(|&x| b.iter().map(move |&y| ((x, y), 1.0 / (a.len() * b.len()) as f64))).collect(),
            };
            let rp = report_values(&check_type2(&product(&l, &t)));
            let rj = report_values(&check_type2(&joint(&l, &t)));
            prop_assert_eq!(rp.len(), rj.len());
            for ((n1, v1), (n2, v2)) in rp.iter().zip(&rj) {
                prop_assert_eq!(n1, n2);
                prop_assert!((v1 - v2).abs() <= 1e-12 * (1.0 + v1.abs()), "{}: {} vs {}", n1, v1, v2);
            }
            let rp = report_values(&check_type3(&product(&l, &psi)));
            let rj = report_values(&check_type3(&joint(&l, &psi)));
            for ((n1, v1), (n2, v2)) in rp.iter().zip(&rj) {
                prop_assert_eq!(n1, n2);
                prop_assert!((v1 - v2).abs() <= 1e-12 * (1.0 + v1.abs()), "{}: {} vs {}", n1, v1, v2);
            }
        }

        #[test]
        fn samples_respect_supports(seed in 0u64..1000) {
            let mut rng = rng_stream(seed, 1);
            let m2 = MixingSpec::type2(Measure1D::gamma(4.0, 1.0), Measure1D::beta(0.3, 0.2)).unwrap();
            let m3 = MixingSpec::type3(Measure1D::gamma(4.0, 1.0), Measure1D::Sin2).unwrap();
            for _ in 0..200 {
                match sample_params(&m2, &mut rng) {
                    ParamPoint::II { theta, .. } => prop_assert!(theta > 0.0 && theta < 1.0),
                    _ => unreachable!(),
                }
                match sample_params(&m3, &mut rng) {
                    ParamPoint::III { psi, .. } => prop_assert!(psi > FRAC_PI_2 && psi < PI),
                    _ => unreachable!(),
                }
            }
        }
    }
}
