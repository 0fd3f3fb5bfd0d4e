//! Driving Lévy noise.
//!
//! A [`LevyTriplet`] `(γ, Σ, μ)` uses the truncation function
//! `τ(x) = x·1[|x| ≤ 1]`, so the cumulant is
//!
//! ```text
//! κ(z) = iγz − Σz²/2 + ∫ (e^{izx} − 1 − izx·1[|x| ≤ 1]) μ(dx).
//! ```
//!
//! The drift `γ` is always read in that convention. A gamma subordinator with
//! `γ = 0` therefore has its small jumps compensated; the pure subordinator
//! corresponds to `γ = shape·(1 − e^{−rate})/rate`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quad::{self, Integral, Tol};

/// Random number stream used throughout the crate.
pub type RngStream = ChaCha20Rng;

/// A stream for `(seed, stream)`; distinct stream ids give independent
/// sequences for the same seed.
pub fn rng_stream(seed: u64, stream: u64) -> RngStream {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const TAIL_TOL: Tol = Tol::new(1e-10, 1e-10);

/// Jump size law of a compound Poisson process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    /// `x1` with probability `p`, otherwise `x2`.
    TwoPoint { x1: f64, p: f64, x2: f64 },
}

impl JumpLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            JumpLaw::Normal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "normal jump law needs finite mean and sd > 0 (got {mean}, {sd})"
                    )));
                }
            }
            JumpLaw::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "exponential jump law needs rate > 0 (got {rate})"
                    )));
                }
            }
            JumpLaw::TwoPoint { x1, p, x2 } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "two-point probability must lie in (0, 1] (got {p})"
                    )));
                }
                if !x1.is_finite() || x1 == 0.0 || (p < 1.0 && (!x2.is_finite() || x2 == 0.0)) {
                    return Err(Error::InvalidParameter(
                        "two-point jump sizes must be finite and nonzero".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `E[e^{izJ}] − 1`, computed without cancellation near `z = 0`.
    fn cf_minus_one(&self, z: f64) -> Complex64 {
        match *self {
            JumpLaw::Normal { mean, sd } => cexpm1(Complex64::new(-0.5 * sd * sd * z * z, mean * z)),
            JumpLaw::Exponential { rate } => {
                let iz = Complex64::new(0.0, z);
                iz / (rate - iz)
            }
            JumpLaw::TwoPoint { x1, p, x2 } => {
                let mut v = cexpm1(Complex64::new(0.0, z * x1)) * p;
                if p < 1.0 {
                    v += cexpm1(Complex64::new(0.0, z * x2)) * (1.0 - p);
                }
                v
            }
        }
    }

    /// `E[J; |J| ≤ 1]`.
    fn small_mean(&self) -> f64 {
        match *self {
            JumpLaw::Normal { mean, sd } => {
                let a = (-1.0 - mean) / sd;
                let b = (1.0 - mean) / sd;
                let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
                mean * normal_mass(a, b) + sd * (phi(a) - phi(b))
            }
            JumpLaw::Exponential { rate } => -(-rate).exp_m1() / rate - (-rate).exp(),
            JumpLaw::TwoPoint { x1, p, x2 } => {
                let mut s = if x1.abs() <= 1.0 { p * x1 } else { 0.0 };
                if p < 1.0 && x2.abs() <= 1.0 {
                    s += (1.0 - p) * x2;
                }
                s
            }
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            JumpLaw::Normal { mean, .. } => mean,
            JumpLaw::Exponential { rate } => 1.0 / rate,
            JumpLaw::TwoPoint { x1, p, x2 } => p * x1 + if p < 1.0 { (1.0 - p) * x2 } else { 0.0 },
        }
    }

    fn second_moment(&self) -> f64 {
        match *self {
            JumpLaw::Normal { mean, sd } => mean * mean + sd * sd,
            JumpLaw::Exponential { rate } => 2.0 / (rate * rate),
            JumpLaw::TwoPoint { x1, p, x2 } => {
                p * x1 * x1 + if p < 1.0 { (1.0 - p) * x2 * x2 } else { 0.0 }
            }
        }
    }

    /// `E[h(|J|); |J| > 1]` for a tail weight `h`.
    fn tail_expectation(&self, h: &dyn Fn(f64) -> f64) -> Integral {
        match *self {
            JumpLaw::Normal { mean, sd } => {
                let pdf = |x: f64| {
                    let u = (x - mean) / sd;
                    (-0.5 * u * u).exp() / (sd * (2.0 * PI).sqrt())
                };
                let right = quad::shells(|x| h(x) * pdf(x), 1.0, f64::INFINITY, sd.max(1.0), TAIL_TOL);
                let left = quad::shells(|x| h(x) * pdf(-x), 1.0, f64::INFINITY, sd.max(1.0), TAIL_TOL);
                right.add(left)
            }
            JumpLaw::Exponential { rate } => quad::shells(
                |x| h(x) * rate * (-rate * x).exp(),
                1.0,
                f64::INFINITY,
                1.0 / rate,
                TAIL_TOL,
            ),
            JumpLaw::TwoPoint { x1, p, x2 } => {
                let mut s = if x1.abs() > 1.0 { p * h(x1.abs()) } else { 0.0 };
                if p < 1.0 && x2.abs() > 1.0 {
                    s += (1.0 - p) * h(x2.abs());
                }
                Integral::Finite { value: s, error: 0.0 }
            }
        }
    }

    /// `E[J; |J| > 1]`.
    fn large_mean(&self) -> f64 {
        self.mean() - self.small_mean()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            JumpLaw::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            JumpLaw::TwoPoint { x1, p, x2 } => {
                if p >= 1.0 || rng.random::<f64>() < p {
                    x1
                } else {
                    x2
                }
            }
        }
    }
}

/// `P(a < N(0,1) ≤ b)`, accurate in both tails.
fn normal_mass(a: f64, b: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a / s) - erfc(b / s))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / s) - erfc(-a / s))
    } else {
        1.0 - 0.5 * (erfc(-a / s) + erfc(b / s))
    }
}

/// `e^w − 1` without cancellation for small `|w|`.
pub(crate) fn cexpm1(w: Complex64) -> Complex64 {
    let (s, c) = w.im.sin_cos();
    let half = (0.5 * w.im).sin();
    let em1 = w.re.exp_m1();
    Complex64::new(em1 * c - 2.0 * half * half, (em1 + 1.0) * s)
}

/// A Lévy density `x ↦ ν(x)` on `ℝ \ {0}`; analysis only.
#[derive(Clone)]
pub struct LevyDensity {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `β` in `ν(x) = O(|x|^{−1−β})` as `x → 0`; must be below 2.
    pub index_near_zero: f64,
}

impl LevyDensity {
    /// Wraps `f`, checking `∫ (1 ∧ x²) ν(dx) < ∞` numerically.
    pub fn new<F>(f: F, index_near_zero: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(index_near_zero < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "Lévy density index near zero must be < 2 (got {index_near_zero})"
            )));
        }
        let d = Self {
            f: Arc::new(f),
            index_near_zero,
        };
        let mass = d.integrate(|x| if x.abs() <= 1.0 { x * x } else { 1.0 });
        match mass {
            Integral::Finite { .. } => Ok(d),
            Integral::Divergent(div) => Err(Error::InvalidParameter(format!(
                "Lévy density does not integrate 1 ∧ x²: {div}"
            ))),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// `∫ h(x) ν(x) dx` over `ℝ \ {0}`, split at `±1`.
    fn integrate<H: Fn(f64) -> f64>(&self, h: H) -> Integral {
        let g = |x: f64| {
            let v = self.eval(x);
            if v == 0.0 {
                0.0
            } else {
                h(x) * v
            }
        };
        let near = |sgn: f64| unit_to_zero(|u| g(sgn * u));
        let far = |sgn: f64| quad::shells(|u| g(sgn * u), 1.0, f64::INFINITY, 1.0, TAIL_TOL);
        near(1.0).add(near(-1.0)).add(far(1.0)).add(far(-1.0))
    }

    /// `∫_{|x|>1} h(|x|) ν(x) dx`.
    fn tail<H: Fn(f64) -> f64>(&self, h: H) -> Integral {
        let right = quad::shells(|u| h(u) * self.eval(u), 1.0, f64::INFINITY, 1.0, TAIL_TOL);
        let left = quad::shells(|u| h(u) * self.eval(-u), 1.0, f64::INFINITY, 1.0, TAIL_TOL);
        right.add(left)
    }
}

/// `∫_0^1 f`, by shells toward the possibly singular origin.
fn unit_to_zero<F: FnMut(f64) -> f64>(f: F) -> Integral {
    match quad::shells(f, 1.0, 0.0, 1.0, TAIL_TOL) {
        Integral::Finite { value, error } => Integral::Finite { value: -value, error },
        d => d,
    }
}

impl fmt::Debug for LevyDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyDensity")
            .field("index_near_zero", &self.index_near_zero)
            .finish_non_exhaustive()
    }
}

/// The jump part `μ` of a triplet.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpSpec {
    None,
    CompoundPoisson { rate: f64, law: JumpLaw },
    /// `μ(dx) = shape·x^{−1}e^{−rate·x}dx` on `x > 0`.
    GammaSubordinator { shape: f64, rate: f64 },
    /// Finitely many atoms `(x, mass)`.
    Discrete { atoms: Vec<(f64, f64)> },
    #[serde(skip)]
    Density(LevyDensity),
}

impl JumpSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpSpec::None | JumpSpec::Density(_) => Ok(()),
            JumpSpec::CompoundPoisson { rate, law } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "compound Poisson rate must be positive (got {rate})"
                    )));
                }
                law.validate()
            }
            JumpSpec::GammaSubordinator { shape, rate } => {
                if !(shape.is_finite() && *shape > 0.0 && rate.is_finite() && *rate > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma subordinator needs shape, rate > 0 (got {shape}, {rate})"
                    )));
                }
                Ok(())
            }
            JumpSpec::Discrete { atoms } => {
                for &(x, m) in atoms {
                    if !x.is_finite() || x == 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "Lévy measure atoms must be finite and nonzero (got {x})"
                        )));
                    }
                    if !(m.is_finite() && m > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "Lévy measure atom masses must be positive (got {m})"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// `∫_{|x| ≤ 1} x μ(dx)`, the compensator rate of the small jumps.
    fn small_jump_drift(&self) -> Result<f64> {
        Ok(match self {
            JumpSpec::None => 0.0,
            JumpSpec::CompoundPoisson { rate, law } => rate * law.small_mean(),
            JumpSpec::GammaSubordinator { shape, rate } => -shape * (-rate).exp_m1() / rate,
            JumpSpec::Discrete { atoms } => atoms
                .iter()
                .filter(|(x, _)| x.abs() <= 1.0)
                .map(|(x, m)| x * m)
                .sum(),
            JumpSpec::Density(d) => {
                let pos = unit_to_zero(|u| u * d.eval(u));
                let neg = unit_to_zero(|u| u * d.eval(-u));
                pos.into_result().map_err(|e| Error::quad("small-jump drift", e))?
                    - neg.into_result().map_err(|e| Error::quad("small-jump drift", e))?
            }
        })
    }

    /// `∫_{|x|>1} h(|x|) μ(dx)`.
    fn tail_integral(&self, h: &dyn Fn(f64) -> f64) -> Integral {
        match self {
            JumpSpec::None => Integral::Finite { value: 0.0, error: 0.0 },
            JumpSpec::CompoundPoisson { rate, law } => match law.tail_expectation(h) {
                Integral::Finite { value, error } => Integral::Finite {
                    value: rate * value,
                    error: rate * error,
                },
                d => d,
            },
            JumpSpec::GammaSubordinator { shape, rate } => {
                let (k, b) = (*shape, *rate);
                match quad::shells(|x| h(x) * k * (-b * x).exp() / x, 1.0, f64::INFINITY, 1.0 / b, TAIL_TOL) {
                    Integral::Finite { value, error } => Integral::Finite { value, error },
                    d => d,
                }
            }
            JumpSpec::Discrete { atoms } => Integral::Finite {
                value: atoms
                    .iter()
                    .filter(|(x, _)| x.abs() > 1.0)
                    .map(|(x, m)| m * h(x.abs()))
                    .sum(),
                error: 0.0,
            },
            JumpSpec::Density(d) => d.tail(h),
        }
    }

    /// Total mass, when finite and available in closed form.
    fn total_mass(&self) -> Option<f64> {
        match self {
            JumpSpec::None => Some(0.0),
            JumpSpec::CompoundPoisson { rate, .. } => Some(*rate),
            JumpSpec::Discrete { atoms } => Some(atoms.iter().map(|(_, m)| m).sum()),
            _ => None,
        }
    }
}

/// Characteristic triplet `(γ, Σ, μ)` of the driving Lévy basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyTriplet {
    pub gamma: f64,
    pub sigma2: f64,
    pub jump: JumpSpec,
}

/// Outcome of a tail moment check: the decision and the integral value
/// (`+inf` when divergent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCheck {
    pub finite: bool,
    pub value: f64,
}

impl From<Integral> for TailCheck {
    fn from(i: Integral) -> Self {
        TailCheck {
            finite: i.is_finite(),
            value: i.value_or_inf(),
        }
    }
}

impl LevyTriplet {
    pub fn new(gamma: f64, sigma2: f64, jump: JumpSpec) -> Result<Self> {
        let t = Self { gamma, sigma2, jump };
        t.validate()?;
        Ok(t)
    }

    pub fn gaussian(gamma: f64, sigma2: f64) -> Self {
        Self {
            gamma,
            sigma2,
            jump: JumpSpec::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("drift must be finite".into()));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Gaussian variance must be nonnegative (got {})",
                self.sigma2
            )));
        }
        self.jump.validate()
    }

    /// The triplet of `L` over a set of control measure `p`: `(pγ, pΣ, pμ)`.
    pub fn scaled(&self, p: f64) -> Self {
        let jump = match &self.jump {
            JumpSpec::None => JumpSpec::None,
            JumpSpec::CompoundPoisson { rate, law } => JumpSpec::CompoundPoisson {
                rate: rate * p,
                law: law.clone(),
            },
            JumpSpec::GammaSubordinator { shape, rate } => JumpSpec::GammaSubordinator {
                shape: shape * p,
                rate: *rate,
            },
            JumpSpec::Discrete { atoms } => JumpSpec::Discrete {
                atoms: atoms.iter().map(|&(x, m)| (x, m * p)).collect(),
            },
            JumpSpec::Density(d) => {
                let inner = d.clone();
                JumpSpec::Density(LevyDensity {
                    f: Arc::new(move |x| p * inner.eval(x)),
                    index_near_zero: d.index_near_zero,
                })
            }
        };
        Self {
            gamma: self.gamma * p,
            sigma2: self.sigma2 * p,
            jump,
        }
    }

    /// True when [`sample_increment`] supports this triplet.
    pub fn is_sampleable(&self) -> bool {
        !matches!(self.jump, JumpSpec::Density(_))
    }
}

/// Cumulant `κ_L(z) = log E e^{izL(1)}`.
pub fn cumulant_l(z: f64, t: &LevyTriplet) -> Result<Complex64> {
    if z == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let base = Complex64::new(-0.5 * t.sigma2 * z * z, t.gamma * z);
    let jumps = match &t.jump {
        JumpSpec::None => Complex64::new(0.0, 0.0),
        JumpSpec::CompoundPoisson { rate, law } => {
            (law.cf_minus_one(z) - Complex64::new(0.0, z * law.small_mean())) * *rate
        }
        JumpSpec::GammaSubordinator { shape, rate } => {
            let (k, b) = (*shape, *rate);
            let q = z / b;
            Complex64::new(
                -0.5 * k * (q * q).ln_1p(),
                k * q.atan() + z * k * (-b).exp_m1() / b,
            )
        }
        JumpSpec::Discrete { atoms } => atoms
            .iter()
            .map(|&(x, m)| {
                let comp = if x.abs() <= 1.0 { z * x } else { 0.0 };
                (cexpm1(Complex64::new(0.0, z * x)) - Complex64::new(0.0, comp)) * m
            })
            .sum(),
        JumpSpec::Density(d) => {
            let re = d.integrate(|x| {
                let s = (0.5 * z * x).sin();
                -2.0 * s * s
            });
            let im = d.integrate(|x| {
                let comp = if x.abs() <= 1.0 { z * x } else { 0.0 };
                (z * x).sin() - comp
            });
            let re = re.into_result().map_err(|e| Error::quad("cumulant of Lévy density (real part)", e))?;
            let im = im.into_result().map_err(|e| Error::quad("cumulant of Lévy density (imaginary part)", e))?;
            Complex64::new(re, im)
        }
    };
    Ok(base + jumps)
}

/// `∫_{|x|>1} log|x| μ(dx) < ∞`.
pub fn log_moment_check(jump: &JumpSpec) -> TailCheck {
    jump.tail_integral(&|x: f64| x.ln()).into()
}

/// `∫_{|x|>1} |x|^p μ(dx) < ∞`.
pub fn p_moment_check(jump: &JumpSpec, p: f64) -> TailCheck {
    jump.tail_integral(&|x: f64| x.powf(p)).into()
}

/// `(E L(1), Var L(1))`.
pub fn mean_var_l(t: &LevyTriplet) -> Result<(f64, f64)> {
    let check = p_moment_check(&t.jump, 2.0);
    if !check.finite {
        return Err(Error::VarianceUndefined(
            "∫_{|x|>1} x² μ(dx) diverges".into(),
        ));
    }
    let (large_mean, second) = match &t.jump {
        JumpSpec::None => (0.0, 0.0),
        JumpSpec::CompoundPoisson { rate, law } => (rate * law.large_mean(), rate * law.second_moment()),
        JumpSpec::GammaSubordinator { shape, rate } => (shape * (-rate).exp() / rate, shape / (rate * rate)),
        JumpSpec::Discrete { atoms } => (
            atoms.iter().filter(|(x, _)| x.abs() > 1.0).map(|(x, m)| x * m).sum(),
            atoms.iter().map(|(x, m)| x * x * m).sum(),
        ),
        JumpSpec::Density(d) => {
            let pos = quad::shells(|u| u * d.eval(u), 1.0, f64::INFINITY, 1.0, TAIL_TOL);
            let neg = quad::shells(|u| u * d.eval(-u), 1.0, f64::INFINITY, 1.0, TAIL_TOL);
            let m = pos.into_result().map_err(|e| Error::quad("large-jump mean", e))?
                - neg.into_result().map_err(|e| Error::quad("large-jump mean", e))?;
            let s = d
                .integrate(|x| x * x)
                .into_result()
                .map_err(|e| Error::quad("second moment of Lévy density", e))?;
            (m, s)
        }
    };
    Ok((t.gamma + large_mean, t.sigma2 + second))
}

/// One draw of `L(dt)`.
pub fn sample_increment<R: Rng + ?Sized>(t: &LevyTriplet, dt: f64, rng: &mut R) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive (got {dt})")));
    }
    let mut x = t.gamma * dt;
    if t.sigma2 > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        x += (t.sigma2 * dt).sqrt() * z;
    }
    match &t.jump {
        JumpSpec::None => {}
        JumpSpec::Density(_) => {
            return Err(Error::NotSampleable("density-form Lévy measure".into()));
        }
        JumpSpec::GammaSubordinator { shape, rate } => {
            let g = Gamma::new(shape * dt, 1.0 / rate)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            x += g.sample(rng) - dt * t.jump.small_jump_drift()?;
        }
        JumpSpec::CompoundPoisson { law, .. } => {
            x += poisson_sum(t.jump.total_mass().unwrap_or(0.0) * dt, rng, |r| law.sample(r))?;
            x -= dt * t.jump.small_jump_drift()?;
        }
        JumpSpec::Discrete { atoms } => {
            let total = t.jump.total_mass().unwrap_or(0.0);
            if total > 0.0 {
                x += poisson_sum(total * dt, rng, |r| {
                    let mut u = r.random::<f64>() * total;
                    for &(a, m) in atoms {
                        if u < m {
                            return a;
                        }
                        u -= m;
                    }
                    atoms[atoms.len() - 1].0
                })?;
            }
            x -= dt * t.jump.small_jump_drift()?;
        }
    }
    Ok(x)
}

fn poisson_sum<R, J>(mean: f64, rng: &mut R, mut jump: J) -> Result<f64>
where
    R: Rng + ?Sized,
    J: FnMut(&mut R) -> f64,
{
    if mean <= 0.0 {
        return Ok(0.0);
    }
    let n = Poisson::new(mean)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng) as u64;
    Ok((0..n).map(|_| jump(rng)).sum())
}
