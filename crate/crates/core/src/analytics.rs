//! Second-order structure and cumulants of supCAR(2) processes.
//!
//! The covariance of `X` at lag `τ` is `Var L(1) · ∫ C_v(τ) π(dv)`, where
//! `C_v(τ) = ∫₀^∞ g_v(s) g_v(s+τ) ds` is the covariance of one CAR(2)
//! component driven by unit-variance noise. `C_v` has a closed form for each
//! type ([`component_cov`]); the mixing integral is evaluated with
//! double-exponential rules, or analytically in the first parameter when its
//! law is a gamma law.
//!
//! [`cov_oracle`] recomputes the same quantity from the kernels alone, by
//! nested quadrature over `s` and `v`, and serves as an independent check.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernels::{self, KernelType};
use crate::levy_noise::{cumulant_l, log_moment_check, mean_var_l, LevyTriplet};
use crate::mixing::{
    ConditionReport, Measure1D, MixingSpec, PairLaw, ParamPoint, TypeTag, COND_I, COND_II_JOINT_1, COND_III_JOINT_1,
};
use crate::quad::{self, Divergence, Integral, QuadError, QuadValue, Tol};

/// Name of the noise condition in condition reports.
pub const COND_LOG_MOMENT: &str = "∫_{|x|>1} log|x| μ(dx)";

const SMOOTH_TOL: Tol = Tol::new(1e-300, 1e-11);
/// Outer tolerance over integrands that are themselves quadratures.
const NESTED_TOL: Tol = Tol::new(1e-300, 1e-9);
/// Non-finite integrand values count as zero mass where the density is
/// below this, or within this relative distance of a support end; the
/// double-exponential nodes there carry no weight at double precision.
const NEGLIGIBLE_DENSITY: f64 = 1e-200;
const END_BAND: f64 = 1e-20;

/// A supCAR(2) model: driving noise and mixing law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ProcessJson", into = "ProcessJson")]
pub struct ProcessSpec {
    pub levy: LevyTriplet,
    pub mixing: MixingSpec,
    /// Skip the existence conditions at construction.
    pub unchecked: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessJson {
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    type_tag: Option<TypeTag>,
    levy: LevyTriplet,
    mixing: MixingSpec,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    unchecked: bool,
}

impl TryFrom<ProcessJson> for ProcessSpec {
    type Error = Error;
    fn try_from(j: ProcessJson) -> Result<Self> {
        if let Some(tag) = j.type_tag {
            if tag != j.mixing.type_tag() {
                return Err(Error::InvalidParameter(format!(
                    "model type {tag} disagrees with mixing type {}",
                    j.mixing.type_tag()
                )));
            }
        }
        if j.unchecked {
            ProcessSpec::unchecked(j.levy, j.mixing)
        } else {
            ProcessSpec::new(j.levy, j.mixing)
        }
    }
}

impl From<ProcessSpec> for ProcessJson {
    fn from(p: ProcessSpec) -> Self {
        ProcessJson {
            type_tag: Some(p.mixing.type_tag()),
            levy: p.levy,
            mixing: p.mixing,
            unchecked: p.unchecked,
        }
    }
}

impl ProcessSpec {
    /// Validates parameters and requires every existence condition to pass.
    pub fn new(levy: LevyTriplet, mixing: MixingSpec) -> Result<Self> {
        let spec = Self::unchecked(levy, mixing)?;
        let report = spec.conditions();
        if !report.pass {
            return Err(Error::ConditionFailed(report.failures().join("; ")));
        }
        Ok(ProcessSpec {
            unchecked: false,
            ..spec
        })
    }

    /// Validates parameters only.
    pub fn unchecked(levy: LevyTriplet, mixing: MixingSpec) -> Result<Self> {
        levy.validate()?;
        mixing.validate()?;
        Ok(ProcessSpec {
            levy,
            mixing,
            unchecked: true,
        })
    }

    pub fn type_tag(&self) -> TypeTag {
        self.mixing.type_tag()
    }

    /// The noise log-moment condition followed by the mixing conditions.
    pub fn conditions(&self) -> ConditionReport {
        let mut report = ConditionReport::new();
        let tail = log_moment_check(&self.levy.jump);
        let integral = if tail.finite {
            Integral::Finite {
                value: tail.value,
                error: 0.0,
            }
        } else {
            Integral::Divergent(Divergence::Bound { partial: tail.value })
        };
        report.push(COND_LOG_MOMENT, integral, true);
        report.extend(self.mixing.check());
        report
    }
}

/// Covariance `C_v(τ) = ∫₀^∞ g_v(s) g_v(s+|τ|) ds` of one component.
pub fn component_cov(p: ParamPoint, tau: f64) -> f64 {
    let tau = tau.abs();
    match p {
        ParamPoint::I { a } => 2.0 / a.powi(3) * (1.0 + 0.5 * a * tau) * (-0.5 * a * tau).exp(),
        ParamPoint::II { lambda, theta } => {
            let x = lambda * (1.0 - theta) * tau;
            let phi = if x == 0.0 { 1.0 } else { -(-x).exp_m1() / x };
            (-lambda * theta * tau).exp() * (1.0 / theta + lambda * tau * phi) / (2.0 * lambda.powi(3) * (1.0 + theta))
        }
        ParamPoint::III { r, psi } => {
            let d = PI - psi;
            (-r * tau * d.cos()).exp() * (r * tau * d.sin() + d).sin() / (2.0 * r.powi(3) * (2.0 * d).sin())
        }
    }
}

/// Node budgets are spread over this many nodes; see [`node_tol`].
const NODE_BUDGET_SPREAD: f64 = 1e3;

/// Tolerance for the value of a nested integrand at a node of density `w`
/// whose quadrature cell has width about `width`: an absolute error `e`
/// there moves the outer integral by about `w·width·e`.
fn node_tol(tol: Tol, w: f64, width: f64) -> Tol {
    let weight = w * width * NODE_BUDGET_SPREAD;
    let abs = if weight > 0.0 && weight.is_finite() { tol.abs / weight } else { tol.abs };
    Tol::new(abs.max(tol.abs), tol.rel)
}

/// `E h(V)` for `V ~ m` when `h·pdf` is known to be integrable.
///
/// Double-exponential rules: exp–sinh on `(0, ∞)` for gamma laws, tanh–sinh
/// on bounded supports, with `θ = 1 − w^{1/b1}` on the upper half of a beta
/// law with `b1 < 1`. Tabulated densities use adaptive Gauss–Kronrod.
pub(crate) fn expect_smooth<T, H>(m: &Measure1D, mut h: H, tol: Tol) -> std::result::Result<T, QuadError>
where
    T: QuadValue,
    H: FnMut(f64) -> T,
{
    expect_smooth_tol(m, |x, _| h(x), tol)
}

/// [`expect_smooth`] for integrands that are themselves computed to a
/// tolerance: `h(x, t)` needs to be accurate to `t` only.
fn expect_smooth_tol<T, H>(m: &Measure1D, mut h: H, tol: Tol) -> std::result::Result<T, QuadError>
where
    T: QuadValue,
    H: FnMut(f64, Tol) -> T,
{
    if let Some(atoms) = m.atoms() {
        let mut acc = T::default();
        for (x, w) in atoms {
            let v = h(x, node_tol(tol, w, 1.0));
            if !v.is_finite_value() {
                return Err(QuadError::NonFinite { x });
            }
            acc = acc + v * w;
        }
        return Ok(acc);
    }
    let (lo, hi) = m.support();
    let near_end = |x: f64| (x - lo).abs() <= END_BAND * (1.0 + lo.abs()) || (hi - x).abs() <= END_BAND * (1.0 + hi.abs());
    let mut weighted = |x: f64, w: f64, width: f64| -> T {
        if w == 0.0 {
            return T::default();
        }
        let v = h(x, node_tol(tol, w, width));
        if !v.is_finite_value() && (w < NEGLIGIBLE_DENSITY || near_end(x)) {
            T::default()
        } else {
            v * w
        }
    };
    let width = |x: f64| (x - lo).min(hi - x);
    match m {
        Measure1D::Gamma { shape, rate } => {
            quad::exp_sinh(|x| weighted(x, m.pdf(x), width(x)), 0.0, shape / rate, tol).map(|e| e.value)
        }
        Measure1D::Beta { b0, b1 } if *b1 < 1.0 => {
            let (b0, b1) = (*b0, *b1);
            let lower = quad::tanh_sinh(|x| weighted(x, m.pdf(x), width(x)), 0.0, 0.5, tol)?.value;
            let c = 1.0 / (b1 * statrs::function::beta::beta(b0, b1));
            let theta = |w: f64| (1.0 - w.powf(1.0 / b1)).min(1.0 - f64::EPSILON / 2.0);
            let top = 0.5f64.powf(b1);
            let upper = quad::tanh_sinh(
                |w| {
                    let t = theta(w);
                    weighted(t, c * t.powf(b0 - 1.0), w.min(top - w))
                },
                0.0,
                top,
                tol,
            )?
            .value;
            Ok(lower + upper)
        }
        Measure1D::Density(_) => {
            quad::adaptive_with_budget(&mut |x| weighted(x, m.pdf(x), width(x)), lo, hi, tol, 4000).map(|e| e.value)
        }
        _ => quad::tanh_sinh(|x| weighted(x, m.pdf(x), width(x)), lo, hi, tol).map(|e| e.value),
    }
}

/// `E h(V1, V2, t)` for a pair law, nested for products.
fn expect_pair_tol<T, H>(law: &PairLaw, h: H, tol: Tol) -> std::result::Result<T, QuadError>
where
    T: QuadValue,
    H: Fn(f64, f64, Tol) -> T,
{
    match law {
        PairLaw::Joint { atoms } => {
            let mut acc = T::default();
            for &((a, b), w) in atoms {
                let v = h(a, b, node_tol(tol, w, 1.0));
                if !v.is_finite_value() {
                    return Err(QuadError::NonFinite { x: a });
                }
                acc = acc + v * w;
            }
            Ok(acc)
        }
        PairLaw::Product { first, second } => {
            let failure = RefCell::new(None);
            let value = expect_smooth_tol(
                first,
                |a, ta| match expect_smooth_tol(second, |b, tb| h(a, b, tb), ta) {
                    Ok(v) => v,
                    // overflow is resolved by the outer weight
                    Err(QuadError::NonFinite { .. }) => T::infinite(),
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        T::default()
                    }
                },
                tol,
            )?;
            match failure.into_inner() {
                Some(e) => Err(e),
                None => Ok(value),
            }
        }
    }
}

/// `E h(V)` over the mixing law, with `h` taking the parameter point.
fn expect_mixing<T, H>(mix: &MixingSpec, h: H, tol: Tol) -> std::result::Result<T, QuadError>
where
    T: QuadValue,
    H: Fn(ParamPoint) -> T,
{
    expect_mixing_tol(mix, |p, _| h(p), tol)
}

/// [`expect_mixing`] for integrands computed to a per-node tolerance.
fn expect_mixing_tol<T, H>(mix: &MixingSpec, h: H, tol: Tol) -> std::result::Result<T, QuadError>
where
    T: QuadValue,
    H: Fn(ParamPoint, Tol) -> T,
{
    match mix {
        MixingSpec::TypeI { rho } => expect_smooth_tol(rho, |a, t| h(ParamPoint::I { a }, t), tol),
        MixingSpec::TypeII(law) => expect_pair_tol(law, |lambda, theta, t| h(ParamPoint::II { lambda, theta }, t), tol),
        MixingSpec::TypeIII(law) => expect_pair_tol(law, |r, psi, t| h(ParamPoint::III { r, psi }, t), tol),
    }
}

fn divergent_variance(name: &str, i: Integral) -> Result<f64> {
    match i {
        Integral::Finite { value, .. } => Ok(value),
        Integral::Divergent(d) => Err(Error::VarianceUndefined(format!("{name} is infinite ({d})"))),
    }
}

/// `∫ C_v(0) π(dv)`: the variance of `X` per unit `Var L(1)`.
pub fn variance_factor(mix: &MixingSpec) -> Result<f64> {
    match mix {
        MixingSpec::TypeI { rho } => {
            let m = rho.m_p(-3.0);
            if m.is_finite() {
                Ok(2.0 * m)
            } else {
                Err(Error::VarianceUndefined(format!("{COND_I} is infinite")))
            }
        }
        MixingSpec::TypeII(law) => divergent_variance(
            COND_II_JOINT_1,
            law.integrate_separable(|l| l.powi(-3), |t| 1.0 / (t * (1.0 + t))),
        )
        .map(|v| 0.5 * v),
        MixingSpec::TypeIII(law) => divergent_variance(
            COND_III_JOINT_1,
            law.integrate_separable(|r| r.powi(-3), |s| 1.0 / s.cos().abs()),
        )
        .map(|v| 0.25 * v),
    }
}

/// `∫∫ g_v(s) ds π(dv)`: the mean of `X` per unit `E L(1)`.
pub fn mean_factor(mix: &MixingSpec) -> Result<f64> {
    let name = "mean integral";
    match mix {
        MixingSpec::TypeI { rho } => {
            let m = rho.m_p(-2.0);
            if m.is_finite() {
                Ok(4.0 * m)
            } else {
                Err(Error::VarianceUndefined(format!("{name} ∫ a^-2 ρ(da) is infinite")))
            }
        }
        MixingSpec::TypeII(law) => divergent_variance(name, law.integrate_separable(|l| l.powi(-2), |t| 1.0 / t)),
        MixingSpec::TypeIII(law) => divergent_variance(name, law.integrate_separable(|r| r.powi(-2), |_| 1.0)),
    }
}

/// Mean and variance of `X(0)`.
pub fn mean_var(spec: &ProcessSpec) -> Result<(f64, f64)> {
    let (el, varl) = mean_var_l(&spec.levy)?;
    let var = if varl == 0.0 { 0.0 } else { varl * variance_factor(&spec.mixing)? };
    let mean = if el == 0.0 { 0.0 } else { el * mean_factor(&spec.mixing)? };
    Ok((mean, var))
}

/// Gaussian variance of the stationary marginal: `Σ` times the variance factor.
pub fn gaussian_component(spec: &ProcessSpec) -> Result<f64> {
    if spec.levy.sigma2 == 0.0 {
        return Ok(0.0);
    }
    Ok(spec.levy.sigma2 * variance_factor(&spec.mixing)?)
}

/// How [`acf`] evaluates the mixing integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AcfMethod {
    /// Closed forms and gamma Laplace transforms where available.
    #[default]
    Auto,
    /// Always integrate `C_v(τ)` numerically over the mixing law.
    Quadrature,
}

/// `E[V^{-q} e^{-zV}]` for `V ~ Gamma(k, β)` and `Re z ≥ 0`, in logs.
fn gamma_laplace_log(k: f64, beta: f64, q: f64) -> f64 {
    k * beta.ln() + ln_gamma(k - q) - ln_gamma(k)
}

/// Mixing integral `∫ C_v(τ) π(dv)` with the first parameter integrated
/// analytically against a gamma law, when that applies.
fn mixture_cov_laplace(mix: &MixingSpec, tau: f64, tol: Tol) -> Option<Result<f64>> {
    let tau = tau.abs();
    match mix {
        MixingSpec::TypeI {
            rho: Measure1D::Gamma { shape, rate },
        } if *shape > 3.0 => {
            let (k, b) = (*shape, *rate);
            let z = 0.5 * tau;
            let l3 = (gamma_laplace_log(k, b, 3.0) - (k - 3.0) * (b + z).ln()).exp();
            let l2 = (gamma_laplace_log(k, b, 2.0) - (k - 2.0) * (b + z).ln()).exp();
            Some(Ok(2.0 * (l3 + z * l2)))
        }
        MixingSpec::TypeII(PairLaw::Product {
            first: Measure1D::Gamma { shape, rate },
            second,
        }) if *shape > 3.0 => {
            let (k, b) = (*shape, *rate);
            let alpha = k - 3.0;
            let c = 0.5 * gamma_laplace_log(k, b, 3.0).exp();
            let h = |theta: f64| {
                let x = (1.0 - theta) * tau / (b + tau);
                let phi = if x == 0.0 {
                    alpha
                } else {
                    -(alpha * (-x).ln_1p()).exp_m1() / x
                };
                (-alpha * (b + theta * tau).ln()).exp() * (1.0 / theta + phi * tau / (b + tau)) / (1.0 + theta)
            };
            Some(
                expect_smooth(second, h, tol)
                    .map(|v| c * v)
                    .map_err(|e| Error::quad("type II covariance", e)),
            )
        }
        MixingSpec::TypeIII(PairLaw::Product {
            first: Measure1D::Gamma { shape, rate },
            second,
        }) if *shape > 3.0 => {
            let (k, b) = (*shape, *rate);
            let alpha = k - 3.0;
            let c = gamma_laplace_log(k, b, 3.0).exp();
            let h = |psi: f64| {
                let d = PI - psi;
                let (re, im) = (b + tau * d.cos(), -tau * d.sin());
                let rho = re.hypot(im);
                let phi = im.atan2(re);
                (-alpha * rho.ln()).exp() * (d - alpha * phi).sin() / (2.0 * (2.0 * d).sin())
            };
            Some(
                expect_smooth(second, h, tol)
                    .map(|v| c * v)
                    .map_err(|e| Error::quad("type III covariance", e)),
            )
        }
        _ => None,
    }
}

/// `∫ C_v(τ) π(dv)`: covariance of `X` at lag `τ` per unit `Var L(1)`.
pub fn mixture_cov(mix: &MixingSpec, tau: f64, method: AcfMethod) -> Result<f64> {
    mixture_cov_tol(mix, tau, method, SMOOTH_TOL)
}

fn mixture_cov_tol(mix: &MixingSpec, tau: f64, method: AcfMethod, tol: Tol) -> Result<f64> {
    if method == AcfMethod::Auto {
        if let Some(v) = mixture_cov_laplace(mix, tau, tol) {
            return v;
        }
    }
    expect_mixing(mix, |p| component_cov(p, tau), tol).map_err(|e| Error::quad(format!("covariance at τ = {tau}"), e))
}

/// One row of an [`AcfTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcfRow {
    pub tau: f64,
    /// `NaN` when only an empirical estimate is available.
    pub r_analytic: f64,
    pub r_empirical: Option<f64>,
    pub ci_half_width: Option<f64>,
}

/// Correlation function on a lag grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfTable {
    rows: Vec<AcfRow>,
}

impl AcfTable {
    pub fn new(rows: Vec<AcfRow>) -> Result<Self> {
        for w in rows.windows(2) {
            if !(w[1].tau > w[0].tau) {
                return Err(Error::InvalidParameter(format!(
                    "lags must increase strictly ({} then {})",
                    w[0].tau, w[1].tau
                )));
            }
        }
        for row in &rows {
            if !(row.tau >= 0.0 && row.tau.is_finite()) {
                return Err(Error::InvalidParameter(format!("lag {} is not a nonnegative number", row.tau)));
            }
            if let Some(ci) = row.ci_half_width {
                if !(ci >= 0.0) {
                    return Err(Error::InvalidParameter(format!("negative interval half-width {ci}")));
                }
            }
            if row.tau == 0.0 && row.r_analytic.is_finite() && (row.r_analytic - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidParameter(format!("r(0) = {} is not 1", row.r_analytic)));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[AcfRow] {
        &self.rows
    }

    pub fn taus(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.tau).collect()
    }

    pub fn r_analytic(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.r_analytic).collect()
    }

    fn has_empirical(&self) -> bool {
        self.rows.iter().any(|r| r.r_empirical.is_some() || r.ci_half_width.is_some())
    }

    /// CSV with header `tau,r_analytic[,r_empirical,ci_half_width]`; missing
    /// optional values are empty fields.
    pub fn to_csv(&self) -> String {
        let full = self.has_empirical();
        let mut s = String::from(if full {
            "tau,r_analytic,r_empirical,ci_half_width\n"
        } else {
            "tau,r_analytic\n"
        });
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            if full {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    fmt_f64(r.tau),
                    fmt_f64(r.r_analytic),
                    opt(r.r_empirical),
                    opt(r.ci_half_width)
                );
            } else {
                let _ = writeln!(s, "{},{}", fmt_f64(r.tau), fmt_f64(r.r_analytic));
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty ACF table".into()))?;
        let full = match header.trim() {
            "tau,r_analytic" => false,
            "tau,r_analytic,r_empirical,ci_half_width" => true,
            h => return Err(Error::Parse(format!("unexpected ACF header {h:?}"))),
        };
        let width = if full { 4 } else { 2 };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(Error::Parse(format!("line {}: expected {width} fields", i + 2)));
            }
            let num = |f: &str| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {f:?}: {e}", i + 2)))
            };
            let opt = |f: &str| if f.trim().is_empty() { Ok(None) } else { num(f).map(Some) };
            rows.push(AcfRow {
                tau: num(fields[0])?,
                r_analytic: num(fields[1])?,
                r_empirical: if full { opt(fields[2])? } else { None },
                ci_half_width: if full { opt(fields[3])? } else { None },
            });
        }
        AcfTable::new(rows)
    }
}

/// Seventeen significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_taus(taus: &[f64]) -> Result<()> {
    for w in taus.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter("lags must increase strictly".into()));
        }
    }
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter(format!("lag {t} is not a nonnegative number")));
    }
    Ok(())
}

/// Correlation function `r(τ)` of `X` on increasing nonnegative lags.
pub fn acf(spec: &ProcessSpec, taus: &[f64]) -> Result<AcfTable> {
    acf_with(spec, taus, AcfMethod::Auto)
}

pub fn acf_with(spec: &ProcessSpec, taus: &[f64], method: AcfMethod) -> Result<AcfTable> {
    check_taus(taus)?;
    mean_var(spec)?;
    let values = acf_values(&spec.mixing, taus, method)?;
    let rows = taus
        .iter()
        .zip(values)
        .map(|(&tau, r)| AcfRow {
            tau,
            r_analytic: r,
            r_empirical: None,
            ci_half_width: None,
        })
        .collect();
    AcfTable::new(rows)
}

/// Correlations from the mixing law alone; `r(0) = 1` exactly.
pub fn acf_values(mix: &MixingSpec, taus: &[f64], method: AcfMethod) -> Result<Vec<f64>> {
    if method == AcfMethod::Auto {
        if let MixingSpec::TypeI {
            rho: Measure1D::Gamma { shape, rate },
        } = mix
        {
            if *shape > 3.0 {
                return Ok(taus.iter().map(|t| acf_closed_gamma_I(shape - 3.0, t.abs() / rate)).collect());
            }
        }
    }
    let den = mixture_cov_tol(mix, 0.0, method, SMOOTH_TOL)?;
    if !(den > 0.0 && den.is_finite()) {
        return Err(Error::VarianceUndefined(format!("variance factor {den}")));
    }
    let tol = Tol::new(1e-13 * den, 1e-11);
    taus.par_iter()
        .map(|&tau| {
            if tau == 0.0 {
                Ok(1.0)
            } else {
                mixture_cov_tol(mix, tau, method, tol).map(|c| c / den)
            }
        })
        .collect()
}

/// Closed-form correlation for type I with `ρ = Gamma(α+3, 1)`.
#[allow(non_snake_case)]
pub fn acf_closed_gamma_I(alpha: f64, tau: f64) -> f64 {
    let tau = tau.abs();
    (alpha * 2f64.ln() - (alpha + 1.0) * (tau + 2.0).ln()).exp() * (alpha * tau + tau + 2.0)
}

/// Covariance at lag `τ` by nested quadrature of the kernels themselves.
///
/// The inner integral runs in the scaled variable `t = c s`, where `c` is
/// the envelope decay rate; components that oscillate too fast for it fall
/// back to the stationary solution of the Lyapunov equation.
pub fn cov_oracle(spec: &ProcessSpec, tau: f64) -> Result<f64> {
    let (_, varl) = mean_var_l(&spec.levy)?;
    let tau = tau.abs();
    let failure = RefCell::new(None);
    let v = expect_mixing(
        &spec.mixing,
        |p| match component_cov_oracle(p, tau) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        Tol::new(1e-12 * variance_factor(&spec.mixing)?, NESTED_TOL.rel),
    )
    .map_err(|e| Error::quad("oracle mixing integral", e))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(varl * v)
}

/// Oscillations per unit of scaled time beyond which the oracle uses the
/// Lyapunov solution.
const ORACLE_MAX_TAN: f64 = 10.0;

fn component_cov_oracle(p: ParamPoint, tau: f64) -> Result<f64> {
    let k = KernelType::from(p);
    let c = p.decay_rate();
    if let ParamPoint::III { psi, .. } = p {
        if (PI - psi).tan() > ORACLE_MAX_TAN {
            return lyapunov_cov(k, tau);
        }
    }
    let scale = 1.0 / c;
    let t_max = 40.0 + 2.0 * scale.ln().max(0.0);
    // c·g is bounded for every type; the s-integral is scale³·∫ (c g)(c g) dt
    let cg = |t: f64| c * k.eval(t * scale);
    let f = |t: f64| cg(t) * c * k.eval(t * scale + tau);
    let peak = [0.1, 1.0, 2.0].map(|t| cg(t).abs()).into_iter().fold(0.0, f64::max);
    let tol = Tol::new((1e-14 * peak * peak).max(1e-300), 1e-11);
    let total = match quad::adaptive_breaks(&mut |t| f(t), &lag_breaks(p, t_max), tol, 8000) {
        Ok(e) => e.value,
        Err(QuadError::NonFinite { .. }) => return Ok(f64::INFINITY),
        // extreme parameters at the ends of the mixing support
        Err(QuadError::NonConvergence { .. }) => return lyapunov_cov(k, tau),
        Err(e) => return Err(Error::quad("oracle lag integral", e)),
    };
    Ok(total * scale.powi(3))
}

/// Break points in scaled time: type II kernels rise on `s ~ 1/(λ(1−θ))`,
/// much faster than they decay when `θ` is small; type III kernels get one
/// piece per oscillation.
fn lag_breaks(p: ParamPoint, t_max: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    match p {
        ParamPoint::II { theta, .. } => {
            let rise = theta / (1.0 - theta);
            for m in [1.0, 5.0, 40.0] {
                if m * rise < t_max {
                    breaks.push(m * rise);
                }
            }
        }
        ParamPoint::III { psi, .. } => {
            let period = 2.0 * PI / psi.tan().abs();
            let n = (t_max / period).ceil().min(4096.0) as usize;
            breaks.extend((1..n).map(|i| t_max * i as f64 / n as f64));
        }
        ParamPoint::I { .. } => {}
    }
    breaks.push(t_max);
    breaks
}

/// `(e^{Aτ})₁₁ / (2 a₁ a₂)`, the stationary lag-`τ` covariance of the first
/// state coordinate.
fn lyapunov_cov(k: KernelType, tau: f64) -> Result<f64> {
    let p = k.car2()?;
    let a: DMatrix<f64> = p.companion() * tau;
    let e = kernels::expm(&a)?;
    Ok(e[(0, 0)] / (2.0 * p.a1 * p.a2))
}

/// Absolute accuracy of [`cumulant_x`] relative to `ζ|E L| + ζ² Var L`
/// times the variance factor.
const CUMULANT_FLOOR: f64 = 1e-10;

/// Cumulant `κ_X(ζ) = log E e^{iζX(0)}`.
pub fn cumulant_x(spec: &ProcessSpec, zeta: f64) -> Result<Complex64> {
    if zeta == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    // absolute floor from the second-order scale when it exists
    let tol = match (variance_factor(&spec.mixing), mean_var_l(&spec.levy)) {
        (Ok(vf), Ok((el, varl))) => {
            let z = zeta.abs();
            Tol::new((CUMULANT_FLOOR * vf * (z * el.abs() + z * z * varl)).max(1e-300), NESTED_TOL.rel)
        }
        _ => NESTED_TOL,
    };
    let failure = RefCell::new(None);
    let v = expect_mixing_tol(
        &spec.mixing,
        |p, t| match cumulant_component(&spec.levy, p, zeta, t.abs) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        },
        tol,
    )
    .map_err(|e| Error::quad("cumulant mixing integral", e))?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Oscillations per unit of scaled time from which type III lag integrals
/// are summed period by period.
const LATTICE_MIN_FREQ: f64 = 128.0;

/// Gregory end corrections for `Σ_{k≥0} f(kh) − (1/h)∫₀^∞ f`, applied to
/// forward differences at the origin.
const GREGORY: [f64; 8] = [
    1.0 / 2.0,
    -1.0 / 12.0,
    1.0 / 24.0,
    -19.0 / 720.0,
    3.0 / 160.0,
    -863.0 / 60480.0,
    275.0 / 24192.0,
    -33953.0 / 3628800.0,
];

/// `∫₀^∞ κ_L(ζ g_v(s)) ds`.
fn cumulant_component(levy: &LevyTriplet, p: ParamPoint, zeta: f64, abs_tol: f64) -> Result<Complex64> {
    let k = KernelType::from(p);
    let c = p.decay_rate();
    let scale = 1.0 / c;
    let t_max = 40.0 + 2.0 * scale.ln().max(0.0) + zeta.abs().ln().max(0.0);
    let z = zeta.abs();
    let floor = 1e-16 * (z * scale * scale + z * z * scale.powi(3));
    let tol = Tol::new(floor.max(abs_tol).max(1e-280), 1e-12);
    if let ParamPoint::III { psi, .. } = p {
        let freq = psi.tan().abs();
        if freq >= LATTICE_MIN_FREQ {
            return cumulant_lattice(levy, k, zeta, scale, 2.0 * PI / freq, tol);
        }
    }
    let failure = RefCell::new(None);
    let mut f = |t: f64| match cumulant_l(zeta * k.eval(t * scale), levy) {
        Ok(v) => v * scale,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            Complex64::new(0.0, 0.0)
        }
    };
    let total = match quad::adaptive_breaks(&mut f, &lag_breaks(p, t_max), tol, 8000) {
        Ok(e) => e.value,
        Err(QuadError::NonFinite { .. }) => return Ok(Complex64::new(f64::INFINITY, 0.0)),
        Err(e) => return Err(Error::quad("cumulant lag integral", e)),
    };
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Fast-oscillating type III lag integral. In scaled time the kernel obeys
/// `g(t + kh) = e^{−kh} g(t)` for the period `h`, so the integral is the
/// lattice sum `Σ_k P(kh)` of the smooth one-period integral
/// `P(t) = ∫₀^h κ_L(ζ e^{−t} g(u)) du`, evaluated by Gregory's formula.
fn cumulant_lattice(
    levy: &LevyTriplet,
    k: KernelType,
    zeta: f64,
    scale: f64,
    h: f64,
    tol: Tol,
) -> Result<Complex64> {
    let failure = RefCell::new(None);
    let period = |t: f64| -> Complex64 {
        let amp = zeta * (-t).exp();
        let mut f = |u: f64| match cumulant_l(amp * k.eval(u * scale), levy) {
            Ok(v) => v * scale,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        };
        match quad::adaptive_with_budget(&mut f, 0.0, h, Tol::new(tol.abs * h, 1e-13), 2000) {
            Ok(e) => e.value,
            Err(e) => {
                failure
                    .borrow_mut()
                    .get_or_insert(Error::quad("cumulant period integral", e));
                Complex64::new(f64::NAN, 0.0)
            }
        }
    };
    let integral = quad::exp_sinh(|t| period(t), 0.0, 1.0, Tol::new(tol.abs * h, tol.rel))
        .map_err(|e| Error::quad("cumulant lattice integral", e))?
        .value;
    let mut diffs: Vec<Complex64> = (0..GREGORY.len()).map(|j| period(j as f64 * h)).collect();
    let mut total = integral / h;
    for coef in GREGORY {
        total += diffs[0] * coef;
        for j in 0..diffs.len() - 1 {
            diffs[j] = diffs[j + 1] - diffs[j];
        }
        diffs.pop();
    }
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// The three families with a known power-law correlation tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AsymptoticFamily {
    /// Type I, `ρ = Gamma(α+3, 1)`.
    GammaI { alpha: f64 },
    /// Type II, `λ ~ Gamma(α+3, 1)` independent of `θ ~ Beta(β₀, β₁)`.
    GammaBetaII { alpha: f64, b0: f64, b1: f64 },
    /// Type III, `r ~ Gamma(α+3, 1)` independent of `ψ ~ sin2`.
    GammaSin2III { alpha: f64 },
}

impl AsymptoticFamily {
    /// Recognizes the family of a mixing law.
    pub fn of(mix: &MixingSpec) -> Result<Self> {
        let unit_gamma = |m: &Measure1D| match m {
            Measure1D::Gamma { shape, rate } if *rate == 1.0 && *shape > 3.0 => Some(shape - 3.0),
            _ => None,
        };
        let none = || Error::NoClosedAsymptotic(format!("{mix:?}"));
        match mix {
            MixingSpec::TypeI { rho } => unit_gamma(rho).map(|alpha| AsymptoticFamily::GammaI { alpha }).ok_or_else(none),
            MixingSpec::TypeII(PairLaw::Product {
                first,
                second: Measure1D::Beta { b0, b1 },
            }) => unit_gamma(first)
                .map(|alpha| AsymptoticFamily::GammaBetaII {
                    alpha,
                    b0: *b0,
                    b1: *b1,
                })
                .ok_or_else(none),
            MixingSpec::TypeIII(PairLaw::Product {
                first,
                second: Measure1D::Sin2,
            }) => unit_gamma(first)
                .map(|alpha| AsymptoticFamily::GammaSin2III { alpha })
                .ok_or_else(none),
            _ => Err(none()),
        }
    }
}

/// `(α, C)` with `r(τ) ~ C τ^{−α}` as `τ → ∞`.
pub fn asymptotic_constant(family: AsymptoticFamily) -> Result<(f64, f64)> {
    match family {
        AsymptoticFamily::GammaI { alpha } => {
            positive_alpha(alpha)?;
            Ok((alpha, 2f64.powf(alpha) * (alpha + 1.0)))
        }
        AsymptoticFamily::GammaSin2III { alpha } => {
            positive_alpha(alpha)?;
            Ok((alpha, (1.0 + (0.5 * alpha * PI).sin()) / (1.0 + alpha)))
        }
        AsymptoticFamily::GammaBetaII { alpha, b0, b1 } => {
            positive_alpha(alpha)?;
            if !(b0 > alpha + 1.0 && b1 > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "need β₀ > α + 1 and β₁ > 0 (got β₀ = {b0}, β₁ = {b1}, α = {alpha})"
                )));
            }
            Ok((alpha, type2_tail_constant(alpha, b0, b1)?))
        }
    }
}

fn positive_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("α must be positive (got {alpha})")))
    }
}

/// `∫ θ^{β₀−1}(1−θ)^{β₁−2}(θ^{−(α+1)} − 1)/(1+θ) dθ` divided by the
/// variance integral `∫ θ^{β₀−2}(1−θ)^{β₁−1}/(1+θ) dθ`.
fn type2_tail_constant(alpha: f64, b0: f64, b1: f64) -> Result<f64> {
    let tol = Tol::new(1e-300, 1e-12);
    // (θ^{−(α+1)} − 1)/(1−θ) near θ = 1, from w = 1 − θ
    let q = |w: f64| (-(alpha + 1.0) * (-w).ln_1p()).exp_m1() / w;
    let num_lo = |t: f64| (t.powf(b0 - alpha - 2.0) - t.powf(b0 - 1.0)) * (1.0 - t).powf(b1 - 2.0) / (1.0 + t);
    let num_hi = |w: f64| {
        let t = 1.0 - w;
        t.powf(b0 - 1.0) * w.powf(b1 - 1.0) * q(w) / (2.0 - w)
    };
    let den_lo = |t: f64| t.powf(b0 - 2.0) * (1.0 - t).powf(b1 - 1.0) / (1.0 + t);
    let den_hi = |w: f64| (1.0 - w).powf(b0 - 2.0) * w.powf(b1 - 1.0) / (2.0 - w);
    let run = |f: &dyn Fn(f64) -> f64| {
        quad::tanh_sinh(f, 0.0, 0.5, tol)
            .map(|e| e.value)
            .map_err(|e| Error::quad("type II tail constant", e))
    };
    let num = run(&num_lo)? + run(&num_hi)?;
    let den = run(&den_lo)? + run(&den_hi)?;
    Ok(num / den)
}

/// `J(θ) = B(pθ/(1−θ), p+1)/(1−θ)`.
pub fn j_theta(p: f64, theta: f64) -> f64 {
    let x = p * theta / (1.0 - theta);
    (ln_gamma(x) + ln_gamma(p + 1.0) - ln_gamma(x + p + 1.0)).exp() / (1.0 - theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_noise::{JumpLaw, JumpSpec};
    use proptest::prelude::*;
    use std::f64::consts::{E, SQRT_2};

    fn gauss(gamma: f64, sigma2: f64) -> LevyTriplet {
        LevyTriplet::gaussian(gamma, sigma2)
    }

    fn spec(levy: LevyTriplet, mix: MixingSpec) -> ProcessSpec {
        ProcessSpec::new(levy, mix).unwrap()
    }

    fn t1(rho: Measure1D) -> ProcessSpec {
        spec(gauss(0.0, 1.0), MixingSpec::type1(rho).unwrap())
    }

    fn t3_dirac() -> ProcessSpec {
        spec(
            gauss(1.0, 1.0),
            MixingSpec::type3(Measure1D::dirac(1.0), Measure1D::dirac(0.75 * PI)).unwrap(),
        )
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mean_var_examples() {
        let (m, v) = mean_var(&t1(Measure1D::dirac(2.0))).unwrap();
        assert_eq!(m, 0.0);
        assert!(close(v, 0.25, 1e-15));
        let (_, v) = mean_var(&t1(Measure1D::gamma(4.0, 1.0))).unwrap();
        assert!(close(v, 1.0 / 3.0, 1e-12));
        let (m, _) = mean_var(&t3_dirac()).unwrap();
        assert!(close(m, 1.0, 1e-15));
    }

    #[test]
    fn mean_var_reports_infinite_variance() {
        let s = ProcessSpec::unchecked(gauss(0.0, 1.0), MixingSpec::type1(Measure1D::gamma(2.0, 1.0)).unwrap()).unwrap();
        let err = mean_var(&s).unwrap_err().to_string();
        assert!(err.contains(COND_I), "{err}");
    }

    #[test]
    fn variance_matches_oracle_quadrature_of_kernel_square() {
        // ∫ g1(2, s)² ds = ∫ s² e^{-2s} ds = 1/4
        let v = quad::adaptive(|s: f64| s * s * (-2.0 * s).exp(), 0.0, 60.0, Tol::new(1e-15, 1e-13))
            .unwrap()
            .value;
        assert!(close(v, 0.25, 1e-12));
    }

    #[test]
    fn acf_examples() {
        let t = acf(&t1(Measure1D::dirac(2.0)), &[0.0, 1.0]).unwrap();
        assert_eq!(t.rows()[0].r_analytic, 1.0);
        assert!(close(t.rows()[1].r_analytic, 2.0 / E, 1e-14));
        let t = acf(&t1(Measure1D::gamma(4.0, 1.0)), &[2.0]).unwrap();
        assert!(close(t.rows()[0].r_analytic, 0.75, 1e-14));
        let tau = PI * SQRT_2;
        let t = acf(&t3_dirac(), &[tau]).unwrap();
        assert!(close(t.rows()[0].r_analytic, -(-PI).exp(), 1e-12));
    }

    #[test]
    fn acf_gamma_type1_quadrature_matches_closed_form() {
        let s = t1(Measure1D::gamma(4.0, 1.0));
        let taus: Vec<f64> = (0..20).map(|i| i as f64 * 2.5).collect();
        let q = acf_with(&s, &taus, AcfMethod::Quadrature).unwrap();
        for (tau, r) in taus.iter().zip(q.r_analytic()) {
            assert!(close(r, acf_closed_gamma_I(1.0, *tau), 1e-9), "τ = {tau}: {r}");
        }
    }

    #[test]
    fn gamma_rate_rescales_lag() {
        let s = t1(Measure1D::gamma(4.5, 2.0));
        let q = acf_with(&s, &[0.0, 1.0, 3.0], AcfMethod::Quadrature).unwrap();
        let c = acf(&s, &[0.0, 1.0, 3.0]).unwrap();
        for (a, b) in q.r_analytic().iter().zip(c.r_analytic()) {
            assert!(close(*a, b, 1e-9));
        }
    }

    #[test]
    fn laplace_paths_match_quadrature() {
        let mixes = [
            MixingSpec::type2(Measure1D::gamma(4.5, 1.5), Measure1D::beta(3.0, 2.0)).unwrap(),
            MixingSpec::type2(Measure1D::gamma(4.0, 1.0), Measure1D::beta(2.5, 0.6)).unwrap(),
            MixingSpec::type3(Measure1D::gamma(5.0, 1.0), Measure1D::Sin2).unwrap(),
            MixingSpec::type3(Measure1D::gamma(4.0, 2.0), Measure1D::uniform(0.6 * PI, 0.9 * PI)).unwrap(),
        ];
        let taus = [0.0, 0.5, 2.0, 7.0, 20.0];
        for mix in &mixes {
            let a = acf_values(mix, &taus, AcfMethod::Auto).unwrap();
            let b = acf_values(mix, &taus, AcfMethod::Quadrature).unwrap();
            for i in 0..taus.len() {
                assert!(close(a[i], b[i], 1e-8), "{mix:?} τ = {}: {} vs {}", taus[i], a[i], b[i]);
            }
        }
    }

    #[test]
    fn oracle_agrees_with_analytic_covariance() {
        let specs = [
            t1(Measure1D::dirac(2.0)),
            t1(Measure1D::gamma(4.0, 1.0)),
            t1(Measure1D::uniform(0.5, 2.0)),
            spec(
                gauss(0.0, 1.0),
                MixingSpec::type2(Measure1D::dirac(1.0), Measure1D::dirac(0.5)).unwrap(),
            ),
            spec(
                gauss(0.0, 2.0),
                MixingSpec::type2(Measure1D::gamma(5.0, 1.0), Measure1D::beta(3.0, 2.0)).unwrap(),
            ),
            spec(
                gauss(0.0, 1.0),
                MixingSpec::type3(Measure1D::gamma(4.5, 1.0), Measure1D::Sin2).unwrap(),
            ),
            t3_dirac(),
        ];
        for s in &specs {
            let (_, var) = mean_var(s).unwrap();
            let taus: Vec<f64> = (0..20).map(|i| i as f64 * 20.0 / 19.0).collect();
            let r = acf(s, &taus).unwrap().r_analytic();
            let oracle: Vec<f64> = taus.par_iter().map(|t| cov_oracle(s, *t).unwrap()).collect();
            for ((tau, r), o) in taus.iter().zip(r).zip(oracle) {
                assert!((r * var - o).abs() <= 1e-6 * var, "{:?} τ = {tau}: {} vs {o}", s.mixing, r * var);
                assert!(r.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn lyapunov_fallback_matches_closed_form() {
        let p = ParamPoint::III { r: 1.0, psi: 0.5 * PI + 0.004 };
        for tau in [0.0, 0.3, 2.0, 9.0] {
            let l = lyapunov_cov(KernelType::from(p), tau).unwrap();
            let c = component_cov(p, tau);
            assert!((l - c).abs() <= 1e-9 * component_cov(p, 0.0), "τ = {tau}: {l} vs {c}");
        }
    }

    #[test]
    fn type3_dirac_goes_negative_before_two_pi() {
        let taus: Vec<f64> = (1..200).map(|i| i as f64 * 2.0 * PI / 200.0).collect();
        let r = acf(&t3_dirac(), &taus).unwrap().r_analytic();
        assert!(r.iter().any(|v| *v < 0.0));
    }

    #[test]
    fn closed_gamma_examples() {
        for alpha in [0.3, 1.0, 4.0] {
            assert!(close(acf_closed_gamma_I(alpha, 0.0), 1.0, 1e-15));
        }
        assert!(close(acf_closed_gamma_I(1.0, 2.0), 0.75, 1e-15));
        let tau: f64 = 1e4;
        let approx = SQRT_2 * 1.5 * tau.powf(-0.5);
        assert!((acf_closed_gamma_I(0.5, tau) / approx - 1.0).abs() < 1e-3);
    }

    #[test]
    fn long_memory_integral_growth() {
        let integral = |alpha: f64, t_end: f64| {
            let n = 200_000;
            let h = t_end / n as f64;
            let mut s = 0.5 * (acf_closed_gamma_I(alpha, 0.0) + acf_closed_gamma_I(alpha, t_end));
            for i in 1..n {
                s += acf_closed_gamma_I(alpha, i as f64 * h);
            }
            s * h
        };
        // growth between decades: A·T^{1/2} + B has increments in ratio √10
        let i = [1e2, 1e3, 1e4].map(|t| integral(0.5, t));
        let ratio = (i[2] - i[1]) / (i[1] - i[0]);
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.1, "ratio {ratio}");
        let j = [1e2, 1e3, 1e4].map(|t| integral(2.0, t));
        assert!((j[2] - j[1]).abs() < 0.01 * j[1]);
        // ∫₀^∞ r = 4/(α−1)
        assert!((j[2] - 4.0).abs() < 0.01);
    }

    #[test]
    fn cumulant_examples() {
        let s = t1(Measure1D::dirac(1.0));
        assert_eq!(cumulant_x(&s, 0.0).unwrap(), Complex64::new(0.0, 0.0));
        let k = cumulant_x(&s, 1.0).unwrap();
        assert!(close(k.re, -1.0, 1e-10) && k.im.abs() < 1e-12, "{k}");
    }

    fn fd_moments(s: &ProcessSpec) -> (f64, f64) {
        let d1 = |h: f64| (cumulant_x(s, h).unwrap() - cumulant_x(s, -h).unwrap()) / (2.0 * h);
        let d2 = |h: f64| (cumulant_x(s, h).unwrap() + cumulant_x(s, -h).unwrap()) / (h * h);
        let h = 0.02;
        let m = (4.0 * d1(h / 2.0) - d1(h)) / 3.0;
        let v = (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
        (m.im, -v.re)
    }

    #[test]
    fn cumulant_derivatives_give_moments() {
        let cp = LevyTriplet::new(
            0.3,
            0.5,
            JumpSpec::CompoundPoisson {
                rate: 2.0,
                law: JumpLaw::Normal { mean: 0.5, sd: 0.7 },
            },
        )
        .unwrap();
        let s = spec(cp, MixingSpec::type2(Measure1D::gamma(5.0, 1.0), Measure1D::beta(3.0, 2.0)).unwrap());
        let (m, v) = mean_var(&s).unwrap();
        let (fm, fv) = fd_moments(&s);
        assert!((fm / m - 1.0).abs() < 1e-5, "{fm} vs {m}");
        assert!((fv / v - 1.0).abs() < 1e-5, "{fv} vs {v}");
    }

    #[test]
    fn gaussian_component_examples() {
        let s = spec(gauss(0.0, 0.0), MixingSpec::type1(Measure1D::gamma(4.0, 1.0)).unwrap());
        assert_eq!(gaussian_component(&s).unwrap(), 0.0);
        assert!(close(gaussian_component(&t1(Measure1D::gamma(4.0, 1.0))).unwrap(), 1.0 / 3.0, 1e-12));
        let s = spec(
            gauss(0.0, 2.0),
            MixingSpec::type3(Measure1D::dirac(1.0), Measure1D::dirac(0.75 * PI)).unwrap(),
        );
        assert!(close(gaussian_component(&s).unwrap(), 0.5 * SQRT_2, 1e-12));
    }

    #[test]
    fn asymptotic_examples() {
        assert_eq!(asymptotic_constant(AsymptoticFamily::GammaI { alpha: 1.0 }).unwrap(), (1.0, 4.0));
        let (_, c) = asymptotic_constant(AsymptoticFamily::GammaSin2III { alpha: 1.0 }).unwrap();
        assert!(close(c, 1.0, 1e-15));
        let mix = MixingSpec::type2(Measure1D::gamma(3.5, 1.0), Measure1D::beta(2.0, 1.0)).unwrap();
        let fam = AsymptoticFamily::of(&mix).unwrap();
        let (alpha, c) = asymptotic_constant(fam).unwrap();
        let tau: f64 = 1e3;
        let r = acf_values(&mix, &[tau], AcfMethod::Auto).unwrap()[0];
        assert!((tau.powf(alpha) * r / c - 1.0).abs() < 0.05, "{} vs {c}", tau.powf(alpha) * r);
    }

    #[test]
    fn asymptotic_rejects_other_families() {
        let mix = MixingSpec::type1(Measure1D::uniform(1.0, 2.0)).unwrap();
        assert!(matches!(AsymptoticFamily::of(&mix), Err(Error::NoClosedAsymptotic(_))));
    }

    #[test]
    fn j_theta_examples() {
        assert!(close(j_theta(1.0, 0.5), 1.0, 1e-13));
        let direct = quad::adaptive(|u: f64| (-u / 2.0).exp() - (-u).exp(), 0.0, 80.0, Tol::new(1e-15, 1e-13))
            .unwrap()
            .value;
        assert!(close(direct, 1.0, 1e-12));
        for p in [0.5, 1.0, 3.0] {
            let t = 1e-6;
            assert!((t * j_theta(p, t) * p - 1.0).abs() < 1e-4);
            let (near, far) = (j_theta(p, 1.0 - 1e-4), j_theta(p, 1.0 - 1e-2));
            assert!(near < far && near < 0.05, "{near} {far}");
        }
    }

    #[test]
    fn process_json_round_trip_and_tag_agreement() {
        let s = t1(Measure1D::gamma(4.0, 1.0));
        let j = serde_json::to_string(&s).unwrap();
        let back: ProcessSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), j);
        let bad = j.replace("\"type\":\"I\",\"levy\"", "\"type\":\"II\",\"levy\"");
        assert_ne!(bad, j);
        assert!(serde_json::from_str::<ProcessSpec>(&bad).is_err());
        let extra = j.replacen('{', "{\"extra\":1,", 1);
        assert!(serde_json::from_str::<ProcessSpec>(&extra).is_err());
    }

    #[test]
    fn construction_enforces_conditions() {
        let mix = MixingSpec::type1(Measure1D::gamma(2.0, 1.0)).unwrap();
        assert!(matches!(ProcessSpec::new(gauss(0.0, 1.0), mix.clone()), Err(Error::ConditionFailed(_))));
        assert!(ProcessSpec::unchecked(gauss(0.0, 1.0), mix).is_ok());
    }

    #[test]
    fn acf_csv_round_trip() {
        let t = AcfTable::new(vec![
            AcfRow {
                tau: 0.0,
                r_analytic: 1.0,
                r_empirical: Some(0.999_999_999_999_9),
                ci_half_width: Some(0.0),
            },
            AcfRow {
                tau: 0.1,
                r_analytic: 1.0 / 3.0,
                r_empirical: None,
                ci_half_width: None,
            },
        ])
        .unwrap();
        assert_eq!(AcfTable::from_csv(&t.to_csv()).unwrap(), t);
        let a = acf(&t1(Measure1D::gamma(4.0, 1.0)), &[0.0, 0.7, 3.0]).unwrap();
        assert!(a.to_csv().starts_with("tau,r_analytic\n"));
        assert_eq!(AcfTable::from_csv(&a.to_csv()).unwrap(), a);
    }

    #[test]
    fn table_rejects_unsorted_lags() {
        let row = |tau| AcfRow {
            tau,
            r_analytic: 0.5,
            r_empirical: None,
            ci_half_width: None,
        };
        assert!(AcfTable::new(vec![row(1.0), row(1.0)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn csv_round_trips_any_values(v in prop::collection::vec(-1e6f64..1e6, 1..20)) {
            let rows: Vec<AcfRow> = v
                .iter()
                .enumerate()
                .map(|(i, x)| AcfRow { tau: 1.0 + i as f64 * 0.37, r_analytic: *x, r_empirical: Some(x / 3.0), ci_half_width: None })
                .collect();
            let t = AcfTable::new(rows).unwrap();
            prop_assert_eq!(AcfTable::from_csv(&t.to_csv()).unwrap(), t);
        }

        #[test]
        fn dirac_correlations_bounded(a in 0.1f64..10.0, tau in 0.0f64..50.0) {
            let r = component_cov(ParamPoint::I { a }, tau) / component_cov(ParamPoint::I { a }, 0.0);
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn component_cov_matches_lyapunov(lambda in 0.2f64..5.0, theta in 0.05f64..0.95, tau in 0.0f64..10.0) {
            let p = ParamPoint::II { lambda, theta };
            let l = lyapunov_cov(KernelType::from(p), tau).unwrap();
            let c = component_cov(p, tau);
            prop_assert!((l - c).abs() <= 1e-9 * component_cov(p, 0.0));
        }
    }
}
