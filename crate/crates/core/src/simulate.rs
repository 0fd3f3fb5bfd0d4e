//! Path simulation by finite superposition.
//!
//! The mixing law is replaced by finitely many atoms `(v_k, p_k)`. Each atom
//! drives an independent CAR(2) state `X_k` with a Lévy process of triplet
//! `p_k·(γ, Σ, μ)`, advanced by the exact propagator
//! `X_k(t+dt) = e^{A_k dt} X_k(t) + e ΔL_k`, and the output is `Σ_k X_k,1`.
//!
//! Every `(path, atom)` pair owns its own random stream, and atoms are summed
//! in a fixed order, so results do not depend on the thread count.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{acf, acf_values, fmt_f64, AcfMethod, AcfRow, AcfTable, ProcessSpec};
use crate::error::{Error, Result};
use crate::kernels::{self, KernelType};
use crate::levy_noise::{rng_stream, sample_increment, LevyTriplet};
use crate::mixing::{Measure1D, MixingSpec, PairLaw, ParamPoint};
use crate::quad::{self, Tol};

/// Grid steps allowed for one path.
pub const MAX_STEPS: f64 = 1e8;

/// How continuous mixing factors are replaced by atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Cells of equal mass, each represented by its conditional median.
    QuantileMedian,
    /// Cells of equal variance contribution; each atom keeps its cell's mass
    /// and reproduces the cell's variance contribution exactly.
    #[default]
    VarianceWeighted,
}

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub n_atoms: usize,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Discretization,
}

impl SimConfig {
    /// Settings with the burn-in left at zero; see [`SimConfig::default_burn_in`].
    pub fn new(dt: f64, horizon: f64, n_atoms: usize, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            burn_in: 0.0,
            n_atoms,
            n_paths,
            seed,
            scheme: Discretization::default(),
        }
    }

    pub fn with_burn_in(self, burn_in: f64) -> Self {
        Self { burn_in, ..self }
    }

    /// `10 / min_k c_k` over the atoms of the discretized mixing law.
    pub fn default_burn_in(&self, spec: &ProcessSpec) -> Result<f64> {
        let atoms = discretize_mixing_with(&spec.mixing, self.n_atoms, self.scheme)?;
        Ok(10.0 / min_decay(&atoms))
    }

    /// Errors for invalid settings; warnings for a short burn-in.
    pub fn validate(&self, atoms: &[(ParamPoint, f64)]) -> Result<Vec<String>> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive (got {})", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive (got {})", self.horizon)));
        }
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(Error::InvalidParameter(format!("burn-in must be nonnegative (got {})", self.burn_in)));
        }
        if (self.horizon + self.burn_in) / self.dt > MAX_STEPS {
            return Err(Error::InvalidParameter(format!("more than {MAX_STEPS:e} steps per path")));
        }
        if self.n_atoms == 0 || self.n_paths == 0 {
            return Err(Error::InvalidParameter("n_atoms and n_paths must be at least 1".into()));
        }
        let mut warnings = Vec::new();
        let advised = 10.0 / min_decay(atoms);
        if self.burn_in < advised {
            warnings.push(format!(
                "burn-in {} is shorter than 10/min decay rate = {advised}",
                self.burn_in
            ));
        }
        Ok(warnings)
    }
}

fn min_decay(atoms: &[(ParamPoint, f64)]) -> f64 {
    atoms.iter().map(|(p, _)| p.decay_rate()).fold(f64::INFINITY, f64::min)
}

/// Simulated paths on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub times: Vec<f64>,
    /// One vector per path.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
    /// SHA-256 of the model and settings.
    pub spec_fingerprint: String,
    pub dt: f64,
}

impl PathSet {
    /// CSV with header `t,path_0,…,path_{n−1}`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 0..self.values.len() {
            let _ = write!(s, ",path_{i}");
        }
        s.push('\n');
        for (j, t) in self.times.iter().enumerate() {
            s.push_str(&fmt_f64(*t));
            for path in &self.values {
                s.push(',');
                s.push_str(&fmt_f64(path[j]));
            }
            s.push('\n');
        }
        s
    }

    /// Times and per-path values from [`PathSet::to_csv`] output.
    pub fn parse_csv(text: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty path table".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"t") || cols.iter().skip(1).enumerate().any(|(i, c)| *c != format!("path_{i}")) {
            return Err(Error::Parse(format!("unexpected path header {header:?}")));
        }
        let n = cols.len() - 1;
        let mut times = Vec::new();
        let mut values = vec![Vec::new(); n];
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n + 1 {
                return Err(Error::Parse(format!("line {}: expected {} fields", i + 2, n + 1)));
            }
            let num = |f: &str| f.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)));
            times.push(num(fields[0])?);
            for (k, f) in fields[1..].iter().enumerate() {
                values[k].push(num(f)?);
            }
        }
        Ok((times, values))
    }
}

/// Hex SHA-256 of the model and the settings.
pub fn fingerprint(spec: &ProcessSpec, config: &SimConfig) -> String {
    let model = serde_json::to_string(spec).unwrap_or_else(|_| format!("{spec:?}"));
    let settings = serde_json::to_string(config).unwrap_or_else(|_| format!("{config:?}"));
    let digest = Sha256::new()
        .chain_update(model.as_bytes())
        .chain_update([0u8])
        .chain_update(settings.as_bytes())
        .finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Atoms with the quantile-median scheme.
pub fn discretize_mixing(mix: &MixingSpec, n_atoms: usize) -> Result<Vec<(ParamPoint, f64)>> {
    discretize_mixing_with(mix, n_atoms, Discretization::QuantileMedian)
}

/// Replaces each continuous factor of the mixing law by at most `n_atoms`
/// atoms; discrete factors and joint laws pass through. Masses sum to one.
pub fn discretize_mixing_with(mix: &MixingSpec, n_atoms: usize, scheme: Discretization) -> Result<Vec<(ParamPoint, f64)>> {
    if n_atoms == 0 {
        return Err(Error::InvalidParameter("n_atoms must be at least 1".into()));
    }
    let pair = |law: &PairLaw, w1: Weight, w2: Weight| -> Result<Vec<((f64, f64), f64)>> {
        match law {
            PairLaw::Joint { atoms } => Ok(atoms.clone()),
            PairLaw::Product { first, second } => {
                let a = discretize_1d(first, n_atoms, scheme, w1)?;
                let b = discretize_1d(second, n_atoms, scheme, w2)?;
                Ok(a.iter()
                    .flat_map(|&(x, p)| b.iter().map(move |&(y, q)| ((x, y), p * q)))
                    .collect())
            }
        }
    };
    let atoms: Vec<(ParamPoint, f64)> = match mix {
        MixingSpec::TypeI { rho } => discretize_1d(rho, n_atoms, scheme, Weight::InvCube)?
            .into_iter()
            .map(|(a, p)| (ParamPoint::I { a }, p))
            .collect(),
        MixingSpec::TypeII(law) => pair(law, Weight::InvCube, Weight::Theta)?
            .into_iter()
            .map(|((lambda, theta), p)| (ParamPoint::II { lambda, theta }, p))
            .collect(),
        MixingSpec::TypeIII(law) => pair(law, Weight::InvCube, Weight::InvCos)?
            .into_iter()
            .map(|((r, psi), p)| (ParamPoint::III { r, psi }, p))
            .collect(),
    };
    Ok(atoms)
}

/// Variance contribution of one parameter, as a function of that parameter.
#[derive(Debug, Clone, Copy)]
enum Weight {
    /// `x^{-3}` for `a`, `λ` and `r`.
    InvCube,
    /// `1/(θ(1+θ))`.
    Theta,
    /// `1/|cos ψ|`.
    InvCos,
}

impl Weight {
    fn eval(self, x: f64) -> f64 {
        match self {
            Weight::InvCube => x.powi(-3),
            Weight::Theta => 1.0 / (x * (1.0 + x)),
            Weight::InvCos => 1.0 / x.cos().abs(),
        }
    }

    fn inverse(self, w: f64) -> f64 {
        match self {
            Weight::InvCube => w.powf(-1.0 / 3.0),
            Weight::Theta => 2.0 / w / (1.0 + (1.0 + 4.0 / w).sqrt()),
            Weight::InvCos => std::f64::consts::PI - (1.0 / w).min(1.0).acos(),
        }
    }
}

fn discretize_1d(m: &Measure1D, n: usize, scheme: Discretization, weight: Weight) -> Result<Vec<(f64, f64)>> {
    if let Some(atoms) = m.atoms() {
        return Ok(atoms);
    }
    match scheme {
        Discretization::QuantileMedian => Ok((0..n)
            .map(|k| (m.quantile((k as f64 + 0.5) / n as f64), 1.0 / n as f64))
            .collect()),
        Discretization::VarianceWeighted => tilted_cells(m, n, weight),
    }
}

/// Cells of equal `∫ w dπ`; each atom carries its cell's mass `p`
/// and sits where `w(x) p` equals the cell's share exactly.
fn tilted_cells(m: &Measure1D, n: usize, weight: Weight) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = m.support();
    let w = |x: f64| weight.eval(x);
    // ∫_a^b w dπ; the outermost cells may hold integrable singularities
    let piece = |a: f64, b: f64| -> Result<f64> {
        if a == lo || b == hi {
            m.expect_on(w, a, b)
        } else {
            quad::adaptive(|x| w(x) * m.pdf(x), a, b, Tol::new(1e-300, 1e-10))
                .map(|e| e.value)
                .map_err(|e| Error::quad("cell variance weight", e))
        }
    };
    let total = m.expect_on(w, lo, hi)?;
    let mut edges = vec![lo];
    let (mut cum, mut u_prev) = (0.0, 0.0);
    for k in 1..n {
        let target = total * k as f64 / n as f64;
        let x_prev = edges[edges.len() - 1];
        let (mut u0, mut u1) = (u_prev, 1.0);
        let mut best = (u1, 0.0);
        for _ in 0..EDGE_BISECTIONS {
            let um = 0.5 * (u0 + u1);
            let x = m.quantile(um);
            let mass = if x > x_prev { piece(x_prev, x)? } else { 0.0 };
            if cum + mass < target {
                u0 = um;
            } else {
                u1 = um;
                best = (um, mass);
            }
            if u1 - u0 <= EDGE_TOL * u1.max(1e-300) {
                break;
            }
        }
        let x = m.quantile(best.0);
        if x > x_prev && x < hi {
            edges.push(x);
            cum += best.1;
            u_prev = best.0;
        }
    }
    edges.push(hi);
    let mut atoms = Vec::with_capacity(n);
    let mut used = 0.0;
    let cells = edges.len() - 1;
    for k in 0..cells {
        let (x0, x1) = (edges[k], edges[k + 1]);
        let p = if k + 1 == cells { 1.0 - used } else { m.cdf(x1) - m.cdf(x0) };
        if !(p > 0.0) {
            continue;
        }
        used += p;
        let share = piece(x0, x1)?;
        let x = weight.inverse(share / p).clamp(x0, x1);
        atoms.push((x, p));
    }
    Ok(atoms)
}

const EDGE_BISECTIONS: usize = 200;
const EDGE_TOL: f64 = 1e-12;

/// One CAR(2) component: propagator and scaled noise.
#[derive(Debug, Clone)]
pub struct Component {
    phi: Matrix2<f64>,
    state: Vector2<f64>,
    levy: LevyTriplet,
}

impl Component {
    pub fn new(p: ParamPoint, mass: f64, levy: &LevyTriplet, dt: f64) -> Result<Self> {
        let car = KernelType::from(p).car2()?;
        let e: DMatrix<f64> = kernels::expm(&(car.companion() * dt))?;
        Ok(Self {
            phi: Matrix2::new(e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]),
            state: Vector2::zeros(),
            levy: levy.scaled(mass),
        })
    }

    /// Advances one step with noise increment `dl` added at the step end.
    pub fn step(&mut self, dl: f64) -> f64 {
        self.state = self.phi * self.state;
        self.state[1] += dl;
        self.state[0]
    }

    pub fn levy(&self) -> &LevyTriplet {
        &self.levy
    }
}

/// Simulates `n_paths` independent paths.
pub fn simulate_paths(spec: &ProcessSpec, config: &SimConfig) -> Result<PathSet> {
    if !spec.levy.is_sampleable() {
        return Err(Error::NotSampleable("density-form Lévy measure".into()));
    }
    if spec.unchecked && !spec.conditions().pass {
        return Err(Error::ConditionFailed(spec.conditions().failures().join("; ")));
    }
    let atoms = discretize_mixing_with(&spec.mixing, config.n_atoms, config.scheme)?;
    config.validate(&atoms)?;
    let dt = config.dt;
    let n_burn = (config.burn_in / dt).round() as usize;
    let n_steps = (config.horizon / dt).floor() as usize + 1;
    let components: Vec<Component> = atoms
        .iter()
        .map(|&(p, mass)| Component::new(p, mass, &spec.levy, dt))
        .collect::<Result<_>>()?;

    let values: Vec<Vec<f64>> = (0..config.n_paths)
        .into_par_iter()
        .map(|path| simulate_one(&components, config.seed, path, n_burn, n_steps, dt))
        .collect::<Result<_>>()?;
    Ok(PathSet {
        times: (0..n_steps).map(|j| j as f64 * dt).collect(),
        values,
        seed: config.seed,
        spec_fingerprint: fingerprint(spec, config),
        dt,
    })
}

fn simulate_one(components: &[Component], seed: u64, path: usize, n_burn: usize, n_steps: usize, dt: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n_steps];
    for (k, c) in components.iter().enumerate() {
        let mut c = c.clone();
        let mut rng = rng_stream(seed, ((path as u64) << 32) | k as u64);
        for _ in 0..n_burn {
            let dl = sample_increment(&c.levy, dt, &mut rng)?;
            c.step(dl);
        }
        // the first retained value is the state at the end of burn-in
        out[0] += c.state[0];
        for v in out.iter_mut().skip(1) {
            let dl = sample_increment(&c.levy, dt, &mut rng)?;
            *v += c.step(dl);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("path {path} has non-finite values")));
    }
    Ok(out)
}

/// Lag index of `tau` on the grid.
fn lag_index(tau: f64, dt: f64) -> Result<usize> {
    let k = (tau / dt).round();
    if !(tau >= 0.0) || (k * dt - tau).abs() > 1e-9 * dt.max(tau) {
        return Err(Error::OffGrid { tau, dt });
    }
    Ok(k as usize)
}

/// Empirical correlations at on-grid lags.
///
/// Values are centred at the mean over all paths; per-path correlation
/// estimates are averaged and `ci_half_width` is three standard errors of
/// that average (zero for a single path).
pub fn empirical_acf(paths: &PathSet, taus: &[f64]) -> Result<AcfTable> {
    let lags: Vec<usize> = taus.iter().map(|&t| lag_index(t, paths.dt)).collect::<Result<_>>()?;
    let n = paths.times.len();
    let horizon = paths.dt * (n.saturating_sub(1)) as f64;
    if let Some(&max_tau) = taus.iter().max_by(|a, b| a.total_cmp(b)) {
        if horizon < 10.0 * max_tau {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} is shorter than 10 × largest lag {max_tau}"
            )));
        }
    }
    let count = (paths.values.len() * n) as f64;
    let mean = paths.values.iter().flatten().sum::<f64>() / count;
    let scale = paths.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let centred: Vec<Vec<f64>> = paths.values.iter().map(|p| p.iter().map(|v| v - mean).collect()).collect();
    let cov = |x: &[f64], k: usize| x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / (x.len() - k) as f64;
    let mut per_path: Vec<Vec<f64>> = Vec::with_capacity(centred.len());
    for x in &centred {
        let c0 = cov(x, 0);
        if !(c0 > (1e-14 * scale).powi(2)) {
            return Err(Error::DegenerateVariance);
        }
        per_path.push(lags.iter().map(|&k| cov(x, k) / c0).collect());
    }
    let m = per_path.len() as f64;
    let rows = lags
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let (r, ci) = if k == 0 {
                (1.0, 0.0)
            } else {
                let avg = per_path.iter().map(|r| r[j]).sum::<f64>() / m;
                let ci = if per_path.len() < 2 {
                    0.0
                } else {
                    let var = per_path.iter().map(|r| (r[j] - avg).powi(2)).sum::<f64>() / (m - 1.0);
                    3.0 * (var / m).sqrt()
                };
                (avg, ci)
            };
            AcfRow {
                tau: taus[j],
                r_analytic: f64::NAN,
                r_empirical: Some(r),
                ci_half_width: Some(ci),
            }
        })
        .collect();
    AcfTable::new(rows)
}

/// Analytic against empirical correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub table: AcfTable,
    /// Correlation of the atomized mixing law minus the continuous one.
    pub discretization_bias: Vec<f64>,
    pub within: Vec<bool>,
    pub fraction_within: f64,
    pub pass: bool,
    pub fingerprint: String,
}

/// Share of lags that must agree for a pass.
pub const PASS_FRACTION: f64 = 0.9;

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,r_analytic,r_empirical,ci_half_width,discretization_bias,within\n");
        for ((row, bias), ok) in self.table.rows().iter().zip(&self.discretization_bias).zip(&self.within) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                fmt_f64(row.tau),
                fmt_f64(row.r_analytic),
                fmt_f64(row.r_empirical.unwrap_or(f64::NAN)),
                fmt_f64(row.ci_half_width.unwrap_or(f64::NAN)),
                fmt_f64(*bias),
                ok
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lags within interval: {:.1}%", 100.0 * self.fraction_within);
        let worst = self.discretization_bias.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let _ = writeln!(s, "largest discretization bias: {worst:.3e}");
        let _ = writeln!(s, "fingerprint: {}", self.fingerprint);
        let _ = write!(s, "result: {}", if self.pass { "pass" } else { "FAIL" });
        s
    }
}

/// Atomized mixing law as a [`MixingSpec`].
pub fn atomized_mixing(mix: &MixingSpec, atoms: &[(ParamPoint, f64)]) -> Result<MixingSpec> {
    let pairs: Vec<((f64, f64), f64)> = atoms
        .iter()
        .map(|&(p, m)| match p {
            ParamPoint::I { a } => ((a, 0.0), m),
            ParamPoint::II { lambda, theta } => ((lambda, theta), m),
            ParamPoint::III { r, psi } => ((r, psi), m),
        })
        .collect();
    match mix {
        MixingSpec::TypeI { .. } => MixingSpec::type1(Measure1D::Discrete {
            atoms: pairs.iter().map(|&((a, _), m)| (a, m)).collect(),
        }),
        _ => MixingSpec::joint(mix.type_tag(), pairs),
    }
}

/// Simulates, estimates the correlation function and compares it with the
/// analytic one.
pub fn compare(spec: &ProcessSpec, config: &SimConfig, taus: &[f64]) -> Result<ComparisonReport> {
    let analytic = acf(spec, taus)?;
    let atoms = discretize_mixing_with(&spec.mixing, config.n_atoms, config.scheme)?;
    let atomized = acf_values(&atomized_mixing(&spec.mixing, &atoms)?, taus, AcfMethod::Auto)?;
    let paths = simulate_paths(spec, config)?;
    let empirical = empirical_acf(&paths, taus)?;
    let mut rows = Vec::with_capacity(taus.len());
    let mut within = Vec::with_capacity(taus.len());
    let mut bias = Vec::with_capacity(taus.len());
    for ((a, e), r_atom) in analytic.rows().iter().zip(empirical.rows()).zip(&atomized) {
        let re = e.r_empirical.unwrap_or(f64::NAN);
        let ci = e.ci_half_width.unwrap_or(0.0);
        within.push((a.r_analytic - re).abs() <= ci);
        bias.push(r_atom - a.r_analytic);
        rows.push(AcfRow {
            tau: a.tau,
            r_analytic: a.r_analytic,
            r_empirical: Some(re),
            ci_half_width: Some(ci),
        });
    }
    let fraction_within = if within.is_empty() {
        1.0
    } else {
        within.iter().filter(|w| **w).count() as f64 / within.len() as f64
    };
    Ok(ComparisonReport {
        table: AcfTable::new(rows)?,
        discretization_bias: bias,
        within,
        fraction_within,
        pass: fraction_within >= PASS_FRACTION,
        fingerprint: paths.spec_fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{acf_closed_gamma_I, mean_var};
    use crate::levy_noise::{JumpLaw, JumpSpec};
    use rand::seq::SliceRandom;
    use std::f64::consts::{E, PI};

    fn t1(rho: Measure1D, levy: LevyTriplet) -> ProcessSpec {
        ProcessSpec::new(levy, MixingSpec::type1(rho).unwrap()).unwrap()
    }

    #[test]
    fn discretize_examples() {
        let mix = MixingSpec::type1(Measure1D::dirac(2.0)).unwrap();
        for scheme in [Discretization::QuantileMedian, Discretization::VarianceWeighted] {
            assert_eq!(discretize_mixing_with(&mix, 16, scheme).unwrap(), vec![(ParamPoint::I { a: 2.0 }, 1.0)]);
        }
        let g = Measure1D::gamma(4.0, 1.0);
        let atoms = discretize_mixing(&MixingSpec::type1(g.clone()).unwrap(), 4).unwrap();
        assert_eq!(atoms.len(), 4);
        for (k, (p, m)) in atoms.iter().enumerate() {
            assert_eq!(*m, 0.25);
            let ParamPoint::I { a } = *p else { panic!() };
            assert!((a - g.quantile(0.125 + 0.25 * k as f64)).abs() < 1e-12);
        }
        let mix = MixingSpec::type2(Measure1D::dirac(1.0), Measure1D::uniform(0.0, 1.0)).unwrap();
        let atoms = discretize_mixing(&mix, 2).unwrap();
        let thetas: Vec<f64> = atoms
            .iter()
            .map(|(p, _)| match p {
                ParamPoint::II { theta, .. } => *theta,
                _ => unreachable!(),
            })
            .collect();
        assert!((thetas[0] - 0.25).abs() < 1e-12 && (thetas[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn discretized_masses_sum_to_one() {
        let mixes = [
            MixingSpec::type1(Measure1D::gamma(4.0, 1.0)).unwrap(),
            MixingSpec::type2(Measure1D::gamma(5.0, 2.0), Measure1D::beta(3.0, 0.5)).unwrap(),
            MixingSpec::type3(Measure1D::gamma(4.5, 1.0), Measure1D::Sin2).unwrap(),
        ];
        for mix in &mixes {
            for scheme in [Discretization::QuantileMedian, Discretization::VarianceWeighted] {
                let atoms = discretize_mixing_with(mix, 8, scheme).unwrap();
                assert!(atoms.len() <= 64);
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                assert!((total - 1.0).abs() < 1e-12, "{total}");
            }
        }
    }

    #[test]
    fn variance_weighted_atoms_keep_the_variance() {
        let mix = MixingSpec::type1(Measure1D::gamma(4.0, 1.0)).unwrap();
        let atoms = discretize_mixing_with(&mix, 5, Discretization::VarianceWeighted).unwrap();
        let v: f64 = atoms
            .iter()
            .map(|(p, m)| match p {
                ParamPoint::I { a } => m * a.powi(-3),
                _ => unreachable!(),
            })
            .sum();
        assert!((v - 1.0 / 6.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn atomized_bias_shrinks() {
        let mix = MixingSpec::type1(Measure1D::gamma(4.0, 1.0)).unwrap();
        let bias = |n: usize, scheme| {
            let atoms = discretize_mixing_with(&mix, n, scheme).unwrap();
            let r = acf_values(&atomized_mixing(&mix, &atoms).unwrap(), &[5.0], AcfMethod::Auto).unwrap()[0];
            (r - acf_closed_gamma_I(1.0, 5.0)).abs()
        };
        for scheme in [Discretization::QuantileMedian, Discretization::VarianceWeighted] {
            let b: Vec<f64> = [1, 4, 16, 64].iter().map(|&n| bias(n, scheme)).collect();
            assert!(b.windows(2).all(|w| w[1] < w[0]), "{scheme:?}: {b:?}");
        }
    }

    #[test]
    fn zero_noise_gives_zero_paths() {
        let s = t1(Measure1D::dirac(2.0), LevyTriplet::gaussian(0.0, 0.0));
        let p = simulate_paths(&s, &SimConfig::new(0.1, 5.0, 4, 3, 1).with_burn_in(1.0)).unwrap();
        assert!(p.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_drift_reaches_mean() {
        let s = t1(Measure1D::dirac(2.0), LevyTriplet::gaussian(1.0, 0.0));
        let (m, _) = mean_var(&s).unwrap();
        assert!((m - 1.0).abs() < 1e-15);
        let p = simulate_paths(&s, &SimConfig::new(0.01, 1000.0, 1, 1, 0).with_burn_in(20.0)).unwrap();
        let avg = p.values[0].iter().sum::<f64>() / p.values[0].len() as f64;
        assert!((avg - 1.0).abs() < 0.01, "{avg}");
    }

    #[test]
    fn single_jump_follows_kernel() {
        let points = [
            ParamPoint::I { a: 1.3 },
            ParamPoint::II { lambda: 2.0, theta: 0.3 },
            ParamPoint::III { r: 1.5, psi: 0.7 * PI },
        ];
        let dt = 0.01;
        for p in points {
            let mut c = Component::new(p, 1.0, &LevyTriplet::gaussian(0.0, 0.0), dt).unwrap();
            let jump = 2.5;
            assert_eq!(c.step(jump), 0.0);
            let k = KernelType::from(p);
            for j in 1..2000 {
                let x = c.step(0.0);
                let g = k.eval(j as f64 * dt) * jump;
                assert!((x - g).abs() <= 1e-10, "{p:?} step {j}: {x} vs {g}");
            }
        }
    }

    #[test]
    fn reproducible_across_runs_and_threads() {
        let levy = LevyTriplet::new(
            0.1,
            0.5,
            JumpSpec::CompoundPoisson {
                rate: 1.0,
                law: JumpLaw::Exponential { rate: 2.0 },
            },
        )
        .unwrap();
        let s = ProcessSpec::new(levy, MixingSpec::type3(Measure1D::gamma(5.0, 1.0), Measure1D::Sin2).unwrap()).unwrap();
        let cfg = SimConfig::new(0.1, 20.0, 3, 6, 42).with_burn_in(5.0);
        let a = simulate_paths(&s, &cfg).unwrap();
        let b = simulate_paths(&s, &cfg).unwrap();
        let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        let c = pool(1).install(|| simulate_paths(&s, &cfg).unwrap());
        let d = pool(4).install(|| simulate_paths(&s, &cfg).unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_csv(), c.to_csv());
        assert_eq!(a.to_csv(), d.to_csv());
        let other = simulate_paths(&s, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.to_csv(), other.to_csv());
        assert_ne!(a.spec_fingerprint, other.spec_fingerprint);
    }

    #[test]
    fn path_csv_round_trips() {
        let s = t1(Measure1D::gamma(4.0, 1.0), LevyTriplet::gaussian(0.0, 1.0));
        let p = simulate_paths(&s, &SimConfig::new(0.25, 3.0, 4, 2, 9).with_burn_in(2.0)).unwrap();
        let csv = p.to_csv();
        assert!(csv.starts_with("t,path_0,path_1\n"));
        let (t, v) = PathSet::parse_csv(&csv).unwrap();
        assert_eq!(t, p.times);
        assert_eq!(v, p.values);
    }

    #[test]
    fn stationary_after_burn_in() {
        let s = t1(Measure1D::gamma(5.0, 1.0), LevyTriplet::gaussian(0.5, 1.0));
        let cfg = SimConfig::new(0.05, 100.0, 8, 100, 5);
        let cfg = cfg.with_burn_in(cfg.default_burn_in(&s).unwrap());
        let p = simulate_paths(&s, &cfg).unwrap();
        let half = p.times.len() / 2;
        let stats = |range: std::ops::Range<usize>| {
            let means: Vec<f64> = p.values.iter().map(|x| x[range.clone()].iter().sum::<f64>() / range.len() as f64).collect();
            let vars: Vec<f64> = p
                .values
                .iter()
                .zip(&means)
                .map(|(x, m)| x[range.clone()].iter().map(|v| (v - m).powi(2)).sum::<f64>() / range.len() as f64)
                .collect();
            let mv = |v: &[f64]| {
                let n = v.len() as f64;
                let m = v.iter().sum::<f64>() / n;
                (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n)
            };
            (mv(&means), mv(&vars))
        };
        let ((m1, sm1), (v1, sv1)) = stats(0..half);
        let ((m2, sm2), (v2, sv2)) = stats(half..p.times.len());
        assert!((m1 - m2).abs() < 4.0 * (sm1 + sm2).sqrt(), "means {m1} {m2}");
        assert!((v1 - v2).abs() < 4.0 * (sv1 + sv2).sqrt(), "variances {v1} {v2}");
    }

    #[test]
    fn empirical_acf_edge_cases() {
        let flat = PathSet {
            times: (0..200).map(|j| j as f64 * 0.1).collect(),
            values: vec![vec![0.3; 200]; 2],
            seed: 0,
            spec_fingerprint: String::new(),
            dt: 0.1,
        };
        assert!(matches!(empirical_acf(&flat, &[0.0, 0.1]), Err(Error::DegenerateVariance)));
        assert!(matches!(empirical_acf(&flat, &[0.15]), Err(Error::OffGrid { .. })));

        let s = t1(Measure1D::dirac(2.0), LevyTriplet::gaussian(0.0, 1.0));
        let mut p = simulate_paths(&s, &SimConfig::new(0.05, 100.0, 1, 20, 3).with_burn_in(10.0)).unwrap();
        let t = empirical_acf(&p, &[0.0, 0.05]).unwrap();
        assert_eq!(t.rows()[0].r_empirical, Some(1.0));
        // shuffle across all paths and times
        let mut rng = rng_stream(1, 0);
        let len = p.times.len();
        let mut all: Vec<f64> = p.values.concat();
        all.shuffle(&mut rng);
        for (x, chunk) in p.values.iter_mut().zip(all.chunks(len)) {
            x.copy_from_slice(chunk);
        }
        let n_eff = (p.values.len() * p.times.len()) as f64;
        let r = empirical_acf(&p, &[0.05]).unwrap().rows()[0].r_empirical.unwrap();
        assert!(r.abs() < 3.0 / n_eff.sqrt(), "{r}");
    }

    #[test]
    fn lag_one_acf_monte_carlo() {
        let s = t1(Measure1D::dirac(2.0), LevyTriplet::gaussian(0.0, 1.0));
        let cfg = SimConfig::new(0.05, 500.0, 1, 200, 11).with_burn_in(50.0);
        let p = simulate_paths(&s, &cfg).unwrap();
        let row = empirical_acf(&p, &[1.0]).unwrap().rows()[0];
        assert!((row.r_empirical.unwrap() - 2.0 / E).abs() <= row.ci_half_width.unwrap());
    }

    #[test]
    fn tiny_run_is_flagged_not_an_error() {
        let s = t1(Measure1D::dirac(2.0), LevyTriplet::gaussian(0.0, 1.0));
        let cfg = SimConfig::new(0.1, 10.0, 1, 1, 2).with_burn_in(1.0);
        let rep = compare(&s, &cfg, &[0.5, 1.0]).unwrap();
        assert!(!rep.pass);
        assert!(rep.summary().contains("FAIL"));
    }

    #[test]
    fn dirac_comparison_passes() {
        let s = t1(Measure1D::dirac(2.0), LevyTriplet::gaussian(0.0, 1.0));
        let cfg = SimConfig::new(0.05, 300.0, 1, 100, 17).with_burn_in(10.0);
        let rep = compare(&s, &cfg, &[0.5, 1.0, 2.0, 3.0]).unwrap();
        assert!(rep.pass, "{}", rep.to_csv());
        assert!(rep.discretization_bias.iter().all(|b| b.abs() < 1e-14));
    }
}
