//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use supcar::analytics::{acf, acf_closed_gamma_I, acf_with, cov_oracle, cumulant_x, mean_var, AcfMethod, ProcessSpec};
use supcar::cli::{closed_form, figure_model, sign_changes, FIGURE_SHAPES, FIGURE_TAU_MAX};
use supcar::kernels::{carma_kernel, classify, Car2Params, KernelType};
use supcar::levy_noise::{JumpLaw, JumpSpec, LevyTriplet};
use supcar::mixing::{Measure1D, MixingSpec, COND_III_COS, COND_III_LOG};
use supcar::simulate::{compare, simulate_paths, SimConfig};

const TOL_CLOSED: f64 = 1e-8;
const TIME_CLOSED: f64 = 5.0;
const TOL_KERNEL: f64 = 1e-10;
const TIME_KERNEL: f64 = 10.0;
const TOL_ASYM_I: f64 = 1e-3;
const TOL_ASYM_III: f64 = 0.05;
const TOL_SIN2: f64 = 1e-8;
const TOL_M3: f64 = 1e-12;
const TOL_WITNESS: f64 = 1e-8;
const TOL_WITNESS_ORACLE: f64 = 1e-6;
const TOL_CUMULANT: f64 = 1e-5;
/// Rate-law shape large enough for finite cumulants up to order six.
const CUMULANT_SHAPE: f64 = 8.0;
const TIME_MC: f64 = 60.0;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gaussian() -> LevyTriplet {
    LevyTriplet::gaussian(0.0, 1.0)
}

fn closed_vs_quadrature() -> Outcome {
    let start = Instant::now();
    let taus: Vec<f64> = (0..50).map(|i| 50.0 * i as f64 / 49.0).collect();
    let mut worst = 0.0f64;
    for alpha in [0.5, 1.0, 2.0] {
        let spec = ProcessSpec::new(gaussian(), MixingSpec::type1(Measure1D::gamma(alpha + 3.0, 1.0)).map_err(err)?)
            .map_err(err)?;
        let quad = acf_with(&spec, &taus, AcfMethod::Quadrature).map_err(err)?;
        for (t, r) in taus.iter().zip(quad.r_analytic()) {
            worst = worst.max((acf_closed_gamma_I(alpha, *t) - r).abs());
        }
    }
    let r2 = acf_closed_gamma_I(1.0, 2.0);
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= TOL_CLOSED && (r2 - 0.75).abs() <= TOL_CLOSED && secs < TIME_CLOSED,
        format!("max |closed − quadrature| = {worst:.2e}, r(2) at α=1 is {r2:.12}, {secs:.2}s"),
    )
}

fn kernel_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let b = DVector::from_vec(vec![1.0, 0.0]);
    let mut worst = 0.0f64;
    let mut counts = [0usize; 3];
    for _ in 0..10_000 {
        let p = Car2Params::new(rng.random_range(0.1..10.0), rng.random_range(0.1..10.0)).map_err(err)?;
        let k = classify(p, 1e-12).map_err(err)?;
        counts[match k {
            KernelType::TypeI { .. } => 0,
            KernelType::TypeII { .. } => 1,
            KernelType::TypeIII { .. } => 2,
        }] += 1;
        let a = p.companion();
        for i in 0..=20 {
            let u = 0.5 * i as f64;
            let v = k.eval(u);
            let o = carma_kernel(&a, &b, u).map_err(err)?;
            worst = worst.max((v - o).abs() / (1.0 + v.abs()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= TOL_KERNEL && secs < TIME_KERNEL,
        format!(
            "10^4 pairs ({} type II, {} type III) on 21 lags, max scaled error {worst:.2e}, {secs:.2}s",
            counts[1], counts[2]
        ),
    )
}

fn asymptotics() -> Outcome {
    let s1 = ProcessSpec::new(gaussian(), MixingSpec::type1(Measure1D::gamma(4.0, 1.0)).map_err(err)?).map_err(err)?;
    let t = 1e4;
    let r1 = acf(&s1, &[0.0, t]).map_err(err)?.r_analytic()[1] * t;
    let ok1 = (r1 / 4.0 - 1.0).abs() <= TOL_ASYM_I;
    let s3 = figure_model(4.0).map_err(err)?;
    let taus = [0.0, 1e2, 10f64.powf(2.5), 1e3];
    let r = acf(&s3, &taus).map_err(err)?.r_analytic();
    let scaled: Vec<f64> = taus[1..].iter().zip(&r[1..]).map(|(t, r)| t * r).collect();
    let gaps: Vec<f64> = scaled.iter().map(|v| (v - 1.0).abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let ok3 = gaps[2] <= TOL_ASYM_III && monotone;
    check(
        ok1 && ok3,
        format!(
            "type I τr(τ) at 1e4 = {r1:.6} (target 4); type III τr(τ) at 1e2, 10^2.5, 1e3 = {:.4}, {:.4}, {:.4} (target 1, monotone {monotone})",
            scaled[0], scaled[1], scaled[2]
        ),
    )
}

fn constants() -> Outcome {
    let mix = MixingSpec::type3(Measure1D::gamma(4.0, 1.0), Measure1D::Sin2).map_err(err)?;
    let rep = mix.check();
    let cos = rep.get(COND_III_COS).ok_or("missing cos condition")?.value;
    let log = rep.get(COND_III_LOG).ok_or("missing log condition")?.value;
    let m3 = Measure1D::gamma(4.0, 1.0).m_p(-3.0);
    let target_log = 2.0 - 4f64.ln();
    check(
        (cos - 2.0).abs() <= TOL_SIN2 && (log - target_log).abs() <= TOL_SIN2 && (m3 - 1.0 / 6.0).abs() <= TOL_M3,
        format!(
            "sin2 integrals {cos:.12} and {log:.12} (targets 2, {target_log:.12}); m_-3 = {m3:.15}"
        ),
    )
}

fn witness() -> Outcome {
    let spec = ProcessSpec::new(
        gaussian(),
        MixingSpec::type3(Measure1D::dirac(1.0), Measure1D::dirac(0.75 * PI)).map_err(err)?,
    )
    .map_err(err)?;
    let tau = PI * 2f64.sqrt();
    let target = -(-PI).exp();
    let r = acf(&spec, &[0.0, tau]).map_err(err)?.r_analytic()[1];
    let simplified = closed_form(&spec, tau).ok_or("no closed form")?;
    let oracle = cov_oracle(&spec, tau).map_err(err)? / cov_oracle(&spec, 0.0).map_err(err)?;
    check(
        (r - target).abs() <= TOL_WITNESS
            && (simplified - target).abs() <= TOL_WITNESS
            && (oracle - target).abs() <= TOL_WITNESS_ORACLE,
        format!("r(π√2) = {r:.12}, simplified {simplified:.12}, oracle {oracle:.12}, target {target:.12}"),
    )
}

/// Mean and variance from fourth-order central differences of `κ_X`, using
/// `κ_X(−ζ) = conj κ_X(ζ)`.
fn fd_moments(spec: &ProcessSpec) -> supcar::Result<(f64, f64)> {
    let h = 0.02;
    let k = |z: f64| cumulant_x(spec, z);
    let (k1, k2, k0) = (k(h)?, k(2.0 * h)?, k(0.0)?);
    let (km1, km2) = (k1.conj(), k2.conj());
    let d1 = (8.0 * (k1 - km1) - (k2 - km2)) / (12.0 * h);
    let d2 = (-(k2 + km2) + 16.0 * (k1 + km1) - 30.0 * k0) / (12.0 * h * h);
    Ok((d1.im, -d2.re))
}

fn cumulants() -> Outcome {
    let noises = [
        ("Gaussian", LevyTriplet::gaussian(0.3, 1.0)),
        (
            "compound Poisson",
            LevyTriplet::new(
                0.1,
                0.5,
                JumpSpec::CompoundPoisson {
                    rate: 2.0,
                    law: JumpLaw::Normal { mean: 0.5, sd: 1.0 },
                },
            )
            .map_err(err)?,
        ),
    ];
    let mixings = [
        ("I", MixingSpec::type1(Measure1D::gamma(CUMULANT_SHAPE, 1.0)).map_err(err)?),
        ("II", MixingSpec::type2(Measure1D::gamma(CUMULANT_SHAPE, 1.0), Measure1D::beta(2.0, 2.0)).map_err(err)?),
        ("III", MixingSpec::type3(Measure1D::gamma(CUMULANT_SHAPE, 1.0), Measure1D::Sin2).map_err(err)?),
    ];
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (tn, mix) in &mixings {
        for (nn, levy) in &noises {
            let spec = ProcessSpec::new(levy.clone(), mix.clone()).map_err(err)?;
            let (m, v) = mean_var(&spec).map_err(err)?;
            let (fm, fv) = fd_moments(&spec).map_err(err)?;
            let e = ((fm - m) / m).abs().max(((fv - v) / v).abs());
            worst = worst.max(e);
            lines.push(format!("{tn}/{nn} {e:.1e}"));
        }
    }
    check(
        worst <= TOL_CUMULANT,
        format!("max relative error {worst:.2e} ({})", lines.join(", ")),
    )
}

fn monte_carlo() -> Outcome {
    let spec = ProcessSpec::new(gaussian(), MixingSpec::type1(Measure1D::dirac(2.0)).map_err(err)?).map_err(err)?;
    let taus = [0.5, 1.0, 2.0, 5.0];
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in [1, 2, 3] {
        let start = Instant::now();
        let config = SimConfig::new(0.05, 500.0, 1, 200, seed).with_burn_in(50.0);
        let rep = compare(&spec, &config, &taus).map_err(err)?;
        let secs = start.elapsed().as_secs_f64();
        ok &= rep.pass && secs < TIME_MC;
        parts.push(format!("seed {seed}: {:.0}% within 3 s.e., {secs:.1}s", 100.0 * rep.fraction_within));
    }
    check(ok, parts.join("; "))
}

fn figure() -> Outcome {
    let taus: Vec<f64> = (0..=400).map(|i| FIGURE_TAU_MAX * i as f64 / 400.0).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for shape in FIGURE_SHAPES {
        let t = acf(&figure_model(shape).map_err(err)?, &taus).map_err(err)?;
        let n = sign_changes(&t);
        ok &= (n > 0) == (shape > 10.0) && t.r_analytic()[0] == 1.0;
        parts.push(format!("shape {shape}: {n}"));
    }
    check(ok, format!("sign changes on (0, 40]: {}", parts.join(", ")))
}

fn truth_table() -> Outcome {
    let cases = [
        ("Γ(4,1) type I", MixingSpec::type1(Measure1D::gamma(4.0, 1.0)).map_err(err)?, true),
        ("Γ(2,1) type I", MixingSpec::type1(Measure1D::gamma(2.0, 1.0)).map_err(err)?, false),
        (
            "beta(1,1) θ-law type II",
            MixingSpec::type2(Measure1D::gamma(4.0, 1.0), Measure1D::beta(1.0, 1.0)).map_err(err)?,
            false,
        ),
        (
            "sin2 ψ-law type III",
            MixingSpec::type3(Measure1D::gamma(4.0, 1.0), Measure1D::Sin2).map_err(err)?,
            true,
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, mix, expected) in cases {
        let got = mix.check().pass;
        ok &= got == expected;
        parts.push(format!("{name}: {}", if got { "pass" } else { "fail" }));
    }
    check(ok, parts.join(", "))
}

fn determinism() -> Outcome {
    let levy = LevyTriplet::new(
        0.0,
        0.2,
        JumpSpec::CompoundPoisson {
            rate: 3.0,
            law: JumpLaw::Exponential { rate: 2.0 },
        },
    )
    .map_err(err)?;
    let spec = ProcessSpec::new(levy, MixingSpec::type1(Measure1D::gamma(4.0, 1.0)).map_err(err)?).map_err(err)?;
    let config = SimConfig::new(0.1, 50.0, 8, 6, 77).with_burn_in(5.0);
    let run = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(err)?;
        pool.install(|| simulate_paths(&spec, &config).map(|p| p.to_csv()).map_err(err))
    };
    let a = run(1)?;
    let b = run(1)?;
    let c = run(4)?;
    check(
        a == b && a == c,
        format!("{} bytes; repeat identical {}, 1 vs 4 threads identical {}", a.len(), a == b, a == c),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("closed form vs quadrature (type I)", closed_vs_quadrature),
        ("kernel oracle", kernel_oracle),
        ("asymptotics", asymptotics),
        ("mixing-law constants", constants),
        ("non-monotone correlation witness", witness),
        ("cumulant consistency", cumulants),
        ("Monte Carlo correlation", monte_carlo),
        ("type III sign pattern", figure),
        ("condition truth table", truth_table),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (status, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {:>2} {status} {name}: {detail}", i + 1);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
