//! Command-line interface.
//!
//! Exit codes: 0 success, 1 input error, 2 failed existence or moment
//! condition, 3 failed regression assertion or comparison.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analytics::{acf, acf_closed_gamma_I, fmt_f64, AcfTable, ProcessSpec};
use crate::error::Error;
use crate::levy_noise::LevyTriplet;
use crate::mixing::{Measure1D, MixingSpec, PairLaw};
use crate::simulate::{compare, simulate_paths, Discretization, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CONDITION: i32 = 2;
pub const EXIT_REGRESSION: i32 = 3;

/// Gamma shapes of the built-in type III figure models.
pub const FIGURE_SHAPES: [f64; 4] = [3.5, 3.9, 15.0, 50.0];
/// Lag range of the figure curves.
pub const FIGURE_TAU_MAX: f64 = 40.0;
const FIGURE_POINTS: usize = 401;
/// Correlations smaller than this do not count toward sign changes.
pub const SIGN_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "supcar", version, about = "Superpositions of Lévy-driven CAR(2) processes")]
struct Cli {
    /// Model file (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Random seed for simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every existence condition of the model.
    Check,
    /// Write the correlation function on a uniform lag grid.
    Acf {
        #[arg(long, default_value_t = 20.0)]
        tau_max: f64,
        #[arg(long, default_value_t = 201)]
        n_points: usize,
        /// Also write the closed form when the model belongs to a known family.
        #[arg(long)]
        closed_form: bool,
    },
    /// Simulate sample paths.
    Simulate(SimArgs),
    /// Simulate and compare empirical with analytic correlations.
    Compare {
        #[command(flatten)]
        sim: SimArgs,
        /// Comma-separated lags (multiples of dt).
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,5")]
        taus: Vec<f64>,
    },
    /// Correlation curves of four built-in type III models.
    Figure3,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, default_value_t = 100.0)]
    horizon: f64,
    /// Defaults to 10 over the smallest decay rate.
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long, default_value_t = 16)]
    n_atoms: usize,
    #[arg(long, default_value_t = 10)]
    n_paths: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::VarianceWeighted)]
    scheme: SchemeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    QuantileMedian,
    VarianceWeighted,
}

impl From<SchemeArg> for Discretization {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::QuantileMedian => Discretization::QuantileMedian,
            SchemeArg::VarianceWeighted => Discretization::VarianceWeighted,
        }
    }
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_)
            | Error::NotStable { .. }
            | Error::OffGrid { .. }
            | Error::Parse(_)
            | Error::Io(_)
            | Error::NotSampleable(_) => EXIT_INPUT,
            Error::VarianceUndefined(_)
            | Error::ConditionFailed(_)
            | Error::NoClosedAsymptotic(_)
            | Error::DegenerateVariance
            | Error::Quadrature { .. } => EXIT_CONDITION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses arguments and runs one command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Check => cmd_check(&load(cli)?),
        Command::Acf {
            tau_max,
            n_points,
            closed_form,
        } => cmd_acf(&checked(cli)?, &cli.out, *tau_max, *n_points, *closed_form),
        Command::Simulate(sim) => {
            let model = checked(cli)?;
            let config = sim_config(sim, &model, cli.seed)?;
            cmd_simulate(&model, &config, &cli.out)
        }
        Command::Compare { sim, taus } => {
            let model = checked(cli)?;
            let config = sim_config(sim, &model, cli.seed)?;
            cmd_compare(&model, &config, taus, &cli.out)
        }
        Command::Figure3 => cmd_figure3(&cli.out),
    }
}

/// The model as written, with the existence conditions not yet enforced.
#[derive(Debug)]
struct LoadedModel {
    spec: ProcessSpec,
    /// The file asked to skip the conditions.
    unchecked: bool,
}

fn load(cli: &Cli) -> std::result::Result<LoadedModel, Failure> {
    let path = cli.model.as_ref().ok_or_else(|| Failure::input("--model is required"))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Parses a model file; the conditions are evaluated separately so that a
/// failing model is a condition failure rather than a parse error.
fn parse_model(text: &str) -> std::result::Result<LoadedModel, String> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let obj = value.as_object_mut().ok_or("model must be a JSON object")?;
    let unchecked = match obj.get("unchecked") {
        None => false,
        Some(serde_json::Value::Bool(b)) => *b,
        Some(_) => return Err("\"unchecked\" must be a boolean".into()),
    };
    obj.insert("unchecked".into(), serde_json::Value::Bool(true));
    let mut spec: ProcessSpec = serde_json::from_value(value).map_err(|e| e.to_string())?;
    spec.unchecked = unchecked;
    Ok(LoadedModel { spec, unchecked })
}

fn checked(cli: &Cli) -> std::result::Result<ProcessSpec, Failure> {
    let m = load(cli)?;
    if !m.unchecked {
        let report = m.spec.conditions();
        if !report.pass {
            return Err(Failure {
                code: EXIT_CONDITION,
                message: format!("existence conditions fail:\n{report}"),
            });
        }
    }
    Ok(m.spec)
}

fn sim_config(sim: &SimArgs, model: &ProcessSpec, seed: u64) -> std::result::Result<SimConfig, Failure> {
    let mut config = SimConfig::new(sim.dt, sim.horizon, sim.n_atoms, sim.n_paths, seed);
    config.scheme = sim.scheme.into();
    config.burn_in = match sim.burn_in {
        Some(b) => b,
        None => config.default_burn_in(model)?,
    };
    Ok(config)
}

fn write(out: &Path, name: &str, contents: &str) -> std::result::Result<PathBuf, Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_check(model: &LoadedModel) -> CmdResult {
    let report = model.spec.conditions();
    println!("type {} model", model.spec.type_tag());
    println!("{report}");
    Ok(if report.pass { EXIT_OK } else { EXIT_CONDITION })
}

fn lag_grid(tau_max: f64, n_points: usize) -> std::result::Result<Vec<f64>, Failure> {
    if !(tau_max >= 0.0 && tau_max.is_finite()) {
        return Err(Failure::input(format!("--tau-max must be nonnegative (got {tau_max})")));
    }
    if tau_max == 0.0 {
        return Ok(vec![0.0]);
    }
    if n_points < 2 {
        return Err(Failure::input("--n-points must be at least 2"));
    }
    Ok((0..n_points)
        .map(|i| tau_max * i as f64 / (n_points - 1) as f64)
        .collect())
}

/// Closed-form correlation for the families that have one.
pub fn closed_form(spec: &ProcessSpec, tau: f64) -> Option<f64> {
    match &spec.mixing {
        MixingSpec::TypeI {
            rho: Measure1D::Gamma { shape, rate },
        } if *shape > 3.0 => Some(acf_closed_gamma_I(shape - 3.0, tau / rate)),
        MixingSpec::TypeIII(PairLaw::Product {
            first: Measure1D::Dirac { x: r },
            second: Measure1D::Dirac { x: psi },
        }) => Some(-(r * tau * psi.cos()).exp() * (r * tau * psi.sin() - psi).sin() / psi.sin()),
        _ => None,
    }
}

fn cmd_acf(spec: &ProcessSpec, out: &Path, tau_max: f64, n_points: usize, with_closed: bool) -> CmdResult {
    let taus = lag_grid(tau_max, n_points)?;
    let table = acf(spec, &taus)?;
    let path = write(out, "acf.csv", &table.to_csv())?;
    println!("wrote {}", path.display());
    if with_closed {
        if closed_form(spec, 0.0).is_some() {
            let mut s = String::from("tau,r_closed\n");
            for t in &taus {
                let _ = writeln!(s, "{},{}", fmt_f64(*t), fmt_f64(closed_form(spec, *t).unwrap_or(f64::NAN)));
            }
            let path = write(out, "acf_closed.csv", &s)?;
            println!("wrote {}", path.display());
        } else {
            println!("no closed form for this model");
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SimMetadata<'a> {
    seed: u64,
    fingerprint: &'a str,
    config: &'a SimConfig,
    warnings: Vec<String>,
}

fn cmd_simulate(spec: &ProcessSpec, config: &SimConfig, out: &Path) -> CmdResult {
    let paths = simulate_paths(spec, config)?;
    let atoms = crate::simulate::discretize_mixing_with(&spec.mixing, config.n_atoms, config.scheme)?;
    let warnings = config.validate(&atoms)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let p = write(out, "paths.csv", &paths.to_csv())?;
    let meta = SimMetadata {
        seed: paths.seed,
        fingerprint: &paths.spec_fingerprint,
        config,
        warnings,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Failure::input(e.to_string()))?;
    let m = write(out, "paths.json", &(json + "\n"))?;
    println!("wrote {} and {}", p.display(), m.display());
    Ok(EXIT_OK)
}

fn cmd_compare(spec: &ProcessSpec, config: &SimConfig, taus: &[f64], out: &Path) -> CmdResult {
    let report = compare(spec, config, taus)?;
    let path = write(out, "compare.csv", &report.to_csv())?;
    println!("wrote {}", path.display());
    println!("{}", report.summary());
    Ok(if report.pass { EXIT_OK } else { EXIT_REGRESSION })
}

/// Built-in figure model: Gaussian noise, `r ~ Gamma(shape, 1)`, `ψ ~ sin2`.
pub fn figure_model(shape: f64) -> crate::Result<ProcessSpec> {
    ProcessSpec::new(
        LevyTriplet::gaussian(0.0, 1.0),
        MixingSpec::type3(Measure1D::gamma(shape, 1.0), Measure1D::Sin2)?,
    )
}

/// Sign changes of `r` over lags `> 0`, ignoring values below
/// [`SIGN_THRESHOLD`] in magnitude.
pub fn sign_changes(table: &AcfTable) -> usize {
    let mut last = 0.0f64;
    let mut changes = 0;
    for row in table.rows().iter().filter(|r| r.tau > 0.0) {
        let r = row.r_analytic;
        if r.abs() <= SIGN_THRESHOLD {
            continue;
        }
        if last != 0.0 && r.signum() != last.signum() {
            changes += 1;
        }
        last = r;
    }
    changes
}

fn cmd_figure3(out: &Path) -> CmdResult {
    let taus = lag_grid(FIGURE_TAU_MAX, FIGURE_POINTS)?;
    let mut rendered = Vec::new();
    let mut problems = Vec::new();
    for shape in FIGURE_SHAPES {
        let table = acf(&figure_model(shape)?, &taus)?;
        let changes = sign_changes(&table);
        let oscillating = shape > 10.0;
        println!("shape {shape}: {changes} sign change(s) on (0, {FIGURE_TAU_MAX}]");
        if (changes > 0) != oscillating {
            problems.push(format!(
                "shape {shape}: expected {} sign changes, found {changes}",
                if oscillating { "at least one" } else { "no" }
            ));
        }
        if (table.rows()[0].r_analytic - 1.0).abs() > 1e-12 {
            problems.push(format!("shape {shape}: r(0) = {}", table.rows()[0].r_analytic));
        }
        rendered.push((shape, table));
    }
    if !problems.is_empty() {
        return Err(Failure {
            code: EXIT_REGRESSION,
            message: problems.join("; "),
        });
    }
    for (shape, table) in &rendered {
        let stem = format!("figure3_shape_{shape}");
        write(out, &format!("{stem}.csv"), &table.to_csv())?;
        let title = format!("type III, r ~ Gamma({shape}, 1), ψ ~ sin2");
        let path = write(out, &format!("{stem}.svg"), &svg_line_plot(&table.taus(), &table.r_analytic(), &title))?;
        println!("wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

/// A fixed-layout SVG line plot with axes, ticks and a zero line.
pub fn svg_line_plot(x: &[f64], y: &[f64], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let (x0, x1) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(1.0));
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let ymin = y.iter().copied().fold(0.0f64, f64::min).min(-0.2);
    let (y0, y1) = ((ymin * 5.0).floor() / 5.0, 1.0);
    let px = |v: f64| L + (v - x0) / (x1 - x0) * (W - L - R);
    let py = |v: f64| T + (y1 - v) / (y1 - y0) * (H - T - B);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{L:.2} {T:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    for i in 0..=8 {
        let v = x0 + (x1 - x0) * i as f64 / 8.0;
        let p = px(v);
        let _ = writeln!(
            s,
            r#"<line x1="{p:.2}" y1="{:.2}" x2="{p:.2}" y2="{:.2}" stroke="black"/><text x="{p:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            H - B,
            H - B + 5.0,
            H - B + 20.0,
            tick_label(v)
        );
    }
    let n_y = ((y1 - y0) / 0.2).round() as usize;
    for i in 0..=n_y {
        let v = y0 + 0.2 * i as f64;
        let p = py(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{p:.2}" x2="{L:.2}" y2="{p:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            L - 5.0,
            L - 8.0,
            p + 4.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{L:.2}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        py(0.0),
        W - R
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">τ</text>"#, (L + W - R) / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">r(τ)</text>"#,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0
    );
    let mut points = String::new();
    for (a, b) in x.iter().zip(y) {
        let _ = write!(points, "{:.2},{:.2} ", px(*a), py(*b));
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        points.trim_end()
    );
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
