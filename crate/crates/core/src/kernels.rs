//! CAR(2) kernels.
//!
//! A CAR(2) process with companion matrix `A = [[0, 1], [−a₂, −a₁]]` has
//! kernel `g(u) = bᵀ e^{Au} e` with `b = (1, 0)` and `e = (0, 1)`. The sign of
//! the discriminant `a₁² − 4a₂` picks one of three closed forms:
//!
//! * type I (double root `−a/2`): `g₁(u) = u e^{−au/2}`;
//! * type II (roots `−λ`, `−λθ`): `g₂(u) = (e^{−λθu} − e^{−λu}) / (λ(1−θ))`;
//! * type III (roots `r e^{±iψ}`): `g₃(u) = e^{ru cos ψ} sin(ru sin ψ) / (r sin ψ)`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mixing::{ConditionReport, ParamPoint};
use crate::quad::{Divergence, Integral};

/// Default relative discriminant tolerance of [`classify`].
pub const DEFAULT_TOL: f64 = 1e-9;

/// Coefficients of `z² + a₁z + a₂`; both positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Car2Params {
    pub a1: f64,
    pub a2: f64,
}

impl Car2Params {
    pub fn new(a1: f64, a2: f64) -> Result<Self> {
        if !(a1 > 0.0 && a2 > 0.0 && a1.is_finite() && a2.is_finite()) {
            return Err(Error::NotStable { a1, a2 });
        }
        Ok(Self { a1, a2 })
    }

    /// Companion matrix `[[0, 1], [−a₂, −a₁]]`.
    pub fn companion(&self) -> DMatrix<f64> {
        companion(&[self.a1, self.a2])
    }
}

/// Kernel type with its canonical parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelType {
    TypeI { a: f64 },
    TypeII { lambda: f64, theta: f64 },
    TypeIII { r: f64, psi: f64 },
}

impl KernelType {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            KernelType::TypeI { a } => g1(a, u),
            KernelType::TypeII { lambda, theta } => g2(lambda, theta, u),
            KernelType::TypeIII { r, psi } => g3(r, psi, u),
        }
    }

    /// Rate `c` of the envelope `|g(u)| ≤ u e^{−cu}`.
    pub fn decay_rate(&self) -> f64 {
        match *self {
            KernelType::TypeI { a } => 0.5 * a,
            KernelType::TypeII { lambda, theta } => lambda * theta,
            KernelType::TypeIII { r, psi } => -r * psi.cos(),
        }
    }

    pub fn car2(&self) -> Result<Car2Params> {
        match *self {
            KernelType::TypeI { a } => Car2Params::new(a, 0.25 * a * a),
            KernelType::TypeII { lambda, theta } => from_type2(lambda, theta),
            KernelType::TypeIII { r, psi } => from_type3(r, psi),
        }
    }
}

impl From<ParamPoint> for KernelType {
    fn from(p: ParamPoint) -> Self {
        match p {
            ParamPoint::I { a } => KernelType::TypeI { a },
            ParamPoint::II { lambda, theta } => KernelType::TypeII { lambda, theta },
            ParamPoint::III { r, psi } => KernelType::TypeIII { r, psi },
        }
    }
}

/// Classifies `(a₁, a₂)` by the sign of `d = a₁² − 4a₂`, with
/// `|d| ≤ tol·max(a₁², 1)` counted as a double root.
pub fn classify(p: Car2Params, tol: f64) -> Result<KernelType> {
    let Car2Params { a1, a2 } = Car2Params::new(p.a1, p.a2)?;
    let d = a1 * a1 - 4.0 * a2;
    let band = tol * (a1 * a1).max(1.0);
    Ok(if d.abs() <= band {
        KernelType::TypeI { a: a1 }
    } else if d > 0.0 {
        let lambda = 0.5 * (a1 + d.sqrt());
        // λθ = a₂/λ avoids the cancellation in (a₁ − √d)/2
        KernelType::TypeII {
            lambda,
            theta: a2 / (lambda * lambda),
        }
    } else {
        KernelType::TypeIII {
            r: a2.sqrt(),
            psi: (-d).sqrt().atan2(-a1),
        }
    })
}

/// `(λ, θ) ↦ (a₁, a₂) = (λ(1+θ), λ²θ)`.
pub fn from_type2(lambda: f64, theta: f64) -> Result<Car2Params> {
    if !(lambda > 0.0 && lambda.is_finite()) || !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "type II needs λ > 0 and θ ∈ (0, 1) (got {lambda}, {theta})"
        )));
    }
    Car2Params::new(lambda * (1.0 + theta), lambda * lambda * theta)
}

/// `(r, ψ) ↦ (a₁, a₂) = (−2r cos ψ, r²)`.
pub fn from_type3(r: f64, psi: f64) -> Result<Car2Params> {
    if !(r > 0.0 && r.is_finite()) || !(psi > FRAC_PI_2 && psi < PI) {
        return Err(Error::InvalidParameter(format!(
            "type III needs r > 0 and ψ ∈ (π/2, π) (got {r}, {psi})"
        )));
    }
    Car2Params::new(-2.0 * r * psi.cos(), r * r)
}

/// Type I kernel `u e^{−au/2}`.
pub fn g1(a: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    u * (-0.5 * a * u).exp()
}

/// Type II kernel in the cancellation-free form
/// `e^{−λθu}(1 − e^{−λ(1−θ)u}) / (λ(1−θ))`.
pub fn g2(lambda: f64, theta: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let k = lambda * (1.0 - theta);
    (-lambda * theta * u).exp() * (-(-k * u).exp_m1()) / k
}

/// `(e^{ξ₁u} − e^{ξ₂u}) / (ξ₁ − ξ₂)` for real distinct eigenvalues.
pub fn g2_from_eigs(xi1: f64, xi2: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let (hi, lo) = if xi1 >= xi2 { (xi1, xi2) } else { (xi2, xi1) };
    let k = hi - lo;
    (hi * u).exp() * (-(-k * u).exp_m1()) / k
}

/// Type III kernel `e^{ru cos ψ} sin(ru sin ψ) / (r sin ψ)`.
pub fn g3(r: f64, psi: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let s = psi.sin();
    (r * u * psi.cos()).exp() * (r * u * s).sin() / (r * s)
}

/// Companion matrix of `z^p + c₁z^{p−1} + … + c_p`: ones on the
/// superdiagonal, `(−c_p, …, −c₁)` in the last row.
pub fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let p = coeffs.len();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..p {
        a[(p - 1, j)] = -coeffs[p - 1 - j];
    }
    a
}

/// Padé (13, 13) coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a (13, 13) Padé
/// approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 0.5f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::InvalidParameter("Padé denominator is singular".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `bᵀ e^{Au} e_p` with `e_p` the last standard basis vector.
pub fn carma_kernel(a: &DMatrix<f64>, b: &DVector<f64>, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::InvalidParameter(format!("kernel argument must be ≥ 0 (got {u})")));
    }
    if !a.is_square() || a.nrows() != b.len() || b.is_empty() {
        return Err(Error::InvalidParameter("dimension mismatch between A and b".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("b has non-finite entries".into()));
    }
    let e = expm(&(a * u))?;
    let p = b.len();
    Ok(b.dot(&e.column(p - 1)))
}

/// Coefficients `(c₁, …, c_p)` of a companion matrix, or `None` if `A` is not
/// of companion form.
fn companion_coeffs(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let p = a.nrows();
    if !a.is_square() || p == 0 {
        return None;
    }
    for i in 0..p - 1 {
        for j in 0..p {
            let want = if j == i + 1 { 1.0 } else { 0.0 };
            if a[(i, j)] != want {
                return None;
            }
        }
    }
    Some((0..p).map(|k| -a[(p - 1, p - 1 - k)]).collect())
}

/// Bound `Σ mass·‖P‖₂‖P⁻¹‖₂ / (−max Re σ(A) − 1)` over discrete atoms of
/// companion matrices, with `P` the (Vandermonde) eigenvector matrix.
pub fn spectral_bound_check(atoms: &[(DMatrix<f64>, f64)]) -> ConditionReport {
    let mut rep = ConditionReport::new();
    let mut total = 0.0;
    let mut applicable = true;
    for (k, (a, mass)) in atoms.iter().enumerate() {
        if companion_coeffs(a).is_none() {
            rep.diagnostics.push(format!("atom {k}: bound inapplicable (not a companion matrix)"));
            applicable = false;
            continue;
        }
        let eig: Vec<Complex64> = a.clone().complex_eigenvalues().iter().copied().collect();
        let max_re = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let scale = eig.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let mut distinct = true;
        for i in 0..eig.len() {
            for j in i + 1..eig.len() {
                if (eig[i] - eig[j]).norm() <= 1e-8 * scale {
                    distinct = false;
                }
            }
        }
        if !distinct {
            rep.diagnostics.push(format!("atom {k}: bound inapplicable (defective matrix, repeated eigenvalue)"));
            applicable = false;
            continue;
        }
        // eigenvalues on the shifted axis count as violations up to rounding
        if !(max_re < -1.0 - 1e-12 * scale) {
            rep.diagnostics.push(format!(
                "atom {k}: bound inapplicable (max Re σ(A) = {max_re} is not < −1)"
            ));
            applicable = false;
            continue;
        }
        let p = eig.len();
        let vander = DMatrix::<Complex64>::from_fn(p, p, |i, j| eig[j].powu(i as u32));
        let sv = vander.singular_values();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let eta = smax / smin;
        total += mass * eta / (-max_re - 1.0);
    }
    let integral = if applicable && total.is_finite() {
        Integral::Finite { value: total, error: 0.0 }
    } else {
        Integral::Divergent(Divergence::Bound { partial: f64::INFINITY })
    };
    rep.push("Σ mass·η(A)/(−max Re σ(A) − 1)", integral, true);
    rep
}
