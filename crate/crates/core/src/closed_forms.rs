//! Laplace-domain closed forms: the `sinh(τr)/r` kernel, the annulus kernels
//! `H_j`, the shell aggregates `𝓗₊`, `𝓗₋` (two independent paths each), the ball
//! potentials `v_j`, and quadrature oracles that check each of them.
//!
//! Exponentials are only ever formed with non-positive arguments. Functions
//! suffixed `_scaled` return the value multiplied by a stated `e^{τc}`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::analytic_waves::{dv_dt_radial, v_radial, SourcePulse};
use crate::geometry::{
    domain_volume_quadrature, unit_sphere_rule, DomainSpec, Vec3, VolumeQuadrature,
};
use crate::logspace::LogValue;
use crate::quadrature::{adaptive, composite_rule, graded_edges, panel_edges};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("Laplace parameter must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("pulse radius must be positive, got {0}")]
    NonPositiveEta(f64),
    #[error("horizon T = {t} must exceed the pulse radius {eta}")]
    HorizonTooShort { t: f64, eta: f64 },
    #[error("annulus radii must satisfy 0 <= R1 < R2, got ({r1}, {r2})")]
    InvalidAnnulus { r1: f64, r2: f64 },
    #[error("kernel index must be one of -1, 0, 1, 2, got {0}")]
    InvalidIndex(i32),
    #[error(
        "evaluation point at distance {distance} is outside the admissible ball of radius {radius}"
    )]
    PointOutside { distance: f64, radius: f64 },
    #[error("evaluation point coincides with the center")]
    PointAtCenter,
}

/// `(τ, T, η)` with `τ > 0` and `T > η > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParams {
    pub tau: f64,
    pub t: f64,
    pub eta: f64,
}

impl LaplaceParams {
    pub fn new(tau: f64, t: f64, eta: f64) -> Result<Self, ClosedFormError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(ClosedFormError::NonPositiveTau(tau));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ClosedFormError::NonPositiveEta(eta));
        }
        if !(t > eta && t.is_finite()) {
            return Err(ClosedFormError::HorizonTooShort { t, eta });
        }
        Ok(Self { tau, t, eta })
    }
}

/// `B_{R2}(p) ∖ B_{R1}(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellAnnulus {
    pub r1: f64,
    pub r2: f64,
}

impl ShellAnnulus {
    pub fn new(r1: f64, r2: f64) -> Result<Self, ClosedFormError> {
        if !(r1 >= 0.0 && r1 < r2 && r2.is_finite()) {
            return Err(ClosedFormError::InvalidAnnulus { r1, r2 });
        }
        Ok(Self { r1, r2 })
    }

    /// Degenerate annuli with `R1 == R2` are allowed here; every `H_j` is 0.
    pub fn closed(r1: f64, r2: f64) -> Result<Self, ClosedFormError> {
        if !(r1 >= 0.0 && r1 <= r2 && r2.is_finite()) {
            return Err(ClosedFormError::InvalidAnnulus { r1, r2 });
        }
        Ok(Self { r1, r2 })
    }
}

fn check_index(j: i32) -> Result<(), ClosedFormError> {
    if (-1..=2).contains(&j) {
        Ok(())
    } else {
        Err(ClosedFormError::InvalidIndex(j))
    }
}

// ---------------------------------------------------------------------------
// sinh kernel

/// `sinh(τr)/r` with the value `τ` at `r = 0`. Overflows to `inf` once
/// `τr ≳ 710`; use [`sinh_kernel_log`] there.
pub fn sinh_kernel(tau: f64, x: &Vec3, p: &Vec3) -> f64 {
    sinh_kernel_r(tau, (x - p).norm())
}

pub fn sinh_kernel_r(tau: f64, r: f64) -> f64 {
    let z = tau * r;
    if z < 1e-4 {
        tau * (1.0 + z * z / 6.0)
    } else {
        z.sinh() / r
    }
}

/// Log channel of `sinh(τr)/r`, valid for any `τr`.
pub fn sinh_kernel_log(tau: f64, r: f64) -> LogValue {
    let z = tau * r;
    if z < 1e-4 {
        return LogValue::new(1, tau.ln() + (z * z / 6.0).ln_1p());
    }
    LogValue::new(1, z + (-(-2.0 * z).exp_m1() * 0.5).ln() - r.ln())
}

/// `e^{−τr}·d/dr[sinh(τr)/r]`, which is non-negative and bounded.
fn sinh_kernel_dr_scaled(tau: f64, r: f64) -> f64 {
    let z = tau * r;
    if z < 0.1 {
        let z2 = z * z;
        let series = z * z2 * (1.0 / 3.0 + z2 * (1.0 / 30.0 + z2 * (1.0 / 840.0 + z2 / 45360.0)));
        series / (r * r) * (-z).exp()
    } else {
        let e = (-2.0 * z).exp();
        (z * (1.0 + e) + (-2.0 * z).exp_m1()) / (2.0 * r * r)
    }
}

// ---------------------------------------------------------------------------
// H_j kernels

/// Polynomial `P_j(R)` such that `H_j = P_j(R1)e^{−τR1} − P_j(R2)e^{−τR2}`.
pub fn h_poly(j: i32, tau: f64, r: f64) -> f64 {
    let it = 1.0 / tau;
    match j {
        -1 => 1.0,
        0 => r + it,
        1 => r * r + 2.0 * it * r + 2.0 * it * it,
        _ => r.powi(3) + 3.0 * it * r * r + 6.0 * it * it * r + 6.0 * it.powi(3),
    }
}

/// `(P_j(R1) − P_j(R2)) / (R1 − R2)`, exact divided difference.
fn h_poly_divided(j: i32, tau: f64, r1: f64, r2: f64) -> f64 {
    let it = 1.0 / tau;
    match j {
        -1 => 0.0,
        0 => 1.0,
        1 => r1 + r2 + 2.0 * it,
        _ => r1 * r1 + r1 * r2 + r2 * r2 + 3.0 * it * (r1 + r2) + 6.0 * it * it,
    }
}

/// `e^{τR1}·H_j(τ; R1, R2)`. Thin annuli (`τΔ ≤ 1`) use a divided-difference
/// form that avoids cancellation between the two end terms.
pub fn h_j_scaled(j: i32, tau: f64, annulus: &ShellAnnulus) -> Result<f64, ClosedFormError> {
    check_index(j)?;
    let (r1, r2) = (annulus.r1, annulus.r2);
    let delta = r2 - r1;
    if tau * delta > 1.0 {
        return Ok(h_poly(j, tau, r1) - h_poly(j, tau, r2) * (-tau * delta).exp());
    }
    let em = (-tau * delta).exp_m1();
    Ok(-delta * h_poly_divided(j, tau, r1, r2) - h_poly(j, tau, r2) * em)
}

/// `H_j(τ; R1, R2)`.
pub fn h_j(j: i32, tau: f64, annulus: &ShellAnnulus) -> Result<f64, ClosedFormError> {
    Ok(h_j_scaled(j, tau, annulus)? * (-tau * annulus.r1).exp())
}

/// `e^{τR1}(R1^k e^{−τR1} − R2^k e^{−τR2})` without cancellation.
fn power_gap_scaled(k: i32, tau: f64, r1: f64, r2: f64) -> f64 {
    let delta = r2 - r1;
    if tau * delta > 1.0 {
        return r1.powi(k) - r2.powi(k) * (-tau * delta).exp();
    }
    let divided = match k {
        0 => 0.0,
        1 => 1.0,
        2 => r1 + r2,
        _ => r1 * r1 + r1 * r2 + r2 * r2,
    };
    -delta * divided - r2.powi(k) * (-tau * delta).exp_m1()
}

/// `e^{τR1}·H_j` built by the upward recurrence
/// `H_k = R1^k e^{−τR1} − R2^k e^{−τR2} + (k/τ) H_{k−1}` from `H_{−1}`.
pub fn h_j_recurrence_scaled(
    j: i32,
    tau: f64,
    annulus: &ShellAnnulus,
) -> Result<f64, ClosedFormError> {
    check_index(j)?;
    let (r1, r2) = (annulus.r1, annulus.r2);
    let mut h = -(-tau * (r2 - r1)).exp_m1();
    for k in 0..=j {
        h = power_gap_scaled(k + 1, tau, r1, r2) + f64::from(k + 1) / tau * h;
    }
    Ok(h)
}

/// One recurrence step: `H_{k}` from a supplied `H_{k−1}`, both unscaled.
pub fn h_recurrence_step(k: i32, tau: f64, annulus: &ShellAnnulus, h_prev: f64) -> f64 {
    let (r1, r2) = (annulus.r1, annulus.r2);
    r1.powi(k + 1) * (-tau * r1).exp() - r2.powi(k + 1) * (-tau * r2).exp()
        + f64::from(k + 1) / tau * h_prev
}

/// Radial oracle `τ ∫_{R1}^{R2} r^{j+1} e^{−τr} dr`, scaled by `e^{τR1}`.
pub fn h_j_radial_oracle_scaled(
    j: i32,
    tau: f64,
    annulus: &ShellAnnulus,
) -> Result<f64, ClosedFormError> {
    check_index(j)?;
    let (r1, r2) = (annulus.r1, annulus.r2);
    let scale = r2.max(1.0).powi(j + 1);
    Ok(tau
        * adaptive(20, r1, r2, &[], 1e-17 * scale, |r| {
            r.powi(j + 1) * (-tau * (r - r1)).exp()
        }))
}

/// `I_j = (1/4π)∫_{annulus} e^{−τ|x−y|}/|x−y| · |y−p|^j dy` by a radial
/// Gauss–Legendre × spherical product rule in a fixed frame.
pub fn i_j_oracle(
    j: i32,
    tau: f64,
    annulus: &ShellAnnulus,
    x: &Vec3,
    p: &Vec3,
    order: usize,
) -> Result<f64, ClosedFormError> {
    check_index(j)?;
    let d = x - p;
    let dist = d.norm();
    if dist >= annulus.r1 {
        return Err(ClosedFormError::PointOutside {
            distance: dist,
            radius: annulus.r1,
        });
    }
    if dist == 0.0 {
        return Err(ClosedFormError::PointAtCenter);
    }
    let sphere = unit_sphere_rule(order);
    let radial = composite_rule(order, &[annulus.r1, annulus.r2]);
    let mut sum = 0.0;
    for &(r, wr) in &radial {
        let mut shell = 0.0;
        for (dir, wa) in &sphere {
            let s = (d - dir * r).norm();
            shell += wa * (-tau * (s - annulus.r1)).exp() / s;
        }
        sum += wr * r.powi(2 + j) * shell;
    }
    Ok(sum / (4.0 * PI) * (-tau * annulus.r1).exp())
}

/// Closed form `I_j = H_j · sinh(τ|x−p|)/|x−p| / τ²`.
pub fn i_j_closed(
    j: i32,
    tau: f64,
    annulus: &ShellAnnulus,
    x: &Vec3,
    p: &Vec3,
) -> Result<f64, ClosedFormError> {
    Ok(h_j(j, tau, annulus)? * sinh_kernel(tau, x, p) / (tau * tau))
}

// ---------------------------------------------------------------------------
// Shell aggregates

fn plus_coefficients(tau: f64, t: f64, eta: f64) -> [f64; 4] {
    [
        tau * (eta - 2.0 * t) * (eta + t).powi(2) / 12.0 + 0.5 * t * (eta + t),
        0.5 * tau * t * (eta + t) - 0.5 * (eta + 2.0 * t),
        -0.25 * tau * (eta + 2.0 * t) + 0.5,
        tau / 6.0,
    ]
}

fn minus_coefficients(tau: f64, t: f64, eta: f64) -> [f64; 4] {
    [
        tau * (eta + 2.0 * t) * (eta - t).powi(2) / 12.0 + 0.5 * t * (eta - t),
        0.5 * tau * t * (eta - t) - 0.5 * (eta - 2.0 * t),
        -0.25 * tau * (eta - 2.0 * t) - 0.5,
        -tau / 6.0,
    ]
}

/// Value of a combination together with the sum of the magnitudes of its
/// terms, which bounds its absolute rounding error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Combination {
    pub value: f64,
    pub magnitude: f64,
}

fn combine(terms: impl IntoIterator<Item = f64>) -> Combination {
    let mut value = 0.0;
    let mut magnitude = 0.0;
    for t in terms {
        value += t;
        magnitude += t.abs();
    }
    Combination { value, magnitude }
}

/// `e^{τT}·𝓗₊` from the `H_j(τ; T, T+η)` combination.
pub fn script_h_plus_kernels_scaled(params: &LaplaceParams) -> Combination {
    let LaplaceParams { tau, t, eta } = *params;
    let ann = ShellAnnulus { r1: t, r2: t + eta };
    let c = plus_coefficients(tau, t, eta);
    combine((0..4).map(|k| c[k] * h_j_scaled(k as i32 - 1, tau, &ann).expect("valid index")))
}

/// `e^{τ(T−η)}·𝓗₋` from the `H_j(τ; T−η, T)` combination.
pub fn script_h_minus_kernels_scaled(params: &LaplaceParams) -> Combination {
    let LaplaceParams { tau, t, eta } = *params;
    let ann = ShellAnnulus { r1: t - eta, r2: t };
    let c = minus_coefficients(tau, t, eta);
    combine((0..4).map(|k| c[k] * h_j_scaled(k as i32 - 1, tau, &ann).expect("valid index")))
}

/// Cubic `f_τ(ξ)` of the `𝓗₊` polynomial form.
pub fn f_tau(params: &LaplaceParams, xi: f64) -> f64 {
    f_tau_dd(params, xi).to_f64()
}

/// Cubic `g_τ(ξ)` of the `𝓗₋` polynomial form.
pub fn g_tau(params: &LaplaceParams, xi: f64) -> f64 {
    g_tau_dd(params, xi).to_f64()
}

// The cubics cancel heavily at the points where they are evaluated (terms of
// size τT³ leave results of size η/τ), so they run in double-double.
fn f_tau_dd(params: &LaplaceParams, xi: f64) -> Dd {
    let (tau, t, eta) = (
        Dd::from(params.tau),
        Dd::from(params.t),
        Dd::from(params.eta),
    );
    let xi = Dd::from(xi);
    let one = Dd::from(1.0);
    let two = Dd::from(2.0);
    let e2t = eta + t * 2.0;
    let ept = eta + t;
    let c3 = tau / 6.0;
    let c2 = one - tau * e2t / 4.0;
    let c1 = tau * t * ept / 2.0 - e2t + two / tau;
    let c0 = tau * (eta - t * 2.0) * ept * ept / 12.0 + t * ept - e2t / tau + two / (tau * tau);
    ((c3 * xi + c2) * xi + c1) * xi + c0
}

fn g_tau_dd(params: &LaplaceParams, xi: f64) -> Dd {
    let (tau, t, eta) = (
        Dd::from(params.tau),
        Dd::from(params.t),
        Dd::from(params.eta),
    );
    let xi = Dd::from(xi);
    let one = Dd::from(1.0);
    let two = Dd::from(2.0);
    let em2t = eta - t * 2.0;
    let emt = eta - t;
    let c3 = -(tau / 6.0);
    let c2 = -(one + tau * em2t / 4.0);
    let c1 = tau * t * emt / 2.0 - em2t - two / tau;
    let c0 = tau * (eta + t * 2.0) * emt * emt / 12.0 + t * emt - em2t / tau - two / (tau * tau);
    ((c3 * xi + c2) * xi + c1) * xi + c0
}

/// `e^{τT}·𝓗₊ = f_τ(T) − f_τ(T+η)e^{−τη}`.
pub fn script_h_plus_poly_scaled(params: &LaplaceParams) -> Combination {
    let LaplaceParams { tau, t, eta } = *params;
    combine([
        f_tau(params, t),
        -f_tau(params, t + eta) * (-tau * eta).exp(),
    ])
}

/// `e^{τ(T−η)}·𝓗₋ = g_τ(T−η) − g_τ(T)e^{−τη}`.
pub fn script_h_minus_poly_scaled(params: &LaplaceParams) -> Combination {
    let LaplaceParams { tau, t, eta } = *params;
    combine([
        g_tau(params, t - eta),
        -g_tau(params, t) * (-tau * eta).exp(),
    ])
}

/// `𝓗₊` via the kernel combination.
pub fn script_h_plus(params: &LaplaceParams) -> f64 {
    script_h_plus_kernels_scaled(params).value * (-params.tau * params.t).exp()
}

/// `𝓗₊` via `f_τ`.
pub fn script_h_plus_poly(params: &LaplaceParams) -> f64 {
    script_h_plus_poly_scaled(params).value * (-params.tau * params.t).exp()
}

/// `𝓗₋` via the kernel combination.
pub fn script_h_minus(params: &LaplaceParams) -> f64 {
    script_h_minus_kernels_scaled(params).value * (-params.tau * (params.t - params.eta)).exp()
}

/// `𝓗₋` via `g_τ`.
pub fn script_h_minus_poly(params: &LaplaceParams) -> f64 {
    script_h_minus_poly_scaled(params).value * (-params.tau * (params.t - params.eta)).exp()
}

/// `e^{τ(T−η)}(𝓗₊ + 𝓗₋) = (η − 2/τ)/τ + (4/τ²)e^{−τη} − (η + 2/τ)e^{−2τη}/τ`.
pub fn script_h_sum_scaled(params: &LaplaceParams) -> f64 {
    let LaplaceParams { tau, eta, .. } = *params;
    (eta - 2.0 / tau) / tau + 4.0 / (tau * tau) * (-tau * eta).exp()
        - (eta + 2.0 / tau) / tau * (-2.0 * tau * eta).exp()
}

/// `𝓗₊ + 𝓗₋` from the three-exponential closed form.
pub fn script_h_sum(params: &LaplaceParams) -> f64 {
    script_h_sum_scaled(params) * (-params.tau * (params.t - params.eta)).exp()
}

/// Log channel of `𝓗₊ + 𝓗₋`.
pub fn script_h_sum_log(params: &LaplaceParams) -> LogValue {
    LogValue::from_scaled(
        script_h_sum_scaled(params),
        -params.tau * (params.t - params.eta),
    )
}

/// Volume integral `(τ²/4π)∫ e^{−τ|x−y|}/|x−y| (τv(y,T) − ∂ₜv(y,T)) dy` over
/// `T−η < |y−p| < T+η`, split at `|y−p| = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellIntegral {
    /// `T − η < |y−p| < T`.
    pub inner: f64,
    /// `T < |y−p| < T + η`.
    pub outer: f64,
}

impl ShellIntegral {
    pub fn total(&self) -> f64 {
        self.inner + self.outer
    }
}

/// Quadrature evaluation of the shell integral, with `order` radial points per
/// half-shell and an order-`order` spherical rule.
pub fn lemma22_lhs_oracle(
    params: &LaplaceParams,
    x: &Vec3,
    p: &Vec3,
    order: usize,
) -> Result<ShellIntegral, ClosedFormError> {
    let LaplaceParams { tau, t, eta } = *params;
    let d = x - p;
    let dist = d.norm();
    if dist >= t - eta {
        return Err(ClosedFormError::PointOutside {
            distance: dist,
            radius: t - eta,
        });
    }
    if dist == 0.0 {
        return Err(ClosedFormError::PointAtCenter);
    }
    let sphere = unit_sphere_rule(order);
    let shift = t - eta;
    let half = |a: f64, b: f64| {
        let mut sum = 0.0;
        for (r, wr) in composite_rule(order, &[a, b]) {
            let src = tau * v_radial(eta, r, t) - dv_dt_radial(eta, r, t);
            let mut shell = 0.0;
            for (dir, wa) in &sphere {
                let s = (d - dir * r).norm();
                shell += wa * (-tau * (s - shift)).exp() / s;
            }
            sum += wr * r * r * src * shell;
        }
        sum * tau * tau / (4.0 * PI) * (-tau * shift).exp()
    };
    Ok(ShellIntegral {
        inner: half(t - eta, t),
        outer: half(t, t + eta),
    })
}

/// Closed form of the shell integral, `(𝓗₊ + 𝓗₋)·sinh(τ|x−p|)/|x−p|`.
pub fn lemma22_closed(params: &LaplaceParams, x: &Vec3, p: &Vec3) -> f64 {
    script_h_sum(params) * sinh_kernel(params.tau, x, p)
}

// ---------------------------------------------------------------------------
// Ball potentials

/// `v_j(x) = ∫_{|y|<η} e^{−τ|x−y|}/|x−y| · |y|^j dy` for `|x| < η`.
pub fn appendix_vj(j: i32, tau: f64, eta: f64, x: &Vec3) -> Result<f64, ClosedFormError> {
    check_index(j)?;
    let xi = x.norm();
    if xi >= eta {
        return Err(ClosedFormError::PointOutside {
            distance: xi,
            radius: eta,
        });
    }
    let sk = sinh_kernel_r(tau, xi);
    // (1 − e^{−τξ})/ξ with limit τ
    let ek = if tau * xi < 1e-8 {
        tau * (1.0 - 0.5 * tau * xi)
    } else {
        -(-tau * xi).exp_m1() / xi
    };
    let damp = (-tau * eta).exp();
    let pre = 4.0 * PI / (tau * tau);
    let it = 1.0 / tau;
    Ok(pre
        * match j {
            -1 => ek - damp * sk,
            0 => 1.0 - (eta + it) * damp * sk,
            1 => xi + 2.0 * it * it * ek - damp * (eta * eta + 2.0 * it * eta + 2.0 * it * it) * sk,
            _ => {
                xi * xi + 6.0 * it * it
                    - damp
                        * (eta.powi(3)
                            + 3.0 * eta * eta * it
                            + 6.0 * eta * it * it
                            + 6.0 * it.powi(3))
                        * sk
            }
        })
}

/// `∫₀^η e^{−τ|ξ−r|} r^k dr` for `k = 0..3`, `0 < ξ < η`.
fn abs_moment(k: i32, tau: f64, eta: f64, xi: f64) -> f64 {
    let a = (-tau * xi).exp();
    let b = (-tau * (eta - xi)).exp();
    let q = tau * tau * eta * eta + 2.0 * tau * eta + 2.0;
    match k {
        0 => 2.0 / tau - a / tau - b / tau,
        1 => 2.0 * xi / tau + a / (tau * tau) - b / tau * (eta + 1.0 / tau),
        2 => ((2.0 * tau * tau * xi * xi + 4.0) - 2.0 * a - q * b) / tau.powi(3),
        _ => {
            2.0 * xi.powi(3) / tau - b * eta.powi(3) / tau + 6.0 * a / tau.powi(4)
                - 3.0 / tau.powi(4) * (q * b - 4.0 * tau * xi)
        }
    }
}

/// `∫₀^η e^{−τ(ξ+r)} r^k dr` for `k = 0..3`.
fn sum_moment(k: i32, tau: f64, eta: f64, xi: f64) -> f64 {
    let a = (-tau * xi).exp();
    let c = (-tau * (xi + eta)).exp();
    let q = tau * tau * eta * eta + 2.0 * tau * eta + 2.0;
    let inner = -(-tau * eta).exp() * q + 2.0;
    match k {
        0 => a / tau - c / tau,
        1 => a / (tau * tau) - c / tau * (eta + 1.0 / tau),
        2 => a * inner / tau.powi(3),
        _ => -eta.powi(3) * c / tau + 3.0 / tau.powi(4) * a * inner,
    }
}

/// `K_j = ∫₀^η (e^{−τ|ξ−r|} − e^{−τ(ξ+r)}) r^{1+j} dr` from the moment
/// antiderivatives.
pub fn k_j_from_moments(j: i32, tau: f64, eta: f64, xi: f64) -> Result<f64, ClosedFormError> {
    check_index(j)?;
    Ok(abs_moment(j + 1, tau, eta, xi) - sum_moment(j + 1, tau, eta, xi))
}

/// `K_j` from its simplified closed form.
pub fn k_j(j: i32, tau: f64, eta: f64, xi: f64) -> Result<f64, ClosedFormError> {
    check_index(j)?;
    let e = (-tau * eta).exp();
    let sh = (tau * xi).sinh();
    Ok(match j {
        -1 => 2.0 / tau * (1.0 - (-tau * xi).exp() - e * sh),
        0 => 2.0 / tau * (xi - (eta + 1.0 / tau) * e * sh),
        1 => {
            2.0 / tau.powi(3)
                * ((tau * tau * xi * xi + 2.0)
                    - 2.0 * (-tau * xi).exp()
                    - (tau * tau * eta * eta + 2.0 * tau * eta + 2.0) * e * sh)
        }
        _ => {
            2.0 * xi.powi(3) / tau + 12.0 / tau.powi(3) * xi
                - 2.0 / tau
                    * (eta.powi(3)
                        + 3.0 * eta * eta / tau
                        + 6.0 * eta / tau.powi(2)
                        + 6.0 / tau.powi(3))
                    * e
                    * sh
        }
    })
}

/// `v_j(x) = 2π K_j / (ξτ)` with `K_j` from the moment antiderivatives.
pub fn appendix_vj_via_moments(
    j: i32,
    tau: f64,
    eta: f64,
    x: &Vec3,
) -> Result<f64, ClosedFormError> {
    let xi = x.norm();
    if xi >= eta {
        return Err(ClosedFormError::PointOutside {
            distance: xi,
            radius: eta,
        });
    }
    if xi == 0.0 {
        return Err(ClosedFormError::PointAtCenter);
    }
    Ok(2.0 * PI / (xi * tau) * k_j_from_moments(j, tau, eta, xi)?)
}

/// 3-D quadrature of `v_j(x)` in spherical coordinates centered at `x`, with
/// the polar axis pointing at the origin. Panels are graded toward the
/// polar axis and toward `s = |x|`, where the weight `|y|^j` is singular
/// or non-smooth.
pub fn appendix_vj_ball_oracle(
    j: i32,
    tau: f64,
    eta: f64,
    x: &Vec3,
    order: usize,
) -> Result<f64, ClosedFormError> {
    check_index(j)?;
    let xi = x.norm();
    if xi >= eta {
        return Err(ClosedFormError::PointOutside {
            distance: xi,
            radius: eta,
        });
    }
    if xi == 0.0 {
        return Err(ClosedFormError::PointAtCenter);
    }
    let levels = 14;
    // θ ∈ [0, π] measured from −x̂; grade toward θ = 0.
    let theta_edges = graded_edges(0.0, PI, false, 0.5, levels);
    let theta_rule = composite_rule(order, &theta_edges);
    let n_az = 2 * order;
    let dphi = 2.0 * PI / n_az as f64;
    let axis = -x / xi;
    let (e1, e2) = orthonormal_pair(&axis);
    let mut total = 0.0;
    for &(theta, wt) in &theta_rule {
        let (st, ct) = theta.sin_cos();
        // exit distance along ω from x: |x + sω| = η, with x·ω = −ξ cos θ
        let b = xi * ct;
        let s_max = b + (b * b + eta * eta - xi * xi).sqrt();
        let mut s_edges = vec![0.0];
        if xi < s_max {
            let mut left = graded_edges(0.0, xi, true, 0.5, levels);
            left.remove(0);
            s_edges.extend(left);
            let mut right = graded_edges(xi, s_max, false, 0.5, levels);
            right.remove(0);
            s_edges.extend(right);
        } else {
            s_edges.push(s_max);
        }
        let s_rule = composite_rule(
            order,
            &panel_edges(0.0, s_max, &s_edges[1..s_edges.len() - 1]),
        );
        let mut az_sum = 0.0;
        for k in 0..n_az {
            let phi = (k as f64 + 0.5) * dphi;
            let omega = axis * ct + (e1 * phi.cos() + e2 * phi.sin()) * st;
            let mut radial = 0.0;
            for &(s, ws) in &s_rule {
                let y = x + omega * s;
                radial += ws * s * (-tau * s).exp() * y.norm().powi(j);
            }
            az_sum += dphi * radial;
        }
        total += wt * st * az_sum;
    }
    Ok(total)
}

fn orthonormal_pair(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

// ---------------------------------------------------------------------------
// Kernel energy over a region

/// `(∫_U v², ∫_U |∇v|²)` for `v = sinh(τ|x−p|)/|x−p|`, accumulated in the log
/// domain on a boundary-graded volume rule.
pub fn ball_energy(tau: f64, u: &DomainSpec, p: &Vec3, order: usize) -> (LogValue, LogValue) {
    let reach = u.sup_radius(p);
    let levels = ((2.0 * tau * reach).max(2.0).log2().ceil() as usize) + 4;
    let q = domain_volume_quadrature(u, order, levels);
    kernel_energy_on(tau, &q, p)
}

/// Same as [`ball_energy`] on a caller-supplied volume rule.
pub fn kernel_energy_on(tau: f64, q: &VolumeQuadrature, p: &Vec3) -> (LogValue, LogValue) {
    let mut l2 = Vec::with_capacity(q.nodes.len());
    let mut h1 = Vec::with_capacity(q.nodes.len());
    for (y, &w) in q.nodes.iter().zip(&q.weights) {
        let r = (y - p).norm();
        let lv = sinh_kernel_log(tau, r);
        l2.push(LogValue::new(1, w.ln() + 2.0 * lv.ln_abs()));
        let g = sinh_kernel_dr_scaled(tau, r);
        if g > 0.0 {
            h1.push(LogValue::new(1, w.ln() + 2.0 * (g.ln() + tau * r)));
        }
    }
    (LogValue::sum(l2), LogValue::sum(h1))
}

/// Convenience for the translation test and callers that already hold a pulse.
pub fn sinh_kernel_for(pulse: &SourcePulse, tau: f64, x: &Vec3) -> f64 {
    sinh_kernel(tau, x, &pulse.p)
}

// ---------------------------------------------------------------------------
// Double-double arithmetic for the cubic evaluations above.

#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Dd { hi: s, lo: err }
    }

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd {
            hi: s,
            lo: b - (s - a),
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }
}

impl std::ops::Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let r = Dd::quick_two_sum(s.hi, s.lo + t.hi);
        Dd::quick_two_sum(r.hi, r.lo + t.lo)
    }
}

impl std::ops::Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl std::ops::Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl std::ops::Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        Dd::quick_two_sum(p, e)
    }
}

impl std::ops::Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, o: f64) -> Dd {
        self * Dd::from(o)
    }
}

impl std::ops::Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * q1;
        let q2 = r.hi / o.hi;
        let r = r - o * q2;
        let q3 = r.hi / o.hi;
        Dd::quick_two_sum(q1, q2) + Dd::from(q3)
    }
}

impl std::ops::Div<f64> for Dd {
    type Output = Dd;
    fn div(self, o: f64) -> Dd {
        self / Dd::from(o)
    }
}
