//! Time-reversed reference objects: the Neumann data played back on `∂Ω`, the
//! reference Laplace field `w*(x) = ∫₀ᵀ e^{−τt} v(x, T−t) dt` and its gradient,
//! and the volume energy `J*` of `w*` over the obstacle.

use std::sync::Arc;

use thiserror::Error;

use crate::analytic_waves::{dv_dr_radial, v_radial, SourcePulse};
use crate::geometry::{
    graded_ball_volume_quadrature, surface_quadrature, DomainSpec, GeometryError,
    SurfaceQuadrature, Vec3, VolumeQuadrature,
};
use crate::logspace::LogValue;
use crate::par;
use crate::quadrature::adaptive;

/// Absolute tolerance of the per-point time quadrature, for a unit-amplitude pulse.
pub const TIME_QUADRATURE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error(
        "horizon too short: T - eta = {lhs:.6} must be at least R_Omega(p) = {r_omega:.6} (margin {margin:.6})"
    )]
    Admissibility { lhs: f64, r_omega: f64, margin: f64 },
    #[error("time grid needs at least 2 steps and a positive step, got n = {n_steps}, dt = {dt}")]
    InvalidTimeGrid { n_steps: usize, dt: f64 },
    #[error("Laplace parameter must be non-negative and finite, got {0}")]
    InvalidTau(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Uniform grid `t_k = k·dt`, `k = 0..=n_steps`, with `T = n_steps·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, dt: f64) -> Result<Self, ReferenceError> {
        if n_steps < 2 || !(dt > 0.0 && dt.is_finite()) {
            return Err(ReferenceError::InvalidTimeGrid { n_steps, dt });
        }
        Ok(Self { n_steps, dt })
    }

    /// Finest grid on `[0, horizon]` whose step does not exceed `max_dt`.
    pub fn covering(horizon: f64, max_dt: f64) -> Result<Self, ReferenceError> {
        let n = (horizon / max_dt).ceil().max(2.0) as usize;
        Self::new(n, horizon / n as f64)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Number of time levels, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Values attached to the nodes of a surface rule, optionally per time level
/// (node-major: `values[node * n_times + k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    pub quadrature: Arc<SurfaceQuadrature>,
    pub values: Vec<f64>,
    pub n_times: usize,
}

impl BoundaryField {
    pub fn value(&self, node: usize, k: usize) -> f64 {
        self.values[node * self.n_times + k]
    }

    pub fn node_series(&self, node: usize) -> &[f64] {
        &self.values[node * self.n_times..(node + 1) * self.n_times]
    }
}

/// `w*` and `∂w*/∂r` at one point, both multiplied by `e^{τ·t_first}`, where
/// `t_first` is the first time at which `v(x, T−t)` can be nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WStar {
    pub r: f64,
    pub direction: Vec3,
    /// Natural log of the factor that was divided out, `−τ·t_first`.
    pub log_scale: f64,
    pub value_scaled: f64,
    pub dr_scaled: f64,
}

impl WStar {
    pub const fn zero() -> Self {
        Self {
            r: 0.0,
            direction: Vec3::new(0.0, 0.0, 0.0),
            log_scale: 0.0,
            value_scaled: 0.0,
            dr_scaled: 0.0,
        }
    }

    pub fn value(&self) -> LogValue {
        LogValue::from_scaled(self.value_scaled, self.log_scale)
    }

    pub fn gradient_scaled(&self) -> Vec3 {
        self.direction * self.dr_scaled
    }

    pub fn normal_derivative_scaled(&self, normal: &Vec3) -> f64 {
        self.dr_scaled * self.direction.dot(normal)
    }

    pub fn normal_derivative(&self, normal: &Vec3) -> LogValue {
        LogValue::from_scaled(self.normal_derivative_scaled(normal), self.log_scale)
    }

    pub fn value_f64(&self) -> f64 {
        self.value().to_f64()
    }

    /// `|∇w*|² + τ²w*²`.
    pub fn energy_density(&self, tau: f64) -> LogValue {
        let e = self.dr_scaled * self.dr_scaled + tau * tau * self.value_scaled * self.value_scaled;
        LogValue::from_scaled(e, 2.0 * self.log_scale)
    }
}

/// Time-reversed free-wave problem on a fixed cavity `Ω` with horizon `T`.
#[derive(Debug, Clone)]
pub struct ReferenceProblem {
    pub omega: DomainSpec,
    pub pulse: SourcePulse,
    pub horizon: f64,
    pub quadrature: Arc<SurfaceQuadrature>,
}

/// `T − η − R_Ω(p)`, or an error when it is negative.
pub fn check_horizon(
    omega: &DomainSpec,
    pulse: &SourcePulse,
    horizon: f64,
) -> Result<f64, ReferenceError> {
    let r_omega = omega.sup_radius(&pulse.p);
    let lhs = horizon - pulse.eta;
    let margin = lhs - r_omega;
    // Equality is admissible; allow for rounding in the caller's arithmetic.
    if margin < -1e-12 * r_omega.max(1.0) {
        return Err(ReferenceError::Admissibility {
            lhs,
            r_omega,
            margin,
        });
    }
    Ok(margin)
}

impl ReferenceProblem {
    pub fn new(
        omega: DomainSpec,
        pulse: SourcePulse,
        horizon: f64,
        surface_order: usize,
    ) -> Result<Self, ReferenceError> {
        let quadrature = Arc::new(surface_quadrature(&omega, surface_order)?);
        Self::with_quadrature(omega, pulse, horizon, quadrature)
    }

    pub fn with_quadrature(
        omega: DomainSpec,
        pulse: SourcePulse,
        horizon: f64,
        quadrature: Arc<SurfaceQuadrature>,
    ) -> Result<Self, ReferenceError> {
        omega.validate()?;
        check_horizon(&omega, &pulse, horizon)?;
        Ok(Self {
            omega,
            pulse,
            horizon,
            quadrature,
        })
    }

    /// `∂ν v(x, s)` on `∂Ω` at free-wave time `s` (zero for `s ≤ 0`).
    pub fn forward_normal_derivative(&self, node: usize, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let q = &self.quadrature;
        q.normals[node].dot(&self.pulse.grad_v(&q.nodes[node], s))
    }

    /// `f(x, t) = ∂ν v(x, T − t)` at every node and time level.
    pub fn neumann_data(&self, grid: &TimeGrid) -> BoundaryField {
        let n_times = grid.len();
        let per_node = par::map_range(self.quadrature.len(), |i| {
            (0..n_times)
                .map(|k| self.forward_normal_derivative(i, self.horizon - grid.time(k)))
                .collect::<Vec<_>>()
        });
        BoundaryField {
            quadrature: self.quadrature.clone(),
            values: per_node.concat(),
            n_times,
        }
    }

    /// `w*` at every boundary node, in scaled form.
    pub fn w_star_nodes(&self, tau: f64) -> Vec<WStar> {
        par::map_slice(&self.quadrature.nodes, |x| {
            w_star_at(&self.pulse, x, tau, self.horizon)
        })
    }

    /// `(w*, ∂w*/∂ν)` on `∂Ω` as plain numbers; these underflow once
    /// `τ(T − η − R_Ω)` is large, where [`ReferenceProblem::w_star_nodes`]
    /// should be used instead.
    pub fn w_star_boundary(&self, tau: f64) -> (BoundaryField, BoundaryField) {
        let nodes = self.w_star_nodes(tau);
        let values = nodes.iter().map(WStar::value_f64).collect();
        let normals = nodes
            .iter()
            .zip(&self.quadrature.normals)
            .map(|(w, n)| w.normal_derivative(n).to_f64())
            .collect();
        let field = |values| BoundaryField {
            quadrature: self.quadrature.clone(),
            values,
            n_times: 1,
        };
        (field(values), field(normals))
    }

    /// `J*(τ) = ∫_D (|∇w*|² + τ²w*²) dx` on a boundary-graded rule of `order`.
    pub fn j_star(
        &self,
        d: &DomainSpec,
        tau: f64,
        order: usize,
    ) -> Result<LogValue, ReferenceError> {
        self.omega.require_contains(d, 0.0)?;
        let levels = ((2.0 * tau * d.sup_radius(&self.pulse.p))
            .max(2.0)
            .log2()
            .ceil() as usize)
            + 3;
        let rules: Vec<VolumeQuadrature> = d
            .balls()
            .iter()
            .map(|b| graded_ball_volume_quadrature(b, order, levels))
            .collect();
        Ok(LogValue::sum(rules.iter().map(|q| self.energy_on(q, tau))))
    }

    /// `∫ (|∇w*|² + τ²w*²)` on an arbitrary volume rule.
    pub fn energy_on(&self, q: &VolumeQuadrature, tau: f64) -> LogValue {
        let terms = par::map_range(q.nodes.len(), |i| {
            w_star_at(&self.pulse, &q.nodes[i], tau, self.horizon).energy_density(tau)
                * q.weights[i]
        });
        LogValue::sum(terms)
    }
}

/// Interval `[t_first, t_last]` of `t ∈ [0, T]` where `v(x, T − t)` can be
/// nonzero, or `None`.
pub fn support_window(eta: f64, r: f64, horizon: f64) -> Option<(f64, f64)> {
    let s_hi = (r + eta).min(horizon);
    let s_lo = (r - eta).max(0.0);
    (s_lo < s_hi).then_some((horizon - s_hi, horizon - s_lo))
}

/// `w*(x) = ∫₀ᵀ e^{−τt} v(x, T−t) dt` and its radial derivative by adaptive
/// Gauss–Legendre, with breakpoints at every region change of `v(x, ·)`.
pub fn w_star_at(pulse: &SourcePulse, x: &Vec3, tau: f64, horizon: f64) -> WStar {
    let d = x - pulse.p;
    let r = d.norm();
    let direction = if r > 0.0 { d / r } else { Vec3::zeros() };
    let eta = pulse.eta;
    let Some((t0, t1)) = support_window(eta, r, horizon) else {
        return WStar {
            r,
            direction,
            ..WStar::zero()
        };
    };
    let breaks: Vec<f64> = [r - eta, r + eta, eta - r, r]
        .iter()
        .map(|s| horizon - s)
        .collect();
    let tol = TIME_QUADRATURE_TOL * pulse.amplitude.abs().max(f64::MIN_POSITIVE);
    let a = pulse.amplitude;
    let value = adaptive(8, t0, t1, &breaks, tol, |t| {
        let s = horizon - t;
        if s <= 0.0 {
            0.0
        } else {
            (-tau * (t - t0)).exp() * v_radial(eta, r, s)
        }
    });
    let dr = if r > 0.0 {
        adaptive(8, t0, t1, &breaks, tol, |t| {
            let s = horizon - t;
            if s <= 0.0 {
                0.0
            } else {
                (-tau * (t - t0)).exp() * dv_dr_radial(eta, r, s)
            }
        })
    } else {
        0.0
    };
    WStar {
        r,
        direction,
        log_scale: -tau * t0,
        value_scaled: a * value,
        dr_scaled: a * dr,
    }
}
