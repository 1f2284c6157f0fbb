//! The boundary indicator `I(τ) = ∫_{∂Ω} (w − w*) ∂ν w* dS` over a sweep of
//! Laplace parameters, and the volume decomposition `I = J* + E + 𝓡`.
//!
//! `w` is the trapezoid Laplace transform of a recorded boundary trace. In
//! [`Calibration::Analytic`] mode `w*` is the exact reference field. In
//! [`Calibration::Simulated`] mode the measured field is compared with an
//! obstacle-free simulation at the same resolution instead, which removes the
//! discretization error the two runs share.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::forward_solver::{BoundaryTrace, CellKind, GridSpec, VolumeFields};
use crate::logspace::LogValue;
use crate::par;
use crate::reference_field::{w_star_at, ReferenceProblem, TimeGrid, WStar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndicatorError {
    #[error("τ grid needs at least one value")]
    EmptyTauGrid,
    #[error("τ grid must be positive and strictly increasing (offending value {0})")]
    InvalidTauGrid(f64),
    #[error(
        "trace surface rule does not match the reference problem ({trace} vs {reference} nodes)"
    )]
    QuadratureMismatch { trace: usize, reference: usize },
    #[error("trace horizon {trace} differs from T = {reference}")]
    HorizonMismatch { trace: f64, reference: f64 },
    #[error("calibration trace has a different time grid")]
    TimeGridMismatch,
    #[error("trace contains non-finite samples")]
    NonFiniteTrace,
    #[error("volume fields do not contain τ = {0}")]
    MissingTau(f64),
    #[error("volume fields were recorded on a different grid")]
    GridMismatch,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Strictly increasing positive Laplace parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TauGrid {
    values: Vec<f64>,
}

impl TauGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, IndicatorError> {
        if values.is_empty() {
            return Err(IndicatorError::EmptyTauGrid);
        }
        let mut prev = 0.0;
        for &v in &values {
            if !(v > prev) || !v.is_finite() {
                return Err(IndicatorError::InvalidTauGrid(v));
            }
            prev = v;
        }
        Ok(Self { values })
    }

    pub fn linear(min: f64, max: f64, count: usize) -> Result<Self, IndicatorError> {
        Self::spaced(min, max, count, |a, b, s| a + (b - a) * s)
    }

    pub fn log(min: f64, max: f64, count: usize) -> Result<Self, IndicatorError> {
        if !(min > 0.0) {
            return Err(IndicatorError::InvalidTauGrid(min));
        }
        Self::spaced(min, max, count, |a, b, s| {
            (a.ln() + (b.ln() - a.ln()) * s).exp()
        })
    }

    fn spaced(
        min: f64,
        max: f64,
        count: usize,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Self, IndicatorError> {
        match count {
            0 => Err(IndicatorError::EmptyTauGrid),
            1 => Self::new(vec![min]),
            _ => {
                let mut v: Vec<f64> = (0..count)
                    .map(|i| f(min, max, i as f64 / (count - 1) as f64))
                    .collect();
                v[0] = min;
                v[count - 1] = max;
                Self::new(v)
            }
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How the comparison field `w*` on `∂Ω` is obtained.
#[derive(Debug, Clone, Copy)]
pub enum Calibration<'a> {
    Analytic,
    /// Obstacle-free trace recorded with the same solver settings.
    Simulated(&'a BoundaryTrace),
}

/// Indicator values over a τ sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub tau: TauGrid,
    pub values: Vec<LogValue>,
    pub horizon: f64,
    /// Per-τ flag for use in slope extraction; initially `I > 0`.
    pub admissible: Vec<bool>,
}

impl IndicatorSeries {
    pub fn new(tau: TauGrid, values: Vec<LogValue>, horizon: f64) -> Result<Self, IndicatorError> {
        if tau.len() != values.len() {
            return Err(IndicatorError::LengthMismatch(tau.len(), values.len()));
        }
        let admissible = values.iter().map(|v| v.sign() > 0).collect();
        Ok(Self {
            tau,
            values,
            horizon,
            admissible,
        })
    }

    /// Builds a series from plain values.
    pub fn from_f64(tau: TauGrid, values: &[f64], horizon: f64) -> Result<Self, IndicatorError> {
        Self::new(
            tau,
            values.iter().map(|&v| LogValue::from_f64(v)).collect(),
            horizon,
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_f64(&self, i: usize) -> f64 {
        self.values[i].to_f64()
    }

    /// `(1/τ)·ln I`, only where `I > 0`.
    pub fn log_indicator(&self, i: usize) -> Option<f64> {
        (self.values[i].sign() > 0).then(|| self.values[i].ln_abs() / self.tau.values()[i])
    }

    /// `e^{τT}·I` in log form.
    pub fn scaled(&self, i: usize) -> LogValue {
        self.values[i].times_exp(self.tau.values()[i] * self.horizon)
    }

    pub fn admissible_count(&self) -> usize {
        self.admissible.iter().filter(|&&a| a).count()
    }

    /// Marks τ values inadmissible where `I ≤ 0` or `|I| < factor·|floor|`.
    pub fn apply_noise_floor(
        &mut self,
        floor: &IndicatorSeries,
        factor: f64,
    ) -> Result<(), IndicatorError> {
        if floor.tau != self.tau {
            return Err(IndicatorError::LengthMismatch(self.len(), floor.len()));
        }
        let ln_factor = factor.ln();
        for i in 0..self.len() {
            let v = self.values[i];
            let f = floor.values[i];
            let above = f.is_zero() || v.ln_abs() > f.ln_abs() + ln_factor;
            self.admissible[i] = v.sign() > 0 && above;
        }
        Ok(())
    }

    /// Table with header `tau,I,inv_tau_log_I,sign_scaled,log_scaled`. Values
    /// of `I` below the `f64` range are written as `0`; the log columns keep
    /// full information. `inv_tau_log_I` is empty where `I ≤ 0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,I,inv_tau_log_I,sign_scaled,log_scaled\n");
        for i in 0..self.len() {
            let s = self.scaled(i);
            let lt = self
                .log_indicator(i)
                .map(|v| format!("{v:.17e}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{:.17e},{:.17e},{},{},{:.17e}",
                self.tau.values()[i],
                self.value_f64(i),
                lt,
                s.sign(),
                s.ln_abs()
            );
        }
        out
    }
}

/// `Σ_k trap_k e^{−τ t_k + shift} u_k`.
pub fn laplace_trace_scaled(series: &[f64], time_grid: &TimeGrid, tau: f64, shift: f64) -> f64 {
    let n = time_grid.n_steps();
    let dt = time_grid.dt();
    series
        .iter()
        .enumerate()
        .filter(|(_, u)| **u != 0.0)
        .map(|(k, u)| {
            let w = if k == 0 || k == n { 0.5 * dt } else { dt };
            w * (shift - tau * time_grid.time(k)).exp() * u
        })
        .sum()
}

/// `Σ_k trap_k e^{−τ t_k + shift} (a_k − b_k)`.
pub fn laplace_difference_scaled(
    a: &[f64],
    b: &[f64],
    time_grid: &TimeGrid,
    tau: f64,
    shift: f64,
) -> f64 {
    let n = time_grid.n_steps();
    let dt = time_grid.dt();
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(k, (x, y))| {
            let w = if k == 0 || k == n { 0.5 * dt } else { dt };
            w * (shift - tau * time_grid.time(k)).exp() * (x - y)
        })
        .sum()
}

fn check_trace(trace: &BoundaryTrace, problem: &ReferenceProblem) -> Result<(), IndicatorError> {
    let same = Arc::ptr_eq(&trace.quadrature, &problem.quadrature)
        || *trace.quadrature == *problem.quadrature;
    if !same {
        return Err(IndicatorError::QuadratureMismatch {
            trace: trace.n_nodes(),
            reference: problem.quadrature.len(),
        });
    }
    if (trace.horizon() - problem.horizon).abs() > 1e-9 * problem.horizon.max(1.0) {
        return Err(IndicatorError::HorizonMismatch {
            trace: trace.horizon(),
            reference: problem.horizon,
        });
    }
    if !trace.is_finite() {
        return Err(IndicatorError::NonFiniteTrace);
    }
    Ok(())
}

/// `I(τ)` at one τ.
pub fn indicator_at(
    trace: &BoundaryTrace,
    problem: &ReferenceProblem,
    calibration: Calibration<'_>,
    tau: f64,
) -> LogValue {
    let q = &problem.quadrature;
    let tg = trace.time_grid;
    let ws: Vec<WStar> = problem.w_star_nodes(tau);
    let terms = (0..q.len()).map(|i| {
        let s = &ws[i];
        let shift = -s.log_scale;
        let diff = match calibration {
            Calibration::Analytic => {
                laplace_trace_scaled(trace.series(i), &tg, tau, shift) - s.value_scaled
            }
            // sample-wise difference first: both runs agree bit for bit until
            // the obstacle's influence reaches the wall
            Calibration::Simulated(c) => {
                laplace_difference_scaled(trace.series(i), c.series(i), &tg, tau, shift)
            }
        };
        let dn = s.normal_derivative_scaled(&q.normals[i]);
        LogValue::from_scaled(q.weights[i] * diff * dn, 2.0 * s.log_scale)
    });
    LogValue::sum(terms.collect::<Vec<_>>())
}

/// `I(τ)` for every τ of the grid.
pub fn compute_indicator(
    trace: &BoundaryTrace,
    problem: &ReferenceProblem,
    tau: &TauGrid,
    calibration: Calibration<'_>,
) -> Result<IndicatorSeries, IndicatorError> {
    check_trace(trace, problem)?;
    if let Calibration::Simulated(c) = calibration {
        check_trace(c, problem)?;
        if c.time_grid != trace.time_grid {
            return Err(IndicatorError::TimeGridMismatch);
        }
    }
    let values = par::map_slice(tau.values(), |&t| {
        indicator_at(trace, problem, calibration, t)
    });
    IndicatorSeries::new(tau.clone(), values, problem.horizon)
}

/// Discretization floor from an obstacle-free trace:
/// `Σ_nodes weight·|w_∅ − w*|·|∂ν w*|`, which bounds `|I|` of that trace.
pub fn trace_error_floor(
    null_trace: &BoundaryTrace,
    problem: &ReferenceProblem,
    tau: &TauGrid,
) -> Result<IndicatorSeries, IndicatorError> {
    check_trace(null_trace, problem)?;
    let q = &problem.quadrature;
    let tg = null_trace.time_grid;
    let values = par::map_slice(tau.values(), |&t| {
        let ws = problem.w_star_nodes(t);
        LogValue::sum(
            (0..q.len())
                .map(|i| {
                    let s = &ws[i];
                    let w = laplace_trace_scaled(null_trace.series(i), &tg, t, -s.log_scale);
                    let e = (w - s.value_scaled).abs()
                        * s.normal_derivative_scaled(&q.normals[i]).abs();
                    LogValue::from_scaled(q.weights[i] * e, 2.0 * s.log_scale)
                })
                .collect::<Vec<_>>(),
        )
    });
    IndicatorSeries::new(tau.clone(), values, problem.horizon)
}

/// Rounding floor of the calibrated indicator: samples where the two traces
/// differ carry an error of order `ε·|u|`; identical samples carry none.
pub fn rounding_floor(
    trace: &BoundaryTrace,
    calibration: &BoundaryTrace,
    problem: &ReferenceProblem,
    tau: &TauGrid,
) -> Result<IndicatorSeries, IndicatorError> {
    check_trace(trace, problem)?;
    check_trace(calibration, problem)?;
    if trace.time_grid != calibration.time_grid {
        return Err(IndicatorError::TimeGridMismatch);
    }
    let q = &problem.quadrature;
    let tg = trace.time_grid;
    let n = tg.n_steps();
    let dt = tg.dt();
    let values = par::map_slice(tau.values(), |&t| {
        let ws = problem.w_star_nodes(t);
        LogValue::sum(
            (0..q.len())
                .map(|i| {
                    let s = &ws[i];
                    let a = trace.series(i);
                    let b = calibration.series(i);
                    let mag: f64 = (0..=n)
                        .filter(|&k| a[k] != b[k])
                        .map(|k| {
                            let w = if k == 0 || k == n { 0.5 * dt } else { dt };
                            w * (-s.log_scale - t * tg.time(k)).exp() * a[k].abs().max(b[k].abs())
                        })
                        .sum();
                    let e = ROUNDING_FACTOR
                        * f64::EPSILON
                        * mag
                        * s.normal_derivative_scaled(&q.normals[i]).abs();
                    LogValue::from_scaled(q.weights[i] * e, 2.0 * s.log_scale)
                })
                .collect::<Vec<_>>(),
        )
    });
    IndicatorSeries::new(tau.clone(), values, problem.horizon)
}

/// Safety factor on machine epsilon in [`rounding_floor`].
pub const ROUNDING_FACTOR: f64 = 64.0;

/// Default ratio `|I| / floor` below which a τ is inadmissible.
pub const FLOOR_FACTOR: f64 = 5.0;

/// Reference volume data for the decomposition.
#[derive(Debug, Clone, Copy)]
pub enum VolumeReference<'a> {
    /// Exact `w*` and `F₀ = −Ψ` sampled at cell centers.
    Analytic,
    /// Volume output of an obstacle-free run on the same grid layout.
    Simulated(&'a VolumeFields),
}

/// The three terms of `I = J* + E + 𝓡` at one τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub tau: f64,
    pub j_star: LogValue,
    pub energy: LogValue,
    pub remainder: LogValue,
    /// `J* + E + 𝓡`.
    pub reassembled: LogValue,
    /// Discrete boundary pairing `Σ_wall h²·(w − w_ref)·g̃`, the quantity the
    /// grid identity reproduces exactly up to time discretization.
    pub boundary_pairing: LogValue,
}

/// Grid-level decomposition of the indicator at `tau`.
///
/// With `Ω_h` the non-exterior cells, `S` the fluid cells, `D_h` the
/// obstacle cells and `a(·,·)` the face form `Σ h·(x_i−x_j)(y_i−y_j)`:
/// `J* = a_{faces touching D_h}(w_ref, w_ref) + τ² Σ_{D_h} h³ w_ref²`,
/// `E = a_S(R, R) + τ² Σ_S h³ R²` with `R = w − w_ref`, and
/// `𝓡 = e^{−τT}(Σ_{D_h} h³ F_ref w_ref + Σ_S h³ F R + Σ_S h³ (F_ref − F) w_ref)`.
pub fn compute_decomposition(
    grid: &GridSpec,
    volume: &VolumeFields,
    problem: &ReferenceProblem,
    reference: VolumeReference<'_>,
    tau: f64,
) -> Result<Decomposition, IndicatorError> {
    let ti = volume
        .tau_index(tau)
        .ok_or(IndicatorError::MissingTau(tau))?;
    if volume.cells.as_slice() != grid.fluid_cells() || volume.h != grid.h {
        return Err(IndicatorError::GridMismatch);
    }
    let n = grid.n_cells();
    let h = grid.h;
    let h3 = grid.cell_volume();
    let pulse = problem.pulse;
    let horizon = problem.horizon;

    // reference w and F on every non-exterior cell
    let mut w_ref = vec![0.0; n];
    let mut f_ref = vec![0.0; n];
    let active: Vec<usize> = (0..n)
        .filter(|&i| grid.kind(i) != CellKind::Exterior)
        .collect();
    match reference {
        VolumeReference::Analytic => {
            let vals = par::map_slice(&active, |&i| {
                let c = grid.center(i);
                (
                    w_star_at(&pulse, &c, tau, horizon).value_f64(),
                    -pulse.psi(&c),
                )
            });
            for (&i, (w, f)) in active.iter().zip(vals) {
                w_ref[i] = w;
                f_ref[i] = f;
            }
        }
        VolumeReference::Simulated(r) => {
            let rti = r.tau_index(tau).ok_or(IndicatorError::MissingTau(tau))?;
            if r.h != grid.h || r.cells.len() != active.len() || r.cells != active {
                return Err(IndicatorError::GridMismatch);
            }
            let lap = r.laplace_for(rti);
            for (j, &i) in r.cells.iter().enumerate() {
                w_ref[i] = lap[j];
                f_ref[i] = r.ut_final[j] + tau * r.u_final[j];
            }
        }
    }
    let mut w = vec![0.0; n];
    let mut f = vec![0.0; n];
    let lap = volume.laplace_for(ti);
    for (j, &i) in volume.cells.iter().enumerate() {
        w[i] = lap[j];
        f[i] = volume.ut_final[j] + tau * volume.u_final[j];
    }

    let mut a_x = 0.0;
    let mut a_s = 0.0;
    for (i, j) in grid.neighbor_pairs() {
        let fluid_pair = grid.kind(i) == CellKind::Fluid && grid.kind(j) == CellKind::Fluid;
        if fluid_pair {
            let d = (w[i] - w_ref[i]) - (w[j] - w_ref[j]);
            a_s += h * d * d;
        } else {
            let d = w_ref[i] - w_ref[j];
            a_x += h * d * d;
        }
    }
    let mut m_d = 0.0;
    let mut src_d = 0.0;
    for &i in &active {
        if grid.kind(i) == CellKind::Obstacle {
            m_d += h3 * w_ref[i] * w_ref[i];
            src_d += h3 * f_ref[i] * w_ref[i];
        }
    }
    let mut m_s = 0.0;
    let mut src_s = 0.0;
    for &i in grid.fluid_cells() {
        let r = w[i] - w_ref[i];
        m_s += h3 * r * r;
        src_s += h3 * (f[i] * r + (f_ref[i] - f[i]) * w_ref[i]);
    }
    let j_star = LogValue::from_f64(a_x + tau * tau * m_d);
    let energy = LogValue::from_f64(a_s + tau * tau * m_s);
    let remainder = LogValue::from_scaled(src_d + src_s, -tau * horizon);

    // discrete wall pairing with the transformed wall flux
    let tg = problem_time_grid(grid, horizon);
    let pairing: f64 = grid
        .boundary_faces()
        .iter()
        .map(|face| {
            let flux: f64 = (0..=tg.n_steps())
                .map(|k| {
                    let wt = if k == 0 || k == tg.n_steps() {
                        0.5
                    } else {
                        1.0
                    };
                    let t = tg.time(k);
                    let s = horizon - t;
                    let g = if s > 0.0 {
                        face.normal.dot(&pulse.grad_v(&face.centroid, s))
                    } else {
                        0.0
                    };
                    wt * tg.dt() * (-tau * t).exp() * g
                })
                .sum();
            h * h * (w[face.cell] - w_ref[face.cell]) * flux
        })
        .sum();

    Ok(Decomposition {
        tau,
        j_star,
        energy,
        remainder,
        reassembled: LogValue::sum([j_star, energy, remainder]),
        boundary_pairing: LogValue::from_f64(pairing),
    })
}

fn problem_time_grid(grid: &GridSpec, horizon: f64) -> TimeGrid {
    grid.time_grid(horizon)
        .expect("horizon was validated by the forward solve")
}

/// Relative gap `|J* + E + 𝓡 − I| / |I|`.
pub fn decomposition_gap(d: &Decomposition, indicator: LogValue) -> f64 {
    let diff = d.reassembled - indicator;
    (diff.ln_abs() - indicator.ln_abs()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_solver::{build_grid, solve_with_volume_output, AnalyticNeumann};
    use crate::geometry::{DomainSpec, Vec3};
    use crate::SourcePulse;

    #[test]
    fn tau_grids() {
        let g = TauGrid::log(2.0, 40.0, 16).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.values()[0], 2.0);
        assert_eq!(g.values()[15], 40.0);
        assert!(g.values().windows(2).all(|w| w[1] > w[0]));
        let l = TauGrid::linear(1.0, 2.0, 3).unwrap();
        assert_eq!(l.values(), &[1.0, 1.5, 2.0]);
        assert!(TauGrid::new(vec![1.0, 1.0]).is_err());
        assert!(TauGrid::new(vec![-1.0]).is_err());
        assert!(TauGrid::new(vec![]).is_err());
    }

    #[test]
    fn series_log_columns() {
        let tau = TauGrid::new(vec![1.0, 2.0, 3.0]).unwrap();
        let s = IndicatorSeries::from_f64(tau, &[2.0, -1.0, 0.0], 1.5).unwrap();
        assert_eq!(s.log_indicator(0), Some(2f64.ln()));
        assert_eq!(s.log_indicator(1), None);
        assert_eq!(s.log_indicator(2), None);
        assert_eq!(s.admissible, vec![true, false, false]);
        assert!((s.scaled(1).ln_abs() - 3.0).abs() < 1e-15);
        assert_eq!(s.scaled(1).sign(), -1);
        let csv = s.to_csv();
        assert_eq!(
            csv.lines().next().unwrap(),
            "tau,I,inv_tau_log_I,sign_scaled,log_scaled"
        );
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(2).unwrap().contains(",,-1,"));
    }

    #[test]
    fn noise_floor_marks_small_values() {
        let tau = TauGrid::new(vec![1.0, 2.0]).unwrap();
        let mut s = IndicatorSeries::from_f64(tau.clone(), &[1.0, 1.0], 1.0).unwrap();
        let floor = IndicatorSeries::from_f64(tau, &[0.1, 0.3], 1.0).unwrap();
        s.apply_noise_floor(&floor, 5.0).unwrap();
        assert_eq!(s.admissible, vec![true, false]);
    }

    #[test]
    fn laplace_of_constant_trace() {
        let tg = TimeGrid::new(1000, 1e-3).unwrap();
        let ones = vec![1.0; 1001];
        let w = laplace_trace_scaled(&ones, &tg, 2.0, 0.0);
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((w - exact).abs() < 1e-6);
        let shifted = laplace_trace_scaled(&ones, &tg, 2.0, 3.0);
        assert!((shifted - 3f64.exp() * w).abs() < 1e-12 * shifted);
    }

    fn small_problem() -> (ReferenceProblem, DomainSpec) {
        let omega = DomainSpec::ball(Vec3::zeros(), 1.0).unwrap();
        let pulse = SourcePulse::new(Vec3::zeros(), 0.9);
        (
            ReferenceProblem::new(omega.clone(), pulse, 1.9, 8).unwrap(),
            omega,
        )
    }

    #[test]
    fn indicator_rejects_mismatched_inputs() {
        let (problem, omega) = small_problem();
        let grid = build_grid(&omega, None, 12).unwrap();
        let tg = grid.time_grid(1.9).unwrap();
        let src = AnalyticNeumann {
            pulse: problem.pulse,
            horizon: 1.9,
        };
        let other = Arc::new(crate::geometry::surface_quadrature(&omega, 4).unwrap());
        let trace = crate::forward_solver::solve(&grid, &src, &tg, other).unwrap();
        let tau = TauGrid::new(vec![3.0]).unwrap();
        assert!(matches!(
            compute_indicator(&trace, &problem, &tau, Calibration::Analytic),
            Err(IndicatorError::QuadratureMismatch { .. })
        ));
    }

    #[test]
    fn per_tau_values_do_not_depend_on_the_grid() {
        let (problem, omega) = small_problem();
        let grid = build_grid(&omega, None, 12).unwrap();
        let tg = grid.time_grid(1.9).unwrap();
        let src = AnalyticNeumann {
            pulse: problem.pulse,
            horizon: 1.9,
        };
        let trace =
            crate::forward_solver::solve(&grid, &src, &tg, problem.quadrature.clone()).unwrap();
        let a = compute_indicator(
            &trace,
            &problem,
            &TauGrid::new(vec![2.0, 5.0]).unwrap(),
            Calibration::Analytic,
        )
        .unwrap();
        let b = compute_indicator(
            &trace,
            &problem,
            &TauGrid::new(vec![5.0, 9.0]).unwrap(),
            Calibration::Analytic,
        )
        .unwrap();
        assert_eq!(a.values[1], b.values[0]);
        let null = compute_indicator(
            &trace,
            &problem,
            &TauGrid::new(vec![5.0]).unwrap(),
            Calibration::Simulated(&trace),
        )
        .unwrap();
        assert!(null.values[0].is_zero());
    }

    #[test]
    fn decomposition_terms_are_nonnegative() {
        let (problem, omega) = small_problem();
        let d = DomainSpec::ball(Vec3::zeros(), 0.3).unwrap();
        let grid = build_grid(&omega, Some(&d), 16).unwrap();
        let tg = grid.time_grid(1.9).unwrap();
        let src = AnalyticNeumann {
            pulse: problem.pulse,
            horizon: 1.9,
        };
        let (_, vol) =
            solve_with_volume_output(&grid, &src, &tg, problem.quadrature.clone(), &[4.0]).unwrap();
        let dec =
            compute_decomposition(&grid, &vol, &problem, VolumeReference::Analytic, 4.0).unwrap();
        assert!(dec.j_star.sign() > 0);
        assert!(dec.energy.sign() >= 0);
        assert!(matches!(
            compute_decomposition(&grid, &vol, &problem, VolumeReference::Analytic, 5.0),
            Err(IndicatorError::MissingTau(_))
        ));
    }

    #[test]
    fn floors_bound_the_null_indicator() {
        let (problem, omega) = small_problem();
        let grid = build_grid(&omega, None, 12).unwrap();
        let tg = grid.time_grid(1.9).unwrap();
        let src = AnalyticNeumann {
            pulse: problem.pulse,
            horizon: 1.9,
        };
        let trace =
            crate::forward_solver::solve(&grid, &src, &tg, problem.quadrature.clone()).unwrap();
        let tau = TauGrid::new(vec![1.0, 3.0, 6.0]).unwrap();
        let i = compute_indicator(&trace, &problem, &tau, Calibration::Analytic).unwrap();
        let floor = trace_error_floor(&trace, &problem, &tau).unwrap();
        for k in 0..tau.len() {
            assert!(i.values[k].ln_abs() <= floor.values[k].ln_abs() + 1e-12);
        }
        let mut j = i.clone();
        j.apply_noise_floor(&floor, FLOOR_FACTOR).unwrap();
        assert_eq!(j.admissible_count(), 0);
        let r = rounding_floor(&trace, &trace, &problem, &tau).unwrap();
        assert!(r.values.iter().all(|v| v.is_zero()));
    }
}
