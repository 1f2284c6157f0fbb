//! End-to-end runs: forward solve, optional obstacle-free companion solve,
//! indicator sweep with its noise floor, and radius extraction.

use std::sync::Arc;

use thiserror::Error;

use crate::extraction::{
    fit_slope, qualitative_criterion, ExtractionError, ExtractionResult, FitOptions,
    QualitativeReport,
};
use crate::forward_solver::{
    build_grid, solve_full, AnalyticNeumann, BoundaryTrace, GridSpec, SolveOptions, SolveStats,
    SolverError, VolumeFields,
};
use crate::geometry::DomainSpec;
use crate::indicator::{
    compute_indicator, rounding_floor, trace_error_floor, Calibration, IndicatorError,
    IndicatorSeries, TauGrid, FLOOR_FACTOR,
};
use crate::reference_field::ReferenceProblem;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error("simulated calibration needs an obstacle-free companion trace")]
    MissingCompanion,
}

/// How `w*` on the wall is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    /// Closed-form reference; the solver's discretization error enters `I`.
    Analytic,
    /// Obstacle-free solve on the same grid; discretization errors common to
    /// both runs cancel.
    Simulated,
}

impl CalibrationMode {
    pub fn name(self) -> &'static str {
        match self {
            CalibrationMode::Analytic => "analytic",
            CalibrationMode::Simulated => "simulated",
        }
    }
}

impl std::str::FromStr for CalibrationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(CalibrationMode::Analytic),
            "simulated" => Ok(CalibrationMode::Simulated),
            other => Err(format!(
                "unknown calibration {other:?} (expected analytic or simulated)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub grid: GridSpec,
    pub trace: BoundaryTrace,
    pub volume: Option<VolumeFields>,
    pub stats: SolveStats,
}

/// Cavity solve with time-reversed free-wave data for obstacle `d`.
pub fn forward(
    problem: &ReferenceProblem,
    d: Option<&DomainSpec>,
    resolution: usize,
    volume_taus: Option<&[f64]>,
) -> Result<ForwardRun, PipelineError> {
    let grid = build_grid(&problem.omega, d, resolution)?;
    let time_grid = grid.time_grid(problem.horizon)?;
    let source = AnalyticNeumann {
        pulse: problem.pulse,
        horizon: problem.horizon,
    };
    let options = SolveOptions {
        volume_taus: volume_taus.map(<[f64]>::to_vec),
        ..SolveOptions::default()
    };
    let out = solve_full(
        &grid,
        &source,
        &time_grid,
        Arc::clone(&problem.quadrature),
        options,
    )?;
    Ok(ForwardRun {
        grid,
        trace: out.trace,
        volume: out.volume,
        stats: out.stats,
    })
}

#[derive(Debug, Clone)]
pub struct Inversion {
    pub mode: CalibrationMode,
    /// Indicator with admissibility already reduced by the floor.
    pub series: IndicatorSeries,
    /// Noise floor per τ; `None` when no floor could be estimated.
    pub floor: Option<IndicatorSeries>,
    pub extraction: Result<ExtractionResult, ExtractionError>,
}

impl Inversion {
    /// Trend of `e^{τT}I` checked against `T` vs `2(η + r_d)`.
    pub fn qualitative(&self, eta: f64, r_d: f64) -> QualitativeReport {
        qualitative_criterion(&self.series, eta, r_d)
    }
}

/// Indicator, noise floor and radius fit for a recorded trace.
///
/// The floor is the trace-error pairing of the companion in analytic mode and
/// the rounding floor of the difference in simulated mode.
pub fn invert(
    trace: &BoundaryTrace,
    companion: Option<&BoundaryTrace>,
    problem: &ReferenceProblem,
    tau: &TauGrid,
    mode: CalibrationMode,
    fit: FitOptions,
) -> Result<Inversion, PipelineError> {
    let (mut series, floor) = match mode {
        CalibrationMode::Analytic => {
            let series = compute_indicator(trace, problem, tau, Calibration::Analytic)?;
            let floor = companion
                .map(|c| trace_error_floor(c, problem, tau))
                .transpose()?;
            (series, floor)
        }
        CalibrationMode::Simulated => {
            let c = companion.ok_or(PipelineError::MissingCompanion)?;
            let series = compute_indicator(trace, problem, tau, Calibration::Simulated(c))?;
            (series, Some(rounding_floor(trace, c, problem, tau)?))
        }
    };
    if let Some(f) = &floor {
        series.apply_noise_floor(f, FLOOR_FACTOR)?;
    }
    let extraction = fit_slope(&series, problem.pulse.eta, fit);
    Ok(Inversion {
        mode,
        series,
        floor,
        extraction,
    })
}
