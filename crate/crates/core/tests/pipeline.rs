use std::sync::Arc;

use enclosure_core::extraction::FitOptions;
use enclosure_core::forward_solver::BoundaryTrace;
use enclosure_core::indicator::{
    compute_decomposition, compute_indicator, trace_error_floor, Calibration, TauGrid,
    VolumeReference,
};
use enclosure_core::pipeline::{forward, invert, CalibrationMode};
use enclosure_core::reference_field::ReferenceProblem;
use enclosure_core::{DomainSpec, SourcePulse, Vec3};

fn problem(scale: f64, horizon: f64, order: usize) -> ReferenceProblem {
    let omega = DomainSpec::ball(Vec3::zeros(), scale).unwrap();
    ReferenceProblem::new(
        omega,
        SourcePulse::new(Vec3::zeros(), 0.9 * scale),
        horizon * scale,
        order,
    )
    .unwrap()
}

fn obstacle(scale: f64) -> DomainSpec {
    DomainSpec::ball(Vec3::zeros(), 0.3 * scale).unwrap()
}

#[test]
fn radius_estimate_scales_with_lengths() {
    let mut estimates = Vec::new();
    for scale in [1.0, 2.0] {
        let pb = problem(scale, 1.9, 8);
        let d = obstacle(scale);
        let run = forward(&pb, Some(&d), 32, None).unwrap();
        let null = forward(&pb, None, 32, None).unwrap();
        let taus = TauGrid::log(2.0 / scale, 20.0 / scale, 10).unwrap();
        let inv = invert(
            &run.trace,
            Some(&null.trace),
            &pb,
            &taus,
            CalibrationMode::Simulated,
            FitOptions::default(),
        )
        .unwrap();
        estimates.push(inv.extraction.unwrap().r_d_estimate);
    }
    let rel = (estimates[1] - 2.0 * estimates[0]).abs() / (2.0 * estimates[0]);
    assert!(rel < 0.02, "{estimates:?}");
}

#[test]
fn surface_refinement_barely_moves_the_indicator() {
    let tau = (2.0f64 * 40.0).sqrt();
    let grid = TauGrid::new(vec![tau]).unwrap();
    let d = obstacle(1.0);
    let mut values = Vec::new();
    for order in [16, 32] {
        let pb = problem(1.0, 1.9, order);
        let run = forward(&pb, Some(&d), 32, None).unwrap();
        let null = forward(&pb, None, 32, None).unwrap();
        let i =
            compute_indicator(&run.trace, &pb, &grid, Calibration::Simulated(&null.trace)).unwrap();
        values.push(i.values[0].to_f64());
    }
    let rel = (values[0] - values[1]).abs() / values[1].abs();
    assert!(rel < 5e-3, "{values:?}");
}

#[test]
fn identical_runs_give_identical_tables() {
    let pb = problem(1.0, 1.9, 8);
    let d = obstacle(1.0);
    let taus = TauGrid::log(2.0, 20.0, 8).unwrap();
    let table = || {
        let run = forward(&pb, Some(&d), 24, None).unwrap();
        let null = forward(&pb, None, 24, None).unwrap();
        invert(
            &run.trace,
            Some(&null.trace),
            &pb,
            &taus,
            CalibrationMode::Simulated,
            FitOptions::default(),
        )
        .unwrap()
        .series
        .to_csv()
    };
    assert_eq!(table(), table());
}

#[test]
fn recorded_trace_inverts_like_the_live_one() {
    let pb = problem(1.0, 1.9, 8);
    let d = obstacle(1.0);
    let run = forward(&pb, Some(&d), 24, None).unwrap();
    let null = forward(&pb, None, 24, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.bin");
    run.trace.write_to(&path).unwrap();
    let loaded = BoundaryTrace::read_from(&path).unwrap();
    assert_eq!(loaded.samples, run.trace.samples);
    // a problem rebuilt from scratch shares no allocation with the trace
    let fresh = ReferenceProblem::with_quadrature(
        pb.omega.clone(),
        pb.pulse,
        pb.horizon,
        Arc::new((*pb.quadrature).clone()),
    )
    .unwrap();
    let taus = TauGrid::log(2.0, 20.0, 8).unwrap();
    let a = invert(
        &run.trace,
        Some(&null.trace),
        &pb,
        &taus,
        CalibrationMode::Simulated,
        FitOptions::default(),
    )
    .unwrap();
    let b = invert(
        &loaded,
        Some(&null.trace),
        &fresh,
        &taus,
        CalibrationMode::Simulated,
        FitOptions::default(),
    )
    .unwrap();
    assert_eq!(a.series.to_csv(), b.series.to_csv());
}

#[test]
fn energy_is_dominated_by_the_leading_term() {
    let pb = problem(1.0, 1.9, 8);
    let d = obstacle(1.0);
    let taus = [2.0, 4.0, 8.0, 16.0, 32.0];
    let run = forward(&pb, Some(&d), 32, Some(&taus)).unwrap();
    let null = forward(&pb, None, 32, Some(&taus)).unwrap();
    for tau in taus {
        let dec = compute_decomposition(
            &run.grid,
            run.volume.as_ref().unwrap(),
            &pb,
            VolumeReference::Simulated(null.volume.as_ref().unwrap()),
            tau,
        )
        .unwrap();
        // E / (τ² J* + τ² e^{−2τT}), in log form
        let tail = enclosure_core::LogValue::new(1, 2.0 * tau.ln() - 2.0 * tau * pb.horizon);
        let lead = enclosure_core::LogValue::sum([dec.j_star.times_exp(2.0 * tau.ln()), tail]);
        let ratio = (dec.energy.ln_abs() - lead.ln_abs()).exp();
        assert!(ratio < 1.0, "tau {tau}: ratio {ratio}");
    }
}

#[test]
fn null_floor_shrinks_with_resolution() {
    let pb = problem(1.0, 1.9, 8);
    let taus = TauGrid::new(vec![3.0, 9.0]).unwrap();
    let floors: Vec<Vec<f64>> = [24, 48]
        .iter()
        .map(|&res| {
            let null = forward(&pb, None, res, None).unwrap();
            let f = trace_error_floor(&null.trace, &pb, &taus).unwrap();
            f.values.iter().map(|v| v.to_f64()).collect()
        })
        .collect();
    for i in 0..taus.len() {
        assert!(floors[1][i] < 0.5 * floors[0][i], "{floors:?}");
    }
}
