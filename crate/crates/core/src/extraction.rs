//! Recovery of `R_D(p)` from the exponential decay rate of the indicator, and
//! the blow-up/decay criterion for `e^{τT}·I(τ)`.
//!
//! For large τ, `(1/τ)·ln I → −2{(T − η) − R_D(p)}`, so a fitted slope `s` of
//! `ln I` against τ gives `R_D ≈ (T − η) + s/2`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::analytic_waves::SourcePulse;
use crate::geometry::DomainSpec;
use crate::indicator::IndicatorSeries;

/// Smallest number of points any fit accepts.
pub const MIN_FIT_POINTS: usize = 4;
/// A trend of `ln(e^{τT}I)` changing by less than this over the window is
/// reported as indeterminate.
pub const TREND_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error("{found} admissible points in the fit window, at least {required} needed")]
    InsufficientPoints { found: usize, required: usize },
    #[error("the indicator is not positive at any τ; the obstacle-size condition may fail or the series is noise")]
    NegativeIndicatorThroughout,
    #[error("fixed window [{lo}, {hi}] is empty or reversed")]
    InvalidWindow { lo: f64, hi: f64 },
    #[error("least-squares system is singular")]
    Singular,
}

/// Which admissible τ values enter the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowPolicy {
    /// Longest contiguous admissible run ending at the last admissible τ.
    TrailingRun,
    /// Upper `fraction` of the trailing run (at least [`MIN_FIT_POINTS`]).
    UpperFraction(f64),
    /// Admissible τ in `[lo, hi]`.
    Fixed { lo: f64, hi: f64 },
}

/// Regression model for `ln I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// `ln I = a + s·τ`.
    Exponential,
    /// `ln I = a + s·τ + k·ln τ`, absorbing an algebraic prefactor `τ^k`.
    ExponentialWithPower,
}

impl FitModel {
    pub fn name(&self) -> &'static str {
        match self {
            FitModel::Exponential => "exponential",
            FitModel::ExponentialWithPower => "exponential_with_power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub window: WindowPolicy,
    pub model: FitModel,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window: WindowPolicy::TrailingRun,
            model: FitModel::Exponential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Blowup,
    Decay,
    Indeterminate,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Blowup => "blowup",
            Verdict::Decay => "decay",
            Verdict::Indeterminate => "indeterminate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub slope: f64,
    pub intercept: f64,
    /// Fitted prefactor exponent for [`FitModel::ExponentialWithPower`].
    pub power: Option<f64>,
    pub r_d_estimate: f64,
    pub fit_window: (f64, f64),
    pub n_points: usize,
    pub r_squared: f64,
    pub model: FitModel,
    pub horizon: f64,
    pub eta: f64,
    /// `2(η + R_D_estimate)`.
    pub threshold: f64,
    /// Verdict the threshold predicts for `e^{τT}I`.
    pub qualitative_verdict: Verdict,
}

impl ExtractionResult {
    /// One `key=value` pair per line, keys in fixed order:
    /// `status, model, slope, intercept, power, r_d_estimate, tau_lo, tau_hi,
    /// n_points, r_squared, horizon, eta, threshold, qualitative_verdict`.
    /// `power` is empty for the plain exponential model.
    pub fn to_record(&self) -> String {
        let power = self.power.map(|k| format!("{k:.12e}")).unwrap_or_default();
        format!(
            "status=ok\nmodel={}\nslope={:.12e}\nintercept={:.12e}\npower={}\nr_d_estimate={:.12e}\n\
             tau_lo={:.12e}\ntau_hi={:.12e}\nn_points={}\nr_squared={:.12e}\nhorizon={:.12e}\neta={:.12e}\n\
             threshold={:.12e}\nqualitative_verdict={}\n",
            self.model.name(),
            self.slope,
            self.intercept,
            power,
            self.r_d_estimate,
            self.fit_window.0,
            self.fit_window.1,
            self.n_points,
            self.r_squared,
            self.horizon,
            self.eta,
            self.threshold,
            self.qualitative_verdict
        )
    }
}

/// Record written when extraction refuses to produce a radius.
pub fn null_record(err: &ExtractionError) -> String {
    let reason = match err {
        ExtractionError::InsufficientPoints { .. } => "insufficient_points",
        ExtractionError::NegativeIndicatorThroughout => "negative_indicator_throughout",
        ExtractionError::InvalidWindow { .. } => "invalid_window",
        ExtractionError::Singular => "singular_fit",
    };
    format!("status=null\nreason={reason}\nmessage={err}\n")
}

/// Indices of the fit window.
pub fn select_window(
    series: &IndicatorSeries,
    policy: WindowPolicy,
) -> Result<Vec<usize>, ExtractionError> {
    if series.values.iter().all(|v| v.sign() <= 0) {
        return Err(ExtractionError::NegativeIndicatorThroughout);
    }
    let taus = series.tau.values();
    let admissible = |i: usize| series.admissible[i] && series.values[i].sign() > 0;
    let trailing = || {
        let Some(last) = (0..series.len()).rev().find(|&i| admissible(i)) else {
            return Vec::new();
        };
        let mut first = last;
        while first > 0 && admissible(first - 1) {
            first -= 1;
        }
        (first..=last).collect::<Vec<_>>()
    };
    let idx = match policy {
        WindowPolicy::TrailingRun => trailing(),
        WindowPolicy::UpperFraction(f) => {
            let run = trailing();
            let keep = ((run.len() as f64 * f.clamp(0.0, 1.0)).ceil() as usize)
                .max(MIN_FIT_POINTS)
                .min(run.len());
            run[run.len() - keep..].to_vec()
        }
        WindowPolicy::Fixed { lo, hi } => {
            if !(lo < hi) {
                return Err(ExtractionError::InvalidWindow { lo, hi });
            }
            (0..series.len())
                .filter(|&i| taus[i] >= lo && taus[i] <= hi && admissible(i))
                .collect()
        }
    };
    if idx.len() < MIN_FIT_POINTS {
        return Err(ExtractionError::InsufficientPoints {
            found: idx.len(),
            required: MIN_FIT_POINTS,
        });
    }
    Ok(idx)
}

/// Least-squares coefficients and `r²` for `y ≈ X·c`.
fn least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, f64), ExtractionError> {
    let svd = x.clone().svd(true, true);
    let c = svd.solve(y, 1e-13).map_err(|_| ExtractionError::Singular)?;
    let rank = svd.rank(1e-12 * svd.singular_values.max());
    if rank < x.ncols() {
        return Err(ExtractionError::Singular);
    }
    let fitted = x * &c;
    let mean = y.mean();
    let ss_res: f64 = (y - &fitted).iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok((c, r2))
}

/// Fits the decay rate of `I` over the selected window.
pub fn fit_slope(
    series: &IndicatorSeries,
    eta: f64,
    options: FitOptions,
) -> Result<ExtractionResult, ExtractionError> {
    let idx = select_window(series, options.window)?;
    let taus = series.tau.values();
    // centering τ keeps the normal system well conditioned
    let t_mean = idx.iter().map(|&i| taus[i]).sum::<f64>() / idx.len() as f64;
    let cols = match options.model {
        FitModel::Exponential => 2,
        FitModel::ExponentialWithPower => 3,
    };
    if idx.len() < cols + 1 && idx.len() < MIN_FIT_POINTS {
        return Err(ExtractionError::InsufficientPoints {
            found: idx.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let x = DMatrix::from_fn(idx.len(), cols, |r, c| {
        let t = taus[idx[r]];
        match c {
            0 => 1.0,
            1 => t - t_mean,
            _ => t.ln(),
        }
    });
    let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| series.values[i].ln_abs()));
    let (c, r_squared) = least_squares(&x, &y)?;
    let slope = c[1];
    let r_d_estimate = (series.horizon - eta) + 0.5 * slope;
    let threshold = 2.0 * (eta + r_d_estimate);
    Ok(ExtractionResult {
        slope,
        intercept: c[0] - slope * t_mean,
        power: (cols == 3).then(|| c[2]),
        r_d_estimate,
        fit_window: (
            taus[idx[0]],
            taus[*idx.last().expect("window is non-empty")],
        ),
        n_points: idx.len(),
        r_squared,
        model: options.model,
        horizon: series.horizon,
        eta,
        threshold,
        qualitative_verdict: threshold_verdict(series.horizon, eta, r_d_estimate),
    })
}

/// Verdict predicted by comparing `T` with `2(η + R_D)`.
pub fn threshold_verdict(horizon: f64, eta: f64, r_d: f64) -> Verdict {
    let threshold = 2.0 * (eta + r_d);
    if horizon < threshold {
        Verdict::Blowup
    } else if horizon > threshold {
        Verdict::Decay
    } else {
        Verdict::Indeterminate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualitativeReport {
    /// Observed trend of `ln(e^{τT}I)` over the admissible points.
    pub trend: Verdict,
    pub trend_slope: f64,
    pub window: (f64, f64),
    /// Verdict predicted by `T` vs `2(η + R_D_candidate)`.
    pub predicted: Verdict,
    pub threshold: f64,
    pub consistent: bool,
}

/// Classifies the trend of `e^{τT}I` and compares it with the threshold
/// prediction for `r_d_candidate`. Needs at least two positive admissible
/// points; otherwise the trend is indeterminate.
pub fn qualitative_criterion(
    series: &IndicatorSeries,
    eta: f64,
    r_d_candidate: f64,
) -> QualitativeReport {
    let taus = series.tau.values();
    let idx: Vec<usize> = (0..series.len())
        .filter(|&i| series.admissible[i] && series.values[i].sign() > 0)
        .collect();
    let predicted = threshold_verdict(series.horizon, eta, r_d_candidate);
    let threshold = 2.0 * (eta + r_d_candidate);
    if idx.len() < 2 {
        return QualitativeReport {
            trend: Verdict::Indeterminate,
            trend_slope: 0.0,
            window: (f64::NAN, f64::NAN),
            predicted,
            threshold,
            consistent: predicted == Verdict::Indeterminate,
        };
    }
    let n = idx.len() as f64;
    let xs: Vec<f64> = idx.iter().map(|&i| taus[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| series.scaled(i).ln_abs()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let span = xs[xs.len() - 1] - xs[0];
    let trend = if (slope * span).abs() < TREND_THRESHOLD {
        Verdict::Indeterminate
    } else if slope > 0.0 {
        Verdict::Blowup
    } else {
        Verdict::Decay
    };
    QualitativeReport {
        trend,
        trend_slope: slope,
        window: (xs[0], xs[xs.len() - 1]),
        predicted,
        threshold,
        consistent: trend == predicted,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub statement: &'static str,
    /// `None` when the condition involves `R_D` and no obstacle is given.
    pub holds: Option<bool>,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub r_omega: f64,
    pub r_d: Option<f64>,
    pub checks: Vec<ConditionCheck>,
    pub warnings: Vec<String>,
}

impl AdmissibilityReport {
    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Whether the horizon condition holds; the method is undefined otherwise.
    pub fn horizon_ok(&self) -> bool {
        self.check("horizon").and_then(|c| c.holds).unwrap_or(false)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = match c.holds {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "unknown",
            };
            let margin = c
                .margin
                .map(|m| format!("{m:+.6}"))
                .unwrap_or_else(|| "n/a".into());
            out.push_str(&format!(
                "{:<16} {:<7} margin {:>10}  {}\n",
                c.name, status, margin, c.statement
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// Evaluates the horizon, obstacle-size and strict-horizon conditions.
pub fn validate_admissibility(
    omega: &DomainSpec,
    d: Option<&DomainSpec>,
    pulse: &SourcePulse,
    horizon: f64,
) -> AdmissibilityReport {
    let p = pulse.p;
    let eta = pulse.eta;
    let r_omega = omega.sup_radius(&p);
    let r_d = d.map(|d| d.sup_radius(&p));
    let horizon_margin = horizon - eta - r_omega;
    let tol = 1e-12 * r_omega.max(1.0);
    let mut checks = vec![ConditionCheck {
        name: "horizon",
        statement: "T - eta >= R_Omega(p)",
        holds: Some(horizon_margin >= -tol),
        margin: Some(horizon_margin),
    }];
    let size_margin = r_d.map(|r| eta + 2.0 * r - r_omega);
    checks.push(ConditionCheck {
        name: "obstacle_size",
        statement: "eta + 2 R_D(p) > R_Omega(p)",
        holds: size_margin.map(|m| m > 0.0),
        margin: size_margin,
    });
    checks.push(ConditionCheck {
        name: "strict_horizon",
        statement: "T - eta > R_Omega(p)",
        holds: Some(horizon_margin > tol),
        margin: Some(horizon_margin),
    });
    let mut warnings = Vec::new();
    if d.is_none() {
        warnings.push(
            "obstacle unknown: the size condition needs an a-priori lower bound on R_D(p); \
             it holds for any obstacle with R_D(p) > (R_Omega(p) - eta)/2"
                .to_string(),
        );
    }
    AdmissibilityReport {
        r_omega,
        r_d,
        checks,
        warnings,
    }
}
