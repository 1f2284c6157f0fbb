//! Named comparisons of every closed form against an independent evaluation.
//!
//! Each check draws its parameters from a fixed seed, records the worst error
//! seen and compares it to a fixed tolerance. The report prints one line per
//! check.

use std::fmt::{self, Write as _};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::analytic_waves::{classify, spherical_mean_radial, v_radial, WaveRegion};
use crate::closed_forms::{
    appendix_vj, appendix_vj_ball_oracle, appendix_vj_via_moments, g_tau, h_j_recurrence_scaled,
    h_j_scaled, i_j_closed, i_j_oracle, k_j, lemma22_closed, lemma22_lhs_oracle,
    script_h_minus_kernels_scaled, script_h_minus_poly_scaled, script_h_plus_kernels_scaled,
    script_h_plus_poly_scaled, script_h_sum_scaled, LaplaceParams, ShellAnnulus,
};
use crate::geometry::Vec3;

const SEED: u64 = 0x5eed_2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteLevel {
    /// Fixed seeds, small quadrature orders, few expensive samples.
    Quick,
    /// High-order quadrature and more sample points.
    Full,
}

impl SuiteLevel {
    pub fn name(self) -> &'static str {
        match self {
            SuiteLevel::Quick => "quick",
            SuiteLevel::Full => "full",
        }
    }
}

impl std::str::FromStr for SuiteLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quick" => Ok(SuiteLevel::Quick),
            "full" => Ok(SuiteLevel::Full),
            other => Err(format!(
                "unknown suite level {other:?} (expected quick or full)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub description: &'static str,
    pub samples: usize,
    /// Worst error in the check's own metric (see `description`).
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst.is_finite() && self.worst <= self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} samples={:<5} worst={:.3e} tol={:.0e} time={:.2}s  {}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.samples,
            self.worst,
            self.tolerance,
            self.seconds,
            self.description
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub level: SuiteLevel,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.passed()).count()
    }

    pub fn failed(&self) -> usize {
        self.checks.len() - self.passed()
    }

    pub fn all_passed(&self) -> bool {
        self.failed() == 0
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{c}");
        }
        let _ = writeln!(
            out,
            "oracle suite ({}): {} passed, {} failed",
            self.level.name(),
            self.passed(),
            self.failed()
        );
        out
    }
}

struct Check {
    name: &'static str,
    description: &'static str,
    tolerance: f64,
    run: fn(SuiteLevel) -> (usize, f64),
}

const CHECKS: &[Check] = &[
    Check {
        name: "kernel_recurrence",
        description: "annulus kernels: direct form vs upward recurrence, relative",
        tolerance: 1e-13,
        run: kernel_recurrence,
    },
    Check {
        name: "shell_aggregate_two_paths",
        description: "outer and inner shell aggregates: kernel combination vs cubic form, relative to term magnitude",
        tolerance: 1e-11,
        run: shell_two_paths,
    },
    Check {
        name: "shell_aggregate_sum",
        description: "sum of both aggregates vs three-exponential formula, relative to term magnitude",
        tolerance: 1e-12,
        run: shell_sum,
    },
    Check {
        name: "inner_cubic_endpoint",
        description: "g at T-eta vs (eta - 2/tau)/tau, relative",
        tolerance: 1e-13,
        run: cubic_endpoint,
    },
    Check {
        name: "free_wave_regions",
        description: "free wave closed form vs spherical-mean quadrature in all four regions, absolute / eta^2",
        tolerance: 1e-9,
        run: free_wave_regions,
    },
    Check {
        name: "annulus_potential",
        description: "annulus potentials j=-1..2: closed form vs 3-D quadrature, relative",
        tolerance: 1e-6,
        run: annulus_potential,
    },
    Check {
        name: "ball_potential_antiderivative",
        description: "ball potentials j=-1..2: closed form vs moment antiderivatives and K_j, relative",
        tolerance: 1e-12,
        run: ball_potential_antiderivative,
    },
    Check {
        name: "ball_potential_quadrature",
        description: "ball potentials j=-1..2: closed form vs 3-D ball quadrature, relative",
        tolerance: 1e-4,
        run: ball_potential_quadrature,
    },
    Check {
        name: "shell_integral",
        description: "shell volume integral: quadrature vs aggregate sum times sinh kernel, relative",
        tolerance: 1e-5,
        run: shell_integral,
    },
    Check {
        name: "large_tau_limit",
        description: "tau e^{tau(T-eta)} (aggregate sum) vs eta at tau = 200/eta, relative",
        tolerance: 2e-2,
        run: large_tau_limit,
    },
];

/// Names of all checks, in report order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

/// Runs one named check.
pub fn run_check(name: &str, level: SuiteLevel) -> Option<CheckResult> {
    CHECKS
        .iter()
        .find(|c| c.name == name)
        .map(|c| execute(c, level))
}

pub fn run_oracle_suite(level: SuiteLevel) -> SuiteReport {
    SuiteReport {
        level,
        checks: CHECKS.iter().map(|c| execute(c, level)).collect(),
    }
}

fn execute(c: &Check, level: SuiteLevel) -> CheckResult {
    let start = Instant::now();
    let (samples, worst) = (c.run)(level);
    CheckResult {
        name: c.name,
        description: c.description,
        samples,
        worst,
        tolerance: c.tolerance,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rng(offset: u64) -> StdRng {
    StdRng::seed_from_u64(SEED ^ offset)
}

/// NaN propagates so that a non-finite comparison fails the check.
fn worse(acc: f64, e: f64) -> f64 {
    if e.is_nan() || acc.is_nan() {
        f64::NAN
    } else {
        acc.max(e)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn random_params(r: &mut StdRng) -> LaplaceParams {
    let tau = r.random_range(0.5..50.0);
    let eta = r.random_range(0.1..2.0);
    let gap = r.random_range(0.05..3.0);
    LaplaceParams::new(tau, eta + gap, eta).expect("valid draw")
}

fn kernel_recurrence(_: SuiteLevel) -> (usize, f64) {
    let mut r = rng(1);
    let mut worst = 0.0;
    let n = 1000;
    for _ in 0..n {
        let tau = r.random_range(0.5..50.0);
        let a = r.random_range(0.1..5.0);
        let b = a + r.random_range(1e-3..5.0);
        let ann = ShellAnnulus::new(a, b).expect("ordered radii");
        for j in -1..=2 {
            let direct = h_j_scaled(j, tau, &ann).expect("valid index");
            let rec = h_j_recurrence_scaled(j, tau, &ann).expect("valid index");
            worst = worse(worst, rel(direct, rec));
        }
    }
    (n, worst)
}

fn shell_two_paths(_: SuiteLevel) -> (usize, f64) {
    let mut r = rng(2);
    let mut worst = 0.0;
    let n = 1000;
    for _ in 0..n {
        let p = random_params(&mut r);
        let (a, b) = (
            script_h_plus_kernels_scaled(&p),
            script_h_plus_poly_scaled(&p),
        );
        worst = worse(
            worst,
            (a.value - b.value).abs() / a.magnitude.max(b.magnitude),
        );
        let (a, b) = (
            script_h_minus_kernels_scaled(&p),
            script_h_minus_poly_scaled(&p),
        );
        worst = worse(
            worst,
            (a.value - b.value).abs() / a.magnitude.max(b.magnitude),
        );
    }
    (n, worst)
}

fn shell_sum(_: SuiteLevel) -> (usize, f64) {
    let mut r = rng(3);
    let mut worst = 0.0;
    let n = 1000;
    for _ in 0..n {
        let p = random_params(&mut r);
        // both on the e^{τ(T−η)} scale
        let damp = (-p.tau * p.eta).exp();
        let plus = script_h_plus_kernels_scaled(&p);
        let minus = script_h_minus_kernels_scaled(&p);
        let sum = plus.value * damp + minus.value;
        let magnitude = plus.magnitude * damp + minus.magnitude;
        let exact = script_h_sum_scaled(&p);
        worst = worse(worst, (sum - exact).abs() / magnitude.max(exact.abs()));
    }
    (n, worst)
}

fn cubic_endpoint(_: SuiteLevel) -> (usize, f64) {
    let mut r = rng(4);
    let mut worst = 0.0;
    let n = 1000;
    for _ in 0..n {
        let p = random_params(&mut r);
        let exact = (p.eta - 2.0 / p.tau) / p.tau;
        worst = worse(worst, rel(g_tau(&p, p.t - p.eta), exact));
    }
    (n, worst)
}

fn free_wave_regions(level: SuiteLevel) -> (usize, f64) {
    let mut r = rng(5);
    let n_phi = match level {
        SuiteLevel::Quick => 16,
        SuiteLevel::Full => 32,
    };
    let mut worst = 0.0;
    let mut count = 0;
    for region in [
        WaveRegion::Shell,
        WaveRegion::Core,
        WaveRegion::AheadOfFront,
        WaveRegion::Lacuna,
    ] {
        for _ in 0..100 {
            let eta = r.random_range(0.2..2.0);
            let (rr, t) = loop {
                let rr = r.random_range(0.0..3.0 * eta);
                let t = r.random_range(1e-3..3.0 * eta);
                if classify(eta, rr, t) == region {
                    break (rr, t);
                }
            };
            let exact = v_radial(eta, rr, t);
            let oracle = spherical_mean_radial(eta, rr, t, n_phi);
            worst = worse(worst, (exact - oracle).abs() / (eta * eta));
            count += 1;
        }
    }
    (count, worst)
}

fn annulus_potential(level: SuiteLevel) -> (usize, f64) {
    let (order, cases): (usize, &[(f64, f64, f64, f64)]) = match level {
        SuiteLevel::Quick => (24, &[(3.0, 1.0, 1.5, 0.4)]),
        SuiteLevel::Full => (
            40,
            &[
                (3.0, 1.0, 1.5, 0.4),
                (1.0, 0.8, 2.0, 0.4),
                (8.0, 0.5, 0.9, 0.2),
            ],
        ),
    };
    let p = Vec3::new(0.1, -0.2, 0.05);
    let mut worst = 0.0;
    let mut count = 0;
    for &(tau, r1, r2, d) in cases {
        let ann = ShellAnnulus::new(r1, r2).expect("ordered radii");
        let x = p + Vec3::new(d, 0.3 * d, -0.2 * d);
        for j in -1..=2 {
            let q = i_j_oracle(j, tau, &ann, &x, &p, order).expect("interior point");
            let c = i_j_closed(j, tau, &ann, &x, &p).expect("valid index");
            worst = worse(worst, rel(q, c));
            count += 1;
        }
    }
    (count, worst)
}

fn ball_potential_antiderivative(_: SuiteLevel) -> (usize, f64) {
    let mut r = rng(6);
    let mut worst = 0.0;
    let n = 200;
    for _ in 0..n {
        let tau = r.random_range(0.5..20.0);
        let eta = r.random_range(0.2..2.0);
        let xi = r.random_range(0.05..0.95) * eta;
        let dir = Vec3::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        let x = dir.try_normalize(1e-6).unwrap_or_else(Vec3::x) * xi;
        for j in -1..=2 {
            let a = appendix_vj(j, tau, eta, &x).expect("interior point");
            let b = appendix_vj_via_moments(j, tau, eta, &x).expect("interior point");
            let k = 2.0 * std::f64::consts::PI / (x.norm() * tau)
                * k_j(j, tau, eta, x.norm()).expect("valid index");
            worst = worse(worst, rel(a, b).max(rel(a, k)));
        }
    }
    (n, worst)
}

fn ball_potential_quadrature(level: SuiteLevel) -> (usize, f64) {
    let (order, points): (usize, &[(f64, f64, f64)]) = match level {
        SuiteLevel::Quick => (8, &[(3.0, 1.0, 0.5)]),
        SuiteLevel::Full => (12, &[(3.0, 1.0, 0.5), (1.0, 0.8, 0.2), (6.0, 1.5, 1.1)]),
    };
    let mut worst = 0.0;
    let mut count = 0;
    for &(tau, eta, xi) in points {
        let x = Vec3::new(xi * 0.6, 0.0, xi * 0.8);
        for j in -1..=2 {
            let q = appendix_vj_ball_oracle(j, tau, eta, &x, order).expect("interior point");
            let c = appendix_vj(j, tau, eta, &x).expect("interior point");
            worst = worse(worst, rel(q, c));
            count += 1;
        }
    }
    (count, worst)
}

fn shell_integral(level: SuiteLevel) -> (usize, f64) {
    let (order, cases): (usize, &[(f64, f64, f64, f64)]) = match level {
        SuiteLevel::Quick => (24, &[(4.0, 1.5, 0.4, 0.3)]),
        SuiteLevel::Full => (
            40,
            &[
                (4.0, 1.5, 0.4, 0.3),
                (4.0, 1.5, 0.4, 0.8),
                (2.0, 1.9, 0.9, 0.5),
                (10.0, 1.2, 0.3, 0.6),
            ],
        ),
    };
    let p = Vec3::new(0.2, 0.0, -0.1);
    let mut worst = 0.0;
    for &(tau, t, eta, d) in cases {
        let params = LaplaceParams::new(tau, t, eta).expect("valid parameters");
        let x = p + Vec3::new(0.0, d, 0.0);
        let q = lemma22_lhs_oracle(&params, &x, &p, order).expect("interior point");
        worst = worse(worst, rel(q.total(), lemma22_closed(&params, &x, &p)));
    }
    (cases.len(), worst)
}

fn large_tau_limit(_: SuiteLevel) -> (usize, f64) {
    let cases = [(2.0, 0.5), (1.9, 0.9), (1.2, 0.1)];
    let mut worst = 0.0;
    for &(t, eta) in &cases {
        let tau = 200.0 / eta;
        let params = LaplaceParams::new(tau, t, eta).expect("valid parameters");
        worst = worse(
            worst,
            (tau * script_h_sum_scaled(&params) - eta).abs() / eta,
        );
    }
    (cases.len(), worst)
}
