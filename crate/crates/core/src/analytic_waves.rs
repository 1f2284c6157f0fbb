//! Exact free-space wave generated by a conical pulse: `∂ₜ²v = Δv`, `v(·,0) = 0`,
//! `∂ₜv(·,0) = Ψ_B` with `Ψ_B(x) = (η − |x−p|)⁺`.
//!
//! The field is radial in `r = |x − p|` and supported in the shell
//! `t − η < r < t + η`. Formulas are written in cancellation-free branches so
//! that they stay accurate near `r = 0` and near the center characteristic
//! `r = t`.

use crate::geometry::Vec3;
use crate::quadrature::adaptive;

/// Ball-shaped initial velocity centered at `p` with radius `eta`, scaled by
/// `amplitude` (1 for the standard pulse).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePulse {
    pub p: Vec3,
    pub eta: f64,
    pub amplitude: f64,
}

/// Where `(r, t)` sits relative to the support of the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveRegion {
    /// `r − t ≥ η`: the front has not arrived.
    AheadOfFront,
    /// `|r − t| < η < r + t`.
    Shell,
    /// `r + t < η`: the sphere of radius `t` around `x` lies inside the ball.
    Core,
    /// `t − r ≥ η`: the wave has passed.
    Lacuna,
}

impl SourcePulse {
    /// Panics unless `eta` is positive and finite; use [`SourcePulse::try_new`]
    /// for fallible construction.
    pub fn new(p: Vec3, eta: f64) -> Self {
        Self::try_new(p, eta).expect("pulse radius must be positive and finite")
    }

    pub fn try_new(p: Vec3, eta: f64) -> Option<Self> {
        (eta > 0.0 && eta.is_finite()).then_some(Self {
            p,
            eta,
            amplitude: 1.0,
        })
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    pub fn radius_to(&self, x: &Vec3) -> f64 {
        (x - self.p).norm()
    }

    pub fn psi(&self, x: &Vec3) -> f64 {
        self.amplitude * (self.eta - self.radius_to(x)).max(0.0)
    }

    pub fn classify(&self, r: f64, t: f64) -> WaveRegion {
        classify(self.eta, r, t)
    }

    pub fn v(&self, x: &Vec3, t: f64) -> f64 {
        self.amplitude * v_radial(self.eta, self.radius_to(x), t)
    }

    pub fn dv_dt(&self, x: &Vec3, t: f64) -> f64 {
        self.amplitude * dv_dt_radial(self.eta, self.radius_to(x), t)
    }

    /// `∇ₓv`; the zero vector at `x = p`.
    pub fn grad_v(&self, x: &Vec3, t: f64) -> Vec3 {
        let d = x - self.p;
        let r = d.norm();
        if r == 0.0 {
            return Vec3::zeros();
        }
        d * (self.amplitude * dv_dr_radial(self.eta, r, t) / r)
    }

    /// `(v, ∂ₜv, ∇v)` in one pass.
    pub fn fields(&self, x: &Vec3, t: f64) -> (f64, f64, Vec3) {
        let d = x - self.p;
        let r = d.norm();
        let a = self.amplitude;
        let g = if r == 0.0 {
            Vec3::zeros()
        } else {
            d * (a * dv_dr_radial(self.eta, r, t) / r)
        };
        (
            a * v_radial(self.eta, r, t),
            a * dv_dt_radial(self.eta, r, t),
            g,
        )
    }

    /// Independent evaluation of `v` as `t` times the spherical mean of `Ψ_B`
    /// over `|y − x| = t`, written as an integral over the polar angle
    /// measured from the direction of `p`.
    pub fn spherical_mean_oracle(&self, x: &Vec3, t: f64, n_phi: usize) -> f64 {
        self.amplitude * spherical_mean_radial(self.eta, self.radius_to(x), t, n_phi)
    }
}

/// Region of `(r, t)`, ties broken in the order Lacuna, AheadOfFront, Core, Shell.
pub fn classify(eta: f64, r: f64, t: f64) -> WaveRegion {
    if t - r >= eta {
        WaveRegion::Lacuna
    } else if r - t >= eta {
        WaveRegion::AheadOfFront
    } else if r + t < eta {
        WaveRegion::Core
    } else {
        WaveRegion::Shell
    }
}

/// `η³/6 − ηd²/2 + |d|³/3`, written as `e²(η/2 − e/3)` with `e = η − |d|`
/// so that it stays accurate near the trailing edge `|d| → η`.
fn shell_poly(eta: f64, d: f64) -> f64 {
    let e = eta - d.abs();
    e * e * (0.5 * eta - e / 3.0)
}

/// Unit-amplitude `v` as a function of `r = |x − p|` and `t > 0`.
///
/// At `r = 0` only the Core or Lacuna branch can apply, and both are finite.
pub fn v_radial(eta: f64, r: f64, t: f64) -> f64 {
    match classify(eta, r, t) {
        WaveRegion::Lacuna | WaveRegion::AheadOfFront => 0.0,
        WaveRegion::Core => {
            if r < t {
                eta * t - t * t - r * r / 3.0
            } else {
                eta * t - r * t - t.powi(3) / (3.0 * r)
            }
        }
        WaveRegion::Shell => shell_poly(eta, r - t) / (2.0 * r),
    }
}

/// Unit-amplitude `∂ₜv(r, t)`.
pub fn dv_dt_radial(eta: f64, r: f64, t: f64) -> f64 {
    match classify(eta, r, t) {
        WaveRegion::Lacuna | WaveRegion::AheadOfFront => 0.0,
        WaveRegion::Core => {
            if r < t {
                eta - 2.0 * t
            } else {
                eta - r - t * t / r
            }
        }
        WaveRegion::Shell => {
            let d = r - t;
            d * (eta - d.abs()) / (2.0 * r)
        }
    }
}

/// Unit-amplitude `∂v/∂r`; zero at `r = 0`.
pub fn dv_dr_radial(eta: f64, r: f64, t: f64) -> f64 {
    match classify(eta, r, t) {
        WaveRegion::Lacuna | WaveRegion::AheadOfFront => 0.0,
        WaveRegion::Core => {
            if r < t {
                -2.0 * r / 3.0
            } else {
                -t + t.powi(3) / (3.0 * r * r)
            }
        }
        WaveRegion::Shell => {
            let d = r - t;
            -shell_poly(eta, d) / (2.0 * r * r) - d * (eta - d.abs()) / (2.0 * r)
        }
    }
}

/// `(t/2) ∫₀^{φ₀} sin φ (η − ρ(φ)) dφ` with `ρ² = r² + t² − 2tr cos φ`.
pub fn spherical_mean_radial(eta: f64, r: f64, t: f64, n_phi: usize) -> f64 {
    if r == 0.0 {
        return t * (eta - t).max(0.0);
    }
    let c = (r * r + t * t - eta * eta) / (2.0 * t * r);
    if c >= 1.0 {
        return 0.0;
    }
    let phi0 = if c <= -1.0 {
        std::f64::consts::PI
    } else {
        c.acos()
    };
    let integrand = |phi: f64| {
        let rho2 = (r - t).powi(2) + 2.0 * t * r * (1.0 - phi.cos());
        phi.sin() * (eta - rho2.max(0.0).sqrt())
    };
    0.5 * t * adaptive(n_phi.max(8), 0.0, phi0, &[], 1e-15 * eta * eta, integrand)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn unit() -> SourcePulse {
        SourcePulse::new(Vec3::zeros(), 1.0)
    }

    fn at(r: f64) -> Vec3 {
        Vec3::new(r, 0.0, 0.0)
    }

    #[test]
    fn psi_examples() {
        let s = unit();
        assert_eq!(s.psi(&Vec3::zeros()), 1.0);
        assert_eq!(s.psi(&at(1.0)), 0.0);
        assert_eq!(s.psi(&Vec3::new(0.0, 0.25, 0.0)), 0.75);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(1.0, 1.0, 1.0), WaveRegion::Shell);
        assert_eq!(classify(1.0, 0.2, 0.3), WaveRegion::Core);
        assert_eq!(classify(0.5, 0.1, 3.0), WaveRegion::Lacuna);
        assert_eq!(classify(1.0, 3.0, 1.0), WaveRegion::AheadOfFront);
        // Ties: t − r = η exactly is Lacuna, r + t = η exactly is Shell.
        assert_eq!(classify(1.0, 0.5, 1.5), WaveRegion::Lacuna);
        assert_eq!(classify(1.0, 0.5, 0.5), WaveRegion::Shell);
    }

    #[test]
    fn v_examples() {
        let s = unit();
        assert_relative_eq!(s.v(&at(1.0), 1.0), 1.0 / 12.0, max_relative = 1e-15);
        assert_relative_eq!(
            s.spherical_mean_oracle(&at(1.0), 1.0, 64),
            1.0 / 12.0,
            max_relative = 1e-10
        );
        assert_relative_eq!(s.v(&Vec3::zeros(), 0.3), 0.21, max_relative = 1e-15);
        assert_relative_eq!(
            s.spherical_mean_oracle(&at(1e-4), 0.3, 32),
            s.v(&at(1e-4), 0.3),
            max_relative = 1e-12
        );
        assert!((s.v(&at(1e-4), 0.3) - 0.21).abs() < 1e-8);
        let half = SourcePulse::new(Vec3::zeros(), 0.5);
        assert_eq!(half.v(&at(1.0), 5.0), 0.0);
        assert_eq!(s.spherical_mean_oracle(&at(3.0), 1.0, 16), 0.0);
        let core = s.spherical_mean_oracle(&at(0.1), 0.3, 32);
        assert_relative_eq!(core, s.v(&at(0.1), 0.3), max_relative = 1e-10);
    }

    #[test]
    fn dv_dt_examples() {
        let s = unit();
        assert_eq!(s.dv_dt(&at(1.0), 1.0), 0.0);
        assert_relative_eq!(s.dv_dt(&Vec3::zeros(), 0.3), 0.4, max_relative = 1e-15);
        let h = 1e-5;
        let fd = (s.v(&Vec3::zeros(), 0.3 + h) - s.v(&Vec3::zeros(), 0.3 - h)) / (2.0 * h);
        assert!((fd - 0.4).abs() < 1e-6);
        assert_eq!(s.dv_dt(&at(2.5), 0.05), 0.0);
    }

    #[test]
    fn grad_examples() {
        let s = unit();
        assert_eq!(s.grad_v(&Vec3::zeros(), 0.3), Vec3::zeros());
        let h = 1e-5;
        let fd = (s.v(&at(1.0 + h), 1.0) - s.v(&at(1.0 - h), 1.0)) / (2.0 * h);
        assert!((s.grad_v(&at(1.0), 1.0).x - fd).abs() < 1e-6);
        let half = SourcePulse::new(Vec3::zeros(), 0.5);
        assert_eq!(half.grad_v(&at(1.0), 5.0), Vec3::zeros());
    }

    #[test]
    fn fields_agree_with_individual_calls() {
        let s = SourcePulse::new(Vec3::new(0.1, -0.2, 0.3), 0.7).with_amplitude(2.5);
        let x = Vec3::new(0.5, 0.4, -0.1);
        let (v, vt, g) = s.fields(&x, 0.6);
        assert_eq!(v, s.v(&x, 0.6));
        assert_eq!(vt, s.dv_dt(&x, 0.6));
        assert_eq!(g, s.grad_v(&x, 0.6));
    }

    fn sample_region(rng: &mut StdRng, eta: f64, region: WaveRegion) -> (f64, f64) {
        loop {
            let r = rng.random_range(0.0..3.0 * eta);
            let t = rng.random_range(1e-3..3.0 * eta);
            if classify(eta, r, t) == region {
                return (r, t);
            }
        }
    }

    #[test]
    fn closed_form_matches_spherical_mean_per_region() {
        let mut rng = StdRng::seed_from_u64(7);
        for region in [
            WaveRegion::Shell,
            WaveRegion::Core,
            WaveRegion::AheadOfFront,
            WaveRegion::Lacuna,
        ] {
            for _ in 0..100 {
                let eta = rng.random_range(0.2..2.0);
                let (r, t) = sample_region(&mut rng, eta, region);
                let exact = v_radial(eta, r, t);
                let oracle = spherical_mean_radial(eta, r, t, 24);
                assert!(
                    (exact - oracle).abs() <= 1e-9 * eta * eta,
                    "{region:?} eta={eta} r={r} t={t}: {exact} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn continuity_across_region_boundaries() {
        let mut rng = StdRng::seed_from_u64(11);
        let eps = 1e-13;
        for _ in 0..200 {
            let eta = rng.random_range(0.2..2.0);
            // r + t = η (Core | Shell)
            let t = rng.random_range(0.01..0.99) * eta;
            let r = eta - t;
            assert!((v_radial(eta, r - eps, t) - v_radial(eta, r + eps, t)).abs() < 1e-12);
            assert!((dv_dt_radial(eta, r - eps, t) - dv_dt_radial(eta, r + eps, t)).abs() < 1e-11);
            // r − t = η (Shell | AheadOfFront)
            let t = rng.random_range(0.01..2.0);
            let r = t + eta;
            assert!(v_radial(eta, r - eps, t).abs() < 1e-12);
            // t − r = η (Lacuna | Shell)
            let r = rng.random_range(0.01..2.0);
            let t = r + eta;
            assert!(v_radial(eta, r, t - eps).abs() < 1e-12);
        }
    }

    #[test]
    fn support_vanishes_outside_shell() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..500 {
            let eta = rng.random_range(0.1..2.0);
            let t = rng.random_range(0.01..4.0);
            let outer = t + eta + rng.random_range(0.0..2.0);
            assert_eq!(v_radial(eta, outer, t), 0.0);
            assert_eq!(dv_dt_radial(eta, outer, t), 0.0);
            if t > eta {
                let inner = rng.random_range(0.0..=(t - eta));
                assert_eq!(v_radial(eta, inner, t), 0.0);
                assert_eq!(dv_dt_radial(eta, inner, t), 0.0);
            }
        }
    }

    fn wave_residual(s: &SourcePulse, x: &Vec3, t: f64, h: f64) -> f64 {
        let c = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        let mut vtt = 0.0;
        let mut lap = 0.0;
        for (k, ck) in c.iter().enumerate() {
            let o = (k as f64 - 2.0) * h;
            vtt += ck * s.v(x, t + o);
            for axis in 0..3 {
                let mut y = *x;
                y[axis] += o;
                lap += ck * s.v(&y, t);
            }
        }
        (vtt - lap) / (h * h)
    }

    #[test]
    fn wave_operator_residual_shrinks_under_refinement() {
        let mut rng = StdRng::seed_from_u64(5);
        let eta = 1.0;
        let s = SourcePulse::new(Vec3::zeros(), eta);
        let h = 0.01;
        let margin = 8.0 * h;
        let mut tested = 0;
        while tested < 40 {
            let r = rng.random_range(0.2..2.5);
            let t = rng.random_range(0.05..2.5);
            let region = classify(eta, r, t);
            if !matches!(region, WaveRegion::Shell | WaveRegion::Core) {
                continue;
            }
            let clear = [(r - t).abs() - eta, r + t - eta, r - t, t - r + eta, r]
                .iter()
                .map(|d| d.abs())
                .fold(f64::INFINITY, f64::min);
            if clear < margin || t < margin {
                continue;
            }
            let dir = Vec3::new(rng.random(), rng.random(), rng.random()).normalize();
            let x = dir * r;
            let coarse = wave_residual(&s, &x, t, h).abs();
            let fine = wave_residual(&s, &x, t, 0.5 * h).abs();
            assert!(
                fine < 1e-7 || coarse / fine >= 3.5,
                "{region:?} r={r} t={t}: {coarse} -> {fine}"
            );
            tested += 1;
        }
    }

    proptest! {
        #[test]
        fn dv_dt_matches_finite_difference(eta in 0.2f64..2.0, r in 0.05f64..3.0, t in 0.05f64..3.0) {
            let h = 1e-5;
            let clear = [(r - t).abs() - eta, r + t - eta, r - t]
                .iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
            prop_assume!(clear > 10.0 * h);
            let fd = (v_radial(eta, r, t + h) - v_radial(eta, r, t - h)) / (2.0 * h);
            prop_assert!((fd - dv_dt_radial(eta, r, t)).abs() < 1e-6);
            let fr = (v_radial(eta, r + h, t) - v_radial(eta, r - h, t)) / (2.0 * h);
            prop_assert!((fr - dv_dr_radial(eta, r, t)).abs() < 1e-6);
        }

        #[test]
        fn field_is_nonnegative(eta in 0.1f64..2.0, r in 0.0f64..4.0, t in 1e-3f64..4.0) {
            prop_assert!(v_radial(eta, r, t) >= -1e-15);
        }
    }
}
