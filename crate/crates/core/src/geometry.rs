//! Balls, boxes and unions of balls: membership, sup-radii and the surface and
//! volume quadrature rules used by everything downstream.

use std::f64::consts::PI;

use nalgebra::Vector3;
use thiserror::Error;

use crate::quadrature::{composite_rule, gauss_legendre, graded_edges};

pub type Vec3 = Vector3<f64>;

/// Largest number of components accepted for a union-of-balls obstacle.
pub const MAX_UNION_MEMBERS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("ball radius must be positive and finite, got {0}")]
    NonPositiveRadius(f64),
    #[error("box corners must be strictly ordered on every axis (min {min:?}, max {max:?})")]
    InvalidBox { min: [f64; 3], max: [f64; 3] },
    #[error("union of balls must have between 1 and {MAX_UNION_MEMBERS} members, got {0}")]
    UnionSize(usize),
    #[error("union members {0} and {1} overlap or touch")]
    OverlappingMembers(usize, usize),
    #[error("obstacle closure is not inside the domain (clearance {clearance:.6}, required {required:.6})")]
    NotContained { clearance: f64, required: f64 },
    #[error("surface quadrature is not supported for {0}")]
    UnsupportedSurface(&'static str),
    #[error("containment test is not supported for an inner {0}")]
    UnsupportedContainment(&'static str),
    #[error("quadrature order must be at least {min}, got {got}")]
    OrderTooSmall { min: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSpec {
    pub center: Vec3,
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: Vec3, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (x - self.center).norm() < self.radius
    }

    pub fn sup_radius(&self, p: &Vec3) -> f64 {
        (self.center - p).norm() + self.radius
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSpec {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoxSpec {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, GeometryError> {
        if (0..3).any(|i| !(min[i] < max[i]) || !min[i].is_finite() || !max[i].is_finite()) {
            return Err(GeometryError::InvalidBox {
                min: min.into(),
                max: max.into(),
            });
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|i| x[i] > self.min[i] && x[i] < self.max[i])
    }

    pub fn corners(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..8).map(move |k| {
            Vec3::new(
                if k & 1 == 0 { self.min.x } else { self.max.x },
                if k & 2 == 0 { self.min.y } else { self.max.y },
                if k & 4 == 0 { self.min.z } else { self.max.z },
            )
        })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

/// Shape of Ω or of the obstacle D.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Ball(BallSpec),
    Box(BoxSpec),
    Union(Vec<BallSpec>),
}

impl DomainSpec {
    pub fn ball(center: Vec3, radius: f64) -> Result<Self, GeometryError> {
        Ok(Self::Ball(BallSpec::new(center, radius)?))
    }

    pub fn cuboid(min: Vec3, max: Vec3) -> Result<Self, GeometryError> {
        Ok(Self::Box(BoxSpec::new(min, max)?))
    }

    /// A union of pairwise disjoint balls.
    pub fn union(members: Vec<BallSpec>) -> Result<Self, GeometryError> {
        let d = Self::Union(members);
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            Self::Ball(b) => BallSpec::new(b.center, b.radius).map(|_| ()),
            Self::Box(b) => BoxSpec::new(b.min, b.max).map(|_| ()),
            Self::Union(members) => {
                if members.is_empty() || members.len() > MAX_UNION_MEMBERS {
                    return Err(GeometryError::UnionSize(members.len()));
                }
                for m in members {
                    BallSpec::new(m.center, m.radius)?;
                }
                for i in 0..members.len() {
                    for j in i + 1..members.len() {
                        let gap = (members[i].center - members[j].center).norm()
                            - members[i].radius
                            - members[j].radius;
                        if gap <= 0.0 {
                            return Err(GeometryError::OverlappingMembers(i, j));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Ball(_) => "ball",
            Self::Box(_) => "box",
            Self::Union(_) => "union of balls",
        }
    }

    /// Open-set membership.
    pub fn contains(&self, x: &Vec3) -> bool {
        match self {
            Self::Ball(b) => b.contains(x),
            Self::Box(b) => b.contains(x),
            Self::Union(ms) => ms.iter().any(|b| b.contains(x)),
        }
    }

    /// `sup_{x ∈ domain} |x − p|`, exact per shape.
    pub fn sup_radius(&self, p: &Vec3) -> f64 {
        match self {
            Self::Ball(b) => b.sup_radius(p),
            Self::Box(b) => b.corners().map(|c| (c - p).norm()).fold(0.0, f64::max),
            Self::Union(ms) => ms.iter().map(|b| b.sup_radius(p)).fold(0.0, f64::max),
        }
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        match self {
            Self::Ball(b) => Self::Ball(BallSpec {
                center: b.center + offset,
                radius: b.radius,
            }),
            Self::Box(b) => Self::Box(BoxSpec {
                min: b.min + offset,
                max: b.max + offset,
            }),
            Self::Union(ms) => Self::Union(
                ms.iter()
                    .map(|b| BallSpec {
                        center: b.center + offset,
                        radius: b.radius,
                    })
                    .collect(),
            ),
        }
    }

    /// Dilation about the origin by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let ball = |b: &BallSpec| BallSpec {
            center: b.center * factor,
            radius: b.radius * factor,
        };
        match self {
            Self::Ball(b) => Self::Ball(ball(b)),
            Self::Box(b) => Self::Box(BoxSpec {
                min: b.min * factor,
                max: b.max * factor,
            }),
            Self::Union(ms) => Self::Union(ms.iter().map(ball).collect()),
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let ball_box = |b: &BallSpec| {
            let r = Vec3::repeat(b.radius);
            (b.center - r, b.center + r)
        };
        match self {
            Self::Ball(b) => ball_box(b),
            Self::Box(b) => (b.min, b.max),
            Self::Union(ms) => ms.iter().map(ball_box).fold(
                (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
                |(lo, hi), (a, b)| (lo.inf(&a), hi.sup(&b)),
            ),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Self::Ball(b) => b.volume(),
            Self::Box(b) => b.extent().product(),
            Self::Union(ms) => ms.iter().map(BallSpec::volume).sum(),
        }
    }

    pub fn surface_area(&self) -> f64 {
        match self {
            Self::Ball(b) => 4.0 * PI * b.radius * b.radius,
            Self::Box(b) => {
                let e = b.extent();
                2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
            }
            Self::Union(ms) => ms.iter().map(|b| 4.0 * PI * b.radius * b.radius).sum(),
        }
    }

    /// Balls making up an obstacle. Boxes have none.
    pub fn balls(&self) -> Vec<BallSpec> {
        match self {
            Self::Ball(b) => vec![*b],
            Self::Box(_) => Vec::new(),
            Self::Union(ms) => ms.clone(),
        }
    }

    /// Smallest distance between the closure of `inner` and the complement of
    /// `self`. Positive means `closure(inner) ⊂ self`.
    pub fn clearance_of(&self, inner: &DomainSpec) -> Result<f64, GeometryError> {
        let balls = match inner {
            DomainSpec::Box(_) => return Err(GeometryError::UnsupportedContainment("box")),
            other => other.balls(),
        };
        let per_ball = |b: &BallSpec| match self {
            Self::Ball(o) => o.radius - (b.center - o.center).norm() - b.radius,
            Self::Box(o) => (0..3)
                .map(|i| (b.center[i] - o.min[i]).min(o.max[i] - b.center[i]) - b.radius)
                .fold(f64::INFINITY, f64::min),
            // Containment in a union is not needed for any supported Ω.
            Self::Union(_) => f64::NEG_INFINITY,
        };
        Ok(balls.iter().map(per_ball).fold(f64::INFINITY, f64::min))
    }

    /// Errors unless `closure(inner) ⊂ self` with at least `margin` to spare.
    pub fn require_contains(&self, inner: &DomainSpec, margin: f64) -> Result<f64, GeometryError> {
        let clearance = self.clearance_of(inner)?;
        if clearance <= 0.0 || clearance < margin {
            return Err(GeometryError::NotContained {
                clearance,
                required: margin,
            });
        }
        Ok(clearance)
    }
}

/// Nodes, outward unit normals and area weights on a closed surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceQuadrature {
    pub nodes: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl SurfaceQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(&Vec3, &Vec3) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.normals)
            .zip(&self.weights)
            .map(|((x, n), w)| w * f(x, n))
            .sum()
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        Self {
            nodes: self.nodes.iter().map(|x| x + offset).collect(),
            normals: self.normals.clone(),
            weights: self.weights.clone(),
        }
    }
}

/// Unit-sphere directions and weights: Gauss–Legendre in `cos θ` times a
/// uniform azimuthal rule with `2·order` points. Weights sum to `4π`.
pub fn unit_sphere_rule(order: usize) -> Vec<(Vec3, f64)> {
    let rule = gauss_legendre(order);
    let n_phi = 2 * order;
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(order * n_phi);
    for (&z, &wz) in rule.nodes().iter().zip(rule.weights()) {
        let s = (1.0 - z * z).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            out.push((Vec3::new(s * phi.cos(), s * phi.sin(), z), wz * dphi));
        }
    }
    out
}

/// Surface rule on `∂Ω` for a ball (product rule on the parametric sphere) or a
/// box (tensor Gauss–Legendre per face, nodes strictly inside faces).
pub fn surface_quadrature(
    domain: &DomainSpec,
    order: usize,
) -> Result<SurfaceQuadrature, GeometryError> {
    if order < 2 {
        return Err(GeometryError::OrderTooSmall { min: 2, got: order });
    }
    match domain {
        DomainSpec::Ball(b) => {
            let area_scale = b.radius * b.radius;
            let mut q = SurfaceQuadrature {
                nodes: Vec::new(),
                normals: Vec::new(),
                weights: Vec::new(),
            };
            for (dir, w) in unit_sphere_rule(order) {
                q.nodes.push(b.center + dir * b.radius);
                q.normals.push(dir);
                q.weights.push(w * area_scale);
            }
            Ok(q)
        }
        DomainSpec::Box(b) => {
            let rule = gauss_legendre(order);
            let mut q = SurfaceQuadrature {
                nodes: Vec::new(),
                normals: Vec::new(),
                weights: Vec::new(),
            };
            for axis in 0..3 {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                for side in [-1.0, 1.0] {
                    let mut normal = Vec3::zeros();
                    normal[axis] = side;
                    let fixed = if side < 0.0 { b.min[axis] } else { b.max[axis] };
                    for (xu, wu) in rule.mapped(b.min[u], b.max[u]) {
                        for (xv, wv) in rule.mapped(b.min[v], b.max[v]) {
                            let mut x = Vec3::zeros();
                            x[axis] = fixed;
                            x[u] = xu;
                            x[v] = xv;
                            q.nodes.push(x);
                            q.normals.push(normal);
                            q.weights.push(wu * wv);
                        }
                    }
                }
            }
            Ok(q)
        }
        DomainSpec::Union(_) => Err(GeometryError::UnsupportedSurface("a union of balls")),
    }
}

/// Volume nodes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeQuadrature {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl VolumeQuadrature {
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(&Vec3) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    fn concat(parts: Vec<VolumeQuadrature>) -> Self {
        let mut out = VolumeQuadrature {
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        for p in parts {
            out.nodes.extend(p.nodes);
            out.weights.extend(p.weights);
        }
        out
    }
}

/// Radial Gauss–Legendre × spherical product rule, both of `order`.
pub fn ball_volume_quadrature(ball: &BallSpec, order: usize) -> VolumeQuadrature {
    let radial = composite_rule(order, &[0.0, ball.radius]);
    ball_rule_from_radial(ball, &radial, order)
}

/// Same as [`ball_volume_quadrature`] with independent radial panels and
/// angular order; `radial_edges` must span `[0, radius]`.
pub fn ball_volume_quadrature_with(
    ball: &BallSpec,
    radial_order: usize,
    radial_edges: &[f64],
    angular_order: usize,
) -> VolumeQuadrature {
    let radial = composite_rule(radial_order, radial_edges);
    ball_rule_from_radial(ball, &radial, angular_order)
}

/// Ball rule with radial panels refined toward the sphere, for integrands that
/// peak exponentially at the boundary.
pub fn graded_ball_volume_quadrature(
    ball: &BallSpec,
    order: usize,
    levels: usize,
) -> VolumeQuadrature {
    let edges = graded_edges(0.0, ball.radius, true, 0.5, levels);
    ball_volume_quadrature_with(ball, order, &edges, order)
}

fn ball_rule_from_radial(
    ball: &BallSpec,
    radial: &[(f64, f64)],
    angular_order: usize,
) -> VolumeQuadrature {
    let sphere = unit_sphere_rule(angular_order);
    let mut q = VolumeQuadrature {
        nodes: Vec::with_capacity(radial.len() * sphere.len()),
        weights: Vec::with_capacity(radial.len() * sphere.len()),
    };
    for &(r, wr) in radial {
        for (dir, wa) in &sphere {
            q.nodes.push(ball.center + dir * r);
            q.weights.push(wr * r * r * wa);
        }
    }
    q
}

/// Tensor rule on a box with panels refined toward all six faces.
pub fn box_volume_quadrature(b: &BoxSpec, order: usize, levels: usize) -> VolumeQuadrature {
    let axis_rule = |i: usize| {
        let mid = 0.5 * (b.min[i] + b.max[i]);
        let mut edges = graded_edges(b.min[i], mid, false, 0.5, levels);
        edges.pop();
        edges.extend(graded_edges(mid, b.max[i], true, 0.5, levels));
        composite_rule(order, &edges)
    };
    let (rx, ry, rz) = (axis_rule(0), axis_rule(1), axis_rule(2));
    let mut q = VolumeQuadrature {
        nodes: Vec::with_capacity(rx.len() * ry.len() * rz.len()),
        weights: Vec::with_capacity(rx.len() * ry.len() * rz.len()),
    };
    for &(x, wx) in &rx {
        for &(y, wy) in &ry {
            for &(z, wz) in &rz {
                q.nodes.push(Vec3::new(x, y, z));
                q.weights.push(wx * wy * wz);
            }
        }
    }
    q
}

/// Boundary-graded volume rule for any supported shape.
pub fn domain_volume_quadrature(
    domain: &DomainSpec,
    order: usize,
    levels: usize,
) -> VolumeQuadrature {
    match domain {
        DomainSpec::Ball(b) => graded_ball_volume_quadrature(b, order, levels),
        DomainSpec::Box(b) => box_volume_quadrature(b, order, levels),
        DomainSpec::Union(ms) => VolumeQuadrature::concat(
            ms.iter()
                .map(|b| graded_ball_volume_quadrature(b, order, levels))
                .collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn origin() -> Vec3 {
        Vec3::zeros()
    }

    #[test]
    fn sup_radius_examples() {
        let cube = DomainSpec::cuboid(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        assert_relative_eq!(cube.sup_radius(&origin()), 3f64.sqrt(), epsilon = 1e-15);
        let unit = DomainSpec::ball(origin(), 1.0).unwrap();
        assert_eq!(unit.sup_radius(&origin()), 1.0);
        let off = DomainSpec::ball(Vec3::new(0.5, 0.0, 0.0), 0.2).unwrap();
        assert_relative_eq!(off.sup_radius(&origin()), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(BallSpec::new(origin(), 0.0).is_err());
        assert!(BallSpec::new(origin(), f64::NAN).is_err());
        assert!(DomainSpec::cuboid(Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 1.0, 1.0)).is_err());
        assert!(DomainSpec::union(vec![]).is_err());
        let a = BallSpec::new(origin(), 0.5).unwrap();
        let b = BallSpec::new(Vec3::new(0.9, 0.0, 0.0), 0.5).unwrap();
        assert_eq!(
            DomainSpec::union(vec![a, b]),
            Err(GeometryError::OverlappingMembers(0, 1))
        );
        assert!(DomainSpec::union(vec![a; 9]).is_err());
    }

    #[test]
    fn containment_is_analytic() {
        let omega = DomainSpec::ball(origin(), 1.0).unwrap();
        let d = DomainSpec::ball(Vec3::new(0.2, 0.0, 0.0), 0.3).unwrap();
        assert_relative_eq!(omega.clearance_of(&d).unwrap(), 0.5, epsilon = 1e-15);
        assert!(omega.require_contains(&d, 0.6).is_err());
        let cube = DomainSpec::cuboid(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        assert_relative_eq!(cube.clearance_of(&d).unwrap(), 0.5, epsilon = 1e-15);
        assert!(cube.clearance_of(&cube).is_err());
    }

    #[test]
    fn ball_surface_area_and_divergence() {
        let unit = DomainSpec::ball(origin(), 1.0).unwrap();
        let q = surface_quadrature(&unit, 8).unwrap();
        assert_relative_eq!(q.area(), 4.0 * PI, max_relative = 1e-6);
        // ∫ x·n dS = 3·vol = 4π
        assert_relative_eq!(q.integrate(|x, n| x.dot(n)), 4.0 * PI, max_relative = 1e-6);
        assert!(q.normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn box_surface_area() {
        let cube = DomainSpec::cuboid(origin(), Vec3::repeat(1.0)).unwrap();
        let q = surface_quadrature(&cube, 4).unwrap();
        assert!((q.area() - 6.0).abs() < 1e-12);
        // Nodes sit strictly inside faces.
        assert!(q
            .nodes
            .iter()
            .all(|x| (0..3).filter(|&i| x[i] > 0.0 && x[i] < 1.0).count() == 2));
        assert!(surface_quadrature(&cube, 1).is_err());
        let u = DomainSpec::union(vec![BallSpec::new(origin(), 1.0).unwrap()]).unwrap();
        assert!(surface_quadrature(&u, 4).is_err());
    }

    #[test]
    fn sphere_rule_is_exact_for_low_degree_polynomials() {
        let q = surface_quadrature(&DomainSpec::ball(origin(), 1.0).unwrap(), 6).unwrap();
        // ∫ x^2 z^4 dS over S² = 4π/35
        let got = q.integrate(|x, _| x.x * x.x * x.z.powi(4));
        assert_relative_eq!(got, 4.0 * PI / 35.0, max_relative = 1e-10);
        let got = q.integrate(|x, _| x.x * x.y * x.z);
        assert!(got.abs() < 1e-12);
    }

    #[test]
    fn ball_volume_rules() {
        let unit = BallSpec::new(origin(), 1.0).unwrap();
        let q = ball_volume_quadrature(&unit, 12);
        assert_relative_eq!(q.volume(), 4.0 * PI / 3.0, max_relative = 1e-8);
        assert_relative_eq!(q.integrate(|y| y.norm()), PI, max_relative = 1e-6);
        // Discontinuous integrand: a sub-ball indicator. Accuracy is limited by
        // the radial resolution of the jump, not the angular order.
        let q = ball_volume_quadrature_with(&unit, 2000, &[0.0, 1.0], 2);
        let got = q.integrate(|y| if y.norm() < 0.5 { 1.0 } else { 0.0 });
        assert!((got - PI / 6.0).abs() < 1e-3, "{got}");
    }

    #[test]
    fn graded_box_rule_volume() {
        let b = BoxSpec::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        let q = box_volume_quadrature(&b, 4, 3);
        assert_relative_eq!(q.volume(), 8.0, max_relative = 1e-13);
        assert_relative_eq!(q.integrate(|x| x.x * x.x), 8.0 / 3.0, max_relative = 1e-13);
    }

    proptest! {
        #[test]
        fn sup_radius_is_translation_consistent(
            ox in -5.0f64..5.0, oy in -5.0f64..5.0, oz in -5.0f64..5.0,
            px in -2.0f64..2.0, py in -2.0f64..2.0, pz in -2.0f64..2.0,
            r in 0.1f64..2.0,
        ) {
            let off = Vec3::new(ox, oy, oz);
            let p = Vec3::new(px, py, pz);
            let shapes = [
                DomainSpec::ball(Vec3::new(0.3, -0.1, 0.2), r).unwrap(),
                DomainSpec::cuboid(Vec3::new(-1.0, -0.5, -r), Vec3::new(0.7, 1.0, r)).unwrap(),
                DomainSpec::union(vec![
                    BallSpec::new(Vec3::new(-1.0, 0.0, 0.0), 0.4).unwrap(),
                    BallSpec::new(Vec3::new(1.0, 0.0, 0.0), 0.4).unwrap(),
                ]).unwrap(),
            ];
            for s in &shapes {
                let a = s.sup_radius(&p);
                let b = s.translated(&off).sup_radius(&(p + off));
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }

        #[test]
        fn contained_obstacles_have_smaller_sup_radius(
            cx in -0.3f64..0.3, cy in -0.3f64..0.3, r in 0.05f64..0.4,
            px in -3.0f64..3.0, py in -3.0f64..3.0, pz in -3.0f64..3.0,
        ) {
            let omega = DomainSpec::ball(Vec3::zeros(), 1.0).unwrap();
            let d = DomainSpec::ball(Vec3::new(cx, cy, 0.0), r).unwrap();
            prop_assume!(omega.clearance_of(&d).unwrap() > 0.01);
            let p = Vec3::new(px, py, pz);
            prop_assert!(d.sup_radius(&p) < omega.sup_radius(&p));
        }
    }
}
