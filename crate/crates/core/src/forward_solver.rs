//! Explicit leapfrog solver for the cavity problem
//! `∂ₜ²u = Δu` in `Ω ∖ D̄`, `∂ν u = f` on `∂Ω`, `∂ν u = 0` on `∂D`, zero initial data.
//!
//! The geometry is voxelized: a cell is fluid when its center lies in `Ω ∖ D̄`.
//! Neumann conditions are imposed through ghost values mirrored across each
//! boundary face (`u_ghost = u_c` on the obstacle, `u_ghost = u_c + h·f` on the
//! wall), which is the cell-centered finite-volume scheme with prescribed face
//! fluxes. Wall fluxes are evaluated analytically at face centroids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use crate::analytic_waves::SourcePulse;
use crate::geometry::{DomainSpec, GeometryError, SurfaceQuadrature, Vec3};
use crate::par;
use crate::reference_field::{ReferenceError, TimeGrid};

/// Default CFL safety margin: `dt ≤ h / (√3·(1 + margin))`.
pub const DEFAULT_CFL_MARGIN: f64 = 0.05;
/// Smallest accepted CFL safety margin.
pub const MIN_CFL_MARGIN: f64 = 0.05;
/// Default cap on `fluid cells × τ values` held by the volume accumulators.
pub const DEFAULT_VOLUME_BUDGET: usize = 400_000_000;

const FLUID: u8 = 1 << 7;
const DIRS: [(i64, i64, i64); 6] = [
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
];

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Time(#[from] ReferenceError),
    #[error("resolution must be at least 4 cells, got {0}")]
    ResolutionTooSmall(usize),
    #[error("CFL margin {0} is below the minimum {MIN_CFL_MARGIN}")]
    CflMargin(f64),
    #[error("time step {dt} exceeds the CFL limit {limit} for h = {h}")]
    CflViolation { dt: f64, limit: f64, h: f64 },
    #[error("obstacle is within {clearance:.4} of the wall; at least two cells ({required:.4}) are required")]
    ObstacleMargin { clearance: f64, required: f64 },
    #[error("fluid region is disconnected: flood fill reached {reached} of {total} cells")]
    Disconnected { reached: usize, total: usize },
    #[error("no fluid cells at this resolution")]
    EmptyFluid,
    #[error(
        "instability at step {step} (t = {time:.4}): max |u| = {max_abs:.3e} exceeds {limit:.3e}; \
         CFL ratio dt*sqrt(3)/h = {cfl_ratio:.4}"
    )]
    Unstable {
        step: usize,
        time: f64,
        max_abs: f64,
        limit: f64,
        cfl_ratio: f64,
    },
    #[error("volume accumulators need {needed} values, above the budget of {budget}")]
    MemoryBudget { needed: usize, budget: usize },
    #[error("Laplace parameter list is empty")]
    EmptyTauList,
    #[error("surface node {node} at {position:?} has no fluid cells nearby")]
    UnreachableNode { node: usize, position: [f64; 3] },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
}

/// Cell classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Exterior,
    Fluid,
    Obstacle,
}

/// A wall face of a fluid cell whose neighbor lies outside `Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub centroid: Vec3,
    pub normal: Vec3,
}

/// Voxelized `Ω ∖ D̄` with one exterior padding layer.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub h: f64,
    pub origin: Vec3,
    pub dims: [usize; 3],
    pub cfl_margin: f64,
    kinds: Vec<CellKind>,
    masks: Vec<u8>,
    faces: Vec<BoundaryFace>,
    /// `face_start[b]..face_start[b+1]` are the faces of wall cell `b`.
    face_start: Vec<usize>,
    wall_cells: Vec<usize>,
    wall_index: Vec<u32>,
    fluid_cells: Vec<usize>,
}

impl GridSpec {
    pub fn n_cells(&self) -> usize {
        self.kinds.len()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn center(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.ijk(idx);
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.h
    }

    pub fn kind(&self, idx: usize) -> CellKind {
        self.kinds[idx]
    }

    pub fn fluid_cells(&self) -> &[usize] {
        &self.fluid_cells
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    /// Fluid cells with at least one wall face.
    pub fn n_wall_cells(&self) -> usize {
        self.wall_cells.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(3)
    }

    /// CFL limit `h / (√3·(1 + margin))`.
    pub fn max_dt(&self) -> f64 {
        self.h / (3f64.sqrt() * (1.0 + self.cfl_margin))
    }

    /// `dt·√3/h`; at most `1/(1 + margin)`.
    pub fn cfl_ratio(&self, dt: f64) -> f64 {
        dt * 3f64.sqrt() / self.h
    }

    pub fn time_grid(&self, horizon: f64) -> Result<TimeGrid, SolverError> {
        Ok(TimeGrid::covering(horizon, self.max_dt())?)
    }

    fn check_cfl(&self, dt: f64) -> Result<(), SolverError> {
        let limit = self.max_dt();
        if dt > limit * (1.0 + 1e-12) {
            return Err(SolverError::CflViolation {
                dt,
                limit,
                h: self.h,
            });
        }
        Ok(())
    }

    /// Adjacent pairs `(a, b)` of non-exterior cells, each face once (`b` in
    /// a positive axis direction from `a`).
    pub fn neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let strides = [1, self.dims[0], self.dims[0] * self.dims[1]];
        let mut out = Vec::new();
        for idx in 0..self.n_cells() {
            if self.kinds[idx] == CellKind::Exterior {
                continue;
            }
            let ijk = self.ijk(idx);
            for a in 0..3 {
                if ijk[a] + 1 < self.dims[a] && self.kinds[idx + strides[a]] != CellKind::Exterior {
                    out.push((idx, idx + strides[a]));
                }
            }
        }
        out
    }

    /// Whether two grids share cell layout (origin, spacing and dims).
    pub fn same_layout(&self, other: &GridSpec) -> bool {
        self.dims == other.dims && self.h == other.h && self.origin == other.origin
    }

    fn in_bounds(&self, c: [i64; 3]) -> bool {
        (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a])
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        self.index(c[0] as usize, c[1] as usize, c[2] as usize)
    }

    fn offsets(&self) -> [isize; 6] {
        let nx = self.dims[0] as isize;
        let nxy = nx * self.dims[1] as isize;
        [-1, 1, -nx, nx, -nxy, nxy]
    }
}

/// Voxelizes `Ω ∖ D̄` with `resolution` cells across the longest side of the
/// bounding box of `Ω`.
pub fn build_grid(
    omega: &DomainSpec,
    d: Option<&DomainSpec>,
    resolution: usize,
) -> Result<GridSpec, SolverError> {
    build_grid_with_margin(omega, d, resolution, DEFAULT_CFL_MARGIN)
}

pub fn build_grid_with_margin(
    omega: &DomainSpec,
    d: Option<&DomainSpec>,
    resolution: usize,
    cfl_margin: f64,
) -> Result<GridSpec, SolverError> {
    if resolution < 4 {
        return Err(SolverError::ResolutionTooSmall(resolution));
    }
    if !(cfl_margin >= MIN_CFL_MARGIN) {
        return Err(SolverError::CflMargin(cfl_margin));
    }
    omega.validate()?;
    if matches!(omega, DomainSpec::Union(_)) {
        return Err(GeometryError::UnsupportedSurface("a union of balls").into());
    }
    let (lo, hi) = omega.bounding_box();
    let h = (hi - lo).max() / resolution as f64;
    if let Some(d) = d {
        d.validate()?;
        let clearance = omega.clearance_of(d)?;
        if clearance < 2.0 * h {
            return Err(SolverError::ObstacleMargin {
                clearance,
                required: 2.0 * h,
            });
        }
    }
    let origin = lo - Vec3::repeat(h);
    let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / h).round() as usize + 2);
    let n = dims[0] * dims[1] * dims[2];
    let mut grid = GridSpec {
        h,
        origin,
        dims,
        cfl_margin,
        kinds: Vec::new(),
        masks: Vec::new(),
        faces: Vec::new(),
        face_start: vec![0],
        wall_cells: Vec::new(),
        wall_index: vec![u32::MAX; n],
        fluid_cells: Vec::new(),
    };
    grid.kinds = par::map_range(n, |idx| {
        let c = grid.center(idx);
        if !omega.contains(&c) {
            CellKind::Exterior
        } else if d.is_some_and(|d| d.contains(&c)) {
            CellKind::Obstacle
        } else {
            CellKind::Fluid
        }
    });
    grid.fluid_cells = (0..n)
        .filter(|&i| grid.kinds[i] == CellKind::Fluid)
        .collect();
    if grid.fluid_cells.is_empty() {
        return Err(SolverError::EmptyFluid);
    }
    let mut masks = vec![0u8; n];
    for &idx in &grid.fluid_cells {
        let [i, j, k] = grid.ijk(idx);
        let mut m = FLUID;
        let mut wall_faces = Vec::new();
        for (b, (di, dj, dk)) in DIRS.iter().enumerate() {
            let nb = [i as i64 + di, j as i64 + dj, k as i64 + dk];
            let nk = if grid.in_bounds(nb) {
                grid.kinds[grid.flat(nb)]
            } else {
                CellKind::Exterior
            };
            match nk {
                CellKind::Fluid => m |= 1 << b,
                CellKind::Obstacle => {}
                CellKind::Exterior => {
                    let normal = Vec3::new(*di as f64, *dj as f64, *dk as f64);
                    wall_faces.push(BoundaryFace {
                        cell: idx,
                        centroid: grid.center(idx) + normal * (0.5 * h),
                        normal,
                    });
                }
            }
        }
        masks[idx] = m;
        if !wall_faces.is_empty() {
            grid.wall_index[idx] = grid.wall_cells.len() as u32;
            grid.wall_cells.push(idx);
            grid.faces.extend(wall_faces);
            grid.face_start.push(grid.faces.len());
        }
    }
    grid.masks = masks;
    let reached = flood_fill_count(&grid);
    if reached != grid.fluid_cells.len() {
        return Err(SolverError::Disconnected {
            reached,
            total: grid.fluid_cells.len(),
        });
    }
    Ok(grid)
}

fn flood_fill_count(grid: &GridSpec) -> usize {
    let mut seen = vec![false; grid.n_cells()];
    let offs = grid.offsets();
    let start = grid.fluid_cells[0];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 0;
    while let Some(idx) = stack.pop() {
        count += 1;
        let m = grid.masks[idx];
        for (b, off) in offs.iter().enumerate() {
            if m & (1 << b) != 0 {
                let nb = (idx as isize + off) as usize;
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    count
}

/// Wall flux `∂ν u` prescribed on boundary faces.
pub trait NeumannSource: Sync {
    fn flux(&self, face: &BoundaryFace, t: f64) -> f64;

    /// Typical field magnitude produced by this source; zero for a silent source.
    fn scale(&self) -> f64;
}

/// Time-reversed free-wave data `f(x, t) = ∂ν v(x, T − t)`, continued oddly
/// past `t = T` so that centered differences at `T` stay consistent.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticNeumann {
    pub pulse: SourcePulse,
    pub horizon: f64,
}

impl NeumannSource for AnalyticNeumann {
    fn flux(&self, face: &BoundaryFace, t: f64) -> f64 {
        let s = self.horizon - t;
        if s > 0.0 {
            face.normal.dot(&self.pulse.grad_v(&face.centroid, s))
        } else if s < 0.0 {
            -face.normal.dot(&self.pulse.grad_v(&face.centroid, -s))
        } else {
            0.0
        }
    }

    fn scale(&self) -> f64 {
        self.pulse.amplitude.abs() * self.pulse.eta.powi(2)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNeumann;

impl NeumannSource for ZeroNeumann {
    fn flux(&self, _: &BoundaryFace, _: f64) -> f64 {
        0.0
    }

    fn scale(&self) -> f64 {
        0.0
    }
}

/// `factor × inner`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledNeumann<S> {
    pub inner: S,
    pub factor: f64,
}

impl<S: NeumannSource> NeumannSource for ScaledNeumann<S> {
    fn flux(&self, face: &BoundaryFace, t: f64) -> f64 {
        self.factor * self.inner.flux(face, t)
    }

    fn scale(&self) -> f64 {
        self.factor.abs() * self.inner.scale()
    }
}

/// `inner` for `t < off`, zero afterwards.
#[derive(Debug, Clone, Copy)]
pub struct SwitchedNeumann<S> {
    pub inner: S,
    pub off: f64,
}

impl<S: NeumannSource> NeumannSource for SwitchedNeumann<S> {
    fn flux(&self, face: &BoundaryFace, t: f64) -> f64 {
        if t < self.off {
            self.inner.flux(face, t)
        } else {
            0.0
        }
    }

    fn scale(&self) -> f64 {
        self.inner.scale()
    }
}

/// Per-node interpolation stencils onto a surface rule.
#[derive(Debug, Clone)]
pub struct TraceSampler {
    stencils: Vec<Vec<(usize, f64)>>,
}

impl TraceSampler {
    /// Trilinear interpolation where all eight surrounding cell centers are
    /// fluid, otherwise a Gaussian-weighted linear least-squares fit over the
    /// fluid cells of the surrounding 4×4×4 block (6×6×6 if that is degenerate).
    pub fn new(grid: &GridSpec, quadrature: &SurfaceQuadrature) -> Result<Self, SolverError> {
        let stencils = par::map_range(quadrature.len(), |n| {
            node_stencil(grid, &quadrature.nodes[n])
        });
        let stencils = stencils
            .into_iter()
            .enumerate()
            .map(|(n, s)| {
                s.ok_or(SolverError::UnreachableNode {
                    node: n,
                    position: quadrature.nodes[n].into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { stencils })
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn sample(&self, field: &[f64], node: usize) -> f64 {
        self.stencils[node].iter().map(|&(i, w)| w * field[i]).sum()
    }

    pub fn sample_all(&self, field: &[f64], out: &mut [f64]) {
        for (n, o) in out.iter_mut().enumerate() {
            *o = self.sample(field, n);
        }
    }
}

fn node_stencil(grid: &GridSpec, x: &Vec3) -> Option<Vec<(usize, f64)>> {
    let h = grid.h;
    let rel = (x - grid.origin) / h - Vec3::repeat(0.5);
    let base = [
        rel.x.floor() as i64,
        rel.y.floor() as i64,
        rel.z.floor() as i64,
    ];
    let frac = Vec3::new(
        rel.x - base[0] as f64,
        rel.y - base[1] as f64,
        rel.z - base[2] as f64,
    );
    let mut tri = Vec::with_capacity(8);
    for c in 0..8 {
        let off = [(c & 1) as i64, ((c >> 1) & 1) as i64, ((c >> 2) & 1) as i64];
        let cell = [base[0] + off[0], base[1] + off[1], base[2] + off[2]];
        if !grid.in_bounds(cell) || grid.kind(grid.flat(cell)) != CellKind::Fluid {
            tri.clear();
            break;
        }
        let w = (0..3)
            .map(|a| if off[a] == 1 { frac[a] } else { 1.0 - frac[a] })
            .product::<f64>();
        tri.push((grid.flat(cell), w));
    }
    if tri.len() == 8 {
        return Some(tri);
    }
    for half in [2i64, 3] {
        if let Some(s) = least_squares_stencil(grid, x, base, half) {
            return Some(s);
        }
    }
    None
}

fn least_squares_stencil(
    grid: &GridSpec,
    x: &Vec3,
    base: [i64; 3],
    half: i64,
) -> Option<Vec<(usize, f64)>> {
    let h = grid.h;
    let mut cells = Vec::new();
    for dk in (1 - half)..=half {
        for dj in (1 - half)..=half {
            for di in (1 - half)..=half {
                let c = [base[0] + di, base[1] + dj, base[2] + dk];
                if grid.in_bounds(c) && grid.kind(grid.flat(c)) == CellKind::Fluid {
                    let idx = grid.flat(c);
                    let d = (grid.center(idx) - x) / h;
                    cells.push((idx, d, (-d.norm_squared()).exp()));
                }
            }
        }
    }
    if cells.len() < 4 {
        return None;
    }
    let mut ata = Matrix4::<f64>::zeros();
    for (_, d, w) in &cells {
        let a = Vector4::new(1.0, d.x, d.y, d.z);
        ata += a * a.transpose() * *w;
    }
    let inv = ata.try_inverse()?;
    if !(inv.norm() * ata.norm() < 1e8) {
        return None;
    }
    let row = inv.row(0).into_owned();
    Some(
        cells
            .iter()
            .map(|(idx, d, w)| {
                (
                    *idx,
                    w * row.dot(&Vector4::new(1.0, d.x, d.y, d.z).transpose()),
                )
            })
            .collect(),
    )
}

/// Recorded `u` at every surface node and time level (node-major).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub quadrature: Arc<SurfaceQuadrature>,
    pub time_grid: TimeGrid,
    pub samples: Vec<f64>,
}

impl BoundaryTrace {
    pub fn n_nodes(&self) -> usize {
        self.quadrature.len()
    }

    pub fn n_times(&self) -> usize {
        self.time_grid.len()
    }

    pub fn series(&self, node: usize) -> &[f64] {
        let n = self.n_times();
        &self.samples[node * n..(node + 1) * n]
    }

    pub fn horizon(&self) -> f64 {
        self.time_grid.horizon()
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    /// Binary layout, all little-endian: magic `ENCTRACE`, `u32` version (1),
    /// `u64` node count `N`, `u64` step count `n` (so `n + 1` time levels),
    /// `f64` `dt`; then `N` records of node `(x, y, z)`, normal `(x, y, z)`,
    /// weight as `f64`; then the `N·(n+1)` samples node-major.
    pub fn write_to(&self, path: &Path) -> Result<(), SolverError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(TRACE_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.n_nodes() as u64).to_le_bytes())?;
        w.write_all(&(self.time_grid.n_steps() as u64).to_le_bytes())?;
        w.write_all(&self.time_grid.dt().to_le_bytes())?;
        let q = &self.quadrature;
        for i in 0..q.len() {
            for v in q.nodes[i]
                .iter()
                .chain(q.normals[i].iter())
                .chain(std::iter::once(&q.weights[i]))
            {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in &self.samples {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, SolverError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TRACE_MAGIC {
            return Err(SolverError::Format("not a boundary trace file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != 1 {
            return Err(SolverError::Format(format!(
                "unsupported trace version {version}"
            )));
        }
        let n_nodes = read_u64(&mut r)? as usize;
        let n_steps = read_u64(&mut r)? as usize;
        let dt = read_f64(&mut r)?;
        let time_grid = TimeGrid::new(n_steps, dt)?;
        let mut q = SurfaceQuadrature {
            nodes: Vec::with_capacity(n_nodes),
            normals: Vec::with_capacity(n_nodes),
            weights: Vec::with_capacity(n_nodes),
        };
        for _ in 0..n_nodes {
            let mut v = [0.0; 7];
            for x in &mut v {
                *x = read_f64(&mut r)?;
            }
            q.nodes.push(Vec3::new(v[0], v[1], v[2]));
            q.normals.push(Vec3::new(v[3], v[4], v[5]));
            q.weights.push(v[6]);
        }
        let total = n_nodes
            .checked_mul(n_steps + 1)
            .ok_or_else(|| SolverError::Format("trace size overflows".into()))?;
        let mut samples = Vec::with_capacity(total);
        for _ in 0..total {
            samples.push(read_f64(&mut r)?);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(SolverError::Format(format!(
                "{} trailing bytes",
                rest.len()
            )));
        }
        Ok(Self {
            quadrature: Arc::new(q),
            time_grid,
            samples,
        })
    }
}

const TRACE_MAGIC: &[u8; 8] = b"ENCTRACE";
const SNAPSHOT_MAGIC: &[u8; 8] = b"ENCSNAP1";

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Scalar field on the full grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dims: [usize; 3],
    pub h: f64,
    pub dt: f64,
    pub time: f64,
    pub origin: Vec3,
    pub values: Vec<f64>,
}

impl Snapshot {
    /// Little-endian layout: magic `ENCSNAP1`, three `u64` dims, `f64` h, dt, t,
    /// origin `(x, y, z)`, then `nx·ny·nz` `f64` cell values with x fastest.
    pub fn write_to(&self, path: &Path) -> Result<(), SolverError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(SNAPSHOT_MAGIC)?;
        for d in self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in [
            self.h,
            self.dt,
            self.time,
            self.origin.x,
            self.origin.y,
            self.origin.z,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, SolverError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(SolverError::Format("not a snapshot file".into()));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = read_u64(&mut r)? as usize;
        }
        let mut head = [0.0; 6];
        for v in &mut head {
            *v = read_f64(&mut r)?;
        }
        let n = dims.iter().product::<usize>();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(read_f64(&mut r)?);
        }
        Ok(Self {
            dims,
            h: head[0],
            dt: head[1],
            time: head[2],
            origin: Vec3::new(head[3], head[4], head[5]),
            values,
        })
    }
}

/// Run statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub steps: usize,
    pub dt: f64,
    pub h: f64,
    pub cfl_ratio: f64,
    pub max_abs: f64,
    pub fluid_cells: usize,
    pub wall_faces: usize,
}

/// Laplace-weighted volume fields and final-time data on fluid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeFields {
    pub taus: Vec<f64>,
    /// Cell indices (into the grid) of the fluid cells, in order.
    pub cells: Vec<usize>,
    pub centers: Vec<Vec3>,
    pub cell_volume: f64,
    pub h: f64,
    /// `∫₀ᵀ e^{−τt} u dt` by the trapezoid rule, τ-major.
    pub laplace: Vec<f64>,
    /// Plain trapezoid `∫₀ᵀ u dt`, accumulated separately.
    pub time_integral: Vec<f64>,
    pub u_final: Vec<f64>,
    /// Centered difference `(u^{n+1} − u^{n−1})/(2dt)` at `t = T`.
    pub ut_final: Vec<f64>,
}

impl VolumeFields {
    pub fn laplace_for(&self, tau_index: usize) -> &[f64] {
        let n = self.cells.len();
        &self.laplace[tau_index * n..(tau_index + 1) * n]
    }

    pub fn tau_index(&self, tau: f64) -> Option<usize> {
        self.taus.iter().position(|&t| t == tau)
    }
}

/// Per-step callback: `(step, time, field)`.
pub type Observer<'a> = &'a mut dyn FnMut(usize, f64, &[f64]);

/// Options for [`solve_full`].
pub struct SolveOptions<'a> {
    pub volume_taus: Option<Vec<f64>>,
    pub volume_budget: usize,
    /// Called with `(step, time, field)` after every time level.
    pub observer: Option<Observer<'a>>,
    /// Check the instability detector every this many steps.
    pub check_every: usize,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        Self {
            volume_taus: None,
            volume_budget: DEFAULT_VOLUME_BUDGET,
            observer: None,
            check_every: 8,
        }
    }
}

/// Output of [`solve_full`].
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub trace: BoundaryTrace,
    pub volume: Option<VolumeFields>,
    pub stats: SolveStats,
}

/// Records the boundary trace of the cavity problem on `time_grid`.
pub fn solve(
    grid: &GridSpec,
    source: &dyn NeumannSource,
    time_grid: &TimeGrid,
    quadrature: Arc<SurfaceQuadrature>,
) -> Result<BoundaryTrace, SolverError> {
    Ok(solve_full(grid, source, time_grid, quadrature, SolveOptions::default())?.trace)
}

/// As [`solve`], also accumulating `∫₀ᵀ e^{−τt}u dt` per fluid cell and τ and
/// retaining `u(T)` and `∂ₜu(T)`.
pub fn solve_with_volume_output(
    grid: &GridSpec,
    source: &dyn NeumannSource,
    time_grid: &TimeGrid,
    quadrature: Arc<SurfaceQuadrature>,
    taus: &[f64],
) -> Result<(BoundaryTrace, VolumeFields), SolverError> {
    if taus.is_empty() {
        return Err(SolverError::EmptyTauList);
    }
    let out = solve_full(
        grid,
        source,
        time_grid,
        quadrature,
        SolveOptions {
            volume_taus: Some(taus.to_vec()),
            ..SolveOptions::default()
        },
    )?;
    Ok((out.trace, out.volume.expect("volume fields were requested")))
}

/// Wall-flux sums per wall cell at time `t`; `out` has [`GridSpec::n_wall_cells`] entries.
pub fn wall_flux(grid: &GridSpec, source: &dyn NeumannSource, t: f64, out: &mut [f64]) {
    let sums = par::map_range(grid.wall_cells.len(), |b| {
        grid.faces[grid.face_start[b]..grid.face_start[b + 1]]
            .iter()
            .map(|f| source.flux(f, t))
            .sum::<f64>()
    });
    out.copy_from_slice(&sums);
}

/// One leapfrog step in place: `prev ← 2·cur − prev + dt²·(Δ_h cur + wall/h)`.
pub fn leapfrog_step(grid: &GridSpec, cur: &[f64], prev: &mut [f64], wall: &[f64], dt: f64) {
    let offs = grid.offsets();
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let inv_h = 1.0 / grid.h;
    let dt2 = dt * dt;
    let slab = grid.dims[0] * grid.dims[1];
    par::for_each_chunk_mut(prev, slab, |k, chunk| {
        let start = k * slab;
        for (local, p) in chunk.iter_mut().enumerate() {
            let idx = start + local;
            let m = grid.masks[idx];
            if m & FLUID == 0 {
                continue;
            }
            let uc = cur[idx];
            let mut lap = 0.0;
            for (b, off) in offs.iter().enumerate() {
                if m & (1 << b) != 0 {
                    lap += cur[(idx as isize + off) as usize] - uc;
                }
            }
            let mut rhs = lap * inv_h2;
            let wi = grid.wall_index[idx];
            if wi != u32::MAX {
                rhs += wall[wi as usize] * inv_h;
            }
            *p = 2.0 * uc - *p + dt2 * rhs;
        }
    });
}

/// Discrete energy conserved by the leapfrog scheme between levels `a = u^{n}`
/// and `b = u^{n+1}`: `Σ h³[((b−a)/dt)² + Σ_faces (a_i−a_j)(b_i−b_j)/h²] / 2`.
pub fn discrete_energy(grid: &GridSpec, a: &[f64], b: &[f64], dt: f64) -> f64 {
    let offs = grid.offsets();
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let slab = grid.dims[0] * grid.dims[1];
    let partial = par::map_range(grid.dims[2], |k| {
        let mut e = 0.0;
        for idx in k * slab..(k + 1) * slab {
            let m = grid.masks[idx];
            if m & FLUID == 0 {
                continue;
            }
            let v = (b[idx] - a[idx]) / dt;
            e += v * v;
            // each interior face once: positive directions only
            for bit in [1usize, 3, 5] {
                if m & (1 << bit) != 0 {
                    let nb = (idx as isize + offs[bit]) as usize;
                    e += (a[idx] - a[nb]) * (b[idx] - b[nb]) * inv_h2;
                }
            }
        }
        e
    });
    0.5 * grid.cell_volume() * par::ordered_sum(&partial)
}

/// Energy of each consecutive pair of levels, from a full run with the given source.
pub fn energy_history(
    grid: &GridSpec,
    source: &dyn NeumannSource,
    time_grid: &TimeGrid,
) -> Result<Vec<f64>, SolverError> {
    let dt = time_grid.dt();
    let mut prev_field: Option<Vec<f64>> = None;
    let mut energies = Vec::new();
    let mut obs = |_: usize, _: f64, u: &[f64]| {
        if let Some(p) = &prev_field {
            energies.push(discrete_energy(grid, p, u, dt));
        }
        prev_field = Some(u.to_vec());
    };
    let q = Arc::new(SurfaceQuadrature {
        nodes: Vec::new(),
        normals: Vec::new(),
        weights: Vec::new(),
    });
    solve_full(
        grid,
        source,
        time_grid,
        q,
        SolveOptions {
            observer: Some(&mut obs),
            ..SolveOptions::default()
        },
    )?;
    Ok(energies)
}

/// General driver behind [`solve`] and [`solve_with_volume_output`].
pub fn solve_full(
    grid: &GridSpec,
    source: &dyn NeumannSource,
    time_grid: &TimeGrid,
    quadrature: Arc<SurfaceQuadrature>,
    mut options: SolveOptions<'_>,
) -> Result<SolveOutput, SolverError> {
    let dt = time_grid.dt();
    grid.check_cfl(dt)?;
    let sampler = TraceSampler::new(grid, &quadrature)?;
    let n_nodes = sampler.len();
    let n_levels = time_grid.len();
    let n_steps = time_grid.n_steps();
    let n = grid.n_cells();

    let taus = options.volume_taus.take();
    let n_fluid = grid.fluid_cells.len();
    let mut acc = match &taus {
        Some(t) => {
            if t.is_empty() {
                return Err(SolverError::EmptyTauList);
            }
            let needed = n_fluid.saturating_mul(t.len() + 4);
            if needed > options.volume_budget {
                return Err(SolverError::MemoryBudget {
                    needed,
                    budget: options.volume_budget,
                });
            }
            Some(VolumeAccumulator::new(t.clone(), n_fluid))
        }
        None => None,
    };

    let limit = 1e6 * source.scale();
    let mut wall = vec![0.0; grid.wall_cells.len()];
    let mut time_major = vec![0.0; n_levels * n_nodes];
    let mut max_abs: f64 = 0.0;

    let mut prev = vec![0.0; n];
    let mut cur = vec![0.0; n];
    let record = |k: usize, field: &[f64], time_major: &mut [f64]| {
        sampler.sample_all(field, &mut time_major[k * n_nodes..(k + 1) * n_nodes]);
    };
    record(0, &prev, &mut time_major);
    if let Some(obs) = options.observer.as_mut() {
        obs(0, 0.0, &prev);
    }
    if let Some(a) = acc.as_mut() {
        a.add(grid, &prev, 0, time_grid);
    }
    // u¹ = (dt²/2)·(wall source at t = 0), since u⁰ = ∂ₜu⁰ = 0.
    wall_flux(grid, source, 0.0, &mut wall);
    {
        let inv_h = 1.0 / grid.h;
        for (b, &idx) in grid.wall_cells.iter().enumerate() {
            cur[idx] = 0.5 * dt * dt * wall[b] * inv_h;
        }
    }
    let mut before_last: Option<Vec<f64>> = None;
    for k in 1..=n_steps {
        let t = time_grid.time(k);
        record(k, &cur, &mut time_major);
        if let Some(obs) = options.observer.as_mut() {
            obs(k, t, &cur);
        }
        if let Some(a) = acc.as_mut() {
            a.add(grid, &cur, k, time_grid);
        }
        if k % options.check_every.max(1) == 0 || k == n_steps {
            let m = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !m.is_finite() || (limit > 0.0 && m > limit) || (limit == 0.0 && m > 0.0) {
                return Err(SolverError::Unstable {
                    step: k,
                    time: t,
                    max_abs: m,
                    limit,
                    cfl_ratio: grid.cfl_ratio(dt),
                });
            }
            max_abs = max_abs.max(m);
        }
        if k == n_steps && acc.is_none() {
            break;
        }
        if k == n_steps {
            before_last = Some(prev.clone());
        }
        wall_flux(grid, source, t, &mut wall);
        leapfrog_step(grid, &cur, &mut prev, &wall, dt);
        std::mem::swap(&mut prev, &mut cur);
    }
    let volume = acc.map(|a| {
        // after the loop: prev = u^{n}, cur = u^{n+1}; before_last = u^{n−1}
        let u_nm1 = before_last.expect("extra step was taken");
        a.finish(grid, &prev, &cur, &u_nm1, dt)
    });

    let mut samples = vec![0.0; n_levels * n_nodes];
    for k in 0..n_levels {
        for node in 0..n_nodes {
            samples[node * n_levels + k] = time_major[k * n_nodes + node];
        }
    }
    let stats = SolveStats {
        steps: n_steps,
        dt,
        h: grid.h,
        cfl_ratio: grid.cfl_ratio(dt),
        max_abs,
        fluid_cells: n_fluid,
        wall_faces: grid.faces.len(),
    };
    Ok(SolveOutput {
        trace: BoundaryTrace {
            quadrature,
            time_grid: *time_grid,
            samples,
        },
        volume,
        stats,
    })
}

struct VolumeAccumulator {
    taus: Vec<f64>,
    laplace: Vec<f64>,
    plain: Vec<f64>,
    n_fluid: usize,
}

impl VolumeAccumulator {
    fn new(taus: Vec<f64>, n_fluid: usize) -> Self {
        Self {
            laplace: vec![0.0; taus.len() * n_fluid],
            plain: vec![0.0; n_fluid],
            taus,
            n_fluid,
        }
    }

    fn add(&mut self, grid: &GridSpec, u: &[f64], k: usize, time_grid: &TimeGrid) {
        let n_steps = time_grid.n_steps();
        let dt = time_grid.dt();
        let trap = if k == 0 || k == n_steps { 0.5 * dt } else { dt };
        let t = time_grid.time(k);
        let cells = &grid.fluid_cells;
        for (ti, &tau) in self.taus.iter().enumerate() {
            let w = trap * (-tau * t).exp();
            let dst = &mut self.laplace[ti * self.n_fluid..(ti + 1) * self.n_fluid];
            par::for_each_chunk_mut(dst, 4096, |c, chunk| {
                let base = c * 4096;
                for (j, d) in chunk.iter_mut().enumerate() {
                    *d += w * u[cells[base + j]];
                }
            });
        }
        for (j, d) in self.plain.iter_mut().enumerate() {
            *d += trap * u[cells[j]];
        }
    }

    fn finish(
        self,
        grid: &GridSpec,
        u_n: &[f64],
        u_np1: &[f64],
        u_nm1: &[f64],
        dt: f64,
    ) -> VolumeFields {
        let cells = grid.fluid_cells.clone();
        VolumeFields {
            centers: cells.iter().map(|&c| grid.center(c)).collect(),
            u_final: cells.iter().map(|&c| u_n[c]).collect(),
            ut_final: cells
                .iter()
                .map(|&c| (u_np1[c] - u_nm1[c]) / (2.0 * dt))
                .collect(),
            cells,
            cell_volume: grid.cell_volume(),
            h: grid.h,
            taus: self.taus,
            laplace: self.laplace,
            time_integral: self.plain,
        }
    }
}

/// Snapshot of a field on `grid` at time `time`.
pub fn snapshot(grid: &GridSpec, field: &[f64], dt: f64, time: f64) -> Snapshot {
    Snapshot {
        dims: grid.dims,
        h: grid.h,
        dt,
        time,
        origin: grid.origin,
        values: field.to_vec(),
    }
}

/// `L²(∂Ω × [0,T])` relative error of a trace against a reference function.
pub fn trace_relative_error(
    trace: &BoundaryTrace,
    exact: impl Fn(usize, f64) -> f64 + Sync,
) -> f64 {
    let q = &trace.quadrature;
    let tg = trace.time_grid;
    let per_node = par::map_range(trace.n_nodes(), |i| {
        let s = trace.series(i);
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, &u) in s.iter().enumerate() {
            let w = if k == 0 || k == tg.n_steps() {
                0.5
            } else {
                1.0
            };
            let e = exact(i, tg.time(k));
            num += w * (u - e).powi(2);
            den += w * e * e;
        }
        (q.weights[i] * num, q.weights[i] * den)
    });
    let num: f64 = per_node.iter().map(|p| p.0).sum();
    let den: f64 = per_node.iter().map(|p| p.1).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::surface_quadrature;
    use crate::reference_field::w_star_at;
    use std::f64::consts::PI;

    fn unit_ball() -> DomainSpec {
        DomainSpec::ball(Vec3::zeros(), 1.0).unwrap()
    }

    #[test]
    fn empty_obstacle_grid_is_all_fluid_inside() {
        let g = build_grid(&unit_ball(), None, 16).unwrap();
        let inside = (0..g.n_cells())
            .filter(|&i| unit_ball().contains(&g.center(i)))
            .count();
        assert_eq!(g.count(CellKind::Fluid), inside);
        assert_eq!(g.count(CellKind::Obstacle), 0);
        assert_eq!(g.dims, [18, 18, 18]);
    }

    #[test]
    fn fluid_fraction_matches_volume_fraction() {
        let omega = DomainSpec::cuboid(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        let d = DomainSpec::ball(Vec3::zeros(), 0.3).unwrap();
        let g = build_grid(&omega, Some(&d), 64).unwrap();
        let interior = 64usize.pow(3) as f64;
        let expected = (8.0 - 4.0 / 3.0 * PI * 0.027) / 8.0;
        let got = g.count(CellKind::Fluid) as f64 / interior;
        assert!(
            (got - expected).abs() < 0.02 * expected,
            "{got} vs {expected}"
        );
        assert_eq!(
            g.count(CellKind::Fluid) + g.count(CellKind::Obstacle),
            64usize.pow(3)
        );
    }

    #[test]
    fn grid_rejections() {
        let d = DomainSpec::ball(Vec3::new(0.6, 0.0, 0.0), 0.35).unwrap();
        assert!(matches!(
            build_grid(&unit_ball(), Some(&d), 32),
            Err(SolverError::ObstacleMargin { .. })
        ));
        assert!(matches!(
            build_grid(&unit_ball(), None, 2),
            Err(SolverError::ResolutionTooSmall(2))
        ));
        assert!(matches!(
            build_grid_with_margin(&unit_ball(), None, 16, 0.01),
            Err(SolverError::CflMargin(_))
        ));
    }

    #[test]
    fn cfl_is_enforced() {
        let g = build_grid(&unit_ball(), None, 8).unwrap();
        let tg = TimeGrid::new(10, g.h).unwrap();
        let q = Arc::new(surface_quadrature(&unit_ball(), 4).unwrap());
        assert!(matches!(
            solve(&g, &ZeroNeumann, &tg, q),
            Err(SolverError::CflViolation { .. })
        ));
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let g = build_grid(&unit_ball(), None, 12).unwrap();
        let tg = g.time_grid(1.0).unwrap();
        let q = Arc::new(surface_quadrature(&unit_ball(), 4).unwrap());
        let (trace, vol) = solve_with_volume_output(&g, &ZeroNeumann, &tg, q, &[0.0, 3.0]).unwrap();
        assert!(trace.samples.iter().all(|&v| v == 0.0));
        assert!(vol.laplace.iter().all(|&v| v == 0.0));
        assert!(vol.u_final.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampler_reproduces_linear_fields() {
        let g = build_grid(&unit_ball(), None, 16).unwrap();
        let q = surface_quadrature(&unit_ball(), 6).unwrap();
        let s = TraceSampler::new(&g, &q).unwrap();
        let field: Vec<f64> = (0..g.n_cells())
            .map(|i| {
                let c = g.center(i);
                1.0 + 2.0 * c.x - c.y + 0.5 * c.z
            })
            .collect();
        for n in 0..q.len() {
            let x = q.nodes[n];
            let exact = 1.0 + 2.0 * x.x - x.y + 0.5 * x.z;
            assert!((s.sample(&field, n) - exact).abs() < 1e-10);
        }
    }

    fn free_wave_setup(
        res: usize,
    ) -> (GridSpec, AnalyticNeumann, TimeGrid, Arc<SurfaceQuadrature>) {
        let pulse = SourcePulse::new(Vec3::zeros(), 0.5);
        let horizon = 1.6;
        let g = build_grid(&unit_ball(), None, res).unwrap();
        let tg = g.time_grid(horizon).unwrap();
        let q = Arc::new(surface_quadrature(&unit_ball(), 6).unwrap());
        (g, AnalyticNeumann { pulse, horizon }, tg, q)
    }

    #[test]
    fn linearity_and_causality() {
        let (g, src, tg, q) = free_wave_setup(16);
        let a = solve(&g, &src, &tg, q.clone()).unwrap();
        let doubled = ScaledNeumann {
            inner: src,
            factor: 2.0,
        };
        let b = solve(&g, &doubled, &tg, q).unwrap();
        assert!(a
            .samples
            .iter()
            .zip(&b.samples)
            .all(|(x, y)| *y == 2.0 * *x));
        // T − η = 1.1 > R_Ω: the first two levels are exactly zero at every node.
        for i in 0..a.n_nodes() {
            assert_eq!(a.series(i)[0], 0.0);
            assert_eq!(a.series(i)[1], 0.0);
        }
    }

    #[test]
    fn free_wave_trace_converges() {
        let mut errs = Vec::new();
        for res in [16, 32] {
            let (g, src, tg, q) = free_wave_setup(res);
            let trace = solve(&g, &src, &tg, q.clone()).unwrap();
            let err =
                trace_relative_error(&trace, |i, t| src.pulse.v(&q.nodes[i], src.horizon - t));
            errs.push(err);
        }
        assert!(errs[1] < errs[0], "{errs:?}");
    }

    #[test]
    fn energy_is_conserved_once_data_stops() {
        let (g, src, tg, _) = free_wave_setup(16);
        let off = 0.8;
        let switched = SwitchedNeumann { inner: src, off };
        let e = energy_history(&g, &switched, &tg).unwrap();
        let k_off = (off / tg.dt()).ceil() as usize + 1;
        let ref_e = e[k_off];
        assert!(ref_e > 0.0);
        for &x in &e[k_off..] {
            assert!((x - ref_e).abs() <= 1e-3 * ref_e);
        }
    }

    #[test]
    fn volume_accumulators_are_consistent() {
        let (g, src, tg, q) = free_wave_setup(12);
        let (_, vol) = solve_with_volume_output(&g, &src, &tg, q, &[0.0, 2.0]).unwrap();
        let plain = vol.laplace_for(0);
        for (a, b) in plain.iter().zip(&vol.time_integral) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn volume_field_tracks_reference_field() {
        let mut errs = Vec::new();
        for res in [12, 24] {
            let (g, src, tg, q) = free_wave_setup(res);
            let tau = 2.0;
            let (_, vol) = solve_with_volume_output(&g, &src, &tg, q, &[tau]).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for (j, c) in vol.centers.iter().enumerate() {
                let exact = w_star_at(&src.pulse, c, tau, src.horizon).value_f64();
                num += (vol.laplace_for(0)[j] - exact).powi(2);
                den += exact * exact;
            }
            errs.push((num / den).sqrt());
        }
        assert!(errs[1] < errs[0], "{errs:?}");
        assert!(errs[1] < 0.05, "{errs:?}");
    }

    #[test]
    fn trace_file_round_trip() {
        let (g, src, tg, q) = free_wave_setup(8);
        let trace = solve(&g, &src, &tg, q).unwrap();
        let dir = std::env::temp_dir().join(format!("enc-trace-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.bin");
        trace.write_to(&path).unwrap();
        let back = BoundaryTrace::read_from(&path).unwrap();
        assert_eq!(back, trace);
        std::fs::write(&path, b"garbage!").unwrap();
        assert!(BoundaryTrace::read_from(&path).is_err());
        let snap = snapshot(&g, &vec![1.5; g.n_cells()], tg.dt(), 0.3);
        let spath = dir.join("s.bin");
        snap.write_to(&spath).unwrap();
        assert_eq!(Snapshot::read_from(&spath).unwrap(), snap);
        std::fs::remove_dir_all(&dir).ok();
    }
}
