//! Solid voxelization of a closed mesh into a uniform grid.
//!
//! A voxel is solid iff its center lies inside the mesh, decided by the
//! parity of ray crossings along a coordinate axis. Rays that graze a
//! triangle edge or vertex are re-cast once from an origin nudged by
//! `1e-7 * cell_size`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::geom::bounding_box;
use crate::meshio::TriangleMesh;

pub const DEFAULT_RESOLUTION: usize = 64;
pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoxelError {
    #[error("mesh is not watertight; solid voxelization needs a closed surface")]
    NonWatertight,
    #[error("resolution {0} is below the minimum of {MIN_RESOLUTION}")]
    InvalidResolution(usize),
    #[error("resolution too small: only {solid} interior voxel(s) produced, need at least 2")]
    ResolutionTooSmall { solid: usize },
    #[error("mesh has a degenerate bounding box")]
    DegenerateBounds,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("voxel ({i}, {j}, {k}) outside grid of dims {dims:?}")]
    OutOfRange {
        i: i64,
        j: i64,
        k: i64,
        dims: [usize; 3],
    },
}

/// Integer grid coordinate. Ordering is lexicographic in `(i, j, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Voxel {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Voxel {
    pub const fn new(i: usize, j: usize, k: usize) -> Self {
        Self { i, j, k }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.i, self.j, self.k]
    }

    /// Squared Euclidean distance in voxel units.
    pub fn dist2(&self, other: &Voxel) -> u64 {
        let d = |a: usize, b: usize| (a as i64 - b as i64).unsigned_abs();
        let (a, b, c) = (d(self.i, other.i), d(self.j, other.j), d(self.k, other.k));
        a * a + b * b + c * c
    }
}

impl From<[usize; 3]> for Voxel {
    fn from(a: [usize; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Placement of the grid in model space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Voxel count along the longest bounding-box axis.
    pub resolution: usize,
    /// Empty voxel layers around the model.
    pub padding: usize,
    /// World position of the grid's minimum corner.
    pub origin: Point3<f64>,
    /// Edge length of one voxel in model units.
    pub cell_size: f64,
}

impl GridSpec {
    /// Fit a grid around the box `[lo, hi]`. The longest axis spans exactly
    /// `resolution` cells.
    pub fn fit(
        lo: Point3<f64>,
        hi: Point3<f64>,
        resolution: usize,
        padding: usize,
    ) -> Result<(Self, [usize; 3]), VoxelError> {
        if resolution < MIN_RESOLUTION {
            return Err(VoxelError::InvalidResolution(resolution));
        }
        if padding < 1 {
            return Err(VoxelError::InvalidGrid("padding must be at least 1".into()));
        }
        let extent = hi - lo;
        let longest = extent.max();
        if longest.is_nan() || longest <= 0.0 || !longest.is_finite() {
            return Err(VoxelError::DegenerateBounds);
        }
        let cell_size = longest / resolution as f64;
        let mut dims = [0usize; 3];
        for a in 0..3 {
            // guard against 4.0000000001 rounding up to an extra cell
            let cells = (extent[a] / cell_size - 1e-9).ceil().max(1.0) as usize;
            dims[a] = cells + 2 * padding;
        }
        let origin = lo - Vector3::repeat(padding as f64 * cell_size);
        Ok((
            Self {
                resolution,
                padding,
                origin,
                cell_size,
            },
            dims,
        ))
    }
}

/// Ray direction used for the parity test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RayAxis {
    #[default]
    X,
    Y,
    Z,
}

impl RayAxis {
    fn index(self) -> usize {
        match self {
            RayAxis::X => 0,
            RayAxis::Y => 1,
            RayAxis::Z => 2,
        }
    }
}

/// Dense solid occupancy grid. The outermost `padding` layers are always empty.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    spec: GridSpec,
    dims: [usize; 3],
    occupancy: Vec<bool>,
}

impl VoxelGrid {
    /// Build a grid from an explicit occupancy array laid out with `i`
    /// fastest. Fails if the array length disagrees with `dims` or the
    /// padding shell holds a solid voxel.
    pub fn from_occupancy(
        spec: GridSpec,
        dims: [usize; 3],
        occupancy: Vec<bool>,
    ) -> Result<Self, VoxelError> {
        if spec.cell_size.is_nan() || spec.cell_size <= 0.0 {
            return Err(VoxelError::InvalidGrid("cell_size must be positive".into()));
        }
        if spec.padding < 1 {
            return Err(VoxelError::InvalidGrid("padding must be at least 1".into()));
        }
        if occupancy.len() != dims[0] * dims[1] * dims[2] {
            return Err(VoxelError::InvalidGrid(format!(
                "occupancy length {} does not match dims {dims:?}",
                occupancy.len()
            )));
        }
        let grid = Self {
            spec,
            dims,
            occupancy,
        };
        if let Some(v) = grid.solid_voxels().find(|v| grid.in_shell(v)) {
            return Err(VoxelError::InvalidGrid(format!(
                "padding shell voxel ({}, {}, {}) is solid",
                v.i, v.j, v.k
            )));
        }
        Ok(grid)
    }

    /// Unit-cell grid at the origin with one layer of padding, filled from a
    /// predicate. Convenient for synthetic fixtures.
    pub fn from_fn(dims: [usize; 3], solid: impl Fn(Voxel) -> bool) -> Result<Self, VoxelError> {
        let mut occupancy = vec![false; dims[0] * dims[1] * dims[2]];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    occupancy[i + dims[0] * (j + dims[1] * k)] = solid(Voxel::new(i, j, k));
                }
            }
        }
        let spec = GridSpec {
            resolution: dims.iter().copied().max().unwrap_or(0).saturating_sub(2),
            padding: 1,
            origin: Point3::origin(),
            cell_size: 1.0,
        };
        Self::from_occupancy(spec, dims, occupancy)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_size(&self) -> f64 {
        self.spec.cell_size
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    #[inline]
    pub fn index(&self, v: Voxel) -> usize {
        v.i + self.dims[0] * (v.j + self.dims[1] * v.k)
    }

    #[inline]
    pub fn voxel_at(&self, index: usize) -> Voxel {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        Voxel::new(i, rest % self.dims[1], rest / self.dims[1])
    }

    pub fn contains(&self, v: Voxel) -> bool {
        v.i < self.dims[0] && v.j < self.dims[1] && v.k < self.dims[2]
    }

    #[inline]
    pub fn is_solid(&self, v: Voxel) -> bool {
        self.contains(v) && self.occupancy[self.index(v)]
    }

    pub fn solid_count(&self) -> usize {
        self.occupancy.iter().filter(|&&s| s).count()
    }

    /// Solid voxels in index order (`i` fastest).
    pub fn solid_voxels(&self) -> impl Iterator<Item = Voxel> + '_ {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(idx, _)| self.voxel_at(idx))
    }

    fn in_shell(&self, v: &Voxel) -> bool {
        let p = self.spec.padding;
        v.as_array()
            .iter()
            .zip(self.dims)
            .any(|(&c, d)| c < p || c + p >= d)
    }

    /// The up to 26 in-bounds neighbors of `v`, in a fixed order.
    pub fn neighbors26(&self, v: Voxel) -> impl Iterator<Item = Voxel> + '_ {
        NEIGHBOR_OFFSETS_26
            .iter()
            .filter_map(move |off| self.offset(v, *off))
    }

    /// Offset `v` by a signed step, returning `None` if outside the grid.
    pub fn offset(&self, v: Voxel, off: [i64; 3]) -> Option<Voxel> {
        let i = v.i as i64 + off[0];
        let j = v.j as i64 + off[1];
        let k = v.k as i64 + off[2];
        if i < 0 || j < 0 || k < 0 {
            return None;
        }
        let n = Voxel::new(i as usize, j as usize, k as usize);
        self.contains(n).then_some(n)
    }

    /// World position of the voxel center: `origin + (ijk + 0.5) * cell_size`.
    pub fn voxel_to_world(&self, v: Voxel) -> Result<Point3<f64>, VoxelError> {
        if !self.contains(v) {
            return Err(VoxelError::OutOfRange {
                i: v.i as i64,
                j: v.j as i64,
                k: v.k as i64,
                dims: self.dims,
            });
        }
        Ok(self.center(v))
    }

    #[inline]
    pub(crate) fn center(&self, v: Voxel) -> Point3<f64> {
        let c = self.spec.cell_size;
        self.spec.origin
            + Vector3::new(
                (v.i as f64 + 0.5) * c,
                (v.j as f64 + 0.5) * c,
                (v.k as f64 + 0.5) * c,
            )
    }

    /// Voxel containing the world point `p`.
    pub fn world_to_voxel(&self, p: &Point3<f64>) -> Result<Voxel, VoxelError> {
        let rel = (p - self.spec.origin) / self.spec.cell_size;
        let f = [rel.x.floor(), rel.y.floor(), rel.z.floor()];
        let inside = f
            .iter()
            .zip(self.dims)
            .all(|(&c, d)| c >= 0.0 && c < d as f64);
        if !inside {
            return Err(VoxelError::OutOfRange {
                i: f[0] as i64,
                j: f[1] as i64,
                k: f[2] as i64,
                dims: self.dims,
            });
        }
        Ok(Voxel::new(f[0] as usize, f[1] as usize, f[2] as usize))
    }

    /// Debug dump: one `i j k` line per solid voxel.
    pub fn write_dump(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = String::new();
        for v in self.solid_voxels() {
            let _ = writeln!(out, "{} {} {}", v.i, v.j, v.k);
        }
        std::fs::write(path, out)
    }
}

pub(crate) const NEIGHBOR_OFFSETS_26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// Voxelize a watertight mesh with rays cast along +x.
pub fn voxelize(mesh: &TriangleMesh, resolution: usize) -> Result<VoxelGrid, VoxelError> {
    voxelize_with(mesh, resolution, 1, RayAxis::X)
}

/// Voxelize with explicit padding and parity-ray axis.
pub fn voxelize_with(
    mesh: &TriangleMesh,
    resolution: usize,
    padding: usize,
    axis: RayAxis,
) -> Result<VoxelGrid, VoxelError> {
    if resolution < MIN_RESOLUTION {
        return Err(VoxelError::InvalidResolution(resolution));
    }
    if !mesh.is_watertight() {
        return Err(VoxelError::NonWatertight);
    }
    let (lo, hi) = bounding_box(mesh.vertices()).ok_or(VoxelError::ResolutionTooSmall { solid: 0 })?;
    let (spec, dims) = GridSpec::fit(lo, hi, resolution, padding)?;

    let a = axis.index();
    let (u, w) = ((a + 1) % 3, (a + 2) % 3);
    let (nu, nw) = (dims[u], dims[w]);
    let cell = spec.cell_size;

    // bucket triangles by the columns their projection may touch
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nu * nw];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = tri.map(|i| mesh.vertices()[i]);
        let col_range = |axis: usize, n: usize| {
            let lo = pts.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
            let first = ((lo - spec.origin[axis]) / cell - 0.5).floor() as i64 - 1;
            let last = ((hi - spec.origin[axis]) / cell - 0.5).ceil() as i64 + 1;
            (first.max(0) as usize, (last.max(0) as usize).min(n - 1))
        };
        let (u0, u1) = col_range(u, nu);
        let (w0, w1) = col_range(w, nw);
        for cw in w0..=w1 {
            for cu in u0..=u1 {
                buckets[cu + nu * cw].push(t as u32);
            }
        }
    }

    let columns: Vec<Vec<f64>> = (0..nu * nw)
        .into_par_iter()
        .map(|col| {
            let (cu, cw) = (col % nu, col / nu);
            let pu = spec.origin[u] + (cu as f64 + 0.5) * cell;
            let pw = spec.origin[w] + (cw as f64 + 0.5) * cell;
            let tris = &buckets[col];
            match column_crossings(mesh, tris, a, u, w, pu, pw, cell) {
                Some(c) => c,
                None => {
                    let eps = 1e-7 * cell;
                    column_crossings(mesh, tris, a, u, w, pu + eps * 0.754_877_666, pw + eps * 0.569_840_291, cell)
                        .unwrap_or_else(|| {
                            column_crossings_forced(mesh, tris, a, u, w, pu + eps * 0.754_877_666, pw + eps * 0.569_840_291)
                        })
                }
            }
        })
        .collect();

    let mut occupancy = vec![false; dims[0] * dims[1] * dims[2]];
    for (col, crossings) in columns.iter().enumerate() {
        if crossings.is_empty() {
            continue;
        }
        let (cu, cw) = (col % nu, col / nu);
        let mut next = 0;
        for ca in 0..dims[a] {
            let pa = spec.origin[a] + (ca as f64 + 0.5) * cell;
            while next < crossings.len() && crossings[next] < pa {
                next += 1;
            }
            if next % 2 == 1 {
                let mut ijk = [0usize; 3];
                ijk[a] = ca;
                ijk[u] = cu;
                ijk[w] = cw;
                occupancy[ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2])] = true;
            }
        }
    }

    let grid = VoxelGrid {
        spec,
        dims,
        occupancy,
    };
    let solid = grid.solid_count();
    if solid < 2 {
        return Err(VoxelError::ResolutionTooSmall { solid });
    }
    Ok(grid)
}

/// Sorted ray crossings for one column, or `None` if the ray passes within
/// numerical tolerance of a triangle edge or vertex.
#[allow(clippy::too_many_arguments)]
fn column_crossings(
    mesh: &TriangleMesh,
    tris: &[u32],
    a: usize,
    u: usize,
    w: usize,
    pu: f64,
    pw: f64,
    cell: f64,
) -> Option<Vec<f64>> {
    let tol = 1e-9 * cell;
    let mut out = Vec::new();
    for &t in tris {
        let tri = mesh.triangles()[t as usize];
        let p = tri.map(|i| mesh.vertices()[i]);
        let area2 = orient(p[0][u], p[0][w], p[1][u], p[1][w], p[2][u], p[2][w]);
        if area2.abs() <= tol * tol {
            // parallel to the ray; neighbors carry the crossing
            continue;
        }
        let mut e = [0.0; 3];
        let mut d = [0.0; 3];
        for k in 0..3 {
            let (b, c) = (&p[(k + 1) % 3], &p[(k + 2) % 3]);
            e[k] = orient(b[u], b[w], c[u], c[w], pu, pw);
            let len = ((c[u] - b[u]).powi(2) + (c[w] - b[w]).powi(2)).sqrt();
            d[k] = if len > 0.0 { e[k] / len } else { 0.0 };
        }
        let inside = (e[0] > 0.0 && e[1] > 0.0 && e[2] > 0.0) || (e[0] < 0.0 && e[1] < 0.0 && e[2] < 0.0);
        let near_edge = d.iter().any(|x| x.abs() <= tol);
        let touching = d.iter().all(|&x| x >= -tol) || d.iter().all(|&x| x <= tol);
        if near_edge && touching {
            return None;
        }
        if inside {
            let s = e[0] + e[1] + e[2];
            out.push((e[0] * p[0][a] + e[1] * p[1][a] + e[2] * p[2][a]) / s);
        }
    }
    out.sort_by(f64::total_cmp);
    Some(out)
}

/// Fallback after a perturbed re-cast is still ambiguous: half-open edge
/// rule with no tolerance.
fn column_crossings_forced(
    mesh: &TriangleMesh,
    tris: &[u32],
    a: usize,
    u: usize,
    w: usize,
    pu: f64,
    pw: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    for &t in tris {
        let tri = mesh.triangles()[t as usize];
        let p = tri.map(|i| mesh.vertices()[i]);
        let mut e = [0.0; 3];
        for k in 0..3 {
            let (b, c) = (&p[(k + 1) % 3], &p[(k + 2) % 3]);
            e[k] = orient(b[u], b[w], c[u], c[w], pu, pw);
        }
        let s = e[0] + e[1] + e[2];
        if s == 0.0 {
            continue;
        }
        let inside = if s > 0.0 {
            e.iter().all(|&x| x >= 0.0) && e.iter().any(|&x| x > 0.0)
        } else {
            e.iter().all(|&x| x < 0.0)
        };
        if inside {
            out.push((e[0] * p[0][a] + e[1] * p[1][a] + e[2] * p[2][a]) / s);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

#[inline]
fn orient(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64) -> f64 {
    (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
}
