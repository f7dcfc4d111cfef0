//! Synthetic shapes for tests, benchmarks and demos.
//!
//! Closed meshes of limbed shapes are built from a union of implicit
//! primitives: the union is sampled on a cubic lattice, lattice
//! configurations that would produce non-manifold edges or vertices are
//! filled in, the boundary faces are emitted as quads, and the result is
//! Taubin-smoothed. The output is always watertight.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::geom::point_segment_distance;
use crate::meshio::TriangleMesh;
use crate::voxelgrid::{Voxel, VoxelGrid};
use crate::distfield::DistanceField;
use crate::medial::MedialSurface;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Sphere { center: Point3<f64>, radius: f64 },
    Capsule { a: Point3<f64>, b: Point3<f64>, radius: f64 },
    Box { lo: Point3<f64>, hi: Point3<f64> },
}

impl Primitive {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        match self {
            Primitive::Sphere { center, radius } => (p - center).norm_squared() <= radius * radius,
            Primitive::Capsule { a, b, radius } => point_segment_distance(p, a, b) <= *radius,
            Primitive::Box { lo, hi } => (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i]),
        }
    }

    fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        match self {
            Primitive::Sphere { center, radius } => {
                let r = Vector3::repeat(*radius);
                (center - r, center + r)
            }
            Primitive::Capsule { a, b, radius } => {
                let r = Vector3::repeat(*radius);
                (a.inf(b) - r, a.sup(b) + r)
            }
            Primitive::Box { lo, hi } => (*lo, *hi),
        }
    }
}

/// Union of primitives.
#[derive(Debug, Clone, Default)]
pub struct Shape {
    pub parts: Vec<Primitive>,
}

/// How each boundary quad is split into triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadSplit {
    /// Two triangles along one diagonal.
    Diagonal,
    /// Four triangles around a center vertex; preserves lattice symmetries.
    Fan,
}

impl Shape {
    pub fn new(parts: Vec<Primitive>) -> Self {
        Self { parts }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.parts.iter().any(|s| s.contains(p))
    }

    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from(Vector3::repeat(f64::INFINITY));
        let mut hi = Point3::from(Vector3::repeat(f64::NEG_INFINITY));
        for p in &self.parts {
            let (a, b) = p.bounds();
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        (lo, hi)
    }

    /// Closed surface mesh sampled with lattice spacing `step`.
    ///
    /// The lattice is centered on the origin, so shapes symmetric about a
    /// coordinate plane through the origin produce symmetric meshes (with
    /// [`QuadSplit::Fan`]).
    pub fn mesh(&self, name: &str, step: f64, split: QuadSplit, smoothing: usize) -> TriangleMesh {
        let (lo, hi) = self.bounds();
        // symmetric cell range around the origin on each axis
        let mut n = [0i64; 3];
        for a in 0..3 {
            let reach = lo[a].abs().max(hi[a].abs());
            n[a] = (reach / step).ceil() as i64 + 2;
        }
        let dims = n.map(|x| (2 * x) as usize);
        let cell_origin = |a: usize| -(n[a] as f64) * step;
        let mut solid = vec![false; dims[0] * dims[1] * dims[2]];
        let idx = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let c = Point3::new(
                        cell_origin(0) + (i as f64 + 0.5) * step,
                        cell_origin(1) + (j as f64 + 0.5) * step,
                        cell_origin(2) + (k as f64 + 0.5) * step,
                    );
                    solid[idx(i, j, k)] = self.contains(&c);
                }
            }
        }
        make_manifold(&mut solid, dims);
        let origin = Point3::new(cell_origin(0), cell_origin(1), cell_origin(2));
        let mesh = lattice_surface(&solid, dims, origin, step, split, name);
        taubin_smooth(&mesh, smoothing)
    }

    /// Occupancy of the shape on a unit-cell grid whose world origin is `origin`
    /// with voxel size `cell`.
    pub fn grid(&self, dims: [usize; 3], origin: Point3<f64>, cell: f64) -> VoxelGrid {
        VoxelGrid::from_fn(dims, |v| {
            let inner = (0..3).all(|a| v.as_array()[a] >= 1 && v.as_array()[a] + 1 < dims[a]);
            let c = origin + Vector3::new(v.i as f64 + 0.5, v.j as f64 + 0.5, v.k as f64 + 0.5) * cell;
            inner && self.contains(&c)
        })
        .expect("shell left empty")
    }
}

fn cell_solid(solid: &[bool], dims: [usize; 3], c: [i64; 3]) -> bool {
    if (0..3).any(|a| c[a] < 0 || c[a] >= dims[a] as i64) {
        return false;
    }
    solid[c[0] as usize + dims[0] * (c[1] as usize + dims[1] * c[2] as usize)]
}

fn set_solid(solid: &mut [bool], dims: [usize; 3], c: [i64; 3]) -> bool {
    if (0..3).any(|a| c[a] < 1 || c[a] + 1 >= dims[a] as i64) {
        return false;
    }
    let i = c[0] as usize + dims[0] * (c[1] as usize + dims[1] * c[2] as usize);
    let changed = !solid[i];
    solid[i] = true;
    changed
}

/// Fill cells until every lattice edge and corner has a manifold neighborhood.
fn make_manifold(solid: &mut [bool], dims: [usize; 3]) {
    loop {
        let mut changed = false;
        // edges: four cells around each lattice edge must not form a checkerboard
        for a in 0..3 {
            let (u, w) = ((a + 1) % 3, (a + 2) % 3);
            for ca in 0..dims[a] as i64 {
                for cu in 1..dims[u] as i64 {
                    for cw in 1..dims[w] as i64 {
                        let cell = |du: i64, dw: i64| {
                            let mut c = [0i64; 3];
                            c[a] = ca;
                            c[u] = cu - 1 + du;
                            c[w] = cw - 1 + dw;
                            c
                        };
                        let s00 = cell_solid(solid, dims, cell(0, 0));
                        let s11 = cell_solid(solid, dims, cell(1, 1));
                        let s01 = cell_solid(solid, dims, cell(0, 1));
                        let s10 = cell_solid(solid, dims, cell(1, 0));
                        if s00 == s11 && s01 == s10 && s00 != s01 {
                            for (du, dw) in [(0, 0), (1, 1), (0, 1), (1, 0)] {
                                changed |= set_solid(solid, dims, cell(du, dw));
                            }
                        }
                    }
                }
            }
        }
        // corners: solid and empty cells of each 2x2x2 block must each be face-connected
        for z in 1..dims[2] as i64 {
            for y in 1..dims[1] as i64 {
                for x in 1..dims[0] as i64 {
                    let mut bits = 0u8;
                    for b in 0..8 {
                        let c = [x - 1 + (b & 1), y - 1 + (b >> 1 & 1), z - 1 + (b >> 2 & 1)];
                        if cell_solid(solid, dims, c) {
                            bits |= 1 << b;
                        }
                    }
                    if !block_connected(bits) || !block_connected(!bits) {
                        for b in 0..8 {
                            let c = [x - 1 + (b & 1), y - 1 + (b >> 1 & 1), z - 1 + (b >> 2 & 1)];
                            changed |= set_solid(solid, dims, c);
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Whether the set bits of a 2x2x2 block are face-connected.
fn block_connected(bits: u8) -> bool {
    if bits == 0 {
        return true;
    }
    let start = bits.trailing_zeros() as u8;
    let mut seen = 1u8 << start;
    let mut stack = vec![start];
    while let Some(b) = stack.pop() {
        for flip in [1u8, 2, 4] {
            let n = b ^ flip;
            if bits >> n & 1 == 1 && seen >> n & 1 == 0 {
                seen |= 1 << n;
                stack.push(n);
            }
        }
    }
    seen == bits
}

fn lattice_surface(
    solid: &[bool],
    dims: [usize; 3],
    origin: Point3<f64>,
    step: f64,
    split: QuadSplit,
    name: &str,
) -> TriangleMesh {
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut corner_ids: HashMap<[i64; 3], usize> = HashMap::new();
    let mut triangles = Vec::new();
    let mut corner = |c: [i64; 3], vertices: &mut Vec<Point3<f64>>| {
        *corner_ids.entry(c).or_insert_with(|| {
            vertices.push(origin + Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) * step);
            vertices.len() - 1
        })
    };
    for k in 0..dims[2] as i64 {
        for j in 0..dims[1] as i64 {
            for i in 0..dims[0] as i64 {
                let c = [i, j, k];
                if !cell_solid(solid, dims, c) {
                    continue;
                }
                for a in 0..3 {
                    for sign in [1i64, -1] {
                        let mut n = c;
                        n[a] += sign;
                        if cell_solid(solid, dims, n) {
                            continue;
                        }
                        let (u, w) = ((a + 1) % 3, (a + 2) % 3);
                        let mut base = c;
                        if sign > 0 {
                            base[a] += 1;
                        }
                        let mut quad = [(0, 0), (1, 0), (1, 1), (0, 1)].map(|(du, dw)| {
                            let mut p = base;
                            p[u] += du;
                            p[w] += dw;
                            p
                        });
                        if sign < 0 {
                            quad.reverse();
                        }
                        let ids = quad.map(|q| corner(q, &mut vertices));
                        match split {
                            QuadSplit::Diagonal => {
                                triangles.push([ids[0], ids[1], ids[2]]);
                                triangles.push([ids[0], ids[2], ids[3]]);
                            }
                            QuadSplit::Fan => {
                                let center = ids
                                    .iter()
                                    .fold(Vector3::zeros(), |acc, &i| acc + vertices[i].coords)
                                    / 4.0;
                                vertices.push(Point3::from(center));
                                let m = vertices.len() - 1;
                                for e in 0..4 {
                                    triangles.push([ids[e], ids[(e + 1) % 4], m]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    TriangleMesh::new(name, vertices, triangles).expect("lattice surface is valid")
}

/// Taubin λ|μ smoothing with uniform weights. Topology is untouched.
pub fn taubin_smooth(mesh: &TriangleMesh, iterations: usize) -> TriangleMesh {
    if iterations == 0 {
        return mesh.clone();
    }
    let adj = mesh.vertex_neighbors();
    let mut pos = mesh.vertices().to_vec();
    for _ in 0..iterations {
        for factor in [0.5, -0.53] {
            let next: Vec<Point3<f64>> = pos
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if adj[i].is_empty() {
                        return *p;
                    }
                    let avg = adj[i].iter().fold(Vector3::zeros(), |acc, &j| acc + pos[j].coords)
                        / adj[i].len() as f64;
                    p + (avg - p.coords) * factor
                })
                .collect();
            pos = next;
        }
    }
    mesh.with_vertices(pos)
}

pub fn tetrahedron() -> TriangleMesh {
    TriangleMesh::new(
        "tetrahedron",
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ],
        vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
    )
    .unwrap()
}

/// A tetrahedron only 0.02 units tall over a unit base.
pub fn sliver_tetrahedron() -> TriangleMesh {
    TriangleMesh::new(
        "sliver",
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 0.02),
        ],
        vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
    )
    .unwrap()
}

/// Axis-aligned cube with 8 vertices and 12 outward-facing triangles.
pub fn cube(min: Point3<f64>, size: f64) -> TriangleMesh {
    let v: Vec<Point3<f64>> = (0..8)
        .map(|b| min + Vector3::new((b & 1) as f64, (b >> 1 & 1) as f64, (b >> 2 & 1) as f64) * size)
        .collect();
    let tris = vec![
        [0, 2, 1], [1, 2, 3], // z = 0
        [4, 5, 6], [5, 7, 6], // z = 1
        [0, 1, 4], [1, 5, 4], // y = 0
        [2, 6, 3], [3, 6, 7], // y = 1
        [0, 4, 2], [2, 4, 6], // x = 0
        [1, 3, 5], [3, 7, 5], // x = 1
    ];
    TriangleMesh::new("cube", v, tris).unwrap()
}

pub fn unit_cube() -> TriangleMesh {
    cube(Point3::origin(), 1.0)
}

/// Subdivided icosahedron projected onto a sphere of `radius` at the origin.
pub fn icosphere(subdivisions: usize, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let ab = midpoint(f[0], f[1], &mut verts);
            let bc = midpoint(f[1], f[2], &mut verts);
            let ca = midpoint(f[2], f[0], &mut verts);
            next.extend([[f[0], ab, ca], [f[1], bc, ab], [f[2], ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let points = verts.into_iter().map(|v| Point3::from(v * radius)).collect();
    TriangleMesh::new("icosphere", points, faces).unwrap()
}

fn capsule(a: [f64; 3], b: [f64; 3], radius: f64) -> Primitive {
    Primitive::Capsule {
        a: Point3::from(a),
        b: Point3::from(b),
        radius,
    }
}

fn sphere(c: [f64; 3], radius: f64) -> Primitive {
    Primitive::Sphere {
        center: Point3::from(c),
        radius,
    }
}

/// Tip positions of the three star arms.
pub fn star_tips() -> [Point3<f64>; 3] {
    let s = 3f64.sqrt() / 2.0;
    [
        Point3::new(1.2, 0.0, 0.0),
        Point3::new(-0.6, 1.2 * s, 0.0),
        Point3::new(-0.6, -1.2 * s, 0.0),
    ]
}

/// Three capsule arms at 120° in the xy-plane around a central ball.
pub fn star_shape() -> Shape {
    let mut parts = vec![sphere([0.0, 0.0, 0.0], 0.34)];
    for tip in star_tips() {
        parts.push(capsule([0.0, 0.0, 0.0], tip.coords.into(), 0.2));
    }
    Shape::new(parts)
}

pub fn star_mesh() -> TriangleMesh {
    star_shape().mesh("star", 0.05, QuadSplit::Diagonal, 6)
}

/// Two balls joined by a rod along x, mirror-symmetric about `x = 0`.
pub fn barbell_shape() -> Shape {
    Shape::new(vec![
        sphere([-1.0, 0.0, 0.0], 0.42),
        sphere([1.0, 0.0, 0.0], 0.42),
        capsule([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.2),
    ])
}

pub fn barbell_mesh() -> TriangleMesh {
    barbell_shape().mesh("barbell", 0.06, QuadSplit::Fan, 4)
}

/// Straight rod of radius 0.25 from `x = -1.5` to `x = 1.5`.
pub fn cylinder_shape() -> Shape {
    Shape::new(vec![capsule([-1.5, 0.0, 0.0], [1.5, 0.0, 0.0], 0.25)])
}

pub fn cylinder_mesh() -> TriangleMesh {
    cylinder_shape().mesh("cylinder", 0.05, QuadSplit::Diagonal, 4)
}

/// T-posed biped standing along +y, facing +z.
pub fn humanoid_shape() -> Shape {
    Shape::new(vec![
        capsule([0.0, 0.0, 0.0], [0.0, 0.55, 0.0], 0.17),
        sphere([0.0, 0.92, 0.0], 0.15),
        capsule([0.0, 0.55, 0.0], [0.0, 0.8, 0.0], 0.08),
        capsule([0.0, 0.5, 0.0], [-0.85, 0.5, 0.0], 0.075),
        capsule([0.0, 0.5, 0.0], [0.85, 0.5, 0.0], 0.075),
        capsule([-0.1, 0.0, 0.0], [-0.18, -0.9, 0.0], 0.085),
        capsule([0.1, 0.0, 0.0], [0.18, -0.9, 0.0], 0.085),
    ])
}

pub fn humanoid_mesh() -> TriangleMesh {
    humanoid_shape().mesh("humanoid", 0.04, QuadSplit::Diagonal, 6)
}

/// Horse-like quadruped: body along x, head toward +x, up is +y.
pub fn quadruped_shape() -> Shape {
    let mut parts = vec![
        capsule([-0.6, 0.0, 0.0], [0.6, 0.0, 0.0], 0.22),
        capsule([0.6, 0.05, 0.0], [0.85, 0.48, 0.0], 0.1),
        capsule([0.85, 0.48, 0.0], [1.12, 0.36, 0.0], 0.095),
        capsule([-0.62, 0.05, 0.0], [-0.98, -0.32, 0.0], 0.095),
    ];
    for x in [-0.5, 0.5] {
        for z in [-0.12, 0.12] {
            parts.push(capsule([x, -0.05, z], [x, -0.85, z], 0.095));
        }
    }
    Shape::new(parts)
}

pub fn quadruped_mesh() -> TriangleMesh {
    quadruped_shape().mesh("quadruped", 0.04, QuadSplit::Diagonal, 6)
}

// Voxel-level fixtures.

const STAR_GRID_C: usize = 12;
const STAR_ARM: usize = 8;

/// Central 5³ block with three 3x3-section arms of length 8 along +x, +y, +z.
pub fn star_grid() -> VoxelGrid {
    let c = STAR_GRID_C;
    let n = c + 2 + STAR_ARM + 2;
    let near = |x: usize| x + 1 >= c && x <= c + 1;
    VoxelGrid::from_fn([n, n, n], |v| {
        let block = (0..3).all(|a| v.as_array()[a] + 2 >= c && v.as_array()[a] <= c + 2);
        let arm = |a: usize| {
            let along = v.as_array()[a];
            along > c + 2
                && along <= c + 2 + STAR_ARM
                && (0..3).filter(|&b| b != a).all(|b| near(v.as_array()[b]))
        };
        block || arm(0) || arm(1) || arm(2)
    })
    .unwrap()
}

/// Arm tips of [`star_grid`].
pub fn star_arm_tips() -> [Voxel; 3] {
    let (c, e) = (STAR_GRID_C, STAR_GRID_C + 2 + STAR_ARM);
    [Voxel::new(e, c, c), Voxel::new(c, e, c), Voxel::new(c, c, e)]
}

/// Medial set of [`star_grid`]: the three arm axes through the center.
pub fn star_arm_dms(field: &DistanceField) -> MedialSurface {
    let c = STAR_GRID_C;
    let mut voxels = vec![Voxel::new(c, c, c)];
    for t in 1..=2 + STAR_ARM {
        voxels.push(Voxel::new(c + t, c, c));
        voxels.push(Voxel::new(c, c + t, c));
        voxels.push(Voxel::new(c, c, c + t));
    }
    MedialSurface::from_voxels(field, voxels).unwrap()
}

/// A thick 8³ block with a thin 3x3 arm of length 12 along +x.
pub fn l_shape_grid() -> VoxelGrid {
    VoxelGrid::from_fn([22, 10, 10], |v| {
        let thick = (1..=8).contains(&v.i) && (1..=8).contains(&v.j) && (1..=8).contains(&v.k);
        let thin = (9..=20).contains(&v.i) && (1..=3).contains(&v.j) && (1..=3).contains(&v.k);
        thick || thin
    })
    .unwrap()
}
