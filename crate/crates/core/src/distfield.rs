//! Exact Euclidean distance map over a voxel grid.
//!
//! Each solid voxel stores the distance from its center to the nearest empty
//! voxel center, in voxel units. The transform is separable: one exact
//! lower-envelope pass per axis over integer squared distances (Meijster,
//! Roerdink and Hesselink), with the square root taken once at the end.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;
use thiserror::Error;

use crate::voxelgrid::{Voxel, VoxelGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid has no solid voxels")]
    EmptyGrid,
    #[error("point ({x}, {y}, {z}) lies outside the grid bounds")]
    OutOfBounds { x: f64, y: f64, z: f64 },
}

/// Stand-in for an infinite squared distance. Large enough that no real
/// squared distance on a grid up to 2^16 per side reaches it, small enough
/// that sums of two never overflow.
const FAR: i64 = 1 << 40;

#[derive(Debug, Clone)]
pub struct DistanceField {
    grid: VoxelGrid,
    sq: Vec<u64>,
    dist: Vec<f64>,
    max_dist: f64,
}

/// Compute the exact Euclidean distance map of `grid`.
pub fn compute_edm(grid: &VoxelGrid) -> Result<DistanceField, FieldError> {
    if grid.solid_count() == 0 {
        return Err(FieldError::EmptyGrid);
    }
    let dims = grid.dims();
    let mut f: Vec<i64> = grid
        .occupancy()
        .iter()
        .map(|&s| if s { FAR } else { 0 })
        .collect();

    let stride = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut line = vec![0i64; n];
        let mut out = vec![0i64; n];
        let mut s = vec![0usize; n];
        let mut t = vec![0usize; n];
        for ib in 0..dims[b] {
            for ia in 0..dims[a] {
                let base = ia * stride[a] + ib * stride[b];
                for x in 0..n {
                    line[x] = f[base + x * stride[axis]];
                }
                envelope_1d(&line, &mut out, &mut s, &mut t);
                for x in 0..n {
                    f[base + x * stride[axis]] = out[x];
                }
            }
        }
    }

    let sq: Vec<u64> = f.iter().map(|&v| v.min(FAR) as u64).collect();
    let dist: Vec<f64> = sq.iter().map(|&v| (v as f64).sqrt()).collect();
    let max_dist = dist.iter().copied().fold(0.0, f64::max);
    Ok(DistanceField {
        grid: grid.clone(),
        sq,
        dist,
        max_dist,
    })
}

/// `out[q] = min_i (q - i)^2 + f[i]`, exact in integers.
fn envelope_1d(f: &[i64], out: &mut [i64], s: &mut [usize], t: &mut [usize]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let eval = |x: usize, i: usize| {
        let d = x as i64 - i as i64;
        d * d + f[i]
    };
    // first point of the (integer) domain where parabola u beats parabola i, i < u
    let sep = |i: usize, u: usize| {
        let (ii, uu) = (i as i64, u as i64);
        let num = uu * uu - ii * ii + f[u] - f[i];
        num.div_euclid(2 * (uu - ii))
    };
    let mut q = 0usize;
    s[0] = 0;
    t[0] = 0;
    for u in 1..n {
        loop {
            if eval(t[q], s[q]) > eval(t[q], u) {
                if q == 0 {
                    break;
                }
                q -= 1;
            } else {
                break;
            }
        }
        if eval(t[q], s[q]) > eval(t[q], u) {
            // q == 0 and u dominates everywhere
            s[0] = u;
            t[0] = 0;
        } else {
            let w = 1 + sep(s[q], u);
            if w >= 0 && (w as usize) < n {
                q += 1;
                s[q] = u;
                t[q] = w as usize;
            }
        }
    }
    for x in (0..n).rev() {
        out[x] = eval(x, s[q]);
        if x == t[q] && q > 0 {
            q -= 1;
        }
    }
}

impl DistanceField {
    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn cell_size(&self) -> f64 {
        self.grid.cell_size()
    }

    /// Distance in voxel units; 0 for empty voxels.
    #[inline]
    pub fn dist(&self, v: Voxel) -> f64 {
        self.dist[self.grid.index(v)]
    }

    /// Exact squared distance in voxel units.
    #[inline]
    pub fn dist2(&self, v: Voxel) -> u64 {
        self.sq[self.grid.index(v)]
    }

    pub fn values(&self) -> &[f64] {
        &self.dist
    }

    pub fn squared_values(&self) -> &[u64] {
        &self.sq
    }

    /// Largest distance over the grid, in voxel units.
    pub fn max_dist(&self) -> f64 {
        self.max_dist
    }

    /// World-unit distance at `p` by trilinear interpolation of voxel-center
    /// values. Exact at voxel centers. Points between the grid boundary and
    /// the outermost centers clamp to the outermost centers.
    pub fn query_distance(&self, p: &Point3<f64>) -> Result<f64, FieldError> {
        let spec = self.grid.spec();
        let dims = self.grid.dims();
        let rel = (p - spec.origin) / spec.cell_size;
        let inside = (0..3).all(|a| rel[a] >= 0.0 && rel[a] <= dims[a] as f64);
        if !inside || !rel.iter().all(|c| c.is_finite()) {
            return Err(FieldError::OutOfBounds {
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        Ok(self.interpolate(rel.into()) * spec.cell_size)
    }

    /// Like [`query_distance`](Self::query_distance) but returns 0 outside the grid.
    pub fn sample(&self, p: &Point3<f64>) -> f64 {
        self.query_distance(p).unwrap_or(0.0)
    }

    fn interpolate(&self, rel: [f64; 3]) -> f64 {
        let dims = self.grid.dims();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let c = (rel[a] - 0.5).clamp(0.0, (dims[a] - 1) as f64);
            let b = (c.floor() as usize).min(dims[a].saturating_sub(2));
            lo[a] = b;
            hi[a] = (b + 1).min(dims[a] - 1);
            frac[a] = if dims[a] > 1 { c - b as f64 } else { 0.0 };
        }
        // Nested lerps keep the result inside the range of the corner values.
        let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
        let at = |i: usize, j: usize, k: usize| self.dist(Voxel::new(i, j, k));
        let along_x = |j: usize, k: usize| lerp(at(lo[0], j, k), at(hi[0], j, k), frac[0]);
        let along_y = |k: usize| lerp(along_x(lo[1], k), along_x(hi[1], k), frac[1]);
        lerp(along_y(lo[2]), along_y(hi[2]), frac[2])
    }

    /// Debug dump: `i j k dist` for every solid voxel.
    pub fn write_dump(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = String::new();
        for v in self.grid.solid_voxels() {
            let _ = writeln!(out, "{} {} {} {}", v.i, v.j, v.k, self.dist(v));
        }
        std::fs::write(path, out)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute force: squared distance from each voxel to the nearest empty voxel.
    pub(crate) fn brute_force_sq(grid: &VoxelGrid) -> Vec<u64> {
        let empties: Vec<Voxel> = (0..grid.len())
            .filter(|&i| !grid.occupancy()[i])
            .map(|i| grid.voxel_at(i))
            .collect();
        (0..grid.len())
            .map(|idx| {
                if !grid.occupancy()[idx] {
                    return 0;
                }
                let v = grid.voxel_at(idx);
                empties.iter().map(|e| e.dist2(&v)).min().unwrap()
            })
            .collect()
    }

    pub(crate) fn random_grid(rng: &mut ChaCha8Rng, max_side: usize) -> VoxelGrid {
        let dims = [
            rng.random_range(3..=max_side),
            rng.random_range(3..=max_side),
            rng.random_range(3..=max_side),
        ];
        let density: f64 = rng.random_range(0.3..0.97);
        let occ: Vec<bool> = (0..dims[0] * dims[1] * dims[2])
            .map(|_| rng.random_bool(density))
            .collect();
        VoxelGrid::from_fn(dims, |v| {
            let interior = (0..3).all(|a| v.as_array()[a] >= 1 && v.as_array()[a] + 1 < dims[a]);
            interior && occ[v.i + dims[0] * (v.j + dims[1] * v.k)]
        })
        .unwrap()
    }

    fn block(dims: [usize; 3], lo: [usize; 3], hi: [usize; 3]) -> VoxelGrid {
        VoxelGrid::from_fn(dims, |v| {
            (0..3).all(|a| v.as_array()[a] >= lo[a] && v.as_array()[a] <= hi[a])
        })
        .unwrap()
    }

    #[test]
    fn single_voxel_has_unit_distance() {
        let g = block([3, 3, 3], [1, 1, 1], [1, 1, 1]);
        let f = compute_edm(&g).unwrap();
        assert_eq!(f.dist(Voxel::new(1, 1, 1)), 1.0);
        assert_eq!(f.dist(Voxel::new(0, 1, 1)), 0.0);
    }

    #[test]
    fn cube_block_center_is_two() {
        let g = block([5, 5, 5], [1, 1, 1], [3, 3, 3]);
        let f = compute_edm(&g).unwrap();
        assert_eq!(f.dist(Voxel::new(2, 2, 2)), 2.0);
        assert_eq!(f.dist(Voxel::new(1, 2, 2)), 1.0);
        assert_eq!(f.squared_values(), brute_force_sq(&g).as_slice());
    }

    #[test]
    fn rod_is_unit_everywhere() {
        let g = block([7, 3, 3], [1, 1, 1], [5, 1, 1]);
        let f = compute_edm(&g).unwrap();
        for i in 1..=5 {
            assert_eq!(f.dist(Voxel::new(i, 1, 1)), 1.0);
        }
    }

    #[test]
    fn empty_grid_is_an_error() {
        let g = VoxelGrid::from_fn([4, 4, 4], |_| false).unwrap();
        assert_eq!(compute_edm(&g).unwrap_err(), FieldError::EmptyGrid);
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let g = random_grid(&mut rng, 14);
            if g.solid_count() == 0 {
                continue;
            }
            let f = compute_edm(&g).unwrap();
            assert_eq!(f.squared_values(), brute_force_sq(&g).as_slice());
        }
    }

    #[test]
    fn lipschitz_over_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let g = random_grid(&mut rng, 12);
            if g.solid_count() == 0 {
                continue;
            }
            let f = compute_edm(&g).unwrap();
            for idx in 0..g.len() {
                let v = g.voxel_at(idx);
                for n in g.neighbors26(v) {
                    let step = (v.dist2(&n) as f64).sqrt();
                    assert!((f.dist(v) - f.dist(n)).abs() <= step + 1e-12);
                }
            }
        }
    }

    #[test]
    fn query_interpolates() {
        // rod of length 5 inside a thicker slab to get distinct values
        let g = block([9, 9, 9], [1, 1, 1], [7, 7, 7]);
        let f = compute_edm(&g).unwrap();
        let c = g.voxel_to_world(Voxel::new(4, 4, 4)).unwrap();
        assert_eq!(f.query_distance(&c).unwrap(), 4.0);
        // between dist-1 voxel (1,4,4) and dist-3 voxel (3,4,4) lies dist-2 (2,4,4);
        // midpoint of the centers of (1,..) and (3,..) must interpolate to 2
        let a = g.voxel_to_world(Voxel::new(1, 4, 4)).unwrap();
        let b = g.voxel_to_world(Voxel::new(3, 4, 4)).unwrap();
        let mid = Point3::from((a.coords + b.coords) / 2.0);
        assert_eq!(f.query_distance(&mid).unwrap(), 2.0);
        // halfway between dist-1 and dist-2 centers
        let h = Point3::new(2.0, 4.5, 4.5);
        assert!((f.query_distance(&h).unwrap() - 1.5).abs() < 1e-12);
        assert!(f.query_distance(&Point3::new(-0.1, 1.0, 1.0)).is_err());
    }

    #[test]
    fn random_queries_are_bounded() {
        let g = block([10, 8, 12], [1, 1, 1], [8, 6, 10]);
        let f = compute_edm(&g).unwrap();
        let max = f.max_dist() * f.cell_size();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = Point3::new(
                rng.random_range(1.0..9.0),
                rng.random_range(1.0..7.0),
                rng.random_range(1.0..11.0),
            );
            let d = f.query_distance(&p).unwrap();
            assert!((0.0..=max).contains(&d), "{d} {max} {p}");
        }
    }
}
