//! Heat-equilibrium bone weights and linear blend skinning.
//!
//! For every bone `i` the weights solve `(D - A + H) w_i = H p_i` over the
//! mesh's vertex graph, where `D - A` is the uniform graph Laplacian, `H` is
//! diagonal with `1 / d_j^2` for vertices that see a bone (`d_j` the distance
//! to the nearest visible bone, floored at half a cell), and `p_i` marks the
//! vertices whose nearest visible bone is `i` (split evenly on ties). The
//! system matrix is the same for every bone, so the weights of a vertex sum
//! to one before pruning.

use std::path::Path;

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctrlskel::{SegmentBinding, Skeleton};
use crate::distfield::DistanceField;
use crate::geom::{point_segment_distance, segment_param};
use crate::meshio::TriangleMesh;

pub const DEFAULT_MAX_INFLUENCES: usize = 4;
/// Samples along the vertex-to-bone segment for the visibility test.
pub const VISIBILITY_SAMPLES: usize = 8;

#[derive(Debug, Error)]
pub enum SkinError {
    #[error("skeleton has no bones")]
    NoBones,
    #[error("mesh component {component} (containing vertex {vertex}) sees no bone; its weights are undetermined")]
    NoHeatSource { component: usize, vertex: usize },
    #[error("linear solve for bone {bone} did not converge (residual {residual:e})")]
    NoConvergence { bone: usize, residual: f64 },
    #[error("bone counts differ: {left} vs {right}")]
    BoneCountMismatch { left: usize, right: usize },
    #[error("binding covers {binding} vertices but the mesh has {mesh}")]
    VertexCountMismatch { binding: usize, mesh: usize },
    #[error("binding references bone {bone} but only {count} bones exist")]
    BoneOutOfRange { bone: usize, count: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("rotation quaternion of bone {bone} has norm {norm}, expected 1")]
    NotUnitQuaternion { bone: usize, norm: f64 },
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sparse per-vertex bone weights, each list sorted by bone index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkinBinding {
    weights: Vec<Vec<(usize, f64)>>,
}

impl SkinBinding {
    /// Validates non-negativity and partition of unity.
    pub fn new(mut weights: Vec<Vec<(usize, f64)>>) -> Result<Self, SkinError> {
        for (v, w) in weights.iter_mut().enumerate() {
            w.sort_by_key(|e| e.0);
            if w.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(SkinError::InvalidWeights(format!("vertex {v} lists a bone twice")));
            }
            if w.iter().any(|e| !(e.1 >= 0.0 && e.1.is_finite())) {
                return Err(SkinError::InvalidWeights(format!("vertex {v} has a negative weight")));
            }
            let s: f64 = w.iter().map(|e| e.1).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(SkinError::InvalidWeights(format!("weights of vertex {v} sum to {s}")));
            }
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[Vec<(usize, f64)>] {
        &self.weights
    }

    pub fn vertex_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, vertex: usize, bone: usize) -> f64 {
        self.weights[vertex].iter().find(|e| e.0 == bone).map_or(0.0, |e| e.1)
    }

    pub fn max_bone(&self) -> Option<usize> {
        self.weights.iter().flatten().map(|e| e.0).max()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, SkinError> {
        Self::new(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatParams {
    /// Heat coefficient `c` in `H_jj = c / d_j^2`.
    pub heat: f64,
    pub max_influences: usize,
    /// Solver stops once the largest residual entry is below this.
    pub tolerance: f64,
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            heat: 1.0,
            max_influences: DEFAULT_MAX_INFLUENCES,
            tolerance: 1e-11,
        }
    }
}

/// Assembled equilibrium system shared by all bones.
#[derive(Debug, Clone)]
pub struct HeatSystem {
    neighbors: Vec<Vec<usize>>,
    h: Vec<f64>,
    /// Per vertex, the nearest visible bones (several on ties).
    nearest: Vec<Vec<usize>>,
    bones: usize,
}

impl HeatSystem {
    pub fn assemble(mesh: &TriangleMesh, skeleton: &Skeleton, field: &DistanceField, heat: f64) -> Result<Self, SkinError> {
        let bones = skeleton.bone_count();
        if bones == 0 {
            return Err(SkinError::NoBones);
        }
        let segs: Vec<_> = (0..bones).map(|b| skeleton.bone_segment(b)).collect();
        let floor = 0.5 * field.cell_size();
        let (h, nearest): (Vec<f64>, Vec<Vec<usize>>) = mesh
            .vertices()
            .par_iter()
            .map(|p| {
                let mut best = f64::INFINITY;
                let mut tied = Vec::new();
                for (b, (a, c)) in segs.iter().enumerate() {
                    let d = point_segment_distance(p, a, c);
                    if d > best * (1.0 + 1e-12) || !visible(p, a, c, field) {
                        continue;
                    }
                    if d < best * (1.0 - 1e-12) {
                        tied.clear();
                    }
                    best = best.min(d);
                    tied.push(b);
                }
                if tied.is_empty() {
                    (0.0, tied)
                } else {
                    let d = best.max(floor);
                    (heat / (d * d), tied)
                }
            })
            .unzip();
        Ok(Self {
            neighbors: mesh.vertex_neighbors(),
            h,
            nearest,
            bones,
        })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn heat(&self) -> &[f64] {
        &self.h
    }

    pub fn nearest(&self) -> &[Vec<usize>] {
        &self.nearest
    }

    /// Right-hand side `H p_i`.
    pub fn rhs(&self, bone: usize) -> Vec<f64> {
        self.h
            .iter()
            .zip(&self.nearest)
            .map(|(h, n)| if n.contains(&bone) { h / n.len() as f64 } else { 0.0 })
            .collect()
    }

    /// `(D - A + H) x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|j| {
                let nb = &self.neighbors[j];
                (nb.len() as f64 + self.h[j]) * x[j] - nb.iter().map(|&k| x[k]).sum::<f64>()
            })
            .collect()
    }

    /// `max_j |(D - A + H) x - H p_i|_j`.
    pub fn residual(&self, bone: usize, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        ax.iter().zip(self.rhs(bone)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Fails when some connected component has no heat source, which makes
    /// the system singular there.
    pub fn check_sources(&self) -> Result<(), SkinError> {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            let mut stack = vec![s];
            let mut heated = false;
            while let Some(u) = stack.pop() {
                heated |= self.h[u] > 0.0;
                for &w in &self.neighbors[u] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
            if !heated {
                return Err(SkinError::NoHeatSource {
                    component: next,
                    vertex: s,
                });
            }
            next += 1;
        }
        Ok(())
    }

    /// Jacobi-preconditioned conjugate gradients.
    pub fn solve(&self, bone: usize, tolerance: f64) -> Result<Vec<f64>, SkinError> {
        let n = self.len();
        let b = self.rhs(bone);
        let inv_diag: Vec<f64> = (0..n).map(|j| 1.0 / (self.neighbors[j].len() as f64 + self.h[j])).collect();
        let mut x: Vec<f64> = self.nearest.iter().map(|t| if t.contains(&bone) { 1.0 } else { 0.0 }).collect();
        let ax = self.apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let max_iter = 20 * n + 100;
        for _ in 0..max_iter {
            if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) < tolerance {
                break;
            }
            let ap = self.apply(&p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for j in 0..n {
                x[j] += alpha * p[j];
                r[j] -= alpha * ap[j];
            }
            for j in 0..n {
                z[j] = r[j] * inv_diag[j];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for j in 0..n {
                p[j] = z[j] + beta * p[j];
            }
        }
        let residual = self.residual(bone, &x);
        if residual.is_nan() || residual >= tolerance.max(1e-9) {
            return Err(SkinError::NoConvergence { bone, residual });
        }
        Ok(x)
    }

    pub fn bone_count(&self) -> usize {
        self.bones
    }
}

/// Whether the straight path from `p` to its closest point on bone `[a, b]`
/// stays inside the shape, judged by distance samples at the midpoints of
/// eight equal sub-segments.
fn visible(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, field: &DistanceField) -> bool {
    let t = segment_param(p, a, b);
    let q = a + (b - a) * t;
    (0..VISIBILITY_SAMPLES).all(|i| {
        let s = (i as f64 + 0.5) / VISIBILITY_SAMPLES as f64;
        field.sample(&(p + (q - p) * s)) > 0.0
    })
}

/// Final binding plus the unpruned solution.
#[derive(Debug, Clone)]
pub struct HeatWeights {
    pub binding: SkinBinding,
    /// `raw[bone][vertex]` before clamping and pruning.
    pub raw: Vec<Vec<f64>>,
    /// Residual of each bone's solve.
    pub residuals: Vec<f64>,
}

pub fn compute_heat_weights(
    mesh: &TriangleMesh,
    skeleton: &Skeleton,
    field: &DistanceField,
    params: &HeatParams,
) -> Result<HeatWeights, SkinError> {
    let system = HeatSystem::assemble(mesh, skeleton, field, params.heat)?;
    system.check_sources()?;
    let raw: Vec<Vec<f64>> = (0..system.bone_count())
        .into_par_iter()
        .map(|b| system.solve(b, params.tolerance))
        .collect::<Result<_, _>>()?;
    let residuals = (0..raw.len()).map(|b| system.residual(b, &raw[b])).collect();
    let weights = (0..mesh.vertices().len())
        .map(|v| prune(raw.iter().enumerate().map(|(b, w)| (b, w[v])), params.max_influences))
        .collect();
    Ok(HeatWeights {
        binding: SkinBinding::new(weights)?,
        raw,
        residuals,
    })
}

/// Clamp negatives, keep the `max` largest weights (lower bone index on
/// ties), and renormalize.
pub fn prune(weights: impl Iterator<Item = (usize, f64)>, max: usize) -> Vec<(usize, f64)> {
    let mut w: Vec<(usize, f64)> = weights.filter(|e| e.1 > 0.0).collect();
    w.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    w.truncate(max.max(1));
    let s: f64 = w.iter().map(|e| e.1).sum();
    if s <= 0.0 {
        return Vec::new();
    }
    let mut out: Vec<(usize, f64)> = w.into_iter().map(|(b, x)| (b, x / s)).collect();
    out.sort_by_key(|e| e.0);
    // push the rounding error onto the largest weight
    let total: f64 = out.iter().map(|e| e.1).sum();
    if let Some(big) = out.iter_mut().max_by(|a, b| a.1.total_cmp(&b.1)) {
        big.1 += 1.0 - total;
    }
    out
}

/// Rigid transform per bone.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    transforms: Vec<Isometry3<f64>>,
}

#[derive(Serialize, Deserialize)]
struct BoneTransformJson {
    rotation: [f64; 4],
    translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pivot: Option<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    bones: Vec<BoneTransformJson>,
}

impl Pose {
    pub fn new(transforms: Vec<Isometry3<f64>>) -> Self {
        Self { transforms }
    }

    pub fn identity(bones: usize) -> Self {
        Self::new(vec![Isometry3::identity(); bones])
    }

    pub fn transforms(&self) -> &[Isometry3<f64>] {
        &self.transforms
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    /// Apply `g` after every bone transform.
    pub fn then(&self, g: &Isometry3<f64>) -> Self {
        Self::new(self.transforms.iter().map(|t| g * t).collect())
    }

    /// Rotation `r` about `pivot` followed by `translation`.
    pub fn about(r: UnitQuaternion<f64>, pivot: &Point3<f64>, translation: &Vector3<f64>) -> Isometry3<f64> {
        let shift = pivot.coords - r * pivot.coords + translation;
        Isometry3::from_parts(Translation3::from(shift), r)
    }

    /// JSON: `{"bones":[{"rotation":[w,x,y,z],"translation":[x,y,z],"pivot":[x,y,z]}]}`
    /// with an optional pivot; `T(v) = R (v - pivot) + pivot + translation`.
    pub fn from_json(text: &str) -> Result<Self, SkinError> {
        let raw: PoseJson = serde_json::from_str(text)?;
        let transforms = raw
            .bones
            .iter()
            .enumerate()
            .map(|(bone, b)| {
                let [w, x, y, z] = b.rotation;
                let q = Quaternion::new(w, x, y, z);
                let norm = q.norm();
                if norm.is_nan() || (norm - 1.0).abs() > 1e-6 {
                    return Err(SkinError::NotUnitQuaternion { bone, norm });
                }
                let pivot = Point3::from(b.pivot.unwrap_or([0.0; 3]));
                Ok(Self::about(
                    UnitQuaternion::from_quaternion(q),
                    &pivot,
                    &Vector3::from(b.translation),
                ))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { transforms })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, SkinError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let bones = self
            .transforms
            .iter()
            .map(|t| {
                let q = t.rotation.quaternion();
                BoneTransformJson {
                    rotation: [q.w, q.i, q.j, q.k],
                    translation: t.translation.vector.into(),
                    pivot: None,
                }
            })
            .collect();
        serde_json::to_string_pretty(&PoseJson { bones }).expect("pose serializes")
    }
}

fn relative(rest: &Pose, pose: &Pose) -> Result<Vec<Isometry3<f64>>, SkinError> {
    if rest.len() != pose.len() {
        return Err(SkinError::BoneCountMismatch {
            left: rest.len(),
            right: pose.len(),
        });
    }
    Ok(rest
        .transforms
        .iter()
        .zip(&pose.transforms)
        .map(|(r, p)| p * r.inverse())
        .collect())
}

/// Linear blend skinning: `v' = Σ_i w_i (T_i^pose ∘ (T_i^rest)^-1)(v)`.
pub fn lbs_deform(mesh: &TriangleMesh, binding: &SkinBinding, rest: &Pose, pose: &Pose) -> Result<TriangleMesh, SkinError> {
    let maps = relative(rest, pose)?;
    if binding.vertex_count() != mesh.vertices().len() {
        return Err(SkinError::VertexCountMismatch {
            binding: binding.vertex_count(),
            mesh: mesh.vertices().len(),
        });
    }
    if let Some(b) = binding.max_bone().filter(|&b| b >= maps.len()) {
        return Err(SkinError::BoneOutOfRange {
            bone: b,
            count: maps.len(),
        });
    }
    let moved = mesh
        .vertices()
        .iter()
        .zip(binding.weights())
        .map(|(v, ws)| {
            let acc = ws.iter().fold(Vector3::zeros(), |acc, &(b, w)| acc + (maps[b] * v).coords * w);
            Point3::from(acc)
        })
        .collect();
    Ok(mesh.with_vertices(moved))
}

/// Rigid per-bone deformation for a single-bone-per-vertex binding.
pub fn rigid_deform(
    mesh: &TriangleMesh,
    binding: &SegmentBinding,
    rest: &Pose,
    pose: &Pose,
) -> Result<TriangleMesh, SkinError> {
    let maps = relative(rest, pose)?;
    if binding.bone_of_vertex.len() != mesh.vertices().len() {
        return Err(SkinError::VertexCountMismatch {
            binding: binding.bone_of_vertex.len(),
            mesh: mesh.vertices().len(),
        });
    }
    if let Some(&b) = binding.bone_of_vertex.iter().find(|&&b| b >= maps.len()) {
        return Err(SkinError::BoneOutOfRange {
            bone: b,
            count: maps.len(),
        });
    }
    let moved = mesh
        .vertices()
        .iter()
        .zip(&binding.bone_of_vertex)
        .map(|(v, &b)| maps[b] * v)
        .collect();
    Ok(mesh.with_vertices(moved))
}
