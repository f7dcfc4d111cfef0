//! Control skeleton fitting and rigid segment binding.
//!
//! Each smoothed chain is approximated by a polyline through a subset of its
//! points. Starting from the single segment between the chain's endpoints,
//! the segment with the largest point deviation is split at the interior
//! point that minimizes the worst deviation of the two halves, until the
//! segment budget is spent or every point is within tolerance.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distfield::DistanceField;
use crate::geom::point_segment_distance;
use crate::meshio::TriangleMesh;
use crate::pathskel::{Attachment, PathTree, SmoothChain};

/// Minimum separation between a joint and its parent.
pub const MIN_BONE_LENGTH: f64 = 1e-9;
pub const DEFAULT_MAX_SEGMENTS: usize = 4;
/// Default split tolerance, in cells.
pub const DEFAULT_MAX_ERROR_CELLS: f64 = 1.5;

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("skeleton has no joints")]
    Empty,
    #[error("joint 0 must be the only root")]
    RootCount,
    #[error("joint {joint} has parent {parent}, which is not an earlier joint")]
    ParentOrder { joint: usize, parent: usize },
    #[error("bone ending at joint {joint} has zero length")]
    ZeroLengthBone { joint: usize },
    #[error("chain {chain} attaches to chain {target} at index {index}, which is not a joint")]
    InconsistentAttachment { chain: usize, target: usize, index: usize },
    #[error("{0} chains but {1} split lists")]
    SplitCount(usize, usize),
    #[error("skeleton JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub position: [f64; 3],
}

impl Joint {
    pub fn point(&self) -> Point3<f64> {
        Point3::from(self.position)
    }
}

/// A bone runs from a joint's parent to the joint. Bone `b` ends at joint `b + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bone {
    pub parent: usize,
    pub child: usize,
}

/// Joint hierarchy, topologically sorted with the root at index 0. Every
/// joint carries three rotational degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    joints: Vec<Joint>,
}

impl Skeleton {
    pub const DOF_PER_JOINT: usize = 3;

    pub fn new(joints: Vec<Joint>) -> Result<Self, SkeletonError> {
        if joints.is_empty() {
            return Err(SkeletonError::Empty);
        }
        if joints[0].parent.is_some() {
            return Err(SkeletonError::RootCount);
        }
        for (i, j) in joints.iter().enumerate().skip(1) {
            let Some(p) = j.parent else {
                return Err(SkeletonError::RootCount);
            };
            if p >= i {
                return Err(SkeletonError::ParentOrder { joint: i, parent: p });
            }
            if (j.point() - joints[p].point()).norm() < MIN_BONE_LENGTH {
                return Err(SkeletonError::ZeroLengthBone { joint: i });
            }
        }
        Ok(Self { joints })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn bone_count(&self) -> usize {
        self.joints.len() - 1
    }

    pub fn bones(&self) -> Vec<Bone> {
        self.joints
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, j)| Bone {
                parent: j.parent.expect("non-root joint"),
                child: i,
            })
            .collect()
    }

    /// Endpoints of bone `b` (parent joint, child joint).
    pub fn bone_segment(&self, b: usize) -> (Point3<f64>, Point3<f64>) {
        let child = &self.joints[b + 1];
        let parent = &self.joints[child.parent.expect("non-root joint")];
        (parent.point(), child.point())
    }

    /// Number of edges from the root to `joint`.
    pub fn depth(&self, joint: usize) -> usize {
        let mut d = 0;
        let mut cur = joint;
        while let Some(p) = self.joints[cur].parent {
            cur = p;
            d += 1;
        }
        d
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SkeletonError> {
        #[derive(Deserialize)]
        struct Raw {
            joints: Vec<Joint>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        Self::new(raw.joints)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SkeletonError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, SkeletonError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Largest distance from the points strictly between `a` and `b` to the
/// segment joining them.
pub fn segment_deviation(points: &[Point3<f64>], a: usize, b: usize) -> f64 {
    points[a + 1..b]
        .iter()
        .map(|p| point_segment_distance(p, &points[a], &points[b]))
        .fold(0.0, f64::max)
}

/// One greedy step: the segment that was split, where, and the worst
/// deviation of its two halves afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitStep {
    pub segment: (usize, usize),
    pub split: usize,
    pub error_after: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitResult {
    /// Sorted interior split indices, including forced ones.
    pub splits: Vec<usize>,
    pub steps: Vec<SplitStep>,
    /// Worst deviation over all final segments.
    pub max_error: f64,
}

/// Greedy recursive splitting; returns sorted split indices.
pub fn split_chain(points: &[Point3<f64>], max_segments: usize, max_error: f64) -> Vec<usize> {
    split_chain_with(points, &[], max_segments, max_error).splits
}

/// Greedy splitting starting from a partition at `forced` indices. Stops
/// early if the best split of the worst segment would raise its error. The
/// budget `max_segments` counts segments produced by greedy steps on top of
/// the forced partition, so with no forced splits it is the total segment
/// count.
pub fn split_chain_with(
    points: &[Point3<f64>],
    forced: &[usize],
    max_segments: usize,
    max_error: f64,
) -> SplitResult {
    let n = points.len();
    if n < 2 {
        return SplitResult::default();
    }
    let mut cuts: BTreeSet<usize> = forced.iter().copied().filter(|&i| i > 0 && i < n - 1).collect();
    let budget = cuts.len() + max_segments.max(1);
    let mut steps = Vec::new();
    loop {
        let mut bounds: Vec<usize> = vec![0];
        bounds.extend(cuts.iter().copied());
        bounds.push(n - 1);
        let segments: Vec<(usize, usize)> = bounds.windows(2).map(|w| (w[0], w[1])).collect();
        let (worst, worst_err) = segments
            .iter()
            .map(|&(a, b)| ((a, b), segment_deviation(points, a, b)))
            .fold(((0, 0), -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if segments.len() >= budget || worst_err <= max_error || worst.1 - worst.0 < 2 {
            let max_err = worst_err.max(0.0);
            return SplitResult {
                splits: cuts.into_iter().collect(),
                steps,
                max_error: max_err,
            };
        }
        let (a, b) = worst;
        let mut best = (a + 1, f64::INFINITY);
        for m in a + 1..b {
            let e = segment_deviation(points, a, m).max(segment_deviation(points, m, b));
            if e < best.1 {
                best = (m, e);
            }
        }
        if best.1 > worst_err {
            // every split of the worst segment would raise the maximum
            return SplitResult {
                splits: cuts.into_iter().collect(),
                steps,
                max_error: worst_err,
            };
        }
        cuts.insert(best.0);
        steps.push(SplitStep {
            segment: (a, b),
            split: best.0,
            error_after: best.1,
        });
    }
}

/// Snap each chain attachment to a joint of its parent chain when one lies
/// within the local radius (the distance value at the attachment voxel);
/// otherwise add the attachment point as an extra split of the parent.
/// Returns the updated per-chain splits and attachments.
pub fn resolve_attachments(
    tree: &PathTree,
    field: &DistanceField,
    chains: &[SmoothChain],
    splits: &[Vec<usize>],
) -> (Vec<Vec<usize>>, Vec<Attachment>) {
    let mut splits: Vec<Vec<usize>> = splits.to_vec();
    let mut attachments = Vec::with_capacity(tree.chains.len());
    for c in &tree.chains {
        let resolved = match c.attach {
            Attachment::Root => Attachment::Root,
            Attachment::Chain { chain: p, index } => {
                let pts = &chains[p].points;
                let last = pts.len() - 1;
                let radius = field.dist(*c.voxels.last().expect("chain non-empty")) * field.cell_size();
                let candidates = std::iter::once(0)
                    .chain(splits[p].iter().copied())
                    .chain(std::iter::once(last));
                let nearest = candidates
                    .map(|j| (j, (pts[j] - pts[index]).norm()))
                    .fold((index, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
                if nearest.1 <= radius {
                    Attachment::Chain {
                        chain: p,
                        index: nearest.0,
                    }
                } else {
                    if let Err(pos) = splits[p].binary_search(&index) {
                        splits[p].insert(pos, index);
                    }
                    Attachment::Chain { chain: p, index }
                }
            }
        };
        attachments.push(resolved);
    }
    (splits, attachments)
}

/// Skeleton plus, per chain, the joint index at each chain position that
/// carries a joint.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSkeleton {
    pub skeleton: Skeleton,
    /// `chain_joints[c]` lists `(chain index, joint)` pairs.
    pub chain_joints: Vec<Vec<(usize, usize)>>,
}

/// Assemble the control skeleton. The root sits at `heart`; each chain adds
/// joints at its split points and at its tip, parented from the attachment
/// end toward the tip.
pub fn build_skeleton(
    heart: Point3<f64>,
    chains: &[SmoothChain],
    attachments: &[Attachment],
    splits: &[Vec<usize>],
) -> Result<ControlSkeleton, SkeletonError> {
    if chains.len() != splits.len() || chains.len() != attachments.len() {
        return Err(SkeletonError::SplitCount(chains.len(), splits.len()));
    }
    let mut joints = vec![Joint {
        name: "root".into(),
        parent: None,
        position: heart.coords.into(),
    }];
    let mut chain_joints: Vec<Vec<(usize, usize)>> = Vec::with_capacity(chains.len());
    for (c, chain) in chains.iter().enumerate() {
        let last = chain.points.len() - 1;
        let attach_joint = match attachments[c] {
            Attachment::Root => 0,
            Attachment::Chain { chain: p, index } => {
                let found = (p < c)
                    .then(|| chain_joints[p].iter().find(|(i, _)| *i == index))
                    .flatten();
                match found {
                    Some(&(_, j)) => j,
                    None => {
                        return Err(SkeletonError::InconsistentAttachment {
                            chain: c,
                            target: p,
                            index,
                        })
                    }
                }
            }
        };
        let mut map = vec![(last, attach_joint)];
        let mut parent = attach_joint;
        let mut positions: Vec<usize> = splits[c].iter().copied().filter(|&i| i > 0 && i < last).collect();
        positions.sort_unstable();
        positions.dedup();
        positions.reverse();
        positions.push(0);
        for (n, &i) in positions.iter().enumerate() {
            let name = if i == 0 {
                format!("chain{c}_tip")
            } else {
                format!("chain{c}_{n}")
            };
            joints.push(Joint {
                name,
                parent: Some(parent),
                position: chain.points[i].coords.into(),
            });
            parent = joints.len() - 1;
            map.push((i, parent));
        }
        chain_joints.push(map);
    }
    Ok(ControlSkeleton {
        skeleton: Skeleton::new(joints)?,
        chain_joints,
    })
}

/// Rigid binding: vertex → bone index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentBinding {
    pub bone_of_vertex: Vec<usize>,
}

impl SegmentBinding {
    /// Vertex sets per bone.
    pub fn vertex_sets(&self, bone_count: usize) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); bone_count];
        for (v, &b) in self.bone_of_vertex.iter().enumerate() {
            sets[b].push(v);
        }
        sets
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("binding serializes")
    }
}

/// Assign every vertex to the bone whose segment is nearest. Ties within a
/// relative 1e-12 go to the bone nearer the root, then the lower index.
pub fn bind_segments(mesh: &TriangleMesh, skeleton: &Skeleton) -> SegmentBinding {
    let segs: Vec<(Point3<f64>, Point3<f64>, usize)> = (0..skeleton.bone_count())
        .map(|b| {
            let (a, c) = skeleton.bone_segment(b);
            (a, c, skeleton.depth(b + 1))
        })
        .collect();
    let bone_of_vertex = mesh
        .vertices()
        .iter()
        .map(|p| {
            let mut best: Option<(f64, usize, usize)> = None;
            for (b, (a, c, depth)) in segs.iter().enumerate() {
                let d = point_segment_distance(p, a, c);
                best = match best {
                    None => Some((d, *depth, b)),
                    Some((bd, bdepth, bb)) => {
                        let tol = 1e-12 * bd.max(d).max(1.0);
                        if d < bd - tol || ((d - bd).abs() <= tol && *depth < bdepth) {
                            Some((d, *depth, b))
                        } else {
                            Some((bd, bdepth, bb))
                        }
                    }
                };
            }
            best.map_or(0, |(_, _, b)| b)
        })
        .collect();
    SegmentBinding { bone_of_vertex }
}
