//! Discrete medial surface: ridge voxels of the distance map.
//!
//! A solid voxel belongs to the medial surface when its distance is at least
//! `min_dist` and it is a weak local maximum along at least one coordinate
//! axis, i.e. `dist(v) >= dist(v - e)` and `dist(v) >= dist(v + e)`.
//! Comparisons run on exact integer squared distances.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::distfield::DistanceField;
use crate::voxelgrid::Voxel;

pub const DEFAULT_MIN_DIST: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MedialError {
    #[error("no voxel qualifies for the medial surface (min_dist {min_dist}); resolution is likely too low")]
    Empty { min_dist: f64 },
    #[error("min_dist must be at least 1, got {0}")]
    InvalidMinDist(f64),
    #[error("voxel ({}, {}, {}) is not solid", .0.i, .0.j, .0.k)]
    NotSolid(Voxel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedialSurface {
    voxels: Vec<Voxel>,
    mask: Vec<bool>,
    min_dist: f64,
}

impl MedialSurface {
    /// Build a medial set from an explicit voxel list (used for synthetic
    /// path-tree fixtures). Every voxel must be solid in `field`.
    pub fn from_voxels(field: &DistanceField, voxels: impl IntoIterator<Item = Voxel>) -> Result<Self, MedialError> {
        let grid = field.grid();
        let mut mask = vec![false; grid.len()];
        let mut list = Vec::new();
        for v in voxels {
            if !grid.is_solid(v) {
                return Err(MedialError::NotSolid(v));
            }
            let idx = grid.index(v);
            if !mask[idx] {
                mask[idx] = true;
                list.push(v);
            }
        }
        list.sort_unstable();
        Ok(Self {
            voxels: list,
            mask,
            min_dist: 1.0,
        })
    }

    /// Medial voxels in lexicographic `(i, j, k)` order.
    pub fn voxels(&self) -> &[Voxel] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Membership by flat grid index.
    #[inline]
    pub fn contains_index(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn min_dist(&self) -> f64 {
        self.min_dist
    }

    pub fn write_dump(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = String::new();
        for v in &self.voxels {
            let _ = writeln!(out, "{} {} {}", v.i, v.j, v.k);
        }
        std::fs::write(path, out)
    }
}

/// The ridge predicate for one voxel.
pub fn is_medial(field: &DistanceField, v: Voxel, min_dist: f64) -> bool {
    let grid = field.grid();
    if !grid.is_solid(v) || field.dist(v) < min_dist {
        return false;
    }
    let d = field.dist2(v);
    const AXES: [[i64; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    AXES.iter().any(|e| {
        let neg = [-e[0], -e[1], -e[2]];
        let below = grid.offset(v, neg).map_or(0, |n| field.dist2(n));
        let above = grid.offset(v, *e).map_or(0, |n| field.dist2(n));
        d >= below && d >= above
    })
}

pub fn extract_dms(field: &DistanceField, min_dist: f64) -> Result<MedialSurface, MedialError> {
    if min_dist.is_nan() || min_dist < 1.0 {
        return Err(MedialError::InvalidMinDist(min_dist));
    }
    let grid = field.grid();
    let mut mask = vec![false; grid.len()];
    let mut voxels = Vec::new();
    for v in grid.solid_voxels() {
        if is_medial(field, v, min_dist) {
            mask[grid.index(v)] = true;
            voxels.push(v);
        }
    }
    if voxels.is_empty() {
        return Err(MedialError::Empty { min_dist });
    }
    voxels.sort_unstable();
    Ok(MedialSurface {
        voxels,
        mask,
        min_dist,
    })
}
