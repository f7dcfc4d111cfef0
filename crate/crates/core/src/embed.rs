//! Template embedding: sphere packing on the medial surface, a graph over the
//! sphere centers, discrete embedding of a small reduced skeleton by penalty
//! minimization, margin training of the penalty weights, and continuous
//! refinement of the embedded joints.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctrlskel::{Joint, Skeleton, SkeletonError};
use crate::distfield::DistanceField;
use crate::geom::{bounding_box, cosine, OrdF64};
use crate::medial::MedialSurface;

/// Number of penalty features.
pub const FEATURE_COUNT: usize = 5;
pub const DEFAULT_BEAM: usize = 512;
/// Default minimum sphere radius, in cells.
pub const DEFAULT_MIN_RADIUS_CELLS: f64 = 2.0;
pub const LEARN_GAMMA_STARTS: usize = 64;

pub type Features = [f64; FEATURE_COUNT];

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("medial surface is empty")]
    EmptyMedial,
    #[error("sphere packing is empty; lower the minimum radius")]
    EmptyPacking,
    #[error(
        "no feasible embedding: template has {template} joints, graph has {vertices} vertices \
         and its largest connected component has {largest_component}"
    )]
    NoFeasibleEmbedding {
        template: usize,
        vertices: usize,
        largest_component: usize,
    },
    #[error("embedding is infeasible: {0}")]
    Infeasible(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("gamma must have {FEATURE_COUNT} non-negative entries, got {0:?}")]
    InvalidGamma(Vec<f64>),
    #[error("feature vectors must be non-empty, finite, non-negative and of equal length")]
    InvalidTraining,
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Point3<f64>,
    /// World units.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpherePacking {
    pub spheres: Vec<Sphere>,
}

/// Greedy packing: medial voxel centers are visited by decreasing distance
/// (ties in voxel order); a center is accepted unless it lies strictly inside
/// an already accepted sphere. Stops at the first radius below `min_radius`.
pub fn pack_spheres(dms: &MedialSurface, field: &DistanceField, min_radius: f64) -> Result<SpherePacking, EmbedError> {
    if dms.is_empty() {
        return Err(EmbedError::EmptyMedial);
    }
    let grid = field.grid();
    let cell = field.cell_size();
    let mut order: Vec<_> = dms.voxels().to_vec();
    order.sort_by(|a, b| field.dist2(*b).cmp(&field.dist2(*a)).then(a.cmp(b)));
    let mut spheres: Vec<Sphere> = Vec::new();
    for v in order {
        let radius = field.dist(v) * cell;
        if radius < min_radius {
            break;
        }
        let center = grid.center(v);
        if spheres.iter().all(|s| (center - s.center).norm() >= s.radius) {
            spheres.push(Sphere { center, radius });
        }
    }
    Ok(SpherePacking { spheres })
}

/// Undirected graph over sphere centers.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedGraph {
    positions: Vec<Point3<f64>>,
    radii: Vec<f64>,
    edges: Vec<(usize, usize)>,
    lengths: Vec<f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl EmbedGraph {
    /// Graph from explicit parts. Edges are normalized to `a < b`, sorted and
    /// deduplicated; self-loops are dropped. Lengths are center distances.
    pub fn from_parts(positions: Vec<Point3<f64>>, radii: Vec<f64>, edges: &[(usize, usize)]) -> Self {
        assert_eq!(positions.len(), radii.len(), "one radius per vertex");
        let set: BTreeSet<(usize, usize)> = edges
            .iter()
            .filter(|(a, b)| a != b)
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let lengths: Vec<f64> = edges.iter().map(|&(a, b)| (positions[a] - positions[b]).norm()).collect();
        let mut adjacency = vec![Vec::new(); positions.len()];
        for (&(a, b), &l) in edges.iter().zip(&lengths) {
            adjacency[a].push((b, l));
            adjacency[b].push((a, l));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|e| e.0);
        }
        Self {
            positions,
            radii,
            edges,
            lengths,
            adjacency,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().map(|e| e.0)
    }

    /// Connected component label per vertex, numbered in order of first vertex.
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for w in self.neighbors(u) {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn largest_component(&self) -> usize {
        let labels = self.components();
        let mut counts = vec![0usize; labels.iter().max().map_or(0, |m| m + 1)];
        for l in labels {
            counts[l] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        self.largest_component() == self.len()
    }

    /// All-pairs shortest path lengths, row-major; `INFINITY` across components.
    pub fn geodesics(&self) -> Vec<f64> {
        let n = self.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|s| {
                let mut dist = vec![f64::INFINITY; n];
                dist[s] = 0.0;
                let mut heap = BinaryHeap::new();
                heap.push((std::cmp::Reverse(OrdF64(0.0)), s));
                while let Some((std::cmp::Reverse(OrdF64(d)), u)) = heap.pop() {
                    if d > dist[u] {
                        continue;
                    }
                    for &(w, l) in &self.adjacency[u] {
                        let nd = d + l;
                        if nd < dist[w] {
                            dist[w] = nd;
                            heap.push((std::cmp::Reverse(OrdF64(nd)), w));
                        }
                    }
                }
                dist
            })
            .collect();
        rows.concat()
    }

    /// Debug dump as OBJ points and lines.
    pub fn write_obj(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = String::new();
        for p in &self.positions {
            let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "l {} {}", a + 1, b + 1);
        }
        std::fs::write(path, out)
    }
}

/// Connect two spheres when they intersect and the midpoint of their
/// centers is inside the shape.
pub fn build_graph(packing: &SpherePacking, field: &DistanceField) -> EmbedGraph {
    let s = &packing.spheres;
    let mut edges = Vec::new();
    for a in 0..s.len() {
        for b in a + 1..s.len() {
            if (s[a].center - s[b].center).norm() < s[a].radius + s[b].radius {
                let mid = Point3::from((s[a].center.coords + s[b].center.coords) / 2.0);
                if field.sample(&mid) > 0.0 {
                    edges.push((a, b));
                }
            }
        }
    }
    EmbedGraph::from_parts(
        s.iter().map(|s| s.center).collect(),
        s.iter().map(|s| s.radius).collect(),
        &edges,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub position: [f64; 3],
    #[serde(default)]
    pub extremity: bool,
    /// Joints sharing an id are mirror partners.
    #[serde(default)]
    pub symmetry: Option<u32>,
}

/// Small rest-pose skeleton embedded into the sphere graph. Joint 0 is the
/// root and parents precede children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedTemplate {
    #[serde(default)]
    pub name: String,
    pub joints: Vec<TemplateJoint>,
}

impl ReducedTemplate {
    pub fn new(name: impl Into<String>, joints: Vec<TemplateJoint>) -> Result<Self, EmbedError> {
        let t = Self {
            name: name.into(),
            joints,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: String| Err(EmbedError::InvalidTemplate(m));
        if self.joints.len() < 2 {
            return bad(format!("need at least 2 joints, got {}", self.joints.len()));
        }
        if self.joints[0].parent.is_some() {
            return bad("joint 0 must be the root".into());
        }
        for (i, j) in self.joints.iter().enumerate().skip(1) {
            match j.parent {
                Some(p) if p < i => {
                    if (self.rest(i) - self.rest(p)).norm() < 1e-9 {
                        return bad(format!("joint {i} coincides with its parent"));
                    }
                }
                _ => return bad(format!("joint {i} needs a parent among earlier joints")),
            }
        }
        let mut ids: Vec<u32> = self.joints.iter().filter_map(|j| j.symmetry).collect();
        ids.sort_unstable();
        for id in ids.chunk_by(|a, b| a == b) {
            if id.len() != 2 {
                return bad(format!("symmetry id {} must name exactly two joints", id[0]));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn rest(&self, j: usize) -> Point3<f64> {
        Point3::from(self.joints[j].position)
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.joints[j].parent
    }

    /// Rest length of the bone ending at `j` (0 for the root).
    pub fn bone_length(&self, j: usize) -> f64 {
        self.parent(j).map_or(0.0, |p| (self.rest(j) - self.rest(p)).norm())
    }

    pub fn total_length(&self) -> f64 {
        (1..self.len()).map(|j| self.bone_length(j)).sum()
    }

    /// Mirror partner of `j`, if any.
    pub fn partner(&self, j: usize) -> Option<usize> {
        let id = self.joints[j].symmetry?;
        (0..self.len()).find(|&o| o != j && self.joints[o].symmetry == Some(id))
    }

    /// Breadth-first order from the root, children in index order.
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order = vec![0];
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            order.extend((0..self.len()).filter(|&c| self.parent(c) == Some(u)));
        }
        order
    }

    pub fn from_json(text: &str) -> Result<Self, EmbedError> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template serializes")
    }

    /// Seven-joint T-posed biped standing along +y.
    pub fn biped() -> Self {
        let j = |name: &str, parent, p: [f64; 3], extremity, symmetry| TemplateJoint {
            name: name.into(),
            parent,
            position: p,
            extremity,
            symmetry,
        };
        Self::new(
            "biped",
            vec![
                j("pelvis", None, [0.0, 0.0, 0.0], false, None),
                j("chest", Some(0), [0.0, 0.5, 0.0], false, None),
                j("head", Some(1), [0.0, 0.92, 0.0], true, None),
                j("hand_l", Some(1), [-0.85, 0.5, 0.0], true, Some(1)),
                j("hand_r", Some(1), [0.85, 0.5, 0.0], true, Some(1)),
                j("foot_l", Some(0), [-0.18, -0.9, 0.0], true, Some(2)),
                j("foot_r", Some(0), [0.18, -0.9, 0.0], true, Some(2)),
            ],
        )
        .expect("built-in template is valid")
    }

    /// Nine-joint quadruped with the body along +x and up along +y.
    pub fn quadruped() -> Self {
        let j = |name: &str, parent, p: [f64; 3], extremity, symmetry| TemplateJoint {
            name: name.into(),
            parent,
            position: p,
            extremity,
            symmetry,
        };
        Self::new(
            "quadruped",
            vec![
                j("hips", None, [-0.5, 0.0, 0.0], false, None),
                j("shoulders", Some(0), [0.5, 0.0, 0.0], false, None),
                j("neck", Some(1), [0.85, 0.48, 0.0], false, None),
                j("head", Some(2), [1.12, 0.36, 0.0], true, None),
                j("tail", Some(0), [-0.98, -0.32, 0.0], true, None),
                j("front_l", Some(1), [0.5, -0.85, 0.12], true, Some(1)),
                j("front_r", Some(1), [0.5, -0.85, -0.12], true, Some(1)),
                j("hind_l", Some(0), [-0.5, -0.85, 0.12], true, Some(2)),
                j("hind_r", Some(0), [-0.5, -0.85, -0.12], true, Some(2)),
            ],
        )
        .expect("built-in template is valid")
    }

    /// Look up a built-in template by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "biped" => Some(Self::biped()),
            "quadruped" => Some(Self::quadruped()),
            _ => None,
        }
    }
}

/// Penalty weights Γ. The penalty is `Γ · b(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PenaltyModel {
    gamma: Vec<f64>,
}

impl Default for PenaltyModel {
    /// Equal weights, normalized to unit length.
    fn default() -> Self {
        let w = 1.0 / (FEATURE_COUNT as f64).sqrt();
        Self {
            gamma: vec![w; FEATURE_COUNT],
        }
    }
}

impl PenaltyModel {
    pub fn new(gamma: Vec<f64>) -> Result<Self, EmbedError> {
        if gamma.len() != FEATURE_COUNT || gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(EmbedError::InvalidGamma(gamma));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn weigh(&self, b: &Features) -> f64 {
        self.gamma.iter().zip(b).map(|(g, b)| g * b).sum()
    }

    pub fn from_json(text: &str) -> Result<Self, EmbedError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.gamma).expect("gamma serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// Graph vertex per template joint.
    pub assignment: Vec<usize>,
    pub penalty: f64,
}

/// Template quantities fitted to a graph, shared by feature evaluation and
/// the search.
///
/// The template is scaled so its bounding-box diagonal matches the graph's.
/// Every feature is a sum of non-negative per-bone, per-joint or per-pair
/// terms divided by a constant, so the penalty of a partial assignment is a
/// lower bound on the penalty of any completion.
pub struct PenaltyContext<'a> {
    template: &'a ReducedTemplate,
    graph: &'a EmbedGraph,
    geodesic: Vec<f64>,
    fit_length: Vec<f64>,
    fit_total: f64,
    rest_dir: Vec<Vector3<f64>>,
    crowd_radius: f64,
    partner: Vec<Option<usize>>,
    labels: Vec<usize>,
}

impl<'a> PenaltyContext<'a> {
    pub fn new(template: &'a ReducedTemplate, graph: &'a EmbedGraph) -> Self {
        let rest: Vec<Point3<f64>> = (0..template.len()).map(|j| template.rest(j)).collect();
        let diag = |pts: &[Point3<f64>]| bounding_box(pts).map_or(0.0, |(lo, hi)| (hi - lo).norm());
        let t_diag = diag(&rest);
        let g_diag = diag(graph.positions());
        let scale = if t_diag > 0.0 && g_diag > 0.0 { g_diag / t_diag } else { 1.0 };
        let fit_length: Vec<f64> = (0..template.len()).map(|j| template.bone_length(j) * scale).collect();
        let fit_total = fit_length.iter().sum::<f64>();
        let min_bone = fit_length[1..].iter().copied().fold(f64::INFINITY, f64::min);
        let rest_dir = (0..template.len())
            .map(|j| template.parent(j).map_or(Vector3::zeros(), |p| rest[j] - rest[p]))
            .collect();
        Self {
            template,
            graph,
            geodesic: graph.geodesics(),
            fit_length,
            fit_total,
            rest_dir,
            crowd_radius: 0.5 * min_bone,
            partner: (0..template.len()).map(|j| template.partner(j)).collect(),
            labels: graph.components(),
        }
    }

    pub fn geodesic(&self, a: usize, b: usize) -> f64 {
        self.geodesic[a * self.graph.len() + b]
    }

    /// Feature increments from placing joint `j` at vertex `v`, given the
    /// already placed joints `placed` (indexed by joint, `None` if unplaced).
    /// `None` when infeasible (shared vertex or disconnected from the parent).
    fn increment(&self, placed: &[Option<usize>], j: usize, v: usize) -> Option<Features> {
        let g = self.graph;
        if placed.contains(&Some(v)) {
            return None;
        }
        let mut b = [0.0; FEATURE_COUNT];
        if let Some(p) = self.template.parent(j) {
            let pv = placed[p].expect("parent placed before child");
            let len = self.geodesic(pv, v);
            if !len.is_finite() {
                return None;
            }
            b[0] = (len - self.fit_length[j]).abs() / self.fit_total;
            b[1] = 1.0 - cosine(&(g.positions()[v] - g.positions()[pv]), &self.rest_dir[j]);
        }
        for (c, pc) in placed.iter().enumerate() {
            if let Some(pc) = *pc {
                if self.template.parent(c) == Some(j) && !self.geodesic(v, pc).is_finite() {
                    return None;
                }
            }
        }
        if self.template.joints[j].extremity {
            let deg = g.degree(v);
            if deg > 1 {
                b[2] = (deg - 1) as f64 / deg as f64;
            }
        }
        if let Some(o) = self.partner[j] {
            if let (Some(ov), Some(op), Some(p)) = (placed[o], self.template.parent(o), self.template.parent(j)) {
                if let (Some(opv), Some(pv)) = (placed[op], placed[p]) {
                    let la = self.geodesic(pv, v);
                    let lb = self.geodesic(opv, ov);
                    b[3] = (la - lb).abs() / self.fit_total;
                }
            }
        }
        for pv in placed.iter().flatten() {
            let d = (g.positions()[v] - g.positions()[*pv]).norm();
            b[4] += (self.crowd_radius - d).max(0.0) / self.crowd_radius;
        }
        Some(b)
    }
}

fn check_assignment(
    template: &ReducedTemplate,
    graph: &EmbedGraph,
    labels: &[usize],
    assignment: &[usize],
) -> Result<(), EmbedError> {
    if assignment.len() != template.len() {
        return Err(EmbedError::Infeasible(format!(
            "{} vertices assigned to {} joints",
            assignment.len(),
            template.len()
        )));
    }
    if let Some(&v) = assignment.iter().find(|&&v| v >= graph.len()) {
        return Err(EmbedError::Infeasible(format!("vertex {v} out of range")));
    }
    let mut seen = assignment.to_vec();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(EmbedError::Infeasible("joints share a vertex".into()));
    }
    if assignment.iter().any(|&v| labels[v] != labels[assignment[0]]) {
        return Err(EmbedError::Infeasible("joints span several graph components".into()));
    }
    Ok(())
}

/// Feature vector of a complete assignment.
///
/// 1. bone length mismatch against the fitted template, over total length;
/// 2. bone direction mismatch, `1 - cos` summed over bones;
/// 3. extremity joints on branching vertices, `(deg - 1) / deg`;
/// 4. length difference of mirrored bones, over total length;
/// 5. crowding, `max(0, r - d) / r` over joint pairs, `r` half the shortest
///    fitted bone.
pub fn features(ctx: &PenaltyContext, assignment: &[usize]) -> Result<Features, EmbedError> {
    let t = ctx.template;
    let g = ctx.graph;
    check_assignment(t, g, &ctx.labels, assignment)?;
    let pos = |j: usize| g.positions()[assignment[j]];
    let mut b = [0.0; FEATURE_COUNT];
    for j in 1..t.len() {
        let p = t.parent(j).expect("non-root joint");
        let len = ctx.geodesic(assignment[p], assignment[j]);
        b[0] += (len - ctx.fit_length[j]).abs();
        b[1] += 1.0 - cosine(&(pos(j) - pos(p)), &ctx.rest_dir[j]);
    }
    b[0] /= ctx.fit_total;
    for j in 0..t.len() {
        if t.joints[j].extremity {
            let deg = g.degree(assignment[j]);
            if deg > 1 {
                b[2] += (deg - 1) as f64 / deg as f64;
            }
        }
        if let Some(o) = ctx.partner[j] {
            if o > j {
                if let (Some(pj), Some(po)) = (t.parent(j), t.parent(o)) {
                    let la = ctx.geodesic(assignment[pj], assignment[j]);
                    let lb = ctx.geodesic(assignment[po], assignment[o]);
                    b[3] += (la - lb).abs();
                }
            }
        }
        for k in j + 1..t.len() {
            let d = (pos(j) - pos(k)).norm();
            b[4] += (ctx.crowd_radius - d).max(0.0) / ctx.crowd_radius;
        }
    }
    b[3] /= ctx.fit_total;
    Ok(b)
}

/// Weighted penalty `Γ · b(v)`.
pub fn penalty(
    assignment: &[usize],
    template: &ReducedTemplate,
    graph: &EmbedGraph,
    model: &PenaltyModel,
) -> Result<f64, EmbedError> {
    let ctx = PenaltyContext::new(template, graph);
    Ok(model.weigh(&features(&ctx, assignment)?))
}

#[derive(Debug, Clone)]
struct State {
    penalty: f64,
    /// Vertices in search order.
    path: Vec<usize>,
}

fn state_cmp(a: &State, b: &State) -> Ordering {
    a.penalty.total_cmp(&b.penalty).then_with(|| a.path.cmp(&b.path))
}

/// Embed the template by best-first partial search in template BFS order.
///
/// With `beam = Some(w)` only the `w` cheapest partial embeddings survive
/// each level (ties broken by vertex indices). With `None` the search is an
/// exhaustive branch and bound and returns an optimal embedding.
pub fn embed_template(
    template: &ReducedTemplate,
    graph: &EmbedGraph,
    model: &PenaltyModel,
    beam: Option<usize>,
) -> Result<Embedding, EmbedError> {
    let infeasible = || EmbedError::NoFeasibleEmbedding {
        template: template.len(),
        vertices: graph.len(),
        largest_component: graph.largest_component(),
    };
    if graph.largest_component() < template.len() {
        return Err(infeasible());
    }
    let ctx = PenaltyContext::new(template, graph);
    let order = template.bfs_order();
    let best = match beam {
        Some(width) => beam_search(&ctx, model, &order, width.max(1)),
        None => {
            let bound = beam_search(&ctx, model, &order, 64).map(|s| s.penalty);
            branch_and_bound(&ctx, model, &order, bound)
        }
    }
    .ok_or_else(infeasible)?;
    let mut assignment = vec![0; template.len()];
    for (t, &j) in order.iter().enumerate() {
        assignment[j] = best.path[t];
    }
    let penalty = model.weigh(&features(&ctx, &assignment)?);
    Ok(Embedding { assignment, penalty })
}

fn placed_from(order: &[usize], path: &[usize], r: usize) -> Vec<Option<usize>> {
    let mut placed = vec![None; r];
    for (t, &v) in path.iter().enumerate() {
        placed[order[t]] = Some(v);
    }
    placed
}

fn beam_search(ctx: &PenaltyContext, model: &PenaltyModel, order: &[usize], width: usize) -> Option<State> {
    let n = ctx.graph.len();
    let r = order.len();
    let mut level = vec![State {
        penalty: 0.0,
        path: Vec::new(),
    }];
    for (t, &j) in order.iter().enumerate() {
        let mut next: Vec<State> = level
            .par_iter()
            .flat_map_iter(|s| {
                let placed = placed_from(order, &s.path, r);
                (0..n).filter_map(move |v| {
                    let inc = ctx.increment(&placed, j, v)?;
                    let mut path = s.path.clone();
                    path.push(v);
                    Some(State {
                        penalty: s.penalty + model.weigh(&inc),
                        path,
                    })
                })
            })
            .collect();
        if next.is_empty() {
            return None;
        }
        if next.len() > width {
            next.select_nth_unstable_by(width - 1, state_cmp);
            next.truncate(width);
        }
        next.sort_by(state_cmp);
        level = next;
        debug_assert_eq!(level[0].path.len(), t + 1);
    }
    level.into_iter().next()
}

fn branch_and_bound(ctx: &PenaltyContext, model: &PenaltyModel, order: &[usize], bound: Option<f64>) -> Option<State> {
    let n = ctx.graph.len();
    let r = order.len();
    // Branches from different roots are independent; each keeps its own
    // incumbent seeded with the heuristic bound.
    let slack = |b: f64| b + 1e-9 * b.abs().max(1.0);
    let seed = bound.map_or(f64::INFINITY, slack);
    let results: Vec<Option<State>> = (0..n)
        .into_par_iter()
        .map(|root| {
            let mut placed = vec![None; r];
            let inc = ctx.increment(&placed, order[0], root)?;
            placed[order[0]] = Some(root);
            let mut best: Option<State> = None;
            let mut limit = seed;
            let mut path = vec![root];
            dfs(ctx, model, order, &mut placed, &mut path, model.weigh(&inc), &mut limit, &mut best);
            best
        })
        .collect();
    results.into_iter().flatten().min_by(state_cmp)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    ctx: &PenaltyContext,
    model: &PenaltyModel,
    order: &[usize],
    placed: &mut [Option<usize>],
    path: &mut Vec<usize>,
    cost: f64,
    limit: &mut f64,
    best: &mut Option<State>,
) {
    if cost > *limit {
        return;
    }
    let t = path.len();
    if t == order.len() {
        let better = best.as_ref().is_none_or(|b| cost < b.penalty);
        if better {
            *limit = cost;
            *best = Some(State {
                penalty: cost,
                path: path.clone(),
            });
        }
        return;
    }
    let j = order[t];
    for v in 0..ctx.graph.len() {
        if let Some(inc) = ctx.increment(placed, j, v) {
            let c = cost + model.weigh(&inc);
            if c > *limit {
                continue;
            }
            placed[j] = Some(v);
            path.push(v);
            dfs(ctx, model, order, placed, path, c, limit, best);
            path.pop();
            placed[j] = None;
        }
    }
}

/// Result of margin training.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaFit {
    pub gamma: Vec<f64>,
    pub margin: f64,
    /// Good and bad sets coincide, so every Γ has zero margin.
    pub degenerate: bool,
}

/// `min_i Γ·q_i - min_j Γ·p_j`: how much cheaper the best good embedding is
/// than the best bad one.
pub fn margin(gamma: &[f64], good: &[Vec<f64>], bad: &[Vec<f64>]) -> f64 {
    let dot = |x: &Vec<f64>| gamma.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let best_bad = bad.iter().map(dot).fold(f64::INFINITY, f64::min);
    let best_good = good.iter().map(dot).fold(f64::INFINITY, f64::min);
    best_bad - best_good
}

/// Project onto the non-negative part of the unit sphere.
fn project(v: &[f64]) -> Option<Vec<f64>> {
    let clamped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let n = clamped.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-300).then(|| clamped.iter().map(|x| x / n).collect())
}

/// Maximize the margin over non-negative unit Γ by multi-start local search.
/// Starts are the coordinate axes, the uniform vector, and
/// [`LEARN_GAMMA_STARTS`] random non-negative unit vectors drawn from `seed`.
pub fn learn_gamma(good: &[Vec<f64>], bad: &[Vec<f64>], seed: u64) -> Result<GammaFit, EmbedError> {
    let k = good.first().map_or(0, Vec::len);
    let valid = |s: &[Vec<f64>]| {
        !s.is_empty() && s.iter().all(|v| v.len() == k && v.iter().all(|x| x.is_finite() && *x >= 0.0))
    };
    if k == 0 || !valid(good) || !valid(bad) {
        return Err(EmbedError::InvalidTraining);
    }
    let uniform = vec![1.0 / (k as f64).sqrt(); k];
    let canon = |s: &[Vec<f64>]| {
        let mut c: Vec<Vec<OrdF64>> = s.iter().map(|v| v.iter().map(|&x| OrdF64(x)).collect()).collect();
        c.sort();
        c.dedup();
        c
    };
    if canon(good) == canon(bad) {
        log::warn!("good and bad feature sets coincide; every weighting has zero margin");
        return Ok(GammaFit {
            gamma: uniform,
            margin: 0.0,
            degenerate: true,
        });
    }
    let mut starts: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    starts.push(uniform);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..LEARN_GAMMA_STARTS {
        let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        starts.extend(project(&v));
    }
    let fits: Vec<(f64, Vec<f64>)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            climb(s.clone(), good, bad, &mut rng)
        })
        .collect();
    let (margin_value, gamma) = fits
        .into_iter()
        .fold(None::<(f64, Vec<f64>)>, |best, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        })
        .expect("at least one start");
    Ok(GammaFit {
        gamma,
        margin: margin_value,
        degenerate: false,
    })
}

fn climb(start: Vec<f64>, good: &[Vec<f64>], bad: &[Vec<f64>], rng: &mut ChaCha8Rng) -> (f64, Vec<f64>) {
    let k = start.len();
    let mut x = start;
    let mut fx = margin(&x, good, bad);
    let mut step = 0.5;
    while step > 1e-10 {
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for i in 0..k {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            dirs.push(e.clone());
            e[i] = -1.0;
            dirs.push(e);
            for j in 0..k {
                if i != j {
                    let mut d = vec![0.0; k];
                    d[i] = 1.0;
                    d[j] = -1.0;
                    dirs.push(d);
                }
            }
        }
        for _ in 0..2 * k {
            dirs.push((0..k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect());
        }
        let mut improved = false;
        for d in &dirs {
            let cand: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + step * b).collect();
            if let Some(y) = project(&cand) {
                let fy = margin(&y, good, bad);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (fx, x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    /// Weight of the clearance reward relative to the length term.
    pub clearance_weight: f64,
    /// Outer passes over the step schedule.
    pub max_passes: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            clearance_weight: 0.5,
            max_passes: 20,
        }
    }
}

/// Ratio of the embedded skeleton's total bone length to the template's.
pub fn embedded_scale(positions: &[Point3<f64>], template: &ReducedTemplate) -> f64 {
    let total: f64 = (1..template.len())
        .map(|j| (positions[j] - positions[template.parent(j).expect("non-root")]).norm())
        .sum();
    total / template.total_length()
}

/// Move joints continuously, one axis step at a time, to keep bone lengths
/// at `scale` times the template's while pulling joints toward the medial
/// core. Moves that reach the surface are rejected.
pub fn refine_positions(
    positions: &[Point3<f64>],
    template: &ReducedTemplate,
    field: &DistanceField,
    scale: f64,
    params: &RefineParams,
) -> Vec<Point3<f64>> {
    let mut pos = positions.to_vec();
    let r = template.len();
    let cell = field.cell_size();
    let target: Vec<f64> = (0..r).map(|j| template.bone_length(j) * scale).collect();
    let children: Vec<Vec<usize>> = (0..r)
        .map(|j| (0..r).filter(|&c| template.parent(c) == Some(j)).collect())
        .collect();
    let radius_ref = field.max_dist() * cell;
    let energy = |pos: &[Point3<f64>], j: usize, p: &Point3<f64>| -> Option<f64> {
        let q = field.sample(p);
        if q <= 0.0 {
            return None;
        }
        let mut e = 0.0;
        let mut bone = |a: &Point3<f64>, t: f64| {
            let ratio = (p - a).norm() / t;
            e += (ratio - 1.0) * (ratio - 1.0);
        };
        if let Some(par) = template.parent(j) {
            bone(&pos[par], target[j]);
        }
        for &c in &children[j] {
            bone(&pos[c], target[c]);
        }
        Some(e - params.clearance_weight * q / radius_ref)
    };
    let steps: Vec<f64> = (0..5).map(|s| cell / f64::from(1u32 << s)).collect();
    for _ in 0..params.max_passes {
        let mut moved = false;
        for &step in &steps {
            loop {
                let mut any = false;
                for j in 0..r {
                    let Some(mut e) = energy(&pos, j, &pos[j]) else {
                        continue;
                    };
                    for axis in 0..3 {
                        for sign in [1.0, -1.0] {
                            let mut cand = pos[j];
                            cand[axis] += sign * step;
                            if let Some(ec) = energy(&pos, j, &cand) {
                                let distinct = (0..r).all(|o| o == j || (cand - pos[o]).norm() > 1e-9);
                                if ec < e - 1e-15 && distinct {
                                    pos[j] = cand;
                                    e = ec;
                                    any = true;
                                }
                            }
                        }
                    }
                }
                if !any {
                    break;
                }
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    pos
}

/// Refine an embedding and return it as a skeleton with the template's
/// joint names and hierarchy.
pub fn refine_embedding(
    embedding: &Embedding,
    graph: &EmbedGraph,
    field: &DistanceField,
    template: &ReducedTemplate,
    params: &RefineParams,
) -> Result<Skeleton, EmbedError> {
    check_assignment(template, graph, &graph.components(), &embedding.assignment)?;
    let start: Vec<Point3<f64>> = embedding.assignment.iter().map(|&v| graph.positions()[v]).collect();
    let scale = embedded_scale(&start, template);
    let pos = refine_positions(&start, template, field, scale, params);
    let joints = template
        .joints
        .iter()
        .zip(&pos)
        .map(|(t, p)| Joint {
            name: t.name.clone(),
            parent: t.parent,
            position: p.coords.into(),
        })
        .collect();
    Ok(Skeleton::new(joints)?)
}
