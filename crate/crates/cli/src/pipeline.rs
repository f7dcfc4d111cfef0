//! End-to-end rigging pipelines.

use std::path::{Path, PathBuf};
use std::time::Instant;

use autorig_core::ctrlskel::{self, Skeleton, SegmentBinding};
use autorig_core::distfield::{compute_edm, DistanceField};
use autorig_core::embed::{
    self, build_graph, embed_template, pack_spheres, refine_embedding, EmbedError, PenaltyModel, ReducedTemplate,
    RefineParams,
};
use autorig_core::medial::extract_dms;
use autorig_core::meshio::{load_mesh, write_mesh, TriangleMesh};
use autorig_core::pathskel::{
    build_path_tree, find_extreme_points, find_heart, smooth_chain, write_chains_obj, PathTreeParams,
};
use autorig_core::skinning::{compute_heat_weights, lbs_deform, rigid_deform, HeatParams, Pose, SkinBinding};
use autorig_core::voxelgrid::{voxelize, VoxelGrid};
use serde::Deserialize;
use thiserror::Error;

use crate::config::{PipelineConfig, TemplateSource};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("stage `embed_template` failed: {0}")]
    Infeasible(EmbedError),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Stage { .. } => 1,
            Self::Infeasible(_) => 2,
        }
    }
}

fn stage<T, E: std::fmt::Display>(name: &'static str, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::Stage {
        stage: name,
        message: e.to_string(),
    })
}

/// Files written by a run. Dropping an uncommitted set removes them, so a
/// failed run leaves no partial artifacts behind.
struct Artifacts {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            written: Vec::new(),
            committed: false,
        }
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<(), PipelineError> {
        stage("write", std::fs::write(&path, contents))?;
        self.written.push(path);
        Ok(())
    }

    fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Common front end: mesh → voxels → distance field.
struct Volume {
    mesh: TriangleMesh,
    grid: VoxelGrid,
    field: DistanceField,
}

fn timed<T>(name: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    log::info!("{name}: {:.3}s", t.elapsed().as_secs_f64());
    out
}

fn front_end(config: &PipelineConfig, mesh: TriangleMesh) -> Result<Volume, PipelineError> {
    let grid = stage("voxelize", timed("voxelize", || voxelize(&mesh, config.resolution)))?;
    let field = stage("compute_edm", timed("compute_edm", || compute_edm(&grid)))?;
    Ok(Volume { mesh, grid, field })
}

fn prepare_out(config: &PipelineConfig) -> Result<(), PipelineError> {
    stage("write", std::fs::create_dir_all(&config.out))
}

fn dump_volume(v: &Volume, config: &PipelineConfig, art: &mut Artifacts) -> Result<(), PipelineError> {
    let vox = config.out.join("voxels.txt");
    stage("write", v.grid.write_dump(&vox))?;
    art.record(vox);
    let edm = config.out.join("edm.txt");
    stage("write", v.field.write_dump(&edm))?;
    art.record(edm);
    Ok(())
}

/// Result of the path-tree pipeline.
pub struct Method1Output {
    pub skeleton: Skeleton,
    pub binding: SegmentBinding,
    pub chain_count: usize,
    pub files: Vec<PathBuf>,
}

pub fn run_method1(config: &PipelineConfig, mesh_path: &Path) -> Result<Method1Output, PipelineError> {
    let mesh = stage("load_mesh", load_mesh(mesh_path))?;
    run_method1_mesh(config, mesh)
}

pub fn run_method1_mesh(config: &PipelineConfig, mesh: TriangleMesh) -> Result<Method1Output, PipelineError> {
    prepare_out(config)?;
    let mut art = Artifacts::new();
    let vol = front_end(config, mesh)?;
    let field = &vol.field;
    let dms = stage("extract_dms", extract_dms(field, config.dms_min_dist))?;
    let heart = stage("find_heart", find_heart(&dms, field))?;
    let extremes = find_extreme_points(&dms, field, &heart);
    let params = PathTreeParams {
        accept_threshold: config.extreme_threshold,
        cost: config.path_cost,
    };
    let tree = timed("build_path_tree", || build_path_tree(&dms, field, &heart, &extremes, &params));
    for w in &tree.warnings {
        log::warn!("{w}");
    }
    if tree.chains.is_empty() {
        return Err(PipelineError::Stage {
            stage: "build_path_tree",
            message: "no extreme point produced a chain".into(),
        });
    }
    let chains = (0..tree.chains.len())
        .map(|c| smooth_chain(&tree, c, &vol.grid, config.smoothing_iterations))
        .collect::<Result<Vec<_>, _>>();
    let chains = stage("smooth_chain", chains)?;
    let max_error = config.max_error.unwrap_or(ctrlskel::DEFAULT_MAX_ERROR_CELLS * field.cell_size());
    let splits: Vec<Vec<usize>> = chains
        .iter()
        .map(|c| ctrlskel::split_chain(&c.points, config.max_segments, max_error))
        .collect();
    let (splits, attachments) = ctrlskel::resolve_attachments(&tree, field, &chains, &splits);
    let heart_pos = vol.grid.voxel_to_world(heart.voxel).expect("heart lies in the grid");
    let built = stage(
        "build_skeleton",
        ctrlskel::build_skeleton(heart_pos, &chains, &attachments, &splits),
    )?;
    let binding = ctrlskel::bind_segments(&vol.mesh, &built.skeleton);

    art.write(config.out.join("skeleton.json"), &built.skeleton.to_json())?;
    art.write(config.out.join("binding.json"), &binding.to_json())?;
    if config.dump_debug {
        dump_volume(&vol, config, &mut art)?;
        let p = config.out.join("dms.txt");
        stage("write", dms.write_dump(&p))?;
        art.record(p);
        let p = config.out.join("chains.obj");
        stage("write", write_chains_obj(&chains, &p))?;
        art.record(p);
    }
    Ok(Method1Output {
        skeleton: built.skeleton,
        binding,
        chain_count: tree.chains.len(),
        files: art.commit(),
    })
}

pub fn load_template(source: &TemplateSource) -> Result<ReducedTemplate, PipelineError> {
    match source {
        TemplateSource::Builtin(name) => ReducedTemplate::builtin(name).ok_or_else(|| PipelineError::Stage {
            stage: "load_template",
            message: format!("no built-in template named `{name}`"),
        }),
        TemplateSource::File(p) => stage("load_template", ReducedTemplate::read(p)),
    }
}

/// Result of the template-embedding pipeline.
pub struct Method2Output {
    pub skeleton: Skeleton,
    pub weights: SkinBinding,
    pub assignment: Vec<usize>,
    pub graph_size: usize,
    pub files: Vec<PathBuf>,
}

pub fn run_method2(config: &PipelineConfig, mesh_path: &Path) -> Result<Method2Output, PipelineError> {
    let mesh = stage("load_mesh", load_mesh(mesh_path))?;
    run_method2_mesh(config, mesh)
}

pub fn run_method2_mesh(config: &PipelineConfig, mesh: TriangleMesh) -> Result<Method2Output, PipelineError> {
    let template = load_template(&config.template)?;
    let model = match &config.gamma {
        Some(p) => stage("load_gamma", PenaltyModel::read(p))?,
        None => PenaltyModel::default(),
    };
    prepare_out(config)?;
    let mut art = Artifacts::new();
    let vol = front_end(config, mesh)?;
    let field = &vol.field;
    let dms = stage("extract_dms", extract_dms(field, config.dms_min_dist))?;
    let min_radius = config
        .min_radius
        .unwrap_or(embed::DEFAULT_MIN_RADIUS_CELLS * field.cell_size());
    let packing = stage("pack_spheres", pack_spheres(&dms, field, min_radius))?;
    let graph = build_graph(&packing, field);
    log::info!("embedding graph: {} vertices, {} edges", graph.len(), graph.edges().len());
    let embedding = timed("embed_template", || embed_template(&template, &graph, &model, config.beam))
        .map_err(|e| match e {
            EmbedError::NoFeasibleEmbedding { .. } => PipelineError::Infeasible(e),
            other => PipelineError::Stage {
                stage: "embed_template",
                message: other.to_string(),
            },
        })?;
    let skeleton = stage(
        "refine_embedding",
        refine_embedding(&embedding, &graph, field, &template, &RefineParams::default()),
    )?;
    let heat = HeatParams {
        max_influences: config.max_influences,
        ..HeatParams::default()
    };
    let weights = stage(
        "compute_heat_weights",
        timed("compute_heat_weights", || compute_heat_weights(&vol.mesh, &skeleton, field, &heat)),
    )?
    .binding;

    art.write(config.out.join("skeleton.json"), &skeleton.to_json())?;
    art.write(config.out.join("weights.json"), &weights.to_json())?;
    if config.dump_debug {
        dump_volume(&vol, config, &mut art)?;
        let p = config.out.join("dms.txt");
        stage("write", dms.write_dump(&p))?;
        art.record(p);
        let p = config.out.join("graph.obj");
        stage("write", graph.write_obj(&p))?;
        art.record(p);
        let assignment = serde_json::to_string(&embedding.assignment).expect("serializes");
        art.write(config.out.join("embedding.json"), &assignment)?;
    }
    Ok(Method2Output {
        skeleton,
        weights,
        assignment: embedding.assignment,
        graph_size: graph.len(),
        files: art.commit(),
    })
}

/// How a mesh is attached to its skeleton.
pub enum Attachment {
    /// Blended weights from the embedding pipeline.
    Weights(SkinBinding),
    /// One bone per vertex from the path-tree pipeline.
    Rigid(SegmentBinding),
}

/// Pose a bound mesh. The rest pose is the identity for every bone.
pub fn pose_mesh(
    mesh: &TriangleMesh,
    skeleton: &Skeleton,
    attachment: &Attachment,
    pose: &Pose,
) -> Result<TriangleMesh, PipelineError> {
    if pose.len() != skeleton.bone_count() {
        return Err(PipelineError::Stage {
            stage: "pose",
            message: format!(
                "pose has {} bone transforms but the skeleton has {} bones",
                pose.len(),
                skeleton.bone_count()
            ),
        });
    }
    let rest = Pose::identity(pose.len());
    match attachment {
        Attachment::Weights(w) => stage("pose", lbs_deform(mesh, w, &rest, pose)),
        Attachment::Rigid(b) => stage("pose", rigid_deform(mesh, b, &rest, pose)),
    }
}

pub fn run_pose(
    mesh_path: &Path,
    skeleton_path: &Path,
    attachment: AttachmentPath<'_>,
    pose_path: &Path,
    out: &Path,
) -> Result<(), PipelineError> {
    let mesh = stage("load_mesh", load_mesh(mesh_path))?;
    let skeleton = stage("load_skeleton", Skeleton::read(skeleton_path))?;
    let read = |p: &Path| stage("load_binding", std::fs::read_to_string(p));
    let attachment = match attachment {
        AttachmentPath::Weights(p) => Attachment::Weights(stage("load_binding", SkinBinding::from_json(&read(p)?))?),
        AttachmentPath::Binding(p) => {
            let bones: Vec<usize> = stage("load_binding", serde_json::from_str(&read(p)?))?;
            Attachment::Rigid(SegmentBinding { bone_of_vertex: bones })
        }
    };
    let pose = stage("load_pose", Pose::read(pose_path))?;
    let posed = pose_mesh(&mesh, &skeleton, &attachment, &pose)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        stage("write", std::fs::create_dir_all(dir))?;
    }
    stage("write", write_mesh(&posed, out))
}

pub enum AttachmentPath<'a> {
    Weights(&'a Path),
    Binding(&'a Path),
}

#[derive(Deserialize)]
struct Training {
    good: Vec<Vec<f64>>,
    bad: Vec<Vec<f64>>,
}

/// Train penalty weights from `{"good": [[..]], "bad": [[..]]}` feature
/// vectors and write them as a JSON array. Returns the fit.
pub fn run_learn_gamma(training: &Path, seed: u64, out: &Path) -> Result<embed::GammaFit, PipelineError> {
    let text = stage("load_training", std::fs::read_to_string(training))?;
    let t: Training = stage("load_training", serde_json::from_str(&text))?;
    let fit = stage("learn_gamma", embed::learn_gamma(&t.good, &t.bad, seed))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        stage("write", std::fs::create_dir_all(dir))?;
    }
    stage("write", std::fs::write(out, serde_json::to_string(&fit.gamma).expect("serializes")))?;
    Ok(fit)
}
