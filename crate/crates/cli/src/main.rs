use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autorig_cli::config::{ConfigError, Method, PipelineConfig};
use autorig_cli::pipeline::{self, AttachmentPath, PipelineError};
use clap::{Args, Parser, Subcommand};

/// Automatic skeleton extraction and skin binding for closed triangle meshes.
#[derive(Parser)]
#[command(name = "autorig", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Path-tree skeleton with rigid per-bone binding.
    Method1 {
        mesh: PathBuf,
        #[command(flatten)]
        opts: PipelineArgs,
    },
    /// Template embedding with heat-equilibrium weights.
    Method2 {
        mesh: PathBuf,
        #[command(flatten)]
        opts: PipelineArgs,
    },
    /// Deform a rigged mesh by a pose file and write the posed OBJ.
    Pose {
        mesh: PathBuf,
        #[arg(long)]
        skeleton: PathBuf,
        /// Blended weights from `method2`.
        #[arg(long, conflicts_with = "binding", required_unless_present = "binding")]
        weights: Option<PathBuf>,
        /// Rigid binding from `method1`.
        #[arg(long)]
        binding: Option<PathBuf>,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long, default_value = "posed.obj")]
        out: PathBuf,
    },
    /// Fit penalty weights to good/bad embedding feature vectors.
    LearnGamma {
        /// JSON file `{"good": [[...]], "bad": [[...]]}`.
        training: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "gamma.json")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Voxels along the longest bounding-box axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Minimum distance (voxels) for medial voxels.
    #[arg(long)]
    dms_min_dist: Option<f64>,
    /// Minimum geodesic distance (voxels) from an extreme to the covered set.
    #[arg(long)]
    extreme_threshold: Option<f64>,
    /// Segment budget per chain.
    #[arg(long)]
    segments: Option<usize>,
    /// Chain fitting tolerance in world units.
    #[arg(long)]
    max_error: Option<f64>,
    #[arg(long)]
    smooth_iters: Option<usize>,
    /// Smallest packed sphere radius in world units.
    #[arg(long)]
    min_radius: Option<f64>,
    /// Beam width, or `inf` for exhaustive search.
    #[arg(long)]
    beam: Option<String>,
    /// Built-in template name (`biped`, `quadruped`) or template JSON path.
    #[arg(long)]
    template: Option<String>,
    /// Penalty weights JSON file.
    #[arg(long)]
    gamma: Option<PathBuf>,
    #[arg(long)]
    max_influences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write voxel, distance, medial and graph/chain dumps.
    #[arg(long)]
    dump_debug: bool,
    /// Dijkstra step cost: `step` (length-scaled) or `voxel`.
    #[arg(long)]
    pathcost: Option<String>,
}

impl PipelineArgs {
    fn resolve(&self, method: Method) -> Result<PipelineConfig, ConfigError> {
        let mut c = PipelineConfig {
            method,
            ..PipelineConfig::default()
        };
        if let Some(p) = &self.config {
            c.apply_file(p)?;
        }
        let path = |p: &Path| p.display().to_string();
        let overrides: [(&str, Option<String>); 15] = [
            ("resolution", self.resolution.map(|v| v.to_string())),
            ("dms-min-dist", self.dms_min_dist.map(|v| v.to_string())),
            ("extreme-threshold", self.extreme_threshold.map(|v| v.to_string())),
            ("segments", self.segments.map(|v| v.to_string())),
            ("max-error", self.max_error.map(|v| v.to_string())),
            ("smooth-iters", self.smooth_iters.map(|v| v.to_string())),
            ("min-radius", self.min_radius.map(|v| v.to_string())),
            ("beam", self.beam.clone()),
            ("template", self.template.clone()),
            ("gamma", self.gamma.as_deref().map(path)),
            ("max-influences", self.max_influences.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_deref().map(path)),
            ("pathcost", self.pathcost.clone()),
            ("dump-debug", self.dump_debug.then(|| "true".to_owned())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                c.set(key, &v)?;
            }
        }
        Ok(c)
    }
}

fn fail(err: &PipelineError) -> ExitCode {
    eprintln!("autorig: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn config_fail(err: &ConfigError) -> ExitCode {
    eprintln!("autorig: configuration: {err}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Method1 { mesh, opts } => {
            let config = match opts.resolve(Method::PathTree) {
                Ok(c) => c,
                Err(e) => return config_fail(&e),
            };
            match pipeline::run_method1(&config, &mesh) {
                Ok(out) => {
                    println!(
                        "{} chains, {} joints written to {}",
                        out.chain_count,
                        out.skeleton.joints().len(),
                        config.out.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Method2 { mesh, opts } => {
            let config = match opts.resolve(Method::Embed) {
                Ok(c) => c,
                Err(e) => return config_fail(&e),
            };
            match pipeline::run_method2(&config, &mesh) {
                Ok(out) => {
                    println!(
                        "embedded {} joints into a {}-vertex graph; written to {}",
                        out.assignment.len(),
                        out.graph_size,
                        config.out.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Pose {
            mesh,
            skeleton,
            weights,
            binding,
            pose,
            out,
        } => {
            let attachment = match (&weights, &binding) {
                (Some(w), _) => AttachmentPath::Weights(w),
                (None, Some(b)) => AttachmentPath::Binding(b),
                (None, None) => unreachable!("clap requires one of --weights/--binding"),
            };
            match pipeline::run_pose(&mesh, &skeleton, attachment, &pose, &out) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
        Command::LearnGamma { training, seed, out } => match pipeline::run_learn_gamma(&training, seed, &out) {
            Ok(fit) => {
                if fit.degenerate {
                    eprintln!("autorig: warning: good and bad sets coincide; margin is zero for every weighting");
                }
                println!("margin {}", fit.margin);
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
