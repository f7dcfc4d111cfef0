//! Acceptance suite: one pass/fail line per criterion, each checked against
//! an independent oracle and a wall-clock budget.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use autorig_cli::config::PipelineConfig;
use autorig_cli::pipeline::run_method1_mesh;
use autorig_core::ctrlskel::{split_chain_with, Skeleton};
use autorig_core::distfield::compute_edm;
use autorig_core::embed::{
    build_graph, embed_template, features, learn_gamma, margin, pack_spheres, EmbedGraph, PenaltyContext,
    PenaltyModel, ReducedTemplate,
};
use autorig_core::fixtures::{self, Primitive, QuadSplit, Shape};
use autorig_core::medial::extract_dms;
use autorig_core::meshio::{write_mesh, TriangleMesh};
use autorig_core::pathskel::{build_path_tree, find_extreme_points, find_heart, path_weight, PathCost, PathTreeParams};
use autorig_core::skinning::{compute_heat_weights, lbs_deform, HeatParams, Pose};
use autorig_core::voxelgrid::{voxelize, Voxel, VoxelGrid};
use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, f64, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn autorig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autorig"))
        .args(args)
        .output()
        .expect("autorig binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

// 1. Exact distance transform.

fn random_grid(rng: &mut ChaCha8Rng) -> VoxelGrid {
    let dims = [
        rng.random_range(3..=24usize),
        rng.random_range(3..=24usize),
        rng.random_range(3..=24usize),
    ];
    let balls: Vec<([f64; 3], f64)> = (0..rng.random_range(1..6))
        .map(|_| {
            let c = [0, 1, 2].map(|a| rng.random_range(0.0..dims[a] as f64));
            (c, rng.random_range(1.0..8.0))
        })
        .collect();
    let noise = rng.random_range(0.0..0.3);
    let flips: Vec<bool> = (0..dims[0] * dims[1] * dims[2]).map(|_| rng.random_bool(noise)).collect();
    VoxelGrid::from_fn(dims, |v| {
        let a = v.as_array();
        if (0..3).any(|ax| a[ax] == 0 || a[ax] + 1 == dims[ax]) {
            return false;
        }
        let inside = balls.iter().any(|(c, r)| {
            let d2: f64 = (0..3).map(|ax| (a[ax] as f64 - c[ax]).powi(2)).sum();
            d2 <= r * r
        });
        inside != flips[v.i + dims[0] * (v.j + dims[1] * v.k)]
    })
    .expect("shell is empty")
}

/// Nearest-empty scan. The nearest empty voxel to a solid voxel always has
/// a solid face neighbor (otherwise its neighbor toward the solid voxel would
/// be empty and closer), so only those empties need scanning.
fn brute_force_edt(grid: &VoxelGrid) -> Vec<u64> {
    let dims = grid.dims();
    let all: Vec<Voxel> = (0..grid.len()).map(|i| grid.voxel_at(i)).collect();
    let faces = [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];
    let solid_at = |v: Voxel, d: [i64; 3]| {
        let n = [v.i as i64 + d[0], v.j as i64 + d[1], v.k as i64 + d[2]];
        (0..3).all(|a| n[a] >= 0 && (n[a] as usize) < dims[a])
            && grid.is_solid(Voxel::new(n[0] as usize, n[1] as usize, n[2] as usize))
    };
    let border: Vec<Voxel> = all
        .iter()
        .copied()
        .filter(|&v| !grid.is_solid(v) && faces.iter().any(|&d| solid_at(v, d)))
        .collect();
    all.iter()
        .map(|&v| {
            if !grid.is_solid(v) {
                return 0;
            }
            border
                .iter()
                .map(|e| {
                    let d = [v.i as i64 - e.i as i64, v.j as i64 - e.j as i64, v.k as i64 - e.k as i64];
                    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as u64
                })
                .min()
                .expect("solid grids have empty border voxels")
        })
        .collect()
}

fn edt_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut voxels = 0;
    for g in 0..50 {
        let grid = random_grid(&mut rng);
        voxels += grid.len();
        if grid.solid_count() == 0 {
            continue;
        }
        let field = compute_edm(&grid).map_err(|e| e.to_string())?;
        let oracle = brute_force_edt(&grid);
        if let Some(i) = (0..grid.len()).find(|&i| field.squared_values()[i] != oracle[i]) {
            return Err(format!(
                "grid {g} {:?}: voxel {:?} has {} but nearest empty is at squared distance {}",
                grid.dims(),
                grid.voxel_at(i),
                field.squared_values()[i],
                oracle[i]
            ));
        }
    }
    Ok(format!("50 grids, {voxels} voxels, all squared distances exact"))
}

// 2. Path optimality.

/// A central block with two to four axis-aligned arms of random length and
/// thickness, so the path tree has several branches.
fn random_blocks(rng: &mut ChaCha8Rng) -> VoxelGrid {
    let dims = [22usize, 22, 9];
    let c = [11i64, 11, 4];
    let hub = rng.random_range(1..=2i64);
    let mut boxes: Vec<([i64; 3], [i64; 3])> = vec![([c[0] - hub, c[1] - hub, c[2] - hub], [c[0] + hub, c[1] + hub, c[2] + hub])];
    let mut dirs = vec![(0, 1i64), (0, -1), (1, 1), (1, -1)];
    for _ in 0..rng.random_range(2..=4) {
        let (axis, sign) = dirs.swap_remove(rng.random_range(0..dirs.len()));
        let len = rng.random_range(4..=9i64);
        let half = rng.random_range(0..=1i64);
        let shift = rng.random_range(-1..=1i64);
        let mut lo = [c[0] - half + shift, c[1] - half + shift, c[2] - half];
        let mut hi = [c[0] + half + shift, c[1] + half + shift, c[2] + half];
        if sign > 0 {
            lo[axis] = c[axis];
            hi[axis] = c[axis] + len;
        } else {
            lo[axis] = c[axis] - len;
            hi[axis] = c[axis];
        }
        boxes.push((lo, hi));
    }
    VoxelGrid::from_fn(dims, |v| {
        let a = v.as_array().map(|x| x as i64);
        boxes.iter().any(|(lo, hi)| (0..3).all(|ax| a[ax] >= lo[ax] && a[ax] <= hi[ax]))
    })
    .expect("shell is empty")
}

/// Bellman-Ford minimum of `Σ 1/d^3` over all solid 26-connected paths from
/// `start` to any voxel of `targets`, both endpoints included.
fn min_weight_to(grid: &VoxelGrid, field: &autorig_core::DistanceField, start: Voxel, targets: &HashSet<Voxel>) -> f64 {
    let n = grid.len();
    let w = |v: Voxel| 1.0 / field.dist(v).powi(3);
    let mut best = vec![f64::INFINITY; n];
    best[grid.index(start)] = w(start);
    let solids: Vec<Voxel> = grid.solid_voxels().collect();
    loop {
        let mut changed = false;
        for &u in &solids {
            let bu = best[grid.index(u)];
            if !bu.is_finite() {
                continue;
            }
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    for dk in -1i64..=1 {
                        let Some(v) = grid.offset(u, [di, dj, dk]) else { continue };
                        if v == u || !grid.is_solid(v) {
                            continue;
                        }
                        let c = bu + w(v);
                        let slot = &mut best[grid.index(v)];
                        if c < *slot {
                            *slot = c;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    targets.iter().map(|t| best[grid.index(*t)]).fold(f64::INFINITY, f64::min)
}

fn path_optimality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let params = PathTreeParams {
        cost: PathCost::PerVoxel,
        accept_threshold: 2.0,
    };
    let (mut graphs, mut chains, mut worst) = (0, 0, 0.0f64);
    let mut attempts = 0;
    while graphs < 20 {
        attempts += 1;
        ensure(attempts < 500, || "could not generate 20 suitable instances".into())?;
        let grid = random_blocks(&mut rng);
        let field = compute_edm(&grid).map_err(|e| e.to_string())?;
        let Ok(dms) = extract_dms(&field, 1.0) else { continue };
        if dms.len() > 200 {
            continue;
        }
        let heart = find_heart(&dms, &field).map_err(|e| e.to_string())?;
        let extremes = find_extreme_points(&dms, &field, &heart);
        let tree = build_path_tree(&dms, &field, &heart, &extremes, &params);
        if tree.chains.is_empty() {
            continue;
        }
        graphs += 1;
        let mut tree_set: HashSet<Voxel> = HashSet::from([heart.voxel]);
        for (c, chain) in tree.chains.iter().enumerate() {
            let v = &chain.voxels;
            ensure(tree_set.contains(v.last().unwrap()), || format!("chain {c} does not end on the tree"))?;
            ensure(v[..v.len() - 1].iter().all(|x| !tree_set.contains(x)), || {
                format!("chain {c} crosses the tree early")
            })?;
            ensure(v.windows(2).all(|p| p[0].dist2(&p[1]) <= 3 && p[0] != p[1]), || {
                format!("chain {c} is not 26-connected")
            })?;
            let got = path_weight(v, &field).map_err(|e| e.to_string())?;
            let best = min_weight_to(&grid, &field, v[0], &tree_set);
            let rel = (got - best).abs() / best;
            worst = worst.max(rel);
            ensure(rel < 1e-12, || format!("chain {c}: W_p {got} vs exhaustive minimum {best}"))?;
            tree_set.extend(v[..v.len() - 1].iter().copied());
            chains += 1;
        }
    }
    Ok(format!("20 graphs, {chains} chains, max relative difference {worst:.1e}"))
}

// 3. Star topology through the command line.

fn star_topology() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mesh = dir.path().join("star.obj");
    write_mesh(&fixtures::star_mesh(), &mesh).map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let run = autorig(&["method1", path_str(&mesh), "--resolution", "48", "--segments", "1", "--out", path_str(&out)]);
    ensure(run.status.success(), || String::from_utf8_lossy(&run.stderr).into_owned())?;
    let stdout = String::from_utf8_lossy(&run.stdout);
    ensure(stdout.starts_with("3 chains"), || format!("unexpected report: {stdout}"))?;
    let skel = Skeleton::read(out.join("skeleton.json")).map_err(|e| e.to_string())?;
    ensure(skel.joints().len() == 4, || format!("{} joints", skel.joints().len()))?;
    let binding: Vec<usize> = serde_json::from_str(&std::fs::read_to_string(out.join("binding.json")).unwrap())
        .map_err(|e| e.to_string())?;
    ensure(binding.len() == fixtures::star_mesh().vertices().len(), || "binding misses vertices".into())?;
    Ok("3 chains, 4 joints, 3 bones".into())
}

// 4. Greedy split optimality.

fn deviation(points: &[Point3<f64>], a: usize, b: usize) -> f64 {
    let (pa, pb) = (points[a], points[b]);
    let ab = pb - pa;
    points[a + 1..b]
        .iter()
        .map(|p| {
            let t = ((p - pa).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (p - (pa + ab * t)).norm()
        })
        .fold(0.0, f64::max)
}

fn split_optimality() -> Check {
    let points: Vec<Point3<f64>> = (0..17)
        .map(|i| {
            let t = i as f64 / 16.0 * std::f64::consts::FRAC_PI_2;
            Point3::new(t.cos(), t.sin(), 0.0)
        })
        .collect();
    let result = split_chain_with(&points, &[], 4, 0.0);
    ensure(result.steps.len() == 3, || format!("{} splits instead of 3", result.steps.len()))?;
    let mut cuts: Vec<usize> = Vec::new();
    let mut prev = f64::INFINITY;
    for (s, step) in result.steps.iter().enumerate() {
        let mut bounds = vec![0];
        bounds.extend(cuts.iter().copied());
        bounds.push(16);
        let devs: Vec<((usize, usize), f64)> =
            bounds.windows(2).map(|w| ((w[0], w[1]), deviation(&points, w[0], w[1]))).collect();
        let worst = devs.iter().map(|d| d.1).fold(0.0, f64::max);
        let chosen = devs.iter().find(|d| d.0 == step.segment).ok_or("split outside current segments")?;
        ensure(chosen.1 >= worst - 1e-12, || format!("step {s} split a segment that is not the worst"))?;
        let (a, b) = step.segment;
        let best = (a + 1..b)
            .map(|m| deviation(&points, a, m).max(deviation(&points, m, b)))
            .fold(f64::INFINITY, f64::min);
        let got = deviation(&points, a, step.split).max(deviation(&points, step.split, b));
        ensure(got <= best + 1e-12, || format!("step {s}: error {got}, enumeration finds {best}"))?;
        cuts.push(step.split);
        cuts.sort_unstable();
        let overall = {
            let mut bounds = vec![0];
            bounds.extend(cuts.iter().copied());
            bounds.push(16);
            bounds.windows(2).map(|w| deviation(&points, w[0], w[1])).fold(0.0, f64::max)
        };
        ensure(overall <= prev + 1e-15, || "maximum deviation increased".into())?;
        prev = overall;
    }
    ensure(cuts == result.splits, || "trace and result disagree".into())?;
    Ok(format!("splits {:?}, final deviation {:.4e}", result.splits, result.max_error))
}

// 5. Embedding optimality.

/// Biped-like graph: template bones subdivided, jittered, a few distractor
/// vertices, vertex order shuffled.
fn biped_graph(rng: &mut ChaCha8Rng, size: usize) -> EmbedGraph {
    let t = ReducedTemplate::biped();
    let jitter = |rng: &mut ChaCha8Rng| Vector3::new(rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06), 0.0);
    let mut pos: Vec<Point3<f64>> = (0..t.len()).map(|j| t.rest(j) + jitter(rng)).collect();
    let mut edges = Vec::new();
    let mut bones: Vec<usize> = (1..t.len()).collect();
    while pos.len() < size && !bones.is_empty() {
        let b = bones.swap_remove(rng.random_range(0..bones.len()));
        let p = t.parent(b).unwrap();
        let mid = Point3::from((t.rest(p).coords + t.rest(b).coords) / 2.0) + jitter(rng);
        pos.push(mid);
        edges.push((p, pos.len() - 1));
        edges.push((pos.len() - 1, b));
    }
    edges.extend(bones.iter().map(|&b| (t.parent(b).unwrap(), b)));
    while pos.len() < size {
        let anchor = rng.random_range(0..pos.len());
        pos.push(pos[anchor] + Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.0));
        if rng.random_bool(0.8) {
            edges.push((anchor, pos.len() - 1));
        }
    }
    let mut perm: Vec<usize> = (0..pos.len()).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut shuffled = vec![Point3::origin(); pos.len()];
    for (old, &new) in perm.iter().enumerate() {
        shuffled[new] = pos[old];
    }
    let edges: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    EmbedGraph::from_parts(shuffled, vec![0.1; pos.len()], &edges)
}

fn brute_force_embedding(t: &ReducedTemplate, g: &EmbedGraph, model: &PenaltyModel) -> Option<f64> {
    let ctx = PenaltyContext::new(t, g);
    let mut best: Option<f64> = None;
    let mut tuple = Vec::with_capacity(t.len());
    fn rec(
        ctx: &PenaltyContext,
        model: &PenaltyModel,
        r: usize,
        n: usize,
        tuple: &mut Vec<usize>,
        best: &mut Option<f64>,
    ) {
        if tuple.len() == r {
            if let Ok(b) = features(ctx, tuple) {
                let f = model.weigh(&b);
                if best.is_none_or(|x| f < x) {
                    *best = Some(f);
                }
            }
            return;
        }
        for v in 0..n {
            if !tuple.contains(&v) {
                tuple.push(v);
                rec(ctx, model, r, n, tuple, best);
                tuple.pop();
            }
        }
    }
    rec(&ctx, model, t.len(), g.len(), &mut tuple, &mut best);
    best
}

fn embedding_oracle() -> Check {
    let t = ReducedTemplate::biped();
    let model = PenaltyModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let sizes = [9, 9, 10, 10, 11, 11, 12, 12, 13, 13];
    for (i, &n) in sizes.iter().enumerate() {
        let g = biped_graph(&mut rng, n);
        let exact = embed_template(&t, &g, &model, None).map_err(|e| e.to_string())?;
        let brute = brute_force_embedding(&t, &g, &model).ok_or("brute force found nothing")?;
        ensure((exact.penalty - brute).abs() <= 1e-9 * brute.max(1.0), || {
            format!("graph {i} ({n} vertices): search {} vs enumeration {brute}", exact.penalty)
        })?;
        let narrow = embed_template(&t, &g, &model, Some(1)).map_err(|e| e.to_string())?;
        ensure(narrow.penalty >= exact.penalty - 1e-12, || format!("graph {i}: beam 1 beats exhaustive"))?;
    }
    let mesh = fixtures::humanoid_mesh();
    let grid = voxelize(&mesh, 64).map_err(|e| e.to_string())?;
    let field = compute_edm(&grid).map_err(|e| e.to_string())?;
    let dms = extract_dms(&field, 2.0).map_err(|e| e.to_string())?;
    let g = build_graph(&pack_spheres(&dms, &field, 2.0 * field.cell_size()).map_err(|e| e.to_string())?, &field);
    let opt = embed_template(&t, &g, &model, None).map_err(|e| e.to_string())?;
    let beam = embed_template(&t, &g, &model, Some(512)).map_err(|e| e.to_string())?;
    ensure(beam.penalty <= 1.05 * opt.penalty + 1e-12, || {
        format!("humanoid: beam 512 penalty {} vs optimum {}", beam.penalty, opt.penalty)
    })?;
    Ok(format!(
        "10 graphs of 9-13 vertices match enumeration; humanoid ({} vertices) beam/optimum = {:.4}",
        g.len(),
        beam.penalty / opt.penalty
    ))
}

// 6. Margin optimizer.

fn margin_optimizer() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let mut worst_gap = f64::INFINITY;
    for inst in 0..20 {
        let k = 2 + inst % 5;
        let sample = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..rng.random_range(1..=4))
                .map(|_| (0..k).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect()
        };
        let good = sample(&mut rng);
        let bad = sample(&mut rng);
        let fit = learn_gamma(&good, &bad, inst as u64).map_err(|e| e.to_string())?;
        let norm = fit.gamma.iter().map(|x| x * x).sum::<f64>().sqrt();
        ensure((norm - 1.0).abs() <= 1e-9 && fit.gamma.iter().all(|x| *x >= 0.0), || {
            format!("instance {inst}: Γ not a non-negative unit vector")
        })?;
        ensure((margin(&fit.gamma, &good, &bad) - fit.margin).abs() < 1e-12, || {
            format!("instance {inst}: reported margin differs from margin(Γ)")
        })?;
        let mut sweep = f64::NEG_INFINITY;
        for _ in 0..10_000 {
            let mut v: Vec<f64> = (0..k)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.0) })
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= n);
            sweep = sweep.max(margin(&v, &good, &bad));
        }
        worst_gap = worst_gap.min(fit.margin - sweep);
        ensure(fit.margin >= sweep - 1e-12, || {
            format!("instance {inst} (k={k}): margin {} below random sweep {sweep}", fit.margin)
        })?;
    }
    Ok(format!("20 instances, smallest lead over the sweep {worst_gap:.2e}"))
}

// 7. Skinning invariants.

fn random_rigid(rng: &mut ChaCha8Rng) -> Isometry3<f64> {
    let r = UnitQuaternion::from_euler_angles(
        rng.random_range(-3.0..3.0),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.0..3.0),
    );
    Isometry3::from_parts(
        Translation3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        r,
    )
}

fn skin_checks(name: &str, mesh: &TriangleMesh, skel: &Skeleton, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let grid = voxelize(mesh, 48).map_err(|e| e.to_string())?;
    let field = compute_edm(&grid).map_err(|e| e.to_string())?;
    let hw = compute_heat_weights(mesh, skel, &field, &HeatParams::default()).map_err(|e| format!("{name}: {e}"))?;
    for (b, r) in hw.residuals.iter().enumerate() {
        ensure(*r < 1e-8, || format!("{name}: bone {b} residual {r:e}"))?;
    }
    for w in &hw.raw {
        ensure(w.iter().all(|x| (-1e-6..=1.0 + 1e-6).contains(x)), || format!("{name}: raw weight outside [0, 1]"))?;
    }
    for (v, ws) in hw.binding.weights().iter().enumerate() {
        let s: f64 = ws.iter().map(|e| e.1).sum();
        ensure((s - 1.0).abs() < 1e-9, || format!("{name}: vertex {v} weights sum to {s}"))?;
        ensure(ws.iter().all(|e| e.1 >= 0.0), || format!("{name}: negative weight"))?;
        ensure(ws.len() <= 4, || format!("{name}: more than 4 influences"))?;
    }
    let bones = skel.bone_count();
    let rest = Pose::identity(bones);
    let same = lbs_deform(mesh, &hw.binding, &rest, &rest).map_err(|e| e.to_string())?;
    let id_err = same
        .vertices()
        .iter()
        .zip(mesh.vertices())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    ensure(id_err < 1e-9, || format!("{name}: identity pose moved a vertex by {id_err:e}"))?;
    let pose = Pose::new((0..bones).map(|_| random_rigid(rng)).collect());
    let g = random_rigid(rng);
    let base = lbs_deform(mesh, &hw.binding, &rest, &pose).map_err(|e| e.to_string())?;
    let moved = lbs_deform(mesh, &hw.binding, &rest, &pose.then(&g)).map_err(|e| e.to_string())?;
    let rig_err = moved
        .vertices()
        .iter()
        .zip(base.vertices())
        .map(|(a, b)| (a - g * b).norm())
        .fold(0.0, f64::max);
    ensure(rig_err < 1e-7, || format!("{name}: rigid invariance error {rig_err:e}"))?;
    Ok(())
}

fn skinning_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let meshes = [
        ("star", fixtures::star_mesh()),
        ("barbell", fixtures::barbell_mesh()),
        ("cylinder", fixtures::cylinder_mesh()),
        ("humanoid", fixtures::humanoid_mesh()),
        ("quadruped", fixtures::quadruped_mesh()),
    ];
    for (name, mesh) in &meshes {
        let config = PipelineConfig {
            resolution: 48,
            out: dir.path().join(name),
            ..PipelineConfig::default()
        };
        let skel = run_method1_mesh(&config, mesh.clone()).map_err(|e| format!("{name}: {e}"))?.skeleton;
        skin_checks(name, mesh, &skel, &mut rng)?;
    }
    let barbell = fixtures::barbell_mesh();
    let two = Skeleton::new(vec![
        autorig_core::Joint {
            name: "center".into(),
            parent: None,
            position: [0.0; 3],
        },
        autorig_core::Joint {
            name: "left".into(),
            parent: Some(0),
            position: [-1.0, 0.0, 0.0],
        },
        autorig_core::Joint {
            name: "right".into(),
            parent: Some(0),
            position: [1.0, 0.0, 0.0],
        },
    ])
    .map_err(|e| e.to_string())?;
    skin_checks("barbell two-bone", &barbell, &two, &mut rng)?;
    let field = compute_edm(&voxelize(&barbell, 48).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let hw = compute_heat_weights(&barbell, &two, &field, &HeatParams::default()).map_err(|e| e.to_string())?;
    let mut plane = 0;
    for (v, p) in barbell.vertices().iter().enumerate() {
        if p.x.abs() < 1e-9 {
            plane += 1;
            for b in 0..2 {
                let w = hw.binding.weight(v, b);
                ensure((w - 0.5).abs() < 1e-6, || format!("symmetry-plane vertex {v} has weight {w} for bone {b}"))?;
            }
        }
    }
    ensure(plane > 0, || "barbell has no vertices on its symmetry plane".into())?;
    Ok(format!("5 meshes with extracted skeletons plus the two-bone barbell ({plane} plane vertices at 0.5)"))
}

// 8. Infeasible embeddings exit with code 2.

fn two_rods() -> Shape {
    Shape::new(vec![
        Primitive::Capsule {
            a: Point3::new(-1.6, 0.0, 0.0),
            b: Point3::new(-0.4, 0.0, 0.0),
            radius: 0.2,
        },
        Primitive::Capsule {
            a: Point3::new(0.4, 0.0, 0.0),
            b: Point3::new(1.6, 0.0, 0.0),
            radius: 0.2,
        },
    ])
}

fn expect_infeasible(mesh: &TriangleMesh, res: usize, dir: &Path, tag: &str) -> Result<String, String> {
    let path = dir.join(format!("{tag}.obj"));
    write_mesh(mesh, &path).map_err(|e| e.to_string())?;
    let out = dir.join(tag);
    let res = res.to_string();
    let run = autorig(&["method2", path_str(&path), "--resolution", &res, "--out", path_str(&out)]);
    let stderr = String::from_utf8_lossy(&run.stderr).into_owned();
    ensure(run.status.code() == Some(2), || format!("{tag}: exit {:?}: {stderr}", run.status.code()))?;
    ensure(stderr.contains("template has 7 joints"), || format!("{tag}: no size report: {stderr}"))?;
    ensure(!out.join("skeleton.json").exists() && !out.join("weights.json").exists(), || {
        format!("{tag}: partial artifacts left behind")
    })?;
    Ok(stderr.trim().to_owned())
}

fn graph_of(mesh: &TriangleMesh, res: usize) -> Result<EmbedGraph, String> {
    let field = compute_edm(&voxelize(mesh, res).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let dms = extract_dms(&field, 2.0).map_err(|e| e.to_string())?;
    Ok(build_graph(
        &pack_spheres(&dms, &field, 2.0 * field.cell_size()).map_err(|e| e.to_string())?,
        &field,
    ))
}

fn infeasibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ball = fixtures::icosphere(2, 1.0);
    let small = graph_of(&ball, 12)?;
    ensure(small.len() < 7, || format!("ball graph unexpectedly has {} vertices", small.len()))?;
    expect_infeasible(&ball, 12, dir.path(), "ball")?;
    let rods = two_rods().mesh("rods", 0.05, QuadSplit::Diagonal, 4);
    let g = graph_of(&rods, 48)?;
    ensure(g.len() >= 7 && !g.is_connected() && g.largest_component() < 7, || {
        format!("rods graph: {} vertices, largest component {}", g.len(), g.largest_component())
    })?;
    let msg = expect_infeasible(&rods, 48, dir.path(), "rods")?;
    Ok(format!("ball (|V|={}) and two rods (|V|={}): exit 2, `{msg}`", small.len(), g.len()))
}

// 9. Desk-scale end to end.

fn read_dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("output directory exists")
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), bytes)
        })
        .collect();
    files.sort();
    files
}

fn desk_scale() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mesh = fixtures::quadruped_mesh();
    ensure(mesh.triangles().len() <= 10_000, || format!("{} triangles", mesh.triangles().len()))?;
    let path = dir.path().join("quadruped.obj");
    write_mesh(&mesh, &path).map_err(|e| e.to_string())?;
    let mut report = Vec::new();
    for (method, extra) in [("method1", &[][..]), ("method2", &["--template", "quadruped"][..])] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{method}-{run}"));
            let mut args = vec![method, path_str(&path), "--resolution", "64", "--out", path_str(&out)];
            args.extend_from_slice(extra);
            let t = Instant::now();
            let res = autorig(&args);
            let secs = t.elapsed().as_secs_f64();
            ensure(res.status.success(), || format!("{method}: {}", String::from_utf8_lossy(&res.stderr)))?;
            ensure(secs < 60.0, || format!("{method} took {secs:.1}s"))?;
            if run == 0 {
                report.push(format!("{method} {secs:.2}s"));
            }
            outputs.push(read_dir_bytes(&out));
        }
        ensure(!outputs[0].is_empty() && outputs[0] == outputs[1], || {
            format!("{method}: reruns differ")
        })?;
    }
    let skel = Skeleton::read(dir.path().join("method2-0/skeleton.json")).map_err(|e| e.to_string())?;
    ensure(skel.joints().len() == 9, || "quadruped template not fully embedded".into())?;
    Ok(format!("{} triangles; {}; reruns byte-identical", mesh.triangles().len(), report.join(", ")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("exact distance transform", 5.0, edt_oracle),
        ("path optimality", 30.0, path_optimality),
        ("star fixture topology", 10.0, star_topology),
        ("split-step optimality", 1.0, split_optimality),
        ("embedding oracle", 60.0, embedding_oracle),
        ("margin optimizer", 20.0, margin_optimizer),
        ("skinning invariants", 30.0, skinning_invariants),
        ("infeasible embedding exit", f64::INFINITY, infeasibility),
        ("desk-scale end to end", 120.0, desk_scale),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(detail) if secs > *budget => Err(format!("over budget ({secs:.2}s > {budget}s); {detail}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {}. {name} [{secs:.2}s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name} [{secs:.2}s]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
