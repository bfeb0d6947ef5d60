//! Command-line front end: synthesize datasets, infer depth, fuse, evaluate.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use sweepstereo::camera::Camera;
use sweepstereo::fusion::{evaluate, filter_depths, fuse_points, FusionView, PointCloud};
use sweepstereo::hypothesis::DepthMap;
use sweepstereo::loss::{finite_diff_check, is_loss};
use sweepstereo::numerics::ImageF;
use sweepstereo::pipeline::{run_cascade, PipelineConfig};
use sweepstereo::scene_io::{
    read_cam, read_pair, read_pfm, read_ply, render_scene, write_cam, write_pair, write_pfm,
    write_ply, PlyFormat, RenderedView, SceneSpec, ViewGraph,
};

#[derive(Parser)]
#[command(name = "sweepstereo", version, about = "Deterministic multi-view plane-sweep stereo")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Canonical,
    Step,
    LowTexture,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic scene to an on-disk dataset (images, cameras,
    /// pair list, ground-truth depths and cloud).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "canonical")]
        preset: Preset,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 320)]
        width: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Run the cascade for every view of a dataset; writes per-view depth
    /// and confidence PFMs.
    Depth {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set adia=off (repeatable).
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Filter depth maps for cross-view consistency and fuse the survivors
    /// into a point cloud.
    Fuse {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        depths: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        set: Vec<String>,
        /// Voxel size for duplicate merging; 0 keeps every point.
        #[arg(long, default_value_t = 0.0)]
        voxel: f64,
    },
    /// Distance metrics between a reconstructed and a ground-truth cloud.
    Eval {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Also write the report as key=value lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference validation of the synthesis-loss gradient.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Run the 2^3 module-toggle grid on a fixed synthetic scene and print
    /// a comparison table.
    Ablate {
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 160)]
        width: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Synth { out, preset, height, width, seed } => synth(&out, preset, height, width, seed),
        Cmd::Depth { data, out, config, set } => depth(&data, &out, config.as_deref(), &set),
        Cmd::Fuse { data, depths, out, config, set, voxel } => {
            fuse(&data, &depths, &out, config.as_deref(), &set, voxel)
        }
        Cmd::Eval { recon, gt, tau, out } => eval(&recon, &gt, tau, out.as_deref()),
        Cmd::Gradcheck { seed } => gradcheck(seed),
        Cmd::Ablate { height, width, seed, tau } => ablate(height, width, seed, tau),
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    for kv in overrides {
        let (key, value) =
            kv.split_once('=').with_context(|| format!("--set {kv:?} is not key=value"))?;
        cfg.set(key.trim(), value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn depth_to_image(d: &DepthMap) -> ImageF {
    ImageF::from_data(d.height, d.width, 1, d.depth.clone())
}

fn image_to_depth(img: &ImageF) -> Result<DepthMap> {
    if img.channels != 1 {
        bail!("expected single-channel PFM, got {} channels", img.channels);
    }
    Ok(DepthMap::from_depth(img.height, img.width, img.data.clone()))
}

fn view_paths(dir: &Path, id: usize) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join("images").join(format!("{id:08}.pfm")),
        dir.join("cams").join(format!("{id:08}_cam.txt")),
        dir.join("gt_depth").join(format!("{id:08}.pfm")),
    )
}

fn gt_cloud(views: &[RenderedView]) -> Result<PointCloud> {
    let fviews: Vec<FusionView> = views
        .iter()
        .map(|v| FusionView {
            depth: v.gt_depth.clone(),
            camera: v.camera.clone(),
            image: Some(v.image.clone()),
        })
        .collect();
    let keep: Vec<Vec<bool>> = views.iter().map(|v| v.hit.valid.clone()).collect();
    Ok(fuse_points(&fviews, &keep, 0.0)?)
}

fn synth(out: &Path, preset: Preset, height: usize, width: usize, seed: u64) -> Result<()> {
    let spec = match preset {
        Preset::Canonical => SceneSpec::canonical(height, width, seed),
        Preset::Step => SceneSpec::step(height, width, seed),
        Preset::LowTexture => SceneSpec::low_texture(height, width, seed),
    };
    let views = render_scene(&spec)?;
    for sub in ["images", "cams", "gt_depth"] {
        std::fs::create_dir_all(out.join(sub))?;
    }
    let n = views.len();
    let mut graph = ViewGraph::default();
    for (id, view) in views.iter().enumerate() {
        let (img, cam, gt) = view_paths(out, id);
        write_pfm(&img, &view.image)?;
        write_cam(&cam, &view.camera)?;
        write_pfm(&gt, &depth_to_image(&view.gt_depth))?;
        // every other view is a source; nearer cameras score higher
        let mut sources: Vec<(usize, f64)> = (0..n)
            .filter(|s| *s != id)
            .map(|s| {
                let d = (views[s].camera.extrinsics.center() - view.camera.extrinsics.center())
                    .norm();
                (s, 1000.0 / (1.0 + d))
            })
            .collect();
        sources.sort_by(|a, b| b.1.total_cmp(&a.1));
        graph.entries.push((id, sources));
    }
    write_pair(&out.join("pair.txt"), &graph)?;
    write_ply(&out.join("gt_cloud.ply"), &gt_cloud(&views)?, PlyFormat::BinaryLittleEndian)?;
    println!("wrote {n} views to {}", out.display());
    Ok(())
}

fn load_views(data: &Path, graph: &ViewGraph) -> Result<Vec<(ImageF, Camera)>> {
    graph
        .entries
        .iter()
        .map(|(id, _)| {
            let (img, cam, _) = view_paths(data, *id);
            Ok((read_pfm(&img)?, read_cam(&cam)?))
        })
        .collect()
}

fn depth(data: &Path, out: &Path, config: Option<&Path>, set: &[String]) -> Result<()> {
    let cfg = load_config(config, set)?;
    let graph = read_pair(&data.join("pair.txt"))?;
    let views = load_views(data, &graph)?;
    std::fs::create_dir_all(out)?;
    for (ref_id, sources) in &graph.entries {
        let mut stack = vec![views[*ref_id].clone()];
        stack.extend(
            sources.iter().take(cfg.num_views - 1).map(|(s, _)| views[*s].clone()),
        );
        let result = run_cascade(&stack, &cfg, None)?;
        write_pfm(&out.join(format!("{ref_id:08}.pfm")), &depth_to_image(&result.depth))?;
        let conf = ImageF::from_data(
            result.depth.height,
            result.depth.width,
            1,
            result.depth.confidence.clone(),
        );
        write_pfm(&out.join(format!("{ref_id:08}_conf.pfm")), &conf)?;
        println!(
            "view {ref_id}: {}x{} depth written ({:.2}s)",
            result.depth.width,
            result.depth.height,
            result.stages.iter().map(|s| s.seconds).sum::<f64>()
        );
    }
    Ok(())
}

fn fuse(
    data: &Path,
    depths: &Path,
    out: &Path,
    config: Option<&Path>,
    set: &[String],
    voxel: f64,
) -> Result<()> {
    let cfg = load_config(config, set)?;
    let graph = read_pair(&data.join("pair.txt"))?;
    let mut fviews = Vec::new();
    for (id, _) in &graph.entries {
        let (img, cam, _) = view_paths(data, *id);
        let mut depth = image_to_depth(&read_pfm(&depths.join(format!("{id:08}.pfm")))?)?;
        let conf = read_pfm(&depths.join(format!("{id:08}_conf.pfm")))?;
        if conf.data.len() != depth.confidence.len() {
            bail!("confidence map for view {id} does not match its depth map");
        }
        depth.confidence = conf.data;
        fviews.push(FusionView {
            depth,
            camera: read_cam(&cam)?,
            image: Some(read_pfm(&img)?),
        });
    }
    let keep = filter_depths(&fviews, &cfg.fusion)?;
    let cloud = fuse_points(&fviews, &keep, voxel)?;
    write_ply(out, &cloud, PlyFormat::BinaryLittleEndian)?;
    println!("fused {} points into {}", cloud.len(), out.display());
    Ok(())
}

fn eval(recon: &Path, gt: &Path, tau: f64, out: Option<&Path>) -> Result<()> {
    let report = evaluate(&read_ply(recon)?, &read_ply(gt)?, tau)?;
    println!("accuracy     {:.6}", report.accuracy);
    println!("completeness {:.6}", report.completeness);
    println!("overall      {:.6}", report.overall);
    println!("f_score      {:.4} (tau {})", report.f_score, report.tau);
    if let Some(path) = out {
        std::fs::write(
            path,
            format!(
                "accuracy={}\ncompleteness={}\noverall={}\nf_score={}\ntau={}\n",
                report.accuracy, report.completeness, report.overall, report.f_score, report.tau
            ),
        )?;
    }
    Ok(())
}

fn gradcheck(seed: u64) -> Result<()> {
    use sweepstereo::camera::{reproject_with_jacobian, Extrinsics, Intrinsics};
    use sweepstereo::loss::synthesize_view;
    use sweepstereo::numerics::sample_with_grad;

    // Strongly textured random views so the finite-difference deltas stay
    // far above f32 quantization; weak-gradient scenes make the comparison
    // noise-dominated rather than wrong.
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut rand01 = move || {
        // splitmix64
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        ((z ^ (z >> 31)) >> 11) as f32 / (1u64 << 53) as f32
    };
    let (h, w) = (64usize, 96usize);
    let intr = Intrinsics::new(150.0, 150.0, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let reference = Camera::new(intr, Extrinsics::identity(), 1.0, 100.0)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut cam_at = |bx: f64, by: f64| -> Result<(ImageF, Camera)> {
        let img = ImageF::from_data(h, w, 3, (0..h * w * 3).map(|_| rand01()).collect());
        let ext = Extrinsics::new(
            nalgebra::Matrix3::identity(),
            nalgebra::Vector3::new(-bx, -by, 0.0),
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok((img, Camera::new(intr, ext, 1.0, 100.0).map_err(|e| anyhow::anyhow!("{e}"))?))
    };
    let sources = vec![cam_at(0.4, 0.3)?, cam_at(-0.35, 0.25)?];
    let gt = DepthMap::from_depth(h, w, (0..h * w).map(|_| 5.5 + rand01()).collect());
    let mut pred = gt.clone();
    for (p, d) in pred.depth.iter_mut().enumerate() {
        *d += 0.3 * (((p * 37) % 23) as f32 - 11.0) / 11.0;
    }
    let valid = vec![true; h * w];
    let (_, grad) = is_loss(&pred, &gt, &valid, &reference, &sources)?;

    // Probes must sit away from bilinear lattice kinks in both synthesis
    // branches, keep a residual the FD step cannot flip, and have channel
    // slopes that do not nearly cancel (an ill-conditioned denominator).
    let branches: Vec<(ImageF, ImageF)> = sources
        .iter()
        .map(|(img, cam)| {
            (
                synthesize_view(img, &reference, cam, &pred).0,
                synthesize_view(img, &reference, cam, &gt).0,
            )
        })
        .collect();
    let frac = |v: f64| (v - v.floor()).min(v.ceil() - v);
    let step = 3e-3;
    let mut probes = Vec::new();
    'pixels: for y in 3..h - 3 {
        'candidates: for x in 3..w - 3 {
            let p = y * w + x;
            let mut net = 0.0f64;
            let mut mag = 0.0f64;
            for (si, (img, cam)) in sources.iter().enumerate() {
                for d in [pred.depth[p] as f64, gt.depth[p] as f64] {
                    let Ok(proj) = reproject_with_jacobian(&reference, cam, x as f64, y as f64, d)
                    else {
                        continue 'candidates;
                    };
                    if proj.x < 2.0
                        || proj.y < 2.0
                        || proj.x > (w - 3) as f64
                        || proj.y > (h - 3) as f64
                        || frac(proj.x) < 0.06
                        || frac(proj.y) < 0.06
                    {
                        continue 'candidates;
                    }
                }
                let (ps, gs) = &branches[si];
                let proj = reproject_with_jacobian(
                    &reference,
                    cam,
                    x as f64,
                    y as f64,
                    pred.depth[p] as f64,
                )?;
                let mut val = vec![0.0f32; 3];
                let mut dx = vec![0.0f64; 3];
                let mut dy = vec![0.0f64; 3];
                if !sample_with_grad(img, proj.x, proj.y, &mut val, &mut dx, &mut dy) {
                    continue 'candidates;
                }
                for c in 0..3 {
                    let diff = ps.get(y, x, c) - gs.get(y, x, c);
                    if diff.abs() < 0.03 {
                        continue 'candidates;
                    }
                    let slope = dx[c] * proj.dx_dd + dy[c] * proj.dy_dd;
                    net += diff.signum() as f64 * slope;
                    mag += slope.abs();
                }
            }
            if net.abs() >= 0.3 * mag && mag >= 0.5 {
                probes.push((y, x));
                if probes.len() == 100 {
                    break 'pixels;
                }
            }
        }
    }
    if probes.len() < 50 {
        bail!("only {} usable probe pixels", probes.len());
    }
    let eval = |d: &DepthMap| is_loss(d, &gt, &valid, &reference, &sources).unwrap().0;
    let max_rel = finite_diff_check(eval, &grad, &pred, &probes, step)?;
    println!("synthesis-loss gradient: {} probes, max relative error {max_rel:.3e}", probes.len());
    if max_rel >= 1e-3 {
        bail!("gradient check failed (max relative error {max_rel:.3e} >= 1e-3)");
    }
    println!("gradcheck passed");
    Ok(())
}

fn ablate(height: usize, width: usize, seed: u64, tau: f64) -> Result<()> {
    let rendered = render_scene(&SceneSpec::canonical(height, width, seed))?;
    let views: Vec<(ImageF, Camera)> =
        rendered.iter().map(|v| (v.image.clone(), v.camera.clone())).collect();
    let gt = gt_cloud(&rendered)?;

    println!("adia gde  is  |      acc     comp  overall     loss");
    for bits in 0..8u8 {
        let (adia, gde, is) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        let mut cfg = PipelineConfig::default();
        cfg.set("adia", if adia { "literal" } else { "off" })?;
        cfg.gde = gde;
        cfg.is_loss = is;

        let mut fviews = Vec::new();
        let mut loss_total = 0.0f64;
        for (ref_id, view) in rendered.iter().enumerate() {
            let mut stack = vec![views[ref_id].clone()];
            stack.extend(views.iter().enumerate().filter(|(i, _)| *i != ref_id).map(|(_, v)| v.clone()));
            let out = run_cascade(&stack, &cfg, Some((&view.gt_depth, &view.hit)))?;
            loss_total += out.loss.as_ref().map_or(0.0, |l| l.total);
            fviews.push(FusionView {
                depth: out.depth,
                camera: view.camera.clone(),
                image: Some(view.image.clone()),
            });
        }
        let keep = filter_depths(&fviews, &cfg.fusion)?;
        let cloud = fuse_points(&fviews, &keep, 0.0)?;
        let report = evaluate(&cloud, &gt, tau)?;
        let mark = |b: bool| if b { "  x " } else { "    " };
        println!(
            "{}{}{}| {:8.4} {:8.4} {:8.4} {:8.4}",
            mark(adia),
            mark(gde),
            mark(is),
            report.accuracy,
            report.completeness,
            report.overall,
            loss_total / rendered.len() as f64,
        );
    }
    Ok(())
}
