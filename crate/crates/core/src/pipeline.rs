//! End-to-end orchestration: render -> per-view depth estimation (cascade
//! plus optional instance refinement) -> confidence -> fusion -> metrics.
//!
//! Every command reads its inputs from disk, so `pipeline` is exactly
//! `render; depth; fuse-eval` and reruns are bit-identical for a fixed
//! config and seed.

use crate::cascade::{narrow_range, run_stage, DepthMap, RangeMap, StageConfig, StageRecord};
use crate::confidence::{
    average_confidence, conditional_confidence_map, format_confidence_report, stage_confidence_max,
    ChainMap, ConfidenceMap,
};
use crate::config::RunConfig;
use crate::costvolume::CameraView;
use crate::fusion::{
    accuracy_completeness, fuse, CloudMetrics, FusionConfig, FusionView, PointCloud, DIST_CAP_MM,
};
use crate::geometry::{read_camera_file, write_camera_file, CameraFile, CameraModel};
use crate::instance::{
    format_instance_log, ifads, load_masks, mask_paths_for_view, IfadsConfig, InstanceMask,
};
use crate::io::{
    append_metrics_csv, metrics_record, read_depth_pfm, read_pfm, write_confidence_pfm,
    write_depth_pfm, write_run_manifest,
};
use crate::raster::{read_gray_png, read_label_png, write_gray_png, write_label_png, write_mask_png};
use crate::scene::{preset, render, view_masks, RenderedView};
use anyhow::{bail, Context, Result};
use std::path::{Path, PathBuf};

fn view_stem(view: usize) -> String {
    format!("view{view:04}")
}

pub fn image_path(dir: &Path, view: usize) -> PathBuf {
    dir.join(format!("{}.png", view_stem(view)))
}
pub fn gt_depth_path(dir: &Path, view: usize) -> PathBuf {
    dir.join(format!("{}_gt.pfm", view_stem(view)))
}
pub fn label_path(dir: &Path, view: usize) -> PathBuf {
    dir.join(format!("{}_labels.png", view_stem(view)))
}
pub fn camera_path(dir: &Path, view: usize) -> PathBuf {
    dir.join(format!("{}_cam.txt", view_stem(view)))
}
pub fn depth_path(dir: &Path, view: usize) -> PathBuf {
    dir.join(format!("{}_depth.pfm", view_stem(view)))
}
pub fn stage_depth_path(dir: &Path, view: usize, stage: usize) -> PathBuf {
    dir.join(format!("{}_stage{stage}.pfm", view_stem(view)))
}
pub fn confidence_path(dir: &Path, view: usize) -> PathBuf {
    dir.join(format!("{}_conf.pfm", view_stem(view)))
}

/// Render a preset and write the full per-view artifact set plus the scene
/// manifest and per-instance masks.
pub fn cmd_render(cfg: &RunConfig) -> Result<()> {
    let out = Path::new(&cfg.out_dir);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() && !parent.exists() {
            bail!("output directory parent does not exist: {}", parent.display());
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut spec = preset(&cfg.scene)?;
    spec.rig.count = cfg.views;
    let views = render(&spec, cfg.seed)?;
    let coarse_step =
        (spec.depth_prior.1 - spec.depth_prior.0) / (cfg.stages.first().copied().unwrap_or(64) - 1) as f64;
    let mut manifest = format!(
        "scene={}\nviews={}\nwidth={}\nheight={}\nprior={} {}\nseed={}\n",
        spec.name,
        views.len(),
        spec.rig.width,
        spec.rig.height,
        spec.depth_prior.0,
        spec.depth_prior.1,
        cfg.seed
    );
    for (v, view) in views.iter().enumerate() {
        write_gray_png(&image_path(out, v), &view.image)?;
        write_depth_pfm(&gt_depth_path(out, v), &view.depth)?;
        write_label_png(
            &label_path(out, v),
            view.depth.width,
            view.depth.height,
            &view.labels,
        )?;
        write_camera_file(
            &camera_path(out, v),
            &CameraFile::from_camera(&view.camera, spec.depth_prior.0, coarse_step),
        )?;
        for (id, bits) in view_masks(&spec, view) {
            write_mask_png(
                &out.join(format!("{}_inst{id:04}.png", view_stem(v))),
                view.depth.width,
                view.depth.height,
                &bits,
            )?;
        }
        manifest.push_str(&format!(
            "view={v} image={stem}.png depth={stem}_gt.pfm labels={stem}_labels.png camera={stem}_cam.txt\n",
            stem = view_stem(v)
        ));
    }
    std::fs::write(out.join("scene.manifest"), manifest)
        .with_context(|| "writing scene manifest")?;
    Ok(())
}

/// Scene artifacts re-read from disk.
pub struct LoadedScene {
    pub name: String,
    pub prior: (f64, f64),
    pub seed: u64,
    pub views: Vec<RenderedView>,
}

pub fn load_scene(dir: &Path) -> Result<LoadedScene> {
    let manifest_path = dir.join("scene.manifest");
    let text = std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let mut name = String::new();
    let mut count = 0usize;
    let (mut width, mut height) = (0usize, 0usize);
    let mut prior = (0.0, 0.0);
    let mut seed = 0u64;
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        match k {
            "scene" => name = v.to_string(),
            "views" => count = v.parse().context("views in manifest")?,
            "width" => width = v.parse().context("width in manifest")?,
            "height" => height = v.parse().context("height in manifest")?,
            "seed" => seed = v.parse().context("seed in manifest")?,
            "prior" => {
                let mut it = v.split_whitespace();
                prior.0 = it.next().context("prior lo")?.parse()?;
                prior.1 = it.next().context("prior hi")?.parse()?;
            }
            _ => {}
        }
    }
    if count == 0 || width == 0 || height == 0 {
        bail!("scene manifest {} is incomplete", manifest_path.display());
    }
    let mut views = Vec::with_capacity(count);
    for v in 0..count {
        let image = read_gray_png(&image_path(dir, v))?;
        let depth = read_depth_pfm(&gt_depth_path(dir, v))?;
        let (lw, lh, labels) = read_label_png(&label_path(dir, v))?;
        if (lw, lh) != (width, height) || image.width != width || depth.width != width {
            bail!("artifact dimensions disagree for view {v}");
        }
        let camera: CameraModel = read_camera_file(&camera_path(dir, v))?
            .into_camera(width, height)?;
        views.push(RenderedView {
            image,
            depth,
            labels,
            camera,
        });
    }
    Ok(LoadedScene {
        name,
        prior,
        seed,
        views,
    })
}

fn stage_config(cfg: &RunConfig) -> StageConfig {
    StageConfig {
        hypothesis_counts: cfg.stages.clone(),
        shrink_factors: cfg.shrink.clone(),
        window: cfg.window,
        temperature: cfg.temperature,
        regression: cfg.regression,
    }
}

fn effective_delta(cfg: &RunConfig, prior: (f64, f64)) -> f64 {
    if cfg.delta > 0.0 {
        cfg.delta
    } else {
        stage_config(cfg).finest_spacing(prior) / 2.0
    }
}

/// Everything estimated for one reference view.
pub struct ViewEstimate {
    pub records: Vec<StageRecord>,
    pub depth: DepthMap,
    pub confidence: ConfidenceMap,
    pub chains: ChainMap,
    pub instance_log: String,
}

/// Run the cascade (and, when enabled, instance refinement) with one view
/// as reference and the rest as sources.
pub fn estimate_view(
    scene: &LoadedScene,
    ref_idx: usize,
    masks: &[InstanceMask],
    cfg: &RunConfig,
) -> Result<ViewEstimate> {
    let reference = CameraView {
        image: scene.views[ref_idx].image.clone(),
        camera: scene.views[ref_idx].camera.clone(),
    };
    let sources: Vec<CameraView> = scene
        .views
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != ref_idx)
        .map(|(_, v)| CameraView {
            image: v.image.clone(),
            camera: v.camera.clone(),
        })
        .collect();
    let stage_cfg = stage_config(cfg);
    stage_cfg.validate()?;
    let (w, h) = (reference.image.width, reference.image.height);
    let mut ranges = RangeMap::from_prior(w, h, scene.prior);
    let mut records = Vec::with_capacity(stage_cfg.stages());
    let mut chains = ChainMap::empty(w, h);
    let mut instance_log = String::new();
    for (k, &count) in stage_cfg.hypothesis_counts.iter().enumerate() {
        let record = run_stage(&reference, &sources, &ranges, count, &stage_cfg, k + 1)?;
        // The instance pass refines the coarse stage and its output seeds
        // the next stage's range narrowing.
        let mut seed = record.depth.clone();
        if k == 0 && cfg.ifads && !masks.is_empty() {
            let coarse_step = (scene.prior.1 - scene.prior.0) / (cfg.stages[0] - 1) as f64;
            let icfg = IfadsConfig {
                iterations: cfg.iterations,
                keep: if cfg.fiic { cfg.keep } else { 1.0 },
                margin_frac: cfg.margin_frac,
                min_margin: coarse_step,
                containment_threshold: crate::instance::CONTAINMENT_THRESHOLD,
                hypothesis_count: cfg.stages[0],
                window: cfg.window,
                temperature: cfg.temperature,
                regression: cfg.regression,
                scene_prior: scene.prior,
                inverted_order: cfg.inverted_order,
            };
            let (refined, inst_chains, steps) = ifads(&reference, &sources, masks, &seed, &icfg)?;
            seed = refined;
            chains = inst_chains;
            instance_log = format_instance_log(&steps);
        }
        if k + 1 < stage_cfg.stages() {
            ranges = narrow_range(&record.ranges, &seed, stage_cfg.shrink_factors[k], scene.prior)?;
        }
        records.push(record);
    }
    let depth = records.last().expect("at least one stage").depth.clone();
    let confidence = if cfg.cpc {
        conditional_confidence_map(&records, &chains, &depth, effective_delta(cfg, scene.prior))
    } else {
        let stage_maps: Vec<ConfidenceMap> =
            records.iter().map(|r| stage_confidence_max(&r.volume)).collect();
        average_confidence(&stage_maps)
    };
    Ok(ViewEstimate {
        records,
        depth,
        confidence,
        chains,
        instance_log,
    })
}

/// Estimate depth + confidence for every view and write the per-view PFMs,
/// the per-stage confidence report and the instance processing log.
pub fn cmd_depth(cfg: &RunConfig) -> Result<()> {
    let out = Path::new(&cfg.out_dir);
    let scene = load_scene(out)?;
    let mut report = String::new();
    let mut instance_log = String::new();
    for v in 0..scene.views.len() {
        let masks = if cfg.ifads {
            let paths = mask_paths_for_view(out, v);
            if paths.is_empty() {
                eprintln!("warning: no instance masks for view {v}; falling back to baseline");
                Vec::new()
            } else {
                load_masks(&paths, scene.views[v].depth.width, scene.views[v].depth.height)?
            }
        } else {
            Vec::new()
        };
        let est = estimate_view(&scene, v, &masks, cfg)
            .with_context(|| format!("estimating view {v}"))?;
        for record in &est.records {
            write_depth_pfm(&stage_depth_path(out, v, record.stage), &record.depth)?;
            if cfg.dump_volumes {
                crate::io::write_volume(
                    &out.join(format!("{}_stage{}.vol", view_stem(v), record.stage)),
                    &record.volume,
                )?;
            }
        }
        write_depth_pfm(&depth_path(out, v), &est.depth)?;
        write_confidence_pfm(&confidence_path(out, v), &est.confidence)?;
        for line in format_confidence_report(&est.records).lines() {
            report.push_str(&format!("view={v} {line}\n"));
        }
        for line in est.instance_log.lines() {
            instance_log.push_str(&format!("view={v} {line}\n"));
        }
    }
    std::fs::write(out.join("confidence_report.txt"), report)?;
    if cfg.ifads {
        std::fs::write(out.join("instance_log.txt"), instance_log)?;
    }
    Ok(())
}

/// Fuse the per-view depth maps and score them against the ground-truth
/// cloud; writes the PLY, appends the metrics CSV row and returns the
/// metrics.
pub fn cmd_fuse_eval(cfg: &RunConfig) -> Result<CloudMetrics> {
    let out = Path::new(&cfg.out_dir);
    let scene = load_scene(out)?;
    let fusion_cfg = FusionConfig {
        tau_conf: cfg.tau_conf,
        ..FusionConfig::default()
    };
    let mut depths = Vec::new();
    let mut confs = Vec::new();
    for v in 0..scene.views.len() {
        if cfg.gt_bypass {
            depths.push(scene.views[v].depth.clone());
            let n = scene.views[v].depth.data.len();
            confs.push(ConfidenceMap {
                width: scene.views[v].depth.width,
                height: scene.views[v].depth.height,
                data: vec![1.0; n],
            });
        } else {
            depths.push(read_depth_pfm(&depth_path(out, v))?);
            let (w, h, data) = read_pfm(&confidence_path(out, v))?;
            confs.push(ConfidenceMap {
                width: w,
                height: h,
                data,
            });
        }
    }
    let views: Vec<FusionView> = (0..scene.views.len())
        .map(|v| FusionView {
            depth: &depths[v],
            confidence: &confs[v],
            camera: &scene.views[v].camera,
        })
        .collect();
    let cloud = fuse(&views, &fusion_cfg)?;
    if cloud.points.is_empty() {
        bail!("fusion produced an empty cloud (scene {})", scene.name);
    }
    crate::io::write_ply(&out.join("fused.ply"), &cloud)?;
    let gt = gt_cloud(&scene);
    let metrics = accuracy_completeness(&cloud, &gt, DIST_CAP_MM);
    let variant = cfg.variant_name();
    append_metrics_csv(&out.join("metrics.csv"), &scene.name, variant, &metrics)?;
    println!("{}", metrics_record(&scene.name, variant, &metrics));
    Ok(metrics)
}

/// Ground-truth cloud for evaluation: every labeled pixel of every view
/// that is co-visible (same surface, unoccluded) in at least `min_support`
/// other views. Fusion can never produce points seen from fewer views, so
/// they would only distort completeness.
pub fn gt_cloud(scene: &LoadedScene) -> PointCloud {
    let min_support = FusionConfig::default().min_support;
    let mut points = Vec::new();
    for (v, view) in scene.views.iter().enumerate() {
        let w = view.depth.width;
        for i in 0..view.depth.height {
            for j in 0..w {
                let d = view.depth.data[i * w + j];
                if d <= 0.0 {
                    continue;
                }
                let world = match crate::geometry::backproject(
                    &crate::geometry::Pixel::new(i as f64, j as f64),
                    d,
                    &view.camera,
                ) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                let mut support = 0usize;
                for (s, other) in scene.views.iter().enumerate() {
                    if s == v {
                        continue;
                    }
                    let Ok((px, d_proj)) = crate::geometry::project(&world, &other.camera) else {
                        continue;
                    };
                    let (si, sj) = (px.row.round(), px.col.round());
                    if si < 0.0
                        || sj < 0.0
                        || si as usize >= other.depth.height
                        || sj as usize >= other.depth.width
                    {
                        continue;
                    }
                    let d_other = other.depth.data[si as usize * other.depth.width + sj as usize];
                    if d_other > 0.0 && (d_other - d_proj).abs() / d_proj <= 0.01 {
                        support += 1;
                    }
                }
                if support >= min_support {
                    points.push(world);
                }
            }
        }
    }
    PointCloud { points }
}

/// Artifacts hashed into the run manifest.
fn run_artifacts(out: &Path, views: usize) -> Vec<PathBuf> {
    let mut paths = Vec::new();
    for v in 0..views {
        for p in [depth_path(out, v), confidence_path(out, v)] {
            if p.exists() {
                paths.push(p);
            }
        }
    }
    for name in ["fused.ply", "metrics.csv"] {
        let p = out.join(name);
        if p.exists() {
            paths.push(p);
        }
    }
    paths
}

/// render -> depth -> fuse -> eval, plus the reproducibility manifest.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<CloudMetrics> {
    cmd_render(cfg)?;
    cmd_depth(cfg)?;
    let metrics = cmd_fuse_eval(cfg)?;
    let out = Path::new(&cfg.out_dir);
    let artifacts = run_artifacts(out, cfg.views);
    let refs: Vec<&Path> = artifacts.iter().map(|p| p.as_path()).collect();
    write_run_manifest(&out.join("run.manifest"), &cfg.manifest_lines(), &refs)?;
    Ok(metrics)
}

/// The four component-ablation variants in table order.
pub fn ablation_variants(base: &RunConfig) -> Vec<RunConfig> {
    let mut variants = Vec::new();
    for (ifads, fiic, cpc) in [
        (false, false, false),
        (true, false, false),
        (true, true, false),
        (true, true, true),
    ] {
        let mut cfg = base.clone();
        cfg.ifads = ifads;
        cfg.fiic = fiic;
        cfg.cpc = cpc;
        variants.push(cfg);
    }
    variants
}

/// Run all four variants into per-variant subdirectories; partial failures
/// are recorded and the run continues. Returns (variant, metrics) for the
/// successes.
pub fn cmd_ablate(base: &RunConfig) -> Result<Vec<(String, CloudMetrics)>> {
    let out = Path::new(&base.out_dir);
    std::fs::create_dir_all(out)?;
    let mut results = Vec::new();
    let mut summary = String::new();
    for mut cfg in ablation_variants(base) {
        let name = cfg.variant_name().to_string();
        cfg.out_dir = out.join(&name).display().to_string();
        match cmd_pipeline(&cfg) {
            Ok(m) => {
                append_metrics_csv(&out.join("metrics.csv"), &cfg.scene, &name, &m)?;
                summary.push_str(&format!("{}\n", metrics_record(&cfg.scene, &name, &m)));
                results.push((name, m));
            }
            Err(e) => {
                summary.push_str(&format!("scene={} variant={name} failed: {e:#}\n", cfg.scene));
                eprintln!("variant {name} failed: {e:#}");
            }
        }
    }
    if let Some((_, base_m)) = results.iter().find(|(n, _)| n == "baseline") {
        for (name, m) in &results {
            if name != "baseline" {
                summary.push_str(&format!(
                    "delta variant={name} overall={:+.6}\n",
                    m.overall - base_m.overall
                ));
            }
        }
    }
    std::fs::write(out.join("ablation_summary.txt"), summary)?;
    Ok(results)
}
