//! Synthetic test-bed factory: ray-cast multi-view renders of textured
//! primitives with exact ground-truth depth, instance labels and cameras.

use crate::cascade::DepthMap;
use crate::fusion::PointCloud;
use crate::geometry::{backproject, CameraModel, Pixel};
use crate::raster::GrayImage;
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("degenerate scene: {0}")]
    DegenerateSpec(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

/// Multi-frequency sinusoid texture; analytic, viewpoint-consistent and
/// reproducible without stored assets.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureSpec {
    pub albedo: f64,
    /// (cycles/mm along u, cycles/mm along v, phase, amplitude)
    pub waves: Vec<(f64, f64, f64, f64)>,
}

impl TextureSpec {
    /// Default texture bank, phases offset per primitive and seed so
    /// instances differ. Wavelengths stay above ~30 mm (about 15 pixels at
    /// working distance) so bilinear resampling of a rendered view stays
    /// within 2 gray levels of the true value; amplitudes sum below the
    /// clipping headroom so the sinusoids never crease.
    pub fn standard(albedo: f64, id: u16, seed: u64) -> Self {
        let mut waves = Vec::new();
        let base = (seed.wrapping_mul(0x9e3779b97f4a7c15) ^ (id as u64) << 17) as f64;
        let params = [
            (0.018, 0.011, 0.18),
            (0.0035, 0.024, 0.09),
            (0.030, 0.004, 0.05),
            (0.012, 0.016, 0.06),
            // Short-wavelength detail sharpens window matching; amplitudes
            // stay small so resampling error keeps within budget.
            (0.045, 0.028, 0.03),
            (0.026, 0.047, 0.03),
        ];
        for (k, &(fu, fv, amp)) in params.iter().enumerate() {
            let phase = (base / 1e9 + k as f64 * 1.7 + id as f64 * 2.3).rem_euclid(std::f64::consts::TAU);
            waves.push((fu, fv, phase, amp));
        }
        Self { albedo, waves }
    }

    pub fn value(&self, u: f64, v: f64) -> f64 {
        let mut s = 0.0;
        for &(fu, fv, phase, amp) in &self.waves {
            s += amp * (std::f64::consts::TAU * (fu * u + fv * v) + phase).sin();
        }
        (self.albedo * (0.52 + s)).clamp(0.0, 1.0)
    }
}

/// Geometric shape of a primitive, world coordinates in mm.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Finite textured rectangle: center, two orthonormal in-plane axes and
    /// half extents along them.
    Rect {
        center: Vector3<f64>,
        u_axis: Vector3<f64>,
        v_axis: Vector3<f64>,
        half_u: f64,
        half_v: f64,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Axis-aligned box.
    Boxed {
        min: Vector3<f64>,
        max: Vector3<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePrimitive {
    pub id: u16,
    /// Instances sharing a group also emit a union mask, which nests the
    /// member masks under it.
    pub group: Option<u16>,
    /// Background surfaces get labels and ground truth but no instance mask.
    pub background: bool,
    pub shape: Shape,
    pub albedo: f64,
}

/// Camera arc: `count` views orbiting `target` at the given angular spread,
/// starting from a frontal position at `distance` mm.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub count: usize,
    pub target: Vector3<f64>,
    pub distance: f64,
    pub spread_deg: f64,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub primitives: Vec<ScenePrimitive>,
    pub rig: CameraRig,
    pub depth_prior: (f64, f64),
    pub light: Vector3<f64>,
}

/// One rendered view: shaded grayscale image, exact depth, instance labels
/// and the camera that produced them.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub image: GrayImage,
    pub depth: DepthMap,
    pub labels: Vec<u16>,
    pub camera: CameraModel,
}

struct Hit {
    t: f64,
    normal: Vector3<f64>,
    tex_uv: (f64, f64),
}

fn intersect(shape: &Shape, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    match shape {
        Shape::Rect {
            center,
            u_axis,
            v_axis,
            half_u,
            half_v,
        } => {
            let normal = u_axis.cross(v_axis);
            let denom = dir.dot(&normal);
            if denom.abs() < 1e-12 {
                return None;
            }
            let t = (center - origin).dot(&normal) / denom;
            if t <= 1e-9 {
                return None;
            }
            let p = origin + dir * t;
            let rel = p - center;
            let u = rel.dot(u_axis);
            let v = rel.dot(v_axis);
            if u.abs() > *half_u || v.abs() > *half_v {
                return None;
            }
            Some(Hit {
                t,
                normal,
                tex_uv: (u, v),
            })
        }
        Shape::Sphere { center, radius } => {
            let oc = origin - center;
            let a = dir.dot(dir);
            let b = 2.0 * oc.dot(dir);
            let c = oc.dot(&oc) - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let mut t = (-b - sq) / (2.0 * a);
            if t <= 1e-9 {
                t = (-b + sq) / (2.0 * a);
            }
            if t <= 1e-9 {
                return None;
            }
            let p = origin + dir * t;
            let n = (p - center) / *radius;
            // Spherical texture coordinates scaled to surface mm.
            let theta = n.y.clamp(-1.0, 1.0).asin();
            let phi = n.x.atan2(n.z);
            Some(Hit {
                t,
                normal: n,
                tex_uv: (phi * radius, theta * radius),
            })
        }
        Shape::Boxed { min, max } => {
            let mut t_enter = f64::NEG_INFINITY;
            let mut t_exit = f64::INFINITY;
            let mut axis_enter = 0;
            for axis in 0..3 {
                let d = dir[axis];
                if d.abs() < 1e-15 {
                    if origin[axis] < min[axis] || origin[axis] > max[axis] {
                        return None;
                    }
                    continue;
                }
                let mut t0 = (min[axis] - origin[axis]) / d;
                let mut t1 = (max[axis] - origin[axis]) / d;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                if t0 > t_enter {
                    t_enter = t0;
                    axis_enter = axis;
                }
                t_exit = t_exit.min(t1);
                if t_enter > t_exit {
                    return None;
                }
            }
            let t = if t_enter > 1e-9 { t_enter } else { t_exit };
            if t <= 1e-9 || t_enter <= 1e-9 {
                return None; // inside or behind
            }
            let p = origin + dir * t;
            let mut normal = Vector3::zeros();
            normal[axis_enter] = if dir[axis_enter] > 0.0 { -1.0 } else { 1.0 };
            let (ua, va) = match axis_enter {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            Some(Hit {
                t,
                normal,
                tex_uv: (p[ua], p[va]),
            })
        }
    }
}

fn look_at_camera(
    position: Vector3<f64>,
    target: Vector3<f64>,
    rig: &CameraRig,
) -> CameraModel {
    let z = (target - position).normalize();
    let up = Vector3::new(0.0, -1.0, 0.0); // image rows grow downward
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let translation = -rotation * position;
    let intr = Matrix3::new(
        rig.focal,
        0.0,
        (rig.width as f64 - 1.0) / 2.0,
        0.0,
        rig.focal,
        (rig.height as f64 - 1.0) / 2.0,
        0.0,
        0.0,
        1.0,
    );
    CameraModel::new(intr, rotation, translation, rig.width, rig.height)
        .expect("constructed rotation is orthonormal")
}

/// Cameras for a scene's rig.
pub fn rig_cameras(rig: &CameraRig) -> Vec<CameraModel> {
    let mut cams = Vec::with_capacity(rig.count);
    let spread = rig.spread_deg.to_radians();
    for v in 0..rig.count {
        let angle = if rig.count == 1 {
            0.0
        } else {
            -spread / 2.0 + spread * v as f64 / (rig.count - 1) as f64
        };
        let offset = Vector3::new(angle.sin(), 0.0, -angle.cos()) * rig.distance;
        cams.push(look_at_camera(rig.target + offset, rig.target, rig));
    }
    cams
}

/// Ray-cast all views of a scene. Deterministic for a fixed spec and seed
/// (the seed only perturbs texture phases).
pub fn render(spec: &SceneSpec, seed: u64) -> Result<Vec<RenderedView>, SceneError> {
    if spec.primitives.is_empty() {
        return Err(SceneError::DegenerateSpec("no primitives".into()));
    }
    let textures: Vec<TextureSpec> = spec
        .primitives
        .iter()
        .map(|p| TextureSpec::standard(p.albedo, p.id, seed))
        .collect();
    let light = spec.light.normalize();
    let cams = rig_cameras(&spec.rig);
    let mut views = Vec::with_capacity(cams.len());
    let mut hits_per_id = vec![0usize; spec.primitives.len()];
    for camera in cams {
        let (w, h) = (camera.width, camera.height);
        let mut image = GrayImage::new(w, h);
        let mut depth = DepthMap::invalid(w, h);
        let mut labels = vec![0u16; w * h];
        let origin = camera.center();
        let k = &camera.intrinsics;
        let r_t = camera.rotation.transpose();
        for i in 0..h {
            for j in 0..w {
                // Camera-frame ray with unit z, so t equals camera depth.
                let y = (i as f64 - k[(1, 2)]) / k[(1, 1)];
                let x = (j as f64 - k[(0, 2)] - k[(0, 1)] * y) / k[(0, 0)];
                let dir = r_t * Vector3::new(x, y, 1.0);
                let mut best: Option<(usize, Hit)> = None;
                for (pi, prim) in spec.primitives.iter().enumerate() {
                    if let Some(hit) = intersect(&prim.shape, &origin, &dir) {
                        if best.as_ref().map_or(true, |(_, b)| hit.t < b.t) {
                            best = Some((pi, hit));
                        }
                    }
                }
                if let Some((pi, hit)) = best {
                    hits_per_id[pi] += 1;
                    let prim = &spec.primitives[pi];
                    let tex = textures[pi].value(hit.tex_uv.0, hit.tex_uv.1);
                    let shade = 0.35 + 0.65 * hit.normal.normalize().dot(&light).abs();
                    image.set(i, j, (tex * shade) as f32);
                    depth.data[i * w + j] = hit.t;
                    labels[i * w + j] = prim.id;
                }
            }
        }
        views.push(RenderedView {
            image,
            depth,
            labels,
            camera,
        });
    }
    if hits_per_id.iter().all(|&c| c == 0) {
        return Err(SceneError::DegenerateSpec("no visible primitive".into()));
    }
    for (pi, &c) in hits_per_id.iter().enumerate() {
        if c == 0 {
            return Err(SceneError::DegenerateSpec(format!(
                "primitive id {} is outside every frustum",
                spec.primitives[pi].id
            )));
        }
    }
    Ok(views)
}

/// Ground-truth point cloud from every `stride`-th hit pixel.
pub fn gt_point_cloud(views: &[RenderedView], stride: usize) -> PointCloud {
    assert!(stride >= 1);
    let mut points = Vec::new();
    for view in views {
        let w = view.depth.width;
        for i in (0..view.depth.height).step_by(stride) {
            for j in (0..w).step_by(stride) {
                let d = view.depth.data[i * w + j];
                if d > 0.0 {
                    let p = backproject(&Pixel::new(i as f64, j as f64), d, &view.camera)
                        .expect("positive depth");
                    points.push(p);
                }
            }
        }
    }
    PointCloud { points }
}

/// Binary rasters for every instance plus one union raster per group; these
/// provide the containment hierarchy for the instance pass.
pub fn view_masks(spec: &SceneSpec, view: &RenderedView) -> Vec<(u16, Vec<bool>)> {
    let n = view.labels.len();
    let mut out = Vec::new();
    for prim in &spec.primitives {
        if prim.background {
            continue;
        }
        let bits: Vec<bool> = view.labels.iter().map(|&l| l == prim.id).collect();
        if bits.iter().any(|&b| b) {
            out.push((prim.id, bits));
        }
    }
    let mut groups: Vec<u16> = spec.primitives.iter().filter_map(|p| p.group).collect();
    groups.sort_unstable();
    groups.dedup();
    for g in groups {
        let members: Vec<u16> = spec
            .primitives
            .iter()
            .filter(|p| p.group == Some(g))
            .map(|p| p.id)
            .collect();
        let mut bits = vec![false; n];
        for (idx, &l) in view.labels.iter().enumerate() {
            if members.contains(&l) {
                bits[idx] = true;
            }
        }
        if bits.iter().any(|&b| b) {
            // Group masks get ids above the instance range.
            out.push((1000 + g, bits));
        }
    }
    out
}

fn default_rig() -> CameraRig {
    CameraRig {
        count: 5,
        target: Vector3::new(0.0, 0.0, 650.0),
        distance: 650.0,
        spread_deg: 40.0,
        focal: 400.0,
        width: 320,
        height: 256,
    }
}

const PRIOR: (f64, f64) = (425.0, 935.0);
const LIGHT: Vector3<f64> = Vector3::new(0.35, 0.5, -0.8);

fn tilted_wall(id: u16, z: f64, tilt_deg: f64, half: f64) -> ScenePrimitive {
    let tilt = tilt_deg.to_radians();
    // Rotate the in-plane u axis around world y so depth varies laterally.
    let u_axis = Vector3::new(tilt.cos(), 0.0, tilt.sin());
    let v_axis = Vector3::new(0.0, 1.0, 0.0);
    ScenePrimitive {
        id,
        group: None,
        background: true,
        shape: Shape::Rect {
            center: Vector3::new(0.0, 0.0, z),
            u_axis,
            v_axis,
            half_u: half,
            half_v: half,
        },
        albedo: 0.9,
    }
}

/// Built-in scenes used across the verification suites.
pub fn presets() -> Vec<SceneSpec> {
    vec![plane_wall(), shelf(), orchard()]
}

pub fn preset(name: &str) -> Result<SceneSpec, SceneError> {
    presets()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| SceneError::UnknownPreset(name.to_string()))
}

/// One gently tilted textured wall filling the frame.
pub fn plane_wall() -> SceneSpec {
    SceneSpec {
        name: "plane-wall".into(),
        primitives: vec![tilted_wall(1, 660.0, 14.0, 800.0)],
        rig: default_rig(),
        depth_prior: PRIOR,
        light: LIGHT,
    }
}

/// Back wall plus three boxes at staggered depths; two of the boxes are
/// stacked and also emit a union mask, giving a nested mask pair.
pub fn shelf() -> SceneSpec {
    let boxed = |id, group, min: (f64, f64, f64), max: (f64, f64, f64), albedo| ScenePrimitive {
        id,
        group,
        background: false,
        shape: Shape::Boxed {
            min: Vector3::new(min.0, min.1, min.2),
            max: Vector3::new(max.0, max.1, max.2),
        },
        albedo,
    };
    SceneSpec {
        name: "shelf".into(),
        primitives: vec![
            tilted_wall(1, 840.0, 0.0, 280.0),
            boxed(2, None, (-180.0, -90.0, 530.0), (-60.0, 60.0, 575.0), 0.95),
            // Stacked pair: the lower box and the smaller one resting on it
            // share a group, whose union mask contains both.
            boxed(3, Some(1), (30.0, -10.0, 640.0), (170.0, 110.0, 688.0), 0.85),
            boxed(4, Some(1), (60.0, -95.0, 650.0), (140.0, -10.0, 690.0), 0.9),
        ],
        rig: default_rig(),
        depth_prior: PRIOR,
        light: LIGHT,
    }
}

/// Sphere in front of a box in front of a wall, with a deliberate
/// occlusion.
pub fn orchard() -> SceneSpec {
    SceneSpec {
        name: "orchard".into(),
        primitives: vec![
            tilted_wall(1, 840.0, 0.0, 280.0),
            ScenePrimitive {
                id: 2,
                group: None,
                background: false,
                shape: Shape::Boxed {
                    min: Vector3::new(-40.0, -85.0, 690.0),
                    max: Vector3::new(150.0, 85.0, 780.0),
                },
                albedo: 0.9,
            },
            ScenePrimitive {
                id: 3,
                group: None,
                background: false,
                shape: Shape::Sphere {
                    center: Vector3::new(-45.0, 10.0, 575.0),
                    radius: 58.0,
                },
                albedo: 0.95,
            },
        ],
        rig: default_rig(),
        depth_prior: PRIOR,
        light: LIGHT,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;

    fn frontal_plane_scene(z: f64) -> SceneSpec {
        SceneSpec {
            name: "test-plane".into(),
            primitives: vec![tilted_wall(1, z, 0.0, 900.0)],
            rig: default_rig(),
            depth_prior: PRIOR,
            light: LIGHT,
        }
    }

    #[test]
    fn frontal_plane_depth_from_identity_style_view() {
        // With a single frontal camera looking straight at a fronto-parallel
        // plane, the center view's depth at the principal point equals the
        // plane distance.
        let mut spec = frontal_plane_scene(600.0);
        spec.rig.count = 1;
        spec.rig.distance = 600.0;
        spec.rig.target = Vector3::new(0.0, 0.0, 600.0);
        let views = render(&spec, 0).unwrap();
        let v = &views[0];
        // Fronto-parallel plane at z=600 seen from the origin: every hit
        // pixel carries depth 600 up to ray parametrization (unit-z rays).
        for i in 0..v.depth.height {
            for j in 0..v.depth.width {
                if v.depth.data[i * v.depth.width + j] > 0.0 {
                    assert!((v.depth.data[i * v.depth.width + j] - 600.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sphere_minimum_depth_is_tangent_distance() {
        let spec = SceneSpec {
            name: "sphere".into(),
            primitives: vec![ScenePrimitive {
                id: 1,
                group: None,
                background: false,
                shape: Shape::Sphere {
                    center: Vector3::new(0.0, 0.0, 650.0),
                    radius: 70.0,
                },
                albedo: 0.9,
            }],
            rig: CameraRig {
                count: 1,
                ..default_rig()
            },
            depth_prior: PRIOR,
            light: LIGHT,
        };
        let views = render(&spec, 0).unwrap();
        let min = views[0]
            .depth
            .data
            .iter()
            .cloned()
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min);
        // Pixel rays straddle the tangent point, so the sampled minimum sits
        // just above the analytic 580 mm.
        assert!(min >= 580.0 - 1e-9 && min < 580.1, "min depth {min}");
    }

    #[test]
    fn disjoint_primitives_partition_labels() {
        let views = render(&shelf(), 0).unwrap();
        for v in &views {
            for (idx, &l) in v.labels.iter().enumerate() {
                assert_eq!(l != 0, v.depth.data[idx] > 0.0);
            }
        }
        let labels: std::collections::BTreeSet<u16> =
            views[0].labels.iter().cloned().filter(|&l| l != 0).collect();
        assert_eq!(labels.len(), 4);
    }

    #[test]
    fn gt_depths_lie_in_prior() {
        for spec in presets() {
            let views = render(&spec, 7).unwrap();
            for v in &views {
                for &d in &v.depth.data {
                    assert!(d == 0.0 || (d >= PRIOR.0 && d <= PRIOR.1), "depth {d} outside prior");
                }
            }
        }
    }

    #[test]
    fn gt_cloud_points_satisfy_plane_equation() {
        let spec = frontal_plane_scene(660.0);
        let views = render(&spec, 0).unwrap();
        let cloud = gt_point_cloud(&views, 2);
        assert!(!cloud.points.is_empty());
        for p in &cloud.points {
            assert!((p.z - 660.0).abs() < 1e-6, "plane violated by {}", p.z);
        }
    }

    #[test]
    fn photo_consistency_across_views() {
        // A ground-truth surface point must look (nearly) the same from any
        // two views that see it.
        let spec = plane_wall();
        let views = render(&spec, 3).unwrap();
        let a = &views[0];
        let b = &views[2];
        let w = a.depth.width;
        let mut checked = 0;
        for i in (10..a.depth.height - 10).step_by(7) {
            for j in (10..w - 10).step_by(7) {
                let d = a.depth.data[i * w + j];
                if d == 0.0 {
                    continue;
                }
                let world = backproject(&Pixel::new(i as f64, j as f64), d, &a.camera).unwrap();
                let Ok((px, depth_b)) = project(&world, &b.camera) else {
                    continue;
                };
                let (bi, bj) = (px.row.round(), px.col.round());
                if bi < 1.0 || bj < 1.0 || bi >= (b.depth.height - 1) as f64 || bj >= (w - 1) as f64 {
                    continue;
                }
                let d_b = b.depth.data[bi as usize * w + bj as usize];
                // Same surface (not occluded in b)?
                if d_b == 0.0 || (d_b - depth_b).abs() > 1.5 {
                    continue;
                }
                let va = a.image.at(i, j);
                let vb = b.image.bilinear(px.row, px.col);
                assert!(
                    (va - vb).abs() <= 2.0 / 255.0,
                    "photo inconsistency {} vs {}",
                    va * 255.0,
                    vb * 255.0
                );
                checked += 1;
            }
        }
        assert!(checked > 200, "too few co-visible samples ({checked})");
    }

    #[test]
    fn renders_are_deterministic() {
        let a = render(&orchard(), 11).unwrap();
        let b = render(&orchard(), 11).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image.data, y.image.data);
            assert_eq!(x.depth.data, y.depth.data);
            assert_eq!(x.labels, y.labels);
        }
    }

    #[test]
    fn instance_spans_smaller_than_scene_span() {
        for spec in presets() {
            let views = render(&spec, 5).unwrap();
            for v in &views {
                let mut scene = (f64::INFINITY, f64::NEG_INFINITY);
                let mut per: std::collections::BTreeMap<u16, (f64, f64)> = Default::default();
                for (idx, &l) in v.labels.iter().enumerate() {
                    if l == 0 {
                        continue;
                    }
                    let d = v.depth.data[idx];
                    scene = (scene.0.min(d), scene.1.max(d));
                    let e = per.entry(l).or_insert((f64::INFINITY, f64::NEG_INFINITY));
                    *e = (e.0.min(d), e.1.max(d));
                }
                let scene_span = scene.1 - scene.0;
                if per.len() < 2 {
                    continue; // single instance fills the view
                }
                for (&l, &(lo, hi)) in &per {
                    assert!(
                        hi - lo <= scene_span,
                        "instance {l} span {} exceeds scene span {scene_span} in {}",
                        hi - lo,
                        spec.name,
                    );
                }
            }
        }
    }

    #[test]
    fn shelf_emits_nested_group_mask() {
        let spec = shelf();
        let views = render(&spec, 0).unwrap();
        let masks = view_masks(&spec, &views[2]);
        let group = masks.iter().find(|(id, _)| *id >= 1000).expect("group mask");
        let part = masks.iter().find(|(id, _)| *id == 3).expect("member mask");
        let inter = group
            .1
            .iter()
            .zip(&part.1)
            .filter(|(&g, &p)| g && p)
            .count();
        let area_p = part.1.iter().filter(|&&b| b).count();
        assert!(inter as f64 / area_p as f64 >= 0.9);
        assert!(group.1.iter().filter(|&&b| b).count() > area_p);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let mut spec = plane_wall();
        spec.primitives.clear();
        assert!(matches!(render(&spec, 0), Err(SceneError::DegenerateSpec(_))));

        let mut spec = plane_wall();
        // Wall moved behind the cameras.
        if let Shape::Rect { center, .. } = &mut spec.primitives[0].shape {
            center.z = -2000.0;
        }
        assert!(render(&spec, 0).is_err());
    }
}
