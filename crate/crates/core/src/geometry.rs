//! Pinhole camera math for plane sweeps: projection, back-projection and
//! cross-view warping, plus the MVSNet-style camera text file format.
//!
//! Conventions: pixels are `(row, col)` with the pixel center on integer
//! coordinates and the origin at the top-left; depths are millimeters along
//! the camera z axis; all math here is `f64`.

use nalgebra::{Matrix3, Matrix4, Vector3};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Depths below this are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point has non-positive depth {0} in the camera frame")]
    NonPositiveDepth(f64),
    #[error("warped point lies behind the source camera (depth {0})")]
    BehindCamera(f64),
    #[error("rotation is not orthonormal (max deviation {0})")]
    NotOrthonormal(f64),
    #[error("rotation determinant is {0}, expected 1")]
    NotProperRotation(f64),
    #[error("intrinsics invalid: {0}")]
    BadIntrinsics(String),
    #[error("camera file {path}: {msg}")]
    BadCameraFile { path: String, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Sub-pixel image location, `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub row: f64,
    pub col: f64,
}

impl Pixel {
    pub fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }

    pub fn is_finite(&self) -> bool {
        self.row.is_finite() && self.col.is_finite()
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        ((self.row - other.row).powi(2) + (self.col - other.col).powi(2)).sqrt()
    }
}

/// Calibrated pinhole camera: intrinsics plus a world-to-camera rigid pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            intrinsics,
            rotation,
            translation,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let gram = self.rotation.transpose() * self.rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::NotOrthonormal(dev));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::NotProperRotation(det));
        }
        let k = &self.intrinsics;
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(GeometryError::BadIntrinsics(format!(
                "non-positive focal lengths ({}, {})",
                k[(0, 0)],
                k[(1, 1)]
            )));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(GeometryError::BadIntrinsics(
                "nonzero entries below the diagonal".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::BadIntrinsics("zero image dimensions".into()));
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }

    /// World point -> camera frame.
    pub fn to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// 4x4 world-to-camera matrix.
    pub fn extrinsic(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Perspective projection of a world point. Returns the pixel and the
/// camera-frame depth in mm.
pub fn project(point: &Vector3<f64>, cam: &CameraModel) -> Result<(Pixel, f64), GeometryError> {
    let pc = cam.to_camera(point);
    if pc.z <= MIN_DEPTH {
        return Err(GeometryError::NonPositiveDepth(pc.z));
    }
    let k = &cam.intrinsics;
    let col = k[(0, 0)] * pc.x / pc.z + k[(0, 1)] * pc.y / pc.z + k[(0, 2)];
    let row = k[(1, 1)] * pc.y / pc.z + k[(1, 2)];
    Ok((Pixel::new(row, col), pc.z))
}

/// Inverse of [`project`]: pixel plus depth back to a world point.
pub fn backproject(px: &Pixel, depth: f64, cam: &CameraModel) -> Result<Vector3<f64>, GeometryError> {
    if depth <= MIN_DEPTH {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    let k = &cam.intrinsics;
    let y = (px.row - k[(1, 2)]) / k[(1, 1)];
    let x = (px.col - k[(0, 2)] - k[(0, 1)] * y) / k[(0, 0)];
    let pc = Vector3::new(x * depth, y * depth, depth);
    Ok(cam.rotation.transpose() * (pc - cam.translation))
}

/// Warp a reference pixel at a hypothesized depth into a source view.
pub fn warp(
    px: &Pixel,
    depth: f64,
    reference: &CameraModel,
    source: &CameraModel,
) -> Result<Pixel, GeometryError> {
    let world = backproject(px, depth, reference)?;
    match project(&world, source) {
        Ok((p, _)) => Ok(p),
        Err(GeometryError::NonPositiveDepth(z)) => Err(GeometryError::BehindCamera(z)),
        Err(e) => Err(e),
    }
}

/// Precomputed reference-to-source warp. Factors the per-pixel work of
/// [`warp`] so the plane-sweep inner loop avoids rebuilding matrices.
///
/// For a reference pixel `u` at depth `d`: the source homogeneous pixel is
/// `M * (col, row, 1)^T * d + b`, with `M = K_s R_s R_r^T K_r^{-1}` and
/// `b = K_s (t_s - R_s R_r^T t_r)`.
pub struct WarpMap {
    m: Matrix3<f64>,
    b: Vector3<f64>,
}

impl WarpMap {
    pub fn new(reference: &CameraModel, source: &CameraModel) -> Self {
        let r_rel = source.rotation * reference.rotation.transpose();
        let k_ref_inv = reference
            .intrinsics
            .try_inverse()
            .expect("upper-triangular intrinsics with positive focals are invertible");
        let m = source.intrinsics * r_rel * k_ref_inv;
        let b = source.intrinsics * (source.translation - r_rel * reference.translation);
        Self { m, b }
    }

    /// Returns the warped pixel and its source-frame depth, or `None` when
    /// the point falls behind the source camera.
    #[inline]
    pub fn apply(&self, px: &Pixel, depth: f64) -> Option<(Pixel, f64)> {
        let h = self.m * Vector3::new(px.col, px.row, 1.0) * depth + self.b;
        if h.z <= MIN_DEPTH {
            return None;
        }
        Some((Pixel::new(h.y / h.z, h.x / h.z), h.z))
    }
}

/// Contents of one MVSNet-style camera text file.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFile {
    pub extrinsic: Matrix4<f64>,
    pub intrinsics: Matrix3<f64>,
    pub depth_min: f64,
    pub depth_interval: f64,
}

impl CameraFile {
    pub fn from_camera(cam: &CameraModel, depth_min: f64, depth_interval: f64) -> Self {
        Self {
            extrinsic: cam.extrinsic(),
            intrinsics: cam.intrinsics,
            depth_min,
            depth_interval,
        }
    }

    /// Attach image dimensions (the file format does not carry them).
    pub fn into_camera(self, width: usize, height: usize) -> Result<CameraModel, GeometryError> {
        let rotation = self.extrinsic.fixed_view::<3, 3>(0, 0).into_owned();
        let translation = self.extrinsic.fixed_view::<3, 1>(0, 3).into_owned();
        CameraModel::new(self.intrinsics, rotation, translation, width, height)
    }
}

/// Parse the camera text format: "extrinsic" + 4x4, "intrinsic" + 3x3,
/// then a "d_min d_interval" line. Whitespace-tolerant.
pub fn parse_camera_file(text: &str, path: &str) -> Result<CameraFile, GeometryError> {
    let bad = |msg: &str| GeometryError::BadCameraFile {
        path: path.to_string(),
        msg: msg.to_string(),
    };
    let mut tokens = text.split_whitespace().peekable();
    if !tokens.next().map_or(false, |t| t.eq_ignore_ascii_case("extrinsic")) {
        return Err(bad("expected leading 'extrinsic' keyword"));
    }
    let mut ext = [0.0f64; 16];
    for v in ext.iter_mut() {
        let tok = tokens.next().ok_or_else(|| bad("truncated extrinsic matrix"))?;
        *v = tok
            .parse()
            .map_err(|_| bad(&format!("bad extrinsic entry '{tok}'")))?;
    }
    if !tokens.next().map_or(false, |t| t.eq_ignore_ascii_case("intrinsic")) {
        return Err(bad("expected 'intrinsic' keyword"));
    }
    let mut intr = [0.0f64; 9];
    for v in intr.iter_mut() {
        let tok = tokens.next().ok_or_else(|| bad("truncated intrinsic matrix"))?;
        *v = tok
            .parse()
            .map_err(|_| bad(&format!("bad intrinsic entry '{tok}'")))?;
    }
    let depth_min: f64 = tokens
        .next()
        .ok_or_else(|| bad("missing depth line"))?
        .parse()
        .map_err(|_| bad("bad d_min value"))?;
    let depth_interval: f64 = tokens
        .next()
        .ok_or_else(|| bad("missing d_interval"))?
        .parse()
        .map_err(|_| bad("bad d_interval value"))?;
    if tokens.peek().is_some() {
        return Err(bad("trailing tokens after depth line"));
    }
    Ok(CameraFile {
        extrinsic: Matrix4::from_row_slice(&ext),
        intrinsics: Matrix3::from_row_slice(&intr),
        depth_min,
        depth_interval,
    })
}

pub fn read_camera_file(path: &Path) -> Result<CameraFile, GeometryError> {
    let text = std::fs::read_to_string(path).map_err(|source| GeometryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_camera_file(&text, &path.display().to_string())
}

pub fn format_camera_file(file: &CameraFile) -> String {
    let mut s = String::new();
    s.push_str("extrinsic\n");
    for r in 0..4 {
        for c in 0..4 {
            if c > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.17e}", file.extrinsic[(r, c)]);
        }
        s.push('\n');
    }
    s.push_str("\nintrinsic\n");
    for r in 0..3 {
        for c in 0..3 {
            if c > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.17e}", file.intrinsics[(r, c)]);
        }
        s.push('\n');
    }
    let _ = write!(s, "\n{:.17e} {:.17e}\n", file.depth_min, file.depth_interval);
    s
}

pub fn write_camera_file(path: &Path, file: &CameraFile) -> Result<(), GeometryError> {
    std::fs::write(path, format_camera_file(file)).map_err(|source| GeometryError::Io {
        path: path.display().to_string(),
        source,
    })
}
