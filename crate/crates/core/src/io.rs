//! On-disk artifact formats: PFM maps, binary PLY clouds, raw volume dumps,
//! run manifests and the metrics CSV.

use crate::cascade::DepthMap;
use crate::confidence::ConfidenceMap;
use crate::costvolume::ProbabilityVolume;
use crate::fusion::{CloudMetrics, PointCloud};
use nalgebra::Vector3;
use sha2::{Digest, Sha256};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed {format}: {detail}")]
    Malformed {
        path: String,
        format: &'static str,
        detail: String,
    },
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, format: &'static str, detail: impl Into<String>) -> IoError {
    IoError::Malformed {
        path: path.display().to_string(),
        format,
        detail: detail.into(),
    }
}

/// Write a single-channel PFM ("Pf", negative scale = little-endian, rows
/// bottom-up).
pub fn write_pfm(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<(), IoError> {
    assert_eq!(data.len(), width * height);
    let file = File::create(path).map_err(|e| file_err(path, e))?;
    let mut w = BufWriter::new(file);
    let wr = (|| {
        write!(w, "Pf\n{} {}\n-1.0\n", width, height)?;
        for row in (0..height).rev() {
            for col in 0..width {
                w.write_all(&data[row * width + col].to_le_bytes())?;
            }
        }
        w.flush()
    })();
    wr.map_err(|e| file_err(path, e))
}

/// Read a single-channel PFM. Returns (width, height, row-major top-down
/// data).
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>), IoError> {
    let file = File::open(path).map_err(|e| file_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = String::new();
    for _ in 0..3 {
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| file_err(path, e))?;
        header.push_str(&line);
    }
    let mut tokens = header.split_whitespace();
    let magic = tokens.next().unwrap_or("");
    if magic != "Pf" {
        return Err(malformed(path, "PFM", format!("bad magic '{magic}'")));
    }
    let parse = |t: Option<&str>, what: &str| -> Result<f64, IoError> {
        t.and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(path, "PFM", format!("missing {what}")))
    };
    let width = parse(tokens.next(), "width")? as usize;
    let height = parse(tokens.next(), "height")? as usize;
    let scale = parse(tokens.next(), "scale")?;
    if width == 0 || height == 0 {
        return Err(malformed(path, "PFM", "zero dimension"));
    }
    let mut raw = vec![0u8; width * height * 4];
    r.read_exact(&mut raw)
        .map_err(|_| malformed(path, "PFM", "truncated payload"))?;
    let le = scale < 0.0;
    let mut data = vec![0f32; width * height];
    for row in 0..height {
        let src_row = height - 1 - row;
        for col in 0..width {
            let o = (src_row * width + col) * 4;
            let bytes = [raw[o], raw[o + 1], raw[o + 2], raw[o + 3]];
            data[row * width + col] = if le {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
        }
    }
    Ok((width, height, data))
}

pub fn write_depth_pfm(path: &Path, depth: &DepthMap) -> Result<(), IoError> {
    let data: Vec<f32> = depth.data.iter().map(|&d| d as f32).collect();
    write_pfm(path, depth.width, depth.height, &data)
}

pub fn read_depth_pfm(path: &Path) -> Result<DepthMap, IoError> {
    let (width, height, data) = read_pfm(path)?;
    Ok(DepthMap {
        width,
        height,
        data: data.into_iter().map(|v| v as f64).collect(),
    })
}

pub fn write_confidence_pfm(path: &Path, conf: &ConfidenceMap) -> Result<(), IoError> {
    write_pfm(path, conf.width, conf.height, &conf.data)
}

pub fn read_confidence_pfm(path: &Path) -> Result<ConfidenceMap, IoError> {
    let (width, height, data) = read_pfm(path)?;
    Ok(ConfidenceMap {
        width,
        height,
        data,
    })
}

/// Binary little-endian PLY with float32 x/y/z.
pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| file_err(path, e))?;
    let mut w = BufWriter::new(file);
    let wr = (|| {
        write!(
            w,
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
             property float x\nproperty float y\nproperty float z\nend_header\n",
            cloud.points.len()
        )?;
        for p in &cloud.points {
            w.write_all(&(p.x as f32).to_le_bytes())?;
            w.write_all(&(p.y as f32).to_le_bytes())?;
            w.write_all(&(p.z as f32).to_le_bytes())?;
        }
        w.flush()
    })();
    wr.map_err(|e| file_err(path, e))
}

pub fn read_ply(path: &Path) -> Result<PointCloud, IoError> {
    let file = File::open(path).map_err(|e| file_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut count = None;
    let mut props = 0usize;
    loop {
        let mut line = String::new();
        if r.read_line(&mut line).map_err(|e| file_err(path, e))? == 0 {
            return Err(malformed(path, "PLY", "header without end_header"));
        }
        let line = line.trim_end();
        if line.starts_with("element vertex") {
            count = line.split_whitespace().nth(2).and_then(|s| s.parse().ok());
        } else if line.starts_with("property float") {
            props += 1;
        } else if line == "end_header" {
            break;
        }
    }
    let count: usize = count.ok_or_else(|| malformed(path, "PLY", "missing vertex count"))?;
    if props < 3 {
        return Err(malformed(path, "PLY", "fewer than three float properties"));
    }
    let mut points = Vec::with_capacity(count);
    let mut buf = vec![0u8; props * 4];
    for _ in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| malformed(path, "PLY", "truncated payload"))?;
        let f = |i: usize| f32::from_le_bytes(buf[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
        points.push(Vector3::new(f(0), f(1), f(2)));
    }
    Ok(PointCloud { points })
}

/// Raw volume dump: magic "IAVOL1", H/W/L little-endian u32, then float32
/// probabilities row-major with the hypothesis index fastest.
pub fn write_volume(path: &Path, volume: &ProbabilityVolume) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| file_err(path, e))?;
    let mut w = BufWriter::new(file);
    let wr = (|| {
        w.write_all(b"IAVOL1")?;
        w.write_all(&(volume.height as u32).to_le_bytes())?;
        w.write_all(&(volume.width as u32).to_le_bytes())?;
        w.write_all(&(volume.hypotheses.count as u32).to_le_bytes())?;
        for &p in &volume.probs {
            w.write_all(&p.to_le_bytes())?;
        }
        w.flush()
    })();
    wr.map_err(|e| file_err(path, e))
}

/// Read back a volume dump; returns (height, width, count, probs).
pub fn read_volume(path: &Path) -> Result<(usize, usize, usize, Vec<f32>), IoError> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| file_err(path, e))?;
    if raw.len() < 18 || &raw[..6] != b"IAVOL1" {
        return Err(malformed(path, "IAVOL1", "bad magic"));
    }
    let u = |o: usize| u32::from_le_bytes(raw[o..o + 4].try_into().unwrap()) as usize;
    let (h, w, l) = (u(6), u(10), u(14));
    let need = 18 + h * w * l * 4;
    if raw.len() != need {
        return Err(malformed(
            path,
            "IAVOL1",
            format!("expected {need} bytes, found {}", raw.len()),
        ));
    }
    let probs = raw[18..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((h, w, l, probs))
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let mut file = File::open(path).map_err(|e| file_err(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| file_err(path, e))?;
    Ok(format!("{:x}", hasher.finalize()))
}

/// Run manifest: config echo plus sha256 of every artifact, line-oriented
/// `key=value`.
pub fn write_run_manifest(
    path: &Path,
    config_lines: &[(String, String)],
    artifacts: &[&Path],
) -> Result<(), IoError> {
    let mut out = String::new();
    for (k, v) in config_lines {
        out.push_str(&format!("{k}={v}\n"));
    }
    for artifact in artifacts {
        let name = artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| artifact.display().to_string());
        out.push_str(&format!("sha256:{name}={}\n", sha256_file(artifact)?));
    }
    std::fs::write(path, out).map_err(|e| file_err(path, e))
}

pub const METRICS_CSV_HEADER: &str = "scene,variant,accuracy,completeness,overall";

/// Append one metrics row, creating the file with a header if needed.
pub fn append_metrics_csv(
    path: &Path,
    scene: &str,
    variant: &str,
    metrics: &CloudMetrics,
) -> Result<(), IoError> {
    let fresh = !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| file_err(path, e))?;
    let mut w = BufWriter::new(file);
    let wr = (|| {
        if fresh {
            writeln!(w, "{METRICS_CSV_HEADER}")?;
        }
        writeln!(
            w,
            "{scene},{variant},{:.6},{:.6},{:.6}",
            metrics.accuracy, metrics.completeness, metrics.overall
        )?;
        w.flush()
    })();
    wr.map_err(|e| file_err(path, e))
}

/// Single-line key=value metrics record.
pub fn metrics_record(scene: &str, variant: &str, m: &CloudMetrics) -> String {
    format!(
        "scene={scene} variant={variant} accuracy={:.6} completeness={:.6} overall={:.6}",
        m.accuracy, m.completeness, m.overall
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costvolume::HypothesisSet;

    #[test]
    fn pfm_round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let data: Vec<f32> = (0..12).map(|i| (i as f32).sqrt() * 1.37 - 0.5).collect();
        write_pfm(&path, 4, 3, &data).unwrap();
        let (w, h, back) = read_pfm(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(
            data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pfm_header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        write_pfm(&path, 2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let raw = std::fs::read(&path).unwrap();
        let header = std::str::from_utf8(&raw[..12]).unwrap();
        assert_eq!(header, "Pf\n2 2\n-1.0\n");
        // Bottom row (3.0, 4.0) is stored first.
        assert_eq!(f32::from_le_bytes(raw[12..16].try_into().unwrap()), 3.0);
        assert_eq!(raw.len(), 12 + 16);
    }

    #[test]
    fn pfm_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pfm");
        std::fs::write(&path, b"PF\n2 2\n-1.0\n").unwrap();
        assert!(matches!(read_pfm(&path), Err(IoError::Malformed { .. })));
        std::fs::write(&path, b"Pf\n4 4\n-1.0\nshort").unwrap();
        assert!(read_pfm(&path).is_err());
    }

    #[test]
    fn ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud {
            points: vec![
                Vector3::new(1.0, -2.5, 650.0),
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1e3, 2e-3, -7.0),
            ],
        };
        write_ply(&path, &cloud).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.points.len(), 3);
        for (a, b) in cloud.points.iter().zip(&back.points) {
            assert!((a - b).norm() < 1e-3); // f32 storage
        }
    }

    #[test]
    fn volume_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let hyp = HypothesisSet::uniform(3, 2, 4, 425.0, 935.0);
        let probs: Vec<f32> = (0..3 * 2 * 4).map(|i| i as f32 / 24.0).collect();
        let vol = ProbabilityVolume {
            width: 3,
            height: 2,
            count: 4,
            probs: probs.clone(),
            hypotheses: hyp,
            stage: 1,
        };
        write_volume(&path, &vol).unwrap();
        let (h, w, l, back) = read_volume(&path).unwrap();
        assert_eq!((h, w, l), (2, 3, 4));
        assert_eq!(back, probs);
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(&raw[..6], b"IAVOL1");
        assert_eq!(u32::from_le_bytes(raw[6..10].try_into().unwrap()), 2);
    }

    #[test]
    fn csv_appends_with_single_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = CloudMetrics {
            accuracy: 0.3090,
            completeness: 0.2566,
            overall: 0.2805,
        };
        append_metrics_csv(&path, "plane-wall", "baseline", &m).unwrap();
        append_metrics_csv(&path, "plane-wall", "full", &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], METRICS_CSV_HEADER);
        assert!(lines[1].starts_with("plane-wall,baseline,0.309000,"));
    }

    #[test]
    fn manifest_lists_config_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let art = dir.path().join("a.bin");
        std::fs::write(&art, b"payload").unwrap();
        let manifest = dir.path().join("run.manifest");
        write_run_manifest(
            &manifest,
            &[("seed".into(), "7".into()), ("scene".into(), "shelf".into())],
            &[&art],
        )
        .unwrap();
        let text = std::fs::read_to_string(&manifest).unwrap();
        assert!(text.contains("seed=7"));
        let expected = sha256_file(&art).unwrap();
        assert!(text.contains(&format!("sha256:a.bin={expected}")));
    }
}
