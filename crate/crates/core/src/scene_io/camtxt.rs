//! cam.txt files: an "extrinsic" block (4x4 world-to-camera), an "intrinsic"
//! block (3x3), and a final depth line `depth_min depth_interval
//! [depth_count depth_max]`.

use super::SceneIoError;
use crate::camera::{Camera, Extrinsics, Intrinsics};
use nalgebra::{Matrix3, Vector3};
use std::fs;
use std::path::Path;

/// Number of planes written on the depth line; informational for readers
/// that reconstruct a sweep from `(min, interval)`.
const DEFAULT_DEPTH_COUNT: usize = 192;

pub fn write_cam(path: &Path, cam: &Camera) -> Result<(), SceneIoError> {
    let r = &cam.extrinsics.rotation;
    let t = &cam.extrinsics.translation;
    let k = cam.intrinsics;
    let interval = (cam.depth_max - cam.depth_min) / (DEFAULT_DEPTH_COUNT - 1) as f64;
    let mut s = String::new();
    s.push_str("extrinsic\n");
    for i in 0..3 {
        s.push_str(&format!("{:.12} {:.12} {:.12} {:.12}\n", r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]));
    }
    s.push_str("0.0 0.0 0.0 1.0\n\nintrinsic\n");
    s.push_str(&format!("{:.12} 0.0 {:.12}\n", k.fx, k.cx));
    s.push_str(&format!("0.0 {:.12} {:.12}\n", k.fy, k.cy));
    s.push_str("0.0 0.0 1.0\n\n");
    s.push_str(&format!(
        "{:.12} {:.12} {} {:.12}\n",
        cam.depth_min, interval, DEFAULT_DEPTH_COUNT, cam.depth_max
    ));
    fs::write(path, s)?;
    Ok(())
}

pub fn read_cam(path: &Path) -> Result<Camera, SceneIoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());

    let expect = |lines: &mut dyn Iterator<Item = &str>, tag: &str| -> Result<(), SceneIoError> {
        match lines.next() {
            Some(l) if l.eq_ignore_ascii_case(tag) => Ok(()),
            other => Err(SceneIoError::malformed(
                "cam.txt",
                format!("expected {tag:?}, found {other:?}"),
            )),
        }
    };
    let parse_row = |line: Option<&str>, n: usize| -> Result<Vec<f64>, SceneIoError> {
        let line = line.ok_or_else(|| SceneIoError::malformed("cam.txt", "missing matrix row"))?;
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|_| SceneIoError::malformed("cam.txt", "bad number in row"))?;
        if vals.len() != n {
            return Err(SceneIoError::malformed(
                "cam.txt",
                format!("expected {n} values, got {}", vals.len()),
            ));
        }
        Ok(vals)
    };

    expect(&mut lines, "extrinsic")?;
    let mut rot = Matrix3::zeros();
    let mut trans = Vector3::zeros();
    for i in 0..3 {
        let row = parse_row(lines.next(), 4)?;
        for j in 0..3 {
            rot[(i, j)] = row[j];
        }
        trans[i] = row[3];
    }
    let _last = parse_row(lines.next(), 4)?;

    expect(&mut lines, "intrinsic")?;
    let mut k = [[0.0f64; 3]; 3];
    for row in k.iter_mut() {
        let vals = parse_row(lines.next(), 3)?;
        row.copy_from_slice(&vals);
    }

    let depth_line = lines
        .next()
        .ok_or_else(|| SceneIoError::malformed("cam.txt", "missing depth line"))?;
    let vals: Result<Vec<f64>, _> = depth_line.split_whitespace().map(str::parse).collect();
    let vals = vals.map_err(|_| SceneIoError::malformed("cam.txt", "bad depth line"))?;
    let (depth_min, depth_max) = match vals.len() {
        4 => (vals[0], vals[3]),
        3 => (vals[0], vals[0] + vals[1] * (vals[2] - 1.0)),
        n => {
            return Err(SceneIoError::malformed(
                "cam.txt",
                format!("depth line needs 3 or 4 values, got {n}"),
            ))
        }
    };

    let intrinsics = Intrinsics::new(k[0][0], k[1][1], k[0][2], k[1][2])
        .map_err(|e| SceneIoError::malformed("cam.txt", e.to_string()))?;
    let extrinsics = Extrinsics::new(rot, trans)
        .map_err(|e| SceneIoError::malformed("cam.txt", e.to_string()))?;
    Camera::new(intrinsics, extrinsics, depth_min, depth_max)
        .map_err(|e| SceneIoError::malformed("cam.txt", e.to_string()))
}
