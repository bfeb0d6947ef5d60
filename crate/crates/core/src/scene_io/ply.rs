//! PLY point clouds, ASCII and binary little-endian. Vertices carry float32
//! x/y/z and optionally uchar red/green/blue.

use super::SceneIoError;
use crate::fusion::PointCloud;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<(), SceneIoError> {
    if let Some(colors) = &cloud.colors {
        if colors.len() != cloud.points.len() {
            return Err(SceneIoError::malformed("ply", "color count != point count"));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    let fmt_line = match format {
        PlyFormat::Ascii => "format ascii 1.0",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0",
    };
    write!(w, "ply\n{fmt_line}\nelement vertex {}\n", cloud.points.len())?;
    write!(w, "property float x\nproperty float y\nproperty float z\n")?;
    if cloud.colors.is_some() {
        write!(w, "property uchar red\nproperty uchar green\nproperty uchar blue\n")?;
    }
    write!(w, "end_header\n")?;
    for (i, p) in cloud.points.iter().enumerate() {
        let (x, y, z) = (p[0] as f32, p[1] as f32, p[2] as f32);
        match format {
            PlyFormat::Ascii => {
                write!(w, "{x} {y} {z}")?;
                if let Some(colors) = &cloud.colors {
                    let c = colors[i];
                    write!(w, " {} {} {}", c[0], c[1], c[2])?;
                }
                writeln!(w)?;
            }
            PlyFormat::BinaryLittleEndian => {
                w.write_f32::<LittleEndian>(x)?;
                w.write_f32::<LittleEndian>(y)?;
                w.write_f32::<LittleEndian>(z)?;
                if let Some(colors) = &cloud.colors {
                    w.write_all(&colors[i])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud, SceneIoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut read_line = |r: &mut BufReader<File>| -> Result<String, SceneIoError> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(SceneIoError::malformed("ply", "truncated header"));
        }
        Ok(line.trim().to_string())
    };

    if read_line(&mut r)? != "ply" {
        return Err(SceneIoError::malformed("ply", "missing magic"));
    }
    let mut format = None;
    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    loop {
        let l = read_line(&mut r)?;
        if l == "end_header" {
            break;
        }
        if let Some(f) = l.strip_prefix("format ") {
            format = Some(match f.split_whitespace().next() {
                Some("ascii") => PlyFormat::Ascii,
                Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                _ => return Err(SceneIoError::malformed("ply", format!("unsupported format {f}"))),
            });
        } else if let Some(rest) = l.strip_prefix("element vertex ") {
            count = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| SceneIoError::malformed("ply", "bad vertex count"))?,
            );
        } else if l.starts_with("element ") {
            return Err(SceneIoError::malformed("ply", "non-vertex elements unsupported"));
        } else if let Some(p) = l.strip_prefix("property ") {
            props.push(p.to_string());
        }
    }
    let format = format.ok_or_else(|| SceneIoError::malformed("ply", "missing format line"))?;
    let count = count.ok_or_else(|| SceneIoError::malformed("ply", "missing vertex element"))?;
    let has_color = match props.as_slice() {
        [x, y, z] if x == "float x" && y == "float y" && z == "float z" => false,
        [x, y, z, rr, gg, bb]
            if x == "float x"
                && y == "float y"
                && z == "float z"
                && rr == "uchar red"
                && gg == "uchar green"
                && bb == "uchar blue" =>
        {
            true
        }
        _ => return Err(SceneIoError::malformed("ply", "unsupported property layout")),
    };

    let mut points = Vec::with_capacity(count);
    let mut colors = has_color.then(|| Vec::with_capacity(count));
    match format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            r.read_to_string(&mut body)?;
            let mut tokens = body.split_whitespace();
            for _ in 0..count {
                let mut xyz = [0.0f64; 3];
                for v in &mut xyz {
                    *v = tokens
                        .next()
                        .ok_or_else(|| SceneIoError::malformed("ply", "truncated vertex data"))?
                        .parse::<f32>()
                        .map_err(|_| SceneIoError::malformed("ply", "bad coordinate"))?
                        as f64;
                }
                points.push(xyz);
                if let Some(colors) = &mut colors {
                    let mut rgb = [0u8; 3];
                    for c in &mut rgb {
                        *c = tokens
                            .next()
                            .ok_or_else(|| SceneIoError::malformed("ply", "truncated vertex data"))?
                            .parse()
                            .map_err(|_| SceneIoError::malformed("ply", "bad color"))?;
                    }
                    colors.push(rgb);
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for _ in 0..count {
                let mut xyz = [0.0f64; 3];
                for v in &mut xyz {
                    *v = r
                        .read_f32::<LittleEndian>()
                        .map_err(|_| SceneIoError::malformed("ply", "truncated vertex data"))?
                        as f64;
                }
                points.push(xyz);
                if let Some(colors) = &mut colors {
                    let mut rgb = [0u8; 3];
                    r.read_exact(&mut rgb)
                        .map_err(|_| SceneIoError::malformed("ply", "truncated vertex data"))?;
                    colors.push(rgb);
                }
            }
        }
    }
    Ok(PointCloud { points, colors })
}
