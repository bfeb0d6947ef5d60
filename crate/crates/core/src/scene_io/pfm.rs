//! PFM images: "Pf" (grayscale) / "PF" (color) header, dimensions line, a
//! scale line whose sign encodes endianness (negative = little-endian), then
//! rows of f32 samples stored bottom-up. Roundtrips are bit-exact.

use super::SceneIoError;
use crate::numerics::ImageF;
use byteorder::{BigEndian, ByteOrder, LittleEndian};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn write_pfm(path: &Path, img: &ImageF) -> Result<(), SceneIoError> {
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(SceneIoError::UnsupportedChannels(c)),
    };
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "{}\n{} {}\n-1.0\n", magic, img.width, img.height)?;
    let row_len = img.width * img.channels;
    let mut buf = vec![0u8; row_len * 4];
    // PFM stores the bottom row first; internal images are top-down
    for y in (0..img.height).rev() {
        let start = y * row_len;
        LittleEndian::write_f32_into(&img.data[start..start + row_len], &mut buf);
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_token(r: &mut impl Read) -> Result<String, SceneIoError> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            if token.is_empty() {
                return Err(SceneIoError::malformed("pfm", "unexpected end of header"));
            }
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
    }
    String::from_utf8(token).map_err(|_| SceneIoError::malformed("pfm", "non-utf8 header"))
}

pub fn read_pfm(path: &Path) -> Result<ImageF, SceneIoError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_token(&mut r)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(SceneIoError::malformed("pfm", format!("bad magic {m:?}"))),
    };
    let width: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| SceneIoError::malformed("pfm", "bad width"))?;
    let height: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| SceneIoError::malformed("pfm", "bad height"))?;
    let scale: f64 = read_token(&mut r)?
        .parse()
        .map_err(|_| SceneIoError::malformed("pfm", "bad scale"))?;
    if width == 0 || height == 0 {
        return Err(SceneIoError::malformed("pfm", "zero dimensions"));
    }
    let little_endian = scale < 0.0;
    let row_len = width * channels;
    let mut raw = vec![0u8; row_len * 4];
    let mut data = vec![0.0f32; height * row_len];
    for y in (0..height).rev() {
        r.read_exact(&mut raw)
            .map_err(|_| SceneIoError::malformed("pfm", "truncated pixel data"))?;
        let dst = &mut data[y * row_len..(y + 1) * row_len];
        if little_endian {
            LittleEndian::read_f32_into(&raw, dst);
        } else {
            BigEndian::read_f32_into(&raw, dst);
        }
    }
    Ok(ImageF::from_data(height, width, channels, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("depth.pfm");
        let img = ImageF::from_data(
            3,
            4,
            1,
            (0..12).map(|i| (i as f32 * 1.37 + 0.001).ln_1p()).collect(),
        );
        write_pfm(&path, &img).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(img.data, back.data);
        assert_eq!((back.height, back.width, back.channels), (3, 4, 1));
    }

    #[test]
    fn color_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.pfm");
        let img = ImageF::from_data(2, 2, 3, (0..12).map(|i| i as f32 * 0.1).collect());
        write_pfm(&path, &img).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(img.data, back.data);
        assert_eq!(back.channels, 3);
    }

    #[test]
    fn header_matches_specification() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("h.pfm");
        let img = ImageF::new(3, 4, 1);
        write_pfm(&path, &img).unwrap();
        let mut raw = Vec::new();
        File::open(&path).unwrap().read_to_end(&mut raw).unwrap();
        assert!(raw.starts_with(b"Pf\n4 3\n-1.0\n"));
    }

    #[test]
    fn truncated_file_is_structured_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.pfm");
        std::fs::write(&path, b"Pf\n4 3\n-1.0\n\x00\x00").unwrap();
        match read_pfm(&path) {
            Err(SceneIoError::Malformed { format: "pfm", .. }) => {}
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_two_channel_images() {
        let dir = tempdir().unwrap();
        let img = ImageF::new(2, 2, 2);
        assert!(matches!(
            write_pfm(&dir.path().join("b.pfm"), &img),
            Err(SceneIoError::UnsupportedChannels(2))
        ));
    }
}
