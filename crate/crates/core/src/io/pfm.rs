use std::io::Write;
use std::path::Path;

use crate::image::DepthMap;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Parses a single-channel PFM. Endianness follows the sign of the scale
/// field (negative is little-endian); rows are stored bottom to top.
pub fn parse_pfm(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let mut pos = 0;
    let mut field = |what: &str| -> Result<String> {
        next_token(bytes, &mut pos)
            .map(|t| String::from_utf8_lossy(t).into_owned())
            .ok_or_else(|| Error::format(path, format!("PFM header ends before {what}")))
    };
    let magic = field("magic")?;
    if magic != "Pf" {
        return Err(Error::format(
            path,
            format!("PFM magic {magic:?} is not supported, expected \"Pf\""),
        ));
    }
    let parse_dim = |s: String| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::format(path, format!("bad PFM dimension {s:?}")))
    };
    let width = parse_dim(field("width")?)?;
    let height = parse_dim(field("height")?)?;
    let scale_text = field("scale")?;
    let scale: f64 = scale_text
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::format(path, format!("bad PFM scale {scale_text:?}")))?;
    // Exactly one whitespace byte separates the header from the data.
    let data_start = pos + 1;
    let endian = if scale < 0.0 { Endian::Little } else { Endian::Big };
    let needed = width * height * 4;
    let payload = bytes.get(data_start..).unwrap_or(&[]);
    if payload.len() < needed {
        return Err(Error::format(
            path,
            format!("PFM data truncated: {} of {needed} bytes", payload.len()),
        ));
    }
    let mut data = vec![0.0; width * height];
    for (k, chunk) in payload[..needed].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = match endian {
            Endian::Little => f32::from_le_bytes(raw),
            Endian::Big => f32::from_be_bytes(raw),
        };
        let (row, col) = (k / width, k % width);
        data[(height - 1 - row) * width + col] = v as f64;
    }
    DepthMap::from_data(width, height, data)
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes, path)
}

/// Encodes as float32; values are rounded to single precision.
pub fn encode_pfm(map: &DepthMap, endian: Endian) -> Vec<u8> {
    let scale = match endian {
        Endian::Little => "-1.0",
        Endian::Big => "1.0",
    };
    let mut out = format!("Pf\n{} {}\n{}\n", map.width, map.height, scale).into_bytes();
    out.reserve(map.data.len() * 4);
    for row in (0..map.height).rev() {
        for &v in &map.data[row * map.width..(row + 1) * map.width] {
            let v = v as f32;
            out.extend(match endian {
                Endian::Little => v.to_le_bytes(),
                Endian::Big => v.to_be_bytes(),
            });
        }
    }
    out
}

pub fn write_pfm(path: &Path, map: &DepthMap, endian: Endian) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pfm(map, endian))
        .map_err(|e| Error::io(path, e))
}
