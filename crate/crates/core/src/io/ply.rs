use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::Parametrization;
use crate::scene::{sh, GaussianSet, PointCloud};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }

    fn encode_le(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::I8 => out.push(v as i8 as u8),
            Self::U8 => out.push(v as u8),
            Self::I16 => out.extend((v as i16).to_le_bytes()),
            Self::U16 => out.extend((v as u16).to_le_bytes()),
            Self::I32 => out.extend((v as i32).to_le_bytes()),
            Self::U32 => out.extend((v as u32).to_le_bytes()),
            Self::F32 => out.extend((v as f32).to_le_bytes()),
            Self::F64 => out.extend(v.to_le_bytes()),
        }
    }

    fn format_ascii(self, v: f64, out: &mut String) {
        let _ = match self {
            Self::F32 => write!(out, "{}", v as f32),
            Self::F64 => write!(out, "{v}"),
            _ => write!(out, "{}", v as i64),
        };
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlyProperty {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlyElement {
    pub name: String,
    pub count: usize,
    pub properties: Vec<PlyProperty>,
    /// One column per property; list properties keep an empty column.
    pub columns: Vec<Vec<f64>>,
}

impl PlyElement {
    pub fn column(&self, name: &str) -> Option<(&[f64], ScalarType)> {
        self.properties
            .iter()
            .position(|p| p.name == name)
            .and_then(|k| match self.properties[k].kind {
                PropertyKind::Scalar(t) => Some((self.columns[k].as_slice(), t)),
                PropertyKind::List { .. } => None,
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlyFile {
    pub encoding: PlyEncoding,
    pub elements: Vec<PlyElement>,
}

impl PlyFile {
    pub fn element(&self, name: &str) -> Option<&PlyElement> {
        self.elements.iter().find(|e| e.name == name)
    }
}

fn split_header(bytes: &[u8], path: &Path) -> Result<(Vec<String>, usize)> {
    let mut lines = Vec::new();
    let mut pos = 0;
    loop {
        let Some(len) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(Error::format(path, "PLY header has no end_header line"));
        };
        let line = String::from_utf8_lossy(&bytes[pos..pos + len]).trim_end_matches('\r').to_string();
        pos += len + 1;
        if line.trim() == "end_header" {
            return Ok((lines, pos));
        }
        lines.push(line);
    }
}

pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PlyFile> {
    let (lines, data_start) = split_header(bytes, path)?;
    let mut it = lines.iter();
    if it.next().map(|l| l.trim()) != Some("ply") {
        return Err(Error::format(path, "missing \"ply\" magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for line in it {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => {
                        return Err(Error::format(path, format!("PLY format {other} is not supported")))
                    }
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::format(path, format!("element {name}: bad count {count:?}")))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    columns: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(path, format!("property {name} outside an element")))?;
                let (Some(count), Some(item)) = (ScalarType::parse(count), ScalarType::parse(item)) else {
                    return Err(Error::format(
                        path,
                        format!("element {}: list property {name} has an unknown type", el.name),
                    ));
                };
                el.properties.push(PlyProperty {
                    name: name.to_string(),
                    kind: PropertyKind::List { count, item },
                });
                el.columns.push(Vec::new());
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(path, format!("property {name} outside an element")))?;
                let t = ScalarType::parse(ty).ok_or_else(|| {
                    Error::format(path, format!("element {}: property {name} has unknown type {ty}", el.name))
                })?;
                el.properties.push(PlyProperty {
                    name: name.to_string(),
                    kind: PropertyKind::Scalar(t),
                });
                el.columns.push(Vec::with_capacity(el.count));
            }
            _ => return Err(Error::format(path, format!("unrecognized PLY header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::format(path, "PLY header has no format line"))?;
    let body = &bytes[data_start..];
    match encoding {
        PlyEncoding::BinaryLittleEndian => read_binary(body, &mut elements, path)?,
        PlyEncoding::Ascii => read_ascii(body, &mut elements, path)?,
    }
    Ok(PlyFile { encoding, elements })
}

fn read_binary(body: &[u8], elements: &mut [PlyElement], path: &Path) -> Result<()> {
    let mut pos = 0;
    let mut take = |n: usize, el: &str| -> Result<&[u8]> {
        let s = body
            .get(pos..pos + n)
            .ok_or_else(|| Error::format(path, format!("element {el}: data truncated")))?;
        pos += n;
        Ok(s)
    };
    for el in elements.iter_mut() {
        for _ in 0..el.count {
            for (k, prop) in el.properties.iter().enumerate() {
                match prop.kind {
                    PropertyKind::Scalar(t) => {
                        let v = t.decode_le(take(t.size(), &el.name)?);
                        el.columns[k].push(v);
                    }
                    PropertyKind::List { count, item } => {
                        let n = count.decode_le(take(count.size(), &el.name)?);
                        if !(n >= 0.0) {
                            return Err(Error::format(path, format!("element {}: negative list length", el.name)));
                        }
                        take(n as usize * item.size(), &el.name)?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn read_ascii(body: &[u8], elements: &mut [PlyElement], path: &Path) -> Result<()> {
    let text = std::str::from_utf8(body).map_err(|_| Error::format(path, "ASCII PLY body is not UTF-8"))?;
    let mut tokens = text.split_ascii_whitespace();
    for el in elements.iter_mut() {
        let name = el.name.clone();
        let mut next = || -> Result<f64> {
            let t = tokens
                .next()
                .ok_or_else(|| Error::format(path, format!("element {name}: data truncated")))?;
            t.parse::<f64>()
                .map_err(|_| Error::format(path, format!("element {name}: bad value {t:?}")))
        };
        for _ in 0..el.count {
            for (k, prop) in el.properties.iter().enumerate() {
                match prop.kind {
                    PropertyKind::Scalar(_) => {
                        let v = next()?;
                        el.columns[k].push(v);
                    }
                    PropertyKind::List { .. } => {
                        let n = next()?;
                        for _ in 0..n.max(0.0) as usize {
                            next()?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Serializes elements whose properties are all scalar.
pub fn encode_ply(file: &PlyFile) -> Result<Vec<u8>> {
    let mut header = String::from("ply\n");
    header.push_str(match file.encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    for el in &file.elements {
        let _ = writeln!(header, "element {} {}", el.name, el.count);
        for (p, col) in el.properties.iter().zip(&el.columns) {
            let PropertyKind::Scalar(t) = p.kind else {
                return Err(Error::InvalidArgument(format!(
                    "element {}: writing list property {} is not supported",
                    el.name, p.name
                )));
            };
            if col.len() != el.count {
                return Err(Error::ShapeMismatch(format!(
                    "element {}: property {} has {} values, expected {}",
                    el.name,
                    p.name,
                    col.len(),
                    el.count
                )));
            }
            let _ = writeln!(header, "property {} {}", t.name(), p.name);
        }
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for el in &file.elements {
        let types: Vec<ScalarType> = el
            .properties
            .iter()
            .map(|p| match p.kind {
                PropertyKind::Scalar(t) => t,
                PropertyKind::List { .. } => unreachable!("rejected above"),
            })
            .collect();
        match file.encoding {
            PlyEncoding::BinaryLittleEndian => {
                for r in 0..el.count {
                    for (t, col) in types.iter().zip(&el.columns) {
                        t.encode_le(col[r], &mut out);
                    }
                }
            }
            PlyEncoding::Ascii => {
                let mut line = String::new();
                for r in 0..el.count {
                    line.clear();
                    for (k, (t, col)) in types.iter().zip(&el.columns).enumerate() {
                        if k > 0 {
                            line.push(' ');
                        }
                        t.format_ascii(col[r], &mut line);
                    }
                    line.push('\n');
                    out.extend_from_slice(line.as_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn read_ply(path: &Path) -> Result<PlyFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes, path)
}

pub fn write_ply(path: &Path, file: &PlyFile) -> Result<()> {
    let bytes = encode_ply(file)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn scalar_element(name: &str, count: usize, props: Vec<(String, ScalarType, Vec<f64>)>) -> PlyElement {
    let mut properties = Vec::with_capacity(props.len());
    let mut columns = Vec::with_capacity(props.len());
    for (n, t, c) in props {
        properties.push(PlyProperty {
            name: n,
            kind: PropertyKind::Scalar(t),
        });
        columns.push(c);
    }
    PlyElement {
        name: name.into(),
        count,
        properties,
        columns,
    }
}

/// Point positions and optional `red`/`green`/`blue` colors of the `vertex`
/// element. Integer colors are scaled by their type's maximum; colors
/// default to 0.5 gray.
pub fn point_cloud_from_ply(ply: &PlyFile, path: &Path) -> Result<PointCloud> {
    let vertex = ply
        .element("vertex")
        .ok_or_else(|| Error::format(path, "PLY has no vertex element"))?;
    let axis = |name: &str| {
        vertex
            .column(name)
            .map(|(c, _)| c)
            .ok_or_else(|| Error::format(path, format!("element vertex lacks scalar property {name}")))
    };
    let (x, y, z) = (axis("x")?, axis("y")?, axis("z")?);
    let mut positions = Vec::with_capacity(vertex.count);
    for i in 0..vertex.count {
        let p = [x[i], y[i], z[i]];
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(path, format!("element vertex: point {i} is not finite")));
        }
        positions.push(p);
    }
    let color_cols = ["red", "green", "blue"].map(|n| vertex.column(n));
    let colors = match color_cols {
        [Some(r), Some(g), Some(b)] => {
            let norm = |t: ScalarType| match t {
                ScalarType::U8 => 255.0,
                ScalarType::U16 => 65535.0,
                _ => 1.0,
            };
            (0..vertex.count)
                .map(|i| [r, g, b].map(|(c, t)| c[i] / norm(t)))
                .collect()
        }
        _ => vec![[0.5; 3]; vertex.count],
    };
    Ok(PointCloud { positions, colors })
}

pub fn read_ply_points(path: &Path) -> Result<PointCloud> {
    point_cloud_from_ply(&read_ply(path)?, path)
}

/// Writes double-precision positions and 8-bit colors.
pub fn write_ply_points(path: &Path, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    if cloud.colors.len() != cloud.len() {
        return Err(Error::ShapeMismatch("point cloud colors".into()));
    }
    let n = cloud.len();
    let mut props = Vec::new();
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        props.push((name.to_string(), ScalarType::F64, cloud.positions.iter().map(|p| p[a]).collect()));
    }
    for (a, name) in ["red", "green", "blue"].iter().enumerate() {
        let col = cloud
            .colors
            .iter()
            .map(|c| (c[a].clamp(0.0, 1.0) * 255.0).round())
            .collect();
        props.push((name.to_string(), ScalarType::U8, col));
    }
    let file = PlyFile {
        encoding,
        elements: vec![scalar_element("vertex", n, props)],
    };
    write_ply(path, &file)
}

/// Decodes every Gaussian to Cartesian form and lays it out the way common
/// 3DGS viewers expect (float32, binary little-endian). Homogeneous and
/// inverted-spherical raw parameters are not preserved.
pub fn gaussians_to_3dgs_ply(set: &GaussianSet) -> Result<PlyFile> {
    let n = set.len();
    let n_rest = sh::coeff_count(set.sh_degree) - 1;
    let mut means = Vec::with_capacity(n);
    let mut log_scales = Vec::with_capacity(n);
    for i in 0..n {
        if set.parametrization == Parametrization::Cartesian {
            means.push(set.params.positions[i]);
            log_scales.push(set.params.log_scales[i]);
        } else {
            let g = set.decode(i)?;
            means.push(g.mean.into());
            log_scales.push(g.scale.map(f64::ln).into());
        }
    }
    let f32_col = |name: String, v: Vec<f64>| (name, ScalarType::F32, v);
    let mut props = Vec::new();
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        props.push(f32_col(name.to_string(), means.iter().map(|m| m[a]).collect()));
    }
    for name in ["nx", "ny", "nz"] {
        props.push(f32_col(name.into(), vec![0.0; n]));
    }
    for ch in 0..3 {
        props.push(f32_col(format!("f_dc_{ch}"), set.params.sh_dc.iter().map(|d| d[ch]).collect()));
    }
    // Channel-major: all coefficients of red, then green, then blue.
    for ch in 0..3 {
        for k in 0..n_rest {
            let col = (0..n).map(|i| set.params.sh_rest_of(i)[k * 3 + ch]).collect();
            props.push(f32_col(format!("f_rest_{}", ch * n_rest + k), col));
        }
    }
    props.push(f32_col("opacity".into(), set.params.opacities.clone()));
    for a in 0..3 {
        props.push(f32_col(format!("scale_{a}"), log_scales.iter().map(|s| s[a]).collect()));
    }
    for a in 0..4 {
        props.push(f32_col(format!("rot_{a}"), set.params.rotations.iter().map(|q| q[a]).collect()));
    }
    Ok(PlyFile {
        encoding: PlyEncoding::BinaryLittleEndian,
        elements: vec![scalar_element("vertex", n, props)],
    })
}

pub fn export_3dgs_ply(path: &Path, set: &GaussianSet) -> Result<()> {
    write_ply(path, &gaussians_to_3dgs_ply(set)?)
}

/// Reads a 3DGS-layout PLY into a Cartesian set. The SH degree is inferred
/// from the number of `f_rest_*` properties.
pub fn import_3dgs_ply(path: &Path) -> Result<GaussianSet> {
    let ply = read_ply(path)?;
    let vertex = ply
        .element("vertex")
        .ok_or_else(|| Error::format(path, "PLY has no vertex element"))?;
    let col = |name: &str| {
        vertex
            .column(name)
            .map(|(c, _)| c)
            .ok_or_else(|| Error::format(path, format!("element vertex lacks property {name}")))
    };
    let n_rest_total = vertex
        .properties
        .iter()
        .filter(|p| p.name.starts_with("f_rest_"))
        .count();
    let degree = (0..=sh::MAX_DEGREE)
        .find(|&d| 3 * (sh::coeff_count(d) - 1) == n_rest_total)
        .ok_or_else(|| {
            Error::format(path, format!("element vertex: {n_rest_total} f_rest properties match no SH degree"))
        })?;
    let n_rest = sh::coeff_count(degree) - 1;
    let xyz = [col("x")?, col("y")?, col("z")?];
    let dc = [col("f_dc_0")?, col("f_dc_1")?, col("f_dc_2")?];
    let rest: Vec<&[f64]> = (0..n_rest_total)
        .map(|k| col(&format!("f_rest_{k}")))
        .collect::<Result<_>>()?;
    let opacity = col("opacity")?;
    let scale = [col("scale_0")?, col("scale_1")?, col("scale_2")?];
    let rot = [col("rot_0")?, col("rot_1")?, col("rot_2")?, col("rot_3")?];

    let mut set = GaussianSet::new(Parametrization::Cartesian, degree);
    set.active_sh_degree = degree;
    let mut rest_buf = vec![0.0; 3 * n_rest];
    for i in 0..vertex.count {
        for ch in 0..3 {
            for k in 0..n_rest {
                rest_buf[k * 3 + ch] = rest[ch * n_rest + k][i];
            }
        }
        let raw = crate::geometry::RawGeometry::cartesian(
            xyz.map(|c| c[i]),
            scale.map(|c| c[i]),
            rot.map(|c| c[i]),
        );
        set.push(&raw, opacity[i], dc.map(|c| c[i]), &rest_buf);
    }
    Ok(set)
}
