use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8], little: bool) -> f64 {
        macro_rules! rd {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = b[..$n].try_into().unwrap();
                (if little { <$t>::from_le_bytes(arr) } else { <$t>::from_be_bytes(arr) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => rd!(i16, 2),
            Scalar::U16 => rd!(u16, 2),
            Scalar::I32 => rd!(i32, 4),
            Scalar::U32 => rd!(u32, 4),
            Scalar::F32 => rd!(f32, 4),
            Scalar::F64 => rd!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Format("PLY header has no end_header".into()))?;
    let mut body_offset = end + END.len();
    if bytes.get(body_offset) == Some(&b'\r') {
        body_offset += 1;
    }
    if bytes.get(body_offset) == Some(&b'\n') {
        body_offset += 1;
    }
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("PLY header is not UTF-8".into()))?;
    let mut lines = text.lines().map(str::trim).enumerate();
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::Format("missing `ply` magic".into())),
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for (lineno, line) in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Format(format!("PLY header line {}: `{line}`", lineno + 1));
        match tok.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = Some(match tok.get(1).copied() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLittleEndian,
                    Some("binary_big_endian") => Format::BinaryBigEndian,
                    _ => return Err(bad()),
                });
            }
            Some("element") => {
                let (Some(name), Some(count)) = (tok.get(1), tok.get(2).and_then(|c| c.parse().ok())) else {
                    return Err(bad());
                };
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: vec![],
                });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(bad)?;
                if tok.get(1) == Some(&"list") {
                    let (Some(count), Some(item)) = (
                        tok.get(2).and_then(|t| Scalar::parse(t)),
                        tok.get(3).and_then(|t| Scalar::parse(t)),
                    ) else {
                        return Err(bad());
                    };
                    el.properties.push(Property::List { count, item });
                } else {
                    let (Some(ty), Some(name)) = (tok.get(1).and_then(|t| Scalar::parse(t)), tok.get(2)) else {
                        return Err(bad());
                    };
                    el.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty: ty,
                    });
                }
            }
            Some(_) => return Err(bad()),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| Error::Format("PLY header has no format line".into()))?,
        elements,
        body_offset,
    })
}

/// Outcome details from [`load_cloud`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Points removed because a position or attribute was not finite.
    pub dropped: usize,
}

/// Reads a PLY point cloud (ASCII or binary).
///
/// Requires `x`, `y`, `z`; reads intensity from `intensity` or `reflectivity`
/// and timestamps from `time`, `t` or `timestamp`. Intensities and timestamps
/// are min-max normalized to `[0, 1]`. Non-finite points are dropped.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<(PointCloud, LoadReport)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cloud(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_cloud(bytes: &[u8]) -> Result<(PointCloud, LoadReport)> {
    let header = parse_header(bytes)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Schema("PLY file has no vertex element".into()))?;
    let vertex = &header.elements[vertex_idx];
    let find = |names: &[&str]| {
        vertex.properties.iter().position(|p| matches!(p, Property::Scalar { name, .. } if names.contains(&name.as_str())))
    };
    let (Some(ix), Some(iy), Some(iz)) = (find(&["x"]), find(&["y"]), find(&["z"])) else {
        return Err(Error::Schema("vertex element must have x, y and z properties".into()));
    };
    let i_int = find(&["intensity", "reflectivity"]);
    let i_time = find(&["time", "t", "timestamp"]);

    let nprops = vertex.properties.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(vertex.count);
    let body = &bytes[header.body_offset..];
    match header.format {
        Format::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::Format("ASCII PLY body is not UTF-8".into()))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for (ei, el) in header.elements.iter().enumerate() {
                for row in 0..el.count {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::Format(format!("element `{}` truncated at row {row}", el.name)))?;
                    if ei != vertex_idx {
                        continue;
                    }
                    let vals: Vec<f64> = line
                        .split_whitespace()
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Format(format!("vertex row {row}: `{line}`")))?;
                    if vals.len() < nprops {
                        return Err(Error::Format(format!("vertex row {row} has {} values, expected {nprops}", vals.len())));
                    }
                    rows.push(vals);
                }
            }
        }
        Format::BinaryLittleEndian | Format::BinaryBigEndian => {
            let little = header.format == Format::BinaryLittleEndian;
            let mut off = 0usize;
            let truncated = || Error::Format("binary PLY body truncated".into());
            for (ei, el) in header.elements.iter().enumerate() {
                for _ in 0..el.count {
                    let mut vals = Vec::with_capacity(if ei == vertex_idx { nprops } else { 0 });
                    for prop in &el.properties {
                        match prop {
                            Property::Scalar { ty, .. } => {
                                let b = body.get(off..off + ty.size()).ok_or_else(truncated)?;
                                if ei == vertex_idx {
                                    vals.push(ty.read(b, little));
                                }
                                off += ty.size();
                            }
                            Property::List { count, item } => {
                                let b = body.get(off..off + count.size()).ok_or_else(truncated)?;
                                let n = count.read(b, little) as usize;
                                off += count.size() + n * item.size();
                                if off > body.len() {
                                    return Err(truncated());
                                }
                                if ei == vertex_idx {
                                    vals.push(f64::NAN);
                                }
                            }
                        }
                    }
                    if ei == vertex_idx {
                        rows.push(vals);
                    }
                }
            }
        }
    }

    let mut dropped = 0;
    let mut points = Vec::with_capacity(rows.len());
    let mut raw_int = Vec::with_capacity(rows.len());
    let mut raw_time = Vec::with_capacity(rows.len());
    for r in &rows {
        let p = Vector3::new(r[ix], r[iy], r[iz]);
        let inten = i_int.map_or(0.0, |i| r[i]);
        let t = i_time.map_or(0.0, |i| r[i]);
        if !(p.iter().all(|v| v.is_finite()) && inten.is_finite() && t.is_finite()) {
            dropped += 1;
            continue;
        }
        points.push(p);
        raw_int.push(inten);
        raw_time.push(t);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} non-finite points");
    }
    if i_int.is_none() {
        log::warn!("point cloud has no intensity property; intensities set to 0");
    }
    let mut cloud = PointCloud::new(points, min_max_normalize(raw_int))?;
    if i_time.is_some() {
        cloud = cloud.with_times(min_max_normalize(raw_time))?;
    }
    Ok((cloud, LoadReport { dropped }))
}

fn min_max_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    if range > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x - lo) / range);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

/// Writes a binary little-endian PLY with `double` x, y, z, intensity and,
/// when present, time.
pub fn save_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(64 + cloud.len() * 40);
    write!(
        buf,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty double intensity\n",
        cloud.len()
    )
    .expect("write to Vec");
    if cloud.times.is_some() {
        buf.extend_from_slice(b"property double time\n");
    }
    buf.extend_from_slice(b"end_header\n");
    for i in 0..cloud.len() {
        let p = &cloud.points[i];
        for v in [p.x, p.y, p.z, cloud.intensities[i]] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(t) = &cloud.times {
            buf.extend_from_slice(&t[i].to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
