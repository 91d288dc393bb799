//! PLY point clouds: binary little-endian output, binary or ASCII input.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PlyError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad ply header: {0}")]
    Header(String),
    #[error("bad ply body: {0}")]
    Body(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlyVertex {
    pub position: [f32; 3],
    pub color: [u8; 3],
    pub object_id: u32,
}

pub fn write_ply<W: Write>(mut w: W, vertices: &[PlyVertex]) -> Result<(), PlyError> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property uint object_id\nend_header\n",
        vertices.len()
    )?;
    let mut buf = Vec::with_capacity(vertices.len() * 19);
    for v in vertices {
        for c in v.position {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        buf.extend_from_slice(&v.color);
        buf.extend_from_slice(&v.object_id.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn write_ply_file(path: &Path, vertices: &[PlyVertex]) -> Result<(), PlyError> {
    write_ply(std::io::BufWriter::new(std::fs::File::create(path)?), vertices)
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    binary: bool,
    count: usize,
    props: Vec<(String, Scalar)>,
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header, PlyError> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<(), PlyError> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(PlyError::Header("unexpected end of header".into()));
        }
        Ok(())
    };
    next(&mut line)?;
    if line.trim() != "ply" {
        return Err(PlyError::Header("missing magic".into()));
    }
    let (mut binary, mut count, mut props) = (None, None, Vec::new());
    let mut in_vertex = false;
    loop {
        next(&mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", f, _] => return Err(PlyError::Header(format!("unsupported format {f}"))),
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse().map_err(|_| PlyError::Header(format!("bad count {n}")))?);
                } else if count.is_none() {
                    return Err(PlyError::Header("elements before vertex are not supported".into()));
                }
            }
            ["property", "list", ..] if in_vertex => return Err(PlyError::Header("list vertex properties".into())),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| PlyError::Header(format!("unknown type {ty}")))?;
                props.push((name.to_string(), s));
            }
            ["property", ..] => {}
            other => return Err(PlyError::Header(format!("unexpected line {other:?}"))),
        }
    }
    Ok(Header {
        binary: binary.ok_or_else(|| PlyError::Header("missing format".into()))?,
        count: count.ok_or_else(|| PlyError::Header("missing vertex element".into()))?,
        props,
    })
}

pub fn read_ply<R: Read>(r: R) -> Result<Vec<PlyVertex>, PlyError> {
    let mut r = BufReader::new(r);
    let h = read_header(&mut r)?;
    let find = |n: &str| h.props.iter().position(|p| p.0 == n);
    let xyz = [find("x"), find("y"), find("z")];
    if xyz.iter().any(Option::is_none) {
        return Err(PlyError::Header("vertex needs x, y and z".into()));
    }
    let rgb = [find("red"), find("green"), find("blue")];
    let oid = find("object_id");
    let build = |vals: &[f64]| PlyVertex {
        position: xyz.map(|i| vals[i.unwrap()] as f32),
        color: rgb.map(|i| i.map_or(0, |i| vals[i] as u8)),
        object_id: oid.map_or(0, |i| vals[i] as u32),
    };
    let mut out = Vec::with_capacity(h.count);
    let mut vals = vec![0.0; h.props.len()];
    if h.binary {
        let stride: usize = h.props.iter().map(|p| p.1.size()).sum();
        let mut rec = vec![0u8; stride];
        for i in 0..h.count {
            r.read_exact(&mut rec).map_err(|_| PlyError::Body(format!("truncated at vertex {i}")))?;
            let mut off = 0;
            for (v, (_, s)) in vals.iter_mut().zip(&h.props) {
                *v = s.decode(&rec[off..]);
                off += s.size();
            }
            out.push(build(&vals));
        }
    } else {
        let mut lines = r.lines();
        for i in 0..h.count {
            let line = lines.next().ok_or_else(|| PlyError::Body(format!("truncated at vertex {i}")))??;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < vals.len() {
                return Err(PlyError::Body(format!("vertex {i}: expected {} values", vals.len())));
            }
            for (v, t) in vals.iter_mut().zip(toks) {
                *v = t.parse().map_err(|_| PlyError::Body(format!("vertex {i}: bad value {t:?}")))?;
            }
            out.push(build(&vals));
        }
    }
    Ok(out)
}

pub fn read_ply_file(path: &Path) -> Result<Vec<PlyVertex>, PlyError> {
    read_ply(std::fs::File::open(path)?)
}
