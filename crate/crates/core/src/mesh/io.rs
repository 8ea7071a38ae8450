//! Wavefront OBJ (vertices and triangular faces) and ASCII PLY with named
//! per-vertex channels.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{Immersion, MeshError};
use crate::ambient::Ambient;
use crate::real::Vec3;

/// A named per-vertex PLY property (vectors become `<name>_x/_y/_z`).
#[derive(Clone, Debug)]
pub enum PlyChannel<'a> {
    Scalar(&'a str, &'a [f64]),
    Vector(&'a str, &'a [Vec3<f64>]),
}

fn io_err(path: &Path, source: std::io::Error) -> MeshError {
    MeshError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Loads by extension (`.obj` or `.ply`).
pub fn load_mesh(path: &Path, ambient: Arc<Ambient>) -> Result<Immersion, MeshError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ply") => load_ply(path, ambient),
        _ => load_obj(path, ambient),
    }
}

pub fn load_obj(path: &Path, ambient: Arc<Ambient>) -> Result<Immersion, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut verts: Vec<Vec3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut nlines = 0;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        nlines = lineno;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Result<Vec<f64>, _> = toks.take(3).map(str::parse).collect();
                match c {
                    Ok(c) if c.len() == 3 => verts.push([c[0], c[1], c[2]]),
                    _ => return Err(parse_err(path, lineno, "vertex needs three numeric coordinates")),
                }
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or("");
                    let k: i64 = head.parse().map_err(|_| parse_err(path, lineno, format!("bad face index `{t}`")))?;
                    let resolved = if k > 0 {
                        k - 1
                    } else if k < 0 {
                        verts.len() as i64 + k
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= verts.len() {
                        return Err(parse_err(path, lineno, format!("face index {k} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(parse_err(path, lineno, "face needs at least three vertices"));
                }
                for j in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[j], idx[j + 1]]);
                }
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(parse_err(path, nlines.max(1), "no faces found"));
    }
    Immersion::new(verts, faces, ambient)
}

pub fn save_obj(m: &Immersion, path: &Path) -> Result<(), MeshError> {
    let mut s = String::with_capacity(64 * m.n_vertices());
    for v in m.vertices() {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in m.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

pub fn save_ply(m: &Immersion, path: &Path, channels: &[PlyChannel<'_>]) -> Result<(), MeshError> {
    let n = m.n_vertices();
    for ch in channels {
        let len = match ch {
            PlyChannel::Scalar(_, v) => v.len(),
            PlyChannel::Vector(_, v) => v.len(),
        };
        assert_eq!(len, n, "PLY channel length must match the vertex count");
    }
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {n}");
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    for ch in channels {
        match ch {
            PlyChannel::Scalar(name, _) => {
                let _ = writeln!(s, "property double {name}");
            }
            PlyChannel::Vector(name, _) => {
                for c in ["x", "y", "z"] {
                    let _ = writeln!(s, "property double {name}_{c}");
                }
            }
        }
    }
    let _ = writeln!(s, "element face {}", m.faces().len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, v) in m.vertices().iter().enumerate() {
        let _ = write!(s, "{} {} {}", v[0], v[1], v[2]);
        for ch in channels {
            match ch {
                PlyChannel::Scalar(_, vals) => {
                    let _ = write!(s, " {}", vals[i]);
                }
                PlyChannel::Vector(_, vals) => {
                    let _ = write!(s, " {} {} {}", vals[i][0], vals[i][1], vals[i][2]);
                }
            }
        }
        s.push('\n');
    }
    for f in m.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

/// Reads positions and faces from an ASCII PLY; other properties are skipped.
pub fn load_ply(path: &Path, ambient: Arc<Ambient>) -> Result<Immersion, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing `ply` magic")),
    }
    let mut n_vert = None;
    let mut n_face = None;
    let mut vprops: Vec<String> = Vec::new();
    let mut current = "";
    let mut header_end = 0;
    for (i, l) in lines.by_ref() {
        let t: Vec<&str> = l.split_whitespace().collect();
        match t.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(parse_err(path, i + 1, "only ASCII PLY is supported"))
            }
            ["element", "vertex", n] => {
                n_vert = Some(n.parse::<usize>().map_err(|_| parse_err(path, i + 1, "bad vertex count"))?);
                current = "vertex";
            }
            ["element", "face", n] => {
                n_face = Some(n.parse::<usize>().map_err(|_| parse_err(path, i + 1, "bad face count"))?);
                current = "face";
            }
            ["element", ..] => current = "other",
            ["property", _, name] if current == "vertex" => vprops.push(name.to_string()),
            ["end_header"] => {
                header_end = i + 1;
                break;
            }
            _ => {}
        }
    }
    if header_end == 0 {
        return Err(parse_err(path, text.lines().count().max(1), "missing end_header"));
    }
    let (Some(nv), Some(nf)) = (n_vert, n_face) else {
        return Err(parse_err(path, header_end, "missing vertex or face element"));
    };
    let pos = |name: &str| vprops.iter().position(|p| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (pos("x"), pos("y"), pos("z")) else {
        return Err(parse_err(path, header_end, "vertex element lacks x/y/z"));
    };
    let mut verts = Vec::with_capacity(nv);
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nv {
        let (i, l) = lines.next().ok_or_else(|| parse_err(path, header_end, "truncated vertex list"))?;
        let v: Result<Vec<f64>, _> = l.split_whitespace().map(str::parse).collect();
        let v = v.map_err(|_| parse_err(path, i + 1, "non-numeric vertex data"))?;
        if v.len() != vprops.len() {
            return Err(parse_err(path, i + 1, "wrong number of vertex properties"));
        }
        verts.push([v[ix], v[iy], v[iz]]);
    }
    for _ in 0..nf {
        let (i, l) = lines.next().ok_or_else(|| parse_err(path, header_end, "truncated face list"))?;
        let v: Result<Vec<usize>, _> = l.split_whitespace().map(str::parse).collect();
        let v = v.map_err(|_| parse_err(path, i + 1, "non-numeric face data"))?;
        if v.is_empty() || v[0] < 3 || v.len() != v[0] + 1 || v[1..].iter().any(|&k| k >= nv) {
            return Err(parse_err(path, i + 1, "malformed face"));
        }
        for j in 2..v[0] {
            faces.push([v[1], v[j], v[j + 1]]);
        }
    }
    Immersion::new(verts, faces, ambient)
}
