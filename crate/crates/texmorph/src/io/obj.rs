use std::fmt::Write as _;
use std::path::Path;

use texmorph_core::{Mesh, Vec3};

use crate::error::{read_text, write_text, Error, Result};

/// Parses `v`, `vt` and `f` records. Faces must reference the same UV for a
/// vertex everywhere (no UV seams); polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> std::result::Result<Mesh, String> {
    let mut vertices = Vec::new();
    let mut tex = Vec::new();
    let mut faces: Vec<Vec<(usize, Option<usize>)>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let err = |m: &str| format!("line {}: {m}", n + 1);
        let floats = |parts: std::str::SplitWhitespace<'_>| -> std::result::Result<Vec<f64>, String> {
            parts
                .map(|p| p.parse::<f64>().map_err(|_| err(&format!("bad number `{p}`"))))
                .collect()
        };
        match tag {
            "v" => {
                let f = floats(parts)?;
                if f.len() < 3 {
                    return Err(err("vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(f[0], f[1], f[2]));
            }
            "vt" => {
                let f = floats(parts)?;
                if f.len() < 2 {
                    return Err(err("texture coordinate needs 2 values"));
                }
                tex.push([f[0], f[1]]);
            }
            "f" => {
                let mut face = Vec::new();
                for corner in parts {
                    let mut refs = corner.split('/');
                    let resolve = |s: Option<&str>, len: usize| -> std::result::Result<Option<usize>, String> {
                        match s {
                            None | Some("") => Ok(None),
                            Some(s) => {
                                let i: i64 = s.parse().map_err(|_| err(&format!("bad index `{s}`")))?;
                                let idx = if i > 0 { i - 1 } else { len as i64 + i };
                                if i == 0 || idx < 0 || idx >= len as i64 {
                                    return Err(err(&format!("index {i} out of range")));
                                }
                                Ok(Some(idx as usize))
                            }
                        }
                    };
                    let v = resolve(refs.next(), vertices.len())?.ok_or_else(|| err("face corner without vertex"))?;
                    let t = resolve(refs.next(), tex.len())?;
                    face.push((v, t));
                }
                if face.len() < 3 {
                    return Err(err("face needs at least 3 corners"));
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    let mut uv: Vec<Option<[f64; 2]>> = vec![None; vertices.len()];
    let mut triangles = Vec::new();
    for face in &faces {
        for &(v, t) in face {
            if let Some(t) = t {
                match uv[v] {
                    Some(old) if old != tex[t] => {
                        return Err(format!("vertex {} has more than one texture coordinate", v + 1));
                    }
                    _ => uv[v] = Some(tex[t]),
                }
            }
        }
        for k in 1..face.len() - 1 {
            triangles.push([face[0].0 as u32, face[k].0 as u32, face[k + 1].0 as u32]);
        }
    }
    let uv = if tex.is_empty() {
        vec![[0.0, 0.0]; vertices.len()]
    } else {
        uv.iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| format!("vertex {} has no texture coordinate", i + 1)))
            .collect::<std::result::Result<_, _>>()?
    };
    Mesh::new(vertices, triangles, uv).map_err(|e| e.to_string())
}

pub fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for t in &mesh.uv {
        let _ = writeln!(s, "vt {:?} {:?}", t[0], t[1]);
    }
    for f in &mesh.triangles {
        let [a, b, c] = f.map(|i| i + 1);
        let _ = writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}");
    }
    s
}

pub fn load_obj(path: &Path) -> Result<Mesh> {
    parse_obj(&read_text(path)?).map_err(|m| Error::format(path, m))
}

pub fn save_obj(mesh: &Mesh, path: &Path) -> Result<()> {
    write_text(path, &write_obj(mesh))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mesh = texmorph_core::template::HeadTemplate::default().mesh(&Default::default());
        assert_eq!(parse_obj(&write_obj(&mesh)).unwrap(), mesh);
    }

    #[test]
    fn quads_fan_and_seams_rejected() {
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n";
        let m = parse_obj(quad).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.uv[2], [1.0, 1.0]);
        let seam = "v 0 0 0\nv 1 0 0\nv 1 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nf 1/1 2/2 3/3\nf 1/2 3/3 2/2\n";
        assert!(parse_obj(seam).unwrap_err().contains("more than one"));
        assert!(parse_obj("v 0 0\n").unwrap_err().contains("line 1"));
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").unwrap_err().contains("out of range"));
    }

    #[test]
    fn relative_indices() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf -3/-3 -2/-2 -1/-1\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }
}
