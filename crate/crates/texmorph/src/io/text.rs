use std::fmt::Write as _;
use std::path::Path;

use texmorph_core::fitting::{params_from_text, params_to_text, parse_floats, Landmark, Landmarks2D};
use texmorph_core::{FaceParams, ShLighting};

use crate::error::{read_text, write_text, Error, Result};

/// Non-empty lines with `#` comments stripped, numbered from 1.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Three rows (R, G, B) of nine SH coefficients.
pub fn lighting_to_text(l: &ShLighting) -> String {
    let mut s = String::new();
    for row in &l.gamma {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", cells.join(" "));
    }
    s
}

pub fn lighting_from_text(text: &str) -> texmorph_core::Result<ShLighting> {
    let rows: Vec<_> = content_lines(text).collect();
    if rows.len() != 3 {
        return Err(texmorph_core::Error::Parse {
            line: rows.get(3).map_or(rows.len(), |r| r.0),
            message: format!("lighting needs 3 rows of 9 coefficients, found {} rows", rows.len()),
        });
    }
    let mut gamma = [[0.0; 9]; 3];
    for (c, (line, row)) in rows.into_iter().enumerate() {
        let v = parse_floats(line, "lighting", row, Some(9))?;
        gamma[c].copy_from_slice(&v);
    }
    Ok(ShLighting { gamma })
}

/// `vertex x y [weight]` per line; weight defaults to 1.
pub fn landmarks_from_text(text: &str) -> texmorph_core::Result<Landmarks2D> {
    let mut points = Vec::new();
    for (line, row) in content_lines(text) {
        let parts: Vec<&str> = row.split_whitespace().collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(texmorph_core::Error::Parse {
                line,
                message: "expected `vertex x y [weight]`".into(),
            });
        }
        let vertex = parts[0].parse().map_err(|_| texmorph_core::Error::Parse {
            line,
            message: format!("bad vertex index `{}`", parts[0]),
        })?;
        let v = parse_floats(line, "landmark", &parts[1..].join(" "), None)?;
        points.push(Landmark {
            vertex,
            x: v[0],
            y: v[1],
            weight: v.get(2).copied().unwrap_or(1.0),
        });
    }
    Ok(Landmarks2D { points })
}

pub fn landmarks_to_text(l: &Landmarks2D) -> String {
    let mut s = String::new();
    for p in &l.points {
        let _ = writeln!(s, "{} {:?} {:?} {:?}", p.vertex, p.x, p.y, p.weight);
    }
    s
}

/// One vertex index per line.
pub fn mouth_loop_from_text(text: &str) -> texmorph_core::Result<Vec<u32>> {
    content_lines(text)
        .map(|(line, row)| {
            row.parse().map_err(|_| texmorph_core::Error::Parse {
                line,
                message: format!("bad vertex index `{row}`"),
            })
        })
        .collect()
}

fn with_path<T>(path: &Path, r: texmorph_core::Result<T>) -> Result<T> {
    r.map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_lighting(path: &Path) -> Result<ShLighting> {
    with_path(path, lighting_from_text(&read_text(path)?))
}

pub fn save_lighting(l: &ShLighting, path: &Path) -> Result<()> {
    write_text(path, &lighting_to_text(l))
}

pub fn load_landmarks(path: &Path) -> Result<Landmarks2D> {
    with_path(path, landmarks_from_text(&read_text(path)?))
}

pub fn load_mouth_loop(path: &Path) -> Result<Vec<u32>> {
    with_path(path, mouth_loop_from_text(&read_text(path)?))
}

/// Loads a params file, logging unknown keys.
pub fn load_params(path: &Path) -> Result<FaceParams> {
    let (p, warnings) = with_path(path, params_from_text(&read_text(path)?))?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(p)
}

pub fn save_params(p: &FaceParams, path: &Path) -> Result<()> {
    write_text(path, &params_to_text(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use texmorph_core::Vec3;

    #[test]
    fn lighting_round_trip_and_errors() {
        let l = ShLighting::directional(0.4, 0.3, Vec3::new(0.1, -0.7, -0.2));
        assert_eq!(lighting_from_text(&lighting_to_text(&l)).unwrap(), l);
        assert!(lighting_from_text("1 2 3\n").is_err());
        let e = lighting_from_text("# c\n1 1 1 1 1 1 1 1 1\n1 1 1 1 1 1 1 1 1\n1 1 1 1 x 1 1 1 1\n").unwrap_err();
        assert!(e.to_string().starts_with("line 4"), "{e}");
    }

    #[test]
    fn landmarks_and_mouth() {
        let l = landmarks_from_text("3 10.5 20\n# skip\n7 1 2 0.5\n").unwrap();
        assert_eq!(l.points.len(), 2);
        assert_eq!(l.points[0].weight, 1.0);
        assert_eq!(landmarks_from_text(&landmarks_to_text(&l)).unwrap(), l);
        assert!(landmarks_from_text("3 4\n").is_err());
        assert_eq!(mouth_loop_from_text("4\n5\n\n6\n").unwrap(), vec![4, 5, 6]);
        assert!(mouth_loop_from_text("4\n-1\n").is_err());
    }
}
