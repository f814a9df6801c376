//! `MFM1` container: magic, then little-endian u32 header
//! `(version, N_v, N_f, k_s, k_e, mouth_loop length)`, then the f32 arrays
//! mean, shape basis, expression basis, shape sigmas, expression sigmas and
//! UV, then the u32 arrays triangles and mouth loop.

use std::path::Path;

use texmorph_core::MorphableModel;

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"MFM1";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(m: &MorphableModel) -> Vec<u8> {
    let header = [
        MODEL_VERSION,
        m.num_vertices as u32,
        m.triangles.len() as u32,
        m.k_shape() as u32,
        m.k_expr() as u32,
        m.mouth_loop.len() as u32,
    ];
    let mut out = Vec::with_capacity(4 * (header.len() + m.mean.len() * (1 + m.k_shape() + m.k_expr())));
    out.extend_from_slice(MODEL_MAGIC);
    let floats = m
        .mean
        .iter()
        .chain(&m.shape_basis)
        .chain(&m.expr_basis)
        .chain(&m.shape_sigmas)
        .chain(&m.expr_sigmas)
        .chain(m.uv.iter().flatten());
    let ints = header.iter().copied().chain(
        m.triangles
            .iter()
            .flatten()
            .copied()
            .chain(m.mouth_loop.iter().copied()),
    );
    for v in ints.clone().take(header.len()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in ints.skip(header.len()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn word(&mut self, what: &str) -> std::result::Result<[u8; 4], String> {
        let w = self
            .bytes
            .get(self.at..self.at + 4)
            .ok_or_else(|| format!("truncated model file while reading {what} at byte {}", self.at))?;
        self.at += 4;
        Ok([w[0], w[1], w[2], w[3]])
    }

    fn u32s(&mut self, n: usize, what: &str) -> std::result::Result<Vec<u32>, String> {
        self.check(n, what)?;
        (0..n).map(|_| self.word(what).map(u32::from_le_bytes)).collect()
    }

    fn f32s(&mut self, n: usize, what: &str) -> std::result::Result<Vec<f32>, String> {
        self.check(n, what)?;
        (0..n).map(|_| self.word(what).map(f32::from_le_bytes)).collect()
    }

    /// Rejects counts that cannot fit before allocating for them.
    fn check(&self, n: usize, what: &str) -> std::result::Result<(), String> {
        match n.checked_mul(4) {
            Some(b) if b <= self.bytes.len() - self.at => Ok(()),
            _ => Err(format!("truncated model file: {what} needs {n} values")),
        }
    }
}

pub fn decode_model(bytes: &[u8]) -> std::result::Result<MorphableModel, String> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(format!(
            "bad magic {:?}, expected \"MFM1\"",
            String::from_utf8_lossy(&bytes[..bytes.len().min(4)])
        ));
    }
    let mut r = Reader { bytes, at: 4 };
    let h = r.u32s(6, "header")?;
    if h[0] != MODEL_VERSION {
        return Err(format!("unsupported model version {}, expected {MODEL_VERSION}", h[0]));
    }
    let [nv, nf, ks, ke, nm] = [h[1], h[2], h[3], h[4], h[5]].map(|v| v as usize);
    let rows = 3 * nv;
    let mean = r.f32s(rows, "mean")?;
    let shape_basis = r.f32s(rows.saturating_mul(ks), "shape basis")?;
    let expr_basis = r.f32s(rows.saturating_mul(ke), "expression basis")?;
    let shape_sigmas = r.f32s(ks, "shape sigmas")?;
    let expr_sigmas = r.f32s(ke, "expression sigmas")?;
    let uv = r.f32s(2 * nv, "uv")?;
    let tris = r.u32s(3 * nf, "triangles")?;
    let mouth_loop = r.u32s(nm, "mouth loop")?;
    if r.at != bytes.len() {
        return Err(format!("{} trailing bytes after model data", bytes.len() - r.at));
    }
    let model = MorphableModel {
        num_vertices: nv,
        mean,
        shape_basis,
        expr_basis,
        shape_sigmas,
        expr_sigmas,
        triangles: tris.chunks_exact(3).map(|t| [t[0], t[1], t[2]]).collect(),
        uv: uv.chunks_exact(2).map(|t| [t[0], t[1]]).collect(),
        mouth_loop,
    };
    model.validate().map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn save_model(model: &MorphableModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MorphableModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use texmorph_core::template::default_model;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = default_model(6, 4, 2, 1).unwrap();
        let bytes = encode_model(&m);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(encode_model(&back), bytes);
        let bits = |v: &[f32]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.mean), bits(&m.mean));
        assert_eq!(bits(&back.shape_basis), bits(&m.shape_basis));
        assert_eq!(back, m);
    }

    #[test]
    fn corruption_is_reported() {
        let m = default_model(4, 2, 1, 2).unwrap();
        let bytes = encode_model(&m);
        for cut in [3, 10, 28, bytes.len() / 2, bytes.len() - 1] {
            let e = decode_model(&bytes[..cut]).unwrap_err();
            assert!(e.contains("truncated") || e.contains("magic"), "{cut}: {e}");
        }
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"OBJ1");
        assert!(decode_model(&bad).unwrap_err().contains("expected \"MFM1\""));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(decode_model(&v2).unwrap_err().contains("version 2"));
    }
}
