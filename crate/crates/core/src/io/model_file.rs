//! `ACCD` model container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `ACCD` |
//! | 2 | format version (`u16`, currently 1) |
//! | 1 | stage id |
//! | 1 | covariance mode (0 full, 1 diagonal) |
//! | 4 | K (`u32`) |
//! | 4 | d, model-space dimension (`u32`) |
//! | 4 | H_f (`u32`) |
//! | 4 | W_f (`u32`) |
//! | 4 | projection input dimension, 0 when absent (`u32`) |
//!
//! followed by `f64` blocks in this order: weights (K), means (K·d),
//! covariance factors (K·d² row-major lower Cholesky factors in full mode,
//! K·d variances in diagonal mode), spatial weights (K·H_f·W_f,
//! component-major), and, with a projection, its mean (d_in) and basis
//! (d_in·d row-major).

use std::io::{Read, Write};
use std::path::Path;

use crate::background::{GaussianComponent, GlobalMixture, LocalizedMixtureModel, Projection};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"ACCD";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 28;

fn put_f64s<T: Real, W: Write>(w: &mut W, values: &[T]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

/// Serializes a model into any writer.
pub fn write_model<T: Real, W: Write>(model: &LocalizedMixtureModel<T>, w: &mut W) -> std::io::Result<()> {
    let mix = model.mixture();
    let k = mix.len() as u32;
    let d = mix.dim() as u32;
    let (gh, gw) = model.grid();
    let d_in = model.projection().map_or(0, |p| p.in_dim() as u32);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.push(model.stage_id());
    header.push(u8::from(mix.is_diagonal()));
    for v in [k, d, gh as u32, gw as u32, d_in] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&header)?;
    put_f64s(w, mix.weights())?;
    for c in mix.components() {
        put_f64s(w, c.mean())?;
    }
    for c in mix.components() {
        put_f64s(w, c.factor_values())?;
    }
    put_f64s(w, model.spatial_weights())?;
    if let Some(p) = model.projection() {
        put_f64s(w, p.mean())?;
        put_f64s(w, p.basis())?;
    }
    Ok(())
}

pub fn save_model<T: Real>(model: &LocalizedMixtureModel<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a, R> {
    r: &'a mut R,
}

impl<R: Read> Cursor<'_, R> {
    fn f64s<T: Real>(&mut self, n: usize) -> std::io::Result<Vec<T>> {
        let mut bytes = vec![0u8; n * 8];
        self.r.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect())
    }
}

/// Deserializes a model. Truncation surfaces as an IO error
/// (`UnexpectedEof`); wrong magic or version as a format error.
pub fn read_model<T: Real, R: Read>(r: &mut R, origin: &Path) -> Result<LocalizedMixtureModel<T>> {
    let io = |e| Error::io(origin, e);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header[..4]).map_err(io)?;
    if &header[..4] != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}",
            origin.display(),
            String::from_utf8_lossy(&header[..4])
        )));
    }
    r.read_exact(&mut header[4..]).map_err(io)?;
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported model version {version}",
            origin.display()
        )));
    }
    let stage_id = header[6];
    let diagonal = match header[7] {
        0 => false,
        1 => true,
        m => {
            return Err(Error::Format(format!(
                "{}: unknown covariance mode {m}",
                origin.display()
            )))
        }
    };
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (k, d, gh, gw, d_in) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20), u32_at(24));
    if k == 0 || d == 0 || gh == 0 || gw == 0 {
        return Err(Error::Format(format!(
            "{}: empty model extents K={k} d={d} grid={gh}x{gw}",
            origin.display()
        )));
    }

    let mut cur = Cursor { r };
    let weights: Vec<T> = cur.f64s(k).map_err(io)?;
    let means: Vec<T> = cur.f64s(k * d).map_err(io)?;
    let per = if diagonal { d } else { d * d };
    let factors: Vec<T> = cur.f64s(k * per).map_err(io)?;
    let spatial: Vec<T> = cur.f64s(k * gh * gw).map_err(io)?;
    let projection = if d_in > 0 {
        let mean = cur.f64s(d_in).map_err(io)?;
        let basis = cur.f64s(d_in * d).map_err(io)?;
        Some(Projection::new(mean, basis, d)?)
    } else {
        None
    };

    let components = (0..k)
        .map(|i| {
            let mean = means[i * d..(i + 1) * d].to_vec();
            let f = factors[i * per..(i + 1) * per].to_vec();
            if diagonal {
                GaussianComponent::diagonal(mean, f)
            } else {
                GaussianComponent::from_cholesky(mean, f)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mixture = GlobalMixture::new(components, weights)?;
    LocalizedMixtureModel::from_parts(mixture, spatial, stage_id, gh, gw, projection)
}

pub fn load_model<T: Real>(path: &Path) -> Result<LocalizedMixtureModel<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut slice = bytes.as_slice();
    let model = read_model(&mut slice, path)?;
    if !slice.is_empty() {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes after model",
            path.display(),
            slice.len()
        )));
    }
    Ok(model)
}
