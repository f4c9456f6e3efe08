use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::npy;

/// `T` frames of `H_f × W_f × d` feature vectors from one backbone stage,
/// stored frame-major then row-major with the channel axis innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    stage_id: u8,
    frames: usize,
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
    frame_ids: Vec<usize>,
}

impl FeatureSequence {
    /// Builds a sequence from a flat `[T, H, W, d]` buffer, checking shape
    /// and finiteness. Frame ids default to `0..T`.
    pub fn new(
        stage_id: u8,
        frames: usize,
        height: usize,
        width: usize,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "feature sequence needs nonzero extents, got [{frames}, {height}, {width}, {dim}]"
            )));
        }
        if data.len() != frames * height * width * dim {
            return Err(Error::Shape(format!(
                "buffer of {} values does not match [{frames}, {height}, {width}, {dim}]",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let per = height * width * dim;
            return Err(Error::Data(format!(
                "non-finite feature value {} in frame {}",
                data[i],
                i / per
            )));
        }
        Ok(FeatureSequence {
            stage_id,
            frames,
            height,
            width,
            dim,
            data,
            frame_ids: (0..frames).collect(),
        })
    }

    pub fn with_frame_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.frames {
            return Err(Error::Shape(format!(
                "{} frame ids for {} frames",
                ids.len(),
                self.frames
            )));
        }
        self.frame_ids = ids;
        Ok(self)
    }

    pub fn stage_id(&self) -> u8 {
        self.stage_id
    }
    pub fn len(&self) -> usize {
        self.frames
    }
    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn frame_ids(&self) -> &[usize] {
        &self.frame_ids
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.dim
    }

    /// Flat `[H, W, d]` slice of frame `t`.
    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    /// Feature vector at `(row, col)` of frame `t`.
    pub fn vector(&self, t: usize, row: usize, col: usize) -> &[f32] {
        let off = t * self.frame_len() + (row * self.width + col) * self.dim;
        &self.data[off..off + self.dim]
    }

    /// Frames `range` as a new sequence, keeping their ids.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.frames {
            return Err(Error::Shape(format!(
                "frame range {range:?} outside 0..{}",
                self.frames
            )));
        }
        let n = self.frame_len();
        Ok(FeatureSequence {
            stage_id: self.stage_id,
            frames: range.len(),
            height: self.height,
            width: self.width,
            dim: self.dim,
            data: self.data[range.start * n..range.end * n].to_vec(),
            frame_ids: self.frame_ids[range].to_vec(),
        })
    }

    /// Writes the whole sequence as one `[T, H, W, d]` NPY file.
    pub fn save(&self, path: &Path) -> Result<()> {
        npy::write_f32(
            path,
            &[self.frames, self.height, self.width, self.dim],
            &self.data,
        )
    }
}

/// Sorted `*.npy` entries of a directory, ordered by the raw bytes of the
/// file name.
pub fn list_npy_files(dir: &Path) -> Result<Vec<PathBuf>> {
    list_files_with(dir, &["npy"])
}

pub(crate) fn list_files_with(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
        })
        .collect();
    files.sort_by(|a, b| {
        a.file_name()
            .map(|n| n.as_encoded_bytes())
            .cmp(&b.file_name().map(|n| n.as_encoded_bytes()))
    });
    Ok(files)
}

/// Loads one `[T, H, W, d]` NPY file, or a directory of `[H, W, d]` files
/// taken in byte-wise file-name order.
pub fn load_feature_sequence(path: &Path, stage_id: u8) -> Result<FeatureSequence> {
    if path.is_dir() {
        let files = list_npy_files(path)?;
        if files.is_empty() {
            return Err(Error::Path(format!("no .npy files in {}", path.display())));
        }
        let mut data = Vec::new();
        let mut grid: Option<(usize, usize, usize)> = None;
        for f in &files {
            let arr = npy::read_f32(f)?;
            let [h, w, d] = arr.shape[..] else {
                return Err(Error::Shape(format!(
                    "{}: per-frame file must have rank 3, got {:?}",
                    f.display(),
                    arr.shape
                )));
            };
            match grid {
                None => grid = Some((h, w, d)),
                Some(g) if g != (h, w, d) => {
                    return Err(Error::Shape(format!(
                        "{}: frame shape {:?} differs from {:?}",
                        f.display(),
                        (h, w, d),
                        g
                    )))
                }
                _ => {}
            }
            data.extend_from_slice(&arr.data);
        }
        let (h, w, d) = grid.expect("at least one file");
        FeatureSequence::new(stage_id, files.len(), h, w, d, data)
    } else {
        let arr = npy::read_f32(path)?;
        match arr.shape[..] {
            [t, h, w, d] => FeatureSequence::new(stage_id, t, h, w, d, arr.data),
            [h, w, d] => FeatureSequence::new(stage_id, 1, h, w, d, arr.data),
            _ => Err(Error::Shape(format!(
                "{}: feature array must have rank 3 or 4, got {:?}",
                path.display(),
                arr.shape
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tensor_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.npy");
        npy::write_f32(&p, &[2, 4, 4, 8], &vec![0.0; 256]).unwrap();
        let seq = load_feature_sequence(&p, 1).unwrap();
        assert_eq!((seq.len(), seq.height(), seq.width(), seq.dim()), (2, 4, 4, 8));
        assert!(seq.data().iter().all(|&v| v == 0.0));
        assert_eq!(seq.frame_ids(), &[0, 1]);
    }

    #[test]
    fn directory_order_is_bytewise_filename_sort() {
        let dir = tempfile::tempdir().unwrap();
        let names = ["b_10.npy", "B_2.npy", "a_1.npy"];
        for (i, n) in names.iter().enumerate() {
            npy::write_f32(&dir.path().join(n), &[4, 4, 8], &vec![i as f32; 128]).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let seq = load_feature_sequence(dir.path(), 2).unwrap();
        assert_eq!(seq.len(), 3);
        let mut oracle: Vec<(Vec<u8>, usize)> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_bytes().to_vec(), i))
            .collect();
        oracle.sort();
        for (t, (_, src)) in oracle.iter().enumerate() {
            assert_eq!(seq.frame(t)[0], *src as f32);
        }
    }

    #[test]
    fn nan_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.npy");
        let mut v = vec![0.0f32; 32];
        v[7] = f32::NAN;
        npy::write_f32(&p, &[1, 2, 2, 8], &v).unwrap();
        assert!(matches!(load_feature_sequence(&p, 1), Err(Error::Data(_))));
    }

    #[test]
    fn bad_rank_is_a_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.npy");
        npy::write_f32(&p, &[4, 8], &[0.0; 32]).unwrap();
        assert!(matches!(load_feature_sequence(&p, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn mismatched_frames_in_directory() {
        let dir = tempfile::tempdir().unwrap();
        npy::write_f32(&dir.path().join("0.npy"), &[2, 2, 2], &[0.0; 8]).unwrap();
        npy::write_f32(&dir.path().join("1.npy"), &[2, 2, 3], &[0.0; 12]).unwrap();
        assert!(matches!(load_feature_sequence(dir.path(), 1), Err(Error::Shape(_))));
    }
}
