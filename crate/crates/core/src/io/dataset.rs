//! Directory layout of one sequence:
//!
//! ```text
//! <seq>/config.cfg                 key = value run configuration
//! <seq>/features/stage{1,2}/       NPY features (one [T,H,W,d] file or per-frame files)
//! <seq>/masks/<method>/            candidate masks, one per scored frame
//! <seq>/gt/                        ground truth, one per scored frame
//! <seq>/models/stage{1,2}.accd     fitted models
//! <seq>/scores/stage{1,2}/         optional log p-value dumps
//! <seq>/validated/<method>/        filtered masks and regions.csv
//! <seq>/eval/<method>/             evaluation CSVs
//! ```
//!
//! The first `train_frames` feature frames are used for fitting; masks and
//! ground truth align with the remaining frames in file-name order.

use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceLayout {
    root: PathBuf,
}

impl SequenceLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SequenceLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.cfg")
    }

    pub fn features_dir(&self, stage: u8) -> PathBuf {
        self.root.join("features").join(format!("stage{stage}"))
    }

    pub fn masks_dir(&self, method: &str) -> PathBuf {
        self.root.join("masks").join(method)
    }

    pub fn gt_dir(&self) -> PathBuf {
        self.root.join("gt")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model_path(&self, stage: u8) -> PathBuf {
        self.models_dir().join(format!("stage{stage}.accd"))
    }

    pub fn scores_dir(&self, stage: u8) -> PathBuf {
        self.root.join("scores").join(format!("stage{stage}"))
    }

    pub fn validated_dir(&self, method: &str) -> PathBuf {
        self.root.join("validated").join(method)
    }

    pub fn regions_csv(&self, method: &str) -> PathBuf {
        self.validated_dir(method).join("regions.csv")
    }

    pub fn eval_dir(&self, method: &str) -> PathBuf {
        self.root.join("eval").join(method)
    }
}

/// Features source for a stage: the directory itself, or a single
/// `features.npy`-style file inside it when that is all it holds.
pub fn feature_source(dir: &Path) -> crate::Result<PathBuf> {
    let files = super::features::list_npy_files(dir)?;
    let single = files.len() == 1
        && super::npy::read_f32(&files[0]).is_ok_and(|a| a.shape.len() == 4);
    Ok(if single { files[0].clone() } else { dir.to_path_buf() })
}
