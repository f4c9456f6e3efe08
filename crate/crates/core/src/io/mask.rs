use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::io::features::list_files_with;

/// Where a binary mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Prediction,
    GroundTruth,
}

/// Row-major boolean mask, `true` = change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
    source: LabelSource,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, pixels: Vec<bool>, source: LabelSource) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} mask",
                pixels.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            pixels,
            source,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            pixels: vec![false; width * height],
            source: LabelSource::Prediction,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }
    pub fn source(&self) -> LabelSource {
        self.source
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_raw(
            self.width as u32,
            self.height as u32,
            self.pixels.iter().map(|&p| if p { 255 } else { 0 }).collect(),
        )
        .expect("buffer sized from dimensions")
    }
}

/// Class of a ground-truth code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtClass {
    Positive,
    Negative,
    Ignored,
}

/// Ground truth with the 5-code label set: 0 static, 50 shadow, 85 outside
/// region of interest, 170 unknown, 255 motion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl GroundTruthMask {
    pub const CODES: [u8; 5] = [0, 50, 85, 170, 255];

    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|c| !Self::CODES.contains(c)) {
            return Err(Error::Data(format!("unexpected ground-truth code {bad}")));
        }
        Ok(GroundTruthMask {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn classify(code: u8) -> GtClass {
        match code {
            255 => GtClass::Positive,
            85 | 170 => GtClass::Ignored,
            _ => GtClass::Negative,
        }
    }

    #[inline]
    pub fn class_at(&self, idx: usize) -> GtClass {
        Self::classify(self.labels[idx])
    }

    /// Positive (code 255) pixels as a binary mask.
    pub fn positives(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            pixels: self.labels.iter().map(|&c| c == 255).collect(),
            source: LabelSource::GroundTruth,
        }
    }

    /// Ignored (codes 85 and 170) pixels as a binary mask.
    pub fn ignored(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            pixels: self
                .labels
                .iter()
                .map(|&c| Self::classify(c) == GtClass::Ignored)
                .collect(),
            source: LabelSource::GroundTruth,
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.labels.clone())
            .expect("buffer sized from dimensions")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadedMask {
    Binary(BinaryMask),
    GroundTruth(GroundTruthMask),
}

fn load_gray(path: &Path) -> Result<GrayImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    match img {
        DynamicImage::ImageLuma8(g) => Ok(g),
        other => Err(Error::Format(format!(
            "{}: expected 8-bit single-channel image, got {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn load_prediction_mask(path: &Path) -> Result<BinaryMask> {
    let g = load_gray(path)?;
    let (w, h) = (g.width() as usize, g.height() as usize);
    let pixels = g.into_raw().into_iter().map(|v| v >= 128).collect();
    BinaryMask::new(w, h, pixels, LabelSource::Prediction)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruthMask> {
    let g = load_gray(path)?;
    let (w, h) = (g.width() as usize, g.height() as usize);
    GroundTruthMask::new(w, h, g.into_raw())
        .map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
}

/// Loads an 8-bit single-channel PNG or PGM. Predictions binarize at 128.
pub fn load_mask(path: &Path, kind: LabelSource) -> Result<LoadedMask> {
    match kind {
        LabelSource::Prediction => load_prediction_mask(path).map(LoadedMask::Binary),
        LabelSource::GroundTruth => load_ground_truth(path).map(LoadedMask::GroundTruth),
    }
}

/// Writes a 0/255 mask; PGM when the extension is `pgm`, PNG otherwise.
pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    save_gray(&mask.to_gray(), path)
}

pub fn save_ground_truth(gt: &GroundTruthMask, path: &Path) -> Result<()> {
    save_gray(&gt.to_gray(), path)
}

fn save_gray(img: &GrayImage, path: &Path) -> Result<()> {
    let fmt = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    img.save_with_format(path, fmt)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Sorted PNG/PGM files of a mask directory.
pub fn list_mask_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    list_files_with(dir, &["png", "pgm"])
}
