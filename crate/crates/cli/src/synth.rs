//! Seeded synthetic sequence with known anomalies and planted false alarms.
//!
//! Background features at every feature cell are drawn from a three-component
//! diagonal Gaussian mixture whose weights depend on the cell's column band.
//! In a few test frames an axis-aligned rectangle is made anomalous by
//! shifting every covered feature by `delta` planted standard deviations
//! along each axis. Candidate masks hold the true rectangles plus small
//! random 4-connected blobs on untouched background, so the blobs' p-values
//! follow the planted model.

use std::fs;
use std::path::Path;

use accd_core::config::RunConfig;
use accd_core::io::dataset::SequenceLayout;
use accd_core::io::mask::save_ground_truth;
use accd_core::io::{save_mask, BinaryMask, FeatureSequence, GroundTruthMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{io_err, CliResult, StepContext};

/// Method name under which synthetic candidate masks are written.
pub const SYNTH_METHOD: &str = "synth";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Mask side length in pixels; stage grids are `size/4` and `size/8`.
    pub size: usize,
    pub dim: usize,
    pub train_frames: usize,
    pub test_frames: usize,
    pub anomalies: usize,
    pub blobs: usize,
    pub blob_max: usize,
    /// Per-axis displacement of anomalous features in planted standard
    /// deviations; the Mahalanobis length is `delta · √dim`.
    pub delta: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            size: 128,
            dim: 4,
            train_frames: 60,
            test_frames: 50,
            anomalies: 5,
            blobs: 20,
            blob_max: 40,
            delta: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantedKind {
    Anomaly,
    Blob,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedObject {
    pub kind: PlantedKind,
    /// Index among the scored (test) frames.
    pub frame: usize,
    /// Sorted raster indices at mask resolution.
    pub pixels: Vec<usize>,
}

/// Planted mixture means: the origin and two points 10σ away along the
/// negative first and second axes. Shifting any of them by `+delta` on
/// every axis moves away from the others.
fn planted_means(dim: usize) -> Vec<Vec<f64>> {
    (0..3)
        .map(|j| {
            let mut m = vec![0.0; dim];
            if j > 0 {
                m[(j - 1) % dim] = -10.0;
            }
            m
        })
        .collect()
}

/// Column band of a cell: the grid is split into three vertical bands,
/// each dominated by one component.
fn band_weights(col: usize, grid_w: usize) -> [f64; 3] {
    let band = col * 3 / grid_w;
    let mut w = [0.05; 3];
    w[band] = 0.9;
    w
}

fn sample_background(rng: &mut ChaCha8Rng, means: &[Vec<f64>], weights: &[f64; 3], out: &mut [f32]) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = 2;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            pick = j;
            break;
        }
    }
    for (o, m) in out.iter_mut().zip(&means[pick]) {
        let z: f64 = StandardNormal.sample(rng);
        *o = (m + z) as f32;
    }
}

/// Grows a random 4-connected blob of `size` pixels whose pixels and their
/// 4-neighbours avoid `occupied`. Returns `None` after a failed attempt.
fn grow_blob(rng: &mut ChaCha8Rng, occupied: &[bool], side: usize, size: usize) -> Option<Vec<usize>> {
    let free = |i: usize| {
        let (r, c) = (i / side, i % side);
        let mut ok = !occupied[i];
        if r > 0 {
            ok &= !occupied[i - side];
        }
        if r + 1 < side {
            ok &= !occupied[i + side];
        }
        if c > 0 {
            ok &= !occupied[i - 1];
        }
        if c + 1 < side {
            ok &= !occupied[i + 1];
        }
        ok
    };
    let start = rng.random_range(0..side * side);
    if !free(start) {
        return None;
    }
    let mut blob = vec![start];
    let mut inside = vec![false; side * side];
    inside[start] = true;
    while blob.len() < size {
        let mut frontier = Vec::new();
        for &i in &blob {
            let (r, c) = (i / side, i % side);
            let mut push = |n: usize| {
                if !inside[n] && free(n) && !frontier.contains(&n) {
                    frontier.push(n);
                }
            };
            if r > 0 {
                push(i - side);
            }
            if r + 1 < side {
                push(i + side);
            }
            if c > 0 {
                push(i - 1);
            }
            if c + 1 < side {
                push(i + 1);
            }
        }
        if frontier.is_empty() {
            return None;
        }
        let n = frontier[rng.random_range(0..frontier.len())];
        inside[n] = true;
        blob.push(n);
    }
    blob.sort_unstable();
    Some(blob)
}

/// Writes a complete sequence directory under `out` and returns the
/// planted objects in generation order.
pub fn run_synth(out: &Path, params: &SynthParams, seed: u64) -> CliResult<Vec<PlantedObject>> {
    let p = params;
    let side = p.size;
    if side % 8 != 0 || side < 64 || p.dim == 0 || p.test_frames < p.anomalies.max(1) {
        return Err(crate::error::CliError::Usage(format!(
            "synth needs a size that is a multiple of 8 and at least 64, a nonzero dimension, and at least {} test frames",
            p.anomalies.max(1)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = planted_means(p.dim);
    let total = p.train_frames + p.test_frames;

    // Rectangles: sides from {16, 24, 32} px, corners on the 8-px lattice.
    let mut anomaly_frames: Vec<usize> = Vec::new();
    while anomaly_frames.len() < p.anomalies {
        let t = rng.random_range(0..p.test_frames);
        if !anomaly_frames.contains(&t) {
            anomaly_frames.push(t);
        }
    }
    let mut planted = Vec::new();
    let mut rects = Vec::new();
    for &t in &anomaly_frames {
        let h = 8 * rng.random_range(2..=4usize);
        let w = 8 * rng.random_range(2..=4usize);
        let r0 = 8 * rng.random_range(0..=(side - h) / 8);
        let c0 = 8 * rng.random_range(0..=(side - w) / 8);
        rects.push((t, r0, c0, h, w));
        let pixels = (r0..r0 + h).flat_map(|r| (c0..c0 + w).map(move |c| r * side + c)).collect();
        planted.push(PlantedObject {
            kind: PlantedKind::Anomaly,
            frame: t,
            pixels,
        });
    }

    let mut occupied = vec![vec![false; side * side]; p.test_frames];
    for o in &planted {
        for &i in &o.pixels {
            occupied[o.frame][i] = true;
        }
    }
    for b in 0..p.blobs {
        let size = if p.blobs > 1 { 1 + b * (p.blob_max - 1) / (p.blobs - 1) } else { 1 };
        let (frame, pixels) = loop {
            let t = rng.random_range(0..p.test_frames);
            if let Some(px) = grow_blob(&mut rng, &occupied[t], side, size) {
                break (t, px);
            }
        };
        for &i in &pixels {
            occupied[frame][i] = true;
        }
        planted.push(PlantedObject {
            kind: PlantedKind::Blob,
            frame,
            pixels,
        });
    }

    let layout = SequenceLayout::new(out);
    for (stage, stride) in [(1u8, 4usize), (2u8, 8usize)] {
        let g = side / stride;
        let mut data = vec![0f32; total * g * g * p.dim];
        for t in 0..total {
            for r in 0..g {
                for c in 0..g {
                    let off = ((t * g + r) * g + c) * p.dim;
                    let v = &mut data[off..off + p.dim];
                    sample_background(&mut rng, &means, &band_weights(c, g), v);
                    if t >= p.train_frames {
                        let test_t = t - p.train_frames;
                        let (py, px) = (r * stride, c * stride);
                        let hit = rects.iter().any(|&(ft, r0, c0, h, w)| {
                            ft == test_t && (r0..r0 + h).contains(&py) && (c0..c0 + w).contains(&px)
                        });
                        if hit {
                            for x in v.iter_mut() {
                                *x += p.delta as f32;
                            }
                        }
                    }
                }
            }
        }
        let seq = FeatureSequence::new(stage, total, g, g, p.dim, data).step("synth")?;
        let dir = layout.features_dir(stage);
        fs::create_dir_all(&dir).map_err(io_err("synth", &dir))?;
        seq.save(&dir.join("features.npy")).step("synth")?;
    }

    let gt_dir = layout.gt_dir();
    let mask_dir = layout.masks_dir(SYNTH_METHOD);
    for d in [&gt_dir, &mask_dir] {
        fs::create_dir_all(d).map_err(io_err("synth", d))?;
    }
    for t in 0..p.test_frames {
        let mut labels = vec![0u8; side * side];
        let mut cand = vec![false; side * side];
        for o in planted.iter().filter(|o| o.frame == t) {
            for &i in &o.pixels {
                cand[i] = true;
                if o.kind == PlantedKind::Anomaly {
                    labels[i] = 255;
                }
            }
        }
        let name = format!("frame_{t:04}.png");
        let gt = GroundTruthMask::new(side, side, labels).step("synth")?;
        save_ground_truth(&gt, &gt_dir.join(&name)).step("synth")?;
        let mask = BinaryMask::new(side, side, cand, accd_core::io::LabelSource::Prediction).step("synth")?;
        save_mask(&mask, &mask_dir.join(&name)).step("synth")?;
    }

    let cfg = RunConfig {
        k_init: 8,
        width: side,
        height: side,
        train_frames: p.train_frames,
        ..RunConfig::default()
    };
    let cfg_path = layout.config_path();
    fs::write(&cfg_path, cfg.to_config_string()).map_err(io_err("synth", &cfg_path))?;

    let mut truth = String::from("kind,frame,pixels,row_min,col_min,row_max,col_max\n");
    for o in &planted {
        let rows = o.pixels.iter().map(|i| i / side);
        let cols = o.pixels.iter().map(|i| i % side);
        truth.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            match o.kind {
                PlantedKind::Anomaly => "anomaly",
                PlantedKind::Blob => "blob",
            },
            o.frame,
            o.pixels.len(),
            rows.clone().min().unwrap_or(0),
            cols.clone().min().unwrap_or(0),
            rows.max().unwrap_or(0),
            cols.max().unwrap_or(0)
        ));
    }
    let truth_path = out.join("truth.csv");
    fs::write(&truth_path, truth).map_err(io_err("synth", &truth_path))?;
    Ok(planted)
}
