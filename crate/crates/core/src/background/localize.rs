use rayon::prelude::*;

use super::component::GlobalMixture;
use super::pca::Projection;
use crate::error::{Error, Result};
use crate::io::FeatureSequence;
use crate::scalar::Real;
use crate::special::log_sum_exp_slice;

/// Mixture whose component weights depend on the feature-grid position.
///
/// `spatial` is stored component-major: entry `(i, row, col)` lives at
/// `i · H·W + row · W + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedMixtureModel<T> {
    mixture: GlobalMixture<T>,
    spatial: Vec<T>,
    stage_id: u8,
    grid_h: usize,
    grid_w: usize,
    projection: Option<Projection<T>>,
}

impl<T: Real> LocalizedMixtureModel<T> {
    /// Assembles a model, checking that the weights at every position are
    /// non-negative and sum to one within `1e-6`.
    pub fn from_parts(
        mixture: GlobalMixture<T>,
        spatial: Vec<T>,
        stage_id: u8,
        grid_h: usize,
        grid_w: usize,
        projection: Option<Projection<T>>,
    ) -> Result<Self> {
        let k = mixture.len();
        let cells = grid_h * grid_w;
        if cells == 0 || spatial.len() != k * cells {
            return Err(Error::Shape(format!(
                "spatial weights of {} entries for K={k} on a {grid_h}x{grid_w} grid",
                spatial.len()
            )));
        }
        if let Some(p) = &projection {
            if p.out_dim() != mixture.dim() {
                return Err(Error::Shape(format!(
                    "projection outputs {} dimensions, mixture has {}",
                    p.out_dim(),
                    mixture.dim()
                )));
            }
        }
        let tol = T::lit(1e-6);
        for cell in 0..cells {
            let mut sum = T::zero();
            for i in 0..k {
                let w = spatial[i * cells + cell];
                if !(w >= T::zero()) || !w.is_finite() {
                    return Err(Error::Data(format!(
                        "spatial weight {w} of component {i} at cell {cell}"
                    )));
                }
                sum = sum + w;
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::Data(format!(
                    "spatial weights at cell {cell} sum to {sum}"
                )));
            }
        }
        Ok(LocalizedMixtureModel {
            mixture,
            spatial,
            stage_id,
            grid_h,
            grid_w,
            projection,
        })
    }

    /// Spatially constant weights `φ_i(x, y) = φ_i`.
    pub fn uniform(mixture: GlobalMixture<T>, stage_id: u8, grid_h: usize, grid_w: usize) -> Self {
        let cells = grid_h * grid_w;
        let spatial = mixture
            .weights()
            .iter()
            .flat_map(|&w| std::iter::repeat_n(w, cells))
            .collect();
        LocalizedMixtureModel {
            mixture,
            spatial,
            stage_id,
            grid_h,
            grid_w,
            projection: None,
        }
    }

    pub fn mixture(&self) -> &GlobalMixture<T> {
        &self.mixture
    }
    pub fn spatial_weights(&self) -> &[T] {
        &self.spatial
    }
    pub fn stage_id(&self) -> u8 {
        self.stage_id
    }
    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }
    pub fn projection(&self) -> Option<&Projection<T>> {
        self.projection.as_ref()
    }
    pub fn len(&self) -> usize {
        self.mixture.len()
    }
    pub fn is_empty(&self) -> bool {
        self.mixture.is_empty()
    }
    /// Dimension the Gaussians live in (after projection).
    pub fn dim(&self) -> usize {
        self.mixture.dim()
    }
    /// Dimension of raw input features.
    pub fn input_dim(&self) -> usize {
        self.projection
            .as_ref()
            .map_or_else(|| self.dim(), |p| p.in_dim())
    }

    #[inline]
    pub fn weight(&self, i: usize, row: usize, col: usize) -> T {
        self.spatial[i * self.grid_h * self.grid_w + row * self.grid_w + col]
    }

    /// Maps a raw feature vector into model space.
    pub fn prepare_into(&self, raw: &[f32], out: &mut [T]) {
        match &self.projection {
            Some(p) => p.apply_into(raw, out),
            None => {
                for (o, &v) in out.iter_mut().zip(raw) {
                    *o = T::lit(v as f64);
                }
            }
        }
    }

    pub fn prepare(&self, raw: &[f32]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.prepare_into(raw, &mut out);
        out
    }

    /// `ln Σ_i φ_i(row, col) N(p; μ_i, Σ_i)` for a model-space vector `p`.
    pub fn local_log_density(&self, p: &[T], row: usize, col: usize) -> T {
        let mut scratch = vec![T::zero(); self.dim()];
        let terms: Vec<T> = (0..self.len())
            .filter_map(|i| {
                let w = self.weight(i, row, col);
                (w > T::zero()).then(|| {
                    let c = &self.mixture.components()[i];
                    w.ln() + c.log_density_from_mahalanobis(c.mahalanobis_sq_with(p, &mut scratch))
                })
            })
            .collect();
        log_sum_exp_slice(&terms)
    }
}

/// Posterior responsibilities of every component for `x` under the global
/// weights, written into `out`.
fn responsibilities<T: Real>(mix: &GlobalMixture<T>, x: &[T], scratch: &mut [T], out: &mut [T]) {
    for (i, (c, &w)) in mix.components().iter().zip(mix.weights()).enumerate() {
        out[i] = if w > T::zero() {
            w.ln() + c.log_density_from_mahalanobis(c.mahalanobis_sq_with(x, scratch))
        } else {
            T::neg_infinity()
        };
    }
    let total = log_sum_exp_slice(out);
    for v in out.iter_mut() {
        *v = (*v - total).exp();
    }
}

/// Clipped-window box mean of one `h × w` plane.
fn box_mean<T: Real>(plane: &[T], h: usize, w: usize, radius: usize) -> Vec<T> {
    if radius == 0 {
        return plane.to_vec();
    }
    // Summed-area table with a zero border.
    let mut sat = vec![T::zero(); (h + 1) * (w + 1)];
    for r in 0..h {
        let mut row_sum = T::zero();
        for c in 0..w {
            row_sum = row_sum + plane[r * w + c];
            sat[(r + 1) * (w + 1) + c + 1] = sat[r * (w + 1) + c + 1] + row_sum;
        }
    }
    let mut out = vec![T::zero(); h * w];
    for r in 0..h {
        let r0 = r.saturating_sub(radius);
        let r1 = (r + radius + 1).min(h);
        for c in 0..w {
            let c0 = c.saturating_sub(radius);
            let c1 = (c + radius + 1).min(w);
            let s = sat[r1 * (w + 1) + c1] - sat[r0 * (w + 1) + c1] - sat[r1 * (w + 1) + c0]
                + sat[r0 * (w + 1) + c0];
            let n = T::from_usize_lossy((r1 - r0) * (c1 - c0));
            out[r * w + c] = (s / n).max(T::zero());
        }
    }
    out
}

/// Derives position-dependent weights: the mean posterior responsibility of
/// each component over the training frames, box-smoothed with the given
/// radius (window clipped at the grid border) and renormalized per position.
pub fn localize<T: Real>(
    mix: GlobalMixture<T>,
    training: &FeatureSequence,
    smooth_radius: usize,
) -> Result<LocalizedMixtureModel<T>> {
    localize_with_projection(mix, training, smooth_radius, None)
}

/// [`localize`] for a mixture fitted in a projected feature space.
pub fn localize_with_projection<T: Real>(
    mix: GlobalMixture<T>,
    training: &FeatureSequence,
    smooth_radius: usize,
    projection: Option<Projection<T>>,
) -> Result<LocalizedMixtureModel<T>> {
    let in_dim = projection.as_ref().map_or_else(|| mix.dim(), |p| p.in_dim());
    if training.dim() != in_dim {
        return Err(Error::Shape(format!(
            "training features have dimension {}, model expects {in_dim}",
            training.dim()
        )));
    }
    let (h, w) = (training.height(), training.width());
    let cells = h * w;
    let k = mix.len();
    let d = mix.dim();
    let frames = training.len();

    // Cell-major accumulation, each cell summing frames in order.
    let per_cell: Vec<Vec<T>> = (0..cells)
        .into_par_iter()
        .map(|cell| {
            let (row, col) = (cell / w, cell % w);
            let mut acc = vec![T::zero(); k];
            let mut x = vec![T::zero(); d];
            let mut scratch = vec![T::zero(); d];
            let mut resp = vec![T::zero(); k];
            for t in 0..frames {
                let raw = training.vector(t, row, col);
                match &projection {
                    Some(p) => p.apply_into(raw, &mut x),
                    None => x
                        .iter_mut()
                        .zip(raw)
                        .for_each(|(o, &v)| *o = T::lit(v as f64)),
                }
                responsibilities(&mix, &x, &mut scratch, &mut resp);
                for (a, &r) in acc.iter_mut().zip(&resp) {
                    *a = *a + r;
                }
            }
            let nt = T::from_usize_lossy(frames);
            acc.iter_mut().for_each(|a| *a = *a / nt);
            acc
        })
        .collect();

    let mut spatial = vec![T::zero(); k * cells];
    for (cell, acc) in per_cell.iter().enumerate() {
        for (i, &v) in acc.iter().enumerate() {
            spatial[i * cells + cell] = v;
        }
    }
    if smooth_radius > 0 {
        let smoothed: Vec<Vec<T>> = spatial
            .par_chunks(cells)
            .map(|plane| box_mean(plane, h, w, smooth_radius))
            .collect();
        spatial = smoothed.concat();
    }
    for cell in 0..cells {
        let sum = (0..k).fold(T::zero(), |a, i| a + spatial[i * cells + cell]);
        if sum > T::zero() {
            for i in 0..k {
                spatial[i * cells + cell] = spatial[i * cells + cell] / sum;
            }
        } else {
            for i in 0..k {
                spatial[i * cells + cell] = mix.weights()[i];
            }
        }
    }
    LocalizedMixtureModel::from_parts(mix, spatial, training.stage_id(), h, w, projection)
}
