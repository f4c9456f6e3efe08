//! Upper bounds on per-pixel p-values under the localized mixture.
//!
//! For a feature `p` at grid position `(x, y)` the tail region
//! `{q : P(q) ≤ P(p)}` is contained in each ellipsoid exterior
//! `{q : φ_i N_i(q) ≤ P(p)}`, whose Gaussian mass is a χ²_d survival value at
//! radius `R_i²`. Summing the `φ_i`-weighted masses bounds the p-value from
//! above. All of it is evaluated in the natural-log domain.

use rayon::prelude::*;

use crate::background::LocalizedMixtureModel;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{ln_chi2_sf, log_sum_exp_slice};

/// Per-pixel natural-log p-value bounds of one stage at mask resolution,
/// with the feature-resolution source kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPValueMap<T> {
    stage_id: u8,
    width: usize,
    height: usize,
    values: Vec<T>,
    grid_h: usize,
    grid_w: usize,
    grid_values: Vec<T>,
}

impl<T: Real> LogPValueMap<T> {
    /// Builds a map by nearest-neighbour upsampling of feature-grid values
    /// to `width × height`: pixel `(r, c)` takes cell
    /// `(⌊r·H_f/height⌋, ⌊c·W_f/width⌋)`.
    pub fn from_grid(
        stage_id: u8,
        grid_h: usize,
        grid_w: usize,
        grid_values: Vec<T>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if grid_values.len() != grid_h * grid_w || grid_h == 0 || grid_w == 0 {
            return Err(Error::Shape(format!(
                "{} grid values for a {grid_h}x{grid_w} grid",
                grid_values.len()
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Shape("target resolution must be nonzero".into()));
        }
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            let gr = r * grid_h / height;
            for c in 0..width {
                let gc = c * grid_w / width;
                values.push(grid_values[gr * grid_w + gc]);
            }
        }
        Ok(LogPValueMap {
            stage_id,
            width,
            height,
            values,
            grid_h,
            grid_w,
            grid_values,
        })
    }

    pub fn stage_id(&self) -> u8 {
        self.stage_id
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }
    pub fn grid_values(&self) -> &[T] {
        &self.grid_values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn at_index(&self, idx: usize) -> T {
        self.values[idx]
    }
}

/// Reusable buffers for scoring many vectors against one model.
pub struct Scorer<'m, T> {
    model: &'m LocalizedMixtureModel<T>,
    floor: T,
    x: Vec<T>,
    scratch: Vec<T>,
    log_joint: Vec<T>,
    maha: Vec<T>,
    active: Vec<usize>,
    terms: Vec<T>,
}

impl<'m, T: Real> Scorer<'m, T> {
    pub fn new(model: &'m LocalizedMixtureModel<T>, logp_floor: f64) -> Self {
        let d = model.dim();
        let k = model.len();
        Scorer {
            model,
            floor: T::lit(logp_floor),
            x: vec![T::zero(); d],
            scratch: vec![T::zero(); d],
            log_joint: Vec::with_capacity(k),
            maha: Vec::with_capacity(k),
            active: Vec::with_capacity(k),
            terms: Vec::with_capacity(k),
        }
    }

    /// Fills `log_joint[j] = ln φ_i(row,col) + ln N_i(p)` for every active
    /// component `i = active[j]` and returns `ln P(p | θ(row, col))`.
    fn joint(&mut self, p: &[T], row: usize, col: usize) -> T {
        self.log_joint.clear();
        self.maha.clear();
        self.active.clear();
        for (i, c) in self.model.mixture().components().iter().enumerate() {
            let w = self.model.weight(i, row, col);
            if w > T::zero() {
                let maha = c.mahalanobis_sq_with(p, &mut self.scratch);
                self.log_joint.push(w.ln() + c.log_density_from_mahalanobis(maha));
                self.maha.push(maha);
                self.active.push(i);
            }
        }
        log_sum_exp_slice(&self.log_joint)
    }

    /// `ln p-value` bound for a model-space vector, clamped to
    /// `[logp_floor, 0]`.
    pub fn log_pvalue(&mut self, p: &[T], row: usize, col: usize) -> T {
        let log_p = self.joint(p, row, col);
        let d = self.model.dim();
        self.terms.clear();
        for (j, &i) in self.active.iter().enumerate() {
            let w = self.model.weight(i, row, col);
            // R_i² = −2 ln P + 2 ln φ_i − ln|Σ_i| − d ln 2π
            //      = maha_i − 2 (ln P − ln φ_i N_i),
            // the second form avoiding cancellation between large terms.
            let r2 = (self.maha[j] - T::lit(2.0) * (log_p - self.log_joint[j])).max(T::zero());
            self.terms.push(w.ln() + ln_chi2_sf(d, r2));
        }
        log_sum_exp_slice(&self.terms).min(T::zero()).max(self.floor)
    }

    /// Same as [`Scorer::log_pvalue`] for a raw (unprojected) feature vector.
    pub fn log_pvalue_raw(&mut self, raw: &[f32], row: usize, col: usize) -> T {
        let mut x = std::mem::take(&mut self.x);
        self.model.prepare_into(raw, &mut x);
        let v = self.log_pvalue(&x, row, col);
        self.x = x;
        v
    }
}

/// `R_i²`, the squared radius of the ellipsoid outside which
/// `φ_i(x,y) N_i(q) ≤ P(p | θ(x,y))`, clamped at 0. Requires
/// `φ_i(row, col) > 0`.
pub fn ellipsoid_radius_sq<T: Real>(
    model: &LocalizedMixtureModel<T>,
    p: &[T],
    row: usize,
    col: usize,
    i: usize,
) -> T {
    let log_p = model.local_log_density(p, row, col);
    let c = &model.mixture().components()[i];
    let w = model.weight(i, row, col);
    let d = T::from_usize_lossy(model.dim());
    (-T::lit(2.0) * log_p + T::lit(2.0) * w.ln() - c.log_det() - d * T::ln_two_pi()).max(T::zero())
}

/// Natural-log p-value upper bound
/// `ln min(1, Σ_i φ_i(x,y) SF_{χ²_d}(R_i²))`, clamped below at `logp_floor`.
pub fn log_pvalue<T: Real>(
    model: &LocalizedMixtureModel<T>,
    p: &[T],
    row: usize,
    col: usize,
    logp_floor: f64,
) -> T {
    Scorer::new(model, logp_floor).log_pvalue(p, row, col)
}

/// Scores every cell of a raw `H_f × W_f × d_in` frame and upsamples the
/// result to `width × height`.
pub fn pvalue_map<T: Real>(
    model: &LocalizedMixtureModel<T>,
    frame: &[f32],
    width: usize,
    height: usize,
    logp_floor: f64,
) -> Result<LogPValueMap<T>> {
    let (gh, gw) = model.grid();
    let d_in = model.input_dim();
    if frame.len() != gh * gw * d_in {
        return Err(Error::Shape(format!(
            "frame of {} values does not match the {gh}x{gw}x{d_in} model grid",
            frame.len()
        )));
    }
    let grid: Vec<T> = frame
        .par_chunks(gw * d_in)
        .enumerate()
        .flat_map_iter(|(row, line)| {
            let mut scorer = Scorer::new(model, logp_floor);
            line.chunks_exact(d_in)
                .enumerate()
                .map(|(col, raw)| scorer.log_pvalue_raw(raw, row, col))
                .collect::<Vec<_>>()
        })
        .collect();
    LogPValueMap::from_grid(model.stage_id(), gh, gw, grid, width, height)
}
