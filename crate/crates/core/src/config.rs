//! Run configuration and the line-oriented `key = value` config format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Covariance parameterization of every mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    Full,
    Diagonal,
}

impl CovarianceMode {
    /// Diagonal above 64 dimensions, full otherwise.
    pub fn auto(dim: usize) -> Self {
        if dim > 64 {
            CovarianceMode::Diagonal
        } else {
            CovarianceMode::Full
        }
    }
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceMode::Full => f.write_str("full"),
            CovarianceMode::Diagonal => f.write_str("diagonal"),
        }
    }
}

impl FromStr for CovarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CovarianceMode::Full),
            "diagonal" | "diag" => Ok(CovarianceMode::Diagonal),
            other => Err(Error::Config(format!("unknown covariance_mode {other:?}"))),
        }
    }
}

/// All tunables of a run. Defaults reproduce the published setup
/// (K = 1000, ε = 1, c_f = 35/91, 256×256 masks).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k_init: usize,
    pub epsilon: f64,
    pub cf_stage1: f64,
    pub cf_stage2: f64,
    /// Polyomino count prefactor.
    pub alpha: f64,
    /// Polyomino growth constant.
    pub beta: f64,
    /// `None` selects [`CovarianceMode::auto`] from the feature dimension.
    pub covariance_mode: Option<CovarianceMode>,
    /// Relative ridge: every covariance gets `lambda · tr(S)/d · I`.
    pub lambda: f64,
    pub pca_dim: Option<usize>,
    pub logp_floor: f64,
    pub em_max_iters: usize,
    pub em_tol: f64,
    /// Temporal median window over training features; 1 disables it.
    pub median_window: usize,
    pub w_min: f64,
    pub smooth_radius: usize,
    /// Cap on the number of training vectors handed to EM; 0 means no cap.
    pub max_train_samples: usize,
    /// Mask (evaluation) resolution.
    pub width: usize,
    pub height: usize,
    /// Leading feature frames used for fitting; the rest are scored.
    pub train_frames: usize,
    pub stages: Vec<u8>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k_init: 1000,
            epsilon: 1.0,
            cf_stage1: 35.0,
            cf_stage2: 91.0,
            alpha: 0.317,
            beta: 4.06,
            covariance_mode: None,
            lambda: 1e-2,
            pca_dim: None,
            logp_floor: -700.0,
            em_max_iters: 100,
            em_tol: 1e-6,
            median_window: 1,
            w_min: 1e-4,
            smooth_radius: 1,
            max_train_samples: 200_000,
            width: 256,
            height: 256,
            train_frames: 0,
            stages: vec![1, 2],
        }
    }
}

impl RunConfig {
    /// Receptive-field correction for a backbone stage.
    pub fn cf(&self, stage: u8) -> Result<f64> {
        match stage {
            1 => Ok(self.cf_stage1),
            2 => Ok(self.cf_stage2),
            s => Err(Error::Config(format!("no c_f configured for stage {s}"))),
        }
    }

    pub fn covariance_mode_for(&self, dim: usize) -> CovarianceMode {
        self.covariance_mode.unwrap_or_else(|| CovarianceMode::auto(dim))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.epsilon > 0.0) {
            return fail("epsilon must be > 0");
        }
        if !(self.cf_stage1 >= 1.0 && self.cf_stage2 >= 1.0) {
            return fail("c_f must be >= 1");
        }
        if !(self.alpha > 0.0) {
            return fail("alpha must be > 0");
        }
        if !(self.beta > 1.0) {
            return fail("beta must be > 1");
        }
        if !(self.logp_floor < 0.0) {
            return fail("logp_floor must be < 0");
        }
        if !(self.lambda >= 0.0) {
            return fail("lambda must be >= 0");
        }
        if self.k_init == 0 {
            return fail("k_init must be >= 1");
        }
        if !(0.0..1.0).contains(&self.w_min) {
            return fail("w_min must lie in [0, 1)");
        }
        if self.median_window % 2 == 0 {
            return fail("median_window must be odd");
        }
        if let Some(p) = self.pca_dim {
            if p == 0 || p % 2 != 0 {
                return fail("pca_dim must be a positive even integer");
            }
        }
        if self.width == 0 || self.height == 0 {
            return fail("mask resolution must be nonzero");
        }
        if self.stages.is_empty() {
            return fail("at least one stage is required");
        }
        for &s in &self.stages {
            self.cf(s)?;
        }
        if !(self.em_tol >= 0.0) {
            return fail("em_tol must be >= 0");
        }
        Ok(())
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        }
        match key {
            "k_init" => self.k_init = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "cf_stage1" => self.cf_stage1 = num(key, value)?,
            "cf_stage2" => self.cf_stage2 = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "covariance_mode" => {
                self.covariance_mode = match value {
                    "auto" => None,
                    v => Some(v.parse()?),
                }
            }
            "lambda" => self.lambda = num(key, value)?,
            "pca_dim" => {
                self.pca_dim = match value {
                    "none" | "0" => None,
                    v => Some(num(key, v)?),
                }
            }
            "logp_floor" => self.logp_floor = num(key, value)?,
            "em_max_iters" => self.em_max_iters = num(key, value)?,
            "em_tol" => self.em_tol = num(key, value)?,
            "median_window" => self.median_window = num(key, value)?,
            "w_min" => self.w_min = num(key, value)?,
            "smooth_radius" => self.smooth_radius = num(key, value)?,
            "max_train_samples" => self.max_train_samples = num(key, value)?,
            "width" => self.width = num(key, value)?,
            "height" => self.height = num(key, value)?,
            "train_frames" => self.train_frames = num(key, value)?,
            "stages" => {
                self.stages = value
                    .split(',')
                    .map(|s| num::<u8>(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment of a config text on top of `self`.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.merge_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Renders the config in the same `key = value` format `parse` reads.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("k_init", self.k_init.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("cf_stage1", self.cf_stage1.to_string());
        kv("cf_stage2", self.cf_stage2.to_string());
        kv("alpha", self.alpha.to_string());
        kv("beta", self.beta.to_string());
        kv(
            "covariance_mode",
            self.covariance_mode
                .map_or_else(|| "auto".to_string(), |m| m.to_string()),
        );
        kv("lambda", self.lambda.to_string());
        kv(
            "pca_dim",
            self.pca_dim.map_or_else(|| "none".to_string(), |p| p.to_string()),
        );
        kv("logp_floor", self.logp_floor.to_string());
        kv("em_max_iters", self.em_max_iters.to_string());
        kv("em_tol", self.em_tol.to_string());
        kv("median_window", self.median_window.to_string());
        kv("w_min", self.w_min.to_string());
        kv("smooth_radius", self.smooth_radius.to_string());
        kv("max_train_samples", self.max_train_samples.to_string());
        kv("width", self.width.to_string());
        kv("height", self.height.to_string());
        kv("train_frames", self.train_frames.to_string());
        kv(
            "stages",
            self.stages
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        out
    }
}
