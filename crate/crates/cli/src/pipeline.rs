//! Fit, score, validate and evaluate one sequence directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use accd_core::acontrario::{label_components, validate_mask, write_region_csv};
use accd_core::background::{
    fit_global_gmm, localize_with_projection, prune_components, subsample_rows, temporal_median_features,
    Projection,
};
use accd_core::config::RunConfig;
use accd_core::io::dataset::{feature_source, SequenceLayout};
use accd_core::io::mask::list_mask_files;
use accd_core::io::npy::write_f32;
use accd_core::io::{load_feature_sequence, load_ground_truth, load_model, load_prediction_mask, save_mask, save_model};
use accd_core::io::{BinaryMask, FeatureSequence, GroundTruthMask, GtClass};
use accd_core::metrics::{
    log_nfa_histogram, relative_change, size_histogram, write_histogram_csv, MetricsRow, ScoredRegion,
    SequenceCounts,
};
use accd_core::pvalue::pvalue_map;
use accd_core::{Error, Model, Report};
use rayon::prelude::*;

use crate::error::{csv_err, io_err, CliError, CliResult, StepContext};

/// Values layered over the built-in defaults, in increasing precedence:
/// the sequence's `config.cfg`, an explicit config file, then single flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub stages: Option<Vec<u8>>,
}

pub fn resolve_config(layout: &SequenceLayout, ov: &Overrides) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    let seq_cfg = layout.config_path();
    for path in std::iter::once(seq_cfg.as_path())
        .filter(|p| p.is_file())
        .chain(ov.config.as_deref())
    {
        let text = fs::read_to_string(path).map_err(io_err("config", path))?;
        cfg.merge_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            .step("config")?;
    }
    if let Some(eps) = ov.epsilon {
        cfg.epsilon = eps;
    }
    if let Some(stages) = &ov.stages {
        cfg.stages = stages.clone();
    }
    cfg.validate().step("config")?;
    Ok(cfg)
}

fn ensure_dir(step: &'static str, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(step, dir))
}

fn load_stage_features(step: &'static str, layout: &SequenceLayout, stage: u8) -> CliResult<FeatureSequence> {
    let dir = layout.features_dir(stage);
    if !dir.is_dir() {
        return Err(CliError::Core {
            step,
            source: Error::Path(format!("stage {stage} features not found at {}", dir.display())),
        });
    }
    let src = feature_source(&dir).step(step)?;
    load_feature_sequence(&src, stage).step(step)
}

/// The leading `train_frames` frames, or every frame when it is 0.
fn training_part(seq: &FeatureSequence, cfg: &RunConfig) -> accd_core::Result<FeatureSequence> {
    match cfg.train_frames {
        0 => Ok(seq.clone()),
        n if n <= seq.len() => seq.slice(0..n),
        n => Err(Error::Alignment(format!(
            "train_frames = {n} but stage {} has only {} frames",
            seq.stage_id(),
            seq.len()
        ))),
    }
}

/// The frames after the training part, or every frame when
/// `train_frames` is 0.
fn scored_part(seq: &FeatureSequence, cfg: &RunConfig) -> accd_core::Result<FeatureSequence> {
    match cfg.train_frames {
        0 => Ok(seq.clone()),
        n if n < seq.len() => seq.slice(n..seq.len()),
        n => Err(Error::Alignment(format!(
            "train_frames = {n} leaves no stage {} frames to score out of {}",
            seq.stage_id(),
            seq.len()
        ))),
    }
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub stage: u8,
    pub k_fitted: usize,
    pub k_kept: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub model_path: PathBuf,
}

impl FitSummary {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// Fits and writes one model per configured stage. Each stage draws from
/// its own stream derived from `seed`.
pub fn run_fit(layout: &SequenceLayout, cfg: &RunConfig, seed: u64) -> CliResult<Vec<FitSummary>> {
    for &stage in &cfg.stages {
        let dir = layout.features_dir(stage);
        if !dir.is_dir() {
            return Err(CliError::Core {
                step: "fit",
                source: Error::Path(format!("stage {stage} features not found at {}", dir.display())),
            });
        }
    }
    ensure_dir("fit", &layout.models_dir())?;
    cfg.stages
        .iter()
        .map(|&stage| fit_stage(layout, cfg, stage, seed.wrapping_add(u64::from(stage))))
        .collect()
}

fn fit_stage(layout: &SequenceLayout, cfg: &RunConfig, stage: u8, seed: u64) -> CliResult<FitSummary> {
    let seq = load_stage_features("fit", layout, stage)?;
    let mut train = training_part(&seq, cfg).step("fit")?;
    if cfg.median_window > 1 {
        train = temporal_median_features(&train, cfg.median_window).step("fit")?;
    }
    let d_in = train.dim();
    let rows = subsample_rows(train.data(), d_in, cfg.max_train_samples, seed);
    let projection = match cfg.pca_dim {
        Some(p) if p < d_in => Some(Projection::<f64>::fit(&rows, d_in, p).step("fit")?),
        _ => None,
    };
    let (samples, dim): (Vec<f64>, usize) = match &projection {
        Some(p) => (rows.chunks_exact(d_in).flat_map(|r| p.apply(r)).collect(), p.out_dim()),
        None => (rows.iter().map(|&v| f64::from(v)).collect(), d_in),
    };
    let fit = fit_global_gmm(&samples, dim, cfg, seed).step("fit")?;
    let pruned = prune_components(&fit.mixture, cfg.w_min);
    let k_kept = pruned.len();
    let model = localize_with_projection(pruned, &train, cfg.smooth_radius, projection).step("fit")?;
    let model_path = layout.model_path(stage);
    save_model(&model, &model_path).step("fit")?;

    let trace_path = layout.models_dir().join(format!("stage{stage}_em_trace.csv"));
    let mut trace_csv = String::from("iteration,objective\n");
    for (i, v) in fit.log_likelihood.iter().enumerate() {
        trace_csv.push_str(&format!("{i},{v}\n"));
    }
    fs::write(&trace_path, trace_csv).map_err(io_err("fit", &trace_path))?;

    Ok(FitSummary {
        stage,
        k_fitted: fit.mixture.len(),
        k_kept,
        converged: fit.converged,
        trace: fit.log_likelihood,
        model_path,
    })
}

struct StageInputs {
    model: Model,
    frames: FeatureSequence,
}

fn load_stage_inputs(step: &'static str, layout: &SequenceLayout, cfg: &RunConfig) -> CliResult<Vec<StageInputs>> {
    let inputs = cfg
        .stages
        .iter()
        .map(|&stage| {
            let path = layout.model_path(stage);
            if !path.is_file() {
                return Err(CliError::Core {
                    step,
                    source: Error::Path(format!("stage {stage} model not found at {}", path.display())),
                });
            }
            let model: Model = load_model(&path).step(step)?;
            let seq = load_stage_features(step, layout, stage)?;
            let frames = scored_part(&seq, cfg).step(step)?;
            if (frames.height(), frames.width()) != model.grid() || frames.dim() != model.input_dim() {
                return Err(CliError::Core {
                    step,
                    source: Error::Shape(format!(
                        "stage {stage} features are {}x{}x{} but the model expects {}x{}x{}",
                        frames.height(),
                        frames.width(),
                        frames.dim(),
                        model.grid().0,
                        model.grid().1,
                        model.input_dim()
                    )),
                });
            }
            Ok(StageInputs { model, frames })
        })
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(first) = inputs.first() {
        if let Some(other) = inputs.iter().find(|s| s.frames.len() != first.frames.len()) {
            return Err(CliError::Core {
                step,
                source: Error::Alignment(format!(
                    "stage {} has {} scored frames but stage {} has {}",
                    first.model.stage_id(),
                    first.frames.len(),
                    other.model.stage_id(),
                    other.frames.len()
                )),
            });
        }
    }
    Ok(inputs)
}

/// Writes mask-resolution log p-value maps, one `[height, width]` NPY file
/// per scored frame and stage. Returns the number of frames scored.
pub fn run_score(layout: &SequenceLayout, cfg: &RunConfig) -> CliResult<usize> {
    let inputs = load_stage_inputs("score", layout, cfg)?;
    let n = inputs.first().map_or(0, |s| s.frames.len());
    for s in &inputs {
        let dir = layout.scores_dir(s.model.stage_id());
        ensure_dir("score", &dir)?;
        (0..s.frames.len())
            .into_par_iter()
            .map(|t| {
                let map = pvalue_map(&s.model, s.frames.frame(t), cfg.width, cfg.height, cfg.logp_floor)?;
                let values: Vec<f32> = map.values().iter().map(|&v| v as f32).collect();
                write_f32(&dir.join(format!("frame_{t:04}.npy")), &[cfg.height, cfg.width], &values)
            })
            .collect::<accd_core::Result<Vec<()>>>()
            .step("score")?;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidateSummary {
    pub frames: usize,
    pub regions: usize,
    pub accepted: usize,
}

fn list_masks(step: &'static str, dir: &Path) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::Core {
            step,
            source: Error::Path(format!("mask directory not found: {}", dir.display())),
        });
    }
    list_mask_files(dir).step(step)
}

/// Validates every candidate mask of `method` and writes the filtered masks
/// (same file names) plus `regions.csv`.
pub fn run_validate(layout: &SequenceLayout, cfg: &RunConfig, method: &str) -> CliResult<ValidateSummary> {
    let inputs = load_stage_inputs("validate", layout, cfg)?;
    let masks = list_masks("validate", &layout.masks_dir(method))?;
    let n = inputs.first().map_or(0, |s| s.frames.len());
    if masks.len() != n {
        return Err(CliError::Core {
            step: "validate",
            source: Error::Alignment(format!(
                "{} candidate masks for {n} scored feature frames",
                masks.len()
            )),
        });
    }
    let reports: Vec<Report> = masks
        .par_iter()
        .enumerate()
        .map(|(t, path)| {
            let mask = load_prediction_mask(path)?;
            let maps = inputs
                .iter()
                .map(|s| pvalue_map(&s.model, s.frames.frame(t), mask.width(), mask.height(), cfg.logp_floor))
                .collect::<accd_core::Result<Vec<_>>>()?;
            let refs: Vec<_> = maps.iter().collect();
            validate_mask(t, &mask, &refs, cfg)
        })
        .collect::<accd_core::Result<_>>()
        .step("validate")?;

    let out_dir = layout.validated_dir(method);
    ensure_dir("validate", &out_dir)?;
    for (rep, path) in reports.iter().zip(&masks) {
        let name = path.file_name().expect("listed mask files have names");
        save_mask(&rep.output, &out_dir.join(name)).step("validate")?;
    }
    let csv_path = layout.regions_csv(method);
    let mut buf = Vec::new();
    write_region_csv(&reports, &mut buf).map_err(io_err("validate", &csv_path))?;
    fs::write(&csv_path, buf).map_err(io_err("validate", &csv_path))?;

    Ok(ValidateSummary {
        frames: reports.len(),
        regions: reports.iter().map(|r| r.regions.len()).sum(),
        accepted: reports.iter().map(|r| r.accepted().count()).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub before: MetricsRow,
    pub after: MetricsRow,
}

impl EvalSummary {
    pub fn relative_changes(&self) -> [Option<f64>; 12] {
        let (b, a) = (self.before.values(), self.after.values());
        std::array::from_fn(|i| relative_change(b[i], a[i]))
    }
}

pub const SUMMARY_FILE: &str = "summary.csv";
/// Tag recorded with every summary row: object TPs follow the literal
/// pixel-overlap rule, so a prediction overlapping an already-checked
/// ground-truth region still counts as TP.
pub const OVERLAP_RULE: &str = "pixel_overlap";

fn load_masks_par(paths: &[PathBuf]) -> accd_core::Result<Vec<BinaryMask>> {
    paths.par_iter().map(|p| load_prediction_mask(p)).collect()
}

/// Evaluates candidate masks (before) and validated masks (after) against
/// ground truth and writes `summary.csv` with a relative-change row, plus
/// TP/FP score histograms when `regions.csv` is present.
pub fn run_eval(layout: &SequenceLayout, method: &str) -> CliResult<EvalSummary> {
    let gt_paths = list_masks("eval", &layout.gt_dir())?;
    let before_paths = list_masks("eval", &layout.masks_dir(method))?;
    let after_paths = list_masks("eval", &layout.validated_dir(method))?;
    if gt_paths.len() != before_paths.len() || gt_paths.len() != after_paths.len() {
        return Err(CliError::Core {
            step: "eval",
            source: Error::Alignment(format!(
                "{} ground-truth, {} candidate and {} validated masks",
                gt_paths.len(),
                before_paths.len(),
                after_paths.len()
            )),
        });
    }
    let gt: Vec<GroundTruthMask> = gt_paths
        .par_iter()
        .map(|p| load_ground_truth(p))
        .collect::<accd_core::Result<_>>()
        .step("eval")?;
    let before = load_masks_par(&before_paths).step("eval")?;
    let after = load_masks_par(&after_paths).step("eval")?;
    let summary = EvalSummary {
        before: SequenceCounts::from_frames(&gt, &before).step("eval")?.metrics(),
        after: SequenceCounts::from_frames(&gt, &after).step("eval")?.metrics(),
    };

    let dir = layout.eval_dir(method);
    ensure_dir("eval", &dir)?;
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;

    let regions_path = layout.regions_csv(method);
    if regions_path.is_file() {
        let scored = scored_regions(&regions_path, &gt, &before)?;
        for (name, buckets) in [
            ("hist_size.csv", size_histogram(&scored)),
            ("hist_lognfa.csv", log_nfa_histogram(&scored)),
        ] {
            let path = dir.join(name);
            let mut buf = Vec::new();
            write_histogram_csv(&buckets, &mut buf).map_err(io_err("eval", &path))?;
            fs::write(&path, buf).map_err(io_err("eval", &path))?;
        }
    }
    Ok(summary)
}

fn summary_header() -> Vec<String> {
    let mut h = vec!["condition".to_string()];
    h.extend(MetricsRow::NAMES.iter().map(|s| s.to_string()));
    h.extend(["evaluated_pixels", "object_tp_rule", "note"].map(String::from));
    h
}

fn metric_record(condition: &str, row: &MetricsRow) -> Vec<String> {
    let mut r = vec![condition.to_string()];
    r.extend(row.values().iter().map(|v| v.to_string()));
    r.push(row.evaluated_pixels.to_string());
    r.push(OVERLAP_RULE.to_string());
    r.push(if row.evaluated_pixels == 0 { "no evaluated pixels".into() } else { String::new() });
    r
}

fn write_summary(path: &Path, s: &EvalSummary) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err("eval", path))?;
    let err = |e| CliError::Csv {
        step: "eval",
        path: path.to_path_buf(),
        source: e,
    };
    w.write_record(summary_header()).map_err(err)?;
    w.write_record(metric_record("before", &s.before)).map_err(err)?;
    w.write_record(metric_record("after", &s.after)).map_err(err)?;
    let mut rel = vec!["relative_change_pct".to_string()];
    rel.extend(s.relative_changes().iter().map(|c| c.map_or_else(|| "—".to_string(), |v| v.to_string())));
    rel.extend([String::new(), String::new(), String::new()]);
    w.write_record(rel).map_err(err)?;
    w.flush().map_err(io_err("eval", path))
}

/// Reads the `before` and `after` rows of a `summary.csv`.
pub fn read_summary(path: &Path) -> CliResult<EvalSummary> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err("report", path))?;
    let mut rows = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err("report", path))?;
        let cond = rec.get(0).unwrap_or_default().to_string();
        if cond != "before" && cond != "after" {
            continue;
        }
        let bad = |what: &str| CliError::Core {
            step: "report",
            source: Error::Format(format!("{}: {cond} row: bad {what}", path.display())),
        };
        let mut values = [0.0; 12];
        for (i, v) in values.iter_mut().enumerate() {
            *v = rec.get(i + 1).and_then(|s| s.parse().ok()).ok_or_else(|| bad(MetricsRow::NAMES[i]))?;
        }
        let px: u64 = rec.get(13).and_then(|s| s.parse().ok()).ok_or_else(|| bad("evaluated_pixels"))?;
        rows.insert(cond, MetricsRow::from_values(values, px));
    }
    match (rows.remove("before"), rows.remove("after")) {
        (Some(before), Some(after)) => Ok(EvalSummary { before, after }),
        _ => Err(CliError::Core {
            step: "report",
            source: Error::Format(format!("{}: missing before/after rows", path.display())),
        }),
    }
}

/// Joins `regions.csv` with the candidate masks (component order is
/// deterministic, so `(frame_id, region_id)` identifies the pixels) and
/// labels each region TP when it touches a positive ground-truth pixel.
fn scored_regions(path: &Path, gt: &[GroundTruthMask], before: &[BinaryMask]) -> CliResult<Vec<ScoredRegion>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err("eval", path))?;
    let mut scores: HashMap<(usize, usize), f64> = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err("eval", path))?;
        let parse = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok());
        let (Some(frame), Some(region), Some(fused)) = (parse(0), parse(1), parse(5)) else {
            return Err(CliError::Core {
                step: "eval",
                source: Error::Format(format!("{}: malformed row {:?}", path.display(), rec)),
            });
        };
        scores.insert((frame as usize, region as usize), fused);
    }
    let mut out = Vec::new();
    for (t, (g, m)) in gt.iter().zip(before).enumerate() {
        for (k, pixels) in label_components(m).iter().enumerate() {
            let Some(&fused) = scores.get(&(t, k)) else {
                return Err(CliError::Core {
                    step: "eval",
                    source: Error::Alignment(format!(
                        "{}: no row for frame {t} region {k}; re-run validate",
                        path.display()
                    )),
                });
            };
            out.push(ScoredRegion {
                size: pixels.len(),
                fused_log_nfa: fused,
                is_tp: pixels.iter().any(|&i| g.class_at(i) == GtClass::Positive),
            });
        }
    }
    Ok(out)
}
