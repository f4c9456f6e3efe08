//! Features on disk through fitting, the model file, scoring and
//! validation, using only the public API.

use std::fs;

use accd_core::acontrario::{validate_mask, Verdict};
use accd_core::background::{fit_global_gmm, localize, prune_components};
use accd_core::config::RunConfig;
use accd_core::io::npy::{read_f32, write_f32};
use accd_core::io::{load_feature_sequence, load_model, save_model, BinaryMask, FeatureSequence, LabelSource};
use accd_core::pvalue::pvalue_map;
use accd_core::{Model, Model32};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const T: usize = 12;
const G: usize = 8;
const D: usize = 3;

/// Left half of the grid centred at -3, right half at +3, unit variance.
fn two_region_features(seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0f32, 1.0).unwrap();
    let mut data = Vec::with_capacity(T * G * G * D);
    for _ in 0..T {
        for _ in 0..G {
            for c in 0..G {
                let centre = if c < G / 2 { -3.0 } else { 3.0 };
                for _ in 0..D {
                    data.push(centre + n.sample(&mut rng));
                }
            }
        }
    }
    data
}

fn fit(seq: &FeatureSequence, cfg: &RunConfig) -> Model {
    let samples: Vec<f64> = seq.data().iter().map(|&v| f64::from(v)).collect();
    let em = fit_global_gmm(&samples, seq.dim(), cfg, 3).unwrap();
    localize(prune_components(&em.mixture, cfg.w_min), seq, cfg.smooth_radius).unwrap()
}

fn config() -> RunConfig {
    RunConfig {
        k_init: 2,
        width: 32,
        height: 32,
        ..RunConfig::default()
    }
}

#[test]
fn stacked_and_per_frame_npy_layouts_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = two_region_features(1);
    let stacked = dir.path().join("features.npy");
    write_f32(&stacked, &[T, G, G, D], &data).unwrap();
    let frames = dir.path().join("frames");
    fs::create_dir(&frames).unwrap();
    let per = G * G * D;
    for t in 0..T {
        write_f32(&frames.join(format!("{t:06}.npy")), &[G, G, D], &data[t * per..(t + 1) * per]).unwrap();
    }
    let a = load_feature_sequence(&stacked, 1).unwrap();
    let b = load_feature_sequence(&frames, 1).unwrap();
    assert_eq!((a.len(), a.height(), a.width(), a.dim()), (T, G, G, D));
    assert_eq!(a.data(), b.data());
    assert_eq!(read_f32(&stacked).unwrap().shape, vec![T, G, G, D]);
}

#[test]
fn saved_model_scores_exactly_like_the_fitted_one() {
    let cfg = config();
    let seq = FeatureSequence::new(1, T, G, G, D, two_region_features(2)).unwrap();
    let model = fit(&seq, &cfg);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stage1.accd");
    save_model(&model, &path).unwrap();
    let loaded: Model = load_model(&path).unwrap();
    assert_eq!(loaded, model);

    let frame = seq.frame(0);
    let before = pvalue_map(&model, frame, 32, 32, cfg.logp_floor).unwrap();
    let after = pvalue_map(&loaded, frame, 32, 32, cfg.logp_floor).unwrap();
    assert_eq!(before.values(), after.values());

    let single: Model32 = load_model(&path).unwrap();
    let narrow = pvalue_map(&single, frame, 32, 32, cfg.logp_floor).unwrap();
    for (a, b) in before.values().iter().zip(narrow.values()) {
        assert!((a - f64::from(*b)).abs() < 1e-3 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn displaced_block_is_accepted_and_background_rejected() {
    let cfg = config();
    let train = FeatureSequence::new(1, T, G, G, D, two_region_features(3)).unwrap();
    let model = fit(&train, &cfg);

    // Background everywhere except a 2×2 cell block pushed far from both
    // training clusters.
    let mut frame = two_region_features(4)[..G * G * D].to_vec();
    for r in 2..4 {
        for c in 1..3 {
            for k in 0..D {
                frame[(r * G + c) * D + k] += 20.0;
            }
        }
    }
    let map = pvalue_map(&model, &frame, 32, 32, cfg.logp_floor).unwrap();

    let mut pixels = vec![false; 32 * 32];
    for r in 8..16 {
        for c in 4..12 {
            pixels[r * 32 + c] = true;
        }
    }
    for r in 24..28 {
        for c in 20..28 {
            pixels[r * 32 + c] = true;
        }
    }
    let mask = BinaryMask::new(32, 32, pixels, LabelSource::Prediction).unwrap();
    let cfg1 = RunConfig { stages: vec![1], ..cfg };
    let report = validate_mask(0, &mask, &[&map], &cfg1).unwrap();
    let verdicts: Vec<Verdict> = report.regions.iter().map(|r| r.verdict).collect();
    assert_eq!(verdicts, vec![Verdict::Accepted, Verdict::Rejected]);
    assert_eq!(report.output.count(), 64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_pvalues_stay_between_floor_and_zero(
        x in prop::collection::vec(-1e3f32..1e3, D),
        row in 0..G,
        col in 0..G,
    ) {
        let cfg = config();
        let seq = FeatureSequence::new(1, T, G, G, D, two_region_features(5)).unwrap();
        let model = fit(&seq, &cfg);
        let p = model.prepare(&x);
        let lp = accd_core::pvalue::log_pvalue(&model, &p, row, col, cfg.logp_floor);
        prop_assert!(lp <= 0.0 && lp >= cfg.logp_floor, "{}", lp);
    }
}
