use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::FeatureSequence;

/// Per-cell, per-channel temporal median over the window
/// `[t − w/2, t + w/2]` clamped to the sequence. Even-sized clamped windows
/// take the lower middle element.
pub fn temporal_median_features(seq: &FeatureSequence, window: usize) -> Result<FeatureSequence> {
    if window % 2 == 0 {
        return Err(Error::Config(format!("median window {window} must be odd")));
    }
    let t_len = seq.len();
    if window > t_len {
        return Err(Error::Config(format!(
            "median window {window} exceeds sequence length {t_len}"
        )));
    }
    let half = window / 2;
    let per = seq.frame_len();
    let src = seq.data();
    let mut out = vec![0.0f32; src.len()];
    out.par_chunks_mut(per).enumerate().for_each(|(t, frame)| {
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(t_len - 1);
        let mut buf = Vec::with_capacity(hi - lo + 1);
        for (i, v) in frame.iter_mut().enumerate() {
            buf.clear();
            buf.extend((lo..=hi).map(|s| src[s * per + i]));
            buf.sort_unstable_by(f32::total_cmp);
            *v = buf[(buf.len() - 1) / 2];
        }
    });
    FeatureSequence::new(seq.stage_id(), t_len, seq.height(), seq.width(), seq.dim(), out)?
        .with_frame_ids(seq.frame_ids().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_unchanged() {
        let seq = FeatureSequence::new(1, 5, 2, 2, 3, vec![1.25; 60]).unwrap();
        assert_eq!(temporal_median_features(&seq, 3).unwrap(), seq);
    }

    #[test]
    fn clamped_windows_use_lower_middle() {
        let seq = FeatureSequence::new(1, 3, 1, 1, 1, vec![0.0, 10.0, 0.0]).unwrap();
        let out = temporal_median_features(&seq, 3).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn transient_removed() {
        let mut v = vec![2.0f32; 7];
        v[3] = 200.0;
        let seq = FeatureSequence::new(1, 7, 1, 1, 1, v).unwrap();
        let out = temporal_median_features(&seq, 5).unwrap();
        assert!(out.data().iter().all(|&x| x == 2.0));
    }

    #[test]
    fn even_or_oversized_window_rejected() {
        let seq = FeatureSequence::new(1, 3, 1, 1, 1, vec![0.0; 3]).unwrap();
        assert!(matches!(temporal_median_features(&seq, 4), Err(Error::Config(_))));
        assert!(matches!(temporal_median_features(&seq, 5), Err(Error::Config(_))));
    }
}
