//! Pixel-wise and object-wise change-detection metrics.
//!
//! Ground-truth pixels labelled as ignored (codes 85 and 170) take no part in
//! any count: they are excluded from the pixel confusion and cleared from
//! predictions before predicted components are formed. Every ratio whose
//! denominator is zero evaluates to 0.

use std::io::Write;

use crate::acontrario::label_pixels;
use crate::error::{Error, Result};
use crate::io::{BinaryMask, GroundTruthMask, GtClass};

/// Thresholds over which the sIoU-based F1 is averaged.
pub const SIOU_TAUS: [f64; 3] = [0.25, 0.5, 0.75];

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1_of(pr: f64, re: f64) -> f64 {
    ratio(2.0 * pr * re, pr + re)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PixelConfusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl PixelConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, o: &PixelConfusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMetrics {
    pub pr: f64,
    pub re: f64,
    pub fpr: f64,
    pub pwc: f64,
    pub f1: f64,
}

fn check_dims(gt: &GroundTruthMask, pred: &BinaryMask) -> Result<()> {
    if (gt.width(), gt.height()) != (pred.width(), pred.height()) {
        return Err(Error::Shape(format!(
            "ground truth is {}x{} but the prediction is {}x{}",
            gt.width(),
            gt.height(),
            pred.width(),
            pred.height()
        )));
    }
    Ok(())
}

pub fn pixel_confusion(gt: &GroundTruthMask, pred: &BinaryMask) -> Result<PixelConfusion> {
    check_dims(gt, pred)?;
    let mut c = PixelConfusion::default();
    for (i, &p) in pred.pixels().iter().enumerate() {
        match (gt.class_at(i), p) {
            (GtClass::Ignored, _) => {}
            (GtClass::Positive, true) => c.tp += 1,
            (GtClass::Positive, false) => c.fn_ += 1,
            (GtClass::Negative, true) => c.fp += 1,
            (GtClass::Negative, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn pixel_metrics(c: &PixelConfusion) -> PixelMetrics {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let pr = ratio(tp, tp + fp);
    let re = ratio(tp, tp + fn_);
    PixelMetrics {
        pr,
        re,
        fpr: ratio(fp, fp + tn),
        pwc: 100.0 * ratio(fn_ + fp, tp + fn_ + fp + tn),
        f1: f1_of(pr, re),
    }
}

/// Connected components of one frame: ground-truth positives and
/// predictions with ignored pixels removed, both as sorted raster indices.
#[derive(Debug, Clone)]
pub struct FrameComponents {
    pub width: usize,
    pub height: usize,
    pub gt: Vec<Vec<usize>>,
    pub pred: Vec<Vec<usize>>,
}

impl FrameComponents {
    pub fn new(gt: &GroundTruthMask, pred: &BinaryMask) -> Result<Self> {
        check_dims(gt, pred)?;
        let (w, h) = (gt.width(), gt.height());
        let positives: Vec<bool> = (0..w * h).map(|i| gt.class_at(i) == GtClass::Positive).collect();
        let kept: Vec<bool> = pred
            .pixels()
            .iter()
            .enumerate()
            .map(|(i, &p)| p && gt.class_at(i) != GtClass::Ignored)
            .collect();
        Ok(FrameComponents {
            width: w,
            height: h,
            gt: label_pixels(&positives, w, h),
            pred: label_pixels(&kept, w, h),
        })
    }

    fn owner_map(&self, comps: &[Vec<usize>]) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.width * self.height];
        for (j, c) in comps.iter().enumerate() {
            for &i in c {
                owner[i] = Some(j);
            }
        }
        owner
    }

    /// sIoU of every ground-truth component, in component order.
    pub fn siou_values(&self) -> Vec<f64> {
        let gt_owner = self.owner_map(&self.gt);
        let pred_owner = self.owner_map(&self.pred);
        self.gt
            .iter()
            .map(|comp| {
                let mut hit = vec![false; self.pred.len()];
                for &i in comp {
                    if let Some(j) = pred_owner[i] {
                        hit[j] = true;
                    }
                }
                let mut union = comp.len();
                let mut inter = 0usize;
                for &i in comp {
                    if pred_owner[i].is_some_and(|j| hit[j]) {
                        inter += 1;
                    }
                }
                if inter == 0 {
                    return 0.0;
                }
                // Predicted pixels outside k count unless they belong to
                // another ground-truth component.
                for (j, p) in self.pred.iter().enumerate() {
                    if hit[j] {
                        union += p.iter().filter(|&&i| gt_owner[i].is_none()).count();
                    }
                }
                inter as f64 / union as f64
            })
            .collect()
    }

    /// PPV of every predicted component, in component order.
    pub fn ppv_values(&self) -> Vec<f64> {
        let gt_owner = self.owner_map(&self.gt);
        self.pred
            .iter()
            .map(|p| p.iter().filter(|&&i| gt_owner[i].is_some()).count() as f64 / p.len() as f64)
            .collect()
    }
}

/// sIoU of ground-truth component `k` against the predicted components.
/// `gt` holds every ground-truth component, `k` included.
pub fn siou(k: &[usize], predictions: &[Vec<usize>], gt: &[Vec<usize>]) -> f64 {
    use std::collections::HashSet;
    let kset: HashSet<usize> = k.iter().copied().collect();
    let khat: HashSet<usize> = predictions
        .iter()
        .filter(|p| p.iter().any(|i| kset.contains(i)))
        .flatten()
        .copied()
        .collect();
    if khat.is_empty() {
        return 0.0;
    }
    let others: HashSet<usize> = gt.iter().filter(|g| g.as_slice() != k).flatten().copied().collect();
    let inter = kset.intersection(&khat).count();
    let union = kset.union(&khat).filter(|i| !others.contains(i)).count();
    inter as f64 / union as f64
}

/// Fraction of a predicted component's pixels that are ground-truth positive.
pub fn ppv(pred: &[usize], gt: &[Vec<usize>]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().filter(|i| gt.iter().any(|g| g.binary_search(i).is_ok())).count();
    hits as f64 / pred.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectVariant {
    Siou { tau: f64 },
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectCounts {
    pub variant: ObjectVariant,
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub n_frames: u64,
}

impl ObjectCounts {
    pub fn new(variant: ObjectVariant) -> Self {
        ObjectCounts {
            variant,
            tp: 0,
            fn_: 0,
            fp: 0,
            n_frames: 0,
        }
    }

    pub fn add(&mut self, o: &ObjectCounts) {
        self.tp += o.tp;
        self.fn_ += o.fn_;
        self.fp += o.fp;
        self.n_frames += o.n_frames;
    }

    /// `tp / (tp + fn + fp)`, the sIoU-based F-measure.
    pub fn f1_siou(&self) -> f64 {
        let tp = self.tp as f64;
        ratio(tp, tp + self.fn_ as f64 + self.fp as f64)
    }

    pub fn overlap_metrics(&self) -> ObjectMetrics {
        let (tp, fn_, fp) = (self.tp as f64, self.fn_ as f64, self.fp as f64);
        let pr = ratio(tp, tp + fp);
        let re = ratio(tp, tp + fn_);
        ObjectMetrics {
            pr,
            re,
            fpr: ratio(fp, self.n_frames as f64),
            pwc: 100.0 * ratio(fn_ + fp, tp + fn_ + fp),
            f1: f1_of(pr, re),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectMetrics {
    pub pr: f64,
    pub re: f64,
    pub fpr: f64,
    pub pwc: f64,
    pub f1: f64,
}

/// Ground-truth components with `sIoU > τ` are TP, the rest FN; predicted
/// components with `PPV ≤ τ` are FP.
pub fn object_counts_siou(gt: &GroundTruthMask, pred: &BinaryMask, tau: f64) -> Result<ObjectCounts> {
    let fc = FrameComponents::new(gt, pred)?;
    Ok(siou_counts_from(&fc.siou_values(), &fc.ppv_values(), tau))
}

fn siou_counts_from(sious: &[f64], ppvs: &[f64], tau: f64) -> ObjectCounts {
    let tp = sious.iter().filter(|&&s| s > tau).count() as u64;
    ObjectCounts {
        variant: ObjectVariant::Siou { tau },
        tp,
        fn_: sious.len() as u64 - tp,
        fp: ppvs.iter().filter(|&&p| p <= tau).count() as u64,
        n_frames: 1,
    }
}

fn overlap_counts_frame(fc: &FrameComponents) -> ObjectCounts {
    let gt_owner = fc.owner_map(&fc.gt);
    let mut checked = vec![false; fc.gt.len()];
    let mut c = ObjectCounts::new(ObjectVariant::Overlap);
    c.n_frames = 1;
    for p in &fc.pred {
        let mut any = false;
        for &i in p {
            if let Some(k) = gt_owner[i] {
                any = true;
                checked[k] = true;
            }
        }
        if any {
            c.tp += 1;
        } else {
            c.fp += 1;
        }
    }
    c.fn_ = checked.iter().filter(|&&v| !v).count() as u64;
    c
}

/// Overlap-based object counts over an aligned sequence. A prediction
/// touching any positive pixel is TP and marks each ground-truth region it
/// touches as checked; a prediction touching none is FP; unchecked regions
/// are FN. A second prediction overlapping an already-checked region is
/// still TP.
pub fn object_counts_overlap(gt: &[GroundTruthMask], pred: &[BinaryMask]) -> Result<ObjectCounts> {
    if gt.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} ground-truth frames but {} predicted frames",
            gt.len(),
            pred.len()
        )));
    }
    let mut total = ObjectCounts::new(ObjectVariant::Overlap);
    for (g, p) in gt.iter().zip(pred) {
        total.add(&overlap_counts_frame(&FrameComponents::new(g, p)?));
    }
    Ok(total)
}

/// Everything a sequence contributes, summed over frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceCounts {
    pub pixel: PixelConfusion,
    pub overlap: ObjectCounts,
    pub siou: Vec<ObjectCounts>,
    pub siou_sum: f64,
    pub gt_components: u64,
}

impl Default for SequenceCounts {
    fn default() -> Self {
        let mut overlap = ObjectCounts::new(ObjectVariant::Overlap);
        overlap.n_frames = 0;
        SequenceCounts {
            pixel: PixelConfusion::default(),
            overlap,
            siou: SIOU_TAUS.iter().map(|&tau| ObjectCounts::new(ObjectVariant::Siou { tau })).collect(),
            siou_sum: 0.0,
            gt_components: 0,
        }
    }
}

impl SequenceCounts {
    pub fn add_frame(&mut self, gt: &GroundTruthMask, pred: &BinaryMask) -> Result<()> {
        self.pixel.add(&pixel_confusion(gt, pred)?);
        let fc = FrameComponents::new(gt, pred)?;
        self.overlap.add(&overlap_counts_frame(&fc));
        let sious = fc.siou_values();
        let ppvs = fc.ppv_values();
        for c in &mut self.siou {
            let tau = match c.variant {
                ObjectVariant::Siou { tau } => tau,
                ObjectVariant::Overlap => unreachable!("sIoU slots hold sIoU variants"),
            };
            c.add(&siou_counts_from(&sious, &ppvs, tau));
        }
        self.siou_sum += sious.iter().sum::<f64>();
        self.gt_components += sious.len() as u64;
        Ok(())
    }

    pub fn from_frames(gt: &[GroundTruthMask], pred: &[BinaryMask]) -> Result<Self> {
        if gt.len() != pred.len() {
            return Err(Error::Alignment(format!(
                "{} ground-truth frames but {} predicted frames",
                gt.len(),
                pred.len()
            )));
        }
        let mut s = SequenceCounts::default();
        for (g, p) in gt.iter().zip(pred) {
            s.add_frame(g, p)?;
        }
        Ok(s)
    }

    pub fn metrics(&self) -> MetricsRow {
        let px = pixel_metrics(&self.pixel);
        let ob = self.overlap.overlap_metrics();
        let f1_siou = self.siou.iter().map(ObjectCounts::f1_siou).sum::<f64>() / self.siou.len() as f64;
        MetricsRow {
            re: px.re,
            fpr: px.fpr,
            pwc: px.pwc,
            pr: px.pr,
            f1: px.f1,
            re_ob: ob.re,
            fpr_ob: ob.fpr,
            pwc_ob: ob.pwc,
            pr_ob: ob.pr,
            f1_ob: ob.f1,
            siou: ratio(self.siou_sum, self.gt_components as f64),
            f1_siou,
            evaluated_pixels: self.pixel.total(),
        }
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub re: f64,
    pub fpr: f64,
    pub pwc: f64,
    pub pr: f64,
    pub f1: f64,
    pub re_ob: f64,
    pub fpr_ob: f64,
    pub pwc_ob: f64,
    pub pr_ob: f64,
    pub f1_ob: f64,
    /// Mean sIoU over ground-truth components.
    pub siou: f64,
    /// sIoU F-measure averaged over [`SIOU_TAUS`].
    pub f1_siou: f64,
    /// Pixels that entered the pixel confusion; 0 flags an all-ignored run.
    pub evaluated_pixels: u64,
}

impl MetricsRow {
    pub const NAMES: [&'static str; 12] = [
        "re", "fpr", "pwc", "pr", "f1", "re_ob", "fpr_ob", "pwc_ob", "pr_ob", "f1_ob", "siou", "f1_siou",
    ];

    pub fn values(&self) -> [f64; 12] {
        [
            self.re,
            self.fpr,
            self.pwc,
            self.pr,
            self.f1,
            self.re_ob,
            self.fpr_ob,
            self.pwc_ob,
            self.pr_ob,
            self.f1_ob,
            self.siou,
            self.f1_siou,
        ]
    }

    pub fn from_values(v: [f64; 12], evaluated_pixels: u64) -> Self {
        MetricsRow {
            re: v[0],
            fpr: v[1],
            pwc: v[2],
            pr: v[3],
            f1: v[4],
            re_ob: v[5],
            fpr_ob: v[6],
            pwc_ob: v[7],
            pr_ob: v[8],
            f1_ob: v[9],
            siou: v[10],
            f1_siou: v[11],
            evaluated_pixels,
        }
    }

    /// Unweighted mean of per-sequence rows.
    pub fn average(rows: &[MetricsRow]) -> Option<MetricsRow> {
        if rows.is_empty() {
            return None;
        }
        let mut acc = [0.0; 12];
        for r in rows {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        let n = rows.len() as f64;
        Some(MetricsRow::from_values(
            acc.map(|a| a / n),
            rows.iter().map(|r| r.evaluated_pixels).sum(),
        ))
    }
}

/// `(after − before) / before · 100`, or `None` when `before` is 0.
pub fn relative_change(before: f64, after: f64) -> Option<f64> {
    if before == 0.0 {
        None
    } else {
        Some((after - before) / before * 100.0)
    }
}

/// Renders a relative change with two decimals, or "—" when undefined.
pub fn format_relative_change(change: Option<f64>) -> String {
    change.map_or_else(|| "—".to_string(), |v| format!("{v:.2}"))
}

/// A validated region reduced to what the histograms need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRegion {
    pub size: usize,
    pub fused_log_nfa: f64,
    pub is_tp: bool,
}

/// Labels each region TP when it touches at least one positive
/// ground-truth pixel.
pub fn classify_regions<T: crate::Real>(
    report: &crate::acontrario::ValidationReport<T>,
    gt: &GroundTruthMask,
) -> Vec<ScoredRegion> {
    report
        .regions
        .iter()
        .map(|r| ScoredRegion {
            size: r.n(),
            fused_log_nfa: r.fused_log_nfa.as_f64(),
            is_tp: r.pixels.iter().any(|&i| gt.class_at(i) == GtClass::Positive),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBucket {
    pub lo: f64,
    pub hi: f64,
    pub tp: u64,
    pub fp: u64,
}

fn fill_buckets(keys: impl Iterator<Item = (i64, bool)>, edges: impl Fn(i64) -> (f64, f64)) -> Vec<HistogramBucket> {
    let mut tally = std::collections::BTreeMap::<i64, (u64, u64)>::new();
    for (k, tp) in keys {
        let e = tally.entry(k).or_default();
        if tp {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let (Some(&first), Some(&last)) = (tally.keys().next(), tally.keys().next_back()) else {
        return Vec::new();
    };
    (first..=last)
        .map(|k| {
            let (tp, fp) = tally.get(&k).copied().unwrap_or_default();
            let (lo, hi) = edges(k);
            HistogramBucket { lo, hi, tp, fp }
        })
        .collect()
}

/// Region counts by size in power-of-two buckets `[2^j, 2^{j+1})`, spanning
/// the smallest to the largest occupied bucket.
pub fn size_histogram(regions: &[ScoredRegion]) -> Vec<HistogramBucket> {
    fill_buckets(
        regions.iter().map(|r| (i64::from(r.size.max(1).ilog2()), r.is_tp)),
        |j| (2f64.powi(j as i32), 2f64.powi(j as i32 + 1)),
    )
}

/// Region counts by fused log NFA in buckets `[10j, 10(j+1))`.
pub fn log_nfa_histogram(regions: &[ScoredRegion]) -> Vec<HistogramBucket> {
    fill_buckets(
        regions.iter().map(|r| ((r.fused_log_nfa / 10.0).floor() as i64, r.is_tp)),
        |j| (10.0 * j as f64, 10.0 * (j + 1) as f64),
    )
}

pub const HISTOGRAM_CSV_HEADER: &str = "bucket_lo,bucket_hi,tp_count,fp_count";

pub fn write_histogram_csv<W: Write>(buckets: &[HistogramBucket], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{HISTOGRAM_CSV_HEADER}")?;
    for b in buckets {
        writeln!(w, "{},{},{},{}", b.lo, b.hi, b.tp, b.fp)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::LabelSource;
    use proptest::prelude::*;

    fn gt_from(w: usize, h: usize, codes: &[(usize, u8)]) -> GroundTruthMask {
        let mut l = vec![0u8; w * h];
        for &(i, c) in codes {
            l[i] = c;
        }
        GroundTruthMask::new(w, h, l).unwrap()
    }

    fn pred_from(w: usize, h: usize, on: &[usize]) -> BinaryMask {
        let mut p = vec![false; w * h];
        for &i in on {
            p[i] = true;
        }
        BinaryMask::new(w, h, p, LabelSource::Prediction).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pixel_examples() {
        let m = pixel_metrics(&PixelConfusion { tp: 100, fp: 0, fn_: 0, tn: 900 });
        assert_eq!((m.pr, m.re, m.fpr, m.pwc, m.f1), (1.0, 1.0, 0.0, 0.0, 1.0));
        let m = pixel_metrics(&PixelConfusion { tp: 5, fp: 5, fn_: 0, tn: 90 });
        assert!(close(m.pr, 0.5, 1e-12) && close(m.re, 1.0, 1e-12));
        assert!(close(m.fpr, 0.052_631_578_947, 1e-10) && close(m.pwc, 5.0, 1e-12));
        assert!(close(m.f1, 2.0 / 3.0, 1e-12));
        let m = pixel_metrics(&PixelConfusion { tp: 0, fp: 0, fn_: 10, tn: 90 });
        assert_eq!((m.pr, m.re, m.f1), (0.0, 0.0, 0.0));
        let m = pixel_metrics(&PixelConfusion::default());
        assert_eq!(m.values_for_test(), [0.0; 5]);
    }

    impl PixelMetrics {
        fn values_for_test(&self) -> [f64; 5] {
            [self.pr, self.re, self.fpr, self.pwc, self.f1]
        }
    }

    #[test]
    fn siou_examples() {
        let k: Vec<usize> = (0..10).collect();
        assert_eq!(siou(&k, &[k.clone()], &[k.clone()]), 1.0);
        assert_eq!(siou(&k, &[(0..5).collect()], &[k.clone()]), 0.5);
        let kp: Vec<usize> = (10..13).collect();
        let pred: Vec<usize> = (0..13).collect();
        assert_eq!(siou(&k, &[pred], &[k.clone(), kp]), 1.0);
        assert_eq!(siou(&k, &[vec![20]], &[k.clone()]), 0.0);
    }

    #[test]
    fn ppv_examples() {
        let g = vec![(0..10).collect::<Vec<usize>>()];
        assert_eq!(ppv(&[20, 21], &g), 0.0);
        assert!(close(ppv(&(3..13).collect::<Vec<_>>(), &g), 0.7, 1e-12));
        assert_eq!(ppv(&[1, 2, 3], &g), 1.0);
    }

    #[test]
    fn siou_counts_examples() {
        let gt = gt_from(4, 4, &[(0, 255), (1, 255), (10, 255)]);
        let same = pred_from(4, 4, &[0, 1, 10]);
        for tau in SIOU_TAUS {
            let c = object_counts_siou(&gt, &same, tau).unwrap();
            assert_eq!((c.tp, c.fn_, c.fp), (2, 0, 0));
            assert_eq!(c.f1_siou(), 1.0);
        }
        let c = object_counts_siou(&gt, &same, 0.0).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp), (2, 0, 0));
        let one = gt_from(4, 4, &[(0, 255)]);
        let c = object_counts_siou(&one, &pred_from(4, 4, &[15]), 0.25).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.f1_siou()), (0, 1, 1, 0.0));
    }

    #[test]
    fn overlap_examples() {
        let w = 8;
        let gt: Vec<_> = (0..10).map(|_| gt_from(w, w, &[(0, 255), (1, 255)])).collect();
        let pred: Vec<_> = (0..10).map(|_| pred_from(w, w, &[0, 1])).collect();
        let c = object_counts_overlap(&gt, &pred).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (10, 0, 0));
        assert_eq!(c.overlap_metrics().fpr, 0.0);

        // One gt region of 4 pixels split across two predictions.
        let g = gt_from(w, w, &[(0, 255), (1, 255), (2, 255), (3, 255)]);
        let p = pred_from(w, w, &[0, 2, 3]);
        let c = object_counts_overlap(&[g], &[p]).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 0, 0));

        let g = gt_from(w, w, &[]);
        let p = pred_from(w, w, &[0, 10, 30, 31]);
        let c = object_counts_overlap(&[g.clone()], &[p.clone()]).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 3, 0));
        assert_eq!(c.overlap_metrics().fpr, 3.0);

        assert!(matches!(object_counts_overlap(&[g], &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn ignored_pixels_leave_predictions() {
        // A prediction lying entirely on ignored pixels is not an object.
        let g = gt_from(4, 4, &[(5, 170), (6, 85)]);
        let p = pred_from(4, 4, &[5, 6]);
        let c = object_counts_overlap(&[g.clone()], &[p.clone()]).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 0));
        assert_eq!(pixel_confusion(&g, &p).unwrap().total(), 14);
    }

    #[test]
    fn relative_change_examples() {
        assert!(close(relative_change(0.01032, 0.00367).unwrap(), -64.44, 0.01));
        assert!(close(relative_change(0.182, 0.248).unwrap(), 36.26, 0.01));
        assert_eq!(relative_change(0.3, 0.3), Some(0.0));
        assert_eq!(relative_change(0.0, 0.3), None);
        assert_eq!(format_relative_change(None), "—");
        assert_eq!(format_relative_change(Some(-64.444)), "-64.44");
    }

    #[test]
    fn sequence_fixture_by_hand() {
        // Frame 1: gt {0,1,4,5} and {15}; pred {0,1} and {10,11}.
        // Frame 2: gt all negative; pred {3}.
        let g1 = gt_from(4, 4, &[(0, 255), (1, 255), (4, 255), (5, 255), (15, 255)]);
        let p1 = pred_from(4, 4, &[0, 1, 10, 11]);
        let g2 = gt_from(4, 4, &[]);
        let p2 = pred_from(4, 4, &[3]);
        let s = SequenceCounts::from_frames(&[g1, g2], &[p1, p2]).unwrap();
        assert_eq!(s.pixel, PixelConfusion { tp: 2, fp: 3, fn_: 3, tn: 24 });
        assert_eq!((s.overlap.tp, s.overlap.fp, s.overlap.fn_, s.overlap.n_frames), (1, 2, 1, 2));
        // sIoU: {0,1,4,5} vs {0,1} = 2/4; {15} = 0. PPVs 1, 0, 0.
        assert!(close(s.siou_sum, 0.5, 1e-12));
        let counts: Vec<_> = s.siou.iter().map(|c| (c.tp, c.fn_, c.fp)).collect();
        assert_eq!(counts, vec![(1, 1, 2), (0, 2, 2), (0, 2, 2)]);
        let m = s.metrics();
        assert!(close(m.pr, 0.4, 1e-12) && close(m.re, 0.4, 1e-12));
        assert!(close(m.fpr, 3.0 / 27.0, 1e-12) && close(m.pwc, 600.0 / 32.0, 1e-12));
        assert!(close(m.pr_ob, 1.0 / 3.0, 1e-12) && close(m.re_ob, 0.5, 1e-12));
        assert!(close(m.fpr_ob, 1.0, 1e-12) && close(m.pwc_ob, 75.0, 1e-12));
        assert!(close(m.f1_ob, 0.4, 1e-12));
        assert!(close(m.siou, 0.25, 1e-12));
        assert!(close(m.f1_siou, 0.25 / 3.0, 1e-12));
        assert_eq!(m.evaluated_pixels, 32);
    }

    #[test]
    fn all_ignored_flags_zero_pixels() {
        let g = GroundTruthMask::new(2, 2, vec![85; 4]).unwrap();
        let s = SequenceCounts::from_frames(&[g], &[pred_from(2, 2, &[0])]).unwrap();
        assert_eq!(s.metrics().evaluated_pixels, 0);
    }

    #[test]
    fn averaging_is_unweighted() {
        let a = MetricsRow::from_values([1.0; 12], 10);
        let b = MetricsRow::from_values([0.0; 12], 1000);
        let m = MetricsRow::average(&[a, b]).unwrap();
        assert_eq!(m.values(), [0.5; 12]);
        assert!(MetricsRow::average(&[]).is_none());
    }

    #[test]
    fn histograms() {
        let regions = [
            ScoredRegion { size: 1, fused_log_nfa: 2.4, is_tp: false },
            ScoredRegion { size: 3, fused_log_nfa: 7.0, is_tp: false },
            ScoredRegion { size: 40, fused_log_nfa: -35.0, is_tp: true },
            ScoredRegion { size: 33, fused_log_nfa: -30.0, is_tp: true },
        ];
        let s = size_histogram(&regions);
        assert_eq!(s.len(), 6);
        assert_eq!((s[0].lo, s[0].hi, s[0].tp, s[0].fp), (1.0, 2.0, 0, 1));
        assert_eq!((s[1].tp, s[1].fp), (0, 1));
        assert_eq!((s[5].lo, s[5].tp), (32.0, 2));
        let l = log_nfa_histogram(&regions);
        assert_eq!(l.first().map(|b| (b.lo, b.tp)), Some((-40.0, 1)));
        assert_eq!(l[1].lo, -30.0);
        assert_eq!(l.iter().map(|b| b.tp + b.fp).sum::<u64>(), 4);
        let mut out = Vec::new();
        write_histogram_csv(&[], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{HISTOGRAM_CSV_HEADER}\n"));
        let all_tp: Vec<_> = regions.iter().map(|r| ScoredRegion { is_tp: true, ..*r }).collect();
        assert!(size_histogram(&all_tp).iter().all(|b| b.fp == 0));
    }

    fn mask_strategy() -> impl Strategy<Value = (Vec<u8>, Vec<bool>)> {
        (
            prop::collection::vec(prop::sample::select(vec![0u8, 0, 0, 255, 255, 170]), 64),
            prop::collection::vec(any::<bool>(), 64),
        )
    }

    proptest! {
        #[test]
        fn ignored_flips_change_no_pixel_count((codes, px) in mask_strategy(), flip in 0usize..64) {
            let g = GroundTruthMask::new(8, 8, codes).unwrap();
            let p = BinaryMask::new(8, 8, px.clone(), LabelSource::Prediction).unwrap();
            let mut px2 = px;
            if g.class_at(flip) == GtClass::Ignored {
                px2[flip] = !px2[flip];
            }
            let q = BinaryMask::new(8, 8, px2, LabelSource::Prediction).unwrap();
            prop_assert_eq!(pixel_confusion(&g, &p).unwrap(), pixel_confusion(&g, &q).unwrap());
            let c = pixel_confusion(&g, &p).unwrap();
            prop_assert_eq!(c.total() as usize, (0..64).filter(|&i| g.class_at(i) != GtClass::Ignored).count());
        }

        #[test]
        fn frame_siou_matches_set_definition((codes, px) in mask_strategy()) {
            let g = GroundTruthMask::new(8, 8, codes).unwrap();
            let p = BinaryMask::new(8, 8, px, LabelSource::Prediction).unwrap();
            let fc = FrameComponents::new(&g, &p).unwrap();
            for (k, v) in fc.gt.iter().zip(fc.siou_values()) {
                prop_assert!((v - siou(k, &fc.pred, &fc.gt)).abs() < 1e-12);
            }
            for (q, v) in fc.pred.iter().zip(fc.ppv_values()) {
                prop_assert!((v - ppv(q, &fc.gt)).abs() < 1e-12);
            }
        }

        #[test]
        fn single_pair_siou_is_iou(a in prop::collection::vec(any::<bool>(), 64), b in prop::collection::vec(any::<bool>(), 64)) {
            let ga = label_pixels(&a, 8, 8);
            let pb = label_pixels(&b, 8, 8);
            if let (Some(k), Some(q)) = (ga.first(), pb.first()) {
                let kset: std::collections::BTreeSet<_> = k.iter().collect();
                let qset: std::collections::BTreeSet<_> = q.iter().collect();
                let inter = kset.intersection(&qset).count() as f64;
                let iou = if inter == 0.0 { 0.0 } else { inter / kset.union(&qset).count() as f64 };
                prop_assert!((siou(k, &[q.clone()], &[k.clone()]) - iou).abs() < 1e-12);
            }
        }

        #[test]
        fn translation_invariance((codes, px) in mask_strategy(), dr in 0usize..4, dc in 0usize..4) {
            // Embed the 8×8 pair in a 12×12 canvas at two offsets.
            let place = |off_r: usize, off_c: usize| {
                let mut l = vec![0u8; 144];
                let mut q = vec![false; 144];
                for i in 0..64 {
                    let j = (i / 8 + off_r) * 12 + i % 8 + off_c;
                    l[j] = codes[i];
                    q[j] = px[i];
                }
                (GroundTruthMask::new(12, 12, l).unwrap(), BinaryMask::new(12, 12, q, LabelSource::Prediction).unwrap())
            };
            let (g0, p0) = place(0, 0);
            let (g1, p1) = place(dr, dc);
            for tau in SIOU_TAUS {
                prop_assert_eq!(
                    object_counts_siou(&g0, &p0, tau).unwrap(),
                    object_counts_siou(&g1, &p1, tau).unwrap()
                );
            }
        }
    }
}
