//! A-contrario validation of candidate change regions.
//!
//! Each 4-connected region `R` of a predicted mask is scored by its number of
//! false alarms `NFA(R) = N_T(n) · Π_{p∈R} p-value(p)^{1/c_f}` with
//! `N_T(n) = X² Y² α βⁿ / n` counting the polyomino-shaped tests of size `n`.
//! Per-stage scores are fused by a geometric mean, and a region survives
//! when the fused NFA is below `ε`.

use std::io::Write;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::BinaryMask;
use crate::pvalue::LogPValueMap;
use crate::scalar::Real;

/// Maximal 4-connected components of the `true` pixels of a
/// `width × height` raster. Each component is a sorted list of raster
/// indices; components are ordered by (minimum row, minimum column, first
/// raster index).
pub fn label_pixels(pixels: &[bool], width: usize, height: usize) -> Vec<Vec<usize>> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut seen = vec![false; pixels.len()];
    let mut stack = Vec::new();
    let mut keyed = Vec::new();
    for start in 0..pixels.len() {
        if !pixels[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        let mut min_col = usize::MAX;
        while let Some(idx) = stack.pop() {
            comp.push(idx);
            let (r, c) = (idx / width, idx % width);
            min_col = min_col.min(c);
            let mut visit = |n: usize| {
                if pixels[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if r > 0 {
                visit(idx - width);
            }
            if r + 1 < height {
                visit(idx + width);
            }
            if c > 0 {
                visit(idx - 1);
            }
            if c + 1 < width {
                visit(idx + 1);
            }
        }
        comp.sort_unstable();
        keyed.push(((start / width, min_col, start), comp));
    }
    keyed.sort_by_key(|(k, _)| *k);
    keyed.into_iter().map(|(_, c)| c).collect()
}

/// [`label_pixels`] on a binary mask.
pub fn label_components(mask: &BinaryMask) -> Vec<Vec<usize>> {
    label_pixels(mask.pixels(), mask.width(), mask.height())
}

/// `ln N_T = 2 ln X + 2 ln Y + ln α + n ln β − ln n`.
pub fn log_num_tests(n: usize, x: usize, y: usize, alpha: f64, beta: f64) -> f64 {
    assert!(n >= 1, "region size must be at least 1");
    let n_f = n as f64;
    2.0 * (x as f64).ln() + 2.0 * (y as f64).ln() + alpha.ln() + n_f * beta.ln() - n_f.ln()
}

/// `ln NFA` of a region against one stage's p-value map: `ln N_T` plus the
/// region's summed log p-values divided by the stage's `c_f`. `X` and `Y`
/// are the map's width and height.
pub fn region_log_nfa<T: Real>(region: &[usize], map: &LogPValueMap<T>, cfg: &RunConfig) -> Result<T> {
    if region.is_empty() {
        return Err(Error::Shape("empty region".into()));
    }
    let size = map.width() * map.height();
    if let Some(&bad) = region.iter().find(|&&i| i >= size) {
        return Err(Error::Shape(format!(
            "region pixel {bad} outside a {}x{} map",
            map.width(),
            map.height()
        )));
    }
    let cf = cfg.cf(map.stage_id())?;
    let sum = region.iter().fold(T::zero(), |acc, &i| acc + map.at_index(i));
    let lnt = log_num_tests(region.len(), map.width(), map.height(), cfg.alpha, cfg.beta);
    Ok(T::lit(lnt) + sum / T::lit(cf))
}

/// Arithmetic mean of per-stage log NFAs, the log of their geometric mean.
pub fn fuse_stages<T: Real>(per_stage: &[T]) -> Result<T> {
    if per_stage.is_empty() {
        return Err(Error::Config("no stage scores to fuse".into()));
    }
    let sum = per_stage.iter().fold(T::zero(), |a, &b| a + b);
    Ok(sum / T::from_usize_lossy(per_stage.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionDetection<T> {
    pub region_id: usize,
    /// Sorted raster indices at mask resolution.
    pub pixels: Vec<usize>,
    /// `(stage id, ln NFA)` in the order the maps were supplied.
    pub stage_log_nfa: Vec<(u8, T)>,
    pub fused_log_nfa: T,
    pub verdict: Verdict,
}

impl<T: Real> RegionDetection<T> {
    pub fn n(&self) -> usize {
        self.pixels.len()
    }

    pub fn stage(&self, stage: u8) -> Option<T> {
        self.stage_log_nfa.iter().find(|(s, _)| *s == stage).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<T> {
    pub frame_id: usize,
    pub regions: Vec<RegionDetection<T>>,
    pub input: BinaryMask,
    pub output: BinaryMask,
}

impl<T: Real> ValidationReport<T> {
    pub fn accepted(&self) -> impl Iterator<Item = &RegionDetection<T>> {
        self.regions.iter().filter(|r| r.verdict == Verdict::Accepted)
    }
}

/// Scores every component of `mask` on each stage map, fuses, thresholds at
/// `ln ε` (strict), and assembles the mask of accepted regions.
pub fn validate_mask<T: Real>(
    frame_id: usize,
    mask: &BinaryMask,
    maps: &[&LogPValueMap<T>],
    cfg: &RunConfig,
) -> Result<ValidationReport<T>> {
    if maps.is_empty() {
        return Err(Error::Config("validation needs at least one stage map".into()));
    }
    for m in maps {
        if (m.width(), m.height()) != (mask.width(), mask.height()) {
            return Err(Error::Shape(format!(
                "stage {} map is {}x{} but the mask is {}x{}",
                m.stage_id(),
                m.width(),
                m.height(),
                mask.width(),
                mask.height()
            )));
        }
    }
    let log_eps = T::lit(cfg.epsilon.ln());
    let mut output = BinaryMask::empty(mask.width(), mask.height());
    let mut regions = Vec::new();
    for (region_id, pixels) in label_components(mask).into_iter().enumerate() {
        let stage_log_nfa = maps
            .iter()
            .map(|m| Ok((m.stage_id(), region_log_nfa(&pixels, m, cfg)?)))
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<T> = stage_log_nfa.iter().map(|&(_, v)| v).collect();
        let fused_log_nfa = fuse_stages(&scores)?;
        let verdict = if fused_log_nfa < log_eps {
            for &i in &pixels {
                output.set(i / mask.width(), i % mask.width(), true);
            }
            Verdict::Accepted
        } else {
            Verdict::Rejected
        };
        regions.push(RegionDetection {
            region_id,
            pixels,
            stage_log_nfa,
            fused_log_nfa,
            verdict,
        });
    }
    Ok(ValidationReport {
        frame_id,
        regions,
        input: mask.clone(),
        output,
    })
}

pub const REGION_CSV_HEADER: &str = "frame_id,region_id,n,log_nfa_stage1,log_nfa_stage2,fused_log_nfa,verdict";

/// Writes region rows in report order; a stage that was not scored leaves
/// its column empty.
pub fn write_region_csv<T: Real, W: Write>(reports: &[ValidationReport<T>], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{REGION_CSV_HEADER}")?;
    let cell = |v: Option<T>| v.map_or_else(String::new, |v| format!("{:.6}", v.as_f64()));
    for rep in reports {
        for r in &rep.regions {
            writeln!(
                w,
                "{},{},{},{},{},{:.6},{}",
                rep.frame_id,
                r.region_id,
                r.n(),
                cell(r.stage(1)),
                cell(r.stage(2)),
                r.fused_log_nfa.as_f64(),
                r.verdict.as_str()
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::LabelSource;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, on: &[usize]) -> BinaryMask {
        let mut px = vec![false; w * h];
        for &i in on {
            px[i] = true;
        }
        BinaryMask::new(w, h, px, LabelSource::Prediction).unwrap()
    }

    fn flat_map(stage: u8, w: usize, h: usize, v: f64) -> LogPValueMap<f64> {
        LogPValueMap::from_grid(stage, 1, 1, vec![v], w, h).unwrap()
    }

    #[test]
    fn labeling_basics() {
        assert!(label_components(&mask(4, 4, &[])).is_empty());
        assert_eq!(label_components(&mask(4, 4, &[0, 5])).len(), 2);
        let comps = label_components(&mask(4, 3, &[3, 7, 11, 10, 4, 8]));
        assert_eq!(comps, vec![vec![3, 7, 10, 11], vec![4, 8]]);
    }

    #[test]
    fn labeling_orders_by_min_column_within_a_row() {
        // A starts at (0, 4) and reaches column 0 two rows down; B is the
        // single pixel (0, 2). Raster discovery meets B first, yet A sorts
        // first on its minimum column.
        let w = 6;
        let a = [4, w + 4, 2 * w + 4, 2 * w + 3, 2 * w + 2, 2 * w + 1, 2 * w];
        let comps = label_components(&mask(w, 3, &[a.as_slice(), &[2]].concat()));
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[1], vec![2]);
        let comps = label_components(&mask(w, 3, &[4, w]));
        assert_eq!(comps, vec![vec![4], vec![w]]);
    }

    /// `ln(X² Y² α βⁿ / n)` evaluated as a single product.
    fn product_oracle(n: usize, x: f64, y: f64) -> f64 {
        (x * x * y * y * 0.317 * 4.06f64.powi(n as i32) / n as f64).ln()
    }

    #[test]
    fn num_tests_examples() {
        assert!((log_num_tests(1, 1, 1, 0.317, 4.06) - 1.287_02f64.ln()).abs() < 1e-5);
        assert!((log_num_tests(1, 1, 1, 0.317, 4.06) - 0.252_33).abs() < 1e-5);
        assert!((log_num_tests(10, 1, 1, 0.317, 4.06) - 38580f64.ln()).abs() < 1e-3);
        for (n, x) in [(1, 256.0), (7, 64.0), (100, 256.0)] {
            assert!((log_num_tests(n, x as usize, x as usize, 0.317, 4.06) - product_oracle(n, x, x)).abs() < 1e-9);
        }
        assert!((log_num_tests(1, 256, 256, 0.317, 4.06) - 22.433_04).abs() < 1e-5);
    }

    #[test]
    fn region_nfa_examples() {
        let cfg = RunConfig::default();
        let region: Vec<usize> = (0..100).collect();
        let lnt = product_oracle(100, 256.0, 256.0);
        let v = region_log_nfa(&region, &flat_map(1, 256, 256, -30.0), &cfg).unwrap();
        assert!((v - (lnt - 3000.0 / 35.0)).abs() < 1e-9, "{v}");
        assert!((v - 70.832).abs() < 2e-3, "{v}");
        let v = region_log_nfa(&region, &flat_map(1, 256, 256, -70.0), &cfg).unwrap();
        assert!((v - (lnt - 7000.0 / 35.0)).abs() < 1e-9, "{v}");
        assert!((v + 43.455).abs() < 1e-3, "{v}");
        let ones = region_log_nfa(&region[..5], &flat_map(1, 2, 3, 0.0), &cfg).unwrap();
        assert!(ones > 0.0);
        assert!(matches!(
            region_log_nfa(&[100], &flat_map(1, 4, 4, 0.0), &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn fusion() {
        assert_eq!(fuse_stages(&[-10.0, 4.0]).unwrap(), -3.0);
        assert_eq!(fuse_stages(&[-5.0]).unwrap(), -5.0);
        assert!(matches!(fuse_stages::<f64>(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn strong_region_kept_and_null_region_dropped() {
        let cfg = RunConfig::default();
        let (w, h) = (16, 16);
        let mut grid = vec![0.0; 4];
        grid[0] = -700.0;
        let s1 = LogPValueMap::from_grid(1, 2, 2, grid.clone(), w, h).unwrap();
        let s2 = LogPValueMap::from_grid(2, 2, 2, grid, w, h).unwrap();
        let left: Vec<usize> = (0..4).flat_map(|r| (0..4).map(move |c| r * w + c)).collect();
        let right: Vec<usize> = (0..4).flat_map(|r| (10..14).map(move |c| r * w + c)).collect();
        let m = mask(w, h, &[left.as_slice(), right.as_slice()].concat());
        let rep = validate_mask(3, &m, &[&s1, &s2], &cfg).unwrap();
        assert_eq!(rep.regions.len(), 2);
        let lnt = log_num_tests(16, w, h, cfg.alpha, cfg.beta);
        let e1 = lnt - 16.0 * 700.0 / 35.0;
        let e2 = lnt - 16.0 * 700.0 / 91.0;
        assert!((rep.regions[0].fused_log_nfa - (e1 + e2) / 2.0).abs() < 1e-9);
        assert_eq!(rep.regions[0].verdict, Verdict::Accepted);
        assert!((rep.regions[1].fused_log_nfa - lnt).abs() < 1e-9);
        assert_eq!(rep.regions[1].verdict, Verdict::Rejected);
        assert_eq!(rep.output, mask(w, h, &left));

        let mut csv = Vec::new();
        write_region_csv(&[rep], &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REGION_CSV_HEADER);
        assert!(lines[1].starts_with("3,0,16,"));
        assert!(lines[1].ends_with(",accepted"));
        assert!(lines[2].ends_with(",rejected"));
    }

    #[test]
    fn empty_mask_and_huge_epsilon() {
        let cfg = RunConfig::default();
        let s1 = flat_map(1, 8, 8, -1.0);
        let rep = validate_mask(0, &mask(8, 8, &[]), &[&s1], &cfg).unwrap();
        assert!(rep.regions.is_empty() && rep.output.count() == 0);
        let cfg = RunConfig { epsilon: 1e300, ..RunConfig::default() };
        let m = mask(8, 8, &[0, 9, 20, 21, 63]);
        let rep = validate_mask(0, &m, &[&s1], &cfg).unwrap();
        assert_eq!(rep.output, m);
    }

    #[test]
    fn tie_at_epsilon_is_rejected() {
        // With every log p-value 0 the fused score is exactly ln N_T. Pick the
        // f64 ε nearest exp(ln N_T) whose logarithm reproduces it bit for bit.
        let (w, h) = (4, 4);
        let lnt = log_num_tests(1, w, h, 0.317, 4.06);
        let base = lnt.exp().to_bits();
        let eps = (0..64u64)
            .flat_map(|k| [base + k, base - k])
            .map(f64::from_bits)
            .find(|e| e.ln() == lnt)
            .expect("an exact ε near exp(ln N_T)");
        let cfg = RunConfig { epsilon: eps, ..RunConfig::default() };
        let s1 = flat_map(1, w, h, 0.0);
        let rep = validate_mask(0, &mask(w, h, &[5]), &[&s1], &cfg).unwrap();
        assert_eq!(rep.regions[0].fused_log_nfa, eps.ln());
        assert_eq!(rep.regions[0].verdict, Verdict::Rejected);
    }

    #[test]
    fn resolution_mismatch() {
        let cfg = RunConfig::default();
        let s1 = flat_map(1, 8, 8, 0.0);
        assert!(matches!(
            validate_mask(0, &mask(4, 4, &[1]), &[&s1], &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn isolated_pixels_never_validate_at_defaults() {
        let cfg = RunConfig::default();
        for stage in [1u8, 2] {
            let m = flat_map(stage, 256, 256, cfg.logp_floor);
            let v = region_log_nfa(&[12345], &m, &cfg).unwrap();
            assert!(v >= product_oracle(1, 256.0, 256.0) - 700.0 / 35.0 - 1e-9 && v > 2.43);
        }
    }

    fn flood_oracle(px: &[bool], w: usize, h: usize) -> Vec<Vec<usize>> {
        // Repeated relaxation of minimum labels until a fixed point.
        let mut label: Vec<usize> = (0..px.len()).collect();
        loop {
            let mut changed = false;
            for i in 0..px.len() {
                if !px[i] {
                    continue;
                }
                let (r, c) = (i / w, i % w);
                let mut best = label[i];
                for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w {
                        let n = nr as usize * w + nc as usize;
                        if px[n] {
                            best = best.min(label[n]);
                        }
                    }
                }
                if best < label[i] {
                    label[i] = best;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups = std::collections::BTreeMap::<usize, Vec<usize>>::new();
        for i in 0..px.len() {
            if px[i] {
                groups.entry(label[i]).or_default().push(i);
            }
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort();
        out
    }

    proptest! {
        #[test]
        fn labeling_matches_flood_oracle(px in prop::collection::vec(any::<bool>(), 256)) {
            let mut ours = label_pixels(&px, 16, 16);
            for (i, a) in ours.iter().enumerate() {
                for b in &ours[i + 1..] {
                    let key = |c: &Vec<usize>| (c[0] / 16, c.iter().map(|i| i % 16).min().unwrap(), c[0]);
                    prop_assert!(key(a) < key(b));
                }
            }
            ours.sort();
            prop_assert_eq!(ours, flood_oracle(&px, 16, 16));
        }

        #[test]
        fn lowering_a_pvalue_never_raises_nfa(
            vals in prop::collection::vec(-50.0f64..0.0, 16),
            pick in 0usize..16,
            drop in 0.0f64..30.0,
        ) {
            let cfg = RunConfig::default();
            let region: Vec<usize> = (0..16).collect();
            let a = LogPValueMap::from_grid(1, 4, 4, vals.clone(), 4, 4).unwrap();
            let mut lower = vals;
            lower[pick] -= drop;
            let b = LogPValueMap::from_grid(1, 4, 4, lower, 4, 4).unwrap();
            prop_assert!(region_log_nfa(&region, &b, &cfg).unwrap() <= region_log_nfa(&region, &a, &cfg).unwrap());
        }

        #[test]
        fn growing_with_a_strong_pixel_lowers_nfa(base in -60.0f64..0.0, extra in 1.0f64..100.0) {
            let cfg = RunConfig::default();
            let strong = -cfg.cf_stage1 * cfg.beta.ln() - extra;
            let mut vals = vec![base; 16];
            vals[5] = strong;
            let map = LogPValueMap::from_grid(1, 4, 4, vals, 4, 4).unwrap();
            let small = region_log_nfa(&[0, 1, 4], &map, &cfg).unwrap();
            let grown = region_log_nfa(&[0, 1, 4, 5], &map, &cfg).unwrap();
            prop_assert!(grown < small);
        }

        #[test]
        fn output_is_subset_and_order_free(
            px in prop::collection::vec(any::<bool>(), 64),
            grid in prop::collection::vec(-200.0f64..0.0, 4),
            log_eps in -5.0f64..30.0,
        ) {
            let cfg = RunConfig { epsilon: log_eps.exp(), ..RunConfig::default() };
            let m = BinaryMask::new(8, 8, px, LabelSource::Prediction).unwrap();
            let s1 = LogPValueMap::from_grid(1, 2, 2, grid.clone(), 8, 8).unwrap();
            let s2 = LogPValueMap::from_grid(2, 2, 2, grid.iter().map(|v| v * 0.5).collect(), 8, 8).unwrap();
            let a = validate_mask(0, &m, &[&s1, &s2], &cfg).unwrap();
            let b = validate_mask(0, &m, &[&s2, &s1], &cfg).unwrap();
            for i in 0..64 {
                prop_assert!(!a.output.pixels()[i] || m.pixels()[i]);
            }
            prop_assert_eq!(&a.output, &b.output);
            for r in &a.regions {
                prop_assert_eq!(r.verdict == Verdict::Accepted, r.fused_log_nfa < log_eps);
            }
        }

        #[test]
        fn fusion_is_idempotent(a in -1e3f64..1e3) {
            prop_assert!((fuse_stages(&[a, a]).unwrap() - a).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    /// Fixed polyomino counts by Redelmeier's enumeration.
    fn redelmeier(max_n: usize) -> Vec<u64> {
        fn rec(
            untried: &mut Vec<(i32, i32)>,
            cells: &mut Vec<(i32, i32)>,
            seen: &mut std::collections::HashSet<(i32, i32)>,
            counts: &mut [u64],
            max_n: usize,
        ) {
            while let Some(cell) = untried.pop() {
                cells.push(cell);
                counts[cells.len()] += 1;
                if cells.len() < max_n {
                    let mut next = untried.clone();
                    let mut added = Vec::new();
                    for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                        let n = (cell.0 + dx, cell.1 + dy);
                        let valid = n.1 > 0 || (n.1 == 0 && n.0 >= 0);
                        if valid && seen.insert(n) {
                            next.push(n);
                            added.push(n);
                        }
                    }
                    rec(&mut next, cells, seen, counts, max_n);
                    for n in added {
                        seen.remove(&n);
                    }
                }
                cells.pop();
            }
        }
        let mut counts = vec![0u64; max_n + 1];
        let mut seen = std::collections::HashSet::from([(0, 0)]);
        rec(&mut vec![(0, 0)], &mut Vec::new(), &mut seen, &mut counts, max_n);
        counts
    }

    #[test]
    fn polyomino_estimate_tracks_exact_counts() {
        let counts = redelmeier(10);
        assert_eq!(&counts[1..], &[1, 2, 6, 19, 63, 216, 760, 2725, 9910, 36446]);
        let est = log_num_tests(10, 1, 1, 0.317, 4.06).exp();
        assert!((est / 36446.0 - 1.0).abs() < 0.06, "{est}");
    }
}
