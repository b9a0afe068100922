//! Decision-boundary calibration.
//!
//! A single 0.5 cutoff wastes the probability scale: the cost-optimal cutoff
//! drifts with deal size and segment. This module picks, for each of the 12
//! (segment x contract-value-quartile) cells, the threshold that maximizes
//! correct classifications (`TP + TN`) on held-out-from-nothing training
//! predictions, with ties broken toward 0.5 and then toward the lower
//! threshold. Cells with fewer than [`MIN_CELL_SUPPORT`] records inherit
//! their segment-level threshold instead of overfitting a tiny sample.

use serde::{Deserialize, Serialize};

use crate::ingest::Segment;
use crate::{Error, Result};

/// Minimum records a (segment, quartile) cell needs to earn its own
/// threshold; below this the segment-level threshold is used.
pub const MIN_CELL_SUPPORT: usize = 30;

/// Quartile index (1..=4) of `value` against three ascending cuts; values
/// exactly on a cut fall into the lower quartile.
pub fn assign_quartile(value: f64, cuts: &[f64; 3]) -> u8 {
    1 + cuts.iter().filter(|&&c| value > c).count() as u8
}

/// Empirical quartile cuts (Q1, Q2, Q3) with linear interpolation between
/// order statistics.
fn quartile_cuts(values: &[f64]) -> [f64; 3] {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let at = |p: f64| {
        let h = (sorted.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        if frac == 0.0 {
            sorted[lo]
        } else {
            sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
        }
    };
    [at(0.25), at(0.5), at(0.75)]
}

/// Threshold in [0, 1] maximizing `TP + TN` when predicting won for
/// probabilities strictly above it.
///
/// Candidates are 0, the midpoints between adjacent distinct probabilities,
/// and 1 — every distinct achievable confusion is covered. Ties prefer the
/// candidate nearest 0.5, then the lower threshold.
pub fn optimal_boundary(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "optimal_boundary: {} probabilities vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Shape(
            "optimal_boundary requires at least one sample".to_string(),
        ));
    }
    if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Numeric(format!(
            "optimal_boundary: probability {bad} outside [0, 1]"
        )));
    }

    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_unstable_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b)));
    let total_pos = labels.iter().filter(|&&y| y).count();

    let mut candidates = vec![0.0];
    for w in order.windows(2) {
        let (lo, hi) = (probs[w[0]], probs[w[1]]);
        if hi > lo {
            let mid = 0.5 * (lo + hi);
            if lo < mid && mid < hi {
                candidates.push(mid);
            }
        }
    }
    candidates.push(1.0);

    // One ascending sweep: when evaluating threshold t, `passed` rows have
    // p <= t (predicted lost), the rest predicted won.
    let mut best: Option<(usize, f64, f64)> = None; // (score, |t - 0.5|, t)
    let mut passed = 0usize;
    let mut pos_passed = 0usize;
    for t in candidates {
        while passed < order.len() && probs[order[passed]] <= t {
            if labels[order[passed]] {
                pos_passed += 1;
            }
            passed += 1;
        }
        let true_neg = passed - pos_passed;
        let true_pos = total_pos - pos_passed;
        let score = true_pos + true_neg;
        let dist = (t - 0.5).abs();
        let better = match best {
            None => true,
            Some((bs, bd, _)) => score > bs || (score == bs && dist < bd),
        };
        if better {
            best = Some((score, dist, t));
        }
    }
    Ok(best.expect("candidate list is never empty").2)
}

/// Calibrated decision thresholds per (segment, contract-value quartile).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    /// Empirical value-quartile cuts per segment, `[Q1, Q2, Q3]`.
    pub cuts: [[f64; 3]; 3],
    /// Decision threshold per segment per quartile.
    pub thresholds: [[f64; 4]; 3],
    /// Segment-level thresholds (the fallback for thin cells).
    pub segment_thresholds: [f64; 3],
    /// Records behind each cell's threshold choice.
    pub support: [[usize; 4]; 3],
}

/// Outcome of pushing one prediction through the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDecision {
    pub quartile: u8,
    pub threshold: f64,
    pub predicted_won: bool,
}

impl BoundaryGrid {
    /// Route a prediction to its cell and apply the cell's threshold
    /// (predict won strictly above it).
    pub fn classify(&self, segment: Segment, value: f64, prob: f64) -> BoundaryDecision {
        let s = segment.index();
        let quartile = assign_quartile(value, &self.cuts[s]);
        let threshold = self.thresholds[s][quartile as usize - 1];
        BoundaryDecision {
            quartile,
            threshold,
            predicted_won: prob > threshold,
        }
    }
}

/// Fit the 12-cell boundary grid from aligned predictions, outcomes,
/// segments and contract values. Every segment must be present.
pub fn calibrate_boundaries(
    probs: &[f64],
    labels: &[bool],
    segments: &[Segment],
    values: &[f64],
) -> Result<BoundaryGrid> {
    let n = probs.len();
    for (len, what) in [
        (labels.len(), "labels"),
        (segments.len(), "segments"),
        (values.len(), "values"),
    ] {
        if len != n {
            return Err(Error::Shape(format!(
                "calibrate_boundaries: {n} probabilities vs {len} {what}"
            )));
        }
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "calibrate_boundaries: non-finite contract value {bad}"
        )));
    }

    let missing: Vec<String> = Segment::ALL
        .iter()
        .filter(|seg| !segments.contains(seg))
        .map(|seg| seg.as_str().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSegments(missing));
    }

    let mut cuts = [[0.0; 3]; 3];
    let mut thresholds = [[0.0; 4]; 3];
    let mut segment_thresholds = [0.0; 3];
    let mut support = [[0usize; 4]; 3];

    for seg in Segment::ALL {
        let s = seg.index();
        let idx: Vec<usize> = (0..n).filter(|&i| segments[i] == seg).collect();
        let seg_values: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        cuts[s] = quartile_cuts(&seg_values);

        let seg_probs: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
        let seg_labels: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        segment_thresholds[s] = optimal_boundary(&seg_probs, &seg_labels)?;

        for q in 1..=4u8 {
            let cell: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&i| assign_quartile(values[i], &cuts[s]) == q)
                .collect();
            support[s][q as usize - 1] = cell.len();
            thresholds[s][q as usize - 1] = if cell.len() >= MIN_CELL_SUPPORT {
                let cell_probs: Vec<f64> = cell.iter().map(|&i| probs[i]).collect();
                let cell_labels: Vec<bool> = cell.iter().map(|&i| labels[i]).collect();
                optimal_boundary(&cell_probs, &cell_labels)?
            } else {
                segment_thresholds[s]
            };
        }
    }

    Ok(BoundaryGrid {
        cuts,
        thresholds,
        segment_thresholds,
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::sigmoid;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn score_at(t: f64, probs: &[f64], labels: &[bool]) -> usize {
        probs
            .iter()
            .zip(labels)
            .filter(|&(&p, &y)| (p > t) == y)
            .count()
    }

    #[test]
    fn worked_boundary_examples() {
        // Clean separation: 0.5 scores 4/4 and wins outright.
        let t = optimal_boundary(&[0.2, 0.4, 0.6, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(t, 0.5);

        // Tie between score-1 candidates 0.0 and 1.0 (equidistant from
        // 0.5): the lower threshold wins.
        let t = optimal_boundary(&[0.3, 0.7], &[true, false]).unwrap();
        assert_eq!(t, 0.0);

        // Unanimous outcomes push the boundary to the corresponding edge.
        let t = optimal_boundary(&[0.2, 0.6, 0.9], &[true, true, true]).unwrap();
        assert_eq!(t, 0.0);
        let t = optimal_boundary(&[0.2, 0.6, 0.9], &[false, false, false]).unwrap();
        assert_eq!(t, 1.0);
    }

    #[test]
    fn boundary_input_validation() {
        assert!(matches!(
            optimal_boundary(&[], &[]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            optimal_boundary(&[0.5], &[true, false]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            optimal_boundary(&[1.5], &[true]),
            Err(Error::Numeric(_))
        ));
    }

    proptest! {
        /// The chosen boundary's score must match the best candidate score
        /// and beat or tie every probe threshold in [0, 1].
        #[test]
        fn boundary_is_never_beaten_by_probes(
            samples in proptest::collection::vec((0u32..=1000, any::<bool>()), 1..80),
            probes in proptest::collection::vec(0.0f64..=1.0, 50),
        ) {
            let probs: Vec<f64> = samples.iter().map(|&(p, _)| p as f64 / 1000.0).collect();
            let labels: Vec<bool> = samples.iter().map(|&(_, y)| y).collect();
            let t = optimal_boundary(&probs, &labels).unwrap();
            let best = score_at(t, &probs, &labels);
            for probe in probes {
                prop_assert!(best >= score_at(probe, &probs, &labels));
            }
            // And the extremes explicitly.
            prop_assert!(best >= score_at(0.0, &probs, &labels));
            prop_assert!(best >= score_at(1.0, &probs, &labels));
        }
    }

    #[test]
    fn quartile_assignment_uses_closed_lower_intervals() {
        let cuts = [10.0, 20.0, 30.0];
        assert_eq!(assign_quartile(5.0, &cuts), 1);
        assert_eq!(assign_quartile(10.0, &cuts), 1, "on-cut values fall low");
        assert_eq!(assign_quartile(10.1, &cuts), 2);
        assert_eq!(assign_quartile(20.0, &cuts), 2);
        assert_eq!(assign_quartile(25.0, &cuts), 3);
        assert_eq!(assign_quartile(31.0, &cuts), 4);
    }

    #[test]
    fn empirical_quartiles_interpolate_linearly() {
        let values: Vec<f64> = (1..=8).map(f64::from).collect();
        let cuts = quartile_cuts(&values);
        assert!((cuts[0] - 2.75).abs() < 1e-12);
        assert!((cuts[1] - 4.5).abs() < 1e-12);
        assert!((cuts[2] - 6.25).abs() < 1e-12);
        // Quartiles split a sample of distinct values into near-equal cells.
        let many: Vec<f64> = (0..1000).map(|i| (i * 37 % 1000) as f64).collect();
        let cuts = quartile_cuts(&many);
        for q in 1..=4u8 {
            let count = many
                .iter()
                .filter(|&&v| assign_quartile(v, &cuts) == q)
                .count();
            assert!((245..=255).contains(&count), "quartile {q} held {count}");
        }
    }

    /// Synthetic set with a planted trend: the label tilt rises with the
    /// value quartile, so optimal thresholds must fall as quartiles rise.
    fn planted_trend() -> (Vec<f64>, Vec<bool>, Vec<Segment>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 9000;
        let mut probs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut segments = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let seg = Segment::ALL[i % 3];
            let value: f64 = rng.random_range(1.0..100.0);
            let quartile = 1 + ((value / 25.0) as usize).min(3);
            let p: f64 = rng.random_range(0.02..0.98);
            let tilt = 0.9 * (quartile as f64 - 2.5);
            let q = sigmoid((p / (1.0 - p)).ln() + tilt);
            probs.push(p);
            labels.push(rng.random::<f64>() < q);
            segments.push(seg);
            values.push(value);
        }
        (probs, labels, segments, values)
    }

    #[test]
    fn planted_quartile_trend_moves_the_thresholds() {
        let (probs, labels, segments, values) = planted_trend();
        let grid = calibrate_boundaries(&probs, &labels, &segments, &values).unwrap();
        for s in 0..3 {
            assert_eq!(grid.support[s].iter().sum::<usize>(), 3000);
            assert!(
                grid.thresholds[s][0] > grid.thresholds[s][3],
                "segment {s}: quartile-1 threshold {} should exceed quartile-4's {}",
                grid.thresholds[s][0],
                grid.thresholds[s][3]
            );
        }
    }

    #[test]
    fn thin_cells_fall_back_to_segment_thresholds() {
        let (mut probs, mut labels, mut segments, mut values) = planted_trend();
        // Shrink Finance to 40 records: every cell lands near 10 < 30.
        let keep: Vec<usize> = (0..probs.len())
            .filter(|&i| segments[i] != Segment::Finance)
            .chain((0..probs.len()).filter(|&i| segments[i] == Segment::Finance).take(40))
            .collect();
        let pick = |src: &mut Vec<f64>, keep: &[usize]| {
            *src = keep.iter().map(|&i| src[i]).collect();
        };
        pick(&mut probs, &keep);
        pick(&mut values, &keep);
        labels = keep.iter().map(|&i| labels[i]).collect();
        segments = keep.iter().map(|&i| segments[i]).collect();

        let grid = calibrate_boundaries(&probs, &labels, &segments, &values).unwrap();
        let f = Segment::Finance.index();
        for q in 0..4 {
            assert!(grid.support[f][q] < MIN_CELL_SUPPORT);
            assert_eq!(
                grid.thresholds[f][q], grid.segment_thresholds[f],
                "thin cell {q} must inherit the segment threshold"
            );
        }
        // The two full segments keep their own cell thresholds (support is
        // plentiful, and the planted trend forces them apart).
        let h = Segment::Healthcare.index();
        assert!(grid.support[h].iter().all(|&s| s >= MIN_CELL_SUPPORT));
    }

    #[test]
    fn absent_segments_are_reported_by_name() {
        let err = calibrate_boundaries(
            &[0.5, 0.6],
            &[true, false],
            &[Segment::Energy, Segment::Energy],
            &[10.0, 20.0],
        )
        .unwrap_err();
        match err {
            Error::MissingSegments(names) => {
                assert_eq!(names, vec!["Healthcare".to_string(), "Finance".to_string()]);
            }
            other => panic!("expected MissingSegments, got {other:?}"),
        }
    }

    #[test]
    fn classify_routes_through_the_matching_cell() {
        let (probs, labels, segments, values) = planted_trend();
        let grid = calibrate_boundaries(&probs, &labels, &segments, &values).unwrap();
        let d = grid.classify(Segment::Energy, 3.0, 0.9);
        assert_eq!(d.quartile, 1);
        assert_eq!(d.threshold, grid.thresholds[Segment::Energy.index()][0]);
        assert!(d.predicted_won == (0.9 > d.threshold));
        let d = grid.classify(Segment::Energy, 99.0, 0.1);
        assert_eq!(d.quartile, 4);

        // Grid round-trips through JSON bit-exactly.
        let json = serde_json::to_string(&grid).unwrap();
        let back: BoundaryGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back, grid);
    }
}
