use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{CaptureCondition, DepthFrame, FrameStack};

use super::stats::temporal_mean;

/// Where and how to look for the vertical edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeSearch {
    /// Column range `[start, end)`.
    pub columns: [usize; 2],
    /// Row range `[start, end)`.
    pub rows: [usize; 2],
    /// Smallest depth step between adjacent valid pixels that counts, meters.
    pub min_jump: f64,
    /// A row whose runner-up step reaches this fraction of its largest step
    /// has no single dominant edge and is skipped.
    pub dominance: f64,
}

pub const DEFAULT_MIN_JUMP: f64 = 0.05;
pub const DEFAULT_DOMINANCE: f64 = 0.5;
/// Fraction of the occupied rows kept, centred.
const ROW_FRACTION: f64 = 0.6;

impl EdgeSearch {
    pub fn new(columns: [usize; 2], rows: [usize; 2]) -> Self {
        Self {
            columns,
            rows,
            min_jump: DEFAULT_MIN_JUMP,
            dominance: DEFAULT_DOMINANCE,
        }
    }

    /// Default band for a stack: the sidecar's `edge_band` if present, else
    /// the right half of the image from the principal point. Rows are the
    /// middle 60% of the rows with valid temporal-mean depth in that band.
    pub fn for_stack(stack: &FrameStack) -> Result<Self> {
        let w = stack.width();
        let columns = stack
            .meta()
            .edge_band
            .unwrap_or([(stack.intrinsics().cx.round().max(0.0) as usize).min(w.saturating_sub(1)), w]);
        let mean = temporal_mean(stack);
        let occupied: Vec<usize> = (0..stack.height())
            .filter(|&y| (columns[0]..columns[1]).any(|x| mean.is_valid(x, y)))
            .collect();
        let (Some(&first), Some(&last)) = (occupied.first(), occupied.last()) else {
            return Err(Error::NoEdge);
        };
        let span = last + 1 - first;
        let trim = ((1.0 - ROW_FRACTION) / 2.0 * span as f64).round() as usize;
        let rows = [first + trim, (last + 1 - trim).max(first + trim + 1)];
        Ok(Self::new(columns, rows))
    }

    fn validate(&self, frame: &DepthFrame) -> Result<()> {
        let [c0, c1] = self.columns;
        let [r0, r1] = self.rows;
        if c0 + 1 >= c1 || c1 > frame.width() || r0 >= r1 || r1 > frame.height() {
            return Err(Error::Invalid(format!(
                "search band columns [{c0}, {c1}) rows [{r0}, {r1}) does not fit a {}x{} frame",
                frame.width(),
                frame.height()
            )));
        }
        if !(self.min_jump > 0.0 && (0.0..=1.0).contains(&self.dominance)) {
            return Err(Error::Invalid("edge thresholds out of range".into()));
        }
        Ok(())
    }
}

/// Edge-position statistics of one lateral stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LateralSample {
    pub condition: CaptureCondition,
    /// Sample std of the edge columns about the fitted vertical line, pixels.
    pub sigma_px: f64,
    /// Column of the fitted vertical line.
    pub line_column: f64,
    pub edge_count: usize,
    /// Edge column minus line column for every detected edge pixel.
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

enum RowEdge {
    None,
    Ambiguous,
    At(usize),
}

fn row_edge(frame: &DepthFrame, y: usize, search: &EdgeSearch) -> RowEdge {
    let (mut best, mut second, mut at) = (0.0f64, 0.0f64, None);
    for x in search.columns[0]..search.columns[1] - 1 {
        let (l, r) = (frame.get(x, y), frame.get(x + 1, y));
        let step = match (l.is_nan(), r.is_nan()) {
            (true, true) => continue,
            (false, false) => (r - l).abs(),
            _ => f64::INFINITY,
        };
        if step < search.min_jump {
            continue;
        }
        if step > best {
            second = best;
            best = step;
            at = Some(x + 1);
        } else if step > second {
            second = step;
        }
    }
    match at {
        None => RowEdge::None,
        Some(_) if second > 0.0 && second >= search.dominance * best => RowEdge::Ambiguous,
        Some(x) => RowEdge::At(x),
    }
}

/// Locates the depth discontinuity in every row of every frame and fits a
/// vertical line (constant column) to the edge pixels. The edge column is
/// the first column right of the largest step.
pub fn extract_edge(stack: &FrameStack, search: &EdgeSearch) -> Result<LateralSample> {
    let first = &stack.frames()[0];
    search.validate(first)?;
    let mut columns = Vec::new();
    let mut ambiguous = 0usize;
    for frame in stack.frames() {
        for y in search.rows[0]..search.rows[1] {
            match row_edge(frame, y, search) {
                RowEdge::None => {}
                RowEdge::Ambiguous => ambiguous += 1,
                RowEdge::At(x) => columns.push(x as f64),
            }
        }
    }
    if columns.is_empty() && ambiguous == 0 {
        return Err(Error::NoEdge);
    }
    if ambiguous > columns.len() {
        return Err(Error::AmbiguousEdge(format!(
            "{ambiguous} rows have competing steps, {} have one dominant edge",
            columns.len()
        )));
    }
    if columns.len() < 2 {
        return Err(Error::InsufficientData(format!("{} edge pixels found", columns.len())));
    }
    let count = columns.len() as f64;
    let line = columns.iter().sum::<f64>() / count;
    let residuals: Vec<f64> = columns.iter().map(|c| c - line).collect();
    let var = residuals.iter().map(|r| r * r).sum::<f64>() / (count - 1.0);
    Ok(LateralSample {
        condition: stack.condition(),
        sigma_px: var.sqrt(),
        line_column: line,
        edge_count: columns.len(),
        residuals,
    })
}

/// Percentile `p` in `[0, 100]` with linear interpolation between order
/// statistics at rank `h = (N − 1)·p/100`.
///
/// The interpolation is evaluated as `(100·lo + r·(hi − lo)) / 100` with
/// `r = 100·frac(h)`, so integer data and integer `p` give the correctly
/// rounded exact value.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("percentile of an empty set".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Invalid(format!("percentile {p} outside [0, 100]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("percentile input contains a non-finite value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t = (sorted.len() - 1) as f64 * p;
    let lo = ((t / 100.0).floor() as usize).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    let r = t - 100.0 * lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    if r == 0.0 || a == b {
        return Ok(a);
    }
    Ok(((100.0 * a + r * (b - a)) / 100.0).clamp(a, b))
}

/// σ_x as the 90th percentile of the per-condition edge stds.
pub fn fit_lateral_sigma(samples: &[LateralSample]) -> Result<f64> {
    let values: Vec<f64> = samples.iter().map(|s| s.sigma_px).collect();
    percentile(&values, 90.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{CameraIntrinsics, StackMeta};
    use crate::model::ModeId;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn step_stack(edges: &[Vec<usize>], w: usize, h: usize) -> FrameStack {
        let k = CameraIntrinsics::new(w, h, 100.0, 100.0, w as f64 / 2.0, h as f64 / 2.0).unwrap();
        let meta = StackMeta::new(CaptureCondition::new(ModeId::Mode5At30Fps, 1.0, 0.0, k).unwrap());
        let frames = edges
            .iter()
            .map(|rows| {
                let d = (0..w * h)
                    .map(|i| if i % w < rows[i / w] { 1.0 } else { 2.0 })
                    .collect();
                DepthFrame::new(w, h, d).unwrap()
            })
            .collect();
        FrameStack::new(frames, meta).unwrap()
    }

    fn full_band(w: usize, h: usize) -> EdgeSearch {
        EdgeSearch::new([0, w], [0, h])
    }

    #[test]
    fn noiseless_step() {
        let stack = step_stack(&vec![vec![100; 20]; 3], 160, 20);
        let s = extract_edge(&stack, &full_band(160, 20)).unwrap();
        assert_eq!(s.sigma_px, 0.0);
        assert_eq!(s.line_column, 100.0);
        assert_eq!(s.edge_count, 60);
    }

    #[test]
    fn gaussian_jitter_is_recovered() {
        let (frames, rows) = (300, 100);
        let edges: Vec<Vec<usize>> = (0..frames)
            .map(|f| {
                let mut rng = CounterRng::new(11, crate::rng::Stream::User(0), f, 0);
                (0..rows).map(|_| (100.0 + rng.standard_normal()).round() as usize).collect()
            })
            .collect();
        let s = extract_edge(&step_stack(&edges, 200, rows), &full_band(200, rows)).unwrap();
        // Rounding to whole columns adds 1/12 px² of variance.
        assert!((s.sigma_px - 1.0).abs() < 0.1, "{}", s.sigma_px);
        assert!((s.line_column - 100.0).abs() < 0.02);
    }

    #[test]
    fn flat_band_has_no_edge() {
        let stack = step_stack(&vec![vec![100; 10]; 2], 160, 10);
        let err = extract_edge(&stack, &EdgeSearch::new([0, 90], [0, 10]));
        assert!(matches!(err, Err(Error::NoEdge)));
    }

    #[test]
    fn two_equal_steps_are_ambiguous() {
        let k = CameraIntrinsics::new(50, 4, 50.0, 50.0, 25.0, 2.0).unwrap();
        let meta = StackMeta::new(CaptureCondition::new(ModeId::Mode5At30Fps, 1.0, 0.0, k).unwrap());
        let d = (0..200).map(|i| [1.0, 1.5, 2.0][(i % 50) / 20]).collect();
        let stack = FrameStack::new(vec![DepthFrame::new(50, 4, d).unwrap()], meta).unwrap();
        let err = extract_edge(&stack, &full_band(50, 4));
        assert!(matches!(err, Err(Error::AmbiguousEdge(_))));
    }

    #[test]
    fn invalid_background_counts_as_edge() {
        let k = CameraIntrinsics::new(40, 10, 40.0, 40.0, 20.0, 5.0).unwrap();
        let meta = StackMeta::new(CaptureCondition::new(ModeId::Mode5At30Fps, 1.0, 0.0, k).unwrap());
        let d = (0..400)
            .map(|i| if i % 40 < 30 { 1.0 + 0.01 * (i % 40) as f64 } else { f64::NAN })
            .collect();
        let stack = FrameStack::new(vec![DepthFrame::new(40, 10, d).unwrap(); 2], meta).unwrap();
        let search = EdgeSearch::for_stack(&stack).unwrap();
        assert_eq!(search.columns, [20, 40]);
        assert_eq!(search.rows, [2, 8]);
        let s = extract_edge(&stack, &search).unwrap();
        assert_eq!(s.line_column, 30.0);
    }

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 90.0).unwrap(), 9.1);
        assert_eq!(percentile(&[0.864], 90.0).unwrap(), 0.864);
        assert_eq!(percentile(&[2.5; 7], 90.0).unwrap(), 2.5);
        assert!(percentile(&[], 90.0).is_err());
        assert!(fit_lateral_sigma(&[]).is_err());
    }

    proptest! {
        #[test]
        fn percentile_bounded_and_monotone(v in prop::collection::vec(-1e3f64..1e3, 1..50), p in 0.0f64..100.0, q in 0.0f64..100.0) {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let a = percentile(&v, p).unwrap();
            prop_assert!(a >= lo && a <= hi);
            let (p, q) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(percentile(&v, p).unwrap() <= percentile(&v, q).unwrap());
        }

        #[test]
        fn edge_shift_equivariance(shift in 0usize..40, seed in 0u64..500) {
            let edges: Vec<Vec<usize>> = (0..4)
                .map(|f| {
                    let mut rng = CounterRng::new(seed, crate::rng::Stream::User(1), f, 0);
                    (0..16).map(|_| (60.0 + 2.0 * rng.standard_normal()).round() as usize).collect()
                })
                .collect();
            let moved: Vec<Vec<usize>> = edges.iter().map(|r| r.iter().map(|c| c + shift).collect()).collect();
            let a = extract_edge(&step_stack(&edges, 140, 16), &full_band(140, 16)).unwrap();
            let b = extract_edge(&step_stack(&moved, 140, 16), &full_band(140, 16)).unwrap();
            prop_assert!((b.line_column - a.line_column - shift as f64).abs() < 1e-9);
            prop_assert!((a.sigma_px - b.sigma_px).abs() < 1e-9);
        }
    }
}
