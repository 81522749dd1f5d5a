use crate::frame::{DepthFrame, FrameStack};

/// Pixels valid in fewer than this fraction of frames are dropped.
pub const MIN_VALID_FRACTION: f64 = 0.5;

/// Temporal statistics of one pixel over the frames where it is valid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelSeries {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
}

/// Per-pixel temporal statistics, row-major. `None` marks pixels valid in
/// fewer than half the frames or in fewer than two frames.
pub fn temporal_stats(stack: &FrameStack) -> Vec<Option<PixelSeries>> {
    let pixels = stack.width() * stack.height();
    let mut count = vec![0usize; pixels];
    let mut mean = vec![0.0f64; pixels];
    let mut m2 = vec![0.0f64; pixels];
    for frame in stack.frames() {
        for (i, &d) in frame.depths().iter().enumerate() {
            if d.is_nan() {
                continue;
            }
            count[i] += 1;
            let delta = d - mean[i];
            mean[i] += delta / count[i] as f64;
            m2[i] += delta * (d - mean[i]);
        }
    }
    let frames = stack.len() as f64;
    (0..pixels)
        .map(|i| {
            let n = count[i];
            (n >= 2 && n as f64 >= MIN_VALID_FRACTION * frames).then(|| PixelSeries {
                count: n,
                mean: mean[i],
                std: (m2[i] / (n - 1) as f64).max(0.0).sqrt(),
            })
        })
        .collect()
}

/// Temporal mean frame; NaN where a pixel is valid in fewer than half the
/// frames.
pub fn temporal_mean(stack: &FrameStack) -> DepthFrame {
    let frames = stack.len() as f64;
    let pixels = stack.width() * stack.height();
    let mut count = vec![0usize; pixels];
    let mut sum = vec![0.0f64; pixels];
    for frame in stack.frames() {
        for (i, &d) in frame.depths().iter().enumerate() {
            if !d.is_nan() {
                count[i] += 1;
                sum[i] += d;
            }
        }
    }
    let depths = (0..pixels)
        .map(|i| {
            let n = count[i];
            if n > 0 && n as f64 >= MIN_VALID_FRACTION * frames {
                sum[i] / n as f64
            } else {
                f64::NAN
            }
        })
        .collect();
    DepthFrame::from_parts(stack.width(), stack.height(), depths)
}
