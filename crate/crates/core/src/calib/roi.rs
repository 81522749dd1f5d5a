use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::frame::{DepthFrame, PixelRect};

/// Share of the target's bounding box, per axis, used for axial statistics.
pub const ROI_FRACTION: f64 = 0.4;

/// Bounding box of the largest 4-connected valid region.
fn largest_region_bbox(frame: &DepthFrame) -> Option<PixelRect> {
    let (w, h) = (frame.width(), frame.height());
    let mut seen = vec![false; w * h];
    let mut best: Option<(usize, PixelRect)> = None;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || frame.depths()[start].is_nan() {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1, mut size) = (w, h, 0, 0, 0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            size += 1;
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if !seen[j] && !frame.depths()[j].is_nan() {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, PixelRect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)));
        }
    }
    best.map(|(_, r)| r)
}

/// True when the rectangle and its one-pixel ring are valid and inside the frame.
fn is_clear(frame: &DepthFrame, r: &PixelRect) -> bool {
    if r.area() == 0 || r.x0 == 0 || r.y0 == 0 || r.x1() >= frame.width() || r.y1() >= frame.height() {
        return false;
    }
    (r.y0 - 1..=r.y1()).all(|y| (r.x0 - 1..=r.x1()).all(|x| frame.is_valid(x, y)))
}

/// Central rectangle covering the middle 40% (per axis) of the bounding box
/// of the largest valid region. The result never touches an invalid pixel
/// or the frame border; it shrinks symmetrically until it does not.
pub fn axial_roi(frame: &DepthFrame) -> Result<PixelRect> {
    let bbox = largest_region_bbox(frame).ok_or_else(|| Error::InsufficientData("frame has no valid pixels".into()))?;
    let rw = ((bbox.width as f64 * ROI_FRACTION).round() as usize).max(1);
    let rh = ((bbox.height as f64 * ROI_FRACTION).round() as usize).max(1);
    let mut r = PixelRect::new(bbox.x0 + (bbox.width - rw) / 2, bbox.y0 + (bbox.height - rh) / 2, rw, rh);
    while !is_clear(frame, &r) {
        if r.width <= 2 || r.height <= 2 {
            return Err(Error::InsufficientData("no clear region inside the valid area".into()));
        }
        r = PixelRect::new(r.x0 + 1, r.y0 + 1, r.width - 2, r.height - 2);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_frame_gives_central_forty_percent() {
        let f = DepthFrame::filled(224, 172, 1.0).unwrap();
        let r = axial_roi(&f).unwrap();
        // 0.4·224 = 89.6 → 90, 0.4·172 = 68.8 → 69.
        assert_eq!(r, PixelRect::new(67, 51, 90, 69));
    }

    #[test]
    fn left_half_plane() {
        let d = (0..224 * 172).map(|i| if i % 224 < 112 { 1.0 } else { f64::NAN }).collect();
        let f = DepthFrame::new(224, 172, d).unwrap();
        let r = axial_roi(&f).unwrap();
        let center_x = r.x0 as f64 + r.width as f64 / 2.0;
        assert!((center_x - 56.0).abs() <= 1.0, "{r:?}");
        assert_eq!(r.width, 45);
        assert!(r.x1() < 112);
    }

    #[test]
    fn empty_frame_is_an_error() {
        let f = DepthFrame::filled(10, 10, f64::NAN).unwrap();
        assert!(matches!(axial_roi(&f), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn roi_avoids_holes() {
        let mut d = vec![1.0; 50 * 50];
        d[16 * 50 + 17] = f64::NAN;
        let f = DepthFrame::new(50, 50, d).unwrap();
        let r = axial_roi(&f).unwrap();
        let ring_x = r.x0 - 1..=r.x1();
        let ring_y = r.y0 - 1..=r.y1();
        assert!(!(ring_x.contains(&17) && ring_y.contains(&16)), "{r:?}");
        assert!(r.pixels().all(|(x, y)| f.is_valid(x, y)));

        let mut d = vec![1.0; 50 * 50];
        d[25 * 50 + 25] = f64::NAN;
        let f = DepthFrame::new(50, 50, d).unwrap();
        assert!(axial_roi(&f).is_err());
    }

    #[test]
    fn largest_region_wins() {
        let d = (0..40 * 20)
            .map(|i| match i % 40 {
                0..=4 => 1.0,
                10..=39 => 2.0,
                _ => f64::NAN,
            })
            .collect();
        let f = DepthFrame::new(40, 20, d).unwrap();
        let r = axial_roi(&f).unwrap();
        assert!(r.x0 >= 10);
    }
}
