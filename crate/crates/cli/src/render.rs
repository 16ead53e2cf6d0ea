//! Raster export of point sets as binary PGM (P5, maxval 255).
//!
//! A pixel is set (255) iff some point maps into it under half-up rounding
//! of the normalized coordinates. One-dimensional sets render as a column
//! strip repeated over every row. Rows are written top-down with the maximum
//! y first, so images display in the usual orientation; pixel (0, 0) in the
//! bounds' coordinate frame is the first byte of the last row.

use anyhow::{bail, Result};
use gifs_core::PointSet;

#[derive(Debug, Clone, Copy)]
pub struct RenderBounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl RenderBounds {
    /// Bounding box of the set padded by 5% per side (half a unit for
    /// degenerate extents).
    pub fn padded(set: &PointSet) -> Self {
        let (lo, hi) = set.bbox();
        let pad = |l: f64, h: f64| {
            let e = h - l;
            if e > 0.0 {
                (l - 0.05 * e, h + 0.05 * e)
            } else {
                (l - 0.5, h + 0.5)
            }
        };
        let (xmin, xmax) = pad(lo[0], hi[0]);
        let (ymin, ymax) = if set.dim() >= 2 {
            pad(lo[1], hi[1])
        } else {
            (0.0, 1.0)
        };
        Self {
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Renders a 1- or 2-dimensional point set to PGM bytes.
pub fn render_pointset(
    set: &PointSet,
    width: usize,
    height: usize,
    bounds: &RenderBounds,
) -> Result<Vec<u8>> {
    if set.dim() > 2 {
        bail!(
            "rendering supports dim <= 2; project {}-dimensional data to a coordinate pair first",
            set.dim()
        );
    }
    if width == 0 || height == 0 {
        bail!("raster dimensions must be positive");
    }
    let xspan = bounds.xmax - bounds.xmin;
    let yspan = bounds.ymax - bounds.ymin;
    if !xspan.is_finite() || !yspan.is_finite() || xspan <= 0.0 || yspan <= 0.0 {
        bail!("render bounds must have positive extent");
    }
    let mut lit = vec![false; width * height];
    for p in set.iter() {
        let u = (p[0] - bounds.xmin) / xspan;
        let col = round_half_up(u * (width - 1) as f64);
        if col < 0 || col >= width as i64 {
            continue;
        }
        if set.dim() == 2 {
            let v = (p[1] - bounds.ymin) / yspan;
            let row = round_half_up(v * (height - 1) as f64);
            if row < 0 || row >= height as i64 {
                continue;
            }
            lit[row as usize * width + col as usize] = true;
        } else {
            for row in 0..height {
                lit[row * width + col as usize] = true;
            }
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height);
    // raster rows top-down: highest y first
    for row in (0..height).rev() {
        for col in 0..width {
            out.push(if lit[row * width + col] { 255 } else { 0 });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit_pixels(pgm: &[u8]) -> Vec<usize> {
        // header is "P5\nW H\n255\n"
        let header_end = pgm
            .windows(4)
            .position(|w| w == b"255\n")
            .map(|p| p + 4)
            .unwrap();
        pgm[header_end..]
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 255)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn single_point_lights_one_pixel() {
        let set = PointSet::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let bounds = RenderBounds {
            xmin: 0.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
        };
        let pgm = render_pointset(&set, 2, 2, &bounds).unwrap();
        let lit = lit_pixels(&pgm);
        // (0,0) is the first column of the bottom row = last raster row
        assert_eq!(lit, vec![2]);
    }

    #[test]
    fn nonempty_set_lights_at_least_one_pixel() {
        let set = PointSet::from_rows(&[vec![0.3, 0.7], vec![0.6, 0.1]]).unwrap();
        let pgm = render_pointset(&set, 16, 16, &RenderBounds::padded(&set)).unwrap();
        assert!(!lit_pixels(&pgm).is_empty());
    }

    #[test]
    fn one_dimensional_strip() {
        let set = PointSet::from_rows(&[vec![0.5]]).unwrap();
        let bounds = RenderBounds {
            xmin: 0.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
        };
        let pgm = render_pointset(&set, 3, 4, &bounds).unwrap();
        let lit = lit_pixels(&pgm);
        // middle column lit in every one of the 4 rows
        assert_eq!(lit, vec![1, 4, 7, 10]);
    }

    #[test]
    fn high_dim_rejected() {
        let set = PointSet::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let bounds = RenderBounds {
            xmin: 0.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
        };
        assert!(render_pointset(&set, 4, 4, &bounds).is_err());
    }

    #[test]
    fn deterministic_bytes() {
        let set = PointSet::from_rows(&[vec![0.25, 0.75], vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
        let b = RenderBounds::padded(&set);
        let a = render_pointset(&set, 64, 64, &b).unwrap();
        let c = render_pointset(&set, 64, 64, &b).unwrap();
        assert_eq!(a, c);
    }
}
