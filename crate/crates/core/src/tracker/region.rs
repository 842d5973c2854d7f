use crate::bbox::BoundingBox;
use crate::error::Result;
use crate::numerics::{sample_clamped, Tensor};

/// Resamples the `width×height` pixel window centered at `(cx, cy)` to a
/// `size×size` patch, rotating the window by `degrees` (counter-clockwise
/// as displayed) about its center. Out-of-frame samples replicate the
/// border.
pub fn crop_region(frame: &Tensor, (cx, cy): (f64, f64), (width, height): (f64, f64), size: usize, degrees: f64) -> Result<Tensor> {
    let (_, _, c) = frame.dims3()?;
    let (sin, cos) = if degrees == 0.0 { (0.0, 1.0) } else { degrees.to_radians().sin_cos() };
    let (sx, sy) = (width / size as f64, height / size as f64);
    let mut out = Tensor::zeros(&[size, size, c]);
    for r in 0..size {
        let dy = ((r as f64 + 0.5) - size as f64 / 2.0) * sy;
        for col in 0..size {
            let dx = ((col as f64 + 0.5) - size as f64 / 2.0) * sx;
            // continuous pixel coordinates → pixel-index coordinates
            let x = cx + cos * dx + sin * dy - 0.5;
            let y = cy - sin * dx + cos * dy - 0.5;
            for ch in 0..c {
                out.set3(r, col, ch, sample_clamped(frame, y, x, ch));
            }
        }
    }
    Ok(out)
}

/// Maps response-grid indices back to image pixels for one search region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionGrid {
    pub response_h: usize,
    pub response_w: usize,
    /// Response index of the region center, `(H − h) / 2` per axis.
    pub center_row: f64,
    pub center_col: f64,
    /// Image pixels per feature cell along each axis.
    pub px_per_cell_x: f64,
    pub px_per_cell_y: f64,
}

impl RegionGrid {
    /// Box centered on the response cell `(row, col)`, extent from `prev`.
    pub fn box_at(&self, row: usize, col: usize, prev: &BoundingBox) -> BoundingBox {
        let (cx, cy) = prev.center();
        let nx = cx + (col as f64 - self.center_col) * self.px_per_cell_x;
        let ny = cy + (row as f64 - self.center_row) * self.px_per_cell_y;
        BoundingBox::from_center(nx, ny, prev.w, prev.h)
    }
}
