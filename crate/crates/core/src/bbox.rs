use serde::{Deserialize, Serialize};

/// Axis-aligned box in continuous pixel coordinates, 0-based: pixel `(r, c)`
/// covers `[c, c+1) × [r, r+1)`. Files use the 1-based convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    /// Converts a 1-based file box.
    pub fn from_external(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x - 1.0, y - 1.0, w, h)
    }

    pub fn to_external(self) -> (f64, f64, f64, f64) {
        (self.x + 1.0, self.y + 1.0, self.w, self.h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite())
    }

    pub fn intersects_frame(&self, frame_w: usize, frame_h: usize) -> bool {
        self.x < frame_w as f64 && self.y < frame_h as f64 && self.x + self.w > 0.0 && self.y + self.h > 0.0
    }

    /// Limits the extent to `[1, frame size]` and shifts the box so that it
    /// overlaps the frame by at least one pixel on each axis.
    pub fn clipped(&self, frame_w: usize, frame_h: usize) -> Self {
        let (fw, fh) = (frame_w as f64, frame_h as f64);
        let w = self.w.clamp(1.0, fw.max(1.0));
        let h = self.h.clamp(1.0, fh.max(1.0));
        let x = self.x.clamp(1.0 - w, fw - 1.0);
        let y = self.y.clamp(1.0 - h, fh - 1.0);
        Self::new(x, y, w, h)
    }
}
