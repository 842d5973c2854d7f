use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{dim_err, Result};

pub const PRECISION_THRESHOLDS: usize = 51;
pub const SUCCESS_THRESHOLDS: usize = 21;

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn center_error(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// One-pass evaluation summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpeMetrics {
    /// Fraction of frames with center error ≤ t, for t = 0, 1, …, 50 px.
    pub precision_curve: Vec<f64>,
    /// Fraction of frames with IoU > t, for t = 0, 0.05, …, 1.
    pub success_curve: Vec<f64>,
    pub precision_20: f64,
    pub auc: f64,
    pub mean_center_error: f64,
    pub mean_iou: f64,
    pub frames: usize,
}

pub fn evaluate_ope(results: &[BoundingBox], gt: &[BoundingBox]) -> Result<OpeMetrics> {
    if results.len() != gt.len() {
        return dim_err(format!("{} results for {} ground-truth boxes", results.len(), gt.len()));
    }
    if gt.is_empty() {
        return dim_err("cannot evaluate an empty sequence");
    }
    let n = gt.len() as f64;
    let errors: Vec<f64> = results.iter().zip(gt).map(|(r, g)| center_error(r, g)).collect();
    let overlaps: Vec<f64> = results.iter().zip(gt).map(|(r, g)| iou(r, g)).collect();
    let precision_curve: Vec<f64> = (0..PRECISION_THRESHOLDS)
        .map(|t| errors.iter().filter(|&&e| e <= t as f64).count() as f64 / n)
        .collect();
    let success_curve: Vec<f64> = (0..SUCCESS_THRESHOLDS)
        .map(|i| {
            let t = i as f64 / (SUCCESS_THRESHOLDS - 1) as f64;
            overlaps.iter().filter(|&&o| o > t).count() as f64 / n
        })
        .collect();
    Ok(OpeMetrics {
        precision_20: precision_curve[20],
        auc: success_curve.iter().sum::<f64>() / SUCCESS_THRESHOLDS as f64,
        mean_center_error: errors.iter().sum::<f64>() / n,
        mean_iou: overlaps.iter().sum::<f64>() / n,
        frames: gt.len(),
        precision_curve,
        success_curve,
    })
}
