//! Synthetic sequences with exact ground truth, OTB-style sequence files
//! and one-pass evaluation metrics.

mod io;
mod metrics;
mod suites;
mod synth;
#[cfg(test)]
mod tests;

pub use io::{
    load_results, load_sequence, read_groundtruth, read_image, save_results, save_sequence, write_groundtruth,
    write_heatmap, write_image, FrameResult,
};
pub use metrics::{center_error, evaluate_ope, iou, OpeMetrics, PRECISION_THRESHOLDS, SUCCESS_THRESHOLDS};
pub use suites::{ablation_suite, rotation_event, rotation_event_end};
pub use synth::{synthesize_sequence, Keyframe, Occlusion, SynthSpec, Waypoint};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Frames and ground truth of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBundle {
    pub name: String,
    pub frames: Vec<Tensor>,
    pub gt: Vec<BoundingBox>,
    pub seed: Option<u64>,
}

impl SequenceBundle {
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != self.gt.len() || self.frames.len() < 2 {
            return Err(Error::Spec(format!(
                "{} frames with {} ground-truth boxes (need equal counts ≥ 2)",
                self.frames.len(),
                self.gt.len()
            )));
        }
        for (i, (f, b)) in self.frames.iter().zip(&self.gt).enumerate() {
            let (h, w, _) = f.dims3()?;
            if !b.intersects_frame(w, h) {
                return Err(Error::Spec(format!("ground truth of frame {} lies outside the image", i + 1)));
            }
        }
        Ok(())
    }

    pub fn frame_size(&self) -> (usize, usize) {
        let s = self.frames[0].shape();
        (s[1], s[0])
    }
}
