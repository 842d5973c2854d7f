use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SequenceBundle;
use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::numerics::{sample_clamped, Tensor};

/// Target center at a given frame (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
}

/// Scalar schedule value at a given frame; linear in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: usize,
    pub value: f64,
}

/// Frames `start..=end` get an occluder covering the left `fraction` of
/// the target box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub start: usize,
    pub end: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub target_w: usize,
    pub target_h: usize,
    #[serde(default)]
    pub seed: u64,
    pub waypoints: Vec<Waypoint>,
    /// In-plane rotation in degrees, counter-clockwise as displayed.
    #[serde(default)]
    pub rotation: Vec<Keyframe>,
    #[serde(default)]
    pub scale: Vec<Keyframe>,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Amplitude in pixels of a time-varying sinusoidal warp of the target.
    #[serde(default)]
    pub deformation: f64,
    #[serde(default = "default_channels")]
    pub channels: usize,
}

fn default_name() -> String {
    "synthetic".into()
}

fn default_channels() -> usize {
    1
}

/// Piecewise-linear interpolation, held constant outside the keyed range.
fn interpolate(keys: &[(usize, f64)], frame: usize, default: f64) -> f64 {
    let Some(&(f0, v0)) = keys.first() else {
        return default;
    };
    if frame <= f0 {
        return v0;
    }
    for pair in keys.windows(2) {
        let ((fa, va), (fb, vb)) = (pair[0], pair[1]);
        if frame <= fb {
            let t = (frame - fa) as f64 / (fb - fa) as f64;
            return va + t * (vb - va);
        }
    }
    keys[keys.len() - 1].1
}

fn ordered(keys: &[(usize, f64)], what: &str) -> Result<()> {
    if keys.windows(2).any(|p| p[1].0 <= p[0].0) {
        return Err(Error::Spec(format!("{what} keyframes must have strictly increasing frames")));
    }
    Ok(())
}

/// Smooth random texture: a coarse lattice of uniform values, bilinearly
/// interpolated.
fn value_noise(h: usize, w: usize, cell: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random::<f64>()).collect();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let fy = r as f64 / cell;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for c in 0..w {
            let fx = c as f64 / cell;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let at = |y: usize, x: usize| lattice[y * gw + x];
            let top = (1.0 - tx) * at(y0, x0) + tx * at(y0, x0 + 1);
            let bot = (1.0 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1);
            out[r * w + c] = (1.0 - ty) * top + ty * bot;
        }
    }
    out
}

impl SynthSpec {
    fn path(&self) -> Vec<(usize, f64, f64)> {
        self.waypoints.iter().map(|p| (p.frame, p.x, p.y)).collect()
    }

    fn keys(v: &[Keyframe]) -> Vec<(usize, f64)> {
        v.iter().map(|k| (k.frame, k.value)).collect()
    }

    pub fn center_at(&self, frame: usize) -> (f64, f64) {
        let path = self.path();
        let xs: Vec<_> = path.iter().map(|&(f, x, _)| (f, x)).collect();
        let ys: Vec<_> = path.iter().map(|&(f, _, y)| (f, y)).collect();
        (interpolate(&xs, frame, 0.0), interpolate(&ys, frame, 0.0))
    }

    pub fn rotation_at(&self, frame: usize) -> f64 {
        interpolate(&Self::keys(&self.rotation), frame, 0.0)
    }

    pub fn scale_at(&self, frame: usize) -> f64 {
        interpolate(&Self::keys(&self.scale), frame, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Spec("need at least 2 frames".into()));
        }
        if self.width == 0 || self.height == 0 || self.target_w == 0 || self.target_h == 0 {
            return Err(Error::Spec("frame and target sizes must be positive".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Spec(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.waypoints.is_empty() {
            return Err(Error::Spec("motion path needs at least one waypoint".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.deformation >= 0.0) {
            return Err(Error::Spec("noise_sigma and deformation must be ≥ 0".into()));
        }
        let xs: Vec<_> = self.path().iter().map(|&(f, x, _)| (f, x)).collect();
        ordered(&xs, "waypoint")?;
        ordered(&Self::keys(&self.rotation), "rotation")?;
        ordered(&Self::keys(&self.scale), "scale")?;
        for f in 0..self.frames {
            let (cx, cy) = self.center_at(f);
            if !(cx >= 0.0 && cy >= 0.0 && cx < self.width as f64 && cy < self.height as f64) {
                return Err(Error::Spec(format!("motion path leaves the frame at frame {f} ({cx}, {cy})")));
            }
            let s = self.scale_at(f);
            if !(s > 0.0) {
                return Err(Error::Spec(format!("scale factor {s} at frame {f} must be > 0")));
            }
        }
        for o in &self.occlusions {
            if o.start > o.end || !(0.0..=1.0).contains(&o.fraction) {
                return Err(Error::Spec(format!("bad occlusion interval {o:?}")));
            }
        }
        Ok(())
    }

    /// Ground-truth box of the (unrotated) scaled target.
    pub fn gt_box(&self, frame: usize) -> BoundingBox {
        let (cx, cy) = self.center_at(frame);
        let s = self.scale_at(frame);
        BoundingBox::from_center(cx, cy, self.target_w as f64 * s, self.target_h as f64 * s)
    }

    /// Constant-velocity zig-zag at `speed` px/frame on a `size`² frame.
    pub fn translation(name: &str, frames: usize, size: usize, target: usize, speed: f64, noise_sigma: f64, seed: u64) -> Self {
        let margin = target as f64;
        let (lo, hi) = (margin, size as f64 - margin);
        let leg = ((hi - lo) / speed).floor().max(1.0) as usize;
        let span = leg as f64 * speed;
        let corners = [(lo, lo), (lo + span, lo), (lo + span, lo + span), (lo, lo + span)];
        let waypoints = (0..=frames.div_ceil(leg))
            .map(|k| {
                let (x, y) = corners[k % 4];
                Waypoint { frame: k * leg, x, y }
            })
            .collect();
        Self {
            name: name.into(),
            frames,
            width: size,
            height: size,
            target_w: target,
            target_h: target,
            seed,
            waypoints,
            rotation: vec![],
            scale: vec![],
            occlusions: vec![],
            noise_sigma,
            deformation: 0.0,
            channels: 1,
        }
    }
}

/// Renders the sequence. Pixel values are quantized to multiples of 1/255
/// so that 8-bit files reproduce the frames exactly.
pub fn synthesize_sequence(spec: &SynthSpec) -> Result<SequenceBundle> {
    spec.validate()?;
    let (w, h, ch) = (spec.width, spec.height, spec.channels);
    let (tw, th) = (spec.target_w, spec.target_h);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let background: Vec<Vec<f64>> = (0..ch)
        .map(|_| {
            let coarse = value_noise(h, w, 16.0, &mut rng);
            let fine = value_noise(h, w, 5.0, &mut rng);
            coarse.iter().zip(&fine).map(|(a, b)| 0.25 + 0.35 * a + 0.15 * b).collect()
        })
        .collect();
    let texture: Vec<Tensor> = (0..ch)
        .map(|_| {
            let v = value_noise(th, tw, (tw.min(th) as f64 / 4.0).max(1.0), &mut rng);
            Tensor::from_vec(&[th, tw, 1], v.iter().map(|x| 0.05 + 0.9 * x).collect()).expect("texture shape")
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let phase = rng.random::<f64>() * std::f64::consts::TAU;

    let mut frames = Vec::with_capacity(spec.frames);
    let mut gt = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let (cx, cy) = spec.center_at(f);
        let s = spec.scale_at(f);
        let (sin, cos) = spec.rotation_at(f).to_radians().sin_cos();
        let bbox = spec.gt_box(f);
        let occluders: Vec<(f64, f64)> = spec
            .occlusions
            .iter()
            .filter(|o| (o.start..=o.end).contains(&f))
            .map(|o| (bbox.x, bbox.x + o.fraction * bbox.w))
            .collect();
        let t = f as f64 * 0.3 + phase;
        let mut img = Tensor::zeros(&[h, w, ch]);
        for r in 0..h {
            for c in 0..w {
                let (px, py) = (c as f64 + 0.5 - cx, r as f64 + 0.5 - cy);
                // screen offset to object coordinates
                let ox = (px * cos - py * sin) / s;
                let oy = (px * sin + py * cos) / s;
                let mut u = ox + tw as f64 / 2.0;
                let mut v = oy + th as f64 / 2.0;
                if spec.deformation > 0.0 {
                    u += spec.deformation * (std::f64::consts::TAU * v / th as f64 + t).sin();
                    v += spec.deformation * (std::f64::consts::TAU * u / tw as f64 + 1.3 * t).sin();
                }
                let inside = u >= 0.0 && v >= 0.0 && u < tw as f64 && v < th as f64;
                let occluded = r as f64 + 0.5 >= bbox.y
                    && r as f64 + 0.5 < bbox.y + bbox.h
                    && occluders.iter().any(|&(x0, x1)| c as f64 + 0.5 >= x0 && (c as f64 + 0.5) < x1);
                for k in 0..ch {
                    let mut val = if occluded {
                        0.5
                    } else if inside {
                        let tex = &texture[k];
                        let (yy, xx) = ((v - 0.5).clamp(0.0, (th - 1) as f64), (u - 0.5).clamp(0.0, (tw - 1) as f64));
                        sample_clamped(tex, yy, xx, 0)
                    } else {
                        background[k][r * w + c]
                    };
                    if spec.noise_sigma > 0.0 {
                        val += noise.sample(&mut rng);
                    }
                    img.set3(r, c, k, (val.clamp(0.0, 1.0) * 255.0).round() / 255.0);
                }
            }
        }
        frames.push(img);
        gt.push(bbox);
    }
    Ok(SequenceBundle {
        name: spec.name.clone(),
        frames,
        gt,
        seed: Some(spec.seed),
    })
}
