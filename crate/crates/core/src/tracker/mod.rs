//! Frame-by-frame tracking: search-region crops, the two regressors' heat
//! maps, their fusion, localization, scale search and online updates.

mod config;
mod region;
mod scale;

pub use config::{TrackerConfig, Variant};
pub use region::{crop_region, RegionGrid};
pub use scale::{scale_loss, scale_scores, scale_train_step, scale_transform, ScaleModel};

use crate::bbox::BoundingBox;
use crate::cnnsrk::{cnn_forward, cnn_stage1_step, cnn_stage2_step, CnnConfig, CnnSrkModel};
use crate::error::{dim_err, Error, Result};
use crate::features::extract_features;
use crate::krrcps::{beta_curvature, extract_dense_samples, krr_response, KrrGeometry, KrrModel, SampleMatrix};
use crate::numerics::{gaussian_map, resize_bilinear, sample_bilinear, GaussianLabelConfig, Tensor};

const MIN_BOX_SIDE: f64 = 4.0;
/// Target value of `2·lr_α·λ_max(K)²` when the KRR feature scale is automatic.
const ALPHA_STEP_GAIN: f64 = 0.5;
/// Upper bound on `lr_β·λ_max(∂²J/∂β²)` for a β step.
const BETA_STEP_GAIN: f64 = 1.0;
/// KRR steps between re-evaluations of the β curvature.
const BETA_RATE_REFRESH: usize = 10;
/// A stage-1 step that grows the loss by more than this factor is undone
/// and the CNN rate halved.
const CNN_BACKOFF_RATIO: f64 = 2.0;

/// Per-sequence tracking state.
#[derive(Clone, Debug)]
pub struct TrackerState {
    pub bbox: BoundingBox,
    pub config: TrackerConfig,
    pub geometry: KrrGeometry,
    pub krr: KrrModel,
    pub cnn: CnnSrkModel,
    pub scale: ScaleModel,
    /// 1-based index of the last processed frame.
    pub frame_index: usize,
    /// Multiplier applied to KRR inputs.
    pub krr_scale: f64,
    /// Current stage-1 CNN rate; starts at `lr_cnn` and only ever halves.
    pub cnn_rate: f64,
    frame_size: (usize, usize),
    label: Vec<f64>,
    cnn_label: Tensor,
}

/// Heat maps of one frame on the response grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatMaps {
    pub krr: Tensor,
    pub cnn: Tensor,
    pub fused: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutput {
    pub bbox: BoundingBox,
    /// Peak of the fused heat map.
    pub score: f64,
    pub scale_exponent: i32,
    pub heatmaps: HeatMaps,
}

/// `f_krr + γ·f_cnn`.
pub fn fuse(f_krr: &Tensor, f_cnn: &Tensor, gamma: f64) -> Result<Tensor> {
    if f_krr.shape() != f_cnn.shape() {
        return dim_err(format!("cannot fuse {:?} with {:?}", f_krr.shape(), f_cnn.shape()));
    }
    f_krr.zip_with(f_cnn, |k, c| k + gamma * c)
}

/// Box centered on the heat-map maximum (first in row-major order), with
/// the previous extent.
pub fn locate(f: &Tensor, prev: &BoundingBox, grid: &RegionGrid) -> Result<BoundingBox> {
    let (h, w) = f.dims2()?;
    if h == 0 || w == 0 {
        return dim_err("empty heat map");
    }
    let peak = f.argmax();
    Ok(grid.box_at(peak / w, peak % w, prev))
}

/// Bilinear resampling of the CNN map onto the response grid: response
/// index `i` sits at feature cell `i + (h−1)/2`, which the corner-aligned
/// resize to `n×n` places at `(i + (h−1)/2)·(n−1)/(H−1)`.
fn cnn_to_response(map: &Tensor, geo: &KrrGeometry) -> Tensor {
    let n = map.shape()[0];
    let (rh, rw) = (geo.response_h(), geo.response_w());
    let sy = (n - 1) as f64 / (geo.height - 1).max(1) as f64;
    let sx = (map.shape()[1] - 1) as f64 / (geo.width - 1).max(1) as f64;
    let oy = (geo.target_h as f64 - 1.0) / 2.0;
    let ox = (geo.target_w as f64 - 1.0) / 2.0;
    let m3 = map.clone().reshape(&[n, map.shape()[1], 1]).expect("heat map");
    Tensor::from_fn(&[rh, rw], |i| {
        let y = ((i / rw) as f64 + oy) * sy;
        let x = ((i % rw) as f64 + ox) * sx;
        sample_bilinear(&m3, y, x, 0).unwrap_or(0.0)
    })
}

fn region_size(config: &TrackerConfig, bbox: &BoundingBox) -> (f64, f64) {
    (bbox.w * config.search_factor, bbox.h * config.search_factor)
}

fn region_features(config: &TrackerConfig, frame: &Tensor, bbox: &BoundingBox, degrees: f64) -> Result<Tensor> {
    let patch = crop_region(frame, bbox.center(), region_size(config, bbox), config.patch_size, degrees)?;
    extract_features(&patch, &config.features())
}

fn scaled(x: &Tensor, k: f64) -> Tensor {
    if k == 1.0 {
        x.clone()
    } else {
        x.scale(k)
    }
}

/// Largest eigenvalue of the linear kernel `DᵀD` by power iteration.
fn linear_kernel_top_eigenvalue(d: &SampleMatrix) -> Result<f64> {
    let mut v = vec![1.0 / (d.count() as f64).sqrt(); d.count()];
    let mut lambda = 0.0;
    for _ in 0..50 {
        let w = d.project(&d.combine(&v)?)?;
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        lambda = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    Ok(lambda)
}

/// Feature multiplier `κ` with `2·lr·λ_max(κ²K)² = ALPHA_STEP_GAIN`.
fn auto_krr_scale(x: &Tensor, geo: &KrrGeometry, lr_alpha: f64) -> Result<f64> {
    let lambda = linear_kernel_top_eigenvalue(&extract_dense_samples(x, geo)?)?;
    if lr_alpha == 0.0 || lambda == 0.0 {
        return Ok(1.0);
    }
    Ok(((ALPHA_STEP_GAIN / (2.0 * lr_alpha)).sqrt() / lambda).sqrt())
}

impl TrackerState {

    fn grid(&self) -> RegionGrid {
        let (rw, rh) = region_size(&self.config, &self.bbox);
        let cells = (self.config.patch_size / self.config.cell) as f64;
        RegionGrid {
            response_h: self.geometry.response_h(),
            response_w: self.geometry.response_w(),
            center_row: (self.geometry.height - self.geometry.target_h) as f64 / 2.0,
            center_col: (self.geometry.width - self.geometry.target_w) as f64 / 2.0,
            px_per_cell_x: rw / cells,
            px_per_cell_y: rh / cells,
        }
    }

    fn features_at(&self, frame: &Tensor, bbox: &BoundingBox, degrees: f64) -> Result<Tensor> {
        region_features(&self.config, frame, bbox, degrees)
    }

    fn krr_input(&self, x: &Tensor) -> Tensor {
        scaled(x, self.krr_scale)
    }

    fn cnn_input(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.config.cnn_size;
        resize_bilinear(x, n, n)
    }

    fn eta_for(&self, frame_index: usize) -> f64 {
        if frame_index <= self.config.eta_switch_frame {
            self.config.eta_early
        } else {
            self.config.eta_late
        }
    }

    /// The configured β rate, capped so the step stays within the stable
    /// range of the current (β-independent) curvature.
    fn beta_rate(&self, xk: &Tensor) -> Result<f64> {
        let lr = self.config.lr_beta;
        if self.krr.beta_frozen || lr == 0.0 {
            return Ok(lr);
        }
        let k = &self.krr;
        let curvature = beta_curvature(xk, &k.samples, &k.alpha, k.lambda2, &self.geometry)?;
        Ok(if curvature > 0.0 { lr.min(BETA_STEP_GAIN / curvature) } else { lr })
    }

    /// KRR and CNN updates against the ideal maps for the region at `bbox`.
    fn train(&mut self, frame: &Tensor, bbox: &BoundingBox, x: &Tensor, krr_steps: usize, stage1: usize, stage2: usize) -> Result<()> {
        let xk = self.krr_input(x);
        self.krr.samples = extract_dense_samples(&xk, &self.geometry)?;
        let mut lr_beta = self.config.lr_beta;
        for step in 0..krr_steps {
            if step % BETA_RATE_REFRESH == 0 {
                lr_beta = self.beta_rate(&xk)?;
            }
            self.krr.train_step(&xk, &self.label, self.config.lr_alpha, lr_beta, &self.geometry)?;
        }
        let up = self.cnn_input(x)?;
        let rotated = if self.config.two_stream && stage1 > 0 {
            Some(self.cnn_input(&self.features_at(frame, bbox, self.config.rotation_deg)?)?)
        } else {
            None
        };
        // model before the previous step, with that step's starting loss
        let mut last: Option<(CnnSrkModel, f64)> = None;
        for _ in 0..stage1 {
            let before = self.cnn.clone();
            match cnn_stage1_step(&mut self.cnn, &up, rotated.as_ref(), &self.cnn_label, self.cnn_rate) {
                Ok(loss) => match last.take() {
                    Some((prev, l0)) if loss > CNN_BACKOFF_RATIO * l0 => {
                        self.cnn = prev;
                        self.cnn_rate *= 0.5;
                    }
                    _ => last = Some((before, loss)),
                },
                Err(Error::Numeric(_)) if last.is_some() => {
                    self.cnn = last.take().expect("checked").0;
                    self.cnn_rate *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        for _ in 0..stage2 {
            cnn_stage2_step(&mut self.cnn, &up, &self.cnn_label, self.config.lr_dt)?;
        }
        if !self.cnn.is_finite() {
            return Err(Error::Numeric("CNN parameters became non-finite".into()));
        }
        Ok(())
    }

    /// Heat maps for the search region `x` using the averaged KRR state.
    pub fn heatmaps(&self, x: &Tensor) -> Result<HeatMaps> {
        let k = &self.krr;
        let krr = krr_response(&self.krr_input(x), &k.samples_ema, &k.alpha_ema, &k.beta_ema, &self.geometry)?;
        let cnn = cnn_to_response(&cnn_forward(&self.cnn, &self.cnn_input(x)?)?, &self.geometry);
        let fused = fuse(&krr, &cnn, self.config.fusion_weight())?;
        if !fused.is_finite() {
            return Err(Error::Numeric("non-finite heat map".into()));
        }
        Ok(HeatMaps { krr, cnn, fused })
    }
}

/// Builds and trains both regressors on the first frame.
pub fn init_tracker(frame: &Tensor, bbox: BoundingBox, config: &TrackerConfig) -> Result<TrackerState> {
    config.validate()?;
    let (fh, fw, _) = frame.dims3()?;
    if !bbox.is_finite() || bbox.w < MIN_BOX_SIDE || bbox.h < MIN_BOX_SIDE {
        return Err(Error::Init(format!("box {bbox:?} is degenerate (sides must be ≥ {MIN_BOX_SIDE} px)")));
    }
    if !bbox.intersects_frame(fw, fh) {
        return Err(Error::Init(format!("box {bbox:?} lies outside the {fw}×{fh} frame")));
    }
    let grid = config.patch_size / config.cell;
    let side = crate::krrcps::perfect_sqrt(config.m).expect("validated");
    let target = KrrGeometry::round_down_to_grid((grid as f64 / config.search_factor).floor() as usize, side);
    let channels = config.features().channels();
    let geometry = KrrGeometry::new(grid, grid, channels, target, target, config.m)?;
    let sigma = config.label_sigma * ((target * target) as f64).sqrt();
    let (rh, rw) = (geometry.response_h(), geometry.response_w());
    let label = gaussian_map(&GaussianLabelConfig {
        center: ((rh - 1) as f64 / 2.0, (rw - 1) as f64 / 2.0),
        sigma,
        height: rh,
        width: rw,
    })?
    .into_vec();
    let n = config.cnn_size;
    let to_cnn = (n - 1) as f64 / (grid - 1) as f64;
    let cnn_label = gaussian_map(&GaussianLabelConfig {
        center: ((n - 1) as f64 / 2.0, (n - 1) as f64 / 2.0),
        sigma: sigma * to_cnn,
        height: n,
        width: n,
    })?;
    let cnn = CnnSrkModel::new(&CnnConfig {
        in_channels: channels,
        c1: config.c1,
        group_size: config.group_size,
        spatial_masks: config.variant.masked_cnn(),
        bernoulli_p: config.bernoulli_p,
        dt_bound: config.dt_bound,
        input_size: n,
        seed: config.seed,
        ..CnnConfig::default()
    })?;
    let scale = ScaleModel::new(config.s, config.a, config.sigma_s, config.lr_scale, grid * grid * channels)?;

    let x = region_features(config, frame, &bbox, 0.0)?;
    let krr_scale = match config.krr_feature_scale {
        Some(k) => k,
        None => auto_krr_scale(&x, &geometry, config.lr_alpha)?,
    };
    let samples = extract_dense_samples(&scaled(&x, krr_scale), &geometry)?;
    let mut krr = KrrModel::new(samples, &label, config.lambda1, config.lambda2, &geometry)?;
    krr.beta_frozen = !config.variant.learns_beta();
    krr.eta = config.eta_early;

    let mut state = TrackerState {
        bbox,
        config: config.clone(),
        geometry,
        krr,
        cnn,
        scale,
        frame_index: 1,
        krr_scale,
        cnn_rate: config.lr_cnn,
        frame_size: (fw, fh),
        label,
        cnn_label,
    };
    state.krr.eta = state.eta_for(1);
    state.train(frame, &bbox, &x, config.init_krr_steps, config.init_stage1_steps, config.init_stage2_steps)?;
    let k = &mut state.krr;
    k.alpha_ema.clone_from(&k.alpha);
    k.beta_ema.clone_from(&k.beta);
    k.samples_ema.clone_from(&k.samples);
    Ok(state)
}

/// Locates the target in `frame`, updates its extent, then updates every
/// model on the region at the new box.
pub fn track_frame(state: &mut TrackerState, frame: &Tensor) -> Result<FrameOutput> {
    let (fh, fw, _) = frame.dims3()?;
    if (fw, fh) != state.frame_size {
        return dim_err(format!("frame size {fw}×{fh} differs from {:?}", state.frame_size));
    }
    state.frame_index += 1;
    let prev = state.bbox;
    let grid = state.grid();
    let x = state.features_at(frame, &prev, 0.0)?;
    let heatmaps = state.heatmaps(&x)?;
    let score = heatmaps.fused.data()[heatmaps.fused.argmax()];
    let moved = locate(&heatmaps.fused, &prev, &grid)?;

    let xs = state.features_at(frame, &moved, 0.0)?;
    let (_, best) = scale_scores(&xs, &state.scale)?;
    let f = state.config.a.powi(best);
    let (cx, cy) = moved.center();
    let bbox = BoundingBox::from_center(cx, cy, moved.w * f, moved.h * f).clipped(fw, fh);

    let xu = if bbox == moved { xs } else { state.features_at(frame, &bbox, 0.0)? };
    let (k, s1, s2) = (state.config.frame_krr_steps, state.config.frame_stage1_steps, state.config.frame_stage2_steps);
    state.train(frame, &bbox, &xu, k, s1, s2)?;
    state.krr.eta = state.eta_for(state.frame_index);
    state.krr.ema_update()?;
    scale_train_step(&mut state.scale, &xu)?;
    if !state.krr.is_finite() {
        return Err(Error::Numeric("KRR state became non-finite".into()));
    }
    state.bbox = bbox;
    Ok(FrameOutput {
        bbox,
        score,
        scale_exponent: best,
        heatmaps,
    })
}

/// Runs a whole sequence from its first ground-truth box. The first entry
/// is the initialization box with score 0.
pub fn track_sequence(frames: &[Tensor], init: BoundingBox, config: &TrackerConfig) -> Result<Vec<FrameOutput>> {
    let Some(first) = frames.first() else {
        return dim_err("empty sequence");
    };
    let mut state = init_tracker(first, init, config)?;
    let x = state.features_at(first, &init, 0.0)?;
    let mut out = vec![FrameOutput {
        bbox: init,
        score: 0.0,
        scale_exponent: 0,
        heatmaps: state.heatmaps(&x)?,
    }];
    for frame in &frames[1..] {
        out.push(track_frame(&mut state, frame)?);
    }
    Ok(out)
}
