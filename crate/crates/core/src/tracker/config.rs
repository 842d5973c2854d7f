use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureKind};
use crate::krrcps::perfect_sqrt;

/// Which of the two spatial-awareness additions are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Plain linear kernel (patch weights frozen at identity), unmasked CNN.
    Baseline,
    /// Learnable patch weights, unmasked CNN.
    Cps,
    /// Frozen patch weights, Bernoulli-masked CNN.
    Srk,
    /// Both.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Cps, Variant::Srk, Variant::Full];

    pub fn learns_beta(self) -> bool {
        matches!(self, Variant::Cps | Variant::Full)
    }

    pub fn masked_cnn(self) -> bool {
        matches!(self, Variant::Srk | Variant::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Cps => "cps",
            Variant::Srk => "srk",
            Variant::Full => "full",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (expected baseline, cps, srk or full)")))
    }
}

/// Every tunable of a tracking run. Keys are flat; unknown keys are
/// rejected when parsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta_early: f64,
    pub eta_late: f64,
    /// Last frame (1-based) that still uses `eta_early`.
    pub eta_switch_frame: usize,
    pub lr_alpha: f64,
    pub lr_beta: f64,
    pub lr_cnn: f64,
    /// Rate for the distance-transform parameters in the second CNN stage.
    pub lr_dt: f64,
    pub lr_scale: f64,
    /// Multiplier applied to the features fed to the kernel regressor;
    /// `null` picks it on the first frame so that a plain `α` gradient step
    /// contracts the top kernel eigendirection by one half.
    pub krr_feature_scale: Option<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    /// Weight of the CNN map in the fused heat map; `null` uses `1/C1`,
    /// since the CNN map sums `C1` channels each regressed to the label.
    pub gamma: Option<f64>,
    #[serde(rename = "S")]
    pub s: usize,
    pub a: f64,
    pub sigma_s: f64,
    #[serde(rename = "C1")]
    pub c1: usize,
    pub group_size: usize,
    pub bernoulli_p: f64,
    pub dt_bound: usize,
    pub rotation_deg: f64,
    pub two_stream: bool,
    pub search_factor: f64,
    /// Side in pixels of the square resampled search region.
    pub patch_size: usize,
    pub cnn_size: usize,
    /// Label bandwidth as a fraction of `√(h·w)` in grid cells.
    pub label_sigma: f64,
    pub init_krr_steps: usize,
    pub init_stage1_steps: usize,
    pub init_stage2_steps: usize,
    pub frame_krr_steps: usize,
    pub frame_stage1_steps: usize,
    pub frame_stage2_steps: usize,
    pub feature_kind: FeatureKind,
    pub cell: usize,
    pub orientations: usize,
    pub normalize: bool,
    pub seed: u64,
    pub variant: Variant,
    /// Report wall-clock time in `metrics.json` (makes it run-dependent).
    pub record_runtime: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.001,
            lambda2: 0.001,
            eta_early: 0.2,
            eta_late: 0.001,
            eta_switch_frame: 10,
            lr_alpha: 8e-9,
            lr_beta: 1.6,
            lr_cnn: 2e-4,
            lr_dt: 8e-7,
            lr_scale: 1e-5,
            krr_feature_scale: None,
            m: 9,
            gamma: None,
            s: 7,
            a: 1.02,
            sigma_s: 1.0,
            c1: 24,
            group_size: 4,
            bernoulli_p: 0.3,
            dt_bound: 4,
            rotation_deg: 180.0,
            two_stream: true,
            search_factor: 3.0,
            patch_size: 72,
            cnn_size: 46,
            label_sigma: 0.1,
            init_krr_steps: 300,
            init_stage1_steps: 200,
            init_stage2_steps: 100,
            frame_krr_steps: 2,
            frame_stage1_steps: 1,
            frame_stage2_steps: 1,
            feature_kind: FeatureKind::Concat,
            cell: 2,
            orientations: 8,
            normalize: true,
            seed: 0,
            variant: Variant::Full,
            record_runtime: false,
        }
    }
}

fn config_err(key: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("`{key}` {msg}"))
}

impl TrackerConfig {
    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            kind: self.feature_kind,
            cell: self.cell,
            orientations: self.orientations,
            normalize: self.normalize,
        }
    }

    pub fn fusion_weight(&self) -> f64 {
        self.gamma.unwrap_or(1.0 / self.c1.max(1) as f64)
    }

    pub fn for_variant(&self, variant: Variant) -> Self {
        Self { variant, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lr_alpha", self.lr_alpha),
            ("lr_beta", self.lr_beta),
            ("lr_cnn", self.lr_cnn),
            ("lr_dt", self.lr_dt),
            ("lr_scale", self.lr_scale),
            ("gamma", self.gamma.unwrap_or(0.0)),
        ];
        for (key, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(key, format!("must be a finite value ≥ 0, got {v}")));
            }
        }
        for (key, v) in [("eta_early", self.eta_early), ("eta_late", self.eta_late), ("bernoulli_p", self.bernoulli_p)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(config_err(key, format!("must lie in [0,1], got {v}")));
            }
        }
        if perfect_sqrt(self.m).is_none() || self.m == 0 {
            return Err(config_err("M", format!("must be a nonzero perfect square, got {}", self.m)));
        }
        if self.s % 2 == 0 {
            return Err(config_err("S", format!("must be odd, got {}", self.s)));
        }
        if !(self.a > 1.0 && self.a.is_finite()) {
            return Err(config_err("a", format!("must exceed 1, got {}", self.a)));
        }
        if !(self.sigma_s > 0.0) {
            return Err(config_err("sigma_s", "must be > 0"));
        }
        if self.c1 == 0 || self.group_size == 0 || self.c1 % self.group_size != 0 {
            return Err(config_err("C1", format!("must be a positive multiple of group_size={}", self.group_size)));
        }
        if !(self.search_factor >= 1.0 && self.search_factor.is_finite()) {
            return Err(config_err("search_factor", format!("must be ≥ 1, got {}", self.search_factor)));
        }
        if !(self.label_sigma > 0.0) {
            return Err(config_err("label_sigma", "must be > 0"));
        }
        if let Some(k) = self.krr_feature_scale {
            if !(k > 0.0 && k.is_finite()) {
                return Err(config_err("krr_feature_scale", format!("must be > 0, got {k}")));
            }
        }
        if !self.rotation_deg.is_finite() {
            return Err(config_err("rotation_deg", "must be finite"));
        }
        if self.cnn_size < 5 {
            return Err(config_err("cnn_size", "must be at least 5"));
        }
        self.features().validate()?;
        let grid = self.patch_size / self.cell.max(1);
        let target = ((grid as f64 / self.search_factor).floor() as usize) / perfect_sqrt(self.m).unwrap_or(1)
            * perfect_sqrt(self.m).unwrap_or(1);
        if target == 0 {
            return Err(config_err(
                "patch_size",
                format!("{} px leaves no room for {} patches per target", self.patch_size, self.m),
            ));
        }
        Ok(())
    }
}
