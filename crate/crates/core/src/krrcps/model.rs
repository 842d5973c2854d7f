use super::geometry::KrrGeometry;
use super::kernel::{closed_form_alpha, identity_beta, kernel_matrix};
use super::network::krr_gradients;
use super::samples::SampleMatrix;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Regressor state: live parameters `(α, β, D)` plus their moving averages
/// `(α̂, β̂, D̂)`, which are what detection uses.
#[derive(Clone, Debug, PartialEq)]
pub struct KrrModel {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub samples: SampleMatrix,
    pub alpha_ema: Vec<f64>,
    pub beta_ema: Vec<f64>,
    pub samples_ema: SampleMatrix,
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta: f64,
    /// When set, `β` (and `β̂`) are never touched.
    pub beta_frozen: bool,
}

impl KrrModel {
    /// Warm start: identity patch weights (plain linear kernel) and the
    /// closed-form `α` at those weights. Moving averages start equal to the
    /// live state.
    pub fn new(
        samples: SampleMatrix,
        y: &[f64],
        lambda1: f64,
        lambda2: f64,
        geo: &KrrGeometry,
    ) -> Result<Self> {
        if lambda1 < 0.0 || lambda2 < 0.0 {
            return Err(Error::Contract(format!(
                "ridge weights must be >= 0 (got {lambda1}, {lambda2})"
            )));
        }
        let beta = identity_beta(geo.patch_count());
        let k = kernel_matrix(&samples, &beta, geo)?;
        let alpha = closed_form_alpha(&k, y, lambda1)?;
        Ok(Self {
            alpha_ema: alpha.clone(),
            beta_ema: beta.clone(),
            samples_ema: samples.clone(),
            alpha,
            beta,
            samples,
            lambda1,
            lambda2,
            eta: 0.2,
            beta_frozen: false,
        })
    }

    /// One full-batch gradient step on `(α, β)` against the labels `y` for
    /// the search region `x`, whose dense samples must be `self.samples`.
    /// Returns the objective before the step.
    pub fn train_step(
        &mut self,
        x: &Tensor,
        y: &[f64],
        lr_alpha: f64,
        lr_beta: f64,
        geo: &KrrGeometry,
    ) -> Result<f64> {
        if !(lr_alpha >= 0.0 && lr_beta >= 0.0) {
            return Err(Error::Contract(format!(
                "learning rates must be >= 0 (got {lr_alpha}, {lr_beta})"
            )));
        }
        let g = krr_gradients(
            x,
            &self.samples,
            &self.alpha,
            &self.beta,
            y,
            self.lambda1,
            self.lambda2,
            geo,
        )?;
        if lr_alpha > 0.0 {
            for (a, ga) in self.alpha.iter_mut().zip(&g.alpha) {
                *a -= lr_alpha * ga;
            }
        }
        if lr_beta > 0.0 && !self.beta_frozen {
            for (b, gb) in self.beta.iter_mut().zip(&g.beta) {
                *b -= lr_beta * gb;
            }
        }
        if !self.is_finite() {
            return Err(Error::Numeric("KRR parameters became non-finite".into()));
        }
        Ok(g.objective)
    }

    /// `x̂ ← (1−η)x̂ + ηx` for `D`, `α` and (unless frozen) `β`.
    pub fn ema_update(&mut self) -> Result<()> {
        let eta = self.eta;
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Contract(format!("update rate must be in [0,1], got {eta}")));
        }
        if self.samples_ema.count() != self.samples.count()
            || self.samples_ema.dim() != self.samples.dim()
        {
            return Err(Error::Dimension("EMA sample matrix shape drifted".into()));
        }
        blend(self.samples_ema.as_mut_slice(), self.samples.as_slice(), eta);
        blend(&mut self.alpha_ema, &self.alpha, eta);
        if !self.beta_frozen {
            blend(&mut self.beta_ema, &self.beta, eta);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().chain(&self.beta).all(|v| v.is_finite()) && self.samples.is_finite()
    }
}

fn blend(ema: &mut [f64], current: &[f64], eta: f64) {
    if eta == 0.0 {
        return;
    }
    if eta == 1.0 {
        ema.copy_from_slice(current);
        return;
    }
    for (e, c) in ema.iter_mut().zip(current) {
        *e = (1.0 - eta) * *e + eta * c;
    }
}
