use serde::{Deserialize, Serialize};

use super::conv::MaskedConvLayer;
use super::dtpool::{dt_backward_plane, dt_forward_plane, DtParamGrads, DtPoolParams};
use super::masks::{make_masks, SpatialMask};
use super::planes::Planes;
use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;

/// Architecture and initialization of a [`CnnSrkModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub in_channels: usize,
    pub c1: usize,
    pub group_size: usize,
    pub kernel1: usize,
    pub kernel2: usize,
    /// Bernoulli masks on the first layer; all-ones masks when false.
    pub spatial_masks: bool,
    pub bernoulli_p: f64,
    pub dt_bound: usize,
    pub varpi_init: f64,
    pub theta_init: f64,
    pub init_std: f64,
    pub input_size: usize,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            in_channels: 9,
            c1: 24,
            group_size: 4,
            kernel1: 5,
            kernel2: 3,
            spatial_masks: true,
            bernoulli_p: 0.3,
            dt_bound: 4,
            varpi_init: 0.01,
            theta_init: 0.0,
            init_std: 0.01,
            input_size: 46,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnSrkModel {
    pub conv1: MaskedConvLayer,
    /// Depthwise: one 3×3 kernel per channel.
    pub conv2: MaskedConvLayer,
    pub group_size: usize,
    pub dt: Vec<DtPoolParams>,
    pub input_size: usize,
}

/// Intermediate activations of one forward pass.
struct Trace {
    x: Planes,
    pre1: Planes,
    act1: Planes,
    out2: Planes,
}

impl CnnSrkModel {
    pub fn new(cfg: &CnnConfig) -> Result<Self> {
        if cfg.c1 == 0 || cfg.group_size == 0 || cfg.c1 % cfg.group_size != 0 {
            return Err(Error::Config(format!(
                "C1={} not divisible by group_size={}",
                cfg.c1, cfg.group_size
            )));
        }
        if !(0.0..=1.0).contains(&cfg.bernoulli_p) {
            return Err(Error::Config(format!("bernoulli_p={} outside [0,1]", cfg.bernoulli_p)));
        }
        let (k1, k2) = (cfg.kernel1, cfg.kernel2);
        let masks1 = if cfg.spatial_masks {
            make_masks(cfg.c1, k1, k1, cfg.bernoulli_p, cfg.seed)?
        } else {
            vec![SpatialMask::ones(k1, k1); cfg.c1]
        };
        let masks2 = vec![SpatialMask::ones(k2, k2); cfg.c1];
        let conv1 = MaskedConvLayer::new((k1, k1), cfg.in_channels, cfg.c1, 1, masks1, cfg.init_std, cfg.seed ^ 0x5eed_0001)?;
        let conv2 = MaskedConvLayer::new((k2, k2), cfg.c1, cfg.c1, cfg.c1, masks2, cfg.init_std, cfg.seed ^ 0x5eed_0002)?;
        let dt = vec![DtPoolParams::new(cfg.varpi_init, cfg.theta_init, cfg.dt_bound); cfg.c1 / cfg.group_size];
        Ok(Self {
            conv1,
            conv2,
            group_size: cfg.group_size,
            dt,
            input_size: cfg.input_size,
        })
    }

    pub fn groups(&self) -> usize {
        self.conv2.out_channels / self.group_size
    }

    pub fn is_finite(&self) -> bool {
        let layer_ok = |l: &MaskedConvLayer| l.filters.iter().chain(&l.bias).all(|v| v.is_finite());
        layer_ok(&self.conv1)
            && layer_ok(&self.conv2)
            && self
                .dt
                .iter()
                .all(|p| [p.varpi_x, p.varpi_y, p.theta_x, p.theta_y].iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (h, w, c) = x.dims3()?;
        if (h, w) != (self.input_size, self.input_size) || c != self.conv1.in_channels {
            return dim_err(format!(
                "CNN expects {0}×{0}×{1}, got {h}×{w}×{c}",
                self.input_size, self.conv1.in_channels
            ));
        }
        Ok(())
    }

    fn trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let x = Planes::from_tensor(x)?;
        let pre1 = self.conv1.forward_planes(&x)?;
        let mut act1 = pre1.clone();
        act1.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let out2 = self.conv2.forward_planes(&act1)?;
        Ok(Trace { x, pre1, act1, out2 })
    }

    fn group_planes(&self, out2: &Planes) -> Planes {
        let n = out2.h * out2.w;
        let mut g = Planes::zeros(self.groups(), out2.h, out2.w);
        for ch in 0..out2.c {
            let dst = &mut g.data[(ch / self.group_size) * n..(ch / self.group_size + 1) * n];
            for (d, s) in dst.iter_mut().zip(out2.plane(ch)) {
                *d += s;
            }
        }
        g
    }

    /// Fused heat map plus, per group, the pooling argmax.
    fn pooled(&self, groups: &Planes) -> (Vec<f64>, Vec<Vec<usize>>) {
        let (h, w) = (groups.h, groups.w);
        let mut heat = vec![0.0; h * w];
        let mut args = Vec::with_capacity(groups.c);
        for (g, params) in self.dt.iter().enumerate() {
            let (out, arg) = dt_forward_plane(groups.plane(g), h, w, params);
            for (acc, v) in heat.iter_mut().zip(&out) {
                *acc += v;
            }
            args.push(arg);
        }
        (heat, args)
    }

    /// Output of the second convolution, `H×W×C₁`.
    pub fn conv_response(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.trace(x)?.out2.to_tensor())
    }

    /// Backpropagates `d loss / d out2` through both convolutions.
    fn conv_backward(&self, t: &Trace, up2: &Planes) -> Result<ConvParamGrads> {
        let (f2, b2, g_act) = self.conv2.backward_planes(&t.act1, up2, true)?;
        let mut g_pre = g_act.expect("input gradient requested");
        for (g, &p) in g_pre.data.iter_mut().zip(&t.pre1.data) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
        let (f1, b1, _) = self.conv1.backward_planes(&t.x, &g_pre, false)?;
        Ok(ConvParamGrads { conv1_filters: f1, conv1_bias: b1, conv2_filters: f2, conv2_bias: b2 })
    }
}

/// Gradients of the stage-1 loss with respect to the convolution parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParamGrads {
    pub conv1_filters: Vec<f64>,
    pub conv1_bias: Vec<f64>,
    pub conv2_filters: Vec<f64>,
    pub conv2_bias: Vec<f64>,
}

impl ConvParamGrads {
    fn add(&mut self, o: &ConvParamGrads) {
        let pairs = [
            (&mut self.conv1_filters, &o.conv1_filters),
            (&mut self.conv1_bias, &o.conv1_bias),
            (&mut self.conv2_filters, &o.conv2_filters),
            (&mut self.conv2_bias, &o.conv2_bias),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn check_target(target: &Tensor, size: usize) -> Result<()> {
    if target.dims2()? != (size, size) {
        return dim_err(format!("target {:?} vs {size}×{size} heat map", target.shape()));
    }
    Ok(())
}

fn finite_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numeric(format!("CNN loss is {loss}")))
    }
}

/// conv1 → ReLU → depthwise conv2 → group sum → per-group DT pooling → sum.
pub fn cnn_forward(model: &CnnSrkModel, x: &Tensor) -> Result<Tensor> {
    let t = model.trace(x)?;
    let (heat, _) = model.pooled(&model.group_planes(&t.out2));
    Tensor::from_vec(&[t.x.h, t.x.w], heat)
}

/// Stage-1 loss `Σ_c ‖max(O_c(upright), O_c(rotated)) − y‖²` and its
/// convolution gradients. Without a rotated input the max-out is skipped.
pub fn stage1_gradients(
    model: &CnnSrkModel,
    upright: &Tensor,
    rotated: Option<&Tensor>,
    target: &Tensor,
) -> Result<(f64, ConvParamGrads)> {
    check_target(target, model.input_size)?;
    let tu = model.trace(upright)?;
    let tr = rotated.map(|r| model.trace(r)).transpose()?;
    let n = tu.out2.h * tu.out2.w;
    let mut up_u = Planes::zeros(tu.out2.c, tu.out2.h, tu.out2.w);
    let mut up_r = tr.as_ref().map(|_| up_u.clone());
    let mut loss = 0.0;
    for i in 0..tu.out2.data.len() {
        let y = target.data()[i % n];
        let a = tu.out2.data[i];
        let (m, rot_wins) = match &tr {
            Some(t) if t.out2.data[i] > a => (t.out2.data[i], true),
            _ => (a, false),
        };
        let e = m - y;
        loss += e * e;
        if rot_wins {
            up_r.as_mut().expect("rotated branch").data[i] = 2.0 * e;
        } else {
            up_u.data[i] = 2.0 * e;
        }
    }
    let loss = finite_loss(loss)?;
    let mut grads = model.conv_backward(&tu, &up_u)?;
    if let (Some(t), Some(up)) = (&tr, &up_r) {
        grads.add(&model.conv_backward(t, up)?);
    }
    Ok((loss, grads))
}

/// One SGD step on the convolution layers; DT parameters are not touched.
/// Returns the loss before the step.
pub fn cnn_stage1_step(
    model: &mut CnnSrkModel,
    upright: &Tensor,
    rotated: Option<&Tensor>,
    target: &Tensor,
    lr: f64,
) -> Result<f64> {
    let (loss, g) = stage1_gradients(model, upright, rotated, target)?;
    model.conv1.apply_step(&g.conv1_filters, &g.conv1_bias, lr);
    model.conv2.apply_step(&g.conv2_filters, &g.conv2_bias, lr);
    Ok(loss)
}

/// Stage-2 loss `‖heat − y‖²` and its gradients for every group's DT
/// parameters.
pub fn stage2_gradients(model: &CnnSrkModel, x: &Tensor, target: &Tensor) -> Result<(f64, Vec<DtParamGrads>)> {
    check_target(target, model.input_size)?;
    let t = model.trace(x)?;
    let groups = model.group_planes(&t.out2);
    let (heat, args) = model.pooled(&groups);
    let up: Vec<f64> = heat.iter().zip(target.data()).map(|(h, y)| 2.0 * (h - y)).collect();
    let loss = finite_loss(heat.iter().zip(target.data()).map(|(h, y)| (h - y) * (h - y)).sum())?;
    let mut scratch = vec![0.0; heat.len()];
    let grads = args.iter().map(|arg| dt_backward_plane(arg, groups.w, &up, &mut scratch)).collect();
    Ok((loss, grads))
}

/// One SGD step on the DT parameters with `ϖ` clamped at zero afterwards;
/// convolution weights are not touched. Returns the loss before the step.
pub fn cnn_stage2_step(model: &mut CnnSrkModel, x: &Tensor, target: &Tensor, lr: f64) -> Result<f64> {
    let (loss, grads) = stage2_gradients(model, x, target)?;
    for (p, g) in model.dt.iter_mut().zip(&grads) {
        p.varpi_x -= lr * g.varpi_x;
        p.varpi_y -= lr * g.varpi_y;
        p.theta_x -= lr * g.theta_x;
        p.theta_y -= lr * g.theta_y;
        p.clamp_curvature();
    }
    Ok(loss)
}
