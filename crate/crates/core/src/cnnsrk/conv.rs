use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::masks::SpatialMask;
use super::planes::Planes;
use crate::error::{dim_err, Error, Result};
use crate::numerics::{dot, Tensor};

/// Same-padded convolution whose kernels are multiplied by fixed spatial
/// masks: `O_c = (F_c ⊙ W_c) ⋆ X + b_c`.
///
/// Filters are stored `[out][kh][kw][in_per_group]`. With `groups = g`, the
/// output channels are split into `g` equal groups, each reading only its
/// own slice of the input channels.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedConvLayer {
    pub kh: usize,
    pub kw: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
    pub filters: Vec<f64>,
    pub masks: Vec<SpatialMask>,
    pub bias: Vec<f64>,
}

/// Gradients of a [`MaskedConvLayer`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub filters: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Tensor>,
}

impl MaskedConvLayer {
    /// Zero-mean Gaussian weights, zero bias.
    pub fn new(
        (kh, kw): (usize, usize),
        in_channels: usize,
        out_channels: usize,
        groups: usize,
        masks: Vec<SpatialMask>,
        init_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Contract(format!("same padding needs odd kernels, got {kh}×{kw}")));
        }
        if groups == 0 || in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(Error::Contract(format!(
                "{groups} groups do not divide {in_channels} inputs / {out_channels} outputs"
            )));
        }
        if masks.len() != out_channels || masks.iter().any(|m| (m.kh, m.kw) != (kh, kw)) {
            return Err(Error::Contract("one kh×kw mask per output channel required".into()));
        }
        let n = out_channels * kh * kw * (in_channels / groups);
        let normal = Normal::new(0.0, init_std).map_err(|e| Error::Contract(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            kh,
            kw,
            in_channels,
            out_channels,
            groups,
            filters: (0..n).map(|_| normal.sample(&mut rng)).collect(),
            masks,
            bias: vec![0.0; out_channels],
        })
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    fn first_input(&self, oc: usize) -> usize {
        (oc / self.out_per_group()) * self.in_per_group()
    }

    #[inline]
    pub fn filter_index(&self, oc: usize, p: usize, q: usize, ic: usize) -> usize {
        ((oc * self.kh + p) * self.kw + q) * self.in_per_group() + ic
    }

    fn check_input(&self, c: usize) -> Result<()> {
        if c != self.in_channels {
            return dim_err(format!("layer expects {} channels, got {c}", self.in_channels));
        }
        Ok(())
    }

    pub(crate) fn forward_planes(&self, x: &Planes) -> Result<Planes> {
        self.check_input(x.c)?;
        let (h, w) = (x.h, x.w);
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let padded = x.padded(ph, pw);
        let w2 = padded.w;
        let mut out = Planes::zeros(self.out_channels, h, w);
        for oc in 0..self.out_channels {
            let base = self.first_input(oc);
            let dst = out.plane_mut(oc);
            dst.fill(self.bias[oc]);
            for p in 0..self.kh {
                for q in 0..self.kw {
                    if !self.masks[oc].is_active(p, q) {
                        continue;
                    }
                    for ic in 0..self.in_per_group() {
                        let wt = self.filters[self.filter_index(oc, p, q, ic)];
                        let src = padded.plane(base + ic);
                        for r in 0..h {
                            let s = &src[(r + p) * w2 + q..(r + p) * w2 + q + w];
                            for (o, v) in dst[r * w..(r + 1) * w].iter_mut().zip(s) {
                                *o += wt * v;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Filter and bias gradients, plus the input gradient when requested.
    /// Masked-out filter taps always receive exactly zero.
    pub(crate) fn backward_planes(
        &self,
        x: &Planes,
        upstream: &Planes,
        want_input: bool,
    ) -> Result<(Vec<f64>, Vec<f64>, Option<Planes>)> {
        self.check_input(x.c)?;
        if (upstream.c, upstream.h, upstream.w) != (self.out_channels, x.h, x.w) {
            return dim_err("upstream gradient does not match layer output");
        }
        let (h, w) = (x.h, x.w);
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let padded = x.padded(ph, pw);
        let w2 = padded.w;
        let mut grad_f = vec![0.0; self.filters.len()];
        let mut grad_b = vec![0.0; self.out_channels];
        let mut grad_pad = want_input.then(|| Planes::zeros(x.c, padded.h, padded.w));
        for oc in 0..self.out_channels {
            let up = upstream.plane(oc);
            grad_b[oc] = up.iter().sum();
            let base = self.first_input(oc);
            for p in 0..self.kh {
                for q in 0..self.kw {
                    if !self.masks[oc].is_active(p, q) {
                        continue;
                    }
                    for ic in 0..self.in_per_group() {
                        let fi = self.filter_index(oc, p, q, ic);
                        let src = padded.plane(base + ic);
                        let mut acc = 0.0;
                        for r in 0..h {
                            acc += dot(&up[r * w..(r + 1) * w], &src[(r + p) * w2 + q..(r + p) * w2 + q + w]);
                        }
                        grad_f[fi] = acc;
                        if let Some(gp) = grad_pad.as_mut() {
                            let wt = self.filters[fi];
                            let dst = gp.plane_mut(base + ic);
                            for r in 0..h {
                                let row = &mut dst[(r + p) * w2 + q..(r + p) * w2 + q + w];
                                for (g, u) in row.iter_mut().zip(&up[r * w..(r + 1) * w]) {
                                    *g += wt * u;
                                }
                            }
                        }
                    }
                }
            }
        }
        let grad_in = grad_pad.map(|gp| {
            let mut out = Planes::zeros(x.c, h, w);
            for ch in 0..x.c {
                let src = gp.plane(ch);
                let dst = out.plane_mut(ch);
                for r in 0..h {
                    dst[r * w..(r + 1) * w].copy_from_slice(&src[(r + ph) * w2 + pw..(r + ph) * w2 + pw + w]);
                }
            }
            out
        });
        Ok((grad_f, grad_b, grad_in))
    }

    /// Applies `filters −= lr·grad`, `bias −= lr·grad` leaving masked taps
    /// untouched.
    pub(crate) fn apply_step(&mut self, grad_f: &[f64], grad_b: &[f64], lr: f64) {
        for oc in 0..self.out_channels {
            for p in 0..self.kh {
                for q in 0..self.kw {
                    if !self.masks[oc].is_active(p, q) {
                        continue;
                    }
                    for ic in 0..self.in_per_group() {
                        let fi = self.filter_index(oc, p, q, ic);
                        self.filters[fi] -= lr * grad_f[fi];
                    }
                }
            }
            self.bias[oc] -= lr * grad_b[oc];
        }
    }
}

pub fn masked_conv_forward(layer: &MaskedConvLayer, x: &Tensor) -> Result<Tensor> {
    Ok(layer.forward_planes(&Planes::from_tensor(x)?)?.to_tensor())
}

pub fn masked_conv_backward(layer: &MaskedConvLayer, x: &Tensor, upstream: &Tensor) -> Result<ConvGrads> {
    let (gf, gb, gi) = layer.backward_planes(&Planes::from_tensor(x)?, &Planes::from_tensor(upstream)?, true)?;
    Ok(ConvGrads {
        filters: gf,
        bias: gb,
        input: gi.map(|p| p.to_tensor()),
    })
}
