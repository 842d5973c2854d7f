//! Distance-transform pooling: a max pooling generalized with a learnable
//! per-axis quadratic displacement penalty,
//! `D_f(s) = max_t f(t) − ϖ_x δx² − θ_x δx − ϖ_y δy² − θ_y δy`, `δ = s − t`,
//! with `t` restricted to `|δ|∞ ≤ bound`. x is the column axis, y the row axis.

use crate::error::{dim_err, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtPoolParams {
    pub varpi_x: f64,
    pub varpi_y: f64,
    pub theta_x: f64,
    pub theta_y: f64,
    pub bound: usize,
}

impl DtPoolParams {
    pub fn new(varpi: f64, theta: f64, bound: usize) -> Self {
        Self {
            varpi_x: varpi,
            varpi_y: varpi,
            theta_x: theta,
            theta_y: theta,
            bound,
        }
    }

    #[inline]
    fn penalty_x(&self, delta: isize) -> f64 {
        let d = delta as f64;
        self.varpi_x * d * d + self.theta_x * d
    }

    #[inline]
    fn penalty_y(&self, delta: isize) -> f64 {
        let d = delta as f64;
        self.varpi_y * d * d + self.theta_y * d
    }

    pub(crate) fn clamp_curvature(&mut self) {
        self.varpi_x = self.varpi_x.max(0.0);
        self.varpi_y = self.varpi_y.max(0.0);
    }
}

/// Gradients with respect to the four penalty coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DtParamGrads {
    pub varpi_x: f64,
    pub varpi_y: f64,
    pub theta_x: f64,
    pub theta_y: f64,
}

/// Two separable 1-D passes. Returns the pooled map and, per output, the
/// flat index of the winning source. Ties resolve to the first source in
/// row-major scan order.
pub(crate) fn dt_forward_plane(f: &[f64], h: usize, w: usize, params: &DtPoolParams) -> (Vec<f64>, Vec<usize>) {
    let b = params.bound;
    // pass 1: along each row
    let mut g = vec![0.0; h * w];
    let mut arg_x = vec![0usize; h * w];
    for r in 0..h {
        let row = &f[r * w..(r + 1) * w];
        for sx in 0..w {
            let lo = sx.saturating_sub(b);
            let hi = (sx + b).min(w - 1);
            let mut best = f64::NEG_INFINITY;
            let mut best_t = lo;
            for (tx, &v) in row.iter().enumerate().take(hi + 1).skip(lo) {
                let cand = v - params.penalty_x(sx as isize - tx as isize);
                if cand > best {
                    best = cand;
                    best_t = tx;
                }
            }
            g[r * w + sx] = best;
            arg_x[r * w + sx] = best_t;
        }
    }
    // pass 2: along each column
    let mut out = vec![0.0; h * w];
    let mut arg = vec![0usize; h * w];
    for sx in 0..w {
        for sy in 0..h {
            let lo = sy.saturating_sub(b);
            let hi = (sy + b).min(h - 1);
            let mut best = f64::NEG_INFINITY;
            let mut best_t = lo;
            for ty in lo..=hi {
                let cand = g[ty * w + sx] - params.penalty_y(sy as isize - ty as isize);
                if cand > best {
                    best = cand;
                    best_t = ty;
                }
            }
            out[sy * w + sx] = best;
            arg[sy * w + sx] = best_t * w + arg_x[best_t * w + sx];
        }
    }
    (out, arg)
}

pub fn dt_pool(f: &Tensor, params: &DtPoolParams) -> Result<Tensor> {
    let (h, w) = f.dims2()?;
    if h == 0 || w == 0 {
        return dim_err("empty map");
    }
    let (out, _) = dt_forward_plane(f.data(), h, w, params);
    Tensor::from_vec(&[h, w], out)
}

/// The defining 2-D maximum, evaluated exhaustively in row-major source
/// order. Reference route for [`dt_pool`].
pub fn dt_pool_exhaustive(f: &Tensor, params: &DtPoolParams) -> Result<Tensor> {
    let (h, w) = f.dims2()?;
    let b = params.bound as isize;
    let mut out = Tensor::zeros(&[h, w]);
    for sy in 0..h as isize {
        for sx in 0..w as isize {
            let mut best = f64::NEG_INFINITY;
            for ty in 0..h as isize {
                for tx in 0..w as isize {
                    if (sy - ty).abs() > b || (sx - tx).abs() > b {
                        continue;
                    }
                    let v = f.at2(ty as usize, tx as usize) - params.penalty_x(sx - tx) - params.penalty_y(sy - ty);
                    if v > best {
                        best = v;
                    }
                }
            }
            out.data_mut()[sy as usize * w + sx as usize] = best;
        }
    }
    Ok(out)
}

pub(crate) fn dt_backward_plane(
    argmax: &[usize],
    w: usize,
    upstream: &[f64],
    grad_f: &mut [f64],
) -> DtParamGrads {
    let mut g = DtParamGrads::default();
    for (s, (&t, &u)) in argmax.iter().zip(upstream).enumerate() {
        if u == 0.0 {
            continue;
        }
        grad_f[t] += u;
        let dx = (s % w) as f64 - (t % w) as f64;
        let dy = (s / w) as f64 - (t / w) as f64;
        g.varpi_x -= u * dx * dx;
        g.theta_x -= u * dx;
        g.varpi_y -= u * dy * dy;
        g.theta_y -= u * dy;
    }
    g
}

/// Routes each upstream value to its forward argmax source and accumulates
/// the penalty-coefficient gradients at the winning offsets.
pub fn dt_pool_backward(f: &Tensor, params: &DtPoolParams, upstream: &Tensor) -> Result<(Tensor, DtParamGrads)> {
    let (h, w) = f.dims2()?;
    if upstream.shape() != f.shape() {
        return dim_err(format!("upstream {:?} vs input {:?}", upstream.shape(), f.shape()));
    }
    let (_, arg) = dt_forward_plane(f.data(), h, w, params);
    let mut grad_f = Tensor::zeros(&[h, w]);
    let g = dt_backward_plane(&arg, w, upstream.data(), grad_f.data_mut());
    Ok((grad_f, g))
}

/// Sums contiguous runs of `group_size` channels.
pub fn group_sum(x: &Tensor, group_size: usize) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    if group_size == 0 || c % group_size != 0 {
        return dim_err(format!("{c} channels not divisible into groups of {group_size}"));
    }
    let groups = c / group_size;
    let mut out = Tensor::zeros(&[h, w, groups]);
    for (pix, chunk) in x.data().chunks(c).enumerate() {
        for g in 0..groups {
            out.data_mut()[pix * groups + g] = chunk[g * group_size..(g + 1) * group_size].iter().sum();
        }
    }
    Ok(out)
}

/// Elementwise maximum.
pub fn maxout(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_with(b, |x, y| if y > x { y } else { x })
}

/// Routes `upstream` to the winning branch; ties go to `a`.
pub fn maxout_backward(a: &Tensor, b: &Tensor, upstream: &Tensor) -> Result<(Tensor, Tensor)> {
    a.ensure_same_shape(b)?;
    a.ensure_same_shape(upstream)?;
    let mut ga = Tensor::zeros(a.shape());
    let mut gb = Tensor::zeros(a.shape());
    for i in 0..a.len() {
        if b.data()[i] > a.data()[i] {
            gb.data_mut()[i] = upstream.data()[i];
        } else {
            ga.data_mut()[i] = upstream.data()[i];
        }
    }
    Ok((ga, gb))
}
