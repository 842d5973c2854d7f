//! The kernel regression evaluated as a three-stage network.
//!
//! Stage A collapses the training samples into `z = D·α` and splits it into
//! `M` patch kernels `v_n`. Stage B correlates the patch-`m` crop of the
//! input with every `v_n`. Stage C mixes the `M²` maps with `β`. The result
//! at window `i` equals `Σ_j α_j k(x_i, x_j)` while costing `O(dN)`.

use super::geometry::KrrGeometry;
use super::kernel::check_beta;
use super::samples::SampleMatrix;
use crate::error::{dim_err, Error, Result};
use crate::numerics::{axpy, conv2d_valid, dot, Tensor};

/// Intermediate values of one network evaluation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `M` patch kernels, each `ph×pw×C`.
    pub v: Vec<Tensor>,
    /// `M²` correlation maps, index `m·M + n`.
    pub b: Vec<Tensor>,
    /// Response map `(H−h+1)×(W−w+1)`.
    pub r: Tensor,
}

fn check_model(x: &Tensor, d: &SampleMatrix, alpha: &[f64], beta: &[f64], geo: &KrrGeometry) -> Result<()> {
    geo.validate()?;
    geo.check_input(x)?;
    check_beta(beta, geo)?;
    if d.dim() != geo.sample_dim() {
        return Err(Error::Geometry(format!(
            "sample dimension {} does not match geometry d={}",
            d.dim(),
            geo.sample_dim()
        )));
    }
    if alpha.len() != d.count() {
        return dim_err(format!("alpha has {} entries for {} samples", alpha.len(), d.count()));
    }
    Ok(())
}

fn patch_kernels(z: &[f64], geo: &KrrGeometry) -> Vec<Vec<f64>> {
    geo.split_patches(z)
}

/// Sub-map of `x` whose valid correlation with a patch kernel lines up with
/// patch `m` of every dense window.
fn crop_for_patch(x: &Tensor, m: usize, geo: &KrrGeometry) -> Tensor {
    let (r0, c0) = geo.patch_origin(m);
    let ch = geo.height - geo.target_h + geo.patch_h();
    let cw = geo.width - geo.target_w + geo.patch_w();
    let c = geo.channels;
    let mut data = Vec::with_capacity(ch * cw * c);
    for r in 0..ch {
        let start = ((r0 + r) * geo.width + c0) * c;
        data.extend_from_slice(&x.data()[start..start + cw * c]);
    }
    Tensor::from_vec(&[ch, cw, c], data).expect("crop shape")
}

/// Full network forward, keeping every intermediate map.
pub fn krr_forward(
    x: &Tensor,
    d: &SampleMatrix,
    alpha: &[f64],
    beta: &[f64],
    geo: &KrrGeometry,
) -> Result<ForwardTrace> {
    check_model(x, d, alpha, beta, geo)?;
    let m_count = geo.patch_count();
    let z = d.combine(alpha)?;
    let v: Vec<Tensor> = patch_kernels(&z, geo)
        .into_iter()
        .map(|p| Tensor::from_vec(&[geo.patch_h(), geo.patch_w(), geo.channels], p))
        .collect::<Result<_>>()?;
    let mut b = Vec::with_capacity(m_count * m_count);
    for m in 0..m_count {
        let crop = crop_for_patch(x, m, geo);
        for vn in &v {
            b.push(conv2d_valid(&crop, vn)?);
        }
    }
    let mut r = Tensor::zeros(&[geo.response_h(), geo.response_w()]);
    for (bmn, &w) in b.iter().zip(beta) {
        axpy(w, bmn.data(), r.data_mut());
    }
    Ok(ForwardTrace { v, b, r })
}

/// Accumulates the valid correlation of the `kh×kw×C` kernel with `x`
/// starting at `origin` into the `oh×ow` buffer `out`.
#[allow(clippy::too_many_arguments)]
fn correlate_region(
    x: &Tensor,
    origin: (usize, usize),
    kernel: &[f64],
    (kh, kw): (usize, usize),
    (oh, ow): (usize, usize),
    out: &mut [f64],
) {
    let (_, w, c) = x.dims3().expect("checked");
    let xs = x.data();
    let span = kw * c;
    for r in 0..oh {
        let orow = &mut out[r * ow..(r + 1) * ow];
        for p in 0..kh {
            let krow = &kernel[p * span..(p + 1) * span];
            let base = ((origin.0 + r + p) * w + origin.1) * c;
            for (col, o) in orow.iter_mut().enumerate() {
                let s = base + col * c;
                *o += dot(&xs[s..s + span], krow);
            }
        }
    }
}

/// Adjoint of [`correlate_region`]: `Σ_{a,b} weights[a,b] · x[origin+(a,b) + ·]`
/// over a `kh×kw×C` window.
fn gather_region(
    x: &Tensor,
    origin: (usize, usize),
    weights: &[f64],
    (kh, kw): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<f64> {
    let (_, w, c) = x.dims3().expect("checked");
    let xs = x.data();
    let span = kw * c;
    let mut acc = vec![0.0; kh * span];
    for a in 0..oh {
        for b in 0..ow {
            let e = weights[a * ow + b];
            if e == 0.0 {
                continue;
            }
            for p in 0..kh {
                let s = ((origin.0 + a + p) * w + origin.1 + b) * c;
                axpy(e, &xs[s..s + span], &mut acc[p * span..(p + 1) * span]);
            }
        }
    }
    acc
}

/// Mixed kernels `w_m = Σ_n β[m,n] v_n` (with `transpose`, `Σ_n β[n,m] v_n`).
fn mix(v: &[Vec<f64>], beta: &[f64], transpose: bool) -> Vec<Vec<f64>> {
    let m_count = v.len();
    (0..m_count)
        .map(|m| {
            let mut acc = vec![0.0; v[0].len()];
            for (n, vn) in v.iter().enumerate() {
                let w = if transpose {
                    beta[n * m_count + m]
                } else {
                    beta[m * m_count + n]
                };
                if w != 0.0 {
                    axpy(w, vn, &mut acc);
                }
            }
            acc
        })
        .collect()
}

/// Response map only. Stage C is folded into the stage-B kernels, so this
/// runs `M` correlations instead of `M²`; it is the training-time path.
pub fn krr_response(
    x: &Tensor,
    d: &SampleMatrix,
    alpha: &[f64],
    beta: &[f64],
    geo: &KrrGeometry,
) -> Result<Tensor> {
    check_model(x, d, alpha, beta, geo)?;
    let v = patch_kernels(&d.combine(alpha)?, geo);
    Ok(response_from_kernels(x, &v, beta, geo))
}

fn response_from_kernels(x: &Tensor, v: &[Vec<f64>], beta: &[f64], geo: &KrrGeometry) -> Tensor {
    let out_hw = (geo.response_h(), geo.response_w());
    let mut r = vec![0.0; out_hw.0 * out_hw.1];
    for (m, wm) in mix(v, beta, false).iter().enumerate() {
        correlate_region(x, geo.patch_origin(m), wm, (geo.patch_h(), geo.patch_w()), out_hw, &mut r);
    }
    Tensor::from_vec(&[out_hw.0, out_hw.1], r).expect("response shape")
}

/// Objective evaluated through the network:
/// `‖r − y‖² + λ₁ Σ β[m,n]⟨v_m, v_n⟩ + λ₂‖β‖²`. Equals the kernel-matrix
/// form when `D` holds the dense samples of `x`.
#[allow(clippy::too_many_arguments)]
pub fn objective_network(
    x: &Tensor,
    d: &SampleMatrix,
    alpha: &[f64],
    beta: &[f64],
    y: &[f64],
    lambda1: f64,
    lambda2: f64,
    geo: &KrrGeometry,
) -> Result<f64> {
    check_model(x, d, alpha, beta, geo)?;
    check_labels(y, geo)?;
    let v = patch_kernels(&d.combine(alpha)?, geo);
    let r = response_from_kernels(x, &v, beta, geo);
    let data: f64 = r.data().iter().zip(y).map(|(ri, yi)| (ri - yi).powi(2)).sum();
    Ok(data + lambda1 * quad_form(&v, beta) + lambda2 * beta.iter().map(|b| b * b).sum::<f64>())
}

fn check_labels(y: &[f64], geo: &KrrGeometry) -> Result<()> {
    if y.len() != geo.sample_count() {
        return dim_err(format!("{} labels for {} samples", y.len(), geo.sample_count()));
    }
    Ok(())
}

/// `αᵀKα = Σ β[m,n] ⟨v_m, v_n⟩`
fn quad_form(v: &[Vec<f64>], beta: &[f64]) -> f64 {
    let m_count = v.len();
    let mut s = 0.0;
    for m in 0..m_count {
        for n in 0..m_count {
            let w = beta[m * m_count + n];
            if w != 0.0 {
                s += w * dot(&v[m], &v[n]);
            }
        }
    }
    s
}

/// Analytic gradients of the objective with respect to `α` and `β`.
#[derive(Clone, Debug)]
pub struct KrrGradients {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub objective: f64,
}

/// Backpropagation through the three stages. The regularizer `λ₁αᵀKα` is
/// differentiated through both `α` and `β`.
#[allow(clippy::too_many_arguments)]
pub fn krr_gradients(
    x: &Tensor,
    d: &SampleMatrix,
    alpha: &[f64],
    beta: &[f64],
    y: &[f64],
    lambda1: f64,
    lambda2: f64,
    geo: &KrrGeometry,
) -> Result<KrrGradients> {
    check_model(x, d, alpha, beta, geo)?;
    check_labels(y, geo)?;
    let m_count = geo.patch_count();
    let out_hw = (geo.response_h(), geo.response_w());
    let khw = (geo.patch_h(), geo.patch_w());

    let v = patch_kernels(&d.combine(alpha)?, geo);
    let r = response_from_kernels(x, &v, beta, geo);
    let e: Vec<f64> = r.data().iter().zip(y).map(|(ri, yi)| ri - yi).collect();

    // u_m = Σ_i e_i · (patch m of window i)
    let u: Vec<Vec<f64>> = (0..m_count)
        .map(|m| gather_region(x, geo.patch_origin(m), &e, khw, out_hw))
        .collect();

    let mut grad_beta = vec![0.0; m_count * m_count];
    for m in 0..m_count {
        for n in 0..m_count {
            let idx = m * m_count + n;
            grad_beta[idx] = 2.0 * dot(&u[m], &v[n])
                + lambda1 * dot(&v[m], &v[n])
                + 2.0 * lambda2 * beta[idx];
        }
    }

    // ∂/∂α = Dᵀ q with patch k of q = 2 Σ_m β[m,k] u_m + λ₁ (Σ_n β[k,n] v_n + Σ_m β[m,k] v_m)
    let ut = mix(&u, beta, true);
    let vb = mix(&v, beta, false);
    let vt = mix(&v, beta, true);
    let q_patches: Vec<Vec<f64>> = (0..m_count)
        .map(|k| {
            ut[k]
                .iter()
                .zip(&vb[k])
                .zip(&vt[k])
                .map(|((a, b), c)| 2.0 * a + lambda1 * (b + c))
                .collect()
        })
        .collect();
    let grad_alpha = d.project(&geo.scatter_patches(&q_patches))?;

    let objective = e.iter().map(|v| v * v).sum::<f64>()
        + lambda1 * quad_form(&v, beta)
        + lambda2 * beta.iter().map(|b| b * b).sum::<f64>();

    if !objective.is_finite()
        || grad_alpha.iter().chain(&grad_beta).any(|g| !g.is_finite())
    {
        return Err(Error::Numeric("non-finite KRR gradient".into()));
    }
    Ok(KrrGradients {
        alpha: grad_alpha,
        beta: grad_beta,
        objective,
    })
}

/// Largest eigenvalue of `∂²J/∂β²`, which does not depend on `β`: `J` is
/// quadratic in `β` with Hessian `2BᵀB + 2λ₂I`, `B` holding the flattened
/// correlation maps `b_{mn}` as columns.
pub fn beta_curvature(
    x: &Tensor,
    d: &SampleMatrix,
    alpha: &[f64],
    lambda2: f64,
    geo: &KrrGeometry,
) -> Result<f64> {
    let beta = super::kernel::identity_beta(geo.patch_count());
    let b = krr_forward(x, d, alpha, &beta, geo)?.b;
    let k = b.len();
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let g = 2.0 * dot(b[i].data(), b[j].data());
            gram[i * k + j] = g;
            gram[j * k + i] = g;
        }
    }
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w: Vec<f64> = (0..k).map(|i| dot(&gram[i * k..(i + 1) * k], &v)).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    if !lambda.is_finite() {
        return Err(Error::Numeric("non-finite β curvature".into()));
    }
    Ok(lambda + 2.0 * lambda2)
}
