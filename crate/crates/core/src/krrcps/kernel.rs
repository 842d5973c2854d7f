use super::geometry::KrrGeometry;
use super::samples::SampleMatrix;
use crate::error::{dim_err, Error, Result};
use crate::numerics::{dot, solve_symmetric, Tensor};

/// `Σ_{m,n} β[m·M+n] ⟨xi[m], xj[n]⟩` for two samples given as `M` patch
/// vectors each.
pub fn cross_patch_kernel(xi: &[Vec<f64>], xj: &[Vec<f64>], beta: &[f64]) -> Result<f64> {
    let m = xi.len();
    if xj.len() != m || beta.len() != m * m {
        return dim_err(format!(
            "{} and {} patches with {} weights",
            m,
            xj.len(),
            beta.len()
        ));
    }
    let plen = xi.first().map_or(0, Vec::len);
    if xi.iter().chain(xj).any(|p| p.len() != plen) {
        return dim_err("patch vectors differ in length");
    }
    let mut k = 0.0;
    for (a, pa) in xi.iter().enumerate() {
        for (b, pb) in xj.iter().enumerate() {
            let w = beta[a * m + b];
            if w != 0.0 {
                k += w * dot(pa, pb);
            }
        }
    }
    Ok(k)
}

/// Dense `N×N` kernel matrix for the columns of `D` under patch weights `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub matrix: Tensor,
    pub beta: Vec<f64>,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.matrix.at2(i, j)
    }

    /// `K·α`
    pub fn apply(&self, alpha: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|i| dot(&self.matrix.data()[i * n..(i + 1) * n], alpha))
            .collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.size();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }
}

pub(crate) fn check_beta(beta: &[f64], geo: &KrrGeometry) -> Result<()> {
    let m = geo.patch_count();
    if beta.len() != m * m {
        return dim_err(format!("beta has {} entries, expected {}", beta.len(), m * m));
    }
    Ok(())
}

/// Mixes the patches of one sample: patch `m` of the result is
/// `Σ_n β[m·M+n] · patch n`. With this, `k(xi, xj) = ⟨xi, mix(xj)⟩`.
pub(crate) fn mix_patches(sample: &[f64], beta: &[f64], geo: &KrrGeometry) -> Vec<f64> {
    let m_count = geo.patch_count();
    let patches = geo.split_patches(sample);
    let plen = geo.patch_dim();
    let mixed: Vec<Vec<f64>> = (0..m_count)
        .map(|m| {
            let mut acc = vec![0.0; plen];
            for (n, p) in patches.iter().enumerate() {
                let w = beta[m * m_count + n];
                if w != 0.0 {
                    crate::numerics::axpy(w, p, &mut acc);
                }
            }
            acc
        })
        .collect();
    geo.scatter_patches(&mixed)
}

pub fn kernel_matrix(d: &SampleMatrix, beta: &[f64], geo: &KrrGeometry) -> Result<KernelMatrix> {
    check_beta(beta, geo)?;
    if d.dim() != geo.sample_dim() {
        return dim_err(format!(
            "sample dimension {} does not match geometry d={}",
            d.dim(),
            geo.sample_dim()
        ));
    }
    let n = d.count();
    let mixed: Vec<Vec<f64>> = (0..n).map(|j| mix_patches(d.column(j), beta, geo)).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        let xi = d.column(i);
        for j in 0..n {
            k[i * n + j] = dot(xi, &mixed[j]);
        }
    }
    Ok(KernelMatrix {
        matrix: Tensor::from_vec(&[n, n], k)?,
        beta: beta.to_vec(),
    })
}

/// Objective value through an explicit kernel matrix:
/// `‖y − Kα‖² + λ₁ αᵀKα + λ₂ ‖β‖²`.
#[allow(clippy::too_many_arguments)]
pub fn objective_j(
    alpha: &[f64],
    beta: &[f64],
    d: &SampleMatrix,
    y: &[f64],
    lambda1: f64,
    lambda2: f64,
    geo: &KrrGeometry,
) -> Result<f64> {
    let k = kernel_matrix(d, beta, geo)?;
    if alpha.len() != k.size() || y.len() != k.size() {
        return dim_err(format!(
            "alpha {} / labels {} for {} samples",
            alpha.len(),
            y.len(),
            k.size()
        ));
    }
    let ka = k.apply(alpha);
    let data: f64 = y.iter().zip(&ka).map(|(yi, ri)| (yi - ri).powi(2)).sum();
    let reg = dot(alpha, &ka);
    let beta_sq: f64 = beta.iter().map(|b| b * b).sum();
    Ok(data + lambda1 * reg + lambda2 * beta_sq)
}

/// `α = (K + λ₁I)⁻¹ y`. Requires a symmetric `K`.
pub fn closed_form_alpha(k: &KernelMatrix, y: &[f64], lambda1: f64) -> Result<Vec<f64>> {
    let n = k.size();
    if y.len() != n {
        return dim_err(format!("{} labels for a {n}×{n} kernel", y.len()));
    }
    let scale = k.matrix.max_abs().max(1.0);
    let asym = k.max_asymmetry();
    if asym > 1e-9 * scale {
        return Err(Error::Contract(format!(
            "kernel matrix is not symmetric (max deviation {asym:e})"
        )));
    }
    let mut a = k.matrix.clone();
    for i in 0..n {
        a.data_mut()[i * n + i] += lambda1;
    }
    Ok(solve_symmetric(&a, &Tensor::vector(y.to_vec()))?.into_vec())
}

/// `β` with `β[m,n] = 1` iff `m = n`: the kernel reduces to the plain linear
/// kernel.
pub fn identity_beta(patch_count: usize) -> Vec<f64> {
    (0..patch_count * patch_count)
        .map(|i| if i / patch_count == i % patch_count { 1.0 } else { 0.0 })
        .collect()
}
