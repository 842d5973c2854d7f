use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

/// Solves `A x = b` for symmetric positive definite `A` (`N×N`) by Cholesky
/// factorization followed by one step of iterative refinement.
pub fn solve_symmetric(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = b.len();
    if a.shape() != [n, n] {
        return dim_err(format!("matrix {:?} does not match rhs of length {n}", a.shape()));
    }
    let factor = cholesky(a.data(), n)?;
    let mut x = cholesky_solve(&factor, n, b.data());
    let residual: Vec<f64> = (0..n)
        .map(|i| {
            let row = &a.data()[i * n..(i + 1) * n];
            b.data()[i] - row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>()
        })
        .collect();
    let correction = cholesky_solve(&factor, n, &residual);
    for (xi, ci) in x.iter_mut().zip(correction) {
        *xi += ci;
    }
    let x = Tensor::vector(x);
    x.ensure_finite("solve_symmetric")?;
    Ok(x)
}

/// Lower-triangular Cholesky factor, row-major. Only the lower triangle of
/// `a` is read.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Singular {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// `params − lr · grads`
pub fn sgd_step(params: &Tensor, grads: &Tensor, lr: f64) -> Result<Tensor> {
    if lr < 0.0 || !lr.is_finite() {
        return Err(Error::Contract(format!("learning rate must be >= 0, got {lr}")));
    }
    params.zip_with(grads, |p, g| p - lr * g)
}

/// Central-difference gradient of `f` at `x`. Used as the reference oracle
/// for every analytic gradient in the crate.
pub fn finite_diff_gradient<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::Contract(format!("eps must be > 0, got {eps}")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective not finite around coordinate {i}"
            )));
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Relative error `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, floor)`.
pub fn relative_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / a.max_abs().max(b.max_abs()).max(floor)
}
