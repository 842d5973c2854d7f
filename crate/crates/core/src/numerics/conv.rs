//! Valid-mode 2-D correlation over `H×W×C` maps.
//!
//! Every convolution in this crate uses the correlation convention: the
//! kernel is applied as stored, never flipped.

use super::tensor::{dot, Tensor};
use crate::error::{dim_err, Result};

/// `out[r,c] = Σ_{p,q,ch} input[r+p, c+q, ch] · kernel[p, q, ch]`.
pub fn conv2d_valid(input: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let (h, w, c) = input.dims3()?;
    let (kh, kw, kc) = kernel.dims3()?;
    if kc != c {
        return dim_err(format!("kernel has {kc} channels, input has {c}"));
    }
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return dim_err(format!("kernel {kh}×{kw} does not fit input {h}×{w}"));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; oh * ow];
    correlate_into(input.data(), (h, w, c), kernel.data(), (kh, kw), &mut out);
    Tensor::from_vec(&[oh, ow], out)
}

/// Raw correlation kernel used by the KRR network. `input` is a row-major
/// `H×W×C` buffer, `kernel` a row-major `kh×kw×C` buffer; the result is
/// accumulated into `out` of length `(H-kh+1)·(W-kw+1)`.
pub(crate) fn correlate_into(
    input: &[f64],
    (h, w, c): (usize, usize, usize),
    kernel: &[f64],
    (kh, kw): (usize, usize),
    out: &mut [f64],
) {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let span = kw * c;
    for r in 0..oh {
        for p in 0..kh {
            let krow = &kernel[p * span..(p + 1) * span];
            let irow = &input[(r + p) * w * c..(r + p + 1) * w * c];
            let orow = &mut out[r * ow..(r + 1) * ow];
            for (col, o) in orow.iter_mut().enumerate() {
                *o += dot(&irow[col * c..col * c + span], krow);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn loop_oracle(x: &Tensor, k: &Tensor) -> Vec<f64> {
        let (h, w, c) = x.dims3().unwrap();
        let (kh, kw, _) = k.dims3().unwrap();
        let mut out = Vec::new();
        for r in 0..=h - kh {
            for col in 0..=w - kw {
                let mut s = 0.0;
                for p in 0..kh {
                    for q in 0..kw {
                        for ch in 0..c {
                            s += x.at3(r + p, col + q, ch) * k.at3(p, q, ch);
                        }
                    }
                }
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn constant_input() {
        let x = Tensor::filled(&[3, 3, 1], 1.0);
        let k = Tensor::filled(&[2, 2, 1], 1.0);
        let out = conv2d_valid(&x, &k).unwrap();
        assert_eq!(out.shape(), &[2, 2]);
        assert!(out.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[4, 5, 1], &mut rng);
        let out = conv2d_valid(&x, &Tensor::filled(&[1, 1, 1], 1.0)).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = random(&[4, 4, 2], &mut rng);
            let k = random(&[2, 2, 2], &mut rng);
            let got = conv2d_valid(&x, &k).unwrap();
            for (a, b) in got.data().iter().zip(loop_oracle(&x, &k)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn no_kernel_flip() {
        // asymmetric kernel picks out the top-left neighbour
        let x = Tensor::from_fn(&[3, 3], |i| i as f64);
        let k = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let out = conv2d_valid(&x, &k).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0, 3.0, 4.0]);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros(&[3, 3, 2]);
        assert!(conv2d_valid(&x, &Tensor::zeros(&[2, 2, 1])).is_err());
        assert!(conv2d_valid(&x, &Tensor::zeros(&[4, 2, 2])).is_err());
    }

    proptest! {
        #[test]
        fn bilinear_in_input(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[6, 5, 3], &mut rng);
            let y = random(&[6, 5, 3], &mut rng);
            let k = random(&[3, 2, 3], &mut rng);
            let mix = x.zip_with(&y, |u, v| a * u + b * v).unwrap();
            let lhs = conv2d_valid(&mix, &k).unwrap();
            let cx = conv2d_valid(&x, &k).unwrap();
            let cy = conv2d_valid(&y, &k).unwrap();
            for i in 0..lhs.len() {
                let rhs = a * cx.data()[i] + b * cy.data()[i];
                prop_assert!((lhs.data()[i] - rhs).abs() <= 1e-10);
            }
        }
    }
}
