use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

/// Gaussian label map parameters. Coordinates are in grid units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianLabelConfig {
    pub center: (f64, f64),
    pub sigma: f64,
    pub height: usize,
    pub width: usize,
}

/// `exp(−((r−cr)² + (c−cc)²) / (2σ²))` over an `height×width` grid.
pub fn gaussian_map(cfg: &GaussianLabelConfig) -> Result<Tensor> {
    if !(cfg.sigma > 0.0) {
        return Err(Error::Contract(format!("sigma must be > 0, got {}", cfg.sigma)));
    }
    if cfg.height == 0 || cfg.width == 0 {
        return dim_err("gaussian map needs a nonempty grid");
    }
    let denom = 2.0 * cfg.sigma * cfg.sigma;
    let (cr, cc) = cfg.center;
    let w = cfg.width;
    Ok(Tensor::from_fn(&[cfg.height, cfg.width], |i| {
        let dr = (i / w) as f64 - cr;
        let dc = (i % w) as f64 - cc;
        (-(dr * dr + dc * dc) / denom).exp()
    }))
}

/// Bilinear sample of channel `ch` at fractional `(y, x)`. Coordinates
/// outside `[0, H−1] × [0, W−1]` return `None`.
#[inline]
pub(crate) fn sample_bilinear(img: &Tensor, y: f64, x: f64, ch: usize) -> Option<f64> {
    let (h, w, _) = img.dims3().ok()?;
    if !(y >= 0.0 && x >= 0.0 && y <= (h - 1) as f64 && x <= (w - 1) as f64) {
        return None;
    }
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let top = if fx == 0.0 {
        img.at3(y0, x0, ch)
    } else {
        (1.0 - fx) * img.at3(y0, x0, ch) + fx * img.at3(y0, x1, ch)
    };
    if fy == 0.0 {
        return Some(top);
    }
    let bottom = if fx == 0.0 {
        img.at3(y1, x0, ch)
    } else {
        (1.0 - fx) * img.at3(y1, x0, ch) + fx * img.at3(y1, x1, ch)
    };
    Some((1.0 - fy) * top + fy * bottom)
}

/// Like [`sample_bilinear`] but clamps the coordinate into the image.
#[inline]
pub(crate) fn sample_clamped(img: &Tensor, y: f64, x: f64, ch: usize) -> f64 {
    let (h, w, _) = img.dims3().expect("image tensor");
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    sample_bilinear(img, y, x, ch).expect("clamped coordinate")
}

/// Corner-aligned bilinear resize of an `H×W` or `H×W×C` tensor. The output
/// keeps the input rank.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = img.dims3()?;
    if h == 0 || w == 0 || c == 0 {
        return dim_err("cannot resize an empty image");
    }
    if out_h == 0 || out_w == 0 {
        return dim_err(format!("output size {out_h}×{out_w} is empty"));
    }
    let coord = |i: usize, n_in: usize, n_out: usize| -> f64 {
        if n_out == 1 {
            (n_in - 1) as f64 / 2.0
        } else {
            i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for r in 0..out_h {
        let y = coord(r, h, out_h);
        for col in 0..out_w {
            let x = coord(col, w, out_w);
            for ch in 0..c {
                out.push(sample_bilinear(img, y, x, ch).expect("in-range coordinate"));
            }
        }
    }
    let shape: Vec<usize> = if img.shape().len() == 2 {
        vec![out_h, out_w]
    } else {
        vec![out_h, out_w, c]
    };
    Tensor::from_vec(&shape, out)
}

/// Rotation angle as `(cos, sin)`, exact at multiples of 90°.
fn cos_sin(degrees: f64) -> (f64, f64) {
    let quarter = degrees / 90.0;
    if quarter == quarter.round() {
        match (quarter.round() as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let t = degrees.to_radians();
        (t.cos(), t.sin())
    }
}

/// Rotates about the image center by `degrees` (counter-clockwise as
/// displayed, rows growing downward) with bilinear sampling. Pixels whose
/// source falls outside the image are 0.
pub fn rotate_image(img: &Tensor, degrees: f64) -> Result<Tensor> {
    let (h, w, c) = img.dims3()?;
    let (cos, sin) = cos_sin(degrees);
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = Tensor::zeros(img.shape());
    for r in 0..h {
        let dy = r as f64 - cy;
        for col in 0..w {
            let dx = col as f64 - cx;
            // inverse map: rotate the output offset back by −θ
            let sx = cx + cos * dx - sin * dy;
            let sy = cy + sin * dx + cos * dy;
            for ch in 0..c {
                if let Some(v) = sample_bilinear(img, sy, sx, ch) {
                    out.set3(r, col, ch, v);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(0.0..1.0))
    }

    fn cfg(center: (f64, f64), sigma: f64, height: usize, width: usize) -> GaussianLabelConfig {
        GaussianLabelConfig {
            center,
            sigma,
            height,
            width,
        }
    }

    #[test]
    fn gaussian_closed_form() {
        let g = gaussian_map(&cfg((3.0, 3.0), 2.0, 9, 9)).unwrap();
        assert_eq!(g.at2(3, 3), 1.0);
        assert!((g.at2(5, 3) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g.at2(5, 3) - 0.60653).abs() < 1e-5);
        assert!(gaussian_map(&cfg((0.0, 0.0), 0.0, 3, 3)).is_err());
    }

    #[test]
    fn gaussian_symmetric_about_mid_grid() {
        let g = gaussian_map(&cfg((3.5, 4.0), 1.7, 8, 9)).unwrap();
        for r in 0..8 {
            for c in 0..9 {
                assert_eq!(g.at2(r, c), g.at2(7 - r, c));
                assert_eq!(g.at2(r, c), g.at2(r, 8 - c));
                assert!(g.at2(r, c) > 0.0 && g.at2(r, c) <= 1.0);
            }
        }
    }

    #[test]
    fn gaussian_peak_nearest_center() {
        let g = gaussian_map(&cfg((2.3, 5.8), 1.1, 7, 9)).unwrap();
        assert_eq!(g.argmax(), 2 * 9 + 6);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = random(&[5, 7, 2], 1);
        assert_eq!(resize_bilinear(&img, 5, 7).unwrap(), img);
        let flat = Tensor::filled(&[4, 4, 3], 0.25);
        let big = resize_bilinear(&flat, 9, 13).unwrap();
        assert_eq!(big.shape(), &[9, 13, 3]);
        assert!(big.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(resize_bilinear(&img, 0, 3).is_err());
    }

    #[test]
    fn upsampled_ramp_stays_linear() {
        let ramp = Tensor::from_fn(&[6, 6], |i| 0.5 * (i / 6) as f64 - 1.5 * (i % 6) as f64);
        let up = resize_bilinear(&ramp, 11, 11).unwrap();
        for r in 0..11 {
            for c in 0..11 {
                let y = r as f64 * 5.0 / 10.0;
                let x = c as f64 * 5.0 / 10.0;
                assert!((up.at2(r, c) - (0.5 * y - 1.5 * x)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rotation_identity_and_half_turn() {
        let img = random(&[6, 6, 2], 2);
        assert_eq!(rotate_image(&img, 0.0).unwrap(), img);
        let half = rotate_image(&img, 180.0).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                for ch in 0..2 {
                    assert_eq!(half.at3(r, c, ch), img.at3(5 - r, 5 - c, ch));
                }
            }
        }
    }

    #[test]
    fn quarter_turns_compose() {
        let img = random(&[7, 7, 1], 3);
        let twice = rotate_image(&rotate_image(&img, 90.0).unwrap(), 90.0).unwrap();
        let half = rotate_image(&img, 180.0).unwrap();
        for (a, b) in twice.data().iter().zip(half.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
        // a quarter turn is a permutation: same multiset of values
        let mut a = rotate_image(&img, 90.0).unwrap().into_vec();
        let mut b = img.clone().into_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn rotation_fills_outside_with_zero() {
        let img = Tensor::filled(&[9, 9], 1.0);
        let rot = rotate_image(&img, 45.0).unwrap();
        assert_eq!(rot.at2(0, 0), 0.0);
        assert_eq!(rot.at2(4, 4), 1.0);
    }
}
