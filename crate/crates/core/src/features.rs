//! Hand-crafted feature maps at cell resolution: mean intensity and
//! per-cell histograms of unsigned gradient orientation.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;

const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Intensity,
    GradientHist,
    Concat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub cell: usize,
    pub orientations: usize,
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::Concat,
            cell: 2,
            orientations: 8,
            normalize: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell == 0 {
            return Err(Error::Config("feature cell must be ≥ 1".into()));
        }
        if self.orientations < 2 {
            return Err(Error::Config("feature orientations must be ≥ 2".into()));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        match self.kind {
            FeatureKind::Intensity => 1,
            FeatureKind::GradientHist => self.orientations,
            FeatureKind::Concat => 1 + self.orientations,
        }
    }
}

/// Luminance of a 1- or 3-channel image as an `H×W` map.
pub fn grayscale(image: &Tensor) -> Result<Tensor> {
    let (h, w, c) = image.dims3()?;
    match c {
        1 => Tensor::from_vec(&[h, w], image.data().to_vec()),
        3 => Ok(Tensor::from_fn(&[h, w], |i| {
            let p = &image.data()[3 * i..3 * i + 3];
            0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
        })),
        _ => dim_err(format!("expected 1 or 3 image channels, got {c}")),
    }
}

fn cell_means(gray: &Tensor, cell: usize) -> Tensor {
    let w0 = gray.shape()[1];
    let (h, w) = (gray.shape()[0] / cell, w0 / cell);
    let norm = (cell * cell) as f64;
    Tensor::from_fn(&[h, w, 1], |i| {
        let (r, c) = (i / w, i % w);
        let mut s = 0.0;
        for y in r * cell..(r + 1) * cell {
            s += gray.data()[y * w0 + c * cell..y * w0 + (c + 1) * cell].iter().sum::<f64>();
        }
        s / norm
    })
}

/// Central-difference gradients with replicated borders.
fn gradients(gray: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    let at = |r: usize, c: usize| gray.data()[r * w + c];
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            gx[r * w + c] = 0.5 * (at(r, (c + 1).min(w - 1)) - at(r, c.saturating_sub(1)));
            gy[r * w + c] = 0.5 * (at((r + 1).min(h - 1), c) - at(r.saturating_sub(1), c));
        }
    }
    (gx, gy)
}

/// Orientation bin of an unsigned gradient direction in `[0, π)`.
fn orientation_bin(gx: f64, gy: f64, bins: usize) -> usize {
    let theta = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
    ((theta / std::f64::consts::PI * bins as f64) as usize).min(bins - 1)
}

fn gradient_histograms(gray: &Tensor, cell: usize, bins: usize) -> Tensor {
    let w0 = gray.shape()[1];
    let (h, w) = (gray.shape()[0] / cell, w0 / cell);
    let (gx, gy) = gradients(gray);
    let mut out = Tensor::zeros(&[h, w, bins]);
    for r in 0..h * cell {
        for c in 0..w * cell {
            let i = r * w0 + c;
            let mag = gx[i].hypot(gy[i]);
            if mag == 0.0 {
                continue;
            }
            let b = orientation_bin(gx[i], gy[i], bins);
            out.data_mut()[((r / cell) * w + c / cell) * bins + b] += mag;
        }
    }
    out
}

fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (h, w, ca) = a.dims3().expect("rank-3");
    let cb = b.shape()[2];
    let mut data = Vec::with_capacity(h * w * (ca + cb));
    for pix in 0..h * w {
        data.extend_from_slice(&a.data()[pix * ca..(pix + 1) * ca]);
        data.extend_from_slice(&b.data()[pix * cb..(pix + 1) * cb]);
    }
    Tensor::from_vec(&[h, w, ca + cb], data).expect("concat shape")
}

/// Shifts each channel to zero mean and scales it to unit variance.
/// Channels whose variance is below the floor are only centered, which
/// keeps the operation idempotent.
pub fn normalize_channels(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    let n = (h * w) as f64;
    let mut out = x.clone();
    for ch in 0..c {
        let vals = || x.data().iter().skip(ch).step_by(c);
        let mean = vals().sum::<f64>() / n;
        let var = vals().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let scale = if var < VARIANCE_FLOOR { 1.0 } else { 1.0 / var.sqrt() };
        for v in out.data_mut().iter_mut().skip(ch).step_by(c) {
            *v = (*v - mean) * scale;
        }
    }
    Ok(out)
}

/// Feature map of spatial size `⌊H₀/cell⌋×⌊W₀/cell⌋`.
pub fn extract_features(image: &Tensor, cfg: &FeatureConfig) -> Result<Tensor> {
    cfg.validate()?;
    let gray = grayscale(image)?;
    let (h0, w0) = gray.dims2()?;
    if h0 / cfg.cell == 0 || w0 / cfg.cell == 0 {
        return dim_err(format!("{h0}×{w0} image smaller than one {0}×{0} cell", cfg.cell));
    }
    let raw = match cfg.kind {
        FeatureKind::Intensity => cell_means(&gray, cfg.cell),
        FeatureKind::GradientHist => gradient_histograms(&gray, cfg.cell, cfg.orientations),
        FeatureKind::Concat => concat_channels(
            &cell_means(&gray, cfg.cell),
            &gradient_histograms(&gray, cfg.cell, cfg.orientations),
        ),
    };
    if cfg.normalize {
        normalize_channels(&raw)
    } else {
        Ok(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw(kind: FeatureKind) -> FeatureConfig {
        FeatureConfig {
            kind,
            normalize: false,
            ..FeatureConfig::default()
        }
    }

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[h, w, c], |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn constant_image_has_no_gradient_energy() {
        let img = Tensor::filled(&[8, 8, 1], 0.7);
        let f = extract_features(&img, &raw(FeatureKind::GradientHist)).unwrap();
        assert_eq!(f.shape(), &[4, 4, 8]);
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_lands_in_horizontal_bin() {
        for flip in [false, true] {
            let img = Tensor::from_fn(&[8, 8, 1], |i| if (i % 8 >= 4) != flip { 1.0 } else { 0.0 });
            let f = extract_features(&img, &raw(FeatureKind::GradientHist)).unwrap();
            let total: f64 = f.sum();
            let bin0: f64 = f.data().iter().step_by(8).sum();
            assert!(total > 0.0);
            assert_eq!(bin0, total);
        }
    }

    #[test]
    fn histogram_totals_equal_cell_magnitudes() {
        let img = random_image(12, 10, 1, 3);
        let f = extract_features(&img, &raw(FeatureKind::GradientHist)).unwrap();
        let g = |r: isize, c: isize| img.at3(r.clamp(0, 11) as usize, c.clamp(0, 9) as usize, 0);
        for cr in 0..6 {
            for cc in 0..5 {
                let mut want = 0.0;
                for r in (cr * 2)..(cr * 2 + 2) {
                    for c in (cc * 2)..(cc * 2 + 2) {
                        let dx = (g(r, c + 1) - g(r, c - 1)) / 2.0;
                        let dy = (g(r + 1, c) - g(r - 1, c)) / 2.0;
                        want += (dx * dx + dy * dy).sqrt();
                    }
                }
                let got: f64 = (0..8).map(|b| f.at3(cr as usize, cc as usize, b)).sum();
                assert!((got - want).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn output_extent_and_channels() {
        let img = random_image(13, 9, 3, 4);
        let f = extract_features(&img, &FeatureConfig::default()).unwrap();
        assert_eq!(f.shape(), &[6, 4, 9]);
        let f = extract_features(&img, &FeatureConfig { cell: 3, kind: FeatureKind::Intensity, ..FeatureConfig::default() }).unwrap();
        assert_eq!(f.shape(), &[4, 3, 1]);
    }

    #[test]
    fn intensity_is_cell_mean() {
        let img = random_image(4, 4, 1, 5);
        let f = extract_features(&img, &raw(FeatureKind::Intensity)).unwrap();
        let want = (img.at3(0, 2, 0) + img.at3(0, 3, 0) + img.at3(1, 2, 0) + img.at3(1, 3, 0)) / 4.0;
        assert!((f.at3(0, 1, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn translation_by_one_cell() {
        let img = random_image(20, 20, 1, 6);
        let shifted = Tensor::from_fn(&[20, 20, 1], |i| {
            let (r, c) = (i / 20, i % 20);
            if r >= 2 && c >= 2 { img.at3(r - 2, c - 2, 0) } else { 0.0 }
        });
        let cfg = raw(FeatureKind::Concat);
        let a = extract_features(&img, &cfg).unwrap();
        let b = extract_features(&shifted, &cfg).unwrap();
        for r in 1..8 {
            for c in 1..8 {
                for ch in 0..9 {
                    assert_eq!(b.at3(r + 1, c + 1, ch), a.at3(r, c, ch), "{r} {c} {ch}");
                }
            }
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(extract_features(&Tensor::zeros(&[1, 1, 1]), &FeatureConfig::default()).is_err());
        assert!(extract_features(&Tensor::zeros(&[4, 4, 2]), &FeatureConfig::default()).is_err());
        let bad = FeatureConfig { orientations: 1, ..FeatureConfig::default() };
        assert!(extract_features(&Tensor::zeros(&[4, 4, 1]), &bad).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(seed in 0u64..1000, tiny in proptest::bool::ANY) {
            let mut x = random_image(5, 6, 3, seed);
            if tiny {
                x = x.map(|v| v * 1e-4);
            }
            let once = normalize_channels(&x).unwrap();
            let twice = normalize_channels(&once).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
