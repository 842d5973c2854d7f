use crate::error::{dim_err, Error, Result};
use crate::numerics::{resize_bilinear, Tensor};

/// Linear scorer over rescaled feature maps, one candidate per scale
/// exponent `s ∈ {−(S−1)/2, …, (S−1)/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleModel {
    pub s_count: usize,
    pub a: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub sigma_s: f64,
    pub lr: f64,
}

impl ScaleModel {
    /// Zero-initialized scorer for `H×W×C` feature maps.
    pub fn new(s_count: usize, a: f64, sigma_s: f64, lr: f64, feature_len: usize) -> Result<Self> {
        if s_count % 2 == 0 {
            return Err(Error::Config(format!("`S` must be odd, got {s_count}")));
        }
        if !(a > 1.0) {
            return Err(Error::Config(format!("`a` must exceed 1, got {a}")));
        }
        Ok(Self {
            s_count,
            a,
            weights: vec![0.0; feature_len],
            bias: 0.0,
            sigma_s,
            lr,
        })
    }

    pub fn exponents(&self) -> Vec<i32> {
        let half = (self.s_count / 2) as i32;
        (-half..=half).collect()
    }

    /// `exp(−s²/(2σ²))`.
    pub fn label(&self, s: i32) -> f64 {
        let s = s as f64;
        (-(s * s) / (2.0 * self.sigma_s * self.sigma_s)).exp()
    }

    fn score(&self, x: &[f64]) -> f64 {
        crate::numerics::dot(&self.weights, x) + self.bias
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        x.dims3()?;
        if x.len() != self.weights.len() {
            return dim_err(format!("scale scorer expects {} features, got {}", self.weights.len(), x.len()));
        }
        Ok(())
    }
}

/// Center-crops (`s < 0`) or zero-pads (`s > 0`) to `round(aˢH)×round(aˢW)`
/// and resizes back to `H×W`.
pub fn scale_transform(x: &Tensor, s: i32, a: f64) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    if s == 0 {
        return Ok(x.clone());
    }
    let f = a.powi(s);
    let nh = ((h as f64 * f).round() as usize).max(1);
    let nw = ((w as f64 * f).round() as usize).max(1);
    let mut canvas = Tensor::zeros(&[nh, nw, c]);
    // offset of the source inside the canvas (negative when cropping)
    let oy = (nh as isize - h as isize) / 2;
    let ox = (nw as isize - w as isize) / 2;
    for r in 0..nh {
        let sr = r as isize - oy;
        if sr < 0 || sr >= h as isize {
            continue;
        }
        for col in 0..nw {
            let sc = col as isize - ox;
            if sc < 0 || sc >= w as isize {
                continue;
            }
            for ch in 0..c {
                canvas.set3(r, col, ch, x.at3(sr as usize, sc as usize, ch));
            }
        }
    }
    resize_bilinear(&canvas, h, w)
}

/// Candidate scores and the winning exponent; ties go to the exponent
/// closest to zero (the negative one when two are equally close).
pub fn scale_scores(x: &Tensor, scale: &ScaleModel) -> Result<(Vec<f64>, i32)> {
    scale.check(x)?;
    let exps = scale.exponents();
    let scores = exps
        .iter()
        .map(|&s| Ok(scale.score(scale_transform(x, s, scale.a)?.data())))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0usize;
    for i in 0..scores.len() {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best] && exps[i].abs() < exps[best].abs());
        if better {
            best = i;
        }
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite scale score".into()));
    }
    Ok((scores, exps[best]))
}

/// `½ Σ_s (y_s − f(T(X, s)))²` and its gradient `(weights, bias)`.
pub fn scale_loss(x: &Tensor, scale: &ScaleModel) -> Result<(f64, Vec<f64>, f64)> {
    scale.check(x)?;
    let mut loss = 0.0;
    let mut gw = vec![0.0; scale.weights.len()];
    let mut gb = 0.0;
    for s in scale.exponents() {
        let t = scale_transform(x, s, scale.a)?;
        let e = scale.score(t.data()) - scale.label(s);
        loss += 0.5 * e * e;
        crate::numerics::axpy(e, t.data(), &mut gw);
        gb += e;
    }
    Ok((loss, gw, gb))
}

/// One SGD step of the scorer at the model's own rate. Returns the loss
/// before the step.
pub fn scale_train_step(scale: &mut ScaleModel, x: &Tensor) -> Result<f64> {
    let (loss, gw, gb) = scale_loss(x, scale)?;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite scale loss".into()));
    }
    crate::numerics::axpy(-scale.lr, &gw, &mut scale.weights);
    scale.bias -= scale.lr * gb;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_gradient, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn model(len: usize, seed: u64) -> ScaleModel {
        let mut m = ScaleModel::new(7, 1.02, 1.0, 1e-3, len).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.weights.iter_mut().for_each(|w| *w = rng.random_range(-0.1..0.1));
        m.bias = 0.3;
        m
    }

    #[test]
    fn exponent_sets() {
        let m = ScaleModel::new(3, 1.02, 1.0, 0.0, 4).unwrap();
        assert_eq!(m.exponents(), vec![-1, 0, 1]);
        assert_eq!(m.label(0), 1.0);
        assert!(ScaleModel::new(4, 1.02, 1.0, 0.0, 4).is_err());
        assert!(ScaleModel::new(3, 1.0, 1.0, 0.0, 4).is_err());
    }

    #[test]
    fn zero_exponent_is_identity() {
        let x = random(&[10, 12, 3], 1);
        assert_eq!(scale_transform(&x, 0, 1.02).unwrap(), x);
        let m = model(x.len(), 2);
        let (scores, _) = scale_scores(&x, &m).unwrap();
        let want = crate::numerics::dot(&m.weights, x.data()) + m.bias;
        assert!((scores[3] - want).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_choose_unit_scale() {
        let x = random(&[8, 8, 2], 3);
        let m = ScaleModel::new(7, 1.02, 1.0, 0.0, x.len()).unwrap();
        let (scores, best) = scale_scores(&x, &m).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
        assert_eq!(best, 0);
    }

    #[test]
    fn transform_crops_and_pads() {
        let x = Tensor::filled(&[20, 20, 1], 1.0);
        let padded = scale_transform(&x, 5, 1.1).unwrap();
        assert_eq!(padded.at3(0, 0, 0), 0.0);
        assert!((padded.at3(10, 10, 0) - 1.0).abs() < 1e-12);
        let cropped = scale_transform(&x, -3, 1.1).unwrap();
        assert!(cropped.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_rate_keeps_model() {
        let x = random(&[6, 6, 2], 4);
        let mut m = model(x.len(), 5);
        m.lr = 0.0;
        let before = m.clone();
        scale_train_step(&mut m, &x).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let x = random(&[6, 5, 2], 10 + seed);
            let m = model(x.len(), seed);
            let (_, gw, gb) = scale_loss(&x, &m).unwrap();
            let mut params = m.weights.clone();
            params.push(m.bias);
            let fd = finite_diff_gradient(
                |t| {
                    let mut probe = m.clone();
                    probe.weights.copy_from_slice(&t.data()[..x.len()]);
                    probe.bias = t.data()[x.len()];
                    scale_loss(&x, &probe).unwrap().0
                },
                &Tensor::vector(params),
                1e-6,
            )
            .unwrap();
            let mut an = gw.clone();
            an.push(gb);
            assert!(relative_error(&Tensor::vector(an), &fd, 1e-8) <= 1e-4);
        }
    }

    #[test]
    fn training_learns_to_prefer_unit_scale() {
        let x = random(&[8, 8, 1], 6);
        let mut m = ScaleModel::new(5, 1.1, 1.0, 2e-3, x.len()).unwrap();
        for _ in 0..200 {
            scale_train_step(&mut m, &x).unwrap();
        }
        let (scores, best) = scale_scores(&x, &m).unwrap();
        assert_eq!(best, 0);
        assert!(scores[2] > 0.5);
    }
}
