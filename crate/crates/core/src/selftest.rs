//! Quick oracle-backed checks runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bbox::BoundingBox;
use crate::cnnsrk::{cnn_forward, dt_pool, dt_pool_exhaustive, masked_conv_backward, masked_conv_forward, CnnConfig, CnnSrkModel, DtPoolParams, MaskedConvLayer, make_masks};
use crate::evalsim::evaluate_ope;
use crate::krrcps::{closed_form_alpha, cross_patch_kernel, extract_dense_samples, kernel_matrix, krr_forward, krr_gradients, objective_network, KrrGeometry};
use crate::numerics::{finite_diff_gradient, relative_error, Tensor};
use crate::tracker::{scale_loss, ScaleModel};

/// Outcome of one suite.
#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<String, String>;

const SUITES: [(&str, Check); 8] = [
    ("krr reformulation", krr_reformulation),
    ("krr closed form", krr_closed_form),
    ("krr gradients", krr_grad_check),
    ("dt pooling", dt_oracle),
    ("mask invariance", mask_invariance),
    ("conv gradients", conv_grad_check),
    ("scale gradients", scale_grad_check),
    ("ope metrics", ope_metrics),
];

pub fn run_all() -> Vec<SuiteResult> {
    SUITES
        .iter()
        .map(|(name, check)| match check() {
            Ok(detail) => SuiteResult { name, passed: true, detail },
            Err(detail) => SuiteResult { name, passed: false, detail },
        })
        .collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn ensure(ok: bool, msg: String) -> Result<String, String> {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

struct KrrCase {
    geo: KrrGeometry,
    x: Tensor,
    d: crate::krrcps::SampleMatrix,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    y: Vec<f64>,
}

fn krr_case(seed: u64, size: usize, target: usize, m: usize) -> Result<KrrCase, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = KrrGeometry::new(size, size, 3, target, target, m).map_err(e)?;
    let x = Tensor::from_fn(&[size, size, 3], |_| normal(&mut rng));
    let d = extract_dense_samples(&x, &geo).map_err(e)?;
    let n = geo.sample_count();
    let alpha = (0..n).map(|_| 0.1 * normal(&mut rng)).collect();
    let beta = (0..m * m).map(|_| normal(&mut rng)).collect();
    let y = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    Ok(KrrCase { geo, x, d, alpha, beta, y })
}

fn krr_reformulation() -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let c = krr_case(seed, 12, 6, 4)?;
        let r = krr_forward(&c.x, &c.d, &c.alpha, &c.beta, &c.geo).map_err(e)?.r;
        let patches: Vec<_> = (0..c.d.count()).map(|j| c.geo.split_patches(c.d.column(j))).collect();
        let scale = r.max_abs().max(1e-300);
        for i in 0..c.d.count() {
            let mut brute = 0.0;
            for j in 0..c.d.count() {
                brute += c.alpha[j] * cross_patch_kernel(&patches[i], &patches[j], &c.beta).map_err(e)?;
            }
            worst = worst.max((r.data()[i] - brute).abs() / scale);
        }
    }
    ensure(worst <= 1e-9, format!("max relative deviation {worst:.2e}"))
}

fn symmetric_case(seed: u64) -> Result<KrrCase, String> {
    let mut c = krr_case(seed, 7, 4, 4)?;
    let raw = c.beta.clone();
    for a in 0..4 {
        for b in 0..4 {
            let v = if a == b { 1.0 } else { 0.05 * (raw[a * 4 + b] + raw[b * 4 + a]) };
            c.beta[a * 4 + b] = v;
        }
    }
    Ok(c)
}

fn krr_closed_form() -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let c = symmetric_case(100 + seed)?;
        let k = kernel_matrix(&c.d, &c.beta, &c.geo).map_err(e)?;
        let alpha = closed_form_alpha(&k, &c.y, 1e-3).map_err(e)?;
        let g = krr_gradients(&c.x, &c.d, &alpha, &c.beta, &c.y, 1e-3, 1e-3, &c.geo).map_err(e)?;
        worst = g.alpha.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    ensure(worst <= 1e-6, format!("max |dJ/dα| at optimum {worst:.2e}"))
}

fn krr_grad_check() -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let c = krr_case(200 + seed, 7, 4, 4)?;
        let g = krr_gradients(&c.x, &c.d, &c.alpha, &c.beta, &c.y, 1e-3, 1e-3, &c.geo).map_err(e)?;
        let obj = |a: &[f64], b: &[f64]| objective_network(&c.x, &c.d, a, b, &c.y, 1e-3, 1e-3, &c.geo).unwrap_or(f64::NAN);
        let fa = finite_diff_gradient(|t| obj(t.data(), &c.beta), &Tensor::vector(c.alpha.clone()), 1e-5).map_err(e)?;
        let fb = finite_diff_gradient(|t| obj(&c.alpha, t.data()), &Tensor::vector(c.beta.clone()), 1e-5).map_err(e)?;
        worst = worst
            .max(relative_error(&fa, &Tensor::vector(g.alpha.clone()), 1e-8))
            .max(relative_error(&fb, &Tensor::vector(g.beta.clone()), 1e-8));
    }
    ensure(worst <= 1e-4, format!("max relative error {worst:.2e}"))
}

fn dt_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = Tensor::from_fn(&[9, 9], |_| normal(&mut rng));
        let p = DtPoolParams {
            varpi_x: rng.random_range(0.0..1.0),
            varpi_y: rng.random_range(0.0..1.0),
            theta_x: rng.random_range(-0.5..0.5),
            theta_y: rng.random_range(-0.5..0.5),
            bound: 4,
        };
        let a = dt_pool(&f, &p).map_err(e)?;
        let b = dt_pool_exhaustive(&f, &p).map_err(e)?;
        worst = a.data().iter().zip(b.data()).fold(worst, |m, (x, y)| m.max((x - y).abs()));
    }
    let f = Tensor::from_fn(&[9, 9], |_| normal(&mut rng));
    let flat = dt_pool(&f, &DtPoolParams::new(0.0, 0.0, 9)).map_err(e)?;
    let max = f.data().iter().cloned().fold(f64::MIN, f64::max);
    let constant = flat.data().iter().all(|&v| v == max);
    let ident = dt_pool(&f, &DtPoolParams::new(1e6, 0.0, 4)).map_err(e)? == f;
    ensure(worst <= 1e-12 && constant && ident, format!("max deviation {worst:.1e}, constant {constant}, identity {ident}"))
}

fn mask_invariance() -> Result<String, String> {
    let mut model = CnnSrkModel::new(&CnnConfig { input_size: 12, ..CnnConfig::default() }).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::from_fn(&[12, 12, 9], |_| normal(&mut rng));
    let before = cnn_forward(&model, &x).map_err(e)?;
    let l = &mut model.conv1;
    let mut touched = 0;
    for oc in 0..l.out_channels {
        for p in 0..l.kh {
            for q in 0..l.kw {
                if !l.masks[oc].is_active(p, q) {
                    for ic in 0..l.in_per_group() {
                        let i = l.filter_index(oc, p, q, ic);
                        l.filters[i] += normal(&mut rng);
                        touched += 1;
                    }
                }
            }
        }
    }
    let after = cnn_forward(&model, &x).map_err(e)?;
    ensure(before == after && touched > 0, format!("{touched} masked weights perturbed"))
}

fn conv_grad_check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let masks = make_masks(4, 3, 3, 0.5, 5).map_err(e)?;
    let mut layer = MaskedConvLayer::new((3, 3), 2, 4, 1, masks, 0.5, 9).map_err(e)?;
    layer.bias.iter_mut().for_each(|b| *b = normal(&mut rng));
    let x = Tensor::from_fn(&[6, 6, 2], |_| normal(&mut rng));
    let up = Tensor::from_fn(&[6, 6, 4], |_| normal(&mut rng));
    let g = masked_conv_backward(&layer, &x, &up).map_err(e)?;
    let loss = |l: &MaskedConvLayer, x: &Tensor| masked_conv_forward(l, x).and_then(|o| o.dot(&up)).unwrap_or(f64::NAN);
    let fw = finite_diff_gradient(
        |t| {
            let mut p = layer.clone();
            p.filters.copy_from_slice(t.data());
            loss(&p, &x)
        },
        &Tensor::vector(layer.filters.clone()),
        1e-5,
    )
    .map_err(e)?;
    let fx = finite_diff_gradient(|t| loss(&layer, t), &x, 1e-5).map_err(e)?;
    let gx = g.input.ok_or("missing input gradient")?;
    let err = relative_error(&fw, &Tensor::vector(g.filters), 1e-8).max(relative_error(&fx, &gx, 1e-8));
    ensure(err <= 1e-4, format!("max relative error {err:.2e}"))
}

fn scale_grad_check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut model = ScaleModel::new(5, 1.05, 1.0, 1e-3, 8 * 8 * 2).map_err(e)?;
    model.weights.iter_mut().for_each(|w| *w = 0.01 * normal(&mut rng));
    let x = Tensor::from_fn(&[8, 8, 2], |_| normal(&mut rng));
    let (_, gw, _) = scale_loss(&x, &model).map_err(e)?;
    let fd = finite_diff_gradient(
        |t| {
            let mut m = model.clone();
            m.weights.copy_from_slice(t.data());
            scale_loss(&x, &m).map(|r| r.0).unwrap_or(f64::NAN)
        },
        &Tensor::vector(model.weights.clone()),
        1e-5,
    )
    .map_err(e)?;
    let err = relative_error(&fd, &Tensor::vector(gw), 1e-8);
    ensure(err <= 1e-4, format!("max relative error {err:.2e}"))
}

fn ope_metrics() -> Result<String, String> {
    let gt: Vec<_> = (0..10).map(|i| BoundingBox::new(i as f64, 5.0, 20.0, 10.0)).collect();
    let m = evaluate_ope(&gt, &gt).map_err(e)?;
    let ok = m.precision_20 == 1.0 && m.mean_center_error == 0.0 && (m.auc - 20.0 / 21.0).abs() < 1e-12;
    ensure(ok, format!("precision {}, auc {:.4}", m.precision_20, m.auc))
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_suites_pass() {
        for r in super::run_all() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
