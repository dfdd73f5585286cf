//! Finite-difference checks of every hand-written backward pass. Each
//! check panics on the first mismatch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redtide::losses::{
    detector_loss, detector_loss_grad, discriminator_loss, hng_loss, hsi_detector_loss, hsi_detector_loss_grad,
    logit_grad,
};
use redtide::models::detector::{backward_train, forward_train};
use redtide::models::{discriminator, generator, init_params, DetectorSpec, DiscriminatorSpec, GeneratorSpec, ModelParams};
use redtide::nn::{self, ConvGeom};
use redtide::Tensor;

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

fn randomize(params: &mut ModelParams, std: f64, rng: &mut ChaCha8Rng) {
    let names: Vec<String> = params.names().cloned().collect();
    for n in names {
        let t = params.get_mut(&n);
        let fresh = Tensor::randn(t.shape(), 0.0, std, rng);
        *t = fresh;
    }
}

/// Compare analytic gradients against central differences of `f` on up to
/// `per_tensor` random entries of each parameter.
fn check_params(
    label: &str,
    params: &ModelParams,
    grads: &std::collections::BTreeMap<String, Tensor>,
    f: &dyn Fn(&ModelParams) -> f64,
    per_tensor: usize,
    rng: &mut ChaCha8Rng,
) {
    for name in params.names() {
        let g = grads.get(name).unwrap_or_else(|| panic!("{label}: no gradient for {name}"));
        assert_eq!(g.shape(), params.get(name).shape(), "{label}: {name} shape");
        let len = g.len();
        for _ in 0..per_tensor.min(len) {
            let i = rng.random_range(0..len);
            let mut plus = params.clone();
            plus.get_mut(name).data_mut()[i] += EPS;
            let mut minus = params.clone();
            minus.get_mut(name).data_mut()[i] -= EPS;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * EPS);
            let analytic = g.data()[i];
            if numeric.abs() < 1e-7 && analytic.abs() < 1e-7 {
                continue;
            }
            let e = rel_err(analytic, numeric);
            assert!(e < TOL, "{label}: {name}[{i}] analytic {analytic} numeric {numeric} rel {e}");
        }
    }
}

fn check_input(label: &str, x: &Tensor, gx: &Tensor, f: &dyn Fn(&Tensor) -> f64, samples: usize, rng: &mut ChaCha8Rng) {
    for _ in 0..samples {
        let i = rng.random_range(0..x.len());
        let mut plus = x.clone();
        plus.data_mut()[i] += EPS;
        let mut minus = x.clone();
        minus.data_mut()[i] -= EPS;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * EPS);
        let analytic = gx.data()[i];
        if numeric.abs() < 1e-7 && analytic.abs() < 1e-7 {
            continue;
        }
        let e = rel_err(analytic, numeric);
        assert!(e < TOL, "{label}: input[{i}] analytic {analytic} numeric {numeric} rel {e}");
    }
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn detector() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for outputs in [1, 3] {
        let mut spec = DetectorSpec::new(2).with_widths(2, 3);
        spec.output_units = outputs;
        let mut params = init_params(&spec, 5);
        randomize(&mut params, 0.3, &mut rng);
        let x = Tensor::randn(&[3, 2, 25, 25], 0.0, 1.0, &mut rng);
        let r = Tensor::randn(&[3, outputs], 0.0, 1.0, &mut rng);
        let f = |p: &ModelParams, x: &Tensor| {
            let t = forward_train::<ChaCha8Rng>(&spec, p, x, None).unwrap();
            dot(&t.logits, &r)
        };
        let trace = forward_train::<ChaCha8Rng>(&spec, &params, &x, None).unwrap();
        let (grads, gx) = backward_train(&spec, &params, &x, &trace, &r, true);
        check_params("detector", &params, &grads, &|p| f(p, &x), 12, &mut rng);
        check_input("detector", &x, &gx.unwrap(), &|xx| f(&params, xx), 40, &mut rng);
    }
}

pub fn detector_dropout() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = DetectorSpec::new(2).with_widths(2, 4);
    let mut params = init_params(&spec, 5);
    randomize(&mut params, 0.3, &mut rng);
    let x = Tensor::randn(&[2, 2, 25, 25], 0.0, 1.0, &mut rng);
    let r = Tensor::randn(&[2, 1], 0.0, 1.0, &mut rng);
    let f = |p: &ModelParams| {
        let mut d = ChaCha8Rng::seed_from_u64(77);
        dot(&forward_train(&spec, p, &x, Some(&mut d)).unwrap().logits, &r)
    };
    let mut d = ChaCha8Rng::seed_from_u64(77);
    let trace = forward_train(&spec, &params, &x, Some(&mut d)).unwrap();
    let (grads, _) = backward_train(&spec, &params, &x, &trace, &r, false);
    check_params("detector+dropout", &params, &grads, &f, 8, &mut rng);
}

pub fn generator() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = GeneratorSpec {
        base_width: 2,
        ..GeneratorSpec::new(2)
    };
    let mut params = init_params(&spec, 9);
    randomize(&mut params, 0.3, &mut rng);
    let x = Tensor::randn(&[2, 2, 25, 25], 0.0, 1.0, &mut rng);
    let r = Tensor::randn(&[2, 2, 25, 25], 0.0, 1.0, &mut rng);
    let f = |p: &ModelParams| dot(&generator::generator_forward(&spec, p, &x).unwrap(), &r);
    let trace = generator::forward_trace(&spec, &params, &x).unwrap();
    let grads = generator::backward(&spec, &params, &trace, &r);
    check_params("generator", &params, &grads, &f, 8, &mut rng);
}

pub fn discriminator() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = DiscriminatorSpec {
        conv_widths: vec![2, 3, 3, 2],
        ..DiscriminatorSpec::new(2)
    };
    let mut params = init_params(&spec, 11);
    randomize(&mut params, 0.3, &mut rng);
    let x = Tensor::randn(&[3, 2, 25, 25], 0.0, 1.0, &mut rng);
    let r = Tensor::randn(&[3, 1], 0.0, 1.0, &mut rng);
    let f = |p: &ModelParams, x: &Tensor| dot(&discriminator::forward_trace(&spec, p, x).unwrap().logits, &r);
    let trace = discriminator::forward_trace(&spec, &params, &x).unwrap();
    let (grads, gx) = discriminator::backward(&params, &trace, &r, true);
    check_params("discriminator", &params, &grads, &|p| f(p, &x), 10, &mut rng);
    check_input("discriminator", &x, &gx.unwrap(), &|xx| f(&params, xx), 40, &mut rng);
}

pub fn layer_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Dense.
    let x = Tensor::randn(&[4, 5], 0.0, 1.0, &mut rng);
    let w = Tensor::randn(&[3, 5], 0.0, 1.0, &mut rng);
    let b = Tensor::randn(&[3], 0.0, 1.0, &mut rng);
    let r = Tensor::randn(&[4, 3], 0.0, 1.0, &mut rng);
    let (gx, gw, gb) = nn::dense_backward(&x, &w, &r, true);
    let f = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&nn::dense_forward(x, w, b), &r);
    check_input("dense x", &x, &gx.unwrap(), &|t| f(t, &w, &b), 20, &mut rng);
    check_input("dense w", &w, &gw, &|t| f(&x, t, &b), 15, &mut rng);
    check_input("dense b", &b, &gb, &|t| f(&x, &w, t), 3, &mut rng);

    for g in [ConvGeom::new(3, 1, 1), ConvGeom::new(3, 2, 1), ConvGeom::new(5, 1, 0)] {
        let x = Tensor::randn(&[2, 3, 9, 9], 0.0, 1.0, &mut rng);
        let w = Tensor::randn(&[4, 3, g.kernel, g.kernel], 0.0, 1.0, &mut rng);
        let b = Tensor::randn(&[4], 0.0, 1.0, &mut rng);
        let o = g.out_len(9);
        let r = Tensor::randn(&[2, 4, o, o], 0.0, 1.0, &mut rng);
        let (gx, gw, gb) = nn::conv2d_backward(&x, &w, &r, g, true);
        let f = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&nn::conv2d_forward(x, w, b, g), &r);
        check_input("conv x", &x, &gx.unwrap(), &|t| f(t, &w, &b), 30, &mut rng);
        check_input("conv w", &w, &gw, &|t| f(&x, t, &b), 30, &mut rng);
        check_input("conv b", &b, &gb, &|t| f(&x, &w, t), 4, &mut rng);
    }

    let g = ConvGeom::new(3, 2, 1);
    let x = Tensor::randn(&[2, 3, 5, 5], 0.0, 1.0, &mut rng);
    let w = Tensor::randn(&[3, 4, 3, 3], 0.0, 1.0, &mut rng);
    let b = Tensor::randn(&[4], 0.0, 1.0, &mut rng);
    let o = g.transposed_out_len(5);
    let r = Tensor::randn(&[2, 4, o, o], 0.0, 1.0, &mut rng);
    let (gx, gw, gb) = nn::conv_transpose2d_backward(&x, &w, &r, g, true);
    let f = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&nn::conv_transpose2d_forward(x, w, b, g), &r);
    check_input("deconv x", &x, &gx.unwrap(), &|t| f(t, &w, &b), 30, &mut rng);
    check_input("deconv w", &w, &gw, &|t| f(&x, t, &b), 30, &mut rng);
    check_input("deconv b", &b, &gb, &|t| f(&x, &w, t), 4, &mut rng);
}

fn probs(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect()
}

fn numeric_grad(v: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let mut p = v.to_vec();
            p[i] += EPS;
            let mut m = v.to_vec();
            m[i] -= EPS;
            (f(&p) - f(&m)) / (2.0 * EPS)
        })
        .collect()
}

fn assert_close(label: &str, analytic: &[f64], numeric: &[f64]) {
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(*a, *n);
        assert!(e < TOL, "{label}[{i}]: analytic {a} numeric {n} rel {e}");
    }
}

pub fn losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = probs(8, &mut rng);
    let labels: Vec<u8> = (0..8).map(|i| (i % 3 == 0) as u8).collect();
    let f = |v: &[f64]| detector_loss(v, &labels).unwrap().scalar;
    assert_close("detector loss", &detector_loss_grad(&s, &labels).unwrap(), &numeric_grad(&s, &f));

    // Logit-domain gradient through the sigmoid.
    let z: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    let targets: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let fz = |v: &[f64]| {
        let p: Vec<f64> = v.iter().map(|&x| nn::sigmoid(x)).collect();
        detector_loss(&p, &labels).unwrap().scalar
    };
    let sz: Vec<f64> = z.iter().map(|&x| nn::sigmoid(x)).collect();
    assert_close("logit grad", &logit_grad(&sz, &targets, 8), &numeric_grad(&z, &fz));

    // Discriminator and generator objectives, each argument in turn.
    let real = probs(6, &mut rng);
    let fake = probs(6, &mut rng);
    let fd_real = |v: &[f64]| discriminator_loss(v, &fake).unwrap().scalar;
    let fd_fake = |v: &[f64]| discriminator_loss(&real, v).unwrap().scalar;
    let ones = vec![1u8; 6];
    let zeros = vec![0u8; 6];
    assert_close("disc real", &detector_loss_grad(&real, &ones).unwrap(), &numeric_grad(&real, &fd_real));
    assert_close("disc fake", &detector_loss_grad(&fake, &zeros).unwrap(), &numeric_grad(&fake, &fd_fake));
    let fh_det = |v: &[f64]| hng_loss(v, &fake).unwrap().scalar;
    let fh_disc = |v: &[f64]| hng_loss(&real, v).unwrap().scalar;
    assert_close("hng det", &detector_loss_grad(&real, &ones).unwrap(), &numeric_grad(&real, &fh_det));
    assert_close("hng disc", &detector_loss_grad(&fake, &ones).unwrap(), &numeric_grad(&fake, &fh_disc));

    // Per-class sigmoid loss.
    let scores = Tensor::from_vec(&[4, 3], probs(12, &mut rng)).unwrap();
    let lab = vec![0usize, 2, 1, 2];
    let fh = |v: &[f64]| hsi_detector_loss(&Tensor::from_vec(&[4, 3], v.to_vec()).unwrap(), &lab).unwrap().scalar;
    assert_close(
        "hsi loss",
        hsi_detector_loss_grad(&scores, &lab).unwrap().data(),
        &numeric_grad(scores.data(), &fh),
    );
}
