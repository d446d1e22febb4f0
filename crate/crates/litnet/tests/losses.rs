//! Loss terms against worked examples, closed forms, and finite differences.

use litnet::checkpoint::{save_checkpoint, Checkpoint};
use litnet::loss::{
    cl1_loss, perceptual_loss, ssim_loss, ssim_map, total_loss, ConvStackExtractor,
    FeatureExtractor, IdentityExtractor, LossConfig,
};
use litnet::model::ModelConfig;
use litnet::nn::ParamKind;
use litnet::tensor::{grad_check, ops, Tape};
use litnet::Tensor;

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rnd(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
    move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

fn image(shape: &[usize], gen: &mut impl FnMut() -> f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| (gen() + 1.0) / 2.0)
}

#[test]
fn default_config_matches_published_constants() {
    let cfg = LossConfig::default();
    assert_eq!((cfg.w_r, cfg.w_g, cfg.w_b), (1.0, 1.5, 2.0));
    assert_eq!((cfg.lambda_1, cfg.lambda_p, cfg.lambda_s), (1.0, 0.02, 0.5));
    assert_eq!((cfg.k1, cfg.k2), (0.01, 0.03));
    assert_eq!(cfg.ssim_window, 11);
    assert_eq!(cfg.ssim_sigma, 1.5);
    cfg.validate().unwrap();
}

#[test]
fn cl1_worked_examples() {
    let cfg = LossConfig::default();
    let mut g = rnd(1);
    let target = image(&[2, 3, 6, 5], &mut g);
    assert_eq!(cl1_loss(&target, &target, &cfg).unwrap().item().unwrap(), 0.0);

    // +0.1 on the green channel only → w_g · 0.1 = 0.15.
    let green_off = Tensor::from_fn([2, 3, 6, 5], |i| {
        let ch = (i / 30) % 3;
        target.data()[i] + if ch == 1 { 0.1 } else { 0.0 }
    });
    let loss = cl1_loss(&green_off, &target, &cfg).unwrap().item().unwrap();
    assert!((loss - 0.15).abs() < 1e-9, "green-only case gave {loss}");

    // +0.1 everywhere → (1 + 1.5 + 2) · 0.1 = 0.45.
    let all_off = Tensor::from_fn([2, 3, 6, 5], |i| target.data()[i] + 0.1);
    let loss = cl1_loss(&all_off, &target, &cfg).unwrap().item().unwrap();
    assert!((loss - 0.45).abs() < 1e-9, "all-channel case gave {loss}");
}

#[test]
fn cl1_uniform_weights_give_three_times_plain_l1() {
    let cfg = LossConfig {
        w_r: 1.0,
        w_g: 1.0,
        w_b: 1.0,
        ..LossConfig::default()
    };
    let mut g = rnd(2);
    let pred = image(&[2, 3, 7, 9], &mut g);
    let target = image(&[2, 3, 7, 9], &mut g);
    let cl1 = cl1_loss(&pred, &target, &cfg).unwrap().item().unwrap();
    let plain = ops::mean_all(&ops::abs(&ops::sub(&pred, &target).unwrap()).unwrap())
        .unwrap()
        .item()
        .unwrap();
    assert!((cl1 - 3.0 * plain).abs() < 1e-12, "cl1 {cl1} vs 3·L1 {}", 3.0 * plain);
}

#[test]
fn cl1_rejects_bad_inputs() {
    let cfg = LossConfig::default();
    let a = Tensor::<f64>::zeros([1, 3, 4, 4]);
    assert!(cl1_loss(&a, &Tensor::zeros([1, 3, 4, 5]), &cfg).is_err());
    let two_ch = Tensor::<f64>::zeros([1, 2, 4, 4]);
    assert!(cl1_loss(&two_ch, &two_ch, &cfg).is_err());
    let bad = LossConfig {
        w_g: -1.0,
        ..LossConfig::default()
    };
    assert!(cl1_loss(&a, &a, &bad).is_err());
    let even_window = LossConfig {
        ssim_window: 10,
        ..LossConfig::default()
    };
    assert!(cl1_loss(&a, &a, &even_window).is_err());
}

#[test]
fn cl1_gradient_matches_finite_differences() {
    let cfg = LossConfig::default();
    let mut g = rnd(3);
    let target = image(&[1, 3, 5, 4], &mut g);
    // Keep |pred − target| ≥ 0.05 so finite differences stay off the kink.
    let pred = Tensor::from_fn([1, 3, 5, 4], |i| {
        let sign = if g() > 0.0 { 1.0 } else { -1.0 };
        target.data()[i] + sign * (0.05 + 0.2 * (g() + 1.0) / 2.0)
    });
    let report = grad_check(
        |xs| cl1_loss(&xs[0], &xs[1], &cfg),
        &[pred, target],
        EPS,
        1,
    )
    .unwrap();
    assert!(report.passes(TOL), "max_rel_err {}", report.max_rel_err);
}

#[test]
fn ssim_of_identical_images_is_exactly_one() {
    let cfg = LossConfig::default();
    let mut g = rnd(4);
    let x = image(&[2, 3, 13, 12], &mut g);
    let map = ssim_map(&x, &x, &cfg).unwrap();
    assert_eq!(map.dims(), [2, 3, 3, 2]);
    assert!(map.data().iter().all(|v| *v == 1.0), "SSIM(x,x) must be exactly 1");
    assert_eq!(ssim_loss(&x, &x, &cfg).unwrap().item().unwrap(), 0.0);
}

#[test]
fn ssim_constant_images_match_closed_form() {
    let cfg = LossConfig::default();
    let a = Tensor::<f64>::full([1, 3, 16, 16], 0.2);
    let b = Tensor::<f64>::full([1, 3, 16, 16], 0.6);
    // Variances vanish, so only the luminance factor remains:
    // (2·0.2·0.6 + C1) / (0.2² + 0.6² + C1) with C1 = (K1·L)².
    let c1 = 0.01f64 * 0.01;
    let want = (2.0 * 0.2 * 0.6 + c1) / (0.2f64.powi(2) + 0.6f64.powi(2) + c1);
    let map = ssim_map(&a, &b, &cfg).unwrap();
    assert_eq!(map.dims(), [1, 3, 6, 6]);
    for v in map.data() {
        assert!((v - want).abs() < 1e-9, "constant-image SSIM {v} vs {want}");
    }
    let loss = ssim_loss(&a, &b, &cfg).unwrap().item().unwrap();
    assert!((loss - 0.5 * (1.0 - want)).abs() < 1e-9);
}

#[test]
fn ssim_map_is_symmetric() {
    let cfg = LossConfig::default();
    let mut g = rnd(5);
    let a = image(&[1, 3, 14, 14], &mut g);
    let b = image(&[1, 3, 14, 14], &mut g);
    let ab = ssim_map(&a, &b, &cfg).unwrap();
    let ba = ssim_map(&b, &a, &cfg).unwrap();
    assert!(ab.bit_eq(&ba));
}

#[test]
fn ssim_map_values_lie_in_unit_interval() {
    let cfg = LossConfig::default();
    for seed in 6..10 {
        let mut g = rnd(seed);
        let a = image(&[1, 3, 15, 13], &mut g);
        let b = image(&[1, 3, 15, 13], &mut g);
        let map = ssim_map(&a, &b, &cfg).unwrap();
        for v in map.data() {
            assert!(v.abs() <= 1.0 + 1e-12, "SSIM value {v} out of [-1,1]");
        }
    }
}

#[test]
fn ssim_rejects_images_smaller_than_the_window() {
    let cfg = LossConfig::default();
    let small = Tensor::<f64>::zeros([1, 3, 10, 16]);
    assert!(ssim_map(&small, &small, &cfg).is_err());
    let small = Tensor::<f64>::zeros([1, 3, 16, 10]);
    assert!(ssim_loss(&small, &small, &cfg).is_err());
}

#[test]
fn ssim_loss_gradient_matches_finite_differences() {
    let cfg = LossConfig::default();
    let mut g = rnd(10);
    let pred = image(&[1, 3, 12, 12], &mut g);
    let target = image(&[1, 3, 12, 12], &mut g);
    let report = grad_check(
        |xs| ssim_loss(&xs[0], &xs[1], &cfg),
        &[pred, target],
        EPS,
        3,
    )
    .unwrap();
    assert!(
        report.passes(TOL),
        "max_rel_err {} at {:?}",
        report.max_rel_err,
        report.worst
    );
}

#[test]
fn ssim_loss_at_equal_inputs_has_zero_gradient() {
    let cfg = LossConfig::default();
    let mut g = rnd(11);
    let tape = Tape::new();
    let x = tape.track(&image(&[1, 3, 12, 12], &mut g)).unwrap();
    let loss = ssim_loss(&x, &x, &cfg).unwrap();
    let grads = loss.backward().unwrap();
    let gx = grads.get(&x).unwrap();
    let worst = gx.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-10, "gradient at the SSIM maximum should vanish, got {worst}");
}

#[test]
fn perceptual_identity_extractor_reduces_to_mse() {
    let mut g = rnd(12);
    let pred = image(&[2, 3, 6, 6], &mut g);
    let target = image(&[2, 3, 6, 6], &mut g);
    assert_eq!(
        perceptual_loss(&target, &target, &IdentityExtractor).unwrap().item().unwrap(),
        0.0
    );
    let got = perceptual_loss(&pred, &target, &IdentityExtractor).unwrap().item().unwrap();
    let mse: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.numel() as f64;
    assert!((got - mse).abs() < 1e-12, "identity perceptual {got} vs MSE {mse}");
}

#[test]
fn perceptual_default_extractor_matches_definitional_recomputation() {
    let extractor = ConvStackExtractor::<f64>::seeded(40);
    let mut g = rnd(13);
    let pred = image(&[1, 3, 8, 8], &mut g);
    let target = image(&[1, 3, 8, 8], &mut g);
    let got = perceptual_loss(&pred, &target, &extractor).unwrap().item().unwrap();

    let fp = extractor.features(&pred).unwrap();
    let ft = extractor.features(&target).unwrap();
    let want: f64 = fp
        .data()
        .iter()
        .zip(ft.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / fp.numel() as f64;
    assert!((got - want).abs() < 1e-12, "{got} vs definitional {want}");
}

#[test]
fn perceptual_gradient_flows_through_pred_only() {
    let extractor = ConvStackExtractor::<f64>::seeded(41);
    let mut g = rnd(14);
    let tape = Tape::new();
    let pred = tape.track(&image(&[1, 3, 6, 6], &mut g)).unwrap();
    let target = tape.track(&image(&[1, 3, 6, 6], &mut g)).unwrap();
    let loss = perceptual_loss(&pred, &target, &extractor).unwrap();
    let grads = loss.backward().unwrap();
    assert!(grads.get(&pred).is_some(), "pred must receive gradient");
    assert!(grads.get(&target).is_none(), "target branch must be detached");
}

#[test]
fn perceptual_gradient_matches_finite_differences() {
    let extractor = ConvStackExtractor::<f64>::seeded(42);
    let mut g = rnd(15);
    let target = image(&[1, 3, 6, 6], &mut g);
    let pred = image(&[1, 3, 6, 6], &mut g);
    let report = grad_check(
        |xs| perceptual_loss(&xs[0], &target, &extractor),
        &[pred],
        EPS,
        1,
    )
    .unwrap();
    assert!(report.passes(TOL), "max_rel_err {}", report.max_rel_err);
}

#[test]
fn extractor_is_deterministic_and_loads_from_checkpoint_files() {
    let mut g = rnd(16);
    let x = image(&[1, 3, 8, 8], &mut g);
    let a = ConvStackExtractor::<f64>::seeded(7);
    let b = ConvStackExtractor::<f64>::seeded(7);
    let fa = a.features(&x).unwrap();
    assert!(fa.bit_eq(&b.features(&x).unwrap()));
    assert_eq!(fa.dims(), [1, ConvStackExtractor::<f64>::WIDTH, 8, 8]);

    // The documented external-weights hook: write the layer tensors into a
    // checkpoint file, load them back, get identical features.
    let ckpt = Checkpoint {
        config: ModelConfig::default(),
        params: a
            .params()
            .into_iter()
            .map(|(name, t)| (name, ParamKind::Buffer, t))
            .collect(),
        optimizer: None,
        rng: None,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("extractor.litn");
    save_checkpoint(&path, &ckpt).unwrap();
    let loaded = ConvStackExtractor::<f64>::from_checkpoint(&path).unwrap();
    assert!(fa.bit_eq(&loaded.features(&x).unwrap()));

    // A checkpoint without extractor entries is rejected.
    let empty = Checkpoint::<f64> {
        config: ModelConfig::default(),
        params: Vec::new(),
        optimizer: None,
        rng: None,
    };
    let path = dir.path().join("empty.litn");
    save_checkpoint(&path, &empty).unwrap();
    assert!(ConvStackExtractor::<f64>::from_checkpoint(&path).is_err());
}

#[test]
fn total_loss_zero_for_identical_pair() {
    let cfg = LossConfig::default();
    let extractor = ConvStackExtractor::<f64>::seeded(1);
    let mut g = rnd(17);
    let x = image(&[1, 3, 12, 12], &mut g);
    let terms = total_loss(&x, &x, &cfg, &extractor).unwrap();
    assert_eq!(terms.cl1.item().unwrap(), 0.0);
    assert_eq!(terms.perceptual.item().unwrap(), 0.0);
    assert_eq!(terms.ssim.item().unwrap(), 0.0);
    assert_eq!(terms.total.item().unwrap(), 0.0);
}

#[test]
fn total_is_exactly_the_weighted_sum_of_its_terms() {
    let cfg = LossConfig::default();
    let extractor = ConvStackExtractor::<f64>::seeded(2);
    let mut g = rnd(18);
    let pred = image(&[1, 3, 12, 12], &mut g);
    let target = image(&[1, 3, 12, 12], &mut g);
    let terms = total_loss(&pred, &target, &cfg, &extractor).unwrap();
    let c = terms.cl1.item().unwrap();
    let p = terms.perceptual.item().unwrap();
    let s = terms.ssim.item().unwrap();
    assert!(c >= 0.0 && p >= 0.0 && s >= 0.0);
    let want = cfg.lambda_1 * c + cfg.lambda_p * p + cfg.lambda_s * s;
    assert_eq!(terms.total.item().unwrap(), want);

    // Degenerate weights: λp = λs = 0 leaves exactly λ1·cl1.
    let degenerate = LossConfig {
        lambda_p: 0.0,
        lambda_s: 0.0,
        ..cfg
    };
    let terms = total_loss(&pred, &target, &degenerate, &extractor).unwrap();
    assert_eq!(
        terms.total.item().unwrap(),
        degenerate.lambda_1 * terms.cl1.item().unwrap()
    );
}
