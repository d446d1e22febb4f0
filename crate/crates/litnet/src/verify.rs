//! The curated finite-difference suite behind `litnet gradcheck`.
//!
//! Every primitive op and composite block is checked against central
//! differences in `f64`; `full` adds an end-to-end pass through a
//! toy-width model and the complete training objective. Runs in seconds —
//! shapes are tiny and large inputs are strided.

use crate::error::Result;
use crate::loss::{cl1_loss, perceptual_loss, ssim_loss, total_loss, ConvStackExtractor, LossConfig};
use crate::model::{LitNet, ModelConfig};
use crate::nn::{
    Cbam, ConvBlock, DecoderLayer, EncoderLayer, ForwardCtx, Mode, ParamKind, ParamStore,
    SpatialAttention, BN_EPS, BN_MOMENTUM,
};
use crate::tensor::ops::BnMode;
use crate::rng::Stream;
use crate::tensor::{grad_check, ops, Tensor};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckItem {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tol: f64,
    /// Elements compared against finite differences.
    pub checked: usize,
}

impl CheckItem {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

const TOL_OPS: f64 = 1e-4;
const TOL_FULL: f64 = 1e-3;
const EPS: f64 = 1e-6;

fn filler(seed: u64) -> impl FnMut() -> f64 {
    let mut rng = Stream::seeded(seed);
    move || rng.range(-1.0, 1.0)
}

fn tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut g = filler(seed);
    Tensor::from_fn(shape.to_vec(), |_| g())
}

/// Values kept away from zero (for |x|, ReLU kinks, divisions).
fn offset_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut g = filler(seed);
    Tensor::from_fn(shape.to_vec(), |_| {
        let v = g();
        v + 0.1 * v.signum() + if v == 0.0 { 0.1 } else { 0.0 }
    })
}

/// Deterministic probe so the scalar loss is sensitive to every output.
fn probe_loss(out: &Tensor<f64>) -> Result<Tensor<f64>> {
    let probe = Tensor::from_fn(out.dims().to_vec(), |i| {
        0.75 + 0.5 * ((i.wrapping_mul(2654435761) % 97) as f64 / 97.0)
    });
    ops::mean_all(&ops::mul(out, &probe)?)
}

fn check(
    name: &'static str,
    tol: f64,
    stride: usize,
    inputs: &[Tensor<f64>],
    f: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
) -> Result<CheckItem> {
    let report = grad_check(|t| probe_loss(&f(t)?), inputs, EPS, stride)?;
    Ok(CheckItem {
        name,
        max_rel_err: report.max_rel_err,
        tol,
        checked: report.checked,
    })
}

/// FD over a block's input plus every trainable parameter in its store:
/// perturbed parameter tensors are written back before each forward, so
/// parameter gradients are verified alongside input gradients.
fn check_block(
    name: &'static str,
    store: ParamStore<f64>,
    inputs: Vec<Tensor<f64>>,
    stride: usize,
    fwd: impl Fn(ForwardCtx<'_, f64>, &[Tensor<f64>]) -> Result<Tensor<f64>>,
) -> Result<CheckItem> {
    let ids = store.ids_of_kind(ParamKind::Trainable);
    let n_inputs = inputs.len();
    let mut all = inputs;
    all.extend(ids.iter().map(|&id| store.get(id)));
    check(name, TOL_OPS, stride, &all, |t| {
        for (i, &id) in ids.iter().enumerate() {
            store.set(id, t[n_inputs + i].clone())?;
        }
        let ctx = ForwardCtx {
            store: &store,
            binding: None,
            mode: Mode::Train,
        };
        fwd(ctx, &t[..n_inputs])
    })
}

fn primitive_checks(items: &mut Vec<CheckItem>) -> Result<()> {
    let a = tensor(&[2, 3, 4, 4], 1);
    let b = tensor(&[2, 3, 4, 4], 2);

    items.push(check("op add", TOL_OPS, 1, &[a.clone(), b.clone()], |t| ops::add(&t[0], &t[1]))?);
    items.push(check("op sub", TOL_OPS, 1, &[a.clone(), b.clone()], |t| ops::sub(&t[0], &t[1]))?);
    items.push(check("op mul", TOL_OPS, 1, &[a.clone(), b.clone()], |t| ops::mul(&t[0], &t[1]))?);
    let denom = Tensor::from_fn(vec![2, 3, 4, 4], {
        let mut g = filler(3);
        move |_| 1.5 + 0.4 * g()
    });
    items.push(check("op div", TOL_OPS, 1, &[a.clone(), denom], |t| ops::div(&t[0], &t[1]))?);
    items.push(check("op scale", TOL_OPS, 1, &[a.clone()], |t| ops::scale(&t[0], -1.7))?);
    items.push(check("op add_scalar", TOL_OPS, 1, &[a.clone()], |t| ops::add_scalar(&t[0], 0.3))?);
    let off = offset_tensor(&[2, 3, 4, 4], 4);
    items.push(check("op abs", TOL_OPS, 1, &[off.clone()], |t| ops::abs(&t[0]))?);
    items.push(check("op relu", TOL_OPS, 1, &[off.clone()], |t| ops::relu(&t[0]))?);
    items.push(check("op sigmoid", TOL_OPS, 1, &[a.clone()], |t| ops::sigmoid(&t[0]))?);
    let alpha = tensor(&[3], 5);
    items.push(check("op prelu", TOL_OPS, 1, &[off.clone(), alpha], |t| ops::prelu(&t[0], &t[1]))?);

    items.push(check("op mean_all", TOL_OPS, 1, &[a.clone()], |t| ops::mean_all(&t[0]))?);
    items.push(check("op sum_all", TOL_OPS, 1, &[a.clone()], |t| ops::sum_all(&t[0]))?);
    items.push(check("op spatial_mean", TOL_OPS, 1, &[a.clone()], |t| ops::spatial_mean(&t[0]))?);
    items.push(check("op spatial_max", TOL_OPS, 1, &[a.clone()], |t| ops::spatial_max(&t[0]))?);
    items.push(check("op channel_mean", TOL_OPS, 1, &[a.clone()], |t| ops::channel_mean(&t[0]))?);
    items.push(check("op channel_max", TOL_OPS, 1, &[a.clone()], |t| ops::channel_max(&t[0]))?);

    let c1 = tensor(&[1, 2, 3, 3], 6);
    let c2 = tensor(&[1, 3, 3, 3], 7);
    let c3 = tensor(&[1, 1, 3, 3], 8);
    items.push(check("op concat_channels", TOL_OPS, 1, &[c1, c2, c3], |t| {
        ops::concat_channels(&[&t[0], &t[1], &t[2]])
    })?);
    items.push(check("op slice_channels", TOL_OPS, 1, &[a.clone()], |t| {
        ops::slice_channels(&t[0], 1, 2)
    })?);
    items.push(check("op crop_spatial", TOL_OPS, 1, &[a.clone()], |t| {
        ops::crop_spatial(&t[0], 1, 1, 2, 3)
    })?);
    items.push(check("op pixel_shuffle", TOL_OPS, 1, &[tensor(&[1, 8, 3, 3], 9)], |t| {
        ops::pixel_shuffle(&t[0], 2)
    })?);
    items.push(check("op pixel_unshuffle", TOL_OPS, 1, &[tensor(&[1, 2, 4, 4], 10)], |t| {
        ops::pixel_unshuffle(&t[0], 2)
    })?);
    // bicubic_upsample is deliberately forward-only (the superres skip
    // feeds it a detached input), so it has no gradient to verify.

    let x = tensor(&[1, 3, 6, 6], 12);
    let w3 = tensor(&[4, 3, 3, 3], 13);
    let bias = tensor(&[4], 14);
    items.push(check("op conv2d k3", TOL_OPS, 1, &[x.clone(), w3, bias.clone()], |t| {
        ops::conv2d(&t[0], &t[1], Some(&t[2]), 1)
    })?);
    let w1 = tensor(&[4, 3, 1, 1], 15);
    items.push(check("op conv2d k1", TOL_OPS, 1, &[x.clone(), w1, bias], |t| {
        ops::conv2d(&t[0], &t[1], Some(&t[2]), 0)
    })?);

    let bn_x = tensor(&[2, 3, 4, 4], 16);
    let gamma = Tensor::from_fn(vec![3], {
        let mut g = filler(17);
        move |_| 1.0 + 0.3 * g()
    });
    let beta = tensor(&[3], 18);
    let running = (tensor(&[3], 19), offset_tensor(&[3], 20));
    let running = (
        running.0,
        Tensor::from_fn(vec![3], {
            let data = running.1;
            move |i| data.data()[i].abs() + 0.5
        }),
    );
    for (name, mode) in [("op batch_norm2d train", BnMode::Train), ("op batch_norm2d eval", BnMode::Eval)] {
        let rm = running.0.clone();
        let rv = running.1.clone();
        items.push(check(name, TOL_OPS, 1, &[bn_x.clone(), gamma.clone(), beta.clone()], move |t| {
            Ok(ops::batch_norm2d(&t[0], &t[1], &t[2], &rm, &rv, mode, BN_EPS, BN_MOMENTUM)?.0)
        })?);
    }
    Ok(())
}

fn block_checks(items: &mut Vec<CheckItem>) -> Result<()> {
    let mut rng = Stream::seeded(21);

    let store = ParamStore::<f64>::new();
    let blk = ConvBlock::new(&store, "blk", 3, 4, 3, &mut rng)?;
    items.push(check_block("block conv_bn_prelu", store, vec![tensor(&[2, 3, 6, 6], 22)], 1, move |ctx, t| {
        blk.forward(ctx, &t[0])
    })?);

    let store = ParamStore::<f64>::new();
    let cbam = Cbam::new(&store, "cbam", 8, 4, &mut rng)?;
    items.push(check_block("block cbam", store, vec![tensor(&[2, 8, 6, 6], 23)], 2, move |ctx, t| {
        cbam.forward(ctx, &t[0])
    })?);

    let store = ParamStore::<f64>::new();
    let sa = SpatialAttention::new(&store, "sa", &mut rng)?;
    items.push(check_block("block spatial_attention", store, vec![tensor(&[2, 4, 6, 6], 24)], 2, move |ctx, t| {
        sa.forward(ctx, &t[0])
    })?);

    let store = ParamStore::<f64>::new();
    let enc = EncoderLayer::new(&store, "enc", 8, 4, &mut rng)?;
    items.push(check_block("block encoder", store, vec![tensor(&[1, 8, 6, 6], 25)], 2, move |ctx, t| {
        enc.forward(ctx, &t[0])
    })?);

    let store = ParamStore::<f64>::new();
    let dec = DecoderLayer::new(&store, "dec", true, &mut rng)?;
    items.push(check_block(
        "block decoder",
        store,
        vec![tensor(&[1, 8, 4, 4], 26), tensor(&[1, 8, 4, 4], 27)],
        2,
        move |ctx, t| dec.forward(ctx, &t[0], &t[1]),
    )?);

    let cfg = LossConfig::default();
    let img = |seed| {
        let mut g = filler(seed);
        Tensor::from_fn(vec![1, 3, 12, 12], |_| 0.5 + 0.45 * g())
    };
    let pred = img(28);
    let target = img(29);
    {
        let cfg = cfg.clone();
        items.push(check("loss cl1", TOL_OPS, 1, &[offset_tensor(&[1, 3, 5, 5], 30), tensor(&[1, 3, 5, 5], 31)], move |t| {
            cl1_loss(&t[0], &t[1], &cfg)
        })?);
    }
    {
        let cfg = cfg.clone();
        items.push(check("loss ssim", TOL_OPS, 3, &[pred.clone(), target.clone()], move |t| {
            ssim_loss(&t[0], &t[1], &cfg)
        })?);
    }
    // The perceptual target is detached by contract (gradient flows through
    // the prediction only), so the target must stay a constant here —
    // perturbing it would measure a derivative the loss deliberately drops.
    {
        let extractor = ConvStackExtractor::<f64>::seeded(1234);
        let target = target.clone();
        items.push(check("loss perceptual", TOL_OPS, 3, &[pred.clone()], move |t| {
            perceptual_loss(&t[0], &target, &extractor)
        })?);
    }
    {
        let extractor = ConvStackExtractor::<f64>::seeded(1234);
        items.push(check("loss total", TOL_OPS, 3, &[pred], move |t| {
            Ok(total_loss(&t[0], &target, &cfg, &extractor)?.total)
        })?);
    }
    Ok(())
}

fn full_model_check(items: &mut Vec<CheckItem>) -> Result<()> {
    let cfg = ModelConfig {
        base_width: 2,
        fc_width: 8,
        ..ModelConfig::default()
    };
    let model: LitNet<f64> = LitNet::new(cfg, 33)?;
    // Move the reconstruction head off its zero init: there every head
    // pre-activation sits exactly on the PReLU kink, where a central
    // difference straddles two slopes and no FD comparison is valid.
    let head = model.store().id("recon.head.conv.weight").expect("head weight");
    let dims = model.store().get(head).dims().to_vec();
    let mut g = filler(35);
    model.store().set(head, Tensor::from_fn(dims, |_| 0.3 * g()))?;
    let loss_cfg = LossConfig::default();
    let extractor = ConvStackExtractor::<f64>::seeded(1234);

    let mut g = filler(34);
    let x = Tensor::from_fn(vec![1, 3, 16, 16], |_| 0.5 + 0.45 * g());
    let target = Tensor::from_fn(vec![1, 3, 16, 16], |_| 0.5 + 0.45 * g());

    let store = model.store();
    let ids = store.ids_of_kind(ParamKind::Trainable);
    let mut inputs = vec![x];
    inputs.extend(ids.iter().map(|&id| store.get(id)));

    // Strided: the toy model still has thousands of parameter elements.
    let report = grad_check(
        |t| {
            for (i, &id) in ids.iter().enumerate() {
                store.set(id, t[i + 1].clone())?;
            }
            let pred = model.forward(&t[0], Mode::Train, None)?;
            Ok(total_loss(&pred, &target, &loss_cfg, &extractor)?.total)
        },
        &inputs,
        EPS,
        53,
    )?;
    items.push(CheckItem {
        name: "full litnet forward + total loss (toy width, 16x16)",
        max_rel_err: report.max_rel_err,
        tol: TOL_FULL,
        checked: report.checked,
    });
    Ok(())
}

/// Run the suite; `full` appends the end-to-end model check.
pub fn run_suite(full: bool) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    primitive_checks(&mut items)?;
    block_checks(&mut items)?;
    if full {
        full_model_check(&mut items)?;
    }
    Ok(items)
}
