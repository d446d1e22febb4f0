//! Parameter registry and the composite differentiable blocks the model is
//! assembled from: conv-BN-PReLU triples, CBAM, the spatial attention gate,
//! and the encoder/decoder layers.
//!
//! Parameters live in a [`ParamStore`] keyed by dotted names. Blocks hold
//! only [`ParamId`]s plus static geometry, so a block is cheap to clone and
//! the full parameter set can be serialized or rebound without touching the
//! blocks. During training a [`TrainBinding`] holds tape-tracked clones of
//! every trainable tensor; [`ForwardCtx::param`] resolves through the binding
//! first so the same forward code serves inference, training, and gradient
//! checking.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::tensor::ops::{self, BnMode};
use crate::tensor::{Element, NodeId, Tape, Tensor};

/// BatchNorm stabilizer added to variances.
pub const BN_EPS: f64 = 1e-5;
/// Momentum for running-statistic updates: new = (1-m)*old + m*batch.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ParamKind {
    /// Updated by the optimizer; tracked during training.
    Trainable,
    /// Serialized state that is not optimized (BN running statistics).
    Buffer,
}

/// Stable handle into a [`ParamStore`]; ids follow registration order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ParamId(usize);

struct Entry<T: Element> {
    name: String,
    kind: ParamKind,
    value: Tensor<T>,
}

struct StoreInner<T: Element> {
    entries: Vec<Entry<T>>,
    index: HashMap<String, usize>,
}

/// Named parameter registry with interior mutability.
///
/// Reads hand out cheap clones (tensor storage is shared), so no lock is held
/// while compute runs. The write path is the optimizer, checkpoint loading,
/// and BN running-stat updates.
pub struct ParamStore<T: Element> {
    inner: RwLock<StoreInner<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> ParamStore<T> {
        ParamStore {
            inner: RwLock::new(StoreInner {
                entries: Vec::new(),
                index: HashMap::new(),
            }),
        }
    }

    pub fn register(&self, name: &str, kind: ParamKind, value: Tensor<T>) -> Result<ParamId> {
        let mut inner = self.inner.write().unwrap();
        if inner.index.contains_key(name) {
            return Err(Error::invalid(
                "parameter name",
                format!("'{name}' registered twice"),
            ));
        }
        let id = ParamId(inner.entries.len());
        inner.index.insert(name.to_string(), id.0);
        inner.entries.push(Entry {
            name: name.to_string(),
            kind,
            value,
        });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> Tensor<T> {
        self.inner.read().unwrap().entries[id.0].value.clone()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.inner.read().unwrap().index.get(name).copied().map(ParamId)
    }

    pub fn get_by_name(&self, name: &str) -> Option<Tensor<T>> {
        let inner = self.inner.read().unwrap();
        inner.index.get(name).map(|&i| inner.entries[i].value.clone())
    }

    pub fn name(&self, id: ParamId) -> String {
        self.inner.read().unwrap().entries[id.0].name.clone()
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.inner.read().unwrap().entries[id.0].kind
    }

    /// Replace a parameter's value. The shape must match; tracking state is
    /// the caller's business (gradient checking deliberately stores tracked
    /// tensors so the forward pass records onto their tape).
    pub fn set(&self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let mut inner = self.inner.write().unwrap();
        let entry = &mut inner.entries[id.0];
        if entry.value.dims() != value.dims() {
            return Err(Error::invalid(
                "parameter shape",
                format!(
                    "'{}': expected {:?}, got {:?}",
                    entry.name,
                    entry.value.dims(),
                    value.dims()
                ),
            ));
        }
        entry.value = value;
        Ok(())
    }

    /// Overwrite a buffer from raw values (BN running-stat update path).
    pub fn update_buffer(&self, id: ParamId, values: Vec<T>) -> Result<()> {
        let mut inner = self.inner.write().unwrap();
        let entry = &mut inner.entries[id.0];
        if entry.kind != ParamKind::Buffer {
            return Err(Error::invalid(
                "buffer update",
                format!("'{}' is not a buffer", entry.name),
            ));
        }
        if values.len() != entry.value.numel() {
            return Err(Error::invalid(
                "buffer update",
                format!(
                    "'{}': expected {} values, got {}",
                    entry.name,
                    entry.value.numel(),
                    values.len()
                ),
            ));
        }
        entry.value = Tensor::from_vec(entry.value.dims().to_vec(), values)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All ids in registration order.
    pub fn ids(&self) -> Vec<ParamId> {
        (0..self.len()).map(ParamId).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.inner
            .read()
            .unwrap()
            .entries
            .iter()
            .map(|e| e.name.clone())
            .collect()
    }

    pub fn ids_of_kind(&self, kind: ParamKind) -> Vec<ParamId> {
        self.inner
            .read()
            .unwrap()
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == kind)
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    /// Total element count across parameters of `kind`.
    pub fn numel_of_kind(&self, kind: ParamKind) -> usize {
        self.inner
            .read()
            .unwrap()
            .entries
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.value.numel())
            .sum()
    }

    /// (name, kind, value) triples in registration order, for serialization.
    pub fn snapshot(&self) -> Vec<(String, ParamKind, Tensor<T>)> {
        self.inner
            .read()
            .unwrap()
            .entries
            .iter()
            .map(|e| (e.name.clone(), e.kind, e.value.clone()))
            .collect()
    }

    /// Track every trainable parameter on `tape` for one training step.
    pub fn bind(&self, tape: &Tape<T>) -> Result<TrainBinding<T>> {
        let inner = self.inner.read().unwrap();
        let mut entries = Vec::with_capacity(inner.entries.len());
        for e in &inner.entries {
            entries.push(match e.kind {
                ParamKind::Trainable => Some(tape.track(&e.value)?),
                ParamKind::Buffer => None,
            });
        }
        Ok(TrainBinding { entries })
    }
}

/// Tape-tracked clones of the trainable parameters for one step.
///
/// Invalid after `backward` consumes the tape; create a fresh binding (and
/// tape) per step.
pub struct TrainBinding<T: Element> {
    entries: Vec<Option<Tensor<T>>>,
}

impl<T: Element> TrainBinding<T> {
    fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.entries.get(id.0).and_then(|e| e.as_ref())
    }

    /// The tape-tracked copy of a trainable parameter. Custom training
    /// loops build their loss from these handles so gradients reach the
    /// same nodes the optimizer reads.
    pub fn tracked(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.get(id)
    }

    /// Tape node of a trainable parameter; the optimizer looks gradients up
    /// by node.
    pub fn node_of(&self, id: ParamId) -> Option<NodeId> {
        self.get(id).and_then(|t| t.node())
    }
}

/// Everything a block forward needs: where parameters come from and whether
/// BatchNorm runs in batch-statistics mode.
#[derive(Clone, Copy)]
pub struct ForwardCtx<'a, T: Element> {
    pub store: &'a ParamStore<T>,
    pub binding: Option<&'a TrainBinding<T>>,
    pub mode: Mode,
}

impl<'a, T: Element> ForwardCtx<'a, T> {
    pub fn eval(store: &'a ParamStore<T>) -> Self {
        ForwardCtx {
            store,
            binding: None,
            mode: Mode::Eval,
        }
    }

    pub fn train(store: &'a ParamStore<T>, binding: Option<&'a TrainBinding<T>>) -> Self {
        ForwardCtx {
            store,
            binding,
            mode: Mode::Train,
        }
    }

    /// Resolve a parameter: the binding's tracked clone when present,
    /// otherwise the stored value.
    pub fn param(&self, id: ParamId) -> Tensor<T> {
        if let Some(b) = self.binding {
            if let Some(t) = b.get(id) {
                return t.clone();
            }
        }
        self.store.get(id)
    }

    fn bn_mode(&self) -> BnMode {
        match self.mode {
            Mode::Train => BnMode::Train,
            Mode::Eval => BnMode::Eval,
        }
    }
}

/// How convolution weights are filled at registration.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// He (fan-in) normal initialization.
    He,
    /// All zeros — used by the reconstruction head so a fresh model is the
    /// identity residual.
    Zeros,
}

fn conv_weight<T: Element>(
    dims: [usize; 4],
    init: Init,
    rng: &mut Stream,
) -> Tensor<T> {
    match init {
        Init::Zeros => Tensor::zeros(dims.to_vec()),
        Init::He => {
            let fan_in = (dims[1] * dims[2] * dims[3]) as f64;
            let std = (2.0 / fan_in).sqrt();
            Tensor::from_fn(dims.to_vec(), |_| T::cast(rng.normal() * std))
        }
    }
}

/// conv → batch norm → PReLU, the unit every feature path is built from.
pub struct ConvBlock {
    weight: ParamId,
    bias: ParamId,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
    alpha: ParamId,
    kernel: usize,
    in_ch: usize,
    out_ch: usize,
}

impl ConvBlock {
    pub fn new<T: Element>(
        store: &ParamStore<T>,
        prefix: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        rng: &mut Stream,
    ) -> Result<ConvBlock> {
        Self::with_init(store, prefix, in_ch, out_ch, kernel, Init::He, rng)
    }

    pub fn with_init<T: Element>(
        store: &ParamStore<T>,
        prefix: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        init: Init,
        rng: &mut Stream,
    ) -> Result<ConvBlock> {
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::invalid(
                "conv block",
                format!("'{prefix}': zero channel width"),
            ));
        }
        if kernel % 2 == 0 {
            return Err(Error::invalid(
                "conv block",
                format!("'{prefix}': kernel {kernel} must be odd"),
            ));
        }
        let t = ParamKind::Trainable;
        let b = ParamKind::Buffer;
        Ok(ConvBlock {
            weight: store.register(
                &format!("{prefix}.conv.weight"),
                t,
                conv_weight([out_ch, in_ch, kernel, kernel], init, rng),
            )?,
            bias: store.register(&format!("{prefix}.conv.bias"), t, Tensor::zeros([out_ch]))?,
            gamma: store.register(
                &format!("{prefix}.bn.gamma"),
                t,
                Tensor::full([out_ch], T::cast(1.0)),
            )?,
            beta: store.register(&format!("{prefix}.bn.beta"), t, Tensor::zeros([out_ch]))?,
            running_mean: store.register(
                &format!("{prefix}.bn.running_mean"),
                b,
                Tensor::zeros([out_ch]),
            )?,
            running_var: store.register(
                &format!("{prefix}.bn.running_var"),
                b,
                Tensor::full([out_ch], T::cast(1.0)),
            )?,
            alpha: store.register(
                &format!("{prefix}.prelu.alpha"),
                t,
                Tensor::full([out_ch], T::cast(0.25)),
            )?,
            kernel,
            in_ch,
            out_ch,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn forward<T: Element>(&self, ctx: ForwardCtx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let w = ctx.param(self.weight);
        let bias = ctx.param(self.bias);
        let y = ops::conv2d(x, &w, Some(&bias), (self.kernel - 1) / 2)?;

        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        let rm = ctx.store.get(self.running_mean);
        let rv = ctx.store.get(self.running_var);
        let (y, stats) =
            ops::batch_norm2d(&y, &gamma, &beta, &rm, &rv, ctx.bn_mode(), BN_EPS, BN_MOMENTUM)?;
        if let Some((new_mean, new_var)) = stats {
            ctx.store.update_buffer(self.running_mean, new_mean)?;
            ctx.store.update_buffer(self.running_var, new_var)?;
        }

        let alpha = ctx.param(self.alpha);
        ops::prelu(&y, &alpha)
    }
}

/// Convolutional block attention: channel gate from pooled descriptors
/// through a shared two-layer MLP, then a spatial gate from a 7×7 conv over
/// the (mean, max) channel maps.
pub struct Cbam {
    mlp1: ParamId,
    mlp2: ParamId,
    spatial: ParamId,
    channels: usize,
}

impl Cbam {
    pub fn new<T: Element>(
        store: &ParamStore<T>,
        prefix: &str,
        channels: usize,
        ratio: usize,
        rng: &mut Stream,
    ) -> Result<Cbam> {
        if channels == 0 || ratio == 0 {
            return Err(Error::invalid(
                "cbam",
                format!("'{prefix}': channels and ratio must be positive"),
            ));
        }
        let hidden = (channels / ratio).max(1);
        let t = ParamKind::Trainable;
        Ok(Cbam {
            mlp1: store.register(
                &format!("{prefix}.channel.mlp1.weight"),
                t,
                conv_weight([hidden, channels, 1, 1], Init::He, rng),
            )?,
            mlp2: store.register(
                &format!("{prefix}.channel.mlp2.weight"),
                t,
                conv_weight([channels, hidden, 1, 1], Init::He, rng),
            )?,
            spatial: store.register(
                &format!("{prefix}.spatial.weight"),
                t,
                conv_weight([1, 2, 7, 7], Init::He, rng),
            )?,
            channels,
        })
    }

    pub fn forward<T: Element>(&self, ctx: ForwardCtx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.shape().nchw()?;
        if c != self.channels {
            return Err(Error::shape(
                "cbam input",
                self.channels.to_string(),
                c.to_string(),
            ));
        }
        let w1 = ctx.param(self.mlp1);
        let w2 = ctx.param(self.mlp2);
        // Shared MLP over both pooled descriptors, 1×1 convs on [N,C,1,1].
        let mlp = |p: &Tensor<T>| -> Result<Tensor<T>> {
            ops::conv2d(&ops::relu(&ops::conv2d(p, &w1, None, 0)?)?, &w2, None, 0)
        };
        let avg = mlp(&ops::spatial_mean(x)?)?;
        let max = mlp(&ops::spatial_max(x)?)?;
        let gate_c = ops::sigmoid(&ops::add(&avg, &max)?)?;
        let xc = ops::mul(x, &gate_c)?;

        let desc = ops::concat_channels(&[&ops::channel_mean(&xc)?, &ops::channel_max(&xc)?])?;
        let sw = ctx.param(self.spatial);
        let gate_s = ops::sigmoid(&ops::conv2d(&desc, &sw, None, 3)?)?;
        ops::mul(&xc, &gate_s)
    }
}

/// Skip-connection gate: x ⊗ sigmoid(conv7×7(concat(mean_c, max_c))).
pub struct SpatialAttention {
    weight: ParamId,
}

impl SpatialAttention {
    pub fn new<T: Element>(
        store: &ParamStore<T>,
        prefix: &str,
        rng: &mut Stream,
    ) -> Result<SpatialAttention> {
        Ok(SpatialAttention {
            weight: store.register(
                &format!("{prefix}.weight"),
                ParamKind::Trainable,
                conv_weight([1, 2, 7, 7], Init::He, rng),
            )?,
        })
    }

    pub fn forward<T: Element>(&self, ctx: ForwardCtx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let desc = ops::concat_channels(&[&ops::channel_mean(x)?, &ops::channel_max(x)?])?;
        let w = ctx.param(self.weight);
        let gate = ops::sigmoid(&ops::conv2d(&desc, &w, None, 3)?)?;
        ops::mul(x, &gate)
    }
}

/// Encoder stage: four parallel 1×1 conv-BN-PReLU branches, concatenated and
/// pixel-unshuffled by 2. C channels in, 16·(C/branch_divisor) out at half
/// resolution.
pub struct EncoderLayer {
    branches: [ConvBlock; 4],
    out_ch: usize,
}

impl EncoderLayer {
    pub fn new<T: Element>(
        store: &ParamStore<T>,
        prefix: &str,
        in_ch: usize,
        branch_divisor: usize,
        rng: &mut Stream,
    ) -> Result<EncoderLayer> {
        if branch_divisor == 0 || in_ch % branch_divisor != 0 || in_ch / branch_divisor == 0 {
            return Err(Error::invalid(
                "encoder layer",
                format!("'{prefix}': {in_ch} channels not divisible into branches of {in_ch}/{branch_divisor}"),
            ));
        }
        let cb = in_ch / branch_divisor;
        let mut make = |i: usize| {
            ConvBlock::new(store, &format!("{prefix}.branch{i}"), in_ch, cb, 1, rng)
        };
        Ok(EncoderLayer {
            branches: [make(0)?, make(1)?, make(2)?, make(3)?],
            out_ch: 16 * cb,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    /// Channel count before the unshuffle (what the decoder's skip sees is
    /// the post-unshuffle count, `out_channels`).
    pub fn concat_channels(&self) -> usize {
        self.out_ch / 4
    }

    pub fn forward<T: Element>(&self, ctx: ForwardCtx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, _, h, w) = x.shape().nchw()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::invalid(
                "encoder layer",
                format!("spatial dims {h}x{w} must be even"),
            ));
        }
        let b: Vec<Tensor<T>> = self
            .branches
            .iter()
            .map(|blk| blk.forward(ctx, x))
            .collect::<Result<_>>()?;
        let cat = ops::concat_channels(&[&b[0], &b[1], &b[2], &b[3]])?;
        ops::pixel_unshuffle(&cat, 2)
    }
}

/// Decoder stage: concat(d_prev, gated skip) at matched resolution, then
/// pixel-shuffle by 2. Channels quarter; spatial dims double.
pub struct DecoderLayer {
    attention: Option<SpatialAttention>,
}

impl DecoderLayer {
    pub fn new<T: Element>(
        store: &ParamStore<T>,
        prefix: &str,
        gated: bool,
        rng: &mut Stream,
    ) -> Result<DecoderLayer> {
        let attention = if gated {
            Some(SpatialAttention::new(store, &format!("{prefix}.skip"), rng)?)
        } else {
            None
        };
        Ok(DecoderLayer { attention })
    }

    pub fn forward<T: Element>(
        &self,
        ctx: ForwardCtx<'_, T>,
        d_prev: &Tensor<T>,
        skip: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let (_, _, hp, wp) = d_prev.shape().nchw()?;
        let (_, _, hs, ws) = skip.shape().nchw()?;
        if (hp, wp) != (hs, ws) {
            return Err(Error::shape(
                "decoder skip resolution",
                format!("{hp}x{wp}"),
                format!("{hs}x{ws}"),
            ));
        }
        let gated = match &self.attention {
            Some(attn) => attn.forward(ctx, skip)?,
            None => skip.clone(),
        };
        let cat = ops::concat_channels(&[d_prev, &gated])?;
        ops::pixel_shuffle(&cat, 2)
    }
}
