//! The full network: a multi-receptive-field front end (per-channel branches
//! with kernel sizes 3/5/7 next to a shared 1×1 path, optionally gated by
//! CBAM), a three-level encoder/decoder trunk with spatially-gated skips, and
//! a residual reconstruction head for enhancement or ×s super-resolution.

use crate::error::{Error, Result};
use crate::nn::{
    Cbam, ConvBlock, DecoderLayer, EncoderLayer, ForwardCtx, Init, Mode, ParamKind, ParamStore,
    TrainBinding,
};
use crate::rng::Stream;
use crate::tensor::ops;
use crate::tensor::{Element, Tape, Tensor};

/// What the reconstruction head produces.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TaskMode {
    /// Same-resolution enhancement: head emits a 3-channel residual added to
    /// the input.
    Enhance,
    /// ×s super-resolution: head emits 3s² channels, pixel-shuffled and added
    /// to a bicubic upsample of the input. Scale must be 2, 3, or 4.
    SuperRes(u32),
}

impl TaskMode {
    pub fn scale(self) -> usize {
        match self {
            TaskMode::Enhance => 1,
            TaskMode::SuperRes(s) => s as usize,
        }
    }
}

/// Architecture hyperparameters plus the ablation switches.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ModelConfig {
    /// Channels of the 1×1 path and of each kernel-specific branch (C0).
    pub base_width: usize,
    /// Channels of the fused feature F_c (C1).
    pub fc_width: usize,
    /// Each encoder branch emits in_channels / branch_divisor channels.
    pub branch_divisor: usize,
    /// CBAM channel-MLP reduction ratio.
    pub cbam_ratio: usize,
    pub task: TaskMode,
    /// Gate each front-end branch with CBAM.
    pub mran_attention: bool,
    /// Gate each skip connection with spatial attention.
    pub skip_attention: bool,
    /// Ablation: use 3×3 for all three branch kernels instead of 3/5/7.
    pub fixed_kernel: bool,
    /// Ablation: feed each branch its own color channel (on) or full RGB (off).
    pub channel_split: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_width: 32,
            fc_width: 64,
            branch_divisor: 8,
            cbam_ratio: 4,
            task: TaskMode::Enhance,
            mran_attention: true,
            skip_attention: true,
            fixed_kernel: false,
            channel_split: true,
        }
    }
}

/// Channel widths at every stage, derived once from the config.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ChannelPlan {
    /// Width of f_1 and of each kernel branch (C0).
    pub branch: usize,
    /// concat of the three gated branches: 6·C0.
    pub f_s: usize,
    /// Fused width C1 entering the encoder trunk.
    pub f_c: usize,
    /// Post-unshuffle widths of the three encoder outputs.
    pub encoders: [usize; 3],
    /// Bottleneck width (equals the deepest encoder).
    pub bottleneck: usize,
    /// Decoder output widths, shallowest last.
    pub decoders: [usize; 3],
    /// concat(F_c, D_3).
    pub f_d: usize,
    /// Reconstruction head output channels (3 or 3s²).
    pub head_out: usize,
}

impl ModelConfig {
    /// Check widths and divisibility and lay out the channel plan.
    pub fn validate(&self) -> Result<ChannelPlan> {
        if self.base_width == 0 || self.fc_width == 0 {
            return Err(Error::invalid("model config", "widths must be positive"));
        }
        if self.cbam_ratio == 0 {
            return Err(Error::invalid("model config", "cbam_ratio must be positive"));
        }
        if let TaskMode::SuperRes(s) = self.task {
            if !(2..=4).contains(&s) {
                return Err(Error::invalid(
                    "model config",
                    format!("super-resolution scale {s} not in 2..=4"),
                ));
            }
        }
        let mut encoders = [0usize; 3];
        let mut width = self.fc_width;
        for (i, e) in encoders.iter_mut().enumerate() {
            if self.branch_divisor == 0
                || width % self.branch_divisor != 0
                || width / self.branch_divisor == 0
            {
                return Err(Error::invalid(
                    "model config",
                    format!(
                        "encoder {} input width {width} is not divisible into \
                         {}-way branch channels (branch_divisor {})",
                        i + 1,
                        4,
                        self.branch_divisor
                    ),
                ));
            }
            width = 16 * (width / self.branch_divisor);
            *e = width;
        }
        // Decoder i consumes concat(prev, encoder skip) and shuffles by 2.
        let bottleneck = encoders[2];
        let mut decoders = [0usize; 3];
        let mut prev = bottleneck;
        for i in 0..3 {
            let skip = encoders[2 - i];
            let cat = prev + skip;
            if cat % 4 != 0 {
                return Err(Error::invalid(
                    "model config",
                    format!("decoder {} concat width {cat} not divisible by 4", i + 1),
                ));
            }
            prev = cat / 4;
            decoders[i] = prev;
        }
        let f_d = self.fc_width + decoders[2];
        let s = self.task.scale();
        Ok(ChannelPlan {
            branch: self.base_width,
            f_s: 6 * self.base_width,
            f_c: self.fc_width,
            encoders,
            bottleneck,
            decoders,
            f_d,
            head_out: 3 * s * s,
        })
    }

    /// Serialize to the fixed key order used inside checkpoints.
    pub fn to_kv(&self) -> String {
        let (task, scale) = match self.task {
            TaskMode::Enhance => ("enhance", 1),
            TaskMode::SuperRes(s) => ("superres", s),
        };
        format!(
            "task={task}\nscale={scale}\nbase_width={}\nfc_width={}\nbranch_divisor={}\n\
             cbam_ratio={}\nmran_attention={}\nskip_attention={}\nfixed_kernel={}\nchannel_split={}\n",
            self.base_width,
            self.fc_width,
            self.branch_divisor,
            self.cbam_ratio,
            self.mran_attention,
            self.skip_attention,
            self.fixed_kernel,
            self.channel_split,
        )
    }

    /// Inverse of [`to_kv`](Self::to_kv); unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::default();
        let mut task = String::from("enhance");
        let mut scale = 1u32;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed config line '{line}'")))?;
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad integer '{v}' for {key}")))
            };
            let parse_bool = |v: &str| match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::Config(format!("bad boolean '{v}' for {key}"))),
            };
            match key {
                "task" => task = value.to_string(),
                "scale" => {
                    scale = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad integer '{value}' for scale")))?
                }
                "base_width" => cfg.base_width = parse_usize(value)?,
                "fc_width" => cfg.fc_width = parse_usize(value)?,
                "branch_divisor" => cfg.branch_divisor = parse_usize(value)?,
                "cbam_ratio" => cfg.cbam_ratio = parse_usize(value)?,
                "mran_attention" => cfg.mran_attention = parse_bool(value)?,
                "skip_attention" => cfg.skip_attention = parse_bool(value)?,
                "fixed_kernel" => cfg.fixed_kernel = parse_bool(value)?,
                "channel_split" => cfg.channel_split = parse_bool(value)?,
                _ => return Err(Error::Config(format!("unknown model config key '{key}'"))),
            }
        }
        cfg.task = match task.as_str() {
            "enhance" => TaskMode::Enhance,
            "superres" => TaskMode::SuperRes(scale),
            other => return Err(Error::Config(format!("unknown task '{other}'"))),
        };
        Ok(cfg)
    }
}

/// The assembled network. Parameters live in the embedded [`ParamStore`];
/// the struct itself holds only block handles and the channel plan.
pub struct LitNet<T: Element> {
    store: ParamStore<T>,
    cfg: ModelConfig,
    plan: ChannelPlan,
    f1: ConvBlock,
    branches: [ConvBlock; 3],
    attention: [Option<Cbam>; 3],
    fc: ConvBlock,
    encoders: [EncoderLayer; 3],
    bottleneck: ConvBlock,
    decoders: [DecoderLayer; 3],
    head: ConvBlock,
}

impl<T: Element> LitNet<T> {
    /// Build a fresh model; all random initialization draws from `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<LitNet<T>> {
        let plan = cfg.validate()?;
        let store = ParamStore::new();
        let mut rng = Stream::seeded(seed);
        let c0 = cfg.base_width;

        let f1 = ConvBlock::new(&store, "mran.f1", 3, c0, 1, &mut rng)?;
        let branch_in = if cfg.channel_split { 1 } else { 3 };
        let kernels = if cfg.fixed_kernel { [3, 3, 3] } else { [3, 5, 7] };
        let mut branches = Vec::with_capacity(3);
        let mut attention = Vec::with_capacity(3);
        for (i, k) in kernels.into_iter().enumerate() {
            // Branch names follow the nominal kernel (f3/f5/f7) so parameter
            // sets stay aligned across the fixed_kernel ablation.
            let tag = [3, 5, 7][i];
            branches.push(ConvBlock::new(
                &store,
                &format!("mran.f{tag}"),
                branch_in,
                c0,
                k,
                &mut rng,
            )?);
            attention.push(if cfg.mran_attention {
                Some(Cbam::new(
                    &store,
                    &format!("mran.att{tag}"),
                    2 * c0,
                    cfg.cbam_ratio,
                    &mut rng,
                )?)
            } else {
                None
            });
        }
        let fc = ConvBlock::new(&store, "fc", plan.f_s, plan.f_c, 3, &mut rng)?;

        let mut encoders = Vec::with_capacity(3);
        let mut width = plan.f_c;
        for i in 0..3 {
            let enc = EncoderLayer::new(
                &store,
                &format!("msan.enc{}", i + 1),
                width,
                cfg.branch_divisor,
                &mut rng,
            )?;
            width = enc.out_channels();
            encoders.push(enc);
        }
        let bottleneck = ConvBlock::new(
            &store,
            "msan.bottleneck",
            plan.bottleneck,
            plan.bottleneck,
            1,
            &mut rng,
        )?;
        let mut decoders = Vec::with_capacity(3);
        for i in 0..3 {
            decoders.push(DecoderLayer::new(
                &store,
                &format!("msan.dec{}", i + 1),
                cfg.skip_attention,
                &mut rng,
            )?);
        }

        // Zero-initialized so a fresh model is the identity residual.
        let head = ConvBlock::with_init(
            &store,
            "recon.head",
            plan.f_d,
            plan.head_out,
            3,
            Init::Zeros,
            &mut rng,
        )?;

        Ok(LitNet {
            store,
            cfg,
            plan,
            f1,
            branches: branches.try_into().map_err(|_| Error::invalid("model", "branch count"))?,
            attention: attention.try_into().map_err(|_| Error::invalid("model", "branch count"))?,
            fc,
            encoders: encoders.try_into().map_err(|_| Error::invalid("model", "encoder count"))?,
            bottleneck,
            decoders: decoders.try_into().map_err(|_| Error::invalid("model", "decoder count"))?,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &ChannelPlan {
        &self.plan
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    /// Track all trainable parameters for one training step.
    pub fn bind(&self, tape: &Tape<T>) -> Result<TrainBinding<T>> {
        self.store.bind(tape)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.shape().nchw()?;
        if c != 3 {
            return Err(Error::shape("model input", "3 channels", format!("{c} channels")));
        }
        if h % 8 != 0 || w % 8 != 0 {
            return Err(Error::invalid(
                "model input",
                format!("spatial dims {h}x{w} must be divisible by 8"),
            ));
        }
        Ok(())
    }

    /// Front end: f_1 plus the three kernel branches, each concatenated with
    /// f_1 and optionally CBAM-gated; returns the 6·C0-channel F_s.
    pub fn mran_forward(&self, ctx: ForwardCtx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let f1 = self.f1.forward(ctx, x)?;
        let mut gated = Vec::with_capacity(3);
        for (i, branch) in self.branches.iter().enumerate() {
            let input = if self.cfg.channel_split {
                ops::slice_channels(x, i, 1)?
            } else {
                x.clone()
            };
            let f = ops::concat_channels(&[&branch.forward(ctx, &input)?, &f1])?;
            gated.push(match &self.attention[i] {
                Some(cbam) => cbam.forward(ctx, &f)?,
                None => f,
            });
        }
        ops::concat_channels(&[&gated[0], &gated[1], &gated[2]])
    }

    /// Encoder/decoder trunk over F_c; returns F_d = concat(F_c, D_3).
    pub fn msan_forward(&self, ctx: ForwardCtx<'_, T>, f_c: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, h, w) = f_c.shape().nchw()?;
        if c != self.plan.f_c {
            return Err(Error::shape(
                "msan input",
                self.plan.f_c.to_string(),
                c.to_string(),
            ));
        }
        if h % 8 != 0 || w % 8 != 0 {
            return Err(Error::invalid(
                "msan input",
                format!("spatial dims {h}x{w} must be divisible by 8"),
            ));
        }
        let e1 = self.encoders[0].forward(ctx, f_c)?;
        let e2 = self.encoders[1].forward(ctx, &e1)?;
        let e3 = self.encoders[2].forward(ctx, &e2)?;
        let b = self.bottleneck.forward(ctx, &e3)?;
        let d1 = self.decoders[0].forward(ctx, &b, &e3)?;
        let d2 = self.decoders[1].forward(ctx, &d1, &e2)?;
        let d3 = self.decoders[2].forward(ctx, &d2, &e1)?;
        ops::concat_channels(&[f_c, &d3])
    }

    /// Full forward pass. Output is *not* clamped — losses must see raw
    /// values; use [`infer`](Self::infer) for clamped inference.
    pub fn forward(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        binding: Option<&TrainBinding<T>>,
    ) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let ctx = ForwardCtx {
            store: &self.store,
            binding,
            mode,
        };
        let f_s = self.mran_forward(ctx, x)?;
        let f_c = self.fc.forward(ctx, &f_s)?;
        let f_d = self.msan_forward(ctx, &f_c)?;
        let head = self.head.forward(ctx, &f_d)?;
        match self.cfg.task {
            TaskMode::Enhance => ops::add(&head, x),
            TaskMode::SuperRes(s) => {
                let up = ops::pixel_shuffle(&head, s as usize)?;
                let base = ops::bicubic_upsample(&x.detach(), s as usize)?;
                ops::add(&up, &base)
            }
        }
    }

    /// Eval-mode forward with the output clamped to [0, 1].
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.forward(x, Mode::Eval, None)?;
        let zero = T::cast(0.0);
        let one = T::cast(1.0);
        let data = y
            .data()
            .iter()
            .map(|&v| {
                if v < zero {
                    zero
                } else if v > one {
                    one
                } else {
                    v
                }
            })
            .collect();
        Tensor::from_vec(y.dims().to_vec(), data)
    }

    /// Number of trainable parameters (BN running statistics excluded).
    pub fn count_params(&self) -> usize {
        self.store.numel_of_kind(ParamKind::Trainable)
    }

    /// Forward-pass FLOPs at the given input resolution.
    ///
    /// Accounting: a k×k convolution mapping Cin→Cout over H×W costs
    /// 2·H·W·Cout·Cin·k² FLOPs (multiply + add) plus H·W·Cout for the bias;
    /// BatchNorm (inference form) and PReLU cost 2 per element; sigmoid 4;
    /// elementwise add/mul 1; mean/max reductions 1 per element reduced;
    /// pixel shuffles are free; the bicubic upsample costs 8 FLOPs per
    /// resampled pixel per pass (4 taps, multiply + add, two passes).
    pub fn count_flops(&self, h: usize, w: usize) -> Result<u64> {
        if h % 8 != 0 || w % 8 != 0 {
            return Err(Error::invalid(
                "flop count",
                format!("spatial dims {h}x{w} must be divisible by 8"),
            ));
        }
        let hw = (h * w) as u64;
        let conv = |hw: u64, cin: usize, cout: usize, k: usize, bias: bool| -> u64 {
            2 * hw * cout as u64 * cin as u64 * (k * k) as u64 + if bias { hw * cout as u64 } else { 0 }
        };
        let block = |hw: u64, cin: usize, cout: usize, k: usize| -> u64 {
            conv(hw, cin, cout, k, true) + 4 * hw * cout as u64
        };
        let cbam = |hw: u64, c: usize| -> u64 {
            let hidden = (c / self.cfg.cbam_ratio).max(1);
            let c = c as u64;
            let mlp = 2 * (2 * c * hidden as u64); // two 1x1 convs per descriptor
            2 * hw * c                  // avg + max pooling
                + 2 * mlp               // both descriptors through the MLP
                + 5 * c                 // gate add + sigmoid
                + hw * c                // channel gating
                + 2 * hw * c            // mean/max channel descriptors
                + conv(hw, 2, 1, 7, false)
                + 4 * hw                // spatial sigmoid
                + hw * c                // spatial gating
        };
        let spatial_attn = |hw: u64, c: usize| -> u64 {
            2 * hw * c as u64 + conv(hw, 2, 1, 7, false) + 4 * hw + hw * c as u64
        };

        let c0 = self.plan.branch;
        let branch_in = if self.cfg.channel_split { 1 } else { 3 };
        let kernels = if self.cfg.fixed_kernel { [3, 3, 3] } else { [3, 5, 7] };
        let mut total = block(hw, 3, c0, 1);
        for k in kernels {
            total += block(hw, branch_in, c0, k);
            if self.cfg.mran_attention {
                total += cbam(hw, 2 * c0);
            }
        }
        total += block(hw, self.plan.f_s, self.plan.f_c, 3);

        let mut res = hw;
        let mut width = self.plan.f_c;
        for enc in &self.encoders {
            let cb = enc.out_channels() / 16;
            total += 4 * block(res, width, cb, 1);
            width = enc.out_channels();
            res /= 4;
        }
        total += block(res, self.plan.bottleneck, self.plan.bottleneck, 1);
        let mut prev = self.plan.bottleneck;
        for i in 0..3 {
            let skip = self.plan.encoders[2 - i];
            if self.cfg.skip_attention {
                total += spatial_attn(res, skip);
            }
            prev = (prev + skip) / 4;
            res *= 4;
        }
        debug_assert_eq!(prev, self.plan.decoders[2]);
        debug_assert_eq!(res, hw);

        total += block(hw, self.plan.f_d, self.plan.head_out, 3);
        match self.cfg.task {
            TaskMode::Enhance => total += 3 * hw, // residual add
            TaskMode::SuperRes(s) => {
                let s = s as u64;
                let out_hw = hw * s * s;
                // bicubic: horizontal pass to (h, s·w), vertical to (s·h, s·w)
                total += 3 * 8 * (hw * s + out_hw);
                total += 3 * out_hw; // residual add
            }
        }
        Ok(total)
    }
}
