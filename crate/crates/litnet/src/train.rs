//! Adam optimizer and the training loop.
//!
//! Training is deterministic for a given configuration: kernels are
//! sequential, batches are drawn from a seeded [`Stream`], and checkpoints
//! carry optimizer moments plus the exact RNG position, so a resumed run
//! reproduces an uninterrupted one byte for byte.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerState};
use crate::error::{Error, Result};
use crate::image_io::{downsample_mean, load_image, png_stems, Image};
use crate::loss::{total_loss, ConvStackExtractor, LossConfig};
use crate::model::{LitNet, ModelConfig};
use crate::nn::{Mode, ParamKind, ParamStore, TrainBinding};
use crate::rng::Stream;
use crate::synth::{procedural_clean, synth_degrade, synth_pairs, DegradationParams};
use crate::tensor::{Element, Gradients, Tape, Tensor};

/// Seed for the fixed perceptual extractor; shared by every run so that
/// loss values are comparable across training sessions.
pub const EXTRACTOR_SEED: u64 = 0x4C69_744E;

/// Salt mixed into the data-order RNG so batch sampling is decoupled from
/// weight initialization (which consumes `seed` directly).
const DATA_ORDER_SALT: u64 = 0x5348_7566;

/// Where training pairs come from.
#[derive(Clone, Debug)]
pub enum DataSource {
    /// Procedurally generated clean/degraded pairs. `width`/`height` are
    /// the *input* resolution; for super-resolution the clean target is
    /// rendered at scale times that size and the degraded copy is
    /// mean-pooled back down.
    Synthetic {
        count: usize,
        width: usize,
        height: usize,
        params: DegradationParams,
    },
    /// PNG directories paired by file stem. For super-resolution the clean
    /// images must be exactly scale times the degraded size.
    Dirs { degraded: PathBuf, clean: PathBuf },
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Target total step count. A resumed run continues from the stored
    /// step until it reaches this number.
    pub max_steps: u64,
    /// Seeds weight initialization and (salted) batch order.
    pub seed: u64,
    pub data: DataSource,
    /// Write `step_NNNNNN.litn` every this many steps (0 = only final).
    pub checkpoint_every: u64,
    /// Accepted for interface stability; runs are deterministic either way
    /// because every kernel is sequential.
    pub deterministic: bool,
    pub resume: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            batch_size: 5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_steps: 100,
            seed: 0,
            data: DataSource::Synthetic {
                count: 8,
                width: 64,
                height: 64,
                params: DegradationParams::default(),
            },
            checkpoint_every: 0,
            deterministic: false,
            resume: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::invalid("train config", format!("lr {} must be positive", self.lr)));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid("train config", format!("{name} {v} outside [0, 1)")));
            }
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(Error::invalid("train config", format!("eps {} must be positive", self.eps)));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid(
                "train config",
                "batch_size must be at least 2 (batch norm needs batch statistics)",
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("train config", "max_steps must be at least 1"));
        }
        if let DataSource::Synthetic { count, width, height, params } = &self.data {
            if *count == 0 {
                return Err(Error::invalid("train config", "synthetic dataset count must be at least 1"));
            }
            if *width == 0 || *height == 0 {
                return Err(Error::invalid("train config", "synthetic image dimensions must be positive"));
            }
            params.validate()?;
        }
        Ok(())
    }
}

/// Adam with bias correction (Kingma & Ba). Moments are kept per trainable
/// parameter in registration order; element math runs in f64 regardless of
/// the parameter dtype.
pub struct Adam<T: Element> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    moments: Option<Vec<(Vec<T>, Vec<T>)>>,
}

impl<T: Element> Adam<T> {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Adam<T> {
        Adam { lr, beta1, beta2, eps, step: 0, moments: None }
    }

    /// Completed update steps (the `t` of the bias correction).
    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn moments_for(&mut self, store: &ParamStore<T>) -> Result<&mut Vec<(Vec<T>, Vec<T>)>> {
        let ids = store.ids_of_kind(ParamKind::Trainable);
        if self.moments.is_none() {
            let zero = T::cast(0.0);
            self.moments = Some(
                ids.iter()
                    .map(|&id| {
                        let n = store.get(id).data().len();
                        (vec![zero; n], vec![zero; n])
                    })
                    .collect(),
            );
        }
        let moments = self.moments.as_mut().unwrap();
        if moments.len() != ids.len() {
            return Err(Error::invalid(
                "optimizer state",
                format!("{} moment slots for {} trainable parameters", moments.len(), ids.len()),
            ));
        }
        Ok(moments)
    }

    /// One update over every trainable parameter. Fails with the parameter
    /// name if the backward pass produced no gradient for one of them.
    pub fn apply(
        &mut self,
        store: &ParamStore<T>,
        binding: &TrainBinding<T>,
        grads: &Gradients<T>,
    ) -> Result<()> {
        let ids = store.ids_of_kind(ParamKind::Trainable);
        self.moments_for(store)?;
        self.step += 1;
        let t = self.step;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);

        for (slot, &id) in ids.iter().enumerate() {
            let grad = binding
                .node_of(id)
                .and_then(|n| grads.by_node(n))
                .ok_or_else(|| Error::MissingGradient(store.name(id)))?;
            let param = store.get(id);
            let (m, v) = &mut self.moments.as_mut().unwrap()[slot];
            if grad.data().len() != m.len() {
                return Err(Error::shape(
                    "optimizer moments",
                    format!("{} elements", m.len()),
                    format!("{} elements", grad.data().len()),
                ));
            }
            let mut next = Vec::with_capacity(m.len());
            for i in 0..m.len() {
                let g = grad.data()[i].as_f64();
                let mi = self.beta1 * m[i].as_f64() + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v[i].as_f64() + (1.0 - self.beta2) * g * g;
                m[i] = T::cast(mi);
                v[i] = T::cast(vi);
                let update = self.lr * (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
                next.push(T::cast(param.data()[i].as_f64() - update));
            }
            store.set(id, Tensor::from_vec(param.dims().to_vec(), next)?)?;
        }
        Ok(())
    }

    /// Serializable snapshot, named per parameter for checkpointing.
    pub fn state(&self, store: &ParamStore<T>) -> OptimizerState<T> {
        let ids = store.ids_of_kind(ParamKind::Trainable);
        let zero = T::cast(0.0);
        let moments = ids
            .iter()
            .enumerate()
            .map(|(slot, &id)| {
                let (m, v) = match &self.moments {
                    Some(all) => all[slot].clone(),
                    None => {
                        let n = store.get(id).data().len();
                        (vec![zero; n], vec![zero; n])
                    }
                };
                (store.name(id), m, v)
            })
            .collect();
        OptimizerState { step: self.step, moments }
    }

    /// Restore moments saved by [`Adam::state`]; names and lengths must
    /// match the store's trainable set exactly.
    pub fn load(&mut self, state: &OptimizerState<T>, store: &ParamStore<T>) -> Result<()> {
        let ids = store.ids_of_kind(ParamKind::Trainable);
        if state.moments.len() != ids.len() {
            return Err(Error::invalid(
                "optimizer state",
                format!("{} moment records for {} trainable parameters", state.moments.len(), ids.len()),
            ));
        }
        let mut moments = Vec::with_capacity(ids.len());
        for (&id, (name, m, v)) in ids.iter().zip(&state.moments) {
            let want_name = store.name(id);
            let want_len = store.get(id).data().len();
            if *name != want_name {
                return Err(Error::invalid(
                    "optimizer state",
                    format!("moment record {name} where parameter {want_name} was expected"),
                ));
            }
            if m.len() != want_len || v.len() != want_len {
                return Err(Error::invalid(
                    "optimizer state",
                    format!("{name} moments hold {} elements, parameter has {want_len}", m.len()),
                ));
            }
            moments.push((m.clone(), v.clone()));
        }
        self.moments = Some(moments);
        self.step = state.step;
        Ok(())
    }
}

/// One resolved training pair at input and target resolution.
struct PairSet {
    inputs: Vec<Tensor<f32>>,
    targets: Vec<Tensor<f32>>,
}

fn image_pair_to_tensors(degraded: &Image, clean: &Image) -> Result<(Tensor<f32>, Tensor<f32>)> {
    Ok((degraded.to_tensor::<f32>(), clean.to_tensor::<f32>()))
}

fn check_pair_dims(
    name: &str,
    degraded: &Image,
    clean: &Image,
    scale: usize,
) -> Result<()> {
    let ok = clean.width() == degraded.width() * scale && clean.height() == degraded.height() * scale;
    if !ok {
        return Err(Error::shape(
            "training pair",
            format!(
                "clean {name} at {}x{} for a {}x{} input at scale {scale}",
                degraded.width() * scale,
                degraded.height() * scale,
                degraded.width(),
                degraded.height()
            ),
            format!("{}x{}", clean.width(), clean.height()),
        ));
    }
    Ok(())
}

fn load_pairs(data: &DataSource, seed: u64, scale: usize) -> Result<PairSet> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut first: Option<(String, usize, usize)> = None;

    let mut push = |name: String, degraded: Image, clean: Image| -> Result<()> {
        check_pair_dims(&name, &degraded, &clean, scale)?;
        match &first {
            None => {
                if degraded.width() % 8 != 0 || degraded.height() % 8 != 0 {
                    return Err(Error::invalid(
                        "training data",
                        format!(
                            "input {name} is {}x{}; both sides must be multiples of 8",
                            degraded.width(),
                            degraded.height()
                        ),
                    ));
                }
                first = Some((name.clone(), degraded.width(), degraded.height()));
            }
            Some((first_name, w, h)) => {
                if degraded.width() != *w || degraded.height() != *h {
                    return Err(Error::invalid(
                        "training data",
                        format!(
                            "input {name} is {}x{} but {first_name} is {w}x{h}; batching needs uniform sizes",
                            degraded.width(),
                            degraded.height()
                        ),
                    ));
                }
            }
        }
        let (i, t) = image_pair_to_tensors(&degraded, &clean)?;
        inputs.push(i);
        targets.push(t);
        Ok(())
    };

    match data {
        DataSource::Synthetic { count, width, height, params } => {
            if scale == 1 {
                for (i, (degraded, clean)) in
                    synth_pairs(*count, *width, *height, seed, params)?.into_iter().enumerate()
                {
                    push(format!("synthetic #{i}"), degraded, clean)?;
                }
            } else {
                // Render clean at target resolution, degrade there, then
                // pool down so the input matches what the head upsamples.
                for i in 0..*count {
                    let mut p = *params;
                    p.seed = seed.wrapping_add(i as u64);
                    let clean = procedural_clean(width * scale, height * scale, seed.wrapping_add(i as u64));
                    let degraded = downsample_mean(&synth_degrade(&clean, &p)?, scale)?;
                    push(format!("synthetic #{i}"), degraded, clean)?;
                }
            }
        }
        DataSource::Dirs { degraded, clean } => {
            let deg = png_stems(degraded)?;
            let cln = png_stems(clean)?;
            let mut unpaired: Vec<String> = deg
                .keys()
                .filter(|k| !cln.contains_key(*k))
                .map(|k| format!("{k} (degraded only)"))
                .collect();
            unpaired.extend(
                cln.keys()
                    .filter(|k| !deg.contains_key(*k))
                    .map(|k| format!("{k} (clean only)")),
            );
            if !unpaired.is_empty() {
                return Err(Error::UnpairedFiles(unpaired));
            }
            for (stem, deg_path) in &deg {
                push(stem.clone(), load_image(deg_path)?, load_image(&cln[stem])?)?;
            }
        }
    }

    Ok(PairSet { inputs, targets })
}

fn batch_tensor(singles: &[Tensor<f32>], picks: &[usize]) -> Result<Tensor<f32>> {
    let dims = singles[0].dims();
    let (c, h, w) = (dims[1], dims[2], dims[3]);
    let plane = c * h * w;
    Ok(Tensor::from_fn([picks.len(), c, h, w], |i| {
        singles[picks[i / plane]].data()[i % plane]
    }))
}

fn guard_finite_params(store: &ParamStore<f32>) -> Result<()> {
    for (name, _, tensor) in store.snapshot() {
        if !tensor.is_finite() {
            return Err(Error::invalid(
                "checkpoint",
                format!("parameter {name} contains non-finite values"),
            ));
        }
    }
    Ok(())
}

/// Final state of a training run.
pub struct TrainOutcome {
    pub checkpoint: Checkpoint<f32>,
    /// Total optimizer steps completed, including any before a resume.
    pub steps: u64,
    pub final_loss: f64,
}

/// Run the training loop, logging one `step\tl_T\tcl1\tl_p\tl_s` line per
/// step to `sink`. Checkpoints (periodic `step_NNNNNN.litn` and the final
/// `final.litn`) go to `out_dir` when given; the final checkpoint is also
/// returned.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    out_dir: Option<&Path>,
    sink: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss_cfg.validate()?;
    model_cfg.validate()?;

    let pairs = load_pairs(&cfg.data, cfg.seed, model_cfg.task.scale())?;
    if cfg.batch_size > pairs.inputs.len() {
        return Err(Error::invalid(
            "train config",
            format!("batch_size {} exceeds dataset size {}", cfg.batch_size, pairs.inputs.len()),
        ));
    }

    let model: LitNet<f32> = LitNet::new(*model_cfg, cfg.seed)?;
    let extractor = ConvStackExtractor::<f32>::seeded(EXTRACTOR_SEED);
    let mut adam = Adam::<f32>::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut order_rng = Stream::seeded(cfg.seed ^ DATA_ORDER_SALT);

    if let Some(path) = &cfg.resume {
        let ckpt = load_checkpoint::<f32>(path)?;
        if ckpt.config != *model_cfg {
            return Err(Error::Config(format!(
                "checkpoint {} was trained with a different model configuration",
                path.display()
            )));
        }
        ckpt.apply_to(model.store())?;
        if let Some(opt) = &ckpt.optimizer {
            adam.load(opt, model.store())?;
        }
        if let Some((seed, word_pos)) = ckpt.rng {
            order_rng = Stream::restore(seed, word_pos);
        }
        log::info!("resumed from {} at step {}", path.display(), adam.step_count());
    }

    let mut final_loss = f64::NAN;

    while adam.step_count() < cfg.max_steps {
        let step = adam.step_count() + 1;
        // Shuffle a fresh identity permutation so the only sampling state
        // is the RNG position, which checkpoints capture exactly.
        let mut indices: Vec<usize> = (0..pairs.inputs.len()).collect();
        order_rng.shuffle(&mut indices);
        let picks = &indices[..cfg.batch_size];
        let input = batch_tensor(&pairs.inputs, picks)?;
        let target = batch_tensor(&pairs.targets, picks)?;

        let tape = Tape::new();
        let binding = model.store().bind(&tape)?;
        let input = tape.track(&input)?;
        let pred = model.forward(&input, Mode::Train, Some(&binding))?;
        let terms = total_loss(&pred, &target, loss_cfg, &extractor)?;

        let lt = terms.total.item()?.as_f64();
        if !lt.is_finite() {
            return Err(Error::NonFiniteLoss { step, value: lt });
        }
        let (c, p, s) = (
            terms.cl1.item()?,
            terms.perceptual.item()?,
            terms.ssim.item()?,
        );
        let grads = terms.total.backward()?;
        adam.apply(model.store(), &binding, &grads)?;
        final_loss = lt;
        writeln!(sink, "{step}\t{}\t{c}\t{p}\t{s}", lt as f32)?;

        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step < cfg.max_steps {
            if let Some(dir) = out_dir {
                let ckpt = snapshot(&model, &adam, &order_rng)?;
                save_checkpoint(dir.join(format!("step_{step:06}.litn")), &ckpt)?;
            }
        }
    }

    let checkpoint = snapshot(&model, &adam, &order_rng)?;
    if let Some(dir) = out_dir {
        save_checkpoint(dir.join("final.litn"), &checkpoint)?;
    }
    Ok(TrainOutcome { checkpoint, steps: adam.step_count(), final_loss })
}

fn snapshot(model: &LitNet<f32>, adam: &Adam<f32>, rng: &Stream) -> Result<Checkpoint<f32>> {
    guard_finite_params(model.store())?;
    let mut ckpt = Checkpoint::of_model(model);
    ckpt.optimizer = Some(adam.state(model.store()));
    ckpt.rng = Some(rng.state());
    Ok(ckpt)
}
