//! Self-supervised training on synthesized scale pairs.
//!
//! There is no fixed LR/HR dataset: every step crops a patch from a
//! training image, treats it as ground truth, bilinearly downsamples it by
//! a random factor drawn from the configured range, and asks the model to
//! reconstruct the original pixels at their continuous coordinates. The
//! loss is plain L1 on the sampled RGB values, optimized with Adam under a
//! linear-warmup + cosine-decay schedule.
//!
//! Everything is driven by one seeded generator, so a (seed, config, data)
//! triple reproduces the exact loss trajectory and final parameters.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Tape};
use crate::config::{ModelConfig, TrainConfig};
use crate::coords::{bilinear_resize, pixel_center};
use crate::error::Error;
use crate::model::{forward_queries_on, ModelParams};
use crate::tensor::Tensor;
use crate::Result;

pub const WARMUP_START_LR: f64 = 1e-5;
pub const FINAL_LR: f64 = 1e-6;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Learning rate for a given epoch: linear ramp from [`WARMUP_START_LR`]
/// to the base rate over the warmup epochs, then cosine decay to
/// [`FINAL_LR`] at the final epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch < cfg.warmup_epochs {
        let t = epoch as f64 / cfg.warmup_epochs as f64;
        WARMUP_START_LR + (cfg.base_lr - WARMUP_START_LR) * t
    } else if epoch >= cfg.epochs {
        FINAL_LR
    } else {
        // here warmup < epochs, so the span is at least one epoch
        let span = (cfg.epochs - cfg.warmup_epochs) as f64;
        let t = (epoch - cfg.warmup_epochs) as f64 / span;
        FINAL_LR + (cfg.base_lr - FINAL_LR) * 0.5 * (1.0 + (PI * t).cos())
    }
}

/// One element of the dihedral group acting on an image: horizontal flip,
/// vertical flip, then transpose, applied in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augment {
    pub hflip: bool,
    pub vflip: bool,
    pub transpose: bool,
}

impl Augment {
    pub const IDENTITY: Augment = Augment { hflip: false, vflip: false, transpose: false };

    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        Augment {
            hflip: rng.gen::<bool>(),
            vflip: rng.gen::<bool>(),
            transpose: rng.gen::<bool>(),
        }
    }
}

pub fn apply_augment(img: &Tensor, aug: Augment) -> Result<Tensor> {
    if img.rank() != 3 {
        return Err(Error::Shape(format!(
            "augment wants a [c,h,w] image, got {:?}",
            img.dims()
        )));
    }
    let (c, h, w) = (img.dims()[0], img.dims()[1], img.dims()[2]);
    let (oh, ow) = if aug.transpose { (w, h) } else { (h, w) };
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for r in 0..oh {
            for col in 0..ow {
                let (mut sr, mut sc) = if aug.transpose { (col, r) } else { (r, col) };
                if aug.vflip {
                    sr = h - 1 - sr;
                }
                if aug.hflip {
                    sc = w - 1 - sc;
                }
                out.set3(ch, r, col, img.at3(ch, sr, sc));
            }
        }
    }
    Ok(out)
}

/// One training example: a synthesized LR input and coordinate/RGB targets
/// taken from the ground-truth patch it was downsampled from.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub lr: Tensor,
    /// `[n, 2]` query coordinates (HR pixel centers, normalized).
    pub coords: Tensor,
    /// Query pixel extent in normalized coordinates.
    pub cell: (f64, f64),
    /// `[n, 3]` ground-truth RGB rows.
    pub targets: Tensor,
}

/// Synthesize a pair with an explicit augmentation (tests pin it; training
/// draws it from the generator via [`synth_pair`]).
pub fn synth_pair_with(
    hr_patch: &Tensor,
    eta: f64,
    aug: Augment,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainPair> {
    if hr_patch.rank() != 3 || hr_patch.dims()[0] != 3 {
        return Err(Error::Shape(format!(
            "expected a [3, h, w] patch, got {:?}",
            hr_patch.dims()
        )));
    }
    if !(eta >= 1.0 && eta.is_finite()) {
        return Err(Error::Usage(format!("scale factor must be >= 1, got {eta}")));
    }
    let hr = apply_augment(hr_patch, aug)?;
    let (hh, hw) = (hr.dims()[1], hr.dims()[2]);
    let (lh, lw) = ((hh as f64 / eta).floor() as usize, (hw as f64 / eta).floor() as usize);
    if lh == 0 || lw == 0 {
        return Err(Error::Usage(format!(
            "patch {hh}x{hw} is smaller than one LR pixel at scale {eta}"
        )));
    }
    let total = hh * hw;
    if n_samples == 0 || n_samples > total {
        return Err(Error::Usage(format!(
            "cannot draw {n_samples} distinct pixels from a {hh}x{hw} patch"
        )));
    }
    let lr = bilinear_resize(&hr, lh, lw)?;

    let mut picks: Vec<usize> = rand::seq::index::sample(rng, total, n_samples).into_vec();
    picks.sort_unstable();
    let mut coords = Vec::with_capacity(n_samples * 2);
    let mut targets = Vec::with_capacity(n_samples * 3);
    for &p in &picks {
        let (r, c) = (p / hw, p % hw);
        coords.push(pixel_center(r, hh));
        coords.push(pixel_center(c, hw));
        for ch in 0..3 {
            targets.push(hr.at3(ch, r, c));
        }
    }
    Ok(TrainPair {
        lr,
        coords: Tensor::new(vec![n_samples, 2], coords)?,
        cell: (2.0 / hh as f64, 2.0 / hw as f64),
        targets: Tensor::new(vec![n_samples, 3], targets)?,
    })
}

/// Synthesize a pair with a random augmentation.
pub fn synth_pair(
    hr_patch: &Tensor,
    eta: f64,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainPair> {
    let aug = Augment::sample(rng);
    synth_pair_with(hr_patch, eta, aug, n_samples, rng)
}

/// Crop a random patch from a full image and synthesize a pair at a random
/// scale from the configured range.
pub fn synth_from_image(
    img: &Tensor,
    tcfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainPair> {
    let (h, w) = (img.dims()[1], img.dims()[2]);
    let eta = rng.gen_range(tcfg.scale_min..=tcfg.scale_max);
    let min_side = eta.ceil() as usize;
    if h < min_side || w < min_side {
        return Err(Error::Usage(format!(
            "training image {h}x{w} is smaller than one LR pixel at scale {eta:.2}"
        )));
    }
    let want = ((tcfg.patch_multiplier as f64) * eta).round() as usize;
    let sh = want.clamp(min_side, h);
    let sw = want.clamp(min_side, w);
    let r0 = if h > sh { rng.gen_range(0..=h - sh) } else { 0 };
    let c0 = if w > sw { rng.gen_range(0..=w - sw) } else { 0 };
    let rows = crate::tensor::slice_axis(img, 1, r0, sh)?;
    let patch = crate::tensor::slice_axis(&rows, 2, c0, sw)?;
    let n = tcfg.samples_per_patch.min(sh * sw);
    synth_pair(&patch, eta, n, rng)
}

/// Adam moment estimates keyed by parameter name. One state instance lives
/// across the whole run; the bias correction uses its global step count.
#[derive(Debug, Default)]
pub struct AdamState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advance the shared step counter; call once per optimizer step,
    /// before the per-tensor updates.
    pub fn tick(&mut self) {
        self.step += 1;
    }

    /// Standard Adam update for one tensor.
    pub fn update(&mut self, name: &str, value: &mut Tensor, grad: &Tensor, lr: f64) -> Result<()> {
        if value.dims() != grad.dims() {
            return Err(crate::error::shape_err("adam update", value.dims(), grad.dims()));
        }
        let m = self
            .m
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(value.dims()));
        let v = self
            .v
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(value.dims()));
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let (md, vd, gd, xd) = (m.data_mut(), v.data_mut(), grad.data(), value.data_mut());
        for i in 0..gd.len() {
            md[i] = ADAM_BETA1 * md[i] + (1.0 - ADAM_BETA1) * gd[i];
            vd[i] = ADAM_BETA2 * vd[i] + (1.0 - ADAM_BETA2) * gd[i] * gd[i];
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            xd[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// One optimizer step over every model tensor.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    state.tick();
    for (name, tensor) in params.named_mut() {
        let grad = grads
            .get(&name)
            .ok_or_else(|| Error::Usage(format!("no gradient recorded for parameter {name:?}")))?;
        state.update(&name, tensor, grad, lr)?;
    }
    params.iterations += 1;
    Ok(())
}

/// One training step: a fresh tape, the batch-mean L1 loss, one backward
/// sweep, one Adam update. Returns the loss value.
pub fn train_step(
    params: &mut ModelParams,
    batch: &[TrainPair],
    lr: f64,
    adam: &mut AdamState,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("cannot train on an empty batch".into()));
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, true)?;
    let mut total = None;
    for pair in batch {
        let img = tape.constant(pair.lr.clone());
        let pred = forward_queries_on(&mut tape, img, &pair.coords, pair.cell, &vars, &params.cfg)?;
        let target = tape.constant(pair.targets.clone());
        let loss = tape.l1_loss(pred, target)?;
        total = Some(match total {
            None => loss,
            Some(acc) => tape.add(acc, loss)?,
        });
    }
    let total = tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64);
    let loss_value = tape.value(total).data()[0];
    let grads = tape.backward(total)?;
    adam_step(params, &grads, adam, lr)?;
    Ok(loss_value)
}

/// Full training run. One epoch is a seeded-shuffled pass over the images;
/// `on_step(epoch, step_in_epoch, loss)` fires after every optimizer step.
/// Returns the trained parameters and the per-step loss trajectory.
pub fn train(
    images: &[Tensor],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    on_step: &mut dyn FnMut(usize, usize, f64),
) -> Result<(ModelParams, Vec<f64>)> {
    tcfg.validate()?;
    if images.is_empty() {
        return Err(Error::Usage("training needs at least one image".into()));
    }
    for img in images {
        if img.rank() != 3 || img.dims()[0] != 3 {
            return Err(Error::Shape(format!(
                "training images must be [3, h, w], got {:?}",
                img.dims()
            )));
        }
    }
    let mut params = ModelParams::init(mcfg, tcfg.seed)?;
    let mut adam = AdamState::new();
    // distinct stream from parameter init so data order never aliases init draws
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut losses = Vec::new();
    for epoch in 0..tcfg.epochs {
        let lr = lr_at(epoch, tcfg);
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let batch: Vec<TrainPair> = chunk
                .iter()
                .map(|&i| synth_from_image(&images[i], tcfg, &mut rng))
                .collect::<Result<_>>()?;
            let loss = train_step(&mut params, &batch, lr, &mut adam)?;
            losses.push(loss);
            on_step(epoch, step, loss);
        }
    }
    Ok((params, losses))
}
