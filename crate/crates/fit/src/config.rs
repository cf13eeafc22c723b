//! Model and training configuration.
//!
//! Both structs round-trip through a flat `key = value` text form: one pair
//! per line, `#` starts a comment line, unknown keys are rejected by name.
//! The same format rides inside checkpoints, so parsing is strict — a typo
//! fails loudly instead of silently training a different model.

use crate::error::Error;
use crate::iisa::IisaConfig;
use crate::Result;

/// Architecture knobs. Defaults describe the desk-scale model: small enough
/// to train on a CPU in minutes, big enough for every component to matter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Feature channels used everywhere between encoder and decoder.
    pub channels: usize,
    /// Number of 3x3 conv layers in the encoder (first one maps RGB in).
    pub encoder_depth: usize,
    /// Residual frequency-integration blocks between encoder and attention.
    pub fim_blocks: usize,
    /// Spatial kernel side for all non-pointwise convolutions; odd.
    pub kernel: usize,
    /// Query-map subspace projections; 0 fuses features directly.
    pub subspaces: usize,
    /// Replace frequency projections with spatial ones (ablation knob).
    pub all_spatial: bool,
    pub heads: usize,
    /// Sinusoidal frequency count in the positional encoding.
    pub pos_freqs: usize,
    /// Key grid sides for query attention; odd.
    pub grid_h: usize,
    pub grid_w: usize,
    /// Hidden width of the positional-bias MLP.
    pub pe_hidden: usize,
    /// Hidden width of the RGB decoder MLP.
    pub decoder_hidden: usize,
    /// Hidden layer count of the RGB decoder MLP (0 = single linear map).
    pub decoder_depth: usize,
    /// Enable the whole-map spectral attention branch.
    pub use_fcsa: bool,
    /// Refuse spectral attention beyond this many pixels (it is O(n^2)).
    pub fcsa_token_limit: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 16,
            encoder_depth: 4,
            fim_blocks: 2,
            kernel: 3,
            subspaces: 4,
            all_spatial: false,
            heads: 8,
            pos_freqs: 10,
            grid_h: 3,
            grid_w: 3,
            pe_hidden: 64,
            decoder_hidden: 64,
            decoder_depth: 2,
            use_fcsa: true,
            fcsa_token_limit: 4096,
        }
    }
}

impl ModelConfig {
    pub fn to_iisa(&self) -> IisaConfig {
        IisaConfig {
            channels: self.channels,
            kernel: self.kernel,
            subspaces: self.subspaces,
            all_spatial: self.all_spatial,
            heads: self.heads,
            pos_freqs: self.pos_freqs,
            grid_h: self.grid_h,
            grid_w: self.grid_w,
            pe_hidden: self.pe_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.to_iisa().validate()?;
        if self.encoder_depth == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.fim_blocks == 0 {
            return Err(Error::Config(
                "at least one frequency-integration block is required".into(),
            ));
        }
        if self.decoder_depth > 0 && self.decoder_hidden == 0 {
            return Err(Error::Config(
                "decoder hidden width must be positive when hidden layers exist".into(),
            ));
        }
        if self.use_fcsa && self.fcsa_token_limit == 0 {
            return Err(Error::Config("spectral-attention token limit must be positive".into()));
        }
        Ok(())
    }

    /// Apply one key/value pair; `Ok(false)` means the key is not an
    /// architecture key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "channels" => self.channels = parse_num(key, value)?,
            "encoder_depth" => self.encoder_depth = parse_num(key, value)?,
            "fim_blocks" => self.fim_blocks = parse_num(key, value)?,
            "kernel" => self.kernel = parse_num(key, value)?,
            "subspaces" => self.subspaces = parse_num(key, value)?,
            "all_spatial" => self.all_spatial = parse_bool(key, value)?,
            "heads" => self.heads = parse_num(key, value)?,
            "pos_freqs" => self.pos_freqs = parse_num(key, value)?,
            "grid_h" => self.grid_h = parse_num(key, value)?,
            "grid_w" => self.grid_w = parse_num(key, value)?,
            "pe_hidden" => self.pe_hidden = parse_num(key, value)?,
            "decoder_hidden" => self.decoder_hidden = parse_num(key, value)?,
            "decoder_depth" => self.decoder_depth = parse_num(key, value)?,
            "use_fcsa" => self.use_fcsa = parse_bool(key, value)?,
            "fcsa_token_limit" => self.fcsa_token_limit = parse_num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "channels = {}\nencoder_depth = {}\nfim_blocks = {}\nkernel = {}\n\
             subspaces = {}\nall_spatial = {}\nheads = {}\npos_freqs = {}\n\
             grid_h = {}\ngrid_w = {}\npe_hidden = {}\ndecoder_hidden = {}\n\
             decoder_depth = {}\nuse_fcsa = {}\nfcsa_token_limit = {}\n",
            self.channels,
            self.encoder_depth,
            self.fim_blocks,
            self.kernel,
            self.subspaces,
            self.all_spatial,
            self.heads,
            self.pos_freqs,
            self.grid_h,
            self.grid_w,
            self.pe_hidden,
            self.decoder_hidden,
            self.decoder_depth,
            self.use_fcsa,
            self.fcsa_token_limit,
        )
    }
}

/// Optimization knobs. An epoch is one seeded-shuffled pass over the
/// training images.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    /// Epochs of linear learning-rate ramp before the cosine decay.
    pub warmup_epochs: usize,
    /// LR-side patch extent: the HR crop is about this times the scale.
    pub patch_multiplier: usize,
    /// Per-item scale factor range, drawn uniformly.
    pub scale_min: f64,
    pub scale_max: f64,
    /// Coordinate/RGB pairs sampled per patch (without replacement).
    pub samples_per_patch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            epochs: 200,
            base_lr: 1e-4,
            warmup_epochs: 50,
            patch_multiplier: 24,
            scale_min: 1.0,
            scale_max: 4.0,
            samples_per_patch: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 || self.epochs == 0 || self.samples_per_patch == 0 {
            return fail("batch size, epochs, and samples per patch must be positive".into());
        }
        if self.warmup_epochs > self.epochs {
            return fail(format!(
                "warmup ({}) cannot exceed total epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return fail(format!("base learning rate must be positive, got {}", self.base_lr));
        }
        if self.patch_multiplier == 0 {
            return fail("patch multiplier must be positive".into());
        }
        if !(self.scale_min >= 1.0 && self.scale_max >= self.scale_min) {
            return fail(format!(
                "scale range must satisfy 1 <= min <= max, got [{}, {}]",
                self.scale_min, self.scale_max
            ));
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "base_lr" => self.base_lr = parse_num(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse_num(key, value)?,
            "patch_multiplier" => self.patch_multiplier = parse_num(key, value)?,
            "scale_min" => self.scale_min = parse_num(key, value)?,
            "scale_max" => self.scale_max = parse_num(key, value)?,
            "samples_per_patch" => self.samples_per_patch = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "batch_size = {}\nepochs = {}\nbase_lr = {}\nwarmup_epochs = {}\n\
             patch_multiplier = {}\nscale_min = {}\nscale_max = {}\n\
             samples_per_patch = {}\nseed = {}\n",
            self.batch_size,
            self.epochs,
            self.base_lr,
            self.warmup_epochs,
            self.patch_multiplier,
            self.scale_min,
            self.scale_max,
            self.samples_per_patch,
            self.seed,
        )
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!(
            "key {key:?}: cannot parse {value:?} as {}",
            std::any::type_name::<T>()
        ))
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "key {key:?}: expected true or false, got {value:?}"
        ))),
    }
}

/// Parse a full configuration file on top of the defaults.
pub fn parse_config(text: &str) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = ModelConfig::default();
    let mut train = TrainConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {lineno}: expected `key = value`, got {line:?}"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if model.apply(key, value)? || train.apply(key, value)? {
            continue;
        }
        return Err(Error::Config(format!(
            "line {lineno}: unknown configuration key {key:?}"
        )));
    }
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}

/// Header block stored inside checkpoints: the architecture plus training
/// provenance (completed iterations and the init seed).
pub fn checkpoint_header(model: &ModelConfig, iterations: u64, seed: u64) -> String {
    format!("{}iterations = {iterations}\nseed = {seed}\n", model.to_kv())
}

/// Parse a checkpoint header back into architecture and provenance.
pub fn parse_checkpoint_header(text: &str) -> Result<(ModelConfig, u64, u64)> {
    let mut model = ModelConfig::default();
    let mut iterations = 0u64;
    let mut seed = 0u64;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Checkpoint(format!("header line {lineno}: expected `key = value`"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "iterations" => iterations = parse_num(key, value)?,
            "seed" => seed = parse_num(key, value)?,
            _ => {
                if !model.apply(key, value)? {
                    return Err(Error::Checkpoint(format!(
                        "header line {lineno}: unknown key {key:?}"
                    )));
                }
            }
        }
    }
    model.validate()?;
    Ok((model, iterations, seed))
}
