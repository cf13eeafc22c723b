//! Implicit-coordinate attention over a local key grid.
//!
//! Queries live at arbitrary continuous positions. For one query the module
//! samples a query row bilinearly from a projected feature map, keys
//! bilinearly at a small odd-sided grid of LR pixel centers around the
//! query, values by nearest neighbor from a separate value map, and runs
//! multi-head scaled dot-product attention with an additive positional
//! bias derived from the query-to-key offsets:
//!
//! ```text
//! z'      = fim(z)
//! q_map   = fuse(concat(subspace projections of z'))
//! v_map   = value_pconv(z')
//! logits  = pe_mlp(encode(theta - key, cell)) + Q K^T / sqrt(c/heads)
//! out     = concat over heads of softmax(logits) V
//! ```
//!
//! Subspace projections alternate between spatial ones (pointwise over z')
//! and frequency ones (pointwise over the concatenated real and imaginary
//! planes of `fft2(z')`), in the fixed order spatial, frequency, spatial,
//! frequency, ... so channel block `k` of the pre-fuse stack always comes
//! from the same kind of projection. `subspaces == 0` skips the split and
//! fuses `z'` directly; `all_spatial` replaces every frequency projection
//! with a spatial one while keeping the count.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::coords::{make_query_grid, pos_encode, standard_freqs, QueryGrid};
use crate::error::Error;
use crate::fim::{self, FimParams, FimVars};
use crate::tensor::Tensor;
use crate::Result;

/// Structural knobs for the attention module.
#[derive(Debug, Clone)]
pub struct IisaConfig {
    pub channels: usize,
    /// Kernel side of the inner frequency-integration block.
    pub kernel: usize,
    /// Number of subspace projections feeding the query map; 0 disables
    /// the split entirely.
    pub subspaces: usize,
    /// Replace frequency projections with spatial ones (ablation knob).
    pub all_spatial: bool,
    pub heads: usize,
    /// Number of sinusoidal frequencies in the positional encoding.
    pub pos_freqs: usize,
    /// Key grid sides, both odd.
    pub grid_h: usize,
    pub grid_w: usize,
    /// Hidden width of the positional-bias MLP.
    pub pe_hidden: usize,
}

impl IisaConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.channels == 0 {
            return fail("channels must be positive".into());
        }
        if self.kernel % 2 == 0 {
            return fail(format!("kernel side must be odd, got {}", self.kernel));
        }
        if self.heads == 0 || self.channels % self.heads != 0 {
            return fail(format!(
                "heads must divide channels, got {} heads for {} channels",
                self.heads, self.channels
            ));
        }
        if self.subspaces > 0 {
            if self.channels % self.subspaces != 0 {
                return fail(format!(
                    "subspaces must divide channels, got {} subspaces for {} channels",
                    self.subspaces, self.channels
                ));
            }
            if !self.all_spatial && self.subspaces % 2 != 0 {
                return fail(format!(
                    "mixed spatial/frequency projections need an even subspace count, got {}",
                    self.subspaces
                ));
            }
        }
        if self.grid_h % 2 == 0 || self.grid_w % 2 == 0 || self.grid_h == 0 || self.grid_w == 0 {
            return fail(format!(
                "key grid sides must be odd and positive, got {}x{}",
                self.grid_h, self.grid_w
            ));
        }
        if self.pos_freqs == 0 {
            return fail("positional encoding needs at least one frequency".into());
        }
        if self.pe_hidden == 0 {
            return fail("positional-bias MLP needs a positive hidden width".into());
        }
        Ok(())
    }

    /// Width of one encoded offset row: 4 per frequency plus the two cell
    /// entries.
    pub fn encoding_width(&self) -> usize {
        4 * self.pos_freqs + 2
    }

    fn spatial_count(&self) -> usize {
        if self.all_spatial {
            self.subspaces
        } else {
            self.subspaces / 2
        }
    }

    fn freq_count(&self) -> usize {
        if self.all_spatial {
            0
        } else {
            self.subspaces / 2
        }
    }
}

/// Learnable state plus the structural config it was built for.
#[derive(Debug, Clone)]
pub struct IisaParams {
    pub cfg: IisaConfig,
    pub inner: FimParams,
    /// Spatial projections, each `[channels/subspaces, channels]`.
    pub spatial_w: Vec<Tensor>,
    /// Frequency projections, each `[channels/subspaces, 2*channels]`.
    pub freq_w: Vec<Tensor>,
    pub fuse_w: Tensor,
    pub fuse_b: Tensor,
    pub value_w: Tensor,
    pub value_b: Tensor,
    pub pe_w1: Tensor,
    pub pe_b1: Tensor,
    pub pe_w2: Tensor,
    pub pe_b2: Tensor,
}

/// Tape handles for a registered [`IisaParams`].
#[derive(Debug, Clone)]
pub struct IisaVars {
    pub inner: FimVars,
    pub spatial_w: Vec<Var>,
    pub freq_w: Vec<Var>,
    pub fuse_w: Var,
    pub fuse_b: Var,
    pub value_w: Var,
    pub value_b: Var,
    pub pe_w1: Var,
    pub pe_b1: Var,
    pub pe_w2: Var,
    pub pe_b2: Var,
}

impl IisaParams {
    pub fn init(cfg: &IisaConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let sub_c = if cfg.subspaces > 0 { c / cfg.subspaces } else { 0 };
        let inner = FimParams::init(c, cfg.kernel, rng);
        let spatial_w = (0..cfg.spatial_count())
            .map(|_| Tensor::rand_uniform(&[sub_c, c], -bound(c), bound(c), rng))
            .collect();
        let freq_w = (0..cfg.freq_count())
            .map(|_| Tensor::rand_uniform(&[sub_c, 2 * c], -bound(2 * c), bound(2 * c), rng))
            .collect();
        let width = cfg.encoding_width();
        Ok(IisaParams {
            cfg: cfg.clone(),
            inner,
            spatial_w,
            freq_w,
            fuse_w: Tensor::rand_uniform(&[c, c], -bound(c), bound(c), rng),
            fuse_b: Tensor::zeros(&[c]),
            value_w: Tensor::rand_uniform(&[c, c], -bound(c), bound(c), rng),
            value_b: Tensor::zeros(&[c]),
            pe_w1: Tensor::rand_uniform(&[cfg.pe_hidden, width], -bound(width), bound(width), rng),
            pe_b1: Tensor::zeros(&[cfg.pe_hidden]),
            pe_w2: Tensor::rand_uniform(
                &[cfg.heads, cfg.pe_hidden],
                -bound(cfg.pe_hidden),
                bound(cfg.pe_hidden),
                rng,
            ),
            pe_b2: Tensor::zeros(&[cfg.heads]),
        })
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.inner.named(&format!("{prefix}.fim"), out);
        for (k, w) in self.spatial_w.iter().enumerate() {
            out.push((format!("{prefix}.spatial{k}.w"), w.clone()));
        }
        for (k, w) in self.freq_w.iter().enumerate() {
            out.push((format!("{prefix}.freq{k}.w"), w.clone()));
        }
        out.push((format!("{prefix}.fuse.w"), self.fuse_w.clone()));
        out.push((format!("{prefix}.fuse.b"), self.fuse_b.clone()));
        out.push((format!("{prefix}.value.w"), self.value_w.clone()));
        out.push((format!("{prefix}.value.b"), self.value_b.clone()));
        out.push((format!("{prefix}.pe.w1"), self.pe_w1.clone()));
        out.push((format!("{prefix}.pe.b1"), self.pe_b1.clone()));
        out.push((format!("{prefix}.pe.w2"), self.pe_w2.clone()));
        out.push((format!("{prefix}.pe.b2"), self.pe_b2.clone()));
    }

    pub fn register(&self, tape: &mut Tape, prefix: &str, trainable: bool) -> Result<IisaVars> {
        let push = |tape: &mut Tape, name: String, t: &Tensor| -> Result<Var> {
            if trainable {
                tape.param(&name, t.clone())
            } else {
                Ok(tape.constant(t.clone()))
            }
        };
        let inner = self.inner.register(tape, &format!("{prefix}.fim"), trainable)?;
        let mut spatial_w = Vec::with_capacity(self.spatial_w.len());
        for (k, w) in self.spatial_w.iter().enumerate() {
            spatial_w.push(push(tape, format!("{prefix}.spatial{k}.w"), w)?);
        }
        let mut freq_w = Vec::with_capacity(self.freq_w.len());
        for (k, w) in self.freq_w.iter().enumerate() {
            freq_w.push(push(tape, format!("{prefix}.freq{k}.w"), w)?);
        }
        Ok(IisaVars {
            inner,
            spatial_w,
            freq_w,
            fuse_w: push(tape, format!("{prefix}.fuse.w"), &self.fuse_w)?,
            fuse_b: push(tape, format!("{prefix}.fuse.b"), &self.fuse_b)?,
            value_w: push(tape, format!("{prefix}.value.w"), &self.value_w)?,
            value_b: push(tape, format!("{prefix}.value.b"), &self.value_b)?,
            pe_w1: push(tape, format!("{prefix}.pe.w1"), &self.pe_w1)?,
            pe_b1: push(tape, format!("{prefix}.pe.b1"), &self.pe_b1)?,
            pe_w2: push(tape, format!("{prefix}.pe.w2"), &self.pe_w2)?,
            pe_b2: push(tape, format!("{prefix}.pe.b2"), &self.pe_b2)?,
        })
    }
}

/// Query-map projection of an already-transformed feature map `z'`.
pub fn project_on(tape: &mut Tape, zp: Var, cfg: &IisaConfig, vars: &IisaVars) -> Result<Var> {
    if cfg.subspaces == 0 {
        return tape.pconv(zp, vars.fuse_w, vars.fuse_b);
    }
    let sub_c = cfg.channels / cfg.subspaces;
    let zero_bias = tape.constant(Tensor::zeros(&[sub_c]));
    let planes = if cfg.freq_count() > 0 {
        let spectrum = tape.fft2(zp)?;
        let re = tape.c_re(spectrum);
        let im = tape.c_im(spectrum);
        Some(tape.concat(&[re, im], 0)?)
    } else {
        None
    };
    let mut parts = Vec::with_capacity(cfg.subspaces);
    for k in 0..cfg.subspaces {
        let part = if cfg.all_spatial {
            tape.pconv(zp, vars.spatial_w[k], zero_bias)?
        } else if k % 2 == 0 {
            tape.pconv(zp, vars.spatial_w[k / 2], zero_bias)?
        } else {
            let planes = planes.expect("frequency projections require the spectrum");
            tape.pconv(planes, vars.freq_w[k / 2], zero_bias)?
        };
        parts.push(part);
    }
    let stacked = tape.concat(&parts, 0)?;
    tape.pconv(stacked, vars.fuse_w, vars.fuse_b)
}

/// Builds the query and value maps from the raw fused feature map `z`:
/// the inner frequency block runs once and feeds both.
pub fn maps_on(tape: &mut Tape, z: Var, cfg: &IisaConfig, vars: &IisaVars) -> Result<(Var, Var)> {
    let zp = fim::forward_on(tape, z, &vars.inner)?;
    let q_map = project_on(tape, zp, cfg, vars)?;
    let v_map = tape.pconv(zp, vars.value_w, vars.value_b)?;
    Ok((q_map, v_map))
}

/// Attention for one query at `theta` against a prebuilt key grid. Returns
/// a `[1, channels]` row.
pub fn attend_with_grid_on(
    tape: &mut Tape,
    q_map: Var,
    v_map: Var,
    theta: (f64, f64),
    cell: (f64, f64),
    grid: &QueryGrid,
    cfg: &IisaConfig,
    vars: &IisaVars,
) -> Result<Var> {
    let c = cfg.channels;
    let n_keys = grid.coords.dims()[0];
    let head_c = c / cfg.heads;

    // Positional bias: encode the query-to-key offsets, run the tiny MLP.
    // Coordinates are fixed per query, so the encoding enters as a constant.
    let mut delta = Vec::with_capacity(n_keys * 2);
    for j in 0..n_keys {
        delta.push(theta.0 - grid.coords.at2(j, 0));
        delta.push(theta.1 - grid.coords.at2(j, 1));
    }
    let delta = Tensor::new(vec![n_keys, 2], delta)?;
    let mut cells = Tensor::zeros(&[n_keys, 2]);
    for j in 0..n_keys {
        cells.data_mut()[2 * j] = cell.0;
        cells.data_mut()[2 * j + 1] = cell.1;
    }
    let encoded = pos_encode(&delta, &cells, &standard_freqs(cfg.pos_freqs))?;
    let encoded = tape.constant(encoded);
    let w1t = tape.transpose2(vars.pe_w1)?;
    let h1 = tape.matmul(encoded, w1t)?;
    let h1 = tape.add_row_bias(h1, vars.pe_b1)?;
    let h1 = tape.relu(h1);
    let w2t = tape.transpose2(vars.pe_w2)?;
    let bias = tape.matmul(h1, w2t)?;
    let bias = tape.add_row_bias(bias, vars.pe_b2)?;

    let theta_row = tape_coords(theta)?;
    let q_row = tape.bilinear_sample(q_map, &theta_row)?;
    let k_rows = tape.bilinear_sample(q_map, &grid.coords)?;
    let v_rows = tape.nearest_sample(v_map, &grid.coords)?;

    let mut heads = Vec::with_capacity(cfg.heads);
    for mu in 0..cfg.heads {
        let q_mu = tape.slice_axis(q_row, 1, mu * head_c, head_c)?;
        let k_mu = tape.slice_axis(k_rows, 1, mu * head_c, head_c)?;
        let v_mu = tape.slice_axis(v_rows, 1, mu * head_c, head_c)?;
        let k_t = tape.transpose2(k_mu)?;
        let qk = tape.matmul(q_mu, k_t)?;
        let qk = tape.scale(qk, 1.0 / (head_c as f64).sqrt());
        let bias_mu = tape.slice_axis(bias, 1, mu, 1)?;
        let bias_mu = tape.transpose2(bias_mu)?;
        let logits = tape.add(bias_mu, qk)?;
        let weights = tape.softmax(logits, 1)?;
        heads.push(tape.matmul(weights, v_mu)?);
    }
    tape.concat(&heads, 1)
}

fn tape_coords(theta: (f64, f64)) -> Result<Tensor> {
    Tensor::new(vec![1, 2], vec![theta.0, theta.1])
}

/// Pure query-map projection; `zp` is the output of the inner frequency
/// block.
pub fn project_subspaces(zp: &Tensor, params: &IisaParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let z = tape.constant(zp.clone());
    let vars = params.register(&mut tape, "iisa", false)?;
    let out = project_on(&mut tape, z, &params.cfg, &vars)?;
    Ok(tape.value(out).clone())
}

/// Pure single-query attention over prebuilt maps.
pub fn iisa_attend(
    q_map: &Tensor,
    v_map: &Tensor,
    theta: (f64, f64),
    cell: (f64, f64),
    params: &IisaParams,
) -> Result<Tensor> {
    let (h, w) = (q_map.dims()[1], q_map.dims()[2]);
    let grid = make_query_grid(theta, h, w, params.cfg.grid_h, params.cfg.grid_w)?;
    let mut tape = Tape::new();
    let q = tape.constant(q_map.clone());
    let v = tape.constant(v_map.clone());
    let vars = params.register(&mut tape, "iisa", false)?;
    let out = attend_with_grid_on(&mut tape, q, v, theta, cell, &grid, &params.cfg, &vars)?;
    Ok(tape.value(out).clone())
}

/// Full module on a raw feature map: inner frequency block, projections,
/// then one query's attention row.
pub fn iisa_forward(
    z: &Tensor,
    theta: (f64, f64),
    cell: (f64, f64),
    params: &IisaParams,
) -> Result<Tensor> {
    let (h, w) = (z.dims()[1], z.dims()[2]);
    let grid = make_query_grid(theta, h, w, params.cfg.grid_h, params.cfg.grid_w)?;
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let vars = params.register(&mut tape, "iisa", false)?;
    let (q_map, v_map) = maps_on(&mut tape, zv, &params.cfg, &vars)?;
    let out = attend_with_grid_on(&mut tape, q_map, v_map, theta, cell, &grid, &params.cfg, &vars)?;
    Ok(tape.value(out).clone())
}
