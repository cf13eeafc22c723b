//! The full super-resolution model.
//!
//! A convolutional encoder lifts the low-resolution RGB input to a feature
//! map, a chain of residual frequency-integration blocks refines it, and
//! two attention branches answer continuous-coordinate queries: the local
//! implicit attention and (optionally) the whole-map spectral attention.
//! Their feature rows are summed, decoded to RGB by a small MLP, and added
//! to a bilinear sample of the input at the query position, so the network
//! only ever learns a residual on top of plain bilinear upsampling:
//!
//! ```text
//! z   = fim_chain(encoder(lr))
//! f   = iisa(z, theta) + fcsa(z, theta)
//! rgb = decoder(f) + bilinear(lr, theta)
//! ```
//!
//! Output extents follow `round(eta * input extent)` per axis, so any real
//! scale factor >= 1 works, not just integers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::config::ModelConfig;
use crate::coords::{cell_for_scale, make_coord_grid, make_query_grid};
use crate::error::Error;
use crate::fcsa::{self, FcsaParams, FcsaVars};
use crate::fim::{self, FimParams, FimVars};
use crate::iisa::{self, IisaParams, IisaVars};
use crate::tensor::Tensor;
use crate::Result;

/// Queries decoded per tape during inference; bounds graph memory while
/// amortizing the per-tape map constants.
const QUERY_CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

/// Every learnable tensor in the model plus the config it was built for.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    pub encoder: Vec<ConvLayer>,
    pub blocks: Vec<FimParams>,
    pub iisa: IisaParams,
    pub fcsa: FcsaParams,
    pub decoder: Vec<Linear>,
    /// Completed optimizer steps (provenance, stored in checkpoints).
    pub iterations: u64,
    /// Seed the parameters were initialized from.
    pub seed: u64,
}

pub struct ModelVars {
    pub encoder: Vec<(Var, Var)>,
    pub blocks: Vec<FimVars>,
    pub iisa: IisaVars,
    pub fcsa: FcsaVars,
    pub decoder: Vec<(Var, Var)>,
}

impl ModelParams {
    /// Deterministic init: one seeded generator, tensors drawn in a fixed
    /// documented order (encoder, blocks, attention, spectral attention,
    /// decoder). The spectral-attention projection is always drawn even
    /// when disabled so toggling `use_fcsa` never shifts other draws.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = cfg.channels;
        let k = cfg.kernel;
        let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();

        let mut encoder = Vec::with_capacity(cfg.encoder_depth);
        for layer in 0..cfg.encoder_depth {
            let in_c = if layer == 0 { 3 } else { c };
            let b = bound(in_c * k * k);
            encoder.push(ConvLayer {
                w: Tensor::rand_uniform(&[c, in_c, k, k], -b, b, &mut rng),
                b: Tensor::zeros(&[c]),
            });
        }
        let blocks = (0..cfg.fim_blocks)
            .map(|_| FimParams::init(c, k, &mut rng))
            .collect();
        let iisa = IisaParams::init(&cfg.to_iisa(), &mut rng)?;
        let fcsa = FcsaParams::init(c, &mut rng);
        let mut decoder = Vec::with_capacity(cfg.decoder_depth + 1);
        let mut width = c;
        for _ in 0..cfg.decoder_depth {
            let b = bound(width);
            decoder.push(Linear {
                w: Tensor::rand_uniform(&[cfg.decoder_hidden, width], -b, b, &mut rng),
                b: Tensor::zeros(&[cfg.decoder_hidden]),
            });
            width = cfg.decoder_hidden;
        }
        let b = bound(width);
        decoder.push(Linear {
            w: Tensor::rand_uniform(&[3, width], -b, b, &mut rng),
            b: Tensor::zeros(&[3]),
        });

        Ok(ModelParams {
            cfg: cfg.clone(),
            encoder,
            blocks,
            iisa,
            fcsa,
            decoder,
            iterations: 0,
            seed,
        })
    }

    /// Stable name/tensor listing; the order defines the checkpoint layout
    /// and the optimizer's iteration order.
    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.encoder.iter().enumerate() {
            out.push((format!("encoder{i}.w"), layer.w.clone()));
            out.push((format!("encoder{i}.b"), layer.b.clone()));
        }
        for (i, block) in self.blocks.iter().enumerate() {
            block.named(&format!("block{i}"), &mut out);
        }
        self.iisa.named("iisa", &mut out);
        self.fcsa.named("fcsa", &mut out);
        for (i, layer) in self.decoder.iter().enumerate() {
            out.push((format!("decoder{i}.w"), layer.w.clone()));
            out.push((format!("decoder{i}.b"), layer.b.clone()));
        }
        out
    }

    /// Mutable view over the same tensors, in the same order as [`named`].
    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            out.push((format!("encoder{i}.w"), &mut layer.w));
            out.push((format!("encoder{i}.b"), &mut layer.b));
        }
        for (i, block) in self.blocks.iter_mut().enumerate() {
            for (suffix, t) in block.fields_mut() {
                out.push((format!("block{i}.{suffix}"), t));
            }
        }
        let p = &mut self.iisa;
        for (suffix, t) in p.inner.fields_mut() {
            out.push((format!("iisa.fim.{suffix}"), t));
        }
        for (k, w) in p.spatial_w.iter_mut().enumerate() {
            out.push((format!("iisa.spatial{k}.w"), w));
        }
        for (k, w) in p.freq_w.iter_mut().enumerate() {
            out.push((format!("iisa.freq{k}.w"), w));
        }
        out.push(("iisa.fuse.w".into(), &mut p.fuse_w));
        out.push(("iisa.fuse.b".into(), &mut p.fuse_b));
        out.push(("iisa.value.w".into(), &mut p.value_w));
        out.push(("iisa.value.b".into(), &mut p.value_b));
        out.push(("iisa.pe.w1".into(), &mut p.pe_w1));
        out.push(("iisa.pe.b1".into(), &mut p.pe_b1));
        out.push(("iisa.pe.w2".into(), &mut p.pe_w2));
        out.push(("iisa.pe.b2".into(), &mut p.pe_b2));
        out.push(("fcsa.qkv.w".into(), &mut self.fcsa.qkv_w));
        out.push(("fcsa.qkv.b".into(), &mut self.fcsa.qkv_b));
        for (i, layer) in self.decoder.iter_mut().enumerate() {
            out.push((format!("decoder{i}.w"), &mut layer.w));
            out.push((format!("decoder{i}.b"), &mut layer.b));
        }
        out
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Result<ModelVars> {
        let push = |tape: &mut Tape, name: String, t: &Tensor| -> Result<Var> {
            if trainable {
                tape.param(&name, t.clone())
            } else {
                Ok(tape.constant(t.clone()))
            }
        };
        let mut encoder = Vec::with_capacity(self.encoder.len());
        for (i, layer) in self.encoder.iter().enumerate() {
            encoder.push((
                push(tape, format!("encoder{i}.w"), &layer.w)?,
                push(tape, format!("encoder{i}.b"), &layer.b)?,
            ));
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            blocks.push(block.register(tape, &format!("block{i}"), trainable)?);
        }
        let iisa = self.iisa.register(tape, "iisa", trainable)?;
        let fcsa = self.fcsa.register(tape, "fcsa", trainable)?;
        let mut decoder = Vec::with_capacity(self.decoder.len());
        for (i, layer) in self.decoder.iter().enumerate() {
            decoder.push((
                push(tape, format!("decoder{i}.w"), &layer.w)?,
                push(tape, format!("decoder{i}.b"), &layer.b)?,
            ));
        }
        Ok(ModelVars { encoder, blocks, iisa, fcsa, decoder })
    }
}

/// Encoder: first conv maps RGB to features, later layers are residual.
pub fn encoder_on(tape: &mut Tape, img: Var, vars: &ModelVars) -> Result<Var> {
    let (w0, b0) = vars.encoder[0];
    let mut z = tape.conv2d(img, w0, b0)?;
    for &(w, b) in &vars.encoder[1..] {
        let a = tape.relu(z);
        let f = tape.conv2d(a, w, b)?;
        z = tape.add(z, f)?;
    }
    Ok(z)
}

/// Residual chain of frequency-integration blocks.
pub fn fim_chain_on(tape: &mut Tape, z: Var, vars: &ModelVars) -> Result<Var> {
    let mut z = z;
    for block in &vars.blocks {
        let f = fim::forward_on(tape, z, block)?;
        z = tape.add(f, z)?;
    }
    Ok(z)
}

/// MLP decoder applied independently to each feature row.
pub fn decoder_on(tape: &mut Tape, rows: Var, vars: &ModelVars) -> Result<Var> {
    let mut x = rows;
    let last = vars.decoder.len() - 1;
    for (i, &(w, b)) in vars.decoder.iter().enumerate() {
        let wt = tape.transpose2(w)?;
        x = tape.matmul(x, wt)?;
        x = tape.add_row_bias(x, b)?;
        if i != last {
            x = tape.relu(x);
        }
    }
    Ok(x)
}

/// Full training-time forward: every query stays on one tape so gradients
/// flow back through both attention branches into the encoder.
///
/// `img` is the `[3, h, w]` low-resolution input already on the tape;
/// `coords` is `[n, 2]` query positions and `cell` the query pixel extent.
pub fn forward_queries_on(
    tape: &mut Tape,
    img: Var,
    coords: &Tensor,
    cell: (f64, f64),
    vars: &ModelVars,
    cfg: &ModelConfig,
) -> Result<Var> {
    let dims = tape.value(img).dims().to_vec();
    let (h, w) = (dims[1], dims[2]);
    let iisa_cfg = cfg.to_iisa();
    let z0 = encoder_on(tape, img, vars)?;
    let z = fim_chain_on(tape, z0, vars)?;
    let (q_map, v_map) = iisa::maps_on(tape, z, &iisa_cfg, &vars.iisa)?;
    let attn_map = if cfg.use_fcsa {
        Some(fcsa::attn_map_on(tape, z, &vars.fcsa, cfg.fcsa_token_limit)?)
    } else {
        None
    };
    let n = coords.dims()[0];
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let theta = (coords.at2(i, 0), coords.at2(i, 1));
        let grid = make_query_grid(theta, h, w, cfg.grid_h, cfg.grid_w)?;
        let mut f = iisa::attend_with_grid_on(
            tape, q_map, v_map, theta, cell, &grid, &iisa_cfg, &vars.iisa,
        )?;
        if let Some(map) = attn_map {
            let s = fcsa::sample_at_center_on(tape, map, grid.center)?;
            f = tape.add(f, s)?;
        }
        rows.push(f);
    }
    let feats = tape.concat(&rows, 0)?;
    let rgb = decoder_on(tape, feats, vars)?;
    let skip = tape.bilinear_sample(img, coords)?;
    tape.add(rgb, skip)
}

/// Feature maps that depend only on the input image, not on the queries.
/// Inference computes them once and reuses them for every query chunk.
pub struct Precomputed {
    pub q_map: Tensor,
    pub v_map: Tensor,
    pub attn_map: Option<Tensor>,
    pub lr: Tensor,
}

pub fn precompute(img: &Tensor, params: &ModelParams) -> Result<Precomputed> {
    if img.rank() != 3 || img.dims()[0] != 3 {
        return Err(Error::Shape(format!(
            "expected a [3, h, w] RGB image, got {:?}",
            img.dims()
        )));
    }
    let mut tape = Tape::new();
    let iv = tape.constant(img.clone());
    let vars = params.register(&mut tape, false)?;
    let z0 = encoder_on(&mut tape, iv, &vars)?;
    let z = fim_chain_on(&mut tape, z0, &vars)?;
    let (q_map, v_map) = iisa::maps_on(&mut tape, z, &params.cfg.to_iisa(), &vars.iisa)?;
    let attn_map = if params.cfg.use_fcsa {
        let map = fcsa::attn_map_on(&mut tape, z, &vars.fcsa, params.cfg.fcsa_token_limit)?;
        Some(tape.value(map).clone())
    } else {
        None
    };
    Ok(Precomputed {
        q_map: tape.value(q_map).clone(),
        v_map: tape.value(v_map).clone(),
        attn_map,
        lr: img.clone(),
    })
}

/// Decode a batch of queries against precomputed maps. Returns `[n, 3]`.
pub fn query_rows(
    pre: &Precomputed,
    coords: &Tensor,
    cell: (f64, f64),
    params: &ModelParams,
) -> Result<Tensor> {
    let (h, w) = (pre.lr.dims()[1], pre.lr.dims()[2]);
    let iisa_cfg = params.cfg.to_iisa();
    let mut tape = Tape::new();
    let q_map = tape.constant(pre.q_map.clone());
    let v_map = tape.constant(pre.v_map.clone());
    let attn_map = pre.attn_map.as_ref().map(|m| tape.constant(m.clone()));
    let img = tape.constant(pre.lr.clone());
    let iisa_vars = params.iisa.register(&mut tape, "iisa", false)?;
    let decoder_vars: Vec<(Var, Var)> = params
        .decoder
        .iter()
        .map(|l| (tape.constant(l.w.clone()), tape.constant(l.b.clone())))
        .collect();

    let n = coords.dims()[0];
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let theta = (coords.at2(i, 0), coords.at2(i, 1));
        let grid = make_query_grid(theta, h, w, params.cfg.grid_h, params.cfg.grid_w)?;
        let mut f = iisa::attend_with_grid_on(
            &mut tape, q_map, v_map, theta, cell, &grid, &iisa_cfg, &iisa_vars,
        )?;
        if let Some(map) = attn_map {
            let s = fcsa::sample_at_center_on(&mut tape, map, grid.center)?;
            f = tape.add(f, s)?;
        }
        rows.push(f);
    }
    let feats = tape.concat(&rows, 0)?;
    let mut x = feats;
    let last = decoder_vars.len() - 1;
    for (i, &(wv, bv)) in decoder_vars.iter().enumerate() {
        let wt = tape.transpose2(wv)?;
        x = tape.matmul(x, wt)?;
        x = tape.add_row_bias(x, bv)?;
        if i != last {
            x = tape.relu(x);
        }
    }
    let skip = tape.bilinear_sample(img, coords)?;
    let out = tape.add(x, skip)?;
    Ok(tape.value(out).clone())
}

/// Output extent law shared by inference and the training synthesizer.
pub fn scaled_extent(extent: usize, eta: f64) -> usize {
    ((extent as f64) * eta).round() as usize
}

/// Upsample a `[3, h, w]` image by (possibly fractional, possibly
/// anisotropic) scale factors. This is the whole model end to end.
pub fn fit_forward(img: &Tensor, eta_h: f64, eta_w: f64, params: &ModelParams) -> Result<Tensor> {
    if !(eta_h >= 1.0 && eta_w >= 1.0 && eta_h.is_finite() && eta_w.is_finite()) {
        return Err(Error::Usage(format!(
            "scale factors must be >= 1, got ({eta_h}, {eta_w})"
        )));
    }
    let (h, w) = (img.dims()[1], img.dims()[2]);
    let (oh, ow) = (scaled_extent(h, eta_h), scaled_extent(w, eta_w));
    let cell = cell_for_scale(eta_h, eta_w, h, w)?;
    let pre = precompute(img, params)?;
    let grid = make_coord_grid(oh, ow)?;
    let n = oh * ow;

    let mut out = Tensor::zeros(&[3, oh, ow]);
    let mut start = 0;
    while start < n {
        let len = QUERY_CHUNK.min(n - start);
        let chunk = crate::tensor::slice_axis(&grid.coords, 0, start, len)?;
        let rows = query_rows(&pre, &chunk, cell, params)?;
        for i in 0..len {
            let pixel = start + i;
            let (r, c) = (pixel / ow, pixel % ow);
            for ch in 0..3 {
                out.set3(ch, r, c, rows.at2(i, ch));
            }
        }
        start += len;
    }
    Ok(out)
}
