//! PNG images and model checkpoints.
//!
//! Images cross the boundary as `[3, h, w]` tensors scaled to [0, 1];
//! grayscale files are promoted to RGB on load and values are clamped,
//! scaled, and rounded on save.
//!
//! Checkpoints are a small self-describing binary format (magic `FITC`):
//! a version, a text header carrying the architecture and training
//! provenance, and one f32 payload per named tensor. Saving after loading
//! reproduces the file byte for byte, which makes reproducibility checks a
//! matter of comparing files.

use std::fs;
use std::path::Path;

use crate::config::{checkpoint_header, parse_checkpoint_header};
use crate::error::Error;
use crate::model::ModelParams;
use crate::tensor::Tensor;
use crate::Result;

const MAGIC: &[u8; 4] = b"FITC";
const VERSION: u32 = 1;

pub fn load_png(path: &Path) -> Result<Tensor> {
    if !path.exists() {
        return Err(Error::Usage(format!("no such image: {}", path.display())));
    }
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Tensor::zeros(&[3, h, w]);
    for (x, y, px) in img.enumerate_pixels() {
        for ch in 0..3 {
            out.set3(ch, y as usize, x as usize, f64::from(px.0[ch]) / 255.0);
        }
    }
    Ok(out)
}

pub fn save_png(path: &Path, img: &Tensor) -> Result<()> {
    if img.rank() != 3 || img.dims()[0] != 3 {
        return Err(Error::Shape(format!(
            "png save wants a [3,h,w] image, got {:?}",
            img.dims()
        )));
    }
    let (h, w) = (img.dims()[1], img.dims()[2]);
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                quantize(img.at3(0, y, x)),
                quantize(img.at3(1, y, x)),
                quantize(img.at3(2, y, x)),
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path).map_err(Error::from)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let header = checkpoint_header(&params.cfg, params.iterations, params.seed);
    let entries = params.named();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, header.len() as u32);
    buf.extend_from_slice(header.as_bytes());
    push_u32(&mut buf, entries.len() as u32);
    for (name, t) in &entries {
        push_u32(&mut buf, name.len() as u32);
        buf.extend_from_slice(name.as_bytes());
        push_u32(&mut buf, t.rank() as u32);
        for &d in t.dims() {
            push_u32(&mut buf, d as u32);
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    if !path.exists() {
        return Err(Error::Usage(format!("no such checkpoint: {}", path.display())));
    }
    let bytes = fs::read(path)?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a model checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (this build reads {VERSION})"
        )));
    }
    let header_len = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(header_len)?)
        .map_err(|_| Error::Checkpoint("header is not valid UTF-8".into()))?
        .to_string();
    let (cfg, iterations, seed) = parse_checkpoint_header(&header)?;

    let n_entries = r.u32()? as usize;
    let mut loaded: Vec<(String, Tensor)> = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not valid UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let numel: usize = dims.iter().product();
        let raw = r.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        loaded.push((name, Tensor::new(dims, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }

    // rebuild the parameter structure from the header, then overwrite
    // every tensor with the stored values, by name
    let mut params = ModelParams::init(&cfg, seed)?;
    let slots = params.named_mut();
    if loaded.len() != slots.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors for this architecture, file has {}",
            slots.len(),
            loaded.len()
        )));
    }
    for ((want_name, slot), (got_name, tensor)) in slots.into_iter().zip(loaded) {
        if want_name != got_name {
            return Err(Error::Checkpoint(format!(
                "tensor order mismatch: expected {want_name:?}, found {got_name:?}"
            )));
        }
        if slot.dims() != tensor.dims() {
            return Err(Error::Checkpoint(format!(
                "tensor {want_name:?} has shape {:?}, architecture wants {:?}",
                tensor.dims(),
                slot.dims()
            )));
        }
        *slot = tensor;
    }
    params.iterations = iterations;
    Ok(params)
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "file truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
