//! Built-in numerical test battery.
//!
//! Runs fast, in-memory checks of the numerics a deployment depends on:
//! Fourier energy conservation, autodiff-versus-finite-difference
//! agreement, closed-form attention degenerations, and the output shape
//! law. Each group reports pass/fail counts with messages instead of
//! panicking, so the CLI can print a readable report and exit nonzero.
//!
//! [`Hooks`] exists so the test suite can prove the battery has teeth: a
//! hook that mis-scales the transform must turn the energy group red.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::grad_check::{grad_check, NamedTensors};
use crate::config::ModelConfig;
use crate::coords::{make_query_grid, nearest_sample};
use crate::error::Result;
use crate::fft::{fft2, ifft2};
use crate::fim::{FimParams, FimVars};
use crate::iisa::{iisa_attend, IisaParams};
use crate::model::{fit_forward, scaled_extent, ModelParams};
use crate::tensor::{pconv, slice_axis, Tensor};

/// Fault-injection knobs. Production callers pass [`Hooks::default`].
#[derive(Debug, Clone)]
pub struct Hooks {
    /// Multiplies every spectrum computed by the energy group. Any value
    /// other than 1.0 must make that group fail.
    pub fft_scale: f64,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks { fft_scale: 1.0 }
    }
}

#[derive(Debug)]
pub struct GroupResult {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

impl GroupResult {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

pub fn all_ok(results: &[GroupResult]) -> bool {
    results.iter().all(GroupResult::ok)
}

/// One analytic-vs-numeric gradient comparison.
#[derive(Debug)]
pub struct GradProbe {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
}

impl GradProbe {
    pub fn ok(&self) -> bool {
        self.worst < self.tolerance
    }
}

struct Group {
    result: GroupResult,
}

impl Group {
    fn new(name: &'static str) -> Self {
        Group { result: GroupResult { name, passed: 0, failed: 0, failures: Vec::new() } }
    }

    fn check(&mut self, what: &str, outcome: std::result::Result<(), String>) {
        match outcome {
            Ok(()) => self.result.passed += 1,
            Err(msg) => {
                self.result.failed += 1;
                self.result.failures.push(format!("{what}: {msg}"));
            }
        }
    }
}

fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        channels: 4,
        encoder_depth: 2,
        fim_blocks: 1,
        subspaces: 2,
        heads: 2,
        pos_freqs: 2,
        pe_hidden: 8,
        decoder_hidden: 8,
        decoder_depth: 1,
        ..ModelConfig::default()
    }
}

/// Run every group and collect the results. `seed` varies the random
/// draws; every check must hold for all of them.
pub fn run(hooks: &Hooks, seed: u64) -> Vec<GroupResult> {
    vec![
        energy_group(hooks, seed),
        gradient_group(seed),
        attention_group(seed),
        shape_group(seed),
    ]
}

fn energy_group(hooks: &Hooks, seed: u64) -> GroupResult {
    let mut g = Group::new("fourier-energy");
    for (h, w, salt) in [(4, 4, 1), (8, 8, 2), (7, 5, 3), (16, 16, 4), (12, 9, 5)] {
        let x = Tensor::rand_uniform(&[1, h, w], -1.0, 1.0, &mut rng(seed, salt));
        let spectrum = match fft2(&x) {
            Ok(s) => s.scale(hooks.fft_scale),
            Err(e) => {
                g.check(&format!("fft {h}x{w}"), Err(e.to_string()));
                continue;
            }
        };
        let spatial: f64 = x.data().iter().map(|v| v * v).sum();
        let spectral = spectrum.norm_sqr();
        g.check(&format!("energy conservation {h}x{w}"), {
            let drift = (spatial - spectral).abs();
            if drift < 1e-9 {
                Ok(())
            } else {
                Err(format!("energy drifted by {drift:.3e}"))
            }
        });
        g.check(&format!("roundtrip {h}x{w}"), match ifft2(&spectrum) {
            Ok(back) => {
                let diff = back.re().max_abs_diff(&x).max(back.im().abs_max());
                if diff < 1e-9 {
                    Ok(())
                } else {
                    Err(format!("inverse drifted by {diff:.3e}"))
                }
            }
            Err(e) => Err(e.to_string()),
        });
    }
    g.result
}

/// The two gradient comparisons shared by the battery and `grad-check`:
/// one frequency-integration block with all of its parameters plus the
/// input, and the full model composition through the input image.
pub fn gradient_probes(seed: u64) -> Result<Vec<GradProbe>> {
    let mut probes = Vec::new();

    let p = FimParams::init(2, 3, &mut rng(seed, 6));
    let mut params = NamedTensors::new();
    params.insert("z", Tensor::rand_uniform(&[2, 4, 4], -1.0, 1.0, &mut rng(seed, 7)))?;
    params.insert("f.conv_re.w", p.conv_re_w.clone())?;
    params.insert("f.conv_im.w", p.conv_im_w.clone())?;
    params.insert("f.pconv.w", p.pconv_w.clone())?;
    let bias2 = Tensor::zeros(&[2]);
    let worst = grad_check(
        |tape, values| {
            let z = tape.param("z", values.get("z").unwrap().clone())?;
            let zb = tape.constant(bias2.clone());
            let vars = FimVars {
                conv_re_w: tape.param("f.conv_re.w", values.get("f.conv_re.w").unwrap().clone())?,
                conv_re_b: zb,
                conv_im_w: tape.param("f.conv_im.w", values.get("f.conv_im.w").unwrap().clone())?,
                conv_im_b: zb,
                pconv_w: tape.param("f.pconv.w", values.get("f.pconv.w").unwrap().clone())?,
                pconv_b: zb,
            };
            let out = crate::fim::forward_on(tape, z, &vars)?;
            let sq = tape.mul(out, out)?;
            Ok(tape.sum(sq))
        },
        &params,
        1e-5,
        20,
        8,
    )?;
    probes.push(GradProbe { name: "frequency block", worst, tolerance: 1e-4 });

    // parameter-side paths are covered above and by per-module unit
    // tests; this exercises the whole composition through the input
    let model = ModelParams::init(&tiny_cfg(), 9)?;
    let mut params = NamedTensors::new();
    params.insert("img", Tensor::rand_uniform(&[3, 4, 4], 0.0, 1.0, &mut rng(seed, 10)))?;
    let coords = Tensor::new(vec![2, 2], vec![0.2, -0.1, -0.6, 0.8])?;
    let worst = grad_check(
        |tape, values| {
            let img = tape.param("img", values.get("img").unwrap().clone())?;
            let vars = model.register(tape, false)?;
            let out = crate::model::forward_queries_on(
                tape, img, &coords, (0.25, 0.25), &vars, &model.cfg,
            )?;
            let sq = tape.mul(out, out)?;
            Ok(tape.sum(sq))
        },
        &params,
        1e-5,
        16,
        11,
    )?;
    probes.push(GradProbe { name: "end-to-end", worst, tolerance: 1e-3 });
    Ok(probes)
}

fn gradient_group(seed: u64) -> GroupResult {
    let mut g = Group::new("gradients");
    match gradient_probes(seed) {
        Ok(probes) => {
            for probe in probes {
                g.check(&format!("{} vs finite differences", probe.name), if probe.ok() {
                    Ok(())
                } else {
                    Err(format!(
                        "worst relative error {:.3e} exceeds {:.0e}",
                        probe.worst, probe.tolerance
                    ))
                });
            }
        }
        Err(e) => g.check("gradient probes", Err(e.to_string())),
    }
    g.result
}

fn attention_group(seed: u64) -> GroupResult {
    let mut g = Group::new("attention-closures");

    // local attention over a single-key grid returns the value row
    let mut cfg = tiny_cfg().to_iisa();
    cfg.grid_h = 1;
    cfg.grid_w = 1;
    g.check("single-key grid returns the value row", (|| {
        let params = IisaParams::init(&cfg, &mut rng(seed, 12)).map_err(|e| e.to_string())?;
        let q_map = Tensor::rand_uniform(&[4, 5, 5], -1.0, 1.0, &mut rng(seed, 13));
        let v_map = Tensor::rand_uniform(&[4, 5, 5], -1.0, 1.0, &mut rng(seed, 14));
        let theta = (0.4, -0.2);
        let out = iisa_attend(&q_map, &v_map, theta, (0.2, 0.2), &params)
            .map_err(|e| e.to_string())?;
        let grid = make_query_grid(theta, 5, 5, 1, 1).map_err(|e| e.to_string())?;
        let want = nearest_sample(&v_map, &grid.coords).map_err(|e| e.to_string())?;
        let diff = out.max_abs_diff(&want);
        if diff < 1e-12 {
            Ok(())
        } else {
            Err(format!("differs from the value row by {diff:.3e}"))
        }
    })());

    // spectral attention with zeroed query/key weights averages the values
    g.check("zeroed spectral attention averages the values", (|| {
        let c = 3;
        let z = Tensor::rand_uniform(&[c, 3, 4], -1.0, 1.0, &mut rng(seed, 15));
        let mut params = crate::fcsa::FcsaParams::init(c, &mut rng(seed, 16));
        for row in 0..2 * c {
            for col in 0..c {
                params.qkv_w.data_mut()[row * c + col] = 0.0;
            }
            params.qkv_b.data_mut()[row] = 0.0;
        }
        let map = crate::fcsa::fcsa_map(&z, &params, 4096).map_err(|e| e.to_string())?;
        let v_w = slice_axis(&params.qkv_w, 0, 2 * c, c).map_err(|e| e.to_string())?;
        let v_b = slice_axis(&params.qkv_b, 0, 2 * c, c).map_err(|e| e.to_string())?;
        let values = pconv(&z, &v_w, &v_b).map_err(|e| e.to_string())?;
        for ch in 0..c {
            let mean: f64 =
                (0..12).map(|p| values.at3(ch, p / 4, p % 4)).sum::<f64>() / 12.0;
            for p in 0..12 {
                let want = mean + z.at3(ch, p / 4, p % 4);
                let got = map.at3(ch, p / 4, p % 4);
                if (got - want).abs() > 1e-9 {
                    return Err(format!(
                        "channel {ch} pixel {p}: {got} vs uniform mix {want}"
                    ));
                }
            }
        }
        Ok(())
    })());
    g.result
}

fn shape_group(seed: u64) -> GroupResult {
    let mut g = Group::new("shape-law");
    let params = match ModelParams::init(&tiny_cfg(), 17) {
        Ok(p) => p,
        Err(e) => {
            g.check("model init", Err(e.to_string()));
            return g.result;
        }
    };
    let img = Tensor::rand_uniform(&[3, 5, 7], 0.0, 1.0, &mut rng(seed, 18));
    for eta in [1.0, 1.5, 2.0, 3.3] {
        g.check(&format!("output extents at scale {eta}"), {
            match fit_forward(&img, eta, eta, &params) {
                Ok(out) => {
                    let want = [3, scaled_extent(5, eta), scaled_extent(7, eta)];
                    if out.dims() == want {
                        Ok(())
                    } else {
                        Err(format!("got {:?}, want {want:?}", out.dims()))
                    }
                }
                Err(e) => Err(e.to_string()),
            }
        });
    }
    g.check("invalid head count is rejected", {
        let mut bad = tiny_cfg();
        bad.heads = 3;
        match bad.validate() {
            Err(_) => Ok(()),
            Ok(()) => Err("3 heads on 4 channels validated".into()),
        }
    });
    g.result
}
