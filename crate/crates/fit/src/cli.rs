//! Command-line interface: argument types and the command implementations
//! behind the `fit` binary.
//!
//! Exit codes are owned by `main`: 0 on success, 1 for usage/config
//! mistakes, 2 for runtime or invariant failures (see
//! [`Error::exit_code`]). Everything here returns [`Result`] and prints
//! to stdout; warnings go to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use crate::config::{parse_config, ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{eval_pair, frequency_error_map, render_error_map};
use crate::io::{load_checkpoint, load_png, save_checkpoint, save_png};
use crate::model::{fit_forward, ModelParams};
use crate::selftest;
use crate::train::{lr_at, train};

#[derive(Parser)]
#[command(
    name = "fit",
    version,
    about = "Arbitrary-scale image super-resolution with Fourier-domain attention"
)]
pub struct Cli {
    /// Seed for the stochastic commands (train, grad-check, selftest)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model on a directory of PNG images
    Train {
        /// Directory containing training PNGs
        data: PathBuf,
        /// `key = value` configuration file (defaults apply when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint to write
        #[arg(long, default_value = "model.fitc")]
        out: PathBuf,
        /// Step-indexed loss log (default: checkpoint path with .loss.csv)
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Upsample one PNG by arbitrary, possibly anisotropic, factors
    Infer {
        /// Trained checkpoint
        model: PathBuf,
        /// Input PNG
        input: PathBuf,
        /// Scale factor: "2.5" (isotropic) or "1.5,2" (height,width)
        #[arg(long)]
        scale: String,
        /// Output PNG
        #[arg(long)]
        out: PathBuf,
    },
    /// Score reconstructions against ground-truth PNGs
    Eval {
        /// Checkpoint path, or "bicubic" for the interpolation baseline
        model: String,
        /// Directory of ground-truth PNGs
        data: PathBuf,
        /// Comma-separated scale factors, e.g. "2,3,4"
        #[arg(long, default_value = "2,4")]
        scale: String,
        /// Score the luma channel instead of RGB
        #[arg(long)]
        luma: bool,
        /// Write per-image rows to this CSV as well
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render where a reconstruction lost spectral energy
    Fem {
        /// Reconstructed PNG
        sr: PathBuf,
        /// Ground-truth PNG (same dimensions)
        hr: PathBuf,
        /// Output PNG (red = spectrum too different, green = preserved)
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients against finite differences
    GradCheck,
    /// Run the built-in numerical test battery
    Selftest,
}

/// Dispatch a parsed invocation.
pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Train { data, config, out, log } => cmd_train(&data, config.as_deref(), &out, log, seed),
        Command::Infer { model, input, scale, out } => cmd_infer(&model, &input, &scale, &out),
        Command::Eval { model, data, scale, luma, csv } => {
            cmd_eval(&model, &data, &scale, luma, csv.as_deref())
        }
        Command::Fem { sr, hr, out } => cmd_fem(&sr, &hr, &out),
        Command::GradCheck => cmd_grad_check(seed.unwrap_or(0)),
        Command::Selftest => cmd_selftest(seed.unwrap_or(0)),
    }
}

/// "2.5" -> (2.5, 2.5); "1.5,2" -> (1.5, 2.0).
pub fn parse_scale_pair(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let parse = |p: &str| -> Result<f64> {
        let v: f64 = p
            .parse()
            .map_err(|_| Error::Usage(format!("scale factor {p:?} is not a number")))?;
        if !(v >= 1.0 && v.is_finite()) {
            return Err(Error::Usage(format!("scale factor must be >= 1, got {p}")));
        }
        Ok(v)
    };
    match parts.as_slice() {
        [one] => parse(one).map(|v| (v, v)),
        [h, w] => Ok((parse(h)?, parse(w)?)),
        _ => Err(Error::Usage(format!(
            "expected one or two comma-separated scale factors, got {s:?}"
        ))),
    }
}

/// "2,3,4" -> [2.0, 3.0, 4.0]; each factor must be >= 1.
pub fn parse_scale_list(s: &str) -> Result<Vec<f64>> {
    let scales: Vec<f64> = s
        .split(',')
        .map(|p| parse_scale_pair(p).map(|(v, _)| v))
        .collect::<Result<_>>()?;
    if scales.is_empty() {
        return Err(Error::Usage("scale list is empty".into()));
    }
    Ok(scales)
}

/// All PNGs under `dir`, sorted by filename for deterministic output order.
fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Worker-thread count: FIT_THREADS when set, else the smaller of the
/// available parallelism and the job count.
fn thread_count(jobs: usize) -> Result<usize> {
    match std::env::var("FIT_THREADS") {
        Ok(raw) => {
            let n: usize = raw.trim().parse().map_err(|_| {
                Error::Usage(format!("FIT_THREADS must be a positive integer, got {raw:?}"))
            })?;
            if n == 0 {
                return Err(Error::Usage("FIT_THREADS must be a positive integer, got 0".into()));
            }
            Ok(n.min(jobs.max(1)))
        }
        Err(_) => {
            let cores = std::thread::available_parallelism().map(usize::from).unwrap_or(1);
            Ok(cores.min(jobs.max(1)))
        }
    }
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn cmd_train(
    data: &Path,
    config: Option<&Path>,
    out: &Path,
    log: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let (mcfg, mut tcfg) = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => (ModelConfig::default(), TrainConfig::default()),
    };
    if let Some(s) = seed {
        tcfg.seed = s;
    }

    let files = png_files(data)?;
    if files.is_empty() {
        return Err(Error::Usage(format!("no training images found in {}", data.display())));
    }
    let images = files.iter().map(|p| load_png(p)).collect::<Result<Vec<_>>>()?;
    println!(
        "training on {} images for {} epochs (seed {})",
        images.len(),
        tcfg.epochs,
        tcfg.seed
    );

    // per-epoch progress; the loss log keeps every step
    let mut epoch_sum = 0.0;
    let mut epoch_n = 0usize;
    let mut cur_epoch = 0usize;
    let total_epochs = tcfg.epochs;
    let tcfg_view = tcfg.clone();
    let mut on_step = move |epoch: usize, _step: usize, loss: f64| {
        if epoch != cur_epoch {
            println!(
                "epoch {:>4}/{}  lr {:.3e}  loss {:.6}",
                cur_epoch + 1,
                total_epochs,
                lr_at(cur_epoch, &tcfg_view),
                epoch_sum / epoch_n.max(1) as f64
            );
            cur_epoch = epoch;
            epoch_sum = 0.0;
            epoch_n = 0;
        }
        epoch_sum += loss;
        epoch_n += 1;
    };
    let (params, losses) = train(&images, &mcfg, &tcfg, &mut on_step)?;
    if let Some(&last) = losses.last() {
        println!(
            "epoch {:>4}/{}  lr {:.3e}  final step loss {:.6}",
            total_epochs,
            total_epochs,
            lr_at(total_epochs - 1, &tcfg),
            last
        );
    }

    save_checkpoint(out, &params)?;
    let log_path = log.unwrap_or_else(|| out.with_extension("loss.csv"));
    let mut rows = String::new();
    for (i, loss) in losses.iter().enumerate() {
        rows.push_str(&format!("{},{}\n", i + 1, loss));
    }
    fs::write(&log_path, rows)?;
    println!(
        "saved {} ({} optimizer steps); loss log {}",
        out.display(),
        params.iterations,
        log_path.display()
    );
    Ok(())
}

pub fn cmd_infer(model: &Path, input: &Path, scale: &str, out: &Path) -> Result<()> {
    let (eta_h, eta_w) = parse_scale_pair(scale)?;
    let params = load_checkpoint(model)?;
    let img = load_png(input)?;
    let sr = fit_forward(&img, eta_h, eta_w, &params)?;
    save_png(out, &sr)?;
    println!(
        "{}x{} -> {}x{}  {}",
        img.dims()[1],
        img.dims()[2],
        sr.dims()[1],
        sr.dims()[2],
        out.display()
    );
    Ok(())
}

/// PSNR of one image at every scale, or the load error that made it
/// unscoreable.
fn score_file(
    path: &Path,
    scales: &[f64],
    model: Option<&ModelParams>,
    luma: bool,
) -> Result<Vec<f64>> {
    let hr = load_png(path)?;
    scales.iter().map(|&eta| eval_pair(&hr, eta, model, luma)).collect()
}

pub fn cmd_eval(
    model: &str,
    data: &Path,
    scale: &str,
    luma: bool,
    csv: Option<&Path>,
) -> Result<()> {
    let scales = parse_scale_list(scale)?;
    let params = if model == "bicubic" { None } else { Some(load_checkpoint(Path::new(model))?) };
    let files = png_files(data)?;
    if files.is_empty() {
        return Err(Error::Usage(format!("no PNG images found in {}", data.display())));
    }

    let workers = thread_count(files.len())?;
    let slots: Mutex<Vec<Option<Result<Vec<f64>>>>> =
        Mutex::new((0..files.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= files.len() {
                    break;
                }
                let scored = score_file(&files[i], &scales, params.as_ref(), luma);
                slots.lock().unwrap()[i] = Some(scored);
            });
        }
    });
    let scored = slots.into_inner().unwrap();

    let label_width = files
        .iter()
        .map(|p| file_label(p).len())
        .max()
        .unwrap_or(5)
        .max(5);
    let mut header = format!("{:<label_width$}", "image");
    for eta in &scales {
        header.push_str(&format!("  {:>8}", format!("x{eta}")));
    }
    println!("{header}");

    let mut csv_rows = String::from("image");
    for eta in &scales {
        csv_rows.push_str(&format!(",x{eta}"));
    }
    csv_rows.push('\n');

    let mut sums = vec![0.0f64; scales.len()];
    let mut ok_count = 0usize;
    let mut skipped = 0usize;
    for (path, outcome) in files.iter().zip(scored) {
        let label = file_label(path);
        match outcome.expect("every slot is filled") {
            Ok(row) => {
                let mut line = format!("{label:<label_width$}");
                csv_rows.push_str(&label);
                for (i, psnr) in row.iter().enumerate() {
                    line.push_str(&format!("  {psnr:>8.2}"));
                    csv_rows.push_str(&format!(",{psnr}"));
                    sums[i] += psnr;
                }
                csv_rows.push('\n');
                println!("{line}");
                ok_count += 1;
            }
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                skipped += 1;
            }
        }
    }
    if ok_count == 0 {
        return Err(Error::Usage(format!(
            "none of the {} images in {} were readable",
            files.len(),
            data.display()
        )));
    }
    let mut mean_line = format!("{:<label_width$}", "mean");
    for sum in &sums {
        mean_line.push_str(&format!("  {:>8.2}", sum / ok_count as f64));
    }
    println!("{mean_line}");
    println!("scored {ok_count} images, skipped {skipped}");

    if let Some(path) = csv {
        fs::write(path, csv_rows)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn cmd_fem(sr: &Path, hr: &Path, out: &Path) -> Result<()> {
    let sr_img = load_png(sr)?;
    let hr_img = load_png(hr)?;
    let map = frequency_error_map(&sr_img, &hr_img)?;
    let n = map.numel() as f64;
    let mean = map.data().iter().sum::<f64>() / n;
    let peak = map.data().iter().cloned().fold(0.0f64, f64::max);
    save_png(out, &render_error_map(&map)?)?;
    println!(
        "spectral error: mean {mean:.4}, peak {peak:.4}; rendered {}",
        out.display()
    );
    Ok(())
}

pub fn cmd_grad_check(seed: u64) -> Result<()> {
    let probes = selftest::gradient_probes(seed)?;
    let mut bad = 0usize;
    for probe in &probes {
        println!(
            "{:<16} worst relative error {:.3e}  (tolerance {:.0e})  {}",
            probe.name,
            probe.worst,
            probe.tolerance,
            if probe.ok() { "ok" } else { "FAIL" }
        );
        if !probe.ok() {
            bad += 1;
        }
    }
    if bad > 0 {
        return Err(Error::Failed(format!("{bad} gradient checks failed")));
    }
    Ok(())
}

pub fn cmd_selftest(seed: u64) -> Result<()> {
    let results = selftest::run(&selftest::Hooks::default(), seed);
    let mut failed = 0usize;
    for group in &results {
        println!(
            "{:<20} {:>3} passed, {:>2} failed",
            group.name, group.passed, group.failed
        );
        for failure in &group.failures {
            println!("    {failure}");
        }
        failed += group.failed;
    }
    if failed > 0 {
        return Err(Error::Failed(format!("selftest: {failed} checks failed")));
    }
    println!("selftest: all {} groups passed", results.len());
    Ok(())
}
