//! Unitary discrete Fourier transforms.
//!
//! Both directions carry the symmetric 1/sqrt(n) factor per axis, so a 2-D
//! transform of an HxW plane scales by 1/sqrt(H*W) each way and
//! `ifft2(fft2(x)) == x` holds to rounding error without any extra
//! bookkeeping (and Parseval holds exactly: energy is preserved).
//!
//! Power-of-two lengths run an iterative radix-2 Cooley-Tukey; every other
//! length goes through Bluestein's chirp-z reduction to a padded
//! power-of-two convolution, so arbitrary image sides (7x5, 17x13, ...) are
//! exact DFTs, not padded approximations.

use crate::error::{Error, Result};
use crate::tensor::{CTensor, Tensor};
use std::f64::consts::PI;

/// In-place unnormalized radix-2 transform; `len` must be a power of two.
/// `sign` is -1 for the forward kernel exp(-2*pi*i*uk/n), +1 for inverse.
fn fft_pow2(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    debug_assert!(n.is_power_of_two());
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 0..n {
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
        let mut m = n >> 1;
        while m >= 1 && j & m != 0 {
            j ^= m;
            m >>= 1;
        }
        j |= m;
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // Twiddles are evaluated directly per index; no incremental
        // multiplication, so no error accumulation across stages.
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let ang = sign * 2.0 * PI * k as f64 / len as f64;
                let (s, c) = ang.sin_cos();
                let i0 = start + k;
                let i1 = i0 + half;
                let tr = re[i1] * c - im[i1] * s;
                let ti = re[i1] * s + im[i1] * c;
                re[i1] = re[i0] - tr;
                im[i1] = im[i0] - ti;
                re[i0] += tr;
                im[i0] += ti;
            }
        }
        len <<= 1;
    }
}

/// Unnormalized DFT of arbitrary length via Bluestein's identity
/// `uk = (u^2 + k^2 - (u-k)^2) / 2`, which turns the transform into a
/// chirp-modulated convolution of power-of-two size m >= 2n-1.
fn dft_bluestein(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    let m = (2 * n - 1).next_power_of_two();
    // Chirp c_k = exp(sign * i * pi * k^2 / n). k^2 is reduced mod 2n to
    // keep the angle argument small and the trig exact.
    let mut cre = vec![0.0; n];
    let mut cim = vec![0.0; n];
    for k in 0..n {
        let ang = sign * PI * ((k * k) % (2 * n)) as f64 / n as f64;
        let (s, c) = ang.sin_cos();
        cre[k] = c;
        cim[k] = s;
    }
    // a_k = x_k * c_k, zero-padded to m.
    let mut are = vec![0.0; m];
    let mut aim = vec![0.0; m];
    for k in 0..n {
        are[k] = re[k] * cre[k] - im[k] * cim[k];
        aim[k] = re[k] * cim[k] + im[k] * cre[k];
    }
    // b_k = conj(c_k), laid out circularly for indices -(n-1)..(n-1).
    let mut bre = vec![0.0; m];
    let mut bim = vec![0.0; m];
    for k in 0..n {
        bre[k] = cre[k];
        bim[k] = -cim[k];
        if k > 0 {
            bre[m - k] = cre[k];
            bim[m - k] = -cim[k];
        }
    }
    fft_pow2(&mut are, &mut aim, -1.0);
    fft_pow2(&mut bre, &mut bim, -1.0);
    for i in 0..m {
        let r = are[i] * bre[i] - aim[i] * bim[i];
        let s = are[i] * bim[i] + aim[i] * bre[i];
        are[i] = r;
        aim[i] = s;
    }
    fft_pow2(&mut are, &mut aim, 1.0);
    let inv_m = 1.0 / m as f64;
    for u in 0..n {
        let (vr, vi) = (are[u] * inv_m, aim[u] * inv_m);
        re[u] = vr * cre[u] - vi * cim[u];
        im[u] = vr * cim[u] + vi * cre[u];
    }
}

/// In-place unitary 1-D transform (forward when `inverse` is false).
pub fn fft1d(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len(), "fft1d plane lengths differ");
    if n == 0 {
        return;
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    if n.is_power_of_two() {
        fft_pow2(re, im, sign);
    } else {
        dft_bluestein(re, im, sign);
    }
    let scale = 1.0 / (n as f64).sqrt();
    for v in re.iter_mut() {
        *v *= scale;
    }
    for v in im.iter_mut() {
        *v *= scale;
    }
}

fn transform2(re: &mut Tensor, im: &mut Tensor, inverse: bool) {
    let dims = re.dims().to_vec();
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    let planes = re.numel() / (h * w);
    let mut row_re = vec![0.0; w];
    let mut row_im = vec![0.0; w];
    let mut col_re = vec![0.0; h];
    let mut col_im = vec![0.0; h];
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..h {
            let off = base + y * w;
            row_re.copy_from_slice(&re.data()[off..off + w]);
            row_im.copy_from_slice(&im.data()[off..off + w]);
            fft1d(&mut row_re, &mut row_im, inverse);
            re.data_mut()[off..off + w].copy_from_slice(&row_re);
            im.data_mut()[off..off + w].copy_from_slice(&row_im);
        }
        for x in 0..w {
            for y in 0..h {
                col_re[y] = re.data()[base + y * w + x];
                col_im[y] = im.data()[base + y * w + x];
            }
            fft1d(&mut col_re, &mut col_im, inverse);
            for y in 0..h {
                re.data_mut()[base + y * w + x] = col_re[y];
                im.data_mut()[base + y * w + x] = col_im[y];
            }
        }
    }
}

fn check_spatial(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Shape(format!(
            "2-D transform wants trailing (h, w) axes, got {dims:?}"
        )));
    }
    Ok(())
}

/// Per-plane unitary 2-D DFT of a real tensor. The trailing two axes are
/// transformed; any leading axis is treated as independent channels.
pub fn fft2(x: &Tensor) -> Result<CTensor> {
    check_spatial(x.dims())?;
    let mut re = x.clone();
    let mut im = Tensor::zeros(x.dims());
    transform2(&mut re, &mut im, false);
    crate::tensor::comp(&re, &im)
}

/// Unitary 2-D DFT of a complex tensor.
pub fn fft2_c(x: &CTensor) -> Result<CTensor> {
    check_spatial(x.dims())?;
    let (mut re, mut im) = (x.re().clone(), x.im().clone());
    transform2(&mut re, &mut im, false);
    crate::tensor::comp(&re, &im)
}

/// Unitary inverse 2-D DFT.
pub fn ifft2(x: &CTensor) -> Result<CTensor> {
    check_spatial(x.dims())?;
    let (mut re, mut im) = (x.re().clone(), x.im().clone());
    transform2(&mut re, &mut im, true);
    crate::tensor::comp(&re, &im)
}

/// Cyclic shift by (floor(h/2), floor(w/2)) on the trailing axes, moving the
/// DC bin to the center. Used only for rendering spectra.
pub fn fftshift2(x: &CTensor) -> Result<CTensor> {
    crate::tensor::comp(&fftshift2_r(x.re())?, &fftshift2_r(x.im())?)
}

/// [`fftshift2`] on a single real plane (e.g. a spectrum magnitude map).
pub fn fftshift2_r(x: &Tensor) -> Result<Tensor> {
    check_spatial(x.dims())?;
    let dims = x.dims().to_vec();
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    let planes = x.numel() / (h * w);
    let mut out = Tensor::zeros(&dims);
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..h {
            for c in 0..w {
                let dy = (y + h / 2) % h;
                let dc = (c + w / 2) % w;
                out.data_mut()[base + dy * w + dc] = x.data()[base + y * w + c];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::comp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(h: usize, w: usize, seed: u64) -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w).map(|_| r.gen_range(-1.0..1.0)).collect();
        Tensor::new(vec![1, h, w], data).unwrap()
    }

    /// Textbook O(n^2) DFT with the symmetric 1/sqrt(hw) factor, written
    /// directly from the definition. This is the oracle the fast paths are
    /// held to.
    fn naive_dft2(x: &Tensor, inverse: bool) -> CTensor {
        let (h, w) = (x.dims()[1], x.dims()[2]);
        let sign = if inverse { 1.0 } else { -1.0 };
        let norm = 1.0 / ((h * w) as f64).sqrt();
        let mut re = Tensor::zeros(&[1, h, w]);
        let mut im = Tensor::zeros(&[1, h, w]);
        for u in 0..h {
            for v in 0..w {
                let mut sr = 0.0;
                let mut si = 0.0;
                for y in 0..h {
                    for c in 0..w {
                        let ang = sign
                            * 2.0
                            * PI
                            * (u as f64 * y as f64 / h as f64
                                + v as f64 * c as f64 / w as f64);
                        sr += x.at3(0, y, c) * ang.cos();
                        si += x.at3(0, y, c) * ang.sin();
                    }
                }
                re.set3(0, u, v, sr * norm);
                im.set3(0, u, v, si * norm);
            }
        }
        comp(&re, &im).unwrap()
    }

    #[test]
    fn impulse_spreads_to_quarter_plane() {
        let mut x = Tensor::zeros(&[1, 4, 4]);
        x.set3(0, 0, 0, 1.0);
        let f = fft2(&x).unwrap();
        // 1/sqrt(16) = 1/4 everywhere, zero imaginary part.
        assert!(f.re().max_abs_diff(&Tensor::filled(&[1, 4, 4], 0.25)) < 1e-12);
        assert!(f.im().abs_max() < 1e-12);
    }

    #[test]
    fn constant_concentrates_in_dc() {
        let c = 0.37;
        let x = Tensor::filled(&[1, 4, 4], c);
        let f = fft2(&x).unwrap();
        assert!((f.re().at3(0, 0, 0) - 4.0 * c).abs() < 1e-12);
        let mut off_dc = 0.0f64;
        for u in 0..4 {
            for v in 0..4 {
                if u != 0 || v != 0 {
                    off_dc = off_dc.max(f.re().at3(0, u, v).abs());
                }
                off_dc = off_dc.max(f.im().at3(0, u, v).abs());
            }
        }
        assert!(off_dc < 1e-12);
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let mut re = Tensor::zeros(&[1, 4, 4]);
        re.set3(0, 0, 0, 4.0 * 0.37);
        let spec = comp(&re, &Tensor::zeros(&[1, 4, 4])).unwrap();
        let x = ifft2(&spec).unwrap();
        assert!(x.re().max_abs_diff(&Tensor::filled(&[1, 4, 4], 0.37)) < 1e-12);
        assert!(x.im().abs_max() < 1e-12);
    }

    #[test]
    fn roundtrip_on_awkward_size() {
        let x = random_plane(7, 5, 21);
        let back = ifft2(&fft2(&x).unwrap()).unwrap();
        assert!(back.re().max_abs_diff(&x) < 1e-10);
        assert!(back.im().abs_max() < 1e-10);
    }

    #[test]
    fn roundtrip_many_sizes() {
        for (h, w) in [(1, 1), (1, 6), (2, 2), (3, 3), (4, 6), (5, 8), (9, 9), (16, 12)] {
            let x = random_plane(h, w, (h * 100 + w) as u64);
            let back = ifft2(&fft2(&x).unwrap()).unwrap();
            assert!(
                back.re().max_abs_diff(&x) < 1e-10 && back.im().abs_max() < 1e-10,
                "roundtrip failed at {h}x{w}"
            );
        }
    }

    #[test]
    fn parseval_energy_is_preserved() {
        let x = random_plane(6, 6, 33);
        let f = fft2(&x).unwrap();
        let spatial: f64 = x.data().iter().map(|v| v * v).sum();
        assert!((spatial - f.norm_sqr()).abs() < 1e-10);
    }

    #[test]
    fn unitarity_preserves_inner_products() {
        let a = random_plane(5, 4, 40);
        let b = random_plane(5, 4, 41);
        let (fa, fb) = (fft2(&a).unwrap(), fft2(&b).unwrap());
        let spatial: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
        // Re<Fa, Fb> with the conjugate on the second argument.
        let freq: f64 = fa
            .re()
            .data()
            .iter()
            .zip(fa.im().data())
            .zip(fb.re().data().iter().zip(fb.im().data()))
            .map(|((ar, ai), (br, bi))| ar * br + ai * bi)
            .sum();
        assert!((spatial - freq).abs() < 1e-10);
    }

    #[test]
    fn transform_is_linear() {
        let a = random_plane(6, 7, 50);
        let b = random_plane(6, 7, 51);
        let lhs = fft2(&a.scale(2.0).add(&b.scale(-3.0)).unwrap()).unwrap();
        let rhs = fft2(&a)
            .unwrap()
            .scale(2.0)
            .add(&fft2(&b).unwrap().scale(-3.0))
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn fast_paths_match_naive_dft() {
        // Every size up to 8x8 plus awkward larger cases; covers the
        // radix-2 and Bluestein code paths and both directions.
        let mut cases: Vec<(usize, usize)> = vec![];
        for h in 1..=8 {
            for w in 1..=8 {
                cases.push((h, w));
            }
        }
        cases.extend([(48, 48), (7, 5), (17, 13)]);
        for (h, w) in cases {
            let x = random_plane(h, w, (h * 1000 + w) as u64);
            let fast = fft2(&x).unwrap();
            let slow = naive_dft2(&x, false);
            assert!(
                fast.max_abs_diff(&slow) < 1e-9,
                "forward {h}x{w} deviates from naive DFT"
            );
            let ifast = ifft2(&fast).unwrap();
            // Inverse oracle: naive inverse applied to the naive spectrum.
            let mut back_re = Tensor::zeros(&[1, h, w]);
            for u in 0..h {
                for v in 0..w {
                    back_re.set3(0, u, v, x.at3(0, u, v));
                }
            }
            assert!(ifast.re().max_abs_diff(&back_re) < 1e-9, "inverse {h}x{w}");
            assert!(ifast.im().abs_max() < 1e-9);
        }
    }

    #[test]
    fn bluestein_matches_naive_inverse_too() {
        let x = random_plane(7, 5, 60);
        let spec = naive_dft2(&x, false);
        let inv_fast = ifft2(&spec).unwrap();
        let inv_slow_re = {
            // Inverse of the forward spectrum recovers the signal.
            x.clone()
        };
        assert!(inv_fast.re().max_abs_diff(&inv_slow_re) < 1e-9);
    }

    #[test]
    fn fftshift_moves_dc_to_center() {
        let mut x = Tensor::zeros(&[1, 2, 2]);
        x.set3(0, 0, 0, 1.0);
        let f = fft2(&x).unwrap(); // constant 0.5 plane; DC at (0,0)
        let shifted = fftshift2(&f).unwrap();
        assert!((shifted.re().at3(0, 1, 1) - 0.5).abs() < 1e-12);

        let mut re = Tensor::zeros(&[1, 3, 3]);
        re.set3(0, 0, 0, 1.0);
        let s3 = fftshift2(&comp(&re, &Tensor::zeros(&[1, 3, 3])).unwrap()).unwrap();
        assert!((s3.re().at3(0, 1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_shift_is_identity_on_even_sizes() {
        let x = random_plane(4, 6, 70);
        let f = fft2(&x).unwrap();
        let twice = fftshift2(&fftshift2(&f).unwrap()).unwrap();
        assert!(twice.max_abs_diff(&f) < 1e-15);
    }

    #[test]
    fn multi_channel_transforms_each_plane() {
        let mut r = ChaCha8Rng::seed_from_u64(80);
        let data: Vec<f64> = (0..2 * 4 * 4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![2, 4, 4], data).unwrap();
        let f = fft2(&x).unwrap();
        for ch in 0..2 {
            let plane = crate::tensor::slice_axis(&x, 0, ch, 1).unwrap();
            let fp = fft2(&plane).unwrap();
            for u in 0..4 {
                for v in 0..4 {
                    assert!((f.re().at3(ch, u, v) - fp.re().at3(0, u, v)).abs() < 1e-12);
                    assert!((f.im().at3(ch, u, v) - fp.im().at3(0, u, v)).abs() < 1e-12);
                }
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        // Extents 1..=12 cover the radix-2 path, the Bluestein path, and
        // their mixtures (one axis each).
        fn plane() -> impl Strategy<Value = Tensor> {
            (1usize..=12, 1usize..=12).prop_flat_map(|(h, w)| {
                proptest::collection::vec(-1.0f64..1.0, h * w)
                    .prop_map(move |data| Tensor::new(vec![1, h, w], data).unwrap())
            })
        }

        proptest! {
            #[test]
            fn roundtrip_recovers_any_plane(x in plane()) {
                let back = ifft2(&fft2(&x).unwrap()).unwrap();
                prop_assert!(back.re().max_abs_diff(&x) < 1e-9);
                prop_assert!(back.im().abs_max() < 1e-9);
            }

            #[test]
            fn transform_conserves_energy(x in plane()) {
                let spatial: f64 = x.data().iter().map(|v| v * v).sum();
                prop_assert!((spatial - fft2(&x).unwrap().norm_sqr()).abs() < 1e-9);
            }

            #[test]
            fn linearity_holds_for_any_coefficients(x in plane(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed: u64) {
                let y = Tensor::rand_uniform(x.dims(), -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
                let lhs = fft2(&x.scale(a).add(&y.scale(b)).unwrap()).unwrap();
                let rhs = fft2(&x).unwrap().scale(a).add(&fft2(&y).unwrap().scale(b)).unwrap();
                prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
            }
        }
    }
}
