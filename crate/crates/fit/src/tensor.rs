//! Dense real and complex tensors plus the handful of kernels the rest of
//! the crate is built from: matrix multiply, 2-D convolution, pointwise
//! convolution, softmax, and complex arithmetic.
//!
//! Values are `f64` in row-major order; feature maps use (channel, row, col)
//! layout. Every operation is pure — inputs are never mutated — and all
//! accumulation loops run in a fixed order so repeated runs are bit-identical.

use crate::error::{shape_err, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from explicit dimensions and row-major data.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::Shape(format!(
                "rank must be 1..=4, got {:?}",
                dims
            )));
        }
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {:?} imply {} elements, got {}",
                dims,
                n,
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    /// A rank-1 single-element tensor, used for scalar loss values.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            dims: vec![1],
            data: vec![value],
        }
    }

    /// Uniform values in [lo, hi), drawn in row-major order so a given
    /// seed always produces the same tensor.
    pub fn rand_uniform(
        dims: &[usize],
        lo: f64,
        hi: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: (0..n).map(|_| rng.gen_range(lo..hi)).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Element access for rank-2 tensors.
    #[inline]
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.dims[1] + c]
    }

    /// Element access for rank-3 tensors (channel, row, col).
    #[inline]
    pub fn at3(&self, ch: usize, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(ch * self.dims[1] + r) * self.dims[2] + c]
    }

    #[inline]
    pub fn set3(&mut self, ch: usize, r: usize, c: usize, v: f64) {
        debug_assert_eq!(self.rank(), 3);
        self.data[(ch * self.dims[1] + r) * self.dims[2] + c] = v;
    }

    /// Same data, new dims; element count must match.
    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        Tensor::new(dims.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.dims != other.dims {
            return Err(shape_err(what, &self.dims, &other.dims));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            dims: self.dims.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| c * v)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn abs_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest elementwise |a - b|; shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.dims, other.dims, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Rank-2 transpose.
    pub fn transpose2(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!(
                "transpose2 wants rank 2, got {:?}",
                self.dims
            )));
        }
        let (r, c) = (self.dims[0], self.dims[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }
}

/// `[m,k] x [k,n] -> [m,n]`. Accumulation runs row-major over the shared
/// index so results are reproducible bit-for-bit.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.dims[1] != b.dims[0] {
        return Err(shape_err("matmul", &a.dims, &b.dims));
    }
    let (m, k, n) = (a.dims[0], a.dims[1], b.dims[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for kk in 0..k {
            let aik = a.data[i * k + kk];
            let brow = &b.data[kk * n..(kk + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Add a length-`m` bias to every row of an `[n,m]` matrix.
pub fn add_row_bias(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 || b.rank() != 1 || x.dims[1] != b.dims[0] {
        return Err(shape_err("add_row_bias", &x.dims, &b.dims));
    }
    let (n, m) = (x.dims[0], x.dims[1]);
    let mut out = x.data.clone();
    for r in 0..n {
        for c in 0..m {
            out[r * m + c] += b.data[c];
        }
    }
    Tensor::new(vec![n, m], out)
}

/// 2-D convolution (cross-correlation, as in the usual deep-learning
/// convention): input `[c_in,h,w]`, weights `[c_out,c_in,kh,kw]` with odd
/// kernel sides, bias `[c_out]`, zero padding chosen so the resolution is
/// preserved.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 || w.rank() != 4 {
        return Err(shape_err("conv2d", &x.dims, &w.dims));
    }
    let (cin, h, wid) = (x.dims[0], x.dims[1], x.dims[2]);
    let (cout, wcin, kh, kw) = (w.dims[0], w.dims[1], w.dims[2], w.dims[3]);
    if wcin != cin {
        return Err(shape_err("conv2d channels", &x.dims, &w.dims));
    }
    if b.rank() != 1 || b.dims[0] != cout {
        return Err(shape_err("conv2d bias", &w.dims, &b.dims));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Config(format!(
            "conv2d kernel sides must be odd, got {kh}x{kw}"
        )));
    }
    let (ph, pw) = (kh / 2, kw / 2);
    let mut out = vec![0.0; cout * h * wid];
    for co in 0..cout {
        let plane = &mut out[co * h * wid..(co + 1) * h * wid];
        for v in plane.iter_mut() {
            *v = b.data[co];
        }
        for ci in 0..cin {
            let xin = &x.data[ci * h * wid..(ci + 1) * h * wid];
            for dy in 0..kh {
                for dx in 0..kw {
                    let wv = w.data[((co * cin + ci) * kh + dy) * kw + dx];
                    // Shifted accumulate: out[y][x] += wv * x[y+dy-ph][x+dx-pw]
                    // with zero outside the input.
                    for y in 0..h {
                        let sy = y as isize + dy as isize - ph as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src = &xin[sy as usize * wid..(sy as usize + 1) * wid];
                        let dst = &mut plane[y * wid..(y + 1) * wid];
                        for x0 in 0..wid {
                            let sx = x0 as isize + dx as isize - pw as isize;
                            if sx < 0 || sx >= wid as isize {
                                continue;
                            }
                            dst[x0] += wv * src[sx as usize];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![cout, h, wid], out)
}

/// Pointwise (1x1) convolution: a per-pixel linear map over channels.
/// Weights `[c_out,c_in]`, bias `[c_out]`.
pub fn pconv(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 || w.rank() != 2 || w.dims[1] != x.dims[0] {
        return Err(shape_err("pconv", &x.dims, &w.dims));
    }
    let (cin, h, wid) = (x.dims[0], x.dims[1], x.dims[2]);
    let cout = w.dims[0];
    if b.rank() != 1 || b.dims[0] != cout {
        return Err(shape_err("pconv bias", &w.dims, &b.dims));
    }
    let hw = h * wid;
    let mut out = vec![0.0; cout * hw];
    for co in 0..cout {
        let plane = &mut out[co * hw..(co + 1) * hw];
        for v in plane.iter_mut() {
            *v = b.data[co];
        }
        for ci in 0..cin {
            let wv = w.data[co * cin + ci];
            let xin = &x.data[ci * hw..(ci + 1) * hw];
            for i in 0..hw {
                plane[i] += wv * xin[i];
            }
        }
    }
    Tensor::new(vec![cout, h, wid], out)
}

/// Decompose dims around `axis` into (outer, extent, inner) strides for
/// row-major traversal.
fn axis_split(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = dims[..axis].iter().product();
    let extent = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    (outer, extent, inner)
}

/// Numerically stable softmax along one axis: the slice maximum is
/// subtracted before exponentiation, so huge logits cannot overflow.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::Shape(format!(
            "softmax axis {axis} out of range for {:?}",
            x.dims
        )));
    }
    let (outer, extent, inner) = axis_split(&x.dims, axis);
    let mut out = x.data.clone();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |a: usize| (o * extent + a) * inner + i;
            let mut mx = f64::NEG_INFINITY;
            for a in 0..extent {
                mx = mx.max(out[idx(a)]);
            }
            let mut sum = 0.0;
            for a in 0..extent {
                let e = (out[idx(a)] - mx).exp();
                out[idx(a)] = e;
                sum += e;
            }
            for a in 0..extent {
                out[idx(a)] /= sum;
            }
        }
    }
    Tensor::new(x.dims.clone(), out)
}

/// Concatenate tensors along `axis`; all other dims must agree.
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
    if axis >= first.rank() {
        return Err(Error::Shape(format!(
            "concat axis {axis} out of range for {:?}",
            first.dims
        )));
    }
    let mut total = 0;
    for p in parts {
        if p.rank() != first.rank() {
            return Err(shape_err("concat rank", &first.dims, &p.dims));
        }
        for (d, (&a, &b)) in first.dims.iter().zip(p.dims.iter()).enumerate() {
            if d != axis && a != b {
                return Err(shape_err("concat", &first.dims, &p.dims));
            }
        }
        total += p.dims[axis];
    }
    let mut dims = first.dims.clone();
    dims[axis] = total;
    let (outer, _, inner) = axis_split(&dims, axis);
    let mut data = vec![0.0; dims.iter().product()];
    for o in 0..outer {
        let mut offset = 0;
        for p in parts {
            let ext = p.dims[axis];
            let src = &p.data[o * ext * inner..(o + 1) * ext * inner];
            let dst_start = (o * total + offset) * inner;
            data[dst_start..dst_start + ext * inner].copy_from_slice(src);
            offset += ext;
        }
    }
    Tensor::new(dims, data)
}

/// Take `len` slots starting at `start` along `axis`.
pub fn slice_axis(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= x.rank() || start + len > x.dims[axis] {
        return Err(Error::Shape(format!(
            "slice {start}+{len} along axis {axis} of {:?}",
            x.dims
        )));
    }
    let (outer, extent, inner) = axis_split(&x.dims, axis);
    let mut dims = x.dims.clone();
    dims[axis] = len;
    let mut data = vec![0.0; outer * len * inner];
    for o in 0..outer {
        let src = (o * extent + start) * inner;
        let dst = o * len * inner;
        data[dst..dst + len * inner].copy_from_slice(&x.data[src..src + len * inner]);
    }
    Tensor::new(dims, data)
}

// ---------------------------------------------------------------------------
// Complex tensors
// ---------------------------------------------------------------------------

/// A complex tensor stored as two same-shaped real planes.
#[derive(Clone, Debug, PartialEq)]
pub struct CTensor {
    re: Tensor,
    im: Tensor,
}

impl CTensor {
    pub fn zeros(dims: &[usize]) -> Self {
        CTensor {
            re: Tensor::zeros(dims),
            im: Tensor::zeros(dims),
        }
    }

    pub fn dims(&self) -> &[usize] {
        self.re.dims()
    }

    pub fn re(&self) -> &Tensor {
        &self.re
    }

    pub fn im(&self) -> &Tensor {
        &self.im
    }

    pub fn into_parts(self) -> (Tensor, Tensor) {
        (self.re, self.im)
    }

    pub fn add(&self, other: &CTensor) -> Result<CTensor> {
        Ok(CTensor {
            re: self.re.add(&other.re)?,
            im: self.im.add(&other.im)?,
        })
    }

    pub fn scale(&self, c: f64) -> CTensor {
        CTensor {
            re: self.re.scale(c),
            im: self.im.scale(c),
        }
    }

    /// Plain (non-conjugating) rank-2 transpose of both planes.
    pub fn transpose2(&self) -> Result<CTensor> {
        Ok(CTensor {
            re: self.re.transpose2()?,
            im: self.im.transpose2()?,
        })
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<CTensor> {
        Ok(CTensor {
            re: self.re.reshape(dims)?,
            im: self.im.reshape(dims)?,
        })
    }

    /// Sum of squared magnitudes over all entries.
    pub fn norm_sqr(&self) -> f64 {
        self.re
            .data
            .iter()
            .zip(&self.im.data)
            .map(|(&a, &b)| a * a + b * b)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &CTensor) -> f64 {
        self.re
            .max_abs_diff(&other.re)
            .max(self.im.max_abs_diff(&other.im))
    }
}

/// Pair two real tensors into a complex one. Inverse of splitting into
/// `re()`/`im()`: `comp(x.re(), x.im())` reproduces `x` bit-exactly.
pub fn comp(re: &Tensor, im: &Tensor) -> Result<CTensor> {
    if re.dims() != im.dims() {
        return Err(shape_err("comp", re.dims(), im.dims()));
    }
    Ok(CTensor {
        re: re.clone(),
        im: im.clone(),
    })
}

/// Elementwise complex product.
pub fn cmul(a: &CTensor, b: &CTensor) -> Result<CTensor> {
    if a.dims() != b.dims() {
        return Err(shape_err("cmul", a.dims(), b.dims()));
    }
    let n = a.re.numel();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for i in 0..n {
        let (ar, ai) = (a.re.data[i], a.im.data[i]);
        let (br, bi) = (b.re.data[i], b.im.data[i]);
        re[i] = ar * br - ai * bi;
        im[i] = ar * bi + ai * br;
    }
    Ok(CTensor {
        re: Tensor::new(a.dims().to_vec(), re)?,
        im: Tensor::new(a.dims().to_vec(), im)?,
    })
}

/// Complex matrix product, expanded into four real products:
/// `(Ar + iAi)(Br + iBi) = (ArBr - AiBi) + i(ArBi + AiBr)`.
pub fn cmatmul(a: &CTensor, b: &CTensor) -> Result<CTensor> {
    let rr = matmul(&a.re, &b.re)?;
    let ii = matmul(&a.im, &b.im)?;
    let ri = matmul(&a.re, &b.im)?;
    let ir = matmul(&a.im, &b.re)?;
    Ok(CTensor {
        re: rr.sub(&ii)?,
        im: ri.add(&ir)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random(dims: &[usize], r: &mut ChaCha8Rng) -> Tensor {
        let n = dims.iter().product();
        let data = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        Tensor::new(dims.to_vec(), data).unwrap()
    }

    /// Independent triple-loop product used as the matmul oracle.
    fn matmul_naive(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.dims()[0], a.dims()[1], b.dims()[1]);
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for kk in 0..k {
                    s += a.at2(i, kk) * b.at2(kk, j);
                }
                out.data_mut()[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_identity_passthrough() {
        let mut r = rng(1);
        let a = random(&[3, 3], &mut r);
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let out = matmul(&eye, &a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_scalar_case() {
        let a = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let b = Tensor::new(vec![1, 1], vec![3.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut r = rng(2);
        let a = random(&[5, 4], &mut r);
        let b = random(&[4, 6], &mut r);
        let got = matmul(&a, &b).unwrap();
        let want = matmul_naive(&a, &b);
        assert!(got.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn matmul_all_small_shapes_match_oracle() {
        // Exhaustive over every shape with sides <= 8.
        let mut r = rng(3);
        for m in 1..=8usize {
            for k in 1..=8usize {
                for n in 1..=8usize {
                    let a = random(&[m, k], &mut r);
                    let b = random(&[k, n], &mut r);
                    let got = matmul(&a, &b).unwrap();
                    let want = matmul_naive(&a, &b);
                    assert!(
                        got.max_abs_diff(&want) < 1e-12,
                        "shape {m}x{k}x{n} disagrees with oracle"
                    );
                }
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn matmul_does_not_mutate_inputs() {
        let mut r = rng(4);
        let a = random(&[3, 3], &mut r);
        let b = random(&[3, 3], &mut r);
        let (a2, b2) = (a.clone(), b.clone());
        let _ = matmul(&a, &b).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn conv2d_centered_impulse_is_identity() {
        let mut r = rng(5);
        let x = random(&[1, 4, 4], &mut r);
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0; // center tap
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &w, &b).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn conv2d_box_kernel_counts_padding() {
        // All-ones 3x3 kernel over a constant-1 image: interior pixels see
        // all nine taps, corners only four.
        let x = Tensor::filled(&[1, 4, 4], 1.0);
        let w = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &w, &b).unwrap();
        assert_eq!(y.at3(0, 1, 1), 9.0);
        assert_eq!(y.at3(0, 0, 0), 4.0);
        assert_eq!(y.at3(0, 0, 1), 6.0);
    }

    #[test]
    fn conv2d_is_linear_in_input() {
        let mut r = rng(6);
        let x1 = random(&[2, 5, 5], &mut r);
        let x2 = random(&[2, 5, 5], &mut r);
        let w = random(&[3, 2, 3, 3], &mut r);
        let b = Tensor::zeros(&[3]);
        let lhs = conv2d(&x1.add(&x2).unwrap(), &w, &b).unwrap();
        let rhs = conv2d(&x1, &w, &b)
            .unwrap()
            .add(&conv2d(&x2, &w, &b).unwrap())
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn conv2d_rejects_even_kernel() {
        let x = Tensor::zeros(&[1, 4, 4]);
        let w = Tensor::zeros(&[1, 1, 2, 2]);
        let b = Tensor::zeros(&[1]);
        assert!(matches!(conv2d(&x, &w, &b), Err(Error::Config(_))));
    }

    #[test]
    fn pconv_equals_1x1_conv2d() {
        let mut r = rng(7);
        let x = random(&[3, 4, 5], &mut r);
        let w = random(&[2, 3], &mut r);
        let b = random(&[2], &mut r);
        let w4 = w.reshape(&[2, 3, 1, 1]).unwrap();
        let got = pconv(&x, &w, &b).unwrap();
        let want = conv2d(&x, &w4, &b).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn pconv_identity_weights() {
        let mut r = rng(8);
        let x = random(&[3, 4, 4], &mut r);
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let y = pconv(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn pconv_zero_weights_yield_bias_planes() {
        let x = Tensor::filled(&[2, 3, 3], 7.0);
        let w = Tensor::zeros(&[2, 2]);
        let b = Tensor::new(vec![2], vec![0.5, -1.5]).unwrap();
        let y = pconv(&x, &w, &b).unwrap();
        assert!(y.data()[..9].iter().all(|&v| v == 0.5));
        assert!(y.data()[9..].iter().all(|&v| v == -1.5));
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let x = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        let y = softmax(&x, 0).unwrap();
        assert!(y.max_abs_diff(&Tensor::filled(&[2], 0.5)) < 1e-15);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut r = rng(9);
        let x = random(&[6], &mut r);
        let shifted = x.map(|v| v + 123.0);
        let a = softmax(&x, 0).unwrap();
        let b = softmax(&shifted, 0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        // exp(1000) overflows f64; max subtraction keeps this finite. The
        // exact tail is e^-1000 ~ 5.1e-435, which is 0 in f64, so the
        // reference output is [1, 0].
        let x = Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap();
        let y = softmax(&x, 0).unwrap();
        assert!(y.all_finite());
        assert!((y.data()[0] - 1.0).abs() < 1e-300);
        assert!(y.data()[1].abs() < 1e-300);
        let s: f64 = y.data().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut r = rng(10);
        let x = random(&[4, 7], &mut r);
        let y = softmax(&x, 1).unwrap();
        for row in 0..4 {
            let s: f64 = (0..7).map(|c| y.at2(row, c)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let mut r = rng(11);
        let a = random(&[2, 3, 4], &mut r);
        let b = random(&[5, 3, 4], &mut r);
        let cat = concat(&[&a, &b], 0).unwrap();
        assert_eq!(cat.dims(), &[7, 3, 4]);
        assert!(slice_axis(&cat, 0, 0, 2).unwrap().max_abs_diff(&a) < 1e-15);
        assert!(slice_axis(&cat, 0, 2, 5).unwrap().max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn concat_along_inner_axis() {
        let a = Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let cat = concat(&[&a, &b], 1).unwrap();
        assert_eq!(cat.dims(), &[2, 3]);
        assert_eq!(cat.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn comp_then_split_is_bit_exact() {
        let mut r = rng(12);
        let re = random(&[2, 3, 3], &mut r);
        let im = random(&[2, 3, 3], &mut r);
        let z = comp(&re, &im).unwrap();
        assert_eq!(z.re(), &re);
        assert_eq!(z.im(), &im);
        let z2 = comp(z.re(), z.im()).unwrap();
        assert_eq!(z, z2);
    }

    #[test]
    fn cmul_unit_and_imaginary_unit() {
        let one = comp(&Tensor::scalar(1.0), &Tensor::scalar(0.0)).unwrap();
        let z = comp(&Tensor::scalar(0.3), &Tensor::scalar(-0.7)).unwrap();
        assert!(cmul(&one, &z).unwrap().max_abs_diff(&z) < 1e-15);
        let i = comp(&Tensor::scalar(0.0), &Tensor::scalar(1.0)).unwrap();
        let ii = cmul(&i, &i).unwrap();
        assert!((ii.re().data()[0] + 1.0).abs() < 1e-15);
        assert!(ii.im().data()[0].abs() < 1e-15);
    }

    #[test]
    fn cmatmul_matches_scalar_complex_loops() {
        let mut r = rng(13);
        let a = comp(&random(&[3, 3], &mut r), &random(&[3, 3], &mut r)).unwrap();
        let b = comp(&random(&[3, 3], &mut r), &random(&[3, 3], &mut r)).unwrap();
        let got = cmatmul(&a, &b).unwrap();
        // Oracle: direct complex arithmetic per entry.
        for i in 0..3 {
            for j in 0..3 {
                let mut sre = 0.0;
                let mut sim = 0.0;
                for k in 0..3 {
                    let (ar, ai) = (a.re().at2(i, k), a.im().at2(i, k));
                    let (br, bi) = (b.re().at2(k, j), b.im().at2(k, j));
                    sre += ar * br - ai * bi;
                    sim += ar * bi + ai * br;
                }
                assert!((got.re().at2(i, j) - sre).abs() < 1e-12);
                assert!((got.im().at2(i, j) - sim).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_distributes_over_complex_parts() {
        // Convolving re and im planes separately with the same kernel and
        // recombining equals convolving the complex signal.
        let mut r = rng(14);
        let re = random(&[1, 8, 8], &mut r);
        let im = random(&[1, 8, 8], &mut r);
        let w = random(&[1, 1, 3, 3], &mut r);
        let b = Tensor::zeros(&[1]);
        let split = comp(
            &conv2d(&re, &w, &b).unwrap(),
            &conv2d(&im, &w, &b).unwrap(),
        )
        .unwrap();
        // Complex-arithmetic oracle with a real kernel, written directly.
        let (h, wid) = (8usize, 8usize);
        let mut ore = Tensor::zeros(&[1, h, wid]);
        let mut oim = Tensor::zeros(&[1, h, wid]);
        for y in 0..h as isize {
            for x0 in 0..wid as isize {
                let mut accr = 0.0;
                let mut acci = 0.0;
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        let (sy, sx) = (y + dy, x0 + dx);
                        if sy < 0 || sy >= h as isize || sx < 0 || sx >= wid as isize {
                            continue;
                        }
                        let wv = w.data()[((dy + 1) * 3 + dx + 1) as usize];
                        accr += wv * re.at3(0, sy as usize, sx as usize);
                        acci += wv * im.at3(0, sy as usize, sx as usize);
                    }
                }
                ore.set3(0, y as usize, x0 as usize, accr);
                oim.set3(0, y as usize, x0 as usize, acci);
            }
        }
        let whole = comp(&ore, &oim).unwrap();
        assert!(split.max_abs_diff(&whole) < 1e-10);
    }

    #[test]
    fn operations_keep_finite_inputs_finite() {
        let mut r = rng(15);
        let x = random(&[2, 6, 6], &mut r);
        let w = random(&[2, 2, 3, 3], &mut r);
        let b = random(&[2], &mut r);
        assert!(conv2d(&x, &w, &b).unwrap().all_finite());
        assert!(pconv(&x, &random(&[4, 2], &mut r), &random(&[4], &mut r))
            .unwrap()
            .all_finite());
        assert!(softmax(&random(&[3, 5], &mut r), 1).unwrap().all_finite());
    }
}
