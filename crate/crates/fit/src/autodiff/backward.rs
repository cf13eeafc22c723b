//! Backward rules, one per recorded operation.
//!
//! The sweep walks node ids in descending order (reverse topological order
//! by construction), takes each node's accumulated cotangent, and scatters
//! contributions into its parents. Cotangents of complex nodes are complex
//! pairs; the DFT rules exploit unitarity: the adjoint of `fft2` is `ifft2`
//! applied to the cotangent pair, and vice versa.

use super::{Gradients, Op, Tape, Value, Var};
use crate::coords;
use crate::error::{Error, Result};
use crate::fft;
use crate::tensor::{self, CTensor, Tensor};

fn accumulate(slot: &mut Option<Value>, add: Value) {
    match slot {
        None => *slot = Some(add),
        Some(Value::Real(t)) => {
            if let Value::Real(a) = add {
                *t = t.add(&a).expect("cotangent shape drift");
            } else {
                panic!("mixed real/complex cotangent");
            }
        }
        Some(Value::Complex(t)) => {
            if let Value::Complex(a) = add {
                *t = t.add(&a).expect("cotangent shape drift");
            } else {
                panic!("mixed real/complex cotangent");
            }
        }
    }
}

fn real(v: Value) -> Tensor {
    match v {
        Value::Real(t) => t,
        Value::Complex(_) => panic!("expected real cotangent"),
    }
}

fn complex(v: Value) -> CTensor {
    match v {
        Value::Complex(t) => t,
        Value::Real(_) => panic!("expected complex cotangent"),
    }
}

/// d(conv2d)/d(x, w, b) for output cotangent `g`.
fn conv2d_backward(x: &Tensor, w: &Tensor, g: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (cin, h, wid) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let (cout, kh, kw) = (w.dims()[0], w.dims()[2], w.dims()[3]);
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    let mut dx = Tensor::zeros(x.dims());
    let mut dw = Tensor::zeros(w.dims());
    let mut db = Tensor::zeros(&[cout]);
    for co in 0..cout {
        let gp = |y: usize, x0: usize| g.at3(co, y, x0);
        let mut bsum = 0.0;
        for y in 0..h {
            for x0 in 0..wid {
                bsum += gp(y, x0);
            }
        }
        db.data_mut()[co] = bsum;
        for ci in 0..cin {
            for dy in 0..kh {
                for dxk in 0..kw {
                    // dw: correlate input with the output cotangent.
                    let mut wsum = 0.0;
                    for y in 0..h {
                        let sy = y as isize + dy as isize - ph;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x0 in 0..wid {
                            let sx = x0 as isize + dxk as isize - pw;
                            if sx < 0 || sx >= wid as isize {
                                continue;
                            }
                            wsum += gp(y, x0) * x.at3(ci, sy as usize, sx as usize);
                        }
                    }
                    let widx = ((co * cin + ci) * kh + dy) * kw + dxk;
                    dw.data_mut()[widx] += wsum;
                    // dx: scatter the same taps back onto the input.
                    let wv = w.data()[widx];
                    for y in 0..h {
                        let sy = y as isize + dy as isize - ph;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x0 in 0..wid {
                            let sx = x0 as isize + dxk as isize - pw;
                            if sx < 0 || sx >= wid as isize {
                                continue;
                            }
                            let didx = (ci * h + sy as usize) * wid + sx as usize;
                            dx.data_mut()[didx] += wv * gp(y, x0);
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

fn pconv_backward(x: &Tensor, w: &Tensor, g: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (cin, h, wid) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let cout = w.dims()[0];
    let hw = h * wid;
    let mut dx = Tensor::zeros(x.dims());
    let mut dw = Tensor::zeros(w.dims());
    let mut db = Tensor::zeros(&[cout]);
    for co in 0..cout {
        let gp = &g.data()[co * hw..(co + 1) * hw];
        db.data_mut()[co] = gp.iter().sum();
        for ci in 0..cin {
            let xp = &x.data()[ci * hw..(ci + 1) * hw];
            let mut s = 0.0;
            for i in 0..hw {
                s += gp[i] * xp[i];
            }
            dw.data_mut()[co * cin + ci] = s;
            let wv = w.data()[co * cin + ci];
            let dxp = &mut dx.data_mut()[ci * hw..(ci + 1) * hw];
            for i in 0..hw {
                dxp[i] += wv * gp[i];
            }
        }
    }
    (dx, dw, db)
}

/// Fused softmax backward: `dx = y * (g - sum(g * y))` per slice.
fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Tensor {
    let dims = y.dims();
    let outer: usize = dims[..axis].iter().product();
    let extent = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let mut dx = Tensor::zeros(dims);
    for o in 0..outer {
        for i in 0..inner {
            let idx = |a: usize| (o * extent + a) * inner + i;
            let mut dot = 0.0;
            for a in 0..extent {
                dot += g.data()[idx(a)] * y.data()[idx(a)];
            }
            for a in 0..extent {
                let j = idx(a);
                dx.data_mut()[j] = y.data()[j] * (g.data()[j] - dot);
            }
        }
    }
    dx
}

pub(super) fn run(tape: &Tape, loss: Var) -> Result<Gradients> {
    let loss_t = tape.nodes[loss.0].value.as_real();
    if loss_t.numel() != 1 {
        return Err(Error::Usage(format!(
            "backward wants a scalar loss, got shape {:?}",
            loss_t.dims()
        )));
    }
    let mut cot: Vec<Option<Value>> = (0..tape.nodes.len()).map(|_| None).collect();
    cot[loss.0] = Some(Value::Real(Tensor::filled(loss_t.dims(), 1.0)));

    for id in (0..=loss.0).rev() {
        let node = &tape.nodes[id];
        if matches!(node.op, Op::Leaf) {
            continue; // leaf cotangents are the gradients; keep them
        }
        let Some(g) = cot[id].take() else { continue };
        let val = |i: usize| tape.nodes[i].value.as_real();
        let cval = |i: usize| tape.nodes[i].value.as_complex();
        match &node.op {
            Op::Leaf => unreachable!(),
            Op::Add(a, b) => {
                let g = real(g);
                accumulate(&mut cot[*a], Value::Real(g.clone()));
                accumulate(&mut cot[*b], Value::Real(g));
            }
            Op::Sub(a, b) => {
                let g = real(g);
                accumulate(&mut cot[*b], Value::Real(g.scale(-1.0)));
                accumulate(&mut cot[*a], Value::Real(g));
            }
            Op::Mul(a, b) => {
                let g = real(g);
                accumulate(&mut cot[*a], Value::Real(g.mul(val(*b))?));
                accumulate(&mut cot[*b], Value::Real(g.mul(val(*a))?));
            }
            Op::Scale(a, c) => {
                accumulate(&mut cot[*a], Value::Real(real(g).scale(*c)));
            }
            Op::AddRowBias(x, b) => {
                let g = real(g);
                let (n, m) = (g.dims()[0], g.dims()[1]);
                let mut db = Tensor::zeros(&[m]);
                for r in 0..n {
                    for c in 0..m {
                        db.data_mut()[c] += g.at2(r, c);
                    }
                }
                accumulate(&mut cot[*x], Value::Real(g));
                accumulate(&mut cot[*b], Value::Real(db));
            }
            Op::MatMul(a, b) => {
                let g = real(g);
                let da = tensor::matmul(&g, &val(*b).transpose2()?)?;
                let db = tensor::matmul(&val(*a).transpose2()?, &g)?;
                accumulate(&mut cot[*a], Value::Real(da));
                accumulate(&mut cot[*b], Value::Real(db));
            }
            Op::Transpose2(a) => {
                accumulate(&mut cot[*a], Value::Real(real(g).transpose2()?));
            }
            Op::Reshape(a) => {
                let back = real(g).reshape(val(*a).dims())?;
                accumulate(&mut cot[*a], Value::Real(back));
            }
            Op::Concat(parts, axis) => {
                let g = real(g);
                let mut offset = 0;
                for p in parts {
                    let ext = val(*p).dims()[*axis];
                    let piece = tensor::slice_axis(&g, *axis, offset, ext)?;
                    accumulate(&mut cot[*p], Value::Real(piece));
                    offset += ext;
                }
            }
            Op::SliceAxis(a, axis, start, len) => {
                let g = real(g);
                let src_dims = val(*a).dims().to_vec();
                let mut dx = Tensor::zeros(&src_dims);
                let outer: usize = src_dims[..*axis].iter().product();
                let extent = src_dims[*axis];
                let inner: usize = src_dims[*axis + 1..].iter().product();
                for o in 0..outer {
                    let dst = (o * extent + start) * inner;
                    let src = o * len * inner;
                    dx.data_mut()[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[src..src + len * inner]);
                }
                accumulate(&mut cot[*a], Value::Real(dx));
            }
            Op::Relu(a) => {
                let g = real(g);
                let x = val(*a);
                let mut dx = g.clone();
                for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *d = 0.0;
                    }
                }
                accumulate(&mut cot[*a], Value::Real(dx));
            }
            Op::Softmax(a, axis) => {
                let y = node.value.as_real();
                accumulate(
                    &mut cot[*a],
                    Value::Real(softmax_backward(y, &real(g), *axis)),
                );
            }
            Op::Conv2d(x, w, b) => {
                let g = real(g);
                let (dx, dw, db) = conv2d_backward(val(*x), val(*w), &g);
                accumulate(&mut cot[*x], Value::Real(dx));
                accumulate(&mut cot[*w], Value::Real(dw));
                accumulate(&mut cot[*b], Value::Real(db));
            }
            Op::PConv(x, w, b) => {
                let g = real(g);
                let (dx, dw, db) = pconv_backward(val(*x), val(*w), &g);
                accumulate(&mut cot[*x], Value::Real(dx));
                accumulate(&mut cot[*w], Value::Real(dw));
                accumulate(&mut cot[*b], Value::Real(db));
            }
            Op::BilinearSample(feat, coords_t) => {
                let g = real(g);
                let fdims = val(*feat).dims();
                let (c, h, w) = (fdims[0], fdims[1], fdims[2]);
                let taps = coords::bilinear_taps(h, w, coords_t)?;
                let mut dfeat = Tensor::zeros(fdims);
                let hw = h * w;
                for (i, tap) in taps.iter().enumerate() {
                    for ch in 0..c {
                        let gv = g.at2(i, ch);
                        for t in 0..4 {
                            dfeat.data_mut()[ch * hw + tap.idx[t]] += tap.w[t] * gv;
                        }
                    }
                }
                accumulate(&mut cot[*feat], Value::Real(dfeat));
            }
            Op::NearestSample(feat, coords_t) => {
                let g = real(g);
                let fdims = val(*feat).dims();
                let (c, h, w) = (fdims[0], fdims[1], fdims[2]);
                let idxs = coords::nearest_indices(h, w, coords_t)?;
                let mut dfeat = Tensor::zeros(fdims);
                let hw = h * w;
                for (i, &px) in idxs.iter().enumerate() {
                    for ch in 0..c {
                        dfeat.data_mut()[ch * hw + px] += g.at2(i, ch);
                    }
                }
                accumulate(&mut cot[*feat], Value::Real(dfeat));
            }
            Op::Sum(a) => {
                let g0 = real(g).data()[0];
                accumulate(
                    &mut cot[*a],
                    Value::Real(Tensor::filled(val(*a).dims(), g0)),
                );
            }
            Op::L1Loss(a, b) => {
                // d mean|a - b| = sign(a - b) / n, with sign(0) = 0.
                let g0 = real(g).data()[0];
                let (av, bv) = (val(*a), val(*b));
                let n = av.numel() as f64;
                let mut da = Tensor::zeros(av.dims());
                for ((d, &x), &y) in da.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                    // f64::signum maps +-0.0 to +-1.0; the subgradient at a
                    // kink is taken as 0 instead.
                    let diff = x - y;
                    *d = if diff == 0.0 { 0.0 } else { g0 * diff.signum() / n };
                }
                accumulate(&mut cot[*b], Value::Real(da.scale(-1.0)));
                accumulate(&mut cot[*a], Value::Real(da));
            }
            Op::Comp(re, im) => {
                let g = complex(g);
                let (gre, gim) = g.into_parts();
                accumulate(&mut cot[*re], Value::Real(gre));
                accumulate(&mut cot[*im], Value::Real(gim));
            }
            Op::CRe(a) => {
                let g = real(g);
                let zeros = Tensor::zeros(g.dims());
                accumulate(&mut cot[*a], Value::Complex(tensor::comp(&g, &zeros)?));
            }
            Op::CIm(a) => {
                let g = real(g);
                let zeros = Tensor::zeros(g.dims());
                accumulate(&mut cot[*a], Value::Complex(tensor::comp(&zeros, &g)?));
            }
            Op::CAdd(a, b) => {
                let g = complex(g);
                accumulate(&mut cot[*a], Value::Complex(g.clone()));
                accumulate(&mut cot[*b], Value::Complex(g));
            }
            Op::CMatMul(a, b) => {
                // C = A B over complex entries, differentiated as the four
                // underlying real products.
                let g = complex(g);
                let (ar, ai) = (cval(*a).re(), cval(*a).im());
                let (br, bi) = (cval(*b).re(), cval(*b).im());
                let (gr, gi) = (g.re(), g.im());
                let brt = br.transpose2()?;
                let bit = bi.transpose2()?;
                let art = ar.transpose2()?;
                let ait = ai.transpose2()?;
                let dar = tensor::matmul(gr, &brt)?.add(&tensor::matmul(gi, &bit)?)?;
                let dai = tensor::matmul(gi, &brt)?.sub(&tensor::matmul(gr, &bit)?)?;
                let dbr = tensor::matmul(&art, gr)?.add(&tensor::matmul(&ait, gi)?)?;
                let dbi = tensor::matmul(&art, gi)?.sub(&tensor::matmul(&ait, gr)?)?;
                accumulate(&mut cot[*a], Value::Complex(tensor::comp(&dar, &dai)?));
                accumulate(&mut cot[*b], Value::Complex(tensor::comp(&dbr, &dbi)?));
            }
            Op::CTranspose2(a) => {
                accumulate(&mut cot[*a], Value::Complex(complex(g).transpose2()?));
            }
            Op::CReshape(a) => {
                let back = complex(g).reshape(cval(*a).dims())?;
                accumulate(&mut cot[*a], Value::Complex(back));
            }
            Op::Fft2R(a) => {
                // Adjoint of a unitary map is its inverse; the input is
                // real, so keep the real plane of the transformed cotangent.
                let g = complex(g);
                let back = fft::ifft2(&g)?;
                accumulate(&mut cot[*a], Value::Real(back.re().clone()));
            }
            Op::Fft2C(a) => {
                let back = fft::ifft2(&complex(g))?;
                accumulate(&mut cot[*a], Value::Complex(back));
            }
            Op::IFft2(a) => {
                let back = fft::fft2_c(&complex(g))?;
                accumulate(&mut cot[*a], Value::Complex(back));
            }
        }
    }

    let mut grads = Gradients::default();
    for (name, id) in &tape.params {
        let shape = tape.nodes[*id].value.as_real().dims().to_vec();
        let grad = match cot[*id].take() {
            Some(Value::Real(t)) => t,
            Some(Value::Complex(_)) => unreachable!("parameters are real"),
            None => Tensor::zeros(&shape), // loss never touched this one
        };
        grads.insert(name.clone(), grad);
    }
    Ok(grads)
}
