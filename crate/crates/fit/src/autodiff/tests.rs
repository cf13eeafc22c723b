use super::*;
use crate::tensor::comp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(dims: &[usize], seed: u64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn square_has_gradient_two_x() {
    // loss = sum(x * x) => dloss/dx = 2x
    let x0 = random(&[3, 4], 1);
    let mut tape = Tape::new();
    let x = tape.param("x", x0.clone()).unwrap();
    let sq = tape.mul(x, x).unwrap();
    let loss = tape.sum(sq);
    let grads = tape.backward(loss).unwrap();
    let want = x0.scale(2.0);
    assert!(grads.get("x").unwrap().max_abs_diff(&want) < 1e-12);
}

#[test]
fn matmul_loss_matches_finite_differences() {
    let mut params = NamedTensors::new();
    params.insert("a", random(&[3, 4], 2)).unwrap();
    params.insert("b", random(&[4, 2], 3)).unwrap();
    let err = grad_check(
        |tape, p| {
            let a = tape.param("a", p.get("a").unwrap().clone())?;
            let b = tape.param("b", p.get("b").unwrap().clone())?;
            let c = tape.matmul(a, b)?;
            Ok(tape.sum(c))
        },
        &params,
        1e-5,
        1024,
        7,
    )
    .unwrap();
    assert!(err < 1e-7, "matmul grad err {err}");
}

#[test]
fn fft_energy_gradient_is_two_x() {
    // loss = |fft2(x)|^2. By unitarity this equals |x|^2, so the gradient
    // must be exactly 2x — a sharp test of the transform adjoint.
    let x0 = random(&[1, 6, 5], 4);
    let mut tape = Tape::new();
    let x = tape.param("x", x0.clone()).unwrap();
    let f = tape.fft2(x).unwrap();
    let re = tape.c_re(f);
    let im = tape.c_im(f);
    let re2 = tape.mul(re, re).unwrap();
    let im2 = tape.mul(im, im).unwrap();
    let e = tape.add(re2, im2).unwrap();
    let loss = tape.sum(e);
    let grads = tape.backward(loss).unwrap();
    assert!(grads.get("x").unwrap().max_abs_diff(&x0.scale(2.0)) < 1e-8);
}

#[test]
fn shared_parameter_gradients_accumulate() {
    // loss = sum(w x1) + sum(w x2): dw must be the sum of both uses.
    let w0 = random(&[2, 3], 5);
    let x1 = random(&[3, 2], 6);
    let x2 = random(&[3, 2], 7);
    let mut tape = Tape::new();
    let w = tape.param("w", w0.clone()).unwrap();
    let c1 = tape.constant(x1.clone());
    let c2 = tape.constant(x2.clone());
    let m1 = tape.matmul(w, c1).unwrap();
    let m2 = tape.matmul(w, c2).unwrap();
    let s1 = tape.sum(m1);
    let s2 = tape.sum(m2);
    let loss = tape.add(s1, s2).unwrap();
    let grads = tape.backward(loss).unwrap();
    // d sum(w x)/dw = ones * x^T
    let ones = Tensor::filled(&[2, 2], 1.0);
    let want = tensor::matmul(&ones, &x1.transpose2().unwrap())
        .unwrap()
        .add(&tensor::matmul(&ones, &x2.transpose2().unwrap()).unwrap())
        .unwrap();
    assert!(grads.get("w").unwrap().max_abs_diff(&want) < 1e-12);
}

#[test]
fn unused_parameter_gets_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.param("x", random(&[2, 2], 8)).unwrap();
    let _unused = tape.param("unused", random(&[3], 9)).unwrap();
    let sq = tape.mul(x, x).unwrap();
    let loss = tape.sum(sq);
    let grads = tape.backward(loss).unwrap();
    let z = grads.get("unused").unwrap();
    assert_eq!(z.dims(), &[3]);
    assert_eq!(z.abs_max(), 0.0);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.param("x", random(&[2, 2], 10)).unwrap();
    let y = tape.relu(x);
    assert!(matches!(tape.backward(y), Err(Error::Usage(_))));
}

#[test]
fn duplicate_param_name_is_rejected() {
    let mut tape = Tape::new();
    tape.param("w", Tensor::zeros(&[1])).unwrap();
    assert!(tape.param("w", Tensor::zeros(&[1])).is_err());
}

/// Build a tiny graph exercising `kind`, run backward, and require a
/// gradient signal to reach parameter "p". Together with the exhaustive
/// `match` in the backward sweep this audits that every forward op has a
/// working backward rule.
fn exercise(kind: OpKind) -> Result<(f64, bool)> {
    let mut tape = Tape::new();
    let p = tape.param("p", random(&[2, 2], 42).map(|v| v + 2.0))?; // positive, away from relu/l1 kinks
    let loss = match kind {
        OpKind::Leaf => tape.sum(p),
        OpKind::Add => {
            let c = tape.constant(random(&[2, 2], 1));
            let y = tape.add(p, c)?;
            tape.sum(y)
        }
        OpKind::Sub => {
            let c = tape.constant(random(&[2, 2], 2));
            let y = tape.sub(p, c)?;
            tape.sum(y)
        }
        OpKind::Mul => {
            let c = tape.constant(random(&[2, 2], 3));
            let y = tape.mul(p, c)?;
            tape.sum(y)
        }
        OpKind::Scale => {
            let y = tape.scale(p, -1.7);
            tape.sum(y)
        }
        OpKind::AddRowBias => {
            let b = tape.constant(random(&[2], 4));
            let y = tape.add_row_bias(p, b)?;
            tape.sum(y)
        }
        OpKind::MatMul => {
            let c = tape.constant(random(&[2, 3], 5));
            let y = tape.matmul(p, c)?;
            tape.sum(y)
        }
        OpKind::Transpose2 => {
            let y = tape.transpose2(p)?;
            tape.sum(y)
        }
        OpKind::Reshape => {
            let y = tape.reshape(p, &[4])?;
            tape.sum(y)
        }
        OpKind::Concat => {
            let c = tape.constant(random(&[2, 2], 6));
            let y = tape.concat(&[p, c], 1)?;
            tape.sum(y)
        }
        OpKind::SliceAxis => {
            let y = tape.slice_axis(p, 1, 0, 1)?;
            tape.sum(y)
        }
        OpKind::Relu => {
            let y = tape.relu(p);
            tape.sum(y)
        }
        OpKind::Softmax => {
            let y = tape.softmax(p, 1)?;
            let sq = tape.mul(y, y)?;
            tape.sum(sq)
        }
        OpKind::Conv2d => {
            let x = tape.reshape(p, &[1, 2, 2])?;
            let w = tape.constant(random(&[1, 1, 3, 3], 7));
            let b = tape.constant(random(&[1], 8));
            let y = tape.conv2d(x, w, b)?;
            tape.sum(y)
        }
        OpKind::PConv => {
            let x = tape.reshape(p, &[1, 2, 2])?;
            let w = tape.constant(random(&[2, 1], 9));
            let b = tape.constant(random(&[2], 10));
            let y = tape.pconv(x, w, b)?;
            tape.sum(y)
        }
        OpKind::BilinearSample => {
            let x = tape.reshape(p, &[1, 2, 2])?;
            let coords = Tensor::new(vec![2, 2], vec![0.1, -0.2, -0.6, 0.9]).unwrap();
            let y = tape.bilinear_sample(x, &coords)?;
            tape.sum(y)
        }
        OpKind::NearestSample => {
            let x = tape.reshape(p, &[1, 2, 2])?;
            let coords = Tensor::new(vec![1, 2], vec![0.3, 0.3]).unwrap();
            let y = tape.nearest_sample(x, &coords)?;
            tape.sum(y)
        }
        OpKind::Sum => tape.sum(p),
        OpKind::L1Loss => {
            let t = tape.constant(random(&[2, 2], 11));
            tape.l1_loss(p, t)?
        }
        OpKind::Comp => {
            let im = tape.constant(random(&[2, 2], 12));
            let z = tape.comp(p, im)?;
            let re = tape.c_re(z);
            tape.sum(re)
        }
        OpKind::CRe | OpKind::CIm => {
            // A 2x2 DFT is purely real, so widen to 2x3 to give the
            // imaginary plane signal.
            let pad = tape.constant(random(&[2, 1], 30));
            let wide = tape.concat(&[p, pad], 1)?;
            let x = tape.reshape(wide, &[1, 2, 3])?;
            let z = tape.fft2(x)?;
            let part = if kind == OpKind::CRe {
                tape.c_re(z)
            } else {
                tape.c_im(z)
            };
            let sq = tape.mul(part, part)?;
            tape.sum(sq)
        }
        OpKind::CAdd => {
            let x = tape.reshape(p, &[1, 2, 2])?;
            let z = tape.fft2(x)?;
            let y = tape.c_add(z, z)?;
            let re = tape.c_re(y);
            tape.sum(re)
        }
        OpKind::CMatMul => {
            let im = tape.constant(random(&[2, 2], 13));
            let a = tape.comp(p, im)?;
            let b = tape.constant_c(
                comp(&random(&[2, 2], 14), &random(&[2, 2], 15)).unwrap(),
            );
            let m = tape.c_matmul(a, b)?;
            let re = tape.c_re(m);
            tape.sum(re)
        }
        OpKind::CTranspose2 => {
            let im = tape.constant(random(&[2, 2], 16));
            let z = tape.comp(p, im)?;
            let t = tape.c_transpose2(z)?;
            let re = tape.c_re(t);
            tape.sum(re)
        }
        OpKind::CReshape => {
            let im = tape.constant(random(&[2, 2], 17));
            let z = tape.comp(p, im)?;
            let r = tape.c_reshape(z, &[1, 2, 2])?;
            let re = tape.c_re(r);
            tape.sum(re)
        }
        OpKind::Fft2R => {
            let x = tape.reshape(p, &[1, 2, 2])?;
            let z = tape.fft2(x)?;
            let re = tape.c_re(z);
            let sq = tape.mul(re, re)?;
            tape.sum(sq)
        }
        OpKind::Fft2C => {
            let im = tape.constant(random(&[1, 2, 2], 18));
            let x = tape.reshape(p, &[1, 2, 2])?;
            let z = tape.comp(x, im)?;
            let f = tape.fft2_c(z)?;
            let re = tape.c_re(f);
            let sq = tape.mul(re, re)?;
            tape.sum(sq)
        }
        OpKind::IFft2 => {
            let im = tape.constant(random(&[1, 2, 2], 19));
            let x = tape.reshape(p, &[1, 2, 2])?;
            let z = tape.comp(x, im)?;
            let f = tape.ifft2(z)?;
            let re = tape.c_re(f);
            let sq = tape.mul(re, re)?;
            tape.sum(sq)
        }
    };
    let recorded = tape.nodes.iter().any(|n| n.op.kind() == kind);
    let grads = tape.backward(loss)?;
    Ok((grads.get("p").unwrap().abs_max(), recorded))
}

#[test]
fn registry_audit_every_op_has_a_live_backward_rule() {
    for &kind in ALL_OPS {
        let (signal, recorded) = exercise(kind)
            .unwrap_or_else(|e| panic!("{kind:?} backward failed: {e}"));
        assert!(recorded, "{kind:?} graph never recorded that op");
        assert!(
            signal > 0.0,
            "{kind:?} produced no gradient signal at parameter leaf"
        );
    }
}

#[test]
fn finite_differences_agree_across_op_zoo() {
    // One composite graph touching sampling, softmax, conv, and the DFT;
    // checked coordinate-by-coordinate against central differences.
    let mut params = NamedTensors::new();
    params.insert("feat", random(&[2, 4, 4], 20)).unwrap();
    params.insert("w", random(&[2, 2], 21)).unwrap();
    let err = grad_check(
        |tape, p| {
            let feat = tape.param("feat", p.get("feat").unwrap().clone())?;
            let w = tape.param("w", p.get("w").unwrap().clone())?;
            let b = tape.constant(Tensor::zeros(&[2]));
            let fm = tape.pconv(feat, w, b)?;
            let spec = tape.fft2(fm)?;
            let re = tape.c_re(spec);
            let im = tape.c_im(spec);
            let re2 = tape.mul(re, re)?;
            let im2 = tape.mul(im, im)?;
            let energy = tape.add(re2, im2)?;
            let coords = Tensor::new(vec![3, 2], vec![0.1, 0.2, -0.4, 0.7, 0.9, -0.9]).unwrap();
            let sampled = tape.bilinear_sample(energy, &coords)?;
            let sm = tape.softmax(sampled, 1)?;
            let target = tape.constant(random(&[3, 2], 22));
            tape.l1_loss(sm, target)
        },
        &params,
        1e-5,
        1024,
        23,
    )
    .unwrap();
    assert!(err < 1e-6, "composite graph grad err {err}");
}

#[test]
fn quadratic_form_gradient_closed_form() {
    // loss = x^T A x with constant A: grad = (A + A^T) x.
    let a0 = random(&[4, 4], 24);
    let x0 = random(&[4, 1], 25);
    let mut tape = Tape::new();
    let x = tape.param("x", x0.clone()).unwrap();
    let a = tape.constant(a0.clone());
    let ax = tape.matmul(a, x).unwrap();
    let xt = tape.transpose2(x).unwrap();
    let q = tape.matmul(xt, ax).unwrap();
    let loss = tape.sum(q);
    let grads = tape.backward(loss).unwrap();
    let want = tensor::matmul(&a0.add(&a0.transpose2().unwrap()).unwrap(), &x0).unwrap();
    assert!(grads.get("x").unwrap().max_abs_diff(&want) < 1e-12);
}
