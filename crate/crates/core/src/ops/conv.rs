//! 2-D cross-correlation (no kernel flip) with stride, zero padding and
//! dilation, lowered to a matrix product through an im2col buffer.

use crate::error::{shape_err, Result};
use crate::tape::{ConvGeom, Op, Tape, Var};
use crate::tensor::{Shape, Tensor4};

/// Output spatial size for one axis, or `None` when the kernel does not fit.
pub fn out_dim(input: usize, k: usize, pad: usize, stride: usize, dilation: usize) -> Option<usize> {
    let span = dilation * (k - 1) + 1;
    let padded = input + 2 * pad;
    if padded < span || stride == 0 {
        return None;
    }
    Some((padded - span) / stride + 1)
}

pub(crate) fn output_shape(x: Shape, w: Shape, geom: ConvGeom) -> Result<Shape> {
    if w.h == 0 || w.w == 0 {
        return shape_err("conv2d", "kernel height and width must be >= 1");
    }
    if w.c != x.c {
        return shape_err(
            "conv2d",
            format!("input channel dimension {} does not match kernel c_in {}", x.c, w.c),
        );
    }
    let oh = out_dim(x.h, w.h, geom.pad.0, geom.stride, geom.dilation);
    let ow = out_dim(x.w, w.w, geom.pad.1, geom.stride, geom.dilation);
    match (oh, ow) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok(Shape::new(x.n, w.n, oh, ow)),
        (None, _) | (Some(0), _) => shape_err(
            "conv2d",
            format!(
                "height {} too small for kernel height {} with pad {}",
                x.h, w.h, geom.pad.0
            ),
        ),
        _ => shape_err(
            "conv2d",
            format!(
                "width {} too small for kernel width {} with pad {}",
                x.w, w.w, geom.pad.1
            ),
        ),
    }
}

fn is_pointwise(w: Shape, geom: ConvGeom) -> bool {
    w.h == 1 && w.w == 1 && geom.stride == 1 && geom.pad == (0, 0)
}

/// Fills `cols` (K x P, row-major) from one batch item `x` (c, h, w).
fn im2col(x: &[f64], xs: Shape, ks: Shape, geom: ConvGeom, oh: usize, ow: usize, cols: &mut [f64]) {
    let (kh, kw) = (ks.h, ks.w);
    let p = oh * ow;
    let (ph, pw) = (geom.pad.0 as isize, geom.pad.1 as isize);
    let (s, d) = (geom.stride as isize, geom.dilation as isize);
    let (h, w) = (xs.h as isize, xs.w as isize);
    for ci in 0..xs.c {
        let plane = &x[ci * xs.h * xs.w..(ci + 1) * xs.h * xs.w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = oy as isize * s + ky as isize * d - ph;
                    let seg = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h {
                        seg.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * xs.w..(iy as usize + 1) * xs.w];
                    for (ox, v) in seg.iter_mut().enumerate() {
                        let ix = ox as isize * s + kx as isize * d - pw;
                        *v = if ix < 0 || ix >= w { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back into one batch item of `dx`.
fn col2im(cols: &[f64], xs: Shape, ks: Shape, geom: ConvGeom, oh: usize, ow: usize, dx: &mut [f64]) {
    let (kh, kw) = (ks.h, ks.w);
    let p = oh * ow;
    let (ph, pw) = (geom.pad.0 as isize, geom.pad.1 as isize);
    let (s, d) = (geom.stride as isize, geom.dilation as isize);
    let (h, w) = (xs.h as isize, xs.w as isize);
    for ci in 0..xs.c {
        let plane = &mut dx[ci * xs.h * xs.w..(ci + 1) * xs.h * xs.w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = oy as isize * s + ky as isize * d - ph;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * xs.w..(iy as usize + 1) * xs.w];
                    for ox in 0..ow {
                        let ix = ox as isize * s + kx as isize * d - pw;
                        if ix >= 0 && ix < w {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// C (m x n) = alpha * A (m x k) * B (k x n) + beta * C, with explicit
/// row/column strides for A and B. C is row-major contiguous.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() > (m - 1) * rsa + k.saturating_sub(1) * csa || k == 0);
    assert!(b.len() > k.saturating_sub(1) * rsb + (n - 1) * csb || k == 0);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access of A and B inside
    // their slices, and C is a distinct, exclusively borrowed m*n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn forward(x: &Tensor4, w: &Tensor4, b: Option<&Tensor4>, geom: ConvGeom) -> Result<Tensor4> {
    let xs = x.shape();
    let ks = w.shape();
    let os = output_shape(xs, ks, geom)?;
    if let Some(b) = b {
        if b.len() != ks.n {
            return shape_err(
                "conv2d",
                format!("bias has {} entries for {} output channels", b.len(), ks.n),
            );
        }
    }
    let kdim = ks.c * ks.h * ks.w;
    let p = os.h * os.w;
    let mut out = Tensor4::zeros(os);
    let pointwise = is_pointwise(ks, geom);
    let mut cols = if pointwise { Vec::new() } else { vec![0.0; kdim * p] };
    let out_item = ks.n * p;
    for n in 0..xs.n {
        let dst = &mut out.data_mut()[n * out_item..(n + 1) * out_item];
        if let Some(b) = b {
            for (o, row) in dst.chunks_exact_mut(p).enumerate() {
                row.fill(b.data()[o]);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        let src: &[f64] = if pointwise {
            x.item(n)
        } else {
            im2col(x.item(n), xs, ks, geom, os.h, os.w, &mut cols);
            &cols
        };
        gemm(ks.n, kdim, p, w.data(), (kdim, 1), src, (p, 1), beta, dst);
    }
    Ok(out)
}

#[allow(clippy::type_complexity)]
pub(crate) fn backward(
    x: &Tensor4,
    w: &Tensor4,
    g: &Tensor4,
    geom: ConvGeom,
    want_x: bool,
    want_w: bool,
    want_b: bool,
) -> (Option<Tensor4>, Option<Tensor4>, Option<Tensor4>) {
    let xs = x.shape();
    let ks = w.shape();
    let os = g.shape();
    let kdim = ks.c * ks.h * ks.w;
    let p = os.h * os.w;
    let pointwise = is_pointwise(ks, geom);

    let mut dx = want_x.then(|| Tensor4::zeros(xs));
    let mut dw = want_w.then(|| Tensor4::zeros(ks));
    let mut db = want_b.then(|| Tensor4::zeros(Shape::new(1, 1, 1, ks.n)));

    let mut cols = if pointwise { Vec::new() } else { vec![0.0; kdim * p] };
    let mut dcols = if want_x && !pointwise {
        vec![0.0; kdim * p]
    } else {
        Vec::new()
    };
    let item = xs.c * xs.h * xs.w;
    for n in 0..xs.n {
        let gn = &g.data()[n * ks.n * p..(n + 1) * ks.n * p];
        if let Some(db) = db.as_mut() {
            for (o, row) in gn.chunks_exact(p).enumerate() {
                db.data_mut()[o] += row.iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            let src: &[f64] = if pointwise {
                x.item(n)
            } else {
                im2col(x.item(n), xs, ks, geom, os.h, os.w, &mut cols);
                &cols
            };
            // dW += dOut (c_out x P) * cols^T (P x K)
            gemm(ks.n, p, kdim, gn, (p, 1), src, (1, p), 1.0, dw.data_mut());
        }
        if let Some(dx) = dx.as_mut() {
            let dst = &mut dx.data_mut()[n * item..(n + 1) * item];
            if pointwise {
                // dX += W^T (K x c_out) * dOut (c_out x P)
                gemm(kdim, ks.n, p, w.data(), (1, kdim), gn, (p, 1), 1.0, dst);
            } else {
                gemm(kdim, ks.n, p, w.data(), (1, kdim), gn, (p, 1), 0.0, &mut dcols);
                col2im(&dcols, xs, ks, geom, os.h, os.w, dst);
            }
        }
    }
    (dx, dw, db)
}

impl Tape {
    /// `weight` has shape (c_out, c_in, kh, kw); `bias`, if any, holds
    /// `c_out` values in any shape.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, geom: ConvGeom) -> Result<Var> {
        self.check(x)?;
        self.check(weight)?;
        if let Some(b) = bias {
            self.check(b)?;
        }
        let xv = self.node_value(x.index());
        let wv = self.node_value(weight.index());
        let out = forward(xv, wv, bias.map(|b| self.node_value(b.index())), geom)?;
        let ks = wv.shape();
        let os = out.shape();
        self.add_conv_macs((os.numel() * ks.c * ks.h * ks.w) as u64);
        let mut inputs = vec![x.index(), weight.index()];
        if let Some(b) = bias {
            inputs.push(b.index());
        }
        Ok(self.push(
            out,
            Op::Conv2d {
                x: x.index(),
                w: weight.index(),
                b: bias.map(|b| b.index()),
                geom,
            },
            &inputs,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    fn random(shape: Shape, seed: u64) -> Tensor4 {
        let mut p = Prng::new(seed);
        Tensor4::from_fn(shape, |_, _, _, _| p.uniform(-1.0, 1.0))
    }

    /// Direct nested-loop correlation, used as an oracle for the im2col path.
    fn naive(x: &Tensor4, w: &Tensor4, b: Option<&Tensor4>, geom: ConvGeom) -> Tensor4 {
        let xs = x.shape();
        let ks = w.shape();
        let os = output_shape(xs, ks, geom).unwrap();
        Tensor4::from_fn(os, |n, o, oy, ox| {
            let mut acc = b.map_or(0.0, |b| b.data()[o]);
            for ci in 0..ks.c {
                for ky in 0..ks.h {
                    for kx in 0..ks.w {
                        let iy = (oy * geom.stride + ky * geom.dilation) as isize - geom.pad.0 as isize;
                        let ix = (ox * geom.stride + kx * geom.dilation) as isize - geom.pad.1 as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                            acc += w.at(o, ci, ky, kx) * x.at(n, ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn identity_kernel() {
        let x = random(Shape::new(2, 1, 5, 4), 1);
        let w = Tensor4::full(Shape::new(1, 1, 1, 1), 1.0);
        let b = Tensor4::zeros(Shape::new(1, 1, 1, 1));
        assert_eq!(forward(&x, &w, Some(&b), ConvGeom::new(1, (0, 0), 1)).unwrap(), x);
    }

    #[test]
    fn one_by_three_hand_correlation() {
        let x = Tensor4::from_vec(Shape::new(1, 1, 1, 4), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let w = Tensor4::from_vec(Shape::new(1, 1, 1, 3), vec![-1.0, 0.0, 1.0]).unwrap();
        let out = forward(&x, &w, None, ConvGeom::new(1, (0, 1), 1)).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 2.0, -2.0]);
    }

    #[test]
    fn matches_naive_loops_for_assorted_geometries() {
        let cases = [
            (
                Shape::new(2, 3, 7, 6),
                Shape::new(4, 3, 3, 3),
                ConvGeom::new(1, (1, 1), 1),
            ),
            (
                Shape::new(1, 2, 8, 8),
                Shape::new(3, 2, 3, 3),
                ConvGeom::new(2, (1, 1), 1),
            ),
            (
                Shape::new(1, 2, 9, 7),
                Shape::new(2, 2, 3, 3),
                ConvGeom::new(1, (3, 3), 3),
            ),
            (
                Shape::new(1, 3, 6, 6),
                Shape::new(2, 3, 1, 5),
                ConvGeom::new(1, (0, 2), 1),
            ),
            (
                Shape::new(1, 3, 6, 6),
                Shape::new(2, 3, 7, 1),
                ConvGeom::new(1, (3, 0), 1),
            ),
            (
                Shape::new(2, 4, 3, 5),
                Shape::new(6, 4, 1, 1),
                ConvGeom::new(1, (0, 0), 1),
            ),
        ];
        for (i, (xs, ks, geom)) in cases.into_iter().enumerate() {
            let x = random(xs, 10 + i as u64);
            let w = random(ks, 20 + i as u64);
            let b = random(Shape::new(1, 1, 1, ks.n), 30 + i as u64);
            let fast = forward(&x, &w, Some(&b), geom).unwrap();
            let slow = naive(&x, &w, Some(&b), geom);
            assert!(fast.max_abs_diff(&slow) < 1e-12, "case {i}");
        }
    }

    #[test]
    fn output_size_formula() {
        // floor((h + 2p - d(k-1) - 1)/s) + 1
        assert_eq!(out_dim(64, 3, 1, 2, 1), Some(32));
        assert_eq!(out_dim(6, 3, 7, 1, 7), Some(6));
        assert_eq!(out_dim(7, 3, 1, 2, 1), Some(4));
        assert_eq!(out_dim(1, 3, 0, 1, 1), None);
    }

    #[test]
    fn bias_free_conv_is_linear() {
        let w = random(Shape::new(3, 2, 3, 3), 5);
        let x = random(Shape::new(1, 2, 6, 6), 6);
        let y = random(Shape::new(1, 2, 6, 6), 7);
        let geom = ConvGeom::same(3, 3);
        let mut xy = x.clone();
        xy.add_assign(&y);
        let lhs = forward(&xy, &w, None, geom).unwrap();
        let mut rhs = forward(&x, &w, None, geom).unwrap();
        rhs.add_assign(&forward(&y, &w, None, geom).unwrap());
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);

        let scaled = forward(&x.map(|v| 2.0 * v), &w, None, geom).unwrap();
        let twice = forward(&x, &w, None, geom).unwrap().map(|v| 2.0 * v);
        assert!(scaled.max_abs_diff(&twice) < 1e-12);
    }

    #[test]
    fn channel_mismatch_names_the_dimension() {
        let x = Tensor4::zeros(Shape::new(1, 3, 4, 4));
        let w = Tensor4::zeros(Shape::new(2, 4, 3, 3));
        let err = forward(&x, &w, None, ConvGeom::same(3, 3)).unwrap_err();
        assert!(err.to_string().contains("channel"), "{err}");
    }
}
