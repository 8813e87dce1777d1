//! Bilinear resampling with half-pixel centres: the source coordinate of
//! output index i is (i + 0.5) * in/out - 0.5, clamped to [0, in - 1].

use crate::error::{Error, Result};
use crate::tape::{Op, Tape, Var};
use crate::tensor::{Shape, Tensor4};

#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            Tap {
                lo,
                hi,
                frac: src - lo as f64,
            }
        })
        .collect()
}

pub fn bilinear_resize(x: &Tensor4, out_h: usize, out_w: usize) -> Result<Tensor4> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "bilinear_resize: target size {out_h}x{out_w} must be at least 1x1"
        )));
    }
    let s = x.shape();
    if (s.h, s.w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let ty = taps(s.h, out_h);
    let tx = taps(s.w, out_w);
    let mut out = Tensor4::zeros(Shape::new(s.n, s.c, out_h, out_w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for (oy, ty) in ty.iter().enumerate() {
                let r0 = &src[ty.lo * s.w..(ty.lo + 1) * s.w];
                let r1 = &src[ty.hi * s.w..(ty.hi + 1) * s.w];
                for (ox, tx) in tx.iter().enumerate() {
                    // lerp form keeps constants exact
                    let top = r0[tx.lo] + tx.frac * (r0[tx.hi] - r0[tx.lo]);
                    let bot = r1[tx.lo] + tx.frac * (r1[tx.hi] - r1[tx.lo]);
                    dst[oy * out_w + ox] = top + ty.frac * (bot - top);
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn bilinear_backward(xs: Shape, g: &Tensor4) -> Tensor4 {
    let os = g.shape();
    if (xs.h, xs.w) == (os.h, os.w) {
        return g.clone();
    }
    let ty = taps(xs.h, os.h);
    let tx = taps(xs.w, os.w);
    let mut dx = Tensor4::zeros(xs);
    for n in 0..xs.n {
        for c in 0..xs.c {
            let gp = g.plane(n, c);
            let dst = dx.plane_mut(n, c);
            for (oy, ty) in ty.iter().enumerate() {
                for (ox, tx) in tx.iter().enumerate() {
                    let v = gp[oy * os.w + ox];
                    let vy0 = v * (1.0 - ty.frac);
                    let vy1 = v * ty.frac;
                    dst[ty.lo * xs.w + tx.lo] += vy0 * (1.0 - tx.frac);
                    dst[ty.lo * xs.w + tx.hi] += vy0 * tx.frac;
                    dst[ty.hi * xs.w + tx.lo] += vy1 * (1.0 - tx.frac);
                    dst[ty.hi * xs.w + tx.hi] += vy1 * tx.frac;
                }
            }
        }
    }
    dx
}

impl Tape {
    pub fn bilinear_resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        self.check(x)?;
        let out = bilinear_resize(self.node_value(x.index()), out_h, out_w)?;
        Ok(self.push(out, Op::Resize { x: x.index() }, &[x.index()]))
    }
}
