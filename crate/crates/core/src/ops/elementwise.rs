use crate::error::{shape_err, Result};
use crate::tape::{Op, Tape, Var};
use crate::tensor::{Shape, Tensor4};

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn relu_backward(out: &Tensor4, g: &Tensor4) -> Tensor4 {
    let data = out
        .data()
        .iter()
        .zip(g.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor4::from_vec(out.shape(), data).expect("same shape")
}

pub(crate) fn sigmoid_backward(out: &Tensor4, g: &Tensor4) -> Tensor4 {
    let data = out
        .data()
        .iter()
        .zip(g.data())
        .map(|(&y, &g)| g * y * (1.0 - y))
        .collect();
    Tensor4::from_vec(out.shape(), data).expect("same shape")
}

/// Applies `f(out_index, a_index, b_index)` over the broadcast output shape.
fn for_each_broadcast(out: Shape, sa: [usize; 4], sb: [usize; 4], mut f: impl FnMut(usize, usize, usize)) {
    let mut o = 0;
    for n in 0..out.n {
        for c in 0..out.c {
            for y in 0..out.h {
                let ba = n * sa[0] + c * sa[1] + y * sa[2];
                let bb = n * sb[0] + c * sb[1] + y * sb[2];
                for x in 0..out.w {
                    f(o, ba + x * sa[3], bb + x * sb[3]);
                    o += 1;
                }
            }
        }
    }
}

fn broadcast_binary(a: &Tensor4, b: &Tensor4, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor4> {
    let (asz, bsz) = (a.shape(), b.shape());
    if asz == bsz {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor4::from_vec(asz, data);
    }
    let out = asz.broadcast(&bsz, op)?;
    let sa = asz.broadcast_strides(&out);
    let sb = bsz.broadcast_strides(&out);
    let mut res = Tensor4::zeros(out);
    let (ad, bd) = (a.data(), b.data());
    let rd = res.data_mut();
    for_each_broadcast(out, sa, sb, |o, ia, ib| rd[o] = f(ad[ia], bd[ib]));
    Ok(res)
}

/// Sums `g` over the dimensions where `target` is 1 but `g` is not.
pub(crate) fn reduce_to(g: &Tensor4, target: Shape) -> Tensor4 {
    let gs = g.shape();
    if gs == target {
        return g.clone();
    }
    let st = target.broadcast_strides(&gs);
    let mut out = Tensor4::zeros(target);
    let od = out.data_mut();
    let gd = g.data();
    for_each_broadcast(gs, st, [0; 4], |o, it, _| od[it] += gd[o]);
    out
}

/// Gradient for one operand of a broadcast product: reduce(g * other).
pub(crate) fn mul_backward(g: &Tensor4, other: &Tensor4, target: Shape) -> Tensor4 {
    let gs = g.shape();
    if other.shape() == gs && target == gs {
        let data = g.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        return Tensor4::from_vec(gs, data).expect("same shape");
    }
    let so = other.shape().broadcast_strides(&gs);
    let st = target.broadcast_strides(&gs);
    let mut out = Tensor4::zeros(target);
    let od = out.data_mut();
    let (gd, ot) = (g.data(), other.data());
    for_each_broadcast(gs, st, so, |o, it, io| od[it] += gd[o] * ot[io]);
    out
}

pub(crate) fn split_channels(g: &Tensor4, shapes: &[Shape]) -> Vec<Tensor4> {
    let mut offset = 0;
    shapes
        .iter()
        .map(|s| {
            let part = g.narrow_channels(offset, s.c);
            offset += s.c;
            part
        })
        .collect()
}

pub fn concat_channels(parts: &[&Tensor4]) -> Result<Tensor4> {
    let Some(first) = parts.first() else {
        return shape_err("concat_channels", "no inputs");
    };
    let s0 = first.shape();
    let mut c_total = 0;
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (s0.n, s0.h, s0.w) {
            return shape_err(
                "concat_channels",
                format!("all inputs must share batch/height/width; got {s} and {s0}"),
            );
        }
        c_total += s.c;
    }
    let os = Shape::new(s0.n, c_total, s0.h, s0.w);
    let mut data = Vec::with_capacity(os.numel());
    for n in 0..s0.n {
        for p in parts {
            data.extend_from_slice(p.item(n));
        }
    }
    Tensor4::from_vec(os, data)
}

impl Tensor4 {
    /// Channels `[start, start + len)` as a new tensor.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Tensor4 {
        let s = self.shape();
        assert!(start + len <= s.c, "narrow_channels out of range");
        let hw = s.hw();
        let mut data = Vec::with_capacity(s.n * len * hw);
        for n in 0..s.n {
            let item = self.item(n);
            data.extend_from_slice(&item[start * hw..(start + len) * hw]);
        }
        Tensor4::from_vec(Shape::new(s.n, len, s.h, s.w), data).expect("sized")
    }
}

impl Tape {
    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = xv.map(|v| if v > 0.0 { v } else { 0.0 });
        if self.tracking_branches() {
            let mut word = 0u64;
            let mut bits = 0;
            let signs: Vec<bool> = xv.data().iter().map(|&v| v > 0.0).collect();
            for s in signs {
                word = (word << 1) | s as u64;
                bits += 1;
                if bits == 64 {
                    self.note_branch(word);
                    word = 0;
                    bits = 0;
                }
            }
            self.note_branch(word);
        }
        self.push(out, Op::Relu { x: x.index() }, &[x.index()])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid { x: x.index() }, &[x.index()])
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(out, Op::Affine { x: x.index(), scale }, &[x.index()])
    }

    /// Elementwise sum with broadcasting over size-1 dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = broadcast_binary(self.node_value(a.index()), self.node_value(b.index()), "add", |x, y| {
            x + y
        })?;
        Ok(self.push(
            out,
            Op::Add {
                a: a.index(),
                b: b.index(),
            },
            &[a.index(), b.index()],
        ))
    }

    /// Elementwise product with broadcasting over size-1 dimensions.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = broadcast_binary(self.node_value(a.index()), self.node_value(b.index()), "mul", |x, y| {
            x * y
        })?;
        Ok(self.push(
            out,
            Op::Mul {
                a: a.index(),
                b: b.index(),
            },
            &[a.index(), b.index()],
        ))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let values: Vec<&Tensor4> = parts.iter().map(|p| self.node_value(p.index())).collect();
        let out = concat_channels(&values)?;
        let inputs: Vec<usize> = parts.iter().map(|p| p.index()).collect();
        Ok(self.push(out, Op::Concat { inputs: inputs.clone() }, &inputs))
    }

    /// Sum of all entries as a (1,1,1,1) tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor4::scalar(self.value(x).sum());
        self.push(out, Op::Sum { x: x.index() }, &[x.index()])
    }

    /// sum(x * r) for a fixed tensor `r`; the usual scalarisation for
    /// gradient checks.
    pub fn dot_const(&mut self, x: Var, r: Tensor4) -> Result<Var> {
        let k = self.constant(r);
        let p = self.mul(x, k)?;
        Ok(self.sum(p))
    }
}
