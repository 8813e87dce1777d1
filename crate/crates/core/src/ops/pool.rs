use crate::error::Result;
use crate::tape::{Op, Tape, Var};
use crate::tensor::{Shape, Tensor4};

fn pooled(s: Shape) -> Shape {
    Shape::new(s.n, s.c, s.h.div_ceil(2), s.w.div_ceil(2))
}

/// 2x2 mean pooling, stride 2. An odd trailing row/column is replicated
/// before pooling.
pub fn avg_pool2x2(x: &Tensor4) -> Tensor4 {
    let s = x.shape();
    let os = pooled(s);
    let mut out = Tensor4::zeros(os);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oy in 0..os.h {
                let y0 = 2 * oy;
                let y1 = (2 * oy + 1).min(s.h - 1);
                for ox in 0..os.w {
                    let x0 = 2 * ox;
                    let x1 = (2 * ox + 1).min(s.w - 1);
                    // pairwise so a constant input stays exact
                    let top = src[y0 * s.w + x0] + src[y0 * s.w + x1];
                    let bot = src[y1 * s.w + x0] + src[y1 * s.w + x1];
                    dst[oy * os.w + ox] = (top + bot) * 0.25;
                }
            }
        }
    }
    out
}

pub(crate) fn avg_pool2x2_backward(xs: Shape, g: &Tensor4) -> Tensor4 {
    let os = g.shape();
    let mut dx = Tensor4::zeros(xs);
    for n in 0..xs.n {
        for c in 0..xs.c {
            let gp = g.plane(n, c);
            let dst = dx.plane_mut(n, c);
            for oy in 0..os.h {
                let ys = [2 * oy, (2 * oy + 1).min(xs.h - 1)];
                for ox in 0..os.w {
                    let xs_ = [2 * ox, (2 * ox + 1).min(xs.w - 1)];
                    let v = gp[oy * os.w + ox] * 0.25;
                    for &y in &ys {
                        for &xx in &xs_ {
                            dst[y * xs.w + xx] += v;
                        }
                    }
                }
            }
        }
    }
    dx
}

pub fn global_avg_pool(x: &Tensor4) -> Tensor4 {
    let s = x.shape();
    let hw = s.hw() as f64;
    Tensor4::from_fn(Shape::new(s.n, s.c, 1, 1), |n, c, _, _| {
        crate::tensor::neumaier_sum(x.plane(n, c).iter().copied()) / hw
    })
}

pub(crate) fn global_avg_pool_backward(xs: Shape, g: &Tensor4) -> Tensor4 {
    let hw = xs.hw() as f64;
    Tensor4::from_fn(xs, |n, c, _, _| g.at(n, c, 0, 0) / hw)
}

/// Per-plane maximum and the flat in-plane index of its first occurrence.
fn global_max(x: &Tensor4) -> (Tensor4, Vec<usize>) {
    let s = x.shape();
    let mut arg = Vec::with_capacity(s.n * s.c);
    let out = Tensor4::from_fn(Shape::new(s.n, s.c, 1, 1), |n, c, _, _| {
        let p = x.plane(n, c);
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        arg.push(best);
        p[best]
    });
    (out, arg)
}

pub(crate) fn global_max_pool_backward(xs: Shape, argmax: &[usize], g: &Tensor4) -> Tensor4 {
    let mut dx = Tensor4::zeros(xs);
    for n in 0..xs.n {
        for c in 0..xs.c {
            dx.plane_mut(n, c)[argmax[n * xs.c + c]] += g.at(n, c, 0, 0);
        }
    }
    dx
}

fn channel_mean(x: &Tensor4) -> Tensor4 {
    let s = x.shape();
    let inv = 1.0 / s.c as f64;
    let mut out = Tensor4::zeros(Shape::new(s.n, 1, s.h, s.w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            for (d, v) in out.plane_mut(n, 0).iter_mut().zip(src) {
                *d += v;
            }
        }
        for d in out.plane_mut(n, 0) {
            *d *= inv;
        }
    }
    out
}

pub(crate) fn channel_mean_backward(xs: Shape, g: &Tensor4) -> Tensor4 {
    let inv = 1.0 / xs.c as f64;
    Tensor4::from_fn(xs, |n, _, y, x| g.at(n, 0, y, x) * inv)
}

/// Max over channels; `argmax` holds the winning channel per (n, y, x).
fn channel_max(x: &Tensor4) -> (Tensor4, Vec<usize>) {
    let s = x.shape();
    let hw = s.hw();
    let mut out = Tensor4::zeros(Shape::new(s.n, 1, s.h, s.w));
    let mut arg = vec![0usize; s.n * hw];
    for n in 0..s.n {
        out.plane_mut(n, 0).copy_from_slice(x.plane(n, 0));
        for c in 1..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, 0);
            for i in 0..hw {
                if src[i] > dst[i] {
                    dst[i] = src[i];
                    arg[n * hw + i] = c;
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn channel_max_backward(xs: Shape, argmax: &[usize], g: &Tensor4) -> Tensor4 {
    let hw = xs.hw();
    let mut dx = Tensor4::zeros(xs);
    for n in 0..xs.n {
        let gp = g.plane(n, 0);
        for i in 0..hw {
            let c = argmax[n * hw + i];
            dx.plane_mut(n, c)[i] += gp[i];
        }
    }
    dx
}

impl Tape {
    pub fn avg_pool2x2(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = avg_pool2x2(self.node_value(x.index()));
        Ok(self.push(out, Op::AvgPool2x2 { x: x.index() }, &[x.index()]))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = global_avg_pool(self.node_value(x.index()));
        Ok(self.push(out, Op::GlobalAvgPool { x: x.index() }, &[x.index()]))
    }

    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let (out, argmax) = global_max(self.node_value(x.index()));
        if self.tracking_branches() {
            for &a in &argmax {
                self.note_branch(a as u64);
            }
        }
        Ok(self.push(out, Op::GlobalMaxPool { x: x.index(), argmax }, &[x.index()]))
    }

    /// Mean over channels, giving (n, 1, h, w).
    pub fn channel_mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = channel_mean(self.node_value(x.index()));
        Ok(self.push(out, Op::ChannelMean { x: x.index() }, &[x.index()]))
    }

    /// Max over channels, giving (n, 1, h, w).
    pub fn channel_max(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let (out, argmax) = channel_max(self.node_value(x.index()));
        if self.tracking_branches() {
            for &a in &argmax {
                self.note_branch(a as u64);
            }
        }
        Ok(self.push(out, Op::ChannelMax { x: x.index(), argmax }, &[x.index()]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let x = Tensor4::full(Shape::new(1, 2, 6, 4), 5.0);
        assert_eq!(avg_pool2x2(&x), Tensor4::full(Shape::new(1, 2, 3, 2), 5.0));
        let odd = Tensor4::full(Shape::new(1, 1, 5, 3), 0.1);
        assert_eq!(avg_pool2x2(&odd), Tensor4::full(Shape::new(1, 1, 3, 2), 0.1));
    }

    #[test]
    fn block_mean() {
        let x = Tensor4::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avg_pool2x2(&x).data(), &[2.5]);
    }

    #[test]
    fn pooling_conserves_mass_on_even_dims() {
        let x = Tensor4::from_fn(Shape::new(2, 3, 6, 8), |n, c, y, x| {
            ((n + 2 * c + 3 * y + 5 * x) % 7) as f64 * 0.3
        });
        let p = avg_pool2x2(&x);
        assert!((p.sum() * 4.0 - x.sum()).abs() < 1e-12);
    }

    #[test]
    fn odd_dims_replicate_last_row_and_column() {
        let x = Tensor4::from_vec(Shape::new(1, 1, 1, 3), vec![1.0, 3.0, 7.0]).unwrap();
        // rows: [1,3,7] replicated to 2 rows, last column replicated
        assert_eq!(avg_pool2x2(&x).data(), &[2.0, 7.0]);
    }

    #[test]
    fn global_average() {
        let x = Tensor4::from_vec(Shape::new(1, 1, 2, 2), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(global_avg_pool(&x).data(), &[1.5]);
        let c = Tensor4::full(Shape::new(1, 3, 5, 5), 0.7);
        assert!(global_avg_pool(&c).data().iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn global_average_ignores_spatial_order() {
        let x = Tensor4::from_fn(Shape::new(1, 2, 4, 4), |_, c, y, x| {
            (c * 17 + y * 5 + x * 3) as f64 * 0.13
        });
        let mut perm = x.clone();
        perm.plane_mut(0, 0).reverse();
        perm.plane_mut(0, 1).rotate_left(5);
        assert!(global_avg_pool(&x).max_abs_diff(&global_avg_pool(&perm)) < 1e-15);
    }
}
