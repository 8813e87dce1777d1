use crate::error::Result;
use crate::tape::{Op, Tape, Var};
use crate::tensor::{neumaier_sum, Tensor4};

/// Softmax over the h*w positions of each (n, c) plane.
pub fn softmax_spatial(x: &Tensor4) -> Tensor4 {
    let s = x.shape();
    let mut out = x.clone();
    for n in 0..s.n {
        for c in 0..s.c {
            let p = out.plane_mut(n, c);
            let m = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in p.iter_mut() {
                *v = (*v - m).exp();
            }
            let z = neumaier_sum(p.iter().copied());
            for v in p.iter_mut() {
                *v /= z;
            }
        }
    }
    out
}

pub(crate) fn softmax_spatial_backward(y: &Tensor4, g: &Tensor4) -> Tensor4 {
    let s = y.shape();
    let mut dx = Tensor4::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let yp = y.plane(n, c);
            let gp = g.plane(n, c);
            let dot = neumaier_sum(yp.iter().zip(gp).map(|(a, b)| a * b));
            for ((d, &yv), &gv) in dx.plane_mut(n, c).iter_mut().zip(yp).zip(gp) {
                *d = yv * (gv - dot);
            }
        }
    }
    dx
}

impl Tape {
    pub fn softmax_spatial(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = softmax_spatial(self.node_value(x.index()));
        Ok(self.push(out, Op::SoftmaxSpatial { x: x.index() }, &[x.index()]))
    }
}
