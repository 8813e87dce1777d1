use std::fmt;

use crate::error::{shape_err, Result};

/// (batch, channels, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Self::new(1, 1, 1, 1)
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    /// Element strides with broadcast dimensions (size 1 in `self`, larger in
    /// `out`) mapped to stride 0.
    pub(crate) fn broadcast_strides(&self, out: &Shape) -> [usize; 4] {
        let d = self.dims();
        let o = out.dims();
        let full = [self.c * self.h * self.w, self.h * self.w, self.w, 1];
        let mut s = [0; 4];
        for k in 0..4 {
            s[k] = if d[k] == 1 && o[k] != 1 { 0 } else { full[k] };
        }
        s
    }

    /// Result of broadcasting two shapes; a dimension may differ only when
    /// one side is 1.
    pub fn broadcast(&self, other: &Shape, op: &'static str) -> Result<Shape> {
        const NAMES: [&str; 4] = ["batch", "channel", "height", "width"];
        let a = self.dims();
        let b = other.dims();
        let mut out = [0; 4];
        for k in 0..4 {
            out[k] = if a[k] == b[k] || b[k] == 1 {
                a[k]
            } else if a[k] == 1 {
                b[k]
            } else {
                return shape_err(
                    op,
                    format!("{} dimension {} cannot broadcast with {}", NAMES[k], a[k], b[k]),
                );
            };
        }
        Ok(Shape::new(out[0], out[1], out[2], out[3]))
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 array in NCHW order, double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return shape_err(
                "from_vec",
                format!("shape {shape} needs {} values, got {}", shape.numel(), data.len()),
            );
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let o = self.offset(n, c, y, x);
        self.data[o] = v;
    }

    /// Contiguous `h*w` plane for one (n, c).
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let hw = self.shape.hw();
        let start = (n * self.shape.c + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let hw = self.shape.hw();
        let start = (n * self.shape.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Contiguous `c*h*w` block for one batch item.
    pub fn item(&self, n: usize) -> &[f64] {
        let chw = self.shape.c * self.shape.hw();
        &self.data[n * chw..(n + 1) * chw]
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return shape_err("reshape", format!("{} -> {}", self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        neumaier_sum(self.data.iter().copied())
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Batch item `n` as a standalone (1, c, h, w) tensor.
    pub fn select_item(&self, n: usize) -> Tensor4 {
        let s = self.shape;
        Tensor4 {
            shape: Shape::new(1, s.c, s.h, s.w),
            data: self.item(n).to_vec(),
        }
    }

    /// Stacks equally-shaped (1, c, h, w) tensors along the batch axis.
    pub fn stack(items: &[Tensor4]) -> Result<Tensor4> {
        let Some(first) = items.first() else {
            return shape_err("stack", "no tensors to stack");
        };
        let s = first.shape;
        let mut data = Vec::with_capacity(s.numel() * items.len());
        for t in items {
            if t.shape != s {
                return shape_err("stack", format!("{} vs {}", t.shape, s));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor4 {
            shape: Shape::new(items.len() * s.n, s.c, s.h, s.w),
            data,
        })
    }

    /// Clockwise quarter turn of every plane: out[y][x] = in[h-1-x][y].
    pub fn rot90(&self) -> Tensor4 {
        let s = self.shape;
        let out_shape = Shape::new(s.n, s.c, s.w, s.h);
        let mut out = Tensor4::zeros(out_shape);
        for n in 0..s.n {
            for c in 0..s.c {
                let src = self.plane(n, c);
                let dst = out.plane_mut(n, c);
                for y in 0..s.w {
                    for x in 0..s.h {
                        dst[y * s.h + x] = src[(s.h - 1 - x) * s.w + y];
                    }
                }
            }
        }
        out
    }
}

/// Compensated summation; keeps reductions reproducible to the last ulp
/// regardless of magnitude spread.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        let a = Shape::new(2, 3, 4, 5);
        assert_eq!(a.broadcast(&Shape::new(2, 3, 1, 1), "t").unwrap(), a);
        assert_eq!(Shape::new(2, 1, 4, 5).broadcast(&a, "t").unwrap(), a);
        let err = a.broadcast(&Shape::new(2, 2, 4, 5), "t").unwrap_err();
        assert!(err.to_string().contains("channel"), "{err}");
    }

    #[test]
    fn rot90_four_times_is_identity() {
        let t = Tensor4::from_fn(Shape::new(1, 2, 3, 5), |_, c, y, x| (c * 100 + y * 10 + x) as f64);
        let r = t.rot90();
        assert_eq!(r.shape(), Shape::new(1, 2, 5, 3));
        // top-left of the rotated plane is the bottom-left of the source
        assert_eq!(r.at(0, 0, 0, 0), t.at(0, 0, 2, 0));
        assert_eq!(r.rot90().rot90().rot90(), t);
    }

    #[test]
    fn compensated_sum_is_exact_on_cancellation() {
        assert_eq!(neumaier_sum([1e16, 1.0, -1e16]), 1.0);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor4::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
    }
}
