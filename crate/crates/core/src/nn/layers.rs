use crate::error::{Error, Result};
use crate::ops::out_dim;
use crate::rng::he_uniform;
use crate::tape::{ConvGeom, Var};
use crate::tensor::{Shape, Tensor4};

use super::params::{Builder, Ctx, ParamId};

/// Parameter and multiply-accumulate totals for one labelled unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub label: String,
    pub params: u64,
    pub macs: u64,
}

/// Accumulates per-block costs while walking a model at a given input size.
#[derive(Debug, Clone, Default)]
pub struct Accounting {
    pub rows: Vec<CostRow>,
}

impl Accounting {
    pub fn add(&mut self, label: &str, params: u64, macs: u64) {
        if let Some(r) = self.rows.iter_mut().find(|r| r.label == label) {
            r.params += params;
            r.macs += macs;
        } else {
            self.rows.push(CostRow {
                label: label.to_string(),
                params,
                macs,
            });
        }
    }

    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: (usize, usize),
    pub geom: ConvGeom,
}

impl Conv2d {
    /// He-uniform weights, zero bias.
    pub fn new(
        b: &mut Builder,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        geom: ConvGeom,
        bias: bool,
    ) -> Result<Self> {
        let (kh, kw) = kernel;
        let mut s = b.scope(name);
        let fan_in = c_in * kh * kw;
        let values = he_uniform(s.prng(), fan_in, c_out * fan_in)?;
        let weight = s.add("weight", Tensor4::from_vec(Shape::new(c_out, c_in, kh, kw), values)?)?;
        let bias = if bias {
            Some(s.add("bias", Tensor4::zeros(Shape::new(1, c_out, 1, 1)))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            geom,
        })
    }

    /// Size-preserving convolution with stride 1.
    pub fn same(b: &mut Builder, name: &str, c_in: usize, c_out: usize, kernel: (usize, usize)) -> Result<Self> {
        Self::new(b, name, c_in, c_out, kernel, ConvGeom::same(kernel.0, kernel.1), true)
    }

    pub fn pointwise(b: &mut Builder, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Self::same(b, name, c_in, c_out, (1, 1))
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let bias = self.bias.map(|id| ctx.param(id));
        ctx.tape.conv2d(x, w, bias, self.geom)
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let g = &self.geom;
        let oh = out_dim(h, self.kernel.0, g.pad.0, g.stride, g.dilation);
        let ow = out_dim(w, self.kernel.1, g.pad.1, g.stride, g.dilation);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::Shape {
                op: "conv2d",
                detail: format!(
                    "kernel {}x{} does not fit a {h}x{w} input",
                    self.kernel.0, self.kernel.1
                ),
            }),
        }
    }

    pub fn weight_count(&self) -> u64 {
        (self.c_out * self.c_in * self.kernel.0 * self.kernel.1) as u64
    }

    pub fn param_count(&self) -> u64 {
        self.weight_count() + if self.bias.is_some() { self.c_out as u64 } else { 0 }
    }

    /// Adds this layer's cost at input size `h`x`w` and returns the output size.
    pub fn account(&self, acc: &mut Accounting, label: &str, h: usize, w: usize) -> Result<(usize, usize)> {
        let (oh, ow) = self.out_hw(h, w)?;
        acc.add(label, self.param_count(), self.weight_count() * (oh * ow) as u64);
        Ok((oh, ow))
    }
}

/// A chain of convolutions, each optionally followed by relu.
#[derive(Debug, Clone)]
pub struct ConvStack {
    pub layers: Vec<(Conv2d, bool)>,
}

/// Layer description for [`ConvStack::build`]: output channels, kernel,
/// geometry and whether relu follows.
pub type LayerSpec = (usize, (usize, usize), ConvGeom, bool);

impl ConvStack {
    pub fn build(b: &mut Builder, name: &str, c_in: usize, specs: &[LayerSpec]) -> Result<Self> {
        Self::build_with(b, name, c_in, specs, true)
    }

    /// As [`ConvStack::build`], with the last layer's bias optional.
    pub fn build_with(b: &mut Builder, name: &str, c_in: usize, specs: &[LayerSpec], last_bias: bool) -> Result<Self> {
        let mut s = b.scope(name);
        let mut layers = Vec::with_capacity(specs.len());
        let mut c = c_in;
        for (i, &(c_out, kernel, geom, relu)) in specs.iter().enumerate() {
            let bias = last_bias || i + 1 < specs.len();
            layers.push((Conv2d::new(&mut s, &i.to_string(), c, c_out, kernel, geom, bias)?, relu));
            c = c_out;
        }
        Ok(Self { layers })
    }

    /// `n` size-preserving `kernel` convolutions at constant width, relu after
    /// each except possibly the last.
    pub fn uniform(
        b: &mut Builder,
        name: &str,
        c: usize,
        kernel: (usize, usize),
        n: usize,
        relu_last: bool,
    ) -> Result<Self> {
        let geom = ConvGeom::same(kernel.0, kernel.1);
        let specs: Vec<LayerSpec> = (0..n).map(|i| (c, kernel, geom, i + 1 < n || relu_last)).collect();
        Self::build(b, name, c, &specs)
    }

    pub fn forward(&self, ctx: &mut Ctx, mut x: Var) -> Result<Var> {
        for (conv, relu) in &self.layers {
            x = conv.forward(ctx, x)?;
            if *relu {
                x = ctx.tape.relu(x);
            }
        }
        Ok(x)
    }

    pub fn c_out(&self) -> usize {
        self.layers.last().map_or(0, |(c, _)| c.c_out)
    }

    pub fn account(&self, acc: &mut Accounting, label: &str, mut h: usize, mut w: usize) -> Result<(usize, usize)> {
        for (conv, _) in &self.layers {
            (h, w) = conv.account(acc, label, h, w)?;
        }
        Ok((h, w))
    }
}
