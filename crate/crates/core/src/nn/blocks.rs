use crate::error::{shape_err, Result};
use crate::tape::{ConvGeom, Var};

use super::layers::{Accounting, Conv2d, ConvStack, LayerSpec};
use super::params::{Builder, Ctx};

fn spatial(ctx: &Ctx, v: Var) -> (usize, usize) {
    let s = ctx.tape.shape(v);
    (s.h, s.w)
}

fn same(k: (usize, usize)) -> ConvGeom {
    ConvGeom::same(k.0, k.1)
}

/// Strided stand-in backbone: four stages of two 3x3 convs with relu.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub stages: Vec<ConvStack>,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderOutputs {
    pub x1: Var,
    pub x2: Var,
    pub x3: Var,
    pub x4: Var,
}

impl Encoder {
    pub const WIDTHS: [usize; 4] = [64, 128, 320, 512];

    pub fn new(b: &mut Builder, widths: [usize; 4]) -> Result<Self> {
        let mut s = b.scope("encoder");
        let s2 = ConvGeom::new(2, (1, 1), 1);
        let s1 = same((3, 3));
        let mut c = 3;
        let mut stages = Vec::new();
        for (i, &w) in widths.iter().enumerate() {
            let second = if i == 0 { s2 } else { s1 };
            let specs: [LayerSpec; 2] = [(w, (3, 3), s2, true), (w, (3, 3), second, true)];
            stages.push(ConvStack::build(&mut s, &format!("stage{}", i + 1), c, &specs)?);
            c = w;
        }
        Ok(Self { stages })
    }

    pub fn forward(&self, ctx: &mut Ctx, image: Var) -> Result<EncoderOutputs> {
        let s = ctx.tape.shape(image);
        if !s.h.is_multiple_of(32) || !s.w.is_multiple_of(32) || s.h == 0 || s.w == 0 {
            return shape_err("encoder", format!("input {}x{} is not a multiple of 32", s.h, s.w));
        }
        if s.c != 3 {
            return shape_err("encoder", format!("expected 3 input channels, got {}", s.c));
        }
        let mut outs = Vec::with_capacity(4);
        let mut x = image;
        for stage in &self.stages {
            x = stage.forward(ctx, x)?;
            outs.push(x);
        }
        Ok(EncoderOutputs {
            x1: outs[0],
            x2: outs[1],
            x3: outs[2],
            x4: outs[3],
        })
    }

    pub fn account(&self, acc: &mut Accounting, mut h: usize, mut w: usize) -> Result<[(usize, usize); 4]> {
        let mut dims = [(0, 0); 4];
        for (i, stage) in self.stages.iter().enumerate() {
            (h, w) = stage.account(acc, "encoder", h, w)?;
            dims[i] = (h, w);
        }
        Ok(dims)
    }
}

/// Receptive field block: four dilated branches fused by a 3x3 conv, plus a
/// pointwise shortcut.
#[derive(Debug, Clone)]
pub struct Rfb {
    pub branches: Vec<ConvStack>,
    pub conv_cat: Conv2d,
    pub shortcut: Conv2d,
}

impl Rfb {
    pub fn new(b: &mut Builder, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        let mut s = b.scope(name);
        let pw: LayerSpec = (c_out, (1, 1), same((1, 1)), false);
        let mut branches = vec![ConvStack::build(&mut s, "branch0", c_in, &[pw])?];
        for (i, k) in [3usize, 5, 7].into_iter().enumerate() {
            let specs: [LayerSpec; 4] = [
                pw,
                (c_out, (1, k), same((1, k)), false),
                (c_out, (k, 1), same((k, 1)), false),
                (c_out, (3, 3), ConvGeom::new(1, (k, k), k), false),
            ];
            branches.push(ConvStack::build(&mut s, &format!("branch{}", i + 1), c_in, &specs)?);
        }
        let conv_cat = Conv2d::same(&mut s, "conv_cat", 4 * c_out, c_out, (3, 3))?;
        let shortcut = Conv2d::pointwise(&mut s, "shortcut", c_in, c_out)?;
        Ok(Self {
            branches,
            conv_cat,
            shortcut,
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let parts = self
            .branches
            .iter()
            .map(|br| br.forward(ctx, x))
            .collect::<Result<Vec<_>>>()?;
        let cat = ctx.tape.concat_channels(&parts)?;
        let fused = self.conv_cat.forward(ctx, cat)?;
        let short = self.shortcut.forward(ctx, x)?;
        let sum = ctx.tape.add(fused, short)?;
        Ok(ctx.tape.relu(sum))
    }

    pub fn account(&self, acc: &mut Accounting, label: &str, h: usize, w: usize) -> Result<(usize, usize)> {
        for br in &self.branches {
            br.account(acc, label, h, w)?;
        }
        self.shortcut.account(acc, label, h, w)?;
        self.conv_cat.account(acc, label, h, w)
    }
}

/// Orthogonal direction block: row (1x3) and column (3x1) branches whose
/// outputs are linearly recombined, then merged with the input.
#[derive(Debug, Clone)]
pub struct Odc {
    pub r_branch: ConvStack,
    pub c_branch: ConvStack,
    pub combine_h: Conv2d,
    pub combine_q: Conv2d,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct OdcTrace {
    pub r: Var,
    pub c: Var,
    pub h: Var,
    pub q: Var,
}

impl Odc {
    pub fn new(b: &mut Builder, c: usize) -> Result<Self> {
        let mut s = b.scope("odc");
        Ok(Self {
            r_branch: ConvStack::uniform(&mut s, "r_branch", c, (1, 3), 3, true)?,
            c_branch: ConvStack::uniform(&mut s, "c_branch", c, (3, 1), 3, true)?,
            combine_h: Conv2d::pointwise(&mut s, "combine_h", 2 * c, 4 * c)?,
            combine_q: Conv2d::pointwise(&mut s, "combine_q", 5 * c, c)?,
            channels: c,
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, f4: Var) -> Result<OdcTrace> {
        let got = ctx.tape.shape(f4).c;
        if got != self.channels {
            return shape_err("odc", format!("expected {} channels, got {got}", self.channels));
        }
        let r = self.r_branch.forward(ctx, f4)?;
        let c = self.c_branch.forward(ctx, f4)?;
        let rc = ctx.tape.concat_channels(&[r, c])?;
        let h = self.combine_h.forward(ctx, rc)?;
        let hf = ctx.tape.concat_channels(&[h, f4])?;
        let q = self.combine_q.forward(ctx, hf)?;
        Ok(OdcTrace { r, c, h, q })
    }

    pub fn account(&self, acc: &mut Accounting, h: usize, w: usize) -> Result<(usize, usize)> {
        self.r_branch.account(acc, "odc", h, w)?;
        self.c_branch.account(acc, "odc", h, w)?;
        self.combine_h.account(acc, "odc", h, w)?;
        self.combine_q.account(acc, "odc", h, w)
    }
}

/// Weight counts of the two rectangular branches against a dense three-layer
/// 3x3 stack of the same width (biases excluded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdcComparison {
    pub channels: usize,
    pub rect_weights: u64,
    pub dense_weights: u64,
}

impl OdcComparison {
    pub fn for_channels(c: usize) -> Self {
        let c2 = (c * c) as u64;
        Self {
            channels: c,
            rect_weights: 2 * 3 * 3 * c2,
            dense_weights: 3 * 9 * c2,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.rect_weights as f64 / self.dense_weights as f64
    }
}

/// Dual-path spatial enhancement: a 3x3 conv path plus a pooled,
/// re-upsampled path.
#[derive(Debug, Clone)]
pub struct S2e {
    pub path1: ConvStack,
}

impl S2e {
    pub fn new(b: &mut Builder, c: usize) -> Result<Self> {
        let mut s = b.scope("s2e");
        Ok(Self {
            path1: ConvStack::uniform(&mut s, "path1", c, (3, 3), 3, false)?,
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let (h, w) = spatial(ctx, x);
        let local = self.path1.forward(ctx, x)?;
        let pooled = ctx.tape.avg_pool2x2(x)?;
        let up = ctx.tape.bilinear_resize(pooled, h, w)?;
        ctx.tape.add(local, up)
    }

    pub fn account(&self, acc: &mut Accounting, label: &str, h: usize, w: usize) -> Result<(usize, usize)> {
        self.path1.account(acc, label, h, w)
    }
}

/// Channel attention from a pointwise path and a globally pooled path.
#[derive(Debug, Clone)]
pub struct Csa {
    pub local: Conv2d,
    pub global: Conv2d,
}

impl Csa {
    pub fn new(b: &mut Builder, c: usize) -> Result<Self> {
        let mut s = b.scope("csa");
        Ok(Self {
            local: Conv2d::pointwise(&mut s, "local", c, c)?,
            global: Conv2d::pointwise(&mut s, "global", c, c)?,
        })
    }

    /// Returns the attention map `W` and `D = W * v`.
    pub fn forward(&self, ctx: &mut Ctx, s: Var, v: Var) -> Result<(Var, Var)> {
        let (ss, vs) = (ctx.tape.shape(s), ctx.tape.shape(v));
        if ss != vs {
            return shape_err("csa", format!("attention source {ss} vs value map {vs}"));
        }
        let l = self.local.forward(ctx, s)?;
        let l = ctx.tape.relu(l);
        let g = ctx.tape.global_avg_pool(s)?;
        let g = self.global.forward(ctx, g)?;
        let g = ctx.tape.relu(g);
        let sum = ctx.tape.add(l, g)?;
        let w = ctx.tape.sigmoid(sum);
        let d = ctx.tape.mul(w, v)?;
        Ok((w, d))
    }

    pub fn account(&self, acc: &mut Accounting, label: &str, h: usize, w: usize) -> Result<(usize, usize)> {
        self.global.account(acc, label, 1, 1)?;
        self.local.account(acc, label, h, w)
    }
}

/// Cross-level fusion with a residual conv block and softmax pixel weights.
#[derive(Debug, Clone)]
pub struct Rfa {
    pub pw_up: Conv2d,
    pub conv_block: ConvStack,
}

#[derive(Debug, Clone, Copy)]
pub struct RfaTrace {
    pub u: Var,
    pub e: Var,
    pub out: Var,
}

impl Rfa {
    pub fn new(b: &mut Builder, c: usize) -> Result<Self> {
        let mut s = b.scope("rfa");
        let k3: LayerSpec = (c, (3, 3), same((3, 3)), true);
        let specs = [
            (c, (1, 1), same((1, 1)), true),
            k3,
            k3,
            k3,
            (c, (1, 1), same((1, 1)), false),
        ];
        Ok(Self {
            pw_up: Conv2d::pointwise(&mut s, "pw_up", c, c)?,
            // a per-channel bias right before the spatial softmax cancels out
            conv_block: ConvStack::build_with(&mut s, "conv_block", c, &specs, false)?,
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, d: Var, f3: Var) -> Result<RfaTrace> {
        let (ds, fs) = (ctx.tape.shape(d), ctx.tape.shape(f3));
        if fs.h != 2 * ds.h || fs.w != 2 * ds.w {
            return shape_err("rfa", format!("guide {fs} must be twice the spatial size of {ds}"));
        }
        let up = ctx.tape.bilinear_resize(d, fs.h, fs.w)?;
        let u = self.pw_up.forward(ctx, up)?;
        let f = ctx.tape.add(u, f3)?;
        let f = ctx.tape.relu(f);
        let g = self.conv_block.forward(ctx, f)?;
        let g = ctx.tape.add(g, f)?;
        let e = ctx.tape.softmax_spatial(g)?;
        let e = ctx.tape.affine(e, (fs.h * fs.w) as f64, 0.0);
        let out = ctx.tape.mul(e, u)?;
        Ok(RfaTrace { u, e, out })
    }

    pub fn account(&self, acc: &mut Accounting, label: &str, h: usize, w: usize) -> Result<(usize, usize)> {
        self.pw_up.account(acc, label, h, w)?;
        self.conv_block.account(acc, label, h, w)
    }
}

/// S2E, CSA and RFA in sequence.
#[derive(Debug, Clone)]
pub struct Msfa {
    pub s2e: S2e,
    pub csa: Csa,
    pub rfa: Rfa,
}

#[derive(Debug, Clone, Copy)]
pub struct MsfaTrace {
    pub s: Var,
    pub w: Var,
    pub d: Var,
    pub e: Var,
    pub out: Var,
}

impl Msfa {
    pub fn new(b: &mut Builder, c: usize) -> Result<Self> {
        let mut s = b.scope("msfa");
        Ok(Self {
            s2e: S2e::new(&mut s, c)?,
            csa: Csa::new(&mut s, c)?,
            rfa: Rfa::new(&mut s, c)?,
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, q: Var, f3: Var) -> Result<MsfaTrace> {
        let s = self.s2e.forward(ctx, q)?;
        let (w, d) = self.csa.forward(ctx, s, q)?;
        let r = self.rfa.forward(ctx, d, f3)?;
        Ok(MsfaTrace {
            s,
            w,
            d,
            e: r.e,
            out: r.out,
        })
    }

    pub fn account(&self, acc: &mut Accounting, h: usize, w: usize) -> Result<(usize, usize)> {
        self.s2e.account(acc, "msfa", h, w)?;
        self.csa.account(acc, "msfa", h, w)?;
        self.rfa.account(acc, "msfa", 2 * h, 2 * w)
    }
}

/// Channel gate from pooled descriptors through a shared bottleneck, then a
/// spatial gate from channel statistics.
#[derive(Debug, Clone)]
pub struct Cbam {
    pub mlp_down: Conv2d,
    pub mlp_up: Conv2d,
    pub spatial: Conv2d,
}

#[derive(Debug, Clone, Copy)]
pub struct CbamTrace {
    pub channel_gate: Var,
    pub spatial_gate: Var,
    pub out: Var,
}

impl Cbam {
    pub const REDUCTION: usize = 8;

    pub fn new(b: &mut Builder, c: usize) -> Result<Self> {
        let mut s = b.scope("cbam");
        let mid = (c / Self::REDUCTION).max(1);
        let pw = same((1, 1));
        Ok(Self {
            mlp_down: Conv2d::new(&mut s, "mlp_down", c, mid, (1, 1), pw, false)?,
            mlp_up: Conv2d::new(&mut s, "mlp_up", mid, c, (1, 1), pw, false)?,
            spatial: Conv2d::new(&mut s, "spatial", 2, 1, (7, 7), same((7, 7)), false)?,
        })
    }

    fn mlp(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let h = self.mlp_down.forward(ctx, x)?;
        let h = ctx.tape.relu(h);
        self.mlp_up.forward(ctx, h)
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<CbamTrace> {
        let avg = ctx.tape.global_avg_pool(x)?;
        let max = ctx.tape.global_max_pool(x)?;
        let a = self.mlp(ctx, avg)?;
        let m = self.mlp(ctx, max)?;
        let logits = ctx.tape.add(a, m)?;
        let channel_gate = ctx.tape.sigmoid(logits);
        let x1 = ctx.tape.mul(x, channel_gate)?;
        let mean = ctx.tape.channel_mean(x1)?;
        let cmax = ctx.tape.channel_max(x1)?;
        let stats = ctx.tape.concat_channels(&[mean, cmax])?;
        let sl = self.spatial.forward(ctx, stats)?;
        let spatial_gate = ctx.tape.sigmoid(sl);
        let out = ctx.tape.mul(x1, spatial_gate)?;
        Ok(CbamTrace {
            channel_gate,
            spatial_gate,
            out,
        })
    }

    pub fn account(&self, acc: &mut Accounting, label: &str, h: usize, w: usize) -> Result<(usize, usize)> {
        // the bottleneck runs on both pooled descriptors
        let (down, up) = (&self.mlp_down, &self.mlp_up);
        acc.add(
            label,
            down.param_count() + up.param_count(),
            2 * (down.weight_count() + up.weight_count()),
        );
        self.spatial.account(acc, label, h, w)
    }
}

/// S2E, CSA (attending to itself) and CBAM, then a one-channel head.
#[derive(Debug, Clone)]
pub struct Era {
    pub s2e: S2e,
    pub csa: Csa,
    pub cbam: Cbam,
    pub head: Conv2d,
}

impl Era {
    pub fn new(b: &mut Builder, c: usize) -> Result<Self> {
        let mut s = b.scope("era");
        Ok(Self {
            s2e: S2e::new(&mut s, c)?,
            csa: Csa::new(&mut s, c)?,
            cbam: Cbam::new(&mut s, c)?,
            head: Conv2d::pointwise(&mut s, "head", c, 1)?,
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, c_in: Var) -> Result<Var> {
        let t = self.s2e.forward(ctx, c_in)?;
        let (_, t2) = self.csa.forward(ctx, t, t)?;
        let t3 = self.cbam.forward(ctx, t2)?;
        self.head.forward(ctx, t3.out)
    }

    pub fn account(&self, acc: &mut Accounting, h: usize, w: usize) -> Result<(usize, usize)> {
        self.s2e.account(acc, "era", h, w)?;
        self.csa.account(acc, "era", h, w)?;
        self.cbam.account(acc, "era", h, w)?;
        self.head.account(acc, "era", h, w)
    }
}

/// Reverse attention on the shallowest features.
#[derive(Debug, Clone)]
pub struct Sra {
    pub refine: ConvStack,
}

#[derive(Debug, Clone, Copy)]
pub struct SraTrace {
    pub z_up4: Var,
    pub reverse: Var,
    pub edge: Var,
    pub p: Var,
}

impl Sra {
    pub fn new(b: &mut Builder, c: usize) -> Result<Self> {
        let mut s = b.scope("sra");
        let k3: LayerSpec = (c, (3, 3), same((3, 3)), true);
        Ok(Self {
            refine: ConvStack::build(&mut s, "refine", c, &[k3, k3, (1, (1, 1), same((1, 1)), false)])?,
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, z: Var, f1: Var) -> Result<SraTrace> {
        let (zs, fs) = (ctx.tape.shape(z), ctx.tape.shape(f1));
        if fs.h != 4 * zs.h || fs.w != 4 * zs.w {
            return shape_err(
                "sra",
                format!("features {fs} must be four times the spatial size of {zs}"),
            );
        }
        let z_up4 = ctx.tape.bilinear_resize(z, fs.h, fs.w)?;
        let sig = ctx.tape.sigmoid(z_up4);
        let reverse = ctx.tape.affine(sig, -1.0, 1.0);
        let fr = ctx.tape.mul(reverse, f1)?;
        let edge = self.refine.forward(ctx, fr)?;
        let p = ctx.tape.add(z_up4, edge)?;
        Ok(SraTrace {
            z_up4,
            reverse,
            edge,
            p,
        })
    }

    pub fn account(&self, acc: &mut Accounting, h: usize, w: usize) -> Result<(usize, usize)> {
        self.refine.account(acc, "sra", h, w)
    }
}
