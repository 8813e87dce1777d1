use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::loss::{total_loss, LossConfig, LossReport};
use crate::ops::sigmoid;
use crate::optim::Optimizer;
use crate::rng::Prng;
use crate::tape::Var;
use crate::tensor::Tensor4;

use super::blocks::{Encoder, EncoderOutputs, Era, Msfa, Odc, Rfb, Sra};
use super::checkpoint::{read_checkpoint, write_checkpoint};
use super::layers::{Accounting, Conv2d};
use super::params::{Builder, Ctx, ParamStore};

/// Which optional blocks are present. A disabled block is replaced by a
/// cheap bypass so both output heads always exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation {
    pub use_odc: bool,
    pub use_msfa: bool,
    pub use_era: bool,
    pub use_sra: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self::ALL
    }
}

impl Ablation {
    pub const ALL: Ablation = Ablation {
        use_odc: true,
        use_msfa: true,
        use_era: true,
        use_sra: true,
    };

    /// The ablation ladder: `a` is the full model, each later row removes
    /// one more block, `e` is the bare backbone.
    pub fn row(label: char) -> Option<Ablation> {
        let n = match label.to_ascii_lowercase() {
            'a' => 0,
            'b' => 1,
            'c' => 2,
            'd' => 3,
            'e' => 4,
            _ => return None,
        };
        Some(Ablation {
            use_odc: n < 1,
            use_sra: n < 2,
            use_era: n < 3,
            use_msfa: n < 4,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub widths: [usize; 4],
    pub channels: usize,
    pub ablation: Ablation,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            widths: Encoder::WIDTHS,
            channels: 32,
            ablation: Ablation::ALL,
        }
    }
}

/// Every intermediate of one forward pass. Maps belonging to disabled
/// blocks are `None`.
#[derive(Debug, Clone, Copy)]
pub struct NetTrace {
    pub encoder: EncoderOutputs,
    pub f1: Option<Var>,
    pub f3: Option<Var>,
    pub f4: Var,
    pub q: Var,
    pub c: Var,
    pub z: Var,
    pub p: Var,
    pub z_full: Var,
    pub p_full: Var,
}

#[derive(Debug, Clone)]
pub struct OdcSaNet {
    pub params: ParamStore,
    pub config: NetConfig,
    pub encoder: Encoder,
    pub rfb1: Option<Rfb>,
    pub rfb3: Option<Rfb>,
    pub rfb4: Rfb,
    pub odc: Option<Odc>,
    pub msfa: Option<Msfa>,
    pub msfa_bypass: Option<Conv2d>,
    pub era: Option<Era>,
    pub era_bypass: Option<Conv2d>,
    pub sra: Option<Sra>,
}

impl OdcSaNet {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut prng = Prng::new(seed);
        let mut b = Builder::new(&mut params, &mut prng);
        let c = config.channels;
        let a = config.ablation;
        let [w1, _, w3, w4] = config.widths;

        let encoder = Encoder::new(&mut b, config.widths)?;
        let rfb1 = a.use_sra.then(|| Rfb::new(&mut b, "rfb1", w1, c)).transpose()?;
        let rfb3 = a.use_msfa.then(|| Rfb::new(&mut b, "rfb3", w3, c)).transpose()?;
        let rfb4 = Rfb::new(&mut b, "rfb4", w4, c)?;
        let odc = a.use_odc.then(|| Odc::new(&mut b, c)).transpose()?;
        let msfa = a.use_msfa.then(|| Msfa::new(&mut b, c)).transpose()?;
        let mut bypass = b.scope("bypass");
        let msfa_bypass = (!a.use_msfa)
            .then(|| Conv2d::pointwise(&mut bypass, "msfa", c, c))
            .transpose()?;
        let era_bypass = (!a.use_era)
            .then(|| Conv2d::pointwise(&mut bypass, "era_head", c, 1))
            .transpose()?;
        let era = a.use_era.then(|| Era::new(&mut b, c)).transpose()?;
        let sra = a.use_sra.then(|| Sra::new(&mut b, c)).transpose()?;

        Ok(Self {
            params,
            config,
            encoder,
            rfb1,
            rfb3,
            rfb4,
            odc,
            msfa,
            msfa_bypass,
            era,
            era_bypass,
            sra,
        })
    }

    pub fn ablation(&self) -> Ablation {
        self.config.ablation
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn forward(&self, ctx: &mut Ctx, image: Var) -> Result<NetTrace> {
        let s = ctx.tape.shape(image);
        let enc = self.encoder.forward(ctx, image)?;
        let f4 = self.rfb4.forward(ctx, enc.x4)?;
        let q = match &self.odc {
            Some(odc) => odc.forward(ctx, f4)?.q,
            None => f4,
        };
        let (mut f1, mut f3) = (None, None);
        let c = match (&self.msfa, &self.rfb3, &self.msfa_bypass) {
            (Some(msfa), Some(rfb3), _) => {
                let f = rfb3.forward(ctx, enc.x3)?;
                f3 = Some(f);
                msfa.forward(ctx, q, f)?.out
            }
            (_, _, Some(pw)) => {
                let qs = ctx.tape.shape(q);
                let up = ctx.tape.bilinear_resize(q, 2 * qs.h, 2 * qs.w)?;
                pw.forward(ctx, up)?
            }
            _ => unreachable!("constructor provides msfa or its bypass"),
        };
        let z = match (&self.era, &self.era_bypass) {
            (Some(era), _) => era.forward(ctx, c)?,
            (None, Some(pw)) => pw.forward(ctx, c)?,
            _ => unreachable!("constructor provides era or its bypass"),
        };
        let p = match (&self.sra, &self.rfb1) {
            (Some(sra), Some(rfb1)) => {
                let f = rfb1.forward(ctx, enc.x1)?;
                f1 = Some(f);
                sra.forward(ctx, z, f)?.p
            }
            _ => z,
        };
        let z_full = ctx.tape.bilinear_resize(z, s.h, s.w)?;
        let p_full = ctx.tape.bilinear_resize(p, s.h, s.w)?;
        Ok(NetTrace {
            encoder: enc,
            f1,
            f3,
            f4,
            q,
            c,
            z,
            p,
            z_full,
            p_full,
        })
    }

    /// Foreground probabilities `sigmoid(p̂)` at input resolution.
    pub fn predict(&self, images: &Tensor4) -> Result<Tensor4> {
        let mut ctx = Ctx::new(&self.params);
        let x = ctx.input(images.clone());
        let t = self.forward(&mut ctx, x)?;
        Ok(ctx.value(t.p_full).map(sigmoid))
    }

    /// One optimisation step on a batch. `masks` is (n, 1, H, W) binary.
    pub fn train_step(
        &mut self,
        opt: &mut dyn Optimizer,
        images: &Tensor4,
        masks: &Tensor4,
        lr: f64,
        loss_cfg: &LossConfig,
    ) -> Result<LossReport> {
        let (is, ms) = (images.shape(), masks.shape());
        if is.n != ms.n || is.h != ms.h || is.w != ms.w || ms.c != 1 {
            return shape_err("train_step", format!("images {is} vs masks {ms}"));
        }
        let (report, grads) = {
            let mut ctx = Ctx::new(&self.params);
            let x = ctx.input(images.clone());
            let t = self.forward(&mut ctx, x)?;
            let (loss, report) = total_loss(&mut ctx.tape, t.z_full, t.p_full, masks, loss_cfg)?;
            let mut g = ctx.tape.backward(loss)?;
            (report, ctx.param_grads(&mut g))
        };
        opt.step(self.params.tensors_mut(), &grads, lr)?;
        Ok(report)
    }

    /// Exact parameter and multiply-accumulate counts per block for an
    /// `h`x`w` input.
    pub fn accounting(&self, h: usize, w: usize) -> Result<Accounting> {
        if !h.is_multiple_of(32) || !w.is_multiple_of(32) || h == 0 || w == 0 {
            return shape_err("accounting", format!("input {h}x{w} is not a multiple of 32"));
        }
        let mut acc = Accounting::default();
        let [d1, _, d3, d4] = self.encoder.account(&mut acc, h, w)?;
        if let Some(r) = &self.rfb1 {
            r.account(&mut acc, "rfb1", d1.0, d1.1)?;
        }
        if let Some(r) = &self.rfb3 {
            r.account(&mut acc, "rfb3", d3.0, d3.1)?;
        }
        self.rfb4.account(&mut acc, "rfb4", d4.0, d4.1)?;
        if let Some(o) = &self.odc {
            o.account(&mut acc, d4.0, d4.1)?;
        }
        if let Some(m) = &self.msfa {
            m.account(&mut acc, d4.0, d4.1)?;
        }
        if let Some(pw) = &self.msfa_bypass {
            pw.account(&mut acc, "msfa_bypass", d3.0, d3.1)?;
        }
        if let Some(e) = &self.era {
            e.account(&mut acc, d3.0, d3.1)?;
        }
        if let Some(pw) = &self.era_bypass {
            pw.account(&mut acc, "era_bypass", d3.0, d3.1)?;
        }
        if let Some(s) = &self.sra {
            s.account(&mut acc, d1.0, d1.1)?;
        }
        Ok(acc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        write_checkpoint(&self.params, &mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Rebuilds the architecture from the tensor names and shapes stored in
    /// the checkpoint, then loads the values.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let entries = read_checkpoint(&mut bytes.as_slice())?;
        let has = |prefix: &str| entries.iter().any(|(n, _)| n.starts_with(prefix));
        let dim0 = |name: &str| -> Result<usize> {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.shape().n)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let mut widths = [0; 4];
        for (i, w) in widths.iter_mut().enumerate() {
            *w = dim0(&format!("encoder.stage{}.0.weight", i + 1))?;
        }
        let config = NetConfig {
            widths,
            channels: dim0("rfb4.conv_cat.weight")?,
            ablation: Ablation {
                use_odc: has("odc."),
                use_msfa: has("msfa."),
                use_era: has("era."),
                use_sra: has("sra."),
            },
        };
        let mut net = Self::new(config, 0)?;
        if entries.len() != net.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, architecture needs {}",
                entries.len(),
                net.params.len()
            )));
        }
        for (name, t) in entries {
            let id = net
                .params
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
            let dst = net.params.get_mut(id);
            if dst.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: stored {} but expected {}",
                    t.shape(),
                    dst.shape()
                )));
            }
            *dst = t;
        }
        Ok(net)
    }
}
