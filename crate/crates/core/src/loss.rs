//! Boundary-weighted BCE + IoU segmentation loss with deep supervision over
//! the coarse and the refined head.

use crate::error::{shape_err, Error, Result};
use crate::ops::elementwise::sigmoid;
use crate::tape::{Op, Tape, Var};
use crate::tensor::{neumaier_sum, Tensor4};

const P_MIN: f64 = 1e-7;
const P_MAX: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Amplitude of the boundary emphasis; weights lie in [1, 1 + amp].
    pub weight_amp: f64,
    /// Side of the square averaging window (odd).
    pub weight_window: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weight_amp: 5.0,
            weight_window: 31,
        }
    }
}

fn check_binary(g: &Tensor4, op: &'static str) -> Result<()> {
    if let Some(v) = g.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!("{op}: mask must be binary, found {v}")));
    }
    Ok(())
}

/// w = 1 + amp * |boxmean(G) - G|, where boxmean is a window x window mean
/// with zero padding (the divisor is always window^2).
pub fn weight_map(g: &Tensor4, cfg: &LossConfig) -> Result<Tensor4> {
    check_binary(g, "weight_map")?;
    if cfg.weight_window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "weight_map: window {} must be odd",
            cfg.weight_window
        )));
    }
    let s = g.shape();
    let r = (cfg.weight_window / 2) as isize;
    let area = (cfg.weight_window * cfg.weight_window) as f64;
    let mut out = Tensor4::zeros(s);
    let (h, w) = (s.h, s.w);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = g.plane(n, c);
            // integral image with a zero row/column in front; entries are
            // integer counts so the box sums are exact
            let mut integ = vec![0.0f64; (h + 1) * (w + 1)];
            for y in 0..h {
                let mut row = 0.0;
                for x in 0..w {
                    row += src[y * w + x];
                    integ[(y + 1) * (w + 1) + x + 1] = integ[y * (w + 1) + x + 1] + row;
                }
            }
            let dst = out.plane_mut(n, c);
            for y in 0..h {
                let y0 = (y as isize - r).clamp(0, h as isize) as usize;
                let y1 = (y as isize + r + 1).clamp(0, h as isize) as usize;
                for x in 0..w {
                    let x0 = (x as isize - r).clamp(0, w as isize) as usize;
                    let x1 = (x as isize + r + 1).clamp(0, w as isize) as usize;
                    let box_sum = integ[y1 * (w + 1) + x1] - integ[y0 * (w + 1) + x1] - integ[y1 * (w + 1) + x0]
                        + integ[y0 * (w + 1) + x0];
                    let mean = box_sum / area;
                    dst[y * w + x] = 1.0 + cfg.weight_amp * (mean - src[y * w + x]).abs();
                }
            }
        }
    }
    Ok(out)
}

fn check_shapes(logits: &Tensor4, target: &Tensor4, weight: &Tensor4, op: &'static str) -> Result<()> {
    if logits.shape() != target.shape() || logits.shape() != weight.shape() {
        return shape_err(
            op,
            format!(
                "logits {}, target {}, weight {} must be equal",
                logits.shape(),
                target.shape(),
                weight.shape()
            ),
        );
    }
    Ok(())
}

fn clamped_prob(z: f64) -> f64 {
    sigmoid(z).clamp(P_MIN, P_MAX)
}

/// Per image sum(w * bce) / sum(w), averaged over the batch.
pub fn weighted_bce(logits: &Tensor4, target: &Tensor4, weight: &Tensor4) -> Result<f64> {
    check_shapes(logits, target, weight, "weighted_bce")?;
    let n = logits.shape().n;
    let per_image = (0..n).map(|i| {
        let (z, g, w) = (logits.item(i), target.item(i), weight.item(i));
        let num = neumaier_sum(z.iter().zip(g).zip(w).map(|((&z, &g), &w)| {
            let p = clamped_prob(z);
            -w * (g * p.ln() + (1.0 - g) * (1.0 - p).ln())
        }));
        num / neumaier_sum(w.iter().copied())
    });
    Ok(neumaier_sum(per_image) / n as f64)
}

pub(crate) fn weighted_bce_backward(logits: &Tensor4, target: &Tensor4, weight: &Tensor4, upstream: f64) -> Tensor4 {
    let s = logits.shape();
    let mut dz = Tensor4::zeros(s);
    let scale = upstream / s.n as f64;
    let chw = s.c * s.hw();
    for i in 0..s.n {
        let (z, g, w) = (logits.item(i), target.item(i), weight.item(i));
        let wsum = neumaier_sum(w.iter().copied());
        let dst = &mut dz.data_mut()[i * chw..(i + 1) * chw];
        for j in 0..chw {
            let p = sigmoid(z[j]);
            if (P_MIN..=P_MAX).contains(&p) {
                dst[j] = scale * w[j] / wsum * (p - g[j]);
            }
        }
    }
    dz
}

/// Smoothed weighted IoU: 1 - (I + 1) / (U - I + 1) with I = sum(w p g) and
/// U = sum(w (p + g)), per image, averaged over the batch.
pub fn weighted_iou(logits: &Tensor4, target: &Tensor4, weight: &Tensor4) -> Result<f64> {
    check_shapes(logits, target, weight, "weighted_iou")?;
    let n = logits.shape().n;
    let per_image = (0..n).map(|i| {
        let (inter, union) = iou_terms(logits.item(i), target.item(i), weight.item(i));
        1.0 - (inter + 1.0) / (union - inter + 1.0)
    });
    Ok(neumaier_sum(per_image) / n as f64)
}

fn iou_terms(z: &[f64], g: &[f64], w: &[f64]) -> (f64, f64) {
    let inter = neumaier_sum(z.iter().zip(g).zip(w).map(|((&z, &g), &w)| w * sigmoid(z) * g));
    let union = neumaier_sum(z.iter().zip(g).zip(w).map(|((&z, &g), &w)| w * (sigmoid(z) + g)));
    (inter, union)
}

pub(crate) fn weighted_iou_backward(logits: &Tensor4, target: &Tensor4, weight: &Tensor4, upstream: f64) -> Tensor4 {
    let s = logits.shape();
    let mut dz = Tensor4::zeros(s);
    let scale = upstream / s.n as f64;
    let chw = s.c * s.hw();
    for i in 0..s.n {
        let (z, g, w) = (logits.item(i), target.item(i), weight.item(i));
        let (inter, union) = iou_terms(z, g, w);
        let d = union - inter + 1.0;
        let num = inter + 1.0;
        let dst = &mut dz.data_mut()[i * chw..(i + 1) * chw];
        for j in 0..chw {
            let p = sigmoid(z[j]);
            // d/dp of -(I+1)/D with dI/dp = w g and dD/dp = w (1 - g)
            let dp = -(w[j] * g[j] * d - num * w[j] * (1.0 - g[j])) / (d * d);
            dst[j] = scale * dp * p * (1.0 - p);
        }
    }
    dz
}

impl Tape {
    pub fn weighted_bce(&mut self, logits: Var, target: &Tensor4, weight: &Tensor4) -> Result<Var> {
        self.check(logits)?;
        let z = self.node_value(logits.index());
        let value = weighted_bce(z, target, weight)?;
        if self.tracking_branches() {
            let clamps: Vec<u64> = z
                .data()
                .iter()
                .map(|&v| {
                    let p = sigmoid(v);
                    (p < P_MIN) as u64 | ((p > P_MAX) as u64) << 1
                })
                .collect();
            for c in clamps {
                self.note_branch(c);
            }
        }
        Ok(self.push(
            Tensor4::scalar(value),
            Op::WeightedBce {
                logits: logits.index(),
                target: target.clone(),
                weight: weight.clone(),
            },
            &[logits.index()],
        ))
    }

    pub fn weighted_iou(&mut self, logits: Var, target: &Tensor4, weight: &Tensor4) -> Result<Var> {
        self.check(logits)?;
        let value = weighted_iou(self.node_value(logits.index()), target, weight)?;
        Ok(self.push(
            Tensor4::scalar(value),
            Op::WeightedIou {
                logits: logits.index(),
                target: target.clone(),
                weight: weight.clone(),
            },
            &[logits.index()],
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadLoss {
    pub bce_w: f64,
    pub iou_w: f64,
}

impl HeadLoss {
    pub fn total(&self) -> f64 {
        self.bce_w + self.iou_w
    }
}

/// Loss values of one step. `bce_w` and `iou_w` are summed over both heads.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub bce_w: f64,
    pub iou_w: f64,
    pub total: f64,
    /// Refined head p̂.
    pub refined: HeadLoss,
    /// Coarse head ẑ, upsampled.
    pub coarse: HeadLoss,
}

/// L(G, p̂) + L(G, ẑ_up) with L = weighted BCE + weighted IoU. Both heads
/// are logits at the mask resolution.
pub fn total_loss(
    tape: &mut Tape,
    coarse: Var,
    refined: Var,
    mask: &Tensor4,
    cfg: &LossConfig,
) -> Result<(Var, LossReport)> {
    let ms = mask.shape();
    for (name, v) in [("coarse", coarse), ("refined", refined)] {
        tape.check(v)?;
        let s = tape.shape(v);
        if s != ms {
            return shape_err("total_loss", format!("{name} head {s} vs mask {ms}"));
        }
    }
    let w = weight_map(mask, cfg)?;
    let bp = tape.weighted_bce(refined, mask, &w)?;
    let ip = tape.weighted_iou(refined, mask, &w)?;
    let bz = tape.weighted_bce(coarse, mask, &w)?;
    let iz = tape.weighted_iou(coarse, mask, &w)?;
    let lp = tape.add(bp, ip)?;
    let lz = tape.add(bz, iz)?;
    let total = tape.add(lp, lz)?;

    let v = |t: &Tape, x: Var| t.value(x).data()[0];
    let refined_l = HeadLoss {
        bce_w: v(tape, bp),
        iou_w: v(tape, ip),
    };
    let coarse_l = HeadLoss {
        bce_w: v(tape, bz),
        iou_w: v(tape, iz),
    };
    let report = LossReport {
        bce_w: refined_l.bce_w + coarse_l.bce_w,
        iou_w: refined_l.iou_w + coarse_l.iou_w,
        total: v(tape, total),
        refined: refined_l,
        coarse: coarse_l,
    };
    Ok((total, report))
}
