//! The named gradient checks behind `odcsa gradcheck`. Every entry runs the
//! finite-difference oracle on random double-precision inputs and reports
//! the worst relative error over inputs and parameters.

use crate::error::{Error, Result};
use crate::gradcheck::{finite_diff_check, GradCheckReport, DEFAULT_EPS};
use crate::loss::{weight_map, LossConfig};
use crate::nn::{check_param_grads, Builder, Cbam, Csa, Ctx, Era, Odc, ParamStore, Rfa, Rfb, S2e, Sra};
use crate::rng::Prng;
use crate::tape::{ConvGeom, Tape, Var};
use crate::tensor::{Shape, Tensor4};

pub const PASS_THRESHOLD: f64 = 1e-4;

/// Block width used by the block-level checks.
const C: usize = 8;
const HW: usize = 8;
/// Parameter coordinates probed per tensor.
const PROBES: usize = 24;

pub const CHECKS: &[&str] = &[
    "conv2d",
    "pooling",
    "resize",
    "softmax",
    "elementwise",
    "odc",
    "rfb",
    "s2e",
    "csa",
    "rfa",
    "cbam",
    "era",
    "sra",
    "loss",
];

fn random(prng: &mut Prng, shape: Shape, scale: f64) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| prng.uniform(-scale, scale))
}

pub fn run(name: &str, seed: u64) -> Result<GradCheckReport> {
    let mut prng = Prng::new(seed ^ 0x9E37_79B9_7F4A_7C15);
    match name {
        "conv2d" => conv2d(&mut prng),
        "pooling" => pooling(&mut prng),
        "resize" => resize(&mut prng),
        "softmax" => softmax(&mut prng),
        "elementwise" => elementwise(&mut prng),
        "odc" => block(
            &mut prng,
            |b| Odc::new(b, C),
            &[C],
            |m, ctx, x| Ok(m.forward(ctx, x[0])?.q),
        ),
        "rfb" => block(
            &mut prng,
            |b| Rfb::new(b, "rfb", C, C),
            &[C],
            |m, ctx, x| m.forward(ctx, x[0]),
        ),
        "s2e" => block(&mut prng, |b| S2e::new(b, C), &[C], |m, ctx, x| m.forward(ctx, x[0])),
        "csa" => block(
            &mut prng,
            |b| Ok((S2e::new(b, C)?, Csa::new(b, C)?)),
            &[C, C],
            |(s2e, csa), ctx, x| {
                let s = s2e.forward(ctx, x[0])?;
                Ok(csa.forward(ctx, s, x[1])?.1)
            },
        ),
        "rfa" => {
            let mut store = ParamStore::new();
            let rfa = Rfa::new(&mut Builder::new(&mut store, &mut prng), C)?;
            let inputs = [Shape::new(1, C, HW / 2, HW / 2), Shape::new(1, C, HW, HW)];
            check_block(&mut prng, store, &inputs, |ctx, x| {
                Ok(rfa.forward(ctx, x[0], x[1])?.out)
            })
        }
        "cbam" => block(
            &mut prng,
            |b| Cbam::new(b, C),
            &[C],
            |m, ctx, x| Ok(m.forward(ctx, x[0])?.out),
        ),
        "era" => block(&mut prng, |b| Era::new(b, C), &[C], |m, ctx, x| m.forward(ctx, x[0])),
        "sra" => {
            let mut store = ParamStore::new();
            let sra = Sra::new(&mut Builder::new(&mut store, &mut prng), C)?;
            let inputs = [Shape::new(1, 1, HW / 4, HW / 4), Shape::new(1, C, HW, HW)];
            check_block(&mut prng, store, &inputs, |ctx, x| Ok(sra.forward(ctx, x[0], x[1])?.p))
        }
        "loss" => loss(&mut prng),
        _ => Err(Error::InvalidArgument(format!(
            "unknown gradcheck block {name:?}; expected one of {} or all",
            CHECKS.join(", ")
        ))),
    }
}

/// Builds a block, feeds it random `1 x c x 8 x 8` inputs and checks input
/// and parameter gradients together.
fn block<M>(
    prng: &mut Prng,
    build: impl FnOnce(&mut Builder) -> Result<M>,
    in_channels: &[usize],
    f: impl Fn(&M, &mut Ctx, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let m = build(&mut Builder::new(&mut store, prng))?;
    let shapes: Vec<Shape> = in_channels.iter().map(|&c| Shape::new(1, c, HW, HW)).collect();
    check_block(prng, store, &shapes, |ctx, x| f(&m, ctx, x))
}

fn check_block(
    prng: &mut Prng,
    mut store: ParamStore,
    inputs: &[Shape],
    f: impl Fn(&mut Ctx, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    // zero-initialised biases would hide bias-specific bugs in a few paths
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with(".bias") {
            *store.get_mut(id) = random(prng, store.get(id).shape(), 0.1);
        }
    }
    let ids = inputs
        .iter()
        .enumerate()
        .map(|(i, &s)| store.add(format!("input.{i}"), random(prng, s, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    let out_shape = {
        let mut ctx = Ctx::new(&store);
        let xs: Vec<Var> = ids.iter().map(|&id| ctx.param(id)).collect();
        let out = f(&mut ctx, &xs)?;
        ctx.tape.shape(out)
    };
    let r = random(prng, out_shape, 1.0);
    check_param_grads(
        &store,
        |ctx| {
            let xs: Vec<Var> = ids.iter().map(|&id| ctx.param(id)).collect();
            let out = f(ctx, &xs)?;
            ctx.tape.dot_const(out, r.clone())
        },
        PROBES,
        DEFAULT_EPS,
    )
}

/// Checks `f` with respect to one input of `shape`, scalarised against a
/// random projection.
fn op_check(prng: &mut Prng, shape: Shape, f: impl Fn(&mut Tape, Var) -> Result<Var>) -> Result<GradCheckReport> {
    let x = random(prng, shape, 1.0);
    let out_shape = {
        let mut t = Tape::new();
        let v = t.leaf(x.clone());
        let o = f(&mut t, v)?;
        t.shape(o)
    };
    let r = random(prng, out_shape, 1.0);
    finite_diff_check(
        |t, v| {
            let o = f(t, v)?;
            t.dot_const(o, r.clone())
        },
        &x,
        DEFAULT_EPS,
    )
}

fn conv2d(prng: &mut Prng) -> Result<GradCheckReport> {
    let xs = Shape::new(1, 2, 6, 6);
    let geoms = [
        ((3, 3), ConvGeom::same(3, 3)),
        ((1, 3), ConvGeom::same(1, 3)),
        ((3, 1), ConvGeom::same(3, 1)),
        ((3, 3), ConvGeom::new(2, (1, 1), 1)),
        ((3, 3), ConvGeom::new(1, (2, 2), 2)),
        ((1, 1), ConvGeom::same(1, 1)),
    ];
    let mut report = GradCheckReport::default();
    for ((kh, kw), geom) in geoms {
        let w = random(prng, Shape::new(3, 2, kh, kw), 1.0);
        let b = random(prng, Shape::new(1, 3, 1, 1), 1.0);
        // wrt input
        let (wc, bc) = (w.clone(), b.clone());
        report = report.merge(op_check(prng, xs, move |t, v| {
            let wv = t.constant(wc.clone());
            let bv = t.constant(bc.clone());
            t.conv2d(v, wv, Some(bv), geom)
        })?);
        // wrt weight
        let x = random(prng, xs, 1.0);
        let (xc, bc) = (x.clone(), b.clone());
        report = report.merge(op_check(prng, w.shape(), move |t, wv| {
            let xv = t.constant(xc.clone());
            let bv = t.constant(bc.clone());
            t.conv2d(xv, wv, Some(bv), geom)
        })?);
        // wrt bias
        report = report.merge(op_check(prng, b.shape(), move |t, bv| {
            let xv = t.constant(x.clone());
            let wv = t.constant(w.clone());
            t.conv2d(xv, wv, Some(bv), geom)
        })?);
    }
    Ok(report)
}

fn pooling(prng: &mut Prng) -> Result<GradCheckReport> {
    let s = Shape::new(1, 2, 6, 6);
    let odd = Shape::new(1, 2, 5, 7);
    let mut r = op_check(prng, s, |t, v| t.avg_pool2x2(v))?;
    r = r.merge(op_check(prng, odd, |t, v| t.avg_pool2x2(v))?);
    r = r.merge(op_check(prng, s, |t, v| t.global_avg_pool(v))?);
    r = r.merge(op_check(prng, s, |t, v| t.global_max_pool(v))?);
    r = r.merge(op_check(prng, s, |t, v| t.channel_mean(v))?);
    r = r.merge(op_check(prng, s, |t, v| t.channel_max(v))?);
    Ok(r)
}

fn resize(prng: &mut Prng) -> Result<GradCheckReport> {
    let s = Shape::new(1, 2, 6, 6);
    let mut r = op_check(prng, s, |t, v| t.bilinear_resize(v, 12, 12))?;
    r = r.merge(op_check(prng, s, |t, v| t.bilinear_resize(v, 4, 9))?);
    r = r.merge(op_check(prng, s, |t, v| t.bilinear_resize(v, 3, 3))?);
    Ok(r)
}

fn softmax(prng: &mut Prng) -> Result<GradCheckReport> {
    op_check(prng, Shape::new(1, 2, 6, 6), |t, v| t.softmax_spatial(v))
}

fn elementwise(prng: &mut Prng) -> Result<GradCheckReport> {
    let s = Shape::new(1, 2, 6, 6);
    let gate = random(prng, Shape::new(1, 2, 1, 1), 1.0);
    let other = random(prng, s, 1.0);
    let mut r = op_check(prng, s, |t, v| Ok(t.relu(v)))?;
    r = r.merge(op_check(prng, s, |t, v| Ok(t.sigmoid(v)))?);
    r = r.merge(op_check(prng, s, |t, v| Ok(t.affine(v, -1.5, 0.25)))?);
    r = r.merge(op_check(prng, s, |t, v| {
        let o = t.constant(other.clone());
        t.add(v, o)
    })?);
    // broadcast on both sides of a product
    r = r.merge(op_check(prng, s, |t, v| {
        let g = t.constant(gate.clone());
        t.mul(g, v)
    })?);
    r = r.merge(op_check(prng, gate.shape(), |t, g| {
        let o = t.constant(other.clone());
        t.mul(o, g)
    })?);
    r = r.merge(op_check(prng, s, |t, v| {
        let o = t.constant(other.clone());
        t.concat_channels(&[o, v, o])
    })?);
    r = r.merge(op_check(prng, s, |t, v| t.mul(v, v))?);
    Ok(r)
}

fn loss(prng: &mut Prng) -> Result<GradCheckReport> {
    let s = Shape::new(1, 1, HW, HW);
    let mask = Tensor4::from_fn(s, |_, _, y, x| {
        ((y as f64 - 3.5).hypot(x as f64 - 4.0) < 2.6) as u8 as f64
    });
    let cfg = LossConfig {
        weight_window: 5,
        ..LossConfig::default()
    };
    let w = weight_map(&mask, &cfg)?;
    let logits = random(prng, s, 3.0);
    let bce = finite_diff_check(|t, v| t.weighted_bce(v, &mask, &w), &logits, DEFAULT_EPS)?;
    let iou = finite_diff_check(|t, v| t.weighted_iou(v, &mask, &w), &logits, DEFAULT_EPS)?;
    let total = finite_diff_check(
        |t, v| {
            let z = t.affine(v, 0.5, 0.1);
            Ok(crate::loss::total_loss(t, z, v, &mask, &cfg)?.0)
        },
        &logits,
        DEFAULT_EPS,
    )?;
    Ok(bce.merge(iou).merge(total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_choices() {
        let e = run("nope", 0).unwrap_err().to_string();
        assert!(e.contains("odc") && e.contains("all"));
    }

    #[test]
    fn every_check_passes() {
        for name in CHECKS {
            let r = run(name, 0).unwrap();
            assert!(r.max_rel_err < PASS_THRESHOLD, "{name}: {r:?}");
            assert!(r.checked > 0, "{name}: nothing checked");
            assert!(r.kinks_skipped * 20 <= r.checked, "{name}: too many kinks {r:?}");
        }
    }
}
