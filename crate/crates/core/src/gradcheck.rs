//! Central-difference verification of tape gradients.
//!
//! Piecewise-smooth functions (relu, max) are only differentiable away from
//! their switching points. Each evaluation records a fingerprint of every
//! discrete decision; a probe pair whose fingerprint differs from the base
//! point straddles a switch and is retried with a smaller step. Coordinates
//! that still straddle after the retries are counted in `kinks_skipped`.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor4;

pub const DEFAULT_EPS: f64 = 1e-5;
const RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub kinks_skipped: usize,
}

impl GradCheckReport {
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        GradCheckReport {
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            checked: self.checked + other.checked,
            kinks_skipped: self.kinks_skipped + other.kinks_skipped,
        }
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks the gradient of the scalar `f(x)` with respect to every entry of `x`.
pub fn finite_diff_check<F>(f: F, x: &Tensor4, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::with_branch_tracking();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    let base_sig = tape.branch_fingerprint().unwrap_or(0);
    let grads = tape.backward(out)?;
    let analytic = grads.get(xv).cloned().unwrap_or_else(|| Tensor4::zeros(x.shape()));
    drop(tape);

    let mut probe = x.clone();
    let mut eval = |i: usize, v: f64| -> Result<(f64, u64)> {
        let old = probe.data()[i];
        probe.data_mut()[i] = v;
        let mut t = Tape::with_branch_tracking();
        let pv = t.leaf(probe.clone());
        let r = f(&mut t, pv);
        probe.data_mut()[i] = old;
        let out = r?;
        Ok((t.value(out).data()[0], t.branch_fingerprint().unwrap_or(0)))
    };
    check_coords(
        0..x.len(),
        |i| analytic.data()[i],
        |i| x.data()[i],
        &mut eval,
        base_sig,
        eps,
    )
}

/// Shared coordinate loop. `eval(i, v)` evaluates the function with
/// coordinate `i` replaced by `v` and returns the value and fingerprint.
pub fn check_coords(
    coords: impl IntoIterator<Item = usize>,
    analytic: impl Fn(usize) -> f64,
    original: impl Fn(usize) -> f64,
    eval: &mut dyn FnMut(usize, f64) -> Result<(f64, u64)>,
    base_sig: u64,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::default();
    for i in coords {
        let x0 = original(i);
        let mut step = eps;
        let mut done = false;
        for _ in 0..RETRIES {
            let (hi, lo) = (x0 + step, x0 - step);
            let (fp, sp) = eval(i, hi)?;
            let (fm, sm) = eval(i, lo)?;
            if sp == base_sig && sm == base_sig {
                let numeric = (fp - fm) / (hi - lo);
                report.max_rel_err = report.max_rel_err.max(rel_err(analytic(i), numeric));
                report.checked += 1;
                done = true;
                break;
            }
            step *= 0.1;
        }
        if !done {
            report.kinks_skipped += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;
    use crate::tape::ConvGeom;
    use crate::tensor::Shape;

    fn random(shape: Shape, seed: u64) -> Tensor4 {
        let mut p = Prng::new(seed);
        Tensor4::from_fn(shape, |_, _, _, _| p.uniform(-1.0, 1.0))
    }

    #[test]
    fn sum_is_exact() {
        let x = random(Shape::new(1, 2, 6, 6), 1);
        let r = finite_diff_check(|t, v| Ok(t.sum(v)), &x, DEFAULT_EPS).unwrap();
        assert!(r.max_rel_err < 1e-10, "{r:?}");
        assert_eq!(r.checked, 72);
    }

    #[test]
    fn sigmoid_of_conv() {
        let x = random(Shape::new(1, 2, 6, 6), 2);
        let w = random(Shape::new(3, 2, 3, 3), 3);
        let r = finite_diff_check(
            |t, v| {
                let wv = t.constant(w.clone());
                let c = t.conv2d(v, wv, None, ConvGeom::same(3, 3))?;
                let s = t.sigmoid(c);
                Ok(t.sum(s))
            },
            &x,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu's derivative is 0 for negative inputs; feeding the check a
        // function whose analytic path is cut (constant) must fail loudly.
        let x = random(Shape::new(1, 1, 2, 2), 4);
        let mut eval = |i: usize, v: f64| -> Result<(f64, u64)> {
            let mut d = x.data().to_vec();
            d[i] = v;
            Ok((d.iter().map(|a| a * a).sum(), 0))
        };
        let r = check_coords(0..4, |_| 0.0, |i| x.data()[i], &mut eval, 0, DEFAULT_EPS).unwrap();
        assert!(r.max_rel_err > 0.5);
    }

    #[test]
    fn kink_straddles_are_retried() {
        // |x| at x = 3e-6: the default step crosses zero, a smaller one does not.
        let x = Tensor4::from_vec(Shape::new(1, 1, 1, 1), vec![3e-6]).unwrap();
        let r = finite_diff_check(
            |t, v| {
                let pos = t.relu(v);
                let neg = t.affine(v, -1.0, 0.0);
                let neg = t.relu(neg);
                let a = t.add(pos, neg)?;
                Ok(t.sum(a))
            },
            &x,
            DEFAULT_EPS,
        )
        .unwrap();
        assert_eq!(r.kinks_skipped, 0);
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_err < 1e-8, "{r:?}");
    }
}
