use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Step-decay schedule: `base * decay^floor(epoch / every)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub every: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 1e-4,
            decay: 0.1,
            every: 30,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = epoch.checked_div(self.every).unwrap_or(0);
        self.base * self.decay.powi(k as i32)
    }
}

/// Anything that turns gradients into parameter updates.
pub trait Optimizer {
    /// `grads[i]` belongs to `params[i]`; `None` leaves that parameter (and
    /// its optimiser state) untouched.
    fn step(&mut self, params: &mut [Tensor4], grads: &[Option<Tensor4>], lr: f64) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Option<Tensor4>>,
    v: Vec<Option<Tensor4>>,
    steps: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: Vec::new(),
            v: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [Tensor4], grads: &[Option<Tensor4>], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "adam: {} parameters but {} gradient slots",
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().all(Option::is_none) {
            return Err(Error::InvalidArgument("adam: step called without any gradients".into()));
        }
        if self.m.len() != params.len() {
            self.m = vec![None; params.len()];
            self.v = vec![None; params.len()];
        }
        self.steps += 1;
        let t = self.steps as i32;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            if g.shape() != p.shape() {
                return Err(Error::InvalidArgument(format!(
                    "adam: gradient {} does not match parameter {}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self.m[i].get_or_insert_with(|| Tensor4::zeros(p.shape()));
            let v = self.v[i].get_or_insert_with(|| Tensor4::zeros(p.shape()));
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn step_decay_schedule() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at(0), 1e-4);
        assert_eq!(s.lr_at(29), 1e-4);
        assert!((s.lr_at(30) - 1e-5).abs() < 1e-20);
        assert!((s.lr_at(75) - 1e-6).abs() < 1e-21);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = vec![Tensor4::full(Shape::new(1, 1, 2, 2), 0.3)];
        let grads = vec![Some(Tensor4::zeros(Shape::new(1, 1, 2, 2)))];
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..10 {
            opt.step(&mut params, &grads, 1e-3).unwrap();
        }
        assert!(params[0].data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn constant_gradient_drifts_against_its_sign() {
        let mut params = vec![Tensor4::from_vec(Shape::new(1, 1, 1, 2), vec![0.0, 0.0]).unwrap()];
        let grads = vec![Some(
            Tensor4::from_vec(Shape::new(1, 1, 1, 2), vec![0.5, -2.0]).unwrap(),
        )];
        let mut opt = Adam::new(AdamConfig::default());
        let mut prev = params[0].clone();
        for _ in 0..100 {
            opt.step(&mut params, &grads, 1e-3).unwrap();
            let cur = &params[0];
            assert!(cur.data()[0] < prev.data()[0]);
            assert!(cur.data()[1] > prev.data()[1]);
            prev = cur.clone();
        }
        // first Adam steps move by ~lr regardless of magnitude
        assert!((params[0].data()[0] + 0.1).abs() < 1e-3);
    }

    #[test]
    fn empty_gradients_rejected() {
        let mut params = vec![Tensor4::zeros(Shape::new(1, 1, 1, 1))];
        let mut opt = Adam::new(AdamConfig::default());
        assert!(opt.step(&mut params, &[None], 1e-3).is_err());
        assert!(opt.step(&mut [], &[], 1e-3).is_err());
    }
}
