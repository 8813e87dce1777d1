use crate::error::{Error, Result};
use crate::gradcheck::{check_coords, GradCheckReport};
use crate::rng::Prng;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order. Names are dotted paths
/// such as `odc.r_branch.0.weight`.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor4>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor4) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        self.names.push(name);
        self.tensors.push(value);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Tensor4 {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor4 {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor4)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor4] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor4] {
        &mut self.tensors
    }

    /// Total scalar parameter count.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor4::len).sum()
    }
}

/// Registers parameters under a dotted prefix, drawing initial values from
/// a shared generator.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    prng: &'a mut Prng,
    prefix: String,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, prng: &'a mut Prng) -> Self {
        Self {
            store,
            prng,
            prefix: String::new(),
        }
    }

    pub fn scope(&mut self, name: &str) -> Builder<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Builder {
            store: self.store,
            prng: self.prng,
            prefix,
        }
    }

    pub fn full_name(&self, leaf: &str) -> String {
        if self.prefix.is_empty() {
            leaf.to_string()
        } else {
            format!("{}.{leaf}", self.prefix)
        }
    }

    pub fn prng(&mut self) -> &mut Prng {
        self.prng
    }

    pub fn add(&mut self, leaf: &str, value: Tensor4) -> Result<ParamId> {
        let name = self.full_name(leaf);
        self.store.add(name, value)
    }
}

/// One forward pass: a tape plus the lazily bound parameter leaves.
pub struct Ctx<'a> {
    pub tape: Tape,
    params: &'a ParamStore,
    bound: Vec<Option<Var>>,
}

impl<'a> Ctx<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Self::with_tape(params, Tape::new())
    }

    pub fn with_tape(params: &'a ParamStore, tape: Tape) -> Self {
        Self {
            tape,
            params,
            bound: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &ParamStore {
        self.params
    }

    /// Leaf for a parameter, recorded once per pass.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.params.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, t: Tensor4) -> Var {
        self.tape.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor4 {
        self.tape.value(v)
    }

    /// Gradients aligned with the store; `None` for parameters the loss did
    /// not touch.
    pub fn param_grads(&self, grads: &mut Gradients) -> Vec<Option<Tensor4>> {
        self.bound.iter().map(|b| b.and_then(|v| grads.take(v))).collect()
    }
}

/// Finite-difference check of parameter gradients. Probes up to
/// `per_tensor` evenly spaced coordinates of every parameter tensor.
pub fn check_param_grads<F>(store: &ParamStore, f: F, per_tensor: usize, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Ctx) -> Result<Var>,
{
    let mut ctx = Ctx::with_tape(store, Tape::with_branch_tracking());
    let out = f(&mut ctx)?;
    let base_sig = ctx.tape.branch_fingerprint().unwrap_or(0);
    let mut grads = ctx.tape.backward(out)?;
    let analytic = ctx.param_grads(&mut grads);
    drop(ctx);

    let mut report = GradCheckReport::default();
    let mut probe = store.clone();
    for id in store.ids() {
        let len = store.get(id).len();
        let step = (len / per_tensor.max(1)).max(1);
        let coords: Vec<usize> = (0..len).step_by(step).take(per_tensor).collect();
        let mut eval = |i: usize, v: f64| -> Result<(f64, u64)> {
            let old = probe.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = v;
            let r = {
                let mut c = Ctx::with_tape(&probe, Tape::with_branch_tracking());
                f(&mut c).map(|o| (c.value(o).data()[0], c.tape.branch_fingerprint().unwrap_or(0)))
            };
            probe.get_mut(id).data_mut()[i] = old;
            r
        };
        let grad_of = |i: usize| analytic[id.0].as_ref().map_or(0.0, |g| g.data()[i]);
        let r = check_coords(coords, grad_of, |i| store.get(id).data()[i], &mut eval, base_sig, eps)?;
        report = report.merge(r);
    }
    Ok(report)
}
