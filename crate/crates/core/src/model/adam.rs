use crate::error::{Error, Result};
use crate::model::network::{Network, NetworkGrads};
use crate::scalar::Scalar;

/// Adam hyper-parameters. Defaults: lr 1e-4, β₁ 0.5, β₂ 0.999, ε 1e-8.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> Default for AdamParams<T> {
    fn default() -> Self {
        Self {
            lr: T::lit(1e-4),
            beta1: T::lit(0.5),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

/// First/second moment buffers for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Moments<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// One Adam update of `params` in place. `step` is the 1-based step index
/// used for bias correction. With `maximize` the gradient is negated so the
/// update ascends.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    moments: &mut Moments<T>,
    step: u64,
    hp: &AdamParams<T>,
    maximize: bool,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != moments.m.len() || moments.m.len() != moments.v.len() {
        return Err(Error::ShapeMismatch(format!(
            "params {}, grads {}, moments {}/{}",
            params.len(),
            grads.len(),
            moments.m.len(),
            moments.v.len()
        )));
    }
    let t = i32::try_from(step.max(1)).unwrap_or(i32::MAX);
    let c1 = T::one() - hp.beta1.powi(t);
    let c2 = T::one() - hp.beta2.powi(t);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut().zip(moments.v.iter_mut()))
    {
        let g = if maximize { -g } else { g };
        *m = hp.beta1 * *m + (T::one() - hp.beta1) * g;
        *v = hp.beta2 * *v + (T::one() - hp.beta2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        *p -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
    }
    Ok(())
}

/// Adam state for every tensor of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub moments: Vec<Moments<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &Network<T>) -> Self {
        Self {
            step: 0,
            moments: net.params().iter().map(|p| Moments::zeros(p.len())).collect(),
        }
    }

    pub fn apply(
        &mut self,
        net: &mut Network<T>,
        grads: &NetworkGrads<T>,
        hp: &AdamParams<T>,
        maximize: bool,
    ) -> Result<()> {
        let gs = grads.slices();
        let mut ps = net.params_mut();
        if gs.len() != ps.len() || self.moments.len() != ps.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, {} gradients, {} moment buffers",
                ps.len(),
                gs.len(),
                self.moments.len()
            )));
        }
        self.step += 1;
        for ((p, g), m) in ps.iter_mut().zip(gs).zip(self.moments.iter_mut()) {
            adam_step(p, g, m, self.step, hp, maximize)?;
        }
        Ok(())
    }
}
