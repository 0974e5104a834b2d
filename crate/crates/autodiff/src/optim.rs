use crate::error::{AutodiffError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named trainable matrices. Registration order is stable, so the i-th var
/// returned by [`ParamStore::register`] belongs to `ParamId(i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    /// Replaces every value; shapes must match the current ones.
    pub fn set_values(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "set_values",
                left: (self.values.len(), 0),
                right: (values.len(), 0),
            });
        }
        for (old, new) in self.values.iter().zip(&values) {
            if old.shape() != new.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "set_values",
                    left: old.shape(),
                    right: new.shape(),
                });
            }
        }
        self.values = values;
        Ok(())
    }

    /// Copies every parameter onto `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.values.iter().map(|v| tape.param(v.clone())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn zeros_like(&self) -> Vec<Tensor<T>> {
        self.values.iter().map(|v| Tensor::zeros(v.rows(), v.cols())).collect()
    }
}

/// Adds the gradients of `vars` (as returned by [`ParamStore::register`]) into
/// an accumulator with one slot per parameter.
pub fn accumulate<T: Scalar>(acc: &mut [Tensor<T>], grads: &Gradients<T>, vars: &[Var]) {
    for (slot, &v) in acc.iter_mut().zip(vars) {
        if let Some(g) = grads.get(v) {
            slot.add_assign(g);
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step: u32,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(params: &ParamStore<f32>, lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &[Tensor<f32>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam",
                left: (params.len(), 0),
                right: (grads.len(), 0),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            if !g.is_finite() {
                return Err(AutodiffError::NonFinite { op: "adam" });
            }
            let p = params.get_mut(ParamId(i));
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
