//! Named parameter storage with per-parameter ADAM state.

use std::collections::HashMap;

use super::tensor::Element;
use super::NnError;

/// Handle to a parameter registered in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// A named tensor with gradient and optimizer state.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<T>,
    pub grad: Option<Vec<T>>,
    /// Buffers (batch-norm running statistics) are registered with
    /// `trainable = false` and skipped by the optimizer.
    pub trainable: bool,
    pub(crate) adam_m: Vec<T>,
    pub(crate) adam_v: Vec<T>,
    pub(crate) step: u64,
}

impl<T: Element> Param<T> {
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn adam_state(&self) -> (&[T], &[T], u64) {
        (&self.adam_m, &self.adam_v, self.step)
    }

    pub(crate) fn set_adam_state(&mut self, m: Vec<T>, v: Vec<T>, step: u64) {
        self.adam_m = m;
        self.adam_v = v;
        self.step = step;
    }
}

/// ADAM hyperparameters. Defaults: `beta1 0.9, beta2 0.999, eps 1e-8`.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(1e-4)
    }
}

/// Ordered collection of named parameters; insertion order is the
/// serialization order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T = f32> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(
        &mut self,
        name: &str,
        dims: &[usize],
        data: Vec<T>,
        trainable: bool,
    ) -> Result<ParamId, NnError> {
        if self.index.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(NnError::DimsMismatch {
                name: name.to_string(),
                expected: dims.to_vec(),
                got: vec![data.len()],
            });
        }
        let id = ParamId(self.params.len());
        self.index.insert(name.to_string(), id.0);
        self.params.push(Param {
            name: name.to_string(),
            dims: dims.to_vec(),
            adam_m: vec![T::zero(); data.len()],
            adam_v: vec![T::zero(); data.len()],
            step: 0,
            grad: None,
            trainable,
            data,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn data(&self, id: ParamId) -> &[T] {
        &self.params[id.0].data
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    /// Total number of trainable scalar values.
    pub fn trainable_values(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.data.len())
            .sum()
    }

    /// Adds `delta` into the gradient slot of `id`, allocating it if absent.
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &[T]) {
        let p = &mut self.params[id.0];
        debug_assert_eq!(p.data.len(), delta.len());
        let g = p.grad.get_or_insert_with(|| vec![T::zero(); p.data.len()]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi = *gi + *di;
        }
    }

    /// Resets every gradient slot to zeros (allocating them).
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            let n = p.data.len();
            match &mut p.grad {
                Some(g) => g.iter_mut().for_each(|v| *v = T::zero()),
                slot @ None => *slot = Some(vec![T::zero(); n]),
            }
        }
    }

    /// Applies one bias-corrected ADAM update in place to every trainable
    /// parameter, then clears gradients.
    ///
    /// Errors if any trainable parameter has no populated gradient.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<(), NnError> {
        for p in &self.params {
            if p.trainable && p.grad.is_none() {
                return Err(NnError::MissingGrad(p.name.clone()));
            }
        }
        let b1 = T::from_f64(cfg.beta1);
        let b2 = T::from_f64(cfg.beta2);
        let one = T::one();
        for p in &mut self.params {
            if !p.trainable {
                continue;
            }
            p.step += 1;
            let bias1 = T::from_f64(1.0 - cfg.beta1.powi(p.step as i32));
            let bias2 = T::from_f64(1.0 - cfg.beta2.powi(p.step as i32));
            let lr = T::from_f64(cfg.lr);
            let eps = T::from_f64(cfg.eps);
            let grad = p.grad.as_ref().unwrap();
            for i in 0..p.data.len() {
                let g = grad[i];
                p.adam_m[i] = b1 * p.adam_m[i] + (one - b1) * g;
                p.adam_v[i] = b2 * p.adam_v[i] + (one - b2) * g * g;
                let m_hat = p.adam_m[i] / bias1;
                let v_hat = p.adam_v[i] / bias2;
                p.data[i] = p.data[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        for p in &mut self.params {
            if let Some(g) = &mut p.grad {
                g.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        Ok(())
    }
}
