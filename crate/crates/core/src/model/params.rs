//! Named, ordered parameter storage. Creation order defines checkpoint
//! manifest order; names are scoped (`encoder.`, `bottleneck.`, `decoder.`)
//! so variant differences stay confined to the bottleneck scope.

use crate::error::{CoreError, Result};
use crate::rng::Rng;
use phaedra_tensor::{Element, Graph, TensorId};
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> usize {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        let idx = self.params.len();
        self.by_name.insert(name.clone(), idx);
        self.params.push(Param { name, shape, data });
        idx
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param<T> {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param<T> {
        &mut self.params[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Insert every parameter into a graph as a leaf, in store order.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> Result<Binding> {
        let mut ids = Vec::with_capacity(self.params.len());
        for p in &self.params {
            ids.push(g.leaf(&p.shape, p.data.clone(), requires_grad)?);
        }
        Ok(Binding { ids })
    }

    /// Copy a full flat view of all parameter values, in store order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.value_count());
        for p in &self.params {
            out.extend_from_slice(&p.data);
        }
        out
    }

    /// Overwrite all parameters from a flat view (inverse of [`flatten`]).
    pub fn unflatten(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.value_count() {
            return Err(CoreError::Checkpoint(format!(
                "expected {} parameter values, got {}",
                self.value_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for p in &mut self.params {
            let len = p.data.len();
            p.data.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Graph leaf ids aligned with [`ParamStore`] order for one built graph.
#[derive(Debug, Clone)]
pub struct Binding {
    pub ids: Vec<TensorId>,
}

impl Binding {
    pub fn id(&self, param_idx: usize) -> TensorId {
        self.ids[param_idx]
    }
}

/// Allocates parameters with the init conventions used across the model:
/// convolutions draw uniform(+-1/sqrt(fan_in)) weights with zero bias, norms
/// start at identity, and attention output projections start at zero so the
/// block begins as a residual identity.
pub struct NetBuilder<'a, T: Element> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut Rng,
}

impl<'a, T: Element> NetBuilder<'a, T> {
    pub fn conv(
        &mut self,
        name: &str,
        c_out: usize,
        c_in: usize,
        k: usize,
        zero_init: bool,
    ) -> ConvIdx {
        let fan_in = (c_in * k * k) as f64;
        let bound = (1.0 / fan_in).sqrt();
        let n = c_out * c_in * k * k;
        let data: Vec<T> = if zero_init {
            vec![T::ZERO; n]
        } else {
            (0..n).map(|_| T::from_f64(self.rng.uniform_in(-bound, bound))).collect()
        };
        let w = self.store.add(format!("{name}.weight"), vec![c_out, c_in, k, k], data);
        let b = self.store.add(format!("{name}.bias"), vec![c_out], vec![T::ZERO; c_out]);
        ConvIdx { weight: w, bias: b }
    }

    pub fn norm(&mut self, name: &str, channels: usize) -> NormIdx {
        let gamma = self.store.add(format!("{name}.gamma"), vec![channels], vec![T::ONE; channels]);
        let beta = self.store.add(format!("{name}.beta"), vec![channels], vec![T::ZERO; channels]);
        NormIdx { gamma, beta }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvIdx {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NormIdx {
    pub gamma: usize,
    pub beta: usize,
}
