//! Optimizers: AdEMAMix (dual first-moment EMAs, the training default) and
//! Adam as the fallback, both with decoupled weight decay; plus the
//! evaluation-weight EMA.

use crate::error::{CoreError, Result};
use crate::model::ParamStore;
use phaedra_tensor::Element;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Ademamix,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "ademamix" => Ok(OptimizerKind::Ademamix),
            other => Err(CoreError::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHyper {
    pub lr: f64,
    /// Fast first-moment decay (Adam uses its own default 0.9).
    pub beta1: f64,
    /// Second-moment decay (Adam: 0.999).
    pub beta2: f64,
    /// Slow first-moment decay, AdEMAMix only.
    pub beta3: f64,
    /// Slow-moment mixing coefficient, AdEMAMix only.
    pub alpha: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl OptimizerHyper {
    /// Training defaults: lr 1e-4, betas (0.5, 0.9, 0.99), alpha 2.0,
    /// weight decay 0.01.
    pub fn ademamix_default() -> Self {
        OptimizerHyper {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            beta3: 0.99,
            alpha: 2.0,
            weight_decay: 0.01,
            eps: 1e-8,
        }
    }

    pub fn adam_default() -> Self {
        OptimizerHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            beta3: 0.0,
            alpha: 0.0,
            weight_decay: 0.01,
            eps: 1e-8,
        }
    }

    pub fn default_for(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Adam => Self::adam_default(),
            OptimizerKind::Ademamix => Self::ademamix_default(),
        }
    }
}

pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub hyper: OptimizerHyper,
    step: usize,
    m1: Vec<Vec<T>>,
    m2: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Element> Optimizer<T> {
    pub fn new(kind: OptimizerKind, hyper: OptimizerHyper, params: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|p| vec![T::ZERO; p.data.len()]).collect();
        Optimizer {
            kind,
            hyper,
            step: 0,
            m1: zeros.clone(),
            m2: if kind == OptimizerKind::Ademamix { zeros.clone() } else { Vec::new() },
            v: zeros,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update with the given learning rate (the schedule lives in the
    /// training loop). Gradients must be finite; a NaN aborts untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Vec<T>], lr: f64) -> Result<()> {
        for (i, g) in grads.iter().enumerate() {
            if !g.iter().all(|v| v.is_finite()) {
                return Err(CoreError::NanGrad {
                    name: params.get(i).name.clone(),
                    step: self.step + 1,
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let h = self.hyper;
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);

        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(i);
            let m1 = &mut self.m1[i];
            let v = &mut self.v[i];
            match self.kind {
                OptimizerKind::Adam => {
                    for k in 0..g.len() {
                        let gk = g[k].to_f64();
                        let m = h.beta1 * m1[k].to_f64() + (1.0 - h.beta1) * gk;
                        let vv = h.beta2 * v[k].to_f64() + (1.0 - h.beta2) * gk * gk;
                        m1[k] = T::from_f64(m);
                        v[k] = T::from_f64(vv);
                        let m_hat = m / bc1;
                        let v_hat = vv / bc2;
                        let update = m_hat / (v_hat.sqrt() + h.eps) + h.weight_decay * p.data[k].to_f64();
                        p.data[k] = T::from_f64(p.data[k].to_f64() - lr * update);
                    }
                }
                OptimizerKind::Ademamix => {
                    let m2 = &mut self.m2[i];
                    for k in 0..g.len() {
                        let gk = g[k].to_f64();
                        let m = h.beta1 * m1[k].to_f64() + (1.0 - h.beta1) * gk;
                        let ms = h.beta3 * m2[k].to_f64() + (1.0 - h.beta3) * gk;
                        let vv = h.beta2 * v[k].to_f64() + (1.0 - h.beta2) * gk * gk;
                        m1[k] = T::from_f64(m);
                        m2[k] = T::from_f64(ms);
                        v[k] = T::from_f64(vv);
                        // bias correction on the fast moment and the second
                        // moment only; the slow EMA enters uncorrected
                        let m_hat = m / bc1;
                        let v_hat = vv / bc2;
                        let update = (m_hat + h.alpha * ms) / (v_hat.sqrt() + h.eps)
                            + h.weight_decay * p.data[k].to_f64();
                        p.data[k] = T::from_f64(p.data[k].to_f64() - lr * update);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Shadow copy of the parameters updated as
/// `shadow <- decay * shadow + (1 - decay) * params`; evaluation reads the
/// de-biased shadow.
///
/// Raw shadows start at the initialization, so after t steps a decay^t
/// fraction of the shadow is still the random init. Evaluation weights
/// remove that term exactly, `(shadow - decay^t * init) / (1 - decay^t)`,
/// the same correction Adam applies to its moments. Without it, short runs
/// evaluate a blend of the trained model and its random initialization,
/// which distorts comparisons between variants.
pub struct Ema<T> {
    pub decay: f64,
    steps: usize,
    shadow: Vec<Vec<T>>,
    init: Vec<Vec<T>>,
}

impl<T: Element> Ema<T> {
    pub fn new(decay: f64, params: &ParamStore<T>) -> Self {
        let snapshot: Vec<Vec<T>> = params.iter().map(|p| p.data.clone()).collect();
        Ema { decay, steps: 0, shadow: snapshot.clone(), init: snapshot }
    }

    pub fn update(&mut self, params: &ParamStore<T>) {
        self.steps += 1;
        for (s, p) in self.shadow.iter_mut().zip(params.iter()) {
            for (sv, &pv) in s.iter_mut().zip(p.data.iter()) {
                let value = self.decay * sv.to_f64() + (1.0 - self.decay) * pv.to_f64();
                *sv = T::from_f64(value);
            }
        }
    }

    /// Raw shadow value (tests use this to check the recursion).
    pub fn raw_shadow(&self, param_idx: usize) -> &[T] {
        &self.shadow[param_idx]
    }

    /// Write the de-biased evaluation weights into a parameter store of the
    /// same layout. Before any update this is the initialization itself.
    pub fn write_to(&self, params: &mut ParamStore<T>) {
        let dt = self.decay.powi(self.steps as i32);
        let denom = 1.0 - dt;
        for (i, (s, init)) in self.shadow.iter().zip(self.init.iter()).enumerate() {
            let dst = &mut params.get_mut(i).data;
            if self.steps == 0 || denom <= 0.0 {
                dst.copy_from_slice(s);
                continue;
            }
            for ((d, &sv), &iv) in dst.iter_mut().zip(s.iter()).zip(init.iter()) {
                *d = T::from_f64((sv.to_f64() - dt * iv.to_f64()) / denom);
            }
        }
    }
}
