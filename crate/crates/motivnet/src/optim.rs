//! SGD / AdamW optimizers with per-parameter state tensors exposed for
//! weight-map transfer, and the shared learning-rate schedule.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::store::{self, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd {
        momentum: f64,
        weight_decay: f64,
    },
    AdamW {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl OptimizerKind {
    fn slot_names(&self) -> &'static [&'static str] {
        match self {
            OptimizerKind::Sgd { .. } => &["momentum"],
            OptimizerKind::AdamW { .. } => &["m", "v"],
        }
    }
}

/// Per-parameter slot tensors plus the scalar step counter. Slots are
/// eagerly zero-initialized at construction so state transfer works before
/// the first step.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub step: u64,
    slot_names: Vec<String>,
    params: Vec<String>,
    slots: HashMap<String, Vec<Tensor>>,
}

impl OptimizerState {
    pub fn new(kind: &OptimizerKind, store: &ParamStore) -> Self {
        let slot_names: Vec<String> = kind.slot_names().iter().map(|s| s.to_string()).collect();
        let params: Vec<String> = store.param_names().map(str::to_string).collect();
        let slots = params
            .iter()
            .map(|name| {
                let shape = store.value(name).unwrap().shape().to_vec();
                (
                    name.clone(),
                    slot_names.iter().map(|_| Tensor::zeros(&shape)).collect(),
                )
            })
            .collect();
        OptimizerState {
            step: 0,
            slot_names,
            params,
            slots,
        }
    }

    pub fn slot_names(&self) -> &[String] {
        &self.slot_names
    }

    pub fn param_names(&self) -> &[String] {
        &self.params
    }

    pub fn slot(&self, param: &str, slot: &str) -> Result<&Tensor> {
        let i = self.slot_index(slot)?;
        self.slots
            .get(param)
            .map(|v| &v[i])
            .ok_or_else(|| Error::UnknownName(param.to_string()))
    }

    pub fn slot_mut(&mut self, param: &str, slot: &str) -> Result<&mut Tensor> {
        let i = self.slot_index(slot)?;
        self.slots
            .get_mut(param)
            .map(|v| &mut v[i])
            .ok_or_else(|| Error::UnknownName(param.to_string()))
    }

    fn slot_index(&self, slot: &str) -> Result<usize> {
        self.slot_names
            .iter()
            .position(|s| s == slot)
            .ok_or_else(|| Error::UnknownName(format!("slot `{slot}`")))
    }

    /// Same record container as model checkpoints; record names are
    /// `param#slot`, plus a `__step__` scalar.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&1u32.to_le_bytes());
        let n = (self.params.len() * self.slot_names.len() + 1) as u64;
        out.extend_from_slice(&n.to_le_bytes());
        store::write_record(&mut out, "__step__", false, &Tensor::scalar(self.step as f64));
        for p in &self.params {
            for (i, s) in self.slot_names.iter().enumerate() {
                store::write_record(&mut out, &format!("{p}#{s}"), false, &self.slots[p][i]);
            }
        }
        out
    }

    pub fn restore(&mut self, bytes: &[u8]) -> Result<()> {
        let records = store::read_checkpoint(bytes)?;
        for rec in records {
            if rec.name == "__step__" {
                self.step = rec.value.item()? as u64;
                continue;
            }
            let (param, slot) = rec.name.split_once('#').ok_or_else(|| {
                Error::Checkpoint(format!("malformed state record `{}`", rec.name))
            })?;
            let target = self.slot_mut(param, slot).map_err(|_| {
                Error::Checkpoint(format!("state record `{}` has no slot here", rec.name))
            })?;
            if target.shape() != rec.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "state record `{}` shape {:?} vs {:?}",
                    rec.name,
                    rec.value.shape(),
                    target.shape()
                )));
            }
            *target = rec.value;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub state: OptimizerState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, store: &ParamStore) -> Self {
        let state = OptimizerState::new(&kind, store);
        Optimizer { kind, state }
    }

    /// One update over every parameter, then the gradient-zeroing epilogue.
    /// A non-finite gradient aborts before any parameter is touched.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        let names: Vec<String> = store.param_names().map(str::to_string).collect();
        for name in &names {
            if !store.grad(name)?.all_finite() {
                return Err(Error::NanGradient(name.clone()));
            }
        }
        self.state.step += 1;
        match self.kind {
            OptimizerKind::Sgd {
                momentum,
                weight_decay,
            } => {
                for name in &names {
                    let grad = store.grad(name)?.data().to_vec();
                    let buf = self.state.slot_mut(name, "momentum")?;
                    let w = store.value(name)?.data().to_vec();
                    for ((bv, gv), wv) in buf.data_mut().iter_mut().zip(grad.iter()).zip(w.iter())
                    {
                        let g = gv + weight_decay * wv;
                        *bv = momentum * *bv + g;
                    }
                    let buf = self.state.slot(name, "momentum")?.data().to_vec();
                    let value = store.value_mut(name)?;
                    for (wv, bv) in value.data_mut().iter_mut().zip(buf.iter()) {
                        *wv -= lr * bv;
                    }
                }
            }
            OptimizerKind::AdamW {
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                let t = self.state.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for name in &names {
                    let grad = store.grad(name)?.data().to_vec();
                    {
                        let m = self.state.slot_mut(name, "m")?;
                        for (mv, gv) in m.data_mut().iter_mut().zip(grad.iter()) {
                            *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        }
                    }
                    {
                        let v = self.state.slot_mut(name, "v")?;
                        for (vv, gv) in v.data_mut().iter_mut().zip(grad.iter()) {
                            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        }
                    }
                    let m = self.state.slot(name, "m")?.data().to_vec();
                    let v = self.state.slot(name, "v")?.data().to_vec();
                    let value = store.value_mut(name)?;
                    for ((wv, mv), vv) in value.data_mut().iter_mut().zip(m.iter()).zip(v.iter())
                    {
                        let mhat = mv / bc1;
                        let vhat = vv / bc2;
                        *wv -= lr * weight_decay * *wv + lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        store.zero_grads();
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    CosineDecay,
}

/// Learning-rate schedule indexed by global epoch fraction, shared by both
/// optimizers of a run.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base_lr: f64,
}

impl Schedule {
    pub fn lr_at(&self, epoch_fraction: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&epoch_fraction) {
            return Err(Error::Config(format!(
                "epoch fraction {epoch_fraction} outside [0, 1]"
            )));
        }
        Ok(match self.kind {
            ScheduleKind::Constant => self.base_lr,
            ScheduleKind::CosineDecay => {
                self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * epoch_fraction).cos())
            }
        })
    }
}
