//! Motivation conditions: per-batch boolean decisions that drive switching
//! between the base and motivated models.
//!
//! A condition watches one scalar signal per batch (training loss, its EMA,
//! a held-out batch loss, or the gradient norm) and flags "motivated" once
//! the signal has improved for `k` consecutive batches.

use crate::error::{Error, Result};
use crate::store::ParamStore;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ConditionKind {
    /// Training loss strictly decreases for k consecutive batches.
    ConsecutiveDecrease { k: u64 },
    /// EMA of the training loss drops by at least `rel_drop` relative to
    /// its previous value, k times in a row.
    EmaDecrease { k: u64, alpha: f64, rel_drop: f64 },
    /// Loss on one batch held out at run start strictly decreases.
    ValidationLoss { k: u64 },
    /// Euclidean norm of the concatenated gradients strictly increases.
    GradientSlope { k: u64 },
}

impl ConditionKind {
    pub fn k(&self) -> u64 {
        match *self {
            ConditionKind::ConsecutiveDecrease { k }
            | ConditionKind::EmaDecrease { k, .. }
            | ConditionKind::ValidationLoss { k }
            | ConditionKind::GradientSlope { k } => k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() < 1 {
            return Err(Error::Config("condition k must be >= 1".into()));
        }
        if let ConditionKind::EmaDecrease { alpha, rel_drop, .. } = *self {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Config(format!(
                    "EMA alpha must be in (0, 1), got {alpha}"
                )));
            }
            if rel_drop <= 0.0 {
                return Err(Error::Config(format!(
                    "EMA rel_drop must be > 0, got {rel_drop}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MotivationState {
    pub kind: ConditionKind,
    pub motivated: bool,
    pub consecutive_improve: u64,
    /// Last observed signal; +inf before any observation so the first real
    /// loss counts as a decrease (and the first gradient norm does not
    /// count as an increase).
    pub prev_signal: f64,
    /// EMA value for the EmaDecrease kind; None until the first update.
    pub ema: Option<f64>,
    pub nan_warnings: u64,
}

impl MotivationState {
    pub fn new(kind: ConditionKind) -> Result<Self> {
        kind.validate()?;
        Ok(MotivationState {
            kind,
            motivated: false,
            consecutive_improve: 0,
            prev_signal: f64::INFINITY,
            ema: None,
            nan_warnings: 0,
        })
    }

    /// alpha-weighted update of the loss EMA; the first observation sets the
    /// EMA to the loss itself. Returns the new EMA.
    pub fn ema_update(&mut self, loss: f64, alpha: f64) -> f64 {
        let new = match self.ema {
            None => loss,
            Some(prev) => alpha * loss + (1.0 - alpha) * prev,
        };
        self.ema = Some(new);
        new
    }

    /// Feed one batch signal; returns the new motivated flag.
    ///
    /// Improvement is a strict decrease for loss-like kinds, a strict
    /// increase for GradientSlope, and a relative EMA drop of at least
    /// `rel_drop` for EmaDecrease. A NaN signal counts as non-improvement,
    /// resets the counter and leaves the comparison state unchanged.
    pub fn observe(&mut self, signal: f64) -> bool {
        if signal.is_nan() {
            self.nan_warnings += 1;
            eprintln!("warning: NaN motivation signal; resetting improvement counter");
            self.consecutive_improve = 0;
            self.motivated = false;
            return self.motivated;
        }
        let improved = match self.kind {
            ConditionKind::ConsecutiveDecrease { .. } | ConditionKind::ValidationLoss { .. } => {
                signal < self.prev_signal
            }
            ConditionKind::GradientSlope { .. } => signal > self.prev_signal,
            ConditionKind::EmaDecrease { alpha, rel_drop, .. } => {
                let prev_ema = self.ema;
                let new_ema = self.ema_update(signal, alpha);
                match prev_ema {
                    None => true,
                    Some(prev) => new_ema <= (1.0 - rel_drop) * prev,
                }
            }
        };
        if improved {
            self.consecutive_improve += 1;
        } else {
            self.consecutive_improve = 0;
        }
        self.motivated = self.consecutive_improve >= self.kind.k();
        self.prev_signal = signal;
        self.motivated
    }

    /// Epoch-boundary reset: each epoch starts non-motivated with a zero
    /// counter, but the last observed signal (and EMA) persist.
    pub fn epoch_reset(&mut self) {
        self.motivated = false;
        self.consecutive_improve = 0;
    }
}

/// sqrt of the summed squared gradients over every trainable parameter.
pub fn gradient_norm(store: &ParamStore) -> f64 {
    let names: Vec<String> = store.param_names().map(str::to_string).collect();
    let mut acc = 0.0;
    for name in names {
        for &g in store.grad(&name).unwrap().data() {
            acc += g * g;
        }
    }
    acc.sqrt()
}
