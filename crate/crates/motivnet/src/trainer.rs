//! The dual-model training loop: a base network trained on every batch and
//! a larger motivated network activated while the motivation condition
//! holds, with full weight and optimizer-state transfer at each switch.
//! Also the two ablation drivers that force motivated batches by schedule
//! instead of by condition.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Graph;
use crate::data::{shuffled_indices, Dataset};
use crate::error::{Error, Result};
use crate::motivation::{gradient_norm, ConditionKind, MotivationState};
use crate::optim::{Optimizer, OptimizerKind, Schedule};
use crate::weight_map::{
    build_map, copy_big_small, copy_optimizer_state, copy_small_big, Direction, WeightMap,
};
use crate::zoo::{flops_forward, ArchConfig, Model};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum Mode {
    /// Base model only; the condition is never consulted.
    Classical,
    /// Full condition-driven dual training.
    Motivated,
    /// Per epoch, a uniformly drawn number of uniformly drawn batch
    /// indices run motivated; the condition is ignored.
    AblationA,
    /// Exactly `counts[e]` motivated batches per epoch at drawn indices.
    AblationB { counts: Vec<u64> },
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub base: ArchConfig,
    pub motivated: ArchConfig,
    pub condition: ConditionKind,
    pub optimizer: OptimizerKind,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.condition.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if self.mode != Mode::Classical {
            self.motivated.validate()?;
            build_map(&self.base, &self.motivated)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ActiveModel {
    Base,
    Motivated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SwitchEvent {
    None,
    ToMotivated,
    ToBase,
}

/// One row per training batch. The switch event is recorded on the first
/// batch running under the new model; the forced epoch-end switch-back is
/// recorded on the epoch's last batch.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BatchTrace {
    pub epoch: usize,
    pub batch: usize,
    pub active: ActiveModel,
    pub loss: f64,
    pub lr: f64,
    pub switch: SwitchEvent,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub trace: Vec<BatchTrace>,
    /// Motivated-batch count per epoch.
    pub activations: Vec<u64>,
    pub base_eval_acc: f64,
    pub mot_eval_acc: Option<f64>,
    pub base_fwd_flops: u64,
    pub mot_fwd_flops: u64,
    /// Checkpoint bytes of the final base / motivated stores.
    pub base_checkpoint: Vec<u8>,
    pub mot_checkpoint: Option<Vec<u8>>,
    pub valid: bool,
    pub abort_reason: Option<String>,
}

/// Top-1 accuracy over the eval split, in eval mode. Ties go to the lowest
/// class index.
pub fn evaluate(model: &mut Model, data: &Dataset, batch_size: usize) -> Result<f64> {
    if data.eval_len() == 0 {
        return Err(Error::Usage("empty evaluation split".into()));
    }
    let mut correct = 0usize;
    let all: Vec<usize> = (0..data.eval_len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let (x, y) = data.eval_batch(chunk)?;
        let mut g = Graph::new();
        let logits = model.forward(&mut g, x, false)?;
        let out = g.value(logits);
        let classes = out.shape()[1];
        for (row, &label) in y.iter().enumerate() {
            let scores = &out.data()[row * classes..(row + 1) * classes];
            let mut best = 0usize;
            for (c, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = c;
                }
            }
            correct += usize::from(best == label);
        }
    }
    Ok(correct as f64 / data.eval_len() as f64)
}

struct Half {
    model: Model,
    optimizer: Optimizer,
}

impl Half {
    fn new(config: ArchConfig, seed: u64, kind: OptimizerKind) -> Result<Half> {
        let model = Model::build(config, seed)?;
        let optimizer = Optimizer::new(kind, &model.store);
        Ok(Half { model, optimizer })
    }
}

/// Run one training according to `config.mode`.
pub fn train(config: &RunConfig, data: &Dataset) -> Result<RunReport> {
    train_scripted(config, data, None)
}

/// Like [`train`], but an optional script replaces the scalar fed to the
/// motivation condition (the actual optimization is untouched). Test hook
/// for deterministic switch scenarios.
pub fn train_scripted(
    config: &RunConfig,
    data: &Dataset,
    script: Option<&[f64]>,
) -> Result<RunReport> {
    config.validate()?;
    if data.train_len() < config.batch_size {
        return Err(Error::Config(format!(
            "train split of {} smaller than batch size {}",
            data.train_len(),
            config.batch_size
        )));
    }
    if data.num_classes != config.base.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, model expects {}",
            data.num_classes, config.base.num_classes
        )));
    }

    let dual = config.mode != Mode::Classical;
    // per-purpose RNG streams: identical data order and augmentation draws
    // across modes with the same seed
    let mut base = Half::new(
        config.base.clone(),
        config.seed ^ 0x6261_7365, // "base"
        config.optimizer.clone(),
    )?;
    let mut mot = if dual {
        Some(Half::new(
            config.motivated.clone(),
            config.seed ^ 0x6d6f_7469, // "moti"
            config.optimizer.clone(),
        )?)
    } else {
        None
    };
    let map = if dual {
        Some(build_map(&config.base, &config.motivated)?)
    } else {
        None
    };
    let mut augment_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6175_676d); // "augm"
    let mut ablation_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6162_6c61); // "abla"

    // one batch held out for the validation condition, never trained on
    let holdout = matches!(config.condition, ConditionKind::ValidationLoss { .. })
        && matches!(config.mode, Mode::Motivated);
    let train_n = data.train_len() - if holdout { config.batch_size } else { 0 };
    let holdout_idx: Vec<usize> = (train_n..data.train_len()).collect();
    let batches = train_n / config.batch_size;
    if batches == 0 {
        return Err(Error::Config("no full training batch available".into()));
    }
    if let Mode::AblationB { counts } = &config.mode {
        if counts.len() != config.epochs {
            return Err(Error::Config(format!(
                "ablation counts cover {} epochs, run has {}",
                counts.len(),
                config.epochs
            )));
        }
        if counts.iter().any(|&c| c > batches as u64) {
            return Err(Error::Config(format!(
                "ablation count exceeds {batches} batches per epoch"
            )));
        }
    }

    let mut state = MotivationState::new(config.condition.clone())?;
    let mut trace: Vec<BatchTrace> = Vec::with_capacity(config.epochs * batches);
    let mut activations = vec![0u64; config.epochs];
    let mut active = ActiveModel::Base;
    let mut abort: Option<String> = None;

    'epochs: for epoch in 0..config.epochs {
        let order = shuffled_indices(config.seed, epoch as u64, train_n);
        let lr = config
            .schedule
            .lr_at(epoch as f64 / config.epochs as f64)?;
        let forced: Option<HashSet<usize>> = match &config.mode {
            Mode::Classical | Mode::Motivated => None,
            Mode::AblationA => {
                let m = ablation_rng.gen_range(0..=batches);
                Some(draw_indices(&mut ablation_rng, batches, m))
            }
            Mode::AblationB { counts } => Some(draw_indices(
                &mut ablation_rng,
                batches,
                counts[epoch] as usize,
            )),
        };

        let mut pending = SwitchEvent::None;
        for b in 0..batches {
            // ablation schedules override everything, including copies
            if let Some(forced) = &forced {
                let want = if forced.contains(&b) {
                    ActiveModel::Motivated
                } else {
                    ActiveModel::Base
                };
                if want != active {
                    switch(
                        &mut base,
                        mot.as_mut().unwrap(),
                        map.as_ref().unwrap(),
                        want,
                    )?;
                    pending = match want {
                        ActiveModel::Motivated => SwitchEvent::ToMotivated,
                        ActiveModel::Base => SwitchEvent::ToBase,
                    };
                    active = want;
                }
            }

            let idx = &order[b * config.batch_size..(b + 1) * config.batch_size];
            let (x, y) = data.train_batch(idx, Some(&mut augment_rng))?;
            let half = match active {
                ActiveModel::Base => &mut base,
                ActiveModel::Motivated => mot.as_mut().unwrap(),
            };
            let mut g = Graph::new();
            let logits = half.model.forward(&mut g, x, true)?;
            let loss_id = g.softmax_cross_entropy(logits, &y)?;
            let loss = g.value(loss_id).item()?;
            if loss.is_nan() {
                abort = Some(format!("NaN loss at epoch {epoch}, batch {b}"));
                break 'epochs;
            }
            g.backward(loss_id, &mut half.model.store)?;
            let grad_signal = matches!(config.condition, ConditionKind::GradientSlope { .. })
                .then(|| gradient_norm(&half.model.store));
            if let Err(e) = half.optimizer.step(&mut half.model.store, lr) {
                abort = Some(format!("epoch {epoch}, batch {b}: {e}"));
                break 'epochs;
            }

            if active == ActiveModel::Motivated {
                activations[epoch] += 1;
            }
            let mut row = BatchTrace {
                epoch,
                batch: b,
                active,
                loss,
                lr,
                switch: std::mem::replace(&mut pending, SwitchEvent::None),
            };

            if config.mode == Mode::Motivated {
                let signal = match script {
                    Some(s) => s[trace.len() % s.len()],
                    None => match config.condition {
                        ConditionKind::ConsecutiveDecrease { .. }
                        | ConditionKind::EmaDecrease { .. } => loss,
                        ConditionKind::ValidationLoss { .. } => {
                            let (vx, vy) = data.train_batch(&holdout_idx, None)?;
                            let half = match active {
                                ActiveModel::Base => &mut base,
                                ActiveModel::Motivated => mot.as_mut().unwrap(),
                            };
                            let mut vg = Graph::new();
                            let vl = half.model.forward(&mut vg, vx, false)?;
                            let vloss = vg.softmax_cross_entropy(vl, &vy)?;
                            vg.value(vloss).item()?
                        }
                        ConditionKind::GradientSlope { .. } => grad_signal.unwrap(),
                    },
                };
                let want = if state.observe(signal) {
                    ActiveModel::Motivated
                } else {
                    ActiveModel::Base
                };
                if want != active {
                    if b + 1 < batches {
                        switch(
                            &mut base,
                            mot.as_mut().unwrap(),
                            map.as_ref().unwrap(),
                            want,
                        )?;
                        pending = match want {
                            ActiveModel::Motivated => SwitchEvent::ToMotivated,
                            ActiveModel::Base => SwitchEvent::ToBase,
                        };
                        active = want;
                    }
                    // a flip on the epoch's last batch is subsumed by the
                    // forced epoch-end switch-back below
                }
            }

            // forced switch-back: every epoch ends (and starts) on base
            if b + 1 == batches && active == ActiveModel::Motivated {
                switch(
                    &mut base,
                    mot.as_mut().unwrap(),
                    map.as_ref().unwrap(),
                    ActiveModel::Base,
                )?;
                active = ActiveModel::Base;
                row.switch = SwitchEvent::ToBase;
            }
            trace.push(row);
        }
        state.epoch_reset();
    }

    // a run that aborted mid-epoch still needs the base model back in sync
    if active == ActiveModel::Motivated {
        if let (Some(mot), Some(map)) = (mot.as_mut(), map.as_ref()) {
            switch(&mut base, mot, map, ActiveModel::Base)?;
        }
    }

    let base_eval_acc = evaluate(&mut base.model, data, config.batch_size)?;
    let mot_eval_acc = match mot.as_mut() {
        Some(m) => Some(evaluate(&mut m.model, data, config.batch_size)?),
        None => None,
    };
    Ok(RunReport {
        mode: config.mode.clone(),
        seed: config.seed,
        epochs: config.epochs,
        batches_per_epoch: batches,
        trace,
        activations,
        base_eval_acc,
        mot_eval_acc,
        base_fwd_flops: flops_forward(&config.base)?,
        mot_fwd_flops: if dual {
            flops_forward(&config.motivated)?
        } else {
            flops_forward(&config.base)?
        },
        base_checkpoint: base.model.store.snapshot(),
        mot_checkpoint: mot.map(|m| m.model.store.snapshot()),
        valid: abort.is_none(),
        abort_reason: abort,
    })
}

fn draw_indices(rng: &mut ChaCha8Rng, batches: usize, m: usize) -> HashSet<usize> {
    let mut all: Vec<usize> = (0..batches).collect();
    all.shuffle(rng);
    all.into_iter().take(m).collect()
}

/// Weight copy then optimizer-state copy, in the direction of the new
/// active model.
fn switch(base: &mut Half, mot: &mut Half, map: &WeightMap, to: ActiveModel) -> Result<()> {
    match to {
        ActiveModel::Motivated => {
            copy_small_big(&base.model.store, &mut mot.model.store, map)?;
            copy_optimizer_state(
                &base.optimizer.state,
                &mut mot.optimizer.state,
                map,
                Direction::SmallToBig,
            )
        }
        ActiveModel::Base => {
            copy_big_small(&mut base.model.store, &mot.model.store, map)?;
            copy_optimizer_state(
                &mot.optimizer.state,
                &mut base.optimizer.state,
                map,
                Direction::BigToSmall,
            )
        }
    }
}

pub fn run_ablation_a(config: &RunConfig, data: &Dataset) -> Result<RunReport> {
    let mut config = config.clone();
    config.mode = Mode::AblationA;
    train(&config, data)
}

pub fn run_ablation_b(config: &RunConfig, data: &Dataset, counts: Vec<u64>) -> Result<RunReport> {
    let mut config = config.clone();
    config.mode = Mode::AblationB { counts };
    train(&config, data)
}

/// Serialize the trace as the persisted CSV format.
pub fn trace_to_csv(trace: &[BatchTrace]) -> String {
    let mut out = String::from("epoch,batch,active,loss,lr,switch\n");
    for row in trace {
        let active = match row.active {
            ActiveModel::Base => "base",
            ActiveModel::Motivated => "motivated",
        };
        let switch = match row.switch {
            SwitchEvent::None => "none",
            SwitchEvent::ToMotivated => "to_motivated",
            SwitchEvent::ToBase => "to_base",
        };
        out.push_str(&format!(
            "{},{},{},{:.17e},{:.17e},{}\n",
            row.epoch, row.batch, active, row.loss, row.lr, switch
        ));
    }
    out
}
