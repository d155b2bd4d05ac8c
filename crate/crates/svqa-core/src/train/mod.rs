//! Teacher-forced training: freeze policy, per-epoch shuffling, tube-masked
//! video input, batched gradient averaging, and Adam updates — all fully
//! determined by the run seed.

mod checkpoint;
mod loss;

pub use checkpoint::{
    apply_checkpoint, file_fnv1a, load_checkpoint, save_checkpoint, LoadedCheckpoint,
};
pub use loss::{answer_targets, sequence_loss, LossKind};

use crate::autograd::{AdamState, ParamId, Tape};
use crate::error::{Error, Result};
use crate::model::VqaModel;
use crate::rng::SeededRng;
use crate::video::{make_tube_mask, Clip, TubeMask};

const SHUFFLE_SALT: u64 = 0x7368_7566_666c_65; // "shuffle"
const MASK_SALT: u64 = 0x6d61_736b; // "mask"

/// Which parameters train.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezePolicy {
    /// Everything except the low-rank-adapted base matrices, which always
    /// stay frozen so merging stays exact.
    Full,
    /// The adapter-centric recipe for a decoder treated as pretrained: only
    /// the cube projection, the video encoder's final norm, the whole text
    /// (fusion) encoder, and the adapters themselves train.
    Adapters,
}

impl FreezePolicy {
    pub fn parse(s: &str) -> Result<FreezePolicy> {
        match s {
            "full" => Ok(FreezePolicy::Full),
            "adapters" => Ok(FreezePolicy::Adapters),
            other => Err(Error::Config(format!(
                "unknown freeze policy {other:?}, expected full or adapters"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FreezePolicy::Full => "full",
            FreezePolicy::Adapters => "adapters",
        }
    }

    /// Whether a named parameter trains under this policy, given the list
    /// of adapter-carrying base matrices.
    pub fn trainable(&self, name: &str, adapted: &[String]) -> bool {
        match self {
            FreezePolicy::Full => !adapted.iter().any(|a| a == name),
            FreezePolicy::Adapters => {
                name == "video.patch.w"
                    || name.starts_with("video.final_ln")
                    || name.starts_with("text.")
                    || name.contains(".lora")
            }
        }
    }
}

/// Apply a freeze policy to the model; returns how many parameters train.
pub fn apply_freeze(model: &mut VqaModel, policy: FreezePolicy) -> usize {
    let adapted = model.decoder.adapted_base_names();
    model
        .params
        .set_trainable(|name| policy.trainable(name, &adapted))
}

/// One training example, already tokenized.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub clip: Clip,
    pub question_ids: Vec<usize>,
    pub answer_ids: Vec<usize>,
    pub keyword_flags: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub lambda: f32,
    pub loss: LossKind,
    pub mask_ratio: f32,
    pub train_masking: bool,
    pub freeze: FreezePolicy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            lr: 3e-4,
            batch_size: 8,
            lambda: 1.0,
            loss: LossKind::WeightedBce,
            mask_ratio: 0.75,
            train_masking: true,
            freeze: FreezePolicy::Full,
            seed: 42,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f32,
}

/// Run the training loop. `on_epoch` fires after every epoch with its mean
/// item loss. Identical (model, items, config) always produce identical
/// parameter trajectories.
pub fn train(
    model: &mut VqaModel,
    items: &[TrainItem],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    if items.is_empty() {
        return Err(Error::BadArgument {
            op: "train",
            msg: "no training items".into(),
        });
    }
    if model.adapters_merged() {
        return Err(Error::BadArgument {
            op: "train",
            msg: "adapters are merged; unmerge before training".into(),
        });
    }
    let n_trainable = apply_freeze(model, cfg.freeze);
    if n_trainable == 0 {
        return Err(Error::BadArgument {
            op: "train",
            msg: "freeze policy leaves nothing trainable".into(),
        });
    }

    let trainables: Vec<(ParamId, usize)> = model
        .params
        .iter()
        .filter(|(_, p)| p.tensor.requires_grad())
        .map(|(id, p)| (id, p.tensor.numel()))
        .collect();
    let (_, h_grid, w_grid) = model.config.token_grid();
    let base_rng = SeededRng::new(cfg.seed);
    let mut opt = AdamState::new(cfg.lr);
    let batch_size = cfg.batch_size.max(1);

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        base_rng
            .derive2(SHUFFLE_SALT, epoch as u64)
            .shuffle(&mut order);

        let mut loss_sum = 0.0f64;
        for batch in order.chunks(batch_size) {
            let mut acc: Vec<Vec<f32>> = trainables
                .iter()
                .map(|&(_, numel)| vec![0.0; numel])
                .collect();
            for &ix in batch {
                let item = &items[ix];
                let mask: Option<TubeMask> = if cfg.train_masking && cfg.mask_ratio > 0.0 {
                    let mut mrng = base_rng.derive2(MASK_SALT ^ epoch as u64, ix as u64);
                    Some(make_tube_mask(h_grid, w_grid, cfg.mask_ratio, &mut mrng)?)
                } else {
                    None
                };

                let mut tape = Tape::new();
                let reg = model.params.register(&mut tape);
                let vf = model.encode_video(&mut tape, &reg, &item.clip, mask.as_ref())?;
                let fused = model.fuse(&mut tape, &reg, &item.question_ids, vf)?;
                let scores = model.answer_scores(&mut tape, &reg, fused.fused, &item.answer_ids)?;
                let (targets, weights) =
                    answer_targets(&item.answer_ids, &item.keyword_flags, cfg.lambda)?;
                let loss_id = sequence_loss(&mut tape, scores, &targets, &weights, cfg.loss)?;

                let lv = tape.scalar_value(loss_id);
                if !lv.is_finite() {
                    return Err(Error::NonFiniteLoss(epoch));
                }
                loss_sum += lv as f64;

                let grads = tape.backward(loss_id)?;
                for (slot, &(pid, _)) in acc.iter_mut().zip(&trainables) {
                    if let Some(g) = grads.get(reg[pid.0]) {
                        for (s, &gv) in slot.iter_mut().zip(g) {
                            *s += gv;
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f32;
            let step_grads: Vec<(ParamId, Vec<f32>)> = trainables
                .iter()
                .zip(acc)
                .map(|(&(pid, _), mut g)| {
                    for v in &mut g {
                        *v *= scale;
                    }
                    (pid, g)
                })
                .collect();
            opt.step(&mut model.params, &step_grads)?;
        }

        let stats = EpochStats {
            epoch,
            mean_loss: (loss_sum / items.len() as f64) as f32,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}
