use crate::autograd::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::text::EOS;

/// Which per-position objective scores the decoder output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Every vocabulary entry as an independent sigmoid label against the
    /// one-hot target, averaged over the vocabulary.
    WeightedBce,
    /// Conventional softmax cross entropy on the target id.
    SoftmaxXent,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<LossKind> {
        match s {
            "wbce" => Ok(LossKind::WeightedBce),
            "softmax-ce" => Ok(LossKind::SoftmaxXent),
            other => Err(Error::Config(format!(
                "unknown loss {other:?}, expected wbce or softmax-ce"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::WeightedBce => "wbce",
            LossKind::SoftmaxXent => "softmax-ce",
        }
    }
}

/// Teacher-forcing targets and per-position loss weights for one answer.
///
/// Targets are the answer ids followed by the end marker. Positions flagged
/// as keyword tokens weigh `lambda`, all others (including the end marker)
/// weigh one.
pub fn answer_targets(
    answer_ids: &[usize],
    keyword_flags: &[bool],
    lambda: f32,
) -> Result<(Vec<usize>, Vec<f32>)> {
    if keyword_flags.len() != answer_ids.len() {
        return Err(Error::BadArgument {
            op: "answer_targets",
            msg: format!(
                "{} keyword flags for {} answer tokens",
                keyword_flags.len(),
                answer_ids.len()
            ),
        });
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::BadArgument {
            op: "answer_targets",
            msg: format!("keyword weight {lambda} must be positive and finite"),
        });
    }
    let mut targets = answer_ids.to_vec();
    targets.push(EOS);
    let mut weights: Vec<f32> = keyword_flags
        .iter()
        .map(|&k| if k { lambda } else { 1.0 })
        .collect();
    weights.push(1.0);
    Ok((targets, weights))
}

/// Score a (n+1) x vocab teacher-forcing readout against its targets.
pub fn sequence_loss(
    tape: &mut Tape,
    scores: TensorId,
    targets: &[usize],
    weights: &[f32],
    kind: LossKind,
) -> Result<TensorId> {
    match kind {
        LossKind::WeightedBce => tape.weighted_bce(scores, targets, weights),
        LossKind::SoftmaxXent => tape.softmax_xent(scores, targets, weights),
    }
}
