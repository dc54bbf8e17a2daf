use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::kernel::{log_softmax, Graph, NodeId, Tensor};
use crate::meanings::MeaningSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Straight-through Gumbel-softmax; the speaker trains by backpropagation.
    Gumbel,
    /// Score-function gradient with reward `-loss`.
    Reinforce,
    /// Score-function gradient baselined by the greedy rollout's reward.
    Scst,
}

impl Estimator {
    pub fn needs_greedy_rollout(self) -> bool {
        self == Estimator::Scst
    }
}

/// Summed cross-entropy of per-step logits against the canonical object
/// sequence of `target` followed by the stop class `|O|`.
pub fn reconstruct_loss(step_logits: &[Vec<f64>], target: &MeaningSet) -> Result<f64> {
    let mut seq = target.canonical_objects();
    seq.push(target.num_types());
    contract!(
        step_logits.len() == seq.len(),
        "{} logit steps for a target of {} steps",
        step_logits.len(),
        seq.len()
    );
    let mut total = 0.0;
    for (l, &t) in step_logits.iter().zip(&seq) {
        contract!(
            l.len() == target.num_types() + 1,
            "step logits have width {}, expected {}",
            l.len(),
            target.num_types() + 1
        );
        contract!(l.iter().all(|v| v.is_finite()), "non-finite logits");
        total -= log_softmax(l)[t];
    }
    Ok(total)
}

/// Cross-entropy of `softmax(logits)` against the correct candidate.
pub fn choice_loss(logits: &[f64], correct: usize) -> Result<f64> {
    contract!(logits.len() >= 2, "need at least 2 candidates");
    contract!(
        correct < logits.len(),
        "correct index {correct} out of range for {} candidates",
        logits.len()
    );
    contract!(logits.iter().all(|v| v.is_finite()), "non-finite logits");
    Ok(-log_softmax(logits)[correct])
}

/// `R - b` with `R = -loss`; `b` is zero for plain REINFORCE and the greedy
/// rollout's reward for SCST.
pub fn advantage(estimator: Estimator, loss: f64, greedy_loss: Option<f64>) -> Result<f64> {
    match estimator {
        Estimator::Gumbel => Err(crate::Error::Contract(
            "the Gumbel estimator has no surrogate; it backpropagates through the message".into(),
        )),
        Estimator::Reinforce => Ok(-loss),
        Estimator::Scst => {
            let g = greedy_loss.ok_or_else(|| {
                crate::Error::Contract("SCST needs the greedy rollout's loss".into())
            })?;
            Ok(g - loss)
        }
    }
}

/// Mean over rows of `-(R - b) · Σ_k log p(t_k)`, given the `B x 1` node of
/// `-Σ_k log p(t_k)`.
pub fn speaker_surrogate(
    g: &mut Graph,
    estimator: Estimator,
    neg_log_prob: NodeId,
    losses: &[f64],
    greedy_losses: Option<&[f64]>,
) -> Result<NodeId> {
    let rows = g.value(neg_log_prob).rows();
    contract!(
        losses.len() == rows,
        "{} losses for {rows} sampled messages",
        losses.len()
    );
    if let Some(gl) = greedy_losses {
        contract!(gl.len() == rows, "{} greedy losses for {rows} rows", gl.len());
    }
    let adv = losses
        .iter()
        .enumerate()
        .map(|(i, &l)| advantage(estimator, l, greedy_losses.map(|gl| gl[i])))
        .collect::<Result<Vec<f64>>>()?;
    let a = g.input(Tensor::matrix(rows, 1, adv)?)?;
    let weighted = g.mul(a, neg_log_prob)?;
    g.mean(weighted)
}
