use rand::Rng;

use super::AgentConfig;
use crate::error::{contract, Result};
use crate::kernel::{Bound, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::meanings::{EncodedMeaning, GameConfig, Representation};

#[derive(Debug, Clone)]
enum Kind {
    /// Attention over object embeddings driving an LSTM for `rounds` steps.
    Attention {
        objects: ParamId,
        att_w: ParamId,
        att_b: ParamId,
        lstm_w: ParamId,
        lstm_b: ParamId,
        rounds: usize,
    },
    /// `tanh(x · w + b)` on the concatenated count blocks.
    Linear { w: ParamId, b: ParamId },
}

/// Maps a batch of encoded meanings to `B x d_hid` hidden vectors.
#[derive(Debug, Clone)]
pub struct SetEncoder {
    kind: Kind,
    d_hid: usize,
}

impl SetEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        game: &GameConfig,
        agent: &AgentConfig,
        rng: &mut R,
    ) -> Self {
        let (d_emb, d_hid) = (agent.d_emb, agent.d_hid);
        let kind = match game.representation {
            Representation::SetSequence => Kind::Attention {
                objects: store.add_embedding(
                    format!("{prefix}.objects"),
                    game.num_object_types,
                    d_emb,
                    rng,
                ),
                att_w: store.add_weight(format!("{prefix}.attention.w"), d_hid + d_emb, 1, rng),
                att_b: store.add_bias(format!("{prefix}.attention.b"), 1),
                lstm_w: store.add_weight(format!("{prefix}.lstm.w"), d_emb + d_hid, 4 * d_hid, rng),
                lstm_b: store.add_bias(format!("{prefix}.lstm.b"), 4 * d_hid),
                rounds: game.num_object_types,
            },
            Representation::LinearCounts => Kind::Linear {
                w: store.add_weight(format!("{prefix}.linear.w"), game.linear_width(), d_hid, rng),
                b: store.add_bias(format!("{prefix}.linear.b"), d_hid),
            },
        };
        Self { kind, d_hid }
    }

    pub fn encode(&self, g: &mut Graph, p: &Bound, inputs: &[EncodedMeaning]) -> Result<NodeId> {
        contract!(!inputs.is_empty(), "set encoder called on an empty batch");
        match &self.kind {
            Kind::Attention {
                objects,
                att_w,
                att_b,
                lstm_w,
                lstm_b,
                rounds,
            } => {
                let mut ids = Vec::new();
                let mut segments = Vec::new();
                for (b, input) in inputs.iter().enumerate() {
                    let EncodedMeaning::Sequence(seq) = input else {
                        return Err(crate::Error::Contract(
                            "attention encoder needs set_sequence inputs".into(),
                        ));
                    };
                    contract!(!seq.is_empty(), "empty object sequence");
                    ids.extend_from_slice(seq);
                    segments.extend(std::iter::repeat(b).take(seq.len()));
                }
                let batch = inputs.len();
                let w = g.gather_rows(p[*objects], &ids)?;
                let mut q = g.input(Tensor::zeros(&[batch, self.d_hid]))?;
                let mut c = g.input(Tensor::zeros(&[batch, self.d_hid]))?;
                for _ in 0..*rounds {
                    let q_rep = g.gather_rows(q, &segments)?;
                    let qw = g.concat(&[q_rep, w])?;
                    let e = g.affine(qw, p[*att_w], p[*att_b])?;
                    let a = g.sigmoid(e)?;
                    let r = g.segment_weighted_sum(a, w, &segments, batch)?;
                    let state = g.lstm_cell(r, q, c, p[*lstm_w], p[*lstm_b])?;
                    (q, c) = g.lstm_split(state)?;
                }
                Ok(q)
            }
            Kind::Linear { w, b } => {
                let width = g.value(p[*w]).rows();
                let mut data = Vec::with_capacity(inputs.len() * width);
                for input in inputs {
                    let EncodedMeaning::Linear(v) = input else {
                        return Err(crate::Error::Contract(
                            "linear encoder needs linear_counts inputs".into(),
                        ));
                    };
                    contract!(v.len() == width, "linear input width {} != {width}", v.len());
                    data.extend_from_slice(v);
                }
                let x = g.input(Tensor::matrix(inputs.len(), width, data)?)?;
                let z = g.affine(x, p[*w], p[*b])?;
                g.tanh(z)
            }
        }
    }
}
