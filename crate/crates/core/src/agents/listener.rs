use rand::Rng;

use super::{AgentConfig, GameKind, SetEncoder};
use crate::error::{contract, Result};
use crate::kernel::{Bound, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::meanings::{EncodedMeaning, GameConfig, MeaningSet};

#[derive(Debug, Clone)]
enum Head {
    /// Object-sequence decoder. Row `|O|` of `objects` is the start input;
    /// class `|O|` of the projection is stop.
    Reconstruct {
        objects: ParamId,
        dec_w: ParamId,
        dec_b: ParamId,
        out_w: ParamId,
        out_b: ParamId,
    },
    /// Scores candidates by dot products with their own set encodings.
    Select { encoder: SetEncoder },
}

/// How a message reaches the listener.
#[derive(Debug, Clone, Copy)]
pub enum MessageInput<'a> {
    /// Hard symbol ids, one message per batch row.
    Symbols(&'a [Vec<usize>]),
    /// Per step `B x |V|` one-hot (or relaxed) nodes.
    OneHot(&'a [NodeId]),
}

/// Message encoder plus a reconstruct or select head.
#[derive(Debug, Clone)]
pub struct Listener {
    game: GameConfig,
    agent: AgentConfig,
    kind: GameKind,
    params: ParamStore,
    symbols: ParamId,
    msg_w: ParamId,
    msg_b: ParamId,
    head: Head,
}

impl Listener {
    pub fn new<R: Rng + ?Sized>(
        game: &GameConfig,
        agent: &AgentConfig,
        kind: GameKind,
        rng: &mut R,
    ) -> Self {
        let (d_emb, d_hid) = (agent.d_emb, agent.d_hid);
        let o = game.num_object_types;
        let mut params = ParamStore::new();
        let symbols = params.add_embedding("listener.symbols", game.vocab_size, d_emb, rng);
        let msg_w = params.add_weight("listener.message.w", d_emb + d_hid, 4 * d_hid, rng);
        let msg_b = params.add_bias("listener.message.b", 4 * d_hid);
        let head = match kind {
            GameKind::Reconstruct => Head::Reconstruct {
                objects: params.add_embedding("listener.objects", o + 1, d_emb, rng),
                dec_w: params.add_weight("listener.decoder.w", d_emb + d_hid, 4 * d_hid, rng),
                dec_b: params.add_bias("listener.decoder.b", 4 * d_hid),
                out_w: params.add_weight("listener.out.w", d_hid, o + 1, rng),
                out_b: params.add_bias("listener.out.b", o + 1),
            },
            GameKind::Select => Head::Select {
                encoder: SetEncoder::new(&mut params, "listener.encoder", game, agent, rng),
            },
        };
        Self {
            game: *game,
            agent: *agent,
            kind,
            params,
            symbols,
            msg_w,
            msg_b,
            head,
        }
    }

    pub fn kind(&self) -> GameKind {
        self.kind
    }

    pub fn game(&self) -> &GameConfig {
        &self.game
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// `h^l_m` for a batch of messages (`B x d_hid`).
    pub fn encode_message(&self, g: &mut Graph, p: &Bound, message: MessageInput) -> Result<NodeId> {
        let steps = match message {
            MessageInput::Symbols(ms) => {
                contract!(!ms.is_empty(), "empty message batch");
                for m in ms {
                    contract!(
                        m.len() == self.game.message_length,
                        "message length {} != {}",
                        m.len(),
                        self.game.message_length
                    );
                    contract!(
                        m.iter().all(|&s| s < self.game.vocab_size),
                        "message {m:?} has a symbol outside a vocabulary of {}",
                        self.game.vocab_size
                    );
                }
                (0..self.game.message_length)
                    .map(|k| {
                        let ids: Vec<usize> = ms.iter().map(|m| m[k]).collect();
                        g.gather_rows(p[self.symbols], &ids)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            MessageInput::OneHot(nodes) => {
                contract!(
                    nodes.len() == self.game.message_length,
                    "{} message steps, expected {}",
                    nodes.len(),
                    self.game.message_length
                );
                nodes
                    .iter()
                    .map(|&n| g.matmul(n, p[self.symbols]))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let batch = g.value(steps[0]).rows();
        let mut h = g.input(Tensor::zeros(&[batch, self.agent.d_hid]))?;
        let mut c = g.input(Tensor::zeros(&[batch, self.agent.d_hid]))?;
        for x in steps {
            let state = g.lstm_cell(x, h, c, p[self.msg_w], p[self.msg_b])?;
            (h, c) = g.lstm_split(state)?;
        }
        Ok(h)
    }

    fn reconstruct_parts(&self) -> Result<(ParamId, ParamId, ParamId, ParamId, ParamId)> {
        match &self.head {
            Head::Reconstruct {
                objects,
                dec_w,
                dec_b,
                out_w,
                out_b,
            } => Ok((*objects, *dec_w, *dec_b, *out_w, *out_b)),
            Head::Select { .. } => Err(crate::Error::Contract(
                "select listener has no reconstruction head".into(),
            )),
        }
    }

    fn decoder_step(
        &self,
        g: &mut Graph,
        p: &Bound,
        ids: &[usize],
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let (objects, dec_w, dec_b, out_w, out_b) = self.reconstruct_parts()?;
        let x = g.gather_rows(p[objects], ids)?;
        let state = g.lstm_cell(x, h, c, p[dec_w], p[dec_b])?;
        let (h, c) = g.lstm_split(state)?;
        let logits = g.affine(h, p[out_w], p[out_b])?;
        Ok((logits, h, c))
    }

    /// Teacher-forced logits for each target, objects in canonical order
    /// followed by stop. Returns the per-step `B x (|O|+1)` logit nodes and
    /// the per-step targets (`None` past a row's end).
    pub fn reconstruct_logits(
        &self,
        g: &mut Graph,
        p: &Bound,
        h: NodeId,
        targets: &[MeaningSet],
    ) -> Result<(Vec<NodeId>, Vec<Vec<Option<usize>>>)> {
        let batch = g.value(h).rows();
        contract!(
            targets.len() == batch,
            "{} targets for a batch of {batch}",
            targets.len()
        );
        let stop = self.game.num_object_types;
        let seqs: Vec<Vec<usize>> = targets
            .iter()
            .map(|m| {
                let mut s = m.canonical_objects();
                s.push(stop);
                s
            })
            .collect();
        let steps = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut c = g.input(Tensor::zeros(&[batch, self.agent.d_hid]))?;
        let mut h = h;
        let mut logits = Vec::with_capacity(steps);
        let mut step_targets = Vec::with_capacity(steps);
        for k in 0..steps {
            let inputs: Vec<usize> = seqs
                .iter()
                .map(|s| if k == 0 { stop } else { *s.get(k - 1).unwrap_or(&stop) })
                .collect();
            let l;
            (l, h, c) = self.decoder_step(g, p, &inputs, h, c)?;
            logits.push(l);
            step_targets.push(seqs.iter().map(|s| s.get(k).copied()).collect());
        }
        Ok((logits, step_targets))
    }

    /// Teacher-forced sequence cross-entropy per row (`B x 1`).
    pub fn reconstruct_nll(
        &self,
        g: &mut Graph,
        p: &Bound,
        h: NodeId,
        targets: &[MeaningSet],
    ) -> Result<NodeId> {
        let (logits, step_targets) = self.reconstruct_logits(g, p, h, targets)?;
        let mut total: Option<NodeId> = None;
        for (l, t) in logits.into_iter().zip(&step_targets) {
            let ce = g.cross_entropy(l, t)?;
            total = Some(match total {
                Some(acc) => g.add(acc, ce)?,
                None => ce,
            });
        }
        Ok(total.expect("targets end with stop"))
    }

    /// Greedy object sequences (stop excluded), at most `N_o·|O| + 1` steps.
    pub fn reconstruct_greedy(&self, g: &mut Graph, p: &Bound, h: NodeId) -> Result<Vec<Vec<usize>>> {
        let batch = g.value(h).rows();
        let stop = self.game.num_object_types;
        let mut c = g.input(Tensor::zeros(&[batch, self.agent.d_hid]))?;
        let mut h = h;
        let mut inputs = vec![stop; batch];
        let mut out = vec![Vec::new(); batch];
        let mut done = vec![false; batch];
        for _ in 0..self.game.max_reconstruct_steps() {
            let l;
            (l, h, c) = self.decoder_step(g, p, &inputs, h, c)?;
            inputs = g.value(l).argmax_rows();
            for (r, &o) in inputs.iter().enumerate() {
                if done[r] {
                    continue;
                }
                if o == stop {
                    done[r] = true;
                } else {
                    out[r].push(o);
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out)
    }

    /// `B x K` logits: dot products of `h` with each candidate's encoding.
    pub fn choose_logits(
        &self,
        g: &mut Graph,
        p: &Bound,
        h: NodeId,
        candidates: &[Vec<EncodedMeaning>],
    ) -> Result<NodeId> {
        let Head::Select { encoder } = &self.head else {
            return Err(crate::Error::Contract(
                "reconstruct listener cannot choose among candidates".into(),
            ));
        };
        let batch = g.value(h).rows();
        contract!(
            candidates.len() == batch,
            "{} candidate lists for a batch of {batch}",
            candidates.len()
        );
        let k = candidates[0].len();
        contract!(k >= 2, "need at least 2 candidates, got {k}");
        contract!(
            candidates.iter().all(|c| c.len() == k),
            "candidate lists differ in length"
        );
        let flat: Vec<EncodedMeaning> = candidates.iter().flatten().cloned().collect();
        let keys = encoder.encode(g, p, &flat)?;
        g.row_dots(h, keys)
    }
}
