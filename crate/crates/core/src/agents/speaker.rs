use rand::Rng;

use super::{AgentConfig, SetEncoder, SpeakMode};
use crate::error::{contract, Result};
use crate::kernel::{argmax, log_softmax, softmax, Bound, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::meanings::{EncodedMeaning, GameConfig};

/// Set encoder followed by an LSTM message decoder.
#[derive(Debug, Clone)]
pub struct Speaker {
    game: GameConfig,
    agent: AgentConfig,
    params: ParamStore,
    encoder: SetEncoder,
    start: ParamId,
    symbols: ParamId,
    dec_w: ParamId,
    dec_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// Graph nodes and hard symbols produced by one batched decode.
#[derive(Debug, Clone)]
pub struct SpeakOutput {
    /// `B` messages of `|M|` symbols.
    pub symbols: Vec<Vec<usize>>,
    /// Per step `B x |V|` one-hot nodes carrying the straight-through
    /// gradient; only filled in `GumbelSt` mode.
    pub one_hot: Vec<NodeId>,
    /// `B x 1` node of `-Σ_k log p(t_k)`; only filled in `Sample` mode.
    pub neg_log_prob: Option<NodeId>,
}

impl Speaker {
    pub fn new<R: Rng + ?Sized>(game: &GameConfig, agent: &AgentConfig, rng: &mut R) -> Self {
        let (d_emb, d_hid, v) = (agent.d_emb, agent.d_hid, game.vocab_size);
        let mut params = ParamStore::new();
        let encoder = SetEncoder::new(&mut params, "speaker.encoder", game, agent, rng);
        let start = params.add_embedding("speaker.start", 1, d_emb, rng);
        let symbols = params.add_embedding("speaker.symbols", v, d_emb, rng);
        let dec_w = params.add_weight("speaker.decoder.w", d_emb + d_hid, 4 * d_hid, rng);
        let dec_b = params.add_bias("speaker.decoder.b", 4 * d_hid);
        let out_w = params.add_weight("speaker.out.w", d_hid, v, rng);
        let out_b = params.add_bias("speaker.out.b", v);
        Self {
            game: *game,
            agent: *agent,
            params,
            encoder,
            start,
            symbols,
            dec_w,
            dec_b,
            out_w,
            out_b,
        }
    }

    pub fn game(&self) -> &GameConfig {
        &self.game
    }

    pub fn agent(&self) -> &AgentConfig {
        &self.agent
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// `h_s^s` for a batch of meanings.
    pub fn encode(&self, g: &mut Graph, p: &Bound, inputs: &[EncodedMeaning]) -> Result<NodeId> {
        self.encoder.encode(g, p, inputs)
    }

    fn start_state(&self, g: &mut Graph, p: &Bound, h: NodeId) -> Result<(NodeId, NodeId, NodeId)> {
        let batch = g.value(h).rows();
        let x = g.gather_rows(p[self.start], &vec![0; batch])?;
        let c = g.input(Tensor::zeros(&[batch, self.agent.d_hid]))?;
        Ok((x, h, c))
    }

    fn step(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let state = g.lstm_cell(x, h, c, p[self.dec_w], p[self.dec_b])?;
        let (h, c) = g.lstm_split(state)?;
        let logits = g.affine(h, p[self.out_w], p[self.out_b])?;
        Ok((logits, h, c))
    }

    /// Decodes `|M|` symbols from hidden states `h` (`B x d_hid`).
    pub fn speak<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        h: NodeId,
        mode: SpeakMode,
        rng: &mut R,
    ) -> Result<SpeakOutput> {
        let batch = g.value(h).rows();
        let v = self.game.vocab_size;
        let (mut x, mut h, mut c) = self.start_state(g, p, h)?;
        let mut symbols = vec![Vec::with_capacity(self.game.message_length); batch];
        let mut one_hot = Vec::new();
        let mut nll: Option<NodeId> = None;
        for _ in 0..self.game.message_length {
            let logits;
            (logits, h, c) = self.step(g, p, x, h, c)?;
            let lt = g.value(logits).clone();
            match mode {
                SpeakMode::Greedy => {
                    let ids = lt.argmax_rows();
                    x = g.gather_rows(p[self.symbols], &ids)?;
                    push_column(&mut symbols, &ids);
                }
                SpeakMode::Sample => {
                    let ids: Vec<usize> = (0..batch)
                        .map(|r| sample_categorical(&softmax(lt.row(r)), rng))
                        .collect();
                    let targets: Vec<Option<usize>> = ids.iter().map(|&i| Some(i)).collect();
                    let ce = g.cross_entropy(logits, &targets)?;
                    nll = Some(match nll {
                        Some(acc) => g.add(acc, ce)?,
                        None => ce,
                    });
                    x = g.gather_rows(p[self.symbols], &ids)?;
                    push_column(&mut symbols, &ids);
                }
                SpeakMode::GumbelSt => {
                    let tau = self.agent.temperature;
                    let mut noise = Vec::with_capacity(batch * v);
                    for _ in 0..batch * v {
                        noise.push(crate::rng::gumbel(rng));
                    }
                    let noise = g.input(Tensor::matrix(batch, v, noise)?)?;
                    let noisy = g.add(logits, noise)?;
                    let scaled = g.scale(noisy, 1.0 / tau)?;
                    let relaxed = g.softmax(scaled)?;
                    let hard = g.straight_through(relaxed)?;
                    let ids = g.value(hard).argmax_rows();
                    x = g.matmul(hard, p[self.symbols])?;
                    one_hot.push(hard);
                    push_column(&mut symbols, &ids);
                }
            }
        }
        Ok(SpeakOutput {
            symbols,
            one_hot,
            neg_log_prob: nll,
        })
    }

    /// Teacher-forced `-Σ_k log p(t_k | h, t_<k)` per row, as a `B x 1` node.
    pub fn message_nll(
        &self,
        g: &mut Graph,
        p: &Bound,
        h: NodeId,
        messages: &[Vec<usize>],
    ) -> Result<NodeId> {
        let batch = g.value(h).rows();
        contract!(
            messages.len() == batch,
            "{} messages for a batch of {batch}",
            messages.len()
        );
        for m in messages {
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
        let (mut x, mut h, mut c) = self.start_state(g, p, h)?;
        let mut total: Option<NodeId> = None;
        for k in 0..self.game.message_length {
            let logits;
            (logits, h, c) = self.step(g, p, x, h, c)?;
            let ids: Vec<usize> = messages.iter().map(|m| m[k]).collect();
            let targets: Vec<Option<usize>> = ids.iter().map(|&i| Some(i)).collect();
            let ce = g.cross_entropy(logits, &targets)?;
            total = Some(match total {
                Some(acc) => g.add(acc, ce)?,
                None => ce,
            });
            x = g.gather_rows(p[self.symbols], &ids)?;
        }
        Ok(total.expect("message length is positive"))
    }

    /// Teacher-forced log-distributions over symbols: `out[k][b]` is
    /// `log p(· | h_b, messages[b][..k])`.
    pub fn step_log_probs(
        &self,
        inputs: &[EncodedMeaning],
        messages: &[Vec<usize>],
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g)?;
        let h = self.encode(&mut g, &p, inputs)?;
        contract!(
            messages.len() == inputs.len(),
            "{} messages for {} meanings",
            messages.len(),
            inputs.len()
        );
        let (mut x, mut h, mut c) = self.start_state(&mut g, &p, h)?;
        let mut out = Vec::with_capacity(self.game.message_length);
        for k in 0..self.game.message_length {
            let logits;
            (logits, h, c) = self.step(&mut g, &p, x, h, c)?;
            let t = g.value(logits);
            out.push((0..t.rows()).map(|r| log_softmax(t.row(r))).collect());
            let ids: Vec<usize> = messages.iter().map(|m| m[k]).collect();
            contract!(
                ids.iter().all(|&s| s < self.game.vocab_size),
                "symbol outside a vocabulary of {}",
                self.game.vocab_size
            );
            x = g.gather_rows(p[self.symbols], &ids)?;
        }
        Ok(out)
    }

    /// Greedy messages for a batch, built in a throwaway graph.
    pub fn greedy_messages(&self, inputs: &[EncodedMeaning]) -> Result<Vec<Vec<usize>>> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g)?;
        let h = self.encode(&mut g, &p, inputs)?;
        // greedy decoding never touches the generator
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        Ok(self.speak(&mut g, &p, h, SpeakMode::Greedy, &mut rng)?.symbols)
    }

    /// `Σ_i log p(m_i | s_i)` for a batch of meaning/message pairs.
    pub fn log_prob(&self, inputs: &[EncodedMeaning], messages: &[Vec<usize>]) -> Result<f64> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g)?;
        let h = self.encode(&mut g, &p, inputs)?;
        let nll = self.message_nll(&mut g, &p, h, messages)?;
        Ok(-g.value(nll).sum())
    }
}

fn push_column(messages: &mut [Vec<usize>], ids: &[usize]) {
    for (m, &s) in messages.iter_mut().zip(ids) {
        m.push(s);
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    argmax(probs)
}
