//! Game losses, message-channel estimators and training loops.

mod losses;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{encode_canonical, GameKind, Listener, MessageInput, SpeakMode, Speaker};
use crate::error::{contract, Error, Result};
use crate::kernel::{adam_step, AdamConfig, Graph, NodeId, OptimState, ParamStore};
use crate::meanings::{encode_meaning, GameConfig, sample_distractors, EncodedMeaning, MeaningSet};
use crate::rng::RunRng;

pub use losses::{advantage, choice_loss, reconstruct_loss, speaker_surrogate, Estimator};

/// Evaluation forward passes are chunked to bound graph size.
const EVAL_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub estimator: Estimator,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive epochs at or above `threshold` training accuracy that end
    /// training.
    pub patience: usize,
    pub threshold: f64,
    /// `false` trains the no-message baseline: the listener head reads the
    /// speaker's set encoding directly.
    pub channel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::Gumbel,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 300,
            patience: 5,
            threshold: 0.99,
            channel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        contract!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning rate must be positive"
        );
        contract!(self.batch_size > 0, "batch size must be positive");
        contract!(self.patience > 0, "patience must be positive");
        contract!(
            self.threshold > 0.0 && self.threshold <= 1.0,
            "early-stop threshold {} outside (0, 1]",
            self.threshold
        );
        Ok(())
    }

    /// Minibatch length that splits `n` items into the fewest batches of at
    /// most `batch_size`, with sizes differing by at most one.
    fn batch_len(&self, n: usize) -> usize {
        let batches = n.div_ceil(self.batch_size).max(1);
        n.div_ceil(batches).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    /// Absent when there is no held-out set.
    pub eval_acc: Option<f64>,
}

pub fn write_epoch_stats_csv(path: &Path, stats: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss", "train_acc", "eval_acc"])?;
    for s in stats {
        w.write_record([
            s.epoch.to_string(),
            s.loss.to_string(),
            s.train_acc.to_string(),
            s.eval_acc.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Meanings a pair trains and is evaluated on.
#[derive(Debug, Clone)]
pub struct GameData {
    pub train: Vec<MeaningSet>,
    pub eval: Vec<MeaningSet>,
    /// Distractors for Set-Select are drawn from here.
    pub pool: Vec<MeaningSet>,
}

impl GameData {
    /// Trains and distracts on the whole space; no held-out set.
    pub fn full(meanings: Vec<MeaningSet>) -> Self {
        Self {
            train: meanings.clone(),
            eval: Vec::new(),
            pool: meanings,
        }
    }
}

/// One batch of listener tasks.
struct Tasks {
    targets: Vec<MeaningSet>,
    inputs: Vec<EncodedMeaning>,
    candidates: Vec<Vec<EncodedMeaning>>,
    correct: Vec<usize>,
}

impl Tasks {
    fn build<R: Rng + ?Sized>(
        targets: &[MeaningSet],
        kind: GameKind,
        game: &GameConfig,
        pool: &[MeaningSet],
        shuffle: Option<&mut R>,
        distractors: &mut R,
    ) -> Result<Self> {
        let game = *game;
        let mut shuffle = shuffle;
        let mut enc = |m: &MeaningSet| match shuffle.as_deref_mut() {
            Some(r) => encode_meaning(m, &game, game.representation, r),
            None => encode_canonical(m, &game),
        };
        let inputs = targets.iter().map(&mut enc).collect();
        let (mut candidates, mut correct) = (Vec::new(), Vec::new());
        if kind == GameKind::Select {
            for t in targets {
                let c = sample_distractors(t, pool, game.num_distractors, distractors)?;
                candidates.push(c.items.iter().map(&mut enc).collect());
                correct.push(c.correct);
            }
        }
        Ok(Self {
            targets: targets.to_vec(),
            inputs,
            candidates,
            correct,
        })
    }

    fn len(&self) -> usize {
        self.targets.len()
    }
}

/// Per-row listener loss (`B x 1`) given the listener's input state `h`.
fn listener_loss_rows(
    g: &mut Graph,
    lp: &crate::kernel::Bound,
    listener: &Listener,
    h: NodeId,
    tasks: &Tasks,
) -> Result<NodeId> {
    match listener.kind() {
        GameKind::Reconstruct => listener.reconstruct_nll(g, lp, h, &tasks.targets),
        GameKind::Select => {
            let logits = listener.choose_logits(g, lp, h, &tasks.candidates)?;
            let t: Vec<Option<usize>> = tasks.correct.iter().map(|&c| Some(c)).collect();
            g.cross_entropy(logits, &t)
        }
    }
}

fn listener_correct(
    g: &mut Graph,
    lp: &crate::kernel::Bound,
    listener: &Listener,
    h: NodeId,
    tasks: &Tasks,
) -> Result<Vec<bool>> {
    match listener.kind() {
        GameKind::Reconstruct => {
            let decoded = listener.reconstruct_greedy(g, lp, h)?;
            Ok(decoded
                .into_iter()
                .zip(&tasks.targets)
                .map(|(mut d, t)| {
                    d.sort_unstable();
                    d == t.canonical_objects()
                })
                .collect())
        }
        GameKind::Select => {
            let logits = listener.choose_logits(g, lp, h, &tasks.candidates)?;
            Ok(g
                .value(logits)
                .argmax_rows()
                .into_iter()
                .zip(&tasks.correct)
                .map(|(a, &c)| a == c)
                .collect())
        }
    }
}

/// Greedy messages, per-row listener loss and correctness, without gradients.
fn greedy_rollout(
    speaker: &Speaker,
    listener: &Listener,
    tasks: &Tasks,
    channel: bool,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut g = Graph::new();
    let sp = speaker.params().bind_frozen(&mut g)?;
    let lp = listener.params().bind_frozen(&mut g)?;
    let hs = speaker.encode(&mut g, &sp, &tasks.inputs)?;
    let h = if channel {
        let mut unused = rand::rngs::mock::StepRng::new(0, 0);
        let out = speaker.speak(&mut g, &sp, hs, SpeakMode::Greedy, &mut unused)?;
        listener.encode_message(&mut g, &lp, MessageInput::Symbols(&out.symbols))?
    } else {
        hs
    };
    let rows = listener_loss_rows(&mut g, &lp, listener, h, tasks)?;
    let losses = g.value(rows).data().to_vec();
    let correct = listener_correct(&mut g, &lp, listener, h, tasks)?;
    Ok((losses, correct))
}

/// Fraction of `meanings` the pair gets right with greedy messages and
/// canonical presentation order.
pub fn evaluate<R: Rng + ?Sized>(
    speaker: &Speaker,
    listener: &Listener,
    meanings: &[MeaningSet],
    pool: &[MeaningSet],
    channel: bool,
    rng: &mut R,
) -> Result<f64> {
    if meanings.is_empty() {
        return Ok(0.0);
    }
    let mut right = 0;
    for chunk in meanings.chunks(EVAL_CHUNK) {
        let tasks = Tasks::build(chunk, listener.kind(), speaker.game(), pool, None, rng)?;
        let (_, correct) = greedy_rollout(speaker, listener, &tasks, channel)?;
        right += correct.iter().filter(|&&c| c).count();
    }
    Ok(right as f64 / meanings.len() as f64)
}

fn check_params(params: &ParamStore, epoch: usize, who: &str) -> Result<()> {
    if params.tensors().iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged {
            epoch,
            detail: format!("{who} parameters became non-finite"),
        })
    }
}

/// Tracks the consecutive-epoch early-stop rule.
struct EarlyStop {
    streak: usize,
    patience: usize,
    threshold: f64,
}

impl EarlyStop {
    fn new(config: &TrainConfig) -> Self {
        Self {
            streak: 0,
            patience: config.patience,
            threshold: config.threshold,
        }
    }

    fn update(&mut self, acc: f64) -> bool {
        self.streak = if acc >= self.threshold {
            self.streak + 1
        } else {
            0
        };
        self.streak >= self.patience
    }
}

/// Named generator streams of one training run.
struct Streams {
    order: crate::rng::StreamRng,
    present: crate::rng::StreamRng,
    distractors: crate::rng::StreamRng,
    eval_distractors: crate::rng::StreamRng,
    gumbel: crate::rng::StreamRng,
}

impl Streams {
    fn new(rng: &RunRng) -> Self {
        Self {
            order: rng.stream("data-order"),
            present: rng.stream("presentation"),
            distractors: rng.stream("distractors"),
            eval_distractors: rng.stream("eval-distractors"),
            gumbel: rng.stream("gumbel"),
        }
    }
}

/// Plays the game on `data.train` until the early-stop rule fires or
/// `config.max_epochs` is reached, updating both agents.
pub fn train_pair(
    speaker: &mut Speaker,
    listener: &mut Listener,
    data: &GameData,
    config: &TrainConfig,
    rng: &RunRng,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    contract!(
        speaker.game() == listener.game(),
        "speaker and listener disagree on the game configuration"
    );
    contract!(!data.train.is_empty(), "no training meanings");
    let kind = listener.kind();
    let mode = match config.estimator {
        Estimator::Gumbel => SpeakMode::GumbelSt,
        Estimator::Reinforce | Estimator::Scst => SpeakMode::Sample,
    };
    let adam = AdamConfig::with_lr(config.learning_rate);
    let mut s_opt = OptimState::new(speaker.params(), adam);
    let mut l_opt = OptimState::new(listener.params(), adam);
    let mut streams = Streams::new(rng);
    let mut stop = EarlyStop::new(config);
    let mut stats = Vec::new();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let batch_len = config.batch_len(data.train.len());
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut streams.order);
        let mut loss_sum = 0.0;
        for ids in order.chunks(batch_len) {
            let targets: Vec<MeaningSet> = ids.iter().map(|&i| data.train[i].clone()).collect();
            let tasks = Tasks::build(
                &targets,
                kind,
                speaker.game(),
                &data.pool,
                Some(&mut streams.present),
                &mut streams.distractors,
            )?;
            let greedy = if config.channel && config.estimator.needs_greedy_rollout() {
                Some(greedy_rollout(speaker, listener, &tasks, true)?.0)
            } else {
                None
            };
            let mut g = Graph::new();
            let sp = speaker.params().bind(&mut g)?;
            let lp = listener.params().bind(&mut g)?;
            let hs = speaker.encode(&mut g, &sp, &tasks.inputs)?;
            let (h, nll) = if config.channel {
                let out = speaker.speak(&mut g, &sp, hs, mode, &mut streams.gumbel)?;
                let msg = match mode {
                    SpeakMode::GumbelSt => MessageInput::OneHot(&out.one_hot),
                    _ => MessageInput::Symbols(&out.symbols),
                };
                (listener.encode_message(&mut g, &lp, msg)?, out.neg_log_prob)
            } else {
                (hs, None)
            };
            let rows = listener_loss_rows(&mut g, &lp, listener, h, &tasks)?;
            let row_losses = g.value(rows).data().to_vec();
            let batch_loss = row_losses.iter().sum::<f64>() / row_losses.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite loss {batch_loss}"),
                });
            }
            loss_sum += batch_loss * tasks.len() as f64;
            let mut total = g.mean(rows)?;
            if let Some(nll) = nll {
                let sur =
                    speaker_surrogate(&mut g, config.estimator, nll, &row_losses, greedy.as_deref())?;
                total = g.add(total, sur)?;
            }
            let grads = g.backward(total)?;
            let sg = sp.collect(&grads, speaker.params());
            let lg = lp.collect(&grads, listener.params());
            adam_step(speaker.params_mut(), &sg, &mut s_opt)?;
            adam_step(listener.params_mut(), &lg, &mut l_opt)?;
        }
        check_params(speaker.params(), epoch, "speaker")?;
        check_params(listener.params(), epoch, "listener")?;
        let train_acc = evaluate(
            speaker,
            listener,
            &data.train,
            &data.pool,
            config.channel,
            &mut streams.eval_distractors,
        )?;
        let eval_acc = if data.eval.is_empty() {
            None
        } else {
            Some(evaluate(
                speaker,
                listener,
                &data.eval,
                &data.pool,
                config.channel,
                &mut streams.eval_distractors,
            )?)
        };
        stats.push(EpochStats {
            epoch,
            loss: loss_sum / data.train.len() as f64,
            train_acc,
            eval_acc,
        });
        if stop.update(train_acc) {
            break;
        }
    }
    Ok(stats)
}

/// Supervised speaker training on meaning→message pairs by teacher forcing.
/// Runs exactly `epochs` epochs; `train_acc` is the fraction of messages the
/// greedy decode reproduces exactly.
pub fn train_speaker(
    speaker: &mut Speaker,
    pairs: &[(MeaningSet, Vec<usize>)],
    epochs: usize,
    config: &TrainConfig,
    rng: &RunRng,
) -> Result<Vec<EpochStats>> {
    train_speaker_until(speaker, pairs, epochs, None, config, rng)
}

/// Like [`train_speaker`], optionally stopping early under `config`'s rule.
pub fn train_speaker_until(
    speaker: &mut Speaker,
    pairs: &[(MeaningSet, Vec<usize>)],
    epochs: usize,
    early_stop: Option<&TrainConfig>,
    config: &TrainConfig,
    rng: &RunRng,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    contract!(!pairs.is_empty(), "no meaning/message pairs to learn");
    let game = *speaker.game();
    let mut opt = OptimState::new(speaker.params(), AdamConfig::with_lr(config.learning_rate));
    let mut order_rng = rng.stream("speaker-order");
    let mut present = rng.stream("speaker-presentation");
    let mut stop = early_stop.map(EarlyStop::new);
    let batch_len = config.batch_len(pairs.len());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let canonical: Vec<EncodedMeaning> = pairs.iter().map(|(m, _)| encode_canonical(m, &game)).collect();
    let mut stats = Vec::new();
    for epoch in 0..epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for ids in order.chunks(batch_len) {
            let inputs: Vec<EncodedMeaning> = ids
                .iter()
                .map(|&i| encode_meaning(&pairs[i].0, &game, game.representation, &mut present))
                .collect();
            let msgs: Vec<Vec<usize>> = ids.iter().map(|&i| pairs[i].1.clone()).collect();
            let mut g = Graph::new();
            let p = speaker.params().bind(&mut g)?;
            let h = speaker.encode(&mut g, &p, &inputs)?;
            let nll = speaker.message_nll(&mut g, &p, h, &msgs)?;
            let l = g.value(nll).sum();
            if !l.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite speaker loss {l}"),
                });
            }
            loss_sum += l;
            let loss = g.mean(nll)?;
            let grads = g.backward(loss)?;
            let sg = p.collect(&grads, speaker.params());
            adam_step(speaker.params_mut(), &sg, &mut opt)?;
        }
        check_params(speaker.params(), epoch, "speaker")?;
        let mut right = 0;
        for (chunk, inputs) in pairs.chunks(EVAL_CHUNK).zip(canonical.chunks(EVAL_CHUNK)) {
            let got = speaker.greedy_messages(inputs)?;
            right += got.iter().zip(chunk).filter(|(a, (_, b))| *a == b).count();
        }
        let acc = right as f64 / pairs.len() as f64;
        stats.push(EpochStats {
            epoch,
            loss: loss_sum / pairs.len() as f64,
            train_acc: acc,
            eval_acc: None,
        });
        if let Some(s) = stop.as_mut() {
            if s.update(acc) {
                break;
            }
        }
    }
    Ok(stats)
}

/// Trains a listener alone on a fixed meaning→message table, as a measure of
/// how easy the table is to learn. Stops under `config`'s early-stop rule.
pub fn train_listener(
    listener: &mut Listener,
    pairs: &[(MeaningSet, Vec<usize>)],
    pool: &[MeaningSet],
    config: &TrainConfig,
    rng: &RunRng,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    contract!(!pairs.is_empty(), "no meaning/message pairs to learn");
    let game = *listener.game();
    let kind = listener.kind();
    let mut opt = OptimState::new(listener.params(), AdamConfig::with_lr(config.learning_rate));
    let mut order_rng = rng.stream("listener-order");
    let mut present = rng.stream("listener-presentation");
    let mut distractors = rng.stream("listener-distractors");
    let mut eval_distractors = rng.stream("listener-eval-distractors");
    let mut stop = EarlyStop::new(config);
    let batch_len = config.batch_len(pairs.len());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut stats = Vec::new();
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for ids in order.chunks(batch_len) {
            let targets: Vec<MeaningSet> = ids.iter().map(|&i| pairs[i].0.clone()).collect();
            let msgs: Vec<Vec<usize>> = ids.iter().map(|&i| pairs[i].1.clone()).collect();
            let tasks = Tasks::build(
                &targets,
                kind,
                &game,
                pool,
                Some(&mut present),
                &mut distractors,
            )?;
            let mut g = Graph::new();
            let lp = listener.params().bind(&mut g)?;
            let h = listener.encode_message(&mut g, &lp, MessageInput::Symbols(&msgs))?;
            let rows = listener_loss_rows(&mut g, &lp, listener, h, &tasks)?;
            let l = g.value(rows).sum();
            if !l.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite listener loss {l}"),
                });
            }
            loss_sum += l;
            let loss = g.mean(rows)?;
            let grads = g.backward(loss)?;
            let lg = lp.collect(&grads, listener.params());
            adam_step(listener.params_mut(), &lg, &mut opt)?;
        }
        check_params(listener.params(), epoch, "listener")?;
        let mut right = 0;
        for chunk in pairs.chunks(EVAL_CHUNK) {
            let targets: Vec<MeaningSet> = chunk.iter().map(|(m, _)| m.clone()).collect();
            let msgs: Vec<Vec<usize>> = chunk.iter().map(|(_, s)| s.clone()).collect();
            let tasks = Tasks::build(&targets, kind, &game, pool, None, &mut eval_distractors)?;
            let mut g = Graph::new();
            let lp = listener.params().bind_frozen(&mut g)?;
            let h = listener.encode_message(&mut g, &lp, MessageInput::Symbols(&msgs))?;
            right += listener_correct(&mut g, &lp, listener, h, &tasks)?
                .iter()
                .filter(|&&c| c)
                .count();
        }
        let acc = right as f64 / pairs.len() as f64;
        stats.push(EpochStats {
            epoch,
            loss: loss_sum / pairs.len() as f64,
            train_acc: acc,
            eval_acc: None,
        });
        if stop.update(acc) {
            break;
        }
    }
    Ok(stats)
}

/// First epoch (1-based count) whose training accuracy reaches `level`.
pub fn epochs_to_reach(stats: &[EpochStats], level: f64) -> Option<usize> {
    stats.iter().position(|s| s.train_acc >= level).map(|i| i + 1)
}
